#include "neurotopo/actdump.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "neurotopo/parallel.hpp"

namespace ntopo {

namespace {

constexpr std::uint8_t kMagic[4] = {'N', 'T', 'A', 'C'};

struct TruncatedInput {};
using Reader = detail::ByteReader<TruncatedInput>;

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \r\n");
  return s.substr(first, last - first + 1);
}

Label parse_label(const std::string& cell, std::size_t line_no) {
  const std::string text = trim(cell);
  if (text.empty() || text == "-") return {};
  const bool integral = text.find_first_not_of("0123456789") == std::string::npos;
  if (integral) {
    std::uint32_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec == std::errc() && ptr == text.data() + text.size()) return value;
  } else {
    char* end = nullptr;
    const double value = std::strtod(text.c_str(), &end);
    if (end == text.c_str() + text.size() && std::isfinite(value)) return value;
  }
  throw DumpError(DumpErrorKind::Manifest,
                  "manifest line " + std::to_string(line_no) + ": bad label '" + text + "'");
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    cells.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return cells;
}

}  // namespace

bool has_label(const Label& label) noexcept {
  return !std::holds_alternative<std::monostate>(label);
}

std::string label_to_string(const Label& label) {
  if (const auto* c = std::get_if<std::uint32_t>(&label)) return std::to_string(*c);
  if (const auto* r = std::get_if<double>(&label)) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), *r);
    std::string text(buf, ptr);
    // Keep reals distinguishable from class ids when read back.
    if (text.find_first_of(".eEn") == std::string::npos) text += ".0";
    return text;
  }
  return "-";
}

ActivationRecord::ActivationRecord(std::string id, std::uint32_t layer, std::uint32_t d,
                                   std::uint32_t n)
    : sample_id(std::move(id)),
      layer_index(layer),
      neurons(d),
      tokens(n),
      values(static_cast<std::size_t>(d) * n, 0.0f),
      modality(n, Modality::Text) {}

std::uint32_t ActivationRecord::count(Modality m) const {
  std::uint32_t c = 0;
  for (auto v : modality) c += (v == m);
  return c;
}

void ActivationRecord::validate() const {
  if (neurons < 1) throw DumpError(DumpErrorKind::Invariant, "record needs d >= 1");
  if (tokens < 2) throw DumpError(DumpErrorKind::Invariant, "record needs N >= 2");
  if (modality.size() != tokens) {
    throw DumpError(DumpErrorKind::Invariant, "modality mask length differs from N");
  }
  for (auto m : modality) {
    if (static_cast<std::uint8_t>(m) > 2) {
      throw DumpError(DumpErrorKind::Invariant, "unknown modality code");
    }
  }
  if (values.size() != static_cast<std::size_t>(neurons) * tokens) {
    throw DumpError(DumpErrorKind::Invariant, "matrix size differs from d*N");
  }
  if (sample_id.size() > 0xFFFF) {
    throw DumpError(DumpErrorKind::Invariant, "sample id longer than 65535 bytes");
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw DumpError(DumpErrorKind::NonFinite, "matrix has NaN/Inf");
  }
  if (const auto* r = std::get_if<double>(&label); r && !std::isfinite(*r)) {
    throw DumpError(DumpErrorKind::NonFinite, "real label is not finite");
  }
}

const char* to_string(DumpErrorKind kind) noexcept {
  switch (kind) {
    case DumpErrorKind::Io: return "io";
    case DumpErrorKind::BadMagic: return "bad-magic";
    case DumpErrorKind::VersionMismatch: return "version-mismatch";
    case DumpErrorKind::Truncated: return "truncated";
    case DumpErrorKind::NonFinite: return "non-finite";
    case DumpErrorKind::Checksum: return "checksum";
    case DumpErrorKind::Invariant: return "invariant";
    case DumpErrorKind::Manifest: return "manifest";
  }
  return "unknown";
}

DumpError::DumpError(DumpErrorKind kind, const std::string& what)
    : DataError(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

std::vector<std::uint8_t> encode_record(const ActivationRecord& record) {
  record.validate();
  detail::ByteWriter out;
  out.raw(kMagic);
  out.u16(kNtacVersion);
  out.u32(record.neurons);
  out.u32(record.tokens);
  if (const auto* c = std::get_if<std::uint32_t>(&record.label)) {
    out.u8(1);
    out.u32(*c);
  } else if (const auto* r = std::get_if<double>(&record.label)) {
    out.u8(2);
    out.f64(*r);
  } else {
    out.u8(0);
  }
  for (auto m : record.modality) out.u8(static_cast<std::uint8_t>(m));
  out.u16(static_cast<std::uint16_t>(record.sample_id.size()));
  out.text(record.sample_id);
  out.u32(record.layer_index);
  out.bytes().reserve(out.bytes().size() + record.values.size() * 4 + 4);
  for (float v : record.values) out.f32(v);
  out.seal();
  return out.release();
}

ActivationRecord decode_record(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw DumpError(DumpErrorKind::Truncated, "file shorter than magic");
  if (!std::equal(bytes.begin(), bytes.begin() + 4, kMagic)) {
    throw DumpError(DumpErrorKind::BadMagic, "expected \"NTAC\"");
  }
  Reader in(bytes.subspan(4));
  ActivationRecord rec;
  try {
    const auto version = in.u16();
    if (version != kNtacVersion) {
      throw DumpError(DumpErrorKind::VersionMismatch,
                      "unsupported NTAC version " + std::to_string(version));
    }
    rec.neurons = in.u32();
    rec.tokens = in.u32();
    const auto label_kind = in.u8();
    switch (label_kind) {
      case 0: break;
      case 1: rec.label = in.u32(); break;
      case 2: rec.label = in.f64(); break;
      default:
        throw DumpError(DumpErrorKind::Invariant, "unknown label kind " + std::to_string(label_kind));
    }
    if (rec.neurons < 1 || rec.tokens < 2) {
      throw DumpError(DumpErrorKind::Invariant, "header declares d < 1 or N < 2");
    }
    auto mask = in.raw(rec.tokens);
    rec.modality.reserve(rec.tokens);
    for (auto code : mask) {
      if (code > 2) throw DumpError(DumpErrorKind::Invariant, "unknown modality code");
      rec.modality.push_back(static_cast<Modality>(code));
    }
    rec.sample_id = in.text(in.u16());
    rec.layer_index = in.u32();
  } catch (const TruncatedInput&) {
    throw DumpError(DumpErrorKind::Truncated, "header ends early");
  }

  const std::uint64_t cells = static_cast<std::uint64_t>(rec.neurons) * rec.tokens;
  const std::uint64_t needed = cells * 4 + 4;
  if (in.remaining() < needed) {
    throw DumpError(DumpErrorKind::Truncated,
                    "payload holds " + std::to_string(in.remaining()) + " bytes, expected " +
                        std::to_string(needed));
  }
  if (in.remaining() > needed) {
    throw DumpError(DumpErrorKind::Invariant, "trailing bytes after payload");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  if (detail::crc32(bytes.first(body)) != stored) {
    throw DumpError(DumpErrorKind::Checksum, "CRC-32 mismatch");
  }
  rec.values.resize(cells);
  for (auto& v : rec.values) v = in.f32();
  for (float v : rec.values) {
    if (!std::isfinite(v)) throw DumpError(DumpErrorKind::NonFinite, "payload has NaN/Inf");
  }
  if (const auto* r = std::get_if<double>(&rec.label); r && !std::isfinite(*r)) {
    throw DumpError(DumpErrorKind::NonFinite, "real label is not finite");
  }
  return rec;
}

void write_record(const ActivationRecord& record, const std::filesystem::path& path) {
  const auto bytes = encode_record(record);
  if (!detail::write_file(path, bytes)) {
    throw DumpError(DumpErrorKind::Io, "cannot write " + path.string());
  }
}

ActivationRecord read_record(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  if (!detail::read_file(path, bytes)) {
    throw DumpError(DumpErrorKind::Io, "cannot read " + path.string());
  }
  return decode_record(bytes);
}

std::uint32_t DatasetManifest::hidden_dim(std::uint32_t layer) const {
  auto it = hidden_dims.find(layer);
  return it == hidden_dims.end() ? 0 : it->second;
}

std::vector<const ManifestEntry*> DatasetManifest::layer_entries(std::uint32_t layer) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : records) {
    if (e.layer_index == layer) out.push_back(&e);
  }
  return out;
}

std::vector<std::string> DatasetManifest::sample_ids() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& e : records) {
    if (seen.insert(e.sample_id).second) out.push_back(e.sample_id);
  }
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DumpError(DumpErrorKind::Io, "cannot open manifest " + path.string());
  const auto base = path.parent_path();

  DatasetManifest manifest;
  std::set<std::pair<std::string, std::uint32_t>> keys;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (line[0] == '#') {
      const std::string body = trim(line.substr(1));
      constexpr std::string_view key = "split_seed=";
      if (body.rfind(key, 0) == 0) {
        const std::string value = trim(body.substr(key.size()));
        auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(),
                                         manifest.split_seed);
        if (ec != std::errc() || ptr != value.data() + value.size()) {
          throw DumpError(DumpErrorKind::Manifest, "bad split_seed on line " + std::to_string(line_no));
        }
      }
      continue;
    }
    const auto cells = split_tabs(line);
    if (cells.size() < 3 || cells.size() > 4) {
      throw DumpError(DumpErrorKind::Manifest,
                      "manifest line " + std::to_string(line_no) + ": expected 3 or 4 tab-separated columns");
    }
    ManifestEntry entry;
    entry.path = std::filesystem::path(trim(cells[0]));
    if (entry.path.is_relative()) entry.path = base / entry.path;
    entry.sample_id = trim(cells[1]);
    const std::string layer_text = trim(cells[2]);
    auto [ptr, ec] = std::from_chars(layer_text.data(), layer_text.data() + layer_text.size(),
                                     entry.layer_index);
    if (ec != std::errc() || ptr != layer_text.data() + layer_text.size()) {
      throw DumpError(DumpErrorKind::Manifest, "manifest line " + std::to_string(line_no) + ": bad layer index");
    }
    if (cells.size() == 4) entry.label = parse_label(cells[3], line_no);

    if (!keys.emplace(entry.sample_id, entry.layer_index).second) {
      throw DumpError(DumpErrorKind::Manifest,
                      "duplicate (sample_id, layer) = (" + entry.sample_id + ", " +
                          std::to_string(entry.layer_index) + ")");
    }
    if (!std::filesystem::exists(entry.path)) {
      throw DumpError(DumpErrorKind::Manifest, "missing record file " + entry.path.string());
    }
    const ActivationRecord rec = read_record(entry.path);
    if (rec.sample_id != entry.sample_id || rec.layer_index != entry.layer_index) {
      throw DumpError(DumpErrorKind::Manifest,
                      "record " + entry.path.string() + " does not match its manifest line");
    }
    if (has_label(entry.label) && has_label(rec.label) && entry.label != rec.label) {
      throw DumpError(DumpErrorKind::Manifest, "label conflict for " + entry.sample_id);
    }
    entry.neurons = rec.neurons;
    entry.tokens = rec.tokens;
    auto [it, inserted] = manifest.hidden_dims.emplace(entry.layer_index, rec.neurons);
    if (!inserted && it->second != rec.neurons) {
      throw DumpError(DumpErrorKind::Manifest,
                      "inconsistent hidden_dim at layer " + std::to_string(entry.layer_index) +
                          ": " + std::to_string(it->second) + " vs " + std::to_string(rec.neurons));
    }
    manifest.layer_count = std::max(manifest.layer_count, entry.layer_index + 1);
    manifest.records.push_back(std::move(entry));
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DumpError(DumpErrorKind::Io, "cannot write manifest " + path.string());
  const auto base = path.parent_path();
  out << "# path\tsample_id\tlayer\tlabel\n";
  out << "# split_seed=" << manifest.split_seed << "\n";
  for (const auto& e : manifest.records) {
    std::filesystem::path p = e.path;
    if (p.is_absolute() || !base.empty()) {
      std::error_code ec;
      auto rel = std::filesystem::relative(p, base.empty() ? "." : base, ec);
      if (!ec && !rel.empty()) p = rel;
    }
    out << p.generic_string() << '\t' << e.sample_id << '\t' << e.layer_index << '\t'
        << label_to_string(e.label) << '\n';
  }
  if (!out) throw DumpError(DumpErrorKind::Io, "failed writing manifest " + path.string());
}

ActivationRecord load_entry(const ManifestEntry& entry) {
  ActivationRecord rec = read_record(entry.path);
  if (has_label(entry.label)) rec.label = entry.label;
  return rec;
}

std::vector<ActivationRecord> load_layer(const DatasetManifest& manifest, std::uint32_t layer,
                                         unsigned threads) {
  const auto entries = manifest.layer_entries(layer);
  std::vector<ActivationRecord> out(entries.size());
  parallel_for(entries.size(), threads, [&](std::size_t i) { out[i] = load_entry(*entries[i]); });
  return out;
}

}  // namespace ntopo
