#include "neurotopo/checkpoint.hpp"

#include <algorithm>

#include "binary_io.hpp"
#include "neurotopo/error.hpp"

namespace ntopo {

namespace {

constexpr std::uint8_t kMagic[4] = {'N', 'T', 'P', 'M'};

struct TruncatedInput {};

}  // namespace

const Tensor2& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw DataError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(),
                     [&](const NamedTensor& t) { return t.name == name; });
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter out;
  out.raw(kMagic);
  out.u16(kNtpmVersion);
  out.u32(static_cast<std::uint32_t>(ckpt.config_json.size()));
  out.text(ckpt.config_json);
  out.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    out.u16(static_cast<std::uint16_t>(t.name.size()));
    out.text(t.name);
    out.u32(static_cast<std::uint32_t>(t.value.rows()));
    out.u32(static_cast<std::uint32_t>(t.value.cols()));
    for (double v : t.value.data()) out.f64(v);
  }
  out.seal();
  return out.release();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 10 || !std::equal(bytes.begin(), bytes.begin() + 4, kMagic)) {
    throw DataError("checkpoint: bad magic");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  if (detail::crc32(bytes.first(body)) != stored) throw DataError("checkpoint: CRC-32 mismatch");

  detail::ByteReader<TruncatedInput> in(bytes.subspan(4, body - 4));
  Checkpoint ckpt;
  try {
    const auto version = in.u16();
    if (version != kNtpmVersion) {
      throw DataError("checkpoint: unsupported version " + std::to_string(version));
    }
    ckpt.config_json = in.text(in.u32());
    const auto count = in.u32();
    for (std::uint32_t k = 0; k < count; ++k) {
      NamedTensor t;
      t.name = in.text(in.u16());
      const std::size_t rows = in.u32();
      const std::size_t cols = in.u32();
      in.need(rows * cols * 8);
      std::vector<double> data(rows * cols);
      for (auto& v : data) v = in.f64();
      t.value = Tensor2(rows, cols, std::move(data));
      ckpt.tensors.push_back(std::move(t));
    }
  } catch (const TruncatedInput&) {
    throw DataError("checkpoint: truncated");
  }
  if (in.remaining() != 0) throw DataError("checkpoint: trailing bytes");
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (!detail::write_file(path, encode_checkpoint(ckpt))) {
    throw DataError("cannot write " + path.string());
  }
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  if (!detail::read_file(path, bytes)) throw DataError("cannot read " + path.string());
  return decode_checkpoint(bytes);
}

}  // namespace ntopo
