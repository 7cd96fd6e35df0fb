#include "neurotopo/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "neurotopo/parallel.hpp"
#include "neurotopo/philox.hpp"

namespace ntopo {

using nlohmann::json;

const char* to_string(ClassRule rule) noexcept {
  switch (rule) {
    case ClassRule::None: return "none";
    case ClassRule::BlockSize: return "block_size";
    case ClassRule::BlockCount: return "block_count";
    case ClassRule::HubStrength: return "hub_strength";
  }
  return "none";
}

ClassRule parse_class_rule(std::string_view text) {
  for (auto r : {ClassRule::None, ClassRule::BlockSize, ClassRule::BlockCount,
                 ClassRule::HubStrength}) {
    if (text == to_string(r)) return r;
  }
  throw std::invalid_argument("unknown class rule '" + std::string(text) + "'");
}

std::uint32_t SynthSpec::vision_count() const {
  const std::uint32_t rest = tokens > other_tokens ? tokens - other_tokens : 0;
  return vision_tokens.value_or(rest / 2);
}

std::uint32_t SynthSpec::class_count() const {
  switch (class_rule) {
    case ClassRule::BlockSize: return static_cast<std::uint32_t>(block_sizes.size());
    case ClassRule::BlockCount: return static_cast<std::uint32_t>(block_counts.size());
    case ClassRule::HubStrength: return static_cast<std::uint32_t>(hub_strengths.size());
    case ClassRule::None: return 1;
  }
  return 1;
}

std::uint32_t SynthSpec::signal_extent() const {
  switch (class_rule) {
    case ClassRule::BlockSize:
      return block_sizes.empty() ? 0 : *std::max_element(block_sizes.begin(), block_sizes.end());
    case ClassRule::BlockCount:
      return block_counts.empty()
                 ? 0
                 : *std::max_element(block_counts.begin(), block_counts.end()) * block_unit;
    default: return 0;
  }
}

void SynthSpec::validate() const {
  const auto fail = [](const std::string& why) { throw std::invalid_argument("synth spec: " + why); };
  if (d < 1) fail("d must be >= 1");
  if (tokens < 2) fail("tokens must be >= 2");
  if (other_tokens > tokens) fail("other_tokens exceeds tokens");
  if (vision_count() > tokens - other_tokens) fail("vision_tokens exceeds available tokens");
  if (layer_count < 1) fail("layer_count must be >= 1");
  if (sample_count < 1) fail("sample_count must be >= 1");
  if (layer_count > 0xFFFF) fail("layer_count must fit in 16 bits");
  if (!(noise_sigma >= 0.0) || !(row_offset_sigma >= 0.0)) fail("noise scales must be >= 0");
  if (class_rule == ClassRule::BlockSize &&
      (block_sizes.empty() ||
       std::any_of(block_sizes.begin(), block_sizes.end(), [](auto s) { return s < 2; }))) {
    fail("block_sizes must be nonempty with sizes >= 2");
  }
  if (class_rule == ClassRule::BlockCount && (block_counts.empty() || block_unit < 2)) {
    fail("block_counts must be nonempty and block_unit >= 2");
  }
  if (class_rule == ClassRule::HubStrength) {
    if (hub_strengths.empty()) fail("hub_strengths must be nonempty");
    if (planted_hub_indices.size() < 2) fail("hub_strength rule needs at least 2 planted hubs");
    if (block_unit < 2) fail("block_unit must be >= 2");
  }
  if (regression && class_rule != ClassRule::BlockSize && class_rule != ClassRule::BlockCount) {
    fail("regression labels need the block_size or block_count rule");
  }
  for (double s : hub_strengths) {
    if (!(s >= 0.0 && s <= 1.0)) fail("hub strengths must lie in [0, 1]");
  }
  if (!(hub_strength >= 0.0 && hub_strength <= 1.0)) fail("hub_strength must lie in [0, 1]");
  const std::uint32_t extent = signal_extent();
  if (extent > d) fail("signal block larger than d");
  std::set<std::uint32_t> hubs(planted_hub_indices.begin(), planted_hub_indices.end());
  if (hubs.size() != planted_hub_indices.size()) fail("duplicate planted hub index");
  for (auto h : hubs) {
    if (h >= d) fail("planted hub index " + std::to_string(h) + " >= d");
    if (h < extent) fail("planted hub index inside the signal block range");
  }
  if (distractor_blocks > 0 && (distractor_min < 2 || distractor_max < distractor_min)) {
    fail("distractor sizes must satisfy 2 <= min <= max");
  }
  if (!(distractor_loading > 0.0 && distractor_loading <= 1.0)) {
    fail("distractor_loading must lie in (0, 1]");
  }
  std::uint64_t needed = static_cast<std::uint64_t>(distractor_blocks) * distractor_max;
  if (class_rule == ClassRule::HubStrength) needed += std::uint64_t{hub_blocks} * block_unit;
  const std::uint64_t free = d - extent - hubs.size();
  if (needed > free) fail("blocks do not fit into the available neurons");
  if (!cross_modal_ramp.empty()) {
    if (cross_modal_ramp.size() != layer_count) fail("cross_modal_ramp needs one value per layer");
    for (double r : cross_modal_ramp) {
      if (!(r >= -1.0 && r <= 1.0)) fail("ramp values must lie in [-1, 1]");
    }
  }
  for (auto l : signal_layers) {
    if (l >= layer_count) fail("signal layer out of range");
  }
  for (auto l : hub_layers) {
    if (l >= layer_count) fail("hub layer out of range");
  }
}

namespace {

json spec_json(const SynthSpec& s) {
  json j;
  j["d"] = s.d;
  j["tokens"] = s.tokens;
  j["other_tokens"] = s.other_tokens;
  j["vision_tokens"] = s.vision_count();
  j["layer_count"] = s.layer_count;
  j["sample_count"] = s.sample_count;
  j["class_rule"] = to_string(s.class_rule);
  j["regression"] = s.regression;
  j["block_sizes"] = s.block_sizes;
  j["block_counts"] = s.block_counts;
  j["block_unit"] = s.block_unit;
  j["hub_strengths"] = s.hub_strengths;
  j["hub_blocks"] = s.hub_blocks;
  j["planted_hub_indices"] = s.planted_hub_indices;
  j["hub_strength"] = s.hub_strength;
  j["distractor_blocks"] = s.distractor_blocks;
  j["distractor_min"] = s.distractor_min;
  j["distractor_max"] = s.distractor_max;
  j["distractor_loading"] = s.distractor_loading;
  j["cross_modal_ramp"] = s.cross_modal_ramp;
  j["cross_modal_scale"] = s.cross_modal_scale;
  j["noise_sigma"] = s.noise_sigma;
  j["row_offset_sigma"] = s.row_offset_sigma;
  j["signal_layers"] = s.signal_layers;
  j["hub_layers"] = s.hub_layers;
  j["master_seed"] = s.master_seed;
  j["id_prefix"] = s.id_prefix;
  return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

bool contains(const std::vector<std::uint32_t>& layers, std::uint32_t l) {
  return layers.empty() || std::find(layers.begin(), layers.end(), l) != layers.end();
}

}  // namespace

std::string synth_spec_to_json(const SynthSpec& spec) { return spec_json(spec).dump(2); }

SynthSpec synth_spec_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    SynthSpec s = j.contains("preset") ? synth_preset(j.at("preset").get<std::string>()) : SynthSpec{};
    maybe(j, "d", s.d);
    maybe(j, "tokens", s.tokens);
    maybe(j, "other_tokens", s.other_tokens);
    if (j.contains("vision_tokens")) s.vision_tokens = j.at("vision_tokens").get<std::uint32_t>();
    maybe(j, "layer_count", s.layer_count);
    maybe(j, "sample_count", s.sample_count);
    if (j.contains("class_rule")) s.class_rule = parse_class_rule(j.at("class_rule").get<std::string>());
    maybe(j, "regression", s.regression);
    maybe(j, "block_sizes", s.block_sizes);
    maybe(j, "block_counts", s.block_counts);
    maybe(j, "block_unit", s.block_unit);
    maybe(j, "hub_strengths", s.hub_strengths);
    maybe(j, "hub_blocks", s.hub_blocks);
    maybe(j, "planted_hub_indices", s.planted_hub_indices);
    maybe(j, "hub_strength", s.hub_strength);
    maybe(j, "distractor_blocks", s.distractor_blocks);
    maybe(j, "distractor_min", s.distractor_min);
    maybe(j, "distractor_max", s.distractor_max);
    maybe(j, "distractor_loading", s.distractor_loading);
    maybe(j, "cross_modal_ramp", s.cross_modal_ramp);
    maybe(j, "cross_modal_scale", s.cross_modal_scale);
    maybe(j, "noise_sigma", s.noise_sigma);
    maybe(j, "row_offset_sigma", s.row_offset_sigma);
    maybe(j, "signal_layers", s.signal_layers);
    maybe(j, "hub_layers", s.hub_layers);
    maybe(j, "master_seed", s.master_seed);
    maybe(j, "id_prefix", s.id_prefix);
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("synth spec: ") + e.what());
  }
}

SynthSpec synth_preset(std::string_view name) {
  SynthSpec s;
  if (name == "classify") {
    s.distractor_loading = 0.8;
    return s;
  }
  if (name == "regress") {
    s.regression = true;
    s.block_sizes.clear();
    for (std::uint32_t b = 4; b <= 12; ++b) s.block_sizes.push_back(b);
    // Small distractors keep every planted edge inside the default k = 0.05 budget.
    s.distractor_blocks = 4;
    s.distractor_min = 3;
    s.distractor_max = 4;
    return s;
  }
  if (name == "coupling") {
    s.class_rule = ClassRule::None;
    s.layer_count = 6;
    s.sample_count = 50;
    s.distractor_blocks = 0;
    s.row_offset_sigma = 0.0;
    s.cross_modal_ramp = {0.0, 0.16, 0.32, 0.48, 0.64, 0.8};
    return s;
  }
  if (name == "hubs") {
    s.class_rule = ClassRule::None;
    s.d = 500;
    s.tokens = 128;
    s.sample_count = 50;
    s.planted_hub_indices = {100, 200, 300, 400, 499};
    s.distractor_blocks = 8;
    s.distractor_min = 6;
    s.distractor_max = 8;
    return s;
  }
  if (name == "intervene") {
    s.class_rule = ClassRule::HubStrength;
    s.sample_count = 300;
    s.distractor_blocks = 0;
    s.planted_hub_indices = {56, 57, 58, 59, 60, 61, 62, 63};
    return s;
  }
  if (name == "null") {
    s.class_rule = ClassRule::None;
    s.distractor_blocks = 0;
    return s;
  }
  throw std::invalid_argument("unknown synth preset '" + std::string(name) + "'");
}

Label planted_label(const SynthSpec& spec, std::uint32_t sample) {
  const std::uint32_t k = spec.class_count();
  const std::uint32_t c = sample % k;
  switch (spec.class_rule) {
    case ClassRule::None: return {};
    case ClassRule::BlockSize:
      if (spec.regression) return static_cast<double>(spec.block_sizes[c]);
      return c;
    case ClassRule::BlockCount:
      if (spec.regression) return static_cast<double>(spec.block_counts[c]);
      return c;
    case ClassRule::HubStrength: return c;
  }
  return {};
}

std::string synth_sample_id(const SynthSpec& spec, std::uint32_t sample) {
  std::size_t width = std::max<std::size_t>(4, std::to_string(spec.sample_count - 1).size());
  std::string digits = std::to_string(sample);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return spec.id_prefix + digits;
}

ActivationRecord generate_record(const SynthSpec& spec, std::uint32_t sample, std::uint32_t layer) {
  if (sample >= spec.sample_count || layer >= spec.layer_count) {
    throw std::invalid_argument("generate_record: sample or layer out of range");
  }
  const std::uint32_t d = spec.d;
  const std::uint32_t n = spec.tokens;
  RandomStream rng(spec.master_seed, (std::uint64_t{sample} << 16) | layer);

  std::vector<double> h(static_cast<std::size_t>(d) * n);
  for (auto& v : h) v = rng.normal();
  const auto row = [&](std::uint32_t i) { return h.data() + static_cast<std::size_t>(i) * n; };
  const auto draw_factor = [&] {
    std::vector<double> f(n);
    for (auto& v : f) v = rng.normal();
    return f;
  };

  const std::uint32_t cls = sample % spec.class_count();
  std::vector<std::vector<double>> factors;
  std::vector<char> used(d, 0);
  for (auto hub : spec.planted_hub_indices) used[hub] = 1;
  const auto plant = [&](const std::vector<std::uint32_t>& members, double loading = 1.0) {
    auto f = draw_factor();
    const double own = std::sqrt(std::max(0.0, 1.0 - loading * loading));
    for (auto m : members) {
      double* r = row(m);
      if (loading == 1.0) {
        std::copy(f.begin(), f.end(), r);
      } else {
        for (std::uint32_t t = 0; t < n; ++t) r[t] = loading * f[t] + own * r[t];
      }
      used[m] = 1;
    }
    factors.push_back(std::move(f));
  };
  const auto pick_free = [&](std::uint32_t count) {
    std::vector<std::uint32_t> pool;
    for (std::uint32_t i = spec.signal_extent(); i < d; ++i) {
      if (!used[i]) pool.push_back(i);
    }
    const auto picks = rng.sample_without_replacement(static_cast<std::uint32_t>(pool.size()), count);
    std::vector<std::uint32_t> out;
    for (auto p : picks) out.push_back(pool[p]);
    return out;
  };

  if (contains(spec.signal_layers, layer)) {
    switch (spec.class_rule) {
      case ClassRule::BlockSize: {
        std::vector<std::uint32_t> members(spec.block_sizes[cls]);
        std::iota(members.begin(), members.end(), 0u);
        plant(members);
        break;
      }
      case ClassRule::BlockCount:
        for (std::uint32_t b = 0; b < spec.block_counts[cls]; ++b) {
          std::vector<std::uint32_t> members(spec.block_unit);
          std::iota(members.begin(), members.end(), b * spec.block_unit);
          plant(members);
        }
        break;
      case ClassRule::HubStrength: {
        const auto all = pick_free(spec.hub_blocks * spec.block_unit);
        for (std::uint32_t b = 0; b < spec.hub_blocks; ++b) {
          plant({all.begin() + b * spec.block_unit, all.begin() + (b + 1) * spec.block_unit});
        }
        break;
      }
      case ClassRule::None: break;
    }
  }

  for (std::uint32_t b = 0; b < spec.distractor_blocks; ++b) {
    const auto size = spec.distractor_min +
                      static_cast<std::uint32_t>(rng.below(spec.distractor_max - spec.distractor_min + 1));
    plant(pick_free(size), spec.distractor_loading);
  }

  if (!spec.planted_hub_indices.empty() && contains(spec.hub_layers, layer) && !factors.empty()) {
    const double s = spec.class_rule == ClassRule::HubStrength ? spec.hub_strengths[cls]
                                                               : spec.hub_strength;
    const double own = std::sqrt(std::max(0.0, 1.0 - s * s));
    const double inv = 1.0 / std::sqrt(static_cast<double>(factors.size()));
    for (auto hub : spec.planted_hub_indices) {
      double* r = row(hub);
      for (std::uint32_t t = 0; t < n; ++t) {
        double comb = 0.0;
        for (const auto& f : factors) comb += f[t];
        r[t] = s * comb * inv + own * r[t];
      }
    }
  }

  for (auto& v : h) v += spec.noise_sigma * rng.normal();
  for (std::uint32_t i = 0; i < d; ++i) {
    const double off = spec.row_offset_sigma * rng.normal();
    double* r = row(i);
    for (std::uint32_t t = 0; t < n; ++t) r[t] += off;
  }

  ActivationRecord rec(synth_sample_id(spec, sample), layer, d, n);
  const std::uint32_t vis_begin = spec.other_tokens;
  const std::uint32_t vis_end = vis_begin + spec.vision_count();
  for (std::uint32_t t = 0; t < n; ++t) {
    rec.modality[t] = t < vis_begin ? Modality::Other : t < vis_end ? Modality::Vision : Modality::Text;
  }

  if (!spec.cross_modal_ramp.empty()) {
    // Orthonormal centred profiles p, q over neurons; the text profile is
    // r p + sqrt(1 - r^2) q, so the two profiles correlate at exactly r.
    std::vector<double> p(d), q(d);
    for (auto& v : p) v = rng.normal();
    for (auto& v : q) v = rng.normal();
    const auto centre_unit = [](std::vector<double>& v) {
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double nrm = 0.0;
      for (auto& x : v) {
        x -= mean;
        nrm += x * x;
      }
      nrm = std::sqrt(nrm);
      if (nrm > 0.0) {
        for (auto& x : v) x /= nrm;
      }
    };
    if (d >= 3) {
      centre_unit(p);
      centre_unit(q);
      double pq = 0.0;
      for (std::uint32_t i = 0; i < d; ++i) pq += p[i] * q[i];
      for (std::uint32_t i = 0; i < d; ++i) q[i] -= pq * p[i];
      centre_unit(q);
    }
    const double r = spec.cross_modal_ramp[layer];
    const double amp = spec.cross_modal_scale * std::sqrt(static_cast<double>(d));
    for (std::uint32_t i = 0; i < d; ++i) {
      const double vis = amp * p[i];
      const double txt = amp * (r * p[i] + std::sqrt(std::max(0.0, 1.0 - r * r)) * q[i]);
      double* hr = row(i);
      for (std::uint32_t t = vis_begin; t < n; ++t) hr[t] += t < vis_end ? vis : txt;
    }
  }

  for (std::size_t k = 0; k < h.size(); ++k) rec.values[k] = static_cast<float>(h[k]);
  rec.label = planted_label(spec, sample);
  return rec;
}

std::vector<ActivationRecord> SynthDataset::layer(std::uint32_t l) const {
  std::vector<ActivationRecord> out;
  out.reserve(spec.sample_count);
  for (std::uint32_t s = 0; s < spec.sample_count; ++s) out.push_back(at(s, l));
  return out;
}

SynthDataset generate(const SynthSpec& spec, unsigned threads) {
  spec.validate();
  SynthDataset data;
  data.spec = spec;
  const std::size_t total = static_cast<std::size_t>(spec.sample_count) * spec.layer_count;
  data.records.resize(total);
  parallel_for(total, threads, [&](std::size_t k) {
    const auto s = static_cast<std::uint32_t>(k / spec.layer_count);
    const auto l = static_cast<std::uint32_t>(k % spec.layer_count);
    data.records[k] = generate_record(spec, s, l);
  });
  return data;
}

DatasetManifest write_dataset(const SynthDataset& data, const std::filesystem::path& dir,
                              unsigned threads) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "records", ec);
  if (ec) throw DataError("cannot create " + (dir / "records").string() + ": " + ec.message());
  DatasetManifest manifest;
  manifest.split_seed = data.spec.master_seed;
  manifest.records.resize(data.records.size());
  parallel_for(data.records.size(), threads, [&](std::size_t k) {
    const auto& rec = data.records[k];
    auto path = dir / "records" / (rec.sample_id + "_L" + std::to_string(rec.layer_index) + ".ntac");
    write_record(rec, path);
    manifest.records[k] = ManifestEntry{path, rec.sample_id, rec.layer_index, rec.label,
                                        rec.neurons, rec.tokens};
  });
  const auto manifest_path = dir / "manifest.tsv";
  write_manifest(manifest, manifest_path);
  {
    const std::string text = synth_spec_to_json(data.spec) + "\n";
    std::FILE* f = std::fopen((dir / "spec.json").string().c_str(), "wb");
    if (!f) throw DataError("cannot write " + (dir / "spec.json").string());
    std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
  }
  return load_manifest(manifest_path);
}

namespace {

double row_corr(const ActivationRecord& rec, std::uint32_t a, std::uint32_t b) {
  const auto ra = rec.row(a), rb = rec.row(b);
  const double n = rec.tokens;
  double ma = 0.0, mb = 0.0;
  for (std::uint32_t t = 0; t < rec.tokens; ++t) {
    ma += ra[t];
    mb += rb[t];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::uint32_t t = 0; t < rec.tokens; ++t) {
    const double x = ra[t] - ma, y = rb[t] - mb;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::uint32_t nearest_index(const std::vector<double>& options, double value) {
  std::uint32_t best = 0;
  for (std::uint32_t i = 1; i < options.size(); ++i) {
    if (std::fabs(options[i] - value) < std::fabs(options[best] - value)) best = i;
  }
  return best;
}

constexpr double kBlockThreshold = 0.9;

}  // namespace

Label oracle_label(const SynthSpec& spec, const ActivationRecord& record) {
  if (record.neurons != spec.d || record.tokens != spec.tokens ||
      record.layer_index >= spec.layer_count ||
      record.sample_id.rfind(spec.id_prefix, 0) != 0) {
    throw std::invalid_argument("oracle_label: record '" + record.sample_id +
                                "' does not match the synth spec");
  }
  if (!contains(spec.signal_layers, record.layer_index)) {
    throw std::invalid_argument("oracle_label: layer " + std::to_string(record.layer_index) +
                                " carries no planted signal");
  }
  switch (spec.class_rule) {
    case ClassRule::None: return {};
    case ClassRule::BlockSize: {
      std::uint32_t size = 1;
      for (std::uint32_t j = 1; j < spec.signal_extent(); ++j) {
        if (row_corr(record, 0, j) > kBlockThreshold) ++size;
      }
      if (spec.regression) return static_cast<double>(size);
      std::vector<double> sizes(spec.block_sizes.begin(), spec.block_sizes.end());
      return nearest_index(sizes, size);
    }
    case ClassRule::BlockCount: {
      std::uint32_t count = 0;
      const std::uint32_t max_blocks = spec.signal_extent() / spec.block_unit;
      for (std::uint32_t b = 0; b < max_blocks; ++b) {
        const std::uint32_t first = b * spec.block_unit;
        if (row_corr(record, first, first + 1) > kBlockThreshold) ++count;
      }
      if (spec.regression) return static_cast<double>(count);
      std::vector<double> counts(spec.block_counts.begin(), spec.block_counts.end());
      return nearest_index(counts, count);
    }
    case ClassRule::HubStrength: {
      const auto& hubs = spec.planted_hub_indices;
      double sum = 0.0;
      std::size_t pairs = 0;
      for (std::size_t a = 0; a < hubs.size(); ++a) {
        for (std::size_t b = a + 1; b < hubs.size(); ++b) {
          sum += row_corr(record, hubs[a], hubs[b]);
          ++pairs;
        }
      }
      std::vector<double> expected;
      for (double s : spec.hub_strengths) expected.push_back(s * s);
      return nearest_index(expected, sum / static_cast<double>(pairs));
    }
  }
  return {};
}

}  // namespace ntopo
