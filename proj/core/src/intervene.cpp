#include "neurotopo/intervene.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "neurotopo/hubs.hpp"
#include "neurotopo/parallel.hpp"
#include "neurotopo/philox.hpp"

namespace ntopo {

using nlohmann::json;

const char* to_string(SelectionCriterion c) noexcept {
  switch (c) {
    case SelectionCriterion::Degree: return "degree";
    case SelectionCriterion::Activation: return "activation";
    case SelectionCriterion::Random: return "random";
  }
  return "?";
}

const char* to_string(ReplaceMode m) noexcept {
  switch (m) {
    case ReplaceMode::Identical: return "identical";
    case ReplaceMode::Opposite: return "opposite";
    case ReplaceMode::Random: return "random";
  }
  return "?";
}

SelectionCriterion parse_selection_criterion(std::string_view text) {
  if (text == "degree" || text == "graph") return SelectionCriterion::Degree;
  if (text == "activation") return SelectionCriterion::Activation;
  if (text == "random") return SelectionCriterion::Random;
  throw std::invalid_argument("unknown selection criterion '" + std::string(text) + "'");
}

ReplaceMode parse_replace_mode(std::string_view text) {
  if (text == "identical") return ReplaceMode::Identical;
  if (text == "opposite") return ReplaceMode::Opposite;
  if (text == "random") return ReplaceMode::Random;
  throw std::invalid_argument("unknown replace mode '" + std::string(text) + "'");
}

void InterventionPlan::validate(std::optional<std::uint32_t> neurons) const {
  std::set<std::uint32_t> targets;
  const auto check = [&](std::uint32_t idx, bool is_target) {
    if (neurons && idx >= *neurons) {
      throw std::invalid_argument("plan: neuron " + std::to_string(idx) + " out of range (d = " +
                                  std::to_string(*neurons) + ")");
    }
    if (is_target && !targets.insert(idx).second) {
      throw std::invalid_argument("plan: neuron " + std::to_string(idx) + " targeted twice");
    }
  };
  for (const auto& d : directives) {
    if (const auto* z = std::get_if<ZeroDirective>(&d)) {
      for (auto i : z->neurons) check(i, true);
    } else if (const auto* r = std::get_if<ReplaceDirective>(&d)) {
      check(r->target, true);
      check(r->source, false);
    } else {
      const auto& s = std::get<ScaleDirective>(d);
      if (!std::isfinite(s.factor)) throw std::invalid_argument("plan: scale factor must be finite");
      for (auto i : s.neurons) check(i, true);
    }
  }
}

bool InterventionPlan::applies_to(const ActivationRecord& record) const {
  return record.layer_index == layer_index && (!sample_id || *sample_id == record.sample_id);
}

namespace {

InterventionPlan zero_plan_from(const HubSet& set, SelectionCriterion c, double k, double sparsity,
                                std::uint64_t seed) {
  InterventionPlan plan;
  plan.layer_index = set.layer_index;
  plan.sample_id = set.sample_id;
  plan.directives.push_back(ZeroDirective{set.members});
  plan.provenance.criterion = c;
  plan.provenance.k_percent = k;
  if (c == SelectionCriterion::Degree) plan.provenance.sparsity = sparsity;
  if (c == SelectionCriterion::Random) plan.provenance.seed = seed;
  return plan;
}

}  // namespace

InterventionPlan select_ablation_targets(const ActivationRecord& record, SelectionCriterion criterion,
                                         double k_percent, double sparsity, std::uint64_t seed) {
  HubOptions opts;
  opts.k_percent = k_percent;
  opts.sparsity = sparsity;
  opts.seed = seed;
  switch (criterion) {
    case SelectionCriterion::Degree: opts.definition = HubDefinition::Graph; break;
    case SelectionCriterion::Activation: opts.definition = HubDefinition::Activation; break;
    case SelectionCriterion::Random: opts.definition = HubDefinition::Random; break;
  }
  return zero_plan_from(hub_set(record, opts), criterion, k_percent, sparsity, seed);
}

std::vector<InterventionPlan> select_ablation_targets(const DatasetManifest& manifest,
                                                      std::uint32_t layer,
                                                      SelectionCriterion criterion,
                                                      double k_percent, double sparsity,
                                                      std::uint64_t seed, unsigned threads) {
  const auto entries = manifest.layer_entries(layer);
  if (entries.empty()) throw DataError("no records at layer " + std::to_string(layer));
  std::vector<InterventionPlan> plans(entries.size());
  parallel_for(entries.size(), threads, [&](std::size_t k) {
    plans[k] = select_ablation_targets(load_entry(*entries[k]), criterion, k_percent, sparsity, seed);
  });
  return plans;
}

namespace {

using PairScore = std::pair<std::uint32_t, std::uint32_t>;

PairScore best_pair(const std::vector<double>& sums, std::uint32_t d) {
  // Triangle layout: pairs (i, j), i < j, in lexicographic order, so the first
  // maximum is the smallest (i, j).
  std::size_t best = 0;
  for (std::size_t p = 1; p < sums.size(); ++p) {
    if (sums[p] > sums[best]) best = p;
  }
  std::size_t p = best;
  for (std::uint32_t i = 0; i + 1 < d; ++i) {
    const std::size_t row = d - 1 - i;
    if (p < row) return {i, static_cast<std::uint32_t>(i + 1 + p)};
    p -= row;
  }
  throw std::logic_error("top_edge: index outside the triangle");
}

std::vector<std::size_t> row_offsets(std::uint32_t d) {
  std::vector<std::size_t> off(d);
  std::size_t acc = 0;
  for (std::uint32_t i = 0; i < d; ++i) {
    off[i] = acc;
    acc += d - 1 - i;
  }
  return off;
}

}  // namespace

std::pair<std::uint32_t, std::uint32_t> top_edge(std::span<const ActivationRecord> records,
                                                 double sparsity, unsigned threads) {
  if (records.empty()) throw std::invalid_argument("top_edge: no records");
  const std::uint32_t d = records.front().neurons;
  if (d < 2) throw std::invalid_argument("top_edge: need at least two neurons");
  for (const auto& r : records) {
    if (r.neurons != d) throw std::invalid_argument("top_edge: records disagree on d");
  }
  std::vector<CorrelationGraph> graphs(records.size());
  parallel_for(records.size(), threads, [&](std::size_t k) {
    graphs[k] = sparsify_topk(pearson_graph(records[k]), sparsity);
  });
  const auto off = row_offsets(d);
  std::vector<double> sums(static_cast<std::size_t>(d) * (d - 1) / 2, 0.0);
  // Sequential accumulation keeps the sums independent of the thread count.
  for (const auto& g : graphs) {
    for (const auto& e : g.edges) {
      sums[off[e.i] + (e.j - e.i - 1)] += std::fabs(e.weight);
    }
  }
  return best_pair(sums, d);
}

std::pair<std::uint32_t, std::uint32_t> top_edge(const DatasetManifest& manifest,
                                                 std::uint32_t layer, double sparsity,
                                                 unsigned threads) {
  const auto records = load_layer(manifest, layer, threads);
  if (records.empty()) throw DataError("no records at layer " + std::to_string(layer));
  return top_edge(records, sparsity, threads);
}

ActivationRecord apply(const InterventionPlan& plan, const ActivationRecord& record) {
  if (plan.layer_index != record.layer_index) {
    throw std::invalid_argument("apply: plan layer " + std::to_string(plan.layer_index) +
                                " does not match record layer " +
                                std::to_string(record.layer_index));
  }
  plan.validate(record.neurons);
  ActivationRecord out = record;
  const std::uint32_t n = out.tokens;
  for (const auto& d : plan.directives) {
    if (const auto* z = std::get_if<ZeroDirective>(&d)) {
      for (auto i : z->neurons) std::fill(out.row(i).begin(), out.row(i).end(), 0.0f);
    } else if (const auto* r = std::get_if<ReplaceDirective>(&d)) {
      auto dst = out.row(r->target);
      switch (r->mode) {
        case ReplaceMode::Identical: {
          const std::vector<float> src(out.row(r->source).begin(), out.row(r->source).end());
          std::copy(src.begin(), src.end(), dst.begin());
          break;
        }
        case ReplaceMode::Opposite: {
          const std::vector<float> src(out.row(r->source).begin(), out.row(r->source).end());
          for (std::uint32_t t = 0; t < n; ++t) dst[t] = -src[t];
          break;
        }
        case ReplaceMode::Random: {
          double norm = 0.0;
          for (float v : dst) norm += static_cast<double>(v) * v;
          norm = std::sqrt(norm);
          RandomStream rng(r->rng_seed, r->target);
          std::vector<double> z(n);
          double zn = 0.0;
          for (auto& v : z) {
            v = rng.normal();
            zn += v * v;
          }
          zn = std::sqrt(zn);
          const double scale = zn > 0.0 ? norm / zn : 0.0;
          for (std::uint32_t t = 0; t < n; ++t) dst[t] = static_cast<float>(z[t] * scale);
          break;
        }
      }
    } else {
      const auto& s = std::get<ScaleDirective>(d);
      for (auto i : s.neurons) {
        for (auto& v : out.row(i)) v = static_cast<float>(static_cast<double>(v) * s.factor);
      }
    }
  }
  return out;
}

ActivationRecord apply_plans(std::span<const InterventionPlan> plans,
                             const ActivationRecord& record) {
  ActivationRecord out = record;
  for (const auto& p : plans) {
    if (p.applies_to(out)) out = apply(p, out);
  }
  return out;
}

std::vector<ActivationRecord> apply_all(std::span<const InterventionPlan> plans,
                                        std::span<const ActivationRecord> records,
                                        unsigned threads) {
  std::vector<ActivationRecord> out(records.size());
  parallel_for(records.size(), threads, [&](std::size_t k) { out[k] = apply_plans(plans, records[k]); });
  return out;
}

DatasetManifest apply_to_manifest(std::span<const InterventionPlan> plans,
                                  const DatasetManifest& manifest,
                                  const std::filesystem::path& out_dir, unsigned threads) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "records", ec);
  if (ec) throw DataError("cannot create " + (out_dir / "records").string() + ": " + ec.message());
  DatasetManifest out;
  out.split_seed = manifest.split_seed;
  out.records.resize(manifest.records.size());
  parallel_for(manifest.records.size(), threads, [&](std::size_t k) {
    const auto& entry = manifest.records[k];
    ActivationRecord rec;
    try {
      rec = apply_plans(plans, load_entry(entry));
    } catch (const std::invalid_argument& e) {
      throw DataError(entry.sample_id + " layer " + std::to_string(entry.layer_index) + ": " +
                      e.what());
    }
    auto path = out_dir / "records" /
                (rec.sample_id + "_L" + std::to_string(rec.layer_index) + ".ntac");
    write_record(rec, path);
    out.records[k] = ManifestEntry{path, entry.sample_id, entry.layer_index, entry.label,
                                   rec.neurons, rec.tokens};
  });
  const auto manifest_path = out_dir / "manifest.tsv";
  write_manifest(out, manifest_path);
  return load_manifest(manifest_path);
}

namespace {

json plan_json(const InterventionPlan& plan) {
  json j;
  j["schema"] = kPlanSchema;
  j["layer"] = plan.layer_index;
  if (plan.sample_id) j["sample_id"] = *plan.sample_id;
  json dirs = json::array();
  for (const auto& d : plan.directives) {
    json o;
    if (const auto* z = std::get_if<ZeroDirective>(&d)) {
      o["op"] = "zero";
      o["neurons"] = z->neurons;
    } else if (const auto* r = std::get_if<ReplaceDirective>(&d)) {
      o["op"] = "replace";
      o["target"] = r->target;
      o["source"] = r->source;
      o["mode"] = to_string(r->mode);
      o["rng_seed"] = r->rng_seed;
    } else {
      const auto& s = std::get<ScaleDirective>(d);
      o["op"] = "scale";
      o["neurons"] = s.neurons;
      o["factor"] = s.factor;
    }
    dirs.push_back(std::move(o));
  }
  j["directives"] = std::move(dirs);
  json prov = json::object();
  const auto& p = plan.provenance;
  if (p.criterion) prov["criterion"] = to_string(*p.criterion);
  if (p.k_percent) prov["k_percent"] = *p.k_percent;
  if (p.sparsity) prov["sparsity"] = *p.sparsity;
  if (p.seed) prov["seed"] = *p.seed;
  if (!p.note.empty()) prov["note"] = p.note;
  j["provenance"] = std::move(prov);
  return j;
}

void check_schema(const json& j) {
  if (!j.contains("schema") || j.at("schema").get<int>() != kPlanSchema) {
    throw DataError("plan: unsupported or missing schema (expected " +
                    std::to_string(kPlanSchema) + ")");
  }
}

InterventionPlan plan_of(const json& j) {
  InterventionPlan plan;
  plan.layer_index = j.at("layer").get<std::uint32_t>();
  if (j.contains("sample_id")) plan.sample_id = j.at("sample_id").get<std::string>();
  for (const auto& o : j.at("directives")) {
    const auto op = o.at("op").get<std::string>();
    if (op == "zero") {
      plan.directives.push_back(ZeroDirective{o.at("neurons").get<std::vector<std::uint32_t>>()});
    } else if (op == "replace") {
      ReplaceDirective r;
      r.target = o.at("target").get<std::uint32_t>();
      r.source = o.at("source").get<std::uint32_t>();
      r.mode = parse_replace_mode(o.at("mode").get<std::string>());
      r.rng_seed = o.value("rng_seed", std::uint64_t{0});
      plan.directives.push_back(r);
    } else if (op == "scale") {
      ScaleDirective s;
      s.neurons = o.at("neurons").get<std::vector<std::uint32_t>>();
      s.factor = o.at("factor").get<double>();
      plan.directives.push_back(std::move(s));
    } else {
      throw DataError("plan: unknown op '" + op + "'");
    }
  }
  if (j.contains("provenance")) {
    const auto& p = j.at("provenance");
    if (p.contains("criterion")) {
      plan.provenance.criterion = parse_selection_criterion(p.at("criterion").get<std::string>());
    }
    if (p.contains("k_percent")) plan.provenance.k_percent = p.at("k_percent").get<double>();
    if (p.contains("sparsity")) plan.provenance.sparsity = p.at("sparsity").get<double>();
    if (p.contains("seed")) plan.provenance.seed = p.at("seed").get<std::uint64_t>();
    plan.provenance.note = p.value("note", std::string{});
  }
  plan.validate();
  return plan;
}

}  // namespace

std::string plan_to_json(const InterventionPlan& plan) { return plan_json(plan).dump(2); }

std::string plans_to_json(std::span<const InterventionPlan> plans) {
  json j;
  j["schema"] = kPlanSchema;
  j["plans"] = json::array();
  for (const auto& p : plans) {
    auto o = plan_json(p);
    o.erase("schema");
    j["plans"].push_back(std::move(o));
  }
  return j.dump(2);
}

std::vector<InterventionPlan> plans_from_json(std::string_view text) {
  try {
    const auto j = json::parse(text);
    check_schema(j);
    std::vector<InterventionPlan> plans;
    if (j.contains("plans")) {
      for (const auto& p : j.at("plans")) plans.push_back(plan_of(p));
    } else {
      plans.push_back(plan_of(j));
    }
    return plans;
  } catch (const json::exception& e) {
    throw DataError(std::string("plan: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("plan: ") + e.what());
  }
}

}  // namespace ntopo
