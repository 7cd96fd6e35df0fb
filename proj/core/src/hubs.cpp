#include "neurotopo/hubs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "neurotopo/parallel.hpp"
#include "neurotopo/philox.hpp"

namespace ntopo {

const char* to_string(HubDefinition def) noexcept {
  switch (def) {
    case HubDefinition::Graph: return "graph";
    case HubDefinition::GraphVision: return "graph-vision";
    case HubDefinition::GraphText: return "graph-text";
    case HubDefinition::Activation: return "activation";
    case HubDefinition::Random: return "random";
  }
  return "graph";
}

HubDefinition parse_hub_definition(std::string_view text) {
  for (auto def : {HubDefinition::Graph, HubDefinition::GraphVision, HubDefinition::GraphText,
                   HubDefinition::Activation, HubDefinition::Random}) {
    if (text == to_string(def)) return def;
  }
  if (text == "degree") return HubDefinition::Graph;
  throw std::invalid_argument("unknown hub definition '" + std::string(text) + "'");
}

ModalityFilter graph_filter(HubDefinition def) noexcept {
  switch (def) {
    case HubDefinition::GraphVision: return ModalityFilter::Vision;
    case HubDefinition::GraphText: return ModalityFilter::Text;
    default: return ModalityFilter::All;
  }
}

std::uint32_t hub_count(std::uint32_t node_count, double k_percent) {
  if (!(k_percent > 0.0) || k_percent > 100.0) {
    throw std::invalid_argument("k_percent must lie in (0, 100]");
  }
  // The epsilon keeps exact products such as 1% of 500 from flooring to 4.
  const double raw = std::floor(k_percent / 100.0 * node_count + 1e-9);
  const auto count = static_cast<std::uint32_t>(std::min<double>(raw, node_count));
  return std::max<std::uint32_t>(1, count);
}

std::vector<std::uint32_t> top_indices(std::span<const double> scores, std::uint32_t count) {
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  count = std::min<std::uint32_t>(count, static_cast<std::uint32_t>(scores.size()));
  std::partial_sort(order.begin(), order.begin() + count, order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<double> mean_abs_activation(const ActivationRecord& record) {
  std::vector<double> out(record.neurons, 0.0);
  for (std::uint32_t i = 0; i < record.neurons; ++i) {
    double sum = 0.0;
    for (float v : record.row(i)) sum += std::fabs(static_cast<double>(v));
    out[i] = sum / record.tokens;
  }
  return out;
}

HubSet graph_hub_set(const CorrelationGraph& graph, HubDefinition def, double k_percent) {
  if (def == HubDefinition::Activation || def == HubDefinition::Random) {
    throw std::invalid_argument("graph_hub_set: definition does not rank by degree");
  }
  HubSet set;
  set.definition = def;
  set.node_count = graph.node_count;
  set.k_percent = k_percent;
  const auto degree = degree_vector(graph);
  set.members = top_indices(degree, hub_count(graph.node_count, k_percent));
  return set;
}

HubSet activation_hub_set(const ActivationRecord& record, double k_percent) {
  HubSet set;
  set.layer_index = record.layer_index;
  set.sample_id = record.sample_id;
  set.definition = HubDefinition::Activation;
  set.node_count = record.neurons;
  set.k_percent = k_percent;
  const auto score = mean_abs_activation(record);
  set.members = top_indices(score, hub_count(record.neurons, k_percent));
  return set;
}

HubSet random_hub_set(const ActivationRecord& record, double k_percent, std::uint64_t seed) {
  HubSet set;
  set.layer_index = record.layer_index;
  set.sample_id = record.sample_id;
  set.definition = HubDefinition::Random;
  set.node_count = record.neurons;
  set.k_percent = k_percent;
  RandomStream rng(seed, fnv1a64(record.sample_id) ^ (std::uint64_t{record.layer_index} << 48));
  set.members = rng.sample_without_replacement(record.neurons, hub_count(record.neurons, k_percent));
  std::sort(set.members.begin(), set.members.end());
  return set;
}

HubSet hub_set(const ActivationRecord& record, const HubOptions& opts) {
  switch (opts.definition) {
    case HubDefinition::Activation: return activation_hub_set(record, opts.k_percent);
    case HubDefinition::Random: return random_hub_set(record, opts.k_percent, opts.seed);
    default: break;
  }
  auto graph = pearson_graph(record, graph_filter(opts.definition));
  if (!opts.dense) graph = sparsify_topk(graph, opts.sparsity);
  auto set = graph_hub_set(graph, opts.definition, opts.k_percent);
  set.layer_index = record.layer_index;
  set.sample_id = record.sample_id;
  return set;
}

double RecurrenceProfile::mean_nonzero() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (double p : pi) {
    if (p > 0.0) {
      sum += p;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / n;
}

double RecurrenceProfile::mean_over(std::span<const std::uint32_t> neurons) const {
  if (neurons.empty()) return 0.0;
  double sum = 0.0;
  for (auto i : neurons) sum += pi.at(i);
  return sum / neurons.size();
}

double RecurrenceProfile::max() const {
  return pi.empty() ? 0.0 : *std::max_element(pi.begin(), pi.end());
}

RecurrenceProfile recurrence(std::span<const HubSet> sets) {
  if (sets.empty()) throw std::invalid_argument("recurrence: no hub sets");
  const HubSet& first = sets.front();
  RecurrenceProfile prof;
  prof.layer_index = first.layer_index;
  prof.definition = first.definition;
  prof.sample_count = static_cast<std::uint32_t>(sets.size());
  std::vector<std::uint32_t> counts(first.node_count, 0);
  for (const auto& s : sets) {
    if (s.layer_index != first.layer_index || s.definition != first.definition ||
        s.node_count != first.node_count) {
      throw std::invalid_argument("recurrence: hub sets differ in layer, definition or size");
    }
    for (auto m : s.members) {
      if (m >= first.node_count) throw std::invalid_argument("recurrence: member out of range");
      ++counts[m];
    }
  }
  prof.pi.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    prof.pi[i] = static_cast<double>(counts[i]) / static_cast<double>(sets.size());
  }
  return prof;
}

std::vector<HubSet> layer_hub_sets(const DatasetManifest& manifest, std::uint32_t layer,
                                   const HubOptions& opts, unsigned threads) {
  const auto entries = manifest.layer_entries(layer);
  if (entries.empty()) {
    throw DataError("layer " + std::to_string(layer) + " has no records");
  }
  std::vector<HubSet> sets(entries.size());
  parallel_for(entries.size(), threads,
               [&](std::size_t i) { sets[i] = hub_set(load_entry(*entries[i]), opts); });
  return sets;
}

std::vector<RecurrenceProfile> stability_by_layer(const DatasetManifest& manifest,
                                                  const HubOptions& opts,
                                                  std::optional<std::uint32_t> first_layer,
                                                  std::optional<std::uint32_t> last_layer,
                                                  unsigned threads) {
  if (manifest.layer_count == 0) throw DataError("stability_by_layer: manifest has no layers");
  const std::uint32_t lo = first_layer.value_or(0);
  const std::uint32_t hi = last_layer.value_or(manifest.layer_count - 1);
  std::vector<RecurrenceProfile> out;
  for (std::uint32_t layer = lo; layer <= hi; ++layer) {
    const auto sets = layer_hub_sets(manifest, layer, opts, threads);
    out.push_back(recurrence(sets));
  }
  return out;
}

void write_membership_csv(std::span<const HubSet> sets, std::ostream& out) {
  out << "sample_id,layer,definition,neuron\n";
  for (const auto& s : sets) {
    for (auto m : s.members) {
      out << s.sample_id << ',' << s.layer_index << ',' << to_string(s.definition) << ',' << m
          << '\n';
    }
  }
}

void write_recurrence_csv(std::span<const RecurrenceProfile> profiles, std::ostream& out) {
  out << "layer,definition,neuron,pi\n";
  char buf[32];
  for (const auto& p : profiles) {
    for (std::size_t i = 0; i < p.pi.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.10g", p.pi[i]);
      out << p.layer_index << ',' << to_string(p.definition) << ',' << i << ',' << buf << '\n';
    }
  }
}

}  // namespace ntopo
