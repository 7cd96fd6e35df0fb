#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neurotopo/actdump.hpp"
#include "neurotopo/corrgraph.hpp"

namespace ntopo {

/// RANDOM is a control: members drawn uniformly from a seeded stream.
enum class HubDefinition { Graph, GraphVision, GraphText, Activation, Random };

const char* to_string(HubDefinition def) noexcept;
HubDefinition parse_hub_definition(std::string_view text);
/// Modality filter whose graph a GRAPH_* definition ranks; All for the rest.
ModalityFilter graph_filter(HubDefinition def) noexcept;

struct HubSet {
  std::uint32_t layer_index = 0;
  std::string sample_id;
  HubDefinition definition = HubDefinition::Graph;
  std::uint32_t node_count = 0;
  double k_percent = 1.0;
  std::vector<std::uint32_t> members;  // sorted ascending
};

/// max(1, floor(k_percent / 100 * d)).  Throws unless k_percent is in (0, 100].
std::uint32_t hub_count(std::uint32_t node_count, double k_percent);

/// Indices of the `count` largest scores, ties to the smaller index; sorted.
std::vector<std::uint32_t> top_indices(std::span<const double> scores, std::uint32_t count);

/// Mean |activation| across tokens, per neuron.
std::vector<double> mean_abs_activation(const ActivationRecord& record);

/// Ranks by degree_vector(graph).
HubSet graph_hub_set(const CorrelationGraph& graph, HubDefinition def, double k_percent);
/// Ranks by mean |activation|.
HubSet activation_hub_set(const ActivationRecord& record, double k_percent);
/// Uniform sample whose stream depends on (seed, sample_id, layer).
HubSet random_hub_set(const ActivationRecord& record, double k_percent, std::uint64_t seed);

struct HubOptions {
  HubDefinition definition = HubDefinition::Graph;
  double k_percent = 1.0;
  double sparsity = kDefaultSparsity;
  bool dense = false;  // rank degrees on the dense graph instead
  std::uint64_t seed = 0;
};

/// Builds whatever the definition needs (graph with the matching filter,
/// sparsified unless opts.dense) and returns the hub set.
HubSet hub_set(const ActivationRecord& record, const HubOptions& opts);

struct RecurrenceProfile {
  std::uint32_t layer_index = 0;
  HubDefinition definition = HubDefinition::Graph;
  std::uint32_t sample_count = 0;
  std::vector<double> pi;  // length d

  /// Mean pi over the neurons where pi > 0.
  double mean_nonzero() const;
  /// Mean pi over the listed neurons.
  double mean_over(std::span<const std::uint32_t> neurons) const;
  double max() const;
};

/// pi_i = fraction of sets containing i.  Sets must share layer, definition
/// and node count; throws std::invalid_argument otherwise.
RecurrenceProfile recurrence(std::span<const HubSet> sets);

/// One recurrence profile per layer in [first, last] (default: all layers).
std::vector<RecurrenceProfile> stability_by_layer(
    const DatasetManifest& manifest, const HubOptions& opts,
    std::optional<std::uint32_t> first_layer = std::nullopt,
    std::optional<std::uint32_t> last_layer = std::nullopt, unsigned threads = 1);

/// Hub sets for every record of one layer, in manifest order.
std::vector<HubSet> layer_hub_sets(const DatasetManifest& manifest, std::uint32_t layer,
                                   const HubOptions& opts, unsigned threads = 1);

/// sample_id,layer,definition,neuron
void write_membership_csv(std::span<const HubSet> sets, std::ostream& out);
/// layer,definition,neuron,pi (all neurons, including pi = 0)
void write_recurrence_csv(std::span<const RecurrenceProfile> profiles, std::ostream& out);

}  // namespace ntopo
