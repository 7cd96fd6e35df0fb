#pragma once

// Interventions on dumped activations: neuron ablation, edge-endpoint
// replacement and neuron scaling, expressed as replayable JSON plans.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "neurotopo/actdump.hpp"
#include "neurotopo/corrgraph.hpp"

namespace ntopo {

enum class SelectionCriterion { Degree, Activation, Random };
enum class ReplaceMode { Identical, Opposite, Random };

const char* to_string(SelectionCriterion c) noexcept;
const char* to_string(ReplaceMode m) noexcept;
SelectionCriterion parse_selection_criterion(std::string_view text);
ReplaceMode parse_replace_mode(std::string_view text);

struct ZeroDirective {
  std::vector<std::uint32_t> neurons;
  friend bool operator==(const ZeroDirective&, const ZeroDirective&) = default;
};

/// Overwrites row(target).  RANDOM draws a standard-normal row from
/// RandomStream(rng_seed, target) rescaled to the target row's L2 norm.
struct ReplaceDirective {
  std::uint32_t target = 0;
  std::uint32_t source = 0;
  ReplaceMode mode = ReplaceMode::Identical;
  std::uint64_t rng_seed = 0;
  friend bool operator==(const ReplaceDirective&, const ReplaceDirective&) = default;
};

struct ScaleDirective {
  std::vector<std::uint32_t> neurons;
  double factor = 1.0;
  friend bool operator==(const ScaleDirective&, const ScaleDirective&) = default;
};

using Directive = std::variant<ZeroDirective, ReplaceDirective, ScaleDirective>;

/// How the targets were chosen; informational only.
struct Provenance {
  std::optional<SelectionCriterion> criterion;
  std::optional<double> k_percent;
  std::optional<double> sparsity;
  std::optional<std::uint64_t> seed;
  std::string note;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

inline constexpr int kPlanSchema = 1;

struct InterventionPlan {
  std::uint32_t layer_index = 0;
  /// When set, the plan applies only to this sample.
  std::optional<std::string> sample_id;
  std::vector<Directive> directives;  // applied in order
  Provenance provenance;

  /// Targets (ZERO/SCALE neurons, REPLACE target) must be distinct across the
  /// whole plan, factors finite, and indices below `neurons` when given.
  /// Throws std::invalid_argument.
  void validate(std::optional<std::uint32_t> neurons = std::nullopt) const;
  bool applies_to(const ActivationRecord& record) const;

  friend bool operator==(const InterventionPlan&, const InterventionPlan&) = default;
};

/// Default factor grid for scaling sweeps.
inline constexpr double kDefaultScaleGrid[] = {0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0};

/// One ZERO directive over the selected neurons, scoped to the record's
/// sample.  DEGREE ranks the sparsified graph, ACTIVATION mean |activation|,
/// RANDOM draws uniformly (stream depends on seed, sample and layer).
InterventionPlan select_ablation_targets(const ActivationRecord& record, SelectionCriterion criterion,
                                         double k_percent, double sparsity = kDefaultSparsity,
                                         std::uint64_t seed = 0);

/// Per-sample plans for every record of one layer, in manifest order.
std::vector<InterventionPlan> select_ablation_targets(const DatasetManifest& manifest,
                                                      std::uint32_t layer,
                                                      SelectionCriterion criterion,
                                                      double k_percent,
                                                      double sparsity = kDefaultSparsity,
                                                      std::uint64_t seed = 0,
                                                      unsigned threads = 1);

/// Unordered pair (i < j) maximizing the sum of |w| over the records'
/// sparsified graphs; ties go to the smaller (i, j).  Throws on an empty span
/// or mismatched node counts.
std::pair<std::uint32_t, std::uint32_t> top_edge(std::span<const ActivationRecord> records,
                                                 double sparsity = kDefaultSparsity,
                                                 unsigned threads = 1);
/// Throws DataError when the layer has no records.
std::pair<std::uint32_t, std::uint32_t> top_edge(const DatasetManifest& manifest,
                                                 std::uint32_t layer,
                                                 double sparsity = kDefaultSparsity,
                                                 unsigned threads = 1);

/// Applies the directives to a copy; untargeted rows are bit-identical.
/// Throws std::invalid_argument on a layer mismatch or bad index.
ActivationRecord apply(const InterventionPlan& plan, const ActivationRecord& record);
/// Applies every plan that matches the record, in order.
ActivationRecord apply_plans(std::span<const InterventionPlan> plans,
                             const ActivationRecord& record);
std::vector<ActivationRecord> apply_all(std::span<const InterventionPlan> plans,
                                        std::span<const ActivationRecord> records,
                                        unsigned threads = 1);

/// Rewrites every record of the manifest (intervened or not) under out_dir and
/// writes out_dir/manifest.tsv; returns the new manifest.
DatasetManifest apply_to_manifest(std::span<const InterventionPlan> plans,
                                  const DatasetManifest& manifest,
                                  const std::filesystem::path& out_dir, unsigned threads = 1);

std::string plan_to_json(const InterventionPlan& plan);
/// {"schema": 1, "plans": [...]}
std::string plans_to_json(std::span<const InterventionPlan> plans);
/// Accepts a single plan object or a plan list.  Throws DataError on schema
/// violations.
std::vector<InterventionPlan> plans_from_json(std::string_view json);

}  // namespace ntopo
