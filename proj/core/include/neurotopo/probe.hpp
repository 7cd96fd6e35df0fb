#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neurotopo/actdump.hpp"
#include "neurotopo/adam.hpp"
#include "neurotopo/adjacency.hpp"
#include "neurotopo/corrgraph.hpp"
#include "neurotopo/metrics.hpp"
#include "neurotopo/network.hpp"

namespace ntopo {

enum class ProbeKind { Linear, Gcn };
enum class TaskKind { Classify, Regress };
/// Input of the linear probe: pooled signature of a frozen, seed-fixed GCN,
/// or per-neuron [mean, max] of the raw activations.
enum class LinearInput { Signature, PooledActivations };

const char* to_string(ProbeKind kind) noexcept;
const char* to_string(LinearInput input) noexcept;
ProbeKind parse_probe_kind(std::string_view text);
LinearInput parse_linear_input(std::string_view text);

struct ProbeConfig {
  ProbeKind kind = ProbeKind::Gcn;
  TaskKind task = TaskKind::Classify;
  std::uint32_t num_classes = 2;
  std::uint32_t layer_index = 0;
  double sparsity = kDefaultSparsity;  // 1.0 keeps the dense graph
  ModalityFilter filter = ModalityFilter::All;
  AdjacencyMode adjacency = AdjacencyMode::Absolute;
  LinearInput linear_input = LinearInput::Signature;
  std::uint32_t embedding_dim = 64;
  std::uint32_t gcn_layers = 2;
  double learning_rate = 1e-3;
  std::uint32_t epochs = 50;
  std::uint32_t batch_size = 16;
  std::uint64_t seed = 7;                  // parameter init and batch order
  std::optional<std::uint64_t> split_seed;  // defaults to the manifest's
  double train_fraction = 0.8;
  bool report_last_epoch = false;
  /// Standardize linear-probe inputs with train-split mean and std.
  bool standardize_features = false;
  /// When set, labels are permuted with this seed before the split
  /// (label-shuffle control).
  std::optional<std::uint64_t> label_shuffle_seed;

  /// Throws std::invalid_argument for out-of-range fields.
  void validate() const;
};

/// "classify:K" or "regress".
void parse_task(std::string_view text, ProbeConfig& cfg);
std::string task_string(const ProbeConfig& cfg);

std::string probe_config_to_json(const ProbeConfig& cfg);
ProbeConfig probe_config_from_json(std::string_view json);

struct Split {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
};

/// Seeded shuffle of [0, n); the first round((1 - f) n) indices (at least 1,
/// at most n - 1) form the test set.  Throws if n < 2.
Split split_indices(std::size_t n, std::uint64_t seed, double train_fraction);

/// One record turned into probe input.
struct ProbeSample {
  std::string sample_id;
  Label label;
  NormalizedAdjacency adjacency;
  std::vector<double> linear_features;  // filled for the linear path
};

/// Graph -> sparsify -> normalize.  For the linear path `frozen` supplies the
/// signature encoder; it is ignored for GCN probes.
ProbeSample featurize(const ActivationRecord& record, const ProbeConfig& cfg,
                      const GcnEncoder* frozen = nullptr);

/// Frozen encoder used for linear signatures: seeded by cfg.seed.
GcnEncoder frozen_encoder(const ProbeConfig& cfg, std::uint32_t node_count);

std::vector<ProbeSample> build_samples(std::span<const ActivationRecord> records,
                                       const ProbeConfig& cfg, unsigned threads = 1);

struct EpochMetrics {
  std::uint32_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<ClassificationMetrics> classification;
  std::optional<RegressionMetrics> regression;
};

struct EvalReport {
  TaskKind task = TaskKind::Classify;
  std::optional<ClassificationMetrics> classification;
  std::optional<RegressionMetrics> regression;
  std::vector<EpochMetrics> epochs;
  std::uint32_t best_epoch = 0;
  bool last_epoch = false;
  std::size_t train_count = 0;
  std::size_t test_count = 0;

  /// Accuracy for classification, R^2 (or 0) for regression.
  double headline() const;
};

struct ProbeModel {
  ProbeConfig config;
  std::uint32_t node_count = 0;
  GcnEncoder encoder;  // trained (GCN path) or frozen (linear signature path)
  LinearLayer head;
  std::vector<double> feature_mean, feature_scale;  // linear path standardization
  double target_mean = 0.0, target_scale = 1.0;     // regression z-scoring
  Adam optimizer;  // state at the reported epoch

  /// Parameters the optimizer updates, in a fixed order.
  std::vector<Parameter*> trainable();
};

/// Raw head outputs (class logits, or a z-scored regression value).
std::vector<double> probe_forward(const ProbeModel& model, const ProbeSample& sample);
/// Class id (argmax, first on ties) encoded as double, or the regression
/// prediction in original units.
double predict(const ProbeModel& model, const ProbeSample& sample);

struct TrainResult {
  ProbeModel model;
  EvalReport report;
  Split split;
};

TrainResult train_probe(const std::vector<ProbeSample>& samples, const ProbeConfig& cfg,
                        const Split& split);
/// Loads cfg.layer_index from the manifest, splits with cfg.split_seed or the
/// manifest's split_seed, and trains.
TrainResult train_probe(const DatasetManifest& manifest, const ProbeConfig& cfg,
                        unsigned threads = 1);

EvalReport evaluate_probe(const ProbeModel& model, const std::vector<ProbeSample>& samples,
                          std::span<const std::size_t> ids);

void save_probe(const ProbeModel& model, const std::filesystem::path& path);
ProbeModel load_probe(const std::filesystem::path& path);

struct SweepRow {
  std::uint32_t layer_index = 0;
  double normalized_depth = 0.0;
  double sparsity = 0.0;
  EvalReport report;
};

/// One training run per layer; depth = layer / (L - 1), 0 when L = 1.
std::vector<SweepRow> layer_sweep(const DatasetManifest& manifest, const ProbeConfig& cfg,
                                  std::span<const std::uint32_t> layers, unsigned threads = 1);
/// One training run per k value at cfg.layer_index.
std::vector<SweepRow> sparsity_sweep(const DatasetManifest& manifest, const ProbeConfig& cfg,
                                     std::span<const double> ks, unsigned threads = 1);

void write_layer_sweep_csv(std::span<const SweepRow> rows, TaskKind task, std::ostream& out);
void write_sparsity_sweep_csv(std::span<const SweepRow> rows, TaskKind task, std::ostream& out);

std::string eval_report_to_json(const EvalReport& report);

}  // namespace ntopo
