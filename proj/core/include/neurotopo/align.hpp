#pragma once

// Contrastive alignment of graph signatures between two conditions (for
// example vision-only and text-only token views of the same samples).
//
// Each side maps a frozen GCN layer signature through its own linear
// projection head; outputs are L2-normalized and trained with a symmetric
// InfoNCE objective over in-batch negatives.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neurotopo/actdump.hpp"
#include "neurotopo/adam.hpp"
#include "neurotopo/adjacency.hpp"
#include "neurotopo/corrgraph.hpp"
#include "neurotopo/network.hpp"
#include "neurotopo/probe.hpp"
#include "neurotopo/tensor.hpp"

namespace ntopo {

/// Matched embeddings of one sample under the two conditions.
struct AlignmentPair {
  std::string sample_id;
  std::uint32_t layer_index = 0;
  std::vector<double> z_omega;
  std::vector<double> z_gamma;
};

struct InfoNceResult {
  double loss = 0.0;
  Tensor2 grad_omega;  // dL / d(unnormalized omega rows)
  Tensor2 grad_gamma;
};

/// Symmetric InfoNCE over B matched rows: the mean of the omega->gamma and
/// gamma->omega cross-entropies of cosine similarities divided by tau; the
/// positive is part of each denominator.  Throws std::invalid_argument on
/// shape mismatch, empty input, tau <= 0 or a zero-norm row.
InfoNceResult infonce(const Tensor2& omega, const Tensor2& gamma, double tau);
double infonce_loss(std::span<const AlignmentPair> batch, double tau);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct AlignConfig {
  std::uint32_t layer_index = 0;
  double sparsity = kDefaultSparsity;
  ModalityFilter omega_filter = ModalityFilter::All;
  ModalityFilter gamma_filter = ModalityFilter::All;
  AdjacencyMode adjacency = AdjacencyMode::Absolute;
  std::uint32_t embedding_dim = 64;  // frozen signature encoder
  std::uint32_t gcn_layers = 2;
  std::uint32_t projection_dim = 128;
  double temperature = 0.07;
  double learning_rate = 1e-3;
  std::uint32_t epochs = 50;
  std::uint32_t batch_size = 32;
  std::uint64_t seed = 7;
  std::optional<std::uint64_t> split_seed;
  double train_fraction = 0.8;

  void validate() const;
};

std::string align_config_to_json(const AlignConfig& cfg);
AlignConfig align_config_from_json(std::string_view json);

/// Frozen signatures of both conditions, rows in sample order.
struct SignaturePairs {
  std::vector<std::string> sample_ids;
  std::uint32_t layer_index = 0;
  Tensor2 omega;
  Tensor2 gamma;
};

/// Pairs records by sample_id at cfg.layer_index and computes the frozen
/// signatures (omega with omega_filter, gamma with gamma_filter).  Throws
/// DataError when a sample lacks its partner or node counts differ.
SignaturePairs signature_pairs(std::span<const ActivationRecord> omega,
                               std::span<const ActivationRecord> gamma, const AlignConfig& cfg,
                               unsigned threads = 1);
SignaturePairs signature_pairs(const DatasetManifest& omega, const DatasetManifest& gamma,
                               const AlignConfig& cfg, unsigned threads = 1);

struct AlignmentModel {
  AlignConfig config;
  std::vector<double> omega_mean, omega_scale;  // train-split standardization
  std::vector<double> gamma_mean, gamma_scale;
  LinearLayer omega_head;
  LinearLayer gamma_head;
  Adam optimizer;

  std::vector<Parameter*> trainable();
  /// Projected, unnormalized embeddings for signature rows.
  Tensor2 embed_omega(const Tensor2& signatures) const;
  Tensor2 embed_gamma(const Tensor2& signatures) const;
};

/// Cosine scores of matched rows (positives) and all mismatched cross pairs
/// (negatives); the fraction of correctly ordered (positive, negative) pairs,
/// ties counting one half.  Throws std::invalid_argument for fewer than two
/// rows.
double gauc(const Tensor2& z_omega, const Tensor2& z_gamma);
double gauc(const AlignmentModel& model, const SignaturePairs& pairs,
            std::span<const std::size_t> rows);

struct AlignReport {
  std::vector<double> epoch_loss;  // mean training loss per epoch
  double train_gauc = 0.0;
  double test_gauc = 0.0;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
};

struct AlignResult {
  AlignmentModel model;
  AlignReport report;
  Split split;
};

AlignResult train_alignment(const SignaturePairs& pairs, const AlignConfig& cfg, const Split& split);
/// Splits with cfg.split_seed, or the omega manifest's split_seed.
AlignResult train_alignment(const DatasetManifest& omega, const DatasetManifest& gamma,
                            const AlignConfig& cfg, unsigned threads = 1);

std::string align_report_to_json(const AlignReport& report, const AlignConfig& cfg);

void save_alignment(const AlignmentModel& model, const std::filesystem::path& path);
AlignmentModel load_alignment(const std::filesystem::path& path);

}  // namespace ntopo
