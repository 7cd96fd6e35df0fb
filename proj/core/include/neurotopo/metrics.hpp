#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace ntopo {

struct ClassificationMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  std::uint32_t classes_averaged = 0;
};

/// Macro averages run over classes present in truth or predictions; a class
/// with a zero denominator contributes 0 to that average.
ClassificationMetrics classification_metrics(std::span<const std::uint32_t> truth,
                                             std::span<const std::uint32_t> pred);

struct RegressionMetrics {
  double mse = 0.0;
  std::optional<double> r2;       // absent when the targets are constant
  std::optional<double> pearson;  // absent when either side is constant
  double count_accuracy = 0.0;    // fraction with round(pred) == round(target)
};

RegressionMetrics regression_metrics(std::span<const double> truth, std::span<const double> pred);

/// Pearson correlation; nullopt when either input has zero variance.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

/// Spearman rank correlation with average ranks for ties.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

/// Average ranks (1-based) with ties sharing the mean rank.
std::vector<double> average_ranks(std::span<const double> values);

/// Fraction of (positive, negative) pairs with positive > negative, ties 0.5.
/// O((P + N) log(P + N)).  Throws std::invalid_argument if either side is empty.
double pairwise_auc(std::span<const double> positives, std::span<const double> negatives);

}  // namespace ntopo
