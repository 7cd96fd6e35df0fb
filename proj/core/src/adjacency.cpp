#include "neurotopo/adjacency.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ntopo {

const char* to_string(AdjacencyMode mode) noexcept {
  return mode == AdjacencyMode::Signed ? "signed" : "absolute";
}

AdjacencyMode parse_adjacency_mode(std::string_view text) {
  if (text == "absolute") return AdjacencyMode::Absolute;
  if (text == "signed") return AdjacencyMode::Signed;
  throw std::invalid_argument("unknown adjacency mode '" + std::string(text) + "'");
}

NormalizedAdjacency normalize_adjacency(const CorrelationGraph& graph, AdjacencyMode mode) {
  const std::uint32_t n = graph.node_count;
  std::vector<double> degree(n, 1.0);
  std::vector<std::uint32_t> count(n, 1);
  for (const auto& e : graph.edges) {
    const double w = std::fabs(static_cast<double>(e.weight));
    degree[e.i] += w;
    degree[e.j] += w;
    ++count[e.i];
    ++count[e.j];
  }
  std::vector<double> inv_sqrt(n);
  for (std::uint32_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);

  NormalizedAdjacency adj;
  adj.n_ = n;
  adj.row_ptr_.assign(n + 1, 0);
  for (std::uint32_t i = 0; i < n; ++i) adj.row_ptr_[i + 1] = adj.row_ptr_[i] + count[i];
  adj.cols_.resize(adj.row_ptr_[n]);
  adj.values_.resize(adj.row_ptr_[n]);

  // Fill in column order: edges are sorted by (i, j), so for each row the
  // lower-triangle entries (from edges (k, i), k < i) arrive in increasing k,
  // then the diagonal, then the upper triangle in increasing j.
  std::vector<std::uint32_t> lower_count(n, 0);
  for (const auto& e : graph.edges) ++lower_count[e.j];
  std::vector<std::uint32_t> lower_next(n), upper_next(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    lower_next[i] = adj.row_ptr_[i];
    const std::uint32_t diag = adj.row_ptr_[i] + lower_count[i];
    adj.cols_[diag] = i;
    adj.values_[diag] = inv_sqrt[i] * inv_sqrt[i];
    upper_next[i] = diag + 1;
  }
  for (const auto& e : graph.edges) {
    const double w = mode == AdjacencyMode::Signed ? static_cast<double>(e.weight)
                                                   : std::fabs(static_cast<double>(e.weight));
    const double v = w * inv_sqrt[e.i] * inv_sqrt[e.j];
    const auto up = upper_next[e.i]++;
    adj.cols_[up] = e.j;
    adj.values_[up] = v;
    const auto lo = lower_next[e.j]++;
    adj.cols_[lo] = e.i;
    adj.values_[lo] = v;
  }
  return adj;
}

Tensor2 NormalizedAdjacency::multiply(const Tensor2& x) const {
  if (x.rows() != n_) {
    throw std::invalid_argument("NormalizedAdjacency::multiply: expected " + std::to_string(n_) +
                                " rows, got " + x.shape_string());
  }
  const std::size_t c = x.cols();
  Tensor2 out(n_, c);
  for (std::uint32_t i = 0; i < n_; ++i) {
    double* o = out.row(i).data();
    for (std::uint32_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
      const double v = values_[p];
      const double* xr = x.row(cols_[p]).data();
      for (std::size_t k = 0; k < c; ++k) o[k] += v * xr[k];
    }
  }
  return out;
}

Tensor2 NormalizedAdjacency::dense() const {
  Tensor2 out(n_, n_);
  for (std::uint32_t i = 0; i < n_; ++i) {
    for (std::uint32_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) out(i, cols_[p]) = values_[p];
  }
  return out;
}

}  // namespace ntopo
