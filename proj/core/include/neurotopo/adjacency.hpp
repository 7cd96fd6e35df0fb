#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "neurotopo/corrgraph.hpp"
#include "neurotopo/tensor.hpp"

namespace ntopo {

/// Absolute: A = D^-1/2 (|W| + I) D^-1/2 with D the row sums of |W| + I.
/// Signed: same D, but off-diagonal entries keep the sign of W.
enum class AdjacencyMode { Absolute, Signed };

const char* to_string(AdjacencyMode mode) noexcept;
AdjacencyMode parse_adjacency_mode(std::string_view text);

/// Symmetric normalized adjacency in CSR form, self-loops included.
class NormalizedAdjacency {
 public:
  NormalizedAdjacency() = default;

  std::uint32_t node_count() const noexcept { return n_; }
  std::size_t nonzeros() const noexcept { return values_.size(); }

  /// A x for x with node_count rows.  A is symmetric, so this is also the
  /// backward map of itself.
  Tensor2 multiply(const Tensor2& x) const;
  Tensor2 dense() const;

  const std::vector<std::uint32_t>& row_ptr() const noexcept { return row_ptr_; }
  const std::vector<std::uint32_t>& columns() const noexcept { return cols_; }
  const std::vector<double>& values() const noexcept { return values_; }

  friend NormalizedAdjacency normalize_adjacency(const CorrelationGraph&, AdjacencyMode);

 private:
  std::uint32_t n_ = 0;
  std::vector<std::uint32_t> row_ptr_;
  std::vector<std::uint32_t> cols_;
  std::vector<double> values_;
};

NormalizedAdjacency normalize_adjacency(const CorrelationGraph& graph,
                                        AdjacencyMode mode = AdjacencyMode::Absolute);

}  // namespace ntopo
