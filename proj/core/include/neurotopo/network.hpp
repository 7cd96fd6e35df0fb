#pragma once

// Small fixed-graph network pieces with hand-written reverse mode:
// node-identity embedding -> GCN stack -> [mean, max] pooling -> linear head.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "neurotopo/adjacency.hpp"
#include "neurotopo/tensor.hpp"

namespace ntopo {

struct Parameter {
  std::string name;
  Tensor2 value;
  Tensor2 grad;

  Parameter() = default;
  Parameter(std::string n, Tensor2 v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}
};

void zero_grad(std::span<Parameter> params);
void zero_grad(std::span<Parameter* const> params);

enum class Activation { Relu, Identity };

/// Z = act(A X W).  Throws std::invalid_argument on shape mismatch.
Tensor2 gcn_forward(const NormalizedAdjacency& adj, const Tensor2& x, const Tensor2& w,
                    Activation act);

/// [column means, column maxima] of Z, mean half first.  `argmax`, if given,
/// receives the first row attaining each column maximum.
std::vector<double> pool_signature(const Tensor2& z, std::vector<std::uint32_t>* argmax = nullptr);

/// Gradient of pool_signature w.r.t. Z; max gradient goes to the argmax row.
Tensor2 pool_backward(std::size_t rows, std::span<const std::uint32_t> argmax,
                      std::span<const double> dsig);

/// 0.5 * ||theta||^2; writes theta into *grad when given.
double half_squared_norm(const Tensor2& theta, Tensor2* grad = nullptr);

struct GcnConfig {
  std::uint32_t node_count = 0;
  std::uint32_t embedding_dim = 64;
  std::uint32_t layers = 2;  // ReLU between layers, identity on the last
  std::uint64_t seed = 0;
};

/// Intermediate values of one GcnEncoder::forward, needed by backward.
struct ForwardTrace {
  const NormalizedAdjacency* adj = nullptr;
  std::vector<Tensor2> propagated;  // A X_l
  std::vector<Tensor2> outputs;     // Z_l = act(A X_l W_l)
  std::vector<std::uint32_t> argmax;

  bool empty() const noexcept { return adj == nullptr || outputs.empty(); }
  void clear();
};

/// Node-identity embedding table followed by a GCN stack and pooling.
/// Parameters: "embedding" (d x e), "gcn.<l>.weight" (e x e).
class GcnEncoder {
 public:
  GcnEncoder() = default;
  explicit GcnEncoder(const GcnConfig& config);

  const GcnConfig& config() const noexcept { return config_; }
  std::size_t signature_dim() const noexcept { return 2u * config_.embedding_dim; }

  Tensor2 node_states(const NormalizedAdjacency& adj, ForwardTrace* trace = nullptr) const;
  std::vector<double> forward(const NormalizedAdjacency& adj, ForwardTrace* trace = nullptr) const;
  /// Accumulates parameter gradients given dLoss/dsignature.
  /// Throws std::logic_error if the trace is empty.
  void backward(const ForwardTrace& trace, std::span<const double> dsig);

  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }

 private:
  GcnConfig config_;
  std::vector<Parameter> params_;
};

/// y = x W^T + b for a batch of row vectors.  Parameters "<prefix>.weight"
/// (out x in) and "<prefix>.bias" (1 x out).
class LinearLayer {
 public:
  LinearLayer() = default;
  /// zero_init leaves the weight at zero; otherwise Glorot-normal from seed.
  LinearLayer(std::string prefix, std::size_t in, std::size_t out, std::uint64_t seed,
              bool zero_init = false);

  std::size_t in_dim() const noexcept { return params_.empty() ? 0 : params_[0].value.cols(); }
  std::size_t out_dim() const noexcept { return params_.empty() ? 0 : params_[0].value.rows(); }

  Tensor2 forward(const Tensor2& x) const;
  /// Accumulates dW, db and returns dL/dx.
  Tensor2 backward(const Tensor2& x, const Tensor2& dy);

  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }

 private:
  std::vector<Parameter> params_;
};

struct LossResult {
  double loss = 0.0;
  Tensor2 grad;  // dLoss / dinput, same shape as the input
};

/// Mean softmax cross-entropy over rows.
LossResult softmax_cross_entropy(const Tensor2& logits, std::span<const std::uint32_t> labels);
/// Mean of (pred - target)^2 over rows of a B x 1 prediction.
LossResult mean_squared_error(const Tensor2& pred, std::span<const double> target);

std::vector<double> softmax(std::span<const double> logits);

/// Normal(0, stddev) tensor drawn from the stream keyed by (seed, name).
Tensor2 random_normal(std::size_t rows, std::size_t cols, double stddev, std::uint64_t seed,
                      const std::string& name);

}  // namespace ntopo
