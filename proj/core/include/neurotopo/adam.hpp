#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "neurotopo/network.hpp"
#include "neurotopo/tensor.hpp"

namespace ntopo {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam.  Moments are created on the first step and must keep
/// the shapes of the parameters they were created for.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return step_; }
  const std::vector<Tensor2>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor2>& second_moments() const noexcept { return v_; }

  /// theta -= lr * m_hat / (sqrt(v_hat) + eps), using each parameter's grad.
  void step(std::span<Parameter* const> params);
  /// Tensor form; params[i] is updated in place from grads[i].
  void step(std::span<Tensor2* const> params, std::span<const Tensor2* const> grads);

  void restore(std::uint64_t steps, std::vector<Tensor2> m, std::vector<Tensor2> v);

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<Tensor2> m_;
  std::vector<Tensor2> v_;
};

/// Flattens parameter lists from several modules into one pointer list.
std::vector<Parameter*> collect_parameters(std::initializer_list<std::vector<Parameter>*> groups);

}  // namespace ntopo
