#include "neurotopo/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace ntopo {

void Adam::step(std::span<Tensor2* const> params, std::span<const Tensor2* const> grads) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("Adam::step: parameter and gradient counts differ");
  }
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  }
  if (m_.size() != params.size()) {
    throw std::invalid_argument("Adam::step: parameter count changed between steps");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->same_shape(*grads[k]) || !params[k]->same_shape(m_[k])) {
      throw std::invalid_argument("Adam::step: shape mismatch for parameter " +
                                  std::to_string(k));
    }
  }

  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& theta = params[k]->data();
    const auto& g = grads[k]->data();
    auto& m = m_[k].data();
    auto& v = v_[k].data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      theta[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

void Adam::step(std::span<Parameter* const> params) {
  std::vector<Tensor2*> values;
  std::vector<const Tensor2*> grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (auto* p : params) {
    values.push_back(&p->value);
    grads.push_back(&p->grad);
  }
  step(values, grads);
}

void Adam::restore(std::uint64_t steps, std::vector<Tensor2> m, std::vector<Tensor2> v) {
  if (m.size() != v.size()) throw std::invalid_argument("Adam::restore: moment count mismatch");
  step_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

std::vector<Parameter*> collect_parameters(std::initializer_list<std::vector<Parameter>*> groups) {
  std::vector<Parameter*> out;
  for (auto* g : groups) {
    for (auto& p : *g) out.push_back(&p);
  }
  return out;
}

}  // namespace ntopo
