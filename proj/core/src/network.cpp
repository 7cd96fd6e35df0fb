#include "neurotopo/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "neurotopo/philox.hpp"

namespace ntopo {

void zero_grad(std::span<Parameter> params) {
  for (auto& p : params) p.grad.fill(0.0);
}

void zero_grad(std::span<Parameter* const> params) {
  for (auto* p : params) p->grad.fill(0.0);
}

Tensor2 random_normal(std::size_t rows, std::size_t cols, double stddev, std::uint64_t seed,
                      const std::string& name) {
  RandomStream rng(seed, fnv1a64(name));
  Tensor2 t(rows, cols);
  for (auto& v : t.data()) v = stddev * rng.normal();
  return t;
}

namespace {

void relu_inplace(Tensor2& z) {
  for (auto& v : z.data()) v = v > 0.0 ? v : 0.0;
}

}  // namespace

Tensor2 gcn_forward(const NormalizedAdjacency& adj, const Tensor2& x, const Tensor2& w,
                    Activation act) {
  if (x.cols() != w.rows()) {
    throw std::invalid_argument("gcn_forward: X " + x.shape_string() + " vs W " +
                                w.shape_string());
  }
  Tensor2 z = matmul(adj.multiply(x), w);
  if (act == Activation::Relu) relu_inplace(z);
  return z;
}

std::vector<double> pool_signature(const Tensor2& z, std::vector<std::uint32_t>* argmax) {
  if (z.rows() == 0) throw std::invalid_argument("pool_signature: empty node set");
  const std::size_t e = z.cols();
  std::vector<double> sig(2 * e, 0.0);
  std::vector<std::uint32_t> arg(e, 0);
  for (std::size_t c = 0; c < e; ++c) sig[e + c] = z(0, c);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto row = z.row(r);
    for (std::size_t c = 0; c < e; ++c) {
      sig[c] += row[c];
      if (row[c] > sig[e + c]) {
        sig[e + c] = row[c];
        arg[c] = static_cast<std::uint32_t>(r);
      }
    }
  }
  for (std::size_t c = 0; c < e; ++c) sig[c] /= static_cast<double>(z.rows());
  if (argmax) *argmax = std::move(arg);
  return sig;
}

Tensor2 pool_backward(std::size_t rows, std::span<const std::uint32_t> argmax,
                      std::span<const double> dsig) {
  const std::size_t e = argmax.size();
  if (dsig.size() != 2 * e) throw std::invalid_argument("pool_backward: gradient length");
  Tensor2 dz(rows, e);
  const double inv = 1.0 / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = dz.row(r);
    for (std::size_t c = 0; c < e; ++c) row[c] = dsig[c] * inv;
  }
  for (std::size_t c = 0; c < e; ++c) dz(argmax[c], c) += dsig[e + c];
  return dz;
}

double half_squared_norm(const Tensor2& theta, Tensor2* grad) {
  double s = 0.0;
  for (double v : theta.data()) s += v * v;
  if (grad) *grad = theta;
  return 0.5 * s;
}

void ForwardTrace::clear() {
  adj = nullptr;
  propagated.clear();
  outputs.clear();
  argmax.clear();
}

GcnEncoder::GcnEncoder(const GcnConfig& config) : config_(config) {
  if (config.node_count == 0 || config.embedding_dim == 0 || config.layers == 0) {
    throw std::invalid_argument("GcnEncoder: node_count, embedding_dim and layers must be >= 1");
  }
  const std::size_t d = config.node_count;
  const std::size_t e = config.embedding_dim;
  params_.emplace_back("embedding", random_normal(d, e, 1.0, config.seed, "embedding"));
  const double glorot = std::sqrt(2.0 / static_cast<double>(e + e));
  for (std::uint32_t l = 0; l < config.layers; ++l) {
    const std::string name = "gcn." + std::to_string(l) + ".weight";
    params_.emplace_back(name, random_normal(e, e, glorot, config.seed, name));
  }
}

Tensor2 GcnEncoder::node_states(const NormalizedAdjacency& adj, ForwardTrace* trace) const {
  if (adj.node_count() != config_.node_count) {
    throw std::invalid_argument("GcnEncoder: graph has " + std::to_string(adj.node_count()) +
                                " nodes, model expects " + std::to_string(config_.node_count));
  }
  if (trace) {
    trace->clear();
    trace->adj = &adj;
  }
  Tensor2 x = params_[0].value;
  for (std::uint32_t l = 0; l < config_.layers; ++l) {
    Tensor2 p = adj.multiply(x);
    x = matmul(p, params_[1 + l].value);
    if (l + 1 < config_.layers) relu_inplace(x);
    if (trace) {
      trace->propagated.push_back(std::move(p));
      trace->outputs.push_back(x);
    }
  }
  return x;
}

std::vector<double> GcnEncoder::forward(const NormalizedAdjacency& adj,
                                        ForwardTrace* trace) const {
  Tensor2 z = node_states(adj, trace);
  return pool_signature(z, trace ? &trace->argmax : nullptr);
}

void GcnEncoder::backward(const ForwardTrace& trace, std::span<const double> dsig) {
  if (trace.empty() || trace.argmax.empty()) {
    throw std::logic_error("GcnEncoder::backward called without a recorded forward pass");
  }
  Tensor2 dz = pool_backward(config_.node_count, trace.argmax, dsig);
  for (std::uint32_t l = config_.layers; l-- > 0;) {
    if (l + 1 < config_.layers) {
      const auto& z = trace.outputs[l].data();
      auto& g = dz.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(z[i] > 0.0)) g[i] = 0.0;
      }
    }
    Parameter& w = params_[1 + l];
    w.grad += matmul_tn(trace.propagated[l], dz);
    Tensor2 dx = trace.adj->multiply(matmul_nt(dz, w.value));
    if (l == 0) {
      params_[0].grad += dx;
    } else {
      dz = std::move(dx);
    }
  }
}

LinearLayer::LinearLayer(std::string prefix, std::size_t in, std::size_t out, std::uint64_t seed,
                         bool zero_init) {
  if (in == 0 || out == 0) throw std::invalid_argument("LinearLayer: dimensions must be >= 1");
  const std::string wname = prefix + ".weight";
  Tensor2 w = zero_init ? Tensor2(out, in)
                        : random_normal(out, in, std::sqrt(2.0 / static_cast<double>(in + out)),
                                        seed, wname);
  params_.emplace_back(wname, std::move(w));
  params_.emplace_back(prefix + ".bias", Tensor2(1, out));
}

Tensor2 LinearLayer::forward(const Tensor2& x) const {
  const Tensor2& w = params_[0].value;
  if (x.cols() != w.cols()) {
    throw std::invalid_argument("LinearLayer: input " + x.shape_string() + " vs weight " +
                                w.shape_string());
  }
  Tensor2 y = matmul_nt(x, w);
  const auto b = params_[1].value.row(0);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
  }
  return y;
}

Tensor2 LinearLayer::backward(const Tensor2& x, const Tensor2& dy) {
  Parameter& w = params_[0];
  Parameter& b = params_[1];
  require_shape(dy, x.rows(), w.value.rows(), "LinearLayer::backward dy");
  w.grad += matmul_tn(dy, x);
  auto db = b.grad.row(0);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    const auto row = dy.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
  }
  return matmul(dy, w.value);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double m = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (auto& v : p) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

LossResult softmax_cross_entropy(const Tensor2& logits, std::span<const std::uint32_t> labels) {
  if (logits.rows() != labels.size() || logits.rows() == 0) {
    throw std::invalid_argument("softmax_cross_entropy: batch size mismatch");
  }
  LossResult out;
  out.grad = Tensor2(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (labels[r] >= logits.cols()) {
      throw std::invalid_argument("softmax_cross_entropy: label out of range");
    }
    const auto row = logits.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - m);
    const double lse = m + std::log(sum);
    out.loss += (lse - row[labels[r]]) * inv;
    auto g = out.grad.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) g[c] = std::exp(row[c] - lse) * inv;
    g[labels[r]] -= inv;
  }
  return out;
}

LossResult mean_squared_error(const Tensor2& pred, std::span<const double> target) {
  if (pred.cols() != 1 || pred.rows() != target.size() || pred.rows() == 0) {
    throw std::invalid_argument("mean_squared_error: expected B x 1 prediction matching targets");
  }
  LossResult out;
  out.grad = Tensor2(pred.rows(), 1);
  const double inv = 1.0 / static_cast<double>(pred.rows());
  for (std::size_t r = 0; r < pred.rows(); ++r) {
    const double diff = pred(r, 0) - target[r];
    out.loss += diff * diff * inv;
    out.grad(r, 0) = 2.0 * diff * inv;
  }
  return out;
}

}  // namespace ntopo
