#include "neurotopo/align.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "neurotopo/checkpoint.hpp"
#include "neurotopo/metrics.hpp"
#include "neurotopo/parallel.hpp"
#include "neurotopo/philox.hpp"

namespace ntopo {

using nlohmann::json;

namespace {

struct Normalized {
  Tensor2 unit;
  std::vector<double> norms;
};

Normalized normalize_rows(const Tensor2& x, const char* side) {
  Normalized out{Tensor2(x.rows(), x.cols()), std::vector<double>(x.rows())};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double n = std::sqrt(dot(x.row(r), x.row(r)));
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw std::invalid_argument(std::string("infonce: zero-norm or non-finite ") + side +
                                  " embedding at row " + std::to_string(r));
    }
    out.norms[r] = n;
    for (std::size_t c = 0; c < x.cols(); ++c) out.unit(r, c) = x(r, c) / n;
  }
  return out;
}

// d(x / |x|) backward: (g - u (u . g)) / |x| per row.
Tensor2 normalize_backward(const Normalized& n, const Tensor2& grad_unit) {
  Tensor2 g(grad_unit.rows(), grad_unit.cols());
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const double proj = dot(n.unit.row(r), grad_unit.row(r));
    for (std::size_t c = 0; c < g.cols(); ++c) {
      g(r, c) = (grad_unit(r, c) - n.unit(r, c) * proj) / n.norms[r];
    }
  }
  return g;
}

}  // namespace

InfoNceResult infonce(const Tensor2& omega, const Tensor2& gamma, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("infonce: tau must be positive");
  if (omega.empty() || !omega.same_shape(gamma)) {
    throw std::invalid_argument("infonce: need equal, nonempty embedding batches");
  }
  const std::size_t b = omega.rows();
  const auto a = normalize_rows(omega, "omega");
  const auto g = normalize_rows(gamma, "gamma");
  Tensor2 s = matmul_nt(a.unit, g.unit);
  s *= 1.0 / tau;

  // Row softmax P (omega -> gamma) and column softmax Q (gamma -> omega).
  Tensor2 p(b, b), q(b, b);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double mx = s(i, 0);
    for (std::size_t j = 1; j < b; ++j) mx = std::max(mx, s(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < b; ++j) z += std::exp(s(i, j) - mx);
    loss += mx + std::log(z) - s(i, i);
    for (std::size_t j = 0; j < b; ++j) p(i, j) = std::exp(s(i, j) - mx) / z;
  }
  for (std::size_t j = 0; j < b; ++j) {
    double mx = s(0, j);
    for (std::size_t i = 1; i < b; ++i) mx = std::max(mx, s(i, j));
    double z = 0.0;
    for (std::size_t i = 0; i < b; ++i) z += std::exp(s(i, j) - mx);
    loss += mx + std::log(z) - s(j, j);
    for (std::size_t i = 0; i < b; ++i) q(i, j) = std::exp(s(i, j) - mx) / z;
  }
  const double inv = 1.0 / (2.0 * static_cast<double>(b));

  // dL/dS = (P + Q - 2I) / 2B, then through S = A G^T / tau.
  Tensor2 ds(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      ds(i, j) = (p(i, j) + q(i, j) - (i == j ? 2.0 : 0.0)) * inv / tau;
    }
  }
  InfoNceResult out;
  out.loss = loss * inv;
  out.grad_omega = normalize_backward(a, matmul(ds, g.unit));
  out.grad_gamma = normalize_backward(g, matmul_tn(ds, a.unit));
  return out;
}

double infonce_loss(std::span<const AlignmentPair> batch, double tau) {
  if (batch.empty()) throw std::invalid_argument("infonce: empty batch");
  const std::size_t dim = batch.front().z_omega.size();
  Tensor2 a(batch.size(), dim), g(batch.size(), dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].z_omega.size() != dim || batch[i].z_gamma.size() != dim) {
      throw std::invalid_argument("infonce: embedding dimensions differ");
    }
    std::copy(batch[i].z_omega.begin(), batch[i].z_omega.end(), a.row(i).begin());
    std::copy(batch[i].z_gamma.begin(), batch[i].z_gamma.end(), g.row(i).begin());
  }
  return infonce(a, g, tau).loss;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: length mismatch");
  const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (!(na > 0.0) || !(nb > 0.0)) throw std::invalid_argument("cosine: zero-norm vector");
  return dot(a, b) / (na * nb);
}

void AlignConfig::validate() const {
  const auto fail = [](const std::string& m) { throw std::invalid_argument("align config: " + m); };
  if (!(sparsity > 0.0 && sparsity <= 1.0)) fail("sparsity must lie in (0, 1]");
  if (embedding_dim == 0 || gcn_layers == 0 || projection_dim == 0) fail("dimensions must be positive");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) fail("temperature must be positive");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (epochs == 0 || batch_size == 0) fail("epochs and batch_size must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must lie in (0, 1)");
}

namespace {

json config_json(const AlignConfig& c) {
  json j;
  j["layer"] = c.layer_index;
  j["sparsity"] = c.sparsity;
  j["omega_filter"] = to_string(c.omega_filter);
  j["gamma_filter"] = to_string(c.gamma_filter);
  j["adjacency"] = to_string(c.adjacency);
  j["embedding_dim"] = c.embedding_dim;
  j["gcn_layers"] = c.gcn_layers;
  j["projection_dim"] = c.projection_dim;
  j["temperature"] = c.temperature;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["split_seed"] = c.split_seed ? json(*c.split_seed) : json(nullptr);
  j["train_fraction"] = c.train_fraction;
  return j;
}

AlignConfig config_from(const json& j) {
  AlignConfig c;
  c.layer_index = j.value("layer", c.layer_index);
  c.sparsity = j.value("sparsity", c.sparsity);
  if (j.contains("omega_filter")) c.omega_filter = parse_modality_filter(j.at("omega_filter").get<std::string>());
  if (j.contains("gamma_filter")) c.gamma_filter = parse_modality_filter(j.at("gamma_filter").get<std::string>());
  if (j.contains("adjacency")) c.adjacency = parse_adjacency_mode(j.at("adjacency").get<std::string>());
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.gcn_layers = j.value("gcn_layers", c.gcn_layers);
  c.projection_dim = j.value("projection_dim", c.projection_dim);
  c.temperature = j.value("temperature", c.temperature);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("split_seed") && !j.at("split_seed").is_null()) {
    c.split_seed = j.at("split_seed").get<std::uint64_t>();
  }
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  return c;
}

ProbeConfig signature_config(const AlignConfig& cfg, ModalityFilter filter) {
  ProbeConfig p;
  p.kind = ProbeKind::Linear;
  p.linear_input = LinearInput::Signature;
  p.layer_index = cfg.layer_index;
  p.sparsity = cfg.sparsity;
  p.filter = filter;
  p.adjacency = cfg.adjacency;
  p.embedding_dim = cfg.embedding_dim;
  p.gcn_layers = cfg.gcn_layers;
  p.seed = cfg.seed;
  return p;
}

}  // namespace

std::string align_config_to_json(const AlignConfig& cfg) { return config_json(cfg).dump(); }

AlignConfig align_config_from_json(std::string_view text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw DataError(std::string("align config: ") + e.what());
  }
}

SignaturePairs signature_pairs(std::span<const ActivationRecord> omega,
                               std::span<const ActivationRecord> gamma, const AlignConfig& cfg,
                               unsigned threads) {
  cfg.validate();
  std::map<std::string, std::size_t> gamma_index;
  for (std::size_t k = 0; k < gamma.size(); ++k) {
    if (gamma[k].layer_index != cfg.layer_index) continue;
    if (!gamma_index.emplace(gamma[k].sample_id, k).second) {
      throw DataError("align: duplicate gamma sample '" + gamma[k].sample_id + "'");
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> matched;
  std::map<std::string, bool> seen;
  for (std::size_t k = 0; k < omega.size(); ++k) {
    if (omega[k].layer_index != cfg.layer_index) continue;
    const auto& id = omega[k].sample_id;
    if (seen[id]) throw DataError("align: duplicate omega sample '" + id + "'");
    seen[id] = true;
    const auto it = gamma_index.find(id);
    if (it == gamma_index.end()) throw DataError("align: sample '" + id + "' has no gamma partner");
    matched.emplace_back(k, it->second);
  }
  if (matched.size() != gamma_index.size()) {
    for (const auto& [id, k] : gamma_index) {
      if (!seen.count(id)) throw DataError("align: sample '" + id + "' has no omega partner");
    }
  }
  if (matched.size() < 2) throw DataError("align: need at least two paired samples");
  const std::uint32_t d = omega[matched.front().first].neurons;
  for (const auto& [o, g] : matched) {
    if (omega[o].neurons != d || gamma[g].neurons != d) {
      throw DataError("align: paired records differ in neuron count");
    }
  }

  const ProbeConfig po = signature_config(cfg, cfg.omega_filter);
  const ProbeConfig pg = signature_config(cfg, cfg.gamma_filter);
  const GcnEncoder encoder = frozen_encoder(po, d);
  const std::size_t dim = encoder.signature_dim();
  SignaturePairs out;
  out.layer_index = cfg.layer_index;
  out.omega = Tensor2(matched.size(), dim);
  out.gamma = Tensor2(matched.size(), dim);
  out.sample_ids.resize(matched.size());
  parallel_for(matched.size(), threads, [&](std::size_t r) {
    const auto& [o, g] = matched[r];
    out.sample_ids[r] = omega[o].sample_id;
    const auto so = featurize(omega[o], po, &encoder);
    const auto sg = featurize(gamma[g], pg, &encoder);
    std::copy(so.linear_features.begin(), so.linear_features.end(), out.omega.row(r).begin());
    std::copy(sg.linear_features.begin(), sg.linear_features.end(), out.gamma.row(r).begin());
  });
  return out;
}

SignaturePairs signature_pairs(const DatasetManifest& omega, const DatasetManifest& gamma,
                               const AlignConfig& cfg, unsigned threads) {
  const auto a = load_layer(omega, cfg.layer_index, threads);
  const auto b = load_layer(gamma, cfg.layer_index, threads);
  if (a.empty() || b.empty()) {
    throw DataError("align: no records at layer " + std::to_string(cfg.layer_index));
  }
  return signature_pairs(a, b, cfg, threads);
}

std::vector<Parameter*> AlignmentModel::trainable() {
  return collect_parameters({&omega_head.parameters(), &gamma_head.parameters()});
}

namespace {

Tensor2 standardize(const Tensor2& x, const std::vector<double>& mean,
                    const std::vector<double>& scale) {
  if (x.cols() != mean.size()) {
    throw std::invalid_argument("align: signature width " + std::to_string(x.cols()) +
                                " does not match the model's " + std::to_string(mean.size()));
  }
  Tensor2 z(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) z(r, c) = (x(r, c) - mean[c]) / scale[c];
  }
  return z;
}

void fit_standardizer(const Tensor2& x, std::span<const std::size_t> rows, std::vector<double>& mean,
                      std::vector<double>& scale) {
  mean.assign(x.cols(), 0.0);
  scale.assign(x.cols(), 0.0);
  for (auto r : rows) {
    for (std::size_t c = 0; c < x.cols(); ++c) mean[c] += x(r, c);
  }
  for (auto& m : mean) m /= static_cast<double>(rows.size());
  for (auto r : rows) {
    for (std::size_t c = 0; c < x.cols(); ++c) scale[c] += (x(r, c) - mean[c]) * (x(r, c) - mean[c]);
  }
  for (auto& s : scale) {
    s = std::sqrt(s / static_cast<double>(rows.size()));
    if (!(s > 1e-12)) s = 1.0;
  }
}

Tensor2 gather(const Tensor2& x, std::span<const std::size_t> rows) {
  Tensor2 out(rows.size(), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::copy(x.row(rows[k]).begin(), x.row(rows[k]).end(), out.row(k).begin());
  }
  return out;
}

}  // namespace

Tensor2 AlignmentModel::embed_omega(const Tensor2& signatures) const {
  return omega_head.forward(standardize(signatures, omega_mean, omega_scale));
}

Tensor2 AlignmentModel::embed_gamma(const Tensor2& signatures) const {
  return gamma_head.forward(standardize(signatures, gamma_mean, gamma_scale));
}

double gauc(const Tensor2& z_omega, const Tensor2& z_gamma) {
  if (!z_omega.same_shape(z_gamma) || z_omega.rows() < 2) {
    throw std::invalid_argument("gauc: need at least two matched embedding rows");
  }
  const auto a = normalize_rows(z_omega, "omega");
  const auto g = normalize_rows(z_gamma, "gamma");
  const Tensor2 s = matmul_nt(a.unit, g.unit);
  const std::size_t n = s.rows();
  std::vector<double> pos, neg;
  pos.reserve(n);
  neg.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) (i == j ? pos : neg).push_back(s(i, j));
  }
  return pairwise_auc(pos, neg);
}

double gauc(const AlignmentModel& model, const SignaturePairs& pairs,
            std::span<const std::size_t> rows) {
  return gauc(model.embed_omega(gather(pairs.omega, rows)), model.embed_gamma(gather(pairs.gamma, rows)));
}

AlignResult train_alignment(const SignaturePairs& pairs, const AlignConfig& cfg, const Split& split) {
  cfg.validate();
  const std::size_t n = pairs.omega.rows();
  if (n < 2 || !pairs.omega.same_shape(pairs.gamma)) {
    throw DataError("align: need at least two paired signatures of equal width");
  }
  if (split.train.empty() || split.test.empty()) throw DataError("align: empty train or test split");
  for (auto i : split.train) {
    if (i >= n) throw std::invalid_argument("align: split index out of range");
  }
  for (auto i : split.test) {
    if (i >= n) throw std::invalid_argument("align: split index out of range");
  }

  AlignResult result;
  result.split = split;
  auto& model = result.model;
  model.config = cfg;
  fit_standardizer(pairs.omega, split.train, model.omega_mean, model.omega_scale);
  fit_standardizer(pairs.gamma, split.train, model.gamma_mean, model.gamma_scale);
  const std::size_t dim = pairs.omega.cols();
  model.omega_head = LinearLayer("align.omega", dim, cfg.projection_dim, cfg.seed);
  model.gamma_head = LinearLayer("align.gamma", dim, cfg.projection_dim, cfg.seed);
  model.optimizer = Adam(AdamConfig{cfg.learning_rate});

  const Tensor2 xo = standardize(pairs.omega, model.omega_mean, model.omega_scale);
  const Tensor2 xg = standardize(pairs.gamma, model.gamma_mean, model.gamma_scale);
  const auto params = model.trainable();
  std::vector<std::size_t> order(split.train.begin(), split.train.end());
  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RandomStream rng(cfg.seed, fnv1a64("align-batches") + epoch);
    rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const Tensor2 bo = gather(xo, rows), bg = gather(xg, rows);
      zero_grad(std::span<Parameter* const>(params));
      const Tensor2 zo = model.omega_head.forward(bo);
      const Tensor2 zg = model.gamma_head.forward(bg);
      const auto loss = infonce(zo, zg, cfg.temperature);
      model.omega_head.backward(bo, loss.grad_omega);
      model.gamma_head.backward(bg, loss.grad_gamma);
      model.optimizer.step(params);
      total += loss.loss;
      ++batches;
    }
    result.report.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  result.report.train_count = split.train.size();
  result.report.test_count = split.test.size();
  if (split.train.size() >= 2) result.report.train_gauc = gauc(model, pairs, split.train);
  if (split.test.size() >= 2) result.report.test_gauc = gauc(model, pairs, split.test);
  return result;
}

AlignResult train_alignment(const DatasetManifest& omega, const DatasetManifest& gamma,
                            const AlignConfig& cfg, unsigned threads) {
  const auto pairs = signature_pairs(omega, gamma, cfg, threads);
  const auto split = split_indices(pairs.omega.rows(), cfg.split_seed.value_or(omega.split_seed),
                                   cfg.train_fraction);
  return train_alignment(pairs, cfg, split);
}

std::string align_report_to_json(const AlignReport& report, const AlignConfig& cfg) {
  json j;
  j["schema"] = 1;
  j["config"] = config_json(cfg);
  j["train_gauc"] = report.train_gauc;
  j["test_gauc"] = report.test_gauc;
  j["train_count"] = report.train_count;
  j["test_count"] = report.test_count;
  j["epoch_loss"] = report.epoch_loss;
  return j.dump(2);
}

void save_alignment(const AlignmentModel& model, const std::filesystem::path& path) {
  json cfg;
  cfg["align"] = config_json(model.config);
  cfg["adam_steps"] = model.optimizer.steps();
  Checkpoint ckpt;
  ckpt.config_json = cfg.dump();
  ckpt.tensors.push_back({"omega.mean", Tensor2::row_vector(model.omega_mean)});
  ckpt.tensors.push_back({"omega.scale", Tensor2::row_vector(model.omega_scale)});
  ckpt.tensors.push_back({"gamma.mean", Tensor2::row_vector(model.gamma_mean)});
  ckpt.tensors.push_back({"gamma.scale", Tensor2::row_vector(model.gamma_scale)});
  std::vector<std::string> names;
  for (const auto* head : {&model.omega_head, &model.gamma_head}) {
    for (const auto& p : head->parameters()) {
      ckpt.tensors.push_back({p.name, p.value});
      names.push_back(p.name);
    }
  }
  const auto& m = model.optimizer.first_moments();
  const auto& v = model.optimizer.second_moments();
  for (std::size_t k = 0; k < m.size() && k < names.size(); ++k) {
    ckpt.tensors.push_back({"adam.m." + names[k], m[k]});
    ckpt.tensors.push_back({"adam.v." + names[k], v[k]});
  }
  write_checkpoint(ckpt, path);
}

AlignmentModel load_alignment(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  AlignmentModel model;
  json cfg;
  try {
    cfg = json::parse(ckpt.config_json);
    model.config = config_from(cfg.at("align"));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": bad alignment config: " + e.what());
  }
  model.omega_mean = ckpt.tensor("omega.mean").data();
  model.omega_scale = ckpt.tensor("omega.scale").data();
  model.gamma_mean = ckpt.tensor("gamma.mean").data();
  model.gamma_scale = ckpt.tensor("gamma.scale").data();
  const Tensor2& wo = ckpt.tensor("align.omega.weight");
  const Tensor2& wg = ckpt.tensor("align.gamma.weight");
  model.omega_head = LinearLayer("align.omega", wo.cols(), wo.rows(), 0, true);
  model.gamma_head = LinearLayer("align.gamma", wg.cols(), wg.rows(), 0, true);
  for (auto* p : model.trainable()) {
    const Tensor2& t = ckpt.tensor(p->name);
    if (!t.same_shape(p->value)) throw DataError(path.string() + ": tensor " + p->name + " has wrong shape");
    p->value = t;
  }
  if (model.omega_mean.size() != wo.cols() || model.gamma_mean.size() != wg.cols()) {
    throw DataError(path.string() + ": standardizer width does not match the heads");
  }
  model.optimizer = Adam(AdamConfig{model.config.learning_rate});
  std::vector<Tensor2> m, v;
  for (auto* p : model.trainable()) {
    if (!ckpt.has("adam.m." + p->name)) break;
    m.push_back(ckpt.tensor("adam.m." + p->name));
    v.push_back(ckpt.tensor("adam.v." + p->name));
  }
  model.optimizer.restore(cfg.value("adam_steps", std::uint64_t{0}), std::move(m), std::move(v));
  return model;
}

}  // namespace ntopo
