#include "neurotopo/probe.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "neurotopo/checkpoint.hpp"
#include "neurotopo/parallel.hpp"
#include "neurotopo/philox.hpp"

namespace ntopo {

using nlohmann::json;

const char* to_string(ProbeKind kind) noexcept {
  return kind == ProbeKind::Linear ? "linear" : "gcn";
}

const char* to_string(LinearInput input) noexcept {
  return input == LinearInput::PooledActivations ? "pooled-activations" : "signature";
}

ProbeKind parse_probe_kind(std::string_view text) {
  if (text == "gcn") return ProbeKind::Gcn;
  if (text == "linear") return ProbeKind::Linear;
  throw std::invalid_argument("unknown probe kind '" + std::string(text) + "'");
}

LinearInput parse_linear_input(std::string_view text) {
  if (text == "signature") return LinearInput::Signature;
  if (text == "pooled-activations") return LinearInput::PooledActivations;
  throw std::invalid_argument("unknown linear input '" + std::string(text) + "'");
}

void ProbeConfig::validate() const {
  if (task == TaskKind::Classify && num_classes < 2) {
    throw std::invalid_argument("classification needs at least 2 classes");
  }
  if (!(sparsity > 0.0) || sparsity > 1.0) throw std::invalid_argument("sparsity must lie in (0, 1]");
  if (!(train_fraction > 0.0) || !(train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie in (0, 1)");
  }
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (embedding_dim < 1 || gcn_layers < 1) {
    throw std::invalid_argument("embedding_dim and gcn_layers must be >= 1");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
}

void parse_task(std::string_view text, ProbeConfig& cfg) {
  if (text == "regress") {
    cfg.task = TaskKind::Regress;
    return;
  }
  constexpr std::string_view prefix = "classify:";
  if (text.substr(0, prefix.size()) == prefix) {
    const auto digits = text.substr(prefix.size());
    std::uint32_t k = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && k >= 2) {
      cfg.task = TaskKind::Classify;
      cfg.num_classes = k;
      return;
    }
  }
  throw std::invalid_argument("task must be 'classify:K' (K >= 2) or 'regress', got '" +
                              std::string(text) + "'");
}

std::string task_string(const ProbeConfig& cfg) {
  return cfg.task == TaskKind::Regress ? std::string("regress")
                                       : "classify:" + std::to_string(cfg.num_classes);
}

namespace {

json config_json(const ProbeConfig& cfg) {
  json j;
  j["kind"] = to_string(cfg.kind);
  j["task"] = task_string(cfg);
  j["layer"] = cfg.layer_index;
  j["sparsity"] = cfg.sparsity;
  j["filter"] = to_string(cfg.filter);
  j["adjacency"] = to_string(cfg.adjacency);
  j["linear_input"] = to_string(cfg.linear_input);
  j["embedding_dim"] = cfg.embedding_dim;
  j["gcn_layers"] = cfg.gcn_layers;
  j["learning_rate"] = cfg.learning_rate;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  j["split_seed"] = cfg.split_seed ? json(*cfg.split_seed) : json(nullptr);
  j["train_fraction"] = cfg.train_fraction;
  j["report_last_epoch"] = cfg.report_last_epoch;
  j["standardize_features"] = cfg.standardize_features;
  j["label_shuffle_seed"] = cfg.label_shuffle_seed ? json(*cfg.label_shuffle_seed) : json(nullptr);
  return j;
}

ProbeConfig config_from(const json& j) {
  ProbeConfig cfg;
  cfg.kind = parse_probe_kind(j.at("kind").get<std::string>());
  parse_task(j.at("task").get<std::string>(), cfg);
  cfg.layer_index = j.at("layer").get<std::uint32_t>();
  cfg.sparsity = j.at("sparsity").get<double>();
  cfg.filter = parse_modality_filter(j.at("filter").get<std::string>());
  cfg.adjacency = parse_adjacency_mode(j.at("adjacency").get<std::string>());
  cfg.linear_input = parse_linear_input(j.at("linear_input").get<std::string>());
  cfg.embedding_dim = j.at("embedding_dim").get<std::uint32_t>();
  cfg.gcn_layers = j.at("gcn_layers").get<std::uint32_t>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.epochs = j.at("epochs").get<std::uint32_t>();
  cfg.batch_size = j.at("batch_size").get<std::uint32_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  if (!j.at("split_seed").is_null()) cfg.split_seed = j.at("split_seed").get<std::uint64_t>();
  cfg.train_fraction = j.at("train_fraction").get<double>();
  cfg.report_last_epoch = j.at("report_last_epoch").get<bool>();
  cfg.standardize_features = j.value("standardize_features", false);
  if (!j.at("label_shuffle_seed").is_null()) {
    cfg.label_shuffle_seed = j.at("label_shuffle_seed").get<std::uint64_t>();
  }
  cfg.validate();
  return cfg;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const std::optional<ClassificationMetrics>& c,
                  const std::optional<RegressionMetrics>& r) {
  json j = json::object();
  if (c) {
    j["accuracy"] = c->accuracy;
    j["macro_f1"] = c->macro_f1;
    j["macro_precision"] = c->macro_precision;
    j["macro_recall"] = c->macro_recall;
  }
  if (r) {
    j["mse"] = r->mse;
    j["r2"] = optional_json(r->r2);
    j["pearson"] = optional_json(r->pearson);
    j["count_accuracy"] = r->count_accuracy;
  }
  return j;
}

}  // namespace

std::string probe_config_to_json(const ProbeConfig& cfg) { return config_json(cfg).dump(); }

ProbeConfig probe_config_from_json(std::string_view text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw DataError(std::string("probe config: ") + e.what());
  }
}

std::string eval_report_to_json(const EvalReport& report) {
  json j;
  j["task"] = report.task == TaskKind::Classify ? "classify" : "regress";
  j["metrics"] = metrics_json(report.classification, report.regression);
  j["best_epoch"] = report.best_epoch;
  j["last_epoch"] = report.last_epoch;
  j["train_count"] = report.train_count;
  j["test_count"] = report.test_count;
  json epochs = json::array();
  for (const auto& e : report.epochs) {
    json row = metrics_json(e.classification, e.regression);
    row["epoch"] = e.epoch;
    row["train_loss"] = e.train_loss;
    epochs.push_back(std::move(row));
  }
  j["epochs"] = std::move(epochs);
  return j.dump(2);
}

double EvalReport::headline() const {
  if (classification) return classification->accuracy;
  if (regression && regression->r2) return *regression->r2;
  return 0.0;
}

Split split_indices(std::size_t n, std::uint64_t seed, double train_fraction) {
  if (n < 2) throw std::invalid_argument("split: need at least 2 samples");
  if (!(train_fraction > 0.0) || !(train_fraction < 1.0)) {
    throw std::invalid_argument("split: train_fraction must lie in (0, 1)");
  }
  auto test_count = static_cast<std::size_t>(
      std::floor((1.0 - train_fraction) * static_cast<double>(n) + 0.5));
  test_count = std::clamp<std::size_t>(test_count, 1, n - 1);
  RandomStream rng(seed, fnv1a64("split"));
  const auto perm = rng.permutation(static_cast<std::uint32_t>(n));
  Split s;
  s.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(test_count));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(test_count), perm.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

GcnEncoder frozen_encoder(const ProbeConfig& cfg, std::uint32_t node_count) {
  return GcnEncoder(GcnConfig{node_count, cfg.embedding_dim, cfg.gcn_layers, cfg.seed});
}

ProbeSample featurize(const ActivationRecord& record, const ProbeConfig& cfg,
                      const GcnEncoder* frozen) {
  if (record.layer_index != cfg.layer_index) {
    throw std::invalid_argument("featurize: record '" + record.sample_id + "' is layer " +
                                std::to_string(record.layer_index) + ", probe expects " +
                                std::to_string(cfg.layer_index));
  }
  ProbeSample s;
  s.sample_id = record.sample_id;
  s.label = record.label;
  auto graph = pearson_graph(record, cfg.filter);
  if (cfg.sparsity < 1.0) graph = sparsify_topk(graph, cfg.sparsity);
  s.adjacency = normalize_adjacency(graph, cfg.adjacency);
  if (cfg.kind == ProbeKind::Linear) {
    if (cfg.linear_input == LinearInput::Signature) {
      if (!frozen) throw std::invalid_argument("featurize: linear signature needs an encoder");
      s.linear_features = frozen->forward(s.adjacency);
    } else {
      const std::uint32_t d = record.neurons;
      s.linear_features.assign(2 * static_cast<std::size_t>(d), 0.0);
      for (std::uint32_t i = 0; i < d; ++i) {
        const auto row = record.row(i);
        double sum = 0.0;
        double mx = row[0];
        for (float v : row) {
          sum += v;
          mx = std::max<double>(mx, v);
        }
        s.linear_features[i] = sum / record.tokens;
        s.linear_features[d + i] = mx;
      }
    }
  }
  return s;
}

std::vector<ProbeSample> build_samples(std::span<const ActivationRecord> records,
                                       const ProbeConfig& cfg, unsigned threads) {
  std::vector<ProbeSample> out(records.size());
  if (records.empty()) return out;
  std::optional<GcnEncoder> frozen;
  if (cfg.kind == ProbeKind::Linear && cfg.linear_input == LinearInput::Signature) {
    frozen = frozen_encoder(cfg, records.front().neurons);
  }
  parallel_for(records.size(), threads, [&](std::size_t i) {
    out[i] = featurize(records[i], cfg, frozen ? &*frozen : nullptr);
  });
  return out;
}

std::vector<Parameter*> ProbeModel::trainable() {
  if (config.kind == ProbeKind::Gcn) return collect_parameters({&encoder.parameters(), &head.parameters()});
  return collect_parameters({&head.parameters()});
}

namespace {

std::vector<double> standardized(const ProbeModel& model, const std::vector<double>& x) {
  if (x.size() != model.feature_mean.size()) {
    throw std::invalid_argument("probe: feature length " + std::to_string(x.size()) +
                                " does not match the model's " +
                                std::to_string(model.feature_mean.size()));
  }
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    z[i] = (x[i] - model.feature_mean[i]) / model.feature_scale[i];
  }
  return z;
}

std::uint32_t class_label(const ProbeSample& s, std::uint32_t k) {
  if (const auto* c = std::get_if<std::uint32_t>(&s.label)) {
    if (*c < k) return *c;
    throw DataError("sample '" + s.sample_id + "': class " + std::to_string(*c) +
                    " outside classify:" + std::to_string(k));
  }
  throw DataError("sample '" + s.sample_id + "': classification needs an integer class label");
}

double real_label(const ProbeSample& s) {
  if (const auto* c = std::get_if<std::uint32_t>(&s.label)) return *c;
  if (const auto* r = std::get_if<double>(&s.label)) return *r;
  throw DataError("sample '" + s.sample_id + "': regression needs a label");
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

struct Targets {
  std::vector<std::uint32_t> classes;
  std::vector<double> values;
};

Targets extract_targets(const std::vector<ProbeSample>& samples, const ProbeConfig& cfg) {
  Targets t;
  for (const auto& s : samples) {
    if (cfg.task == TaskKind::Classify) {
      t.classes.push_back(class_label(s, cfg.num_classes));
    } else {
      t.values.push_back(real_label(s));
    }
  }
  return t;
}

void evaluate_into(const ProbeModel& model, const std::vector<ProbeSample>& samples,
                   std::span<const std::size_t> ids, const Targets& targets,
                   std::optional<ClassificationMetrics>& cls,
                   std::optional<RegressionMetrics>& reg) {
  if (model.config.task == TaskKind::Classify) {
    std::vector<std::uint32_t> truth, pred;
    for (auto i : ids) {
      truth.push_back(targets.classes[i]);
      pred.push_back(static_cast<std::uint32_t>(predict(model, samples[i])));
    }
    cls = classification_metrics(truth, pred);
  } else {
    std::vector<double> truth, pred;
    for (auto i : ids) {
      truth.push_back(targets.values[i]);
      pred.push_back(predict(model, samples[i]));
    }
    reg = regression_metrics(truth, pred);
  }
}

bool improves(const EpochMetrics& cand, const EpochMetrics* best) {
  if (!best) return true;
  if (cand.classification) return cand.classification->accuracy > best->classification->accuracy;
  return cand.regression->mse < best->regression->mse;
}

}  // namespace

std::vector<double> probe_forward(const ProbeModel& model, const ProbeSample& sample) {
  Tensor2 x;
  if (model.config.kind == ProbeKind::Gcn) {
    x = Tensor2::row_vector(model.encoder.forward(sample.adjacency));
  } else {
    x = Tensor2::row_vector(standardized(model, sample.linear_features));
  }
  Tensor2 y = model.head.forward(x);
  return y.data();
}

double predict(const ProbeModel& model, const ProbeSample& sample) {
  const auto out = probe_forward(model, sample);
  if (model.config.task == TaskKind::Classify) return static_cast<double>(argmax(out));
  return out[0] * model.target_scale + model.target_mean;
}

TrainResult train_probe(const std::vector<ProbeSample>& samples, const ProbeConfig& cfg,
                        const Split& split) {
  cfg.validate();
  if (split.train.empty() || split.test.empty()) throw DataError("probe: empty train or test split");
  for (auto i : split.train) {
    if (i >= samples.size()) throw std::invalid_argument("probe: split index out of range");
  }
  for (auto i : split.test) {
    if (i >= samples.size()) throw std::invalid_argument("probe: split index out of range");
  }
  const std::uint32_t d = samples.front().adjacency.node_count();
  for (const auto& s : samples) {
    if (s.adjacency.node_count() != d) throw DataError("probe: samples differ in neuron count");
  }

  Targets targets = extract_targets(samples, cfg);
  if (cfg.label_shuffle_seed) {
    RandomStream rng(*cfg.label_shuffle_seed, fnv1a64("label-shuffle"));
    if (cfg.task == TaskKind::Classify) {
      rng.shuffle(std::span<std::uint32_t>(targets.classes));
    } else {
      rng.shuffle(std::span<double>(targets.values));
    }
  }

  ProbeModel model;
  model.config = cfg;
  model.node_count = d;
  model.encoder = GcnEncoder(GcnConfig{d, cfg.embedding_dim, cfg.gcn_layers, cfg.seed});
  std::size_t in_dim = model.encoder.signature_dim();
  if (cfg.kind == ProbeKind::Linear) {
    in_dim = samples.front().linear_features.size();
    if (in_dim == 0) throw std::invalid_argument("probe: linear samples carry no features");
    model.feature_mean.assign(in_dim, 0.0);
    model.feature_scale.assign(in_dim, 0.0);
    for (auto i : split.train) {
      const auto& x = samples[i].linear_features;
      if (x.size() != in_dim) throw DataError("probe: inconsistent linear feature length");
      for (std::size_t c = 0; c < in_dim; ++c) model.feature_mean[c] += x[c];
    }
    for (auto& m : model.feature_mean) m /= static_cast<double>(split.train.size());
    for (auto i : split.train) {
      const auto& x = samples[i].linear_features;
      for (std::size_t c = 0; c < in_dim; ++c) {
        const double diff = x[c] - model.feature_mean[c];
        model.feature_scale[c] += diff * diff;
      }
    }
    for (auto& s : model.feature_scale) {
      s = std::sqrt(s / static_cast<double>(split.train.size()));
      if (!(s > 1e-12)) s = 1.0;
    }
    if (!cfg.standardize_features) {
      std::fill(model.feature_mean.begin(), model.feature_mean.end(), 0.0);
      std::fill(model.feature_scale.begin(), model.feature_scale.end(), 1.0);
    }
  }
  if (cfg.task == TaskKind::Regress) {
    double mean = 0.0, ss = 0.0;
    for (auto i : split.train) mean += targets.values[i];
    mean /= static_cast<double>(split.train.size());
    for (auto i : split.train) ss += (targets.values[i] - mean) * (targets.values[i] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(split.train.size()));
    model.target_mean = mean;
    model.target_scale = sd > 1e-12 ? sd : 1.0;
  }
  const std::size_t out_dim = cfg.task == TaskKind::Classify ? cfg.num_classes : 1;
  model.head = LinearLayer("head", in_dim, out_dim, cfg.seed, /*zero_init=*/true);
  model.optimizer = Adam(AdamConfig{cfg.learning_rate});

  TrainResult result;
  result.split = split;
  EvalReport& report = result.report;
  report.task = cfg.task;
  report.train_count = split.train.size();
  report.test_count = split.test.size();

  std::optional<ProbeModel> best_model;
  std::size_t best_index = 0;
  std::vector<std::size_t> order = split.train;
  std::vector<ForwardTrace> traces(cfg.batch_size);

  for (std::uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    RandomStream rng(cfg.seed, fnv1a64("batches") + epoch);
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    auto params = model.trainable();

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      zero_grad(std::span<Parameter* const>(params));
      Tensor2 inputs(b, in_dim);
      for (std::size_t r = 0; r < b; ++r) {
        const ProbeSample& s = samples[order[start + r]];
        const auto x = cfg.kind == ProbeKind::Gcn
                           ? model.encoder.forward(s.adjacency, &traces[r])
                           : standardized(model, s.linear_features);
        std::copy(x.begin(), x.end(), inputs.row(r).begin());
      }
      const Tensor2 outputs = model.head.forward(inputs);
      LossResult loss;
      if (cfg.task == TaskKind::Classify) {
        std::vector<std::uint32_t> y(b);
        for (std::size_t r = 0; r < b; ++r) y[r] = targets.classes[order[start + r]];
        loss = softmax_cross_entropy(outputs, y);
      } else {
        std::vector<double> y(b);
        for (std::size_t r = 0; r < b; ++r) {
          y[r] = (targets.values[order[start + r]] - model.target_mean) / model.target_scale;
        }
        loss = mean_squared_error(outputs, y);
      }
      loss_sum += loss.loss * static_cast<double>(b);
      const Tensor2 dinputs = model.head.backward(inputs, loss.grad);
      if (cfg.kind == ProbeKind::Gcn) {
        for (std::size_t r = 0; r < b; ++r) model.encoder.backward(traces[r], dinputs.row(r));
      }
      model.optimizer.step(std::span<Parameter* const>(params));
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(order.size());
    evaluate_into(model, samples, split.test, targets, em.classification, em.regression);
    const bool better = improves(em, best_model ? &report.epochs[best_index] : nullptr);
    report.epochs.push_back(em);
    if (!cfg.report_last_epoch && better) {
      best_index = report.epochs.size() - 1;
      best_model = model;
    }
  }

  if (cfg.report_last_epoch || !best_model) {
    best_index = report.epochs.size() - 1;
    report.last_epoch = true;
  } else {
    model = std::move(*best_model);
  }
  const EpochMetrics& chosen = report.epochs[best_index];
  report.best_epoch = chosen.epoch;
  report.classification = chosen.classification;
  report.regression = chosen.regression;
  result.model = std::move(model);
  return result;
}

TrainResult train_probe(const DatasetManifest& manifest, const ProbeConfig& cfg,
                        unsigned threads) {
  cfg.validate();
  const auto records = load_layer(manifest, cfg.layer_index, threads);
  if (records.size() < 2) {
    throw DataError("probe: layer " + std::to_string(cfg.layer_index) +
                    " has fewer than 2 records");
  }
  const auto samples = build_samples(records, cfg, threads);
  const auto split =
      split_indices(samples.size(), cfg.split_seed.value_or(manifest.split_seed), cfg.train_fraction);
  return train_probe(samples, cfg, split);
}

EvalReport evaluate_probe(const ProbeModel& model, const std::vector<ProbeSample>& samples,
                          std::span<const std::size_t> ids) {
  if (ids.empty()) throw std::invalid_argument("evaluate_probe: no samples selected");
  for (auto i : ids) {
    if (i >= samples.size()) throw std::invalid_argument("evaluate_probe: index out of range");
  }
  const Targets targets = extract_targets(samples, model.config);
  EvalReport report;
  report.task = model.config.task;
  report.test_count = ids.size();
  evaluate_into(model, samples, ids, targets, report.classification, report.regression);
  return report;
}

void save_probe(const ProbeModel& model, const std::filesystem::path& path) {
  json cfg;
  cfg["probe"] = config_json(model.config);
  cfg["node_count"] = model.node_count;
  cfg["input_dim"] = model.head.in_dim();
  cfg["adam_steps"] = model.optimizer.steps();
  Checkpoint ckpt;
  ckpt.config_json = cfg.dump();
  for (const auto& p : model.encoder.parameters()) ckpt.tensors.push_back({p.name, p.value});
  for (const auto& p : model.head.parameters()) ckpt.tensors.push_back({p.name, p.value});
  if (!model.feature_mean.empty()) {
    ckpt.tensors.push_back({"feature.mean", Tensor2::row_vector(model.feature_mean)});
    ckpt.tensors.push_back({"feature.scale", Tensor2::row_vector(model.feature_scale)});
  }
  const double target[2] = {model.target_mean, model.target_scale};
  ckpt.tensors.push_back({"target", Tensor2::row_vector(target)});
  std::vector<std::string> names;
  if (model.config.kind == ProbeKind::Gcn) {
    for (const auto& p : model.encoder.parameters()) names.push_back(p.name);
  }
  for (const auto& p : model.head.parameters()) names.push_back(p.name);
  const auto& m = model.optimizer.first_moments();
  const auto& v = model.optimizer.second_moments();
  for (std::size_t k = 0; k < m.size() && k < names.size(); ++k) {
    ckpt.tensors.push_back({"adam.m." + names[k], m[k]});
    ckpt.tensors.push_back({"adam.v." + names[k], v[k]});
  }
  write_checkpoint(ckpt, path);
}

ProbeModel load_probe(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  ProbeModel model;
  json cfg;
  try {
    cfg = json::parse(ckpt.config_json);
    model.config = config_from(cfg.at("probe"));
    model.node_count = cfg.at("node_count").get<std::uint32_t>();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": bad probe config: " + e.what());
  }
  const auto& c = model.config;
  model.encoder = GcnEncoder(GcnConfig{model.node_count, c.embedding_dim, c.gcn_layers, c.seed});
  for (auto& p : model.encoder.parameters()) {
    const Tensor2& t = ckpt.tensor(p.name);
    if (!t.same_shape(p.value)) throw DataError(path.string() + ": tensor " + p.name + " has wrong shape");
    p.value = t;
  }
  const Tensor2& w = ckpt.tensor("head.weight");
  model.head = LinearLayer("head", w.cols(), w.rows(), 0, true);
  for (auto& p : model.head.parameters()) {
    const Tensor2& t = ckpt.tensor(p.name);
    if (!t.same_shape(p.value)) throw DataError(path.string() + ": tensor " + p.name + " has wrong shape");
    p.value = t;
  }
  if (ckpt.has("feature.mean")) {
    model.feature_mean = ckpt.tensor("feature.mean").data();
    model.feature_scale = ckpt.tensor("feature.scale").data();
  }
  const Tensor2& target = ckpt.tensor("target");
  if (target.size() != 2) throw DataError(path.string() + ": bad target tensor");
  model.target_mean = target[0];
  model.target_scale = target[1];
  model.optimizer = Adam(AdamConfig{c.learning_rate});
  std::vector<Tensor2> m, v;
  for (auto* p : model.trainable()) {
    if (!ckpt.has("adam.m." + p->name)) break;
    m.push_back(ckpt.tensor("adam.m." + p->name));
    v.push_back(ckpt.tensor("adam.v." + p->name));
  }
  model.optimizer.restore(cfg.value("adam_steps", std::uint64_t{0}), std::move(m), std::move(v));
  return model;
}

std::vector<SweepRow> layer_sweep(const DatasetManifest& manifest, const ProbeConfig& cfg,
                                  std::span<const std::uint32_t> layers, unsigned threads) {
  if (layers.empty()) throw std::invalid_argument("layer_sweep: no layers");
  std::vector<SweepRow> rows(layers.size());
  const std::uint32_t total = std::max<std::uint32_t>(1, manifest.layer_count);
  parallel_for(layers.size(), threads, [&](std::size_t i) {
    ProbeConfig c = cfg;
    c.layer_index = layers[i];
    rows[i].layer_index = layers[i];
    rows[i].normalized_depth =
        total == 1 ? 0.0 : static_cast<double>(layers[i]) / static_cast<double>(total - 1);
    rows[i].sparsity = c.sparsity;
    rows[i].report = train_probe(manifest, c, 1).report;
  });
  return rows;
}

std::vector<SweepRow> sparsity_sweep(const DatasetManifest& manifest, const ProbeConfig& cfg,
                                     std::span<const double> ks, unsigned threads) {
  if (ks.empty()) throw std::invalid_argument("sparsity_sweep: no k values");
  for (double k : ks) {
    if (!(k > 0.0) || k > 1.0) throw std::invalid_argument("sparsity_sweep: k must lie in (0, 1]");
  }
  cfg.validate();
  const auto records = load_layer(manifest, cfg.layer_index, threads);
  if (records.size() < 2) throw DataError("probe: layer has fewer than 2 records");
  const auto split = split_indices(records.size(), cfg.split_seed.value_or(manifest.split_seed),
                                   cfg.train_fraction);
  std::vector<SweepRow> rows(ks.size());
  parallel_for(ks.size(), threads, [&](std::size_t i) {
    ProbeConfig c = cfg;
    c.sparsity = ks[i];
    rows[i].layer_index = c.layer_index;
    rows[i].sparsity = ks[i];
    rows[i].report = train_probe(build_samples(records, c, 1), c, split).report;
  });
  return rows;
}

namespace {

void metric_header(TaskKind task, std::ostream& out) {
  if (task == TaskKind::Classify) {
    out << "accuracy,macro_f1,macro_precision,macro_recall,best_epoch\n";
  } else {
    out << "mse,r2,pearson,count_accuracy,best_epoch\n";
  }
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

void metric_cells(const EvalReport& r, std::ostream& out) {
  if (r.classification) {
    const auto& c = *r.classification;
    out << num(c.accuracy) << ',' << num(c.macro_f1) << ',' << num(c.macro_precision) << ','
        << num(c.macro_recall);
  } else if (r.regression) {
    const auto& g = *r.regression;
    out << num(g.mse) << ',' << num(g.r2) << ',' << num(g.pearson) << ','
        << num(g.count_accuracy);
  }
  out << ',' << r.best_epoch << '\n';
}

}  // namespace

void write_layer_sweep_csv(std::span<const SweepRow> rows, TaskKind task, std::ostream& out) {
  out << "layer,normalized_depth,";
  metric_header(task, out);
  for (const auto& row : rows) {
    out << row.layer_index << ',' << num(row.normalized_depth) << ',';
    metric_cells(row.report, out);
  }
}

void write_sparsity_sweep_csv(std::span<const SweepRow> rows, TaskKind task, std::ostream& out) {
  out << "k,";
  metric_header(task, out);
  for (const auto& row : rows) {
    out << num(row.sparsity) << ',';
    metric_cells(row.report, out);
  }
}

}  // namespace ntopo
