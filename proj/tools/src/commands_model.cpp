#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "neurotopo/align.hpp"
#include "neurotopo/probe.hpp"

namespace ntopo::cli {

namespace fs = std::filesystem;

namespace {

struct ProbeFlags {
  std::string kind = "gcn";
  std::string task = "classify:2";
  std::uint32_t layer = 0;
  double sparsity = kDefaultSparsity;
  bool dense = false;
  std::string filter = "all";
  std::string adjacency = "absolute";
  std::string linear_input = "signature";
  std::uint32_t embedding_dim = 64;
  std::uint32_t gcn_layers = 2;
  double learning_rate = 1e-3;
  std::uint32_t epochs = 50;
  std::uint32_t batch_size = 16;
  std::optional<std::uint64_t> split_seed;
  double train_fraction = 0.8;
  bool report_last_epoch = false;
  bool standardize = false;
  std::optional<std::uint64_t> shuffle_labels;
};

void bind_probe_flags(CLI::App* sub, ProbeFlags& f, bool with_layer = true) {
  sub->add_option("--kind", f.kind, "gcn|linear")->check(CLI::IsMember({"gcn", "linear"}));
  sub->add_option("--task", f.task, "classify:K|regress");
  if (with_layer) sub->add_option("--layer", f.layer, "Layer to probe");
  sub->add_option("--sparsity", f.sparsity, "Graph sparsity")->check(CLI::Range(1e-9, 1.0));
  sub->add_flag("--dense", f.dense, "Use the dense graph");
  sub->add_option("--filter", f.filter, "all|vision|text");
  sub->add_option("--adjacency", f.adjacency, "absolute|signed");
  sub->add_option("--linear-input", f.linear_input, "signature|pooled-activations (linear probe input)");
  sub->add_option("--embedding-dim", f.embedding_dim, "Node embedding width");
  sub->add_option("--gcn-layers", f.gcn_layers, "GCN depth");
  sub->add_option("--lr", f.learning_rate, "Adam learning rate");
  sub->add_option("--epochs", f.epochs, "Training epochs");
  sub->add_option("--batch-size", f.batch_size, "Mini-batch size");
  sub->add_option("--split-seed", f.split_seed, "Train/test split seed (default: manifest)");
  sub->add_option("--train-fraction", f.train_fraction, "Training share of samples");
  sub->add_flag("--report-last-epoch", f.report_last_epoch, "Report the final epoch, not the best");
  sub->add_flag("--standardize", f.standardize, "Standardize linear-probe inputs");
  sub->add_option("--shuffle-labels", f.shuffle_labels, "Permute labels with this seed (control)");
}

ProbeConfig probe_config(const ProbeFlags& f, const Context& ctx, const std::string& what) {
  ProbeConfig cfg;
  cfg.kind = parse_probe_kind(f.kind);
  parse_task(f.task, cfg);
  cfg.layer_index = f.layer;
  cfg.sparsity = f.dense ? 1.0 : f.sparsity;
  cfg.filter = parse_modality_filter(f.filter);
  cfg.adjacency = parse_adjacency_mode(f.adjacency);
  cfg.linear_input = parse_linear_input(f.linear_input);
  cfg.embedding_dim = f.embedding_dim;
  cfg.gcn_layers = f.gcn_layers;
  cfg.learning_rate = f.learning_rate;
  cfg.epochs = f.epochs;
  cfg.batch_size = f.batch_size;
  cfg.seed = require_seed(ctx, what);
  cfg.split_seed = f.split_seed;
  cfg.train_fraction = f.train_fraction;
  cfg.report_last_epoch = f.report_last_epoch;
  cfg.standardize_features = f.standardize;
  cfg.label_shuffle_seed = f.shuffle_labels;
  cfg.validate();
  return cfg;
}

json report_document(const ProbeConfig& cfg, const EvalReport& report, const char* command) {
  json doc;
  doc["schema"] = 1;
  doc["command"] = command;
  doc["config"] = json::parse(probe_config_to_json(cfg));
  doc["report"] = json::parse(eval_report_to_json(report));
  return doc;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    try {
      if constexpr (std::is_same_v<T, double>) {
        out.push_back(std::stod(item, &used));
      } else {
        out.push_back(static_cast<T>(std::stoul(item, &used)));
      }
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw UsageError(std::string("bad ") + what + " list entry '" + item + "'");
  }
  if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
  return out;
}

std::span<const std::size_t> pick_rows(const Split& split, const std::string& which,
                                       std::vector<std::size_t>& all, std::size_t n) {
  if (which == "train") return split.train;
  if (which == "test") return split.test;
  all.resize(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  return all;
}

void add_probe(CLI::App& app, Context& ctx) {
  auto* probe = app.add_subcommand("probe", "Graph and linear probes");
  probe->require_subcommand(1);

  auto* train = add_leaf(*probe, "train", "Train a probe on one layer", ctx);
  struct TrainOpts {
    ProbeFlags f;
    std::string manifest, out, model;
  };
  auto t = std::make_shared<TrainOpts>();
  train->add_option("--manifest", t->manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  bind_probe_flags(train, t->f);
  train->add_option("--out", t->out, "Report JSON")->required();
  train->add_option("--model", t->model, "Write the trained model (NTPM)");
  train->callback([&ctx, t] {
    const auto cfg = probe_config(t->f, ctx, "probe train");
    const auto manifest = load_manifest(t->manifest);
    const auto result = train_probe(manifest, cfg, ctx.threads);
    write_report(ctx, t->out, report_document(cfg, result.report, "probe train").dump(2) + "\n");
    if (!t->model.empty()) {
      save_probe(result.model, t->model);
      write_meta(ctx, t->model);
    }
    *ctx.out << "test metric " << result.report.headline() << " at epoch " << result.report.best_epoch << "\n";
  });

  auto* eval = add_leaf(*probe, "eval", "Evaluate a saved probe on a manifest", ctx);
  struct EvalOpts {
    std::string model, manifest, out, split = "test";
  };
  auto e = std::make_shared<EvalOpts>();
  eval->add_option("--model", e->model, "Trained probe (NTPM)")->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", e->manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", e->split, "test|train|all")->check(CLI::IsMember({"test", "train", "all"}));
  eval->add_option("--out", e->out, "Report JSON")->required();
  eval->callback([&ctx, e] {
    const auto model = load_probe(e->model);
    const auto& cfg = model.config;
    const auto manifest = load_manifest(e->manifest);
    const auto records = load_layer(manifest, cfg.layer_index, ctx.threads);
    if (records.empty()) throw DataError("no records at layer " + std::to_string(cfg.layer_index));
    const auto samples = build_samples(records, cfg, ctx.threads);
    const auto split = split_indices(samples.size(), cfg.split_seed.value_or(manifest.split_seed),
                                     cfg.train_fraction);
    std::vector<std::size_t> all;
    const auto rows = pick_rows(split, e->split, all, samples.size());
    const auto report = evaluate_probe(model, samples, rows);
    auto doc = report_document(cfg, report, "probe eval");
    doc["split"] = e->split;
    write_report(ctx, e->out, doc.dump(2) + "\n");
    *ctx.out << "metric " << report.headline() << " on " << rows.size() << " samples\n";
  });

  auto* layers = add_leaf(*probe, "sweep-layers", "Train one probe per layer", ctx);
  struct LayerOpts {
    ProbeFlags f;
    std::string manifest, out, layers;
  };
  auto l = std::make_shared<LayerOpts>();
  layers->add_option("--manifest", l->manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  bind_probe_flags(layers, l->f, false);
  layers->add_option("--layers", l->layers, "Comma-separated layers (default: all)");
  layers->add_option("--out", l->out, "Sweep CSV")->required();
  layers->callback([&ctx, l] {
    const auto cfg = probe_config(l->f, ctx, "probe sweep-layers");
    const auto manifest = load_manifest(l->manifest);
    std::vector<std::uint32_t> which;
    if (l->layers.empty()) {
      for (std::uint32_t k = 0; k < manifest.layer_count; ++k) which.push_back(k);
    } else {
      which = parse_list<std::uint32_t>(l->layers, "layer");
    }
    const auto rows = layer_sweep(manifest, cfg, which, ctx.threads);
    std::ostringstream csv;
    write_layer_sweep_csv(rows, cfg.task, csv);
    auto config = json::parse(probe_config_to_json(cfg));
    config["command"] = "probe sweep-layers";
    config["layers"] = which;
    write_csv_report(ctx, l->out, config, csv.str());
    *ctx.out << "wrote " << rows.size() << " layers to " << l->out << "\n";
  });

  auto* sparsity = add_leaf(*probe, "sweep-sparsity", "Train one probe per sparsity level", ctx);
  struct SparsityOpts {
    ProbeFlags f;
    std::string manifest, out, ks = "0.01,0.05,0.1,0.2";
  };
  auto s = std::make_shared<SparsityOpts>();
  sparsity->add_option("--manifest", s->manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  bind_probe_flags(sparsity, s->f);
  sparsity->add_option("--ks", s->ks, "Comma-separated sparsity levels");
  sparsity->add_option("--out", s->out, "Sweep CSV")->required();
  sparsity->callback([&ctx, s] {
    const auto cfg = probe_config(s->f, ctx, "probe sweep-sparsity");
    const auto ks = parse_list<double>(s->ks, "sparsity");
    const auto manifest = load_manifest(s->manifest);
    const auto rows = sparsity_sweep(manifest, cfg, ks, ctx.threads);
    std::ostringstream csv;
    write_sparsity_sweep_csv(rows, cfg.task, csv);
    auto config = json::parse(probe_config_to_json(cfg));
    config["command"] = "probe sweep-sparsity";
    config["ks"] = ks;
    write_csv_report(ctx, s->out, config, csv.str());
    *ctx.out << "wrote " << rows.size() << " sparsity levels to " << s->out << "\n";
  });
}

void add_align(CLI::App& app, Context& ctx) {
  auto* align = app.add_subcommand("align", "Contrastive alignment between two conditions");
  align->require_subcommand(1);

  auto* train = add_leaf(*align, "train", "Train projection heads with symmetric InfoNCE", ctx);
  struct TrainOpts {
    AlignConfig cfg;
    std::string omega, gamma, out, report;
    std::string omega_filter = "all", gamma_filter = "all", adjacency = "absolute";
  };
  auto t = std::make_shared<TrainOpts>();
  train->add_option("--omega", t->omega, "Manifest of the first condition")->required()->check(CLI::ExistingFile);
  train->add_option("--gamma", t->gamma, "Manifest of the second condition")->required()->check(CLI::ExistingFile);
  train->add_option("--layer", t->cfg.layer_index, "Layer");
  train->add_option("--tau", t->cfg.temperature, "Temperature");
  train->add_option("--sparsity", t->cfg.sparsity, "Graph sparsity")->check(CLI::Range(1e-9, 1.0));
  train->add_option("--omega-filter", t->omega_filter, "Token filter for omega graphs");
  train->add_option("--gamma-filter", t->gamma_filter, "Token filter for gamma graphs");
  train->add_option("--adjacency", t->adjacency, "absolute|signed");
  train->add_option("--projection-dim", t->cfg.projection_dim, "Projection width");
  train->add_option("--lr", t->cfg.learning_rate, "Adam learning rate");
  train->add_option("--epochs", t->cfg.epochs, "Training epochs");
  train->add_option("--batch-size", t->cfg.batch_size, "Mini-batch size");
  train->add_option("--split-seed", t->cfg.split_seed, "Train/test split seed (default: omega manifest)");
  train->add_option("--out", t->out, "Model file (NTPM)")->required();
  train->add_option("--report", t->report, "Training report JSON");
  train->callback([&ctx, t] {
    AlignConfig cfg = t->cfg;
    cfg.seed = require_seed(ctx, "align train");
    cfg.omega_filter = parse_modality_filter(t->omega_filter);
    cfg.gamma_filter = parse_modality_filter(t->gamma_filter);
    cfg.adjacency = parse_adjacency_mode(t->adjacency);
    cfg.validate();
    const auto result = train_alignment(load_manifest(t->omega), load_manifest(t->gamma), cfg, ctx.threads);
    save_alignment(result.model, t->out);
    write_meta(ctx, t->out);
    if (!t->report.empty()) write_report(ctx, t->report, align_report_to_json(result.report, cfg) + "\n");
    *ctx.out << "held-out GAUC " << result.report.test_gauc << "\n";
  });

  auto* score = add_leaf(*align, "gauc", "Graph AUC of a trained alignment", ctx);
  struct GaucOpts {
    std::string model, omega, gamma, out, split = "test";
  };
  auto g = std::make_shared<GaucOpts>();
  score->add_option("--model", g->model, "Alignment model (NTPM)")->required()->check(CLI::ExistingFile);
  score->add_option("--omega", g->omega, "Manifest of the first condition")->required()->check(CLI::ExistingFile);
  score->add_option("--gamma", g->gamma, "Manifest of the second condition")->required()->check(CLI::ExistingFile);
  score->add_option("--split", g->split, "test|train|all")->check(CLI::IsMember({"test", "train", "all"}));
  score->add_option("--out", g->out, "GAUC JSON")->required();
  score->callback([&ctx, g] {
    const auto model = load_alignment(g->model);
    const auto& cfg = model.config;
    const auto omega = load_manifest(g->omega);
    const auto pairs = signature_pairs(omega, load_manifest(g->gamma), cfg, ctx.threads);
    const auto split = split_indices(pairs.omega.rows(), cfg.split_seed.value_or(omega.split_seed),
                                     cfg.train_fraction);
    std::vector<std::size_t> all;
    const auto rows = pick_rows(split, g->split, all, pairs.omega.rows());
    const double value = gauc(model, pairs, rows);
    json doc;
    doc["schema"] = 1;
    doc["command"] = "align gauc";
    doc["config"] = json::parse(align_config_to_json(cfg));
    doc["split"] = g->split;
    doc["pairs"] = rows.size();
    doc["gauc"] = value;
    write_report(ctx, g->out, doc.dump(2) + "\n");
    *ctx.out << "GAUC " << value << " on " << rows.size() << " pairs\n";
  });
}

}  // namespace

void add_model_commands(CLI::App& app, Context& ctx) {
  add_probe(app, ctx);
  add_align(app, ctx);
}

}  // namespace ntopo::cli
