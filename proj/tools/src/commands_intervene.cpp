#include <cstdio>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "neurotopo/intervene.hpp"
#include "neurotopo/probe.hpp"

namespace ntopo::cli {

namespace fs = std::filesystem;

namespace {

void add_select(CLI::App& group, Context& ctx) {
  auto* select = add_leaf(group, "select", "Per-sample ablation plans", ctx);
  struct Opts {
    std::string manifest, out, criterion = "degree";
    std::uint32_t layer = 0;
    double k_percent = 1.0;
    double sparsity = kDefaultSparsity;
  };
  auto o = std::make_shared<Opts>();
  select->add_option("--manifest", o->manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  select->add_option("--layer", o->layer, "Layer")->required();
  select->add_option("--criterion", o->criterion, "degree|activation|random");
  select->add_option("--k-percent", o->k_percent, "Ablated fraction in percent")->check(CLI::Range(1e-9, 100.0));
  select->add_option("--sparsity", o->sparsity, "Graph sparsity for degree ranking")->check(CLI::Range(1e-9, 1.0));
  select->add_option("--out", o->out, "Plan list JSON")->required();
  select->callback([&ctx, o] {
    const auto criterion = parse_selection_criterion(o->criterion);
    const std::uint64_t seed =
        criterion == SelectionCriterion::Random ? require_seed(ctx, "random selection") : 0;
    const auto manifest = load_manifest(o->manifest);
    const auto plans = select_ablation_targets(manifest, o->layer, criterion, o->k_percent,
                                               o->sparsity, seed, ctx.threads);
    write_report(ctx, o->out, plans_to_json(plans) + "\n");
    *ctx.out << "wrote " << plans.size() << " plans to " << o->out << "\n";
  });
}

void add_top_edge(CLI::App& group, Context& ctx) {
  auto* top = add_leaf(group, "top-edge", "Edge with the largest summed weight over a layer", ctx);
  struct Opts {
    std::string manifest, out, plan, mode = "identical";
    std::uint32_t layer = 0;
    double sparsity = kDefaultSparsity;
  };
  auto o = std::make_shared<Opts>();
  top->add_option("--manifest", o->manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  top->add_option("--layer", o->layer, "Layer")->required();
  top->add_option("--sparsity", o->sparsity, "Graph sparsity")->check(CLI::Range(1e-9, 1.0));
  top->add_option("--out", o->out, "Edge JSON")->required();
  top->add_option("--plan", o->plan, "Also write a replacement plan for the edge");
  top->add_option("--mode", o->mode, "identical|opposite|random (replacement plan)");
  top->callback([&ctx, o] {
    const auto mode = parse_replace_mode(o->mode);
    const auto manifest = load_manifest(o->manifest);
    const auto [i, j] = top_edge(manifest, o->layer, o->sparsity, ctx.threads);
    json doc;
    doc["schema"] = 1;
    doc["command"] = "intervene top-edge";
    doc["config"] = {{"layer", o->layer}, {"sparsity", o->sparsity}};
    doc["edge"] = {i, j};
    write_report(ctx, o->out, doc.dump(2) + "\n");
    if (!o->plan.empty()) {
      InterventionPlan plan;
      plan.layer_index = o->layer;
      ReplaceDirective r;
      r.target = j;
      r.source = i;
      r.mode = mode;
      if (mode == ReplaceMode::Random) r.rng_seed = require_seed(ctx, "random replacement");
      plan.directives.push_back(r);
      plan.provenance.sparsity = o->sparsity;
      plan.provenance.note = "top edge";
      write_report(ctx, o->plan, plan_to_json(plan) + "\n");
    }
    *ctx.out << "top edge (" << i << ", " << j << ")\n";
  });
}

void add_apply(CLI::App& group, Context& ctx) {
  auto* apply_cmd = add_leaf(group, "apply", "Apply plans to every matching record", ctx);
  struct Opts {
    std::string plan, manifest, out;
  };
  auto o = std::make_shared<Opts>();
  apply_cmd->add_option("--plan", o->plan, "Plan or plan list JSON")->required()->check(CLI::ExistingFile);
  apply_cmd->add_option("--manifest", o->manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  apply_cmd->add_option("--out", o->out, "Output dataset directory")->required();
  apply_cmd->callback([&ctx, o] {
    const auto plans = plans_from_json(read_text(o->plan));
    const auto manifest = load_manifest(o->manifest);
    const auto result = apply_to_manifest(plans, manifest, o->out, ctx.threads);
    write_meta(ctx, fs::path(o->out) / "manifest.tsv");
    *ctx.out << "wrote " << result.records.size() << " records to " << o->out << "\n";
  });
}

void add_eval(CLI::App& group, Context& ctx) {
  auto* eval = add_leaf(group, "eval", "Probe metrics on clean and intervened records", ctx);
  struct Opts {
    std::string model, manifest, out, split = "test";
    std::vector<std::string> plans;
  };
  auto o = std::make_shared<Opts>();
  eval->add_option("--model", o->model, "Trained probe (NTPM)")->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", o->manifest, "Clean dataset manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--plan", o->plans, "Plan or plan list JSON; one condition per file (repeatable)")
      ->check(CLI::ExistingFile);
  eval->add_option("--split", o->split, "test|train|all")->check(CLI::IsMember({"test", "train", "all"}));
  eval->add_option("--out", o->out, "Condition CSV")->required();
  eval->callback([&ctx, o] {
    const auto model = load_probe(o->model);
    const auto& cfg = model.config;
    const auto manifest = load_manifest(o->manifest);
    const auto clean = load_layer(manifest, cfg.layer_index, ctx.threads);
    if (clean.empty()) throw DataError("no records at layer " + std::to_string(cfg.layer_index));
    const auto split = split_indices(clean.size(), cfg.split_seed.value_or(manifest.split_seed),
                                     cfg.train_fraction);
    std::vector<std::size_t> rows;
    if (o->split == "train") {
      rows = split.train;
    } else if (o->split == "test") {
      rows = split.test;
    } else {
      rows.resize(clean.size());
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }

    std::ostringstream csv;
    csv << "condition,records_changed,samples,accuracy,macro_f1,mse,r2\n";
    const auto emit = [&](const std::string& name, std::size_t changed,
                          std::span<const ActivationRecord> records) {
      const auto samples = build_samples(records, cfg, ctx.threads);
      const auto report = evaluate_probe(model, samples, rows);
      char buf[128];
      csv << name << ',' << changed << ',' << rows.size();
      if (report.classification) {
        std::snprintf(buf, sizeof buf, ",%.10g,%.10g,,", report.classification->accuracy,
                      report.classification->macro_f1);
      } else {
        const auto& m = *report.regression;
        if (m.r2) {
          std::snprintf(buf, sizeof buf, ",,,%.10g,%.10g", m.mse, *m.r2);
        } else {
          std::snprintf(buf, sizeof buf, ",,,%.10g,", m.mse);
        }
      }
      csv << buf << '\n';
      return report.headline();
    };

    json conditions = json::array();
    const double base = emit("baseline", 0, clean);
    *ctx.out << "baseline " << base << "\n";
    for (const auto& path : o->plans) {
      const auto plans = plans_from_json(read_text(path));
      const auto changed_records = apply_all(plans, clean, ctx.threads);
      std::size_t changed = 0;
      for (const auto& rec : clean) {
        for (const auto& plan : plans) {
          if (plan.applies_to(rec)) {
            ++changed;
            break;
          }
        }
      }
      const auto name = fs::path(path).stem().string();
      const double metric = emit(name, changed, changed_records);
      conditions.push_back({{"name", name}, {"plan", path}});
      *ctx.out << name << " " << metric << "\n";
    }
    json config = {{"command", "intervene eval"}, {"model", o->model}, {"split", o->split},
                   {"layer", cfg.layer_index}, {"conditions", conditions}};
    write_csv_report(ctx, o->out, config, csv.str());
  });
}

}  // namespace

void add_intervene_commands(CLI::App& app, Context& ctx) {
  auto* group = app.add_subcommand("intervene", "Ablation, replacement and scaling plans");
  group->require_subcommand(1);
  add_select(*group, ctx);
  add_top_edge(*group, ctx);
  add_apply(*group, ctx);
  add_eval(*group, ctx);
}

}  // namespace ntopo::cli
