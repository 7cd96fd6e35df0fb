#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "neurotopo/actdump.hpp"
#include "neurotopo/corrgraph.hpp"
#include "neurotopo/coupling.hpp"
#include "neurotopo/hubs.hpp"
#include "neurotopo/parallel.hpp"
#include "neurotopo/synth.hpp"

namespace ntopo::cli {

namespace fs = std::filesystem;

namespace {

void add_synth(CLI::App& app, Context& ctx) {
  auto* synth = app.add_subcommand("synth", "Synthetic activation datasets");
  synth->require_subcommand(1);
  auto* gen = add_leaf(*synth, "gen", "Generate a planted-structure dataset", ctx);
  struct Opts {
    std::string preset = "classify";
    std::string spec_path;
    std::string out;
    std::optional<std::uint32_t> samples;
  };
  auto o = std::make_shared<Opts>();
  gen->add_option("--preset", o->preset, "classify|regress|coupling|hubs|intervene|null");
  gen->add_option("--spec", o->spec_path, "Spec JSON (overrides --preset)")->check(CLI::ExistingFile);
  gen->add_option("--samples", o->samples, "Override sample_count");
  gen->add_option("--out", o->out, "Output directory")->required();
  gen->callback([&ctx, o] {
    SynthSpec spec = o->spec_path.empty() ? synth_preset(o->preset)
                                          : synth_spec_from_json(read_text(o->spec_path));
    spec.master_seed = require_seed(ctx, "synth gen");
    if (o->samples) spec.sample_count = *o->samples;
    spec.validate();
    spdlog::info("generating {} samples x {} layers", spec.sample_count, spec.layer_count);
    const auto data = generate(spec, ctx.threads);
    const auto manifest = write_dataset(data, o->out, ctx.threads);
    write_meta(ctx, fs::path(o->out) / "manifest.tsv");
    *ctx.out << "wrote " << manifest.records.size() << " records to " << o->out << "\n";
  });
}

struct GraphOpts {
  double sparsity = kDefaultSparsity;
  bool dense = false;
  std::string filter = "all";
  std::string format = "ntgr";
};

CorrelationGraph build_graph(const ActivationRecord& rec, const GraphOpts& g) {
  auto graph = pearson_graph(rec, parse_modality_filter(g.filter));
  if (!g.dense) graph = sparsify_topk(graph, g.sparsity);
  return graph;
}

void save_graph(const CorrelationGraph& graph, const fs::path& path, const std::string& format) {
  if (format == "ntgr") {
    write_graph(graph, path);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  write_edge_list(graph, f);
}

void add_graph(CLI::App& app, Context& ctx) {
  auto* graph = app.add_subcommand("graph", "Neuron correlation graphs");
  graph->require_subcommand(1);
  auto* build = add_leaf(*graph, "build", "Pearson graph of one record or a manifest layer", ctx);
  struct Opts {
    GraphOpts g;
    std::string record;
    std::string manifest;
    std::optional<std::uint32_t> layer;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  auto* rec_opt = build->add_option("--record", o->record, "NTAC record")->check(CLI::ExistingFile);
  auto* man_opt = build->add_option("--manifest", o->manifest, "Dataset manifest")->check(CLI::ExistingFile);
  rec_opt->excludes(man_opt);
  build->add_option("--layer", o->layer, "Layer (manifest mode)");
  build->add_option("--sparsity", o->g.sparsity, "Fraction of pairs kept")->check(CLI::Range(1e-9, 1.0));
  build->add_flag("--dense", o->g.dense, "Keep every pair");
  build->add_option("--filter", o->g.filter, "all|vision|text");
  build->add_option("--format", o->g.format, "ntgr|edges")->check(CLI::IsMember({"ntgr", "edges"}));
  build->add_option("--out", o->out, "Graph file (record) or directory (manifest)")->required();
  build->callback([&ctx, o] {
    if (o->record.empty() == o->manifest.empty()) throw UsageError("give exactly one of --record, --manifest");
    if (!o->record.empty()) {
      const auto graph = build_graph(read_record(o->record), o->g);
      save_graph(graph, o->out, o->g.format);
      write_meta(ctx, o->out);
      *ctx.out << "wrote graph with " << graph.edges.size() << " edges to " << o->out << "\n";
      return;
    }
    if (!o->layer) throw UsageError("--manifest needs --layer");
    const auto manifest = load_manifest(o->manifest);
    const auto entries = manifest.layer_entries(*o->layer);
    if (entries.empty()) throw DataError("no records at layer " + std::to_string(*o->layer));
    const std::string ext = o->g.format == "ntgr" ? ".ntgr" : ".tsv";
    std::error_code ec;
    fs::create_directories(o->out, ec);
    if (ec) throw DataError("cannot create " + o->out + ": " + ec.message());
    std::vector<json> rows(entries.size());
    parallel_for(entries.size(), ctx.threads, [&](std::size_t k) {
      const auto& e = *entries[k];
      const auto graph = build_graph(load_entry(e), o->g);
      const std::string name = e.sample_id + "_L" + std::to_string(e.layer_index) + ext;
      save_graph(graph, fs::path(o->out) / name, o->g.format);
      rows[k] = json{{"sample_id", e.sample_id}, {"file", name}, {"nodes", graph.node_count},
                     {"edges", graph.edges.size()}};
    });
    json index;
    index["schema"] = 1;
    index["config"] = {{"layer", *o->layer}, {"sparsity", o->g.dense ? 1.0 : o->g.sparsity},
                       {"dense", o->g.dense}, {"filter", o->g.filter}, {"format", o->g.format}};
    index["graphs"] = rows;
    write_report(ctx, fs::path(o->out) / "graphs.json", index.dump(2) + "\n");
    *ctx.out << "wrote " << rows.size() << " graphs to " << o->out << "\n";
  });
}

void add_coupling(CLI::App& app, Context& ctx) {
  auto* coupling = app.add_subcommand("coupling", "Token-modality coupling");
  coupling->require_subcommand(1);
  auto* curve = add_leaf(*coupling, "curve", "Per-layer vision/text coupling means", ctx);
  struct Opts {
    std::string manifest, out;
    std::optional<std::uint32_t> first, last;
  };
  auto o = std::make_shared<Opts>();
  curve->add_option("--manifest", o->manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  curve->add_option("--first-layer", o->first, "First layer (default 0)");
  curve->add_option("--last-layer", o->last, "Last layer (default: deepest)");
  curve->add_option("--out", o->out, "CSV report")->required();
  curve->callback([&ctx, o] {
    const auto manifest = load_manifest(o->manifest);
    const auto report = coupling_curve(manifest, o->first, o->last, ctx.threads);
    std::ostringstream csv;
    write_coupling_csv(report, csv);
    json cfg{{"command", "coupling curve"},
             {"first_layer", o->first ? json(*o->first) : json(nullptr)},
             {"last_layer", o->last ? json(*o->last) : json(nullptr)},
             {"samples", report.sample_count}};
    write_csv_report(ctx, o->out, cfg, csv.str());
    *ctx.out << "wrote " << report.layers.size() << " layers to " << o->out << "\n";
  });
}

struct HubFlags {
  std::string definition = "graph";
  double k_percent = 1.0;
  double sparsity = kDefaultSparsity;
  bool dense = false;
};

void bind_hub_flags(CLI::App* sub, HubFlags& h) {
  sub->add_option("--definition", h.definition, "graph|graph-vision|graph-text|activation|random");
  sub->add_option("--k-percent", h.k_percent, "Hub fraction in percent")->check(CLI::Range(1e-9, 100.0));
  sub->add_option("--sparsity", h.sparsity, "Graph sparsity")->check(CLI::Range(1e-9, 1.0));
  sub->add_flag("--dense", h.dense, "Rank degrees on the dense graph");
}

HubOptions hub_options(const HubFlags& h, const Context& ctx) {
  HubOptions opts;
  opts.definition = parse_hub_definition(h.definition);
  opts.k_percent = h.k_percent;
  opts.sparsity = h.sparsity;
  opts.dense = h.dense;
  if (opts.definition == HubDefinition::Random) opts.seed = require_seed(ctx, "random hubs");
  return opts;
}

json hub_config(const HubOptions& opts, const char* command) {
  return json{{"command", command},
              {"definition", to_string(opts.definition)},
              {"k_percent", opts.k_percent},
              {"sparsity", opts.dense ? 1.0 : opts.sparsity},
              {"seed", opts.definition == HubDefinition::Random ? json(opts.seed) : json(nullptr)}};
}

void add_hubs(CLI::App& app, Context& ctx) {
  auto* hubs = app.add_subcommand("hubs", "Hub neurons and their recurrence");
  hubs->require_subcommand(1);

  auto* recur = add_leaf(*hubs, "recur", "Per-neuron hub recurrence at one layer", ctx);
  struct RecurOpts {
    HubFlags h;
    std::string manifest, out, membership;
    std::uint32_t layer = 0;
  };
  auto r = std::make_shared<RecurOpts>();
  recur->add_option("--manifest", r->manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  recur->add_option("--layer", r->layer, "Layer")->required();
  bind_hub_flags(recur, r->h);
  recur->add_option("--membership", r->membership, "Also write per-sample hub sets (CSV)");
  recur->add_option("--out", r->out, "Recurrence CSV")->required();
  recur->callback([&ctx, r] {
    const auto opts = hub_options(r->h, ctx);
    const auto manifest = load_manifest(r->manifest);
    const auto sets = layer_hub_sets(manifest, r->layer, opts, ctx.threads);
    if (sets.empty()) throw DataError("no records at layer " + std::to_string(r->layer));
    const RecurrenceProfile profile = recurrence(sets);
    auto cfg = hub_config(opts, "hubs recur");
    cfg["layer"] = r->layer;
    std::ostringstream csv;
    write_recurrence_csv(std::span<const RecurrenceProfile>(&profile, 1), csv);
    write_csv_report(ctx, r->out, cfg, csv.str());
    if (!r->membership.empty()) {
      std::ostringstream m;
      write_membership_csv(sets, m);
      write_csv_report(ctx, r->membership, cfg, m.str());
    }
    *ctx.out << "mean recurrence " << profile.mean_nonzero() << " over " << sets.size() << " samples\n";
  });

  auto* stability = add_leaf(*hubs, "stability", "Hub recurrence summary per layer", ctx);
  struct StabOpts {
    HubFlags h;
    std::string manifest, out, recurrence;
    std::optional<std::uint32_t> first, last;
  };
  auto s = std::make_shared<StabOpts>();
  stability->add_option("--manifest", s->manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  stability->add_option("--first-layer", s->first, "First layer");
  stability->add_option("--last-layer", s->last, "Last layer");
  bind_hub_flags(stability, s->h);
  stability->add_option("--recurrence", s->recurrence, "Also write per-neuron recurrence (CSV)");
  stability->add_option("--out", s->out, "Summary CSV")->required();
  stability->callback([&ctx, s] {
    const auto opts = hub_options(s->h, ctx);
    const auto manifest = load_manifest(s->manifest);
    const auto profiles = stability_by_layer(manifest, opts, s->first, s->last, ctx.threads);
    std::ostringstream csv;
    csv << "layer,definition,samples,mean_pi,max_pi\n";
    char buf[64];
    for (const auto& p : profiles) {
      csv << p.layer_index << ',' << to_string(p.definition) << ',' << p.sample_count;
      std::snprintf(buf, sizeof buf, ",%.10g,%.10g\n", p.mean_nonzero(), p.max());
      csv << buf;
    }
    const auto cfg = hub_config(opts, "hubs stability");
    write_csv_report(ctx, s->out, cfg, csv.str());
    if (!s->recurrence.empty()) {
      std::ostringstream full;
      write_recurrence_csv(profiles, full);
      write_csv_report(ctx, s->recurrence, cfg, full.str());
    }
    *ctx.out << "wrote " << profiles.size() << " layers to " << s->out << "\n";
  });
}

}  // namespace

void add_data_commands(CLI::App& app, Context& ctx) {
  add_synth(app, ctx);
  add_graph(app, ctx);
  add_coupling(app, ctx);
  add_hubs(app, ctx);
}

}  // namespace ntopo::cli
