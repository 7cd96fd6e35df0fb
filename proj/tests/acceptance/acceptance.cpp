// End-to-end acceptance checks on planted synthetic data.  Prints one
// PASS/FAIL line per criterion and exits non-zero if any fails.
//
//   neurotopo_acceptance [criterion ...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "neurotopo/align.hpp"
#include "neurotopo/corrgraph.hpp"
#include "neurotopo/coupling.hpp"
#include "neurotopo/hubs.hpp"
#include "neurotopo/intervene.hpp"
#include "neurotopo/metrics.hpp"
#include "neurotopo/probe.hpp"
#include "neurotopo/synth.hpp"
#include "neurotopo_cli/cli.hpp"
#include "support.hpp"

using namespace ntopo;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 7;

// Tolerances and budgets.
constexpr double kCorrTolerance = 1e-5;
constexpr double kCorrBudget = 5;
constexpr double kGradBudget = 30;
constexpr double kProbeMinAccuracy = 0.95;
constexpr double kProbeMinMargin = 0.05;
constexpr double kShuffleSigmas = 3;
constexpr double kProbeBudget = 180;
constexpr double kRegressMinR2 = 0.9;
constexpr double kRegressBudget = 180;
constexpr double kSparsityMaxSpread = 0.05;
constexpr double kSparsityBudget = 600;
constexpr double kCouplingVvBand = 0.05;
constexpr double kCouplingBudget = 60;
constexpr double kHubMinPlantedPi = 0.9;
constexpr double kNullMaxPi = 0.3;
constexpr double kHubBudget = 120;
constexpr double kAblationMinGap = 0.10;
constexpr double kIdenticalBand = 0.03;
constexpr double kInterveneBudget = 300;
constexpr double kSelfMinGauc = 0.99;
constexpr double kNoiseGaucLow = 0.45, kNoiseGaucHigh = 0.55;
constexpr double kInfoNceTolerance = 1e-10;
constexpr double kAlignBudget = 120;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

double accuracy(const EvalReport& r) { return r.classification->accuracy; }

// 1 ----------------------------------------------------------------------
Outcome correlation_oracle() {
  Clock clock;
  RandomStream shapes(kSeed, 1);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = static_cast<std::uint32_t>(2 + shapes.below(7));
    const auto n = static_cast<std::uint32_t>(2 + shapes.below(15));
    const auto rec = test::random_record(d, n, kSeed, 100 + trial);
    std::vector<std::uint32_t> cols(n);
    for (std::uint32_t t = 0; t < n; ++t) cols[t] = t;
    const auto g = pearson_graph(rec);
    for (const auto& e : g.edges)
      worst = std::max(worst, std::fabs(e.weight - test::pearson_oracle(rec, e.i, e.j, cols)));
  }
  const double t = clock.seconds();
  return {worst <= kCorrTolerance && t < kCorrBudget, fmt("max|delta|=%.2e over 200 records", worst) +
                                                          fmt(" (%.2fs)", t)};
}

// 2 ----------------------------------------------------------------------
Outcome sparsification_exactness() {
  RandomStream shapes(kSeed, 2);
  int mismatches = 0, checks = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = static_cast<std::uint32_t>(2 + shapes.below(15));
    const auto dense = pearson_graph(test::random_record(d, 12, kSeed, 300 + trial));
    for (double k : {0.05, 0.2, 0.5, 1.0}) {
      ++checks;
      if (test::edge_set(sparsify_topk(dense, k)) != test::sorted_prefix(dense, k)) ++mismatches;
    }
  }
  return {mismatches == 0, fmt("%d/%d graph-k pairs match the sorted prefix", checks - mismatches, checks)};
}

// 3 ----------------------------------------------------------------------
Outcome gradient_check() {
  Clock clock;
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto in = test::draw_instance(trial);
    worst = std::max(worst, test::probe_gradient_error(in, false, trial));
    worst = std::max(worst, test::probe_gradient_error(in, true, trial));
    worst = std::max(worst, test::alignment_gradient_error(trial));
  }
  const double t = clock.seconds();
  return {worst <= test::kFdTolerance && t < kGradBudget,
          fmt("max relative error %.2e over 50 instances (%.2fs)", worst, t)};
}

// 4 ----------------------------------------------------------------------
ProbeConfig classify_config(ProbeKind kind, double k) {
  ProbeConfig cfg;
  cfg.kind = kind;
  cfg.sparsity = k;
  cfg.seed = kSeed;
  return cfg;
}

double train_accuracy(const std::vector<ActivationRecord>& recs, const ProbeConfig& cfg) {
  const auto samples = build_samples(recs, cfg);
  const auto split = split_indices(samples.size(), kSeed, cfg.train_fraction);
  return accuracy(train_probe(samples, cfg, split).report);
}

Outcome planted_probe() {
  Clock clock;
  auto spec = synth_preset("classify");
  spec.master_seed = kSeed;
  const auto recs = generate(spec).layer(0);
  const double gcn = train_accuracy(recs, classify_config(ProbeKind::Gcn, kDefaultSparsity));
  const double lin = train_accuracy(recs, classify_config(ProbeKind::Linear, kDefaultSparsity));
  auto shuffled_cfg = classify_config(ProbeKind::Gcn, kDefaultSparsity);
  shuffled_cfg.label_shuffle_seed = 99;
  // The control reports its last epoch so it cannot pick an epoch by test score.
  shuffled_cfg.report_last_epoch = true;
  const double shuffled = train_accuracy(recs, shuffled_cfg);
  const auto test_n = split_indices(spec.sample_count, kSeed, 0.8).test.size();
  const double sigma = std::sqrt(0.25 / static_cast<double>(test_n));
  const double t = clock.seconds();
  const bool pass = gcn >= kProbeMinAccuracy && gcn - lin >= kProbeMinMargin &&
                    std::fabs(shuffled - 0.5) <= kShuffleSigmas * sigma && t < kProbeBudget;
  return {pass, fmt("gcn=%.3f linear=%.3f shuffled=%.3f (band 0.5+-%.3f) (%.1fs)", gcn, lin, shuffled,
                    kShuffleSigmas * sigma, t)};
}

// 5 ----------------------------------------------------------------------
Outcome planted_regression() {
  Clock clock;
  auto spec = synth_preset("regress");
  spec.master_seed = kSeed;
  const auto recs = generate(spec).layer(0);
  RegressionMetrics m[2];
  for (auto kind : {ProbeKind::Gcn, ProbeKind::Linear}) {
    ProbeConfig cfg;
    cfg.kind = kind;
    cfg.task = TaskKind::Regress;
    cfg.seed = kSeed;
    cfg.learning_rate = 3e-3;
    cfg.epochs = 100;
    const auto samples = build_samples(recs, cfg);
    const auto split = split_indices(samples.size(), kSeed, cfg.train_fraction);
    m[kind == ProbeKind::Gcn ? 0 : 1] = *train_probe(samples, cfg, split).report.regression;
  }
  const double t = clock.seconds();
  const double r2 = m[0].r2.value_or(-1);
  const bool pass = r2 >= kRegressMinR2 && m[0].mse < m[1].mse && t < kRegressBudget;
  return {pass, fmt("gcn R2=%.3f mse=%.3f, linear mse=%.3f (%.1fs)", r2, m[0].mse, m[1].mse, t)};
}

// 6 ----------------------------------------------------------------------
Outcome sparsity_stability() {
  Clock clock;
  auto spec = synth_preset("classify");
  spec.master_seed = kSeed;
  const auto recs = generate(spec).layer(0);
  double lo = 1, hi = 0;
  std::string accs;
  for (double k : {0.01, 0.05, 0.10, 0.20}) {
    const double a = train_accuracy(recs, classify_config(ProbeKind::Gcn, k));
    lo = std::min(lo, a);
    hi = std::max(hi, a);
    accs += fmt("%s%.3f", accs.empty() ? "" : "/", a);
  }
  const double t = clock.seconds();
  return {hi - lo <= kSparsityMaxSpread && t < kSparsityBudget,
          fmt("accuracy %s at k=0.01/0.05/0.10/0.20, spread %.3f (%.1fs)", accs.c_str(), hi - lo, t)};
}

// 7 ----------------------------------------------------------------------
Outcome coupling_ramp() {
  Clock clock;
  auto spec = synth_preset("coupling");
  spec.master_seed = kSeed;
  const auto data = generate(spec);
  std::vector<double> vt, vv, layers;
  for (std::uint32_t l = 0; l < spec.layer_count; ++l) {
    std::vector<ModalityCoupling> cs;
    for (const auto& r : data.layer(l)) cs.push_back(modality_coupling(r));
    const auto row = aggregate_coupling(l, cs);
    vt.push_back(*row.mu_vt);
    vv.push_back(*row.mu_vv);
    layers.push_back(l);
  }
  const double rho = spearman(layers, vt).value_or(0);
  double drift = 0;
  for (double v : vv) drift = std::max(drift, std::fabs(v - vv[0]));
  const double t = clock.seconds();
  std::string vts;
  for (double v : vt) vts += fmt("%s%.3f", vts.empty() ? "" : " ", v);
  return {rho == 1.0 && drift <= kCouplingVvBand && t < kCouplingBudget,
          fmt("mu_vt [%s] rho=%.2f, mu_vv drift %.4f (%.1fs)", vts.c_str(), rho, drift, t)};
}

// 8 ----------------------------------------------------------------------
Outcome hub_recurrence() {
  Clock clock;
  auto spec = synth_preset("hubs");
  spec.master_seed = kSeed;
  const auto recs = generate(spec).layer(0);
  std::map<HubDefinition, RecurrenceProfile> profiles;
  for (auto def : {HubDefinition::Graph, HubDefinition::Activation, HubDefinition::Random}) {
    HubOptions opts;
    opts.definition = def;
    opts.seed = kSeed;
    std::vector<HubSet> sets;
    for (const auto& r : recs) sets.push_back(hub_set(r, opts));
    profiles[def] = recurrence(sets);
  }
  const double planted = profiles[HubDefinition::Graph].mean_over(spec.planted_hub_indices);
  const double deg = profiles[HubDefinition::Graph].mean_nonzero();
  const double act = profiles[HubDefinition::Activation].mean_nonzero();
  const double rnd = profiles[HubDefinition::Random].mean_nonzero();

  auto null_spec = synth_preset("null");
  null_spec.master_seed = kSeed;
  null_spec.sample_count = 100;
  std::vector<HubSet> null_sets;
  for (const auto& r : generate(null_spec).layer(0)) null_sets.push_back(hub_set(r, HubOptions{}));
  const double null_max = recurrence(null_sets).max();
  const double t = clock.seconds();
  const bool pass = planted >= kHubMinPlantedPi && deg > act && deg > rnd && null_max <= kNullMaxPi &&
                    t < kHubBudget;
  return {pass, fmt("planted pi=%.3f; mean pi degree=%.3f activation=%.3f random=%.3f; null max pi=%.3f (%.1fs)",
                    planted, deg, act, rnd, null_max, t)};
}

// 9 ----------------------------------------------------------------------
Outcome intervention_ordering() {
  Clock clock;
  auto spec = synth_preset("intervene");
  spec.master_seed = kSeed;
  const auto recs = generate(spec).layer(0);
  ProbeConfig cfg;
  cfg.seed = kSeed;
  cfg.adjacency = AdjacencyMode::Signed;
  const auto samples = build_samples(recs, cfg);
  const auto split = split_indices(samples.size(), kSeed, cfg.train_fraction);
  const auto trained = train_probe(samples, cfg, split);
  const auto eval = [&](const std::vector<ActivationRecord>& rs) {
    return accuracy(evaluate_probe(trained.model, build_samples(rs, cfg), split.test));
  };
  const double base = eval(recs);

  constexpr double kAblatePercent = 12.5;
  std::vector<InterventionPlan> by_degree, by_random;
  for (const auto& r : recs) {
    by_degree.push_back(select_ablation_targets(r, SelectionCriterion::Degree, kAblatePercent));
    by_random.push_back(select_ablation_targets(r, SelectionCriterion::Random, kAblatePercent,
                                                kDefaultSparsity, 99));
  }
  const double a_deg = eval(apply_all(by_degree, recs));
  const double a_rnd = eval(apply_all(by_random, recs));

  const auto [i, j] = top_edge(recs);
  double replaced[3] = {0, 0, 0};
  for (auto mode : {ReplaceMode::Identical, ReplaceMode::Opposite, ReplaceMode::Random}) {
    // RANDOM replacement is averaged over a few draws.
    const int draws = mode == ReplaceMode::Random ? 5 : 1;
    for (int q = 0; q < draws; ++q) {
      InterventionPlan p;
      p.directives.push_back(ReplaceDirective{j, i, mode, static_cast<std::uint64_t>(q + 1)});
      const std::vector<InterventionPlan> plans{p};
      replaced[static_cast<int>(mode)] += eval(apply_all(plans, recs)) / draws;
    }
  }
  const double id = replaced[0], opp = replaced[1], rnd = replaced[2];
  const double gap = (base - a_deg) - (base - a_rnd);
  const double t = clock.seconds();
  const bool pass = gap >= kAblationMinGap && opp <= rnd && rnd <= id && std::fabs(id - base) <= kIdenticalBand &&
                    t < kInterveneBudget;
  return {pass, fmt("base=%.3f ablate degree=%.3f random=%.3f (gap %.3f); edge (%u,%u) identical=%.3f "
                    "random=%.3f opposite=%.3f (%.1fs)",
                    base, a_deg, a_rnd, gap, i, j, id, rnd, opp, t)};
}

// 10 ---------------------------------------------------------------------
Outcome alignment_sanity() {
  Clock clock;
  RandomStream rng(kSeed, 10);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto b = 1 + rng.below(16), d = 1 + rng.below(32);
    const double tau = 0.05 + rng.uniform();
    const auto o = test::random_tensor(b, d, rng), g = test::random_tensor(b, d, rng);
    // double loop over the cosine matrix
    double row_loss = 0, col_loss = 0;
    std::vector<double> s(b * b);
    for (std::size_t p = 0; p < b; ++p)
      for (std::size_t q = 0; q < b; ++q)
        s[p * b + q] = dot(o.row(p), g.row(q)) / std::sqrt(dot(o.row(p), o.row(p)) * dot(g.row(q), g.row(q))) / tau;
    for (std::size_t p = 0; p < b; ++p) {
      double rs = 0, cs = 0;
      for (std::size_t q = 0; q < b; ++q) rs += std::exp(s[p * b + q]), cs += std::exp(s[q * b + p]);
      row_loss -= std::log(std::exp(s[p * b + p]) / rs);
      col_loss -= std::log(std::exp(s[p * b + p]) / cs);
    }
    worst = std::max(worst, std::fabs(infonce(o, g, tau).loss - 0.5 * (row_loss + col_loss) / b));
  }

  auto spec = synth_preset("classify");
  spec.master_seed = kSeed;
  const auto recs = generate(spec).layer(0);
  AlignConfig cfg;
  cfg.seed = kSeed;
  const auto pairs = signature_pairs(recs, recs, cfg);
  const double self = train_alignment(pairs, cfg, split_indices(pairs.omega.rows(), kSeed, 0.8)).report.test_gauc;

  constexpr std::size_t kNoisePairs = 2000;
  SignaturePairs noise;
  noise.omega = Tensor2(kNoisePairs, pairs.omega.cols());
  noise.gamma = Tensor2(kNoisePairs, pairs.gamma.cols());
  RandomStream ro(kSeed, 11), rg(kSeed, 12);
  for (auto& v : noise.omega.data()) v = ro.normal();
  for (auto& v : noise.gamma.data()) v = rg.normal();
  const double noisy = train_alignment(noise, cfg, split_indices(kNoisePairs, kSeed, 0.8)).report.test_gauc;
  const double t = clock.seconds();
  const bool pass = worst <= kInfoNceTolerance && self >= kSelfMinGauc && noisy >= kNoiseGaucLow &&
                    noisy <= kNoiseGaucHigh && t < kAlignBudget;
  return {pass, fmt("self GAUC=%.4f, noise GAUC=%.4f (%zu pairs), infonce max|delta|=%.1e (%.1fs)", self, noisy,
                    kNoisePairs, worst, t)};
}

// 11 ---------------------------------------------------------------------
std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), root).string();
    if (rel.size() > 10 && rel.ends_with(".meta.json")) continue;  // timestamps and timings
    std::ifstream f(entry.path(), std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    files[rel] = ss.str();
  }
  return files;
}

Outcome cli_determinism() {
  const auto root = fs::temp_directory_path() / ("ntopo_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::map<std::string, std::string> trees[2];
  std::string failure;
  for (int rep = 0; rep < 2 && failure.empty(); ++rep) {
    const auto base = root / ("run" + std::to_string(rep));
    const auto p = [&](const std::string& name) { return (base / name).string(); };
    const auto m = p("data/manifest.tsv");
    const std::vector<std::vector<std::string>> steps = {
        {"synth", "gen", "--preset", "classify", "--samples", "60", "--out", p("data"), "--seed", "7"},
        {"graph", "build", "--manifest", m, "--layer", "0", "--out", p("graphs")},
        {"coupling", "curve", "--manifest", m, "--out", p("coupling.csv")},
        {"hubs", "recur", "--manifest", m, "--layer", "0", "--definition", "random", "--out", p("hubs.csv"),
         "--seed", "3"},
        {"probe", "train", "--manifest", m, "--epochs", "10", "--out", p("train.json"), "--model", p("probe.ntpm"),
         "--seed", "7"},
        {"intervene", "select", "--manifest", m, "--layer", "0", "--criterion", "degree", "--out", p("plan.json")},
        {"intervene", "apply", "--plan", p("plan.json"), "--manifest", m, "--out", p("ablated")},
        {"probe", "eval", "--model", p("probe.ntpm"), "--manifest", p("ablated/manifest.tsv"), "--out",
         p("eval.json")},
        {"align", "train", "--omega", m, "--gamma", m, "--epochs", "5", "--out", p("align.ntpm"), "--report",
         p("align.json"), "--seed", "7"},
    };
    for (auto args : steps) {
      args.push_back("--threads");
      args.push_back("1");
      std::ostringstream out, err;
      if (cli::run(args, out, err) != cli::kExitOk) {
        failure = args[0] + " " + args[1] + ": " + err.str();
        break;
      }
    }
    if (failure.empty()) trees[rep] = tree_contents(base);
  }
  fs::remove_all(root);
  if (!failure.empty()) return {false, "pipeline failed: " + failure};
  std::size_t same = 0;
  for (const auto& [name, body] : trees[0]) {
    auto it = trees[1].find(name);
    if (it != trees[1].end() && it->second == body) ++same;
  }
  const bool pass = same == trees[0].size() && trees[0].size() == trees[1].size() && same > 0;
  return {pass, fmt("%zu/%zu output files byte-identical across reruns", same, trees[0].size())};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "correlation-oracle", correlation_oracle},
      {2, "sparsification-exactness", sparsification_exactness},
      {3, "gradient-check", gradient_check},
      {4, "planted-probe", planted_probe},
      {5, "planted-regression", planted_regression},
      {6, "sparsity-stability", sparsity_stability},
      {7, "coupling-ramp", coupling_ramp},
      {8, "hub-recurrence", hub_recurrence},
      {9, "intervention-ordering", intervention_ordering},
      {10, "alignment-sanity", alignment_sanity},
      {11, "cli-determinism", cli_determinism},
  };
  std::set<int> wanted;
  for (int a = 1; a < argc; ++a) wanted.insert(std::atoi(argv[a]));
  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %-26s %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
