#include "neurotopo_cli/cli.hpp"

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "neurotopo/error.hpp"

namespace ntopo::cli {

namespace fs = std::filesystem;

CLI::App* add_leaf(CLI::App& parent, const std::string& name, const std::string& description,
                   Context& ctx) {
  auto* sub = parent.add_subcommand(name, description);
  sub->add_option("--threads", ctx.threads, "Worker threads (default 1)")->check(CLI::PositiveNumber);
  sub->add_option("--seed", ctx.seed, "Seed for stochastic steps");
  return sub;
}

std::uint64_t require_seed(const Context& ctx, const std::string& what) {
  if (!ctx.seed) throw UsageError(what + " requires --seed");
  return *ctx.seed;
}

namespace {

void write_file(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw DataError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << body;
  if (!f) throw DataError("write failed: " + path.string());
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void write_meta(const Context& ctx, const fs::path& path) {
  json meta;
  meta["tool"] = "neurotopo";
  meta["version"] = NEUROTOPO_VERSION;
  meta["argv"] = ctx.argv;
  meta["started_utc"] = ctx.started_utc;
  meta["elapsed_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.started).count();
  meta["threads"] = ctx.threads;
  write_file(fs::path(path.string() + ".meta.json"), meta.dump(2) + "\n");
}

void write_report(const Context& ctx, const fs::path& path, const std::string& body) {
  write_file(path, body);
  write_meta(ctx, path);
  spdlog::info("wrote {}", path.string());
}

void write_csv_report(const Context& ctx, const fs::path& path, const json& config,
                      const std::string& csv) {
  write_report(ctx, path, "# config=" + config.dump() + "\n" + csv);
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(what + ": " + e.what());
  }
}

namespace {

void configure_logging(const std::string& level_flag) {
  auto logger = spdlog::get("neurotopo");
  if (!logger) {
    logger = spdlog::stderr_logger_mt("neurotopo");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
  }
  std::string level = level_flag;
  if (level.empty()) {
    const char* env = std::getenv("NEUROTOPO_LOG");
    level = env ? env : "warn";
  }
  const auto parsed = spdlog::level::from_str(level);
  // from_str maps unknown names to "off"; only accept an explicit "off".
  if (parsed == spdlog::level::off && level != "off") {
    throw UsageError("unknown log level '" + level + "'");
  }
  spdlog::set_level(parsed);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx;
  ctx.out = &out;
  ctx.err = &err;
  ctx.argv = args;
  ctx.started = std::chrono::steady_clock::now();
  ctx.started_utc = utc_now();

  CLI::App app{"Correlation-graph analysis of neural activations", "neurotopo"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_version_flag("--version", NEUROTOPO_VERSION);
  std::string log_level;
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off (env NEUROTOPO_LOG)");

  add_data_commands(app, ctx);
  add_model_commands(app, ctx);
  add_intervene_commands(app, ctx);

  // Logging must be ready before any subcommand callback runs, so the level
  // flag is picked out ahead of the real parse.
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--log-level" && k + 1 < args.size()) log_level = args[k + 1];
    if (args[k].rfind("--log-level=", 0) == 0) log_level = args[k].substr(12);
  }
  // CLI11 parses the reversed argument list.
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    configure_logging(log_level);
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << NEUROTOPO_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace ntopo::cli
