#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace ntopo::cli {

using nlohmann::json;

/// Bad flag combination detected after parsing; exits with the usage code.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Context {
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
  std::vector<std::string> argv;
  std::chrono::steady_clock::time_point started;
  std::string started_utc;

  // Per-leaf common flags, bound by add_leaf.
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;
};

/// Subcommand with the shared --threads and --seed flags.
CLI::App* add_leaf(CLI::App& parent, const std::string& name, const std::string& description,
                   Context& ctx);

std::uint64_t require_seed(const Context& ctx, const std::string& what);

/// Writes `body` to `path` (creating parent directories) and a
/// `<path>.meta.json` sidecar with the run's timestamp, argv and timing.
void write_report(const Context& ctx, const std::filesystem::path& path, const std::string& body);
/// CSV reports start with a "# config=<json>" line.
void write_csv_report(const Context& ctx, const std::filesystem::path& path, const json& config,
                      const std::string& csv);
void write_meta(const Context& ctx, const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
json parse_json_text(const std::string& text, const std::string& what);

void add_data_commands(CLI::App& app, Context& ctx);
void add_model_commands(CLI::App& app, Context& ctx);
void add_intervene_commands(CLI::App& app, Context& ctx);

}  // namespace ntopo::cli
