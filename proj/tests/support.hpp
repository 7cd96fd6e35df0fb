#pragma once
// Shared fixtures: random records, scratch directories, brute-force oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "neurotopo/actdump.hpp"
#include "neurotopo/corrgraph.hpp"
#include "neurotopo/philox.hpp"

namespace ntopo::test {

inline ActivationRecord random_record(std::uint32_t d, std::uint32_t n, std::uint64_t seed,
                                      std::uint64_t stream = 0, const std::string& id = "r") {
  RandomStream rng(seed, stream);
  ActivationRecord rec(id, 0, d, n);
  for (auto& v : rec.values) v = static_cast<float>(rng.normal());
  for (std::uint32_t t = 0; t < n; ++t) rec.modality[t] = t % 2 ? Modality::Text : Modality::Vision;
  return rec;
}

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ntopo_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Textbook two-pass Pearson over the columns listed in `cols`; 0 when either
/// row is constant.
inline double pearson_oracle(const ActivationRecord& rec, std::uint32_t a, std::uint32_t b,
                             const std::vector<std::uint32_t>& cols) {
  double ma = 0, mb = 0;
  for (auto t : cols) {
    ma += rec.at(a, t);
    mb += rec.at(b, t);
  }
  ma /= cols.size();
  mb /= cols.size();
  double sab = 0, saa = 0, sbb = 0;
  for (auto t : cols) {
    const double x = rec.at(a, t) - ma, y = rec.at(b, t) - mb;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

using EdgeKey = std::tuple<std::uint32_t, std::uint32_t, float>;

inline std::set<EdgeKey> edge_set(const CorrelationGraph& g) {
  std::set<EdgeKey> s;
  for (const auto& e : g.edges) s.insert({e.i, e.j, e.weight});
  return s;
}

/// Sorts every pair by |w| descending then (i, j) and keeps the prefix.
inline std::set<EdgeKey> sorted_prefix(const CorrelationGraph& dense, double k) {
  auto edges = dense.edges;
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    const float wa = std::fabs(a.weight), wb = std::fabs(b.weight);
    if (wa != wb) return wa > wb;
    return std::tie(a.i, a.j) < std::tie(b.i, b.j);
  });
  const std::uint64_t p = dense.pair_count();
  std::uint64_t keep = static_cast<std::uint64_t>(std::floor(k * static_cast<double>(p) + 0.5));
  keep = std::clamp<std::uint64_t>(keep, 1, p);
  std::set<EdgeKey> s;
  for (std::uint64_t e = 0; e < keep; ++e) s.insert({edges[e].i, edges[e].j, edges[e].weight});
  return s;
}

}  // namespace ntopo::test
