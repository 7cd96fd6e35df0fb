#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "neurotopo/actdump.hpp"

namespace ntopo {

enum class ModalityFilter { All, Vision, Text };

const char* to_string(ModalityFilter filter) noexcept;
ModalityFilter parse_modality_filter(std::string_view text);

struct Edge {
  std::uint32_t i = 0;  // i < j
  std::uint32_t j = 0;
  float weight = 0.0f;  // in [-1, 1]

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Undirected neuron correlation graph; each unordered pair is stored once,
/// edges sorted by (i, j), no self-edges.
struct CorrelationGraph {
  std::uint32_t node_count = 0;
  std::vector<Edge> edges;
  double density = 1.0;
  std::vector<bool> zero_variance;

  std::uint64_t pair_count() const noexcept {
    return static_cast<std::uint64_t>(node_count) * (node_count - (node_count > 0)) / 2;
  }
  bool is_dense() const noexcept { return edges.size() == pair_count(); }

  friend bool operator==(const CorrelationGraph&, const CorrelationGraph&) = default;
};

inline constexpr double kDefaultSparsity = 0.05;

/// Pearson correlation between neuron rows, over the token columns selected by
/// `filter`.  Zero-variance rows get weight 0 to every partner and are flagged.
/// Throws std::invalid_argument when fewer than two tokens survive the filter.
CorrelationGraph pearson_graph(const ActivationRecord& record,
                               ModalityFilter filter = ModalityFilter::All);

/// Number of edges kept by sparsify_topk: max(1, floor(k * P + 0.5)), capped at P.
std::uint64_t retained_edge_count(std::uint32_t node_count, double k);

/// Keeps the top-k fraction of pairs by |weight|; ties favour smaller (i, j).
CorrelationGraph sparsify_topk(const CorrelationGraph& graph, double k);

/// d_i = sum of |w| over edges incident to i.
std::vector<double> degree_vector(const CorrelationGraph& graph);

/// Text edge list: header "d=<d> density=<rho>", then "i<TAB>j<TAB>weight" lines.
void write_edge_list(const CorrelationGraph& graph, std::ostream& out);
CorrelationGraph read_edge_list(std::istream& in);

/// Binary twin ("NTGR" v1): u32 d | f64 density | d x u8 zero-variance flags |
/// u64 edge count | (u32 i, u32 j, f32 w) per edge | u32 CRC-32.
std::vector<std::uint8_t> encode_graph(const CorrelationGraph& graph);
CorrelationGraph decode_graph(std::span<const std::uint8_t> bytes);
void write_graph(const CorrelationGraph& graph, const std::filesystem::path& path);
CorrelationGraph read_graph(const std::filesystem::path& path);

}  // namespace ntopo
