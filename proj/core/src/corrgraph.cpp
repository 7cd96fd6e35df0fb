#include "neurotopo/corrgraph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"

namespace ntopo {

namespace {

constexpr std::uint8_t kGraphMagic[4] = {'N', 'T', 'G', 'R'};
constexpr std::uint16_t kGraphVersion = 1;

struct TruncatedInput {};

bool keep_column(Modality m, ModalityFilter filter) {
  switch (filter) {
    case ModalityFilter::All: return true;
    case ModalityFilter::Vision: return m == Modality::Vision;
    case ModalityFilter::Text: return m == Modality::Text;
  }
  return false;
}

}  // namespace

const char* to_string(ModalityFilter filter) noexcept {
  switch (filter) {
    case ModalityFilter::All: return "all";
    case ModalityFilter::Vision: return "vision";
    case ModalityFilter::Text: return "text";
  }
  return "all";
}

ModalityFilter parse_modality_filter(std::string_view text) {
  if (text == "all") return ModalityFilter::All;
  if (text == "vision") return ModalityFilter::Vision;
  if (text == "text") return ModalityFilter::Text;
  throw std::invalid_argument("unknown modality filter '" + std::string(text) + "'");
}

CorrelationGraph pearson_graph(const ActivationRecord& record, ModalityFilter filter) {
  std::vector<std::uint32_t> columns;
  for (std::uint32_t t = 0; t < record.tokens; ++t) {
    if (keep_column(record.modality[t], filter)) columns.push_back(t);
  }
  if (columns.size() < 2) {
    throw std::invalid_argument(std::string("pearson_graph: fewer than 2 tokens after '") +
                                to_string(filter) + "' filter");
  }
  const std::uint32_t d = record.neurons;
  const std::size_t n = columns.size();

  // Centered, unit-norm rows in double precision.
  std::vector<double> unit(static_cast<std::size_t>(d) * n);
  CorrelationGraph graph;
  graph.node_count = d;
  graph.density = 1.0;
  graph.zero_variance.assign(d, false);
  for (std::uint32_t i = 0; i < d; ++i) {
    const auto row = record.row(i);
    double* out = unit.data() + static_cast<std::size_t>(i) * n;
    double sum = 0.0;
    bool constant = true;
    const float first = row[columns[0]];
    for (std::size_t c = 0; c < n; ++c) {
      const float v = row[columns[c]];
      out[c] = v;
      sum += v;
      constant = constant && v == first;
    }
    const double mean = sum / static_cast<double>(n);
    double norm2 = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      out[c] -= mean;
      norm2 += out[c] * out[c];
    }
    if (constant || !(norm2 > 0.0)) {
      graph.zero_variance[i] = true;
      std::fill(out, out + n, 0.0);
      continue;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t c = 0; c < n; ++c) out[c] *= inv;
  }

  graph.edges.reserve(graph.pair_count());
  for (std::uint32_t i = 0; i < d; ++i) {
    const double* a = unit.data() + static_cast<std::size_t>(i) * n;
    for (std::uint32_t j = i + 1; j < d; ++j) {
      double w = 0.0;
      if (!graph.zero_variance[i] && !graph.zero_variance[j]) {
        const double* b = unit.data() + static_cast<std::size_t>(j) * n;
        for (std::size_t c = 0; c < n; ++c) w += a[c] * b[c];
        w = std::clamp(w, -1.0, 1.0);
      }
      graph.edges.push_back({i, j, static_cast<float>(w)});
    }
  }
  return graph;
}

std::uint64_t retained_edge_count(std::uint32_t node_count, double k) {
  if (!(k > 0.0) || k > 1.0) {
    throw std::invalid_argument("sparsity k must lie in (0, 1]");
  }
  const std::uint64_t pairs = static_cast<std::uint64_t>(node_count) *
                              (node_count > 0 ? node_count - 1 : 0) / 2;
  const auto m = static_cast<std::uint64_t>(std::floor(k * static_cast<double>(pairs) + 0.5));
  return std::min<std::uint64_t>(pairs, std::max<std::uint64_t>(1, m));
}

CorrelationGraph sparsify_topk(const CorrelationGraph& graph, double k) {
  const std::uint64_t keep = retained_edge_count(graph.node_count, k);
  if (!graph.is_dense()) {
    throw std::invalid_argument("sparsify_topk expects a dense graph");
  }
  CorrelationGraph out;
  out.node_count = graph.node_count;
  out.zero_variance = graph.zero_variance;
  const std::uint64_t pairs = graph.pair_count();
  out.density = pairs == 0 ? 1.0 : static_cast<double>(keep) / static_cast<double>(pairs);
  if (keep == pairs) {
    out.edges = graph.edges;
    return out;
  }

  std::vector<std::uint32_t> order(graph.edges.size());
  std::iota(order.begin(), order.end(), 0u);
  const auto stronger = [&](std::uint32_t a, std::uint32_t b) {
    const Edge& ea = graph.edges[a];
    const Edge& eb = graph.edges[b];
    const float wa = std::fabs(ea.weight);
    const float wb = std::fabs(eb.weight);
    if (wa != wb) return wa > wb;
    if (ea.i != eb.i) return ea.i < eb.i;
    return ea.j < eb.j;
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                   order.end(), stronger);
  order.resize(keep);
  // Edges are stored in (i, j) order, which is index order for a dense graph.
  std::sort(order.begin(), order.end());
  out.edges.reserve(keep);
  for (auto idx : order) out.edges.push_back(graph.edges[idx]);
  return out;
}

std::vector<double> degree_vector(const CorrelationGraph& graph) {
  std::vector<double> degree(graph.node_count, 0.0);
  for (const auto& e : graph.edges) {
    const double w = std::fabs(static_cast<double>(e.weight));
    degree[e.i] += w;
    degree[e.j] += w;
  }
  return degree;
}

void write_edge_list(const CorrelationGraph& graph, std::ostream& out) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", graph.density);
  out << "d=" << graph.node_count << " density=" << buf << '\n';
  for (const auto& e : graph.edges) {
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(e.weight));
    out << e.i << '\t' << e.j << '\t' << buf << '\n';
  }
}

CorrelationGraph read_edge_list(std::istream& in) {
  CorrelationGraph graph;
  std::string header;
  if (!std::getline(in, header)) throw DataError("edge list: missing header");
  unsigned long long d = 0;
  double density = 0.0;
  if (std::sscanf(header.c_str(), "d=%llu density=%lf", &d, &density) != 2) {
    throw DataError("edge list: malformed header '" + header + "'");
  }
  graph.node_count = static_cast<std::uint32_t>(d);
  graph.density = density;
  graph.zero_variance.assign(graph.node_count, false);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    Edge e;
    double w = 0.0;
    if (!(fields >> e.i >> e.j >> w) || e.i >= e.j || e.j >= graph.node_count) {
      throw DataError("edge list: bad edge line '" + line + "'");
    }
    e.weight = static_cast<float>(w);
    graph.edges.push_back(e);
  }
  return graph;
}

std::vector<std::uint8_t> encode_graph(const CorrelationGraph& graph) {
  detail::ByteWriter out;
  out.raw(kGraphMagic);
  out.u16(kGraphVersion);
  out.u32(graph.node_count);
  out.f64(graph.density);
  for (std::uint32_t i = 0; i < graph.node_count; ++i) {
    out.u8(i < graph.zero_variance.size() && graph.zero_variance[i] ? 1 : 0);
  }
  out.u64(graph.edges.size());
  for (const auto& e : graph.edges) {
    out.u32(e.i);
    out.u32(e.j);
    out.f32(e.weight);
  }
  out.seal();
  return out.release();
}

CorrelationGraph decode_graph(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || !std::equal(bytes.begin(), bytes.begin() + 4, kGraphMagic)) {
    throw DataError("graph file: bad magic");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  if (detail::crc32(bytes.first(body)) != stored) throw DataError("graph file: CRC-32 mismatch");

  detail::ByteReader<TruncatedInput> in(bytes.subspan(4, body - 4));
  CorrelationGraph graph;
  try {
    if (in.u16() != kGraphVersion) throw DataError("graph file: unsupported version");
    graph.node_count = in.u32();
    graph.density = in.f64();
    auto flags = in.raw(graph.node_count);
    graph.zero_variance.reserve(graph.node_count);
    for (auto f : flags) graph.zero_variance.push_back(f != 0);
    const auto count = in.u64();
    in.need(count * 12);
    graph.edges.resize(count);
    for (auto& e : graph.edges) {
      e.i = in.u32();
      e.j = in.u32();
      e.weight = in.f32();
      if (e.i >= e.j || e.j >= graph.node_count) throw DataError("graph file: bad edge");
    }
  } catch (const TruncatedInput&) {
    throw DataError("graph file: truncated");
  }
  if (in.remaining() != 0) throw DataError("graph file: trailing bytes");
  return graph;
}

void write_graph(const CorrelationGraph& graph, const std::filesystem::path& path) {
  if (!detail::write_file(path, encode_graph(graph))) {
    throw DataError("cannot write " + path.string());
  }
}

CorrelationGraph read_graph(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  if (!detail::read_file(path, bytes)) throw DataError("cannot read " + path.string());
  return decode_graph(bytes);
}

}  // namespace ntopo
