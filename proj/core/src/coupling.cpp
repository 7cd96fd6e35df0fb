#include "neurotopo/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "neurotopo/parallel.hpp"

namespace ntopo {

TokenCorrelation token_correlation(const ActivationRecord& record) {
  const std::uint32_t n = record.tokens;
  const std::uint32_t d = record.neurons;
  if (n < 2) throw std::invalid_argument("token_correlation: need at least 2 tokens");

  // Column-major copy so each token is contiguous.
  std::vector<double> cols(static_cast<std::size_t>(n) * d);
  TokenCorrelation out;
  out.tokens = n;
  out.zero_variance.assign(n, false);
  for (std::uint32_t t = 0; t < n; ++t) {
    double* c = cols.data() + static_cast<std::size_t>(t) * d;
    double sum = 0.0;
    bool constant = true;
    const float first = record.at(0, t);
    for (std::uint32_t i = 0; i < d; ++i) {
      const float v = record.at(i, t);
      c[i] = v;
      sum += v;
      constant = constant && v == first;
    }
    const double mean = sum / d;
    double norm2 = 0.0;
    for (std::uint32_t i = 0; i < d; ++i) {
      c[i] -= mean;
      norm2 += c[i] * c[i];
    }
    if (constant || !(norm2 > 0.0)) {
      out.zero_variance[t] = true;
      std::fill(c, c + d, 0.0);
      continue;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::uint32_t i = 0; i < d; ++i) c[i] *= inv;
  }

  out.values.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (std::uint32_t a = 0; a < n; ++a) {
    if (!out.zero_variance[a]) out.values[static_cast<std::size_t>(a) * n + a] = 1.0;
    const double* ca = cols.data() + static_cast<std::size_t>(a) * d;
    for (std::uint32_t b = a + 1; b < n; ++b) {
      double w = 0.0;
      if (!out.zero_variance[a] && !out.zero_variance[b]) {
        const double* cb = cols.data() + static_cast<std::size_t>(b) * d;
        for (std::uint32_t i = 0; i < d; ++i) w += ca[i] * cb[i];
        w = std::clamp(w, -1.0, 1.0);
      }
      out.values[static_cast<std::size_t>(a) * n + b] = w;
      out.values[static_cast<std::size_t>(b) * n + a] = w;
    }
  }
  return out;
}

ModalityCoupling modality_coupling(const TokenCorrelation& corr,
                                   const std::vector<Modality>& modality) {
  if (modality.size() != corr.tokens) {
    throw std::invalid_argument("modality_coupling: mask length differs from token count");
  }
  std::vector<std::uint32_t> vis, txt;
  for (std::uint32_t t = 0; t < corr.tokens; ++t) {
    if (modality[t] == Modality::Vision) vis.push_back(t);
    if (modality[t] == Modality::Text) txt.push_back(t);
  }

  const auto within = [&](const std::vector<std::uint32_t>& set, const char* name) {
    OptionalMean m;
    if (set.size() < 2) {
      m.reason = std::string("fewer than 2 ") + name + " tokens";
      return m;
    }
    double sum = 0.0;
    for (std::size_t a = 0; a < set.size(); ++a) {
      for (std::size_t b = a + 1; b < set.size(); ++b) sum += corr.at(set[a], set[b]);
    }
    const double pairs = static_cast<double>(set.size()) * (set.size() - 1) / 2.0;
    m.value = std::clamp(sum / pairs, -1.0, 1.0);
    return m;
  };

  ModalityCoupling out;
  out.vv = within(vis, "vision");
  out.tt = within(txt, "text");
  if (vis.empty() || txt.empty()) {
    out.vt.reason = vis.empty() ? "no vision tokens" : "no text tokens";
  } else {
    double sum = 0.0;
    for (auto a : vis) {
      for (auto b : txt) sum += corr.at(a, b);
    }
    out.vt.value =
        std::clamp(sum / (static_cast<double>(vis.size()) * txt.size()), -1.0, 1.0);
  }
  return out;
}

ModalityCoupling modality_coupling(const ActivationRecord& record) {
  return modality_coupling(token_correlation(record), record.modality);
}

namespace {

struct Moments {
  std::optional<double> mean, sd;
  std::uint32_t n = 0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  m.n = static_cast<std::uint32_t>(xs.size());
  if (xs.empty()) return m;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  m.mean = mean;
  m.sd = std::sqrt(ss / xs.size());
  return m;
}

}  // namespace

CouplingRow aggregate_coupling(std::uint32_t layer, const std::vector<ModalityCoupling>& samples) {
  std::vector<double> vv, tt, vt;
  for (const auto& s : samples) {
    if (s.vv.present()) vv.push_back(*s.vv.value);
    if (s.tt.present()) tt.push_back(*s.tt.value);
    if (s.vt.present()) vt.push_back(*s.vt.value);
  }
  CouplingRow row;
  row.layer = layer;
  row.sample_count = static_cast<std::uint32_t>(samples.size());
  const auto a = moments(vv), b = moments(tt), c = moments(vt);
  row.mu_vv = a.mean, row.sd_vv = a.sd, row.n_vv = a.n;
  row.mu_tt = b.mean, row.sd_tt = b.sd, row.n_tt = b.n;
  row.mu_vt = c.mean, row.sd_vt = c.sd, row.n_vt = c.n;
  return row;
}

CouplingReport coupling_curve(const DatasetManifest& manifest,
                              std::optional<std::uint32_t> first_layer,
                              std::optional<std::uint32_t> last_layer, unsigned threads) {
  if (manifest.layer_count == 0) throw DataError("coupling_curve: manifest has no layers");
  const std::uint32_t lo = first_layer.value_or(0);
  const std::uint32_t hi = last_layer.value_or(manifest.layer_count - 1);
  if (lo > hi) throw std::invalid_argument("coupling_curve: empty layer range");

  CouplingReport report;
  for (std::uint32_t layer = lo; layer <= hi; ++layer) {
    auto entries = manifest.layer_entries(layer);
    if (entries.empty()) {
      throw DataError("coupling_curve: layer " + std::to_string(layer) + " has no records");
    }
    std::stable_sort(entries.begin(), entries.end(), [](const auto* a, const auto* b) {
      return a->sample_id < b->sample_id;
    });
    std::vector<ModalityCoupling> couplings(entries.size());
    parallel_for(entries.size(), threads, [&](std::size_t i) {
      couplings[i] = modality_coupling(load_entry(*entries[i]));
    });
    report.layers.push_back(aggregate_coupling(layer, couplings));
    report.sample_count = std::max(report.sample_count, report.layers.back().sample_count);
  }
  return report;
}

void write_coupling_csv(const CouplingReport& report, std::ostream& out) {
  const auto cell = [&](const std::optional<double>& v) {
    out << ',';
    if (v) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.10g", *v);
      out << buf;
    }
  };
  out << "layer,mu_vv,mu_tt,mu_vt,sd_vv,sd_tt,sd_vt,n\n";
  for (const auto& row : report.layers) {
    out << row.layer;
    cell(row.mu_vv);
    cell(row.mu_tt);
    cell(row.mu_vt);
    cell(row.sd_vv);
    cell(row.sd_tt);
    cell(row.sd_vt);
    out << ',' << row.sample_count << '\n';
  }
}

}  // namespace ntopo
