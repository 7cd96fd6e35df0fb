#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "neurotopo/actdump.hpp"

namespace ntopo {

/// Dense symmetric N x N token correlation matrix (row-major, double).
struct TokenCorrelation {
  std::uint32_t tokens = 0;
  std::vector<double> values;
  std::vector<bool> zero_variance;

  double at(std::uint32_t a, std::uint32_t b) const {
    return values[static_cast<std::size_t>(a) * tokens + b];
  }
};

/// Pearson correlation between token columns.  Constant columns correlate 0
/// with everything (including themselves) and are flagged.
TokenCorrelation token_correlation(const ActivationRecord& record);

/// A mean that may be undefined; `reason` says which precondition failed.
struct OptionalMean {
  std::optional<double> value;
  std::string reason;

  bool present() const noexcept { return value.has_value(); }
};

struct ModalityCoupling {
  OptionalMean vv;
  OptionalMean tt;
  OptionalMean vt;
};

/// Mean off-diagonal within-modality and cross-modality token correlations.
/// OTHER tokens are ignored.
ModalityCoupling modality_coupling(const ActivationRecord& record);
ModalityCoupling modality_coupling(const TokenCorrelation& corr,
                                   const std::vector<Modality>& modality);

struct CouplingRow {
  std::uint32_t layer = 0;
  std::optional<double> mu_vv, mu_tt, mu_vt;
  std::optional<double> sd_vv, sd_tt, sd_vt;  // population std across samples
  std::uint32_t n_vv = 0, n_tt = 0, n_vt = 0;  // samples contributing
  std::uint32_t sample_count = 0;
};

struct CouplingReport {
  std::vector<CouplingRow> layers;
  std::uint32_t sample_count = 0;
};

/// Per-layer mean +- std of the three coupling statistics.  Samples are
/// folded in sample_id order.  Layers default to every layer in the manifest;
/// an empty layer throws DataError.
CouplingReport coupling_curve(const DatasetManifest& manifest,
                              std::optional<std::uint32_t> first_layer = std::nullopt,
                              std::optional<std::uint32_t> last_layer = std::nullopt,
                              unsigned threads = 1);

/// Aggregates already-computed couplings for one layer.
CouplingRow aggregate_coupling(std::uint32_t layer, const std::vector<ModalityCoupling>& samples);

/// CSV with header layer,mu_vv,mu_tt,mu_vt,sd_vv,sd_tt,sd_vt,n; absent values
/// are written as empty cells.
void write_coupling_csv(const CouplingReport& report, std::ostream& out);

}  // namespace ntopo
