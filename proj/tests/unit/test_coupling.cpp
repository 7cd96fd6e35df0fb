#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "neurotopo/coupling.hpp"
#include "neurotopo/synth.hpp"
#include "support.hpp"

using namespace ntopo;
using ntopo::test::random_record;
using ntopo::test::ScratchDir;

namespace {

// Pearson between token columns a and b, two-pass.
double column_pearson(const ActivationRecord& r, std::uint32_t a, std::uint32_t b) {
  double ma = 0, mb = 0;
  for (std::uint32_t i = 0; i < r.neurons; ++i) {
    ma += r.at(i, a);
    mb += r.at(i, b);
  }
  ma /= r.neurons;
  mb /= r.neurons;
  double sab = 0, saa = 0, sbb = 0;
  for (std::uint32_t i = 0; i < r.neurons; ++i) {
    const double x = r.at(i, a) - ma, y = r.at(i, b) - mb;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  return saa == 0 || sbb == 0 ? 0.0 : sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(TokenCorrelation, MatchesOracleAndIsSymmetric) {
  auto rec = random_record(10, 7, 21);
  const auto c = token_correlation(rec);
  ASSERT_EQ(c.tokens, 7u);
  for (std::uint32_t a = 0; a < 7; ++a) {
    EXPECT_NEAR(c.at(a, a), 1.0, 1e-12);
    for (std::uint32_t b = 0; b < 7; ++b) {
      EXPECT_NEAR(c.at(a, b), column_pearson(rec, a, b), 1e-9);
      EXPECT_EQ(c.at(a, b), c.at(b, a));
    }
  }
}

TEST(TokenCorrelation, ConstantColumnIsZeroEverywhere) {
  auto rec = random_record(5, 4, 2);
  for (std::uint32_t i = 0; i < 5; ++i) rec.at(i, 1) = 2.0f;
  const auto c = token_correlation(rec);
  EXPECT_TRUE(c.zero_variance[1]);
  for (std::uint32_t b = 0; b < 4; ++b) EXPECT_EQ(c.at(1, b), 0.0);
}

TEST(ModalityCoupling, AveragesTheRightBlocks) {
  auto rec = random_record(12, 6, 5);
  // tokens: O V V T T T
  rec.modality = {Modality::Other, Modality::Vision, Modality::Vision,
                  Modality::Text,  Modality::Text,   Modality::Text};
  const auto m = modality_coupling(rec);
  ASSERT_TRUE(m.vv.present() && m.tt.present() && m.vt.present());
  EXPECT_NEAR(*m.vv.value, column_pearson(rec, 1, 2), 1e-9);
  const double tt = (column_pearson(rec, 3, 4) + column_pearson(rec, 3, 5) + column_pearson(rec, 4, 5)) / 3;
  EXPECT_NEAR(*m.tt.value, tt, 1e-9);
  double vt = 0;
  for (std::uint32_t v : {1u, 2u})
    for (std::uint32_t t : {3u, 4u, 5u}) vt += column_pearson(rec, v, t);
  EXPECT_NEAR(*m.vt.value, vt / 6, 1e-9);
}

TEST(ModalityCoupling, UndefinedMeansCarryAReason) {
  auto rec = random_record(6, 4, 5);
  rec.modality = {Modality::Vision, Modality::Text, Modality::Text, Modality::Text};
  const auto m = modality_coupling(rec);
  EXPECT_FALSE(m.vv.present());
  EXPECT_FALSE(m.vv.reason.empty());
  EXPECT_TRUE(m.tt.present());
  EXPECT_TRUE(m.vt.present());
}

TEST(CouplingCurve, AggregatesAcrossSamples) {
  std::vector<ModalityCoupling> samples(3);
  samples[0].vv.value = 0.2;
  samples[1].vv.value = 0.4;
  samples[0].vt.value = 0.1;
  const auto row = aggregate_coupling(2, samples);
  EXPECT_EQ(row.layer, 2u);
  EXPECT_NEAR(*row.mu_vv, 0.3, 1e-12);
  EXPECT_NEAR(*row.sd_vv, 0.1, 1e-12);
  EXPECT_EQ(row.n_vv, 2u);
  EXPECT_FALSE(row.mu_tt.has_value());
  EXPECT_NEAR(*row.mu_vt, 0.1, 1e-12);
  EXPECT_EQ(row.sample_count, 3u);
}

TEST(CouplingCurve, ManifestCurveAndCsv) {
  ScratchDir dir("coupling");
  auto spec = synth_preset("coupling");
  spec.sample_count = 6;
  spec.master_seed = 3;
  const auto manifest = write_dataset(generate(spec), dir.path());
  const auto report = coupling_curve(manifest, 1, 3);
  ASSERT_EQ(report.layers.size(), 3u);
  EXPECT_EQ(report.layers[0].layer, 1u);
  EXPECT_EQ(report.sample_count, 6u);
  EXPECT_LT(*report.layers[0].mu_vt, *report.layers[2].mu_vt);
  std::ostringstream csv;
  write_coupling_csv(report, csv);
  EXPECT_EQ(csv.str().rfind("layer,mu_vv,mu_tt,mu_vt,sd_vv,sd_tt,sd_vt,n\n", 0), 0u);
  EXPECT_THROW(coupling_curve(manifest, 7, 8), DataError);
}
