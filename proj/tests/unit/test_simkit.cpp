#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "fdrbound/simkit.hpp"

using namespace fdrbound;

namespace {

double mean_abs_offdiag_corr(const ReturnPanel& p, std::size_t limit) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < limit; ++i)
    for (std::size_t j = i + 1; j < limit; ++j) {
      sum += std::abs(pairwise_correlation(p, i, j));
      ++n;
    }
  return sum / static_cast<double>(n);
}

double sample_sd(std::span<const double> x) {
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

}  // namespace

TEST(Truth, Boundaries) {
  SimConfig c;
  c.n_predictors = 1000;
  c.gamma_bps = 40.0;
  auto rng = make_stream(1, StreamTag::truth, 0);
  c.p_false = 0.0;
  auto a = make_truth_and_mu(c, rng);
  for (double mu : a.mu) EXPECT_EQ(mu, 0.4);
  c.p_false = 1.0;
  a = make_truth_and_mu(c, rng);
  for (double mu : a.mu) EXPECT_EQ(mu, 0.0);
}

TEST(Truth, LawOfLargeNumbers) {
  SimConfig c;
  c.n_predictors = 100000;
  c.p_false = 0.5;
  auto rng = make_stream(2, StreamTag::truth, 0);
  const auto a = make_truth_and_mu(c, rng);
  const double share = std::accumulate(a.labels.is_false.begin(), a.labels.is_false.end(), 0.0) / 100000.0;
  EXPECT_NEAR(share, 0.5, 0.01);
}

TEST(ClusterBootstrap, SingleMonthSourceIsAllZero) {
  auto src = ReturnPanel::empty_like({"a", "b"}, {"m1"});
  src.set(0, 0, 3.0);
  src.set(1, 0, -1.0);
  auto rng = make_stream(3, StreamTag::residuals, 0);
  const auto boot = cluster_bootstrap_residuals(src, 2, 50, rng);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t t = 0; t < 50; ++t) EXPECT_EQ(boot.value(i, t), 0.0);
}

TEST(ClusterBootstrap, PerfectCorrelationPreservedAndMaskPropagates) {
  auto rng0 = make_stream(4, StreamTag::source, 0);
  auto src = synthetic_source_panel(3, 100, SyntheticSpec{1, 0.0, 2.0}, rng0);
  for (std::size_t t = 0; t < 100; ++t) src.value(1, t) = 2.0 * src.value(0, t) + 1.0;
  for (std::size_t t = 0; t < 100; t += 3) src.observed[2 * 100 + t] = 0;
  auto rng = make_stream(4, StreamTag::residuals, 0);
  const auto boot = cluster_bootstrap_residuals(src, 3, 300, rng);
  EXPECT_NEAR(pairwise_correlation(boot, 0, 1), 1.0, 1e-12);
  const auto missing = std::count(boot.mask_row(2).begin(), boot.mask_row(2).end(), 0);
  EXPECT_GT(missing, 60);
  EXPECT_LT(missing, 140);
}

TEST(ClusterBootstrap, DropsEmptySourcePredictors) {
  auto src = ReturnPanel::empty_like({"a", "b"}, {"m1", "m2"});
  src.set(0, 0, 1.0);
  src.set(0, 1, 2.0);
  const auto prepared = prepare_source(src);
  ASSERT_EQ(prepared.excluded.size(), 1u);
  EXPECT_EQ(prepared.excluded[0].predictor_id, "b");
  EXPECT_EQ(prepared.demeaned.n_predictors(), 1u);
}

TEST(MixedBootstrap, FullWeightIdentityReducesToCluster) {
  auto rng0 = make_stream(5, StreamTag::source, 0);
  const auto src = synthetic_source_panel(30, 80, SyntheticSpec{}, rng0);
  const auto prepared = prepare_source(src);
  auto a_rng = make_stream(5, StreamTag::residuals, 7);
  auto b_rng = make_stream(5, StreamTag::residuals, 7);
  const auto a = cluster_bootstrap_residuals(prepared, 30, 120, a_rng);
  const auto b = mixed_bootstrap_residuals(prepared, 30, 120, 1.0, 3.32, b_rng, PredictorDraw::identity);
  EXPECT_EQ(a.returns, b.returns);
  EXPECT_EQ(a.observed, b.observed);
}

TEST(MixedBootstrap, ZeroWeightIsPureNoise) {
  auto rng0 = make_stream(6, StreamTag::source, 0);
  const auto src = synthetic_source_panel(40, 200, SyntheticSpec{40, 0.8, 3.0}, rng0);
  auto rng = make_stream(6, StreamTag::residuals, 0);
  const auto b = mixed_bootstrap_residuals(prepare_source(src), 40, 500, 0.0, 3.32, rng);
  EXPECT_LT(mean_abs_offdiag_corr(b, 40), 0.05);
}

TEST(Synthetic, IndependenceBlockCorrAndMarginalSd) {
  auto rng = make_stream(7, StreamTag::source, 0);
  const auto indep = synthetic_source_panel(40, 500, SyntheticSpec{20, 0.0, 3.32}, rng);
  EXPECT_LT(mean_abs_offdiag_corr(indep, 40), 0.05);

  const auto pairs = synthetic_source_panel(100, 500, SyntheticSpec{2, 0.9, 3.32}, rng);
  double sum = 0.0;
  for (std::size_t i = 0; i < 100; i += 2) sum += pairwise_correlation(pairs, i, i + 1);
  EXPECT_NEAR(sum / 50.0, 0.9, 0.03);

  const auto longp = synthetic_source_panel(5, 5000, SyntheticSpec{}, rng);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(sample_sd(longp.row(i)) / 3.32, 1.0, 0.03);
}

TEST(Assemble, IdentityMismatchAndPower) {
  auto rng = make_stream(8, StreamTag::source, 0);
  const auto resid = synthetic_source_panel(400, 500, SyntheticSpec{1, 0.0, 3.32}, rng);
  const std::vector<double> zeros(400, 0.0);
  EXPECT_EQ(assemble_panel(zeros, resid).returns, resid.returns);
  try {
    assemble_panel(std::vector<double>(3, 0.0), resid);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension_mismatch);
  }
  const std::vector<double> mu(400, 0.5);
  const auto t = compute_tstats(assemble_panel(mu, resid)).sample;
  const double mean_t = std::accumulate(t.abs_t.begin(), t.abs_t.end(), 0.0) / static_cast<double>(t.size());
  EXPECT_NEAR(mean_t, 0.5 / 3.32 * std::sqrt(500.0), 0.15);

  auto flat = ReturnPanel::empty_like({"a"}, {"1", "2", "3"});
  for (std::size_t t2 = 0; t2 < 3; ++t2) flat.set(0, t2, 0.0);
  const auto r = compute_tstats(assemble_panel(std::vector<double>{0.75}, flat), 2);
  ASSERT_EQ(r.excluded.size(), 1u);
  EXPECT_EQ(r.excluded[0].reason, ExclusionReason::zero_variance);
}

TEST(Selection, StaircaseSegments) {
  auto rng = make_stream(9, StreamTag::selection, 0);
  const auto rule = SelectionRule::staircase(1.0);
  EXPECT_TRUE(apply_selection(TStatSample::from_values({0.1, 1.5, 1.96}), rule, rng).empty());
  EXPECT_EQ(apply_selection(TStatSample::from_values({2.6, 3.0, 9.0}), rule, rng).size(), 3u);

  std::vector<double> mid(100000);
  for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = 1.9601 + 0.6 * static_cast<double>(i) / 100000.0;
  const auto picked = apply_selection(TStatSample::from_values(mid), rule, rng);
  EXPECT_NEAR(static_cast<double>(picked.size()) / 100000.0, 0.5, 0.01);

  SelectionRule bad{{2.0}, {0.8, 0.2}, 1.0};
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Fdp, DefinitionCases) {
  EXPECT_NEAR(fdp_from_counts(210, 2).fdp, 2.0 / 210.0, 1e-15);
  EXPECT_NEAR(fdp_from_counts(210, 2).fdp, 0.01, 0.001);
  EXPECT_NEAR(fdp_from_counts(305, 13).fdp, 0.05, 0.01);
  EXPECT_EQ(fdp_from_counts(0, 0).fdp, 0.0);

  TruthLabels labels{{1, 0, 1, 0}};
  auto s = TStatSample::from_values({3.0, 3.0, 1.0, 2.5});
  const auto r = realized_fdp(labels, s, 2.0);
  EXPECT_EQ(r.n_discoveries, 3u);
  EXPECT_EQ(r.n_false_discoveries, 1u);
  const std::vector<std::size_t> subset{1, 3};
  EXPECT_EQ(realized_fdp(labels, s, 2.0, std::span<const std::size_t>(subset)).n_false_discoveries, 0u);
}

TEST(MonteCarlo, NoFalsePredictors) {
  SimConfig c;
  c.n_predictors = 200;
  c.n_months = 120;
  c.n_sims = 5;
  c.p_false = 0.0;
  c.gamma_bps = 50;
  const auto r = monte_carlo_fdr(c, 2.0, {}, NullModel::paper());
  EXPECT_EQ(r.actual_fdr, 0.0);
  EXPECT_EQ(r.cover_rate_easy, 1.0);
}

TEST(MonteCarlo, AllNullCalibration) {
  SimConfig c;
  c.n_predictors = 2000;
  c.n_months = 120;
  c.n_sims = 10;
  c.p_false = 1.0;
  c.residual_source = SyntheticSpec{1, 0.0, 3.32};
  const auto r = monte_carlo_fdr(c, 2.0, {}, NullModel::exact());
  EXPECT_EQ(r.actual_fdr, 1.0);
  EXPECT_NEAR(r.mean_easy_bound, 1.0, 0.1);
}

TEST(MonteCarlo, FdpMatchesBruteForceRecount) {
  SimConfig c;
  c.n_predictors = 200;
  c.n_months = 100;
  c.p_false = 0.5;
  c.gamma_bps = 60;
  for (std::size_t rep = 0; rep < 5; ++rep) {
    const auto rec = run_replication(c, rep, 2.0, {}, NullModel::exact(), std::nullopt);
    auto truth_rng = make_stream(c.seed, StreamTag::truth, rep);
    auto resid_rng = make_stream(c.seed, StreamTag::residuals, rep);
    const auto truth = make_truth_and_mu(c, truth_rng);
    const auto panel = assemble_panel(
        truth.mu, synthetic_source_panel(c.n_predictors, c.n_months, SyntheticSpec{}, resid_rng));
    std::size_t r = 0, f = 0;
    for (std::size_t i = 0; i < c.n_predictors; ++i) {
      double sum = 0.0;
      for (double v : panel.row(i)) sum += v;
      const double m = sum / 100.0;
      double ss = 0.0;
      for (double v : panel.row(i)) ss += (v - m) * (v - m);
      if (std::abs(m / std::sqrt(ss / 99.0) * 10.0) > 2.0) {
        ++r;
        if (truth.labels[i]) ++f;
      }
    }
    EXPECT_EQ(rec.fdp.n_discoveries, r);
    EXPECT_EQ(rec.fdp.n_false_discoveries, f);
    if (rec.easy && rec.storey) {
      EXPECT_LE(*rec.storey, *rec.easy);
    }
  }
}

TEST(MonteCarlo, ThreadCountDoesNotChangeResults) {
  SimConfig c;
  c.n_predictors = 300;
  c.n_months = 80;
  c.n_sims = 9;
  c.p_false = 0.6;
  const auto rule = SelectionRule::staircase();
  const auto a = grid_csv({monte_carlo_fdr(c, 2.0, {}, NullModel::paper(), rule, 1)});
  const auto b = grid_csv({monte_carlo_fdr(c, 2.0, {}, NullModel::paper(), rule, 4)});
  EXPECT_EQ(a, b);
}

TEST(GridCsv, Header) {
  const auto s = grid_csv({});
  EXPECT_EQ(s,
            "gamma_bps,p_false,hurdle,n_sims,actual_fdr,mean_easy_bound,mean_storey_bound,"
            "mean_extrap_bound,cover_rate_easy,cover_rate_storey,n_undefined\n");
}
