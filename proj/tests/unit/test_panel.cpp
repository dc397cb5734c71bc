#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "fdrbound/panel.hpp"

using namespace fdrbound;

namespace {

ReturnPanel dense_panel(std::size_t n, std::size_t t) {
  std::vector<std::string> ids, months;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("p" + std::to_string(i));
  for (std::size_t m = 0; m < t; ++m) months.push_back("m" + std::to_string(1000 + m));
  auto panel = ReturnPanel::empty_like(ids, months);
  std::fill(panel.observed.begin(), panel.observed.end(), std::uint8_t{1});
  return panel;
}

ReturnPanel random_panel(std::size_t n, std::size_t t, std::uint64_t seed) {
  auto panel = dense_panel(n, t);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.3, 2.0);
  for (auto& x : panel.returns) x = z(rng);
  return panel;
}

// Independent oracle: solve (X'X) b = X'y by Gauss-Jordan, se from (X'X)^-1.
double alpha_t_normal_equations(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  const std::size_t n = y.size(), p = x[0].size();
  std::vector<std::vector<double>> a(p, std::vector<double>(2 * p, 0.0));
  std::vector<double> xty(p, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < p; ++j) {
      xty[j] += x[r][j] * y[r];
      for (std::size_t k = 0; k < p; ++k) a[j][k] += x[r][j] * x[r][k];
    }
  for (std::size_t j = 0; j < p; ++j) a[j][p + j] = 1.0;
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    const double d = a[c][c];
    for (auto& v : a[c]) v /= d;
    for (std::size_t r = 0; r < p; ++r)
      if (r != c) {
        const double f = a[r][c];
        for (std::size_t k = 0; k < 2 * p; ++k) a[r][k] -= f * a[c][k];
      }
  }
  std::vector<double> b(p, 0.0);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t k = 0; k < p; ++k) b[j] += a[j][p + k] * xty[k];
  double rss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double fit = 0.0;
    for (std::size_t j = 0; j < p; ++j) fit += x[r][j] * b[j];
    rss += (y[r] - fit) * (y[r] - fit);
  }
  const double s2 = rss / static_cast<double>(n - p);
  return std::abs(b[0] / std::sqrt(s2 * a[0][p]));
}

}  // namespace

TEST(TStats, HandArithmetic) {
  // 500 months alternating 0.2 +- d, so mean 0.2 and the n-1 sd is d*sqrt(500/499).
  auto panel = dense_panel(1, 500);
  const double sd = 2.236;
  const double d = sd * std::sqrt(499.0 / 500.0);
  for (std::size_t t = 0; t < 500; ++t) panel.value(0, t) = 0.2 + (t % 2 ? d : -d);
  const auto r = compute_tstats(panel);
  ASSERT_EQ(r.sample.size(), 1u);
  EXPECT_NEAR(r.sample.abs_t[0], 0.2 / sd * std::sqrt(500.0), 1e-9);
  EXPECT_NEAR(r.sample.abs_t[0], 2.0, 0.001);
}

TEST(TStats, ZeroVarianceAndShortHistoriesAreExcluded) {
  auto panel = dense_panel(3, 80);
  for (std::size_t t = 0; t < 80; ++t) {
    panel.value(0, t) = 0.0;
    panel.value(1, t) = 1.5;
    panel.value(2, t) = static_cast<double>(t % 3);
  }
  for (std::size_t t = 30; t < 80; ++t) panel.observed[2 * 80 + t] = 0;
  const auto r = compute_tstats(panel, 60);
  EXPECT_TRUE(r.sample.empty());
  ASSERT_EQ(r.excluded.size(), 3u);
  EXPECT_EQ(r.excluded[0].reason, ExclusionReason::zero_variance);
  EXPECT_EQ(r.excluded[1].reason, ExclusionReason::zero_variance);
  EXPECT_EQ(r.excluded[2].reason, ExclusionReason::insufficient_observations);
  EXPECT_EQ(r.excluded[2].n_obs, 30u);
}

TEST(TStats, ScaleAndSignInvariant) {
  const auto base = random_panel(20, 120, 3);
  auto scaled = base;
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t t = 0; t < 120; ++t) scaled.value(i, t) *= (i % 2 ? -1.0 : 1.0) * (0.25 + i);
  const auto a = compute_tstats(base).sample;
  const auto b = compute_tstats(scaled).sample;
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a.abs_t[k], b.abs_t[k], 1e-10 * a.abs_t[k] + 1e-12);
}

TEST(TStats, MissingMonthsUseAvailableObservations) {
  auto panel = random_panel(1, 100, 9);
  std::vector<double> kept;
  for (std::size_t t = 0; t < 100; ++t)
    if (t % 4 == 0) panel.observed[t] = 0;
    else kept.push_back(panel.value(0, t));
  const auto r = compute_tstats(panel, 60);
  ASSERT_EQ(r.sample.size(), 1u);
  EXPECT_EQ(r.sample.n_obs_used[0], 75u);
  double mean = 0, ss = 0;
  for (double v : kept) mean += v;
  mean /= kept.size();
  for (double v : kept) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(r.sample.abs_t[0], std::abs(mean / std::sqrt(ss / 74.0) * std::sqrt(75.0)), 1e-10);
}

TEST(AlphaTStats, EmptyModelIsBitIdenticalToRaw) {
  const auto panel = random_panel(8, 90, 4);
  FactorPanel factors{{"mkt"}, panel.month_labels, std::vector<double>(90, 1.0)};
  const auto a = compute_tstats(panel, 60).sample;
  const auto b = compute_alpha_tstats(panel, factors, {}, 60).sample;
  EXPECT_EQ(a.abs_t, b.abs_t);
}

TEST(AlphaTStats, ZeroFactorsReduceToRawT) {
  const auto panel = random_panel(5, 120, 5);
  FactorPanel factors{{"mkt", "smb"}, panel.month_labels, std::vector<double>(240, 0.0)};
  const auto a = compute_tstats(panel, 60).sample;
  const auto b = compute_alpha_tstats(panel, factors, {"mkt", "smb"}, 60).sample;
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a.abs_t[k], b.abs_t[k], 1e-12 * a.abs_t[k]);
}

TEST(AlphaTStats, PerfectFitWithZeroAlpha) {
  auto panel = dense_panel(1, 100);
  FactorPanel factors{{"mkt"}, panel.month_labels, std::vector<double>(100)};
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z(0.5, 4.0);
  for (std::size_t t = 0; t < 100; ++t) {
    factors.values[t] = z(rng);
    panel.value(0, t) = 0.5 * factors.values[t];
  }
  const auto r = compute_alpha_tstats(panel, factors, {"mkt"}, 60);
  ASSERT_EQ(r.sample.size(), 1u);
  EXPECT_EQ(r.sample.abs_t[0], 0.0);
}

TEST(AlphaTStats, MatchesNormalEquationsOracle) {
  const std::size_t n = 5, t_count = 120, k = 3;
  const auto panel = random_panel(n, t_count, 7);
  FactorPanel factors{{"mkt", "smb", "hml"}, panel.month_labels, std::vector<double>(t_count * k)};
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 3.0);
  for (auto& v : factors.values) v = z(rng);
  const auto r = compute_alpha_tstats(panel, factors, {"mkt", "smb", "hml"}, 60);
  ASSERT_EQ(r.sample.size(), n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::vector<double>> x(t_count, std::vector<double>(k + 1, 1.0));
    std::vector<double> y(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      y[t] = panel.value(i, t);
      for (std::size_t c = 0; c < k; ++c) x[t][c + 1] = factors.value(t, c);
    }
    const double oracle = alpha_t_normal_equations(x, y);
    EXPECT_NEAR(r.sample.abs_t[i], oracle, 1e-10 * oracle);
  }
}

TEST(AlphaTStats, RankDeficientIsExcluded) {
  const auto panel = random_panel(1, 100, 10);
  FactorPanel factors{{"a", "b"}, panel.month_labels, std::vector<double>(200)};
  for (std::size_t t = 0; t < 100; ++t) {
    factors.values[2 * t] = static_cast<double>(t);
    factors.values[2 * t + 1] = 2.0 * static_cast<double>(t);
  }
  const auto r = compute_alpha_tstats(panel, factors, {"a", "b"}, 60);
  EXPECT_TRUE(r.sample.empty());
  ASSERT_EQ(r.excluded.size(), 1u);
  EXPECT_EQ(r.excluded[0].reason, ExclusionReason::rank_deficient);
}

TEST(AlphaTStats, MisalignedMonthsRaise) {
  const auto panel = random_panel(1, 70, 11);
  auto months = panel.month_labels;
  months.back() = "zzz";
  FactorPanel factors{{"mkt"}, months, std::vector<double>(70, 1.0)};
  try {
    compute_alpha_tstats(panel, factors, {"mkt"}, 60);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::misaligned_months);
  }
}

TEST(LoadPanel, LongFormatSortsMonthsAndMarksMissing) {
  std::istringstream in(
      "predictor_id,month,ret\n"
      "a,2001-02,1.5\n"
      "a,2001-01,-0.5\n"
      "b,2001-01,NA\n"
      "b,2001-02,2\n");
  const auto loaded = load_panel_csv(in);
  const auto& p = loaded.panel;
  ASSERT_EQ(p.n_predictors(), 2u);
  ASSERT_EQ(p.n_months(), 2u);
  EXPECT_EQ(p.month_labels[0], "2001-01");
  EXPECT_DOUBLE_EQ(p.value(0, 0), -0.5);
  EXPECT_FALSE(p.is_observed(1, 0));
  EXPECT_TRUE(p.is_observed(1, 1));
  EXPECT_EQ(loaded.report.unparseable_cells, 1u);
}

TEST(LoadPanel, DuplicateKeyNamesThePair) {
  std::istringstream in("predictor_id,month,ret\nx,2001-01,1\nx,2001-01,2\n");
  try {
    load_panel_csv(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::duplicate_key);
    EXPECT_NE(std::string(e.what()).find("x"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("2001-01"), std::string::npos);
  }
}

TEST(LoadPanel, WideFormat) {
  std::istringstream in("predictor_id,2001-01,2001-02\nA,1,2\nB,,3\nC,0.5,0.25\n");
  const auto p = load_panel_csv(in, PanelFormat{',', PanelLayout::wide_format}).panel;
  EXPECT_EQ(p.n_predictors(), 3u);
  EXPECT_EQ(p.n_months(), 2u);
  EXPECT_FALSE(p.is_observed(1, 0));
  EXPECT_DOUBLE_EQ(p.value(2, 1), 0.25);
}

TEST(LoadPanel, NoRowsAndMissingFile) {
  std::istringstream in("predictor_id,month,ret\n");
  EXPECT_THROW(load_panel_csv(in), Error);
  try {
    load_panel_csv(std::string("/nonexistent/panel.csv"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_file);
  }
}

TEST(Summary, SharesAndCounts) {
  const auto s = TStatSample::from_values({1.0, 2.5, 3.0});
  const auto rows = panel_summary(s, {2.0}, {});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].count, 2u);
  EXPECT_DOUBLE_EQ(rows[0].share, 2.0 / 3.0);

  const auto s2 = TStatSample::from_values({0.1, 0.4, 1.0, 3.0});
  const auto rows2 = panel_summary(s2, {}, {{0.0, 0.5}});
  EXPECT_EQ(rows2[0].count, 2u);
  EXPECT_DOUBLE_EQ(rows2[0].share, 0.5);
}

TEST(Summary, HurdleStrictBinClosed) {
  const auto s = TStatSample::from_values({0.5, 2.0, 2.0, 4.0});
  const auto rows = panel_summary(s, {2.0}, {{0.0, 0.5}, {2.0, 2.0}});
  EXPECT_EQ(rows[0].count, 1u);
  EXPECT_EQ(rows[1].count, 1u);
  EXPECT_EQ(rows[2].count, 2u);
}

TEST(Summary, PartitionCountsSumToTotal) {
  std::mt19937_64 rng(12);
  std::exponential_distribution<double> e(0.7);
  std::vector<double> v(1000);
  for (auto& x : v) x = e(rng);
  const auto s = TStatSample::from_values(v);
  // Disjoint closed bins chosen so no value lands on an edge twice.
  const auto rows = panel_summary(s, {0.0}, {{0.0, 1.0}, {std::nextafter(1.0, 2.0), 1e9}});
  EXPECT_EQ(rows[1].count + rows[2].count, 1000u);
}

TEST(Summary, EmptySampleRaises) {
  try {
    panel_summary(TStatSample{}, {2.0}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::empty_sample);
  }
}
