#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fdrbound/csv.hpp"
#include "fdrbound/error.hpp"
#include "fdrbound/random.hpp"
#include "fdrbound/simkit.hpp"

namespace fdrbound {

// Standard error of a mean monthly return with 15% annual volatility over 20
// years, in bps per month.
inline double hlz_default_se() { return (1500.0 / std::sqrt(12.0)) / std::sqrt(240.0); }

// Mixture model for factor expected returns:
//   mu_i = 0 with probability p0, else Exponential(mean lambda_bps)
//   t_i  = mu_i / se + sqrt(rho) Z + sqrt(1 - rho) e_i
struct HlzParams {
  double p0 = 0.444;
  double lambda_bps = 55.5;
  double se_bps = hlz_default_se();
  double rho = 0.2;
  std::size_t n_factors = 1378;
  double s_bar = 1.0;

  void validate() const {
    detail::require(p0 >= 0.0 && p0 <= 1.0, "p0 must lie in [0, 1]");
    detail::require(lambda_bps > 0.0, "lambda must be positive");
    detail::require(se_bps > 0.0, "se must be positive");
    detail::require(rho >= 0.0 && rho < 1.0, "rho must lie in [0, 1)");
    detail::require(n_factors >= 1, "n_factors must be at least 1");
    detail::require(s_bar > 0.0 && s_bar <= 1.0, "s_bar must lie in (0, 1]");
  }
};

struct FactorDraw {
  std::vector<double> mu_bps;
  std::vector<double> t;  // signed
  std::vector<std::uint8_t> is_false;
  std::vector<std::uint8_t> published;

  std::size_t size() const { return t.size(); }
};

// Draw order within the stream: labels and mu factor by factor, the common
// shock, the idiosyncratic shocks, then one publication uniform per factor.
inline FactorDraw hlz_draw(const HlzParams& params, Engine& rng) {
  params.validate();
  const std::size_t n = params.n_factors;
  FactorDraw d;
  d.mu_bps.resize(n);
  d.t.resize(n);
  d.is_false.resize(n);
  d.published.resize(n);
  std::exponential_distribution<double> expo(1.0 / params.lambda_bps);
  for (std::size_t i = 0; i < n; ++i) {
    const bool is_false = uniform01(rng) < params.p0;
    d.is_false[i] = is_false ? 1 : 0;
    if (is_false) {
      d.mu_bps[i] = 0.0;
    } else {
      double mu = 0.0;
      // a true factor must have mu != 0
      while (mu == 0.0) mu = expo(rng);
      d.mu_bps[i] = mu;
    }
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const double common = std::sqrt(params.rho) * normal(rng);
  const double idio_scale = std::sqrt(1.0 - params.rho);
  for (std::size_t i = 0; i < n; ++i)
    d.t[i] = d.mu_bps[i] / params.se_bps + common + idio_scale * normal(rng);
  const auto rule = SelectionRule::staircase(params.s_bar);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = uniform01(rng);
    d.published[i] = u < rule.probability(std::abs(d.t[i])) ? 1 : 0;
  }
  return d;
}

// Which factors count toward discoveries. `all` matches the figure that plots
// every simulated factor; `published` restricts to the selected ones.
enum class HlzPopulation { all, published };

inline std::string_view to_string(HlzPopulation p) {
  return p == HlzPopulation::all ? "all" : "published";
}

inline HlzPopulation parse_population(std::string_view s) {
  if (s == "all") return HlzPopulation::all;
  if (s == "published") return HlzPopulation::published;
  throw Error(ErrorKind::invalid_argument, fmt::format("unknown population '{}'", s));
}

struct HlzCurveRow {
  double hurdle = 0.0;
  std::size_t n_sims = 0;
  double mean_fdr = 0.0;
  double mean_discoveries = 0.0;
  double mean_false_discoveries = 0.0;
};

inline FdpResult hlz_fdp(const FactorDraw& d, double hurdle, HlzPopulation population) {
  std::size_t r = 0;
  std::size_t f = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (population == HlzPopulation::published && !d.published[i]) continue;
    if (std::abs(d.t[i]) > hurdle) {
      ++r;
      if (d.is_false[i]) ++f;
    }
  }
  return fdp_from_counts(r, f);
}

inline std::vector<HlzCurveRow> hlz_fdr_curve(const HlzParams& params,
                                              const std::vector<double>& hurdles,
                                              std::size_t n_sims, std::uint64_t seed,
                                              std::size_t threads = 1,
                                              HlzPopulation population = HlzPopulation::all) {
  params.validate();
  detail::require(n_sims >= 1, "n_sims must be at least 1");
  detail::require(!hurdles.empty(), "at least one hurdle is required");
  const std::size_t h_count = hurdles.size();
  std::vector<FdpResult> per(n_sims * h_count);
  parallel_for(n_sims, threads, [&](std::size_t r) {
    auto rng = make_stream(seed, StreamTag::hlz, r);
    const auto d = hlz_draw(params, rng);
    for (std::size_t k = 0; k < h_count; ++k) per[r * h_count + k] = hlz_fdp(d, hurdles[k], population);
  });
  std::vector<HlzCurveRow> rows(h_count);
  for (std::size_t k = 0; k < h_count; ++k) {
    auto& row = rows[k];
    row.hurdle = hurdles[k];
    row.n_sims = n_sims;
    for (std::size_t r = 0; r < n_sims; ++r) {
      const auto& x = per[r * h_count + k];
      row.mean_fdr += x.fdp;
      row.mean_discoveries += static_cast<double>(x.n_discoveries);
      row.mean_false_discoveries += static_cast<double>(x.n_false_discoveries);
    }
    const auto n = static_cast<double>(n_sims);
    row.mean_fdr /= n;
    row.mean_discoveries /= n;
    row.mean_false_discoveries /= n;
  }
  return rows;
}

inline std::string hlz_curve_csv(const std::vector<HlzCurveRow>& rows) {
  std::string out = "hurdle,n_sims,mean_fdr,mean_discoveries,mean_false_discoveries\n";
  using csv::format_double;
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{},{}\n", format_double(r.hurdle), r.n_sims,
                       format_double(r.mean_fdr), format_double(r.mean_discoveries),
                       format_double(r.mean_false_discoveries));
  return out;
}

// Among published factors with |t| > lower, the share with |t| > upper,
// averaged over replications that have at least one such factor.
inline double hlz_share_above(const HlzParams& params, double lower, double upper,
                              std::size_t n_sims, std::uint64_t seed, std::size_t threads = 1) {
  params.validate();
  detail::require(lower <= upper, "lower must not exceed upper");
  detail::require(n_sims >= 1, "n_sims must be at least 1");
  std::vector<double> shares(n_sims, std::numeric_limits<double>::quiet_NaN());
  parallel_for(n_sims, threads, [&](std::size_t r) {
    auto rng = make_stream(seed, StreamTag::hlz, r);
    const auto d = hlz_draw(params, rng);
    std::size_t above_lower = 0;
    std::size_t above_upper = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!d.published[i]) continue;
      const double a = std::abs(d.t[i]);
      if (a > lower) {
        ++above_lower;
        if (a > upper) ++above_upper;
      }
    }
    if (above_lower > 0)
      shares[r] = static_cast<double>(above_upper) / static_cast<double>(above_lower);
  });
  double sum = 0.0;
  std::size_t n = 0;
  for (double s : shares)
    if (!std::isnan(s)) {
      sum += s;
      ++n;
    }
  if (n == 0) throw Error(ErrorKind::no_discoveries, "no published factor exceeds the lower hurdle");
  return sum / static_cast<double>(n);
}

// If a share s of findings above the lower hurdle also clear a hurdle whose
// FDR is q, the FDR above the lower hurdle is at most s*q + (1 - s).
inline double implied_fdr_combiner(double share, double fdr_upper) {
  detail::require(share >= 0.0 && share <= 1.0, "share must lie in [0, 1]");
  detail::require(fdr_upper >= 0.0 && fdr_upper <= 1.0, "fdr must lie in [0, 1]");
  return share * fdr_upper + (1.0 - share);
}

// One replication, one row per factor.
inline std::string hlz_scatter_csv(const FactorDraw& d) {
  std::string out = "factor_index,mu_bps,abs_t,is_false,published\n";
  using csv::format_double;
  for (std::size_t i = 0; i < d.size(); ++i)
    out += fmt::format("{},{},{},{},{}\n", i, format_double(d.mu_bps[i]),
                       format_double(std::abs(d.t[i])), int{d.is_false[i]}, int{d.published[i]});
  return out;
}

inline std::vector<FactorDraw> hlz_scatter(const HlzParams& params, std::size_t n_sims,
                                           std::uint64_t seed) {
  std::vector<FactorDraw> draws;
  for (std::size_t r = 0; r < n_sims; ++r) {
    auto rng = make_stream(seed, StreamTag::hlz, r);
    draws.push_back(hlz_draw(params, rng));
  }
  return draws;
}

}  // namespace fdrbound
