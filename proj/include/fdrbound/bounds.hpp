#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fdrbound/error.hpp"
#include "fdrbound/normal.hpp"
#include "fdrbound/panel.hpp"

namespace fdrbound {

// [lo, hi] bin of |t| used to bound the share of false predictors.
struct StoreyBinSpec {
  double lo = 0.0;
  double hi = 0.5;

  void validate() const {
    detail::require(lo >= 0.0 && hi > lo, "Storey bin must satisfy 0 <= lo < hi");
  }
};

enum class BoundMethod { easy, storey, extrapolation, interval_pf };

inline std::string_view to_string(BoundMethod method) {
  switch (method) {
    case BoundMethod::easy: return "easy";
    case BoundMethod::storey: return "storey";
    case BoundMethod::extrapolation: return "extrapolation";
    case BoundMethod::interval_pf: return "interval_pf";
  }
  return "unknown";
}

// A bound together with everything needed to recompute it by hand.
struct FdrBoundReport {
  BoundMethod method = BoundMethod::easy;
  double hurdle = 2.0;
  NullModel null;
  double bound_raw = 0.0;
  double bound_capped = 0.0;
  // Caller-supplied quantities (shares, means, interval edges).
  std::map<std::string, double> inputs;
  // Derived quantities: null tail, null bin mass, pf bound, implied mean, ...
  std::map<std::string, double> intermediates;
  bool pf_cap_applied = false;
  std::size_t sample_size = 0;  // 0 when computed from summary statistics

  double intermediate(const std::string& key) const { return intermediates.at(key); }
};

// Upper bound on Pr(F) from the mass in one region relative to the null.
struct PfBound {
  double pf = 1.0;
  double ratio_raw = 1.0;
  double share = 0.0;
  double null_mass = 0.0;
  std::size_t count = 0;
  std::size_t sample_size = 0;
  bool cap_applied = false;
};

namespace detail {

inline double cap_at_one(double x) { return std::min(1.0, x); }

inline std::size_t count_above(const TStatSample& tstats, double hurdle) {
  return static_cast<std::size_t>(std::count_if(tstats.abs_t.begin(), tstats.abs_t.end(),
                                                [hurdle](double t) { return t > hurdle; }));
}

inline std::size_t count_in(const TStatSample& tstats, const StoreyBinSpec& bin) {
  return static_cast<std::size_t>(
      std::count_if(tstats.abs_t.begin(), tstats.abs_t.end(),
                    [&](double t) { return t >= bin.lo && t <= bin.hi; }));
}

inline PfBound make_pf(double share, double null_mass) {
  detail::require(null_mass > 0.0, "null mass of the bin must be positive");
  PfBound out;
  out.share = share;
  out.null_mass = null_mass;
  out.ratio_raw = share / null_mass;
  out.cap_applied = out.ratio_raw > 1.0;
  out.pf = cap_at_one(out.ratio_raw);
  return out;
}

}  // namespace detail

// FDR(|t| > hurdle) <= Pr(|t| > hurdle | F) / Pr(|t| > hurdle).
inline FdrBoundReport easy_bound(double share_above, double hurdle, const NullModel& null) {
  if (share_above == 0.0)
    throw Error(ErrorKind::no_discoveries,
                "share above the hurdle is zero: there are no discoveries to bound");
  detail::require(share_above > 0.0 && share_above <= 1.0, "share_above must lie in (0, 1]");
  FdrBoundReport r;
  r.method = BoundMethod::easy;
  r.hurdle = hurdle;
  r.null = null;
  r.inputs["share_above"] = share_above;
  r.intermediates["null_tail"] = null.tail(hurdle);
  r.intermediates["pf_bound"] = 1.0;
  r.bound_raw = r.intermediates["null_tail"] / share_above;
  r.bound_capped = detail::cap_at_one(r.bound_raw);
  return r;
}

inline FdrBoundReport easy_bound_from_tstats(const TStatSample& tstats, double hurdle,
                                             const NullModel& null) {
  if (tstats.empty()) throw Error(ErrorKind::empty_sample, "t-stat sample is empty");
  const std::size_t above = detail::count_above(tstats, hurdle);
  if (above == 0)
    throw Error(ErrorKind::no_discoveries, "no |t| exceeds the hurdle; the bound is undefined");
  auto r = easy_bound(static_cast<double>(above) / static_cast<double>(tstats.size()), hurdle, null);
  r.intermediates["count_above"] = static_cast<double>(above);
  r.sample_size = tstats.size();
  return r;
}

// Pr(F) <= min(1, Pr(|t| in bin) / Pr(|t| in bin | F)).
inline PfBound storey_pf_from_share(double bin_share, const StoreyBinSpec& bin,
                                    const NullModel& null) {
  bin.validate();
  detail::require(bin_share >= 0.0 && bin_share <= 1.0, "bin share must lie in [0, 1]");
  return detail::make_pf(bin_share, null.bin_mass(bin.lo, bin.hi));
}

inline PfBound storey_pf_bound(const TStatSample& tstats, const StoreyBinSpec& bin,
                               const NullModel& null) {
  if (tstats.empty()) throw Error(ErrorKind::empty_sample, "t-stat sample is empty");
  const std::size_t in_bin = detail::count_in(tstats, bin);
  auto pf = storey_pf_from_share(static_cast<double>(in_bin) / static_cast<double>(tstats.size()),
                                 bin, null);
  pf.count = in_bin;
  pf.sample_size = tstats.size();
  return pf;
}

namespace detail {

inline FdrBoundReport combine_storey(FdrBoundReport easy, const PfBound& pf,
                                     const StoreyBinSpec& bin) {
  easy.method = BoundMethod::storey;
  easy.inputs["bin_share"] = pf.share;
  easy.inputs["bin_lo"] = bin.lo;
  easy.inputs["bin_hi"] = bin.hi;
  easy.intermediates["null_bin_mass"] = pf.null_mass;
  easy.intermediates["pf_ratio_raw"] = pf.ratio_raw;
  easy.intermediates["pf_bound"] = pf.pf;
  easy.intermediates["easy_bound"] = easy.bound_raw;
  easy.pf_cap_applied = pf.cap_applied;
  easy.bound_raw = easy.bound_raw * pf.pf;
  easy.bound_capped = cap_at_one(easy.bound_raw);
  return easy;
}

}  // namespace detail

// Easy bound times the Storey bound on Pr(F).
inline FdrBoundReport storey_fdr_bound(const TStatSample& tstats, double hurdle,
                                       const StoreyBinSpec& bin, const NullModel& null) {
  const auto pf = storey_pf_bound(tstats, bin, null);
  auto r = detail::combine_storey(easy_bound_from_tstats(tstats, hurdle, null), pf, bin);
  r.intermediates["count_in_bin"] = static_cast<double>(pf.count);
  return r;
}

inline FdrBoundReport storey_fdr_bound_from_shares(double share_above, double bin_share,
                                                   double hurdle, const StoreyBinSpec& bin,
                                                   const NullModel& null) {
  return detail::combine_storey(easy_bound(share_above, hurdle, null),
                                storey_pf_from_share(bin_share, bin, null), bin);
}

// Exponential |t| with the mean recovered from published t-stats through the
// memoryless property: E|t| = E(|t| | |t| > h) - h, so
// Pr(|t| > h) = exp(-h / E|t|) and the bound is tail(h) * exp(h / (mean - h)).
inline FdrBoundReport exp_extrap_bound(double mean_pub_t, double hurdle, const NullModel& null) {
  if (!(mean_pub_t > hurdle))
    throw Error(ErrorKind::infeasible_extrapolation,
                "mean published |t| must exceed the hurdle for the memoryless extrapolation");
  FdrBoundReport r;
  r.method = BoundMethod::extrapolation;
  r.hurdle = hurdle;
  r.null = null;
  r.inputs["mean_pub_t"] = mean_pub_t;
  const double implied_mean = mean_pub_t - hurdle;
  const double tail_share = std::exp(-hurdle / implied_mean);
  r.intermediates["implied_mean_abs_t"] = implied_mean;
  r.intermediates["implied_share_above"] = tail_share;
  r.intermediates["null_tail"] = null.tail(hurdle);
  r.intermediates["pf_bound"] = 1.0;
  r.bound_raw = r.intermediates["null_tail"] / tail_share;
  r.bound_capped = detail::cap_at_one(r.bound_raw);
  return r;
}

// Signed-interval version of the Pr(F) bound: share of signed t in [lo, hi]
// over the standard normal mass of [lo, hi].
inline PfBound interval_pf_bound(double share_in_interval, double lo, double hi,
                                 const NullModel& null) {
  detail::require(lo < hi, "interval must satisfy lo < hi");
  detail::require(share_in_interval > 0.0 && share_in_interval <= 1.0,
                  "share in interval must lie in (0, 1]");
  return detail::make_pf(share_in_interval, null.signed_interval_mass(lo, hi));
}

inline FdrBoundReport interval_pf_report(double share_in_interval, double lo, double hi,
                                         const NullModel& null) {
  const auto pf = interval_pf_bound(share_in_interval, lo, hi, null);
  FdrBoundReport r;
  r.method = BoundMethod::interval_pf;
  r.hurdle = std::numeric_limits<double>::quiet_NaN();
  r.null = null;
  r.inputs["share_in_interval"] = share_in_interval;
  r.inputs["interval_lo"] = lo;
  r.inputs["interval_hi"] = hi;
  r.intermediates["null_interval_mass"] = pf.null_mass;
  r.intermediates["pf_ratio_raw"] = pf.ratio_raw;
  r.intermediates["pf_bound"] = pf.pf;
  r.intermediates["true_share_at_least"] = 1.0 - pf.pf;
  r.pf_cap_applied = pf.cap_applied;
  r.bound_raw = pf.ratio_raw;
  r.bound_capped = pf.pf;
  return r;
}

// ---------------------------------------------------------------------------
// Plug-in tables from published summary statistics

enum class PluginKind { tail_share, mean_pub_t };

struct PluginRow {
  std::string label;
  PluginKind kind = PluginKind::tail_share;
  double value = 0.0;
};

struct PluginResult {
  PluginRow row;
  std::optional<FdrBoundReport> report;
  std::string error;  // set when report is empty
};

inline std::vector<PluginResult> plugin_table(const std::vector<PluginRow>& rows, double hurdle,
                                              const NullModel& null) {
  std::vector<PluginResult> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    PluginResult result{row, std::nullopt, {}};
    try {
      result.report = row.kind == PluginKind::tail_share ? easy_bound(row.value, hurdle, null)
                                                         : exp_extrap_bound(row.value, hurdle, null);
    } catch (const Error& e) {
      result.error = e.what();
    }
    out.push_back(std::move(result));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Histogram decomposition into null and implied-true components

enum class DecompositionScaling { easy, storey };

struct DecompositionRow {
  double bin_lo = 0.0;
  double bin_hi = 0.0;
  std::size_t count_empirical = 0;
  double count_null_scaled = 0.0;
  double count_true_implied = 0.0;
  double false_share = 0.0;  // NaN for an empty bin
};

struct Decomposition {
  DecompositionScaling scaling = DecompositionScaling::easy;
  double bin_width = 0.5;
  double hurdle = 2.0;
  double pf = 1.0;
  std::size_t sample_size = 0;
  std::vector<DecompositionRow> rows;
  // Bound for the discovery region |t| > hurdle; empty if nothing exceeds it.
  std::optional<FdrBoundReport> discovery_bound;
};

// Bins are [0, w], (w, 2w], ... up to max |t|, followed by an overflow row
// (K*w, inf) that holds no data but carries the remaining null mass, so the
// scaled null column sums to N * pf.
inline Decomposition histogram_decomposition(const TStatSample& tstats, const NullModel& null,
                                             DecompositionScaling scaling, double bin_width = 0.5,
                                             double hurdle = 2.0) {
  if (tstats.empty()) throw Error(ErrorKind::empty_sample, "t-stat sample is empty");
  detail::require(bin_width > 0.0, "bin width must be positive");
  const double max_t = *std::max_element(tstats.abs_t.begin(), tstats.abs_t.end());
  const auto n_bins = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(max_t / bin_width)));

  std::vector<std::size_t> counts(n_bins, 0);
  for (double t : tstats.abs_t) {
    std::size_t k = t <= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(t / bin_width)) - 1;
    counts[std::min(k, n_bins - 1)]++;
  }

  Decomposition out;
  out.scaling = scaling;
  out.bin_width = bin_width;
  out.hurdle = hurdle;
  out.sample_size = tstats.size();
  const StoreyBinSpec first_bin{0.0, bin_width};
  out.pf = scaling == DecompositionScaling::storey ? storey_pf_bound(tstats, first_bin, null).pf : 1.0;

  const double n = static_cast<double>(tstats.size());
  for (std::size_t k = 0; k <= n_bins; ++k) {
    DecompositionRow row;
    row.bin_lo = static_cast<double>(k) * bin_width;
    row.bin_hi = k < n_bins ? static_cast<double>(k + 1) * bin_width
                            : std::numeric_limits<double>::infinity();
    row.count_empirical = k < n_bins ? counts[k] : 0;
    row.count_null_scaled = n * out.pf * null.bin_mass(row.bin_lo, row.bin_hi);
    row.count_true_implied = static_cast<double>(row.count_empirical) - row.count_null_scaled;
    row.false_share = row.count_empirical > 0
                          ? row.count_null_scaled / static_cast<double>(row.count_empirical)
                          : std::numeric_limits<double>::quiet_NaN();
    out.rows.push_back(row);
  }

  if (detail::count_above(tstats, hurdle) > 0) {
    out.discovery_bound = scaling == DecompositionScaling::storey
                              ? storey_fdr_bound(tstats, hurdle, first_bin, null)
                              : easy_bound_from_tstats(tstats, hurdle, null);
  }
  return out;
}

}  // namespace fdrbound
