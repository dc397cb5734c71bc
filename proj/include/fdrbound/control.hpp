#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string_view>
#include <vector>

#include "fdrbound/error.hpp"
#include "fdrbound/normal.hpp"
#include "fdrbound/panel.hpp"

namespace fdrbound {

enum class ControlMethod { bh95, by13 };

inline std::string_view to_string(ControlMethod method) {
  return method == ControlMethod::bh95 ? "bh95" : "by13";
}

struct ControlRequest {
  double q_star = 0.05;
  ControlMethod method = ControlMethod::bh95;
  NullModel null;

  void validate() const {
    detail::require(q_star > 0.0 && q_star < 1.0, "q* must lie in (0, 1)");
  }
};

struct HurdleResult {
  // Empty when no candidate hurdle satisfies the constraint.
  std::optional<double> hurdle;
  // Positions in the input sample (not predictor_index), ascending.
  std::vector<std::size_t> discoveries;
  // penalty * tail(h*) / (share of |t| >= h*); NaN when infeasible.
  double fdr_bound_at_hurdle = 0.0;
  double penalty = 1.0;

  bool feasible() const { return hurdle.has_value(); }
};

// 1 + 1/2 + ... + 1/m.
inline double harmonic_number(std::size_t m) {
  double sum = 0.0;
  for (std::size_t j = m; j >= 1; --j) sum += 1.0 / static_cast<double>(j);
  return sum;
}

namespace detail {

// Smallest observed |t| = h with penalty * tail(h) <= #{|t_i| >= h} / M * q*.
// Candidates are scanned from the largest |t| down; tied values form one
// candidate so they are discovered or rejected together.
inline HurdleResult min_hurdle_search(const TStatSample& tstats, double q_star, double penalty,
                                      const NullModel& null) {
  if (tstats.empty()) throw Error(ErrorKind::empty_sample, "t-stat sample is empty");
  const std::size_t m = tstats.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return tstats.abs_t[a] > tstats.abs_t[b]; });

  HurdleResult result;
  result.penalty = penalty;
  const double q_eff = q_star / penalty;
  std::size_t best_count = 0;
  std::size_t k = 0;
  while (k < m) {
    const double h = tstats.abs_t[order[k]];
    std::size_t end = k;
    while (end < m && tstats.abs_t[order[end]] == h) ++end;
    // #{|t_i| >= h} = end
    if (null.tail(h) <= static_cast<double>(end) / static_cast<double>(m) * q_eff) {
      result.hurdle = h;
      best_count = end;
    }
    k = end;
  }
  if (!result.hurdle) {
    result.fdr_bound_at_hurdle = std::numeric_limits<double>::quiet_NaN();
    return result;
  }
  result.discoveries.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(best_count));
  std::sort(result.discoveries.begin(), result.discoveries.end());
  result.fdr_bound_at_hurdle =
      penalty * null.tail(*result.hurdle) * static_cast<double>(m) / static_cast<double>(best_count);
  return result;
}

}  // namespace detail

// Benjamini-Hochberg step-up written as the minimal t-stat hurdle whose easy
// FDR bound is at most q*.
inline HurdleResult bh95_hurdle(const TStatSample& tstats, const ControlRequest& request) {
  request.validate();
  return detail::min_hurdle_search(tstats, request.q_star, 1.0, request.null);
}

// Benjamini-Yekutieli (Theorem 1.3): BH95 with q* divided by sum_{j<=M} 1/j.
inline HurdleResult by13_hurdle(const TStatSample& tstats, const ControlRequest& request) {
  request.validate();
  return detail::min_hurdle_search(tstats, request.q_star, harmonic_number(tstats.size()),
                                   request.null);
}

inline HurdleResult control_hurdle(const TStatSample& tstats, const ControlRequest& request) {
  return request.method == ControlMethod::bh95 ? bh95_hurdle(tstats, request)
                                               : by13_hurdle(tstats, request);
}

struct PenalizedBound {
  double raw = 0.0;
  double capped = 0.0;
};

// penalty * tail(h) / share of |t| > h (strict).
inline PenalizedBound fdr_bound_at_hurdle(const TStatSample& tstats, double hurdle,
                                          const NullModel& null, double penalty = 1.0) {
  if (tstats.empty()) throw Error(ErrorKind::empty_sample, "t-stat sample is empty");
  const auto above = static_cast<std::size_t>(std::count_if(
      tstats.abs_t.begin(), tstats.abs_t.end(), [hurdle](double t) { return t > hurdle; }));
  if (above == 0)
    throw Error(ErrorKind::no_discoveries, "no |t| exceeds the hurdle; the bound is undefined");
  const double share = static_cast<double>(above) / static_cast<double>(tstats.size());
  const double raw = penalty * null.tail(hurdle) / share;
  return {raw, std::min(1.0, raw)};
}

// Two-sided Bonferroni hurdle: tail(h) = level / m, by bisection on [0, 10].
inline double bonferroni_hurdle(std::size_t m_tests, double level, const NullModel& null) {
  detail::require(m_tests >= 1, "m_tests must be at least 1");
  detail::require(level > 0.0 && level < 1.0, "level must lie in (0, 1)");
  const double target = level / static_cast<double>(m_tests);
  double lo = 0.0;
  double hi = 10.0;
  while (hi - lo > 1e-9) {
    const double mid = 0.5 * (lo + hi);
    if (null.tail(mid) > target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace fdrbound
