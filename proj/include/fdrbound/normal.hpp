#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

#include "fdrbound/error.hpp"

namespace fdrbound {

// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Pr(|Z| > h) for Z ~ N(0,1), h >= 0. erfc keeps precision deep in the tail.
inline double normal_two_sided_tail(double h) { return std::erfc(h / std::numbers::sqrt2); }

enum class NullKind { exact_normal, paper_mode };

inline std::string_view to_string(NullKind kind) {
  return kind == NullKind::exact_normal ? "exact" : "paper";
}

inline NullKind parse_null_kind(std::string_view text) {
  if (text == "exact" || text == "exact_normal") return NullKind::exact_normal;
  if (text == "paper" || text == "paper_mode") return NullKind::paper_mode;
  throw Error(ErrorKind::invalid_argument, "unknown null model '" + std::string(text) + "'");
}

// Distribution of |t| for a false predictor.
//
// exact_normal uses the two-sided standard normal throughout. paper_mode is
// identical except for the two rounded constants used in hand calculations:
// Pr(|t| > 2) = 0.05 and Pr(|t| in [0, 0.5]) = 0.383.
struct NullModel {
  NullKind kind = NullKind::exact_normal;

  static constexpr double paper_tail_at_2 = 0.05;
  static constexpr double paper_half_sigma_mass = 0.383;

  static NullModel exact() { return {NullKind::exact_normal}; }
  static NullModel paper() { return {NullKind::paper_mode}; }

  std::string description() const {
    return kind == NullKind::exact_normal
               ? "two-sided standard normal"
               : "two-sided standard normal with tail(2)=0.05 and mass[0,0.5]=0.383";
  }

  double tail(double hurdle) const {
    detail::require(hurdle >= 0.0 && !std::isnan(hurdle), "hurdle must be non-negative");
    if (kind == NullKind::paper_mode && hurdle == 2.0) return paper_tail_at_2;
    return normal_two_sided_tail(hurdle);
  }

  // Mass of |t| on [lo, hi]; hi may be +inf.
  double bin_mass(double lo, double hi) const {
    detail::require(lo >= 0.0 && lo <= hi, "bin must satisfy 0 <= lo <= hi");
    if (kind == NullKind::paper_mode && lo == 0.0 && hi == 0.5) return paper_half_sigma_mass;
    if (std::isinf(hi)) return normal_two_sided_tail(lo);
    return 2.0 * (normal_cdf(hi) - normal_cdf(lo));
  }

  // Mass of the signed t on [lo, hi]; used for intervals that straddle zero.
  double signed_interval_mass(double lo, double hi) const {
    detail::require(lo < hi, "interval must satisfy lo < hi");
    return normal_cdf(hi) - normal_cdf(lo);
  }

  bool operator==(const NullModel&) const = default;
};

}  // namespace fdrbound
