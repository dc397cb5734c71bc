#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "fdrbound/bounds.hpp"
#include "fdrbound/csv.hpp"
#include "fdrbound/error.hpp"
#include "fdrbound/normal.hpp"
#include "fdrbound/panel.hpp"
#include "fdrbound/random.hpp"

namespace fdrbound {

// ---------------------------------------------------------------------------
// Configuration

// Block-equicorrelated Gaussian returns:
//   r_it = sd * (sqrt(c) * Z_{block(i), t} + sqrt(1 - c) * e_it).
struct SyntheticSpec {
  std::size_t block_size = 20;
  double within_block_corr = 0.35;
  double idio_sd = 3.32;  // percent per month

  void validate() const {
    detail::require(block_size >= 1, "block_size must be at least 1");
    detail::require(within_block_corr >= 0.0 && within_block_corr < 1.0,
                    "within_block_corr must lie in [0, 1)");
    detail::require(idio_sd >= 0.0, "idio_sd must be non-negative");
  }
};

// Source panel after removing each predictor's sample mean over its observed
// months. Predictors with no observed month are dropped up front.
struct PreparedSource {
  ReturnPanel demeaned;
  std::vector<Exclusion> excluded;
};

struct ClusterBootstrapSpec {
  std::shared_ptr<const PreparedSource> source;
};

struct MixedBootstrapSpec {
  std::shared_ptr<const PreparedSource> source;
  double boot_weight = 0.65;
  double noise_sd = 3.32;  // percent per month
};

using ResidualSource = std::variant<ClusterBootstrapSpec, MixedBootstrapSpec, SyntheticSpec>;

struct SimConfig {
  std::size_t n_predictors = 2000;
  std::size_t n_months = 500;
  double gamma_bps = 75.0;  // expected return of true predictors, bps per month
  double p_false = 0.5;
  ResidualSource residual_source = SyntheticSpec{};
  std::uint64_t seed = 1;
  std::size_t n_sims = 100;
  std::size_t min_obs = 60;

  void validate() const {
    detail::require(n_predictors >= 1 && n_months >= 1, "n_predictors and n_months must be positive");
    detail::require(p_false >= 0.0 && p_false <= 1.0, "p_false must lie in [0, 1]");
    detail::require(n_sims >= 1, "n_sims must be at least 1");
    detail::require(min_obs >= 2, "min_obs must be at least 2");
    std::visit(
        [&](const auto& spec) {
          using T = std::decay_t<decltype(spec)>;
          if constexpr (std::is_same_v<T, SyntheticSpec>) {
            spec.validate();
          } else {
            detail::require(spec.source != nullptr, "bootstrap source panel is missing");
            if constexpr (std::is_same_v<T, MixedBootstrapSpec>) {
              detail::require(spec.boot_weight >= 0.0 && spec.boot_weight <= 1.0,
                              "boot_weight must lie in [0, 1]");
              detail::require(spec.noise_sd >= 0.0, "noise_sd must be non-negative");
            } else {
              detail::require(n_predictors <= spec.source->demeaned.n_predictors(),
                              "cluster bootstrap cannot create more predictors than the source has");
            }
          }
        },
        residual_source);
  }
};

struct TruthLabels {
  std::vector<std::uint8_t> is_false;

  std::size_t size() const { return is_false.size(); }
  bool operator[](std::size_t i) const { return is_false[i] != 0; }
};

// Publication probability as a step function of |t|: segment s covers
// (thresholds[s-1], thresholds[s]] and is selected with probabilities[s].
struct SelectionRule {
  std::vector<double> thresholds{1.96, 2.57};
  std::vector<double> probabilities{0.0, 0.5, 1.0};
  double s_bar = 1.0;

  static SelectionRule staircase(double s_bar = 1.0) {
    return SelectionRule{{1.96, 2.57}, {0.0, 0.5 * s_bar, s_bar}, s_bar};
  }

  void validate() const {
    detail::require(s_bar > 0.0 && s_bar <= 1.0, "s_bar must lie in (0, 1]");
    detail::require(probabilities.size() == thresholds.size() + 1,
                    "selection rule needs one probability per segment");
    for (std::size_t k = 1; k < thresholds.size(); ++k)
      detail::require(thresholds[k - 1] < thresholds[k], "thresholds must increase");
    for (std::size_t k = 0; k < probabilities.size(); ++k) {
      detail::require(probabilities[k] >= 0.0 && probabilities[k] <= 1.0,
                      "selection probabilities must lie in [0, 1]");
      if (k > 0)
        detail::require(probabilities[k - 1] <= probabilities[k],
                        "selection probabilities must be non-decreasing in |t|");
    }
  }

  double probability(double abs_t) const {
    std::size_t segment = 0;
    while (segment < thresholds.size() && abs_t > thresholds[segment]) ++segment;
    return probabilities[segment];
  }
};

struct FdpResult {
  std::size_t n_discoveries = 0;
  std::size_t n_false_discoveries = 0;
  double fdp = 0.0;
};

// ---------------------------------------------------------------------------
// Data-generating pieces

namespace detail {

inline std::vector<std::string> numbered(std::string_view prefix, std::size_t n) {
  std::vector<std::string> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fmt::format("{}{:06d}", prefix, i + 1);
  return out;
}

inline std::vector<std::size_t> draw_months(Engine& rng, std::size_t source_months,
                                            std::size_t n_months) {
  std::uniform_int_distribution<std::size_t> pick(0, source_months - 1);
  std::vector<std::size_t> months(n_months);
  for (auto& k : months) k = pick(rng);
  return months;
}

}  // namespace detail

// Truth labels are i.i.d. Bernoulli(p_false); mu is in percent per month
// (0 for false predictors, gamma_bps / 100 for true ones).
struct TruthAndMu {
  TruthLabels labels;
  std::vector<double> mu;
};

inline TruthAndMu make_truth_and_mu(const SimConfig& config, Engine& rng) {
  TruthAndMu out;
  out.labels.is_false.resize(config.n_predictors);
  out.mu.resize(config.n_predictors);
  const double gamma = config.gamma_bps / 100.0;
  for (std::size_t i = 0; i < config.n_predictors; ++i) {
    const bool is_false = uniform01(rng) < config.p_false;
    out.labels.is_false[i] = is_false ? 1 : 0;
    out.mu[i] = is_false ? 0.0 : gamma;
  }
  return out;
}

inline PreparedSource prepare_source(const ReturnPanel& source) {
  source.validate();
  std::vector<std::size_t> kept;
  PreparedSource out;
  for (std::size_t i = 0; i < source.n_predictors(); ++i) {
    const auto mask = source.mask_row(i);
    const auto n_obs = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
    if (n_obs == 0)
      out.excluded.push_back(
          {i, source.predictor_ids[i], ExclusionReason::insufficient_observations, 0});
    else
      kept.push_back(i);
  }
  if (kept.empty())
    throw Error(ErrorKind::empty_sample, "source panel has no predictor with an observed month");
  std::vector<std::string> ids;
  for (std::size_t i : kept) ids.push_back(source.predictor_ids[i]);
  out.demeaned = ReturnPanel::empty_like(std::move(ids), source.month_labels);
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const std::size_t i = kept[r];
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < source.n_months(); ++t)
      if (source.is_observed(i, t)) {
        sum += source.value(i, t);
        ++n;
      }
    const double mean = sum / static_cast<double>(n);
    for (std::size_t t = 0; t < source.n_months(); ++t)
      if (source.is_observed(i, t)) out.demeaned.set(r, t, source.value(i, t) - mean);
  }
  return out;
}

// eps_{i,tau} = demeaned source return of predictor i in month k(tau); the
// month draws are shared across predictors so each cross-section moves as a
// unit. Unobserved source cells stay unobserved.
inline ReturnPanel cluster_bootstrap_residuals(const PreparedSource& source,
                                               std::size_t n_predictors, std::size_t n_months,
                                               Engine& rng) {
  const ReturnPanel& src = source.demeaned;
  detail::require(n_predictors <= src.n_predictors(),
                  "cluster bootstrap cannot create more predictors than the source has");
  detail::require(n_months >= 1, "n_months must be positive");
  const auto months = detail::draw_months(rng, src.n_months(), n_months);
  std::vector<std::string> ids(src.predictor_ids.begin(),
                               src.predictor_ids.begin() + static_cast<std::ptrdiff_t>(n_predictors));
  auto out = ReturnPanel::empty_like(std::move(ids), detail::numbered("t", n_months));
  for (std::size_t i = 0; i < n_predictors; ++i)
    for (std::size_t tau = 0; tau < n_months; ++tau)
      if (src.is_observed(i, months[tau])) out.set(i, tau, src.value(i, months[tau]));
  return out;
}

inline ReturnPanel cluster_bootstrap_residuals(const ReturnPanel& source, std::size_t n_predictors,
                                               std::size_t n_months, Engine& rng) {
  return cluster_bootstrap_residuals(prepare_source(source), n_predictors, n_months, rng);
}

enum class PredictorDraw { with_replacement, identity };

// eps_{i,tau} = w * eps_hat_{k(i), v(tau)} + (1 - w) * delta_{i,tau},
// delta ~ Normal(0, noise_sd). Months v(tau) are drawn first and shared across
// predictors, then predictor identities k(i), then the noise.
inline ReturnPanel mixed_bootstrap_residuals(const PreparedSource& source, std::size_t n_predictors,
                                             std::size_t n_months, double boot_weight,
                                             double noise_sd, Engine& rng,
                                             PredictorDraw draw = PredictorDraw::with_replacement) {
  const ReturnPanel& src = source.demeaned;
  detail::require(boot_weight >= 0.0 && boot_weight <= 1.0, "boot_weight must lie in [0, 1]");
  detail::require(noise_sd >= 0.0, "noise_sd must be non-negative");
  detail::require(n_months >= 1 && n_predictors >= 1, "panel dimensions must be positive");
  const auto months = detail::draw_months(rng, src.n_months(), n_months);
  std::vector<std::size_t> identity(n_predictors);
  if (draw == PredictorDraw::identity) {
    detail::require(n_predictors <= src.n_predictors(),
                    "identity predictor draw needs n_predictors <= source size");
    for (std::size_t i = 0; i < n_predictors; ++i) identity[i] = i;
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, src.n_predictors() - 1);
    for (auto& k : identity) k = pick(rng);
  }
  auto out = ReturnPanel::empty_like(detail::numbered("p", n_predictors),
                                     detail::numbered("t", n_months));
  std::vector<double> noise(n_months);
  const double noise_weight = 1.0 - boot_weight;
  for (std::size_t i = 0; i < n_predictors; ++i) {
    fill_normal(rng, noise, noise_sd);
    const std::size_t k = identity[i];
    for (std::size_t tau = 0; tau < n_months; ++tau)
      if (src.is_observed(k, months[tau]))
        out.set(i, tau, boot_weight * src.value(k, months[tau]) + noise_weight * noise[tau]);
  }
  return out;
}

inline ReturnPanel synthetic_source_panel(std::size_t n_predictors, std::size_t n_months,
                                          const SyntheticSpec& spec, Engine& rng) {
  spec.validate();
  detail::require(n_predictors >= 1 && n_months >= 1, "panel dimensions must be positive");
  const std::size_t n_blocks = (n_predictors + spec.block_size - 1) / spec.block_size;
  std::vector<double> common(n_blocks * n_months);
  fill_normal(rng, common);
  const double a = std::sqrt(spec.within_block_corr);
  const double b = std::sqrt(1.0 - spec.within_block_corr);
  auto out = ReturnPanel::empty_like(detail::numbered("s", n_predictors),
                                     detail::numbered("t", n_months));
  std::fill(out.observed.begin(), out.observed.end(), std::uint8_t{1});
  std::vector<double> idio(n_months);
  for (std::size_t i = 0; i < n_predictors; ++i) {
    fill_normal(rng, idio);
    const double* z = common.data() + (i / spec.block_size) * n_months;
    double* row = out.returns.data() + i * n_months;
    for (std::size_t t = 0; t < n_months; ++t) row[t] = spec.idio_sd * (a * z[t] + b * idio[t]);
  }
  return out;
}

// r_{i,tau} = mu_i + eps_{i,tau}, mask passed through.
inline ReturnPanel assemble_panel(std::span<const double> mu, ReturnPanel residuals) {
  if (mu.size() != residuals.n_predictors())
    throw Error(ErrorKind::dimension_mismatch,
                fmt::format("mu has {} entries but the residual panel has {} predictors", mu.size(),
                            residuals.n_predictors()));
  const std::size_t t_count = residuals.n_months();
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t t = 0; t < t_count; ++t)
      if (residuals.observed[i * t_count + t]) residuals.returns[i * t_count + t] += mu[i];
  return residuals;
}

// Positions (into tstats) selected for publication, ascending. One uniform is
// consumed per entry regardless of its segment.
inline std::vector<std::size_t> apply_selection(const TStatSample& tstats, const SelectionRule& rule,
                                                Engine& rng) {
  rule.validate();
  std::vector<std::size_t> selected;
  for (std::size_t k = 0; k < tstats.size(); ++k) {
    const double u = uniform01(rng);
    if (u < rule.probability(tstats.abs_t[k])) selected.push_back(k);
  }
  return selected;
}

inline FdpResult fdp_from_counts(std::size_t discoveries, std::size_t false_discoveries) {
  FdpResult r{discoveries, false_discoveries, 0.0};
  if (discoveries > 0)
    r.fdp = static_cast<double>(false_discoveries) / static_cast<double>(discoveries);
  return r;
}

// FDP among entries with |t| > hurdle; labels are looked up through
// predictor_index. `subset` restricts attention to those positions.
inline FdpResult realized_fdp(const TruthLabels& labels, const TStatSample& tstats, double hurdle,
                              std::optional<std::span<const std::size_t>> subset = std::nullopt) {
  std::size_t r = 0;
  std::size_t f = 0;
  const auto visit = [&](std::size_t k) {
    if (tstats.abs_t[k] > hurdle) {
      ++r;
      const std::size_t i = tstats.predictor_index[k];
      if (i >= labels.size())
        throw Error(ErrorKind::dimension_mismatch, "t-stat refers to a predictor without a label");
      if (labels[i]) ++f;
    }
  };
  if (subset) {
    for (std::size_t k : *subset) visit(k);
  } else {
    for (std::size_t k = 0; k < tstats.size(); ++k) visit(k);
  }
  return fdp_from_counts(r, f);
}

// ---------------------------------------------------------------------------
// Monte Carlo harness

struct ReplicationRecord {
  FdpResult fdp;
  std::optional<double> easy;     // capped
  std::optional<double> storey;   // capped
  std::optional<double> extrap;   // capped; only with selection
  std::size_t n_tstats = 0;
};

struct GridCellReport {
  double gamma_bps = 0.0;
  double p_false = 0.0;
  double hurdle = 2.0;
  std::size_t n_sims = 0;
  double actual_fdr = 0.0;
  double mean_easy_bound = std::numeric_limits<double>::quiet_NaN();
  double mean_storey_bound = std::numeric_limits<double>::quiet_NaN();
  double mean_extrap_bound = std::numeric_limits<double>::quiet_NaN();
  double cover_rate_easy = std::numeric_limits<double>::quiet_NaN();
  double cover_rate_storey = std::numeric_limits<double>::quiet_NaN();
  double cover_rate_extrap = std::numeric_limits<double>::quiet_NaN();
  // Replications where a reported bound was undefined (nothing above the hurdle).
  std::size_t n_undefined = 0;
  std::vector<ReplicationRecord> replications;
};

namespace detail {

inline ReturnPanel draw_residuals(const SimConfig& config, Engine& rng) {
  return std::visit(
      [&](const auto& spec) -> ReturnPanel {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, SyntheticSpec>) {
          return synthetic_source_panel(config.n_predictors, config.n_months, spec, rng);
        } else if constexpr (std::is_same_v<T, ClusterBootstrapSpec>) {
          return cluster_bootstrap_residuals(*spec.source, config.n_predictors, config.n_months, rng);
        } else {
          return mixed_bootstrap_residuals(*spec.source, config.n_predictors, config.n_months,
                                           spec.boot_weight, spec.noise_sd, rng);
        }
      },
      config.residual_source);
}

inline std::optional<double> mean_abs_t_above(const TStatSample& tstats,
                                              std::span<const std::size_t> subset, double hurdle) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k : subset)
    if (tstats.abs_t[k] > hurdle) {
      sum += tstats.abs_t[k];
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace detail

// One replication: truth, residuals, panel, t-stats, optional publication
// selection, then realized FDP and the bounds.
//
// Easy and Storey bounds always use the full simulated cross-section (the
// data-mining view). With selection, the FDP is measured among published
// predictors and the extrapolation bound uses the mean |t| of published
// predictors above the hurdle.
inline ReplicationRecord run_replication(const SimConfig& config, std::size_t replication,
                                         double hurdle, const StoreyBinSpec& bin,
                                         const NullModel& null,
                                         const std::optional<SelectionRule>& selection) {
  auto truth_rng = make_stream(config.seed, StreamTag::truth, replication);
  auto resid_rng = make_stream(config.seed, StreamTag::residuals, replication);
  const auto truth = make_truth_and_mu(config, truth_rng);
  const auto panel = assemble_panel(truth.mu, detail::draw_residuals(config, resid_rng));
  const auto tstats = compute_tstats(panel, config.min_obs).sample;

  ReplicationRecord rec;
  rec.n_tstats = tstats.size();
  if (!tstats.empty() && detail::count_above(tstats, hurdle) > 0) {
    const auto storey = storey_fdr_bound(tstats, hurdle, bin, null);
    rec.easy = std::min(1.0, storey.intermediate("easy_bound"));
    rec.storey = storey.bound_capped;
  }
  if (selection) {
    auto select_rng = make_stream(config.seed, StreamTag::selection, replication);
    const auto published = apply_selection(tstats, *selection, select_rng);
    rec.fdp = realized_fdp(truth.labels, tstats, hurdle, std::span<const std::size_t>(published));
    if (const auto mean_t = detail::mean_abs_t_above(tstats, published, hurdle))
      rec.extrap = exp_extrap_bound(*mean_t, hurdle, null).bound_capped;
  } else {
    rec.fdp = realized_fdp(truth.labels, tstats, hurdle);
  }
  return rec;
}

// Aggregation is a fold in replication order, so the report does not depend on
// the thread count.
inline GridCellReport monte_carlo_fdr(const SimConfig& config, double hurdle,
                                      const StoreyBinSpec& bin, const NullModel& null,
                                      const std::optional<SelectionRule>& selection = std::nullopt,
                                      std::size_t threads = 1, bool keep_replications = false) {
  config.validate();
  bin.validate();
  if (selection) selection->validate();
  std::vector<ReplicationRecord> records(config.n_sims);
  parallel_for(config.n_sims, threads, [&](std::size_t r) {
    records[r] = run_replication(config, r, hurdle, bin, null, selection);
  });

  GridCellReport report;
  report.gamma_bps = config.gamma_bps;
  report.p_false = config.p_false;
  report.hurdle = hurdle;
  report.n_sims = config.n_sims;
  double fdp_sum = 0.0;
  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
    std::size_t covered = 0;
    void add(const std::optional<double>& bound, double fdp) {
      if (!bound) return;
      sum += *bound;
      ++n;
      if (*bound >= fdp) ++covered;
    }
    double mean() const { return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN(); }
    double rate() const {
      return n ? static_cast<double>(covered) / static_cast<double>(n)
               : std::numeric_limits<double>::quiet_NaN();
    }
  } easy, storey, extrap;
  for (const auto& rec : records) {
    fdp_sum += rec.fdp.fdp;
    easy.add(rec.easy, rec.fdp.fdp);
    storey.add(rec.storey, rec.fdp.fdp);
    extrap.add(rec.extrap, rec.fdp.fdp);
    const bool undefined = !rec.easy || (selection && !rec.extrap);
    if (undefined) ++report.n_undefined;
  }
  report.actual_fdr = fdp_sum / static_cast<double>(config.n_sims);
  report.mean_easy_bound = easy.mean();
  report.mean_storey_bound = storey.mean();
  report.cover_rate_easy = easy.rate();
  report.cover_rate_storey = storey.rate();
  if (selection) {
    report.mean_extrap_bound = extrap.mean();
    report.cover_rate_extrap = extrap.rate();
  }
  if (keep_replications) report.replications = std::move(records);
  return report;
}

// Runs every (gamma, p_false) cell of a grid with the same seed, so cells
// share random numbers.
inline std::vector<GridCellReport> run_grid(const SimConfig& base,
                                            const std::vector<double>& gammas_bps,
                                            const std::vector<double>& p_falses, double hurdle,
                                            const StoreyBinSpec& bin, const NullModel& null,
                                            const std::optional<SelectionRule>& selection,
                                            std::size_t threads = 1) {
  std::vector<GridCellReport> out;
  for (double gamma : gammas_bps)
    for (double p : p_falses) {
      SimConfig cell = base;
      cell.gamma_bps = gamma;
      cell.p_false = p;
      out.push_back(monte_carlo_fdr(cell, hurdle, bin, null, selection, threads));
    }
  return out;
}

inline std::string grid_csv(const std::vector<GridCellReport>& cells) {
  std::string out =
      "gamma_bps,p_false,hurdle,n_sims,actual_fdr,mean_easy_bound,mean_storey_bound,"
      "mean_extrap_bound,cover_rate_easy,cover_rate_storey,n_undefined\n";
  using csv::format_double;
  for (const auto& c : cells)
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", format_double(c.gamma_bps),
                       format_double(c.p_false), format_double(c.hurdle), c.n_sims,
                       format_double(c.actual_fdr), format_double(c.mean_easy_bound),
                       format_double(c.mean_storey_bound), format_double(c.mean_extrap_bound),
                       format_double(c.cover_rate_easy), format_double(c.cover_rate_storey),
                       c.n_undefined);
  return out;
}

// Pearson correlation over months observed in both rows; NaN if fewer than 2.
inline double pairwise_correlation(const ReturnPanel& panel, std::size_t i, std::size_t j) {
  double sx = 0, sy = 0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < panel.n_months(); ++t)
    if (panel.is_observed(i, t) && panel.is_observed(j, t)) {
      sx += panel.value(i, t);
      sy += panel.value(j, t);
      ++n;
    }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mx = sx / static_cast<double>(n), my = sy / static_cast<double>(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t t = 0; t < panel.n_months(); ++t)
    if (panel.is_observed(i, t) && panel.is_observed(j, t)) {
      const double dx = panel.value(i, t) - mx, dy = panel.value(j, t) - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace fdrbound
