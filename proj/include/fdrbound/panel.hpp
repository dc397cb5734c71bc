#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fdrbound/csv.hpp"
#include "fdrbound/error.hpp"

namespace fdrbound {

// N predictors x T months of long-short returns (percent per month).
// Storage is row-major so each predictor's history is contiguous.
struct ReturnPanel {
  std::vector<std::string> predictor_ids;
  std::vector<std::string> month_labels;
  std::vector<double> returns;
  std::vector<std::uint8_t> observed;

  static ReturnPanel empty_like(std::vector<std::string> ids, std::vector<std::string> months) {
    ReturnPanel panel;
    panel.predictor_ids = std::move(ids);
    panel.month_labels = std::move(months);
    const std::size_t cells = panel.predictor_ids.size() * panel.month_labels.size();
    panel.returns.assign(cells, 0.0);
    panel.observed.assign(cells, 0);
    return panel;
  }

  std::size_t n_predictors() const { return predictor_ids.size(); }
  std::size_t n_months() const { return month_labels.size(); }

  double& value(std::size_t i, std::size_t t) { return returns[i * n_months() + t]; }
  double value(std::size_t i, std::size_t t) const { return returns[i * n_months() + t]; }
  bool is_observed(std::size_t i, std::size_t t) const { return observed[i * n_months() + t] != 0; }
  void set(std::size_t i, std::size_t t, double v) {
    returns[i * n_months() + t] = v;
    observed[i * n_months() + t] = 1;
  }

  std::span<const double> row(std::size_t i) const {
    return {returns.data() + i * n_months(), n_months()};
  }
  std::span<const std::uint8_t> mask_row(std::size_t i) const {
    return {observed.data() + i * n_months(), n_months()};
  }

  void validate() const {
    if (predictor_ids.empty() || month_labels.empty())
      throw Error(ErrorKind::invalid_argument, "panel needs at least one predictor and one month");
    if (returns.size() != n_predictors() * n_months() || observed.size() != returns.size())
      throw Error(ErrorKind::dimension_mismatch, "panel storage does not match N x T");
    std::unordered_set<std::string> seen;
    for (const auto& id : predictor_ids)
      if (!seen.insert(id).second)
        throw Error(ErrorKind::duplicate_key, "predictor id '" + id + "' appears twice");
    for (std::size_t t = 1; t < month_labels.size(); ++t)
      if (!(month_labels[t - 1] < month_labels[t]))
        throw Error(ErrorKind::invalid_argument,
                    "month labels must be strictly increasing at '" + month_labels[t] + "'");
    for (std::size_t k = 0; k < returns.size(); ++k)
      if (observed[k] && !std::isfinite(returns[k]))
        throw Error(ErrorKind::invalid_argument, "observed return is not finite");
  }
};

// T months x K factors (percent per month), row-major.
struct FactorPanel {
  std::vector<std::string> factor_names;
  std::vector<std::string> month_labels;
  std::vector<double> values;

  std::size_t n_months() const { return month_labels.size(); }
  std::size_t n_factors() const { return factor_names.size(); }
  double value(std::size_t t, std::size_t k) const { return values[t * n_factors() + k]; }
};

struct TStatSample {
  std::vector<double> abs_t;
  std::vector<std::size_t> n_obs_used;
  // Row of each entry in the originating panel (or simulation) and its id.
  std::vector<std::size_t> predictor_index;
  std::vector<std::string> predictor_ids;
  std::string source_tag;

  std::size_t size() const { return abs_t.size(); }
  bool empty() const { return abs_t.empty(); }

  // Builds a sample from bare |t| values (indices 0..n-1, one observation each).
  static TStatSample from_values(std::vector<double> values, std::string tag = "values") {
    TStatSample s;
    s.abs_t = std::move(values);
    s.n_obs_used.assign(s.abs_t.size(), 1);
    s.predictor_index.resize(s.abs_t.size());
    s.predictor_ids.resize(s.abs_t.size());
    for (std::size_t i = 0; i < s.abs_t.size(); ++i) {
      s.predictor_index[i] = i;
      s.predictor_ids[i] = std::to_string(i);
    }
    s.source_tag = std::move(tag);
    s.validate();
    return s;
  }

  void push_back(double t, std::size_t n_obs, std::size_t index, std::string id) {
    abs_t.push_back(t);
    n_obs_used.push_back(n_obs);
    predictor_index.push_back(index);
    predictor_ids.push_back(std::move(id));
  }

  void validate() const {
    if (abs_t.size() != n_obs_used.size() || abs_t.size() != predictor_index.size() ||
        abs_t.size() != predictor_ids.size())
      throw Error(ErrorKind::dimension_mismatch, "t-stat sample columns differ in length");
    for (double t : abs_t)
      if (!(t >= 0.0) || !std::isfinite(t))
        throw Error(ErrorKind::invalid_argument, "|t| values must be finite and non-negative");
  }
};

enum class ExclusionReason { insufficient_observations, zero_variance, rank_deficient };

inline std::string_view to_string(ExclusionReason reason) {
  switch (reason) {
    case ExclusionReason::insufficient_observations: return "insufficient_observations";
    case ExclusionReason::zero_variance: return "zero_variance";
    case ExclusionReason::rank_deficient: return "rank_deficient";
  }
  return "unknown";
}

struct Exclusion {
  std::size_t index = 0;
  std::string predictor_id;
  ExclusionReason reason = ExclusionReason::insufficient_observations;
  std::size_t n_obs = 0;
};

struct TStatResult {
  TStatSample sample;
  std::vector<Exclusion> excluded;
};

// ---------------------------------------------------------------------------
// Loading

enum class PanelLayout { long_format, wide_format };

struct PanelFormat {
  char delimiter = ',';
  PanelLayout layout = PanelLayout::long_format;
};

struct LoadReport {
  std::size_t rows_read = 0;
  // Cells present in the file whose return was blank or not a number.
  std::size_t unparseable_cells = 0;
  // (predictor, month) combinations never mentioned in a long-format file.
  std::size_t absent_cells = 0;
};

struct LoadedPanel {
  ReturnPanel panel;
  LoadReport report;
};

namespace detail {

inline std::size_t column_of(const std::vector<std::string>& header, std::string_view name) {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return c;
  throw Error(ErrorKind::parse_error, "header is missing column '" + std::string(name) + "'");
}

inline bool next_record(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!csv::trim(line).empty()) return true;
  }
  return false;
}

inline std::string strip_bom(std::string line) {
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
    line.erase(0, 3);
  return line;
}

inline LoadedPanel load_long(std::istream& in, char delimiter) {
  std::string line;
  if (!next_record(in, line)) throw Error(ErrorKind::no_parsable_rows, "file has no header row");
  const auto header = csv::split(strip_bom(line), delimiter);
  const std::size_t id_col = column_of(header, "predictor_id");
  const std::size_t month_col = column_of(header, "month");
  const std::size_t ret_col = column_of(header, "ret");
  const std::size_t needed = std::max({id_col, month_col, ret_col}) + 1;

  struct Cell {
    std::size_t predictor;
    std::string month;
    std::optional<double> ret;
  };
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> id_index;
  std::vector<Cell> cells;
  std::map<std::pair<std::size_t, std::string>, std::size_t> seen;
  LoadReport report;

  while (next_record(in, line)) {
    const auto fields = csv::split(line, delimiter);
    if (fields.size() < needed)
      throw Error(ErrorKind::parse_error, "row " + std::to_string(report.rows_read + 2) +
                                              " has too few fields");
    ++report.rows_read;
    const std::string& id = fields[id_col];
    const std::string& month = fields[month_col];
    auto [it, inserted] = id_index.try_emplace(id, ids.size());
    if (inserted) ids.push_back(id);
    if (!seen.emplace(std::make_pair(it->second, month), cells.size()).second)
      throw Error(ErrorKind::duplicate_key,
                  "duplicate (predictor, month) pair (" + id + ", " + month + ")");
    auto ret = csv::parse_double(fields[ret_col]);
    if (!ret) ++report.unparseable_cells;
    cells.push_back({it->second, month, ret});
  }

  const bool any_value =
      std::any_of(cells.begin(), cells.end(), [](const Cell& c) { return c.ret.has_value(); });
  if (!any_value) throw Error(ErrorKind::no_parsable_rows, "no row carries a numeric return");

  std::vector<std::string> months;
  for (const auto& c : cells) months.push_back(c.month);
  std::sort(months.begin(), months.end());
  months.erase(std::unique(months.begin(), months.end()), months.end());
  std::unordered_map<std::string, std::size_t> month_index;
  for (std::size_t t = 0; t < months.size(); ++t) month_index.emplace(months[t], t);

  LoadedPanel out{ReturnPanel::empty_like(std::move(ids), std::move(months)), report};
  for (const auto& c : cells)
    if (c.ret) out.panel.set(c.predictor, month_index.at(c.month), *c.ret);
  out.report.absent_cells = out.panel.n_predictors() * out.panel.n_months() - cells.size();
  out.panel.validate();
  return out;
}

inline LoadedPanel load_wide(std::istream& in, char delimiter) {
  std::string line;
  if (!next_record(in, line)) throw Error(ErrorKind::no_parsable_rows, "file has no header row");
  const auto header = csv::split(strip_bom(line), delimiter);
  if (header.size() < 2 || header[0] != "predictor_id")
    throw Error(ErrorKind::parse_error, "wide header must be predictor_id,<month>,...");

  // Columns are re-ordered so months ascend.
  std::vector<std::size_t> order(header.size() - 1);
  for (std::size_t c = 0; c < order.size(); ++c) order[c] = c + 1;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return header[a] < header[b]; });
  std::vector<std::string> months;
  for (std::size_t c : order) months.push_back(header[c]);
  for (std::size_t t = 1; t < months.size(); ++t)
    if (months[t - 1] == months[t])
      throw Error(ErrorKind::duplicate_key, "month column '" + months[t] + "' appears twice");

  std::vector<std::string> ids;
  std::vector<std::vector<std::optional<double>>> rows;
  std::unordered_set<std::string> seen;
  LoadReport report;
  while (next_record(in, line)) {
    auto fields = csv::split(line, delimiter);
    ++report.rows_read;
    fields.resize(header.size());
    if (!seen.insert(fields[0]).second)
      throw Error(ErrorKind::duplicate_key, "predictor id '" + fields[0] + "' appears twice");
    ids.push_back(fields[0]);
    std::vector<std::optional<double>> values;
    for (std::size_t c : order) {
      auto v = csv::parse_double(fields[c]);
      if (!v) ++report.unparseable_cells;
      values.push_back(v);
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw Error(ErrorKind::no_parsable_rows, "file has no data rows");

  LoadedPanel out{ReturnPanel::empty_like(std::move(ids), std::move(months)), report};
  bool any_value = false;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t t = 0; t < rows[i].size(); ++t)
      if (rows[i][t]) {
        out.panel.set(i, t, *rows[i][t]);
        any_value = true;
      }
  if (!any_value) throw Error(ErrorKind::no_parsable_rows, "no cell carries a numeric return");
  out.panel.validate();
  return out;
}

}  // namespace detail

inline LoadedPanel load_panel_csv(std::istream& in, const PanelFormat& format = {}) {
  return format.layout == PanelLayout::long_format ? detail::load_long(in, format.delimiter)
                                                   : detail::load_wide(in, format.delimiter);
}

inline LoadedPanel load_panel_csv(const std::string& path, const PanelFormat& format = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::missing_file, "cannot open panel file '" + path + "'");
  return load_panel_csv(in, format);
}

inline FactorPanel load_factor_csv(std::istream& in, char delimiter = ',') {
  std::string line;
  if (!detail::next_record(in, line))
    throw Error(ErrorKind::no_parsable_rows, "factor file has no header row");
  const auto header = csv::split(detail::strip_bom(line), delimiter);
  if (header.size() < 2 || header[0] != "month")
    throw Error(ErrorKind::parse_error, "factor header must be month,<factor>,...");
  FactorPanel factors;
  factors.factor_names.assign(header.begin() + 1, header.end());
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  while (detail::next_record(in, line)) {
    const auto fields = csv::split(line, delimiter);
    if (fields.size() != header.size())
      throw Error(ErrorKind::parse_error, "factor row for '" + fields[0] + "' has wrong width");
    std::vector<double> values;
    for (std::size_t k = 1; k < fields.size(); ++k) {
      auto v = csv::parse_double(fields[k]);
      if (!v)
        throw Error(ErrorKind::parse_error,
                    "factor '" + header[k] + "' in month '" + fields[0] + "' is not numeric");
      values.push_back(*v);
    }
    rows.emplace_back(fields[0], std::move(values));
  }
  if (rows.empty()) throw Error(ErrorKind::no_parsable_rows, "factor file has no data rows");
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (t > 0 && rows[t - 1].first == rows[t].first)
      throw Error(ErrorKind::duplicate_key, "factor month '" + rows[t].first + "' appears twice");
    factors.month_labels.push_back(rows[t].first);
    factors.values.insert(factors.values.end(), rows[t].second.begin(), rows[t].second.end());
  }
  return factors;
}

inline FactorPanel load_factor_csv(const std::string& path, char delimiter = ',') {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::missing_file, "cannot open factor file '" + path + "'");
  return load_factor_csv(in, delimiter);
}

// ---------------------------------------------------------------------------
// t-statistics

namespace detail {

// |mean / sd * sqrt(n)| with the n-1 denominator. Returns nullopt when the
// observations are all identical (zero sample variance).
inline std::optional<double> mean_t_stat(std::span<const double> x) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if (*lo == *hi) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double sum = 0.0;
  for (double v : x) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return std::abs(mean / sd * std::sqrt(n));
}

}  // namespace detail

inline TStatResult compute_tstats(const ReturnPanel& panel, std::size_t min_obs = 60) {
  detail::require(min_obs >= 2, "min_obs must be at least 2");
  TStatResult result;
  result.sample.source_tag = "raw";
  std::vector<double> buffer;
  buffer.reserve(panel.n_months());
  for (std::size_t i = 0; i < panel.n_predictors(); ++i) {
    buffer.clear();
    const auto values = panel.row(i);
    const auto mask = panel.mask_row(i);
    for (std::size_t t = 0; t < values.size(); ++t)
      if (mask[t]) buffer.push_back(values[t]);
    if (buffer.size() < min_obs) {
      result.excluded.push_back(
          {i, panel.predictor_ids[i], ExclusionReason::insufficient_observations, buffer.size()});
      continue;
    }
    const auto t = detail::mean_t_stat(buffer);
    if (!t) {
      result.excluded.push_back(
          {i, panel.predictor_ids[i], ExclusionReason::zero_variance, buffer.size()});
      continue;
    }
    result.sample.push_back(*t, buffer.size(), i, panel.predictor_ids[i]);
  }
  return result;
}

// Time-series OLS of each predictor's returns on an intercept plus the chosen
// factors; |t| of the intercept with homoskedastic standard errors.
//
// Factor columns that are identically zero over a predictor's observed months
// carry no information about the intercept and are dropped; any other rank
// deficiency excludes the predictor. If every factor column drops out the
// regression is the plain mean test and the raw t-statistic is returned.
inline TStatResult compute_alpha_tstats(const ReturnPanel& panel, const FactorPanel& factors,
                                        const std::vector<std::string>& model,
                                        std::size_t min_obs = 60) {
  if (model.empty()) return compute_tstats(panel, min_obs);
  detail::require(min_obs >= model.size() + 2, "min_obs must be at least K+2");

  std::vector<std::size_t> columns;
  for (const auto& name : model) {
    auto it = std::find(factors.factor_names.begin(), factors.factor_names.end(), name);
    if (it == factors.factor_names.end())
      throw Error(ErrorKind::invalid_argument, "factor '" + name + "' not in factor file");
    columns.push_back(static_cast<std::size_t>(it - factors.factor_names.begin()));
  }
  std::unordered_map<std::string, std::size_t> factor_row;
  for (std::size_t t = 0; t < factors.n_months(); ++t)
    factor_row.emplace(factors.month_labels[t], t);
  std::vector<std::size_t> month_to_factor(panel.n_months());
  for (std::size_t t = 0; t < panel.n_months(); ++t) {
    auto it = factor_row.find(panel.month_labels[t]);
    if (it == factor_row.end())
      throw Error(ErrorKind::misaligned_months,
                  "panel month '" + panel.month_labels[t] + "' missing from factor file");
    month_to_factor[t] = it->second;
  }

  TStatResult result;
  result.sample.source_tag = "alpha";
  std::vector<std::size_t> months;
  std::vector<double> y_buffer;
  for (std::size_t i = 0; i < panel.n_predictors(); ++i) {
    months.clear();
    y_buffer.clear();
    for (std::size_t t = 0; t < panel.n_months(); ++t)
      if (panel.is_observed(i, t)) {
        months.push_back(t);
        y_buffer.push_back(panel.value(i, t));
      }
    const std::size_t n = months.size();
    const auto exclude = [&](ExclusionReason reason) {
      result.excluded.push_back({i, panel.predictor_ids[i], reason, n});
    };
    if (n < min_obs) {
      exclude(ExclusionReason::insufficient_observations);
      continue;
    }

    std::vector<std::size_t> kept;
    for (std::size_t col : columns) {
      bool all_zero = true;
      for (std::size_t t : months)
        if (factors.value(month_to_factor[t], col) != 0.0) {
          all_zero = false;
          break;
        }
      if (!all_zero) kept.push_back(col);
    }
    if (kept.empty()) {
      const auto t = detail::mean_t_stat(y_buffer);
      if (!t) exclude(ExclusionReason::zero_variance);
      else result.sample.push_back(*t, n, i, panel.predictor_ids[i]);
      continue;
    }

    const auto p = static_cast<Eigen::Index>(kept.size() + 1);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), p);
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(y_buffer.data(), static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
      x(static_cast<Eigen::Index>(r), 0) = 1.0;
      for (std::size_t k = 0; k < kept.size(); ++k)
        x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k + 1)) =
            factors.value(month_to_factor[months[r]], kept[k]);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rank_check(x);
    if (rank_check.rank() < p) {
      exclude(ExclusionReason::rank_deficient);
      continue;
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
    const Eigen::VectorXd beta = qr.solve(y);
    const Eigen::VectorXd resid = y - x * beta;
    const double rss = resid.squaredNorm();
    const double tol = 1e-12 * std::max(1.0, y.cwiseAbs().maxCoeff());
    if (rss <= tol * tol * static_cast<double>(n)) {
      // Exact fit: no residual variance. A zero intercept is a zero t-stat;
      // anything else is unbounded and treated like a zero-variance series.
      if (std::abs(beta(0)) <= tol) result.sample.push_back(0.0, n, i, panel.predictor_ids[i]);
      else exclude(ExclusionReason::zero_variance);
      continue;
    }
    const Eigen::MatrixXd r_upper =
        qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd r_inv =
        r_upper.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    const double s2 = rss / static_cast<double>(static_cast<Eigen::Index>(n) - p);
    const double se_alpha = std::sqrt(s2 * r_inv.row(0).squaredNorm());
    result.sample.push_back(std::abs(beta(0) / se_alpha), n, i, panel.predictor_ids[i]);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Summary shares

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct ShareRow {
  std::string stat;  // "share_above" or "share_in_bin"
  std::string label;
  std::size_t count = 0;
  std::size_t total = 0;
  double share = 0.0;
};

// Hurdle exceedance is strict (|t| > h); bins are closed [lo, hi].
inline std::vector<ShareRow> panel_summary(const TStatSample& tstats,
                                           const std::vector<double>& hurdles,
                                           const std::vector<Interval>& bins) {
  if (tstats.empty()) throw Error(ErrorKind::empty_sample, "t-stat sample is empty");
  const std::size_t total = tstats.size();
  std::vector<ShareRow> rows;
  for (double h : hurdles) {
    detail::require(h >= 0.0, "hurdles must be non-negative");
    const auto count = static_cast<std::size_t>(
        std::count_if(tstats.abs_t.begin(), tstats.abs_t.end(), [h](double t) { return t > h; }));
    rows.push_back({"share_above", csv::format_double(h), count, total,
                    static_cast<double>(count) / static_cast<double>(total)});
  }
  for (const auto& bin : bins) {
    detail::require(bin.lo >= 0.0 && bin.lo <= bin.hi, "bins must satisfy 0 <= lo <= hi");
    const auto count = static_cast<std::size_t>(
        std::count_if(tstats.abs_t.begin(), tstats.abs_t.end(),
                      [&](double t) { return t >= bin.lo && t <= bin.hi; }));
    rows.push_back({"share_in_bin",
                    "[" + csv::format_double(bin.lo) + "," + csv::format_double(bin.hi) + "]",
                    count, total, static_cast<double>(count) / static_cast<double>(total)});
  }
  return rows;
}

inline std::string summary_csv(const std::vector<ShareRow>& rows) {
  std::string out = "stat,threshold_or_bin,count,share\n";
  for (const auto& r : rows)
    out += r.stat + "," + csv::quote_if_needed(r.label) + "," + std::to_string(r.count) + "," +
           csv::format_double(r.share) + "\n";
  return out;
}

}  // namespace fdrbound
