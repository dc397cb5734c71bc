#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fdrbound/bounds.hpp"
#include "fdrbound/control.hpp"
#include "fdrbound/csv.hpp"
#include "fdrbound/error.hpp"
#include "fdrbound/panel.hpp"

namespace fdrbound::io {

using csv::format_double;

// JSON has no NaN or infinity; those become null.
inline nlohmann::json number_or_null(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

inline nlohmann::json to_json(const FdrBoundReport& r) {
  nlohmann::json j;
  j["method"] = std::string(to_string(r.method));
  j["hurdle"] = number_or_null(r.hurdle);
  j["null_mode"] = std::string(to_string(r.null.kind));
  j["bound_raw"] = number_or_null(r.bound_raw);
  j["bound_capped"] = number_or_null(r.bound_capped);
  j["pf_cap_applied"] = r.pf_cap_applied;
  j["sample_size"] = r.sample_size;
  auto& inputs = j["inputs"] = nlohmann::json::object();
  for (const auto& [k, v] : r.inputs) inputs[k] = number_or_null(v);
  auto& mids = j["intermediates"] = nlohmann::json::object();
  for (const auto& [k, v] : r.intermediates) mids[k] = number_or_null(v);
  return j;
}

// One key,value row per field; maps are flattened as inputs.<key>.
inline std::string report_csv(const FdrBoundReport& r) {
  std::string out = "field,value\n";
  out += fmt::format("method,{}\n", to_string(r.method));
  out += fmt::format("hurdle,{}\n", format_double(r.hurdle));
  out += fmt::format("null_mode,{}\n", to_string(r.null.kind));
  out += fmt::format("bound_raw,{}\n", format_double(r.bound_raw));
  out += fmt::format("bound_capped,{}\n", format_double(r.bound_capped));
  out += fmt::format("pf_cap_applied,{}\n", r.pf_cap_applied ? 1 : 0);
  out += fmt::format("sample_size,{}\n", r.sample_size);
  for (const auto& [k, v] : r.inputs) out += fmt::format("inputs.{},{}\n", k, format_double(v));
  for (const auto& [k, v] : r.intermediates)
    out += fmt::format("intermediates.{},{}\n", k, format_double(v));
  return out;
}

inline std::string decomposition_csv(const Decomposition& d) {
  std::string out = "bin_lo,bin_hi,count_empirical,count_null_scaled,count_true_implied,false_share\n";
  for (const auto& row : d.rows)
    out += fmt::format("{},{},{},{},{},{}\n", format_double(row.bin_lo), format_double(row.bin_hi),
                       row.count_empirical, format_double(row.count_null_scaled),
                       format_double(row.count_true_implied), format_double(row.false_share));
  return out;
}

inline std::string control_csv(const ControlRequest& request, const HurdleResult& result) {
  std::string out = "method,q_star,penalty,hurdle,n_discoveries\n";
  out += fmt::format("{},{},{},{},{}\n", to_string(request.method), format_double(request.q_star),
                     format_double(result.penalty),
                     result.hurdle ? format_double(*result.hurdle) : std::string("nan"),
                     result.discoveries.size());
  return out;
}

inline std::string discoveries_csv(const TStatSample& tstats, const HurdleResult& result) {
  std::string out = "predictor_id,abs_t\n";
  for (std::size_t k : result.discoveries)
    out += fmt::format("{},{}\n", csv::quote_if_needed(tstats.predictor_ids[k]),
                       format_double(tstats.abs_t[k]));
  return out;
}

inline std::string tstats_csv(const TStatSample& tstats) {
  std::string out = "predictor_id,abs_t,n_obs\n";
  for (std::size_t k = 0; k < tstats.size(); ++k)
    out += fmt::format("{},{},{}\n", csv::quote_if_needed(tstats.predictor_ids[k]),
                       format_double(tstats.abs_t[k]), tstats.n_obs_used[k]);
  return out;
}

inline std::string exclusions_csv(const std::vector<Exclusion>& excluded) {
  std::string out = "predictor_id,reason,n_obs\n";
  for (const auto& e : excluded)
    out += fmt::format("{},{},{}\n", csv::quote_if_needed(e.predictor_id), to_string(e.reason),
                       e.n_obs);
  return out;
}

// Reads a t-stat CSV with an abs_t column (predictor_id and n_obs optional).
// Signed values are accepted and folded to |t|.
inline TStatSample load_tstats_csv(std::istream& in, const std::string& tag = "file") {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::no_parsable_rows, "t-stat file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = csv::split(line);
  std::size_t t_col = header.size(), id_col = header.size(), n_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto name = csv::trim(header[c]);
    if (name == "abs_t" || name == "t") t_col = c;
    else if (name == "predictor_id") id_col = c;
    else if (name == "n_obs") n_col = c;
  }
  if (t_col == header.size())
    throw Error(ErrorKind::parse_error, "t-stat file needs an abs_t column");
  TStatSample s;
  s.source_tag = tag;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (csv::trim(line).empty()) continue;
    const auto fields = csv::split(line);
    ++row;
    if (t_col >= fields.size())
      throw Error(ErrorKind::parse_error, fmt::format("row {} is missing the t-stat field", row));
    const auto t = csv::parse_double(fields[t_col]);
    if (!t || !std::isfinite(*t))
      throw Error(ErrorKind::parse_error,
                  fmt::format("row {}: cannot parse t-stat '{}'", row, fields[t_col]));
    std::string id = id_col < fields.size() ? std::string(csv::trim(fields[id_col]))
                                            : fmt::format("row{}", row);
    std::size_t n_obs = 0;
    if (n_col < fields.size()) {
      const auto n = csv::parse_double(fields[n_col]);
      if (n && *n >= 0) n_obs = static_cast<std::size_t>(*n);
    }
    s.push_back(std::abs(*t), n_obs, s.size(), std::move(id));
  }
  if (s.empty()) throw Error(ErrorKind::no_parsable_rows, "t-stat file has no data rows");
  return s;
}

inline TStatSample load_tstats_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::missing_file, fmt::format("cannot open '{}'", path));
  return load_tstats_csv(in, path);
}

}  // namespace fdrbound::io
