#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "fdrbound/error.hpp"
#include "fdrbound/normal.hpp"
#include "fdrbound/panel.hpp"
#include "fdrbound/simkit.hpp"

namespace fdrbound {

// Source for a bootstrap: either a panel file or a synthetic panel generated
// from its own stream under the master seed.
struct BootstrapSourceSpec {
  std::string panel_path;  // empty means synthetic
  PanelLayout layout = PanelLayout::long_format;
  std::size_t n_predictors = 200;
  std::size_t n_months = 600;
  SyntheticSpec synthetic;
};

enum class ResidualKind { synthetic, cluster_bootstrap, mixed_bootstrap };

inline std::string_view to_string(ResidualKind k) {
  switch (k) {
    case ResidualKind::synthetic: return "synthetic";
    case ResidualKind::cluster_bootstrap: return "cluster_bootstrap";
    case ResidualKind::mixed_bootstrap: return "mixed_bootstrap";
  }
  return "?";
}

// Everything `simulate` needs, as read from JSON.
struct SimulationPlan {
  SimConfig base;
  ResidualKind residual_kind = ResidualKind::synthetic;
  SyntheticSpec synthetic;
  BootstrapSourceSpec source;
  double boot_weight = 0.65;
  double noise_sd = 3.32;
  std::vector<double> gammas_bps{25.0, 75.0};
  std::vector<double> p_falses{0.01, 0.25, 0.5, 0.75, 0.99};
  double hurdle = 2.0;
  StoreyBinSpec bin;
  NullModel null = NullModel::paper();
  std::optional<SelectionRule> selection;
};

namespace detail {

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid_argument, fmt::format("config field '{}': {}", key, e.what()));
  }
}

inline void read_synthetic(const nlohmann::json& j, SyntheticSpec& spec) {
  read_if(j, "block_size", spec.block_size);
  read_if(j, "within_block_corr", spec.within_block_corr);
  read_if(j, "idio_sd", spec.idio_sd);
}

inline nlohmann::json synthetic_json(const SyntheticSpec& spec) {
  return {{"block_size", spec.block_size},
          {"within_block_corr", spec.within_block_corr},
          {"idio_sd", spec.idio_sd}};
}

}  // namespace detail

inline SimulationPlan parse_simulation_plan(const nlohmann::json& j,
                                            const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw Error(ErrorKind::invalid_argument, "config must be a JSON object");
  SimulationPlan plan;
  auto& c = plan.base;
  detail::read_if(j, "n_predictors", c.n_predictors);
  detail::read_if(j, "n_months", c.n_months);
  detail::read_if(j, "gamma_bps", c.gamma_bps);
  detail::read_if(j, "p_false", c.p_false);
  detail::read_if(j, "seed", c.seed);
  detail::read_if(j, "n_sims", c.n_sims);
  detail::read_if(j, "min_obs", c.min_obs);
  detail::read_if(j, "hurdle", plan.hurdle);
  if (j.contains("null")) plan.null = NullModel{parse_null_kind(j.at("null").get<std::string>())};
  if (j.contains("bin")) {
    const auto bin = j.at("bin").get<std::vector<double>>();
    detail::require(bin.size() == 2, "bin must be [lo, hi]");
    plan.bin = {bin[0], bin[1]};
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    detail::read_if(g, "gamma_bps", plan.gammas_bps);
    detail::read_if(g, "p_false", plan.p_falses);
  } else {
    plan.gammas_bps = {c.gamma_bps};
    plan.p_falses = {c.p_false};
  }
  if (j.contains("selection") && !j.at("selection").is_null()) {
    double s_bar = 1.0;
    detail::read_if(j.at("selection"), "s_bar", s_bar);
    plan.selection = SelectionRule::staircase(s_bar);
  }
  if (j.contains("residual_source")) {
    const auto& r = j.at("residual_source");
    std::string kind = "synthetic";
    detail::read_if(r, "kind", kind);
    if (kind == "synthetic") {
      plan.residual_kind = ResidualKind::synthetic;
      detail::read_synthetic(r, plan.synthetic);
    } else if (kind == "cluster_bootstrap" || kind == "mixed_bootstrap") {
      plan.residual_kind =
          kind == "cluster_bootstrap" ? ResidualKind::cluster_bootstrap : ResidualKind::mixed_bootstrap;
      detail::read_if(r, "boot_weight", plan.boot_weight);
      detail::read_if(r, "noise_sd", plan.noise_sd);
      if (r.contains("panel_path")) {
        std::filesystem::path p = r.at("panel_path").get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        plan.source.panel_path = p.string();
        std::string layout = "long";
        detail::read_if(r, "layout", layout);
        detail::require(layout == "long" || layout == "wide", "layout must be long or wide");
        plan.source.layout = layout == "long" ? PanelLayout::long_format : PanelLayout::wide_format;
      } else if (r.contains("synthetic_source")) {
        const auto& s = r.at("synthetic_source");
        detail::read_if(s, "n_predictors", plan.source.n_predictors);
        detail::read_if(s, "n_months", plan.source.n_months);
        detail::read_synthetic(s, plan.source.synthetic);
      } else {
        throw Error(ErrorKind::invalid_argument,
                    "bootstrap residual_source needs panel_path or synthetic_source");
      }
    } else {
      throw Error(ErrorKind::invalid_argument, fmt::format("unknown residual_source kind '{}'", kind));
    }
  }
  detail::require(!plan.gammas_bps.empty() && !plan.p_falses.empty(), "grid must not be empty");
  plan.bin.validate();
  if (plan.selection) plan.selection->validate();
  return plan;
}

inline SimulationPlan load_simulation_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::missing_file, fmt::format("cannot open '{}'", path));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::parse_error, fmt::format("{}: {}", path, e.what()));
  }
  return parse_simulation_plan(j, std::filesystem::path(path).parent_path());
}

// Fully resolved plan as JSON; keys come out sorted, so dump() is canonical.
inline nlohmann::json to_json(const SimulationPlan& plan) {
  const auto& c = plan.base;
  nlohmann::json j = {{"n_predictors", c.n_predictors},
                      {"n_months", c.n_months},
                      {"seed", c.seed},
                      {"n_sims", c.n_sims},
                      {"min_obs", c.min_obs},
                      {"hurdle", plan.hurdle},
                      {"null", std::string(to_string(plan.null.kind))},
                      {"bin", {plan.bin.lo, plan.bin.hi}},
                      {"grid", {{"gamma_bps", plan.gammas_bps}, {"p_false", plan.p_falses}}}};
  j["selection"] = plan.selection ? nlohmann::json{{"s_bar", plan.selection->s_bar}} : nullptr;
  nlohmann::json r = {{"kind", std::string(to_string(plan.residual_kind))}};
  if (plan.residual_kind == ResidualKind::synthetic) {
    r.update(detail::synthetic_json(plan.synthetic));
  } else {
    if (plan.residual_kind == ResidualKind::mixed_bootstrap) {
      r["boot_weight"] = plan.boot_weight;
      r["noise_sd"] = plan.noise_sd;
    }
    if (!plan.source.panel_path.empty()) {
      r["panel_path"] = plan.source.panel_path;
      r["layout"] = plan.source.layout == PanelLayout::long_format ? "long" : "wide";
    } else {
      auto s = detail::synthetic_json(plan.source.synthetic);
      s["n_predictors"] = plan.source.n_predictors;
      s["n_months"] = plan.source.n_months;
      r["synthetic_source"] = s;
    }
  }
  j["residual_source"] = r;
  return j;
}

// Loads or generates the bootstrap source and installs the residual source on
// plan.base. Synthetic sources draw from the `source` stream of the master seed.
inline std::vector<Exclusion> materialize_residual_source(SimulationPlan& plan) {
  if (plan.residual_kind == ResidualKind::synthetic) {
    plan.base.residual_source = plan.synthetic;
    return {};
  }
  ReturnPanel raw;
  if (!plan.source.panel_path.empty()) {
    raw = load_panel_csv(plan.source.panel_path, PanelFormat{',', plan.source.layout}).panel;
  } else {
    auto rng = make_stream(plan.base.seed, StreamTag::source, 0);
    raw = synthetic_source_panel(plan.source.n_predictors, plan.source.n_months,
                                 plan.source.synthetic, rng);
  }
  auto prepared = std::make_shared<const PreparedSource>(prepare_source(raw));
  auto excluded = prepared->excluded;
  if (plan.residual_kind == ResidualKind::cluster_bootstrap)
    plan.base.residual_source = ClusterBootstrapSpec{prepared};
  else
    plan.base.residual_source = MixedBootstrapSpec{prepared, plan.boot_weight, plan.noise_sd};
  return excluded;
}

}  // namespace fdrbound
