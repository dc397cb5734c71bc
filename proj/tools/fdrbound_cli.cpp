// fdrbound: command-line front end for the header-only library.
//
// Exit codes: 0 success, 2 usage, 3 data, 4 infeasible computation.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "fdrbound/fdrbound.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace fdrbound;
using nlohmann::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_usage = 2;
constexpr int exit_data = 3;
constexpr int exit_infeasible = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return exit_usage;
    case ErrorKind::no_discoveries:
    case ErrorKind::infeasible_extrapolation: return exit_infeasible;
    default: return exit_data;
  }
}

// Output sink: stdout when --out is empty, otherwise files plus a manifest.
class Sink {
 public:
  Sink(std::string out_dir, std::string subcommand)
      : out_dir_(std::move(out_dir)), manifest_{std::move(subcommand), json::object(), 0, version, {}} {}

  void set_config(json config, std::uint64_t seed = 0) {
    manifest_.config = std::move(config);
    manifest_.seed = seed;
  }

  void write(const std::string& name, const std::string& content) {
    if (out_dir_.empty()) {
      std::cout << content;
      return;
    }
    fs::create_directories(out_dir_);
    const auto path = fs::path(out_dir_) / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::missing_file, fmt::format("cannot write '{}'", path.string()));
    out << content;
    manifest_.outputs.push_back(name);
  }

  void finish() {
    if (out_dir_.empty()) return;
    const auto path = fs::path(out_dir_) / (manifest_.subcommand + ".manifest.json");
    std::ofstream out(path, std::ios::binary);
    out << manifest_.to_json().dump(2) << "\n";
  }

 private:
  std::string out_dir_;
  cli::Manifest manifest_;
};

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  if (csv::trim(text).empty()) return out;
  for (const auto& field : csv::split(text, ',')) {
    const auto v = csv::parse_double(field);
    if (!v) throw UsageError(fmt::format("{}: cannot parse '{}'", what, field));
    out.push_back(*v);
  }
  return out;
}

std::pair<double, double> parse_pair(const std::string& text, const char* what) {
  const auto v = parse_list(text, what);
  if (v.size() != 2) throw UsageError(fmt::format("{} must be lo,hi", what));
  return {v[0], v[1]};
}

// Known factor sets; anything else is read as a comma-separated column list.
std::vector<std::string> resolve_model(const std::string& model, const FactorPanel& factors) {
  static const std::map<std::string, std::vector<std::string>> presets = {
      {"capm", {"mkt"}},
      {"ff3", {"mkt", "smb", "hml"}},
      {"ff4", {"mkt", "smb", "hml", "umd"}},
  };
  std::vector<std::string> wanted;
  if (auto it = presets.find(model); it != presets.end()) wanted = it->second;
  else
    for (const auto& f : csv::split(model, ',')) wanted.emplace_back(csv::trim(f));
  const auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
  };
  std::vector<std::string> out;
  for (const auto& w : wanted) {
    auto it = std::find_if(factors.factor_names.begin(), factors.factor_names.end(),
                           [&](const std::string& name) {
                             const auto n = lower(name);
                             return n == lower(w) || (w == "mkt" && (n == "mkt-rf" || n == "mkt_rf"));
                           });
    if (it == factors.factor_names.end())
      throw Error(ErrorKind::invalid_argument,
                  fmt::format("model '{}' needs factor column '{}' which the factor file lacks", model, w));
    out.push_back(*it);
  }
  return out;
}

json file_digest(const std::string& path) {
  return {{"path", path}, {"sha256", cli::sha256_hex(cli::read_file(path))}};
}

// ---------------------------------------------------------------------------

struct Common {
  std::string out;
  std::string null = "exact";
  NullModel null_model() const { return NullModel{parse_null_kind(null)}; }
};

void add_common(CLI::App* app, Common& c, bool with_null = true) {
  app->add_option("--out", c.out, "Output directory (default: stdout, no manifest)");
  if (with_null)
    app->add_option("--null", c.null, "Null model: exact or paper")
        ->check(CLI::IsMember({"exact", "paper"}));
}

struct TstatsOpts {
  Common common;
  std::string panel, factors, model, layout = "long";
  std::size_t min_obs = 60;
};

int run_tstats(const TstatsOpts& o) {
  Sink sink(o.common.out, "tstats");
  const auto layout = o.layout == "wide" ? PanelLayout::wide_format : PanelLayout::long_format;
  const auto loaded = load_panel_csv(o.panel, PanelFormat{',', layout});
  TStatResult result;
  std::string label = "raw";
  json config = {{"panel", file_digest(o.panel)}, {"layout", o.layout}, {"min_obs", o.min_obs}};
  if (!o.model.empty()) {
    if (o.factors.empty()) throw UsageError("--model needs --factors");
    const auto factors = load_factor_csv(o.factors);
    result = compute_alpha_tstats(loaded.panel, factors, resolve_model(o.model, factors), o.min_obs);
    label = o.model;
    config["factors"] = file_digest(o.factors);
    config["model"] = o.model;
  } else {
    result = compute_tstats(loaded.panel, o.min_obs);
  }
  sink.set_config(config);
  std::string out = "predictor_id,abs_t,n_obs,model\n";
  for (std::size_t k = 0; k < result.sample.size(); ++k)
    out += fmt::format("{},{},{},{}\n", csv::quote_if_needed(result.sample.predictor_ids[k]),
                       csv::format_double(result.sample.abs_t[k]), result.sample.n_obs_used[k],
                       csv::quote_if_needed(label));
  sink.write("tstats.csv", out);
  if (!result.excluded.empty()) {
    if (o.common.out.empty())
      for (const auto& e : result.excluded)
        std::cerr << fmt::format("excluded {}: {} ({} obs)\n", e.predictor_id, to_string(e.reason), e.n_obs);
    else
      sink.write("excluded.csv", io::exclusions_csv(result.excluded));
  }
  sink.finish();
  return exit_ok;
}

struct SummaryOpts {
  Common common;
  std::string tstats, hurdles = "2", bins = "0:0.5,0:1";
};

int run_summary(const SummaryOpts& o) {
  Sink sink(o.common.out, "summary");
  const auto sample = io::load_tstats_csv(o.tstats);
  std::vector<Interval> bins;
  for (const auto& field : csv::split(o.bins, ',')) {
    const auto parts = csv::split(field, ':');
    if (parts.size() != 2) throw UsageError(fmt::format("bin '{}' must be lo:hi", field));
    const auto lo = csv::parse_double(parts[0]);
    const auto hi = csv::parse_double(parts[1]);
    if (!lo || !hi) throw UsageError(fmt::format("bin '{}' must be lo:hi", field));
    bins.push_back({*lo, *hi});
  }
  const auto hurdles = parse_list(o.hurdles, "--hurdles");
  sink.set_config({{"tstats", file_digest(o.tstats)}, {"hurdles", hurdles}, {"bins", o.bins}});
  sink.write("summary.csv", summary_csv(panel_summary(sample, hurdles, bins)));
  sink.finish();
  return exit_ok;
}

struct BoundOpts {
  Common common;
  std::string tstats, method = "easy", bin = "0,0.5", interval;
  double hurdle = 2.0;
  std::optional<double> share_above, bin_share, mean_pub_t, share_in_interval;
};

int run_bound(const BoundOpts& o) {
  Sink sink(o.common.out, "bound");
  const auto null = o.common.null_model();
  const bool summary_flags = o.share_above || o.bin_share || o.mean_pub_t || o.share_in_interval;
  if (!o.tstats.empty() && summary_flags)
    throw UsageError("give either --tstats or summary flags, not both");
  const auto [bin_lo, bin_hi] = parse_pair(o.bin, "--bin");
  const StoreyBinSpec bin{bin_lo, bin_hi};
  json config = {{"method", o.method}, {"hurdle", o.hurdle}, {"null", o.common.null},
                 {"bin", {bin_lo, bin_hi}}};
  const auto require_flag = [](bool present, const char* flag) {
    if (!present) throw UsageError(fmt::format("this method needs {} or --tstats", flag));
  };

  FdrBoundReport report;
  if (!o.tstats.empty()) {
    config["tstats"] = file_digest(o.tstats);
    const auto sample = io::load_tstats_csv(o.tstats);
    if (o.method == "easy") {
      report = easy_bound_from_tstats(sample, o.hurdle, null);
    } else if (o.method == "storey") {
      report = storey_fdr_bound(sample, o.hurdle, bin, null);
    } else if (o.method == "extrap") {
      // the file is read as published t-stats
      double sum = 0.0;
      std::size_t n = 0;
      for (double t : sample.abs_t)
        if (t > o.hurdle) {
          sum += t;
          ++n;
        }
      if (n == 0) throw Error(ErrorKind::no_discoveries, "no |t| exceeds the hurdle");
      report = exp_extrap_bound(sum / static_cast<double>(n), o.hurdle, null);
      report.sample_size = sample.size();
    } else {
      throw UsageError("--method interval needs signed summary inputs: --share-in-interval and --interval");
    }
  } else {
    if (o.method == "easy") {
      require_flag(o.share_above.has_value(), "--share-above");
      report = easy_bound(*o.share_above, o.hurdle, null);
    } else if (o.method == "storey") {
      require_flag(o.share_above && o.bin_share, "--share-above and --bin-share");
      report = storey_fdr_bound_from_shares(*o.share_above, *o.bin_share, o.hurdle, bin, null);
    } else if (o.method == "extrap") {
      require_flag(o.mean_pub_t.has_value(), "--mean-pub-t");
      report = exp_extrap_bound(*o.mean_pub_t, o.hurdle, null);
    } else {
      require_flag(o.share_in_interval && !o.interval.empty(), "--share-in-interval and --interval");
      const auto [lo, hi] = parse_pair(o.interval, "--interval");
      report = interval_pf_report(*o.share_in_interval, lo, hi, null);
    }
    for (const auto& [k, v] : report.inputs) config["inputs"][k] = v;
  }
  sink.set_config(config);
  sink.write("bound.json", io::to_json(report).dump(2) + "\n");
  if (!o.common.out.empty()) sink.write("bound.csv", io::report_csv(report));
  sink.finish();
  return exit_ok;
}

struct DecomposeOpts {
  Common common;
  std::string tstats, scaling = "storey";
  double bin_width = 0.5, hurdle = 2.0;
};

int run_decompose(const DecomposeOpts& o) {
  Sink sink(o.common.out, "decompose");
  const auto sample = io::load_tstats_csv(o.tstats);
  const auto scaling = o.scaling == "easy" ? DecompositionScaling::easy : DecompositionScaling::storey;
  const auto d = histogram_decomposition(sample, o.common.null_model(), scaling, o.bin_width, o.hurdle);
  sink.set_config({{"tstats", file_digest(o.tstats)}, {"scaling", o.scaling},
                   {"bin_width", o.bin_width}, {"hurdle", o.hurdle}, {"null", o.common.null}});
  sink.write("decomposition.csv", io::decomposition_csv(d));
  sink.finish();
  return exit_ok;
}

struct ControlOpts {
  Common common;
  std::string tstats, method = "bh95";
  double q_star = 0.05;
};

int run_control(const ControlOpts& o) {
  Sink sink(o.common.out, "control");
  const auto sample = io::load_tstats_csv(o.tstats);
  ControlRequest request{o.q_star, o.method == "by13" ? ControlMethod::by13 : ControlMethod::bh95,
                         o.common.null_model()};
  const auto result = control_hurdle(sample, request);
  sink.set_config({{"tstats", file_digest(o.tstats)}, {"method", o.method}, {"q_star", o.q_star},
                   {"null", o.common.null}});
  sink.write("control.csv", io::control_csv(request, result));
  if (!o.common.out.empty()) sink.write("discoveries.csv", io::discoveries_csv(sample, result));
  sink.finish();
  return result.feasible() ? exit_ok : exit_infeasible;
}

struct BonferroniOpts {
  Common common;
  std::size_t m = 296;
  double level = 0.05;
};

int run_bonferroni(const BonferroniOpts& o) {
  Sink sink(o.common.out, "bonferroni");
  const double h = bonferroni_hurdle(o.m, o.level, o.common.null_model());
  sink.set_config({{"m", o.m}, {"level", o.level}, {"null", o.common.null}});
  sink.write("bonferroni.csv",
             fmt::format("m,level,hurdle\n{},{},{}\n", o.m, csv::format_double(o.level), csv::format_double(h)));
  sink.finish();
  return exit_ok;
}

struct SimulateOpts {
  Common common;
  std::string config, gammas, p_falses;
  std::optional<std::size_t> n_sims;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

int run_simulate(const SimulateOpts& o) {
  Sink sink(o.common.out, "simulate");
  auto plan = load_simulation_plan(o.config);
  if (!o.gammas.empty()) plan.gammas_bps = parse_list(o.gammas, "--gamma");
  if (!o.p_falses.empty()) plan.p_falses = parse_list(o.p_falses, "--p-false");
  if (o.n_sims) plan.base.n_sims = *o.n_sims;
  if (o.seed) plan.base.seed = *o.seed;
  auto resolved = to_json(plan);
  if (!plan.source.panel_path.empty())
    resolved["residual_source"]["panel_sha256"] = cli::sha256_hex(cli::read_file(plan.source.panel_path));
  const auto excluded = materialize_residual_source(plan);
  for (const auto& e : excluded)
    std::cerr << fmt::format("source predictor {} dropped: {}\n", e.predictor_id, to_string(e.reason));
  const auto cells = run_grid(plan.base, plan.gammas_bps, plan.p_falses, plan.hurdle, plan.bin,
                              plan.null, plan.selection, o.threads);
  sink.set_config(resolved, plan.base.seed);
  sink.write("grid.csv", grid_csv(cells));
  sink.finish();
  return exit_ok;
}

struct HlzOpts {
  Common common;
  HlzParams params;
  std::string hurdles = "2,2.27,2.95", population = "all";
  std::size_t n_sims = 1000, threads = 1, scatter = 0;
  std::uint64_t seed = 1;
};

int run_hlz(const HlzOpts& o) {
  Sink sink(o.common.out, "hlz");
  const auto hurdles = parse_list(o.hurdles, "--hurdles");
  const auto population = parse_population(o.population);
  const auto& p = o.params;
  sink.set_config({{"p0", p.p0}, {"lambda_bps", p.lambda_bps}, {"se_bps", p.se_bps}, {"rho", p.rho},
                   {"n_factors", p.n_factors}, {"s_bar", p.s_bar}, {"hurdles", hurdles},
                   {"n_sims", o.n_sims}, {"population", o.population}, {"scatter", o.scatter}},
                  o.seed);
  const auto rows = hlz_fdr_curve(p, hurdles, o.n_sims, o.seed, o.threads, population);
  sink.write("hlz_curve.csv", hlz_curve_csv(rows));
  if (o.scatter > 0) {
    if (o.common.out.empty()) throw UsageError("--scatter needs --out");
    const auto draws = hlz_scatter(p, o.scatter, o.seed);
    for (std::size_t r = 0; r < draws.size(); ++r)
      sink.write(fmt::format("hlz_scatter_{:04d}.csv", r), hlz_scatter_csv(draws[r]));
  }
  sink.finish();
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"False discovery rate bounds for return predictability studies"};
  app.set_version_flag("--version", std::string(version));
  app.require_subcommand(1);

  TstatsOpts tstats;
  auto* c_tstats = app.add_subcommand("tstats", "Compute |t| per predictor from a return panel");
  add_common(c_tstats, tstats.common, false);
  c_tstats->add_option("--panel", tstats.panel, "Panel CSV")->required()->check(CLI::ExistingFile);
  c_tstats->add_option("--layout", tstats.layout, "long or wide")->check(CLI::IsMember({"long", "wide"}));
  c_tstats->add_option("--factors", tstats.factors, "Factor CSV (month,<factor>...)")->check(CLI::ExistingFile);
  c_tstats->add_option("--model", tstats.model, "capm, ff3, ff4, or a comma list of factor columns");
  c_tstats->add_option("--min-obs", tstats.min_obs, "Minimum observed months");

  SummaryOpts summary;
  auto* c_summary = app.add_subcommand("summary", "Shares above hurdles and inside bins");
  add_common(c_summary, summary.common, false);
  c_summary->add_option("--tstats", summary.tstats, "t-stat CSV")->required()->check(CLI::ExistingFile);
  c_summary->add_option("--hurdles", summary.hurdles, "Comma list of hurdles");
  c_summary->add_option("--bins", summary.bins, "Comma list of lo:hi bins");

  BoundOpts bound;
  auto* c_bound = app.add_subcommand("bound", "FDR bound from t-stats or summary statistics");
  add_common(c_bound, bound.common);
  c_bound->add_option("--tstats", bound.tstats, "t-stat CSV")->check(CLI::ExistingFile);
  c_bound->add_option("--method", bound.method, "easy, storey, extrap, or interval")
      ->check(CLI::IsMember({"easy", "storey", "extrap", "interval"}));
  c_bound->add_option("--hurdle", bound.hurdle, "t-stat hurdle");
  c_bound->add_option("--bin", bound.bin, "Storey bin lo,hi");
  c_bound->add_option("--share-above", bound.share_above, "Share of |t| above the hurdle");
  c_bound->add_option("--bin-share", bound.bin_share, "Share of |t| inside the Storey bin");
  c_bound->add_option("--mean-pub-t", bound.mean_pub_t, "Mean published |t|");
  c_bound->add_option("--share-in-interval", bound.share_in_interval, "Share of signed t inside --interval");
  c_bound->add_option("--interval", bound.interval, "Signed interval lo,hi");

  DecomposeOpts decompose;
  auto* c_decompose = app.add_subcommand("decompose", "Split the |t| histogram into null and true parts");
  add_common(c_decompose, decompose.common);
  c_decompose->add_option("--tstats", decompose.tstats, "t-stat CSV")->required()->check(CLI::ExistingFile);
  c_decompose->add_option("--scaling", decompose.scaling, "easy or storey")
      ->check(CLI::IsMember({"easy", "storey"}));
  c_decompose->add_option("--bin-width", decompose.bin_width, "Histogram bin width");
  c_decompose->add_option("--hurdle", decompose.hurdle, "Discovery hurdle");

  ControlOpts control;
  auto* c_control = app.add_subcommand("control", "Minimal hurdle controlling the FDR at q*");
  add_common(c_control, control.common);
  c_control->add_option("--tstats", control.tstats, "t-stat CSV")->required()->check(CLI::ExistingFile);
  c_control->add_option("--method", control.method, "bh95 or by13")->check(CLI::IsMember({"bh95", "by13"}));
  c_control->add_option("--q-star", control.q_star, "Target FDR");

  BonferroniOpts bonf;
  auto* c_bonf = app.add_subcommand("bonferroni", "Two-sided Bonferroni t hurdle");
  add_common(c_bonf, bonf.common);
  c_bonf->add_option("--m", bonf.m, "Number of tests");
  c_bonf->add_option("--level", bonf.level, "Family-wise level");

  SimulateOpts simulate;
  auto* c_sim = app.add_subcommand("simulate", "Monte Carlo FDR versus bounds over a grid");
  add_common(c_sim, simulate.common, false);
  c_sim->add_option("--config", simulate.config, "Simulation JSON")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--gamma", simulate.gammas, "Comma list of gamma (bps/month), overrides config");
  c_sim->add_option("--p-false", simulate.p_falses, "Comma list of Pr(false), overrides config");
  c_sim->add_option("--n-sims", simulate.n_sims, "Replications per cell");
  c_sim->add_option("--seed", simulate.seed, "Master seed");
  c_sim->add_option("--threads", simulate.threads, "Worker threads (never changes results)");

  HlzOpts hlz;
  auto* c_hlz = app.add_subcommand("hlz", "FDR curve under the mixture factor model");
  add_common(c_hlz, hlz.common, false);
  c_hlz->add_option("--p0", hlz.params.p0, "Share of null factors");
  c_hlz->add_option("--lambda", hlz.params.lambda_bps, "Mean expected return of true factors (bps/month)");
  c_hlz->add_option("--se", hlz.params.se_bps, "Standard error (bps/month)");
  c_hlz->add_option("--rho", hlz.params.rho, "Pairwise t-stat correlation");
  c_hlz->add_option("--n-factors", hlz.params.n_factors, "Factors per replication");
  c_hlz->add_option("--s-bar", hlz.params.s_bar, "Top publication probability");
  c_hlz->add_option("--hurdles", hlz.hurdles, "Comma list of hurdles");
  c_hlz->add_option("--population", hlz.population, "all or published")
      ->check(CLI::IsMember({"all", "published"}));
  c_hlz->add_option("--n-sims", hlz.n_sims, "Replications");
  c_hlz->add_option("--seed", hlz.seed, "Master seed");
  c_hlz->add_option("--threads", hlz.threads, "Worker threads (never changes results)");
  c_hlz->add_option("--scatter", hlz.scatter, "Export this many replications factor by factor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    if (*c_tstats) return run_tstats(tstats);
    if (*c_summary) return run_summary(summary);
    if (*c_bound) return run_bound(bound);
    if (*c_decompose) return run_decompose(decompose);
    if (*c_control) return run_control(control);
    if (*c_bonf) return run_bonferroni(bonf);
    if (*c_sim) return run_simulate(simulate);
    if (*c_hlz) return run_hlz(hlz);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return exit_usage;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_data;
  }
  return exit_usage;
}
