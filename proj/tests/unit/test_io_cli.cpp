#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "fdrbound/fdrbound.hpp"

namespace fs = std::filesystem;
using namespace fdrbound;

#ifndef FDRBOUND_CLI
#error "FDRBOUND_CLI must name the CLI binary"
#endif
#ifndef FDRBOUND_CONFIGS
#error "FDRBOUND_CONFIGS must name the configs directory"
#endif

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("fdrbound_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Exit status of the CLI; stdout goes to `stdout.txt` in the scratch dir.
  int run(const std::string& args) {
    const std::string cmd = std::string("\"") + FDRBOUND_CLI + "\" " + args + " > \"" +
                            (dir_ / "stdout.txt").string() + "\" 2> \"" + (dir_ / "stderr.txt").string() +
                            "\"";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  }
  std::string out() const { return slurp(dir_ / "stdout.txt"); }
  fs::path write(const std::string& name, const std::string& content) const {
    std::ofstream(dir_ / name) << content;
    return dir_ / name;
  }

  fs::path dir_;
};

const std::string configs = FDRBOUND_CONFIGS;

}  // namespace

TEST(ReportIo, JsonAndCsvCarryIntermediates) {
  const auto r = storey_fdr_bound_from_shares(0.33, 0.215, 2.0, {}, NullModel::paper());
  const auto j = io::to_json(r);
  EXPECT_EQ(j["method"], "storey");
  EXPECT_EQ(j["null_mode"], "paper");
  EXPECT_DOUBLE_EQ(j["intermediates"]["pf_bound"].get<double>(), 0.215 / 0.383);
  const auto csv = io::report_csv(r);
  EXPECT_NE(csv.find("intermediates.easy_bound,"), std::string::npos);
  // NaN hurdle for interval reports serializes as null
  EXPECT_TRUE(io::to_json(interval_pf_report(0.8, -1.62, 1.58, NullModel::exact()))["hurdle"].is_null());
}

TEST(ReportIo, TStatFileRoundTrip) {
  std::istringstream in("predictor_id,abs_t,n_obs\na,2.5,100\nb,-1.25,90\n");
  const auto s = io::load_tstats_csv(in);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.abs_t[1], 1.25);
  EXPECT_EQ(s.n_obs_used[0], 100u);
  EXPECT_EQ(io::tstats_csv(s), "predictor_id,abs_t,n_obs\na,2.5,100\nb,1.25,90\n");
  std::istringstream bad("predictor_id,abs_t\na,oops\n");
  EXPECT_THROW(io::load_tstats_csv(bad), Error);
  std::istringstream no_col("x,y\n1,2\n");
  EXPECT_THROW(io::load_tstats_csv(no_col), Error);
}

TEST(ReportIo, DecompositionAndControlHeaders) {
  const auto s = TStatSample::from_values({0.2, 0.7, 2.5, 3.5});
  const auto d = io::decomposition_csv(histogram_decomposition(s, NullModel::exact(), DecompositionScaling::easy));
  EXPECT_EQ(d.substr(0, d.find('\n')),
            "bin_lo,bin_hi,count_empirical,count_null_scaled,count_true_implied,false_share");
  ControlRequest req;
  const auto c = io::control_csv(req, bh95_hurdle(s, req));
  EXPECT_EQ(c.substr(0, c.find('\n')), "method,q_star,penalty,hurdle,n_discoveries");
}

TEST(Config, ParsesAndCanonicalizes) {
  const auto plan = load_simulation_plan(configs + "/publication_sim.json");
  EXPECT_EQ(plan.base.n_predictors, 10000u);
  EXPECT_EQ(plan.residual_kind, ResidualKind::mixed_bootstrap);
  EXPECT_DOUBLE_EQ(plan.boot_weight, 0.65);
  ASSERT_TRUE(plan.selection.has_value());
  EXPECT_EQ(plan.gammas_bps.size(), 3u);
  EXPECT_EQ(plan.source.n_months, 600u);
  const auto again = parse_simulation_plan(to_json(plan));
  EXPECT_EQ(to_json(again).dump(), to_json(plan).dump());
}

TEST(Config, RejectsUnknownKindAndBadValues) {
  EXPECT_THROW(parse_simulation_plan(nlohmann::json::parse(R"({"residual_source":{"kind":"magic"}})")), Error);
  EXPECT_THROW(parse_simulation_plan(nlohmann::json::parse(R"({"n_sims":"many"})")), Error);
  EXPECT_THROW(parse_simulation_plan(nlohmann::json::parse(R"({"residual_source":{"kind":"cluster_bootstrap"}})")),
               Error);
}

TEST(Config, PanelPathResolvesAgainstConfigDir) {
  auto plan = load_simulation_plan(configs + "/panel_bootstrap.json");
  EXPECT_TRUE(fs::exists(plan.source.panel_path));
  materialize_residual_source(plan);
  const auto r = monte_carlo_fdr(plan.base, plan.hurdle, plan.bin, plan.null);
  EXPECT_EQ(r.n_sims, 20u);
}

TEST_F(CliTest, BoundFromSummaryFlags) {
  ASSERT_EQ(run("bound --method extrap --mean-pub-t 4.6 --null paper"), 0);
  auto j = nlohmann::json::parse(out());
  EXPECT_NEAR(j["bound_capped"].get<double>(), 0.11, 0.005);
  ASSERT_EQ(run("bound --method easy --share-above 0.33 --null paper"), 0);
  j = nlohmann::json::parse(out());
  EXPECT_NEAR(j["bound_capped"].get<double>(), 0.15, 0.005);
  ASSERT_EQ(run("bound --method interval --share-in-interval 0.8 --interval=-1.62,1.58"), 0);
  j = nlohmann::json::parse(out());
  EXPECT_NEAR(j["bound_capped"].get<double>(), 0.899, 0.001);
}

TEST_F(CliTest, ExitCodes) {
  const auto t = write("t.csv", "predictor_id,abs_t\na,1\nb,2.5\n");
  EXPECT_EQ(run("bound --tstats " + t.string() + " --share-above 0.3"), 2);
  EXPECT_EQ(run("bound --method easy"), 2);
  EXPECT_EQ(run("bound --method extrap --mean-pub-t 1.5"), 4);
  EXPECT_EQ(run("bound --method easy --share-above 0"), 4);
  const auto bad = write("bad.csv", "predictor_id,abs_t\na,zz\n");
  EXPECT_EQ(run("bound --tstats " + bad.string()), 3);
  EXPECT_EQ(run("nosuchcommand"), 2);
  EXPECT_EQ(run("bound --method easy --share-above 0.3 --null sideways"), 2);
}

TEST_F(CliTest, TStatsWideToyAndModel) {
  const auto wide = write("wide.csv", "predictor_id,2001-01,2001-02\nA,1,2\nB,0.5,3\nC,-1,1\n");
  ASSERT_EQ(run("tstats --panel " + wide.string() + " --layout wide --min-obs 2"), 0);
  const auto text = out();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);

  const auto o = dir_ / "capm";
  ASSERT_EQ(run("tstats --panel " + configs + "/toy_panel.csv --factors " + configs +
                "/toy_factors.csv --model capm --min-obs 24 --out " + o.string()),
            0);
  const auto csv = slurp(o / "tstats.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "predictor_id,abs_t,n_obs,model");
  EXPECT_NE(csv.find(",capm\n"), std::string::npos);
  const auto manifest = nlohmann::json::parse(slurp(o / "tstats.manifest.json"));
  EXPECT_EQ(manifest["subcommand"], "tstats");
  EXPECT_EQ(manifest["config_digest"].get<std::string>().size(), 64u);
  EXPECT_EQ(manifest["tool_version"], "0.1.0");
}

TEST_F(CliTest, GoldenDeterminismForSeedFreePipeline) {
  const std::string base = "tstats --panel " + configs + "/toy_panel.csv --min-obs 24";
  ASSERT_EQ(run(base), 0);
  const auto first = out();
  ASSERT_EQ(run(base), 0);
  EXPECT_EQ(first, out());
  const auto t = write("t.csv", first);
  ASSERT_EQ(run("decompose --tstats " + t.string() + " --scaling easy"), 0);
  const auto d1 = out();
  ASSERT_EQ(run("decompose --tstats " + t.string() + " --scaling easy"), 0);
  EXPECT_EQ(d1, out());
}

TEST_F(CliTest, ControlDispatch) {
  const auto t = write("t.csv", "predictor_id,abs_t\na,3.5\nb,2.8\nc,1.0\nd,0.2\n");
  ASSERT_EQ(run("control --tstats " + t.string() + " --method bh95 --q-star 0.05"), 0);
  EXPECT_NE(out().find("bh95,0.05,1,2.8,2"), std::string::npos);
  const auto zeros = write("z.csv", "predictor_id,abs_t\na,0\nb,0\n");
  EXPECT_EQ(run("control --tstats " + zeros.string()), 4);
  ASSERT_EQ(run("control --tstats " + t.string() + " --method by13"), 0);
}

TEST_F(CliTest, SimulateTrivialCellAndHlz) {
  const auto cfg = write("c.json", R"({"n_predictors": 100, "n_months": 80, "n_sims": 3,
      "grid": {"gamma_bps": [50], "p_false": [0.0]}})");
  ASSERT_EQ(run("simulate --config " + cfg.string()), 0);
  const auto grid = out();
  const auto row = grid.substr(grid.find('\n') + 1);
  EXPECT_EQ(row.substr(0, row.find(',', row.find(',', row.find(',', row.find(',') + 1) + 1) + 1)),
            "50,0,2,3");
  EXPECT_NE(row.find(",3,0,"), std::string::npos);  // n_sims 3 then actual_fdr 0

  ASSERT_EQ(run("hlz --p0 1 --n-sims 20"), 0);
  EXPECT_NE(out().find("2,20,1,"), std::string::npos);  // all-null: FDR 1 at hurdle 2

  const auto o = dir_ / "scatter";
  ASSERT_EQ(run("hlz --n-sims 5 --scatter 2 --n-factors 40 --out " + o.string()), 0);
  const auto s = slurp(o / "hlz_scatter_0001.csv");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 41);
}
