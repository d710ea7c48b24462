#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "tmdstat/pipeline.hpp"
#include "tmdstat/serialization.hpp"

using namespace tmdstat;
namespace fs = std::filesystem;
using io::json;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("tmdstat_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return cli::run_cli(args, out_, err_);
  }

  std::string write_config(const std::string& name, const json& j) {
    const auto p = dir_ / name;
    std::ofstream(p) << j.dump();
    return p.string();
  }

  json read_json(const fs::path& p) { return json::parse(io::read_file(p.string())); }

  fs::path dir_;
  std::ostringstream out_, err_;
};

json small_single() {
  return json{{"lambda", 0.12247448713915890},
              {"herald", {{"kind", "single_apd"}, {"eta_trigger", 0.5}, {"dark_click_prob", 5e-5}}},
              {"eta_signal", 0.373},
              {"pulses", 20'000'000},
              {"seed", 9}};
}

json small_double() {
  return json{{"lambda", 0.21213203435596426},
              {"herald", {{"kind", "double_apd_coincidence"}, {"eta_trigger", 1.0}, {"dark_click_prob", 8e-4}}},
              {"eta_signal", 0.315},
              {"pulses", 100'000'000},
              {"seed", 10}};
}

json fluorescence() {
  return json{{"lambda", 0.0},
              {"herald", {{"kind", "double_apd_coincidence"}, {"eta_trigger", 1.0}, {"dark_click_prob", 0.05}}},
              {"eta_signal", 0.315},
              {"contaminant", {{"kind", "thermal"}, {"mean", 0.5}}},
              {"pulses", 20'000'000},
              {"seed", 7}};
}

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}), cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}), cli::kExitUsage);
  EXPECT_EQ(run({"simulate"}), cli::kExitUsage);
  EXPECT_EQ(run({"--help"}), cli::kExitOk);
  EXPECT_NE(out_.str().find("pipeline"), std::string::npos);
}

TEST_F(Cli, SimulateMinimalConfig) {
  const auto cfg = write_config("min.json", json{{"pulses", 100000}});
  EXPECT_EQ(run({"simulate", "--config", cfg, "--out-dir", dir_.string()}), cli::kExitOk);
  EXPECT_TRUE(fs::exists(dir_ / "histogram_t1.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "histograms.json"));
  const json meta = read_json(dir_ / "simulation.json");
  EXPECT_EQ(meta["provenance"]["schema_version"], io::kSchemaVersion);
  EXPECT_EQ(meta["provenance"]["seed"], 1);
  EXPECT_EQ(io::read_file((dir_ / "histogram_t1.csv").string()).substr(0, 13), "clicks,count\n");
}

TEST_F(Cli, SimulateRejectsBadLambda) {
  const auto cfg = write_config("bad.json", json{{"lambda", 1.2}});
  EXPECT_EQ(run({"simulate", "--config", cfg, "--out-dir", dir_.string()}), cli::kExitUsage);
  EXPECT_NE(err_.str().find("/lambda"), std::string::npos);
}

TEST_F(Cli, SimulateRejectsMalformedJson) {
  const auto p = dir_ / "broken.json";
  std::ofstream(p) << "{\"lambda\": ";
  EXPECT_EQ(run({"simulate", "--config", p.string(), "--out-dir", dir_.string()}), cli::kExitUsage);
}

TEST_F(Cli, SimulateSingleTriggerMean) {
  const auto cfg = write_config("st.json", small_single());
  ASSERT_EQ(run({"simulate", "--config", cfg, "--out-dir", dir_.string()}), cli::kExitOk);
  EXPECT_NEAR(read_json(dir_ / "simulation.json")["detected_mean"].get<double>(), 0.376, 0.01);
}

TEST_F(Cli, SeedOverride) {
  const auto cfg = write_config("min.json", json{{"pulses", 1000}});
  ASSERT_EQ(run({"simulate", "--config", cfg, "--out-dir", dir_.string(), "--seed", "77"}), cli::kExitOk);
  EXPECT_EQ(read_json(dir_ / "simulation.json")["seed"], 77);
}

TEST_F(Cli, OutDirFromEnvironment) {
  const auto cfg = write_config("min.json", json{{"pulses", 1000}});
  const auto env_dir = dir_ / "from_env";
  ::setenv("TMDSTAT_OUT_DIR", env_dir.c_str(), 1);
  const int code = run({"simulate", "--config", cfg});
  ::unsetenv("TMDSTAT_OUT_DIR");
  EXPECT_EQ(code, cli::kExitOk);
  EXPECT_TRUE(fs::exists(env_dir / "simulation.json"));
}

TEST_F(Cli, CalibrateDoubleTriggerIsConsistentOnTwoPhotonData) {
  // ideal two-photon herald: the three estimators agree
  json cfg = small_double();
  cfg["herald"] = {{"kind", "ideal_k_resolving"}, {"k", 2}};
  cfg["lambda"] = 0.3;
  cfg["pulses"] = 20'000'000;
  const auto path = write_config("ideal.json", cfg);
  ASSERT_EQ(run({"simulate", "--config", path, "--out-dir", dir_.string()}), cli::kExitOk);
  EXPECT_EQ(run({"calibrate", "--histogram", (dir_ / "histogram_t2.csv").string(), "--trigger", "double",
                 "--out-dir", dir_.string(), "--strict"}),
            cli::kExitOk);
  const json r = read_json(dir_ / "calibration.json");
  EXPECT_EQ(r["estimates"].size(), 3u);
  EXPECT_TRUE(r["consistency"]["consistent"].get<bool>());
  EXPECT_NEAR(r["weighted_average"]["eta_hat"].get<double>(), 0.315, 0.005);
}

TEST_F(Cli, CalibrateFluorescenceIsInconsistent) {
  const auto path = write_config("fl.json", fluorescence());
  ASSERT_EQ(run({"simulate", "--config", path, "--out-dir", dir_.string()}), cli::kExitOk);
  const auto hist = (dir_ / "histogram_t2.csv").string();
  EXPECT_EQ(run({"calibrate", "--histogram", hist, "--trigger", "double", "--out-dir", dir_.string()}), cli::kExitOk);
  EXPECT_FALSE(read_json(dir_ / "calibration.json")["consistency"]["consistent"].get<bool>());
  EXPECT_EQ(run({"calibrate", "--histogram", hist, "--trigger", "double", "--out-dir", dir_.string(), "--strict"}),
            cli::kExitWarning);
}

TEST_F(Cli, CalibrateSingleTriggerHasKlyshkoCrossCheck) {
  const auto path = write_config("st.json", small_single());
  ASSERT_EQ(run({"simulate", "--config", path, "--out-dir", dir_.string()}), cli::kExitOk);
  ASSERT_EQ(run({"calibrate", "--histogram", (dir_ / "histograms.json").string(), "--trigger", "single", "--out-dir",
                 dir_.string()}),
            cli::kExitOk);
  const json r = read_json(dir_ / "calibration.json");
  ASSERT_EQ(r["estimates"].size(), 2u);
  EXPECT_EQ(r["estimates"][0]["order"], "klyshko");
  EXPECT_EQ(r["estimates"][1]["order"], "single_trigger");
}

TEST_F(Cli, CalibrateMissingInput) {
  EXPECT_EQ(run({"calibrate", "--histogram", (dir_ / "nope.csv").string()}), cli::kExitUsage);
}

TEST_F(Cli, CalibrateBinMismatch) {
  const auto p = dir_ / "h.csv";
  std::ofstream(p) << "clicks,count\n0,10\n1,5\n";
  EXPECT_EQ(run({"calibrate", "--histogram", p.string(), "--out-dir", dir_.string()}), cli::kExitUsage);
  EXPECT_NE(err_.str().find("bins"), std::string::npos);
}

TEST_F(Cli, InvertEmConverges) {
  const auto path = write_config("st.json", small_single());
  ASSERT_EQ(run({"simulate", "--config", path, "--out-dir", dir_.string()}), cli::kExitOk);
  ASSERT_EQ(run({"invert", "--histogram", (dir_ / "histogram_t1.csv").string(), "--eta", "0.373", "--out-dir",
                 dir_.string()}),
            cli::kExitOk);
  const json r = read_json(dir_ / "inversion.json");
  EXPECT_TRUE(r["converged"].get<bool>());
  EXPECT_FALSE(r["negativity_flag"].get<bool>());
  EXPECT_TRUE(r["monotone"].get<bool>());
  EXPECT_TRUE(fs::exists(dir_ / "likelihood_trace.csv"));
  const std::string plot = io::read_file((dir_ / "clicks_plot.csv").string());
  EXPECT_EQ(plot.substr(0, plot.find('\n')), "k,p_detected,poisson_reference");
  std::istringstream rho(io::read_file((dir_ / "rho_hat.csv").string()));
  EXPECT_NEAR(io::read_distribution_csv(rho)[1], 0.97, 0.02);
}

TEST_F(Cli, InvertDirectFlagsNegativityOnFluorescence) {
  const auto path = write_config("fl.json", fluorescence());
  ASSERT_EQ(run({"simulate", "--config", path, "--out-dir", dir_.string()}), cli::kExitOk);
  const auto hist = (dir_ / "histogram_t2.csv").string();
  EXPECT_EQ(run({"invert", "--histogram", hist, "--eta", "0.07", "--method", "direct", "--out-dir", dir_.string()}),
            cli::kExitOk);
  EXPECT_TRUE(read_json(dir_ / "inversion.json")["negativity_flag"].get<bool>());
  EXPECT_EQ(run({"invert", "--histogram", hist, "--eta", "0.07", "--method", "direct", "--strict", "--out-dir",
                 dir_.string()}),
            cli::kExitWarning);
}

TEST_F(Cli, InvertRejectsZeroEta) {
  const auto p = dir_ / "h.csv";
  std::ofstream(p) << "clicks,count\n0,10\n1,5\n2,0\n3,0\n4,0\n5,0\n6,0\n7,0\n8,0\n";
  EXPECT_EQ(run({"invert", "--histogram", p.string(), "--eta", "0", "--out-dir", dir_.string()}), cli::kExitUsage);
  EXPECT_NE(err_.str().find("eta"), std::string::npos);
  EXPECT_EQ(run({"invert", "--histogram", p.string(), "--eta", "0.5", "--method", "svd", "--out-dir", dir_.string()}),
            cli::kExitUsage);
}

TEST_F(Cli, InvertConditioningHint) {
  const auto p = dir_ / "h.csv";
  std::ofstream(p) << "clicks,count\n0,10\n1,5\n2,1\n3,0\n4,0\n5,0\n6,0\n7,0\n8,0\n";
  EXPECT_EQ(run({"invert", "--histogram", p.string(), "--eta", "0.5", "--method", "direct", "--max-condition", "2",
                 "--out-dir", dir_.string()}),
            cli::kExitUsage);
  EXPECT_NE(err_.str().find("hint"), std::string::npos);
}

TEST_F(Cli, AnalyzeWritesWitnesses) {
  const auto rho = dir_ / "rho.csv";
  std::ofstream(rho) << "n,rho\n0,0.03\n1,0.97\n2,0\n";
  const auto hist = dir_ / "h.csv";
  std::ofstream(hist) << "clicks,count\n0,627\n1,373\n";
  ASSERT_EQ(run({"analyze", "--rho", rho.string(), "--histogram", hist.string(), "--out-dir", dir_.string()}),
            cli::kExitOk);
  const json r = read_json(dir_ / "nonclassicality.json");
  EXPECT_NEAR(r["inferred_q"]["q"].get<double>(), -0.97, 1e-12);
  EXPECT_NEAR(r["detected_q"]["q"].get<double>(), -0.373, 1e-12);
  EXPECT_TRUE(r["p_negativity_witnessed"].get<bool>());
  EXPECT_TRUE(fs::exists(dir_ / "b_sweep.csv"));
  ASSERT_EQ(run({"analyze", "--rho", rho.string(), "--out-dir", dir_.string()}), cli::kExitOk);
  EXPECT_TRUE(read_json(dir_ / "nonclassicality.json")["detected_q"]["q"].is_null());
}

TEST_F(Cli, PipelineSingleTrigger) {
  const auto path = write_config("st.json", small_single());
  ASSERT_EQ(run({"pipeline", "--config", path, "--out-dir", dir_.string()}), cli::kExitOk);
  const json r = read_json(dir_ / "report.json");
  EXPECT_EQ(r["schema_version"], io::kSchemaVersion);
  EXPECT_NEAR(r["efficiency"]["weighted_average"]["eta_hat"].get<double>(), 0.373, 0.006);
  EXPECT_NEAR(r["inversion"]["em"]["rho_hat"][1].get<double>(), 0.97, 0.015);
  EXPECT_EQ(r["inversion"]["eta_used"], r["efficiency"]["weighted_average"]["eta_hat"]);
  EXPECT_NEAR(r["nonclassicality"]["detected_q"]["q"].get<double>(), -0.37, 0.03);
  EXPECT_NEAR(r["nonclassicality"]["inferred_q"]["q"].get<double>(), -0.97, 0.03);
  EXPECT_EQ(r["efficiency"]["estimates"].size(), 2u);
  EXPECT_TRUE(r["provenance"].contains("generated_at"));
}

TEST_F(Cli, PipelineVacuumWarnsButSucceeds) {
  const auto path = write_config("vac.json", json{{"lambda", 0.0}, {"pulses", 10000}});
  EXPECT_EQ(run({"pipeline", "--config", path, "--out-dir", dir_.string(), "--strict"}), cli::kExitOk);
  EXPECT_NE(err_.str().find("empty_herald"), std::string::npos);
  const json r = read_json(dir_ / "report.json");
  EXPECT_TRUE(r["inversion"].is_null());
  EXPECT_EQ(r["warnings"][0]["code"], "empty_herald");
}

TEST_F(Cli, PipelineStrictOnFluorescence) {
  const auto path = write_config("fl.json", fluorescence());
  EXPECT_EQ(run({"pipeline", "--config", path, "--out-dir", dir_.string()}), cli::kExitOk);
  EXPECT_EQ(run({"pipeline", "--config", path, "--out-dir", dir_.string(), "--strict"}), cli::kExitWarning);
}

TEST_F(Cli, PipelineStageTaggedError) {
  // ideal k = 3 trigger has no efficiency estimator
  json cfg{{"lambda", 0.4}, {"herald", {{"kind", "ideal_k_resolving"}, {"k", 3}}}, {"pulses", 100000}};
  const auto path = write_config("k3.json", cfg);
  EXPECT_EQ(run({"pipeline", "--config", path, "--out-dir", dir_.string()}), cli::kExitUsage);
  EXPECT_NE(err_.str().find("[calibrate]"), std::string::npos);
}

TEST_F(Cli, PipelineAnalysisValidation) {
  json cfg = small_single();
  cfg["analysis"] = {{"n_max", 0}};
  const auto path = write_config("bad.json", cfg);
  EXPECT_EQ(run({"pipeline", "--config", path, "--out-dir", dir_.string()}), cli::kExitUsage);
  EXPECT_NE(err_.str().find("/analysis/n_max"), std::string::npos);
}

TEST_F(Cli, PipelineReportIsDeterministicAcrossThreads) {
  json cfg = small_single();
  cfg["chunk_pulses"] = 1'000'000;
  const auto path = write_config("st.json", cfg);
  const auto a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run({"pipeline", "--config", path, "--out-dir", a.string(), "--threads", "1"}), cli::kExitOk);
  ASSERT_EQ(run({"pipeline", "--config", path, "--out-dir", b.string(), "--threads", "4"}), cli::kExitOk);
  json ra = read_json(a / "report.json"), rb = read_json(b / "report.json");
  ra["provenance"].erase("generated_at");
  rb["provenance"].erase("generated_at");
  EXPECT_EQ(ra.dump(), rb.dump());
  EXPECT_EQ(io::read_file((a / "rho_hat.csv").string()), io::read_file((b / "rho_hat.csv").string()));
}
