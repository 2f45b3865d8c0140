#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gaah/run.hpp"

using namespace gaah;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("gaah_run_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Everything after the meta line.
std::string data_rows(const fs::path& p) {
  const auto text = slurp(p);
  return text.substr(text.find('\n') + 1);
}

int cli(const std::string& args) {
  const std::string cmd = std::string(GAAH_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunConfig small_pe(const fs::path& out) {
  RunConfig c;
  c.experiment = "pe-series";
  c.L = 8;
  c.n_delta = 3;
  c.time = {0.0, 60.0, 5.0};
  c.window_start = 40.0;
  c.window_end = 60.0;
  c.orders = {1.0, 2.0};
  c.out = out.string();
  c.workers = 1;
  return c;
}

}  // namespace

TEST(Run, ConfigJsonRoundTrip) {
  RunConfig c;
  c.experiment = "lindblad";
  c.label = "x_1";
  c.delta = -0.25;
  c.T1 = {std::numeric_limits<double>::infinity(), 1000.0};
  c.points = {{0.5, 1.0}, {2.0, 3.0}};
  c.intended_zpa = {0.1, 0.2, 0.3};
  c.initial_states = {"1010"};
  c.grid_mu = {0.0, 1.0, 0.5};
  EXPECT_EQ(config_from_json(to_json(c)), c);
  // Through text as well, including the infinity-as-null convention.
  EXPECT_EQ(config_from_json(nlohmann::json::parse(to_json(c).dump())), c);
  EXPECT_EQ(config_from_json(to_json(RunConfig{})), RunConfig{});
}

TEST(Run, UnknownKeysNameTheirPath) {
  try {
    config_from_json(nlohmann::json::parse(R"({"grid": {"mu": {"start": 0, "stop": 1}}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "grid.mu.stop");
  }
  try {
    config_from_json(nlohmann::json::parse(R"({"muu": 1})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "muu");
  }
  try {
    config_from_json(nlohmann::json::parse(R"({"orders": [2, "x"]})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "orders[1]");
  }
}

TEST(Run, ValidationNamesTheField) {
  RunConfig c;
  c.M = 11;
  try {
    validate(c);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "M");
  }
  c = RunConfig{};
  c.initial_states = {"101"};
  try {
    validate(c);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "initial_states[0]");
  }
  c = RunConfig{};
  c.experiment = "lindblad";
  c.L = 12;
  EXPECT_THROW(validate(c), ConfigError);
  c = RunConfig{};
  c.experiment = "nope";
  EXPECT_THROW(validate(c), ConfigError);
  c = RunConfig{};
  c.window_end = 600.0;
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_NO_THROW(validate(RunConfig{}));
}

TEST(Run, MetaLineCarriesAnEquivalentConfig) {
  const auto dir = scratch("meta");
  const auto c = small_pe(dir);
  const auto res = run(c);
  ASSERT_EQ(res.files.size(), 2u);
  const auto meta = read_meta(res.files[0]);
  EXPECT_EQ(meta.at("schema"), "time_series");
  EXPECT_EQ(meta.at("seed"), 1);
  EXPECT_EQ(meta.at("columns"), (nlohmann::json{"t_ns", "observable", "index", "mean", "stderr", "n_traj"}));
  EXPECT_EQ(config_from_json(meta.at("config")), c);
  // The written config file reloads to the same configuration.
  EXPECT_EQ(load_config(res.files[1]), c);
  const auto rows = data_rows(res.files[0]);
  EXPECT_EQ(rows.substr(0, rows.find('\n')), "t_ns,observable,index,mean,stderr,n_traj");
  // 13 times x 2 orders.
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 1 + 26);
  EXPECT_NE(rows.find("0,S_PE,2,0,0,24"), std::string::npos);
}

TEST(Run, OutputIsIndependentOfWorkerCount) {
  const auto d1 = scratch("w1"), d3 = scratch("w3");
  auto c = small_pe(d1);
  const auto a = run(c);
  c.out = d3.string();
  c.workers = 3;
  const auto b = run(c);
  EXPECT_EQ(data_rows(a.files[0]), data_rows(b.files[0]));

  RunConfig s;
  s.experiment = "path-sweep";
  s.L = 6;
  s.n_delta = 2;
  s.path = "points";
  s.points = {{0.5, 1.0}, {2.0, 1.0}};
  s.rescale_to = 10;
  s.out = d1.string();
  s.workers = 1;
  const auto x = run(s);
  s.out = d3.string();
  s.workers = 3;
  const auto y = run(s);
  ASSERT_EQ(x.files.size(), 3u);
  EXPECT_EQ(data_rows(x.files[0]), data_rows(y.files[0]));
  EXPECT_EQ(data_rows(x.files[1]), data_rows(y.files[1]));
}

TEST(Run, QuenchAndPhaseMapSchemas) {
  const auto dir = scratch("schemas");
  RunConfig q;
  q.experiment = "quench";
  q.L = 6;
  q.n_delta = 2;
  q.time = {0.0, 10.0, 5.0};
  q.out = dir.string();
  const auto qr = run(q);
  const auto rows = data_rows(qr.files[0]);
  // Neel default: site 1 starts full, site 2 empty.
  EXPECT_NE(rows.find("\n0,P,1,1,0,2\n0,P,2,0,0,2\n"), std::string::npos);

  RunConfig p;
  p.experiment = "phase-map";
  p.L = 50;
  p.n_delta = 2;
  p.grid_mu = {0.0, 0.5, 0.5};
  p.grid_V = {0.0, 1.0, 1.0};
  p.out = dir.string();
  const auto pr = run(p);
  const auto prow = data_rows(pr.files[0]);
  EXPECT_EQ(prow.substr(0, prow.find('\n')), "mu,V,mean_neg_ln_ipr,stderr,n_delta,L,seed");
  EXPECT_EQ(std::count(prow.begin(), prow.end(), '\n'), 5);
  EXPECT_EQ(read_meta(pr.files[0]).at("schema"), "phase_map");
}

TEST(Run, DeviceMapRealisesTargets) {
  const auto dir = scratch("device");
  RunConfig c;
  c.experiment = "device-map";
  c.mu = 0.5;
  c.device = std::string(GAAH_SOURCE_DIR) + "/configs/device_synthetic.json";
  c.intended_zpa = {0.1, -0.05, 0.2};
  c.out = dir.string();
  const auto res = run(c);
  ASSERT_EQ(res.files.size(), 3u);
  std::istringstream rows(data_rows(res.files[0]));
  std::string line;
  std::getline(rows, line);
  EXPECT_EQ(line, "bond,J_target,omega_c,J_realized,residual");
  int n = 0;
  while (std::getline(rows, line)) {
    const double residual = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_LE(std::abs(residual), 1e-12);
    ++n;
  }
  EXPECT_EQ(n, 9);
  // Bonds above +4.8 MHz are out of reach with the positive sign.
  c.hopping_sign = 1.0;
  EXPECT_THROW(run(c), InfeasibleError);
}

TEST(Run, Presets) {
  for (const auto& name : preset_names()) {
    for (const bool full : {false, true}) {
      const auto cfgs = preset(name, full);
      ASSERT_FALSE(cfgs.empty()) << name;
      for (auto c : cfgs) {
        c.device = std::string(GAAH_SOURCE_DIR) + "/configs/device_synthetic.json";
        EXPECT_NO_THROW(validate(c)) << name << (full ? " full" : "");
      }
    }
  }
  EXPECT_EQ(preset("fig1c", true).front().L, 1000);
  EXPECT_EQ(preset("fig1c", true).front().n_delta, 100);
  EXPECT_EQ(preset("fig2d").front().initial_states.front(), "1010101010");
  try {
    preset("fig9");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("fig3a"), std::string::npos);
  }
}

TEST(Run, CliExitCodes) {
  const auto dir = scratch("cli");
  EXPECT_EQ(cli("--version"), 0);
  EXPECT_NE(cli(""), 0);
  const auto bad = dir / "bad.json";
  std::ofstream(bad) << R"({"experiment": "pe-series", "mu": -1})";
  EXPECT_EQ(cli("pe-series --config " + bad.string()), 2);
  const auto typo = dir / "typo.json";
  std::ofstream(typo) << R"({"experiment": "pe-series", "sead": 3})";
  EXPECT_EQ(cli("pe-series --config " + typo.string()), 2);
  const auto mismatch = dir / "mismatch.json";
  std::ofstream(mismatch) << R"({"experiment": "quench"})";
  EXPECT_EQ(cli("pe-series --config " + mismatch.string()), 2);
  EXPECT_EQ(cli("reproduce fig9"), 2);
  const auto infeasible = dir / "infeasible.json";
  std::ofstream(infeasible) << R"({"experiment": "device-map", "hopping_sign": 1, "mu": 0.5, "device": ")" +
                                   std::string(GAAH_SOURCE_DIR) + R"(/configs/device_synthetic.json"})";
  EXPECT_EQ(cli("device-map --config " + infeasible.string() + " --out " + dir.string()), 3);
  const auto good = dir / "good.json";
  std::ofstream(good) << R"({"experiment": "quench", "L": 4, "n_delta": 1, "time": {"start": 0, "end": 4, "step": 2}})";
  EXPECT_EQ(cli("quench --config " + good.string() + " --out " + dir.string() + " --seed 4"), 0);
  EXPECT_TRUE(fs::exists(dir / "quench.csv"));
  EXPECT_EQ(read_meta(dir / "quench.csv").at("seed"), 4);
}
