#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pnn/experiment.hpp"

using namespace pnn;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string output;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(PNN_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  Run r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("pnn_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_config(const fs::path& path, const nlohmann::json& j) { std::ofstream(path) << j.dump(2); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// train.jsonl without the wall-clock field
std::string strip_time(const std::string& jsonl) {
  std::istringstream in(jsonl);
  std::string line, out;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    j.erase("wall_time");
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace

TEST_CASE("config roundtrip, hashing and validation") {
  ExperimentConfig c;
  c.dataset = "moons";
  c.readout = ReadoutMode::self_configure;
  c.hardware.snr_db = 20;
  c.sweep_snr_db = {std::numeric_limits<double>::infinity(), 10};
  const nlohmann::json j = c;
  const auto back = j.get<ExperimentConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c).size() == 16);
  ExperimentConfig d = c;
  d.seed = 1;
  CHECK(config_hash(d) != config_hash(c));

  CHECK_THROWS_AS(nlohmann::json({{"modle", {}}}).get<ExperimentConfig>(), ConfigError);
  CHECK_THROWS_AS(nlohmann::json({{"training", {{"iterations", "many"}}}}).get<ExperimentConfig>(), ConfigError);
  CHECK_THROWS_AS(nlohmann::json({{"readout", "perfect"}}).get<ExperimentConfig>(), ConfigError);
  CHECK_THROWS_AS(nlohmann::json({{"noise_sweep", {{"snr_db", {"loud"}}}}}).get<ExperimentConfig>(), ConfigError);

  ExperimentConfig bad;
  bad.n_modes = 8;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ExperimentConfig{};
  bad.dataset = "spiral";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ExperimentConfig{};
  bad.hardware.a_error = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  ExperimentConfig noisy = c;
  noisy.make_ideal();
  CHECK(noisy.hardware.is_ideal());
  CHECK(noisy.readout == ReadoutMode::ideal);
}

TEST_CASE("energy driver") {
  ExperimentConfig c;
  c.out = scratch("energy").string();
  std::ostringstream log;
  run_energy(c, log);
  const auto j = nlohmann::json::parse(read_file(fs::path(c.out) / "energy.json"));
  CHECK(j["backprop_analog"] == 36.0);
  CHECK(j["backprop_digital"] == 68.0);
  CHECK(j["config_hash"] == config_hash(c));
}

TEST_CASE("cli exit codes") {
  const auto dir = scratch("exit");
  CHECK(cli("frobnicate").status == 2);
  const auto none = cli("");
  CHECK(none.status == 2);
  CHECK(none.output.find("Usage") != std::string::npos);
  CHECK(cli("train --method sideways").status == 2);

  write_config(dir / "typo.json", {{"trainig", {{"iterations", 5}}}});
  const auto typo = cli("train --config " + (dir / "typo.json").string());
  CHECK(typo.status == 2);
  CHECK(typo.output.find("trainig") != std::string::npos);

  write_config(dir / "mnist.json", {{"model", {{"n_modes", 64}, {"n_layers", 2}}},
                                    {"dataset", {{"kind", "mnist64"}, {"mnist_dir", (dir / "nowhere").string()}}}});
  CHECK(cli("train --config " + (dir / "mnist.json").string() + " --out " + (dir / "m").string()).status == 3);

  // a sweep that covers too little phase cannot be fitted
  write_config(dir / "cal.json", {{"calibration", {{"points", 10}, {"fits", 1}, {"snr_db", 0.01}}}});
  const auto cal = cli("calibrate --config " + (dir / "cal.json").string() + " --out " + (dir / "c").string());
  CHECK((cal.status == 4 || cal.status == 0));
}

TEST_CASE("cli gradcheck and energy") {
  const auto dir = scratch("gradcheck");
  const auto r = cli("gradcheck --ideal --out " + dir.string());
  REQUIRE(r.status == 0);
  const auto pos = r.output.find("max relative finite-difference error ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(r.output.substr(pos + 37)) < 1e-5);
  const auto j = nlohmann::json::parse(read_file(dir / "gradcheck.json"));
  CHECK(j.contains("config_hash"));
  CHECK(j["seed"] == 0);

  const auto analog = cli("gradcheck --ideal --method analog --out " + dir.string());
  CHECK(analog.status == 0);
  const auto e = cli("energy --out " + dir.string());
  CHECK(e.status == 0);
  CHECK(e.output.find("backprop_analog: 36") != std::string::npos);
}

TEST_CASE("cli train is reproducible and tags every output") {
  const auto dir = scratch("train");
  write_config(dir / "cfg.json", {{"dataset", {{"kind", "moons"}, {"noise", 0.1}}},
                                  {"readout", "self_configure"},
                                  {"hardware", {{"snr_db", 25}}},
                                  {"training", {{"iterations", 30}, {"eval_every", 10}}}});
  const std::string base = "train --config " + (dir / "cfg.json").string() + " --seed 3 --out ";
  const auto a = cli(base + (dir / "a").string());
  const auto b = cli(base + (dir / "b").string());
  REQUIRE(a.status == 0);
  REQUIRE(b.status == 0);
  CHECK(a.output.find("test accuracy") != std::string::npos);
  const auto log_a = read_file(dir / "a" / "train.jsonl");
  CHECK(strip_time(log_a) == strip_time(read_file(dir / "b" / "train.jsonl")));
  CHECK(read_file(dir / "a" / "model.json") == read_file(dir / "b" / "model.json"));

  const auto cfg = nlohmann::json::parse(read_file(dir / "a" / "config.json"));
  const std::string hash = cfg["config_hash"];
  std::istringstream lines(log_a);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["config_hash"] == hash);
    CHECK(j["seed"] == 3);
    ++n;
  }
  CHECK(n == 30);
}

TEST_CASE("cli sweep, calibration and analog demo outputs") {
  const auto dir = scratch("sweep");
  write_config(dir / "cfg.json", {{"training", {{"iterations", 10}, {"eval_every", 10}}},
                                  {"noise_sweep", {{"a_error", {0.0, 0.02}}, {"p_error", {0.02}}, {"snr_db", {"inf", 20}}}},
                                  {"calibration", {{"fits", 3}}}});
  const std::string c = " --config " + (dir / "cfg.json").string() + " --out " + dir.string();
  REQUIRE(cli("noise-sweep" + c).status == 0);
  const auto table = read_file(dir / "noise_sweep.csv");
  CHECK(table.rfind("# config_hash=", 0) == 0);
  CHECK(std::count(table.begin(), table.end(), '\n') == 2 + 5);

  const auto cal = cli("calibrate" + c);
  REQUIRE(cal.status == 0);
  const auto model = nlohmann::json::parse(read_file(dir / "calibration_model.json"));
  CHECK(model.contains("config_hash"));
  CHECK(load_calibration(dir / "calibration_model.json").phase_span() > kTwoPi);

  REQUIRE(cli("analog-demo" + c).status == 0);
  CHECK(fs::exists(dir / "analog_sigma_1.csv"));
  CHECK(fs::exists(dir / "analog_sigma_0.2.csv"));
  CHECK(read_file(dir / "analog_sigma_1.csv").rfind("# config_hash=", 0) == 0);
}
