#include <iostream>

#include <CLI11.hpp>

#include "pnn/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photonic neural network simulator with in-situ backpropagation"};
  app.require_subcommand(1, 1);

  std::string config_path, out_dir, method;
  std::uint64_t seed = 0;
  bool ideal = false;
  app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
  auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides the config)");
  auto* method_opt =
      app.add_option("--method", method, "gradient method")->check(CLI::IsMember({"digital", "analog"}));
  app.add_flag("--ideal", ideal, "disable every hardware error");

  const std::vector<std::pair<const char*, const char*>> commands = {
      {"train", "train a model and log per-iteration metrics (JSONL)"},
      {"gradcheck", "compare in-situ gradients with finite differences"},
      {"noise-sweep", "train over a_error, p_error and snr_db grids"},
      {"calibrate", "fit phase-shifter calibration models to simulated sweeps"},
      {"analog-demo", "dump zeta-swept sum-pass traces near and far from a target unitary"},
      {"energy", "closed-form energy per layer pass"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitConfig;
  }

  try {
    pnn::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = pnn::load_experiment_config(config_path);
    if (*seed_opt) cfg.seed = seed;
    if (*out_opt) cfg.out = out_dir;
    if (*method_opt) cfg.method = pnn::gradient_method_from_string(method);
    if (ideal) cfg.make_ideal();

    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "train") pnn::run_train(cfg, std::cout);
    if (command == "gradcheck") pnn::run_gradcheck(cfg, std::cout);
    if (command == "noise-sweep") pnn::run_noise_sweep(cfg, std::cout);
    if (command == "calibrate") pnn::run_calibrate(cfg, std::cout);
    if (command == "analog-demo") pnn::run_analog_demo(cfg, std::cout);
    if (command == "energy") pnn::run_energy(cfg, std::cout);
  } catch (const pnn::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const pnn::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return 0;
}
