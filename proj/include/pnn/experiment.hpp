#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "pnn/energy.hpp"
#include "pnn/hardware.hpp"
#include "pnn/insitu.hpp"
#include "pnn/training.hpp"

namespace pnn {

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One run of the experiment harness. Serializes to a nested JSON document;
/// unknown keys are rejected so typos cannot silently fall back to defaults.
struct ExperimentConfig {
  // model
  std::size_t n_modes = 4;
  std::size_t n_layers = 3;
  double input_power = 5.0;  ///< ‖x‖²; with the power-ratio head it acts as a softmax temperature

  // dataset: "circle", "moons", "ring" or "mnist64"; `dataset_path` loads a saved 2D set instead
  std::string dataset = "circle";
  std::size_t dataset_size = 250;
  double dataset_noise = 0.0;
  std::uint64_t dataset_seed = 1;
  DatasetShape shape;
  std::string dataset_path;
  std::string mnist_dir = "data/mnist";
  std::size_t mnist_train = 2000;
  std::size_t mnist_test = 1000;

  HardwareErrorConfig hardware;
  ReadoutMode readout = ReadoutMode::ideal;
  GradientMethod method = GradientMethod::digital;
  std::size_t analog_samples = 64;
  GradientSource source = GradientSource::insitu;

  double learning_rate = 0.01;
  std::size_t iterations = 1000;
  std::size_t batch_size = 1;
  std::size_t eval_every = 10;

  std::uint64_t seed = 0;
  std::string out = "runs/latest";

  // gradcheck
  std::size_t gradcheck_examples = 10;
  // noise-sweep grids, one axis varied at a time
  std::vector<double> sweep_a_error{0.0, 0.01, 0.02, 0.05};
  std::vector<double> sweep_p_error{0.0, 0.01, 0.02, 0.05};
  std::vector<double> sweep_snr_db{std::numeric_limits<double>::infinity(), 30.0, 20.0, 10.0};
  // calibrate
  std::size_t calibration_points = 201;
  std::size_t calibration_fits = 50;
  double calibration_snr_db = 30.0;
  // analog-demo
  std::vector<double> analog_sigmas{1.0, 0.2};
  // energy
  EnergyParams energy{4, 1.0, 1.0, 1.0, 1.0};

  /// Throws ConfigError.
  void validate() const;
  /// Disable every hardware error and use exact readout.
  void make_ideal();
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// FNV-1a of the canonical JSON form without `out`, as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);

std::string to_string(ReadoutMode m);
ReadoutMode readout_mode_from_string(const std::string& s);
std::string to_string(GradientMethod m);
GradientMethod gradient_method_from_string(const std::string& s);

/// Experiment drivers. Each writes its files into `cfg.out` (created when
/// missing), every file carrying the config hash and seed, and prints a
/// human-readable summary to `log` whose last line states the headline result.
void run_train(const ExperimentConfig& cfg, std::ostream& log);
void run_gradcheck(const ExperimentConfig& cfg, std::ostream& log);
void run_noise_sweep(const ExperimentConfig& cfg, std::ostream& log);
void run_calibrate(const ExperimentConfig& cfg, std::ostream& log);
void run_analog_demo(const ExperimentConfig& cfg, std::ostream& log);
void run_energy(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace pnn
