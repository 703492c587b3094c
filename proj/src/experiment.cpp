#include "pnn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

namespace pnn {

// ---------------------------------------------------------------------------
// Names

std::string to_string(ReadoutMode m) {
  switch (m) {
    case ReadoutMode::ideal: return "ideal";
    case ReadoutMode::true_phase: return "true_phase";
    case ReadoutMode::self_configure: return "self_configure";
  }
  return "?";
}

ReadoutMode readout_mode_from_string(const std::string& s) {
  if (s == "ideal") return ReadoutMode::ideal;
  if (s == "true_phase") return ReadoutMode::true_phase;
  if (s == "self_configure") return ReadoutMode::self_configure;
  throw ConfigError("unknown readout mode '" + s + "' (ideal, true_phase, self_configure)");
}

std::string to_string(GradientMethod m) { return m == GradientMethod::digital ? "digital" : "analog"; }

GradientMethod gradient_method_from_string(const std::string& s) {
  if (s == "digital") return GradientMethod::digital;
  if (s == "analog") return GradientMethod::analog;
  throw ConfigError("unknown gradient method '" + s + "' (digital, analog)");
}

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(n_modes >= 2, "model.n_modes must be >= 2");
  require(n_layers >= 1, "model.n_layers must be >= 1");
  require(input_power > 0.0 && std::isfinite(input_power), "model.input_power must be > 0");
  require(dataset_size >= 10, "dataset.size must be >= 10");
  require(dataset_noise >= 0.0, "dataset.noise must be >= 0");
  if (dataset == "mnist64") {
    require(n_modes == 64, "dataset mnist64 needs model.n_modes = 64");
    require(mnist_train > 0 && mnist_test > 0, "dataset.mnist_train and mnist_test must be > 0");
  } else {
    try {
      dataset_kind_from_string(dataset);
    } catch (const std::invalid_argument&) {
      require(false, "dataset.kind must be circle, moons, ring or mnist64");
    }
    require(n_modes == 4, "2D datasets need model.n_modes = 4");
  }
  require(learning_rate > 0.0, "optimizer.learning_rate must be > 0");
  require(iterations > 0, "training.iterations must be > 0");
  require(batch_size > 0, "training.batch_size must be > 0");
  require(eval_every > 0, "training.eval_every must be > 0");
  require(analog_samples >= 3, "gradient.analog_samples must be >= 3");
  require(gradcheck_examples > 0, "gradcheck.examples must be > 0");
  require(calibration_points >= 10, "calibration.points must be >= 10");
  require(calibration_fits > 0, "calibration.fits must be > 0");
  require(calibration_snr_db > 0.0, "calibration.snr_db must be > 0");
  require(!out.empty(), "out must not be empty");
  for (double v : sweep_a_error) require(v >= 0.0, "noise_sweep.a_error values must be >= 0");
  for (double v : sweep_p_error) require(v >= 0.0, "noise_sweep.p_error values must be >= 0");
  for (double v : sweep_snr_db) require(v > 0.0, "noise_sweep.snr_db values must be > 0");
  for (double v : analog_sigmas) require(v >= 0.0, "analog_demo.sigmas must be >= 0");
  try {
    hardware.validate();
    energy.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void ExperimentConfig::make_ideal() {
  hardware = HardwareErrorConfig{};
  readout = ReadoutMode::ideal;
}

namespace {

using nlohmann::json;

json number_or_inf(double v) { return std::isinf(v) ? json("inf") : json(v); }

double read_number_or_inf(const json& j, const std::string& where) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw ConfigError(where + ": expected a number or \"inf\"");
  }
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + (where.empty() ? "" : where + ".") + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& into, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    into = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

}  // namespace

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  json sweep_snr = json::array();
  for (double v : c.sweep_snr_db) sweep_snr.push_back(number_or_inf(v));
  j = json{
      {"model", {{"n_modes", c.n_modes}, {"n_layers", c.n_layers}, {"input_power", c.input_power}}},
      {"dataset",
       {{"kind", c.dataset},
        {"size", c.dataset_size},
        {"noise", c.dataset_noise},
        {"seed", c.dataset_seed},
        {"circle_radius", c.shape.circle_radius},
        {"ring_inner", c.shape.ring_inner},
        {"ring_outer", c.shape.ring_outer},
        {"moon_offset", c.shape.moon_offset},
        {"path", c.dataset_path},
        {"mnist_dir", c.mnist_dir},
        {"mnist_train", c.mnist_train},
        {"mnist_test", c.mnist_test}}},
      {"hardware", c.hardware},
      {"readout", to_string(c.readout)},
      {"gradient",
       {{"method", to_string(c.method)},
        {"analog_samples", c.analog_samples},
        {"source", c.source == GradientSource::insitu ? "insitu" : "reference"}}},
      {"optimizer", {{"learning_rate", c.learning_rate}}},
      {"training", {{"iterations", c.iterations}, {"batch_size", c.batch_size}, {"eval_every", c.eval_every}}},
      {"seed", c.seed},
      {"out", c.out},
      {"gradcheck", {{"examples", c.gradcheck_examples}}},
      {"noise_sweep", {{"a_error", c.sweep_a_error}, {"p_error", c.sweep_p_error}, {"snr_db", sweep_snr}}},
      {"calibration",
       {{"points", c.calibration_points}, {"fits", c.calibration_fits}, {"snr_db", c.calibration_snr_db}}},
      {"analog_demo", {{"sigmas", c.analog_sigmas}}},
      {"energy", c.energy},
  };
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c = ExperimentConfig{};
  check_keys(j,
             {"model", "dataset", "hardware", "readout", "gradient", "optimizer", "training", "seed", "out",
              "gradcheck", "noise_sweep", "calibration", "analog_demo", "energy"},
             "");
  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, {"n_modes", "n_layers", "input_power"}, "model");
    read(m, "n_modes", c.n_modes, "model");
    read(m, "n_layers", c.n_layers, "model");
    read(m, "input_power", c.input_power, "model");
  }
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d,
               {"kind", "size", "noise", "seed", "circle_radius", "ring_inner", "ring_outer", "moon_offset", "path",
                "mnist_dir", "mnist_train", "mnist_test"},
               "dataset");
    read(d, "kind", c.dataset, "dataset");
    read(d, "size", c.dataset_size, "dataset");
    read(d, "noise", c.dataset_noise, "dataset");
    read(d, "seed", c.dataset_seed, "dataset");
    read(d, "circle_radius", c.shape.circle_radius, "dataset");
    read(d, "ring_inner", c.shape.ring_inner, "dataset");
    read(d, "ring_outer", c.shape.ring_outer, "dataset");
    read(d, "moon_offset", c.shape.moon_offset, "dataset");
    read(d, "path", c.dataset_path, "dataset");
    read(d, "mnist_dir", c.mnist_dir, "dataset");
    read(d, "mnist_train", c.mnist_train, "dataset");
    read(d, "mnist_test", c.mnist_test, "dataset");
  }
  if (j.contains("hardware")) {
    check_keys(j.at("hardware"), {"a_error", "p_error", "snr_db", "tap_coupling_spread", "static_io_error", "seed"},
               "hardware");
    try {
      c.hardware = j.at("hardware").get<HardwareErrorConfig>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("hardware: ") + e.what());
    }
  }
  if (j.contains("readout")) {
    std::string s;
    read(j, "readout", s, "");
    c.readout = readout_mode_from_string(s);
  }
  if (j.contains("gradient")) {
    const auto& g = j.at("gradient");
    check_keys(g, {"method", "analog_samples", "source"}, "gradient");
    std::string method = to_string(c.method), source = "insitu";
    read(g, "method", method, "gradient");
    read(g, "analog_samples", c.analog_samples, "gradient");
    read(g, "source", source, "gradient");
    c.method = gradient_method_from_string(method);
    if (source != "insitu" && source != "reference") throw ConfigError("gradient.source must be insitu or reference");
    c.source = source == "insitu" ? GradientSource::insitu : GradientSource::reference;
  }
  if (j.contains("optimizer")) {
    check_keys(j.at("optimizer"), {"learning_rate"}, "optimizer");
    read(j.at("optimizer"), "learning_rate", c.learning_rate, "optimizer");
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    check_keys(t, {"iterations", "batch_size", "eval_every"}, "training");
    read(t, "iterations", c.iterations, "training");
    read(t, "batch_size", c.batch_size, "training");
    read(t, "eval_every", c.eval_every, "training");
  }
  read(j, "seed", c.seed, "");
  read(j, "out", c.out, "");
  if (j.contains("gradcheck")) {
    check_keys(j.at("gradcheck"), {"examples"}, "gradcheck");
    read(j.at("gradcheck"), "examples", c.gradcheck_examples, "gradcheck");
  }
  if (j.contains("noise_sweep")) {
    const auto& s = j.at("noise_sweep");
    check_keys(s, {"a_error", "p_error", "snr_db"}, "noise_sweep");
    read(s, "a_error", c.sweep_a_error, "noise_sweep");
    read(s, "p_error", c.sweep_p_error, "noise_sweep");
    if (s.contains("snr_db")) {
      if (!s.at("snr_db").is_array()) throw ConfigError("noise_sweep.snr_db must be an array");
      c.sweep_snr_db.clear();
      for (const auto& v : s.at("snr_db")) c.sweep_snr_db.push_back(read_number_or_inf(v, "noise_sweep.snr_db"));
    }
  }
  if (j.contains("calibration")) {
    const auto& s = j.at("calibration");
    check_keys(s, {"points", "fits", "snr_db"}, "calibration");
    read(s, "points", c.calibration_points, "calibration");
    read(s, "fits", c.calibration_fits, "calibration");
    if (s.contains("snr_db")) c.calibration_snr_db = read_number_or_inf(s.at("snr_db"), "calibration.snr_db");
  }
  if (j.contains("analog_demo")) {
    check_keys(j.at("analog_demo"), {"sigmas"}, "analog_demo");
    read(j.at("analog_demo"), "sigmas", c.analog_sigmas, "analog_demo");
  }
  if (j.contains("energy")) {
    check_keys(j.at("energy"), {"n", "e_inp", "e_meas", "e_grad", "e_grad_digital"}, "energy");
    try {
      c.energy = j.at("energy").get<EnergyParams>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("energy: ") + e.what());
    }
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  try {
    return nlohmann::json::parse(in).get<ExperimentConfig>();
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_hash(const ExperimentConfig& c) {
  // the output location does not change what is computed
  nlohmann::json j = c;
  j.erase("out");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

// ---------------------------------------------------------------------------
// Drivers

namespace {

struct Prepared {
  Dataset data;
  std::vector<ModeVector> inputs;
  OutputHead head = OutputHead::softmax2();
};

OutputHead mnist_head() {
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t c = 0; c < 10; ++c) groups.push_back({c});
  return OutputHead::softmax(groups);
}

Prepared prepare(const ExperimentConfig& cfg) {
  Prepared p;
  if (cfg.dataset == "mnist64") {
    p.data = load_mnist64(cfg.mnist_dir, cfg.mnist_train, cfg.mnist_test);
    p.head = mnist_head();
  } else if (!cfg.dataset_path.empty()) {
    p.data = load_dataset(cfg.dataset_path);
    if (p.data.n_classes > 2 || p.data.features[0].size() != 2) throw DataError("dataset file must hold 2D two-class data");
  } else {
    p.data = make_dataset(dataset_kind_from_string(cfg.dataset), cfg.dataset_size, cfg.dataset_noise, cfg.dataset_seed,
                          cfg.shape);
  }
  p.inputs = encode_dataset(p.data, cfg.input_power);
  return p;
}

PnnModel initial_model(const ExperimentConfig& cfg, const OutputHead& head) {
  Rng rng = make_stream(cfg.seed, 0x1417);
  return PnnModel::random(cfg.n_modes, cfg.n_layers, head, rng);
}

ReadoutConfig readout_of(const ExperimentConfig& cfg) { return {cfg.readout, cfg.hardware}; }

TrainConfig train_config(const ExperimentConfig& cfg, const std::string& hash) {
  TrainConfig t;
  t.iterations = cfg.iterations;
  t.batch_size = cfg.batch_size;
  t.learning_rate = cfg.learning_rate;
  t.source = cfg.source;
  t.insitu = {cfg.method, cfg.analog_samples};
  t.readout = readout_of(cfg);
  t.seed = cfg.seed;
  t.eval_every = cfg.eval_every;
  t.config_hash = hash;
  return t;
}

std::filesystem::path prepare_out(const ExperimentConfig& cfg, const std::string& hash) {
  const std::filesystem::path dir(cfg.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  std::ofstream out(dir / "config.json");
  if (!out) throw DataError("cannot write " + (dir / "config.json").string());
  nlohmann::json j = cfg;
  j["config_hash"] = hash;
  out << j.dump(2) << '\n';
  return dir;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(12);
  return out;
}

std::string table_header(const std::string& hash, std::uint64_t seed) {
  return "# config_hash=" + hash + " seed=" + std::to_string(seed) + "\n";
}

nlohmann::json model_json(const PnnModel& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.layers) layers.push_back({{"theta", l.theta()}, {"phi", l.phi()}, {"gamma", l.gamma()}});
  return {{"n_modes", model.n_modes()}, {"layers", layers}};
}

std::string percent(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << v;
  return s.str();
}

}  // namespace

void run_train(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto hash = config_hash(cfg);
  const auto dir = prepare_out(cfg, hash);
  auto prep = prepare(cfg);
  auto model = initial_model(cfg, prep.head);
  log << "training " << cfg.n_layers << "-layer N=" << cfg.n_modes << " model on " << prep.data.name << " ("
      << prep.data.train.size() << " train / " << prep.data.test.size() << " test), " << cfg.iterations
      << " iterations, readout " << to_string(cfg.readout) << ", config " << hash << '\n';
  const auto result = train(model, prep.data, prep.inputs, train_config(cfg, hash));

  auto out = open_out(dir / "train.jsonl");
  result.write_jsonl(out);
  auto m = open_out(dir / "model.json");
  nlohmann::json mj = model_json(model);
  mj["config_hash"] = hash;
  mj["seed"] = cfg.seed;
  m << mj.dump(2) << '\n';

  const auto& r = result.last_evaluation();
  const double gerr = result.mean_gradient_error();
  if (!std::isnan(gerr)) log << "mean gradient direction error " << gerr << '\n';
  log << "final iteration " << r.iteration << ": model train accuracy " << percent(r.model_train_accuracy)
      << ", model test accuracy " << percent(r.model_test_accuracy) << ", device test accuracy "
      << percent(r.device_test_accuracy) << '\n';
  log << "test accuracy " << percent(r.model_test_accuracy) << '\n';
}

void run_gradcheck(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto hash = config_hash(cfg);
  const auto dir = prepare_out(cfg, hash);
  const OutputHead head = cfg.dataset == "mnist64" ? mnist_head() : OutputHead::softmax2();
  const auto model = initial_model(cfg, head);
  const auto devices = make_devices(model, readout_of(cfg));
  const InSituOptions opts{cfg.method, cfg.analog_samples};
  Rng rng = make_stream(cfg.seed, 0x6C4EC);
  const auto flat = model.flatten();
  const double h = 1e-5;

  nlohmann::json examples = nlohmann::json::array();
  double worst = 0.0;
  for (std::size_t e = 0; e < cfg.gradcheck_examples; ++e) {
    // random positive input of the configured power, as after a |·| layer
    ModeVector x(static_cast<Eigen::Index>(cfg.n_modes));
    std::uniform_real_distribution<double> u(0.1, 1.0);
    for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = u(rng);
    x *= std::sqrt(cfg.input_power) / x.norm();
    const std::size_t label = e % head.class_count();

    std::vector<double> measured;
    for (const auto& g : insitu_gradient(x, label, model, devices, opts, rng).layers) {
      const auto f = g.flatten();
      measured.insert(measured.end(), f.begin(), f.end());
    }
    double diff = 0.0, scale = 0.0;
    std::size_t offset = 0;
    for (const auto& layer : model.layers) {
      for (std::size_t i = 0; i < layer.parameter_count(); ++i) {
        // θ at the ends of [0, π] has only a one-sided derivative
        if (i < layer.theta().size() && (layer.theta()[i] < 1e-4 || layer.theta()[i] > kPi - 1e-4)) continue;
        auto plus = flat, minus = flat;
        plus[offset + i] += h;
        minus[offset + i] -= h;
        const double fd =
            (model_loss(model.with_flat(plus), x, label) - model_loss(model.with_flat(minus), x, label)) / (2 * h);
        diff = std::max(diff, std::abs(measured[offset + i] - fd));
        scale = std::max(scale, std::abs(fd));
      }
      offset += layer.parameter_count();
    }
    const double rel = diff / std::max(scale, 1e-8);
    worst = std::max(worst, rel);
    examples.push_back({{"label", label}, {"relative_error", rel}});
  }

  auto out = open_out(dir / "gradcheck.json");
  out << nlohmann::json{{"config_hash", hash},
                        {"seed", cfg.seed},
                        {"method", to_string(cfg.method)},
                        {"readout", to_string(cfg.readout)},
                        {"step", h},
                        {"examples", examples},
                        {"max_relative_error", worst}}
             .dump(2)
      << '\n';
  log << "gradient check: " << cfg.gradcheck_examples << " examples, " << cfg.n_layers << " layers, method "
      << to_string(cfg.method) << ", readout " << to_string(cfg.readout) << '\n';
  log << "max relative finite-difference error " << std::scientific << std::setprecision(3) << worst
      << std::defaultfloat << '\n';
}

void run_noise_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto hash = config_hash(cfg);
  const auto dir = prepare_out(cfg, hash);
  const auto prep = prepare(cfg);
  auto out = open_out(dir / "noise_sweep.csv");
  out << table_header(hash, cfg.seed)
      << "axis,value,point_seed,model_train_accuracy,model_test_accuracy,device_test_accuracy,mean_gradient_error\n";

  struct Axis {
    const char* name;
    const std::vector<double>& values;
  };
  const Axis axes[] = {{"a_error", cfg.sweep_a_error}, {"p_error", cfg.sweep_p_error}, {"snr_db", cfg.sweep_snr_db}};
  std::uint64_t index = 0;
  for (const auto& axis : axes) {
    for (double value : axis.values) {
      ExperimentConfig point = cfg;
      point.hardware = HardwareErrorConfig{};
      point.hardware.seed = cfg.hardware.seed;
      point.hardware.tap_coupling_spread = cfg.hardware.tap_coupling_spread;
      if (std::string(axis.name) == "a_error") point.hardware.a_error = value;
      if (std::string(axis.name) == "p_error") point.hardware.p_error = value;
      if (std::string(axis.name) == "snr_db") point.hardware.snr_db = value;
      point.readout = point.hardware.is_ideal() ? ReadoutMode::ideal
                      : cfg.readout == ReadoutMode::ideal ? ReadoutMode::self_configure
                                                          : cfg.readout;
      Rng seeder = make_stream(cfg.seed, 0x5EE9 + index++);
      point.seed = seeder();
      auto model = initial_model(cfg, prep.head);  // shared start across the grid
      auto tc = train_config(point, hash);
      const auto result = train(model, prep.data, prep.inputs, tc);
      const auto& r = result.last_evaluation();
      out << axis.name << ',' << value << ',' << point.seed << ',' << r.model_train_accuracy << ','
          << r.model_test_accuracy << ',' << r.device_test_accuracy << ',' << result.mean_gradient_error() << '\n';
      log << axis.name << " = " << value << ": model test accuracy " << percent(r.model_test_accuracy)
          << ", device test accuracy " << percent(r.device_test_accuracy) << '\n';
    }
  }
  log << "noise sweep written to " << (dir / "noise_sweep.csv").string() << '\n';
}

void run_calibrate(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto hash = config_hash(cfg);
  const auto dir = prepare_out(cfg, hash);
  const auto truth = CalibrationModel::default_heater();
  HardwareErrorConfig noise = cfg.hardware;
  noise.snr_db = cfg.calibration_snr_db;
  std::vector<double> rms;
  nlohmann::json fits = nlohmann::json::array();
  CalibrationModel first;
  for (std::size_t k = 0; k < cfg.calibration_fits; ++k) {
    Rng rng = make_stream(cfg.seed, 0xCA11 + k);
    const auto fit = fit_calibration(simulate_calibration_sweep(truth, cfg.calibration_points, noise, rng));
    if (k == 0) first = fit;
    rms.push_back(calibration_phase_rms(fit, truth));
    fits.push_back({{"model", fit}, {"theta_rms", rms.back()}});
  }
  auto sorted = rms;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  // first fit in the calibration-model format, tagged with the run
  nlohmann::json model = first;
  model["config_hash"] = hash;
  model["seed"] = cfg.seed;
  open_out(dir / "calibration_model.json") << model.dump(2) << '\n';
  open_out(dir / "calibration_fits.json") << nlohmann::json{{"config_hash", hash},
                                                             {"seed", cfg.seed},
                                                             {"truth", truth},
                                                             {"points", cfg.calibration_points},
                                                             {"snr_db", number_or_inf(cfg.calibration_snr_db)},
                                                             {"fits", fits},
                                                             {"median_theta_rms", median}}
                                                     .dump(2)
                                              << '\n';
  log << cfg.calibration_fits << " calibration fits of " << cfg.calibration_points << "-point sweeps at "
      << cfg.calibration_snr_db << " dB\n";
  log << "median theta(v) rms error " << std::scientific << std::setprecision(3) << median << std::defaultfloat
      << " rad\n";
}

void run_analog_demo(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto hash = config_hash(cfg);
  const auto dir = prepare_out(cfg, hash);
  // target: the unitary discrete Fourier transform on the configured modes
  const std::size_t n = cfg.n_modes;
  CMatrix target(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      target(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          std::polar(1.0 / std::sqrt(double(n)), -kTwoPi * double(r * c) / double(n));
  const auto topo = MeshTopology::triangular(n);
  const auto exact = phases_from_unitary(target);
  nlohmann::json summary = nlohmann::json::array();
  std::size_t index = 0;
  for (double sigma : cfg.analog_sigmas) {
    Rng rng = make_stream(cfg.seed, 0xA7A + index++);
    const PnnModel model(topo, {perturb_phases(exact, sigma, rng)}, OutputHead::fidelity());
    const MeshDevice device(topo, readout_of(cfg));
    const std::size_t m = 0;
    const ModeVector x = target.row(0).conjugate().transpose();
    const auto fwd = mesh_forward(device, model.layers[0], x, rng);
    const auto bwd = mesh_backward(device, model.layers[0], model.head.adjoint(fwd.output, m), rng);
    const double aj_norm = bwd.output.norm();
    if (aj_norm == 0.0) throw NumericalError("analog-demo: zero adjoint field");
    const auto [grad, sweep] = analog_gradient(device, model.layers[0], x / std::sqrt(fwd.input_power),
                                               bwd.output / aj_norm, fwd.input_power, bwd.input_power,
                                               cfg.analog_samples, rng);
    const auto ref = reference_gradient(x, m, model);
    const double fid = fidelity_error(build_unitary(topo, model.layers[0]), target);
    double err = std::numeric_limits<double>::quiet_NaN();
    try {
      err = gradient_direction_error(grad.optical(), ref[0].optical());
    } catch (const std::invalid_argument&) {
    }

    std::ostringstream name;
    name << "analog_sigma_" << sigma << ".csv";
    auto out = open_out(dir / name.str());
    out << table_header(hash, cfg.seed) << "# sigma=" << sigma << " fidelity_error=" << fid << '\n'
        << "shifter,index,zeta,power\n";
    for (std::size_t i = 0; i < sweep.theta_traces.size(); ++i)
      for (std::size_t k = 0; k < sweep.zeta.size(); ++k)
        out << "theta," << i << ',' << sweep.zeta[k] << ',' << sweep.theta_traces[i][k] << '\n';
    for (std::size_t i = 0; i < sweep.phi_traces.size(); ++i)
      for (std::size_t k = 0; k < sweep.zeta.size(); ++k)
        out << "phi," << i << ',' << sweep.zeta[k] << ',' << sweep.phi_traces[i][k] << '\n';
    summary.push_back({{"sigma", sigma},
                       {"fidelity_error", fid},
                       {"analog_gradient", grad.optical()},
                       {"reference_gradient", ref[0].optical()},
                       {"gradient_direction_error", std::isnan(err) ? nlohmann::json() : nlohmann::json(err)}});
    log << "sigma " << sigma << ": fidelity error " << fid << ", gradient direction error " << err << '\n';
  }
  open_out(dir / "analog_demo.json") << nlohmann::json{{"config_hash", hash},
                                                        {"seed", cfg.seed},
                                                        {"samples", cfg.analog_samples},
                                                        {"points", summary}}
                                                .dump(2)
                                         << '\n';
  log << "traces written to " << dir.string() << '\n';
}

void run_energy(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto hash = config_hash(cfg);
  const auto dir = prepare_out(cfg, hash);
  nlohmann::json j{{"config_hash", hash}, {"seed", cfg.seed}, {"params", cfg.energy}};
  for (auto scheme : {EnergyScheme::inference, EnergyScheme::backprop_analog, EnergyScheme::backprop_digital}) {
    const double e = energy_estimate(cfg.energy, scheme);
    j[to_string(scheme)] = e;
    log << to_string(scheme) << ": " << e << "\n";
  }
  open_out(dir / "energy.json") << j.dump(2) << '\n';
}

}  // namespace pnn
