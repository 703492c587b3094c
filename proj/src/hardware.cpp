#include "pnn/hardware.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <unsupported/Eigen/NonLinearOptimization>

namespace pnn {

// ---------------------------------------------------------------------------
// Error configuration

bool HardwareErrorConfig::is_ideal() const {
  return a_error == 0.0 && p_error == 0.0 && std::isinf(snr_db) && tap_coupling_spread == 0.0;
}

void HardwareErrorConfig::validate() const {
  if (!(a_error >= 0.0) || !(p_error >= 0.0) || !(tap_coupling_spread >= 0.0))
    throw std::invalid_argument("HardwareErrorConfig: std-devs must be >= 0");
  if (!(snr_db > 0.0)) throw std::invalid_argument("HardwareErrorConfig: snr_db must be > 0 or inf");
}

void to_json(nlohmann::json& j, const HardwareErrorConfig& c) {
  j = nlohmann::json{{"a_error", c.a_error},
                     {"p_error", c.p_error},
                     {"snr_db", std::isinf(c.snr_db) ? nlohmann::json("inf") : nlohmann::json(c.snr_db)},
                     {"tap_coupling_spread", c.tap_coupling_spread},
                     {"static_io_error", c.static_io_error},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, HardwareErrorConfig& c) {
  c.a_error = j.value("a_error", 0.0);
  c.p_error = j.value("p_error", 0.0);
  c.snr_db = std::numeric_limits<double>::infinity();
  if (j.contains("snr_db")) {
    const auto& s = j.at("snr_db");
    if (s.is_string()) {
      if (s.get<std::string>() != "inf") throw std::invalid_argument("snr_db: expected number or \"inf\"");
    } else if (!s.is_null()) {
      c.snr_db = s.get<double>();
    }
  }
  c.tap_coupling_spread = j.value("tap_coupling_spread", 0.0);
  c.static_io_error = j.value("static_io_error", false);
  c.seed = j.value("seed", std::uint64_t{0});
  c.validate();
}

ModeVector perturb_input(const ModeVector& x, const HardwareErrorConfig& cfg, Rng& rng) {
  if (cfg.a_error == 0.0 && cfg.p_error == 0.0) return x;
  ModeVector out = x;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double da = gaussian(rng, cfg.a_error);
    const double dp = gaussian(rng, cfg.p_error);
    out[i] *= (1.0 + da) * std::polar(1.0, dp);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Power monitors

PowerMonitor::PowerMonitor(std::size_t n_modes, std::size_t tap_count, const HardwareErrorConfig& cfg)
    : n_modes_(static_cast<double>(std::max<std::size_t>(n_modes, 1))) {
  cfg.validate();
  if (!std::isinf(cfg.snr_db)) noise_scale_ = (1.0 / n_modes_) / std::pow(10.0, cfg.snr_db / 10.0);
  if (cfg.tap_coupling_spread > 0.0) {
    Rng rng = make_stream(cfg.seed, 0xC0FFEEULL);
    couplings_.resize(tap_count);
    for (auto& c : couplings_) c = 1.0 + gaussian(rng, cfg.tap_coupling_spread);
  }
}

double PowerMonitor::noise_sd(double intensity) const {
  return noise_scale_ * std::sqrt(std::max(intensity, 0.0) * n_modes_);
}

double PowerMonitor::measure(double intensity, std::size_t tap, Rng& rng) const {
  const double reading = coupling(tap) * intensity + gaussian(rng, noise_sd(intensity));
  return std::max(reading, 0.0);
}

double PowerMonitor::detect(double intensity, Rng& rng) const {
  return std::max(intensity + gaussian(rng, noise_sd(intensity)), 0.0);
}

StaticIoError::StaticIoError(std::size_t n, const HardwareErrorConfig& cfg, std::uint64_t stream) {
  Rng rng = make_stream(cfg.seed, 0x57A71CULL + stream);
  gain_.resize(n);
  for (auto& g : gain_) {
    const double da = gaussian(rng, cfg.a_error);
    const double dp = gaussian(rng, cfg.p_error);
    g = (1.0 + da) * std::polar(1.0, dp);
  }
}

ModeVector StaticIoError::apply(const ModeVector& x) const {
  if (gain_.empty()) return x;
  if (static_cast<std::size_t>(x.size()) > gain_.size()) throw std::invalid_argument("StaticIoError: vector too long");
  ModeVector out = x;
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] *= gain_[static_cast<std::size_t>(i)];
  return out;
}

// ---------------------------------------------------------------------------
// Calibration model

namespace {

double cubic(const std::array<double, 4>& c, double x) { return ((c[0] * x + c[1]) * x + c[2]) * x + c[3]; }
double cubic_slope(const std::array<double, 4>& c, double x) { return (3.0 * c[0] * x + 2.0 * c[1]) * x + c[2]; }

// Sign of θ'(v) if it is nonzero throughout [lo, hi], else 0.
int monotone_sign(const std::array<double, 4>& p, double lo, double hi) {
  std::vector<double> probes{lo, hi};
  if (p[0] != 0.0) {
    const double vertex = -p[1] / (3.0 * p[0]);
    if (vertex > lo && vertex < hi) probes.push_back(vertex);
  }
  int sign = 0;
  for (double v : probes) {
    const double d = cubic_slope(p, v);
    const int s = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
    if (s == 0) return 0;
    if (sign == 0) sign = s;
    if (s != sign) return 0;
  }
  return sign;
}

std::array<double, 4> fit_q(const std::array<double, 4>& p, double lo, double hi) {
  constexpr int kSamples = 200;
  Eigen::MatrixXd a(kSamples, 4);
  Eigen::VectorXd b(kSamples);
  for (int i = 0; i < kSamples; ++i) {
    const double v = lo + (hi - lo) * i / (kSamples - 1);
    const double th = cubic(p, v);
    a.row(i) << th * th * th, th * th, th, 1.0;
    b[i] = v * v;
  }
  Eigen::Vector4d q = a.colPivHouseholderQr().solve(b);
  return {q[0], q[1], q[2], q[3]};
}

}  // namespace

double CalibrationModel::phase_span() const { return std::abs(cubic(p, v_max) - cubic(p, v_min)); }

void CalibrationModel::validate() const {
  if (!(v_max > v_min)) throw NumericalError("calibration: empty voltage range");
  if (monotone_sign(p, v_min, v_max) == 0) throw NumericalError("calibration: θ(v) is not strictly monotone");
  if (phase_span() < kTwoPi)
    throw NumericalError("calibration: phase span " + std::to_string(phase_span()) + " rad is below 2π");
}

CalibrationModel CalibrationModel::create(std::array<double, 4> p, double t_amp, double t_offset, double v_min,
                                          double v_max) {
  CalibrationModel m;
  m.p = p;
  m.t_amp = t_amp;
  m.t_offset = t_offset;
  m.v_min = v_min;
  m.v_max = v_max;
  m.validate();
  m.q = fit_q(p, v_min, v_max);
  return m;
}

CalibrationModel CalibrationModel::default_heater() {
  return create({0.01, 0.2, 0.3, 0.4}, 0.5, 0.5, 0.0, 5.0);
}

void to_json(nlohmann::json& j, const CalibrationModel& m) {
  j = nlohmann::json{{"p", m.p},         {"q", m.q},         {"t_amp", m.t_amp},     {"t_offset", m.t_offset},
                     {"v_min", m.v_min}, {"v_max", m.v_max}, {"fit_rms", m.fit_rms}};
}

void from_json(const nlohmann::json& j, CalibrationModel& m) {
  m.p = j.at("p").get<std::array<double, 4>>();
  m.q = j.value("q", std::array<double, 4>{0, 0, 0, 0});
  m.t_amp = j.at("t_amp").get<double>();
  m.t_offset = j.at("t_offset").get<double>();
  m.v_min = j.at("v_min").get<double>();
  m.v_max = j.at("v_max").get<double>();
  m.fit_rms = j.value("fit_rms", 0.0);
}

void save_calibration(const std::filesystem::path& path, const CalibrationModel& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << nlohmann::json(m).dump(2) << '\n';
}

CalibrationModel load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    auto m = nlohmann::json::parse(in).get<CalibrationModel>();
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed calibration document " + path.string() + ": " + e.what());
  }
}

double phase_from_voltage(const CalibrationModel& model, double v) {
  if (!(v >= model.v_min && v <= model.v_max))
    throw std::out_of_range("phase_from_voltage: " + std::to_string(v) + " V outside [" +
                            std::to_string(model.v_min) + ", " + std::to_string(model.v_max) + "]");
  return cubic(model.p, v);
}

double voltage_from_phase(const CalibrationModel& model, double theta) {
  const int sign = monotone_sign(model.p, model.v_min, model.v_max);
  if (sign == 0) throw NumericalError("voltage_from_phase: model is not monotone");
  const double th_lo = cubic(model.p, model.v_min), th_hi = cubic(model.p, model.v_max);
  const double lo = std::min(th_lo, th_hi), hi = std::max(th_lo, th_hi);
  // lowest voltage ⇒ smallest phase on an increasing curve, largest on a decreasing one
  double target;
  if (sign > 0) {
    target = theta + kTwoPi * std::ceil((lo - theta) / kTwoPi);
    if (target > hi) throw NumericalError("voltage_from_phase: phase not reachable in voltage range");
  } else {
    target = theta + kTwoPi * std::floor((hi - theta) / kTwoPi);
    if (target < lo) throw NumericalError("voltage_from_phase: phase not reachable in voltage range");
  }

  // bracketed Newton seeded from the q-cubic
  double a = model.v_min, b = model.v_max;
  double v = std::sqrt(std::max(cubic(model.q, target), 0.0));
  if (!(v > a && v < b)) v = 0.5 * (a + b);
  for (int it = 0; it < 200; ++it) {
    const double f = cubic(model.p, v) - target;
    if (std::abs(f) < 1e-13) break;
    if ((f > 0.0) == (sign > 0)) b = v; else a = v;
    const double d = cubic_slope(model.p, v);
    double next = v - f / d;
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    v = next;
  }
  return v;
}

std::vector<CalibrationSample> simulate_calibration_sweep(const CalibrationModel& truth, std::size_t n_points,
                                                          const HardwareErrorConfig& cfg, Rng& rng,
                                                          std::size_t n_modes) {
  if (n_points < 8) throw std::invalid_argument("simulate_calibration_sweep: need at least 8 points");
  const PowerMonitor detector(n_modes, 0, cfg);
  std::vector<CalibrationSample> out(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double v = truth.v_min + (truth.v_max - truth.v_min) * static_cast<double>(i) /
                                       static_cast<double>(n_points - 1);
    const double t = truth.t_amp * std::sin(cubic(truth.p, v)) + truth.t_offset;
    out[i] = {v, detector.detect(t, rng)};
  }
  return out;
}

namespace {

// Residuals of t = a sin(c0 + c1 u + c2 u² + c3 u³) + b on normalized voltage u ∈ [0, 1].
// Parameters: (a, b, c0, c1, c2, c3).
struct SineCubicResidual {
  const std::vector<double>& u;
  const std::vector<double>& t;

  int inputs() const { return 6; }
  int values() const { return static_cast<int>(u.size()); }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double s = u[i];
      const double th = x[2] + s * (x[3] + s * (x[4] + s * x[5]));
      f[static_cast<Eigen::Index>(i)] = x[0] * std::sin(th) + x[1] - t[i];
    }
    return 0;
  }

  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const {
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double s = u[i];
      const double th = x[2] + s * (x[3] + s * (x[4] + s * x[5]));
      const double sn = std::sin(th), cs = x[0] * std::cos(th);
      const auto r = static_cast<Eigen::Index>(i);
      j(r, 0) = sn;
      j(r, 1) = 1.0;
      j(r, 2) = cs;
      j(r, 3) = cs * s;
      j(r, 4) = cs * s * s;
      j(r, 5) = cs * s * s * s;
    }
    return 0;
  }
};

}  // namespace

CalibrationModel fit_calibration(std::span<const CalibrationSample> samples) {
  if (samples.size() < 8) throw NumericalError("fit_calibration: need at least 8 samples");
  double v_lo = samples.front().v, v_hi = samples.front().v;
  double t_lo = samples.front().t, t_hi = samples.front().t;
  for (const auto& s : samples) {
    v_lo = std::min(v_lo, s.v);
    v_hi = std::max(v_hi, s.v);
    t_lo = std::min(t_lo, s.t);
    t_hi = std::max(t_hi, s.t);
  }
  if (!(v_hi > v_lo)) throw NumericalError("fit_calibration: samples cover no voltage range");
  const double width = v_hi - v_lo;

  std::vector<double> u, t;
  u.reserve(samples.size());
  t.reserve(samples.size());
  for (const auto& s : samples) {
    u.push_back((s.v - v_lo) / width);
    t.push_back(s.t);
  }
  SineCubicResidual fn{u, t};

  // Multistart over total span, curvature, and phase offset; the sinusoid
  // leaves many local minima, the true branch is the global one. Every start
  // gets a short LM run, the most promising few are refined to convergence.
  const double a0 = 0.5 * (t_hi - t_lo), b0 = 0.5 * (t_hi + t_lo);
  Eigen::VectorXd f(static_cast<Eigen::Index>(u.size()));
  auto run = [&](Eigen::VectorXd& x, int maxfev) {
    Eigen::LevenbergMarquardt<SineCubicResidual> lm(fn);
    lm.parameters.maxfev = maxfev;
    lm.minimize(x);
    fn(x, f);
    const double cost = f.squaredNorm();
    return std::isfinite(cost) ? cost : std::numeric_limits<double>::infinity();
  };
  std::vector<std::pair<double, Eigen::VectorXd>> starts;
  for (double span = 1.0 * kPi; span <= 4.51 * kPi; span += 0.25 * kPi) {
    for (double bend : {0.0, 0.5, 1.0}) {
      for (double off = 0.0; off < kTwoPi - 1e-9; off += 0.25 * kPi) {
        Eigen::VectorXd x(6);
        x << a0, b0, off, span * (1.0 - bend), span * bend, 0.0;
        const double cost = run(x, 12);
        starts.emplace_back(cost, std::move(x));
      }
    }
  }
  constexpr std::size_t kRefined = 6;
  std::partial_sort(starts.begin(), starts.begin() + kRefined, starts.end(),
                    [](const auto& l, const auto& r) { return l.first < r.first; });
  Eigen::VectorXd best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kRefined; ++i) {
    Eigen::VectorXd x = starts[i].second;
    const double cost = run(x, 400);
    if (cost < best_cost) {
      best_cost = cost;
      best = x;
    }
  }
  if (!best.allFinite()) throw NumericalError("fit_calibration: fit did not converge");

  // canonical branch: a > 0, θ increasing
  if (best[0] < 0.0) {
    best[0] = -best[0];
    best[2] += kPi;
  }
  const double end_slope = best[3] + 2.0 * best[4] + 3.0 * best[5];
  if (best[3] + end_slope < 0.0) {
    best[2] = kPi - best[2];
    best[3] = -best[3];
    best[4] = -best[4];
    best[5] = -best[5];
  }
  best[2] = wrap_angle(best[2]);

  // θ(u) with u = (v − v_lo)/w  →  θ(v) coefficients
  const double c0 = best[2], c1 = best[3], c2 = best[4], c3 = best[5];
  const double w1 = 1.0 / width, w2 = w1 * w1, w3 = w2 * w1, l = v_lo;
  std::array<double, 4> p{};
  p[0] = c3 * w3;
  p[1] = c2 * w2 - 3.0 * c3 * w3 * l;
  p[2] = c1 * w1 - 2.0 * c2 * w2 * l + 3.0 * c3 * w3 * l * l;
  p[3] = c0 - c1 * w1 * l + c2 * w2 * l * l - c3 * w3 * l * l * l;

  CalibrationModel m;
  m.p = p;
  m.t_amp = best[0];
  m.t_offset = best[1];
  m.v_min = v_lo;
  m.v_max = v_hi;
  m.fit_rms = std::sqrt(best_cost / static_cast<double>(u.size()));
  if (m.phase_span() < kTwoPi)
    throw NumericalError("fit_calibration: insufficient phase span (" + std::to_string(m.phase_span()) +
                         " rad recovered; need 2π)");
  m.validate();
  m.q = fit_q(p, v_lo, v_hi);
  return m;
}

double calibration_phase_rms(const CalibrationModel& fitted, const CalibrationModel& truth, std::size_t grid) {
  std::vector<double> d(grid);
  double mean = 0.0;
  for (std::size_t i = 0; i < grid; ++i) {
    const double v = truth.v_min + (truth.v_max - truth.v_min) * static_cast<double>(i) / static_cast<double>(grid - 1);
    d[i] = cubic(fitted.p, v) - cubic(truth.p, v);
    mean += d[i];
  }
  mean /= static_cast<double>(grid);
  const double shift = kTwoPi * std::round(mean / kTwoPi);
  double acc = 0.0;
  for (double x : d) acc += (x - shift) * (x - shift);
  return std::sqrt(acc / static_cast<double>(grid));
}

// ---------------------------------------------------------------------------
// Full-mesh split-ratio sweeps

namespace {

// Fields on every waveguide just before nodes()[target], for raw (unclamped)
// per-node settings.
ModeVector fields_before(const MeshTopology& topology, const std::vector<double>& theta,
                         const std::vector<double>& phi, ModeVector w, std::size_t target) {
  const auto nodes = topology.nodes();
  for (std::size_t k = 0; k < target; ++k) {
    const auto& n = nodes[k];
    const Eigen::Matrix2cd t = mzi_transfer(theta[n.theta_index], phi[n.phi_index], topology.variant());
    w.segment(static_cast<Eigen::Index>(n.top), 2) = (t * w.segment(static_cast<Eigen::Index>(n.top), 2)).eval();
  }
  return w;
}

double cross_fraction(const Eigen::Vector2cd& in, double theta, double phi, MziVariant variant) {
  const Eigen::Vector2cd out = mzi_transfer(theta, phi, variant) * in;
  const double total = std::norm(out[0]) + std::norm(out[1]);
  return total > 0.0 ? std::norm(out[1]) / total : 0.0;
}

}  // namespace

std::vector<double> mesh_split_ratio_sweep(const MeshTopology& topology, std::size_t target, ShifterKind kind,
                                           std::span<const double> applied) {
  const auto nodes = topology.nodes();
  if (target >= nodes.size()) throw std::invalid_argument("mesh_split_ratio_sweep: bad target");
  const auto& node = nodes[target];
  const auto n = static_cast<Eigen::Index>(topology.n_modes());
  std::vector<double> out;
  out.reserve(applied.size());

  if (kind == ShifterKind::theta) {
    const auto route = route_to_mzi(topology, target, 0);
    ModeVector in = ModeVector::Zero(n);
    in[0] = 1.0;
    const ModeVector w = fields_before(topology, route.theta(), route.phi(), in, target);
    const Eigen::Vector2cd pair = w.segment(static_cast<Eigen::Index>(node.top), 2);
    for (double a : applied) out.push_back(cross_fraction(pair, a, 0.0, topology.variant()));
    return out;
  }

  // φ: find the MZI on the same pair one diagonal earlier (two columns back)
  std::optional<std::size_t> upstream;
  for (std::size_t k = 0; k < target; ++k)
    if (nodes[k].top == node.top && nodes[k].column + 2 == node.column) upstream = k;

  ModeVector w;
  if (upstream) {
    auto route = route_to_mzi(topology, *upstream, 0);
    auto theta = route.theta();
    theta[nodes[*upstream].theta_index] = 0.5 * kPi;
    ModeVector in = ModeVector::Zero(n);
    in[0] = 1.0;
    w = fields_before(topology, theta, route.phi(), in, target);
  } else {
    const auto bar = MeshPhases::bar(topology);
    ModeVector in = ModeVector::Zero(n);
    in[static_cast<Eigen::Index>(node.top)] = 1.0 / std::sqrt(2.0);
    in[static_cast<Eigen::Index>(node.top) + 1] = 1.0 / std::sqrt(2.0);
    w = fields_before(topology, bar.theta(), bar.phi(), in, target);
  }
  const Eigen::Vector2cd pair = w.segment(static_cast<Eigen::Index>(node.top), 2);
  for (double a : applied) out.push_back(cross_fraction(pair, 0.5 * kPi, a, topology.variant()));
  return out;
}

}  // namespace pnn
