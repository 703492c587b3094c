#include "pnn/insitu.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace pnn {

std::vector<double> GradientRecord::flatten() const {
  std::vector<double> out = optical();
  out.insert(out.end(), gamma.begin(), gamma.end());
  return out;
}

std::vector<double> GradientRecord::optical() const {
  std::vector<double> out(theta);
  out.insert(out.end(), phi.begin(), phi.end());
  return out;
}

// ---------------------------------------------------------------------------
// Device

namespace {

HardwareErrorConfig layer_config(const HardwareErrorConfig& cfg, std::uint64_t stream) {
  HardwareErrorConfig c = cfg;
  c.seed = cfg.seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  return c;
}

}  // namespace

MeshDevice::MeshDevice(MeshTopology topology, ReadoutConfig readout, std::uint64_t stream)
    : topology_(std::move(topology)), readout_(std::move(readout)) {
  // tap-gradient signs assume the single-shifter device
  if (topology_.variant() != MziVariant::global_phase)
    throw std::invalid_argument("MeshDevice: in-situ measurement needs the global_phase MZI variant");
  if (ideal()) return;
  readout_.error.validate();
  const auto cfg = layer_config(readout_.error, stream);
  const std::size_t n = topology_.n_modes();
  monitor_ = PowerMonitor(n, 4 * topology_.node_count(), cfg);
  if (cfg.static_io_error) {
    input_generator_ = StaticIoError(n + 1, cfg, 0);
    output_analyzer_ = StaticIoError(n + 1, cfg, 1);
    output_generator_ = StaticIoError(n + 1, cfg, 2);
    input_analyzer_ = StaticIoError(n + 1, cfg, 3);
  }
}

std::size_t MeshDevice::tap_index(Direction direction, bool theta, std::size_t shifter) const {
  const std::size_t m = topology_.node_count();
  return (direction == Direction::forward ? 0 : 2 * m) + (theta ? 0 : m) + shifter;
}

ModeVector MeshDevice::generate(const ModeVector& embedded, Direction direction, Rng& rng) const {
  if (ideal()) return embedded;
  if (readout_.error.static_io_error)
    return (direction == Direction::forward ? input_generator_ : output_generator_).apply(embedded);
  return perturb_input(embedded, readout_.error, rng);
}

ModeVector MeshDevice::analyze(const ModeVector& embedded, Direction direction, Rng& rng) const {
  if (ideal()) return embedded;
  if (readout_.error.static_io_error)
    return (direction == Direction::forward ? output_analyzer_ : input_analyzer_).apply(embedded);
  return perturb_input(embedded, readout_.error, rng);
}

// ---------------------------------------------------------------------------
// Optical passes

namespace {

struct PhysicalPass {
  ModeVector signal;  // mesh output, physical scale (includes the √(1 − 1/N) split)
  cdouble reference;
  FieldTapRecord ideal_taps;
  TapPowers measured;
};

// Light entering with signal amplitudes v (any norm) next to the reference
// arm. Tap readings are rescaled back to the signal's own power scale.
PhysicalPass run_pass(const MeshDevice& device, const MeshPhases& phases, const ModeVector& v, Direction dir,
                      Rng& rng) {
  const auto& topo = device.topology();
  const std::size_t n = topo.n_modes();
  const std::size_t m = topo.node_count();
  PhysicalPass out;
  out.measured.theta.resize(m);
  out.measured.phi.resize(m);

  auto ideal = propagate(topo, phases, v, dir);
  out.ideal_taps = std::move(ideal.taps);
  if (device.ideal()) {
    for (std::size_t i = 0; i < m; ++i) {
      out.measured.theta[i] = std::norm(out.ideal_taps.theta_fields[i]);
      out.measured.phi[i] = std::norm(out.ideal_taps.phi_fields[i]);
    }
    const double split = std::sqrt(1.0 - 1.0 / static_cast<double>(n));
    out.signal = ideal.output * split;
    out.reference = std::sqrt(1.0 / static_cast<double>(n));
    return out;
  }

  const double nn = static_cast<double>(n);
  const double split2 = 1.0 - 1.0 / nn;
  ModeVector e(static_cast<Eigen::Index>(n + 1));
  e.head(static_cast<Eigen::Index>(n)) = v * std::sqrt(split2);
  e[static_cast<Eigen::Index>(n)] = std::sqrt(1.0 / nn);
  e = device.generate(e, dir, rng);

  auto phys = propagate(topo, phases, e.head(static_cast<Eigen::Index>(n)), dir);
  const auto& mon = device.monitor();
  for (std::size_t i = 0; i < m; ++i) {
    out.measured.theta[i] =
        mon.measure(std::norm(phys.taps.theta_fields[i]), device.tap_index(dir, true, i), rng) / split2;
    out.measured.phi[i] =
        mon.measure(std::norm(phys.taps.phi_fields[i]), device.tap_index(dir, false, i), rng) / split2;
  }
  out.signal = std::move(phys.output);
  out.reference = e[static_cast<Eigen::Index>(n)];
  return out;
}

ModeVector read_out(const MeshDevice& device, const PhysicalPass& pass, Direction dir, Rng& rng) {
  const std::size_t n = device.topology().n_modes();
  if (device.ideal()) return pass.signal / std::sqrt(1.0 - 1.0 / static_cast<double>(n));
  ModeVector full(static_cast<Eigen::Index>(n + 1));
  full.head(static_cast<Eigen::Index>(n)) = pass.signal;
  full[static_cast<Eigen::Index>(n)] = pass.reference;
  full = device.analyze(full, dir, rng);
  const auto reading = self_configure_analyzer(full, device.readout(), rng);
  return strip_reference(reading.measured, n);
}

void check_width(const MeshDevice& device, const ModeVector& v, const char* what) {
  if (static_cast<std::size_t>(v.size()) != device.topology().n_modes())
    throw std::invalid_argument(std::string(what) + ": vector length " + std::to_string(v.size()) +
                                " != mesh width " + std::to_string(device.topology().n_modes()));
}

PassResult optical_pass(const MeshDevice& device, const MeshPhases& phases, const ModeVector& in, Direction dir,
                        Rng& rng) {
  PassResult r;
  r.direction = dir;
  r.input_power = in.squaredNorm();
  const double scale = std::sqrt(r.input_power);
  auto pass = run_pass(device, phases, in / scale, dir, rng);
  r.output = read_out(device, pass, dir, rng) * scale;
  r.taps = std::move(pass.ideal_taps);
  r.measured = std::move(pass.measured);
  return r;
}

}  // namespace

PassResult mesh_forward(const MeshDevice& device, const MeshPhases& phases, const ModeVector& x, Rng& rng) {
  check_width(device, x, "mesh_forward");
  if (!(x.squaredNorm() > 0.0)) throw std::invalid_argument("mesh_forward: zero input");
  return optical_pass(device, phases, x, Direction::forward, rng);
}

PassResult mesh_backward(const MeshDevice& device, const MeshPhases& phases, const ModeVector& y_aj, Rng& rng) {
  check_width(device, y_aj, "mesh_backward");
  if (y_aj.squaredNorm() > 0.0) return optical_pass(device, phases, y_aj, Direction::backward, rng);
  const std::size_t m = device.topology().node_count();
  PassResult r;
  r.direction = Direction::backward;
  r.output = ModeVector::Zero(y_aj.size());
  r.taps.theta_fields.assign(m, cdouble{});
  r.taps.phi_fields.assign(m, cdouble{});
  r.measured.theta.assign(m, 0.0);
  r.measured.phi.assign(m, 0.0);
  return r;
}

TapPowers mesh_sum(const MeshDevice& device, const MeshPhases& phases, const ModeVector& x_hat,
                   const ModeVector& x_aj_hat, double& p_sum, Rng& rng) {
  check_width(device, x_hat, "mesh_sum");
  check_width(device, x_aj_hat, "mesh_sum");
  const ModeVector s = x_hat - kI * x_aj_hat.conjugate();
  p_sum = s.squaredNorm();
  if (p_sum == 0.0) {
    const std::size_t m = device.topology().node_count();
    return {std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  }
  return run_pass(device, phases, s / std::sqrt(p_sum), Direction::forward, rng).measured;
}

// ---------------------------------------------------------------------------
// Gradient extraction

double gradient_from_powers(double p_sum, double p, double p_aj, double P, double P_aj, double P_sum) {
  return 0.5 * (P_sum * p_sum - p - p_aj) * std::sqrt(P * P_aj);
}

GradientRecord digital_gradient(const TapPowers& p_sum, const TapPowers& p, const TapPowers& p_aj, double P,
                                double P_aj, double P_sum) {
  const std::size_t m = p.theta.size();
  if (p.phi.size() != m || p_sum.theta.size() != m || p_sum.phi.size() != m || p_aj.theta.size() != m ||
      p_aj.phi.size() != m)
    throw std::invalid_argument("digital_gradient: tap records differ in length");
  GradientRecord g;
  g.method = GradientMethod::digital;
  g.theta.resize(m);
  g.phi.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    g.theta[i] = kThetaShifterSign * gradient_from_powers(p_sum.theta[i], p.theta[i], p_aj.theta[i], P, P_aj, P_sum);
    g.phi[i] = gradient_from_powers(p_sum.phi[i], p.phi[i], p_aj.phi[i], P, P_aj, P_sum);
  }
  return g;
}

std::pair<GradientRecord, AnalogSweep> analog_gradient(const MeshDevice& device, const MeshPhases& phases,
                                                       const ModeVector& x_hat, const ModeVector& x_aj_hat,
                                                       double P, double P_aj, std::size_t K, Rng& rng) {
  if (K < 3) throw std::invalid_argument("analog_gradient: need at least 3 ζ samples, got " + std::to_string(K));
  check_width(device, x_hat, "analog_gradient");
  check_width(device, x_aj_hat, "analog_gradient");
  const std::size_t m = device.topology().node_count();

  AnalogSweep sweep;
  sweep.zeta.resize(K);
  sweep.theta_traces.assign(m, std::vector<double>(K));
  sweep.phi_traces.assign(m, std::vector<double>(K));
  const ModeVector aj_conj = x_aj_hat.conjugate();
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double zeta = kTwoPi * static_cast<double>(k) / static_cast<double>(K);
    sweep.zeta[k] = zeta;
    const ModeVector in = (x_hat - kI * std::polar(1.0, zeta) * aj_conj) * inv_sqrt2;
    const auto pass = run_pass(device, phases, in, Direction::forward, rng);
    for (std::size_t i = 0; i < m; ++i) {
      sweep.theta_traces[i][k] = pass.measured.theta[i];
      sweep.phi_traces[i][k] = pass.measured.phi[i];
    }
  }

  // On a uniform grid the least-squares cosine coefficient is the DFT bin;
  // the offset (trace mean) drops out.
  std::vector<double> cosines(K);
  for (std::size_t k = 0; k < K; ++k) cosines[k] = std::cos(sweep.zeta[k]);
  const double scale = std::sqrt(P * P_aj) * 2.0 / static_cast<double>(K);
  auto ac_at_zero = [&](const std::vector<double>& trace) {
    const double mean = std::accumulate(trace.begin(), trace.end(), 0.0) / static_cast<double>(K);
    double b = 0.0;
    for (std::size_t k = 0; k < K; ++k) b += (trace[k] - mean) * cosines[k];
    return b * scale;
  };

  GradientRecord g;
  g.method = GradientMethod::analog;
  g.theta.resize(m);
  g.phi.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    g.theta[i] = kThetaShifterSign * ac_at_zero(sweep.theta_traces[i]);
    g.phi[i] = ac_at_zero(sweep.phi_traces[i]);
  }
  return {std::move(g), std::move(sweep)};
}

std::vector<double> gamma_gradient(const ModeVector& y, const ModeVector& y_aj) {
  if (y.size() != y_aj.size()) throw std::invalid_argument("gamma_gradient: length mismatch");
  std::vector<double> g(static_cast<std::size_t>(y.size()));
  for (Eigen::Index k = 0; k < y.size(); ++k) g[static_cast<std::size_t>(k)] = -(y[k] * y_aj[k]).imag();
  return g;
}

// ---------------------------------------------------------------------------
// Multi-layer recursion

namespace {

struct Recursion {
  std::size_t label;
  const PnnModel& model;
  const std::vector<MeshDevice>& devices;
  const InSituOptions& opts;
  Rng& rng;
  InSituResult& result;

  ModeVector descend(std::size_t layer, const ModeVector& x) {
    const auto& device = devices[layer];
    const auto& phases = model.layers[layer];
    const auto fwd = mesh_forward(device, phases, x, rng);

    ModeVector y_aj;
    if (layer + 1 == model.layers.size()) {
      result.output = fwd.output;
      result.loss = model.head.loss(fwd.output, label);
      y_aj = model.head.adjoint(fwd.output, label);
    } else {
      const ModeVector x_next = fwd.output.cwiseAbs().cast<cdouble>();
      y_aj = abs_vjp(fwd.output, descend(layer + 1, x_next));
    }

    const auto bwd = mesh_backward(device, phases, y_aj, rng);
    const std::size_t m = model.topology.node_count();
    GradientRecord g;
    g.method = opts.method;
    const double out_norm = bwd.output.norm();
    if (bwd.input_power == 0.0 || out_norm == 0.0) {
      g.theta.assign(m, 0.0);
      g.phi.assign(m, 0.0);
    } else {
      const ModeVector x_hat = x / std::sqrt(fwd.input_power);
      const ModeVector x_aj_hat = bwd.output / out_norm;
      if (opts.method == GradientMethod::digital) {
        double p_sum = 0.0;
        const auto sum = mesh_sum(device, phases, x_hat, x_aj_hat, p_sum, rng);
        g = digital_gradient(sum, fwd.measured, bwd.measured, fwd.input_power, bwd.input_power, p_sum);
      } else {
        g = analog_gradient(device, phases, x_hat, x_aj_hat, fwd.input_power, bwd.input_power,
                            opts.analog_samples, rng)
                .first;
      }
    }
    g.gamma = gamma_gradient(fwd.output, y_aj);
    result.layers[layer] = std::move(g);
    return bwd.output;
  }
};

}  // namespace

InSituResult insitu_gradient(const ModeVector& x, std::size_t label, const PnnModel& model,
                             const std::vector<MeshDevice>& devices, const InSituOptions& opts, Rng& rng) {
  if (devices.size() != model.layers.size())
    throw std::invalid_argument("insitu_gradient: " + std::to_string(devices.size()) + " devices for " +
                                std::to_string(model.layers.size()) + " layers");
  InSituResult result;
  result.layers.resize(model.layers.size());
  Recursion rec{label, model, devices, opts, rng, result};
  result.x_aj = rec.descend(0, x);
  return result;
}

std::vector<GradientRecord> reference_gradient(const ModeVector& x, std::size_t label, const PnnModel& model) {
  const std::size_t L = model.layers.size();
  const std::size_t m = model.topology.node_count();
  std::vector<ModeVector> inputs(L), outputs(L);
  std::vector<FieldTapRecord> fwd_taps(L);
  ModeVector v = x;
  for (std::size_t l = 0; l < L; ++l) {
    inputs[l] = v;
    auto p = propagate(model.topology, model.layers[l], v, Direction::forward);
    outputs[l] = p.output;
    fwd_taps[l] = std::move(p.taps);
    v = p.output.cwiseAbs().cast<cdouble>();
  }

  std::vector<GradientRecord> grads(L);
  ModeVector y_aj = model.head.adjoint(outputs[L - 1], label);
  for (std::size_t l = L; l-- > 0;) {
    const auto bwd = propagate(model.topology, model.layers[l], y_aj, Direction::backward);
    auto& g = grads[l];
    g.theta.resize(m);
    g.phi.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      g.theta[i] = kThetaShifterSign * -(fwd_taps[l].theta_fields[i] * bwd.taps.theta_fields[i]).imag();
      g.phi[i] = -(fwd_taps[l].phi_fields[i] * bwd.taps.phi_fields[i]).imag();
    }
    g.gamma = gamma_gradient(outputs[l], y_aj);
    if (l > 0) y_aj = abs_vjp(outputs[l - 1], bwd.output);
  }
  return grads;
}

std::vector<MeshDevice> make_devices(const PnnModel& model, const ReadoutConfig& readout) {
  std::vector<MeshDevice> devices;
  devices.reserve(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) devices.emplace_back(model.topology, readout, l);
  return devices;
}

}  // namespace pnn
