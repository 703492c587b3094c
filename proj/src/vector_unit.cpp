#include "pnn/vector_unit.hpp"

#include <cmath>
#include <string>

#include "pnn/mesh.hpp"

namespace pnn {

namespace {

// Top output of the analyzer MZI acting on (top, bottom).
cdouble top_output(double theta, double phi, cdouble top, cdouble bottom) {
  const Eigen::Matrix2cd t = mzi_transfer(theta, phi, MziVariant::global_phase);
  return t(0, 0) * top + t(0, 1) * bottom;
}

void nullify_step(cdouble a, cdouble b, double& theta, double& phi) {
  const double ra = std::abs(a), rb = std::abs(b);
  if (ra == 0.0 && rb == 0.0) {
    theta = kPi;
    phi = 0.0;
    return;
  }
  theta = 2.0 * std::atan2(ra, rb);
  phi = (ra > 0.0 && rb > 0.0) ? wrap_angle(-std::arg(a / b)) : 0.0;
}

}  // namespace

VectorUnitPhases vec2phase(const ModeVector& x) {
  const auto n = x.size();
  if (n < 1) throw std::invalid_argument("vec2phase: empty vector");
  const double norm = x.norm();
  if (norm == 0.0) throw std::invalid_argument("vec2phase: zero vector");
  if (std::abs(norm - 1.0) > 1e-9)
    throw std::invalid_argument("vec2phase: vector norm " + std::to_string(norm) + " is not 1");

  VectorUnitPhases p;
  p.theta.assign(static_cast<std::size_t>(n - 1), kPi);
  p.phi.assign(static_cast<std::size_t>(n - 1), 0.0);
  cdouble acc = x[n - 1];
  for (Eigen::Index m = n - 2; m >= 0; --m) {
    const auto i = static_cast<std::size_t>(m);
    nullify_step(x[m], acc, p.theta[i], p.phi[i]);
    acc = top_output(p.theta[i], p.phi[i], x[m], acc);
  }
  return p;
}

ModeVector phase2vec(const VectorUnitPhases& p) {
  if (p.phi.size() != p.theta.size()) throw std::invalid_argument("phase2vec: θ/φ length mismatch");
  const auto n = static_cast<Eigen::Index>(p.n_modes());
  ModeVector x = ModeVector::Zero(n);
  x[0] = 1.0;
  for (Eigen::Index m = 0; m + 1 < n; ++m) {
    const auto i = static_cast<std::size_t>(m);
    const Eigen::Matrix2cd t = mzi_transfer(p.theta[i], p.phi[i], MziVariant::global_phase);
    x.segment(m, 2) = (t.adjoint() * x.segment(m, 2)).eval();
  }
  if (std::abs(x[n - 1]) > 0.0) x *= std::polar(1.0, -std::arg(x[n - 1]));
  return x;
}

ModeVector embed_reference(const ModeVector& x, std::size_t n) {
  if (n < 2) throw std::invalid_argument("embed_reference: need N >= 2");
  if (static_cast<std::size_t>(x.size()) != n) throw std::invalid_argument("embed_reference: length != N");
  const double nn = static_cast<double>(n);
  ModeVector out(x.size() + 1);
  out.head(x.size()) = x * std::sqrt(1.0 - 1.0 / nn);
  out[x.size()] = std::sqrt(1.0 / nn);
  return out;
}

ModeVector strip_reference(const ModeVector& y, std::size_t n, double min_reference) {
  if (n < 2) throw std::invalid_argument("strip_reference: need N >= 2");
  if (static_cast<std::size_t>(y.size()) != n + 1) throw std::invalid_argument("strip_reference: length != N + 1");
  const cdouble ref = y[static_cast<Eigen::Index>(n)];
  if (!(std::abs(ref) >= min_reference))
    throw NumericalError("strip_reference: reference amplitude " + std::to_string(std::abs(ref)) +
                         " too small to define a phase");
  const double nn = static_cast<double>(n);
  return y.head(static_cast<Eigen::Index>(n)) * (std::polar(1.0, -std::arg(ref)) / std::sqrt(1.0 - 1.0 / nn));
}

double four_point_phase(double p0, double p_half, double p_pi, double p_3half) {
  if (p0 < 0.0 || p_half < 0.0 || p_pi < 0.0 || p_3half < 0.0)
    throw std::invalid_argument("four_point_phase: negative power");
  const double s = p_3half - p_half, c = p0 - p_pi;
  if (s == 0.0 && c == 0.0) throw NumericalError("four_point_phase: readings carry no interference");
  return std::atan2(s, c);
}

AnalyzerReading self_configure_analyzer(const ModeVector& field, const ReadoutConfig& cfg, Rng& rng,
                                        double min_power) {
  const auto n = field.size();
  if (n < 1) throw std::invalid_argument("self_configure_analyzer: empty field");
  AnalyzerReading r;

  if (cfg.ideal()) {
    const double norm = field.norm();
    if (!(norm * norm >= min_power)) throw NumericalError("self_configure_analyzer: no light detected");
    r.phases = vec2phase(field / norm);
    r.measured = phase2vec(r.phases) * norm;
    return r;
  }

  const PowerMonitor detector(static_cast<std::size_t>(n), 0, cfg.error);
  std::vector<double> power(static_cast<std::size_t>(n));
  double total = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    power[static_cast<std::size_t>(k)] = detector.detect(std::norm(field[k]), rng);
    total += power[static_cast<std::size_t>(k)];
  }
  if (!(total >= min_power)) throw NumericalError("self_configure_analyzer: no light detected");

  if (cfg.mode == ReadoutMode::true_phase) {
    ModeVector est(n);
    for (Eigen::Index k = 0; k < n; ++k) est[k] = std::polar(std::sqrt(power[static_cast<std::size_t>(k)]), std::arg(field[k]));
    r.phases = vec2phase(est / est.norm());
  } else {
    // Configure MZIs bottom-up. Each relative phase is read against the light
    // physically gathered by the MZIs already set, so earlier phase errors
    // propagate as they would on the chip.
    r.phases.theta.assign(static_cast<std::size_t>(n - 1), kPi);
    r.phases.phi.assign(static_cast<std::size_t>(n - 1), 0.0);
    cdouble gathered = field[n - 1];
    double gathered_power = power[static_cast<std::size_t>(n - 1)];
    for (Eigen::Index m = n - 2; m >= 0; --m) {
      const auto i = static_cast<std::size_t>(m);
      const double amp = std::sqrt(power[i]);
      double delta = 0.0;
      double reading[4];
      for (int k = 0; k < 4; ++k)
        reading[k] = detector.detect(std::norm(top_output(0.5 * kPi, 0.5 * kPi * k, field[m], gathered)), rng);
      if (reading[3] != reading[1] || reading[0] != reading[2])
        delta = four_point_phase(reading[0], reading[1], reading[2], reading[3]);
      r.phases.theta[i] = 2.0 * std::atan2(amp, std::sqrt(gathered_power));
      r.phases.phi[i] = (amp > 0.0 && gathered_power > 0.0) ? wrap_angle(-delta) : 0.0;
      gathered = top_output(r.phases.theta[i], r.phases.phi[i], field[m], gathered);
      gathered_power += power[i];
    }
  }
  r.measured = phase2vec(r.phases) * std::sqrt(total);
  return r;
}

}  // namespace pnn
