#include "pnn/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <utility>

namespace pnn {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

inline cdouble phasor(double a) { return std::polar(1.0, a); }

double clamp_theta(double t) {
  if (!std::isfinite(t)) throw std::invalid_argument("MeshPhases: non-finite θ");
  return std::clamp(t, 0.0, kPi);
}

std::vector<double> wrap_all(std::vector<double> v, const char* what) {
  for (double& a : v) {
    if (!std::isfinite(a)) throw std::invalid_argument(std::string("MeshPhases: non-finite ") + what);
    a = wrap_angle(a);
  }
  return v;
}

// One MZI, left to right. Records the fields entering the φ and θ shifters.
inline void mzi_forward(cdouble& a, cdouble& b, double theta, double phi, MziVariant variant,
                        cdouble* phi_tap, cdouble* theta_tap) {
  if (phi_tap) *phi_tap = a;
  a *= phasor(phi);
  cdouble u = (a + kI * b) * kInvSqrt2;
  cdouble v = (kI * a + b) * kInvSqrt2;
  if (theta_tap) *theta_tap = v;
  if (variant == MziVariant::global_phase) {
    v *= phasor(-theta);
  } else {
    u *= phasor(0.5 * theta);
    v *= phasor(-0.5 * theta);
  }
  a = (u + kI * v) * kInvSqrt2;
  b = (kI * u + v) * kInvSqrt2;
}

// Same MZI traversed right to left (transfer matrix Tᵀ).
inline void mzi_backward(cdouble& a, cdouble& b, double theta, double phi, MziVariant variant,
                         cdouble* phi_tap, cdouble* theta_tap) {
  cdouble u = (a + kI * b) * kInvSqrt2;
  cdouble v = (kI * a + b) * kInvSqrt2;
  if (variant == MziVariant::global_phase) {
    v *= phasor(-theta);
  } else {
    u *= phasor(0.5 * theta);
    v *= phasor(-0.5 * theta);
  }
  if (theta_tap) *theta_tap = v;
  cdouble p = (u + kI * v) * kInvSqrt2;
  cdouble q = (kI * u + v) * kInvSqrt2;
  p *= phasor(phi);
  if (phi_tap) *phi_tap = p;
  a = p;
  b = q;
}

}  // namespace

// ---------------------------------------------------------------------------
// MeshTopology

MeshTopology::MeshTopology(std::size_t n_modes, std::vector<MziNode> nodes, MziVariant variant)
    : n_modes_(n_modes), nodes_(std::move(nodes)), variant_(variant) {
  if (n_modes_ < 1) throw std::invalid_argument("MeshTopology: n_modes must be >= 1");
  std::stable_sort(nodes_.begin(), nodes_.end(),
                   [](const MziNode& l, const MziNode& r) { return l.column < r.column; });

  std::set<std::size_t> thetas, phis;
  std::set<std::pair<std::size_t, std::size_t>> used;  // (column, waveguide)
  for (const auto& n : nodes_) {
    if (n.top + 1 >= n_modes_) throw std::invalid_argument("MeshTopology: node outside mesh width");
    if (!thetas.insert(n.theta_index).second || !phis.insert(n.phi_index).second)
      throw std::invalid_argument("MeshTopology: duplicate phase index");
    if (!used.insert({n.column, n.top}).second || !used.insert({n.column, n.top + 1}).second)
      throw std::invalid_argument("MeshTopology: overlapping nodes within a column");
    column_count_ = std::max(column_count_, n.column + 1);
  }
  if (!thetas.empty() && (*thetas.rbegin() != nodes_.size() - 1 || *phis.rbegin() != nodes_.size() - 1))
    throw std::invalid_argument("MeshTopology: phase indices must be dense");

  by_theta_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) by_theta_[nodes_[i].theta_index] = i;
}

MeshTopology MeshTopology::triangular(std::size_t n_modes, MziVariant variant) {
  if (n_modes < 1) throw std::invalid_argument("triangular mesh needs at least one mode");
  std::vector<MziNode> nodes;
  std::size_t index = 0;
  for (std::size_t d = 0; d + 1 < n_modes; ++d) {
    for (std::size_t m = 0; m + 1 + d < n_modes; ++m) {
      nodes.push_back({2 * d + m, m, index, index});
      ++index;
    }
  }
  MeshTopology t(n_modes, std::move(nodes), variant);
  t.triangular_ = true;
  return t;
}

// ---------------------------------------------------------------------------
// MeshPhases

MeshPhases::MeshPhases(std::vector<double> theta, std::vector<double> phi, std::vector<double> gamma)
    : theta_(std::move(theta)), phi_(wrap_all(std::move(phi), "φ")), gamma_(wrap_all(std::move(gamma), "γ")) {
  if (theta_.size() != phi_.size()) throw std::invalid_argument("MeshPhases: θ/φ length mismatch");
  for (double& t : theta_) t = clamp_theta(t);
}

MeshPhases MeshPhases::bar(const MeshTopology& topology) {
  return MeshPhases(std::vector<double>(topology.node_count(), kPi),
                    std::vector<double>(topology.node_count(), 0.0),
                    std::vector<double>(topology.gamma_count(), 0.0));
}

MeshPhases MeshPhases::random(const MeshTopology& topology, Rng& rng) {
  std::uniform_real_distribution<double> half(0.0, kPi), full(0.0, kTwoPi);
  std::vector<double> theta(topology.node_count()), phi(topology.node_count()), gamma(topology.gamma_count());
  for (auto& t : theta) t = half(rng);
  for (auto& p : phi) p = full(rng);
  for (auto& g : gamma) g = full(rng);
  return MeshPhases(std::move(theta), std::move(phi), std::move(gamma));
}

std::vector<double> MeshPhases::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  out.insert(out.end(), theta_.begin(), theta_.end());
  out.insert(out.end(), phi_.begin(), phi_.end());
  out.insert(out.end(), gamma_.begin(), gamma_.end());
  return out;
}

MeshPhases MeshPhases::with_flat(std::span<const double> values) const {
  if (values.size() != parameter_count()) throw std::invalid_argument("MeshPhases: flat length mismatch");
  auto nt = theta_.size(), np = phi_.size();
  return MeshPhases(std::vector<double>(values.begin(), values.begin() + nt),
                    std::vector<double>(values.begin() + nt, values.begin() + nt + np),
                    std::vector<double>(values.begin() + nt + np, values.end()));
}

MeshPhases MeshPhases::shifted(std::span<const double> delta) const {
  auto flat = flatten();
  if (delta.size() != flat.size()) throw std::invalid_argument("MeshPhases: delta length mismatch");
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += delta[i];
  return with_flat(flat);
}

void MeshPhases::check_compatible(const MeshTopology& topology) const {
  if (theta_.size() != topology.node_count() || gamma_.size() != topology.gamma_count())
    throw std::invalid_argument("MeshPhases: length does not match topology (" +
                                std::to_string(theta_.size()) + " MZIs, " +
                                std::to_string(gamma_.size()) + " γ vs " +
                                std::to_string(topology.node_count()) + ", " +
                                std::to_string(topology.gamma_count()) + ")");
}

// ---------------------------------------------------------------------------

Eigen::Matrix2cd mzi_transfer(double theta, double phi, MziVariant variant) {
  const double s = std::sin(0.5 * theta), c = std::cos(0.5 * theta);
  const cdouble ep = phasor(phi);
  Eigen::Matrix2cd t;
  t << kI * ep * s, kI * c, kI * ep * c, -kI * s;
  if (variant == MziVariant::global_phase) t *= phasor(-0.5 * theta);
  return t;
}

CMatrix build_unitary(const MeshTopology& topology, const MeshPhases& phases) {
  phases.check_compatible(topology);
  const auto n = static_cast<Eigen::Index>(topology.n_modes());
  CMatrix u = CMatrix::Identity(n, n);
  for (const auto& node : topology.nodes()) {
    Eigen::Matrix2cd t = mzi_transfer(phases.theta()[node.theta_index], phases.phi()[node.phi_index],
                                      topology.variant());
    const auto r = static_cast<Eigen::Index>(node.top);
    u.middleRows(r, 2) = (t * u.middleRows(r, 2)).eval();
  }
  for (Eigen::Index k = 0; k < n; ++k) u.row(k) *= phasor(phases.gamma()[static_cast<std::size_t>(k)]);
  return u;
}

Propagation propagate(const MeshTopology& topology, const MeshPhases& phases, const ModeVector& input,
                      Direction direction) {
  phases.check_compatible(topology);
  if (static_cast<std::size_t>(input.size()) != topology.n_modes())
    throw std::invalid_argument("propagate: input length " + std::to_string(input.size()) +
                                " != mesh width " + std::to_string(topology.n_modes()));
  Propagation out;
  out.output = input;
  out.taps.theta_fields.assign(topology.node_count(), cdouble{});
  out.taps.phi_fields.assign(topology.node_count(), cdouble{});
  auto& w = out.output;
  const auto& th = phases.theta();
  const auto& ph = phases.phi();
  const auto& ga = phases.gamma();
  auto nodes = topology.nodes();

  if (direction == Direction::forward) {
    for (const auto& node : nodes) {
      mzi_forward(w[node.top], w[node.top + 1], th[node.theta_index], ph[node.phi_index],
                  topology.variant(), &out.taps.phi_fields[node.phi_index],
                  &out.taps.theta_fields[node.theta_index]);
    }
    for (Eigen::Index k = 0; k < w.size(); ++k) w[k] *= phasor(ga[static_cast<std::size_t>(k)]);
  } else {
    for (Eigen::Index k = 0; k < w.size(); ++k) w[k] *= phasor(ga[static_cast<std::size_t>(k)]);
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
      mzi_backward(w[it->top], w[it->top + 1], th[it->theta_index], ph[it->phi_index],
                   topology.variant(), &out.taps.phi_fields[it->phi_index],
                   &out.taps.theta_fields[it->theta_index]);
    }
  }
  return out;
}

double unitarity_deviation(const CMatrix& u) {
  CMatrix g = u.adjoint() * u;
  g -= CMatrix::Identity(u.rows(), u.cols());
  return g.cwiseAbs().maxCoeff();
}

MeshPhases phases_from_unitary(const CMatrix& u, MziVariant variant, double unitarity_tol) {
  if (u.rows() < 1 || u.rows() != u.cols()) throw std::invalid_argument("phases_from_unitary: need a square matrix");
  const double dev = unitarity_deviation(u);
  if (!(dev <= unitarity_tol))
    throw NumericalError("phases_from_unitary: input is not unitary (max |U†U − I| = " +
                         std::to_string(dev) + ")");

  const auto n = static_cast<std::size_t>(u.rows());
  const auto topology = MeshTopology::triangular(n, variant);
  std::vector<double> theta(topology.node_count(), kPi), phi(topology.node_count(), 0.0), gamma(n, 0.0);

  CMatrix v = u;
  std::size_t diag_start = 0;
  for (std::size_t d = 0; d + 1 < n; ++d) {
    const std::size_t active = n - d;
    const auto row = static_cast<Eigen::Index>(active - 1);
    // The cascade of diagonal d must send conj(row) entirely into the bottom
    // active waveguide; each MZI nullifies its upper output.
    ModeVector w = v.row(row).head(static_cast<Eigen::Index>(active)).conjugate().transpose();
    for (std::size_t m = 0; m + 1 < active; ++m) {
      const cdouble x1 = w[static_cast<Eigen::Index>(m)];
      const cdouble x2 = w[static_cast<Eigen::Index>(m + 1)];
      double t, p;
      if (std::abs(x1) == 0.0) {
        t = kPi;  // arg of an infinite ratio is undefined: force bar
        p = 0.0;
      } else if (std::abs(x2) == 0.0) {
        t = 0.0;
        p = 0.0;
      } else {
        t = 2.0 * std::atan2(std::abs(x2), std::abs(x1));
        p = wrap_angle(std::arg(-x2 / x1));
      }
      const std::size_t idx = diag_start + m;
      theta[idx] = t;
      phi[idx] = p;
      const Eigen::Matrix2cd mzi = mzi_transfer(t, p, variant);
      Eigen::Vector2cd pair(x1, x2);
      pair = mzi * pair;
      w[static_cast<Eigen::Index>(m)] = pair[0];
      w[static_cast<Eigen::Index>(m + 1)] = pair[1];
      const auto c = static_cast<Eigen::Index>(m);
      v.middleCols(c, 2) = (v.middleCols(c, 2) * mzi.adjoint()).eval();
    }
    diag_start += active - 1;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const cdouble dk = v(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    if (std::abs(std::abs(dk) - 1.0) > 1e3 * std::max(unitarity_tol, 1e-12))
      throw NumericalError("phases_from_unitary: residual is not diagonal");
    gamma[k] = std::arg(dk);
  }
  return MeshPhases(std::move(theta), std::move(phi), std::move(gamma));
}

MeshPhases route_to_mzi(const MeshTopology& topology, std::size_t target, std::size_t input_port) {
  const auto nodes = topology.nodes();
  if (target >= nodes.size()) throw std::invalid_argument("route_to_mzi: target outside topology");
  if (input_port >= topology.n_modes()) throw std::invalid_argument("route_to_mzi: bad input port");
  const std::size_t n = topology.n_modes();

  // reach[k][w]: (previous waveguide, crossed?) for the state "light on w
  // before node k", or nullopt when unreachable.
  using Step = std::optional<std::pair<std::size_t, bool>>;
  std::vector<std::vector<Step>> reach(target + 1, std::vector<Step>(n));
  reach[0][input_port] = std::make_pair(input_port, false);
  for (std::size_t k = 0; k < target; ++k) {
    const auto& node = nodes[k];
    for (std::size_t w = 0; w < n; ++w) {
      if (!reach[k][w]) continue;
      if (w == node.top || w == node.top + 1) {
        const std::size_t other = (w == node.top) ? node.top + 1 : node.top;
        if (!reach[k + 1][w]) reach[k + 1][w] = std::make_pair(w, false);
        if (!reach[k + 1][other]) reach[k + 1][other] = std::make_pair(w, true);
      } else if (!reach[k + 1][w]) {
        reach[k + 1][w] = std::make_pair(w, false);
      }
    }
  }
  const std::size_t goal = nodes[target].top;
  if (!reach[target][goal])
    throw std::invalid_argument("route_to_mzi: MZI " + std::to_string(target) +
                                " unreachable from port " + std::to_string(input_port));

  auto phases = MeshPhases::bar(topology);
  std::vector<double> theta = phases.theta();
  std::size_t w = goal;
  for (std::size_t k = target; k-- > 0;) {
    const auto [prev, crossed] = *reach[k + 1][w];
    if (crossed) theta[nodes[k].theta_index] = 0.0;
    w = prev;
  }
  return MeshPhases(std::move(theta), phases.phi(), phases.gamma());
}

}  // namespace pnn
