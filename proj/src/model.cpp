#include "pnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pnn {

OutputHead OutputHead::softmax(std::vector<std::vector<std::size_t>> groups, double scale) {
  if (groups.size() < 2) throw std::invalid_argument("softmax head needs at least two classes");
  if (!(scale > 0.0)) throw std::invalid_argument("softmax head scale must be > 0");
  for (const auto& g : groups)
    if (g.empty()) throw std::invalid_argument("softmax head: empty mode group");
  OutputHead h;
  h.kind_ = Kind::softmax;
  h.groups_ = std::move(groups);
  h.scale_ = scale;
  return h;
}

OutputHead OutputHead::softmax2() { return softmax({{0, 1}, {2, 3}}); }

OutputHead OutputHead::fidelity() {
  OutputHead h;
  h.kind_ = Kind::fidelity;
  return h;
}

namespace {

std::vector<double> group_powers(const std::vector<std::vector<std::size_t>>& groups, const ModeVector& y) {
  std::vector<double> g(groups.size(), 0.0);
  for (std::size_t c = 0; c < groups.size(); ++c)
    for (std::size_t k : groups[c]) {
      if (k >= static_cast<std::size_t>(y.size())) throw std::invalid_argument("softmax head: mode outside output");
      g[c] += std::norm(y[static_cast<Eigen::Index>(k)]);
    }
  return g;
}

void check_label(std::size_t label, std::size_t count) {
  if (label >= count)
    throw std::invalid_argument("label " + std::to_string(label) + " out of range (" + std::to_string(count) + ")");
}

}  // namespace

std::vector<double> OutputHead::probabilities(const ModeVector& y) const {
  if (kind_ != Kind::softmax) throw std::logic_error("probabilities: not a softmax head");
  auto z = group_powers(groups_, y);
  const double top = scale_ * *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(scale_ * v - top);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

double OutputHead::loss(const ModeVector& y, std::size_t label) const {
  if (kind_ == Kind::fidelity) {
    check_label(label, static_cast<std::size_t>(y.size()));
    return 1.0 - std::norm(y[static_cast<Eigen::Index>(label)]);
  }
  check_label(label, groups_.size());
  const auto g = group_powers(groups_, y);
  const double top = scale_ * *std::max_element(g.begin(), g.end());
  double sum = 0.0;
  for (double v : g) sum += std::exp(scale_ * v - top);
  return -(scale_ * g[label] - top - std::log(sum));
}

ModeVector OutputHead::adjoint(const ModeVector& y, std::size_t label) const {
  ModeVector aj = ModeVector::Zero(y.size());
  if (kind_ == Kind::fidelity) {
    check_label(label, static_cast<std::size_t>(y.size()));
    const auto m = static_cast<Eigen::Index>(label);
    aj[m] = -2.0 * std::conj(y[m]);
    return aj;
  }
  check_label(label, groups_.size());
  const auto z = probabilities(y);
  for (std::size_t c = 0; c < groups_.size(); ++c) {
    const double coeff = 2.0 * scale_ * (z[c] - (c == label ? 1.0 : 0.0));
    for (std::size_t k : groups_[c]) {
      const auto i = static_cast<Eigen::Index>(k);
      aj[i] += coeff * std::conj(y[i]);
    }
  }
  return aj;
}

std::size_t OutputHead::predict(const ModeVector& y) const {
  if (kind_ == Kind::fidelity) {
    Eigen::Index best = 0;
    y.cwiseAbs2().maxCoeff(&best);
    return static_cast<std::size_t>(best);
  }
  const auto g = group_powers(groups_, y);
  return static_cast<std::size_t>(std::max_element(g.begin(), g.end()) - g.begin());
}

// ---------------------------------------------------------------------------

PnnModel::PnnModel(MeshTopology topo, std::vector<MeshPhases> layer_phases, OutputHead output_head)
    : topology(std::move(topo)), layers(std::move(layer_phases)), head(std::move(output_head)) {
  if (layers.empty()) throw std::invalid_argument("PnnModel: need at least one layer");
  for (const auto& l : layers) l.check_compatible(topology);
}

PnnModel PnnModel::random(std::size_t n_modes, std::size_t n_layers, OutputHead head, Rng& rng) {
  auto topo = MeshTopology::triangular(n_modes);
  std::vector<MeshPhases> layers;
  for (std::size_t l = 0; l < n_layers; ++l) layers.push_back(MeshPhases::random(topo, rng));
  return PnnModel(std::move(topo), std::move(layers), std::move(head));
}

std::size_t PnnModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

std::vector<double> PnnModel::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers) {
    const auto f = l.flatten();
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

PnnModel PnnModel::with_flat(std::span<const double> values) const {
  if (values.size() != parameter_count()) throw std::invalid_argument("PnnModel: flat length mismatch");
  std::vector<MeshPhases> next;
  std::size_t offset = 0;
  for (const auto& l : layers) {
    next.push_back(l.with_flat(values.subspan(offset, l.parameter_count())));
    offset += l.parameter_count();
  }
  return PnnModel(topology, std::move(next), head);
}

ModeVector model_output(const PnnModel& model, const ModeVector& x) {
  ModeVector v = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    v = propagate(model.topology, model.layers[l], v, Direction::forward).output;
    if (l + 1 < model.layers.size()) v = v.cwiseAbs().cast<cdouble>();
  }
  return v;
}

double model_loss(const PnnModel& model, const ModeVector& x, std::size_t label) {
  return model.head.loss(model_output(model, x), label);
}

ModeVector abs_vjp(const ModeVector& y, const ModeVector& x_aj_next) {
  if (y.size() != x_aj_next.size()) throw std::invalid_argument("abs_vjp: length mismatch");
  ModeVector out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double r = std::abs(y[i]);
    out[i] = r < 1e-12 ? cdouble{} : std::conj(y[i]) / r * x_aj_next[i].real();
  }
  return out;
}

ModeVector fidelity_loss_adjoint(const ModeVector& u_hat_row, const ModeVector& u_row, std::size_t m) {
  if (u_hat_row.size() != u_row.size()) throw std::invalid_argument("fidelity_loss_adjoint: length mismatch");
  if (m >= static_cast<std::size_t>(u_row.size())) throw std::invalid_argument("fidelity_loss_adjoint: bad m");
  const cdouble overlap = (u_hat_row.array() * u_row.array().conjugate()).sum();
  ModeVector out = ModeVector::Zero(u_row.size());
  out[static_cast<Eigen::Index>(m)] = -2.0 * std::conj(overlap);
  return out;
}

}  // namespace pnn
