#pragma once

#include <vector>

#include "pnn/common.hpp"
#include "pnn/mesh.hpp"

namespace pnn {

/// Cost evaluated on the last layer's output field.
///
/// `softmax`: class c has logit scale·Σ_{k∈group c}|y_k|² and the cost is the
/// cross entropy −log ẑ_label. With groups {0,1}, {2,3} and scale 1 this is the
/// two-class power-ratio classifier.
///
/// `fidelity`: the label names a mode m and the cost is 1 − |y_m|²; with the
/// input conj(u_m) it measures how well row m of the mesh matches u_m.
class OutputHead {
 public:
  enum class Kind { softmax, fidelity };

  static OutputHead softmax(std::vector<std::vector<std::size_t>> groups, double scale = 1.0);
  /// Groups {0,1} and {2,3}.
  static OutputHead softmax2();
  static OutputHead fidelity();

  Kind kind() const { return kind_; }
  std::size_t class_count() const { return groups_.size(); }
  const std::vector<std::vector<std::size_t>>& groups() const { return groups_; }
  double scale() const { return scale_; }

  /// Class probabilities ẑ (softmax kind only).
  std::vector<double> probabilities(const ModeVector& y) const;
  double loss(const ModeVector& y, std::size_t label) const;
  /// Error signal y_aj = 2·∂L/∂y (Wirtinger), the seed of the backward pass.
  ModeVector adjoint(const ModeVector& y, std::size_t label) const;
  std::size_t predict(const ModeVector& y) const;

 private:
  Kind kind_ = Kind::softmax;
  std::vector<std::vector<std::size_t>> groups_;
  double scale_ = 1.0;
};

/// L unitary layers joined by |·|: x⁽ˡ⁺¹⁾ = |U⁽ˡ⁾ x⁽ˡ⁾|.
struct PnnModel {
  MeshTopology topology;
  std::vector<MeshPhases> layers;
  OutputHead head;

  PnnModel(MeshTopology topo, std::vector<MeshPhases> layer_phases, OutputHead output_head);
  static PnnModel random(std::size_t n_modes, std::size_t n_layers, OutputHead head, Rng& rng);

  std::size_t n_modes() const { return topology.n_modes(); }
  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  PnnModel with_flat(std::span<const double> values) const;
};

/// Ideal-model output field of the last layer.
ModeVector model_output(const PnnModel& model, const ModeVector& x);
double model_loss(const PnnModel& model, const ModeVector& x, std::size_t label);

/// Elementwise conj(y)/|y|·Re(x_aj): the error signal behind |y| given the
/// error signal x_aj at the next layer's input. Components with
/// |y_i| < 1e−12 get 0.
ModeVector abs_vjp(const ModeVector& y, const ModeVector& x_aj_next);

/// −2·conj(û_mᵀ·conj(u_m))·e_m.
ModeVector fidelity_loss_adjoint(const ModeVector& u_hat_row, const ModeVector& u_row, std::size_t m);

}  // namespace pnn
