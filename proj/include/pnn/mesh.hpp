#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pnn/common.hpp"

namespace pnn {

/// Transfer-matrix convention of a single MZI.
///
/// `standard` is T₂(θ, φ) = i·[[e^{iφ} sin(θ/2), cos(θ/2)], [e^{iφ} cos(θ/2), −sin(θ/2)]],
/// realized with a differential ±θ/2 internal shift. `global_phase` is
/// T̃₂ = e^{−iθ/2}·T₂, realized with a single internal shifter that imparts
/// e^{−iθ} on the lower internal arm; this is the hardware convention and the
/// simulator default.
enum class MziVariant { standard, global_phase };

enum class Direction { forward, backward };

/// Sign relating a θ parameter to the phase its shifter imparts on the field
/// (global-phase variant). φ and γ shifters impart +φ / +γ.
inline constexpr double kThetaShifterSign = -1.0;

struct MziNode {
  std::size_t column = 0;
  std::size_t top = 0;  ///< acts on waveguides (top, top + 1)
  std::size_t theta_index = 0;
  std::size_t phi_index = 0;
};

/// Placement of MZIs in a mesh. Nodes are stored in propagation order
/// (ascending column); within one column they act on disjoint waveguide pairs.
class MeshTopology {
 public:
  MeshTopology(std::size_t n_modes, std::vector<MziNode> nodes, MziVariant variant);

  /// Reck-style triangle with n(n−1)/2 MZIs. Parameter indices follow the
  /// diagonal-major order of the forward sweep: diagonal d holds the MZIs on
  /// pairs (0,1), (1,2), …, (n−2−d, n−1−d) and sits in columns 2d … 2d+n−2−d.
  static MeshTopology triangular(std::size_t n_modes,
                                 MziVariant variant = MziVariant::global_phase);

  std::size_t n_modes() const { return n_modes_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t gamma_count() const { return n_modes_; }
  std::size_t column_count() const { return column_count_; }
  MziVariant variant() const { return variant_; }
  std::span<const MziNode> nodes() const { return nodes_; }

  /// Position in nodes() of the MZI owning θ index `theta_index`.
  std::size_t node_of_theta(std::size_t theta_index) const { return by_theta_.at(theta_index); }

  bool is_triangular() const { return triangular_; }

 private:
  std::size_t n_modes_ = 0;
  std::vector<MziNode> nodes_;
  std::vector<std::size_t> by_theta_;
  std::size_t column_count_ = 0;
  MziVariant variant_ = MziVariant::global_phase;
  bool triangular_ = false;
};

/// Full trainable parameter set of one mesh layer. θ is clamped to [0, π];
/// φ and γ are stored reduced to [0, 2π).
class MeshPhases {
 public:
  MeshPhases() = default;
  MeshPhases(std::vector<double> theta, std::vector<double> phi, std::vector<double> gamma);

  /// Every MZI in the bar state (θ = π, φ = 0), γ = 0.
  static MeshPhases bar(const MeshTopology& topology);

  /// θ uniform in [0, π], φ and γ uniform in [0, 2π).
  static MeshPhases random(const MeshTopology& topology, Rng& rng);

  const std::vector<double>& theta() const { return theta_; }
  const std::vector<double>& phi() const { return phi_; }
  const std::vector<double>& gamma() const { return gamma_; }

  std::size_t parameter_count() const { return theta_.size() + phi_.size() + gamma_.size(); }

  /// Flattened (θ, φ, γ) parameter vector.
  std::vector<double> flatten() const;
  /// Inverse of flatten(); `values` length must equal parameter_count().
  MeshPhases with_flat(std::span<const double> values) const;

  /// Copy with every entry shifted by the matching delta (then renormalized).
  MeshPhases shifted(std::span<const double> delta) const;

  /// Throws std::invalid_argument when lengths disagree with `topology`.
  void check_compatible(const MeshTopology& topology) const;

 private:
  std::vector<double> theta_;
  std::vector<double> phi_;
  std::vector<double> gamma_;
};

/// Complex field immediately entering each θ and φ shifter during one pass.
/// For a backward pass the field is recorded at the same physical point, i.e.
/// after it has traversed the shifter right-to-left.
struct FieldTapRecord {
  std::vector<cdouble> theta_fields;
  std::vector<cdouble> phi_fields;
};

struct Propagation {
  ModeVector output;
  FieldTapRecord taps;
};

Eigen::Matrix2cd mzi_transfer(double theta, double phi, MziVariant variant);

/// diag(e^{iγ}) · (column products of embedded MZI transfer matrices).
CMatrix build_unitary(const MeshTopology& topology, const MeshPhases& phases);

/// Field propagation with per-shifter taps. Forward returns U·x; backward
/// returns Uᵀ·x, visiting columns right to left. γ is applied at the output
/// boundary and never appears in the tap record of a forward pass.
Propagation propagate(const MeshTopology& topology, const MeshPhases& phases,
                      const ModeVector& input, Direction direction);

/// Triangular-mesh phases reproducing `u`, by row-by-row nullification from
/// the bottom waveguide upward. Throws NumericalError when ‖U†U − I‖_max
/// exceeds `unitarity_tol`.
MeshPhases phases_from_unitary(const CMatrix& u, MziVariant variant = MziVariant::global_phase,
                               double unitarity_tol = 1e-8);

/// Bar/cross "lightwire" settings that deliver all power injected at
/// `input_port` to the top input of nodes()[target]. MZIs off the path are
/// left in the bar state.
MeshPhases route_to_mzi(const MeshTopology& topology, std::size_t target,
                        std::size_t input_port = 0);

/// max |(U†U − I)_ij|
double unitarity_deviation(const CMatrix& u);

}  // namespace pnn
