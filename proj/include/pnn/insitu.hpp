#pragma once

#include <cstdint>
#include <vector>

#include "pnn/hardware.hpp"
#include "pnn/mesh.hpp"
#include "pnn/model.hpp"
#include "pnn/vector_unit.hpp"

namespace pnn {

enum class GradientMethod { digital, analog };

/// Tap powers for a unit-power pass, one per θ and φ shifter.
struct TapPowers {
  std::vector<double> theta;
  std::vector<double> phi;
};

/// One optical pass through a mesh layer.
struct PassResult {
  ModeVector output;      ///< measured output, rescaled by √P
  FieldTapRecord taps;    ///< ideal fields for the unit-normalized input
  TapPowers measured;     ///< tap readings for the unit-normalized input
  double input_power = 0.0;  ///< P = ‖input‖²
  Direction direction = Direction::forward;
};

/// ∂L/∂η for every shifter of one layer. θ and φ are measured optically, γ is
/// computed digitally from the measured output and its error signal.
struct GradientRecord {
  std::vector<double> theta;
  std::vector<double> phi;
  std::vector<double> gamma;
  GradientMethod method = GradientMethod::digital;

  std::vector<double> flatten() const;      ///< (θ, φ, γ)
  std::vector<double> optical() const;      ///< (θ, φ)
};

struct AnalogSweep {
  std::vector<double> zeta;
  std::vector<std::vector<double>> theta_traces;  ///< [shifter][sample]
  std::vector<std::vector<double>> phi_traces;
};

/// Simulated chip for one mesh layer: mesh, vector units, taps, and the error
/// realization (tap couplings, static I/O errors) drawn for it.
///
/// Readout mode `ideal` switches off every error source. Otherwise the
/// generator and analyzer errors, tap noise and coupling spread come from
/// readout.error. Taps hit by forward and backward light have independent
/// coupling efficiencies. The topology must use the global_phase variant.
class MeshDevice {
 public:
  MeshDevice(MeshTopology topology, ReadoutConfig readout, std::uint64_t stream = 0);

  const MeshTopology& topology() const { return topology_; }
  const ReadoutConfig& readout() const { return readout_; }
  bool ideal() const { return readout_.ideal(); }

  /// Monitor index of a shifter tap.
  std::size_t tap_index(Direction direction, bool theta, std::size_t shifter) const;

  const PowerMonitor& monitor() const { return monitor_; }
  /// Generator error applied at the side light enters from (forward: inputs).
  ModeVector generate(const ModeVector& embedded, Direction direction, Rng& rng) const;
  ModeVector analyze(const ModeVector& embedded, Direction direction, Rng& rng) const;

 private:
  MeshTopology topology_;
  ReadoutConfig readout_;
  PowerMonitor monitor_;
  StaticIoError input_generator_, output_analyzer_, output_generator_, input_analyzer_;
};

/// Forward inference pass (input generated on the left, analyzed on the
/// right). Any nonzero x is accepted: it is normalized for the optical pass
/// and P = ‖x‖² is recorded. In ideal mode the output equals U·x.
PassResult mesh_forward(const MeshDevice& device, const MeshPhases& phases, const ModeVector& x, Rng& rng);

/// Adjoint pass from the right: output Uᵀ·y_aj in ideal mode. A zero y_aj
/// produces a zero result without touching the device.
PassResult mesh_backward(const MeshDevice& device, const MeshPhases& phases, const ModeVector& y_aj, Rng& rng);

/// Tap readings of the sum pass on the unit-normalized (x̂ − i·x̂_aj*); the
/// true squared norm of the sum is returned in `p_sum`.
TapPowers mesh_sum(const MeshDevice& device, const MeshPhases& phases, const ModeVector& x_hat,
                   const ModeVector& x_aj_hat, double& p_sum, Rng& rng);

/// (P_sum·p_sum − p − p_aj)·√(P·P_aj)/2: the derivative of the cost with
/// respect to the phase imparted by one shifter.
double gradient_from_powers(double p_sum, double p, double p_aj, double P, double P_aj, double P_sum);

/// Per-shifter gradient from three tap records, mapped to the θ/φ parameters.
/// γ entries are left empty.
GradientRecord digital_gradient(const TapPowers& p_sum, const TapPowers& p, const TapPowers& p_aj, double P,
                                double P_aj, double P_sum);

/// ζ-swept sum pass on (x̂ − i·x̂_aj*·e^{iζ})/√2 at K uniform samples. Each
/// trace is fitted by offset + A sin ζ + B cos ζ; the AC part at ζ = 0 is B,
/// which already equals the gradient (the factor ½ of the power loss and the
/// ½ of the difference formula cancel), then scaled by √(P·P_aj).
std::pair<GradientRecord, AnalogSweep> analog_gradient(const MeshDevice& device, const MeshPhases& phases,
                                                       const ModeVector& x_hat, const ModeVector& x_aj_hat,
                                                       double P, double P_aj, std::size_t K, Rng& rng);

/// −Im(y_k·y_aj,k): gradient of the digitally applied output phases.
std::vector<double> gamma_gradient(const ModeVector& y, const ModeVector& y_aj);

struct InSituOptions {
  GradientMethod method = GradientMethod::digital;
  std::size_t analog_samples = 64;
};

struct InSituResult {
  std::vector<GradientRecord> layers;
  ModeVector output;  ///< measured output of the last layer
  double loss = 0.0;  ///< cost evaluated on the measured output
  ModeVector x_aj;    ///< error signal at the first layer's input
};

/// Gradient of the model cost for one example measured on `devices` (one per
/// layer). Descends layer by layer with forward passes, seeds the error
/// signal from the head, and on the way back runs the backward and sum passes
/// of every layer.
InSituResult insitu_gradient(const ModeVector& x, std::size_t label, const PnnModel& model,
                             const std::vector<MeshDevice>& devices, const InSituOptions& opts, Rng& rng);

/// The same gradient computed from exact fields, without any device.
std::vector<GradientRecord> reference_gradient(const ModeVector& x, std::size_t label, const PnnModel& model);

/// One device per layer sharing `readout`, each with its own error stream.
std::vector<MeshDevice> make_devices(const PnnModel& model, const ReadoutConfig& readout);

}  // namespace pnn
