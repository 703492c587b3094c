#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include <json.hpp>

#include "pnn/common.hpp"
#include "pnn/mesh.hpp"

namespace pnn {

/// Hardware non-idealities injected by the simulator.
struct HardwareErrorConfig {
  double a_error = 0.0;  ///< relative amplitude error std-dev at field generation/analysis
  double p_error = 0.0;  ///< phase error std-dev (rad) at field generation/analysis
  /// Detector SNR (dB, mean/std of a reading) at intensity 1/N; +inf disables shot noise.
  double snr_db = std::numeric_limits<double>::infinity();
  double tap_coupling_spread = 0.0;  ///< relative std-dev of per-tap coupling efficiency
  /// Draw a_error/p_error once per device element instead of once per pass.
  bool static_io_error = false;
  std::uint64_t seed = 0;

  bool is_ideal() const;
  void validate() const;  ///< throws std::invalid_argument
};

void to_json(nlohmann::json& j, const HardwareErrorConfig& c);
void from_json(const nlohmann::json& j, HardwareErrorConfig& c);

/// Scale each amplitude by (1 + δa) and rotate it by δp, δa ~ N(0, a_error),
/// δp ~ N(0, p_error). Exact identity when both std-devs are zero.
ModeVector perturb_input(const ModeVector& x, const HardwareErrorConfig& cfg, Rng& rng);

/// Grating-tap and detector readout with shot noise.
///
/// A reading is coupling_i·I + n with std(n) = (1/N)/snr·√(I·N), i.e. the
/// variance grows linearly with intensity and the SNR equals snr_db at
/// I = 1/N. Readings are clamped at zero. Per-tap couplings are drawn once,
/// from Normal(1, tap_coupling_spread), when the monitor is built.
class PowerMonitor {
 public:
  PowerMonitor() = default;
  PowerMonitor(std::size_t n_modes, std::size_t tap_count, const HardwareErrorConfig& cfg);

  double measure(double intensity, std::size_t tap, Rng& rng) const;
  /// Output detector reading (calibrated, unit coupling).
  double detect(double intensity, Rng& rng) const;
  double noise_sd(double intensity) const;
  double coupling(std::size_t tap) const { return couplings_.empty() ? 1.0 : couplings_.at(tap); }
  bool noiseless() const { return noise_scale_ == 0.0; }

 private:
  double n_modes_ = 1.0;
  double noise_scale_ = 0.0;  // (1/N)/snr_linear
  std::vector<double> couplings_;
};

/// Element-wise I/O errors that stay fixed for the lifetime of a device
/// (the `static_io_error` option).
class StaticIoError {
 public:
  StaticIoError() = default;
  StaticIoError(std::size_t n, const HardwareErrorConfig& cfg, std::uint64_t stream);
  ModeVector apply(const ModeVector& x) const;
  bool empty() const { return gain_.empty(); }

 private:
  std::vector<cdouble> gain_;
};

// ---------------------------------------------------------------------------
// Voltage–phase calibration

/// θ(v) = p0 v³ + p1 v² + p2 v + p3, measured through t = a sin θ + b, with
/// v² ≈ q0 θ³ + q1 θ² + q2 θ + q3 as an inversion seed.
struct CalibrationModel {
  std::array<double, 4> p{0.0, 0.0, 1.0, 0.0};
  std::array<double, 4> q{0.0, 0.0, 0.0, 0.0};
  double t_amp = 0.5;
  double t_offset = 0.5;
  double v_min = 0.0;
  double v_max = 5.0;
  double fit_rms = 0.0;  ///< RMS transmissivity residual of the fit that produced it

  /// Validated model: θ strictly monotone on [v_min, v_max], span ≥ 2π.
  /// Fills q by least squares.
  static CalibrationModel create(std::array<double, 4> p, double t_amp, double t_offset,
                                 double v_min, double v_max);

  /// Heater-like default: ~2.5π of phase over 0..5 V.
  static CalibrationModel default_heater();

  void validate() const;  ///< throws NumericalError
  double phase_span() const;
};

void to_json(nlohmann::json& j, const CalibrationModel& m);
void from_json(const nlohmann::json& j, CalibrationModel& m);
void save_calibration(const std::filesystem::path& path, const CalibrationModel& m);
CalibrationModel load_calibration(const std::filesystem::path& path);

double phase_from_voltage(const CalibrationModel& model, double v);

/// Voltage in [v_min, v_max] realizing `theta` mod 2π; the lowest such
/// voltage is returned. Throws NumericalError when no branch is reachable.
double voltage_from_phase(const CalibrationModel& model, double theta);

struct CalibrationSample {
  double v = 0.0;
  double t = 0.0;
};

/// Uniform sweep of v over the model range, recording t = a sin θ(v) + b with
/// detector noise for an N-mode device (shot noise anchored at 1/N).
std::vector<CalibrationSample> simulate_calibration_sweep(const CalibrationModel& truth,
                                                          std::size_t n_points,
                                                          const HardwareErrorConfig& cfg, Rng& rng,
                                                          std::size_t n_modes = 4);

/// Least-squares fit of (a, b, p) to the samples, branch fixed by a > 0 and
/// increasing θ(v), followed by the q-cubic. Throws NumericalError on fewer
/// than 8 samples, non-convergence, or a recovered span below 2π.
CalibrationModel fit_calibration(std::span<const CalibrationSample> samples);

/// RMS of θ_fit(v) − θ_true(v) over the truth's voltage range, after removing
/// the best common multiple of 2π.
double calibration_phase_rms(const CalibrationModel& fitted, const CalibrationModel& truth,
                             std::size_t grid = 501);

enum class ShifterKind { theta, phi };

/// Split ratio observed in a full-mesh simulation while the chosen shifter
/// of nodes()[target] is swept through `applied`. θ shifters are reached by a
/// lightwire route and read at the MZI's cross port. φ shifters sit inside a
/// meta-MZI formed with the upstream MZI on the same waveguide pair (both set
/// to 50/50, the side neighbours in bar); in the first diagonal, where no such
/// MZI exists, the generator injects a balanced pair instead.
std::vector<double> mesh_split_ratio_sweep(const MeshTopology& topology, std::size_t target,
                                           ShifterKind kind, std::span<const double> applied);

}  // namespace pnn
