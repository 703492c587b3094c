#pragma once

#include <vector>

#include "pnn/common.hpp"
#include "pnn/hardware.hpp"

namespace pnn {

/// Settings of an N-mode generator/analyzer tree: a diagonal cascade of N−1
/// MZIs (global-phase variant) on pairs (m, m+1), m = 0 … N−2.
struct VectorUnitPhases {
  std::vector<double> theta;  ///< [0, π]
  std::vector<double> phi;    ///< [0, 2π)

  std::size_t n_modes() const { return theta.size() + 1; }
};

/// Analyzer settings that route a unit vector entirely into port 0.
/// Nullification runs from the bottom pair upward: MZI m sees x_m on its top
/// input and the power already gathered from modes m+1 … N−1 on its lower one.
/// Throws std::invalid_argument for a zero or non-normalized vector.
VectorUnitPhases vec2phase(const ModeVector& x);

/// Generator output for `p`: the unit vector whose analysis gives `p`, with
/// the phase of its last element fixed to zero.
ModeVector phase2vec(const VectorUnitPhases& p);

/// [x·√(1 − 1/N), √(1/N)] for a length-N vector x.
ModeVector embed_reference(const ModeVector& x, std::size_t n);

/// Inverse of embed_reference: rotates the last (reference) element to zero
/// phase, keeps the first N entries and rescales them by 1/√(1 − 1/N).
/// Throws NumericalError when the reference amplitude is below `min_reference`.
ModeVector strip_reference(const ModeVector& y, std::size_t n, double min_reference = 1e-9);

/// Relative phase arg(x_top / x_bottom) of two fields interfered in a 50/50
/// MZI whose external shifter is stepped through 0, π/2, π, 3π/2, from the
/// four top-port powers. Result in (−π, π]. Throws NumericalError when the
/// readings carry no interference (all four equal).
double four_point_phase(double p0, double p_half, double p_pi, double p_3half);

enum class ReadoutMode {
  ideal,           ///< exact field, no noise anywhere
  true_phase,      ///< noisy detected amplitudes, ground-truth phases
  self_configure,  ///< noisy amplitudes and four-point phases, as on hardware
};

struct ReadoutConfig {
  ReadoutMode mode = ReadoutMode::ideal;
  HardwareErrorConfig error;

  bool ideal() const { return mode == ReadoutMode::ideal; }
};

struct AnalyzerReading {
  VectorUnitPhases phases;
  ModeVector measured;  ///< reconstructed field, global phase referenced to the last element
};

/// Configure an analyzer on `field` and reconstruct the field from the
/// settings found. In ideal mode this is exact up to global phase. Throws
/// NumericalError when the detected total power is below `min_power`.
AnalyzerReading self_configure_analyzer(const ModeVector& field, const ReadoutConfig& cfg, Rng& rng,
                                        double min_power = 1e-12);

}  // namespace pnn
