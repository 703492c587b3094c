#pragma once

#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pnn {

using cdouble = std::complex<double>;

/// Optical mode amplitudes. Squared norm is total optical power.
using ModeVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr cdouble kI{0.0, 1.0};

/// Reduce an angle to [0, 2π).
double wrap_angle(double a);

/// Reduce an angle to (−π, π].
double wrap_signed(double a);

/// Numerical failure inside the simulator (non-unitary input, degenerate
/// measurement, non-convergent fit).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/// Independent generator for stream `stream` of a master seed. Streams are
/// mixed with splitmix64 so neighbouring indices are decorrelated.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

/// Draw from Normal(0, sd). Returns exactly 0 without consuming state when
/// sd == 0, so zero-noise configurations are bit-identical to the ideal path.
double gaussian(Rng& rng, double sd);

}  // namespace pnn
