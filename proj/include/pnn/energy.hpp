#pragma once

#include <cstddef>
#include <string>

#include <json.hpp>

namespace pnn {

/// Per-operation energies in joules for an N-mode layer.
struct EnergyParams {
  std::size_t n = 0;
  double e_inp = 0.0;             ///< preparing one input mode
  double e_meas = 0.0;            ///< reading one output mode
  double e_grad = 0.0;            ///< one analog per-shifter update
  double e_grad_digital = 0.0;    ///< one per-shifter tap digitization

  /// Throws std::invalid_argument for a negative or non-finite energy.
  void validate() const;
};

enum class EnergyScheme { inference, backprop_analog, backprop_digital };

EnergyScheme energy_scheme_from_string(const std::string& s);
std::string to_string(EnergyScheme s);

/// Closed-form cost of one layer pass:
///   inference         N(E_inp + E_meas)
///   backprop_analog   N²E_grad + N(3E_inp + 2E_meas)
///   backprop_digital  3N²E_grad,digital + N(3E_inp + 2E_meas)
double energy_estimate(const EnergyParams& p, EnergyScheme scheme);

void to_json(nlohmann::json& j, const EnergyParams& p);
void from_json(const nlohmann::json& j, EnergyParams& p);

}  // namespace pnn
