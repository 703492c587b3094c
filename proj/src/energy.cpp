#include "pnn/energy.hpp"

#include <cmath>
#include <stdexcept>

namespace pnn {

void EnergyParams::validate() const {
  for (double e : {e_inp, e_meas, e_grad, e_grad_digital})
    if (!(e >= 0.0) || !std::isfinite(e)) throw std::invalid_argument("energy parameters must be finite and >= 0");
}

EnergyScheme energy_scheme_from_string(const std::string& s) {
  if (s == "inference") return EnergyScheme::inference;
  if (s == "backprop_analog" || s == "analog") return EnergyScheme::backprop_analog;
  if (s == "backprop_digital" || s == "digital") return EnergyScheme::backprop_digital;
  throw std::invalid_argument("unknown energy scheme '" + s + "'");
}

std::string to_string(EnergyScheme s) {
  switch (s) {
    case EnergyScheme::inference: return "inference";
    case EnergyScheme::backprop_analog: return "backprop_analog";
    case EnergyScheme::backprop_digital: return "backprop_digital";
  }
  return "?";
}

double energy_estimate(const EnergyParams& p, EnergyScheme scheme) {
  p.validate();
  const double n = static_cast<double>(p.n);
  switch (scheme) {
    case EnergyScheme::inference: return n * (p.e_inp + p.e_meas);
    case EnergyScheme::backprop_analog: return n * n * p.e_grad + n * (3.0 * p.e_inp + 2.0 * p.e_meas);
    case EnergyScheme::backprop_digital: return 3.0 * n * n * p.e_grad_digital + n * (3.0 * p.e_inp + 2.0 * p.e_meas);
  }
  return 0.0;
}

void to_json(nlohmann::json& j, const EnergyParams& p) {
  j = {{"n", p.n}, {"e_inp", p.e_inp}, {"e_meas", p.e_meas}, {"e_grad", p.e_grad}, {"e_grad_digital", p.e_grad_digital}};
}

void from_json(const nlohmann::json& j, EnergyParams& p) {
  EnergyParams d;
  p.n = j.value("n", d.n);
  p.e_inp = j.value("e_inp", d.e_inp);
  p.e_meas = j.value("e_meas", d.e_meas);
  p.e_grad = j.value("e_grad", d.e_grad);
  p.e_grad_digital = j.value("e_grad_digital", d.e_grad_digital);
}

}  // namespace pnn
