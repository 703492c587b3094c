#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "pnn/energy.hpp"

using namespace pnn;

TEST_CASE("closed-form examples") {
  const EnergyParams unit{4, 1, 1, 1, 1};
  CHECK(energy_estimate(unit, EnergyScheme::backprop_analog) == 36.0);
  CHECK(energy_estimate(unit, EnergyScheme::backprop_digital) == 68.0);
  CHECK(energy_estimate(unit, EnergyScheme::inference) == 8.0);
  EnergyParams free = unit;
  free.e_grad = 0;
  CHECK(energy_estimate(free, EnergyScheme::backprop_analog) == 4.0 * (3 + 2));
}

TEST_CASE("integer inputs evaluate exactly") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> e(0, 1000), n(1, 256);
  for (int t = 0; t < 100; ++t) {
    const EnergyParams p{std::size_t(n(rng)), double(e(rng)), double(e(rng)), double(e(rng)), double(e(rng))};
    const long long N = static_cast<long long>(p.n);
    const auto i = [](double v) { return static_cast<long long>(v); };
    CHECK(energy_estimate(p, EnergyScheme::backprop_analog) ==
          double(N * N * i(p.e_grad) + N * (3 * i(p.e_inp) + 2 * i(p.e_meas))));
    CHECK(energy_estimate(p, EnergyScheme::backprop_digital) ==
          double(3 * N * N * i(p.e_grad_digital) + N * (3 * i(p.e_inp) + 2 * i(p.e_meas))));
    CHECK(energy_estimate(p, EnergyScheme::inference) == double(N * (i(p.e_inp) + i(p.e_meas))));
  }
}

TEST_CASE("validation and names") {
  CHECK_THROWS_AS(energy_estimate({4, -1, 0, 0, 0}, EnergyScheme::inference), std::invalid_argument);
  CHECK(energy_scheme_from_string("analog") == EnergyScheme::backprop_analog);
  CHECK(to_string(EnergyScheme::backprop_digital) == "backprop_digital");
  CHECK_THROWS_AS(energy_scheme_from_string("quantum"), std::invalid_argument);
  const EnergyParams p{8, 1e-12, 2e-12, 3e-15, 4e-12};
  const auto back = nlohmann::json(p).get<EnergyParams>();
  CHECK(back.n == 8);
  CHECK(back.e_grad_digital == 4e-12);
}
