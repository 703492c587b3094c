#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "oracles.hpp"
#include "pnn/hardware.hpp"

using namespace pnn;

namespace {

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

double stddev(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size() - 1));
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("error config validation and serialization") {
  HardwareErrorConfig c;
  CHECK(c.is_ideal());
  c.a_error = 0.01;
  c.snr_db = 25;
  c.seed = 99;
  const nlohmann::json j = c;
  const auto back = j.get<HardwareErrorConfig>();
  CHECK(back.a_error == 0.01);
  CHECK(back.snr_db == 25);
  CHECK(back.seed == 99);
  const auto inf = nlohmann::json(HardwareErrorConfig{}).get<HardwareErrorConfig>();
  CHECK(std::isinf(inf.snr_db));
  c.p_error = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  HardwareErrorConfig z;
  z.snr_db = 0;
  CHECK_THROWS_AS(z.validate(), std::invalid_argument);
}

TEST_CASE("perturb_input statistics") {
  Rng rng(21);
  const auto x = oracle::random_unit(4, rng);
  CHECK((perturb_input(x, {}, rng) - x).norm() == 0.0);

  HardwareErrorConfig a;
  a.a_error = 0.05;
  HardwareErrorConfig p;
  p.p_error = 0.05;
  std::vector<double> da, dp;
  for (int t = 0; t < 10000; ++t) {
    da.push_back(std::abs(perturb_input(x, a, rng)[1]) / std::abs(x[1]) - 1.0);
    dp.push_back(wrap_signed(std::arg(perturb_input(x, p, rng)[2]) - std::arg(x[2])));
  }
  CHECK(stddev(da) == doctest::Approx(0.05).epsilon(0.1));
  CHECK(stddev(dp) == doctest::Approx(0.05).epsilon(0.1));
}

TEST_CASE("power monitor noise model") {
  Rng rng(22);
  const PowerMonitor ideal(4, 8, {});
  CHECK(ideal.measure(0.37, 3, rng) == 0.37);
  CHECK(ideal.noiseless());

  HardwareErrorConfig c;
  c.snr_db = 20;
  const PowerMonitor noisy(4, 8, c);
  CHECK(noisy.measure(0.0, 0, rng) == 0.0);
  std::vector<double> r;
  for (int t = 0; t < 10000; ++t) r.push_back(noisy.measure(0.25, 1, rng));
  const double snr_db = 10 * std::log10(mean(r) / stddev(r));
  CHECK(snr_db == doctest::Approx(20.0).epsilon(0.05));
  // variance grows linearly with intensity
  CHECK(noisy.noise_sd(1.0) / noisy.noise_sd(0.25) == doctest::Approx(2.0));

  HardwareErrorConfig s;
  s.tap_coupling_spread = 0.1;
  s.seed = 5;
  const PowerMonitor a(4, 100, s), b(4, 100, s);
  std::vector<double> cs;
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(a.coupling(i) == b.coupling(i));  // drawn once, reproducible
    CHECK(a.measure(0.5, i, rng) == a.coupling(i) * 0.5);
    cs.push_back(a.coupling(i));
  }
  CHECK(stddev(cs) > 0.05);
}

TEST_CASE("calibration model evaluation and inversion") {
  const auto lin = CalibrationModel{{0, 0, 1, 0}, {}, 0.5, 0.5, 0, 10, 0};
  CHECK(phase_from_voltage(lin, 1.5) == 1.5);
  CHECK(voltage_from_phase(CalibrationModel::create({0, 0, 1, 0}, 0.5, 0.5, 0, 10), 2.0) ==
        doctest::Approx(2.0).epsilon(1e-12));
  const auto c = CalibrationModel{{0, 0, 0, 1.25}, {}, 0.5, 0.5, 0, 5, 0};
  CHECK(phase_from_voltage(c, 3.3) == 1.25);
  CHECK_THROWS_AS(phase_from_voltage(lin, 11), std::out_of_range);

  const auto h = CalibrationModel::default_heater();
  CHECK(h.phase_span() > kTwoPi);
  const double v1 = voltage_from_phase(h, 1.0), v2 = voltage_from_phase(h, 1.0 + kTwoPi);
  CHECK(wrap_signed(phase_from_voltage(h, v1) - phase_from_voltage(h, v2)) == doctest::Approx(0.0).epsilon(1e-9));

  Rng rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int m = 0; m < 10; ++m) {
    // random increasing cubic with span 2.2π–4π
    const double p2 = 0.5 + u(rng), p1 = 0.3 * u(rng), p0 = 0.05 * u(rng);
    auto p = std::array<double, 4>{p0, p1, p2, u(rng)};
    const double span = ((p0 * 5 + p1) * 5 + p2) * 5;
    const double k = (2.2 + 1.8 * u(rng)) * kPi / span;
    for (int i = 0; i < 3; ++i) p[std::size_t(i)] *= k;
    const auto model = CalibrationModel::create(p, 0.5, 0.5, 0, 5);
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
      const double th = kTwoPi * u(rng);
      const double v = voltage_from_phase(model, th);
      CHECK((v >= 0 && v <= 5));
      worst = std::max(worst, std::abs(wrap_signed(phase_from_voltage(model, v) - th)));
    }
    CHECK(worst < 1e-9);
  }

  CHECK_THROWS_AS(CalibrationModel::create({0, 0, 0.5, 0}, 0.5, 0.5, 0, 5), NumericalError);  // 2.5 rad span
  CHECK_THROWS_AS(CalibrationModel::create({0, -1, 5, 0}, 0.5, 0.5, 0, 5), NumericalError);  // not monotone
}

TEST_CASE("calibration serialization") {
  const auto h = CalibrationModel::default_heater();
  const auto path = std::filesystem::temp_directory_path() / "pnn_calibration_test.json";
  save_calibration(path, h);
  const auto back = load_calibration(path);
  for (int i = 0; i < 4; ++i) CHECK(back.p[std::size_t(i)] == h.p[std::size_t(i)]);
  CHECK(back.v_max == h.v_max);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_calibration(path), DataError);
}

TEST_CASE("calibration sweep and fit") {
  Rng rng(24);
  const auto truth = CalibrationModel::default_heater();

  const auto lin = CalibrationModel::create({0, 0, 1.5, 0.2}, 0.4, 0.5, 0, 5);
  const auto exact = simulate_calibration_sweep(lin, 41, {}, rng);
  for (const auto& s : exact) CHECK(s.t == doctest::Approx(0.4 * std::sin(1.5 * s.v + 0.2) + 0.5).epsilon(1e-14));

  const auto clean = simulate_calibration_sweep(truth, 201, {}, rng);
  const auto fit = fit_calibration(clean);
  CHECK(calibration_phase_rms(fit, truth) < 1e-3);
  CHECK(fit.t_amp == doctest::Approx(truth.t_amp).epsilon(1e-4));

  HardwareErrorConfig noisy;
  noisy.snr_db = 30;
  std::vector<double> rms;
  for (int t = 0; t < 10; ++t) rms.push_back(calibration_phase_rms(fit_calibration(simulate_calibration_sweep(truth, 201, noisy, rng)), truth));
  CHECK(median(rms) < 0.01);

  // A sweep covering under π of phase cannot fix the branch.
  std::vector<CalibrationSample> short_sweep;
  for (int i = 0; i < 30; ++i) {
    const double v = 0.1 * i / 29.0;
    short_sweep.push_back({v, 0.5 * std::sin(2.0 * v) + 0.5});
  }
  CHECK_THROWS_AS(fit_calibration(short_sweep), NumericalError);
  CHECK_THROWS_AS(fit_calibration(std::vector<CalibrationSample>(5)), NumericalError);
}

TEST_CASE("full-mesh split-ratio sweeps follow the sinusoidal model") {
  const auto topo = MeshTopology::triangular(6);
  std::vector<double> applied;
  for (int k = 0; k < 33; ++k) applied.push_back(kTwoPi * k / 32.0);
  for (std::size_t target = 0; target < topo.node_count(); ++target) {
    const auto theta = mesh_split_ratio_sweep(topo, target, ShifterKind::theta, applied);
    const auto phi = mesh_split_ratio_sweep(topo, target, ShifterKind::phi, applied);
    for (std::size_t k = 0; k < applied.size(); ++k) {
      // θ: cross fraction ½ + ½ cos θ; φ inside the meta-MZI: ½ − ½ cos(φ + δ)
      CHECK(theta[k] == doctest::Approx(0.5 + 0.5 * std::cos(applied[k])).epsilon(1e-12));
    }
    // φ trace is a pure sinusoid with full visibility: fit a + b cos + c sin
    double a = 0, b = 0, c = 0;
    const double K = double(applied.size() - 1);
    for (std::size_t k = 0; k + 1 < applied.size(); ++k) {
      a += phi[k] / K;
      b += 2 * phi[k] * std::cos(applied[k]) / K;
      c += 2 * phi[k] * std::sin(applied[k]) / K;
    }
    CHECK(a == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::hypot(b, c) == doctest::Approx(0.5).epsilon(1e-12));
    for (std::size_t k = 0; k < applied.size(); ++k)
      CHECK(phi[k] == doctest::Approx(a + b * std::cos(applied[k]) + c * std::sin(applied[k])).epsilon(1e-10));
  }
}
