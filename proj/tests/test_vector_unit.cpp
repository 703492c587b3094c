#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "oracles.hpp"
#include "pnn/mesh.hpp"
#include "pnn/vector_unit.hpp"

using namespace pnn;

namespace {

// Analyzer as a matrix: MZIs applied bottom pair first.
CMatrix analyzer_matrix(const VectorUnitPhases& p) {
  const auto n = static_cast<Eigen::Index>(p.n_modes());
  CMatrix a = CMatrix::Identity(n, n);
  for (Eigen::Index m = n - 2; m >= 0; --m) {
    const auto t = mzi_transfer(p.theta[std::size_t(m)], p.phi[std::size_t(m)], MziVariant::global_phase);
    a.middleRows(m, 2) = (t * a.middleRows(m, 2)).eval();
  }
  return a;
}

double phase_free_distance(const ModeVector& a, const ModeVector& b) {
  const cdouble overlap = b.dot(a);  // b† a
  const cdouble rot = std::abs(overlap) > 0 ? overlap / std::abs(overlap) : 1.0;
  return (a - b * rot).norm();
}

// Top-port powers of a 50/50 analyzer MZI (θ = π/2) with external phase φ.
double top_power(cdouble a, cdouble b, double phi) {
  const auto t = mzi_transfer(kPi / 2, phi, MziVariant::global_phase);
  return std::norm(t(0, 0) * a + t(0, 1) * b);
}

}  // namespace

TEST_CASE("vec2phase closed-form cases") {
  ModeVector x(2);
  x << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  auto p = vec2phase(x);
  CHECK(p.theta[0] == doctest::Approx(kPi / 2));
  CHECK(p.phi[0] == doctest::Approx(0.0));
  x << 1 / std::sqrt(2.0), kI / std::sqrt(2.0);
  p = vec2phase(x);
  CHECK(p.theta[0] == doctest::Approx(kPi / 2));
  CHECK(p.phi[0] == doctest::Approx(kPi / 2));
  CHECK_THROWS_AS(vec2phase(ModeVector::Zero(3)), std::invalid_argument);
  CHECK_THROWS_AS(vec2phase(ModeVector::Ones(3)), std::invalid_argument);
}

TEST_CASE("vec2phase routes all power to the top port") {
  Rng rng(11);
  for (std::size_t n : {2u, 3u, 5u, 9u}) {
    const auto x = oracle::random_unit(n, rng);
    const auto p = vec2phase(x);
    const ModeVector out = analyzer_matrix(p) * x;
    CHECK(std::abs(out[0]) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.tail(out.size() - 1).norm() < 1e-12);
  }
}

TEST_CASE("vec2phase and phase2vec are mutual inverses") {
  Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    const auto x = oracle::random_unit(5, rng);
    const ModeVector expect = x * std::polar(1.0, -std::arg(x[4]));
    CHECK((phase2vec(vec2phase(x)) - expect).norm() < 1e-10);

    VectorUnitPhases p;
    std::uniform_real_distribution<double> u(0.05, kPi - 0.05);
    for (int k = 0; k < 4; ++k) {
      p.theta.push_back(u(rng));
      p.phi.push_back(2 * u(rng));
    }
    const auto v = phase2vec(p);
    CHECK(std::abs(v.norm() - 1) < 1e-12);
    CHECK(std::abs(std::arg(v[4])) < 1e-12);
    const auto q = vec2phase(v);
    for (int k = 0; k < 4; ++k) {
      CHECK(q.theta[std::size_t(k)] == doctest::Approx(p.theta[std::size_t(k)]).epsilon(1e-9));
      CHECK(wrap_signed(q.phi[std::size_t(k)] - p.phi[std::size_t(k)]) == doctest::Approx(0.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("phase2vec trivial settings") {
  VectorUnitPhases bar{{kPi, kPi, kPi}, {0, 0, 0}};
  const auto v = phase2vec(bar);
  CHECK(std::abs(v[0]) == doctest::Approx(1.0));
  VectorUnitPhases cross{{0, kPi, kPi}, {0, 0, 0}};
  const auto c = phase2vec(cross);
  CHECK(std::abs(c[1]) == doctest::Approx(1.0));
  // zero components take φ = 0
  ModeVector e1 = ModeVector::Zero(4);
  e1[0] = 1;
  const auto z = vec2phase(e1);
  for (double p : z.phi) CHECK(p == 0.0);
  for (double t : z.theta) CHECK(t == doctest::Approx(kPi));
}

TEST_CASE("reference arm embedding") {
  Rng rng(13);
  const auto x = oracle::random_unit(4, rng);
  const auto e = embed_reference(x, 4);
  CHECK(e.size() == 5);
  CHECK(e[4].real() == doctest::Approx(0.5));
  CHECK(e[4].imag() == 0.0);
  CHECK((e.head(4) - x * std::sqrt(0.75)).norm() < 1e-15);
  CHECK(std::abs(e.norm() - 1) < 1e-15);
  CHECK((strip_reference(e, 4) - x).norm() < 1e-12);
  CHECK((strip_reference(e * std::polar(1.0, 1.3), 4) - x).norm() < 1e-12);
  ModeVector dark = e;
  dark[4] = 0;
  CHECK_THROWS_AS(strip_reference(dark, 4), NumericalError);
  CHECK_THROWS_AS(embed_reference(ModeVector::Ones(1), 1), std::invalid_argument);
}

TEST_CASE("four-point phase agrees with a simulated analyzer") {
  Rng rng(14);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int t = 0; t < 100; ++t) {
    const double delta = u(rng);
    const cdouble a = std::polar(0.3 + 0.5 * std::abs(u(rng)) / kPi, delta + 0.4);
    const cdouble b = std::polar(0.6, 0.4);
    double p[4];
    for (int k = 0; k < 4; ++k) p[k] = top_power(a, b, k * kPi / 2);
    CHECK(wrap_signed(four_point_phase(p[0], p[1], p[2], p[3]) - delta) == doctest::Approx(0.0).epsilon(1e-12));
    // offsets and positive scaling do not matter
    CHECK(four_point_phase(p[0] + 2, p[1] + 2, p[2] + 2, p[3] + 2) ==
          doctest::Approx(four_point_phase(p[0], p[1], p[2], p[3])));
    CHECK(four_point_phase(3 * p[0], 3 * p[1], 3 * p[2], 3 * p[3]) ==
          doctest::Approx(four_point_phase(p[0], p[1], p[2], p[3])));
  }
  // Powers (1, ½, 0, ½) and (½, 1, ½, 0) come from equal amplitudes at relative
  // phase 0 and −π/2.
  const double s = 0.5;
  CHECK(top_power(1, 1, 0) * s == doctest::Approx(1.0));
  CHECK(top_power(std::polar(1.0, -kPi / 2), 1, kPi / 2) * s == doctest::Approx(1.0));
  CHECK(four_point_phase(1, 0.5, 0, 0.5) == doctest::Approx(0.0));
  CHECK(four_point_phase(0.5, 1, 0.5, 0) == doctest::Approx(-kPi / 2));
  CHECK_THROWS_AS(four_point_phase(0.3, 0.3, 0.3, 0.3), NumericalError);
}

TEST_CASE("ideal self-configuration reconstructs the field") {
  Rng rng(15);
  ReadoutConfig ideal;
  for (int t = 0; t < 20; ++t) {
    const ModeVector f = oracle::random_unit(6, rng) * 0.7;
    const auto r = self_configure_analyzer(f, ideal, rng);
    CHECK(phase_free_distance(r.measured, f) < 1e-10);
    const ModeVector out = analyzer_matrix(r.phases) * (f / f.norm());
    CHECK(out.tail(5).norm() < 1e-12);
  }
  ModeVector e1 = ModeVector::Zero(4);
  e1[0] = 1;
  const auto r = self_configure_analyzer(e1, ideal, rng);
  CHECK(phase_free_distance(r.measured, e1) < 1e-14);
  CHECK_THROWS_AS(self_configure_analyzer(ModeVector::Zero(3), ideal, rng), NumericalError);
}

TEST_CASE("self-configuration error shrinks with detector SNR") {
  std::vector<double> medians;
  for (double snr : {20.0, 30.0, 40.0}) {
    ReadoutConfig cfg;
    cfg.mode = ReadoutMode::self_configure;
    cfg.error.snr_db = snr;
    Rng rng(16);
    std::vector<double> errs;
    for (int t = 0; t < 100; ++t) {
      const auto f = oracle::random_unit(5, rng);
      errs.push_back(phase_free_distance(self_configure_analyzer(f, cfg, rng).measured, f));
    }
    std::nth_element(errs.begin(), errs.begin() + 50, errs.end());
    medians.push_back(errs[50]);
  }
  CHECK(medians[0] > 0.0);
  CHECK(medians[0] > medians[1]);
  CHECK(medians[1] > medians[2]);
}

TEST_CASE("ground-truth phase readout is exact in phase") {
  ReadoutConfig cfg;
  cfg.mode = ReadoutMode::true_phase;
  cfg.error.snr_db = 20;
  Rng rng(17);
  const auto f = oracle::random_unit(5, rng);
  const auto r = self_configure_analyzer(f, cfg, rng);
  for (Eigen::Index k = 0; k < 5; ++k)
    CHECK(wrap_signed(std::arg(r.measured[k]) - std::arg(f[k]) - (std::arg(r.measured[4]) - std::arg(f[4]))) ==
          doctest::Approx(0.0).epsilon(1e-9));
}
