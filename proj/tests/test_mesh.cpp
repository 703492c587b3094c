#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "pnn/mesh.hpp"

using namespace pnn;

namespace {

// Dense embedding of a 2×2 block on rows (top, top+1); product order matches
// the column sequence of the mesh.
CMatrix unitary_by_embedding(const MeshTopology& topo, const MeshPhases& ph) {
  const auto n = static_cast<Eigen::Index>(topo.n_modes());
  CMatrix u = CMatrix::Identity(n, n);
  for (const auto& node : topo.nodes()) {
    CMatrix e = CMatrix::Identity(n, n);
    e.block(static_cast<Eigen::Index>(node.top), static_cast<Eigen::Index>(node.top), 2, 2) =
        mzi_transfer(ph.theta()[node.theta_index], ph.phi()[node.phi_index], topo.variant());
    u = e * u;
  }
  for (Eigen::Index k = 0; k < n; ++k) u.row(k) *= std::polar(1.0, ph.gamma()[static_cast<std::size_t>(k)]);
  return u;
}

double max_abs(const CMatrix& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("mzi transfer: closed-form states") {
  const double r = 1.0 / std::sqrt(2.0);
  Eigen::Matrix2cd cross, bar, mid;
  cross << 0, kI, kI, 0;
  bar << kI, 0, 0, -kI;
  mid << kI * r * kI, kI * r, kI * r * kI, -kI * r;
  CHECK(max_abs(mzi_transfer(0, 0, MziVariant::standard) - cross) < 1e-15);
  CHECK(max_abs(mzi_transfer(kPi, 0, MziVariant::standard) - bar) < 1e-15);
  CHECK(max_abs(mzi_transfer(kPi / 2, kPi / 2, MziVariant::standard) - mid) < 1e-15);
}

TEST_CASE("mzi transfer: global-phase variant differs by e^{-iθ/2} only") {
  Rng rng(1);
  std::uniform_real_distribution<double> u(0, kPi);
  for (int t = 0; t < 50; ++t) {
    const double th = u(rng), ph = 2 * u(rng);
    const auto a = mzi_transfer(th, ph, MziVariant::standard);
    const auto b = mzi_transfer(th, ph, MziVariant::global_phase);
    CHECK(max_abs(b - std::polar(1.0, -th / 2) * a) < 1e-15);
    CHECK(max_abs(a.adjoint() * a - Eigen::Matrix2cd::Identity()) < 1e-14);
    const Eigen::Vector2cd x = oracle::random_unit(2, rng);
    CHECK((a * x).cwiseAbs2().isApprox((b * x).cwiseAbs2(), 1e-13));
  }
}

TEST_CASE("triangular topology layout") {
  for (std::size_t n : {1u, 2u, 3u, 6u, 9u}) {
    const auto t = MeshTopology::triangular(n);
    CHECK(t.node_count() == n * (n - 1) / 2);
    CHECK(t.gamma_count() == n);
    CHECK(t.is_triangular());
    std::size_t prev_col = 0;
    for (const auto& node : t.nodes()) {
      CHECK(node.column >= prev_col);
      prev_col = node.column;
      CHECK(node.top + 1 < n);
    }
  }
  CHECK_THROWS_AS(MeshTopology(3, {{0, 0, 0, 0}, {0, 1, 1, 1}}, MziVariant::standard), std::invalid_argument);
  CHECK_THROWS_AS(MeshTopology(3, {{0, 2, 0, 0}}, MziVariant::standard), std::invalid_argument);
}

TEST_CASE("mesh phases normalize ranges and validate lengths") {
  MeshPhases p({-0.5, 4.0}, {-1.0, 7.0}, {kTwoPi, 1.0, 2.0});
  CHECK(p.theta()[0] == 0.0);
  CHECK(p.theta()[1] == kPi);
  CHECK(p.phi()[0] == doctest::Approx(kTwoPi - 1.0));
  CHECK(p.phi()[1] == doctest::Approx(7.0 - kTwoPi));
  CHECK(p.gamma()[0] == 0.0);
  CHECK_THROWS_AS(MeshPhases({0.1}, {0.1, 0.2}, {}), std::invalid_argument);
  CHECK_THROWS_AS(MeshPhases({NAN}, {0.1}, {}), std::invalid_argument);
  const auto t = MeshTopology::triangular(3);
  CHECK_THROWS_AS(MeshPhases({0.1}, {0.1}, {0, 0, 0}).check_compatible(t), std::invalid_argument);
}

TEST_CASE("build_unitary matches dense embedding and is unitary") {
  Rng rng(2);
  for (std::size_t n : {2u, 3u, 5u, 8u, 16u, 64u}) {
    for (auto variant : {MziVariant::standard, MziVariant::global_phase}) {
      const auto t = MeshTopology::triangular(n, variant);
      const auto ph = MeshPhases::random(t, rng);
      const auto u = build_unitary(t, ph);
      CHECK(unitarity_deviation(u) < 1e-10);
      if (n <= 16) CHECK(max_abs(u - unitary_by_embedding(t, ph)) < 1e-12);
    }
  }
  const auto t2 = MeshTopology::triangular(2, MziVariant::standard);
  CMatrix cross(2, 2);
  cross << 0, kI, kI, 0;
  CHECK(max_abs(build_unitary(t2, MeshPhases({0}, {0}, {0, 0})) - cross) < 1e-15);
}

TEST_CASE("propagate: forward, transpose law, taps") {
  Rng rng(3);
  for (std::size_t n : {2u, 4u, 7u}) {
    const auto t = MeshTopology::triangular(n);
    const auto ph = MeshPhases::random(t, rng);
    const auto u = build_unitary(t, ph);
    const auto x = oracle::random_unit(n, rng);
    const auto f = propagate(t, ph, x, Direction::forward);
    CHECK((f.output - u * x).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(f.output.squaredNorm() - 1.0) < 1e-12);
    const auto b = propagate(t, ph, x, Direction::backward);
    CHECK((b.output - u.transpose() * x).cwiseAbs().maxCoeff() < 1e-12);

    ModeVector e1 = ModeVector::Zero(n);
    e1[0] = 1;
    const auto round = propagate(t, ph, propagate(t, ph, e1, Direction::forward).output, Direction::backward);
    CHECK((round.output - u.transpose() * u * e1).norm() < 1e-12);

    // Column power conservation: the φ taps of a diagonal's first MZI and
    // all other waveguides carry total power 1. Simplest form: every tap ≤ 1.
    for (auto v : f.taps.theta_fields) CHECK(std::norm(v) <= 1.0 + 1e-12);
  }

  const auto t2 = MeshTopology::triangular(2, MziVariant::standard);
  ModeVector x(2);
  x << 1, 0;
  const auto r = propagate(t2, MeshPhases({kPi}, {0}, {0, 0}), x, Direction::forward);
  CHECK(std::abs(r.output[0] - kI) < 1e-15);
  CHECK(std::abs(r.output[1]) < 1e-15);
  CHECK(std::abs(r.taps.phi_fields[0] - 1.0) < 1e-15);

  CHECK_THROWS_AS(propagate(t2, MeshPhases({kPi}, {0}, {0, 0}), ModeVector::Zero(3), Direction::forward),
                  std::invalid_argument);
}

TEST_CASE("tap fields are the local fields entering each shifter") {
  // Perturbing a shifter by δ changes the output by the tap field times the
  // downstream response; the derivative oracle pins the tap to the shifter
  // input: d y / dφ = i·(downstream)·e^{iφ}·tap.
  Rng rng(4);
  const auto t = MeshTopology::triangular(5);
  const auto ph = MeshPhases::random(t, rng);
  const auto x = oracle::random_unit(5, rng);
  const auto y_aj = oracle::random_unit(5, rng);
  const auto fwd = propagate(t, ph, x, Direction::forward);
  const auto bwd = propagate(t, ph, y_aj, Direction::backward);
  const auto flat = ph.flatten();
  const std::size_t m = t.node_count();
  auto f = [&](const std::vector<double>& p) {
    const ModeVector y = build_unitary(t, ph.with_flat(p)) * x;
    return (y_aj.transpose() * y)(0).real();
  };
  const auto fd = oracle::central_differences(f, flat, 1e-6);
  for (std::size_t i = 0; i < m; ++i) {
    // Re(y_aj · dy) with dy from a shifter imparting sign·dη on the tap field
    const double phi_pred = -(fwd.taps.phi_fields[i] * bwd.taps.phi_fields[i]).imag();
    const double theta_pred = kThetaShifterSign * -(fwd.taps.theta_fields[i] * bwd.taps.theta_fields[i]).imag();
    CHECK(phi_pred == doctest::Approx(fd[m + i]).epsilon(1e-6));
    if (ph.theta()[i] > 1e-3 && ph.theta()[i] < kPi - 1e-3)
      CHECK(theta_pred == doctest::Approx(fd[i]).epsilon(1e-6));
  }
}

TEST_CASE("phases_from_unitary roundtrip") {
  Rng rng(5);
  for (std::size_t n : {2u, 4u, 8u, 16u}) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto u = oracle::haar_unitary(n, rng);
      const auto ph = phases_from_unitary(u);
      for (double th : ph.theta()) CHECK((th >= 0.0 && th <= kPi));
      CHECK(max_abs(build_unitary(MeshTopology::triangular(n), ph) - u) < 1e-9);
    }
  }
  const auto f = oracle::dft(4);
  const auto rebuilt = build_unitary(MeshTopology::triangular(4), phases_from_unitary(f));
  CHECK(max_abs(rebuilt - f) < 1e-10);
  const double fid = 1.0 - std::norm((rebuilt.adjoint() * f).trace() / 4.0);
  CHECK(std::abs(fid) < 1e-12);

  CMatrix one(1, 1);
  one(0, 0) = std::polar(1.0, 0.7);
  const auto p1 = phases_from_unitary(one);
  CHECK(p1.theta().empty());
  CHECK(p1.gamma()[0] == doctest::Approx(0.7));

  CMatrix bad = CMatrix::Identity(3, 3) * 1.1;
  CHECK_THROWS_AS(phases_from_unitary(bad), NumericalError);

  // Permutation and identity matrices exercise the tie-breaking branches.
  CHECK(max_abs(build_unitary(MeshTopology::triangular(5), phases_from_unitary(CMatrix::Identity(5, 5))) -
                CMatrix::Identity(5, 5)) < 1e-12);
  CMatrix perm = CMatrix::Zero(4, 4);
  perm(0, 2) = perm(1, 0) = perm(2, 3) = perm(3, 1) = 1;
  CHECK(max_abs(build_unitary(MeshTopology::triangular(4), phases_from_unitary(perm)) - perm) < 1e-12);
}

TEST_CASE("phases_from_unitary honours the standard variant") {
  Rng rng(6);
  const auto u = oracle::haar_unitary(5, rng);
  const auto ph = phases_from_unitary(u, MziVariant::standard);
  CHECK(max_abs(build_unitary(MeshTopology::triangular(5, MziVariant::standard), ph) - u) < 1e-9);
}

TEST_CASE("route_to_mzi delivers all power to every MZI") {
  const auto t = MeshTopology::triangular(6);
  ModeVector e0 = ModeVector::Zero(6);
  e0[0] = 1;
  for (std::size_t k = 0; k < t.node_count(); ++k) {
    const auto route = route_to_mzi(t, k);
    const auto p = propagate(t, route, e0, Direction::forward);
    CHECK(std::norm(p.taps.phi_fields[t.nodes()[k].phi_index]) > 1 - 1e-9);
  }
  const auto first = route_to_mzi(t, 0);
  for (double th : first.theta()) CHECK(th == kPi);
  CHECK_THROWS_AS(route_to_mzi(t, t.node_count()), std::invalid_argument);
}
