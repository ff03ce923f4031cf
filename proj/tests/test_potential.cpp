#include <doctest.h>

#include "acclab/potential.hpp"
#include "oracles.hpp"

#include <random>

using namespace acclab;

TEST_CASE("Lennard-Jones derivatives against hand-written forms") {
  const auto lj = PairPotential::lennard_jones();
  for (double s : {0.8, 0.95, 1.0, 1.1087, 1.5, 2.7}) {
    CHECK(lj.value(s) == doctest::Approx(oracle::lj(s)).epsilon(1e-14));
    CHECK(lj.d1(s) == doctest::Approx(oracle::lj1(s)).epsilon(1e-13));
    CHECK(lj.d2(s) == doctest::Approx(oracle::lj2(s)).epsilon(1e-13));
    const double h = 1e-5;
    CHECK(lj.d3(s) == doctest::Approx((oracle::lj2(s + h) - oracle::lj2(s - h)) / (2 * h)).epsilon(1e-6));
  }
  const auto e = phi_value_grad_hess(lj, Vec2(1, 0));
  CHECK(e.value == doctest::Approx(-1.0));
  CHECK(e.grad.norm() < 1e-14);
  CHECK(e.hess(0, 0) == doctest::Approx(72.0));
  CHECK(std::abs(e.hess(1, 1)) < 1e-13);
  CHECK(std::abs(e.hess(0, 1)) < 1e-14);
  CHECK_THROWS_AS(phi_value_grad_hess(lj, Vec2(1e-9, 0)), SingularityError);
}

TEST_CASE("pair Hessian eigenstructure and finite differences") {
  for (const auto& pot : {PairPotential::lennard_jones(), PairPotential::morse()}) {
    const auto e = phi_value_grad_hess(pot, Vec2(1.3, 0));
    CHECK(e.hess(0, 0) == doctest::Approx(pot.d2(1.3)));
    CHECK(e.hess(1, 1) == doctest::Approx(pot.d1(1.3) / 1.3));
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> L(0.8, 3.0), A(0, 2 * M_PI);
    double worst_g = 0, worst_h = 0;
    for (int k = 0; k < 100; ++k) {
      const double l = L(rng), a = A(rng);
      const Vec2 r(l * std::cos(a), l * std::sin(a));
      const auto E = phi_value_grad_hess(pot, r);
      const double h = 1e-5;
      for (int c = 0; c < 2; ++c) {
        Vec2 dr = Vec2::Zero();
        dr(c) = h;
        const double fd = (pot.value((r + dr).norm()) - pot.value((r - dr).norm())) / (2 * h);
        worst_g = std::max(worst_g, std::abs(fd - E.grad(c)) / std::max(1.0, std::abs(E.grad(c))));
        const Vec2 gd = (phi_value_grad_hess(pot, r + dr).grad - phi_value_grad_hess(pot, r - dr).grad) / (2 * h);
        worst_h = std::max(worst_h, (gd - E.hess.col(c)).cwiseAbs().maxCoeff() / std::max(1.0, E.hess.cwiseAbs().maxCoeff()));
      }
    }
    CHECK(worst_g < 1e-7);
    CHECK(worst_h < 1e-6);
  }
}

TEST_CASE("Cauchy-Born density") {
  const auto lj = PairPotential::lennard_jones();
  const auto orb = orbit_decomposition(3.1);
  const double W = cauchy_born_density(lj, Mat2::Identity(), orb);
  CHECK(W == doctest::Approx(oracle::lj_site_sum_31() / (std::sqrt(3.0) / 2)).epsilon(1e-13));
  CHECK(W == doctest::Approx(-7.7464).epsilon(1e-4));

  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-0.1, 0.1), a(0, 2 * M_PI);
  for (int k = 0; k < 100; ++k) {
    Mat2 F = Mat2::Identity();
    F(0, 0) += u(rng);
    F(0, 1) += u(rng);
    F(1, 0) += u(rng);
    F(1, 1) += u(rng);
    const double th = a(rng);
    Mat2 Q;
    Q << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    const double w = cauchy_born_density(lj, F, orb);
    CHECK(std::abs(cauchy_born_density(lj, Q * F, orb) - w) <= 1e-12 * std::abs(w));
    CHECK(std::abs(cauchy_born_density(lj, F * q6(), orb) - w) <= 1e-12 * std::abs(w));
  }
  Mat2 bad = Mat2::Zero();
  bad(0, 0) = 1;
  CHECK_THROWS_AS(cauchy_born_density(lj, bad, orb), SingularityError);

  // stress is the derivative of W
  Mat2 F;
  F << 1.02, 0.03, -0.01, 0.97;
  const Mat2 S = cauchy_born_stress(lj, F, orb);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      Mat2 dF = Mat2::Zero();
      dF(i, j) = 1e-6;
      const double fd = (cauchy_born_density(lj, F + dF, orb) - cauchy_born_density(lj, F - dF, orb)) / 2e-6;
      CHECK(S(i, j) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("decay moduli") {
  const auto lj = PairPotential::lennard_jones();
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 3; ++k) {
    prev = std::numeric_limits<double>::infinity();
    for (double s = 0.9; s <= 4.0; s += 1e-2) {
      const double m = decay_modulus(lj, k, s);
      CHECK(m >= 0.0);
      CHECK(m <= prev * (1 + 1e-12));
      prev = m;
    }
  }
  // grid oracle for M1(1): max |phi'| on t >= 1 sits at the inflection (13/7)^(1/6)
  double best = 0, arg = 0;
  for (double t = 1.0; t < 5.0; t += 1e-4)
    if (std::abs(oracle::lj1(t)) > best) {
      best = std::abs(oracle::lj1(t));
      arg = t;
    }
  CHECK(arg == doctest::Approx(std::pow(13.0 / 7.0, 1.0 / 6.0)).epsilon(1e-3));
  CHECK(decay_modulus(lj, 1, 1.0) == doctest::Approx(best).epsilon(1e-6));
  CHECK(decay_modulus(lj, 1, 2.5) == doctest::Approx(std::abs(lj.d1(2.5))));
  CHECK(decay_modulus(lj, 2, 15.0) < 1e-5);
}

TEST_CASE("potential scaling") {
  const auto lj = PairPotential::lennard_jones();
  const auto lj2 = lj.scaled(2.0);
  CHECK(lj2.d2(1.2) == doctest::Approx(2 * lj.d2(1.2)));
  const auto m = PairPotential::morse(4.0);
  CHECK(m.value(1.0) == doctest::Approx(-1.0));
  CHECK(std::abs(m.d1(1.0)) < 1e-14);
  CHECK(m.d2(1.0) == doctest::Approx(32.0));
}
