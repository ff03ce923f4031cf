#include <doctest.h>

#include "acclab/defects.hpp"
#include "acclab/stability.hpp"
#include "oracles.hpp"

#include <random>

using namespace acclab;

namespace {

const PairPotential kLJ = PairPotential::lennard_jones();

std::shared_ptr<const CoupledMesh> graded(std::int64_t N, std::int64_t K, double hK, std::vector<Vec2i> vac = {}) {
  const auto dom = build_hex_domain(N, vac);
  return std::make_shared<const CoupledMesh>(build_graded_mesh(dom, MeshPlan{K, hK, 1.5, MeshFamily::Algebraic}));
}

}  // namespace

TEST_CASE("shell constants at the reference stretch") {
  const auto s = shell_constants(kLJ, 1.0, 1.0);
  REQUIRE(s.lengths.size() == 6);
  CHECK(s.c[0] == doctest::Approx(72.0).epsilon(1e-14));
  CHECK(s.c_perp[0] == doctest::Approx(0.0));
  CHECK(s.c[1] == doctest::Approx(3 * oracle::lj2(std::sqrt(3.0))).epsilon(1e-12));
  CHECK(s.c[1] == doctest::Approx(-2.897).epsilon(1e-3));
  double sum = 0, sum_p = 0;
  for (double l : s.lengths) {
    sum += l == 1.0 ? oracle::lj2(1) : std::min(0.0, l * l * oracle::lj2(l));
    sum_p += l == 1.0 ? oracle::lj1(1) : std::min(0.0, l * oracle::lj1(l));
  }
  CHECK(s.c_sum == doctest::Approx(sum).epsilon(1e-12));
  CHECK(s.c_perp_sum == doctest::Approx(sum_p).epsilon(1e-12));
  CHECK(s.c_sum == doctest::Approx(67.23).epsilon(1e-4));
  for (std::size_t n = 1; n < s.c.size(); ++n) {
    CHECK(s.c[n] <= 0);
    CHECK(s.c_perp[n] <= 0);
  }
  const auto C = scaled_shell_constants(s, false);
  CHECK(C[1] == doctest::Approx(oracle::lj2(std::sqrt(3.0)) / 3).epsilon(1e-12));
}

TEST_CASE("gamma_hom") {
  CHECK(gamma_hom(kLJ, 1, 1) == doctest::Approx(0.75 * shell_constants(kLJ, 1, 1).c_sum).epsilon(1e-14));
  CHECK(gamma_hom(kLJ, 1, 1) == doctest::Approx(50.42).epsilon(1e-3));
  CHECK(gamma_hom(kLJ.scaled(2.0), 0.97, 1.03) == doctest::Approx(2 * gamma_hom(kLJ, 0.97, 1.03)).epsilon(1e-12));
  // sign change along the stretch ray m = M = s
  CHECK(gamma_hom(kLJ, 1.0, 1.0) > 0);
  CHECK(gamma_hom(kLJ, 1.2, 1.2) < 0);
}

TEST_CASE("interval minimisation matches a fine scan") {
  const auto f = [](double s) { return std::sin(7 * s) + 0.3 * s * s; };
  double fine = f(0.5);
  for (int k = 0; k <= 2000000; ++k) fine = std::min(fine, f(0.5 + 1.5 * k / 2000000.0));
  CHECK(minimize_on_interval(f, 0.5, 2.0) == doctest::Approx(fine).epsilon(1e-10));
  CHECK(minimize_on_interval(f, 0.7, 0.7) == f(0.7));
  CHECK_THROWS(minimize_on_interval(f, 1.0, 0.9));
}

TEST_CASE("gamma collapses and degrades monotonically") {
  const auto r = gamma(kLJ, 0.98, 1.02, 0.0, 1.0);
  CHECK(r.gamma == doctest::Approx(r.gamma_hom).epsilon(1e-13));
  CHECK(r.tail_computed);
  CHECK(r.tail_bound > 0);
  CHECK(r.tail_bound < 0.05 * std::abs(r.gamma));
  const auto s = shell_constants(kLJ, 0.99, 1.01);
  for (double kappa : {1.0, 2.0 / 7.0, 0.5}) {
    double prev = gamma(s, 0.0, kappa).gamma;
    for (int k = 1; k <= 50; ++k) {
      const double d = std::sqrt(kappa) / 2 * k / 50;
      const double g = gamma(s, d, kappa).gamma;
      CHECK(g <= prev + 1e-12);
      prev = g;
    }
  }
  CHECK_THROWS_AS(gamma(s, 0.3, 2.0 / 7.0), OutOfTheoryError);
  CHECK(gamma(s, 0.0, 2.0 / 7.0).gamma < gamma(s, 0.0, 1.0).gamma);
}

TEST_CASE("printed gamma formulas equal the optimised splitting") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> U(0, 1);
  for (int t = 0; t < 40; ++t) {
    const double m = 0.9 + 0.15 * U(rng), M = m + 0.1 * U(rng);
    const double kappa = 0.2 + 0.8 * U(rng);
    const double delta = std::sqrt(kappa) / 2 * U(rng);
    const auto s = shell_constants(kLJ, m, M);
    const auto r = gamma(s, delta, kappa);
    const auto [a, ap] = optimal_splitting(s, delta, kappa);
    const auto g = gamma_terms_with_splitting(s, delta, kappa, a, ap);
    const double tol = 1e-10 * (1 + std::abs(s.c[0]));
    CHECK(std::abs(g.gamma1 - r.gamma1) < tol);
    CHECK(std::abs(g.gamma1_perp - r.gamma1_perp) < tol);
    CHECK(std::abs(g.gamma2 - r.gamma2) < tol);
    CHECK(std::abs(g.gamma2_perp - r.gamma2_perp) < tol);
    // any other splitting gives a smaller gamma_1 and gamma_1_perp
    std::vector<double> b = a, bp = ap;
    for (auto& x : b) x = 0.01 + U(rng);
    for (auto& x : bp) x = 0.01 + U(rng);
    const auto h = gamma_terms_with_splitting(s, delta, kappa, b, bp);
    CHECK(h.gamma1 <= r.gamma1 + tol);
    CHECK(h.gamma1_perp <= r.gamma1_perp + tol);
  }
}

TEST_CASE("deformation classifier") {
  const auto mesh = graded(16, 4, 1.0, {});
  Mat2 B = Mat2::Zero();
  B(0, 0) = 1.02;
  B(1, 1) = 0.97;
  const CoupledModel c(mesh, kLJ, B);
  VectorXd u = VectorXd::Zero(c.num_dofs());
  const auto h = classify_deformation(c, u);
  CHECK(h.delta < 1e-14);
  CHECK(h.mu_c == doctest::Approx(0.97).epsilon(1e-14));
  CHECK(h.m == doctest::Approx(0.97).epsilon(1e-14));
  CHECK(h.M == doctest::Approx(1.02).epsilon(1e-14));
  CHECK(h.mu_a >= 0.97 - 1e-14);
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> U(-1, 1);
  for (auto& x : u) x = 1e-4 * U(rng);
  const auto p = classify_deformation(c, u);
  CHECK(p.delta > 1e-6);
  CHECK(p.delta < 1e-2);
  CHECK(p.m <= p.M);
}

TEST_CASE("lowest Hessian eigenvalue") {
  const auto dom = std::make_shared<const LatticeDomain>(build_domain(12, {{0, 0}}));
  SUBCASE("Lanczos agrees with the dense solve") {
    Mat2 B = Mat2::Identity();
    B(1, 1) = 1.04;
    const AtomisticModel a(dom, kLJ, B);
    const SparseMatrix H = a.hessian(VectorXd::Zero(a.num_dofs()));
    const auto d = lowest_hessian_eigenvalue(H, 1e-10, 1 << 30);
    const auto l = lowest_hessian_eigenvalue(H, 1e-10, 0);
    CHECK(d.dense);
    CHECK_FALSE(l.dense);
    CHECK(l.value == doctest::Approx(d.value).epsilon(1e-8));
    const auto T = translation_basis(a.num_points());
    CHECK(std::abs(l.vector.dot(T[0])) < 1e-10);
    CHECK(std::abs(l.vector.dot(T[1])) < 1e-10);
  }
  SUBCASE("indefinite Hessian") {
    Mat2 B = Mat2::Identity();
    B(1, 1) = 1.15;
    const AtomisticModel a(dom, kLJ, B);
    const SparseMatrix H = a.hessian(VectorXd::Zero(a.num_dofs()));
    const auto d = lowest_hessian_eigenvalue(H, 1e-10, 1 << 30);
    const auto l = lowest_hessian_eigenvalue(H, 1e-10, 0);
    CHECK(d.value < 0);
    CHECK(l.value == doctest::Approx(d.value).epsilon(1e-8));
  }
  SUBCASE("translations are excluded") {
    const auto r = lowest_hessian_eigenvalue(AtomisticModel(std::make_shared<const LatticeDomain>(build_domain(8, {})), kLJ)
                                                 .hessian(VectorXd::Zero(128)));
    CHECK(r.value > 1e-3);
  }
}

TEST_CASE("Bloch symbol lowest eigenvalue matches the dense Hessian") {
  for (double t : {0.0, 0.05, 0.1}) {
    Mat2 B;
    B << 1 + t / 2, 0.1 * t, 0, 1 + t;
    const AtomisticModel a(std::make_shared<const LatticeDomain>(build_domain(8, {})), kLJ, B);
    const auto d = lowest_hessian_eigenvalue(a.hessian(VectorXd::Zero(a.num_dofs())));
    CHECK(bloch_lowest_eigenvalue(kLJ, B, 8) == doctest::Approx(d.value).epsilon(1e-9));
  }
  CHECK(legendre_hadamard_constant(kLJ, Mat2::Identity()) > 0);
}

TEST_CASE("coercivity bound holds on sampled deformations") {
  const auto mesh = graded(16, 4, 1.0, {{0, 0}});
  const auto dom = mesh->domain();
  const double kappa = stability_index(dom).kappa;
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> U(-1, 1);
  const CoupledModel c(mesh, kLJ, Mat2::Identity());
  int checked = 0;
  for (int t = 0; t < 4; ++t) {
    VectorXd u(c.num_dofs());
    for (auto& x : u) x = 2e-3 * U(rng);
    const auto h = classify_deformation(c, u);
    if (h.delta > std::sqrt(kappa) / 2) continue;
    const auto r = gamma(kLJ, h.m, h.M, h.delta, kappa, false);
    if (r.gamma <= 0) continue;
    ++checked;
    const SparseMatrix H = c.hessian(u);
    const SparseMatrix S = c.stiffness(true);
    for (int k = 0; k < 20; ++k) {
      VectorXd v(c.num_dofs());
      for (auto& x : v) x = U(rng);
      v = project_out_translations(v);
      CHECK(v.dot(H * v) / v.dot(S * v) >= r.gamma - 1e-8);
    }
  }
  CHECK(checked > 0);
}
