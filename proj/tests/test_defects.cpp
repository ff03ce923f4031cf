#include <doctest.h>

#include "acclab/defects.hpp"

#include <Eigen/Dense>

#include <random>

using namespace acclab;

namespace {

VectorXd random_field(std::int64_t n, std::mt19937& rng) {
  std::uniform_real_distribution<double> U(-1, 1);
  VectorXd u(n);
  for (auto& x : u) x = U(rng);
  return u;
}

std::vector<Vec2i> superlattice(int N, int d, bool pairs) {
  std::vector<Vec2i> v;
  for (int a = 0; a < N; a += d)
    for (int b = 0; b < N; b += d) {
      v.push_back({a, b});
      if (pairs) v.push_back({a + 1, b});
    }
  return v;
}

// Dense bond loop in cartesian coordinates; values on the full cell indexed by lattice index.
double full_nn_energy(const PeriodicCell& cell, const VectorXd& w) {
  double e = 0;
  for (std::int64_t idx = 0; idx < cell.size(); ++idx)
    for (int k = 0; k < 6; ++k) {
      const Vec2i r = nn_direction(k);
      const std::int64_t t = cell.index(cell.site(idx) + r);
      const Vec2 rc = to_cartesian(r);
      e += 0.5 * std::pow(rc.dot(w.segment<2>(2 * t) - w.segment<2>(2 * idx)), 2);
    }
  return e;
}

}  // namespace

TEST_CASE("exact single-vacancy blocks") {
  const auto res = analytic_single_vacancy_index();
  REQUIRE(res.cases.size() == 6);
  using R = QSqrt3::Rational;
  for (const auto& c : res.cases) {
    CAPTURE(c.k);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(c.A[i][j] == c.A[j][i]);
        CHECK(c.B[i][j] == c.B[j][i]);
      }
    QSqrt3 p0, p1;
    switch (std::abs(c.k)) {
      case 0: p0 = 72 * 4, p1 = -72 * 3; break;
      case 1: p0 = 24 * 24, p1 = -24 * 5; break;
      case 2: p0 = 6 * 2, p1 = -6 * 5; break;
      default: p0 = 4 * 9, p1 = -4 * 11; break;
    }
    CHECK(c.p0 == p0);
    CHECK(c.p1 == p1);
    if (!c.kernel.empty()) {
      for (std::size_t i = 0; i < 6; ++i) {
        QSqrt3 s(0);
        for (std::size_t j = 0; j < 6; ++j) s = s + c.A[i][j] * c.kernel[j];
        CHECK(s.is_zero());
      }
      CHECK(exact_determinant(c.A).is_zero());
    } else {
      CHECK_FALSE(exact_determinant(c.A).is_zero());
    }
  }
  CHECK(res.cases[0].lambda == QSqrt3(R(2, 5)));
  CHECK(res.cases[1].lambda == QSqrt3(R(24, 5)));
  CHECK(res.cases[2].lambda == QSqrt3(R(4, 3)));
  CHECK(res.cases[5].lambda == QSqrt3(R(9, 11)));
  CHECK(res.kappa == QSqrt3(R(2, 7)));
  CHECK(res.kappa.str() == "2/7");
}

TEST_CASE("Q(sqrt 3) arithmetic") {
  const QSqrt3 x(1, 1), y(2, -1);
  CHECK(x * y == QSqrt3(-1, 1));
  CHECK((x / y) * y == x);
  CHECK(QSqrt3(0, 1) * QSqrt3(0, 1) == QSqrt3(3));
  CHECK(QSqrt3(0, 1).to_double() == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
  CHECK_THROWS(x / QSqrt3(0));
}

TEST_CASE("axial forms match a dense bond loop") {
  const auto d = build_domain(8, {{0, 0}, {3, 5}});
  std::mt19937 rng(3);
  const VectorXd u = random_field(2 * d.num_sites(), rng);
  const VectorXd v = random_field(2 * static_cast<std::int64_t>(d.vacancies().size()), rng);
  const VectorXd w = assemble_full(d, u, v);
  CHECK(phi_full(d, u, v) == doctest::Approx(full_nn_energy(d.cell(), w)).epsilon(1e-12));
  // bonds between sites only: zero out everything touching a vacancy by subtraction
  double touching = 0;
  for (const auto& x : d.vacancies())
    for (int k = 0; k < 6; ++k) {
      const Vec2i y = x + nn_direction(k);
      const double s = to_cartesian(nn_direction(k)).dot(w.segment<2>(2 * d.lattice_index(y)) -
                                                         w.segment<2>(2 * d.lattice_index(x)));
      touching += d.is_vacancy(y) ? 0.5 * s * s : s * s;
    }
  CHECK(phi_sites(d, u) == doctest::Approx(full_nn_energy(d.cell(), w) - touching).epsilon(1e-12));
}

TEST_CASE("extension operator") {
  const auto d = build_domain(12, superlattice(12, 4, true));
  const ExtensionOperator E(d);
  const auto nv = static_cast<std::int64_t>(d.vacancies().size());
  CHECK(E.matrix().rows() == 2 * nv);
  CHECK(E.matrix().cols() == 2 * d.num_sites());
  std::mt19937 rng(11);

  SUBCASE("linear") {
    const VectorXd u = random_field(2 * d.num_sites(), rng), w = random_field(2 * d.num_sites(), rng);
    CHECK((E.apply(2.5 * u - w) - (2.5 * E.apply(u) - E.apply(w))).norm() < 1e-12);
  }
  SUBCASE("optimal: vacancy gradient vanishes") {
    const VectorXd u = random_field(2 * d.num_sites(), rng);
    const VectorXd v = E.apply(u);
    const double h = 1e-5;
    for (std::int64_t k = 0; k < 2 * nv; ++k) {
      VectorXd vp = v, vm = v;
      vp(k) += h;
      vm(k) -= h;
      const double g = (phi_full(d, u, vp) - phi_full(d, u, vm)) / (2 * h);
      CHECK(std::abs(g) < 1e-8);
    }
  }
  SUBCASE("reproduces constant and locally affine fields") {
    Mat2 G;
    G << 0.3, -0.2, 0.7, 0.1;
    VectorXd u(2 * d.num_sites());
    for (std::int64_t s = 0; s < d.num_sites(); ++s) u.segment<2>(2 * s) = Vec2(1.5, -0.5);
    const VectorXd v = E.apply(u);
    for (std::int64_t k = 0; k < nv; ++k) CHECK((v.segment<2>(2 * k) - Vec2(1.5, -0.5)).norm() < 1e-12);
    // a locally affine field around an isolated vacancy is reproduced exactly
    const auto d1 = build_domain(12, {{6, 6}});
    VectorXd u1(2 * d1.num_sites());
    for (std::int64_t s = 0; s < d1.num_sites(); ++s) u1.segment<2>(2 * s) = G * to_cartesian(d1.site(s));
    CHECK((ExtensionOperator(d1).apply(u1) - G * to_cartesian({6, 6})).norm() < 1e-12);
  }
  SUBCASE("beats the averaging extension") {
    for (int t = 0; t < 50; ++t) {
      const VectorXd u = random_field(2 * d.num_sites(), rng);
      CHECK(phi_full(d, u, E.apply(u)) <= phi_full(d, u, averaging_extension(d, u)) + 1e-12);
    }
  }
}

TEST_CASE("stability index") {
  SUBCASE("no vacancies") {
    const auto r = stability_index(build_domain(8, {}));
    CHECK(r.kappa == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("quotient at the mode") {
    const auto d = build_domain(12, superlattice(12, 4, false));
    const auto r = stability_index(d);
    const ExtensionOperator E(d);
    const double q = phi_sites(d, r.mode) / phi_full(d, r.mode, E.apply(r.mode));
    CHECK(std::abs(q - r.kappa) < 1e-8);
    CHECK(std::abs(r.quotient - r.kappa) < 1e-8);
    CHECK(r.kappa <= 1.0);
    CHECK(r.kappa >= 2.0 / 7.0 - 1e-3);
  }
  SUBCASE("dense oracle") {
    // Independent route: explicit embedding P u = (u on sites, E u on vacancies), then
    // the Cholesky-reduced symmetric eigenproblem on the complement of translations.
    const auto d = build_domain(8, {{0, 0}, {1, 0}, {4, 3}});
    const std::int64_t n = 2 * d.num_sites();
    const ExtensionOperator E(d);
    Eigen::MatrixXd P(2 * d.cell().size(), n), A(n, n), B(n, n);
    for (std::int64_t c = 0; c < n; ++c) {
      VectorXd e = VectorXd::Zero(n);
      e(c) = 1;
      P.col(c) = assemble_full(d, e, E.apply(e));
    }
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j <= i; ++j) {
        VectorXd ei = VectorXd::Zero(n), ej = VectorXd::Zero(n);
        ei(i) = 1;
        ej(j) = 1;
        A(i, j) = A(j, i) = 0.5 * (phi_sites(d, ei + ej) - phi_sites(d, ei) - phi_sites(d, ej));
        B(i, j) = B(j, i) = 0.5 * (full_nn_energy(d.cell(), P * (ei + ej)) - full_nn_energy(d.cell(), P * ei) -
                                   full_nn_energy(d.cell(), P * ej));
      }
    // orthonormal basis of the translation complement
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n, 2);
    for (std::int64_t s = 0; s < n / 2; ++s) T(2 * s, 0) = T(2 * s + 1, 1) = 1;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(T);
    const Eigen::MatrixXd Z = (qr.householderQ() * Eigen::MatrixXd::Identity(n, n)).rightCols(n - 2);
    const Eigen::MatrixXd Az = Z.transpose() * A * Z, Bz = Z.transpose() * B * Z;
    const Eigen::LLT<Eigen::MatrixXd> llt(Bz);
    const Eigen::MatrixXd L = llt.matrixL();
    const Eigen::MatrixXd C = L.triangularView<Eigen::Lower>().solve(
        L.triangularView<Eigen::Lower>().solve(Az).transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (C + C.transpose()));
    CHECK(stability_index(d).kappa == doctest::Approx(es.eigenvalues()(0)).epsilon(1e-9));
  }
}
