#include <doctest.h>

#include "acclab/assembly.hpp"
#include "oracles.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <random>

using namespace acclab;

namespace {

VectorXd random_field(std::int64_t n, double amp, std::mt19937& rng) {
  std::uniform_real_distribution<double> U(-amp, amp);
  VectorXd u(n);
  for (auto& x : u) x = U(rng);
  return u;
}

Mat2 random_strain(std::mt19937& rng, double amp) {
  std::uniform_real_distribution<double> U(-amp, amp);
  Mat2 B = Mat2::Identity();
  B(0, 0) += U(rng);
  B(0, 1) += U(rng);
  B(1, 0) += U(rng);
  B(1, 1) += U(rng);
  return B;
}

std::shared_ptr<const CoupledMesh> graded(std::int64_t N, std::int64_t K, double hK, std::vector<Vec2i> vac = {}) {
  const auto dom = build_hex_domain(N, vac);
  return std::make_shared<const CoupledMesh>(build_graded_mesh(dom, MeshPlan{K, hK, 1.5, MeshFamily::Algebraic}));
}

double fd_gradient_error(const EnergyModel& m, const VectorXd& u, std::mt19937& rng) {
  const VectorXd g = m.gradient(u);
  std::uniform_int_distribution<std::int64_t> pick(0, m.num_dofs() - 1);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto i = pick(rng);
    const double h = 1e-6;
    VectorXd up = u, um = u;
    up(i) += h;
    um(i) -= h;
    const double fd = (m.energy(up) - m.energy(um)) / (2 * h);
    worst = std::max(worst, std::abs(fd - g(i)) / std::max(1.0, g.lpNorm<Eigen::Infinity>()));
  }
  return worst;
}

double fd_hessian_error(const EnergyModel& m, const VectorXd& u, std::mt19937& rng) {
  const SparseMatrix H = m.hessian(u);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    VectorXd v = random_field(m.num_dofs(), 1.0, rng);
    v /= v.norm();
    const double h = 1e-6;
    const VectorXd fd = (m.gradient(u + h * v) - m.gradient(u - h * v)) / (2 * h);
    const VectorXd Hv = H * v;
    worst = std::max(worst, (fd - Hv).norm() / std::max(1.0, Hv.norm()));
  }
  return worst;
}

}  // namespace

TEST_CASE("atomistic energy of the reference lattice") {
  const auto dom = std::make_shared<const LatticeDomain>(build_domain(8, {}));
  const AtomisticModel m(dom, PairPotential::lennard_jones());
  const VectorXd u = VectorXd::Zero(m.num_dofs());
  CHECK(m.energy(u) == doctest::Approx(64 * oracle::lj_site_sum_31()).epsilon(1e-13));
  VectorXd g = m.gradient(u);
  // the unit lattice is not an equilibrium of the truncated potential but forces cancel by symmetry
  CHECK(g.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("atomistic translation invariance and vacancy bonds") {
  std::mt19937 rng(3);
  const auto full = std::make_shared<const LatticeDomain>(build_domain(8, {}));
  const auto vac = std::make_shared<const LatticeDomain>(build_domain(8, {{3, 4}}));
  const Mat2 B = random_strain(rng, 0.02);
  const AtomisticModel mf(full, PairPotential::lennard_jones(), B);
  const AtomisticModel mv(vac, PairPotential::lennard_jones(), B);
  const VectorXd uf = random_field(mf.num_dofs(), 0.05, rng);
  VectorXd shifted = uf;
  for (std::int64_t p = 0; p < mf.num_points(); ++p) shifted.segment<2>(2 * p) += Vec2(0.3, -0.7);
  CHECK(mf.energy(shifted) == doctest::Approx(mf.energy(uf)).epsilon(1e-12));
  const VectorXd g = mf.gradient(uf);
  double sx = 0, sy = 0;
  for (std::int64_t p = 0; p < mf.num_points(); ++p) {
    sx += g(2 * p);
    sy += g(2 * p + 1);
  }
  CHECK(std::abs(sx) < 1e-10);
  CHECK(std::abs(sy) < 1e-10);

  // restrict the field to L and compare with the bonds incident to the removed site
  VectorXd uv(mv.num_dofs());
  for (std::int64_t s = 0; s < vac->num_sites(); ++s)
    uv.segment<2>(2 * s) = uf.segment<2>(2 * full->site_index(vac->site(s)));
  const std::int64_t x = full->site_index({3, 4});
  double incident = 0.0;
  for (const auto& d : orbit_decomposition(3.1).directions()) {
    const std::int64_t t = full->site_index(Vec2i{3, 4} + d.ij);
    const Vec2 D = B * d.r + uf.segment<2>(2 * t) - uf.segment<2>(2 * x);
    incident += 2 * oracle::lj(D.norm());
  }
  CHECK(mf.energy(uf) - mv.energy(uv) == doctest::Approx(incident).epsilon(1e-11));
}

TEST_CASE("atomistic Hessian matches the Bloch symbol") {
  std::mt19937 rng(5);
  const auto dom = std::make_shared<const LatticeDomain>(build_domain(8, {}));
  const Mat2 B = random_strain(rng, 0.02);
  const AtomisticModel m(dom, PairPotential::lennard_jones(), B);
  const Eigen::MatrixXd H(m.hessian(VectorXd::Zero(m.num_dofs())));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  const auto ref = oracle::bloch_spectrum(B, 8, 3.1);
  REQUIRE(ref.size() == static_cast<std::size_t>(es.eigenvalues().size()));
  double worst = 0;
  for (std::size_t k = 0; k < ref.size(); ++k) worst = std::max(worst, std::abs(ref[k] - es.eigenvalues()(static_cast<Eigen::Index>(k))));
  CHECK(worst < 1e-9);
  CHECK(std::abs(es.eigenvalues()(0)) < 1e-9);
  CHECK(std::abs(es.eigenvalues()(1)) < 1e-9);
}

TEST_CASE("bond form equals atomistic energy when the atomistic region is the whole cell") {
  std::mt19937 rng(7);
  const auto dom = build_hex_domain(6, {{0, 0}});
  const auto mesh = std::make_shared<const CoupledMesh>(micro_triangulation(dom, Region::Atomistic));
  const Mat2 B = random_strain(rng, 0.03);
  const CoupledModel c(mesh, PairPotential::lennard_jones(), B);
  const AtomisticModel a(std::make_shared<const LatticeDomain>(dom), PairPotential::lennard_jones(), B);
  REQUIRE(c.num_points() == a.num_points());
  const VectorXd ua = random_field(a.num_dofs(), 0.05, rng);
  const VectorXd uc = interpolate_nodal(a, ua, c);
  CHECK(c.energy(uc) == doctest::Approx(a.energy(ua)).epsilon(1e-12));
  CHECK(c.num_continuum_bonds() == 0);
  const auto p = c.energy_practical(uc);
  CHECK(p.continuum == 0.0);
  CHECK(p.interface == 0.0);
}

TEST_CASE("bond form equals practical form on graded meshes") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 4; ++trial) {
    const std::int64_t K = trial % 2 == 0 ? 6 : 4;
    const auto mesh = graded(24, K, trial < 2 ? 1.0 : 2.0, {{0, 0}});
    const CoupledModel c(mesh, PairPotential::lennard_jones(), random_strain(rng, 0.03));
    const VectorXd u = random_field(c.num_dofs(), 0.05, rng);
    const auto bf = c.energy_bond_form(u);
    const auto pf = c.energy_practical(u);
    CHECK(std::abs(bf.total - pf.total) <= 1e-9 * (1 + std::abs(bf.total)));
    CHECK(bf.atomistic == pf.atomistic);
    CHECK(bf.total == doctest::Approx(bf.atomistic + bf.continuum).epsilon(1e-12));
    CHECK(pf.total == doctest::Approx(pf.atomistic + pf.continuum + pf.interface).epsilon(1e-12));
    CHECK(c.energy(u) == doctest::Approx(bf.total).epsilon(1e-12));
  }
}

TEST_CASE("bond integral weights realise the bond density") {
  const auto mesh = graded(16, 4, 1.0);
  const CoupledModel c(mesh, PairPotential::lennard_jones());
  const std::size_t nh = c.half_directions().size();
  double worst = 0.0;
  for (std::size_t t = 0; t < mesh->triangles().size(); ++t) {
    const auto& T = mesh->triangles()[t];
    if (T.region != Region::Continuum) continue;
    for (std::size_t h = 0; h < nh; ++h)
      worst = std::max(worst, std::abs(c.omega()[t * nh + h] + c.iota()[t * nh + h] - T.area / kDetA6));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("interface correction is nonpositive for a positive potential") {
  // repulsive r^-12: phi > 0 everywhere
  const auto pot = PairPotential::custom(
      "repulsive", [](double s) { return std::pow(s, -12); }, [](double s) { return -12 * std::pow(s, -13); },
      [](double s) { return 156 * std::pow(s, -14); });
  const CoupledModel c(graded(16, 4, 1.0), pot);
  const auto pf = c.energy_practical(VectorXd::Zero(c.num_dofs()));
  CHECK(pf.interface <= 0.0);
}

TEST_CASE("patch test: no ghost forces at homogeneous deformations") {
  std::mt19937 rng(13);
  for (std::int64_t K : {4, 8}) {
    const auto mesh = graded(32, K, 2.0);
    for (int k = 0; k < 3; ++k) {
      const CoupledModel c(mesh, PairPotential::lennard_jones(), random_strain(rng, 0.05));
      const VectorXd g = c.gradient(VectorXd::Zero(c.num_dofs()));
      CHECK(g.lpNorm<Eigen::Infinity>() <= 1e-10);
    }
  }
}

TEST_CASE("coupled derivatives against finite differences") {
  std::mt19937 rng(17);
  const auto mesh = graded(16, 4, 1.0, {{0, 0}});
  const CoupledModel c(mesh, PairPotential::lennard_jones(), random_strain(rng, 0.02));
  const VectorXd u = random_field(c.num_dofs(), 0.03, rng);
  CHECK(fd_gradient_error(c, u, rng) <= 1e-6);
  CHECK(fd_hessian_error(c, u, rng) <= 1e-5);

  const SparseMatrix H = c.hessian(u);
  const SparseMatrix Ht = H.transpose();
  CHECK((H - Ht).norm() == 0.0);
  for (const auto& t : translation_basis(c.num_points())) CHECK((H * t).norm() < 1e-9);
}

TEST_CASE("atomistic derivatives against finite differences") {
  std::mt19937 rng(19);
  const auto dom = std::make_shared<const LatticeDomain>(build_domain(16, {{2, 3}}));
  const AtomisticModel a(dom, PairPotential::lennard_jones(), random_strain(rng, 0.02));
  const VectorXd u = random_field(a.num_dofs(), 0.03, rng);
  CHECK(fd_gradient_error(a, u, rng) <= 1e-6);
  CHECK(fd_hessian_error(a, u, rng) <= 1e-5);
}

TEST_CASE("nodal interpolation and H1 error") {
  std::mt19937 rng(23);
  const auto dom = build_hex_domain(12, {});
  const auto adom = std::make_shared<const LatticeDomain>(dom);
  const AtomisticModel a(adom, PairPotential::lennard_jones());
  const VectorXd ua = random_field(a.num_dofs(), 0.05, rng);
  const VectorXd none(0);

  // full resolution: interpolation is the identity on lattice values and the error vanishes
  const CoupledModel micro(std::make_shared<const CoupledMesh>(micro_triangulation(dom)), PairPotential::lennard_jones());
  const VectorXd um = interpolate_nodal(a, ua, micro);
  for (std::int64_t p = 0; p < micro.num_points(); ++p)
    CHECK((um.segment<2>(2 * p) - micro.displacement_at(um, micro.points()[static_cast<std::size_t>(p)])).norm() == 0.0);
  const auto e0 = h1_error(micro, ua, none, um, none);
  CHECK(e0.absolute < 1e-12);
  CHECK(e0.covered_area == doctest::Approx(dom.cell().area()).epsilon(1e-12));

  // homogeneous reference: relative error undefined
  const auto mesh = graded(12, 4, 1.0);
  const CoupledModel c(mesh, PairPotential::lennard_jones());
  const auto e1 = h1_error(c, VectorXd::Zero(a.num_dofs()), none, VectorXd::Zero(c.num_dofs()), none);
  CHECK(e1.absolute == 0.0);
  CHECK_FALSE(e1.relative_defined);
  CHECK(e1.covered_area == doctest::Approx(dom.cell().area()).epsilon(1e-12));

  // interpolation commutes with the affine part: the error of I_h of a periodic field only sees u
  const VectorXd uc = interpolate_nodal(a, ua, c);
  const auto e2 = h1_error(c, ua, none, uc, none);
  CHECK(e2.absolute > 0.0);
  CHECK(e2.relative < 1.5);
}

TEST_CASE("H1 error of interpolation is first order for a smooth field") {
  // smooth periodic field on the hexagonal cell: a plane wave along a reciprocal vector
  auto err_for = [](std::int64_t N) {
    const auto dom = build_hex_domain(N, {});
    const auto adom = std::make_shared<const LatticeDomain>(dom);
    const AtomisticModel a(adom, PairPotential::lennard_jones());
    VectorXd ua(a.num_dofs());
    const double pi = std::acos(-1.0);
    for (std::int64_t s = 0; s < dom.num_sites(); ++s) {
      const Vec2i x = dom.site(s);
      // i + 2j changes by 3N under both periods (N,N) and (-N,2N)
      const double ph = 2 * pi * static_cast<double>(x.i + 2 * x.j) / static_cast<double>(3 * N);
      ua.segment<2>(2 * s) = Vec2(std::sin(ph), std::cos(ph)) * static_cast<double>(N) * 0.01;
    }
    const auto mesh = std::make_shared<const CoupledMesh>(
        build_graded_mesh(dom, MeshPlan{N / 4, 2.0, 1.0, MeshFamily::Radial}));
    const CoupledModel c(mesh, PairPotential::lennard_jones());
    return h1_error(c, ua, VectorXd(0), interpolate_nodal(a, ua, c), VectorXd(0)).relative;
  };
  // doubling N at fixed h_K shrinks h relative to the wavelength
  const double e16 = err_for(16), e32 = err_for(32);
  CHECK(e32 < e16);
}

TEST_CASE("residual dual norm") {
  std::mt19937 rng(29);
  const auto mesh = graded(12, 4, 1.0);
  const CoupledModel c(mesh, PairPotential::lennard_jones(), random_strain(rng, 0.05));
  CHECK(residual_dual_norm(c, VectorXd::Zero(c.num_dofs()), false) == 0.0);
  for (bool weighted : {false, true}) {
    const SparseMatrix L = c.stiffness(weighted);
    const VectorXd w = project_out_translations(random_field(c.num_dofs(), 1.0, rng));
    const double seminorm = std::sqrt(w.dot(L * w));
    CHECK(residual_dual_norm(c, L * w, weighted) == doctest::Approx(seminorm).epsilon(1e-9));
  }
}

TEST_CASE("snapshot round trip is bit exact") {
  std::mt19937 rng(31);
  const auto mesh = graded(12, 4, 1.0, {{1, 0}});
  const CoupledModel c(mesh, PairPotential::lennard_jones(), random_strain(rng, 0.05));
  const VectorXd u = random_field(c.num_dofs(), 0.1, rng);
  const auto s = make_snapshot(c, 12, 4, u);
  const auto path = std::filesystem::temp_directory_path() / "acclab_snapshot_test.snap";
  write_snapshot(s, path);
  const auto r = read_snapshot(path);
  CHECK(r.N == 12);
  CHECK(r.K == 4);
  CHECK(r.B == s.B);
  REQUIRE(r.sites.size() == s.sites.size());
  bool same = true;
  for (std::size_t k = 0; k < s.sites.size(); ++k)
    same = same && r.sites[k] == s.sites[k] && r.u[k].x() == s.u[k].x() && r.u[k].y() == s.u[k].y();
  CHECK(same);
  std::filesystem::remove(path);
}
