#include "acclab/assembly.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace acclab {

namespace {

using Triplet = Eigen::Triplet<double>;

void add_coefficient(EnergyModel::Term& t, std::int64_t point, double c) {
  for (int k = 0; k < t.n; ++k)
    if (t.p[static_cast<std::size_t>(k)] == point) {
      t.c[static_cast<std::size_t>(k)] += c;
      return;
    }
  if (t.n == 6) throw std::logic_error("term has more than six points");
  t.p[static_cast<std::size_t>(t.n)] = static_cast<std::int32_t>(point);
  t.c[static_cast<std::size_t>(t.n)] = c;
  ++t.n;
}

Vec2 point_value(const VectorXd& u, std::int64_t p) { return u.segment<2>(2 * p); }

}  // namespace

EnergyModel::EnergyModel(PairPotential pot, const Mat2& B) : pot_(std::move(pot)), B_(B) {}

void EnergyModel::set_strain(const Mat2& B) {
  if (!(B.determinant() > 0)) throw DomainError("macroscopic strain must have positive determinant");
  B_ = B;
}

Vec2 EnergyModel::term_argument(const Term& t, const VectorXd& u) const {
  Vec2 D = B_ * t.r;
  for (int k = 0; k < t.n; ++k)
    D += t.c[static_cast<std::size_t>(k)] * point_value(u, t.p[static_cast<std::size_t>(k)]);
  return D;
}

double EnergyModel::energy(const VectorXd& u) const {
  double e = 0.0;
  for (const auto& t : terms_) {
    const double s = term_argument(t, u).norm();
    if (!(s > pot_.floor())) throw SingularityError("bond collapse: |D| = " + std::to_string(s));
    e += t.w * pot_.value(s);
  }
  return e;
}

double EnergyModel::energy_gradient(const VectorXd& u, VectorXd& g) const {
  g.setZero(num_dofs());
  double e = 0.0;
  for (const auto& t : terms_) {
    const Vec2 D = term_argument(t, u);
    const double s = D.norm();
    if (!(s > pot_.floor())) throw SingularityError("bond collapse: |D| = " + std::to_string(s));
    double f, f1, f2;
    pot_.eval(s, f, f1, f2);
    e += t.w * f;
    const Vec2 dphi = (t.w * f1 / s) * D;
    for (int k = 0; k < t.n; ++k)
      g.segment<2>(2 * t.p[static_cast<std::size_t>(k)]) += t.c[static_cast<std::size_t>(k)] * dphi;
  }
  return e;
}

VectorXd EnergyModel::gradient(const VectorXd& u) const {
  VectorXd g;
  energy_gradient(u, g);
  return g;
}

SparseMatrix EnergyModel::hessian(const VectorXd& u) const {
  std::vector<Triplet> trip;
  trip.reserve(terms_.size() * 16);
  for (const auto& t : terms_) {
    const PhiEval pe = phi_value_grad_hess(pot_, term_argument(t, u));
    const Mat2 H = t.w * pe.hess;
    for (int a = 0; a < t.n; ++a)
      for (int b = 0; b < t.n; ++b) {
        const double cc = t.c[static_cast<std::size_t>(a)] * t.c[static_cast<std::size_t>(b)];
        const std::int64_t pa = t.p[static_cast<std::size_t>(a)], pb = t.p[static_cast<std::size_t>(b)];
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) trip.emplace_back(2 * pa + i, 2 * pb + j, cc * H(i, j));
      }
  }
  SparseMatrix Hs(num_dofs(), num_dofs());
  Hs.setFromTriplets(trip.begin(), trip.end());
  return Hs;
}

double EnergyModel::min_stretch(const VectorXd& u) const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& t : terms_) m = std::min(m, term_argument(t, u).norm() / t.r.norm());
  return m;
}

AtomisticModel::AtomisticModel(std::shared_ptr<const LatticeDomain> domain, PairPotential pot, const Mat2& B)
    : EnergyModel(std::move(pot), B), domain_(std::move(domain)) {
  set_strain(B);
  const auto& cell = domain_->cell();
  const auto half = orbit_decomposition(pot_.cutoff()).half_directions();
  points_.reserve(static_cast<std::size_t>(domain_->num_sites()));
  for (const Vec2i& x : domain_->sites()) points_.push_back(cell.centered(x));
  for (std::int64_t s = 0; s < domain_->num_sites(); ++s) {
    const Vec2i x = domain_->site(s);
    for (const auto& d : half) {
      const std::int64_t t = domain_->lattice_to_site(cell.index(x + d.ij));
      if (t < 0) continue;
      Term term;
      term.w = 2.0;
      term.r = d.r;
      add_coefficient(term, s, -1.0);
      add_coefficient(term, t, 1.0);
      terms_.push_back(term);
    }
  }
}

SparseMatrix AtomisticModel::laplacian() const {
  std::vector<Triplet> trip;
  for (const auto& t : terms_) {
    if (std::abs(t.r.squaredNorm() - 1.0) > 1e-12 || t.n != 2) continue;
    const std::int64_t a = t.p[0], b = t.p[1];
    for (int i = 0; i < 2; ++i) {
      trip.emplace_back(2 * a + i, 2 * a + i, 1.0);
      trip.emplace_back(2 * b + i, 2 * b + i, 1.0);
      trip.emplace_back(2 * a + i, 2 * b + i, -1.0);
      trip.emplace_back(2 * b + i, 2 * a + i, -1.0);
    }
  }
  SparseMatrix L(num_dofs(), num_dofs());
  L.setFromTriplets(trip.begin(), trip.end());
  return L;
}

CoupledModel::CoupledModel(std::shared_ptr<const CoupledMesh> mesh, PairPotential pot, const Mat2& B)
    : EnergyModel(std::move(pot), B), mesh_(std::move(mesh)) {
  set_strain(B);
  const auto& dom = mesh_->domain();
  const auto& cell = dom.cell();
  node_point_.assign(static_cast<std::size_t>(mesh_->num_nodes()), -1);
  for (std::int64_t n = 0; n < mesh_->num_nodes(); ++n) {
    if (dom.lattice_to_site(mesh_->node_lattice_index(n)) < 0) continue;
    node_point_[static_cast<std::size_t>(n)] = static_cast<std::int64_t>(point_node_.size());
    point_node_.push_back(n);
    points_.push_back(mesh_->node_coords(n));
  }
  half_ = orbit_decomposition(pot_.cutoff()).half_directions();
  const std::size_t nh = half_.size();
  const auto& tris = mesh_->triangles();
  omega_.assign(tris.size() * nh, 0.0);
  iota_.assign(tris.size() * nh, 0.0);

  for (std::int64_t idx = 0; idx < cell.size(); ++idx) {
    const Vec2i x = cell.centered(cell.site(idx));
    const bool vx = dom.lattice_to_site(idx) < 0;
    for (std::size_t h = 0; h < nh; ++h) {
      const Vec2i d = half_[h].ij;
      const bool vt = dom.lattice_to_site(cell.index(x + d)) < 0;
      const bool atomistic = mesh_->touches_atomistic(x, d);
      if (!atomistic && (vx || vt)) throw MeshError("vacancy bond outside the atomistic region");
      const BondTrace tr = mesh_->trace(x, d);
      for (const auto& seg : tr.segments) {
        if (tris[static_cast<std::size_t>(seg.triangle)].region != Region::Continuum) continue;
        const double len = seg.chi * (seg.t1 - seg.t0);
        (atomistic ? iota_ : omega_)[static_cast<std::size_t>(seg.triangle) * nh + h] += len;
      }
      if (!atomistic) {
        ++n_continuum_bonds_;
        continue;
      }
      if (vx || vt) continue;
      ++n_atomistic_bonds_;
      Term term;
      term.w = 2.0;
      term.r = half_[h].r;
      const Interp a = interpolation(x), b = interpolation(x + d);
      for (int k = 0; k < a.n; ++k) add_coefficient(term, a.p[static_cast<std::size_t>(k)], -a.w[static_cast<std::size_t>(k)]);
      for (int k = 0; k < b.n; ++k) add_coefficient(term, b.p[static_cast<std::size_t>(k)], b.w[static_cast<std::size_t>(k)]);
      terms_.push_back(term);
    }
  }
  n_atomistic_terms_ = terms_.size();

  for (std::size_t t = 0; t < tris.size(); ++t) {
    const auto& T = tris[t];
    if (T.region != Region::Continuum) continue;
    for (std::size_t h = 0; h < nh; ++h) {
      const double om = omega_[t * nh + h];
      if (om == 0.0) continue;
      Term term;
      term.w = 2.0 * om;
      term.r = half_[h].r;
      for (int k = 0; k < 3; ++k) {
        const std::int64_t p = node_point_[static_cast<std::size_t>(T.node[static_cast<std::size_t>(k)])];
        if (p < 0) throw MeshError("continuum triangle has a vacancy vertex");
        add_coefficient(term, p, T.grad[static_cast<std::size_t>(k)].dot(term.r));
      }
      terms_.push_back(term);
    }
  }
}

CoupledModel::Interp CoupledModel::interpolation(Vec2i x) const {
  const auto& cell = mesh_->domain().cell();
  Interp out;
  const std::int64_t node = mesh_->node_of_lattice(cell.index(x));
  if (node >= 0) {
    const std::int64_t p = node_point_[static_cast<std::size_t>(node)];
    if (p < 0) throw MeshError("interpolation at a vacancy node");
    out.n = 1;
    out.p[0] = static_cast<std::int32_t>(p);
    out.w[0] = 1.0;
    return out;
  }
  const auto loc = mesh_->locate(cell.centered(x));
  const auto& T = mesh_->triangles()[static_cast<std::size_t>(loc.triangle)];
  for (int k = 0; k < 3; ++k) {
    const double w = loc.weights[static_cast<std::size_t>(k)];
    if (w == 0.0) continue;
    const std::int64_t p = node_point_[static_cast<std::size_t>(T.node[static_cast<std::size_t>(k)])];
    if (p < 0) throw MeshError("interpolation weight on a vacancy node");
    out.p[static_cast<std::size_t>(out.n)] = static_cast<std::int32_t>(p);
    out.w[static_cast<std::size_t>(out.n)] = w;
    ++out.n;
  }
  return out;
}

Vec2 CoupledModel::displacement_at(const VectorXd& u, Vec2i x) const {
  const Interp ip = interpolation(x);
  Vec2 v = Vec2::Zero();
  for (int k = 0; k < ip.n; ++k)
    v += ip.w[static_cast<std::size_t>(k)] * point_value(u, ip.p[static_cast<std::size_t>(k)]);
  return v;
}

EnergyBreakdown CoupledModel::energy_bond_form(const VectorXd& u) const {
  EnergyBreakdown out;
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    const auto& t = terms_[k];
    const double s = term_argument(t, u).norm();
    if (!(s > pot_.floor())) throw SingularityError("bond collapse: |D| = " + std::to_string(s));
    (k < n_atomistic_terms_ ? out.atomistic : out.continuum) += t.w * pot_.value(s);
  }
  out.total = out.atomistic + out.continuum;
  return out;
}

EnergyBreakdown CoupledModel::energy_practical(const VectorXd& u) const {
  EnergyBreakdown out;
  for (std::size_t k = 0; k < n_atomistic_terms_; ++k) {
    const double s = term_argument(terms_[k], u).norm();
    if (!(s > pot_.floor())) throw SingularityError("bond collapse: |D| = " + std::to_string(s));
    out.atomistic += terms_[k].w * pot_.value(s);
  }
  const auto F = element_gradients(u);
  const auto& tris = mesh_->triangles();
  const std::size_t nh = half_.size();
  for (std::size_t t = 0; t < tris.size(); ++t) {
    if (tris[t].region != Region::Continuum) continue;
    double w = 0.0, phi_i = 0.0;
    for (std::size_t h = 0; h < nh; ++h) {
      const double s = (F[t] * half_[h].r).norm();
      if (!(s > pot_.floor())) throw SingularityError("element collapse: |F r| = " + std::to_string(s));
      const double v = 2.0 * pot_.value(s);
      w += v;
      phi_i += iota_[t * nh + h] * v;
    }
    out.continuum += tris[t].area * w / kDetA6;
    out.interface -= phi_i;
  }
  out.total = out.atomistic + out.continuum + out.interface;
  return out;
}

std::vector<Mat2> CoupledModel::element_gradients(const VectorXd& u, const VectorXd* vacancy_values) const {
  const auto& dom = mesh_->domain();
  std::vector<Mat2> out;
  out.reserve(mesh_->triangles().size());
  for (const auto& T : mesh_->triangles()) {
    Mat2 F = B_;
    for (int k = 0; k < 3; ++k) {
      const std::int64_t node = T.node[static_cast<std::size_t>(k)];
      const std::int64_t p = node_point_[static_cast<std::size_t>(node)];
      Vec2 val = Vec2::Zero();
      if (p >= 0) {
        val = point_value(u, p);
      } else if (vacancy_values != nullptr) {
        const std::int64_t v = dom.lattice_to_vacancy(mesh_->node_lattice_index(node));
        val = vacancy_values->segment<2>(2 * v);
      }
      F += val * T.grad[static_cast<std::size_t>(k)].transpose();
    }
    out.push_back(F);
  }
  return out;
}

SparseMatrix CoupledModel::stiffness(bool weighted) const {
  const Mat2 W = weighted ? Mat2(B_ * B_.transpose()) : Mat2::Identity();
  std::vector<Triplet> trip;
  for (const auto& T : mesh_->triangles()) {
    for (int a = 0; a < 3; ++a) {
      const std::int64_t pa = node_point_[static_cast<std::size_t>(T.node[static_cast<std::size_t>(a)])];
      if (pa < 0) continue;
      for (int b = 0; b < 3; ++b) {
        const std::int64_t pb = node_point_[static_cast<std::size_t>(T.node[static_cast<std::size_t>(b)])];
        if (pb < 0) continue;
        const double gg = T.area * T.grad[static_cast<std::size_t>(a)].dot(T.grad[static_cast<std::size_t>(b)]);
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) trip.emplace_back(2 * pa + i, 2 * pb + j, gg * W(i, j));
      }
    }
  }
  SparseMatrix L(num_dofs(), num_dofs());
  L.setFromTriplets(trip.begin(), trip.end());
  return L;
}

std::array<VectorXd, 2> translation_basis(std::int64_t num_points) {
  std::array<VectorXd, 2> out{VectorXd::Zero(2 * num_points), VectorXd::Zero(2 * num_points)};
  const double s = 1.0 / std::sqrt(static_cast<double>(num_points));
  for (std::int64_t p = 0; p < num_points; ++p) {
    out[0](2 * p) = s;
    out[1](2 * p + 1) = s;
  }
  return out;
}

VectorXd project_out_translations(const VectorXd& v) {
  VectorXd out = v;
  const std::int64_t n = v.size() / 2;
  if (n == 0) return out;
  double mx = 0.0, my = 0.0;
  for (std::int64_t p = 0; p < n; ++p) {
    mx += v(2 * p);
    my += v(2 * p + 1);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  for (std::int64_t p = 0; p < n; ++p) {
    out(2 * p) -= mx;
    out(2 * p + 1) -= my;
  }
  return out;
}

VectorXd interpolate_nodal(const AtomisticModel& atomistic, const VectorXd& u_a, const CoupledModel& coupled) {
  const auto& dom = atomistic.domain();
  if (dom.num_lattice_sites() != coupled.domain().num_lattice_sites())
    throw DomainError("atomistic and coupled models live on different cells");
  VectorXd u(coupled.num_dofs());
  for (std::int64_t p = 0; p < coupled.num_points(); ++p) {
    const std::int64_t li = coupled.mesh().node_lattice_index(coupled.node_of_point(p));
    const std::int64_t s = dom.lattice_to_site(li);
    u.segment<2>(2 * p) = u_a.segment<2>(2 * s);
  }
  return u;
}

namespace {

using Poly = std::vector<Vec2>;

// Clip a polygon against the counter-clockwise triangle `tri` (Sutherland-Hodgman).
Poly clip_polygon(Poly poly, const std::array<Vec2, 3>& tri) {
  for (int k = 0; k < 3 && !poly.empty(); ++k) {
    const Vec2 a = tri[static_cast<std::size_t>(k)], b = tri[static_cast<std::size_t>((k + 1) % 3)];
    const Vec2 e = b - a;
    auto side = [&](const Vec2& p) { return e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x()); };
    Poly out;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2& P = poly[i];
      const Vec2& Q = poly[(i + 1) % poly.size()];
      const double sp = side(P), sq = side(Q);
      if (sp >= 0) out.push_back(P);
      if ((sp >= 0) != (sq >= 0)) out.push_back(P + (sp / (sp - sq)) * (Q - P));
    }
    poly = std::move(out);
  }
  return poly;
}

double polygon_area(const Poly& p) {
  double a = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Vec2& P = p[i];
    const Vec2& Q = p[(i + 1) % p.size()];
    a += P.x() * Q.y() - P.y() * Q.x();
  }
  return 0.5 * a;
}

Mat2 p1_gradient(const std::array<Vec2, 3>& X, const std::array<Vec2, 3>& U) {
  Mat2 E, V;
  E.col(0) = X[1] - X[0];
  E.col(1) = X[2] - X[0];
  V.col(0) = U[1] - U[0];
  V.col(1) = U[2] - U[0];
  return V * E.inverse();
}

}  // namespace

H1Error h1_error(const CoupledModel& coupled, const VectorXd& u_ref, const VectorXd& vac_ref, const VectorXd& u_h,
                 const VectorXd& vac_h) {
  const auto& dom = coupled.domain();
  const auto& cell = dom.cell();
  if (u_ref.size() != 2 * dom.num_sites()) throw DomainError("reference field has the wrong size");
  if (vac_ref.size() != 2 * static_cast<std::int64_t>(dom.vacancies().size()))
    throw DomainError("reference vacancy values have the wrong size");
  auto ref_value = [&](Vec2i x) -> Vec2 {
    const std::int64_t li = cell.index(x);
    const std::int64_t s = dom.lattice_to_site(li);
    if (s >= 0) return u_ref.segment<2>(2 * s);
    return vac_ref.segment<2>(2 * dom.lattice_to_vacancy(li));
  };
  // Displacement gradients only: the common B cancels.
  const Mat2 B = coupled.strain();
  auto Gh = coupled.element_gradients(u_h, &vac_h);
  for (auto& G : Gh) G -= B;

  double err2 = 0.0, ref2 = 0.0, area = 0.0;
  const Vec2i a1{1, 0}, a2{0, 1}, a12{1, 1};
  const auto& tris = coupled.mesh().triangles();
  for (std::size_t t = 0; t < tris.size(); ++t) {
    const auto& T = tris[t];
    const std::array<Vec2, 3> TX{to_cartesian(T.v[0]), to_cartesian(T.v[1]), to_cartesian(T.v[2])};
    Vec2i lo = T.v[0], hi = T.v[0];
    for (const auto& v : T.v) {
      lo = {std::min(lo.i, v.i), std::min(lo.j, v.j)};
      hi = {std::max(hi.i, v.i), std::max(hi.j, v.j)};
    }
    for (std::int64_t i = lo.i - 1; i <= hi.i; ++i)
      for (std::int64_t j = lo.j - 1; j <= hi.j; ++j) {
        const Vec2i x{i, j};
        for (const auto& micro : {std::array<Vec2i, 3>{x, x + a1, x + a2}, std::array<Vec2i, 3>{x + a1, x + a12, x + a2}}) {
          const std::array<Vec2, 3> MX{to_cartesian(micro[0]), to_cartesian(micro[1]), to_cartesian(micro[2])};
          const double A = polygon_area(clip_polygon({MX[0], MX[1], MX[2]}, TX));
          if (A <= 1e-14) continue;
          const Mat2 Gm = p1_gradient(MX, {ref_value(micro[0]), ref_value(micro[1]), ref_value(micro[2])});
          err2 += A * (Gm - Gh[t]).squaredNorm();
          ref2 += A * Gm.squaredNorm();
          area += A;
        }
      }
  }
  H1Error out;
  out.absolute = std::sqrt(err2);
  out.covered_area = area;
  if (ref2 > 0.0) {
    out.relative = out.absolute / std::sqrt(ref2);
  } else {
    out.relative = std::numeric_limits<double>::quiet_NaN();
    out.relative_defined = false;
  }
  return out;
}

double residual_dual_norm(const CoupledModel& coupled, const VectorXd& g, bool weighted) {
  const std::int64_t n = coupled.num_dofs();
  if (g.size() != n) throw DomainError("residual has the wrong size");
  const VectorXd gp = project_out_translations(g);
  if (gp.squaredNorm() == 0.0) return 0.0;
  // Pin the first point: with a translation-free right-hand side the quadratic form is unchanged.
  const SparseMatrix L = coupled.stiffness(weighted);
  const SparseMatrix Lr = L.bottomRightCorner(n - 2, n - 2);
  Eigen::SimplicialLDLT<SparseMatrix> solver(Lr);
  if (solver.info() != Eigen::Success) throw MeshError("P1 stiffness factorisation failed");
  const VectorXd rhs = gp.tail(n - 2);
  const VectorXd w = solver.solve(rhs);
  if (solver.info() != Eigen::Success || !(solver.vectorD().minCoeff() > 0))
    throw MeshError("P1 stiffness is singular beyond translations");
  return std::sqrt(std::max(0.0, rhs.dot(w)));
}

Snapshot make_snapshot(const EnergyModel& model, std::int64_t N, std::int64_t K, const VectorXd& u) {
  if (u.size() != model.num_dofs()) throw DomainError("displacement has the wrong size");
  Snapshot s;
  s.N = N;
  s.K = K;
  s.B = model.strain();
  s.sites = model.points();
  for (std::int64_t p = 0; p < model.num_points(); ++p) s.u.push_back(u.segment<2>(2 * p));
  return s;
}

void write_snapshot(const Snapshot& s, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write snapshot " + path.string());
  char buf[128];
  f << "N " << s.N << "\n";
  f << "K " << s.K << "\n";
  std::snprintf(buf, sizeof buf, "B %.17g %.17g %.17g %.17g\n", s.B(0, 0), s.B(0, 1), s.B(1, 0), s.B(1, 1));
  f << buf;
  for (std::size_t k = 0; k < s.sites.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%lld %lld %.17g %.17g\n", static_cast<long long>(s.sites[k].i),
                  static_cast<long long>(s.sites[k].j), s.u[k].x(), s.u[k].y());
    f << buf;
  }
}

Snapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read snapshot " + path.string());
  Snapshot s;
  std::string tag;
  if (!(f >> tag >> s.N) || tag != "N") throw std::runtime_error("snapshot: expected N header");
  if (!(f >> tag >> s.K) || tag != "K") throw std::runtime_error("snapshot: expected K header");
  if (!(f >> tag >> s.B(0, 0) >> s.B(0, 1) >> s.B(1, 0) >> s.B(1, 1)) || tag != "B")
    throw std::runtime_error("snapshot: expected B header");
  long long i, j;
  double ux, uy;
  while (f >> i >> j >> ux >> uy) {
    s.sites.push_back({i, j});
    s.u.emplace_back(ux, uy);
  }
  if (!f.eof()) throw std::runtime_error("snapshot: malformed row in " + path.string());
  return s;
}

}  // namespace acclab
