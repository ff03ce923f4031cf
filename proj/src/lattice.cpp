#include "acclab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace acclab {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t mod(std::int64_t a, std::int64_t b) { return a - floor_div(a, b) * b; }

// 2 <u, v> in the cartesian metric, integral in lattice coordinates.
std::int64_t dot2(Vec2i u, Vec2i v) { return 2 * u.i * v.i + u.i * v.j + u.j * v.i + 2 * u.j * v.j; }

std::int64_t ext_gcd(std::int64_t a, std::int64_t b, std::int64_t& x, std::int64_t& y) {
  if (b == 0) {
    x = a >= 0 ? 1 : -1;
    y = 0;
    return std::abs(a);
  }
  std::int64_t x1 = 0, y1 = 0;
  std::int64_t g = ext_gcd(b, mod(a, b), x1, y1);
  x = y1;
  y = x1 - floor_div(a, b) * y1;
  return g;
}

}  // namespace

Mat2 a6() {
  Mat2 A;
  A << 1.0, 0.5, 0.0, kSqrt3 / 2.0;
  return A;
}

Vec2 to_cartesian(Vec2i x) {
  return {static_cast<double>(x.i) + 0.5 * static_cast<double>(x.j),
          0.5 * kSqrt3 * static_cast<double>(x.j)};
}

std::int64_t norm2(Vec2i r) { return r.i * r.i + r.i * r.j + r.j * r.j; }

double length(Vec2i r) { return std::sqrt(static_cast<double>(norm2(r))); }

std::int64_t hex_norm(Vec2i x) { return std::max({std::abs(x.i), std::abs(x.j), std::abs(x.i + x.j)}); }

Vec2i rotate60(Vec2i r) { return {-r.j, r.i + r.j}; }

Vec2i nn_direction(int j) {
  Vec2i r{1, 0};
  for (int k = 0; k < ((j % 6) + 6) % 6; ++k) r = rotate60(r);
  return r;
}

Mat2 q6() {
  Mat2 Q;
  Q << 0.5, -kSqrt3 / 2.0, kSqrt3 / 2.0, 0.5;
  return Q;
}

LatticeDirection LatticeDirection::from(Vec2i ij) {
  if (ij == Vec2i{}) throw DomainError("lattice direction must be nonzero");
  return {ij, to_cartesian(ij), acclab::length(ij)};
}

std::vector<LatticeDirection> OrbitDecomposition::directions() const {
  std::vector<LatticeDirection> out;
  for (const auto& o : orbits) out.insert(out.end(), o.members.begin(), o.members.end());
  return out;
}

std::vector<LatticeDirection> OrbitDecomposition::half_directions() const {
  std::vector<LatticeDirection> out;
  for (const auto& o : orbits)
    for (int k = 0; k < 3; ++k) out.push_back(o.members[static_cast<std::size_t>(k)]);
  return out;
}

std::size_t OrbitDecomposition::size() const { return 6 * orbits.size(); }

OrbitDecomposition orbit_decomposition(double cutoff) {
  OrbitDecomposition dec;
  dec.cutoff = cutoff;
  const double c2 = cutoff * cutoff * (1.0 + 1e-12);
  const auto R = static_cast<std::int64_t>(std::ceil(2.0 * cutoff)) + 1;
  std::vector<Vec2i> reps;
  // Q6 fundamental cone: angle in [0, pi/3) <=> i > 0, j >= 0.
  for (std::int64_t i = 1; i <= R; ++i)
    for (std::int64_t j = 0; j <= R; ++j)
      if (static_cast<double>(norm2({i, j})) <= c2) reps.push_back({i, j});
  std::sort(reps.begin(), reps.end(), [](Vec2i u, Vec2i v) {
    if (norm2(u) != norm2(v)) return norm2(u) < norm2(v);
    return cross(u, v) > 0;
  });
  for (Vec2i r : reps) {
    Orbit o;
    o.representative = LatticeDirection::from(r);
    Vec2i m = r;
    for (int k = 0; k < 6; ++k) {
      o.members.push_back(LatticeDirection::from(m));
      m = rotate60(m);
    }
    dec.orbits.push_back(std::move(o));
  }
  return dec;
}

PeriodicCell::PeriodicCell(Vec2i p1, Vec2i p2) : p1_(p1), p2_(p2) {
  const std::int64_t det = cross(p1, p2);
  if (det == 0) throw DomainError("degenerate period vectors");
  std::int64_t x = 0, y = 0;
  c_ = ext_gcd(p1.j, p2.j, x, y);
  if (c_ == 0) throw DomainError("degenerate period vectors");
  Vec2i w = x * p1 + y * p2;
  if (w.j < 0) w = -w;
  Vec2i h = (p2.j / c_) * p1 - (p1.j / c_) * p2;
  a_ = std::abs(h.i);
  b_ = mod(w.i, a_);
  if (a_ * c_ != std::abs(det)) throw DomainError("Hermite normal form mismatch");

  r1_ = p1;
  r2_ = p2;
  for (int it = 0; it < 200; ++it) {
    if (norm2(r1_) > norm2(r2_)) std::swap(r1_, r2_);
    const double m = std::round(static_cast<double>(dot2(r1_, r2_)) / (2.0 * static_cast<double>(norm2(r1_))));
    if (m == 0.0) break;
    r2_ = r2_ - static_cast<std::int64_t>(m) * r1_;
  }
}

PeriodicCell PeriodicCell::rhombic(std::int64_t N) {
  if (N < 1) throw DomainError("period N must be positive");
  PeriodicCell c({N, 0}, {0, N});
  c.N_ = N;
  return c;
}

PeriodicCell PeriodicCell::hexagonal(std::int64_t N) {
  if (N < 1) throw DomainError("period N must be positive");
  PeriodicCell c({N, N}, {-N, 2 * N});
  c.N_ = N;
  c.hexagonal_ = true;
  return c;
}

Vec2i PeriodicCell::wrap(Vec2i x) const {
  const std::int64_t k = floor_div(x.j, c_);
  const std::int64_t j = x.j - k * c_;
  const std::int64_t i = mod(x.i - k * b_, a_);
  return {i, j};
}

std::int64_t PeriodicCell::index(Vec2i x) const {
  const Vec2i w = wrap(x);
  return w.j * a_ + w.i;
}

Vec2i PeriodicCell::site(std::int64_t idx) const { return {idx % a_, idx / a_}; }

Vec2i PeriodicCell::centered(Vec2i x) const {
  const Vec2i w = wrap(x);
  // Solve w = s r1 + t r2 and search the rounded neighbourhood.
  const double det = static_cast<double>(cross(r1_, r2_));
  const double s = static_cast<double>(cross(w, r2_)) / det;
  const double t = static_cast<double>(cross(r1_, w)) / det;
  const auto s0 = static_cast<std::int64_t>(std::llround(s));
  const auto t0 = static_cast<std::int64_t>(std::llround(t));
  Vec2i best = w;
  std::int64_t bn = -1;
  for (std::int64_t ds = -2; ds <= 2; ++ds)
    for (std::int64_t dt = -2; dt <= 2; ++dt) {
      const Vec2i c = w - (s0 + ds) * r1_ - (t0 + dt) * r2_;
      const std::int64_t n = norm2(c);
      if (bn < 0 || n < bn || (n == bn && c < best)) {
        bn = n;
        best = c;
      }
    }
  return best;
}

Vec2i PeriodicCell::nearest_image(Vec2i d) const { return centered(d); }

LatticeDomain::LatticeDomain(PeriodicCell cell, const std::vector<Vec2i>& vacancies) : cell_(cell) {
  const std::int64_t n = cell_.size();
  const std::int64_t bound = 4 * (std::abs(cell_.p1_.i) + std::abs(cell_.p1_.j) + std::abs(cell_.p2_.i) +
                                  std::abs(cell_.p2_.j));
  lattice_to_site_.assign(static_cast<std::size_t>(n), 0);
  for (Vec2i v : vacancies) {
    if (std::abs(v.i) > bound || std::abs(v.j) > bound)
      throw DomainError("vacancy (" + std::to_string(v.i) + "," + std::to_string(v.j) +
                        ") outside representable coordinates");
    const std::int64_t idx = cell_.index(v);
    if (lattice_to_site_[static_cast<std::size_t>(idx)] < 0)
      throw DomainError("duplicate vacancy after periodic wrap at (" + std::to_string(v.i) + "," +
                        std::to_string(v.j) + ")");
    lattice_to_site_[static_cast<std::size_t>(idx)] = -1 - static_cast<std::int64_t>(vacancies_.size());
    vacancies_.push_back(cell_.wrap(v));
  }
  sites_.reserve(static_cast<std::size_t>(n) - vacancies_.size());
  for (std::int64_t idx = 0; idx < n; ++idx) {
    auto& slot = lattice_to_site_[static_cast<std::size_t>(idx)];
    if (slot < 0) continue;
    slot = static_cast<std::int64_t>(sites_.size());
    sites_.push_back(cell_.site(idx));
  }
}

std::int64_t LatticeDomain::site_index(Vec2i x) const { return lattice_to_site(cell_.index(x)); }

std::int64_t LatticeDomain::vacancy_index(Vec2i x) const { return lattice_to_vacancy(cell_.index(x)); }

double LatticeDomain::vacancy_separation() const {
  if (vacancies_.empty()) return std::numeric_limits<double>::infinity();
  double best = length(cell_.reduced1());
  for (std::size_t a = 0; a < vacancies_.size(); ++a)
    for (std::size_t b = a + 1; b < vacancies_.size(); ++b)
      best = std::min(best, length(cell_.nearest_image(vacancies_[a] - vacancies_[b])));
  return best;
}

LatticeDomain build_domain(std::int64_t N, const std::vector<Vec2i>& vacancy_pattern) {
  if (N < 4) throw DomainError("period N must be at least 4");
  return LatticeDomain(PeriodicCell::rhombic(N), vacancy_pattern);
}

LatticeDomain build_hex_domain(std::int64_t N, const std::vector<Vec2i>& vacancy_pattern) {
  if (N < 2) throw DomainError("hexagon side N must be at least 2");
  return LatticeDomain(PeriodicCell::hexagonal(N), vacancy_pattern);
}

std::vector<Vec2i> parse_vacancy_pattern(const std::string& text) {
  std::vector<Vec2i> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    std::int64_t i = 0, j = 0;
    if (!(ls >> i)) continue;
    std::string rest;
    if (!(ls >> j) || (ls >> rest))
      throw DomainError("vacancy pattern line " + std::to_string(lineno) + ": expected 'i j'");
    out.push_back({i, j});
  }
  return out;
}

std::vector<Vec2i> read_vacancy_pattern(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DomainError("cannot open vacancy pattern " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_vacancy_pattern(ss.str());
}

BondSet enumerate_bonds(const LatticeDomain& domain, double cutoff, bool full) {
  const auto dirs = orbit_decomposition(cutoff).directions();
  const auto& cell = domain.cell();
  BondSet set;
  set.full = full;
  for (std::int64_t idx = 0; idx < cell.size(); ++idx) {
    const bool vx = domain.lattice_to_site(idx) < 0;
    if (vx && !full) continue;
    const Vec2i x = cell.site(idx);
    for (const auto& d : dirs) {
      const std::int64_t t = cell.index(x + d.ij);
      const bool vt = domain.lattice_to_site(t) < 0;
      if (vt && !full) continue;
      set.bonds.push_back({idx, x, d, t, vx || vt});
    }
  }
  set.tags.assign(set.bonds.size(), BondClass::Unclassified);
  return set;
}

namespace {

Vec2 site_value(const LatticeDomain& domain, const Eigen::VectorXd& u, std::int64_t lattice_idx,
                const Eigen::VectorXd* vac) {
  const std::int64_t s = domain.lattice_to_site(lattice_idx);
  if (s >= 0) return u.segment<2>(2 * s);
  const std::int64_t v = domain.lattice_to_vacancy(lattice_idx);
  if (vac == nullptr || vac->size() < 2 * (v + 1))
    throw DomainError("bond endpoint is a vacancy site; apply the extension operator first");
  return vac->segment<2>(2 * v);
}

}  // namespace

Vec2 finite_difference(const LatticeDomain& domain, const Eigen::VectorXd& u, const Bond& b,
                       const Eigen::VectorXd* vacancy_values) {
  return site_value(domain, u, b.target, vacancy_values) - site_value(domain, u, b.site, vacancy_values);
}

Vec2 finite_difference(const LatticeDomain& domain, const Mat2& B, const Eigen::VectorXd& u, const Bond& b,
                       const Eigen::VectorXd* vacancy_values) {
  return B * b.dir.r + finite_difference(domain, u, b, vacancy_values);
}

std::pair<double, double> hexagonal_identities_check(const Mat2& G, const Vec2& r) {
  const Mat2 Q = q6();
  Vec2 s = r;
  double first = 0, second = 0;
  for (int j = 0; j < 6; ++j) {
    s = Q * s;
    first += (G * s).squaredNorm();
    const double q = s.dot(G * s);
    second += q * q;
  }
  return {first, second};
}

}  // namespace acclab
