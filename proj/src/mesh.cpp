#include "acclab/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <tuple>

namespace acclab {

namespace {

struct Rat {
  std::int64_t n, d;  // d > 0
};

Rat make_rat(std::int64_t n, std::int64_t d) {
  if (d < 0) {
    n = -n;
    d = -d;
  }
  const std::int64_t g = std::gcd(n < 0 ? -n : n, d);
  if (g > 1) {
    n /= g;
    d /= g;
  }
  return {n, d};
}

bool rat_less(Rat a, Rat b) { return a.n * b.d < b.n * a.d; }
bool rat_le(Rat a, Rat b) { return a.n * b.d <= b.n * a.d; }

Vec2i vmin(Vec2i a, Vec2i b) { return {std::min(a.i, b.i), std::min(a.j, b.j)}; }
Vec2i vmax(Vec2i a, Vec2i b) { return {std::max(a.i, b.i), std::max(a.j, b.j)}; }

double triangle_min_angle_deg(const std::array<Vec2i, 3>& v) {
  double best = 180.0;
  for (int k = 0; k < 3; ++k) {
    const Vec2 a = to_cartesian(v[static_cast<std::size_t>((k + 1) % 3)] - v[static_cast<std::size_t>(k)]);
    const Vec2 b = to_cartesian(v[static_cast<std::size_t>((k + 2) % 3)] - v[static_cast<std::size_t>(k)]);
    const double c = std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0);
    best = std::min(best, std::acos(c) * 180.0 / M_PI);
  }
  return best;
}

}  // namespace

double MeshPlan::size_at(double r) const {
  const double rr = std::max(r, static_cast<double>(K));
  return hK * std::pow(rr / static_cast<double>(K), effective_alpha());
}

MeshFamily parse_mesh_family(const std::string& s) {
  if (s == "radial" || s == "Radial") return MeshFamily::Radial;
  if (s == "algebraic" || s == "Algebraic") return MeshFamily::Algebraic;
  throw MeshError("unknown mesh family '" + s + "'");
}

std::string to_string(MeshFamily f) { return f == MeshFamily::Radial ? "radial" : "algebraic"; }

double ClipResult::length() const {
  if (!positive) return 0.0;
  return static_cast<double>(hi_num * lo_den - lo_num * hi_den) / static_cast<double>(lo_den * hi_den);
}

ClipResult clip_segment(Vec2i p, Vec2i d, const std::array<Vec2i, 3>& tri) {
  Rat lo{0, 1}, hi{1, 1};
  bool collinear = false;
  for (int k = 0; k < 3; ++k) {
    const Vec2i a = tri[static_cast<std::size_t>(k)];
    const Vec2i e = tri[static_cast<std::size_t>((k + 1) % 3)] - a;
    const std::int64_t f0 = cross(e, p - a);
    const std::int64_t f1 = cross(e, d);
    if (f1 == 0) {
      if (f0 < 0) return {};
      if (f0 == 0) collinear = true;
      continue;
    }
    const Rat t = make_rat(-f0, f1);
    if (f1 > 0) {
      if (rat_less(lo, t)) lo = t;
    } else {
      if (rat_less(t, hi)) hi = t;
    }
  }
  ClipResult r;
  if (!rat_le(lo, hi)) return r;
  r.hit = true;
  r.positive = rat_less(lo, hi);
  r.on_edge = r.positive && collinear;
  r.lo_num = lo.n;
  r.lo_den = lo.d;
  r.hi_num = hi.n;
  r.hi_den = hi.d;
  return r;
}

double BondTrace::covered() const {
  double s = 0.0;
  for (const auto& g : segments) s += g.chi * (g.t1 - g.t0);
  return s;
}

CoupledMesh::CoupledMesh(std::shared_ptr<const LatticeDomain> domain, std::vector<std::array<Vec2i, 3>> tris,
                         std::vector<Region> regions, std::optional<MeshPlan> plan)
    : domain_(std::move(domain)), plan_(plan) {
  if (tris.size() != regions.size()) throw MeshError("triangle and region lists differ in length");
  const auto& cell = domain_->cell();
  lattice_node_.assign(static_cast<std::size_t>(cell.size()), -1);
  tris_.reserve(tris.size());
  for (std::size_t t = 0; t < tris.size(); ++t) {
    auto v = tris[t];
    std::int64_t c = cross(v[1] - v[0], v[2] - v[0]);
    if (c == 0) throw MeshError("degenerate triangle");
    if (c < 0) {
      std::swap(v[1], v[2]);
      c = -c;
    }
    MeshTriangle T;
    T.v = v;
    T.region = regions[t];
    if (T.region == Region::Atomistic) has_atomistic_ = true;
    for (int k = 0; k < 3; ++k) {
      const std::int64_t li = cell.index(v[static_cast<std::size_t>(k)]);
      auto& slot = lattice_node_[static_cast<std::size_t>(li)];
      if (slot < 0) {
        slot = static_cast<std::int64_t>(node_lattice_.size());
        node_lattice_.push_back(li);
        node_coords_.push_back(cell.centered(v[static_cast<std::size_t>(k)]));
      }
      T.node[static_cast<std::size_t>(k)] = slot;
    }
    T.area = static_cast<double>(c) * kDetA6 / 2.0;
    const Vec2 X0 = to_cartesian(v[0]), X1 = to_cartesian(v[1]), X2 = to_cartesian(v[2]);
    T.diameter = std::max({(X1 - X0).norm(), (X2 - X1).norm(), (X0 - X2).norm()});
    Mat2 E;
    E.col(0) = X1 - X0;
    E.col(1) = X2 - X0;
    const Mat2 G = E.inverse().transpose();
    T.grad[1] = G.col(0);
    T.grad[2] = G.col(1);
    T.grad[0] = -T.grad[1] - T.grad[2];
    tris_.push_back(T);
  }
  const double total = total_area();
  if (std::abs(total - cell.area()) > 1e-9 * cell.area())
    throw MeshError("triangle areas sum to " + std::to_string(total) + ", cell area is " +
                    std::to_string(cell.area()));
  build_edges();
  build_locator();
}

std::int64_t CoupledMesh::node_of_lattice(std::int64_t lattice_idx) const {
  return lattice_node_[static_cast<std::size_t>(lattice_idx)];
}

double CoupledMesh::total_area() const {
  double s = 0.0;
  for (const auto& T : tris_) s += T.area;
  return s;
}

double CoupledMesh::min_angle_deg() const {
  double best = 180.0;
  for (const auto& T : tris_) best = std::min(best, triangle_min_angle_deg(T.v));
  return best;
}

void CoupledMesh::build_edges() {
  const auto& cell = domain_->cell();
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  std::map<Key, std::vector<std::int64_t>> seen;
  for (std::size_t t = 0; t < tris_.size(); ++t) {
    const auto& T = tris_[t];
    for (int k = 0; k < 3; ++k) {
      const Vec2i a = T.v[static_cast<std::size_t>(k)], b = T.v[static_cast<std::size_t>((k + 1) % 3)];
      std::int64_t ia = cell.index(a), ib = cell.index(b);
      Vec2i d = b - a;
      if (std::make_tuple(ib, -d.i, -d.j) < std::make_tuple(ia, d.i, d.j)) {
        std::swap(ia, ib);
        d = -d;
      }
      seen[{ia, d.i, d.j}].push_back(static_cast<std::int64_t>(t));
    }
  }
  edges_.clear();
  edges_.reserve(seen.size());
  for (const auto& [key, ts] : seen) {
    if (ts.size() != 2)
      throw MeshError("nonconforming mesh: edge shared by " + std::to_string(ts.size()) + " triangles");
    MeshEdge e;
    e.tri_plus = ts[0];
    e.tri_minus = ts[1];
    const auto ia = std::get<0>(key);
    const Vec2i d{std::get<1>(key), std::get<2>(key)};
    e.node_a = lattice_node_[static_cast<std::size_t>(ia)];
    e.node_b = lattice_node_[static_cast<std::size_t>(cell.index(cell.site(ia) + d))];
    e.length = length(d);
    edges_.push_back(e);
  }
}

void CoupledMesh::build_locator() {
  const auto& cell = domain_->cell();
  Vec2i lo = tris_.front().v[0], hi = lo;
  for (const auto& T : tris_)
    for (const auto& v : T.v) {
      lo = vmin(lo, v);
      hi = vmax(hi, v);
    }
  for (std::int64_t idx = 0; idx < cell.size(); ++idx) {
    const Vec2i c = cell.centered(cell.site(idx));
    lo = vmin(lo, c);
    hi = vmax(hi, c);
  }
  const std::int64_t margin = 8;
  bin_lo_ = {lo.i - margin, lo.j - margin};
  bin_hi_ = {hi.i + margin, hi.j + margin};
  nbi_ = (bin_hi_.i - bin_lo_.i) / bin_size_ + 1;
  nbj_ = (bin_hi_.j - bin_lo_.j) / bin_size_ + 1;
  bins_.assign(static_cast<std::size_t>(nbi_ * nbj_), {});
  const Vec2i r1 = cell.reduced1(), r2 = cell.reduced2();
  for (std::size_t t = 0; t < tris_.size(); ++t) {
    const auto& T = tris_[t];
    const Vec2i tlo = vmin(vmin(T.v[0], T.v[1]), T.v[2]);
    const Vec2i thi = vmax(vmax(T.v[0], T.v[1]), T.v[2]);
    for (std::int64_t m1 = -2; m1 <= 2; ++m1)
      for (std::int64_t m2 = -2; m2 <= 2; ++m2) {
        const Vec2i s = m1 * r1 + m2 * r2;
        const Vec2i a = tlo + s, b = thi + s;
        if (b.i < bin_lo_.i || b.j < bin_lo_.j || a.i > bin_hi_.i || a.j > bin_hi_.j) continue;
        const std::int64_t i0 = std::max<std::int64_t>(0, (a.i - bin_lo_.i) / bin_size_);
        const std::int64_t j0 = std::max<std::int64_t>(0, (a.j - bin_lo_.j) / bin_size_);
        const std::int64_t i1 = std::min(nbi_ - 1, (b.i - bin_lo_.i) / bin_size_);
        const std::int64_t j1 = std::min(nbj_ - 1, (b.j - bin_lo_.j) / bin_size_);
        for (std::int64_t bj = j0; bj <= j1; ++bj)
          for (std::int64_t bi = i0; bi <= i1; ++bi)
            bins_[static_cast<std::size_t>(bj * nbi_ + bi)].push_back({static_cast<std::int64_t>(t), s});
      }
  }
}

std::vector<CoupledMesh::Candidate> CoupledMesh::candidates(Vec2i lo, Vec2i hi) const {
  if (lo.i < bin_lo_.i || lo.j < bin_lo_.j || hi.i > bin_hi_.i || hi.j > bin_hi_.j)
    throw GeometryError("query outside the mesh locator range");
  const std::int64_t i0 = (lo.i - bin_lo_.i) / bin_size_, i1 = (hi.i - bin_lo_.i) / bin_size_;
  const std::int64_t j0 = (lo.j - bin_lo_.j) / bin_size_, j1 = (hi.j - bin_lo_.j) / bin_size_;
  std::vector<Candidate> out;
  for (std::int64_t bj = j0; bj <= j1; ++bj)
    for (std::int64_t bi = i0; bi <= i1; ++bi) {
      const auto& b = bins_[static_cast<std::size_t>(bj * nbi_ + bi)];
      out.insert(out.end(), b.begin(), b.end());
    }
  if (i0 != i1 || j0 != j1) {
    auto key = [](const Candidate& c) { return std::make_tuple(c.triangle, c.shift.i, c.shift.j); };
    std::sort(out.begin(), out.end(), [&](const Candidate& x, const Candidate& y) { return key(x) < key(y); });
    out.erase(std::unique(out.begin(), out.end(),
                          [&](const Candidate& x, const Candidate& y) { return key(x) == key(y); }),
              out.end());
  }
  return out;
}

bool CoupledMesh::touches_atomistic(Vec2i p, Vec2i d) const {
  if (!has_atomistic_) return false;
  for (const auto& c : candidates(vmin(p, p + d), vmax(p, p + d))) {
    const auto& T = tris_[static_cast<std::size_t>(c.triangle)];
    if (T.region != Region::Atomistic) continue;
    const std::array<Vec2i, 3> v{T.v[0] + c.shift, T.v[1] + c.shift, T.v[2] + c.shift};
    if (clip_segment(p, d, v).hit) return true;
  }
  return false;
}

BondTrace CoupledMesh::trace(Vec2i p, Vec2i d) const {
  BondTrace tr;
  struct Bound {
    Rat t;
    std::int64_t seg;
  };
  std::vector<Bound> ends;
  for (const auto& c : candidates(vmin(p, p + d), vmax(p, p + d))) {
    const auto& T = tris_[static_cast<std::size_t>(c.triangle)];
    const std::array<Vec2i, 3> v{T.v[0] + c.shift, T.v[1] + c.shift, T.v[2] + c.shift};
    const ClipResult r = clip_segment(p, d, v);
    if (!r.positive) continue;
    tr.segments.push_back({c.triangle, c.shift, r.t0(), r.t1(), r.on_edge ? 0.5 : 1.0});
    if (r.hi_num != r.hi_den) ends.push_back({{r.hi_num, r.hi_den}, static_cast<std::int64_t>(tr.segments.size()) - 1});
  }
  std::vector<std::size_t> order(tr.segments.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = tr.segments[a];
    const auto& y = tr.segments[b];
    return std::tie(x.t0, x.t1, x.triangle) < std::tie(y.t0, y.t1, y.triangle);
  });
  std::vector<TraceSegment> sorted;
  sorted.reserve(order.size());
  for (auto k : order) sorted.push_back(tr.segments[k]);

  std::sort(ends.begin(), ends.end(), [](const Bound& a, const Bound& b) { return rat_less(a.t, b.t); });
  for (std::size_t k = 0; k < ends.size(); ++k) {
    if (k > 0 && !rat_less(ends[k - 1].t, ends[k].t)) continue;
    const Rat t = ends[k].t;
    TraceCrossing x;
    x.t = static_cast<double>(t.n) / static_cast<double>(t.d);
    const std::int64_t ni = t.n * d.i, nj = t.n * d.j;
    if (ni % t.d == 0 && nj % t.d == 0) {
      const Vec2i q = p + Vec2i{ni / t.d, nj / t.d};
      const auto& seg = tr.segments[static_cast<std::size_t>(ends[k].seg)];
      const auto& T = tris_[static_cast<std::size_t>(seg.triangle)];
      for (const auto& v : T.v)
        if (v + seg.shift == q) x.through_vertex = true;
    }
    x.weight = x.through_vertex ? 0.5 : 1.0;
    tr.crossings.push_back(x);
  }
  tr.segments = std::move(sorted);
  const double cov = tr.covered();
  if (std::abs(cov - 1.0) > 1e-12)
    throw GeometryError("inconsistent bond traversal: covered fraction " + std::to_string(cov));
  return tr;
}

CoupledMesh::Location CoupledMesh::locate(Vec2i x) const {
  for (const auto& c : candidates(x, x)) {
    const auto& T = tris_[static_cast<std::size_t>(c.triangle)];
    const Vec2i a = T.v[0] + c.shift, b = T.v[1] + c.shift, e = T.v[2] + c.shift;
    const std::int64_t l0 = cross(e - b, x - b), l1 = cross(a - e, x - e), l2 = cross(b - a, x - a);
    if (l0 < 0 || l1 < 0 || l2 < 0) continue;
    const double s = static_cast<double>(l0 + l1 + l2);
    Location loc;
    loc.triangle = c.triangle;
    loc.shift = c.shift;
    loc.weights = {static_cast<double>(l0) / s, static_cast<double>(l1) / s, static_cast<double>(l2) / s};
    return loc;
  }
  throw GeometryError("point (" + std::to_string(x.i) + "," + std::to_string(x.j) + ") not covered by the mesh");
}

CoupledMesh micro_triangulation(const LatticeDomain& domain, Region region) {
  auto dom = std::make_shared<const LatticeDomain>(domain);
  const auto& cell = dom->cell();
  std::vector<std::array<Vec2i, 3>> tris;
  const Vec2i a1{1, 0}, a2{0, 1}, a12{1, 1};
  if (cell.is_hexagonal()) {
    const std::int64_t N = cell.N();
    for (std::int64_t i = -N; i <= N; ++i)
      for (std::int64_t j = -N; j <= N; ++j) {
        const Vec2i x{i, j};
        if (hex_norm({3 * i + 1, 3 * j + 1}) < 3 * N) tris.push_back({x, x + a1, x + a2});
        if (hex_norm({3 * i + 2, 3 * j + 2}) < 3 * N) tris.push_back({x + a1, x + a12, x + a2});
      }
  } else {
    for (std::int64_t idx = 0; idx < cell.size(); ++idx) {
      const Vec2i x = cell.site(idx);
      tris.push_back({x, x + a1, x + a2});
      tris.push_back({x + a1, x + a12, x + a2});
    }
  }
  std::vector<Region> regions(tris.size(), region);
  return CoupledMesh(dom, std::move(tris), std::move(regions));
}

namespace {

// Symmetric subdivision 0 = k_0 < ... < k_M = R of a ring side.
std::vector<std::int64_t> side_positions(std::int64_t R, std::int64_t M) {
  std::vector<std::int64_t> k(static_cast<std::size_t>(M + 1));
  for (std::int64_t s = 0; 2 * s < M; ++s) {
    const auto v = static_cast<std::int64_t>(std::floor(static_cast<double>(s * R) / static_cast<double>(M) + 0.5));
    k[static_cast<std::size_t>(s)] = v;
    k[static_cast<std::size_t>(M - s)] = R - v;
  }
  if (M % 2 == 0) k[static_cast<std::size_t>(M / 2)] = R / 2;
  return k;
}

struct Ring {
  std::int64_t R;
  std::int64_t M;
};

// Triangulates the strip between one side of ring `in` and the same side of ring `out`
// along the monotone path that maximises the minimum angle. Returns that angle.
double zip_side(const Ring& in, const Ring& out, int side, std::vector<std::array<Vec2i, 3>>* tris) {
  const auto kin = side_positions(in.R, in.M);
  const auto kout = side_positions(out.R, out.M);
  const Vec2i c = nn_direction(side);
  const Vec2i e = nn_direction(side + 2);
  auto P = [&](std::int64_t s) { return in.R * c + kin[static_cast<std::size_t>(s)] * e; };
  auto Q = [&](std::int64_t s) { return out.R * c + kout[static_cast<std::size_t>(s)] * e; };
  const auto W = static_cast<std::size_t>(out.M + 1);
  std::vector<double> best(static_cast<std::size_t>(in.M + 1) * W, -1.0);
  std::vector<char> from_inner(best.size(), 0);
  auto at = [&](std::int64_t i, std::int64_t l) { return static_cast<std::size_t>(i) * W + static_cast<std::size_t>(l); };
  best[0] = 180.0;
  for (std::int64_t i = 0; i <= in.M; ++i)
    for (std::int64_t l = 0; l <= out.M; ++l) {
      if (i > 0) {
        const double v = std::min(best[at(i - 1, l)], triangle_min_angle_deg({P(i - 1), P(i), Q(l)}));
        if (v > best[at(i, l)]) {
          best[at(i, l)] = v;
          from_inner[at(i, l)] = 1;
        }
      }
      if (l > 0) {
        const double v = std::min(best[at(i, l - 1)], triangle_min_angle_deg({P(i), Q(l), Q(l - 1)}));
        if (v > best[at(i, l)]) {
          best[at(i, l)] = v;
          from_inner[at(i, l)] = 0;
        }
      }
    }
  if (tris) {
    std::vector<std::array<Vec2i, 3>> strip;
    for (std::int64_t i = in.M, l = out.M; i > 0 || l > 0;) {
      if (from_inner[at(i, l)]) {
        strip.push_back({P(i - 1), P(i), Q(l)});
        --i;
      } else {
        strip.push_back({P(i), Q(l), Q(l - 1)});
        --l;
      }
    }
    tris->insert(tris->end(), strip.rbegin(), strip.rend());
  }
  return best.back();
}

bool strictly_increasing(const std::vector<std::int64_t>& k) {
  for (std::size_t s = 1; s < k.size(); ++s)
    if (k[s] <= k[s - 1]) return false;
  return true;
}

}  // namespace

CoupledMesh build_graded_mesh(const LatticeDomain& domain, const MeshPlan& plan) {
  const auto& cell = domain.cell();
  if (!cell.is_hexagonal()) throw MeshError("graded meshes require a hexagonal period cell");
  const std::int64_t N = cell.N();
  const std::int64_t K = plan.K;
  if (K < 1) throw MeshError("plan violates K >= 1");
  if (K >= N) throw MeshError("plan violates K < N (K=" + std::to_string(K) + ", N=" + std::to_string(N) + ")");
  if (!(plan.hK >= 1.0) || plan.hK > static_cast<double>(K)) throw MeshError("plan violates 1 <= h_K <= K");
  if (!(plan.effective_alpha() > 0.0)) throw MeshError("plan violates alpha > 0");
  for (Vec2i v : domain.vacancies())
    if (hex_norm(cell.centered(v)) >= K)
      throw MeshError("vacancy (" + std::to_string(v.i) + "," + std::to_string(v.j) +
                      ") not in the interior of the atomistic region");

  std::vector<std::array<Vec2i, 3>> tris;
  std::vector<Region> regions;
  const Vec2i a1{1, 0}, a2{0, 1}, a12{1, 1};
  for (std::int64_t i = -K; i <= K; ++i)
    for (std::int64_t j = -K; j <= K; ++j) {
      const Vec2i x{i, j};
      if (hex_norm({3 * i + 1, 3 * j + 1}) < 3 * K) tris.push_back({x, x + a1, x + a2});
      if (hex_norm({3 * i + 2, 3 * j + 2}) < 3 * K) tris.push_back({x + a1, x + a12, x + a2});
    }
  regions.assign(tris.size(), Region::Atomistic);

  // Each ring targets spacing min(h(R), 2 s_cur) with width equal to that spacing. Nearby
  // (width, count) pairs are tried in order of distance from the target until one zips at
  // or above the angle floor.
  std::vector<Ring> rings{{K, K}};
  while (rings.back().R < N) {
    const Ring cur = rings.back();
    const double s_cur = static_cast<double>(cur.R) / static_cast<double>(cur.M);
    const double s_next = std::max(std::min(plan.size_at(static_cast<double>(cur.R)), 2.0 * s_cur), 1.0);
    const auto d0 = std::max<std::int64_t>(1, std::llround(s_next));
    struct Candidate {
      std::int64_t cost;
      Ring ring;
    };
    std::vector<Candidate> cands;
    for (std::int64_t dd : {0, -1, 1, -2, 2}) {
      const std::int64_t d = d0 + dd;
      if (d < 1) continue;
      const std::int64_t gap = N - cur.R;
      std::int64_t R = cur.R + d;
      if (2 * gap <= 3 * d) R = N;
      else if (gap < 2 * d) R = cur.R + (gap + 1) / 2;
      const auto M0 = std::clamp<std::int64_t>(std::llround(static_cast<double>(R) / s_next), 1, R);
      for (std::int64_t dm : {0, 1, -1, 2, -2}) {
        const std::int64_t M = M0 + dm;
        if (M >= 1 && M <= R) cands.push_back({std::abs(dd) + std::abs(dm), {R, M}});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) { return x.cost < y.cost; });
    bool found = false;
    for (const auto& cand : cands) {
      if (!strictly_increasing(side_positions(cand.ring.R, cand.ring.M))) continue;
      if (zip_side(cur, cand.ring, 0, nullptr) >= plan.min_angle_deg) {
        rings.push_back(cand.ring);
        found = true;
        break;
      }
    }
    if (!found)
      throw MeshError("shape regularity violated: no ring beyond R=" + std::to_string(cur.R) + " meets the " +
                      std::to_string(plan.min_angle_deg) + " deg floor");
  }

  for (std::size_t q = 0; q + 1 < rings.size(); ++q)
    for (int side = 0; side < 6; ++side) zip_side(rings[q], rings[q + 1], side, &tris);
  regions.resize(tris.size(), Region::Continuum);

  CoupledMesh mesh(std::make_shared<const LatticeDomain>(domain), std::move(tris), std::move(regions), plan);
  for (const auto& T : mesh.triangles()) {
    const double ma = triangle_min_angle_deg(T.v);
    if (ma < plan.min_angle_deg) {
      std::string where;
      for (Vec2i v : T.v) where += " (" + std::to_string(v.i) + "," + std::to_string(v.j) + ")";
      throw MeshError("shape regularity violated: minimum angle " + std::to_string(ma) + " deg below floor " +
                      std::to_string(plan.min_angle_deg) + " at triangle" + where);
    }
  }
  return mesh;
}

BondTrace trace_bond(const CoupledMesh& mesh, const Bond& b) {
  const Vec2i p = mesh.domain().cell().centered(b.origin);
  return mesh.trace(p, b.dir.ij);
}

double bond_density_check(const std::array<Vec2i, 3>& T, Vec2i r) {
  auto v = T;
  if (cross(v[1] - v[0], v[2] - v[0]) < 0) std::swap(v[1], v[2]);
  if (cross(v[1] - v[0], v[2] - v[0]) == 0) throw GeometryError("degenerate triangle");
  const Vec2i lo = vmin(vmin(v[0], v[1]), v[2]) - vmax(r, Vec2i{}) ;
  const Vec2i hi = vmax(vmax(v[0], v[1]), v[2]) - vmin(r, Vec2i{});
  double sum = 0.0;
  for (std::int64_t i = lo.i; i <= hi.i; ++i)
    for (std::int64_t j = lo.j; j <= hi.j; ++j) {
      const ClipResult c = clip_segment({i, j}, r, v);
      if (c.positive) sum += (c.on_edge ? 0.5 : 1.0) * c.length();
    }
  return sum;
}

std::vector<double> mesh_size_ratios(const CoupledMesh& mesh) {
  std::vector<double> out;
  if (!mesh.plan()) return out;
  const auto& plan = *mesh.plan();
  for (const auto& T : mesh.triangles()) {
    if (T.region != Region::Continuum) continue;
    const Vec2 c = (to_cartesian(T.v[0]) + to_cartesian(T.v[1]) + to_cartesian(T.v[2])) / 3.0;
    out.push_back(T.diameter / plan.size_at(c.norm()));
  }
  return out;
}

double jump_seminorm(const CoupledMesh& mesh, const std::vector<Mat2>& G, double p) {
  const bool inf = !(p > 0.0) || std::isinf(p);
  double acc = 0.0;
  for (const auto& e : mesh.edges()) {
    const auto& Tp = mesh.triangles()[static_cast<std::size_t>(e.tri_plus)];
    const auto& Tm = mesh.triangles()[static_cast<std::size_t>(e.tri_minus)];
    if (Tp.region == Region::Atomistic || Tm.region == Region::Atomistic) continue;
    const double j = (G[static_cast<std::size_t>(e.tri_plus)] - G[static_cast<std::size_t>(e.tri_minus)]).norm();
    if (inf) acc = std::max(acc, j);
    else acc += e.length * std::pow(j, p);
  }
  return inf ? acc : std::pow(acc, 1.0 / p);
}

void write_mesh(const CoupledMesh& mesh, const std::filesystem::path& base) {
  std::ofstream nf(base.string() + ".node");
  std::ofstream ef(base.string() + ".ele");
  if (!nf || !ef) throw MeshError("cannot write mesh files at " + base.string());
  nf << mesh.num_nodes() << " 2 0 0\n";
  nf.precision(17);
  for (std::int64_t k = 0; k < mesh.num_nodes(); ++k) {
    const Vec2i c = mesh.node_coords(k);
    const Vec2 x = to_cartesian(c);
    nf << k << ' ' << c.i << ' ' << c.j << ' ' << x.x() << ' ' << x.y() << '\n';
  }
  ef << mesh.triangles().size() << " 3 1\n";
  for (std::size_t t = 0; t < mesh.triangles().size(); ++t) {
    const auto& T = mesh.triangles()[t];
    ef << t << ' ' << T.node[0] << ' ' << T.node[1] << ' ' << T.node[2] << ' '
       << (T.region == Region::Atomistic ? 1 : 0) << '\n';
  }
}

}  // namespace acclab
