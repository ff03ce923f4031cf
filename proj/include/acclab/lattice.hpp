#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace acclab {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

inline constexpr double kSqrt3 = 1.7320508075688772935;
inline constexpr double kDetA6 = kSqrt3 / 2.0;

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Integer coordinates with respect to a1 = (1,0), a2 = (1/2, sqrt(3)/2).
struct Vec2i {
  std::int64_t i = 0;
  std::int64_t j = 0;

  friend Vec2i operator+(Vec2i a, Vec2i b) { return {a.i + b.i, a.j + b.j}; }
  friend Vec2i operator-(Vec2i a, Vec2i b) { return {a.i - b.i, a.j - b.j}; }
  friend Vec2i operator-(Vec2i a) { return {-a.i, -a.j}; }
  friend Vec2i operator*(std::int64_t s, Vec2i a) { return {s * a.i, s * a.j}; }
  friend bool operator==(Vec2i, Vec2i) = default;
  friend auto operator<=>(Vec2i, Vec2i) = default;
};

Mat2 a6();
Vec2 to_cartesian(Vec2i x);
// Squared Euclidean length; integral for lattice vectors.
std::int64_t norm2(Vec2i r);
double length(Vec2i r);
// Radius of the smallest lattice-aligned hexagon (vertices k*a_j) containing x.
std::int64_t hex_norm(Vec2i x);
// Q6 rotation by pi/3, exact in lattice coordinates.
Vec2i rotate60(Vec2i r);
// a_1 .. a_6 for j = 0..5.
Vec2i nn_direction(int j);
Mat2 q6();
// Cross product of lattice-coordinate vectors; same sign as the cartesian one.
inline std::int64_t cross(Vec2i a, Vec2i b) { return a.i * b.j - a.j * b.i; }

struct LatticeDirection {
  Vec2i ij;
  Vec2 r;
  double length = 0;

  static LatticeDirection from(Vec2i ij);
};

struct Orbit {
  LatticeDirection representative;
  std::vector<LatticeDirection> members;  // Q6^j r for j = 0..5
};

struct OrbitDecomposition {
  double cutoff = 0;
  std::vector<Orbit> orbits;

  std::vector<LatticeDirection> directions() const;
  // One direction from each +-r pair; the full set is this plus its negation.
  std::vector<LatticeDirection> half_directions() const;
  std::size_t size() const;
};

OrbitDecomposition orbit_decomposition(double cutoff);

// Periodic cell given by two integer period vectors (lattice coordinates).
class PeriodicCell {
 public:
  PeriodicCell(Vec2i p1, Vec2i p2);

  // Rhombic cell A6 (0,N]^2 with N^2 sites.
  static PeriodicCell rhombic(std::int64_t N);
  // Hexagon with vertices N*a_j; 3N^2 sites.
  static PeriodicCell hexagonal(std::int64_t N);

  std::int64_t N() const { return N_; }
  bool is_hexagonal() const { return hexagonal_; }
  std::int64_t size() const { return a_ * c_; }
  Vec2i period1() const { return p1_; }
  Vec2i period2() const { return p2_; }
  // Reduced basis of the period lattice.
  Vec2i reduced1() const { return r1_; }
  Vec2i reduced2() const { return r2_; }

  Vec2i wrap(Vec2i x) const;
  std::int64_t index(Vec2i x) const;
  Vec2i site(std::int64_t idx) const;
  // Periodic image of x closest to the origin (ties broken deterministically).
  Vec2i centered(Vec2i x) const;
  // Shortest periodic image of the difference vector.
  Vec2i nearest_image(Vec2i d) const;
  double area() const { return kDetA6 * static_cast<double>(size()); }
  bool is_period(Vec2i d) const { return wrap(d) == Vec2i{}; }

 private:
  Vec2i p1_, p2_;
  Vec2i r1_, r2_;
  std::int64_t a_ = 1, b_ = 0, c_ = 1;  // Hermite normal form [[a, b], [0, c]]
  std::int64_t N_ = 0;
  bool hexagonal_ = false;
  friend class LatticeDomain;
};

class LatticeDomain {
 public:
  LatticeDomain(PeriodicCell cell, const std::vector<Vec2i>& vacancies);

  const PeriodicCell& cell() const { return cell_; }
  std::int64_t N() const { return cell_.N(); }
  std::int64_t num_lattice_sites() const { return cell_.size(); }
  std::int64_t num_sites() const { return static_cast<std::int64_t>(sites_.size()); }
  const std::vector<Vec2i>& vacancies() const { return vacancies_; }
  bool has_vacancies() const { return !vacancies_.empty(); }

  // Computational sites (the set L) in index order; coordinates are canonical wraps.
  const std::vector<Vec2i>& sites() const { return sites_; }
  Vec2i site(std::int64_t k) const { return sites_[static_cast<std::size_t>(k)]; }
  // Index in L, or -1 for a vacancy.
  std::int64_t site_index(Vec2i x) const;
  // Index of any lattice point (including vacancies) in the full cell.
  std::int64_t lattice_index(Vec2i x) const { return cell_.index(x); }
  // Map from full-cell index to L index (-1 for vacancies).
  std::int64_t lattice_to_site(std::int64_t lattice_idx) const {
    auto k = lattice_to_site_[static_cast<std::size_t>(lattice_idx)];
    return k < 0 ? -1 : k;
  }
  // Vacancy position for a full-cell index, or -1.
  std::int64_t lattice_to_vacancy(std::int64_t lattice_idx) const {
    auto k = lattice_to_site_[static_cast<std::size_t>(lattice_idx)];
    return k < 0 ? -1 - k : -1;
  }
  bool is_vacancy(Vec2i x) const { return site_index(x) < 0; }
  // Position of x in vacancies(), or -1.
  std::int64_t vacancy_index(Vec2i x) const;
  // Minimum Euclidean distance between distinct vacancies over periodic images.
  double vacancy_separation() const;

 private:
  PeriodicCell cell_;
  std::vector<Vec2i> vacancies_;
  std::vector<Vec2i> sites_;
  std::vector<std::int64_t> lattice_to_site_;  // site index, or -1-k for vacancy k
};

// Rhombic cell of side N with the given vacancies.
LatticeDomain build_domain(std::int64_t N, const std::vector<Vec2i>& vacancy_pattern);
LatticeDomain build_hex_domain(std::int64_t N, const std::vector<Vec2i>& vacancy_pattern);

std::vector<Vec2i> read_vacancy_pattern(const std::filesystem::path& path);
std::vector<Vec2i> parse_vacancy_pattern(const std::string& text);

enum class BondClass { Atomistic, Continuum, Unclassified };

struct Bond {
  std::int64_t site = 0;       // lattice index of the origin x
  Vec2i origin;                // canonical coordinates of x
  LatticeDirection dir;
  std::int64_t target = 0;     // lattice index of wrap(x + r)
  bool touches_vacancy = false;
};

struct BondSet {
  std::vector<Bond> bonds;
  std::vector<BondClass> tags;
  bool full = false;  // true: all bonds of the full cell (including vacancy endpoints)
};

// Ordered bonds with |r| <= cutoff. Without `full`, bonds touching vacancies are dropped.
BondSet enumerate_bonds(const LatticeDomain& domain, double cutoff, bool full = false);

// Displacement values on L stored as [u0x, u0y, u1x, ...]; optional vacancy values
// (ordered as domain.vacancies()) from an extension operator.
Vec2 finite_difference(const LatticeDomain& domain, const Eigen::VectorXd& u, const Bond& b,
                       const Eigen::VectorXd* vacancy_values = nullptr);
Vec2 finite_difference(const LatticeDomain& domain, const Mat2& B, const Eigen::VectorXd& u,
                       const Bond& b, const Eigen::VectorXd* vacancy_values = nullptr);

// (sum_j |G Q6^j r|^2, sum_j [(Q6^j r)^T G (Q6^j r)]^2)
std::pair<double, double> hexagonal_identities_check(const Mat2& G, const Vec2& r);

}  // namespace acclab
