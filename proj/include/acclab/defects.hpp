#pragma once

#include "acclab/assembly.hpp"

#include <boost/multiprecision/cpp_int.hpp>

namespace acclab {

// Quadratic forms sum_b |r_b . D_b v|^2 over nearest-neighbour bonds, each unordered bond once.
// `full` uses every bond of the cell (indices are lattice indices); otherwise only bonds
// between sites of L (indices are site indices).
SparseMatrix nn_axial_form(const LatticeDomain& domain, bool full);

// Values on the full cell from site values u and vacancy values v.
VectorXd assemble_full(const LatticeDomain& domain, const VectorXd& u, const VectorXd& v);
double phi_sites(const LatticeDomain& domain, const VectorXd& u);
double phi_full(const LatticeDomain& domain, const VectorXd& u, const VectorXd& vacancy_values);

// Minimiser of the full-lattice axial form over vacancy values with u fixed on L.
class ExtensionOperator {
 public:
  explicit ExtensionOperator(const LatticeDomain& domain);
  // (2 #V) x (2 #L)
  const SparseMatrix& matrix() const { return E_; }
  VectorXd apply(const VectorXd& u) const { return E_ * u; }

 private:
  SparseMatrix E_;
};

inline ExtensionOperator build_extension(const LatticeDomain& domain) { return ExtensionOperator(domain); }

// Average of the non-vacancy nearest neighbours of each vacancy.
VectorXd averaging_extension(const LatticeDomain& domain, const VectorXd& u);

struct StabilityIndexResult {
  double kappa = 1.0;
  VectorXd mode;          // minimising displacement on L, orthogonal to translations
  double quotient = 1.0;  // Phi_L(mode) / Phi_full(E mode)
  double residual = 0.0;  // relative residual of the generalised eigenpair
  std::int64_t dofs = 0;
};

StabilityIndexResult stability_index(const LatticeDomain& domain);

// Exact arithmetic in Q(sqrt 3): a + b sqrt(3).
class QSqrt3 {
 public:
  using Rational = boost::multiprecision::cpp_rational;
  QSqrt3() = default;
  QSqrt3(Rational a, Rational b = 0) : a_(std::move(a)), b_(std::move(b)) {}
  QSqrt3(int a) : a_(a) {}

  const Rational& rational_part() const { return a_; }
  const Rational& sqrt3_part() const { return b_; }
  bool is_zero() const { return a_ == 0 && b_ == 0; }
  bool is_rational() const { return b_ == 0; }
  double to_double() const;
  std::string str() const;

  friend QSqrt3 operator+(const QSqrt3& x, const QSqrt3& y) { return {x.a_ + y.a_, x.b_ + y.b_}; }
  friend QSqrt3 operator-(const QSqrt3& x, const QSqrt3& y) { return {x.a_ - y.a_, x.b_ - y.b_}; }
  friend QSqrt3 operator-(const QSqrt3& x) { return {-x.a_, -x.b_}; }
  friend QSqrt3 operator*(const QSqrt3& x, const QSqrt3& y) {
    return {x.a_ * y.a_ + 3 * x.b_ * y.b_, x.a_ * y.b_ + x.b_ * y.a_};
  }
  friend QSqrt3 operator/(const QSqrt3& x, const QSqrt3& y);
  friend bool operator==(const QSqrt3& x, const QSqrt3& y) { return x.a_ == y.a_ && x.b_ == y.b_; }

 private:
  Rational a_ = 0, b_ = 0;
};

using QMatrix = std::vector<std::vector<QSqrt3>>;

QSqrt3 exact_determinant(QMatrix M);

struct VacancyBlockCase {
  int k = 0;
  QMatrix A, B;
  std::vector<QSqrt3> kernel;  // v0 added as v0 (x) v0, empty if A is nonsingular
  // det(A + v0 v0^T - lambda (B - A)) = p0 + p1 lambda (B - A has rank one)
  QSqrt3 p0, p1;
  QSqrt3 lambda;
};

struct AnalyticVacancyIndex {
  std::vector<VacancyBlockCase> cases;  // k = -2..3
  QSqrt3 lambda_min;
  QSqrt3 kappa;
};

// Block-diagonalised axial forms around a single vacancy in the rotation-adapted basis.
QMatrix vacancy_block_A(int k);
QMatrix vacancy_block_B(int k);
AnalyticVacancyIndex analytic_single_vacancy_index();

}  // namespace acclab
