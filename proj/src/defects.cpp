#include "acclab/defects.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

namespace acclab {

namespace {

using Triplet = Eigen::Triplet<double>;

// Index of a lattice point within the unknown vector: sites first, then vacancies.
std::int64_t full_slot(const LatticeDomain& d, std::int64_t lattice_idx) {
  const std::int64_t s = d.lattice_to_site(lattice_idx);
  return s >= 0 ? s : d.num_sites() + d.lattice_to_vacancy(lattice_idx);
}

void add_bond(std::vector<Triplet>& trip, std::int64_t a, std::int64_t b, const Vec2& r) {
  const Mat2 P = r * r.transpose();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      trip.emplace_back(2 * a + i, 2 * a + j, P(i, j));
      trip.emplace_back(2 * b + i, 2 * b + j, P(i, j));
      trip.emplace_back(2 * a + i, 2 * b + j, -P(i, j));
      trip.emplace_back(2 * b + i, 2 * a + j, -P(i, j));
    }
}

// Axial form over sites-then-vacancies ordering of the full cell.
SparseMatrix full_form_ordered(const LatticeDomain& d) {
  const auto& cell = d.cell();
  std::vector<Triplet> trip;
  for (std::int64_t idx = 0; idx < cell.size(); ++idx) {
    const Vec2i x = cell.site(idx);
    for (int k = 0; k < 3; ++k) {
      const Vec2i r = nn_direction(k);
      add_bond(trip, full_slot(d, idx), full_slot(d, cell.index(x + r)), to_cartesian(r));
    }
  }
  const std::int64_t n = 2 * cell.size();
  SparseMatrix Q(n, n);
  Q.setFromTriplets(trip.begin(), trip.end());
  return Q;
}

}  // namespace

SparseMatrix nn_axial_form(const LatticeDomain& domain, bool full) {
  const auto& cell = domain.cell();
  std::vector<Triplet> trip;
  for (std::int64_t idx = 0; idx < cell.size(); ++idx) {
    const Vec2i x = cell.site(idx);
    for (int k = 0; k < 3; ++k) {
      const Vec2i r = nn_direction(k);
      const std::int64_t t = cell.index(x + r);
      if (full) {
        add_bond(trip, idx, t, to_cartesian(r));
      } else {
        const std::int64_t a = domain.lattice_to_site(idx), b = domain.lattice_to_site(t);
        if (a >= 0 && b >= 0) add_bond(trip, a, b, to_cartesian(r));
      }
    }
  }
  const std::int64_t n = 2 * (full ? cell.size() : domain.num_sites());
  SparseMatrix Q(n, n);
  Q.setFromTriplets(trip.begin(), trip.end());
  return Q;
}

VectorXd assemble_full(const LatticeDomain& domain, const VectorXd& u, const VectorXd& v) {
  const auto& cell = domain.cell();
  VectorXd out(2 * cell.size());
  for (std::int64_t idx = 0; idx < cell.size(); ++idx) {
    const std::int64_t s = domain.lattice_to_site(idx);
    out.segment<2>(2 * idx) = s >= 0 ? u.segment<2>(2 * s) : v.segment<2>(2 * domain.lattice_to_vacancy(idx));
  }
  return out;
}

double phi_sites(const LatticeDomain& domain, const VectorXd& u) {
  return u.dot(nn_axial_form(domain, false) * u);
}

double phi_full(const LatticeDomain& domain, const VectorXd& u, const VectorXd& vacancy_values) {
  const VectorXd w = assemble_full(domain, u, vacancy_values);
  return w.dot(nn_axial_form(domain, true) * w);
}

ExtensionOperator::ExtensionOperator(const LatticeDomain& domain) {
  const std::int64_t ns = domain.num_sites();
  const auto nv = static_cast<std::int64_t>(domain.vacancies().size());
  E_.resize(2 * nv, 2 * ns);
  if (nv == 0) return;
  const SparseMatrix Q = full_form_ordered(domain);
  const Eigen::MatrixXd Qvv(Q.bottomRightCorner(2 * nv, 2 * nv));
  const SparseMatrix Qvs = Q.bottomLeftCorner(2 * nv, 2 * ns);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(Qvv);
  const double scale = std::max(1.0, Qvv.diagonal().maxCoeff());
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-12 * scale))
    throw DomainError("vacancy cluster without boundary data: extension system is singular");
  // E = -Qvv^{-1} Qvs; only the columns of neighbouring sites are nonzero
  std::vector<Triplet> trip;
  for (Eigen::Index c = 0; c < Qvs.outerSize(); ++c) {
    VectorXd col = VectorXd::Zero(2 * nv);
    bool any = false;
    for (SparseMatrix::InnerIterator it(Qvs, c); it; ++it) {
      col(it.row()) = it.value();
      any = true;
    }
    if (!any) continue;
    const VectorXd e = -ldlt.solve(col);
    for (Eigen::Index r = 0; r < e.size(); ++r)
      if (e(r) != 0.0) trip.emplace_back(r, c, e(r));
  }
  E_.setFromTriplets(trip.begin(), trip.end());
}

VectorXd averaging_extension(const LatticeDomain& domain, const VectorXd& u) {
  const auto& cell = domain.cell();
  VectorXd out = VectorXd::Zero(2 * static_cast<std::int64_t>(domain.vacancies().size()));
  for (std::size_t k = 0; k < domain.vacancies().size(); ++k) {
    const Vec2i x = domain.vacancies()[k];
    int count = 0;
    Vec2 sum = Vec2::Zero();
    for (int j = 0; j < 6; ++j) {
      const std::int64_t s = domain.lattice_to_site(cell.index(x + nn_direction(j)));
      if (s < 0) continue;
      sum += u.segment<2>(2 * s);
      ++count;
    }
    if (count == 0) throw DomainError("vacancy without occupied neighbours");
    out.segment<2>(2 * static_cast<Eigen::Index>(k)) = sum / count;
  }
  return out;
}

StabilityIndexResult stability_index(const LatticeDomain& domain) {
  StabilityIndexResult res;
  const std::int64_t ns = domain.num_sites();
  res.dofs = 2 * ns;
  const Eigen::MatrixXd A(nn_axial_form(domain, false));
  Eigen::MatrixXd Bq;
  if (domain.has_vacancies()) {
    // Schur complement of the full form onto L equals (I; E)^T Q (I; E)
    const SparseMatrix Q = full_form_ordered(domain);
    const ExtensionOperator E(domain);
    const Eigen::MatrixXd Qss(Q.topLeftCorner(2 * ns, 2 * ns));
    const SparseMatrix Qsv = Q.topRightCorner(2 * ns, Q.cols() - 2 * ns);
    Bq = Qss + Eigen::MatrixXd(Qsv * E.matrix());
  } else {
    Bq = A;
  }
  Bq = 0.5 * (Bq + Bq.transpose());
  // Translations span the common kernel: push them to eigenvalue 10 > 1 >= kappa.
  const auto T = translation_basis(ns);
  Eigen::MatrixXd TT = T[0] * T[0].transpose() + T[1] * T[1].transpose();
  const Eigen::MatrixXd Ad = A + 10.0 * TT;
  const Eigen::MatrixXd Bd = Bq + TT;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(Ad, Bd);
  if (ges.info() != Eigen::Success) throw std::runtime_error("stability index: generalised eigensolver failed");
  res.kappa = ges.eigenvalues()(0);
  res.mode = project_out_translations(ges.eigenvectors().col(0));
  res.mode /= res.mode.norm();
  const double num = res.mode.dot(A * res.mode);
  const double den = res.mode.dot(Bq * res.mode);
  res.quotient = num / den;
  res.residual = (A * res.mode - res.kappa * (Bq * res.mode)).norm() / std::max(1e-300, (A * res.mode).norm());
  return res;
}

double QSqrt3::to_double() const { return static_cast<double>(a_) + static_cast<double>(b_) * std::sqrt(3.0); }

std::string QSqrt3::str() const {
  std::ostringstream os;
  if (b_ == 0) {
    os << a_;
  } else if (a_ == 0) {
    os << b_ << "*sqrt(3)";
  } else {
    os << a_ << (b_ > 0 ? " + " : " - ") << (b_ > 0 ? b_ : Rational(-b_)) << "*sqrt(3)";
  }
  return os.str();
}

QSqrt3 operator/(const QSqrt3& x, const QSqrt3& y) {
  const QSqrt3::Rational n = y.a_ * y.a_ - 3 * y.b_ * y.b_;
  if (n == 0) throw std::domain_error("division by zero in Q(sqrt 3)");
  const QSqrt3 conj(y.a_ / n, -y.b_ / n);
  return x * conj;
}

QSqrt3 exact_determinant(QMatrix M) {
  const std::size_t n = M.size();
  QSqrt3 det(1);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    while (p < n && M[p][c].is_zero()) ++p;
    if (p == n) return QSqrt3(0);
    if (p != c) {
      std::swap(M[p], M[c]);
      det = -det;
    }
    det = det * M[c][c];
    for (std::size_t r = c + 1; r < n; ++r) {
      if (M[r][c].is_zero()) continue;
      const QSqrt3 f = M[r][c] / M[c][c];
      for (std::size_t k = c; k < n; ++k) M[r][k] = M[r][k] - f * M[c][k];
    }
  }
  return det;
}

namespace {

using R = QSqrt3::Rational;

// cos and sin of m pi / 6
QSqrt3 cos6(int m) {
  static const QSqrt3 t[12] = {QSqrt3(1),          QSqrt3(0, R(1, 2)), QSqrt3(R(1, 2)),    QSqrt3(0),
                               QSqrt3(R(-1, 2)),   QSqrt3(0, R(-1, 2)), QSqrt3(-1),        QSqrt3(0, R(-1, 2)),
                               QSqrt3(R(-1, 2)),   QSqrt3(0),          QSqrt3(R(1, 2)),    QSqrt3(0, R(1, 2))};
  return t[((m % 12) + 12) % 12];
}
QSqrt3 sin6(int m) { return cos6(m - 3); }

}  // namespace

QMatrix vacancy_block_A(int k) {
  const QSqrt3 c3 = cos6(2 * k), s3 = sin6(2 * k), c6 = cos6(k), s6 = sin6(k);
  const QSqrt3 z(0);
  return {
      {QSqrt3(3) + (QSqrt3(1) + c3), s3, c6, s6, QSqrt3(2), z},
      {s3, QSqrt3(3) - (QSqrt3(1) + c3), -s6, c6, z, z},
      {c6, -s6, QSqrt3(1), z, z, z},
      {s6, c6, z, QSqrt3(5), QSqrt3(2) * s6, QSqrt3(2) * c6},
      {QSqrt3(2), z, z, QSqrt3(2) * s6, QSqrt3(3), z},
      {z, z, z, QSqrt3(2) * c6, z, QSqrt3(1)},
  };
}

QMatrix vacancy_block_B(int k) {
  QMatrix B = vacancy_block_A(k);
  const QSqrt3 c3 = cos6(2 * k), s3 = sin6(2 * k);
  const QSqrt3 odd(k % 2 == 0 ? 0 : 2);  // 1 - (-1)^k
  B[0][0] = B[0][0] + QSqrt3(2) - QSqrt3(R(1, 2)) * odd * (QSqrt3(1) + c3);
  B[0][1] = B[0][1] + QSqrt3(R(1, 6)) * odd * s3;
  B[1][0] = B[1][0] + QSqrt3(R(1, 6)) * odd * s3;
  B[1][1] = B[1][1] + QSqrt3(R(1, 18)) * odd * (QSqrt3(1) + c3);
  return B;
}

AnalyticVacancyIndex analytic_single_vacancy_index() {
  AnalyticVacancyIndex out;
  const QSqrt3 s3(0, 1);
  for (int k = -2; k <= 3; ++k) {
    VacancyBlockCase c;
    c.k = k;
    c.A = vacancy_block_A(k);
    c.B = vacancy_block_B(k);
    if (k == 0) c.kernel = {0, 1, 0, -1, 0, 2};
    if (k == 1) c.kernel = {-1, s3, s3, -1, 1, s3};
    if (k == -1) c.kernel = {1, s3, -s3, -1, -1, s3};
    auto pencil = [&](const QSqrt3& lambda) {
      QMatrix M = c.A;
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
          if (!c.kernel.empty()) M[i][j] = M[i][j] + c.kernel[i] * c.kernel[j];
          M[i][j] = M[i][j] - lambda * (c.B[i][j] - c.A[i][j]);
        }
      return exact_determinant(M);
    };
    c.p0 = pencil(QSqrt3(0));
    c.p1 = pencil(QSqrt3(1)) - c.p0;
    if (!(pencil(QSqrt3(2)) == c.p0 + QSqrt3(2) * c.p1))
      throw std::logic_error("vacancy block pencil is not linear in lambda");
    c.lambda = -c.p0 / c.p1;
    out.cases.push_back(std::move(c));
  }
  out.lambda_min = out.cases.front().lambda;
  for (const auto& c : out.cases) {
    if (!c.lambda.is_rational() || !out.lambda_min.is_rational())
      throw std::logic_error("vacancy block eigenvalue is irrational");
    if (c.lambda.rational_part() < out.lambda_min.rational_part()) out.lambda_min = c.lambda;
  }
  out.kappa = out.lambda_min / (QSqrt3(1) + out.lambda_min);
  return out;
}

}  // namespace acclab
