#include "acclab/stability.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <boost/math/tools/minima.hpp>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace acclab {

double minimize_on_interval(const std::function<double(double)>& f, double m, double M) {
  if (!(m > 0) || !(M >= m)) throw std::invalid_argument("stretch interval requires 0 < m <= M");
  if (M == m) return f(m);
  const auto n = static_cast<long>(std::ceil((M - m) / 1e-4));
  const double h = (M - m) / static_cast<double>(n);
  double best = f(m);
  long arg = 0;
  for (long k = 1; k <= n; ++k) {
    const double v = f(k == n ? M : m + static_cast<double>(k) * h);
    if (v < best) {
      best = v;
      arg = k;
    }
  }
  const double lo = m + static_cast<double>(std::max(0L, arg - 1)) * h;
  const double hi = std::min(M, m + static_cast<double>(arg + 1) * h);
  const auto r = boost::math::tools::brent_find_minima(f, lo, hi, 52);
  return std::min(best, r.second);
}

ShellConstants shell_constants(const PairPotential& pot, double m, double M, double cutoff) {
  ShellConstants out;
  out.m = m;
  out.M = M;
  out.cutoff = cutoff;
  const auto orbits = orbit_decomposition(cutoff);
  for (const auto& o : orbits.orbits) {
    const double l = o.representative.length;
    const bool nn = std::abs(l - 1.0) < 1e-12;
    double c, cp;
    if (nn) {
      c = minimize_on_interval([&](double s) { return pot.d2(s) / (s * s); }, m, M);
      cp = minimize_on_interval([&](double s) { return pot.d1(s) / (s * s * s); }, m, M);
    } else {
      c = std::min(0.0, minimize_on_interval([&](double s) { return l * l * pot.d2(s * l) / (s * s); }, m, M));
      cp = std::min(0.0, minimize_on_interval([&](double s) { return l * pot.d1(s * l) / (s * s * s); }, m, M));
    }
    out.lengths.push_back(l);
    out.c.push_back(c);
    out.c_perp.push_back(cp);
    out.c_sum += c;
    out.c_perp_sum += cp;
  }
  return out;
}

std::vector<double> scaled_shell_constants(const ShellConstants& s, bool perp) {
  std::vector<double> out;
  const auto& c = perp ? s.c_perp : s.c;
  for (std::size_t n = 0; n < c.size(); ++n) out.push_back(c[n] / std::pow(s.lengths[n], 4));
  return out;
}

double gamma_hom(const PairPotential& pot, double m, double M) {
  const auto s = shell_constants(pot, m, M);
  return gamma_hom(s.c_sum, s.c_perp_sum);
}

StabilityReport gamma(const ShellConstants& shells, double delta, double kappa) {
  if (!(kappa > 0 && kappa <= 1)) throw std::invalid_argument("kappa must lie in (0, 1]");
  if (!(delta >= 0) || delta > std::sqrt(kappa) / 2 + 1e-15)
    throw OutOfTheoryError("delta = " + std::to_string(delta) + " outside [0, sqrt(kappa)/2]");
  StabilityReport r;
  r.m = shells.m;
  r.M = shells.M;
  r.delta = delta;
  r.kappa = kappa;
  r.shells = shells;
  r.C_rho = scaled_shell_constants(shells, false);
  r.C_rho_perp = scaled_shell_constants(shells, true);
  const double d = delta, d2 = delta * delta, sk = std::sqrt(kappa), s3 = std::sqrt(3.0);
  const double c1 = shells.c.at(0), c1p = shells.c_perp.at(0);
  const double rest = shells.c_sum - c1, rest_p = shells.c_perp_sum - c1p;

  r.gamma1 = std::min((0.75 * kappa - 3 * sk * d - 3 * d2) * c1, (0.75 + 3 * d + 3 * d2) * c1) +
             (0.75 + 3 * d + 3 * d2) * rest;
  r.gamma1_perp = std::min((2.25 * kappa - 3 * std::sqrt(3 * kappa) * d - 3 * d2) * c1p,
                           (2.25 + 3 * s3 * d + 3 * d2) * c1p) +
                  (2.25 + 3 * s3 * d + 3 * d2) * rest_p;
  r.gamma2 = std::min((2.25 * kappa - 6 * sk * d - 3 * d2) * c1, (2.25 + 6 * d + 3 * d2) * c1) +
             (2.25 + 6 * d + 3 * d2) * rest;
  r.gamma2_perp = std::min((0.75 * kappa - 2 * std::sqrt(3 * kappa) * d - 3 * d2) * c1p,
                           (0.75 + 2 * s3 * d + 3 * d2) * c1p) +
                  (0.75 + 2 * s3 * d + 3 * d2) * rest_p;
  r.gamma = std::min(r.gamma1 + r.gamma1_perp, r.gamma2 + r.gamma2_perp);
  r.gamma_hom = gamma_hom(shells.c_sum, shells.c_perp_sum);
  return r;
}

StabilityReport gamma(const PairPotential& pot, double m, double M, double delta, double kappa, bool with_tail) {
  StabilityReport r = gamma(shell_constants(pot, m, M), delta, kappa);
  if (with_tail) {
    const double rc = pot.cutoff();
    std::map<double, int> shells;
    for (const auto& o : orbit_decomposition(4 * rc).orbits)
      if (o.representative.length > rc + 1e-9) ++shells[o.representative.length];
    for (const auto& [l, count] : shells) {
      r.tail_bound += count * (l * l * decay_modulus(pot, 2, m * l) / (m * m) +
                               l * decay_modulus(pot, 1, m * l) / (m * m * m));
    }
    r.tail_computed = true;
  }
  return r;
}

GammaTerms gamma_terms_with_splitting(const ShellConstants& shells, double delta, double kappa,
                                      const std::vector<double>& alpha, const std::vector<double>& alpha_perp) {
  const std::size_t n = shells.c.size();
  if (alpha.size() != n || alpha_perp.size() != n) throw std::invalid_argument("one splitting parameter per orbit");
  const double d2 = delta * delta;
  auto reduce = [&](const std::vector<double>& c, const std::vector<double>& a, double& cbar, double& L) {
    cbar = 0;
    L = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const double ct = c[k] - a[k] * std::abs(c[k]);
      cbar += k == 0 ? std::min(ct, kappa * ct) : ct;
      // delta^2 (1 + 1/alpha) |c| with the alpha -> 0 limit taken at delta = 0
      if (a[k] > 0)
        L += 3 * (1 + 1 / a[k]) * std::abs(c[k]) * d2;
      else if (delta > 0 && c[k] != 0)
        throw std::invalid_argument("splitting parameters must be positive for delta > 0");
    }
  };
  double cbar, L, cbar_p, L_p;
  reduce(shells.c, alpha, cbar, L);
  reduce(shells.c_perp, alpha_perp, cbar_p, L_p);
  return {0.75 * cbar - L, 2.25 * cbar_p - L_p, 2.25 * cbar - L, 0.75 * cbar_p - L_p};
}

std::pair<std::vector<double>, std::vector<double>> optimal_splitting(const ShellConstants& shells, double delta,
                                                                      double kappa) {
  const std::size_t n = shells.c.size();
  std::vector<double> a(n, 2 * delta), ap(n, 2 * delta / std::sqrt(3.0));
  if (n > 0 && shells.c[0] > 0) a[0] = 2 * delta / std::sqrt(kappa);
  if (n > 0 && shells.c_perp[0] > 0) ap[0] = 2 * delta / std::sqrt(3 * kappa);
  return {a, ap};
}

namespace {

void accumulate_bond(DeformationClassifier& out, const Mat2& Binv, const Vec2& D, const Vec2& r, bool& first) {
  const double l = r.norm();
  const double s = D.norm() / l;
  const double dev = (Binv * D - r).norm() / l;
  if (first) {
    out.mu_a = s;
    out.M = s;
    first = false;
  }
  out.mu_a = std::min(out.mu_a, s);
  out.M = std::max(out.M, s);
  out.delta = std::max(out.delta, dev);
}

}  // namespace

DeformationClassifier classify_deformation(const CoupledModel& model, const VectorXd& u) {
  DeformationClassifier out;
  const Mat2 Binv = model.strain().inverse();
  bool first = true;
  for (std::size_t k = 0; k < model.num_atomistic_terms(); ++k) {
    const auto& t = model.terms()[k];
    accumulate_bond(out, Binv, model.term_argument(t, u), t.r, first);
  }
  const auto F = model.element_gradients(u);
  const auto& tris = model.mesh().triangles();
  bool first_c = true;
  for (std::size_t t = 0; t < tris.size(); ++t) {
    if (tris[t].region != Region::Continuum) continue;
    Eigen::JacobiSVD<Mat2> svd(F[t]);
    const double smin = svd.singularValues()(1), smax = svd.singularValues()(0);
    out.mu_c = first_c ? smin : std::min(out.mu_c, smin);
    first_c = false;
    out.M = first ? smax : std::max(out.M, smax);
    first = false;
    Eigen::JacobiSVD<Mat2> dev(Binv * F[t] - Mat2::Identity());
    out.delta = std::max(out.delta, dev.singularValues()(0));
  }
  if (model.num_atomistic_terms() == 0) out.mu_a = out.mu_c;
  if (first_c) out.mu_c = out.mu_a;
  out.m = std::min(out.mu_a, out.mu_c);
  return out;
}

DeformationClassifier classify_deformation(const AtomisticModel& model, const VectorXd& u) {
  DeformationClassifier out;
  const Mat2 Binv = model.strain().inverse();
  bool first = true;
  for (const auto& t : model.terms()) accumulate_bond(out, Binv, model.term_argument(t, u), t.r, first);
  out.mu_c = out.mu_a;
  out.m = out.mu_a;
  return out;
}

namespace {

void deflate(VectorXd& v, const std::array<VectorXd, 2>& T) {
  for (const auto& t : T) v -= t.dot(v) * t;
}

EigenResult dense_lowest(const SparseMatrix& H) {
  const Eigen::Index n = H.rows();
  Eigen::MatrixXd D(H);
  D = 0.5 * (D + D.transpose());
  const auto T = translation_basis(n / 2);
  // translations are null vectors; lift them above the spectrum
  const double lift = D.cwiseAbs().rowwise().sum().maxCoeff() + 1.0;
  for (const auto& t : T) D += lift * t * t.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D);
  if (es.info() != Eigen::Success) throw EigenSolverError("dense eigensolver failed");
  EigenResult r;
  r.value = es.eigenvalues()(0);
  r.vector = es.eigenvectors().col(0);
  r.residual = (H * r.vector - r.value * r.vector).norm();
  r.dense = true;
  return r;
}

}  // namespace

EigenResult lowest_hessian_eigenvalue(const SparseMatrix& H, double tol, std::int64_t dense_limit) {
  const Eigen::Index n = H.rows();
  if (H.cols() != n || n % 2 != 0 || n < 4) throw std::invalid_argument("Hessian must be square with 2 DOFs per point");
  if (n < dense_limit) return dense_lowest(H);

  const auto T = translation_basis(n / 2);
  double scale = 0;
  for (Eigen::Index k = 0; k < H.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(H, k); it; ++it)
      if (it.row() == it.col()) scale = std::max(scale, std::abs(it.value()));
  if (scale == 0) scale = 1;

  SparseMatrix I(n, n);
  I.setIdentity();
  // shift below the spectrum so that H - sigma I is positive definite
  double sigma = -1e-3 * scale;
  Eigen::SimplicialLLT<SparseMatrix> llt;
  for (int tries = 0;; ++tries) {
    llt.compute(H - sigma * I);
    if (llt.info() == Eigen::Success) break;
    if (tries == 60) throw EigenSolverError("no positive definite shift found");
    sigma *= 4;
  }

  std::mt19937 rng(12345);
  std::normal_distribution<double> N01;
  VectorXd start(n);
  for (auto& x : start) x = N01(rng);

  const int max_basis = static_cast<int>(std::min<Eigen::Index>(n - 2, 120));
  std::vector<double> history;
  EigenResult best;
  int total = 0;
  for (int restart = 0; restart < 20; ++restart) {
    std::vector<VectorXd> Q;
    std::vector<double> alpha, beta;
    VectorXd q = start;
    deflate(q, T);
    q.normalize();
    Q.push_back(q);
    for (int j = 0; j < max_basis; ++j) {
      VectorXd w = llt.solve(Q[static_cast<std::size_t>(j)]);
      deflate(w, T);
      alpha.push_back(Q[static_cast<std::size_t>(j)].dot(w));
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& v : Q) w -= v.dot(w) * v;
      ++total;
      const double b = w.norm();
      const bool last = j + 1 == max_basis || b < 1e-14;
      if ((j + 1) % 5 == 0 || last) {
        const int m = j + 1;
        Eigen::MatrixXd Tm = Eigen::MatrixXd::Zero(m, m);
        for (int i = 0; i < m; ++i) {
          Tm(i, i) = alpha[static_cast<std::size_t>(i)];
          if (i + 1 < m) Tm(i, i + 1) = Tm(i + 1, i) = beta[static_cast<std::size_t>(i)];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Tm);
        VectorXd x = VectorXd::Zero(n);
        for (int i = 0; i < m; ++i) x += es.eigenvectors()(i, m - 1) * Q[static_cast<std::size_t>(i)];
        deflate(x, T);
        x.normalize();
        const double lambda = x.dot(H * x);
        const double res = (H * x - lambda * x).norm();
        history.push_back(res);
        best.value = lambda;
        best.vector = x;
        best.residual = res;
        best.iterations = total;
        if (res <= tol * scale) return best;
        if (last) break;
      }
      beta.push_back(b);
      Q.push_back(w / b);
    }
    start = best.vector;
  }
  std::ostringstream os;
  os << "Lanczos did not converge; residual history:";
  for (double h : history) os << ' ' << h;
  throw EigenSolverError(os.str());
}

namespace {

std::vector<std::pair<Vec2i, Vec2>> all_directions(double cutoff) {
  std::vector<std::pair<Vec2i, Vec2>> out;
  for (const auto& d : orbit_decomposition(cutoff).directions()) out.emplace_back(d.ij, d.r);
  return out;
}

}  // namespace

double bloch_lowest_eigenvalue(const PairPotential& pot, const Mat2& B, std::int64_t N) {
  const auto dirs = all_directions(pot.cutoff());
  std::vector<Mat2> hess;
  for (const auto& [ij, r] : dirs) hess.push_back(phi_value_grad_hess(pot, B * r).hess);
  const double two_pi = 2 * std::acos(-1.0);
  double best = std::numeric_limits<double>::infinity();
  for (std::int64_t m = 0; m < N; ++m)
    for (std::int64_t n = 0; n < N; ++n) {
      if (m == 0 && n == 0) continue;
      Mat2 A = Mat2::Zero();
      for (std::size_t k = 0; k < dirs.size(); ++k) {
        const double phase = two_pi * static_cast<double>(m * dirs[k].first.i + n * dirs[k].first.j) / N;
        A += 2 * (1 - std::cos(phase)) * hess[k];
      }
      Eigen::SelfAdjointEigenSolver<Mat2> es(A, Eigen::EigenvaluesOnly);
      best = std::min(best, es.eigenvalues()(0));
    }
  return best;
}

double legendre_hadamard_constant(const PairPotential& pot, const Mat2& B, int directions) {
  const auto dirs = all_directions(pot.cutoff());
  std::vector<Mat2> hess;
  for (const auto& [ij, r] : dirs) hess.push_back(phi_value_grad_hess(pot, B * r).hess);
  const double pi = std::acos(-1.0);
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < directions; ++a) {
    const double th = pi * a / directions;
    const Vec2 k(std::cos(th), std::sin(th));
    Mat2 A = Mat2::Zero();
    for (std::size_t i = 0; i < dirs.size(); ++i) A += std::pow(k.dot(dirs[i].second), 2) * hess[i];
    Eigen::SelfAdjointEigenSolver<Mat2> es(A, Eigen::EigenvaluesOnly);
    best = std::min(best, es.eigenvalues()(0));
  }
  return best;
}

}  // namespace acclab
