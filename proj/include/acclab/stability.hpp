#pragma once

#include "acclab/assembly.hpp"

namespace acclab {

struct OutOfTheoryError : std::domain_error {
  using std::domain_error::domain_error;
};

// Per-orbit lower bounds on the Hessian coefficients for stretches s in [m, M].
struct ShellConstants {
  double m = 1, M = 1, cutoff = 0;
  std::vector<double> lengths;  // l_n, one entry per rotation orbit
  std::vector<double> c, c_perp;
  double c_sum = 0, c_perp_sum = 0;
};

// C_rho = c_n / l_n^4 and C_rho_perp = c_n_perp / l_n^4.
std::vector<double> scaled_shell_constants(const ShellConstants& s, bool perp);

// min over [m, M] of f on a 1e-4 grid including both endpoints, refined by Brent's method
// around the grid minimiser.
double minimize_on_interval(const std::function<double(double)>& f, double m, double M);

ShellConstants shell_constants(const PairPotential& pot, double m, double M, double cutoff);
inline ShellConstants shell_constants(const PairPotential& pot, double m, double M) {
  return shell_constants(pot, m, M, pot.cutoff());
}

inline double gamma_hom(double c, double c_perp) {
  return std::min(0.75 * c + 2.25 * c_perp, 2.25 * c + 0.75 * c_perp);
}
double gamma_hom(const PairPotential& pot, double m, double M);

struct StabilityReport {
  double m = 1, M = 1, delta = 0, kappa = 1;
  ShellConstants shells;
  std::vector<double> C_rho, C_rho_perp;
  double gamma1 = 0, gamma1_perp = 0, gamma2 = 0, gamma2_perp = 0;
  double gamma = 0;
  double gamma_hom = 0;
  // Bound on |sum_{l_n > cutoff} c_n| + |sum c_n_perp| from the decay moduli, shells up to 4x cutoff.
  double tail_bound = 0;
  bool tail_computed = false;
};

// Throws OutOfTheoryError unless 0 <= delta <= sqrt(kappa)/2.
StabilityReport gamma(const PairPotential& pot, double m, double M, double delta, double kappa,
                      bool with_tail = true);
StabilityReport gamma(const ShellConstants& shells, double delta, double kappa);

// The same constants for free splitting parameters alpha_n, alpha_n_perp > 0 (one per orbit):
// gamma_1 = 3/4 cbar - delta^2 L, gamma_2 = 9/4 cbar - delta^2 L, and the perp analogues with 9/4, 3/4,
// where cbar = min(ct_1, kappa ct_1) + sum_{n>1} ct_n, ct_n = c_n - alpha_n |c_n| and
// L = 3 sum (1 + 1/alpha_n) |c_n|.
struct GammaTerms {
  double gamma1 = 0, gamma1_perp = 0, gamma2 = 0, gamma2_perp = 0;
};
GammaTerms gamma_terms_with_splitting(const ShellConstants& shells, double delta, double kappa,
                                      const std::vector<double>& alpha, const std::vector<double>& alpha_perp);
// alpha_1 = 2 delta / sqrt(kappa) (c_1 > 0) or 2 delta, alpha_n = 2 delta; perp: 2 delta / sqrt(3 kappa) or
// 2 delta / sqrt(3).
std::pair<std::vector<double>, std::vector<double>> optimal_splitting(const ShellConstants& shells, double delta,
                                                                      double kappa);

// Measured parameters (m, M, Delta) of a coupled deformation y_h = B x + u.
struct DeformationClassifier {
  double mu_a = 0;      // min |D_b y| / |b| over atomistic bonds
  double mu_c = 0;      // min smallest singular value of grad y_h over continuum triangles
  double m = 0;
  double M = 0;         // max of |D_b y| / |b| and the largest singular value of grad y_h
  double delta = 0;
  bool contains(double m_, double M_, double delta_) const { return m >= m_ && M <= M_ && delta <= delta_; }
};

DeformationClassifier classify_deformation(const CoupledModel& model, const VectorXd& u);
DeformationClassifier classify_deformation(const AtomisticModel& model, const VectorXd& u);

struct EigenResult {
  double value = 0;
  VectorXd vector;
  double residual = 0;
  int iterations = 0;
  bool dense = false;
};

struct EigenSolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Smallest eigenvalue of a symmetric H on the orthogonal complement of constant displacements.
// Dense below `dense_limit` DOFs, otherwise shift-invert Lanczos with full reorthogonalisation.
EigenResult lowest_hessian_eigenvalue(const SparseMatrix& H, double tol = 1e-8, std::int64_t dense_limit = 200);

// Smallest eigenvalue of the atomistic Hessian at y = B x on the rhombic N-cell, from the
// 2x2 Bloch symbols A(k) = sum_r 2 (1 - cos k.r) hess phi(B r), k != 0.
double bloch_lowest_eigenvalue(const PairPotential& pot, const Mat2& B, std::int64_t N);
// Long-wave limit: min over unit k of the acoustic tensor of the Cauchy-Born density.
double legendre_hadamard_constant(const PairPotential& pot, const Mat2& B, int directions = 360);

}  // namespace acclab
