#pragma once

#include "acclab/stability.hpp"

#include <functional>

namespace acclab {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Preconditioner { None, LatticeLaplace };
Preconditioner parse_preconditioner(const std::string& s);
std::string to_string(Preconditioner p);

struct SolveConfig {
  double tol = 1e-8;  // on sqrt(g^T P^-1 g), or |g|_2 without preconditioner
  int maxiter = 20000;
  double c1 = 1e-4, c2 = 0.1;
  Preconditioner precond = Preconditioner::LatticeLaplace;
  int restart = 100;
  double mu_floor = 0.3;  // reject trial steps with min |D_b y| / |b| below this
  int max_rejections = 60;

  void validate() const;
};

struct TraceRow {
  int iter = 0;
  double energy = 0, grad_norm = 0, step = 0;
};

struct SolveResult {
  VectorXd u;
  double energy = 0;
  double grad_norm = 0;
  int iterations = 0;
  int evaluations = 0;
  int restarts = 0;
  bool converged = false;
  std::vector<TraceRow> trace;
};

// Preconditioned Polak-Ribiere+ nonlinear CG with a strong Wolfe line search.
// Trace energies are accumulated from per-step energy differences, which near convergence are
// taken from the directional derivatives; `energy` is the energy evaluated at `u`.
// Throws SolverError on line-search failure, repeated floor violations or exhaustion of maxiter.
SolveResult minimize(const EnergyModel& model, const VectorXd& u0, const SolveConfig& cfg = {});

struct NewtonResult {
  VectorXd u;
  std::vector<double> grad_norms;  // Euclidean, one per iterate including the start
  std::vector<double> translation_components;  // |T^T step| per step
  int iterations = 0;
};

// Newton's method on the complement of translations. Without `allow_indefinite` a Hessian with
// negative pivots is rejected.
NewtonResult newton_refine(const EnergyModel& model, const VectorXd& u0, double tol = 1e-10, int maxiter = 25,
                           bool allow_indefinite = false);

void write_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path);

struct ContinuationConfig {
  double t0 = 0, t_max = 0.5;
  double dt = 1e-3;
  double bisect_tol = 1e-8;
  double eigen_threshold = 0;
  // largest admissible excess of the drop E(u_prev; t) - E(u; t) over the Newton-model prediction
  // when re-solving at a new t
  double max_energy_drop = 1e-3;
  // When no branch point exists past t_lo, the bracket is accepted as a fold only if the lowest
  // eigenvalue at t_lo has dropped below this fraction of its value at t0.
  double fold_eigen_fraction = 0.05;
  std::int64_t dense_limit = 200;
  double newton_tol = 1e-10;
  SolveConfig solve;
};

using StrainPath = std::function<Mat2(double)>;

struct ContinuationPoint {
  double t = 0;
  double eigenvalue = 0;
  double energy = 0;
};

struct ContinuationResult {
  double t_crit = 0;
  double t_lo = 0, t_hi = 0;
  double eig_lo = 0, eig_hi = 0;
  VectorXd u_lo, u_hi;
  bool fold = false;  // t_hi has no branch point; eig_hi is NaN and u_hi empty
  std::vector<ContinuationPoint> history;
  int solves = 0;
};

struct BranchLossError : SolverError {
  using SolverError::SolverError;
};

// March t from t0 in steps dt until the lowest deflated Hessian eigenvalue drops to the threshold
// or the branch ends, then bisect. The model's strain is left at B(t_lo).
ContinuationResult continuation_critical_t(EnergyModel& model, const StrainPath& path, const VectorXd& u0,
                                           const ContinuationConfig& cfg);

}  // namespace acclab
