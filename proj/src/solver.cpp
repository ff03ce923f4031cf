#include "acclab/solver.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <fstream>

namespace acclab {

Preconditioner parse_preconditioner(const std::string& s) {
  if (s == "none") return Preconditioner::None;
  if (s == "laplace" || s == "lattice-laplace") return Preconditioner::LatticeLaplace;
  throw std::invalid_argument("unknown preconditioner '" + s + "'");
}

std::string to_string(Preconditioner p) { return p == Preconditioner::None ? "none" : "laplace"; }

void SolveConfig::validate() const {
  if (!(tol > 0)) throw std::invalid_argument("solve.tol must be positive");
  if (maxiter <= 0) throw std::invalid_argument("solve.maxiter must be positive");
  if (!(0 < c1 && c1 < c2 && c2 < 1)) throw std::invalid_argument("line search needs 0 < c1 < c2 < 1");
  if (restart <= 0) throw std::invalid_argument("restart period must be positive");
}

namespace {

class Precond {
 public:
  Precond(const EnergyModel& model, Preconditioner kind) : kind_(kind) {
    if (kind_ == Preconditioner::None) return;
    SparseMatrix L = model.laplacian();
    double dmax = 0;
    for (Eigen::Index k = 0; k < L.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(L, k); it; ++it)
        if (it.row() == it.col()) dmax = std::max(dmax, it.value());
    SparseMatrix I(L.rows(), L.cols());
    I.setIdentity();
    // the shift only touches the translation kernel, which the gradients never see
    ldlt_.compute(L + 1e-8 * std::max(dmax, 1.0) * I);
    if (ldlt_.info() != Eigen::Success) throw SolverError("preconditioner factorisation failed");
  }
  VectorXd apply(const VectorXd& g) const {
    if (kind_ == Preconditioner::None) return g;
    return project_out_translations(ldlt_.solve(g));
  }

 private:
  Preconditioner kind_;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
};

struct Evaluation {
  bool ok = false;
  double f = 0, df = 0;
  double delta = 0;  // f - f0
  VectorXd u, g;
};

class LineSearch {
 public:
  LineSearch(const EnergyModel& model, const SolveConfig& cfg, int& evaluations)
      : model_(model), cfg_(cfg), evals_(evaluations) {}

  // Returns the accepted point; throws SolverError on failure.
  Evaluation search(const VectorXd& u, double f0, double df0, const VectorXd& d, double alpha) {
    u_ = &u;
    d_ = &d;
    f0_ = f0;
    df0_ = df0;
    rejections_ = 0;
    double a_prev = 0, f_prev = 0, df_prev = df0;
    Evaluation prev_eval;
    for (int i = 1; i <= 40; ++i) {
      Evaluation e = eval_guarded(alpha);
      if (e.delta > cfg_.c1 * alpha * df0 || (i > 1 && e.delta >= f_prev))
        return zoom(a_prev, f_prev, df_prev, prev_eval, alpha, e.delta, e.df);
      if (std::abs(e.df) <= -cfg_.c2 * df0) return e;
      if (e.df >= 0) return zoom(alpha, e.delta, e.df, e, a_prev, f_prev, df_prev);
      a_prev = alpha;
      f_prev = e.delta;
      df_prev = e.df;
      prev_eval = std::move(e);
      alpha *= 2;
    }
    throw SolverError("line search: no bracket after 40 expansions");
  }

 private:
  Evaluation eval(double alpha) {
    Evaluation e;
    e.u = *u_ + alpha * *d_;
    ++evals_;
    if (model_.min_stretch(e.u) < cfg_.mu_floor) return e;
    try {
      e.f = model_.energy_gradient(e.u, e.g);
    } catch (const SingularityError&) {
      return e;
    }
    e.df = e.g.dot(*d_);
    e.ok = std::isfinite(e.f);
    // Below this the difference of two energies is roundoff; the trapezoidal rule on the
    // directional derivatives is accurate to O(alpha^3) instead.
    e.delta = e.f - f0_;
    if (std::abs(e.delta) <= 1e-10 * std::max(1.0, std::abs(f0_))) e.delta = 0.5 * alpha * (df0_ + e.df);
    return e;
  }

  // Halve the trial step until the deformation stays above the floor.
  Evaluation eval_guarded(double& alpha) {
    for (;;) {
      Evaluation e = eval(alpha);
      if (e.ok) return e;
      if (++rejections_ > cfg_.max_rejections)
        throw SolverError("line search: " + std::to_string(cfg_.max_rejections) + " steps rejected at the floor");
      alpha *= 0.5;
    }
  }

  static double cubic_min(double a, double fa, double dfa, double b, double fb, double dfb) {
    const double d1 = dfa + dfb - 3 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - dfa * dfb;
    if (disc < 0) return 0.5 * (a + b);
    const double d2 = (b > a ? 1.0 : -1.0) * std::sqrt(disc);
    const double den = dfb - dfa + 2 * d2;
    if (den == 0) return 0.5 * (a + b);
    return b - (b - a) * (dfb + d2 - d1) / den;
  }

  Evaluation zoom(double lo, double flo, double dflo, Evaluation lo_eval, double hi, double fhi, double dfhi) {
    for (int j = 0; j < 40; ++j) {
      const double w = hi - lo;
      double a = cubic_min(lo, flo, dflo, hi, fhi, dfhi);
      const double a_min = std::min(lo, hi) + 0.1 * std::abs(w), a_max = std::max(lo, hi) - 0.1 * std::abs(w);
      if (!(a >= a_min && a <= a_max)) a = 0.5 * (lo + hi);
      Evaluation e = eval(a);
      if (!e.ok) {
        // the floor lies inside the bracket: shrink towards lo
        if (++rejections_ > cfg_.max_rejections) throw SolverError("line search: floor violations in zoom");
        hi = a;
        fhi = std::numeric_limits<double>::infinity();
        dfhi = 0;
        continue;
      }
      if (e.delta > cfg_.c1 * a * df0_ || e.delta >= flo) {
        hi = a;
        fhi = e.delta;
        dfhi = e.df;
      } else {
        if (std::abs(e.df) <= -cfg_.c2 * df0_) return e;
        if (e.df * (hi - lo) >= 0) {
          hi = lo;
          fhi = flo;
          dfhi = dflo;
        }
        lo = a;
        flo = e.delta;
        dflo = e.df;
        lo_eval = std::move(e);
      }
      if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
    }
    // accept a sufficient-decrease point if the curvature condition could not be met
    if (lo > 0 && lo_eval.ok && flo < 0) return lo_eval;
    throw SolverError("line search: zoom failed to find an acceptable step");
  }

  const EnergyModel& model_;
  const SolveConfig& cfg_;
  int& evals_;
  const VectorXd* u_ = nullptr;
  const VectorXd* d_ = nullptr;
  double f0_ = 0, df0_ = 0;
  int rejections_ = 0;
};

}  // namespace

SolveResult minimize(const EnergyModel& model, const VectorXd& u0, const SolveConfig& cfg) {
  cfg.validate();
  if (u0.size() != model.num_dofs()) throw std::invalid_argument("initial guess has the wrong size");
  if (model.min_stretch(u0) < cfg.mu_floor) throw SolverError("initial guess violates the stretch floor");
  const Precond P(model, cfg.precond);
  SolveResult res;
  res.u = u0;
  VectorXd g;
  double f = model.energy_gradient(res.u, g);
  ++res.evaluations;
  VectorXd s = P.apply(g);
  double gs = g.dot(s);
  res.grad_norm = std::sqrt(std::max(0.0, gs));
  double f_trace = f;
  res.trace.push_back({0, f, res.grad_norm, 0});
  VectorXd d = -s;
  double df = -gs;
  double alpha = 1.0 / std::max(1.0, d.lpNorm<Eigen::Infinity>() / 0.1);
  LineSearch ls(model, cfg, res.evaluations);
  int since_restart = 0;
  for (int it = 1; res.grad_norm > cfg.tol; ++it) {
    if (it > cfg.maxiter) {
      res.energy = f;
      throw SolverError("minimize: maxiter " + std::to_string(cfg.maxiter) + " reached with |g| = " +
                        std::to_string(res.grad_norm));
    }
    Evaluation e = ls.search(res.u, f, df, d, alpha);
    const double step = (e.u - res.u).norm();
    const double a_used = step / std::max(d.norm(), 1e-300);
    res.u = std::move(e.u);
    f = e.f;
    if (!(e.delta < 0)) throw SolverError("minimize: energy increased on an accepted step");
    f_trace += e.delta;
    const VectorXd g_new = std::move(e.g);
    const VectorXd s_new = P.apply(g_new);
    const double gs_new = g_new.dot(s_new);
    res.grad_norm = std::sqrt(std::max(0.0, gs_new));
    res.iterations = it;
    res.trace.push_back({it, f_trace, res.grad_norm, step});
    if (res.grad_norm <= cfg.tol) break;

    // Polak-Ribiere+
    double beta = std::max(0.0, g_new.dot(s_new - s) / gs);
    ++since_restart;
    if (since_restart >= cfg.restart) {
      beta = 0;
      since_restart = 0;
      ++res.restarts;
    }
    VectorXd d_new = -s_new + beta * d;
    double df_new = g_new.dot(d_new);
    if (!(df_new < 0)) {
      d_new = -s_new;
      df_new = -gs_new;
      since_restart = 0;
      ++res.restarts;
    }
    alpha = std::min(1.0, 1.01 * a_used * df / df_new);
    if (!(alpha > 0)) alpha = 1.0;
    d = std::move(d_new);
    df = df_new;
    s = s_new;
    gs = gs_new;
  }
  res.energy = f;
  res.converged = true;
  return res;
}

NewtonResult newton_refine(const EnergyModel& model, const VectorXd& u0, double tol, int maxiter,
                           bool allow_indefinite) {
  NewtonResult res;
  res.u = u0;
  const auto T = translation_basis(model.num_points());
  VectorXd g = model.gradient(res.u);
  res.grad_norms.push_back(g.norm());
  const Eigen::Index n = model.num_dofs();
  for (int it = 0; it < maxiter && res.grad_norms.back() > tol; ++it) {
    // pin point 0 to remove the translation kernel, then project the step
    const SparseMatrix H = model.hessian(res.u);
    const SparseMatrix Hr = H.bottomRightCorner(n - 2, n - 2);
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(Hr);
    if (ldlt.info() != Eigen::Success) throw SolverError("newton: singular Hessian; run minimize() first");
    if (!allow_indefinite && ldlt.vectorD().minCoeff() <= 0)
      throw SolverError("newton: Hessian is not positive definite; run minimize() first");
    VectorXd step = VectorXd::Zero(n);
    step.tail(n - 2) = ldlt.solve(-g.tail(n - 2));
    if (!step.allFinite()) throw SolverError("newton: singular Hessian; run minimize() first");
    step = project_out_translations(step);
    res.translation_components.push_back(std::hypot(T[0].dot(step), T[1].dot(step)));
    res.u += step;
    g = model.gradient(res.u);
    res.grad_norms.push_back(g.norm());
    res.iterations = it + 1;
    if (!std::isfinite(res.grad_norms.back())) throw SolverError("newton: diverged");
  }
  if (res.grad_norms.back() > tol)
    throw SolverError("newton: no convergence in " + std::to_string(maxiter) + " steps, |g| = " +
                      std::to_string(res.grad_norms.back()));
  return res;
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "iter,energy,grad_norm,step\n";
  os.precision(17);
  for (const auto& r : trace) os << r.iter << ',' << r.energy << ',' << r.grad_norm << ',' << r.step << '\n';
}

namespace {

// Energy decrease predicted by the quadratic model at u: -(g.s + s.H s / 2) for the Newton step s.
double newton_decrement(const EnergyModel& model, const VectorXd& u) {
  const Eigen::Index n = model.num_dofs();
  const VectorXd g = model.gradient(u);
  const SparseMatrix Hr = model.hessian(u).bottomRightCorner(n - 2, n - 2);
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(Hr);
  if (ldlt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const VectorXd s = ldlt.solve(-g.tail(n - 2));
  if (!s.allFinite()) return std::numeric_limits<double>::infinity();
  return std::abs(0.5 * g.tail(n - 2).dot(s));
}

struct BranchPoint {
  double t = 0;
  VectorXd u;
  double energy = 0;
  double eig = 0;
};

}  // namespace

ContinuationResult continuation_critical_t(EnergyModel& model, const StrainPath& path, const VectorXd& u0,
                                           const ContinuationConfig& cfg) {
  if (!(cfg.dt > 0)) throw std::invalid_argument("continuation.dt must be positive");
  if (!(cfg.bisect_tol > 0)) throw std::invalid_argument("continuation.bisect_tol must be positive");
  ContinuationResult res;

  auto lowest = [&](const VectorXd& u) {
    return lowest_hessian_eigenvalue(model.hessian(u), 1e-10, cfg.dense_limit).value;
  };
  // Newton from the previous branch point keeps to the branch past the bifurcation as well.
  auto solve_at = [&](double t, const VectorXd& from) {
    model.set_strain(path(t));
    ++res.solves;
    BranchPoint p;
    p.t = t;
    const double e_from = model.energy(from);
    const double predicted = newton_decrement(model, from);
    p.u = newton_refine(model, from, cfg.newton_tol, 25, true).u;
    p.energy = model.energy(p.u);
    if (e_from - p.energy > predicted + cfg.max_energy_drop)
      throw BranchLossError("continuation: energy dropped by " + std::to_string(e_from - p.energy) +
                            " (quadratic model " + std::to_string(predicted) + ") at t = " + std::to_string(t));
    p.eig = lowest(p.u);
    res.history.push_back({t, p.eig, p.energy});
    return p;
  };

  // On a Newton failure or branch-loss signal, reach t through the midpoint first; an unstable
  // intermediate point is returned as is.
  std::function<BranchPoint(const BranchPoint&, double, int)> advance = [&](const BranchPoint& from, double t,
                                                                           int depth) {
    try {
      return solve_at(t, from.u);
    } catch (const SolverError&) {
      if (depth >= 6) throw;
    }
    BranchPoint mid = advance(from, 0.5 * (from.t + t), depth + 1);
    if (!(mid.eig > cfg.eigen_threshold)) return mid;
    return advance(mid, t, depth + 1);
  };

  model.set_strain(path(cfg.t0));
  BranchPoint lo;
  lo.t = cfg.t0;
  lo.u = newton_refine(model, minimize(model, u0, cfg.solve).u, cfg.newton_tol).u;
  lo.energy = model.energy(lo.u);
  lo.eig = lowest(lo.u);
  ++res.solves;
  res.history.push_back({cfg.t0, lo.eig, lo.energy});
  if (!(lo.eig > cfg.eigen_threshold)) throw SolverError("continuation: unstable at the start of the path");

  // A failed solve marks t as lying past the end of the branch (fold): eig = NaN, no displacement.
  auto attempt = [&](double t) {
    try {
      return advance(lo, t, 0);
    } catch (const std::runtime_error&) {
      BranchPoint lost;
      lost.t = t;
      lost.eig = std::numeric_limits<double>::quiet_NaN();
      return lost;
    }
  };
  const double eig0 = lo.eig;

  double t_lo = cfg.t0, t_hi = 0;
  BranchPoint hi;
  bool bracketed = false;
  for (int k = 1; cfg.t0 + k * cfg.dt <= cfg.t_max + 1e-15; ++k) {
    BranchPoint p = attempt(cfg.t0 + k * cfg.dt);
    if (p.eig > cfg.eigen_threshold) {
      t_lo = p.t;
      lo = std::move(p);
    } else {
      t_hi = p.t;
      hi = std::move(p);
      bracketed = true;
      break;
    }
  }
  if (!bracketed) throw SolverError("continuation: no instability up to t_max");

  while (t_hi - t_lo > cfg.bisect_tol) {
    BranchPoint p = attempt(0.5 * (t_lo + t_hi));
    if (p.eig > cfg.eigen_threshold) {
      t_lo = p.t;
      lo = std::move(p);
    } else {
      t_hi = p.t;
      hi = std::move(p);
    }
  }
  res.fold = hi.u.size() == 0;
  if (res.fold && lo.eig > cfg.fold_eigen_fraction * eig0)
    throw BranchLossError("continuation: branch lost at t = " + std::to_string(t_hi) +
                          " with the lowest eigenvalue still at " + std::to_string(lo.eig));
  model.set_strain(path(t_lo));
  res.t_lo = t_lo;
  res.t_hi = t_hi;
  res.t_crit = 0.5 * (t_lo + t_hi);
  res.eig_lo = lo.eig;
  res.eig_hi = hi.eig;
  res.u_lo = std::move(lo.u);
  res.u_hi = std::move(hi.u);
  return res;
}

}  // namespace acclab
