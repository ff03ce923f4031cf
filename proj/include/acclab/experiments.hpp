#pragma once

#include "acclab/defects.hpp"
#include "acclab/solver.hpp"

#include <mutex>

namespace acclab {

enum class ExperimentKind { Vacancy, CollapsedCavity, StabilityVacancy, StabilityBravais };
ExperimentKind parse_experiment_kind(const std::string& s);
std::string to_string(ExperimentKind k);

struct PotentialSpec {
  std::string kind = "lennard-jones";  // or "morse"
  double epsilon = 1.0, r0 = 1.0;
  double morse_alpha = 4.0;
  double cutoff = 3.1;

  PairPotential build() const;
  std::string canonical() const;
};

struct ErrorModel {
  double beta = 3, p = 2;
  double alpha = 1.5;
  double K = 4, N = 64;
  double hK = 1;
};

struct ErrorModelResult {
  // Closed-form estimate h_K K^{2/p-beta} (1 - (K/N)^{p(beta-alpha)-2})^{1/p} / (p(beta-alpha)-2);
  // falls back to err_integral when p(beta-alpha) <= 2.
  double err = 0;
  // (int_K^N (h_K (r/K)^alpha r^-beta)^p r dr)^{1/p}
  double err_integral = 0;
  // K^2 + int_K^N r / h(r)^2 dr
  double dof = 0;
  int regime = 1;  // row of the rate table selected by (beta, p)
  std::string regime_tag;
  double alpha_optimal = 0;  // beta p / (2 + p)
  bool alpha_consistent = true;
  // Asymptotic rate law for the optimised mesh, evaluated at this dof (no constants).
  double err_asymptotic = 0;
  // Radial-mesh variant DoF^{1/p-beta/2} (log N/K)^{beta/2-1/p}; only defined in regime 1.
  double err_radial = 0;
};

ErrorModelResult error_model(const ErrorModel& em);

struct RegionGrid {
  double s_min = -0.05, s_max = 0.2;
  double t_min = -0.05, t_max = 0.2;
  int s_steps = 15, t_steps = 15;
  double shear = 0.1;
};

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::Vacancy;
  std::string name = "vacancy";
  std::int64_t N = 64;
  std::vector<std::int64_t> K{4, 8, 16};
  std::vector<double> hK{1, 2};
  MeshFamily family = MeshFamily::Algebraic;
  double alpha = 1.5;
  Mat2 B = Mat2::Identity();
  Mat2 strain_rate = (Mat2() << 0, 0, 0, 1).finished();  // B(t) = B + t * strain_rate
  std::vector<Vec2i> pattern{{0, 0}};
  PotentialSpec potential;
  SolveConfig solve;
  ContinuationConfig continuation;
  RegionGrid region;
  double beta = 3, p = 2;
  double collapse_displacement = 0.3;  // cavity counts as collapsed once some atom moves this far
  std::filesystem::path output_dir = "out";
  std::filesystem::path cache_dir;  // empty: output_dir / "cache"
  int workers = 1;

  void validate() const;
  StrainPath path() const;
};

ExperimentSpec parse_spec(const std::string& toml_text, const std::filesystem::path& base = {});
ExperimentSpec load_spec(const std::filesystem::path& path);
std::string resolved_toml(const ExperimentSpec& spec);
// Default strain and pattern per experiment kind, applied when the config leaves them unset.
ExperimentSpec default_spec(ExperimentKind kind);

// Eight sites along a1 through the origin.
std::vector<Vec2i> cavity_pattern();

std::uint64_t fnv1a(const std::string& s);
std::string hex_digest(std::uint64_t h);

// Relaxed atomistic solutions on disk, keyed by (N, pattern, B, potential, solver tolerance).
class ReferenceCache {
 public:
  explicit ReferenceCache(std::filesystem::path dir) : dir_(std::move(dir)) {}
  const std::filesystem::path& dir() const { return dir_; }
  std::string key(const AtomisticModel& model, const PotentialSpec& pot, const SolveConfig& cfg) const;
  // Relaxed displacement, solved and stored on a miss. Concurrent misses may solve twice; writes
  // are serialised and atomic.
  VectorXd relaxed(const AtomisticModel& model, const PotentialSpec& pot, const SolveConfig& cfg, bool* hit = nullptr);

 private:
  std::filesystem::path dir_;
  std::mutex write_mutex_;
};

struct ConvergenceRow {
  std::int64_t K = 0;
  double hK = 0;
  std::int64_t dof = 0;
  double dof_model = 0;
  double err_abs = 0, err_rel = 0;
  double err_model = 0;
  double energy = 0;
  int iterations = 0;
  bool collapsed = true;
  bool ok = false;
  std::string message;
  std::string hash;
};

struct StabilityRow {
  std::int64_t K = 0;  // 0: full atomistic model
  std::int64_t dof = 0;
  double t_crit = 0, t_lo = 0, t_hi = 0;
  double eig_lo = 0, eig_hi = 0;
  bool fold = false;  // the branch ends at t_crit instead of crossing an eigenvalue
  // consecutive-row rates: |t_ac - t_a| ~ DoF^-a ~ K^-b
  double rate_a = std::numeric_limits<double>::quiet_NaN();
  double rate_b = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  std::string message;
  std::string hash;
};

struct StabilityTable {
  std::vector<StabilityRow> rows;  // coupled rows by K, then the atomistic row
  // least-squares rates over the last three coupled rows
  double fitted_a = std::numeric_limits<double>::quiet_NaN();
  double fitted_b = std::numeric_limits<double>::quiet_NaN();
};

struct RegionPoint {
  double s = 0, t = 0;
  double eig_a = 0, eig_ac = 0;
  bool ok = false;
  std::string message;
};

struct Segment {
  Vec2 a, b;
};

struct RegionResult {
  std::vector<RegionPoint> points;  // s-major
  std::vector<Segment> boundary_a, boundary_ac;
  double hausdorff = std::numeric_limits<double>::quiet_NaN();
  int containment_violations = 0;  // atomistic-stable points where the a/c model is unstable
};

// Slope of log|y| against log x by least squares over the last `last` points.
double fitted_rate(const std::vector<double>& x, const std::vector<double>& y, std::size_t last = 3);

// Displacement of the coupled field at every site of L, and the extension to the vacancies.
VectorXd coupled_site_values(const CoupledModel& model, const VectorXd& u);

std::vector<ConvergenceRow> run_vacancy_convergence(const ExperimentSpec& spec, ReferenceCache& cache);
std::vector<ConvergenceRow> run_cavity_convergence(const ExperimentSpec& spec, ReferenceCache& cache);
StabilityTable run_stability_vacancy(const ExperimentSpec& spec);
RegionResult run_stability_region(const ExperimentSpec& spec);

// Zero-level segments of a sampled field on a regular grid (marching squares, linear interpolation).
std::vector<Segment> zero_contour(const std::vector<double>& s, const std::vector<double>& t,
                                  const std::vector<double>& values);
// Symmetric Hausdorff distance between the point sets of two segment lists (segments sampled at 11 points).
double hausdorff_distance(const std::vector<Segment>& a, const std::vector<Segment>& b);

void write_convergence_csv(const std::vector<ConvergenceRow>& rows, const std::filesystem::path& path);
void write_stability_csv(const StabilityTable& table, const std::filesystem::path& path);
void write_region_csv(const RegionResult& r, const std::filesystem::path& dir);

// Runs the experiment into spec.output_dir (table.csv, config.resolved.toml, fields/, plot.py).
// Returns true when every row succeeded.
bool run_experiment(const ExperimentSpec& spec);

// Runs f(i) for i in [0, n) on up to `workers` threads; the first exception is rethrown after all finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& f);

}  // namespace acclab
