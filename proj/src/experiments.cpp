#include "acclab/experiments.hpp"

#include <toml.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

namespace acclab {

ExperimentKind parse_experiment_kind(const std::string& s) {
  if (s == "vacancy") return ExperimentKind::Vacancy;
  if (s == "cavity" || s == "collapsed-cavity") return ExperimentKind::CollapsedCavity;
  if (s == "stability-vacancy") return ExperimentKind::StabilityVacancy;
  if (s == "stability-region" || s == "stability-bravais") return ExperimentKind::StabilityBravais;
  throw std::invalid_argument("unknown experiment kind '" + s + "'");
}

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Vacancy: return "vacancy";
    case ExperimentKind::CollapsedCavity: return "cavity";
    case ExperimentKind::StabilityVacancy: return "stability-vacancy";
    case ExperimentKind::StabilityBravais: return "stability-region";
  }
  return "?";
}

PairPotential PotentialSpec::build() const {
  PairPotential p;
  if (kind == "lennard-jones" || kind == "lj")
    p = PairPotential::lennard_jones(epsilon, r0);
  else if (kind == "morse")
    p = PairPotential::morse(morse_alpha, epsilon, r0);
  else
    throw std::invalid_argument("unknown potential '" + kind + "'");
  if (!(cutoff > 0)) throw std::invalid_argument("potential.cutoff must be positive");
  p.set_cutoff(cutoff);
  return p;
}

std::string PotentialSpec::canonical() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s eps=%.17g r0=%.17g a=%.17g rc=%.17g", kind.c_str(), epsilon, r0,
                kind == "morse" ? morse_alpha : 0.0, cutoff);
  return buf;
}

ErrorModelResult error_model(const ErrorModel& em) {
  if (!(em.beta > 0 && em.p > 0 && em.alpha > 0 && em.K > 0 && em.N > em.K && em.hK > 0))
    throw std::invalid_argument("error model parameters must be positive with N > K");
  const double b = em.beta, p = em.p, a = em.alpha, K = em.K, N = em.N, h = em.hK;
  ErrorModelResult r;
  r.alpha_optimal = b * p / (2 + p);
  r.alpha_consistent = std::abs(a - r.alpha_optimal) <= 1e-12 * r.alpha_optimal;

  // int_K^N (h (r/K)^a r^-b)^p r dr = h^p K^{-ap} int r^{p(a-b)+1}
  const double e = p * (a - b) + 2;
  const double I = std::abs(e) < 1e-14 ? std::pow(h, p) * std::pow(K, -a * p) * std::log(N / K)
                                       : std::pow(h, p) * std::pow(K, -a * p) * (std::pow(N, e) - std::pow(K, e)) / e;
  r.err_integral = std::pow(I, 1 / p);
  const double q = p * (b - a) - 2;
  r.err = q > 0 ? h * std::pow(K, 2 / p - b) * std::pow(1 - std::pow(K / N, q), 1 / p) / q : r.err_integral;

  const double d = 2 - 2 * a;
  r.dof = K * K + (std::abs(d) < 1e-14 ? K * K / (h * h) * std::log(N / K)
                                       : std::pow(K, 2 * a) / (h * h) * (std::pow(N, d) - std::pow(K, d)) / d);

  const double pc = b > 1 ? 2 / (b - 1) : std::numeric_limits<double>::infinity();
  if (b > 1 && std::abs(p - pc) <= 1e-12 * pc) {
    r.regime = 2;
    r.regime_tag = "alpha=1: Err ~ DoF^-1/2 (log N/K)^(1/2+1/p), DoF ~ K^2 log N/K";
    r.err_asymptotic = std::pow(r.dof, -0.5) * std::pow(std::log(N / K), 0.5 + 1 / p);
  } else if (b > 1 && p > pc) {
    r.regime = 1;
    r.regime_tag = "alpha>1: Err ~ DoF^(1/p-beta/2), DoF ~ K^2";
    r.err_asymptotic = std::pow(r.dof, 1 / p - b / 2);
    r.err_radial = std::pow(r.dof, 1 / p - b / 2) * std::pow(std::log(N / K), b / 2 - 1 / p);
  } else {
    r.regime = 3;
    r.regime_tag = "alpha<1: Err ~ DoF^-1/2 N^(1/2+1/p-beta/2), DoF ~ K^2 (N/K)^(2-2alpha)";
    r.err_asymptotic = std::pow(r.dof, -0.5) * std::pow(N, 0.5 + 1 / p - b / 2);
  }
  return r;
}

std::vector<Vec2i> cavity_pattern() {
  std::vector<Vec2i> v;
  for (std::int64_t i = -3; i <= 4; ++i) v.push_back({i, 0});
  return v;
}

ExperimentSpec default_spec(ExperimentKind kind) {
  ExperimentSpec s;
  s.kind = kind;
  s.name = to_string(kind);
  switch (kind) {
    case ExperimentKind::Vacancy:
      s.B << 1.01, 0.01, 0, 0.99;
      break;
    case ExperimentKind::CollapsedCavity:
      s.pattern = cavity_pattern();
      s.B = 0.97 * Mat2::Identity();
      s.K = {8, 16};
      break;
    case ExperimentKind::StabilityVacancy:
      s.N = 32;
      s.K = {4, 8, 16};
      s.hK = {2};
      s.family = MeshFamily::Radial;
      s.continuation.t_max = 0.2;
      break;
    case ExperimentKind::StabilityBravais:
      s.N = 24;
      s.K = {8};
      s.hK = {2};
      s.pattern.clear();
      break;
  }
  return s;
}

void ExperimentSpec::validate() const {
  if (N < 2) throw std::invalid_argument("experiment.N must be at least 2");
  if (K.empty() || hK.empty()) throw std::invalid_argument("experiment.K and experiment.h_K must be nonempty");
  for (auto k : K)
    if (k < 1 || k >= N) throw std::invalid_argument("experiment.K values must satisfy 1 <= K < N");
  for (double h : hK)
    if (!(h >= 1)) throw std::invalid_argument("experiment.h_K values must be >= 1");
  if (!(alpha > 0)) throw std::invalid_argument("experiment.alpha must be positive");
  if (!(B.determinant() > 0)) throw std::invalid_argument("experiment.strain must have positive determinant");
  if (workers < 1) throw std::invalid_argument("experiment.workers must be >= 1");
  if (!(beta > 0 && p > 0)) throw std::invalid_argument("error_model.beta and error_model.p must be positive");
  solve.validate();
  potential.build();
  if (kind == ExperimentKind::StabilityVacancy) {
    if (family != MeshFamily::Radial) throw std::invalid_argument("the vacancy stability test uses radial meshes only");
    if (hK.size() != 1) throw std::invalid_argument("the vacancy stability test takes a single h_K");
    if (!(continuation.dt > 0)) throw std::invalid_argument("continuation.dt must be positive");
  }
  if (kind == ExperimentKind::StabilityBravais && (region.s_steps < 2 || region.t_steps < 2))
    throw std::invalid_argument("region grids need at least 2 steps per axis");
  if (kind == ExperimentKind::CollapsedCavity && pattern.empty())
    throw std::invalid_argument("the cavity experiment needs a nonempty pattern");
}

StrainPath ExperimentSpec::path() const {
  const Mat2 B0 = B, dB = strain_rate;
  return [B0, dB](double t) -> Mat2 { return B0 + t * dB; };
}

// ---------------------------------------------------------------------------------------------
// TOML

namespace {

void check_keys(const toml::table& t, const std::string& where, std::initializer_list<const char*> allowed) {
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : t)
    if (!ok.count(std::string(k.str()))) throw std::invalid_argument("unknown key '" + where + "." + std::string(k.str()) + "'");
}

template <class T>
void read(const toml::table& t, const char* key, T& out, const std::string& where) {
  const auto* node = t.get(key);
  if (!node) return;
  auto v = node->value<T>();
  if (!v) throw std::invalid_argument(where + "." + key + " has the wrong type");
  out = *v;
}

Mat2 read_matrix(const toml::node& n, const std::string& name) {
  const auto* rows = n.as_array();
  if (!rows || rows->size() != 2) throw std::invalid_argument(name + " must be a 2x2 array");
  Mat2 M;
  for (int i = 0; i < 2; ++i) {
    const auto* row = (*rows)[i].as_array();
    if (!row || row->size() != 2) throw std::invalid_argument(name + " must be a 2x2 array");
    for (int j = 0; j < 2; ++j) {
      auto v = (*row)[j].value<double>();
      if (!v) throw std::invalid_argument(name + " entries must be numbers");
      M(i, j) = *v;
    }
  }
  return M;
}

toml::array matrix_array(const Mat2& M) {
  return toml::array{toml::array{M(0, 0), M(0, 1)}, toml::array{M(1, 0), M(1, 1)}};
}

}  // namespace

ExperimentSpec parse_spec(const std::string& text, const std::filesystem::path& base) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + std::string(e.description()));
  }
  check_keys(root, "", {"experiment", "potential", "solve", "continuation", "region", "error_model"});
  const auto* ex = root["experiment"].as_table();
  if (!ex) throw std::invalid_argument("config needs an [experiment] table");
  const auto kind = ex->get("kind") ? ex->get("kind")->value<std::string>() : std::nullopt;
  if (!kind) throw std::invalid_argument("experiment.kind is required");
  ExperimentSpec s = default_spec(parse_experiment_kind(*kind));
  check_keys(*ex, "experiment",
             {"kind", "name", "N", "K", "h_K", "mesh", "alpha", "strain", "strain_rate", "pattern", "pattern_file",
              "workers", "output", "cache", "collapse_displacement"});
  read(*ex, "name", s.name, "experiment");
  read(*ex, "N", s.N, "experiment");
  read(*ex, "alpha", s.alpha, "experiment");
  std::int64_t workers = s.workers;
  read(*ex, "workers", workers, "experiment");
  s.workers = static_cast<int>(workers);
  read(*ex, "collapse_displacement", s.collapse_displacement, "experiment");
  if (const auto* n = ex->get("K")) {
    const auto* a = n->as_array();
    if (!a) throw std::invalid_argument("experiment.K must be an array");
    s.K.clear();
    for (const auto& x : *a) {
      auto v = x.value<std::int64_t>();
      if (!v) throw std::invalid_argument("experiment.K entries must be integers");
      s.K.push_back(*v);
    }
  }
  if (const auto* n = ex->get("h_K")) {
    const auto* a = n->as_array();
    if (!a) throw std::invalid_argument("experiment.h_K must be an array");
    s.hK.clear();
    for (const auto& x : *a) {
      auto v = x.value<double>();
      if (!v) throw std::invalid_argument("experiment.h_K entries must be numbers");
      s.hK.push_back(*v);
    }
  }
  if (const auto* n = ex->get("mesh")) s.family = parse_mesh_family(n->value<std::string>().value_or("?"));
  if (const auto* n = ex->get("strain")) s.B = read_matrix(*n, "experiment.strain");
  if (const auto* n = ex->get("strain_rate")) s.strain_rate = read_matrix(*n, "experiment.strain_rate");
  if (ex->get("pattern") && ex->get("pattern_file"))
    throw std::invalid_argument("give either experiment.pattern or experiment.pattern_file");
  if (const auto* n = ex->get("pattern")) {
    const auto* a = n->as_array();
    if (!a) throw std::invalid_argument("experiment.pattern must be an array of [i, j]");
    s.pattern.clear();
    for (const auto& x : *a) {
      const auto* pr = x.as_array();
      if (!pr || pr->size() != 2) throw std::invalid_argument("experiment.pattern entries must be [i, j]");
      auto i = (*pr)[0].value<std::int64_t>(), j = (*pr)[1].value<std::int64_t>();
      if (!i || !j) throw std::invalid_argument("experiment.pattern entries must be integers");
      s.pattern.push_back({*i, *j});
    }
  }
  if (const auto* n = ex->get("pattern_file")) {
    std::filesystem::path f = n->value<std::string>().value_or("");
    if (f.is_relative()) f = base / f;
    s.pattern = read_vacancy_pattern(f);
  }
  if (const auto* n = ex->get("output")) {
    std::filesystem::path f = n->value<std::string>().value_or("out");
    s.output_dir = f.is_relative() ? base / f : f;
  }
  if (const auto* n = ex->get("cache")) {
    std::filesystem::path f = n->value<std::string>().value_or("");
    s.cache_dir = f.is_relative() ? base / f : f;
  }

  if (const auto* t = root["potential"].as_table()) {
    check_keys(*t, "potential", {"kind", "epsilon", "r0", "alpha", "cutoff"});
    read(*t, "kind", s.potential.kind, "potential");
    read(*t, "epsilon", s.potential.epsilon, "potential");
    read(*t, "r0", s.potential.r0, "potential");
    read(*t, "alpha", s.potential.morse_alpha, "potential");
    read(*t, "cutoff", s.potential.cutoff, "potential");
  }
  if (const auto* t = root["solve"].as_table()) {
    check_keys(*t, "solve", {"tol", "maxiter", "precond", "c1", "c2", "restart", "mu_floor"});
    read(*t, "tol", s.solve.tol, "solve");
    std::int64_t maxiter = s.solve.maxiter, restart = s.solve.restart;
    read(*t, "maxiter", maxiter, "solve");
    read(*t, "restart", restart, "solve");
    s.solve.maxiter = static_cast<int>(maxiter);
    s.solve.restart = static_cast<int>(restart);
    read(*t, "c1", s.solve.c1, "solve");
    read(*t, "c2", s.solve.c2, "solve");
    read(*t, "mu_floor", s.solve.mu_floor, "solve");
    if (const auto* n = t->get("precond")) s.solve.precond = parse_preconditioner(n->value<std::string>().value_or("?"));
  }
  if (const auto* t = root["continuation"].as_table()) {
    check_keys(*t, "continuation", {"dt", "bisect_tol", "t0", "t_max", "max_energy_drop", "newton_tol"});
    read(*t, "dt", s.continuation.dt, "continuation");
    read(*t, "bisect_tol", s.continuation.bisect_tol, "continuation");
    read(*t, "t0", s.continuation.t0, "continuation");
    read(*t, "t_max", s.continuation.t_max, "continuation");
    read(*t, "max_energy_drop", s.continuation.max_energy_drop, "continuation");
    read(*t, "newton_tol", s.continuation.newton_tol, "continuation");
  }
  if (const auto* t = root["region"].as_table()) {
    check_keys(*t, "region", {"s_min", "s_max", "s_steps", "t_min", "t_max", "t_steps", "shear"});
    read(*t, "s_min", s.region.s_min, "region");
    read(*t, "s_max", s.region.s_max, "region");
    read(*t, "t_min", s.region.t_min, "region");
    read(*t, "t_max", s.region.t_max, "region");
    read(*t, "shear", s.region.shear, "region");
    std::int64_t ns = s.region.s_steps, nt = s.region.t_steps;
    read(*t, "s_steps", ns, "region");
    read(*t, "t_steps", nt, "region");
    s.region.s_steps = static_cast<int>(ns);
    s.region.t_steps = static_cast<int>(nt);
  }
  if (const auto* t = root["error_model"].as_table()) {
    check_keys(*t, "error_model", {"beta", "p"});
    read(*t, "beta", s.beta, "error_model");
    read(*t, "p", s.p, "error_model");
  }
  s.continuation.solve = s.solve;
  s.validate();
  return s;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_spec(ss.str(), path.parent_path());
}

std::string resolved_toml(const ExperimentSpec& s) {
  toml::array K, hK, pattern;
  for (auto k : s.K) K.push_back(k);
  for (double h : s.hK) hK.push_back(h);
  for (auto v : s.pattern) pattern.push_back(toml::array{v.i, v.j});
  toml::table ex{{"kind", to_string(s.kind)},
                 {"name", s.name},
                 {"N", s.N},
                 {"K", K},
                 {"h_K", hK},
                 {"mesh", to_string(s.family)},
                 {"alpha", s.alpha},
                 {"strain", matrix_array(s.B)},
                 {"strain_rate", matrix_array(s.strain_rate)},
                 {"pattern", pattern},
                 {"workers", s.workers},
                 {"output", s.output_dir.string()},
                 {"collapse_displacement", s.collapse_displacement}};
  if (!s.cache_dir.empty()) ex.insert("cache", s.cache_dir.string());
  toml::table root{
      {"experiment", ex},
      {"potential", toml::table{{"kind", s.potential.kind},
                                {"epsilon", s.potential.epsilon},
                                {"r0", s.potential.r0},
                                {"alpha", s.potential.morse_alpha},
                                {"cutoff", s.potential.cutoff}}},
      {"solve", toml::table{{"tol", s.solve.tol},
                            {"maxiter", s.solve.maxiter},
                            {"precond", to_string(s.solve.precond)},
                            {"c1", s.solve.c1},
                            {"c2", s.solve.c2},
                            {"restart", s.solve.restart},
                            {"mu_floor", s.solve.mu_floor}}},
      {"continuation", toml::table{{"dt", s.continuation.dt},
                                   {"bisect_tol", s.continuation.bisect_tol},
                                   {"t0", s.continuation.t0},
                                   {"t_max", s.continuation.t_max},
                                   {"max_energy_drop", s.continuation.max_energy_drop},
                                   {"newton_tol", s.continuation.newton_tol}}},
      {"region", toml::table{{"s_min", s.region.s_min},
                             {"s_max", s.region.s_max},
                             {"s_steps", s.region.s_steps},
                             {"t_min", s.region.t_min},
                             {"t_max", s.region.t_max},
                             {"t_steps", s.region.t_steps},
                             {"shear", s.region.shear}}},
      {"error_model", toml::table{{"beta", s.beta}, {"p", s.p}}}};
  std::ostringstream os;
  os << root << '\n';
  return os.str();
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex_digest(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------------------------
// Reference cache

std::string ReferenceCache::key(const AtomisticModel& model, const PotentialSpec& pot, const SolveConfig& cfg) const {
  const auto& dom = model.domain();
  std::ostringstream os;
  os.precision(17);
  os << (dom.cell().is_hexagonal() ? "hex" : "rhombic") << " N=" << dom.N() << " V=";
  for (auto v : dom.vacancies()) os << '(' << v.i << ',' << v.j << ')';
  const Mat2& B = model.strain();
  os << " B=" << B(0, 0) << ',' << B(0, 1) << ',' << B(1, 0) << ',' << B(1, 1);
  os << " pot=" << pot.canonical() << " tol=" << cfg.tol << " floor=" << cfg.mu_floor;
  return hex_digest(fnv1a(os.str()));
}

VectorXd ReferenceCache::relaxed(const AtomisticModel& model, const PotentialSpec& pot, const SolveConfig& cfg,
                                 bool* hit) {
  const auto file = dir_ / (key(model, pot, cfg) + ".snap");
  if (std::filesystem::exists(file)) {
    const Snapshot s = read_snapshot(file);
    if (s.sites == model.points() && s.N == model.domain().N()) {
      VectorXd u(model.num_dofs());
      for (std::size_t k = 0; k < s.u.size(); ++k) u.segment<2>(2 * static_cast<Eigen::Index>(k)) = s.u[k];
      if (hit) *hit = true;
      return u;
    }
  }
  if (hit) *hit = false;
  const auto r = minimize(model, VectorXd::Zero(model.num_dofs()), cfg);
  const std::lock_guard<std::mutex> lock(write_mutex_);
  std::filesystem::create_directories(dir_);
  auto tmp = file;
  tmp += ".tmp";
  write_snapshot(make_snapshot(model, model.domain().N(), 0, r.u), tmp);
  std::filesystem::rename(tmp, file);
  return r.u;
}

// ---------------------------------------------------------------------------------------------
// Utilities

double fitted_rate(const std::vector<double>& x, const std::vector<double>& y, std::size_t last) {
  if (x.size() != y.size()) throw std::invalid_argument("fitted_rate: size mismatch");
  const std::size_t n = std::min(last, x.size());
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = x.size() - n; k < x.size(); ++k) {
    const double lx = std::log(x[k]), ly = std::log(std::abs(y[k]));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& f) {
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex m;
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < w; ++k)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          f(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(m);
          if (!first) first = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

VectorXd coupled_site_values(const CoupledModel& model, const VectorXd& u) {
  const auto& dom = model.domain();
  VectorXd us(2 * dom.num_sites());
  for (std::int64_t k = 0; k < dom.num_sites(); ++k) us.segment<2>(2 * k) = model.displacement_at(u, dom.site(k));
  return us;
}

namespace {

std::string row_hash(const ExperimentSpec& spec, const std::string& row) {
  return hex_digest(fnv1a(resolved_toml(spec) + "|" + row));
}

std::string row_label(std::int64_t K, double hK) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "K%lld_h%g", static_cast<long long>(K), hK);
  return buf;
}

std::filesystem::path fields_dir(const ExperimentSpec& spec) {
  if (spec.output_dir.empty()) return {};
  auto d = spec.output_dir / "fields";
  std::filesystem::create_directories(d);
  return d;
}

double max_displacement(const VectorXd& u) {
  double m = 0;
  for (Eigen::Index k = 0; k + 1 < u.size(); k += 2) m = std::max(m, std::hypot(u(k), u(k + 1)));
  return m;
}

std::filesystem::path cache_path(const ExperimentSpec& spec) {
  return spec.cache_dir.empty() ? spec.output_dir / "cache" : spec.cache_dir;
}

std::vector<ConvergenceRow> run_convergence(const ExperimentSpec& spec, ReferenceCache& cache, bool cavity) {
  spec.validate();
  const PairPotential pot = spec.potential.build();
  const auto dom = std::make_shared<const LatticeDomain>(build_hex_domain(spec.N, spec.pattern));
  const AtomisticModel atomistic(dom, pot, spec.B);
  const VectorXd u_ref = cache.relaxed(atomistic, spec.potential, spec.solve);
  const ExtensionOperator E(*dom);
  const VectorXd v_ref = E.apply(u_ref);
  const auto fdir = fields_dir(spec);
  if (!fdir.empty()) write_snapshot(make_snapshot(atomistic, spec.N, 0, u_ref), fdir / "reference.snap");
  const bool ref_collapsed = max_displacement(u_ref) >= spec.collapse_displacement;
  if (cavity && !ref_collapsed)
    std::cerr << "warning: the atomistic cavity did not collapse (max displacement " << max_displacement(u_ref)
              << " < " << spec.collapse_displacement << ")\n";

  std::vector<ConvergenceRow> rows;
  for (double h : spec.hK)
    for (auto K : spec.K) {
      ConvergenceRow r;
      r.K = K;
      r.hK = h;
      rows.push_back(r);
    }
  parallel_for(rows.size(), spec.workers, [&](std::size_t i) {
    ConvergenceRow& r = rows[i];
    r.hash = row_hash(spec, row_label(r.K, r.hK));
    try {
      const MeshPlan plan{r.K, r.hK, spec.alpha, spec.family};
      const auto mesh = std::make_shared<const CoupledMesh>(build_graded_mesh(*dom, plan));
      const CoupledModel c(mesh, pot, spec.B);
      const auto sol = minimize(c, VectorXd::Zero(c.num_dofs()), spec.solve);
      const VectorXd v_h = E.apply(coupled_site_values(c, sol.u));
      const auto err = h1_error(c, u_ref, v_ref, sol.u, v_h);
      const auto em = error_model({spec.beta, spec.p, plan.effective_alpha(), static_cast<double>(r.K),
                                   static_cast<double>(spec.N), r.hK});
      r.dof = c.num_points();
      r.dof_model = em.dof;
      r.err_abs = err.absolute;
      r.err_rel = err.relative;
      r.err_model = em.err;
      r.energy = sol.energy;
      r.iterations = sol.iterations;
      r.collapsed = !cavity || max_displacement(sol.u) >= spec.collapse_displacement;
      r.ok = true;
      if (!fdir.empty()) {
        write_snapshot(make_snapshot(c, spec.N, r.K, sol.u), fdir / (row_label(r.K, r.hK) + ".snap"));
        write_mesh(*mesh, fdir / row_label(r.K, r.hK));
      }
    } catch (const std::exception& e) {
      r.ok = false;
      r.message = e.what();
    }
  });
  return rows;
}

}  // namespace

std::vector<ConvergenceRow> run_vacancy_convergence(const ExperimentSpec& spec, ReferenceCache& cache) {
  return run_convergence(spec, cache, false);
}

std::vector<ConvergenceRow> run_cavity_convergence(const ExperimentSpec& spec, ReferenceCache& cache) {
  return run_convergence(spec, cache, true);
}

StabilityTable run_stability_vacancy(const ExperimentSpec& spec) {
  spec.validate();
  const PairPotential pot = spec.potential.build();
  const auto dom = std::make_shared<const LatticeDomain>(build_hex_domain(spec.N, spec.pattern));
  const auto path = spec.path();
  ContinuationConfig cfg = spec.continuation;
  cfg.solve = spec.solve;
  const double hK = spec.hK.front();
  const auto fdir = fields_dir(spec);

  StabilityTable table;
  table.rows.resize(spec.K.size() + 1);
  parallel_for(table.rows.size(), spec.workers, [&](std::size_t i) {
    StabilityRow& r = table.rows[i];
    const bool exact = i == spec.K.size();
    r.K = exact ? 0 : spec.K[i];
    r.hash = row_hash(spec, exact ? std::string("exact") : row_label(r.K, hK));
    try {
      std::unique_ptr<EnergyModel> model;
      if (exact) {
        model = std::make_unique<AtomisticModel>(dom, pot, path(cfg.t0));
      } else {
        const auto mesh = std::make_shared<const CoupledMesh>(
            build_graded_mesh(*dom, MeshPlan{r.K, hK, spec.alpha, spec.family}));
        model = std::make_unique<CoupledModel>(mesh, pot, path(cfg.t0));
      }
      r.dof = model->num_points();
      const auto c = continuation_critical_t(*model, path, VectorXd::Zero(model->num_dofs()), cfg);
      r.t_crit = c.t_crit;
      r.t_lo = c.t_lo;
      r.t_hi = c.t_hi;
      r.eig_lo = c.eig_lo;
      r.eig_hi = c.eig_hi;
      r.fold = c.fold;
      r.ok = true;
      if (!fdir.empty())
        write_snapshot(make_snapshot(*model, spec.N, r.K, c.u_lo),
                       fdir / ((exact ? std::string("exact") : row_label(r.K, hK)) + "_critical.snap"));
    } catch (const std::exception& e) {
      r.ok = false;
      r.message = e.what();
    }
  });

  const StabilityRow& ex = table.rows.back();
  if (!ex.ok) return table;
  std::vector<double> dof, K, gap;
  for (std::size_t i = 0; i + 1 < table.rows.size(); ++i) {
    StabilityRow& r = table.rows[i];
    if (!r.ok) continue;
    const double g = std::abs(r.t_crit - ex.t_crit);
    if (!dof.empty()) {
      r.rate_a = -std::log(g / gap.back()) / std::log(r.dof / dof.back());
      r.rate_b = -std::log(g / gap.back()) / std::log(r.K / K.back());
    }
    dof.push_back(static_cast<double>(r.dof));
    K.push_back(static_cast<double>(r.K));
    gap.push_back(g);
  }
  if (gap.size() >= 2) {
    table.fitted_a = -fitted_rate(dof, gap, 3);
    table.fitted_b = -fitted_rate(K, gap, 3);
  }
  return table;
}

std::vector<Segment> zero_contour(const std::vector<double>& s, const std::vector<double>& t,
                                  const std::vector<double>& v) {
  const std::size_t ns = s.size(), nt = t.size();
  if (v.size() != ns * nt) throw std::invalid_argument("zero_contour: grid size mismatch");
  auto at = [&](std::size_t i, std::size_t j) { return v[i * nt + j]; };
  auto pt = [&](std::size_t i, std::size_t j) { return Vec2(s[i], t[j]); };
  std::vector<Segment> out;
  for (std::size_t i = 0; i + 1 < ns; ++i)
    for (std::size_t j = 0; j + 1 < nt; ++j) {
      const std::array<std::pair<std::size_t, std::size_t>, 4> c{{{i, j}, {i + 1, j}, {i + 1, j + 1}, {i, j + 1}}};
      std::array<double, 4> f;
      bool finite = true;
      for (int k = 0; k < 4; ++k) {
        f[k] = at(c[k].first, c[k].second);
        finite = finite && std::isfinite(f[k]);
      }
      if (!finite) continue;
      std::vector<Vec2> x;
      for (int k = 0; k < 4; ++k) {
        const int l = (k + 1) % 4;
        if ((f[k] > 0) != (f[l] > 0)) {
          const double w = f[k] / (f[k] - f[l]);
          x.push_back((1 - w) * pt(c[k].first, c[k].second) + w * pt(c[l].first, c[l].second));
        }
      }
      if (x.size() == 2) {
        out.push_back({x[0], x[1]});
      } else if (x.size() == 4) {
        // saddle: connect according to the sign of the cell average
        const bool centre = (f[0] + f[1] + f[2] + f[3]) / 4 > 0;
        if (centre == (f[0] > 0)) {
          out.push_back({x[0], x[3]});
          out.push_back({x[1], x[2]});
        } else {
          out.push_back({x[0], x[1]});
          out.push_back({x[2], x[3]});
        }
      }
    }
  return out;
}

double hausdorff_distance(const std::vector<Segment>& a, const std::vector<Segment>& b) {
  if (a.empty() && b.empty()) return 0;
  if (a.empty() || b.empty()) return std::numeric_limits<double>::infinity();
  auto sample = [](const std::vector<Segment>& segs) {
    std::vector<Vec2> p;
    for (const auto& sg : segs)
      for (int k = 0; k <= 10; ++k) p.push_back(sg.a + (k / 10.0) * (sg.b - sg.a));
    return p;
  };
  const auto pa = sample(a), pb = sample(b);
  auto directed = [](const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
    double h = 0;
    for (const auto& x : from) {
      double d = std::numeric_limits<double>::infinity();
      for (const auto& y : to) d = std::min(d, (x - y).norm());
      h = std::max(h, d);
    }
    return h;
  };
  return std::max(directed(pa, pb), directed(pb, pa));
}

RegionResult run_stability_region(const ExperimentSpec& spec) {
  spec.validate();
  const PairPotential pot = spec.potential.build();
  const auto dom = std::make_shared<const LatticeDomain>(build_hex_domain(spec.N, spec.pattern));
  const auto mesh = std::make_shared<const CoupledMesh>(
      build_graded_mesh(*dom, MeshPlan{spec.K.front(), spec.hK.front(), spec.alpha, spec.family}));
  const auto& g = spec.region;
  std::vector<double> S(g.s_steps), T(g.t_steps);
  for (int i = 0; i < g.s_steps; ++i) S[i] = g.s_min + (g.s_max - g.s_min) * i / (g.s_steps - 1);
  for (int j = 0; j < g.t_steps; ++j) T[j] = g.t_min + (g.t_max - g.t_min) * j / (g.t_steps - 1);

  RegionResult res;
  res.points.resize(S.size() * T.size());
  const std::int64_t dense = spec.continuation.dense_limit;
  parallel_for(res.points.size(), spec.workers, [&](std::size_t k) {
    RegionPoint& p = res.points[k];
    p.s = S[k / T.size()];
    p.t = T[k % T.size()];
    Mat2 B;
    B << 1 + p.s, g.shear, 0, 1 + p.t;
    auto lowest = [&](const EnergyModel& m) {
      VectorXd u = VectorXd::Zero(m.num_dofs());
      // without defects y_B is an equilibrium of both models
      if (dom->has_vacancies()) u = newton_refine(m, minimize(m, u, spec.solve).u, 1e-10, 25, true).u;
      return lowest_hessian_eigenvalue(m.hessian(u), 1e-8, dense).value;
    };
    try {
      p.eig_a = lowest(AtomisticModel(dom, pot, B));
      p.eig_ac = lowest(CoupledModel(mesh, pot, B));
      p.ok = true;
    } catch (const std::exception& e) {
      p.ok = false;
      p.message = e.what();
      p.eig_a = p.eig_ac = std::numeric_limits<double>::quiet_NaN();
    }
  });

  std::vector<double> ea, eac;
  for (const auto& p : res.points) {
    ea.push_back(p.eig_a);
    eac.push_back(p.eig_ac);
    if (p.ok && p.eig_a > 0 && !(p.eig_ac > 0)) ++res.containment_violations;
  }
  res.boundary_a = zero_contour(S, T, ea);
  res.boundary_ac = zero_contour(S, T, eac);
  res.hausdorff = hausdorff_distance(res.boundary_a, res.boundary_ac);
  return res;
}

// ---------------------------------------------------------------------------------------------
// Output

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(12);
  return os;
}

std::string csv_text(std::string s) {
  for (auto& c : s)
    if (c == ',' || c == '\n' || c == '"') c = ' ';
  return s;
}

const char* kPlotScript = R"(import sys
import pandas as pd
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

kind = sys.argv[1] if len(sys.argv) > 1 else "%KIND%"
df = pd.read_csv("table.csv")
fig, ax = plt.subplots()
if kind in ("vacancy", "cavity"):
    for h, g in df[df.status == "ok"].groupby("h_K"):
        ax.loglog(g.dof, g.err_rel, "o-", label=f"h_K={h:g}")
        ax.loglog(g.dof, g.err_model, ":", color=ax.lines[-1].get_color())
    ax.set_xlabel("DoF")
    ax.set_ylabel("relative H1 error")
    ax.legend()
elif kind == "stability-vacancy":
    exact = df[df.K == 0].t_crit.iloc[0]
    g = df[(df.K > 0) & (df.status == "ok")]
    ax.loglog(g.dof, (g.t_crit - exact).abs(), "o-")
    ax.set_xlabel("DoF")
    ax.set_ylabel("|t_ac - t_a|")
else:
    b = pd.read_csv("boundary.csv")
    for model, style in (("atomistic", "k-"), ("ac", "r--")):
        for _, r in b[b.model == model].iterrows():
            ax.plot([r.s0, r.s1], [r.t0, r.t1], style)
    ax.set_xlabel("s")
    ax.set_ylabel("t")
fig.savefig(f"{kind}.png", dpi=150)
)";

}  // namespace

void write_convergence_csv(const std::vector<ConvergenceRow>& rows, const std::filesystem::path& path) {
  auto os = open_csv(path);
  os << "K,h_K,dof,dof_model,err_abs,err_rel,err_model,energy,iterations,collapsed,status,message,hash\n";
  for (const auto& r : rows)
    os << r.K << ',' << r.hK << ',' << r.dof << ',' << r.dof_model << ',' << r.err_abs << ',' << r.err_rel << ','
       << r.err_model << ',' << r.energy << ',' << r.iterations << ',' << (r.collapsed ? 1 : 0) << ','
       << (r.ok ? "ok" : "failed") << ',' << csv_text(r.message) << ',' << r.hash << '\n';
}

void write_stability_csv(const StabilityTable& t, const std::filesystem::path& path) {
  auto os = open_csv(path);
  os.precision(15);
  os << "K,dof,t_crit,t_lo,t_hi,eig_lo,eig_hi,fold,rate_a,rate_b,status,message,hash\n";
  for (const auto& r : t.rows)
    os << r.K << ',' << r.dof << ',' << r.t_crit << ',' << r.t_lo << ',' << r.t_hi << ',' << r.eig_lo << ','
       << r.eig_hi << ',' << (r.fold ? 1 : 0) << ',' << r.rate_a << ',' << r.rate_b << ',' << (r.ok ? "ok" : "failed") << ','
       << csv_text(r.message) << ',' << r.hash << '\n';
}

void write_region_csv(const RegionResult& r, const std::filesystem::path& dir) {
  {
    auto os = open_csv(dir / "table.csv");
    os << "s,t,eig_atomistic,eig_ac,stable_atomistic,stable_ac,status,message\n";
    for (const auto& p : r.points)
      os << p.s << ',' << p.t << ',' << p.eig_a << ',' << p.eig_ac << ',' << (p.eig_a > 0 ? 1 : 0) << ','
         << (p.eig_ac > 0 ? 1 : 0) << ',' << (p.ok ? "ok" : "failed") << ',' << csv_text(p.message) << '\n';
  }
  auto os = open_csv(dir / "boundary.csv");
  os << "model,s0,t0,s1,t1\n";
  for (const auto& s : r.boundary_a) os << "atomistic," << s.a.x() << ',' << s.a.y() << ',' << s.b.x() << ',' << s.b.y() << '\n';
  for (const auto& s : r.boundary_ac) os << "ac," << s.a.x() << ',' << s.a.y() << ',' << s.b.x() << ',' << s.b.y() << '\n';
}

bool run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const auto& out = spec.output_dir;
  std::filesystem::create_directories(out / "fields");
  {
    std::ofstream os(out / "config.resolved.toml");
    os << resolved_toml(spec);
  }
  {
    std::string script = kPlotScript;
    const std::string kind = to_string(spec.kind);
    script.replace(script.find("%KIND%"), 6, kind);
    std::ofstream os(out / "plot.py");
    os << script;
  }
  bool all_ok = true;
  switch (spec.kind) {
    case ExperimentKind::Vacancy:
    case ExperimentKind::CollapsedCavity: {
      ReferenceCache cache(cache_path(spec));
      const auto rows = spec.kind == ExperimentKind::Vacancy ? run_vacancy_convergence(spec, cache)
                                                             : run_cavity_convergence(spec, cache);
      write_convergence_csv(rows, out / "table.csv");
      for (const auto& r : rows) all_ok = all_ok && r.ok;
      break;
    }
    case ExperimentKind::StabilityVacancy: {
      const auto t = run_stability_vacancy(spec);
      write_stability_csv(t, out / "table.csv");
      for (const auto& r : t.rows) all_ok = all_ok && r.ok;
      std::ofstream os(out / "rates.txt");
      os << "fitted_a " << t.fitted_a << "\nfitted_b " << t.fitted_b << '\n';
      break;
    }
    case ExperimentKind::StabilityBravais: {
      const auto r = run_stability_region(spec);
      write_region_csv(r, out);
      for (const auto& p : r.points) all_ok = all_ok && p.ok;
      std::ofstream os(out / "summary.txt");
      os << "hausdorff " << r.hausdorff << "\ncontainment_violations " << r.containment_violations << '\n';
      break;
    }
  }
  return all_ok;
}

}  // namespace acclab
