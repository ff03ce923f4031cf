#include "acclab/experiments.hpp"
#include "acclab/stability.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace acclab;

namespace {

struct Range {
  double lo = 0, hi = 0;
  int steps = 0;
  double at(int k) const { return steps == 1 ? lo : lo + (hi - lo) * k / (steps - 1); }
};

// "lo:hi:steps"
Range parse_range(const std::string& s) {
  Range r;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%lf:%lf:%d%c", &r.lo, &r.hi, &r.steps, &tail) != 3 || r.steps < 1)
    throw std::invalid_argument("expected lo:hi:steps, got '" + s + "'");
  return r;
}

std::pair<Range, Range> parse_grid(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw std::invalid_argument("expected two ranges separated by ','");
  return {parse_range(s.substr(0, comma)), parse_range(s.substr(comma + 1))};
}

int cmd_run(const std::string& path, const std::string& output, int workers) {
  auto spec = load_spec(path);
  if (!output.empty()) spec.output_dir = output;
  if (workers > 0) spec.workers = workers;
  const bool ok = run_experiment(spec);
  std::cout << spec.output_dir.string() << (ok ? ": all rows succeeded\n" : ": some rows failed\n");
  return ok ? 0 : 1;
}

int cmd_kappa(const std::string& pattern, std::int64_t N, const std::string& cell, const std::string& snap) {
  const auto vac = read_vacancy_pattern(pattern);
  const auto dom = cell == "hexagonal" ? build_hex_domain(N, vac) : build_domain(N, vac);
  const auto r = stability_index(dom);
  std::printf("kappa %.2f\nkappa_full %.17g\nquotient %.17g\nresidual %.3e\ndofs %lld\n", r.kappa, r.kappa, r.quotient,
              r.residual, static_cast<long long>(r.dofs));
  if (!snap.empty()) {
    Snapshot s;
    s.N = N;
    for (std::int64_t k = 0; k < dom.num_sites(); ++k) {
      s.sites.push_back(dom.site(k));
      s.u.push_back(r.mode.segment<2>(2 * k));
    }
    write_snapshot(s, snap);
  }
  return 0;
}

int cmd_region(const PotentialSpec& ps, const std::string& grid, const std::string& strain_grid, double kappa,
               double delta, std::int64_t N, std::int64_t K, double hK, int workers, const std::string& output) {
  if (!strain_grid.empty()) {
    auto spec = default_spec(ExperimentKind::StabilityBravais);
    const auto [s, t] = parse_grid(strain_grid);
    spec.region.s_min = s.lo, spec.region.s_max = s.hi, spec.region.s_steps = s.steps;
    spec.region.t_min = t.lo, spec.region.t_max = t.hi, spec.region.t_steps = t.steps;
    spec.N = N;
    spec.K = {K};
    spec.hK = {hK};
    spec.potential = ps;
    spec.workers = workers;
    spec.output_dir = output;
    const bool ok = run_experiment(spec);
    std::ifstream is(spec.output_dir / "summary.txt");
    std::cout << is.rdbuf();
    return ok ? 0 : 1;
  }

  const auto [mr, Mr] = parse_grid(grid);
  const auto pot = ps.build();
  std::filesystem::create_directories(output);
  const auto path = std::filesystem::path(output) / "region.csv";
  std::ofstream os(path);
  os.precision(17);
  os << "m,M,gamma_hom,gamma_kappa,gamma_kappa_delta\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < mr.steps; ++i)
    for (int j = 0; j < Mr.steps; ++j) {
      const double m = mr.at(i), M = Mr.at(j);
      double gh = nan, gk = nan, gkd = nan;
      if (m > 0 && M >= m) {
        const auto shells = shell_constants(pot, m, M);
        const auto base = gamma(shells, 0, kappa);
        gh = base.gamma_hom;
        gk = base.gamma;
        try {
          gkd = gamma(shells, delta, kappa).gamma;
        } catch (const OutOfTheoryError&) {
        }
      }
      os << m << ',' << M << ',' << gh << ',' << gk << ',' << gkd << '\n';
    }
  std::cout << path.string() << '\n';
  return 0;
}

int cmd_error_model(const ErrorModel& em) {
  const auto r = error_model(em);
  std::printf("err %.10g\nerr_integral %.10g\ndof %.10g\nregime %d\nregime_tag %s\nalpha_optimal %.10g\n", r.err,
              r.err_integral, r.dof, r.regime, r.regime_tag.c_str(), r.alpha_optimal);
  std::printf("alpha_consistent %s\nerr_asymptotic %.10g\n", r.alpha_consistent ? "true" : "false", r.err_asymptotic);
  if (r.regime == 1) std::printf("err_radial %.10g\n", r.err_radial);
  return 0;
}

void add_potential(CLI::App* app, PotentialSpec& ps) {
  app->add_option("--potential", ps.kind, "lennard-jones or morse")->capture_default_str();
  app->add_option("--epsilon", ps.epsilon)->capture_default_str();
  app->add_option("--r0", ps.r0)->capture_default_str();
  app->add_option("--morse-alpha", ps.morse_alpha)->capture_default_str();
  app->add_option("--cutoff", ps.cutoff)->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"atomistic-to-continuum coupling experiments"};
  app.require_subcommand(1);

  std::string spec_path, run_output;
  int run_workers = 0;
  auto* run = app.add_subcommand("run", "run the experiment described by a TOML file");
  run->add_option("spec", spec_path)->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output", run_output, "override experiment.output");
  run->add_option("-j,--workers", run_workers, "override experiment.workers");

  std::string pattern, cell = "rhombic", snap;
  std::int64_t period = 0;
  auto* kappa = app.add_subcommand("kappa", "vacancy stability index of a periodic vacancy pattern");
  kappa->add_option("--pattern", pattern, "file with one 'i j' site per line")->required()->check(CLI::ExistingFile);
  kappa->add_option("--period", period)->required();
  kappa->add_option("--cell", cell)->check(CLI::IsMember({"rhombic", "hexagonal"}))->capture_default_str();
  kappa->add_option("--mode", snap, "write the minimising mode as a field snapshot");

  PotentialSpec ps;
  std::string grid, strain_grid, region_output = "region";
  double rk = 2.0 / 7.0, rdelta = 0.1, hK = 2;
  std::int64_t rN = 24, rK = 8;
  int rworkers = 1;
  auto* region = app.add_subcommand("stability-region", "predicted or computed stability regions");
  auto* g = region->add_option("--grid", grid, "m0:m1:steps,M0:M1:steps");
  region->add_option("--strain-grid", strain_grid, "s0:s1:steps,t0:t1:steps for B = [[1+s, 0.1], [0, 1+t]]")
      ->excludes(g);
  region->add_option("--kappa", rk)->capture_default_str();
  region->add_option("--delta", rdelta)->capture_default_str();
  region->add_option("--N", rN)->capture_default_str();
  region->add_option("--K", rK)->capture_default_str();
  region->add_option("--hK", hK)->capture_default_str();
  region->add_option("-j,--workers", rworkers)->capture_default_str();
  region->add_option("-o,--output", region_output)->capture_default_str();
  add_potential(region, ps);

  ErrorModel em;
  auto* errm = app.add_subcommand("error-model", "a priori error and DoF estimate for a graded mesh");
  errm->add_option("--beta", em.beta)->capture_default_str();
  errm->add_option("--p", em.p)->capture_default_str();
  errm->add_option("--alpha", em.alpha)->capture_default_str();
  errm->add_option("--K", em.K)->capture_default_str();
  errm->add_option("--N", em.N)->capture_default_str();
  errm->add_option("--hK", em.hK)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(spec_path, run_output, run_workers);
    if (*kappa) return cmd_kappa(pattern, period, cell, snap);
    if (*region) {
      if (grid.empty() && strain_grid.empty()) throw std::invalid_argument("one of --grid or --strain-grid is required");
      return cmd_region(ps, grid, strain_grid, rk, rdelta, rN, rK, hK, rworkers, region_output);
    }
    if (*errm) return cmd_error_model(em);
  } catch (const std::exception& e) {
    std::cerr << "acc-lab: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
