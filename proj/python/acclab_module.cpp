#include "acclab/experiments.hpp"
#include "acclab/stability.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace acclab;

namespace {

std::vector<Vec2i> to_sites(const std::vector<std::array<std::int64_t, 2>>& v) {
  std::vector<Vec2i> out;
  for (const auto& [i, j] : v) out.push_back({i, j});
  return out;
}

std::vector<std::array<std::int64_t, 2>> from_sites(const std::vector<Vec2i>& v) {
  std::vector<std::array<std::int64_t, 2>> out;
  for (const auto& x : v) out.push_back({x.i, x.j});
  return out;
}

}  // namespace

PYBIND11_MODULE(_acclab, m) {
  m.doc() = "Atomistic-to-continuum coupling on the triangular lattice.";

  py::register_exception<SingularityError>(m, "SingularityError", PyExc_ArithmeticError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);

  py::class_<PairPotential>(m, "PairPotential")
      .def_static("lennard_jones", &PairPotential::lennard_jones, py::arg("epsilon") = 1.0, py::arg("r0") = 1.0)
      .def_static("morse", &PairPotential::morse, py::arg("alpha") = 4.0, py::arg("epsilon") = 1.0,
                  py::arg("r0") = 1.0)
      .def_property("cutoff", &PairPotential::cutoff, &PairPotential::set_cutoff)
      .def("__call__", [](const PairPotential& p, double r) { return p.value(r); });

  py::class_<LatticeDomain, std::shared_ptr<LatticeDomain>>(m, "LatticeDomain")
      .def_property_readonly("N", &LatticeDomain::N)
      .def_property_readonly("num_sites", &LatticeDomain::num_sites)
      .def_property_readonly("num_lattice_sites", &LatticeDomain::num_lattice_sites)
      .def_property_readonly("vacancies", [](const LatticeDomain& d) { return from_sites(d.vacancies()); });
  m.def("build_domain", [](std::int64_t N, const std::vector<std::array<std::int64_t, 2>>& vac, bool hexagonal) {
    return std::make_shared<LatticeDomain>(hexagonal ? build_hex_domain(N, to_sites(vac)) : build_domain(N, to_sites(vac)));
  }, py::arg("N"), py::arg("vacancies") = std::vector<std::array<std::int64_t, 2>>{}, py::arg("hexagonal") = false);

  m.def("hexagonal_identities_check", &hexagonal_identities_check, py::arg("G"), py::arg("r"));

  py::class_<EnergyModel>(m, "EnergyModel")
      .def_property_readonly("num_dofs", &EnergyModel::num_dofs)
      .def_property_readonly("points", [](const EnergyModel& e) { return from_sites(e.points()); })
      .def_property("strain", &EnergyModel::strain, &EnergyModel::set_strain)
      .def("energy", &EnergyModel::energy)
      .def("gradient", &EnergyModel::gradient)
      .def("hessian", &EnergyModel::hessian)
      .def("min_stretch", &EnergyModel::min_stretch);

  py::class_<AtomisticModel, EnergyModel>(m, "AtomisticModel")
      .def(py::init([](std::shared_ptr<LatticeDomain> d, const PairPotential& p, const Mat2& B) {
             return AtomisticModel(std::move(d), p, B);
           }),
           py::arg("domain"), py::arg("potential"), py::arg("B") = Mat2::Identity());

  py::class_<CoupledModel, EnergyModel>(m, "CoupledModel")
      .def(py::init([](std::shared_ptr<LatticeDomain> d, std::int64_t K, double hK, const std::string& family,
                       double alpha, const PairPotential& p, const Mat2& B) {
             auto mesh = std::make_shared<const CoupledMesh>(
                 build_graded_mesh(*d, MeshPlan{K, hK, alpha, parse_mesh_family(family)}));
             return CoupledModel(std::move(mesh), p, B);
           }),
           py::arg("domain"), py::arg("K"), py::arg("hK"), py::arg("family") = "algebraic", py::arg("alpha") = 1.5,
           py::arg("potential") = PairPotential::lennard_jones(), py::arg("B") = Mat2::Identity())
      .def("energy_practical", [](const CoupledModel& c, const VectorXd& u) { return c.energy_practical(u).total; })
      .def_property_readonly("num_triangles", [](const CoupledModel& c) { return c.mesh().triangles().size(); });

  py::class_<SolveConfig>(m, "SolveConfig")
      .def(py::init<>())
      .def_readwrite("tol", &SolveConfig::tol)
      .def_readwrite("maxiter", &SolveConfig::maxiter);
  py::class_<SolveResult>(m, "SolveResult")
      .def_readonly("u", &SolveResult::u)
      .def_readonly("energy", &SolveResult::energy)
      .def_readonly("grad_norm", &SolveResult::grad_norm)
      .def_readonly("iterations", &SolveResult::iterations)
      .def_readonly("converged", &SolveResult::converged);
  m.def("minimize", &minimize, py::arg("model"), py::arg("u0"), py::arg("config") = SolveConfig{});

  py::class_<StabilityIndexResult>(m, "StabilityIndex")
      .def_readonly("kappa", &StabilityIndexResult::kappa)
      .def_readonly("mode", &StabilityIndexResult::mode)
      .def_readonly("quotient", &StabilityIndexResult::quotient)
      .def_readonly("residual", &StabilityIndexResult::residual);
  m.def("stability_index", [](const LatticeDomain& d) { return stability_index(d); });
  m.def("analytic_single_vacancy_index", [] {
    const auto a = analytic_single_vacancy_index();
    py::dict eig;
    for (const auto& c : a.cases) eig[py::int_(c.k)] = c.lambda.str();
    return py::make_tuple(eig, a.kappa.str(), a.kappa.to_double());
  }, "eigenvalues per block as exact strings, kappa as a string and a float");

  py::class_<StabilityReport>(m, "StabilityReport")
      .def_readonly("gamma", &StabilityReport::gamma)
      .def_readonly("gamma_hom", &StabilityReport::gamma_hom)
      .def_readonly("tail_bound", &StabilityReport::tail_bound);
  m.def("gamma", py::overload_cast<const PairPotential&, double, double, double, double, bool>(&gamma),
        py::arg("potential"), py::arg("m"), py::arg("M"), py::arg("delta"), py::arg("kappa"), py::arg("with_tail") = true);
  m.def("gamma_hom", py::overload_cast<const PairPotential&, double, double>(&gamma_hom));
  m.def("bloch_lowest_eigenvalue", &bloch_lowest_eigenvalue);

  py::class_<ErrorModelResult>(m, "ErrorModelResult")
      .def_readonly("err", &ErrorModelResult::err)
      .def_readonly("err_integral", &ErrorModelResult::err_integral)
      .def_readonly("dof", &ErrorModelResult::dof)
      .def_readonly("regime", &ErrorModelResult::regime);
  m.def("error_model", [](double beta, double p, double alpha, double K, double N, double hK) {
    return error_model({beta, p, alpha, K, N, hK});
  }, py::arg("beta") = 3.0, py::arg("p") = 2.0, py::arg("alpha") = 1.5, py::arg("K") = 4.0, py::arg("N") = 64.0,
        py::arg("hK") = 1.0);

  m.def("resolved_config", [](const std::string& text) { return resolved_toml(parse_spec(text)); },
        "parse an experiment config and return its fully resolved TOML");
  m.def("run_experiment", [](const std::filesystem::path& path, const std::filesystem::path& output) {
    auto spec = load_spec(path);
    if (!output.empty()) spec.output_dir = output;
    py::gil_scoped_release release;
    return run_experiment(spec);
  }, py::arg("config"), py::arg("output") = std::filesystem::path{});

  m.def("read_snapshot", [](const std::filesystem::path& p) {
    const auto s = read_snapshot(p);
    Eigen::MatrixX2d u(s.u.size(), 2);
    for (std::size_t k = 0; k < s.u.size(); ++k) u.row(static_cast<Eigen::Index>(k)) = s.u[k].transpose();
    return py::make_tuple(s.N, s.K, s.B, from_sites(s.sites), u);
  });
}
