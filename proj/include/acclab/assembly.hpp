#pragma once

#include "acclab/mesh.hpp"
#include "acclab/potential.hpp"

#include <Eigen/Sparse>

namespace acclab {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Eigen::VectorXd;

struct EnergyBreakdown {
  double total = 0;
  double atomistic = 0;  // bonds in B_a
  double continuum = 0;  // bond integrals over B_c (bond form) or the Cauchy-Born integral (practical form)
  double interface = 0;  // Phi_i, zero in the bond form
};

// Energy of y = B x + u where u is periodic and stored as 2-vectors at a set of points.
// Every energy contribution is w * phi(D) with D = B r + sum_k c_k u_{p_k}.
class EnergyModel {
 public:
  struct Term {
    double w = 0;
    Vec2 r = Vec2::Zero();
    int n = 0;
    std::array<std::int32_t, 6> p{};
    std::array<double, 6> c{};
  };

  virtual ~EnergyModel() = default;

  std::int64_t num_points() const { return static_cast<std::int64_t>(points_.size()); }
  std::int64_t num_dofs() const { return 2 * num_points(); }
  // Reference (centred) lattice coordinates of each point.
  const std::vector<Vec2i>& points() const { return points_; }
  const Mat2& strain() const { return B_; }
  void set_strain(const Mat2& B);
  const PairPotential& potential() const { return pot_; }
  const std::vector<Term>& terms() const { return terms_; }

  double energy(const VectorXd& u) const;
  VectorXd gradient(const VectorXd& u) const;
  double energy_gradient(const VectorXd& u, VectorXd& g) const;
  SparseMatrix hessian(const VectorXd& u) const;
  // min over terms of |D| / |r|
  double min_stretch(const VectorXd& u) const;
  // Symmetric positive semidefinite Laplacian with constants in its kernel, used as preconditioner.
  virtual SparseMatrix laplacian() const = 0;
  // D = B r + sum_k c_k u_{p_k}
  Vec2 term_argument(const Term& t, const VectorXd& u) const;

 protected:
  EnergyModel(PairPotential pot, const Mat2& B);

  PairPotential pot_;
  Mat2 B_;
  std::vector<Vec2i> points_;
  std::vector<Term> terms_;
};

// Sum over ordered bonds of L (vacancy bonds removed). Points are the sites of L.
class AtomisticModel : public EnergyModel {
 public:
  AtomisticModel(std::shared_ptr<const LatticeDomain> domain, PairPotential pot, const Mat2& B = Mat2::Identity());

  const LatticeDomain& domain() const { return *domain_; }
  std::shared_ptr<const LatticeDomain> domain_ptr() const { return domain_; }
  SparseMatrix laplacian() const override;

 private:
  std::shared_ptr<const LatticeDomain> domain_;
};

// ECC energy on a coupled mesh. Points are the mesh nodes that are not vacancies.
// Derivatives come from the bond form; the practical form is evaluated separately.
class CoupledModel : public EnergyModel {
 public:
  CoupledModel(std::shared_ptr<const CoupledMesh> mesh, PairPotential pot, const Mat2& B = Mat2::Identity());

  const CoupledMesh& mesh() const { return *mesh_; }
  std::shared_ptr<const CoupledMesh> mesh_ptr() const { return mesh_; }
  const LatticeDomain& domain() const { return mesh_->domain(); }

  std::int64_t point_of_node(std::int64_t node) const { return node_point_[static_cast<std::size_t>(node)]; }
  std::int64_t node_of_point(std::int64_t p) const { return point_node_[static_cast<std::size_t>(p)]; }

  EnergyBreakdown energy_bond_form(const VectorXd& u) const;
  EnergyBreakdown energy_practical(const VectorXd& u) const;

  // Bond-integral weights per (continuum triangle, half direction): omega from bonds of B_c,
  // iota from the remaining bonds of the full lattice (restricted to continuum triangles).
  const std::vector<double>& omega() const { return omega_; }
  const std::vector<double>& iota() const { return iota_; }
  const std::vector<LatticeDirection>& half_directions() const { return half_; }
  std::int64_t num_atomistic_bonds() const { return n_atomistic_bonds_; }
  std::int64_t num_continuum_bonds() const { return n_continuum_bonds_; }
  // terms()[0, num_atomistic_terms()) are the bonds of B_a; each has weight 2 and stands for both orientations.
  std::size_t num_atomistic_terms() const { return n_atomistic_terms_; }

  // Constant gradient of y_h on each triangle. Vacancy nodes take `vacancy_values`
  // (ordered as domain().vacancies()) or zero displacement.
  std::vector<Mat2> element_gradients(const VectorXd& u, const VectorXd* vacancy_values = nullptr) const;
  // y_h(x) - B x at a lattice point.
  Vec2 displacement_at(const VectorXd& u, Vec2i x) const;
  // P1 stiffness over points: sum_T |T| (grad phi_v . grad phi_w) W with W = B B^T (weighted) or I.
  SparseMatrix stiffness(bool weighted) const;
  SparseMatrix laplacian() const override { return stiffness(false); }

 private:
  struct Interp {
    int n = 0;
    std::array<std::int32_t, 3> p{};
    std::array<double, 3> w{};
  };
  Interp interpolation(Vec2i x) const;

  std::shared_ptr<const CoupledMesh> mesh_;
  std::vector<std::int64_t> node_point_, point_node_;
  std::vector<LatticeDirection> half_;
  std::vector<double> omega_, iota_;
  std::size_t n_atomistic_terms_ = 0;
  std::int64_t n_atomistic_bonds_ = 0, n_continuum_bonds_ = 0;
};

// Translation kernel: two orthonormal vectors of constant displacements.
std::array<VectorXd, 2> translation_basis(std::int64_t num_points);
VectorXd project_out_translations(const VectorXd& v);

// I_h: coupled displacement agreeing with the atomistic displacement at the repatoms.
VectorXd interpolate_nodal(const AtomisticModel& atomistic, const VectorXd& u_a, const CoupledModel& coupled);

struct H1Error {
  double absolute = 0;
  double relative = 0;  // NaN when the reference is homogeneous
  bool relative_defined = true;
  double covered_area = 0;
};

// || grad ybar_ref - grad y_h ||_{L2} over micro/macro triangle overlaps. Vacancy values
// (from the extension operator) complete the reference and the coupled field in the atomistic region.
H1Error h1_error(const CoupledModel& coupled, const VectorXd& u_ref, const VectorXd& vac_ref, const VectorXd& u_h,
                 const VectorXd& vac_h);

// sqrt(g^T L^+ g) with L the P1 stiffness (weighted by B B^T or not); g is projected
// orthogonal to translations first.
double residual_dual_norm(const CoupledModel& coupled, const VectorXd& g, bool weighted);

struct Snapshot {
  std::int64_t N = 0;
  std::int64_t K = 0;
  Mat2 B = Mat2::Identity();
  std::vector<Vec2i> sites;
  std::vector<Vec2> u;
};

Snapshot make_snapshot(const EnergyModel& model, std::int64_t N, std::int64_t K, const VectorXd& u);
void write_snapshot(const Snapshot& s, const std::filesystem::path& path);
Snapshot read_snapshot(const std::filesystem::path& path);

}  // namespace acclab
