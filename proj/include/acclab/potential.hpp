#pragma once

#include "acclab/lattice.hpp"

#include <functional>
#include <map>
#include <string>

namespace acclab {

struct SingularityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PotentialKind { LennardJones, Morse, Custom };

class PairPotential {
 public:
  using Scalar = std::function<double(double)>;

  // eps * ((r0/s)^12 - 2 (r0/s)^6): minimum -eps at s = r0.
  static PairPotential lennard_jones(double epsilon = 1.0, double r0 = 1.0);
  // eps * (exp(-2a(s-r0)) - 2 exp(-a(s-r0))).
  static PairPotential morse(double alpha = 4.0, double epsilon = 1.0, double r0 = 1.0);
  // d3 may be empty; the third derivative then falls back to a central difference of d2.
  static PairPotential custom(std::string name, Scalar f, Scalar d1, Scalar d2, Scalar d3 = {});

  PotentialKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  const std::map<std::string, double>& params() const { return params_; }
  double cutoff() const { return cutoff_; }
  void set_cutoff(double c) { cutoff_ = c; }
  double floor() const { return floor_; }
  void set_floor(double f) { floor_ = f; }
  // Multiply the potential by a constant.
  PairPotential scaled(double factor) const;

  double value(double s) const;
  double d1(double s) const;
  double d2(double s) const;
  double d3(double s) const;
  // value, d1, d2 in one pass
  void eval(double s, double& f, double& f1, double& f2) const;

 private:
  PotentialKind kind_ = PotentialKind::LennardJones;
  std::string name_ = "lennard-jones";
  std::map<std::string, double> params_;
  double eps_ = 1.0, r0_ = 1.0, alpha_ = 4.0;
  double scale_ = 1.0;
  double cutoff_ = 3.1;
  double floor_ = 1e-8;
  Scalar f_, f1_, f2_, f3_;
};

struct PhiEval {
  double value = 0;
  Vec2 grad = Vec2::Zero();
  Mat2 hess = Mat2::Zero();
};

// phi(r) = varphi(|r|) with gradient and Hessian.
PhiEval phi_value_grad_hess(const PairPotential& pot, const Vec2& r);

// sup_{t >= s} of |varphi^(k)| (k = 0, 1), (|varphi''|^2 + |varphi'/t|^2)^{1/2} (k = 2) and the
// Frobenius norm of the third vector derivative (k = 3).
double decay_modulus(const PairPotential& pot, int k, double s);

// W(F) = (2/sqrt(3)) sum_{|r| <= cutoff} phi(F r).
double cauchy_born_density(const PairPotential& pot, const Mat2& F, const OrbitDecomposition& orbits);
Mat2 cauchy_born_stress(const PairPotential& pot, const Mat2& F, const OrbitDecomposition& orbits);

}  // namespace acclab
