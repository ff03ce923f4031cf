#include "acclab/potential.hpp"

#include <Eigen/SVD>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>

namespace acclab {

PairPotential PairPotential::lennard_jones(double epsilon, double r0) {
  PairPotential p;
  p.kind_ = PotentialKind::LennardJones;
  p.name_ = "lennard-jones";
  p.eps_ = epsilon;
  p.r0_ = r0;
  p.params_ = {{"epsilon", epsilon}, {"r0", r0}};
  return p;
}

PairPotential PairPotential::morse(double alpha, double epsilon, double r0) {
  PairPotential p;
  p.kind_ = PotentialKind::Morse;
  p.name_ = "morse";
  p.eps_ = epsilon;
  p.r0_ = r0;
  p.alpha_ = alpha;
  p.params_ = {{"alpha", alpha}, {"epsilon", epsilon}, {"r0", r0}};
  return p;
}

PairPotential PairPotential::custom(std::string name, Scalar f, Scalar d1, Scalar d2, Scalar d3) {
  PairPotential p;
  p.kind_ = PotentialKind::Custom;
  p.name_ = std::move(name);
  p.f_ = std::move(f);
  p.f1_ = std::move(d1);
  p.f2_ = std::move(d2);
  p.f3_ = std::move(d3);
  return p;
}

PairPotential PairPotential::scaled(double factor) const {
  PairPotential p = *this;
  p.scale_ *= factor;
  p.params_["scale"] = p.scale_;
  return p;
}

void PairPotential::eval(double s, double& f, double& f1, double& f2) const {
  switch (kind_) {
    case PotentialKind::LennardJones: {
      const double x = r0_ / s;
      const double x2 = x * x;
      const double x6 = x2 * x2 * x2;
      const double x12 = x6 * x6;
      const double is = 1.0 / s;
      const double e = eps_ * scale_;
      f = e * (x12 - 2.0 * x6);
      f1 = e * (-12.0 * x12 + 12.0 * x6) * is;
      f2 = e * (156.0 * x12 - 84.0 * x6) * is * is;
      return;
    }
    case PotentialKind::Morse: {
      const double q = std::exp(-alpha_ * (s - r0_));
      const double e = eps_ * scale_;
      const double a = alpha_;
      f = e * (q * q - 2.0 * q);
      f1 = e * (-2.0 * a * q * q + 2.0 * a * q);
      f2 = e * (4.0 * a * a * q * q - 2.0 * a * a * q);
      return;
    }
    case PotentialKind::Custom:
      f = scale_ * f_(s);
      f1 = scale_ * f1_(s);
      f2 = scale_ * f2_(s);
      return;
  }
}

double PairPotential::value(double s) const {
  double f, f1, f2;
  eval(s, f, f1, f2);
  return f;
}

double PairPotential::d1(double s) const {
  double f, f1, f2;
  eval(s, f, f1, f2);
  return f1;
}

double PairPotential::d2(double s) const {
  double f, f1, f2;
  eval(s, f, f1, f2);
  return f2;
}

double PairPotential::d3(double s) const {
  switch (kind_) {
    case PotentialKind::LennardJones: {
      const double x = r0_ / s;
      const double x6 = std::pow(x, 6);
      return eps_ * scale_ * (-2184.0 * x6 * x6 + 672.0 * x6) / (s * s * s);
    }
    case PotentialKind::Morse: {
      const double q = std::exp(-alpha_ * (s - r0_));
      const double a3 = alpha_ * alpha_ * alpha_;
      return eps_ * scale_ * (-8.0 * a3 * q * q + 2.0 * a3 * q);
    }
    case PotentialKind::Custom:
      if (f3_) return scale_ * f3_(s);
      {
        const double h = 1e-5 * std::max(1.0, s);
        return scale_ * (f2_(s + h) - f2_(s - h)) / (2.0 * h);
      }
  }
  return 0.0;
}

PhiEval phi_value_grad_hess(const PairPotential& pot, const Vec2& r) {
  const double s = r.norm();
  if (!(s > pot.floor()))
    throw SingularityError("bond length " + std::to_string(s) + " below floor " + std::to_string(pot.floor()));
  double f, f1, f2;
  pot.eval(s, f, f1, f2);
  const Vec2 rh = r / s;
  PhiEval out;
  out.value = f;
  out.grad = f1 * rh;
  const Mat2 P = rh * rh.transpose();
  out.hess = f2 * P + (f1 / s) * (Mat2::Identity() - P);
  return out;
}

double decay_modulus(const PairPotential& pot, int k, double s) {
  if (!(s > 0)) throw std::invalid_argument("decay_modulus requires s > 0");
  auto g = [&](double t) {
    switch (k) {
      case 0:
        return std::abs(pot.value(t));
      case 1:
        return std::abs(pot.d1(t));
      case 2: {
        const double a = pot.d2(t), b = pot.d1(t) / t;
        return std::sqrt(a * a + b * b);
      }
      default: {
        // third derivative tensor of varphi(|r|): radial part varphi''' and three
        // mixed components (varphi'' - varphi'/t)/t
        const double a = pot.d3(t);
        const double b = (pot.d2(t) - pot.d1(t) / t) / t;
        return std::sqrt(a * a + 3.0 * b * b);
      }
    }
  };
  // Dense scan up to a point past which supported potentials decay monotonically.
  // The grid is anchored at multiples of the step so that the scan for a larger s
  // is a subset of the scan for a smaller one.
  const double step = 1e-3;
  const double s_mono = std::max(s, 20.0) + 1.0;
  double best = g(s), arg = s;
  const auto k0 = static_cast<long>(std::ceil(s / step));
  const auto k1 = static_cast<long>(std::ceil(s_mono / step));
  for (long k = k0; k <= k1; ++k) {
    const double t = static_cast<double>(k) * step;
    const double v = g(t);
    if (v > best) {
      best = v;
      arg = t;
    }
  }
  if (arg > s) {
    const auto r = boost::math::tools::brent_find_minima([&](double t) { return -g(t); }, std::max(s, arg - step),
                                                         arg + step, 52);
    best = std::max(best, -r.second);
  }
  return best;
}

double cauchy_born_density(const PairPotential& pot, const Mat2& F, const OrbitDecomposition& orbits) {
  Eigen::JacobiSVD<Mat2> svd(F);
  if (!(svd.singularValues()(1) > pot.floor()) || F.determinant() <= 0)
    throw SingularityError("degenerate deformation gradient in Cauchy-Born density");
  double sum = 0.0;
  for (const auto& o : orbits.orbits)
    for (const auto& d : o.members) sum += pot.value((F * d.r).norm());
  return sum / kDetA6;
}

Mat2 cauchy_born_stress(const PairPotential& pot, const Mat2& F, const OrbitDecomposition& orbits) {
  Mat2 S = Mat2::Zero();
  for (const auto& o : orbits.orbits)
    for (const auto& d : o.members) {
      const Vec2 Fr = F * d.r;
      const double s = Fr.norm();
      S += (pot.d1(s) / s) * Fr * d.r.transpose();
    }
  return S / kDetA6;
}

}  // namespace acclab
