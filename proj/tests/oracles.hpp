#pragma once
// Independent reference computations used as expected-value oracles in tests.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

// Lattice points with |r| <= cutoff grouped into rotation orbits using cartesian
// rotation by 60 degrees; returns orbit lengths sorted.
inline std::vector<double> orbit_lengths(double cutoff) {
  struct P {
    double x, y;
    bool used = false;
  };
  std::vector<P> pts;
  const int R = static_cast<int>(std::ceil(2 * cutoff)) + 2;
  for (int i = -R; i <= R; ++i)
    for (int j = -R; j <= R; ++j) {
      if (i == 0 && j == 0) continue;
      const double x = i + 0.5 * j, y = std::sqrt(3.0) / 2 * j;
      if (std::hypot(x, y) <= cutoff + 1e-9) pts.push_back({x, y});
    }
  std::vector<double> lens;
  const double c = 0.5, s = std::sqrt(3.0) / 2;
  for (auto& p : pts) {
    if (p.used) continue;
    double x = p.x, y = p.y;
    int members = 0;
    for (int k = 0; k < 6; ++k) {
      for (auto& q : pts)
        if (!q.used && std::abs(q.x - x) < 1e-9 && std::abs(q.y - y) < 1e-9) {
          q.used = true;
          ++members;
        }
      const double nx = c * x - s * y, ny = s * x + c * y;
      x = nx;
      y = ny;
    }
    if (members != 6) return {};
    lens.push_back(std::hypot(p.x, p.y));
  }
  std::sort(lens.begin(), lens.end());
  return lens;
}

// Lennard-Jones s^-12 - 2 s^-6 and derivatives written out by hand.
inline double lj(double s) { return std::pow(s, -12) - 2 * std::pow(s, -6); }
inline double lj1(double s) { return -12 * std::pow(s, -13) + 12 * std::pow(s, -7); }
inline double lj2(double s) { return 156 * std::pow(s, -14) - 84 * std::pow(s, -8); }

// Per-site shell sum for the cutoff-3.1 neighbourhood of the unit lattice.
inline double lj_site_sum_31() {
  return 6 * lj(1) + 6 * lj(std::sqrt(3.0)) + 6 * lj(2) + 12 * lj(std::sqrt(7.0)) + 6 * lj(3);
}

// Midpoint-rule integral of the pointwise characteristic function of a closed
// triangle (1 inside, 1/2 on an edge, vertices measure zero) along p + t r.
inline double segment_chi_integral(const Eigen::Vector2d& p, const Eigen::Vector2d& r,
                                   const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                                   const Eigen::Vector2d& c, int samples) {
  auto orient = [](const Eigen::Vector2d& u, const Eigen::Vector2d& v, const Eigen::Vector2d& w) {
    return (v.x() - u.x()) * (w.y() - u.y()) - (v.y() - u.y()) * (w.x() - u.x());
  };
  double sum = 0;
  for (int k = 0; k < samples; ++k) {
    const double t = (k + 0.5) / samples;
    const Eigen::Vector2d x = p + t * r;
    const double o0 = orient(a, b, x), o1 = orient(b, c, x), o2 = orient(c, a, x);
    if (o0 < 0 || o1 < 0 || o2 < 0) continue;
    const int zeros = (o0 == 0) + (o1 == 0) + (o2 == 0);
    sum += zeros == 0 ? 1.0 : (zeros == 1 ? 0.5 : 0.0);
  }
  return sum / samples;
}

// Hessian of r -> lj(|r|).
inline Eigen::Matrix2d lj_hessian(const Eigen::Vector2d& r) {
  const double s = r.norm();
  const Eigen::Matrix2d P = r * r.transpose() / (s * s);
  return lj2(s) * P + lj1(s) / s * (Eigen::Matrix2d::Identity() - P);
}

// Spectrum of the atomistic Hessian at y = B x on the rhombic N x N cell via its Bloch
// symbol A(k) = sum_r 2 (1 - cos k.r) hess phi(B r), k running over the N^2 dual points.
inline std::vector<double> bloch_spectrum(const Eigen::Matrix2d& B, int N, double cutoff) {
  std::vector<std::pair<Eigen::Vector2i, Eigen::Vector2d>> dirs;
  const int R = static_cast<int>(std::ceil(2 * cutoff)) + 1;
  for (int i = -R; i <= R; ++i)
    for (int j = -R; j <= R; ++j) {
      if (i == 0 && j == 0) continue;
      const Eigen::Vector2d x(i + 0.5 * j, std::sqrt(3.0) / 2 * j);
      if (x.norm() <= cutoff + 1e-9) dirs.push_back({Eigen::Vector2i(i, j), x});
    }
  std::vector<double> ev;
  const double pi = std::acos(-1.0);
  for (int m = 0; m < N; ++m)
    for (int n = 0; n < N; ++n) {
      Eigen::Matrix2d A = Eigen::Matrix2d::Zero();
      for (const auto& [ij, x] : dirs) {
        const double phase = 2 * pi * (m * ij.x() + n * ij.y()) / N;
        A += 2 * (1 - std::cos(phase)) * lj_hessian(B * x);
      }
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(A);
      ev.push_back(es.eigenvalues()(0));
      ev.push_back(es.eigenvalues()(1));
    }
  std::sort(ev.begin(), ev.end());
  return ev;
}

}  // namespace oracle
