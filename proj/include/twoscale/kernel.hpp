#pragma once

#include "twoscale/quadrature.hpp"
#include "twoscale/types.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace twoscale {

enum class KernelProfile {
  Ball,  // constant on the unit ball
  Bump,  // c (1 - |z|^2)_+^2
};

inline KernelProfile parse_kernel_profile(const std::string& name) {
  if (name == "ball") return KernelProfile::Ball;
  if (name == "bump") return KernelProfile::Bump;
  throw DomainError("unknown kernel profile '" + name + "' (expected ball or bump)");
}

/// Radially symmetric kernel supported in the closed unit ball, normalized so
/// that its second moment equals d, together with a centrally symmetric
/// quadrature rule on the unit ball.
///
/// `weights[q]` already contains the profile value phi(z_q); `antipode[q]` is
/// the index of the node -z_q.
template <int Dim>
struct Kernel {
  KernelProfile profile = KernelProfile::Ball;
  double normalization = 0.0;
  std::vector<Vec<Dim>> nodes;
  std::vector<double> rule_weights;
  std::vector<double> weights;
  std::vector<int> antipode;
  /// Highest polynomial degree p such that sum_q weights[q] P(z_q) is exact
  /// for all polynomials P of degree p.
  int degree = 0;

  double operator()(const Vec<Dim>& z) const { return radial_profile(z.squaredNorm()); }

  /// Profile as a function of |z|^2.
  double radial_profile(double r2) const {
    if (r2 > 1.0) return 0.0;
    if (profile == KernelProfile::Ball) return normalization;
    return normalization * (1.0 - r2) * (1.0 - r2);
  }

  std::size_t size() const { return nodes.size(); }
};

/// Polar product rule (Gauss in radius, uniform in angle) in 2D, Gauss rule
/// on [-1, 1] in 1D. `radial` is the number of Gauss points in radius (2D) or
/// on the interval (1D); `angular` must be even.
template <int Dim>
Kernel<Dim> make_kernel(KernelProfile profile = KernelProfile::Ball, int radial = Dim == 1 ? 16 : 8,
                        int angular = 16) {
  static_check_dim<Dim>();
  require(radial >= 1, "make_kernel: need at least one radial point");
  Kernel<Dim> k;
  k.profile = profile;
  const int profile_degree = profile == KernelProfile::Ball ? 0 : 4;
  std::vector<double> radii2;  // |z_q|^2, identical for antipodal nodes
  if constexpr (Dim == 1) {
    const auto g = gauss_legendre(radial, -1.0, 1.0);
    // symmetrize so that the z <-> -z pairing is exact in floating point
    for (int q = 0; q < radial; ++q) {
      const int p = radial - 1 - q;
      k.nodes.push_back(Vec<1>(0.5 * (g.nodes[q] - g.nodes[p])));
      k.rule_weights.push_back(0.5 * (g.weights[q] + g.weights[p]));
      k.antipode.push_back(p);
      radii2.push_back(k.nodes.back().squaredNorm());
    }
    k.degree = 2 * radial - 1 - profile_degree;
  } else {
    require(angular >= 2 && angular % 2 == 0, "make_kernel: angular count must be even");
    const auto g = gauss_legendre(radial, 0.0, 1.0);
    const double dtheta = 2.0 * std::numbers::pi / angular;
    for (int a = 0; a < angular; ++a) {
      const double theta = (a + 0.5) * dtheta;
      for (int r = 0; r < radial; ++r) {
        k.nodes.emplace_back(g.nodes[r] * std::cos(theta), g.nodes[r] * std::sin(theta));
        k.rule_weights.push_back(g.weights[r] * g.nodes[r] * dtheta);
        k.antipode.push_back(((a + angular / 2) % angular) * radial + r);
        radii2.push_back(g.nodes[r] * g.nodes[r]);
      }
    }
    k.degree = std::min(2 * radial - 2 - profile_degree, angular - 1);
  }
  // Normalize numerically: sum w phi |z|^2 = d.
  k.normalization = 1.0;
  double moment = 0.0;
  for (std::size_t q = 0; q < k.nodes.size(); ++q) moment += k.rule_weights[q] * k.radial_profile(radii2[q]) * radii2[q];
  k.normalization = double(Dim) / moment;
  for (std::size_t q = 0; q < k.nodes.size(); ++q) k.weights.push_back(k.rule_weights[q] * k.radial_profile(radii2[q]));
  return k;
}

/// Discrete second moment tensor sum_q w_q phi(z_q) z_q z_q^T (identity for a
/// correctly normalized kernel).
template <int Dim>
Mat<Dim> second_moment(const Kernel<Dim>& k) {
  Mat<Dim> m = Mat<Dim>::Zero();
  for (std::size_t q = 0; q < k.size(); ++q) m += k.weights[q] * k.nodes[q] * k.nodes[q].transpose();
  return m;
}

}  // namespace twoscale
