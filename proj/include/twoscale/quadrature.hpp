#pragma once

#include "twoscale/types.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace twoscale {

struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

// Legendre polynomial P_n(x) and its derivative by the three-term recurrence.
inline std::pair<double, double> legendre(int n, double x) {
  double p0 = 1.0, p1 = x;
  if (n == 0) return {1.0, 0.0};
  for (int j = 2; j <= n; ++j) {
    const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
    p0 = p1;
    p1 = p2;
  }
  return {p1, n * (x * p1 - p0) / (x * x - 1.0)};
}

}  // namespace detail

/// Gauss-Legendre rule with n points on [a, b].
inline GaussRule gauss_legendre(int n, double a = -1.0, double b = 1.0) {
  require(n >= 1, "gauss_legendre: need at least one point");
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  for (int k = 0; k < (n + 1) / 2; ++k) {
    double x = std::cos(std::numbers::pi * (k + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = detail::legendre(n, x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double dp = detail::legendre(n, x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[k] = mid - half * x;
    rule.nodes[n - 1 - k] = mid + half * x;
    rule.weights[k] = half * w;
    rule.weights[n - 1 - k] = half * w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = mid;
  return rule;
}

/// Barycentric quadrature rule on the reference simplex; weights sum to one,
/// so multiplying by the element volume gives the integral.
template <int Dim>
struct SimplexRule {
  std::vector<std::array<double, Dim + 1>> points;
  std::vector<double> weights;
};

/// Degree-5 rule on intervals (3-point Gauss), degree-4 six-point rule on
/// triangles.
template <int Dim>
const SimplexRule<Dim>& simplex_rule() {
  static_check_dim<Dim>();
  static const SimplexRule<Dim> rule = [] {
    SimplexRule<Dim> r;
    if constexpr (Dim == 1) {
      const double s = std::sqrt(0.6);
      for (double t : {-s, 0.0, s}) {
        const double l1 = 0.5 * (1.0 + t);
        r.points.push_back({1.0 - l1, l1});
      }
      r.weights = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    } else {
      const double a1 = 0.445948490915965, b1 = 1.0 - 2.0 * a1;
      const double a2 = 0.091576213509771, b2 = 1.0 - 2.0 * a2;
      const double w1 = 0.223381589678011, w2 = 0.109951743655322;
      r.points = {{a1, a1, b1}, {a1, b1, a1}, {b1, a1, a1},
                  {a2, a2, b2}, {a2, b2, a2}, {b2, a2, a2}};
      r.weights = {w1, w1, w1, w2, w2, w2};
    }
    return r;
  }();
  return rule;
}

}  // namespace twoscale
