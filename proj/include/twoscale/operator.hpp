#pragma once

#include "twoscale/kernel.hpp"
#include "twoscale/mesh.hpp"
#include "twoscale/quadrature.hpp"
#include "twoscale/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace twoscale {

template <int Dim>
using ScalarField = std::function<double(const Vec<Dim>&)>;
template <int Dim>
using MatrixField = std::function<Mat<Dim>(const Vec<Dim>&)>;

/// Coefficient matrix A(x), ellipticity bounds lambda <= A <= Lambda and the
/// source term f.
template <int Dim>
struct Coefficients {
  MatrixField<Dim> A;
  double lambda = 1.0;
  double Lambda = 1.0;
  ScalarField<Dim> f;
};

/// Eigenvalues of a symmetric 1x1 or 2x2 matrix, ascending.
template <int Dim>
std::array<double, Dim> symmetric_eigenvalues(const Mat<Dim>& s) {
  if constexpr (Dim == 1) {
    return {s(0, 0)};
  } else {
    const double mean = 0.5 * (s(0, 0) + s(1, 1));
    const double radius = std::hypot(0.5 * (s(0, 0) - s(1, 1)), 0.5 * (s(0, 1) + s(1, 0)));
    return {mean - radius, mean + radius};
  }
}

/// Samples the symmetric part of A at vertices and element centroids and
/// checks that its spectrum lies in [lambda - tol, Lambda + tol].
template <int Dim>
void validate_coefficients(const Mesh<Dim>& mesh, const Coefficients<Dim>& c, double tol = 1e-10) {
  require(c.lambda > 0.0 && c.lambda <= c.Lambda, "coefficients: need 0 < lambda <= Lambda");
  auto check = [&](const Vec<Dim>& x) {
    const Mat<Dim> a = c.A(x);
    const Mat<Dim> sym = 0.5 * (a + a.transpose());
    const auto eig = symmetric_eigenvalues<Dim>(sym);
    require(eig.front() >= c.lambda - tol && eig.back() <= c.Lambda + tol,
            "coefficients: A violates the ellipticity bounds");
  };
  for (const auto& p : mesh.vertices()) check(p);
  for (Index k = 0; k < mesh.num_elements(); ++k) check(mesh.centroid(k));
}

/// Symmetric positive definite square root of S via closed-form eigenpairs.
template <int Dim>
Mat<Dim> spd_sqrt(const Mat<Dim>& s) {
  const double scale = std::max(s.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  require((s - s.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale, "spd_sqrt: matrix is not symmetric");
  const auto eig = symmetric_eigenvalues<Dim>(s);
  if (!(eig.front() > 0.0))
    throw DomainError("spd_sqrt: matrix is not positive definite (eigenvalue " + std::to_string(eig.front()) + ")");
  if constexpr (Dim == 1) {
    return Mat<1>::Constant(std::sqrt(s(0, 0)));
  } else {
    const double a = s(0, 0), b = 0.5 * (s(0, 1) + s(1, 0)), c = s(1, 1);
    if (eig[1] - eig[0] <= 1e-15 * eig[1]) return std::sqrt(0.5 * (a + c)) * Mat<2>::Identity();
    // eigenvector of the larger eigenvalue, from the better conditioned row
    Vec<2> v1 = std::abs(eig[1] - a) >= std::abs(eig[1] - c) ? Vec<2>(b, eig[1] - a) : Vec<2>(eig[1] - c, b);
    v1.normalize();
    const Vec<2> v0(-v1[1], v1[0]);
    Mat<2> m = std::sqrt(eig[0]) * v0 * v0.transpose() + std::sqrt(eig[1]) * v1 * v1.transpose();
    return 0.5 * (m + m.transpose());
  }
}

/// Mean of A over the star of node i, integrated element by element with a
/// degree-4 (2D) / degree-5 (1D) rule and symmetrized. Throws when
/// mean(A) - (lambda/2) I has an eigenvalue <= -1e-12.
template <int Dim>
Mat<Dim> star_mean_A(const Mesh<Dim>& mesh, const Coefficients<Dim>& c, Index i) {
  require(!mesh.is_boundary(i), "star_mean_A: node " + std::to_string(i) + " is on the boundary");
  const auto& rule = simplex_rule<Dim>();
  Mat<Dim> sum = Mat<Dim>::Zero();
  for (Index k : mesh.star(i)) {
    const auto& el = mesh.element(k);
    Mat<Dim> local = Mat<Dim>::Zero();
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      Vec<Dim> x = Vec<Dim>::Zero();
      for (int a = 0; a <= Dim; ++a) x += rule.points[q][a] * mesh.vertex(el[a]);
      local += rule.weights[q] * c.A(x);
    }
    sum += mesh.element_volume(k) * local;
  }
  Mat<Dim> mean = sum / mesh.star_volume(i);
  mean = 0.5 * (mean + mean.transpose());
  const auto eig = symmetric_eigenvalues<Dim>(Mat<Dim>(mean - 0.5 * c.lambda * Mat<Dim>::Identity()));
  if (eig.front() <= -1e-12)
    throw DomainError("star_mean_A: mean(A) - (lambda/2) I is not positive definite at node " +
                      std::to_string(i) + " (eigenvalue " + std::to_string(eig.front()) +
                      "); lambda is inconsistent with A");
  return mean;
}

/// M_i = (mean(A) - (lambda/2) I)^{1/2}. Eigenvalues in (-1e-12, 0] are
/// clamped to 1e-14 before taking the root.
template <int Dim>
Mat<Dim> transform_matrix(const Mat<Dim>& mean_a, double lambda) {
  Mat<Dim> shifted = mean_a - 0.5 * lambda * Mat<Dim>::Identity();
  const auto eig = symmetric_eigenvalues<Dim>(shifted);
  if (eig.front() <= -1e-12)
    throw DomainError("transform_matrix: shifted coefficient matrix is not positive definite");
  if (eig.front() <= 0.0) shifted += (1e-14 - eig.front()) * Mat<Dim>::Identity();
  return spd_sqrt<Dim>(shifted);
}

template <int Dim>
double spectral_norm(const Mat<Dim>& m) {
  const Mat<Dim> mtm = m.transpose() * m;
  return std::sqrt(std::max(0.0, symmetric_eigenvalues<Dim>(mtm).back()));
}

// ---------------------------------------------------------------------------
// Second differences

/// Coefficients of the boundary-aware second difference
///   2 [theta1 u(x - theta2 y) + theta2 u(x + theta1 y) - (theta1 + theta2) u(x)]
///     / (theta1 theta2 (theta1 + theta2)),
/// which reduces to u(x+y) + u(x-y) - 2u(x) when theta1 = theta2 = 1.
struct DifferenceWeights {
  double plus = 1.0;
  double minus = 1.0;
  double center = -2.0;
};

inline DifferenceWeights difference_weights(double theta1, double theta2) {
  if (theta1 == 1.0 && theta2 == 1.0) return {};
  const double sum = theta1 + theta2;
  return {2.0 / (theta1 * sum), 2.0 / (theta2 * sum), -2.0 / (theta1 * theta2)};
}

/// Second difference of an evaluable function, clipped at the boundary.
template <int Dim>
double second_difference(const Mesh<Dim>& mesh, const ScalarField<Dim>& u, const Vec<Dim>& x,
                         const Vec<Dim>& y) {
  const auto [t1, t2] = mesh.boundary_clip(x, y);
  const auto w = difference_weights(t1, t2);
  return w.plus * u(x + t1 * y) + w.minus * u(x - t2 * y) + w.center * u(x);
}

/// Second difference of a piecewise linear function given by nodal values;
/// off-node values come from barycentric interpolation.
template <int Dim>
double second_difference(const Mesh<Dim>& mesh, const NodalVector& v, const Vec<Dim>& x,
                         const Vec<Dim>& y) {
  const auto plus = mesh.clip_ray(x, y);
  const auto minus = mesh.clip_ray(x, Vec<Dim>(-y));
  const auto center = mesh.locate(x);
  require(center.has_value(), "second_difference: base point outside the domain");
  const auto w = difference_weights(plus.theta, minus.theta);
  return w.plus * mesh.evaluate(plus.location, v) + w.minus * mesh.evaluate(minus.location, v) +
         w.center * mesh.evaluate(*center, v);
}

// ---------------------------------------------------------------------------
// Transform rows

/// I_eps u_h(x_i) = sum_j weight_j u_h(x_j), entries sorted by node.
template <int Dim>
struct TransformRow {
  Index node = -1;
  Mat<Dim> M = Mat<Dim>::Identity();
  double epsilon = 0.0;
  double support_radius = 0.0;
  std::vector<std::pair<Index, double>> entries;

  double apply(const NodalVector& v) const {
    double s = 0.0;
    for (const auto& [j, w] : entries) s += w * v[j];
    return s;
  }

  double weight(Index j) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), j,
                               [](const auto& e, Index key) { return e.first < key; });
    return (it != entries.end() && it->first == j) ? it->second : 0.0;
  }
};

/// Quadrature form of the integral transform at node i:
///   I_eps u(x_i) = eps^{-2} sum_q w_q phi(z_q) delta u(x_i, eps M z_q).
template <int Dim>
TransformRow<Dim> build_transform_row(const Mesh<Dim>& mesh, const Kernel<Dim>& kernel,
                                      const Mat<Dim>& M, double epsilon, Index i) {
  require(epsilon > 0.0, "build_transform_row: epsilon must be positive");
  TransformRow<Dim> row;
  row.node = i;
  row.M = M;
  row.epsilon = epsilon;
  row.support_radius = epsilon * spectral_norm<Dim>(M);
  const Vec<Dim>& x = mesh.vertex(i);
  const std::size_t nq = kernel.size();
  std::vector<RayHit<Dim>> hits(nq);
  for (std::size_t q = 0; q < nq; ++q) hits[q] = mesh.clip_ray(x, Vec<Dim>(epsilon * M * kernel.nodes[q]));

  const double scale = 1.0 / (epsilon * epsilon);
  std::vector<std::pair<Index, double>> raw;
  raw.reserve(nq * (2 * Dim + 3));
  for (std::size_t q = 0; q < nq; ++q) {
    const auto& plus = hits[q];
    const auto& minus = hits[kernel.antipode[q]];
    const auto w = difference_weights(plus.theta, minus.theta);
    const double wq = scale * kernel.weights[q];
    for (int a = 0; a <= Dim; ++a) {
      raw.emplace_back(mesh.element(plus.location.element)[a], wq * w.plus * plus.location.barycentric[a]);
      raw.emplace_back(mesh.element(minus.location.element)[a], wq * w.minus * minus.location.barycentric[a]);
    }
    raw.emplace_back(i, wq * w.center);
  }
  row.entries = merge_entries(std::move(raw));
  return row;
}

/// Same quadrature applied to an evaluable function (no interpolation).
template <int Dim>
double transform_of_function(const Mesh<Dim>& mesh, const Kernel<Dim>& kernel, const Mat<Dim>& M,
                             double epsilon, const Vec<Dim>& x, const ScalarField<Dim>& u) {
  double s = 0.0;
  for (std::size_t q = 0; q < kernel.size(); ++q)
    s += kernel.weights[q] * second_difference<Dim>(mesh, u, x, Vec<Dim>(epsilon * M * kernel.nodes[q]));
  return s / (epsilon * epsilon);
}

/// Distance from x to the nearest boundary face.
template <int Dim>
double distance_to_boundary(const Mesh<Dim>& mesh, const Vec<Dim>& x) {
  double best = std::numeric_limits<double>::infinity();
  for (Index f : mesh.boundary_faces()) {
    const auto& face = mesh.face(f);
    if constexpr (Dim == 1) {
      best = std::min(best, std::abs(x[0] - mesh.vertex(face.vertices[0])[0]));
    } else {
      const Vec<2> a = mesh.vertex(face.vertices[0]);
      const Vec<2> e = mesh.vertex(face.vertices[1]) - a;
      const double t = std::clamp((x - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
      best = std::min(best, (x - a - t * e).norm());
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Approximation rate probe

struct RateSample {
  double epsilon = 0.0;
  double interior_error = 0.0;
  double boundary_error = 0.0;
  Index interior_count = 0;
  Index boundary_count = 0;
};

struct ApproximationRates {
  std::vector<RateSample> samples;
  double interior_slope = std::numeric_limits<double>::quiet_NaN();
  double boundary_slope = std::numeric_limits<double>::quiet_NaN();
};

/// Least-squares slope of log(y) against log(x) over the pairs with y > 0.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(y[k] > 0.0) || !(x[k] > 0.0)) continue;
    const double lx = std::log(x[k]), ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Max-norm error of I_eps u - (A - (lambda/2) I) : D^2 u over interior nodes
/// (distance to the boundary > eps ||M_i||) and over the boundary layer, for
/// each eps, with fitted log-log slopes.
template <int Dim>
ApproximationRates approximation_rate_probe(const Mesh<Dim>& mesh, const Coefficients<Dim>& c,
                                            const Kernel<Dim>& kernel, const ScalarField<Dim>& u,
                                            const MatrixField<Dim>& hessian,
                                            const std::vector<double>& epsilons) {
  ApproximationRates out;
  std::vector<Mat<Dim>> shifted(mesh.num_vertices()), roots(mesh.num_vertices());
  std::vector<double> dist(mesh.num_vertices(), 0.0);
  for (Index i : mesh.interior_nodes()) {
    const Mat<Dim> mean = star_mean_A(mesh, c, i);
    shifted[i] = mean - 0.5 * c.lambda * Mat<Dim>::Identity();
    roots[i] = transform_matrix<Dim>(mean, c.lambda);
    dist[i] = distance_to_boundary(mesh, mesh.vertex(i));
  }
  std::vector<double> eps_list, interior, boundary;
  for (double eps : epsilons) {
    RateSample s;
    s.epsilon = eps;
    for (Index i : mesh.interior_nodes()) {
      const Vec<Dim>& x = mesh.vertex(i);
      const double approx = transform_of_function(mesh, kernel, roots[i], eps, x, u);
      const double exact = (shifted[i].cwiseProduct(hessian(x))).sum();
      const double err = std::abs(approx - exact);
      if (dist[i] > eps * spectral_norm<Dim>(roots[i])) {
        s.interior_error = std::max(s.interior_error, err);
        ++s.interior_count;
      } else {
        s.boundary_error = std::max(s.boundary_error, err);
        ++s.boundary_count;
      }
    }
    out.samples.push_back(s);
    eps_list.push_back(eps);
    interior.push_back(s.interior_error);
    boundary.push_back(s.boundary_error);
  }
  out.interior_slope = loglog_slope(eps_list, interior);
  out.boundary_slope = loglog_slope(eps_list, boundary);
  return out;
}

}  // namespace twoscale
