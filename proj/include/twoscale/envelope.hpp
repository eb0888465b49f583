#pragma once

#include "twoscale/mesh.hpp"
#include "twoscale/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace twoscale {

// ---------------------------------------------------------------------------
// Lower-hull linear program

namespace detail {

/// Revised simplex for  min c.mu  s.t.  sum_j mu_j a_j = b,  mu >= 0,  with
/// a_j = (1, p_j). Starts from a feasible basis supplied by the caller.
/// Dantzig pricing, switching to Bland's rule after a run of degenerate pivots.
template <int M>
struct HullLp {
  using Col = Eigen::Matrix<double, M, 1>;
  using Basis = Eigen::Matrix<double, M, M>;

  const std::vector<Col>& columns;
  const std::vector<double>& cost;

  struct Result {
    double value = 0.0;
    Col multipliers = Col::Zero();  // optimal dual: y . a_j <= c_j for all j
    int iterations = 0;
  };

  Result solve(const Col& rhs, std::array<Index, M> basis, int max_iterations = 10000) const {
    double cost_scale = 1.0;
    for (double c : cost) cost_scale = std::max(cost_scale, std::abs(c));
    const double tol = 1e-13 * cost_scale;
    bool bland = false;
    int degenerate = 0;
    Result r;
    for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
      Basis b;
      Col cb;
      for (int k = 0; k < M; ++k) {
        b.col(k) = columns[basis[k]];
        cb[k] = cost[basis[k]];
      }
      const Eigen::FullPivLU<Basis> lu(b);
      if (!lu.isInvertible()) throw NumericalError("envelope LP: singular basis");
      Col beta = lu.solve(rhs);
      for (int k = 0; k < M; ++k) beta[k] = std::max(beta[k], 0.0);
      const Col y = b.transpose().fullPivLu().solve(cb);

      Index entering = -1;
      double best = -tol;
      for (Index j = 0; j < static_cast<Index>(columns.size()); ++j) {
        const double reduced = cost[j] - y.dot(columns[j]);
        if (reduced < best) {
          entering = j;
          best = reduced;
          if (bland) break;
        }
      }
      if (entering < 0) {
        r.value = cb.dot(beta);
        r.multipliers = y;
        return r;
      }
      const Col d = lu.solve(columns[entering]);
      int leave = -1;
      double theta = std::numeric_limits<double>::infinity();
      for (int k = 0; k < M; ++k) {
        if (d[k] <= 1e-12) continue;
        const double ratio = beta[k] / d[k];
        if (ratio < theta - 1e-15 || (ratio <= theta + 1e-15 && leave >= 0 && basis[k] < basis[leave])) {
          theta = std::min(theta, ratio);
          leave = k;
        }
      }
      if (leave < 0) throw NumericalError("envelope LP: unbounded direction (inconsistent point set)");
      degenerate = theta <= 1e-14 ? degenerate + 1 : 0;
      if (degenerate > 50) bland = true;
      basis[leave] = entering;
    }
    throw NumericalError("envelope LP: iteration limit reached");
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Nodal convex envelope

enum class EnvelopeMode {
  Abp,           // envelope of -v^- in B_R (zero on the sphere)
  Illustration,  // envelope of v itself over the mesh
};

template <int Dim>
struct EnvelopeResult {
  double ball_radius = 0.0;
  Vec<Dim> center = Vec<Dim>::Zero();
  NodalVector values;             // Gamma(v)(x_i)
  std::vector<bool> contact;      // nodal contact set
  std::vector<Vec<Dim>> slopes;   // supporting plane at x_i: Gamma(v)(x_i) + slope . (x - x_i)
  EnvelopeMode mode = EnvelopeMode::Abp;
  double tolerance = 0.0;
  Index lp_iterations = 0;

  std::vector<Index> contact_nodes() const {
    std::vector<Index> out;
    for (Index i = 0; i < static_cast<Index>(contact.size()); ++i)
      if (contact[i]) out.push_back(i);
    return out;
  }
};

/// Default enclosing ball: centre of the bounding box, radius twice the
/// half-diagonal (so Omega sits well inside B_R).
template <int Dim>
std::pair<Vec<Dim>, double> default_ball(const Mesh<Dim>& mesh) {
  const auto& box = mesh.bounding_box();
  return {0.5 * (box.lower + box.upper), (box.upper - box.lower).norm()};
}

/// Points c + R e_k on the sphere: m equally spaced directions in 2D, the
/// two directions +-1 in 1D.
template <int Dim>
std::vector<Vec<Dim>> sphere_points(const Vec<Dim>& center, double radius, int directions) {
  std::vector<Vec<Dim>> out;
  if constexpr (Dim == 1) {
    out.push_back(center + Vec<1>(radius));
    out.push_back(center - Vec<1>(radius));
  } else {
    require(directions >= 4, "sphere_points: need at least four directions");
    for (int k = 0; k < directions; ++k) {
      const double t = 2.0 * std::numbers::pi * k / directions;
      out.push_back(center + radius * Vec<2>(std::cos(t), std::sin(t)));
    }
  }
  return out;
}

/// Gamma(v) at every node as the optimum of
///   max b + w.x_i  s.t.  w.z_j + b <= target(z_j)  (nodes and sphere points),
/// solved in its dual form (lowest convex combination of graph points above
/// x_i). `radius <= 0` selects the default ball. In ABP mode the target is
/// -v^- at nodes and 0 on the sampled sphere; in illustration mode it is v at
/// nodes and the sphere is not used.
template <int Dim>
EnvelopeResult<Dim> nodal_convex_envelope(const Mesh<Dim>& mesh, const NodalVector& v,
                                          EnvelopeMode mode = EnvelopeMode::Abp, double radius = 0.0,
                                          int directions = 64) {
  require(v.size() == mesh.num_vertices(), "nodal_convex_envelope: vector size does not match the mesh");
  EnvelopeResult<Dim> out;
  out.mode = mode;
  auto [center, default_radius] = default_ball(mesh);
  out.center = center;
  out.ball_radius = radius > 0.0 ? radius : default_radius;
  for (const auto& p : mesh.vertices())
    require((p - center).norm() < out.ball_radius, "nodal_convex_envelope: mesh is not inside B_R");
  const double vmax = v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
  out.tolerance = 1e-9 * (1.0 + vmax);

  constexpr int M = Dim + 1;
  using Col = Eigen::Matrix<double, M, 1>;
  std::vector<Col> columns;
  std::vector<double> cost;
  const Index n = mesh.num_vertices();
  for (Index j = 0; j < n; ++j) {
    Col a;
    a << 1.0, mesh.vertex(j);
    columns.push_back(a);
    cost.push_back(mode == EnvelopeMode::Abp ? std::min(v[j], 0.0) : v[j]);
  }
  if (mode == EnvelopeMode::Abp) {
    if (mesh.boundary_faces().size())
      for (Index j = 0; j < n; ++j)
        if (mesh.is_boundary(j)) require(v[j] >= -out.tolerance, "nodal_convex_envelope: v must be >= 0 on the boundary");
    for (const auto& s : sphere_points<Dim>(center, out.ball_radius, directions)) {
      Col a;
      a << 1.0, s;
      columns.push_back(a);
      cost.push_back(0.0);
    }
  }
  const detail::HullLp<M> lp{columns, cost};

  // completion of node i to a nonsingular starting basis
  auto start_basis = [&](Index i) {
    std::array<Index, M> basis{};
    basis[0] = i;
    if (mode == EnvelopeMode::Abp) {
      // sphere points a quarter turn apart: the chord stays outside Omega
      basis[1] = n;
      if constexpr (Dim == 2) basis[2] = n + directions / 4;
      return basis;
    }
    const Vec<Dim> x = mesh.vertex(i);
    Index far = -1;
    double dist = 0.0;
    for (Index j = 0; j < n; ++j)
      if ((mesh.vertex(j) - x).norm() > dist) {
        dist = (mesh.vertex(j) - x).norm();
        far = j;
      }
    basis[1] = far;
    if constexpr (Dim == 2) {
      const Vec<2> e = mesh.vertex(far) - x;
      Index side = -1;
      double area = 0.0;
      for (Index j = 0; j < n; ++j) {
        const Vec<2> f = mesh.vertex(j) - x;
        const double cross = std::abs(e[0] * f[1] - e[1] * f[0]);
        if (cross > area) {
          area = cross;
          side = j;
        }
      }
      require(side >= 0, "nodal_convex_envelope: mesh nodes are collinear");
      basis[2] = side;
    }
    return basis;
  };

  out.values.resize(n);
  out.contact.assign(n, false);
  out.slopes.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto r = lp.solve(columns[i], start_basis(i));
    out.lp_iterations += r.iterations;
    out.values[i] = r.value;
    out.slopes[i] = r.multipliers.template tail<Dim>();
    const bool touches = out.values[i] >= v[i] - out.tolerance;
    out.contact[i] = mode == EnvelopeMode::Abp ? touches && v[i] <= 0.0 : touches;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Local envelope on a star

/// gamma(x) = sup { L(x) : L affine, L <= v at the nodes of the star of x_i,
/// L(x_i) = v(x_i) } at the star nodes, extended piecewise linearly.
template <int Dim>
struct LocalEnvelope {
  Index node = -1;
  std::vector<Index> nodes;               // star vertices, ascending, including `node`
  NodalVector values;                     // gamma at star nodes, NaN elsewhere
  std::vector<Vec<Dim>> dual_vertices;    // vertices of the admissible slope set S

  double operator()(Index j) const { return values[j]; }
};

template <int Dim>
std::vector<Index> star_vertices(const Mesh<Dim>& mesh, Index i) {
  std::vector<Index> out;
  for (Index k : mesh.star(i))
    for (Index j : mesh.element(k)) out.push_back(j);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Throws DomainError when x_i is not a local contact point (S is empty).
template <int Dim>
LocalEnvelope<Dim> local_envelope(const Mesh<Dim>& mesh, const NodalVector& v, Index i) {
  require(!mesh.is_boundary(i), "local_envelope: node must be interior");
  LocalEnvelope<Dim> env;
  env.node = i;
  env.nodes = star_vertices(mesh, i);
  env.values = NodalVector::Constant(mesh.num_vertices(), std::numeric_limits<double>::quiet_NaN());
  const Vec<Dim> x = mesh.vertex(i);
  double scale = 1.0;
  for (Index j : env.nodes) scale = std::max(scale, std::abs(v[j] - v[i]) / std::max((mesh.vertex(j) - x).norm(), 1e-300));
  const double tol = 1e-12 * scale;

  // half-spaces  w . d_j <= r_j
  std::vector<Vec<Dim>> d;
  std::vector<double> rhs;
  for (Index j : env.nodes) {
    if (j == i) continue;
    d.push_back(mesh.vertex(j) - x);
    rhs.push_back(v[j] - v[i]);
  }
  auto feasible = [&](const Vec<Dim>& w) {
    for (std::size_t k = 0; k < d.size(); ++k)
      if (w.dot(d[k]) > rhs[k] + tol * std::max(1.0, d[k].norm())) return false;
    return true;
  };
  if constexpr (Dim == 1) {
    double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < d.size(); ++k) {
      const double s = rhs[k] / d[k][0];
      if (d[k][0] > 0.0) hi = std::min(hi, s);
      else lo = std::max(lo, s);
    }
    if (lo > hi + tol) throw DomainError("local_envelope: node " + std::to_string(i) + " is not a local contact point");
    env.dual_vertices = {Vec<1>(lo), Vec<1>(std::max(lo, hi))};
  } else {
    for (std::size_t a = 0; a < d.size(); ++a)
      for (std::size_t b = a + 1; b < d.size(); ++b) {
        Mat<2> m;
        m << d[a].transpose(), d[b].transpose();
        const double det = m.determinant();
        if (std::abs(det) <= 1e-14 * d[a].norm() * d[b].norm()) continue;
        const Vec<2> w = m.inverse() * Vec<2>(rhs[a], rhs[b]);
        if (feasible(w)) env.dual_vertices.push_back(w);
      }
    if (env.dual_vertices.empty())
      throw DomainError("local_envelope: node " + std::to_string(i) + " is not a local contact point");
  }
  env.values[i] = v[i];
  for (Index j : env.nodes) {
    if (j == i) continue;
    const Vec<Dim> dj = mesh.vertex(j) - x;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& w : env.dual_vertices) best = std::max(best, w.dot(dj));
    env.values[j] = std::min(v[j], v[i] + best);
  }
  return env;
}

// ---------------------------------------------------------------------------
// Sub-differential polytope

template <int Dim>
struct SubdifferentialPolytope {
  Index node = -1;
  std::vector<Vec<Dim>> gradients;  // grad gamma on each star element (star order)
  std::vector<Vec<Dim>> vertices;   // convex hull, counter-clockwise (2D) / [min, max] (1D)
  double measure = 0.0;             // area (2D) / length (1D)
  double perimeter = 0.0;           // closed-polygon length; a segment counts twice
  double jump_sum = 0.0;            // sum of J_F(gamma) over faces containing the node

  /// True when w lies strictly inside the polytope.
  bool contains_in_interior(const Vec<Dim>& w, double tol = 1e-12) const {
    if (measure <= 0.0) return false;
    if constexpr (Dim == 1) {
      return w[0] > vertices.front()[0] + tol && w[0] < vertices.back()[0] - tol;
    } else {
      for (std::size_t k = 0; k < vertices.size(); ++k) {
        const Vec<2> a = vertices[k], b = vertices[(k + 1) % vertices.size()];
        if ((b[0] - a[0]) * (w[1] - a[1]) - (b[1] - a[1]) * (w[0] - a[0]) <= tol) return false;
      }
      return true;
    }
  }
};

/// Andrew's monotone chain; collinear points are dropped.
inline std::vector<Vec<2>> convex_hull(std::vector<Vec<2>> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec<2>& a, const Vec<2>& b) {
    return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]);
  });
  double scale = 0.0;
  for (const auto& p : pts) scale = std::max(scale, p.cwiseAbs().maxCoeff());
  // merge round-off duplicates (gradients of elements sharing a plane)
  std::vector<Vec<2>> merged;
  for (const auto& p : pts) {
    bool dup = false;
    for (const auto& q : merged) dup |= (p - q).cwiseAbs().maxCoeff() <= 1e-12 * std::max(scale, 1.0);
    if (!dup) merged.push_back(p);
  }
  pts = std::move(merged);
  if (pts.size() < 3) return pts;
  const double tol = 1e-14 * std::max(scale * scale, std::numeric_limits<double>::min());
  auto cross = [](const Vec<2>& o, const Vec<2>& a, const Vec<2>& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  std::vector<Vec<2>> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= tol) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= tol) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

inline double polygon_area(const std::vector<Vec<2>>& poly) {
  double s = 0.0;
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const Vec<2>& a = poly[k];
    const Vec<2>& b = poly[(k + 1) % poly.size()];
    s += a[0] * b[1] - a[1] * b[0];
  }
  return 0.5 * std::abs(s);
}

inline double polygon_perimeter(const std::vector<Vec<2>>& poly) {
  if (poly.size() < 2) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < poly.size(); ++k) s += (poly[(k + 1) % poly.size()] - poly[k]).norm();
  return s;
}

/// Sub-differential of the piecewise linear gamma at node i: convex hull of
/// the element gradients on the star. The jump sum is computed separately
/// from the face jumps.
template <int Dim>
SubdifferentialPolytope<Dim> subdifferential(const Mesh<Dim>& mesh, const NodalVector& gamma, Index i) {
  require(!mesh.is_boundary(i), "subdifferential: node must be interior");
  SubdifferentialPolytope<Dim> poly;
  poly.node = i;
  for (Index k : mesh.star(i)) poly.gradients.push_back(mesh.element_gradient(k, gamma));
  for (Index f : mesh.faces_of_vertex(i)) poly.jump_sum += face_jump(mesh, gamma, f);
  if constexpr (Dim == 1) {
    double lo = poly.gradients.front()[0], hi = lo;
    for (const auto& g : poly.gradients) {
      lo = std::min(lo, g[0]);
      hi = std::max(hi, g[0]);
    }
    poly.vertices = {Vec<1>(lo), Vec<1>(hi)};
    poly.measure = hi - lo;
    poly.perimeter = hi - lo;
  } else {
    poly.vertices = convex_hull(poly.gradients);
    poly.measure = poly.vertices.size() >= 3 ? polygon_area(poly.vertices) : 0.0;
    poly.perimeter = polygon_perimeter(poly.vertices);
  }
  return poly;
}

template <int Dim>
SubdifferentialPolytope<Dim> subdifferential(const Mesh<Dim>& mesh, const LocalEnvelope<Dim>& gamma) {
  return subdifferential(mesh, gamma.values, gamma.node);
}

/// Isoperimetric control of the sub-differential by the jumps:
/// area <= perimeter^2 / (4 pi) (+1e-12). Trivially true in 1D.
template <int Dim>
bool jump_bound_check(const SubdifferentialPolytope<Dim>& poly) {
  if constexpr (Dim == 1) {
    return true;
  } else {
    return poly.measure <= poly.perimeter * poly.perimeter / (4.0 * std::numbers::pi) + 1e-12;
  }
}

// ---------------------------------------------------------------------------
// Discrete ABP report

/// G = max over interior nodes and faces F containing them of
/// |F|^{-d} |omega_i|^{d-1}.
template <int Dim>
double geometric_constant(const Mesh<Dim>& mesh) {
  double g = 0.0;
  for (Index i : mesh.interior_nodes())
    for (Index f : mesh.faces_of_vertex(i))
      g = std::max(g, std::pow(mesh.face(f).measure, -double(Dim)) * std::pow(mesh.star_volume(i), double(Dim - 1)));
  return g;
}

struct AbpNode {
  Index node = -1;
  double f = 0.0;
  double star_volume = 0.0;
  double measure = 0.0;     // sub-differential measure of the local envelope
  double jump_sum = 0.0;    // sum of its face jumps
  double laplacian = 0.0;   // Delta_h of the local envelope at the node
  bool local_envelope_ok = true;
};

struct AbpReport {
  double sup_negative = 0.0;
  std::vector<Index> contact_nodes;
  double abp_sum = 0.0;
  double ratio = 0.0;
  double G = 0.0;
  std::vector<AbpNode> nodes;  // interior contact nodes
  double envelope_sup_negative = 0.0;  // sup Gamma(u)^- (equals sup_negative)
};

/// Empirical constant of sup u^- <= C (sum_{contact} |f_i|^d |omega_i|)^{1/d}.
/// `f` holds f_i for every vertex. Contact nodes on the boundary only occur
/// when Gamma(u) = 0 and carry no weight.
template <int Dim>
AbpReport abp_report(const Mesh<Dim>& mesh, const NodalVector& u, const NodalVector& f, double radius = 0.0) {
  require(u.size() == mesh.num_vertices() && f.size() == mesh.num_vertices(), "abp_report: size mismatch");
  AbpReport rep;
  for (Index i = 0; i < u.size(); ++i) rep.sup_negative = std::max(rep.sup_negative, -u[i]);
  rep.G = geometric_constant(mesh);
  const auto env = nodal_convex_envelope(mesh, u, EnvelopeMode::Abp, radius);
  for (Index i = 0; i < env.values.size(); ++i)
    rep.envelope_sup_negative = std::max(rep.envelope_sup_negative, -env.values[i]);
  double sum = 0.0;
  for (Index i : env.contact_nodes()) {
    rep.contact_nodes.push_back(i);
    if (mesh.is_boundary(i)) continue;
    AbpNode node;
    node.node = i;
    node.f = f[i];
    node.star_volume = mesh.star_volume(i);
    try {
      const auto gamma = local_envelope(mesh, u, i);
      const auto poly = subdifferential(mesh, gamma);
      node.measure = poly.measure;
      node.jump_sum = poly.jump_sum;
      node.laplacian = discrete_laplacian(mesh, gamma.values, i);
    } catch (const DomainError&) {
      node.local_envelope_ok = false;  // contact within tolerance only
    }
    sum += std::pow(std::abs(f[i]), Dim) * node.star_volume;
    rep.nodes.push_back(node);
  }
  rep.abp_sum = std::pow(sum, 1.0 / Dim);
  if (rep.abp_sum > 0.0) {
    rep.ratio = rep.sup_negative / rep.abp_sum;
  } else if (rep.sup_negative > 0.0) {
    throw std::logic_error("abp_report: u has a negative part but no contact node carries load");
  }
  return rep;
}

/// Same report for the positive part (upper contact set), by sign flip.
template <int Dim>
AbpReport abp_report_upper(const Mesh<Dim>& mesh, const NodalVector& u, const NodalVector& f, double radius = 0.0) {
  return abp_report(mesh, NodalVector(-u), NodalVector(-f), radius);
}

/// Key/value text: sup_negative, abp_sum, ratio, contact_count, G.
inline void write_abp_report(std::ostream& os, const AbpReport& r) {
  os << std::setprecision(17) << "{\n"
     << "  \"sup_negative\": " << r.sup_negative << ",\n"
     << "  \"abp_sum\": " << r.abp_sum << ",\n"
     << "  \"ratio\": " << r.ratio << ",\n"
     << "  \"contact_count\": " << r.contact_nodes.size() << ",\n"
     << "  \"G\": " << r.G << "\n}\n";
}

}  // namespace twoscale
