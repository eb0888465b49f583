#pragma once

#include "twoscale/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace twoscale {

/// A (d-1)-simplex of the mesh. `elements[1] == -1` marks a boundary face.
/// `normal` is the unit normal pointing out of `elements[0]`.
template <int Dim>
struct Face {
  std::array<Index, Dim> vertices{};
  std::array<Index, 2> elements{-1, -1};
  Vec<Dim> normal = Vec<Dim>::Zero();
  double measure = 0.0;

  bool is_boundary() const { return elements[1] < 0; }
};

template <int Dim>
struct Location {
  Index element = -1;
  std::array<double, Dim + 1> barycentric{};
};

/// Result of intersecting the ray x + t y, t in (0, 1], with the closed domain.
template <int Dim>
struct RayHit {
  double theta = 1.0;
  Location<Dim> location;
};

template <int Dim>
struct Box {
  Vec<Dim> lower;
  Vec<Dim> upper;
};

/// Conforming simplicial mesh (d = 1 intervals, d = 2 triangles).
///
/// Immutable after construction. Elements are stored positively oriented;
/// faces, stars, barycentric gradients and a bucket grid for point location
/// are precomputed.
template <int Dim>
class Mesh {
  static_assert(Dim == 1 || Dim == 2, "twoscale supports d = 1 and d = 2 only");

 public:
  using Point = Vec<Dim>;
  using Element = std::array<Index, Dim + 1>;
  using Gradients = std::array<Point, Dim + 1>;

  static constexpr int dim = Dim;
  /// Relative tolerance of the geometric predicates (scaled by h).
  static constexpr double geometric_tolerance = 1e-12;

  Mesh(std::vector<Point> vertices, std::vector<Element> elements,
       std::vector<bool> boundary_flags = {})
      : vertices_(std::move(vertices)), elements_(std::move(elements)) {
    require(!vertices_.empty() && !elements_.empty(), "mesh: empty vertex or element list");
    for (const auto& el : elements_)
      for (Index v : el)
        require(v >= 0 && v < num_vertices(), "mesh: element references unknown vertex");
    build_geometry();
    build_faces();
    build_boundary(std::move(boundary_flags));
    build_stars();
    build_buckets();
  }

  Index num_vertices() const { return static_cast<Index>(vertices_.size()); }
  Index num_elements() const { return static_cast<Index>(elements_.size()); }
  Index num_faces() const { return static_cast<Index>(faces_.size()); }

  const Point& vertex(Index i) const { return vertices_[i]; }
  const std::vector<Point>& vertices() const { return vertices_; }
  const Element& element(Index k) const { return elements_[k]; }
  const std::vector<Element>& elements() const { return elements_; }
  const Face<Dim>& face(Index f) const { return faces_[f]; }
  const std::vector<Face<Dim>>& faces() const { return faces_; }

  bool is_boundary(Index i) const { return boundary_[i]; }
  const std::vector<bool>& boundary_flags() const { return boundary_; }
  /// Interior nodes in ascending vertex order.
  const std::vector<Index>& interior_nodes() const { return interior_; }
  const std::vector<Index>& boundary_faces() const { return boundary_faces_; }

  /// Elements forming the star (support of the hat function) of vertex i.
  std::span<const Index> star(Index i) const { return stars_[i]; }
  /// Faces containing vertex i.
  std::span<const Index> faces_of_vertex(Index i) const { return vertex_faces_[i]; }
  double star_volume(Index i) const { return star_volume_[i]; }
  double element_volume(Index k) const { return volume_[k]; }
  const Gradients& barycentric_gradients(Index k) const { return gradients_[k]; }

  /// Max element diameter.
  double h() const { return h_; }
  /// Max ratio diameter / inradius.
  double shape_constant() const { return sigma_; }
  /// Min element diameter divided by h.
  double quasi_uniformity() const { return quasi_uniformity_; }
  const Box<Dim>& bounding_box() const { return bbox_; }

  Point centroid(Index k) const {
    Point c = Point::Zero();
    for (Index v : elements_[k]) c += vertices_[v];
    return c / double(Dim + 1);
  }

  /// Gradient of the piecewise linear interpolant of v on element k.
  Point element_gradient(Index k, const NodalVector& v) const {
    Point g = Point::Zero();
    for (int a = 0; a <= Dim; ++a) g += v[elements_[k][a]] * gradients_[k][a];
    return g;
  }

  std::array<double, Dim + 1> barycentric(Index k, const Point& x) const {
    std::array<double, Dim + 1> lam{};
    const Point& p0 = vertices_[elements_[k][0]];
    double rest = 1.0;
    for (int a = 1; a <= Dim; ++a) {
      lam[a] = gradients_[k][a].dot(x - p0);
      rest -= lam[a];
    }
    lam[0] = rest;
    return lam;
  }

  /// Containing element of x with lowest index, or nullopt outside the
  /// closed domain. Barycentric coordinates are clamped to [0, 1].
  std::optional<Location<Dim>> locate(const Point& x) const {
    const double slack = 10.0 * geometric_tolerance * h_;
    for (int a = 0; a < Dim; ++a)
      if (x[a] < bbox_.lower[a] - slack || x[a] > bbox_.upper[a] + slack) return std::nullopt;
    for (Index k : buckets_[bucket_of(x)]) {
      if (auto lam = inside(k, x)) return Location<Dim>{k, *lam};
    }
    return std::nullopt;
  }

  /// Location of x in element k if it lies inside up to 1e-12 h.
  std::optional<std::array<double, Dim + 1>> inside(Index k, const Point& x) const {
    auto lam = barycentric(k, x);
    for (int a = 0; a <= Dim; ++a) {
      if (lam[a] < -geometric_tolerance * h_ * gradients_[k][a].norm()) return std::nullopt;
    }
    return clamp(lam);
  }

  /// Parameters (theta1, theta2) in (0, 1] such that x + theta1 y and
  /// x - theta2 y are the points where the segments leave the closed domain
  /// (1 when the endpoint is inside).
  std::pair<double, double> boundary_clip(const Point& x, const Point& y) const {
    return {clip_ray(x, y).theta, clip_ray(x, Point(-y)).theta};
  }

  /// Clips x + t y to the domain and locates the clipped endpoint.
  RayHit<Dim> clip_ray(const Point& x, const Point& y) const {
    if (auto loc = locate(x + y)) return {1.0, *loc};
    const double ynorm = y.norm();
    double best = std::numeric_limits<double>::infinity();
    Index best_face = -1;
    Point lo = x.cwiseMin(x + y), hi = x.cwiseMax(x + y);
    const double slack = 10.0 * geometric_tolerance * h_;
    for (Index f : boundary_faces_) {
      const auto& face = faces_[f];
      bool overlaps = true;
      for (int a = 0; a < Dim && overlaps; ++a) {
        double fmin = vertices_[face.vertices[0]][a], fmax = fmin;
        for (Index v : face.vertices) {
          fmin = std::min(fmin, vertices_[v][a]);
          fmax = std::max(fmax, vertices_[v][a]);
        }
        overlaps = fmax >= lo[a] - slack && fmin <= hi[a] + slack;
      }
      if (!overlaps) continue;
      const auto t = intersect_face(face, x, y);
      if (t && *t > 0.0 && *t < best) {
        best = *t;
        best_face = f;
      }
    }
    if (best_face >= 0 && best <= 1.0 + 1e-12) {
      const double theta = std::min(best, 1.0);
      const Index k = faces_[best_face].elements[0];
      return {theta, Location<Dim>{k, clamp(barycentric(k, x + theta * y))}};
    }
    // Grazing ray: bisect for the last parameter that still locates, then
    // nudge 1e-14 h toward the interior.
    double inside_t = 0.0, outside_t = 1.0;
    for (int it = 0; it < 200 && outside_t - inside_t > 1e-17; ++it) {
      const double mid = 0.5 * (inside_t + outside_t);
      if (locate(x + mid * y)) inside_t = mid; else outside_t = mid;
    }
    double theta = inside_t;
    if (ynorm > 0.0) theta = std::max(theta - 1e-14 * h_ / ynorm, 0.5 * theta);
    require(theta > 0.0, "boundary_clip: base point is not inside the domain");
    auto loc = locate(x + theta * y);
    require(loc.has_value(), "boundary_clip: failed to locate clipped point");
    return {theta, *loc};
  }

  /// Piecewise linear interpolation of nodal values at a located point.
  double evaluate(const Location<Dim>& loc, const NodalVector& v) const {
    double s = 0.0;
    for (int a = 0; a <= Dim; ++a) s += loc.barycentric[a] * v[elements_[loc.element][a]];
    return s;
  }

 private:
  static std::array<double, Dim + 1> clamp(std::array<double, Dim + 1> lam) {
    double sum = 0.0;
    for (double& l : lam) {
      l = std::clamp(l, 0.0, 1.0);
      sum += l;
    }
    for (double& l : lam) l /= sum;
    return lam;
  }

  std::optional<double> intersect_face(const Face<Dim>& face, const Point& x, const Point& y) const {
    if constexpr (Dim == 1) {
      if (y[0] == 0.0) return std::nullopt;
      return (vertices_[face.vertices[0]][0] - x[0]) / y[0];
    } else {
      const Point a = vertices_[face.vertices[0]];
      const Point e = vertices_[face.vertices[1]] - a;
      // x + t y = a + s e
      const double det = e[0] * y[1] - e[1] * y[0];
      const double scale = e.norm() * y.norm();
      if (std::abs(det) <= 1e-14 * scale) return std::nullopt;
      const Point r = a - x;
      const double t = (e[0] * r[1] - e[1] * r[0]) / det;
      const double s = (y[0] * r[1] - y[1] * r[0]) / det;
      const double stol = geometric_tolerance * h_ / e.norm();
      if (s < -stol || s > 1.0 + stol) return std::nullopt;
      return t;
    }
  }

  void build_geometry() {
    const Index ne = num_elements();
    volume_.resize(ne);
    gradients_.resize(ne);
    double min_diam = std::numeric_limits<double>::infinity();
    h_ = 0.0;
    sigma_ = 0.0;
    for (Index k = 0; k < ne; ++k) {
      auto& el = elements_[k];
      Mat<Dim> jac;
      for (int a = 1; a <= Dim; ++a) jac.col(a - 1) = vertices_[el[a]] - vertices_[el[0]];
      double det = jac.determinant();
      if (det < 0.0) {
        std::swap(el[Dim - 1], el[Dim]);
        for (int a = 1; a <= Dim; ++a) jac.col(a - 1) = vertices_[el[a]] - vertices_[el[0]];
        det = -det;
      }
      double diam = 0.0, perimeter = 0.0;
      for (int a = 0; a <= Dim; ++a)
        for (int b = a + 1; b <= Dim; ++b) {
          const double len = (vertices_[el[a]] - vertices_[el[b]]).norm();
          diam = std::max(diam, len);
          perimeter += len;
        }
      require(det > 1e-14 * std::pow(diam, Dim), "mesh: degenerate element " + std::to_string(k));
      volume_[k] = (Dim == 1) ? det : det / 2.0;
      const Mat<Dim> inv = jac.inverse();
      Point sum = Point::Zero();
      for (int a = 1; a <= Dim; ++a) {
        gradients_[k][a] = inv.row(a - 1).transpose();
        sum += gradients_[k][a];
      }
      gradients_[k][0] = -sum;
      const double inradius = (Dim == 1) ? diam / 2.0 : 2.0 * volume_[k] / perimeter;
      h_ = std::max(h_, diam);
      min_diam = std::min(min_diam, diam);
      sigma_ = std::max(sigma_, diam / inradius);
    }
    quasi_uniformity_ = min_diam / h_;
    bbox_.lower = vertices_[0];
    bbox_.upper = vertices_[0];
    for (const auto& p : vertices_) {
      bbox_.lower = bbox_.lower.cwiseMin(p);
      bbox_.upper = bbox_.upper.cwiseMax(p);
    }
  }

  void build_faces() {
    std::map<std::array<Index, Dim>, Index> lookup;
    for (Index k = 0; k < num_elements(); ++k) {
      for (int opp = 0; opp <= Dim; ++opp) {
        std::array<Index, Dim> key{};
        for (int a = 0, m = 0; a <= Dim; ++a)
          if (a != opp) key[m++] = elements_[k][a];
        std::sort(key.begin(), key.end());
        auto [it, fresh] = lookup.try_emplace(key, num_faces());
        if (fresh) {
          Face<Dim> face;
          face.vertices = key;
          face.elements = {k, -1};
          face.normal = -gradients_[k][opp].normalized();
          face.measure = (Dim == 1) ? 1.0 : (vertices_[key[0]] - vertices_[key[Dim - 1]]).norm();
          faces_.push_back(face);
        } else {
          auto& face = faces_[it->second];
          require(face.elements[1] < 0, "mesh: face shared by more than two elements");
          face.elements[1] = k;
        }
      }
    }
    vertex_faces_.assign(num_vertices(), {});
    for (Index f = 0; f < num_faces(); ++f) {
      if (faces_[f].is_boundary()) boundary_faces_.push_back(f);
      for (Index v : faces_[f].vertices) vertex_faces_[v].push_back(f);
    }
  }

  void build_boundary(std::vector<bool> flags) {
    std::vector<bool> topological(num_vertices(), false);
    for (Index f : boundary_faces_)
      for (Index v : faces_[f].vertices) topological[v] = true;
    if (flags.empty()) {
      boundary_ = topological;
    } else {
      require(static_cast<Index>(flags.size()) == num_vertices(), "mesh: boundary flag count mismatch");
      for (Index i = 0; i < num_vertices(); ++i)
        require(flags[i] == topological[i],
                "mesh: boundary flag of vertex " + std::to_string(i) + " disagrees with topology");
      boundary_ = std::move(flags);
    }
    for (Index i = 0; i < num_vertices(); ++i)
      if (!boundary_[i]) interior_.push_back(i);
  }

  void build_stars() {
    stars_.assign(num_vertices(), {});
    star_volume_.assign(num_vertices(), 0.0);
    for (Index k = 0; k < num_elements(); ++k)
      for (Index v : elements_[k]) {
        stars_[v].push_back(k);
        star_volume_[v] += volume_[k];
      }
    for (Index v = 0; v < num_vertices(); ++v)
      require(!stars_[v].empty(), "mesh: vertex " + std::to_string(v) + " belongs to no element");
  }

  void build_buckets() {
    const Point extent = bbox_.upper - bbox_.lower;
    for (int a = 0; a < Dim; ++a) {
      cells_[a] = std::clamp<Index>(static_cast<Index>(std::ceil(extent[a] / h_)), 1, 4096);
      cell_size_[a] = std::max(extent[a], 1e-300) / double(cells_[a]);
    }
    Index total = 1;
    for (int a = 0; a < Dim; ++a) total *= cells_[a];
    buckets_.assign(total, {});
    const double slack = 10.0 * geometric_tolerance * h_;
    for (Index k = 0; k < num_elements(); ++k) {
      Point lo = vertices_[elements_[k][0]], hi = lo;
      for (Index v : elements_[k]) {
        lo = lo.cwiseMin(vertices_[v]);
        hi = hi.cwiseMax(vertices_[v]);
      }
      std::array<Index, Dim> first{}, last{};
      for (int a = 0; a < Dim; ++a) {
        first[a] = cell_index(lo[a] - slack, a);
        last[a] = cell_index(hi[a] + slack, a);
      }
      if constexpr (Dim == 1) {
        for (Index i = first[0]; i <= last[0]; ++i) buckets_[i].push_back(k);
      } else {
        for (Index j = first[1]; j <= last[1]; ++j)
          for (Index i = first[0]; i <= last[0]; ++i) buckets_[j * cells_[0] + i].push_back(k);
      }
    }
  }

  Index cell_index(double coord, int a) const {
    const auto c = static_cast<Index>(std::floor((coord - bbox_.lower[a]) / cell_size_[a]));
    return std::clamp<Index>(c, 0, cells_[a] - 1);
  }

  Index bucket_of(const Point& x) const {
    if constexpr (Dim == 1) return cell_index(x[0], 0);
    else return cell_index(x[1], 1) * cells_[0] + cell_index(x[0], 0);
  }

  std::vector<Point> vertices_;
  std::vector<Element> elements_;
  std::vector<double> volume_;
  std::vector<Gradients> gradients_;
  std::vector<Face<Dim>> faces_;
  std::vector<Index> boundary_faces_;
  std::vector<std::vector<Index>> vertex_faces_;
  std::vector<bool> boundary_;
  std::vector<Index> interior_;
  std::vector<std::vector<Index>> stars_;
  std::vector<double> star_volume_;
  double h_ = 0.0, sigma_ = 0.0, quasi_uniformity_ = 0.0;
  Box<Dim> bbox_;
  std::array<Index, Dim> cells_{};
  std::array<double, Dim> cell_size_{};
  std::vector<std::vector<Index>> buckets_;
};

// ---------------------------------------------------------------------------
// Generators

/// Tensor-product mesh on the grid lines coords[0] x coords[1] (strictly
/// increasing). In 2D every cell is split into two right triangles with
/// alternating diagonals, which is weakly acute for any spacing.
template <int Dim>
Mesh<Dim> tensor_mesh(const std::array<std::vector<double>, Dim>& coords) {
  static_check_dim<Dim>();
  for (const auto& c : coords) {
    require(c.size() >= 2, "tensor_mesh: need at least two grid lines per direction");
    for (std::size_t k = 1; k < c.size(); ++k) require(c[k] > c[k - 1], "tensor_mesh: grid lines must increase");
  }
  using Point = Vec<Dim>;
  std::vector<Point> verts;
  std::vector<typename Mesh<Dim>::Element> elems;
  if constexpr (Dim == 1) {
    const Index n = static_cast<Index>(coords[0].size()) - 1;
    for (double x : coords[0]) verts.push_back(Point(x));
    for (Index i = 0; i < n; ++i) elems.push_back({i, i + 1});
  } else {
    const Index nx = static_cast<Index>(coords[0].size()) - 1, ny = static_cast<Index>(coords[1].size()) - 1;
    for (double y : coords[1])
      for (double x : coords[0]) verts.emplace_back(x, y);
    auto id = [nx](Index i, Index j) { return j * (nx + 1) + i; };
    for (Index j = 0; j < ny; ++j)
      for (Index i = 0; i < nx; ++i) {
        const Index v00 = id(i, j), v10 = id(i + 1, j), v01 = id(i, j + 1), v11 = id(i + 1, j + 1);
        if ((i + j) % 2 == 1) {
          elems.push_back({v00, v10, v11});
          elems.push_back({v00, v11, v01});
        } else {
          elems.push_back({v00, v10, v01});
          elems.push_back({v10, v11, v01});
        }
      }
  }
  return Mesh<Dim>(std::move(verts), std::move(elems));
}

/// Grid lines of n uniform cells on [lower, upper], with the first and last
/// cell additionally split geometrically: `levels` extra lines at distances
/// cell/2, cell/4, ... from each end.
inline std::vector<double> graded_coordinates(double lower, double upper, Index n, int levels) {
  require(upper > lower && n >= 1 && levels >= 0, "graded_coordinates: invalid arguments");
  const double cell = (upper - lower) / double(n);
  std::vector<double> c;
  for (Index i = 0; i <= n; ++i) c.push_back(lower + (upper - lower) * double(i) / double(n));
  for (int k = 1; k <= levels; ++k) {
    c.push_back(lower + std::ldexp(cell, -k));
    c.push_back(upper - std::ldexp(cell, -k));
  }
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

/// Uniform mesh of an axis-aligned box with spacing close to h.
template <int Dim>
Mesh<Dim> generate_structured_mesh(const Box<Dim>& box, double h) {
  static_check_dim<Dim>();
  require(h > 0.0, "generate_structured_mesh: h must be positive");
  std::array<std::vector<double>, Dim> coords;
  for (int a = 0; a < Dim; ++a) {
    const double len = box.upper[a] - box.lower[a];
    require(len > 0.0, "generate_structured_mesh: degenerate box");
    const Index n = std::max<Index>(1, static_cast<Index>(std::llround(len / h)));
    for (Index i = 0; i <= n; ++i) coords[a].push_back(box.lower[a] + len * double(i) / double(n));
  }
  return tensor_mesh<Dim>(coords);
}

/// Four triangles around z0 = (0, 0) with z1..z4 = (h,0), (0,h), (-h,0), (0,-h).
inline Mesh<2> cross_mesh(double h) {
  require(h > 0.0, "cross_mesh: h must be positive");
  std::vector<Vec<2>> verts = {{0, 0}, {h, 0}, {0, h}, {-h, 0}, {0, -h}};
  std::vector<Mesh<2>::Element> elems = {{0, 1, 2}, {0, 2, 3}, {0, 3, 4}, {0, 4, 1}};
  return Mesh<2>(std::move(verts), std::move(elems));
}

// ---------------------------------------------------------------------------
// Jumps and the discrete Laplacian

/// J_F(v) = -n+ . grad v|K+ - n- . grad v|K-; nonnegative for convex v.
template <int Dim>
double face_jump(const Mesh<Dim>& mesh, const NodalVector& v, Index f) {
  const auto& face = mesh.face(f);
  require(!face.is_boundary(), "face_jump: face " + std::to_string(f) + " is on the boundary");
  const auto gp = mesh.element_gradient(face.elements[0], v);
  const auto gm = mesh.element_gradient(face.elements[1], v);
  return face.normal.dot(gm - gp);
}

/// Coefficients c_j with J_F(v) = sum_j c_j v_j.
template <int Dim>
std::vector<std::pair<Index, double>> face_jump_coefficients(const Mesh<Dim>& mesh, Index f) {
  const auto& face = mesh.face(f);
  require(!face.is_boundary(), "face_jump: face " + std::to_string(f) + " is on the boundary");
  std::vector<std::pair<Index, double>> out;
  for (int side = 0; side < 2; ++side) {
    const Index k = face.elements[side];
    const double sign = side == 0 ? -1.0 : 1.0;
    for (int a = 0; a <= Dim; ++a)
      out.emplace_back(mesh.element(k)[a], sign * face.normal.dot(mesh.barycentric_gradients(k)[a]));
  }
  return out;
}

/// Sorts (node, weight) pairs by node and sums duplicates in input order.
inline std::vector<std::pair<Index, double>> merge_entries(std::vector<std::pair<Index, double>> entries) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<Index, double>> merged;
  for (const auto& [j, w] : entries) {
    if (!merged.empty() && merged.back().first == j) merged.back().second += w;
    else merged.emplace_back(j, w);
  }
  return merged;
}

/// Nodal coefficients of the jump form of the discrete Laplacian at x_i:
/// ((d+1)/d) sum_{F containing x_i} |F|/|omega_i| J_F.
template <int Dim>
std::vector<std::pair<Index, double>> laplacian_row(const Mesh<Dim>& mesh, Index i) {
  require(!mesh.is_boundary(i), "discrete_laplacian: node " + std::to_string(i) + " is on the boundary");
  const double factor = double(Dim + 1) / double(Dim) / mesh.star_volume(i);
  std::vector<std::pair<Index, double>> entries;
  for (Index f : mesh.faces_of_vertex(i)) {
    const double scale = factor * mesh.face(f).measure;
    for (auto [j, c] : face_jump_coefficients(mesh, f)) entries.emplace_back(j, scale * c);
  }
  return merge_entries(std::move(entries));
}

/// Discrete Laplacian at an interior node, jump form.
template <int Dim>
double discrete_laplacian(const Mesh<Dim>& mesh, const NodalVector& v, Index i) {
  require(!mesh.is_boundary(i), "discrete_laplacian: node " + std::to_string(i) + " is on the boundary");
  double sum = 0.0;
  for (Index f : mesh.faces_of_vertex(i)) sum += mesh.face(f).measure * face_jump(mesh, v, f);
  return double(Dim + 1) / double(Dim) * sum / mesh.star_volume(i);
}

/// Discrete Laplacian at an interior node, stiffness form
/// -(int phi_i)^{-1} (grad v, grad phi_i).
template <int Dim>
double discrete_laplacian_stiffness(const Mesh<Dim>& mesh, const NodalVector& v, Index i) {
  require(!mesh.is_boundary(i), "discrete_laplacian: node " + std::to_string(i) + " is on the boundary");
  double sum = 0.0;
  for (Index k : mesh.star(i)) {
    const auto& el = mesh.element(k);
    const int local = static_cast<int>(std::find(el.begin(), el.end(), i) - el.begin());
    sum += mesh.element_volume(k) * mesh.barycentric_gradients(k)[local].dot(mesh.element_gradient(k, v));
  }
  const double mass = mesh.star_volume(i) / double(Dim + 1);
  return -sum / mass;
}

// ---------------------------------------------------------------------------
// Weak acuteness

struct StiffnessPair {
  Index i = 0;
  Index j = 0;
  double value = 0.0;
};

struct AcutenessReport {
  bool is_weakly_acute = true;
  std::vector<StiffnessPair> violating_pairs;
  double max_offdiag = 0.0;
};

/// Off-diagonal stiffness entries k_ij = (grad phi_i, grad phi_j), i < j.
template <int Dim>
std::vector<StiffnessPair> stiffness_offdiagonal(const Mesh<Dim>& mesh) {
  std::map<std::pair<Index, Index>, double> acc;
  for (Index k = 0; k < mesh.num_elements(); ++k) {
    const auto& el = mesh.element(k);
    const auto& g = mesh.barycentric_gradients(k);
    for (int a = 0; a <= Dim; ++a)
      for (int b = 0; b <= Dim; ++b) {
        if (el[a] >= el[b]) continue;
        acc[{el[a], el[b]}] += mesh.element_volume(k) * g[a].dot(g[b]);
      }
  }
  std::vector<StiffnessPair> out;
  out.reserve(acc.size());
  for (const auto& [key, value] : acc) out.push_back({key.first, key.second, value});
  return out;
}

template <int Dim>
AcutenessReport weak_acuteness_report(const Mesh<Dim>& mesh) {
  AcutenessReport report;
  const auto pairs = stiffness_offdiagonal(mesh);
  double scale = 0.0;
  for (const auto& p : pairs) scale = std::max(scale, std::abs(p.value));
  report.max_offdiag = -std::numeric_limits<double>::infinity();
  for (const auto& p : pairs) {
    report.max_offdiag = std::max(report.max_offdiag, p.value);
    if (p.value > 1e-12 * scale) report.violating_pairs.push_back(p);
  }
  report.is_weakly_acute = report.violating_pairs.empty();
  return report;
}

// ---------------------------------------------------------------------------
// ASCII mesh format: "dim nv ne", nv lines "x1 .. xd flag", ne lines of
// d+1 zero-based vertex indices.

template <int Dim>
void write_mesh(std::ostream& os, const Mesh<Dim>& mesh) {
  os << Dim << ' ' << mesh.num_vertices() << ' ' << mesh.num_elements() << '\n';
  os << std::setprecision(17);
  for (Index i = 0; i < mesh.num_vertices(); ++i) {
    for (int a = 0; a < Dim; ++a) os << mesh.vertex(i)[a] << ' ';
    os << (mesh.is_boundary(i) ? 1 : 0) << '\n';
  }
  for (const auto& el : mesh.elements()) {
    for (int a = 0; a <= Dim; ++a) os << el[a] << (a == Dim ? '\n' : ' ');
  }
}

using AnyMesh = std::variant<Mesh<1>, Mesh<2>>;

namespace detail {

template <int Dim>
Mesh<Dim> read_mesh_body(std::istream& is, Index nv, Index ne) {
  std::vector<Vec<Dim>> verts(nv);
  std::vector<bool> flags(nv);
  for (Index i = 0; i < nv; ++i) {
    int flag = 0;
    for (int a = 0; a < Dim; ++a) is >> verts[i][a];
    is >> flag;
    require(static_cast<bool>(is), "read_mesh: truncated vertex block");
    flags[i] = flag != 0;
  }
  std::vector<typename Mesh<Dim>::Element> elems(ne);
  for (Index k = 0; k < ne; ++k) {
    for (int a = 0; a <= Dim; ++a) is >> elems[k][a];
    require(static_cast<bool>(is), "read_mesh: truncated element block");
  }
  return Mesh<Dim>(std::move(verts), std::move(elems), std::move(flags));
}

}  // namespace detail

inline AnyMesh read_mesh_any(std::istream& is) {
  int dim = 0;
  Index nv = 0, ne = 0;
  is >> dim >> nv >> ne;
  require(static_cast<bool>(is), "read_mesh: malformed header");
  require(nv > 0 && ne > 0, "read_mesh: empty mesh");
  if (dim == 1) return detail::read_mesh_body<1>(is, nv, ne);
  if (dim == 2) return detail::read_mesh_body<2>(is, nv, ne);
  throw DomainError("read_mesh: unsupported dimension " + std::to_string(dim));
}

template <int Dim>
Mesh<Dim> read_mesh(std::istream& is) {
  auto any = read_mesh_any(is);
  auto* mesh = std::get_if<Mesh<Dim>>(&any);
  require(mesh != nullptr, "read_mesh: dimension mismatch");
  return std::move(*mesh);
}

}  // namespace twoscale
