#pragma once

#include "twoscale/kernel.hpp"
#include "twoscale/mesh.hpp"
#include "twoscale/operator.hpp"
#include "twoscale/types.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/IterativeSolvers>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace twoscale {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

/// Nodal averages f_i = int f phi_i / int phi_i for every vertex.
template <int Dim>
NodalVector lumped_load(const Mesh<Dim>& mesh, const ScalarField<Dim>& f) {
  const auto& rule = simplex_rule<Dim>();
  NodalVector load = NodalVector::Zero(mesh.num_vertices());
  for (Index k = 0; k < mesh.num_elements(); ++k) {
    const auto& el = mesh.element(k);
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      Vec<Dim> x = Vec<Dim>::Zero();
      for (int a = 0; a <= Dim; ++a) x += rule.points[q][a] * mesh.vertex(el[a]);
      const double fx = f(x) * rule.weights[q] * mesh.element_volume(k);
      for (int a = 0; a <= Dim; ++a) load[el[a]] += fx * rule.points[q][a];
    }
  }
  for (Index i = 0; i < mesh.num_vertices(); ++i) load[i] /= mesh.star_volume(i) / double(Dim + 1);
  return load;
}

struct AssemblyOptions {
  bool laplacian = true;  // include (lambda/2) Delta_h
  bool transform = true;  // include I_eps
};

/// Rows of L_h^eps = (lambda/2) Delta_h + I_eps at interior nodes, normalized
/// by int phi_i, with boundary columns eliminated.
struct DiscreteSystem {
  SparseMatrix matrix;
  NodalVector rhs;
  std::vector<Index> node_map;       // unknown -> vertex
  std::vector<Index> unknown_of;     // vertex -> unknown, -1 on the boundary
  Index num_vertices = 0;
  double epsilon = 0.0;
  double lambda = 0.0;
  bool mesh_weakly_acute = true;
  std::vector<std::string> warnings;

  Index size() const { return static_cast<Index>(node_map.size()); }

  /// Restriction of a vertex vector to the unknowns.
  NodalVector restrict(const NodalVector& full) const {
    NodalVector out(size());
    for (Index r = 0; r < size(); ++r) out[r] = full[node_map[r]];
    return out;
  }

  /// Extension by zero on the boundary.
  NodalVector extend(const NodalVector& unknowns) const {
    NodalVector out = NodalVector::Zero(num_vertices);
    for (Index r = 0; r < size(); ++r) out[node_map[r]] = unknowns[r];
    return out;
  }
};

/// Full operator row at node i including boundary columns.
template <int Dim>
std::vector<std::pair<Index, double>> operator_row(const Mesh<Dim>& mesh, const Coefficients<Dim>& c,
                                                   const Kernel<Dim>& kernel, double epsilon, Index i,
                                                   const AssemblyOptions& options = {}) {
  std::vector<std::pair<Index, double>> entries;
  if (options.laplacian)
    for (auto [j, w] : laplacian_row(mesh, i)) entries.emplace_back(j, 0.5 * c.lambda * w);
  if (options.transform) {
    const Mat<Dim> root = transform_matrix<Dim>(star_mean_A(mesh, c, i), c.lambda);
    const auto row = build_transform_row(mesh, kernel, root, epsilon, i);
    entries.insert(entries.end(), row.entries.begin(), row.entries.end());
  }
  return merge_entries(std::move(entries));
}

template <int Dim>
DiscreteSystem assemble(const Mesh<Dim>& mesh, const Coefficients<Dim>& c, double epsilon,
                        const Kernel<Dim>& kernel, const AssemblyOptions& options = {}) {
  require(epsilon > 0.0, "assemble: epsilon must be positive");
  require(c.lambda > 0.0, "assemble: lambda must be positive");
  DiscreteSystem sys;
  sys.epsilon = epsilon;
  sys.lambda = c.lambda;
  sys.num_vertices = mesh.num_vertices();
  sys.node_map = mesh.interior_nodes();
  sys.unknown_of.assign(mesh.num_vertices(), -1);
  for (Index r = 0; r < sys.size(); ++r) sys.unknown_of[sys.node_map[r]] = r;
  const auto acute = weak_acuteness_report(mesh);
  sys.mesh_weakly_acute = acute.is_weakly_acute;
  if (!acute.is_weakly_acute)
    sys.warnings.push_back("mesh is not weakly acute (" + std::to_string(acute.violating_pairs.size()) +
                           " positive stiffness entries); monotonicity is not guaranteed");

  std::vector<Eigen::Triplet<double>> triplets;
  for (Index r = 0; r < sys.size(); ++r) {
    for (auto [j, w] : operator_row(mesh, c, kernel, epsilon, sys.node_map[r], options)) {
      const Index col = sys.unknown_of[j];
      if (col >= 0) triplets.emplace_back(r, col, w);
    }
  }
  sys.matrix.resize(sys.size(), sys.size());
  sys.matrix.setFromTriplets(triplets.begin(), triplets.end());
  sys.matrix.makeCompressed();
  sys.rhs = c.f ? sys.restrict(lumped_load(mesh, c.f)) : NodalVector::Zero(sys.size());
  return sys;
}

// ---------------------------------------------------------------------------
// Solvers

enum class SolverKind { Auto, SparseLU, Gmres };

inline SolverKind parse_solver_kind(const std::string& name) {
  if (name == "auto") return SolverKind::Auto;
  if (name == "sparse-lu" || name == "lu") return SolverKind::SparseLU;
  if (name == "gmres") return SolverKind::Gmres;
  throw DomainError("unknown solver '" + name + "' (expected auto, sparse-lu or gmres)");
}

struct SolverOptions {
  SolverKind kind = SolverKind::Auto;
  Index krylov_threshold = 100000;  // Auto switches to GMRES above this size
  int restart = 50;
  int max_iterations = 20000;
};

struct SolverInfo {
  std::string method;
  Index iterations = 0;
  Index nonzeros = 0;
};

struct Solution {
  NodalVector values;  // all vertices, zero on the boundary
  double residual_norm = 0.0;
  SolverInfo solver_info;
};

inline double infinity_norm(const SparseMatrix& m) {
  NodalVector rows = NodalVector::Zero(m.rows());
  for (Index k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) rows[it.row()] += std::abs(it.value());
  return rows.size() ? rows.maxCoeff() : 0.0;
}

/// Factorizes once, solves for any number of right-hand sides.
class SystemSolver {
 public:
  explicit SystemSolver(const DiscreteSystem& sys, SolverOptions options = {})
      : sys_(&sys), options_(options), matrix_norm_(infinity_norm(sys.matrix)) {
    if (options_.kind == SolverKind::Auto)
      options_.kind = sys.size() > options_.krylov_threshold ? SolverKind::Gmres : SolverKind::SparseLU;
    if (options_.kind == SolverKind::SparseLU) {
      lu_ = std::make_unique<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>>();
      lu_->analyzePattern(sys.matrix);
      lu_->factorize(sys.matrix);
      if (lu_->info() != Eigen::Success)
        throw NumericalError("sparse LU factorization failed: " + lu_->lastErrorMessage() +
                             " (singular operator: check weak acuteness and assembly)");
    } else {
      gmres_ = std::make_unique<Eigen::GMRES<SparseMatrix, Eigen::DiagonalPreconditioner<double>>>();
      gmres_->set_restart(options_.restart);
      gmres_->setMaxIterations(options_.max_iterations);
      gmres_->setTolerance(1e-13);
      gmres_->compute(sys.matrix);
    }
  }

  /// Solves L u = b for b given on the unknowns.
  Solution solve(const NodalVector& b) const {
    require(b.size() == sys_->size(), "solve: right-hand side has the wrong size");
    Solution sol;
    NodalVector u;
    if (lu_) {
      u = lu_->solve(b);
      sol.solver_info = {"sparse-lu", 1, static_cast<Index>(lu_->nnzL() + lu_->nnzU())};
    } else {
      u = gmres_->solve(b);
      sol.solver_info = {"gmres", static_cast<Index>(gmres_->iterations()), sys_->matrix.nonZeros()};
    }
    const NodalVector residual = sys_->matrix * u - b;
    sol.residual_norm = residual.size() ? residual.cwiseAbs().maxCoeff() : 0.0;
    const double unorm = u.size() ? u.cwiseAbs().maxCoeff() : 0.0;
    const double bnorm = b.size() ? b.cwiseAbs().maxCoeff() : 0.0;
    if (sol.residual_norm > 1e-10 * (bnorm + matrix_norm_ * unorm))
      throw NumericalError("solve: residual " + std::to_string(sol.residual_norm) +
                           " exceeds the relative tolerance 1e-10 (" + sol.solver_info.method + ")");
    sol.values = sys_->extend(u);
    return sol;
  }

 private:
  const DiscreteSystem* sys_;
  SolverOptions options_;
  double matrix_norm_;
  std::unique_ptr<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>> lu_;
  std::unique_ptr<Eigen::GMRES<SparseMatrix, Eigen::DiagonalPreconditioner<double>>> gmres_;
};

inline Solution solve(const DiscreteSystem& sys, SolverOptions options = {}) {
  return SystemSolver(sys, options).solve(sys.rhs);
}

// ---------------------------------------------------------------------------
// Structure checks

struct MonotonicityReport {
  bool passed = true;
  double worst_offdiag = 0.0;  // most negative off-diagonal / row scale
  Index worst_offdiag_row = -1;
  Index worst_offdiag_col = -1;
  double max_diagonal = -std::numeric_limits<double>::infinity();
  Index max_diagonal_row = -1;
  Index violations = 0;
};

/// Off-diagonal entries >= -1e-12 |a_ii| and diagonal entries < 0.
inline MonotonicityReport monotonicity_check(const SparseMatrix& m) {
  MonotonicityReport r;
  NodalVector diag = NodalVector::Zero(m.rows());
  for (Index k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it)
      if (it.row() == it.col()) diag[it.row()] += it.value();
  for (Index i = 0; i < m.rows(); ++i) {
    if (diag[i] > r.max_diagonal) {
      r.max_diagonal = diag[i];
      r.max_diagonal_row = i;
    }
    if (!(diag[i] < 0.0)) {
      r.passed = false;
      ++r.violations;
    }
  }
  for (Index k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      if (it.row() == it.col()) continue;
      const double scale = std::abs(diag[it.row()]);
      const double rel = scale > 0.0 ? it.value() / scale : it.value();
      if (rel < r.worst_offdiag) {
        r.worst_offdiag = rel;
        r.worst_offdiag_row = it.row();
        r.worst_offdiag_col = it.col();
      }
      if (rel < -1e-12) {
        r.passed = false;
        ++r.violations;
      }
    }
  return r;
}

inline MonotonicityReport monotonicity_check(const DiscreteSystem& sys) { return monotonicity_check(sys.matrix); }

/// Discrete maximum principle: when rhs >= 0 the solution must satisfy
/// max u <= 1e-10 ||u||_inf. Vacuously true for sign-indefinite rhs.
inline bool dmp_check(const Solution& solution, const NodalVector& rhs) {
  if (rhs.size() && rhs.minCoeff() < 0.0) return true;
  const double unorm = solution.values.size() ? solution.values.cwiseAbs().maxCoeff() : 0.0;
  return solution.values.size() == 0 || solution.values.maxCoeff() <= 1e-10 * unorm;
}

/// Number of nodes whose sign contradicts the maximum principle for a
/// sign-definite rhs (0 when rhs changes sign).
inline Index dmp_violations(const Solution& solution, const NodalVector& rhs) {
  if (rhs.size() == 0 || solution.values.size() == 0) return 0;
  const double tol = 1e-10 * solution.values.cwiseAbs().maxCoeff();
  Index count = 0;
  if (rhs.minCoeff() >= 0.0) {
    for (double u : solution.values) count += u > tol;
  } else if (rhs.maxCoeff() <= 0.0) {
    for (double u : solution.values) count += u < -tol;
  }
  return count;
}

// ---------------------------------------------------------------------------
// Exports

/// CSV "vertex_id,x1,..,xd,value".
template <int Dim>
void write_solution_csv(std::ostream& os, const Mesh<Dim>& mesh, const NodalVector& values) {
  os << "vertex_id";
  for (int a = 1; a <= Dim; ++a) os << ",x" << a;
  os << ",value\n" << std::setprecision(17);
  for (Index i = 0; i < mesh.num_vertices(); ++i) {
    os << i;
    for (int a = 0; a < Dim; ++a) os << ',' << mesh.vertex(i)[a];
    os << ',' << values[i] << '\n';
  }
}

/// Coordinate triplets "row col value", zero-based, one per line.
inline void write_matrix_triplets(std::ostream& os, const SparseMatrix& m) {
  os << "% " << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n' << std::setprecision(17);
  for (Index k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

}  // namespace twoscale
