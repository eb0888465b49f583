#pragma once

#include "twoscale/envelope.hpp"
#include "twoscale/kernel.hpp"
#include "twoscale/mesh.hpp"
#include "twoscale/operator.hpp"
#include "twoscale/system.hpp"
#include "twoscale/types.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace twoscale {

// ---------------------------------------------------------------------------
// Problem presets

enum class Smoothness { C2Alpha, C3Alpha };

/// Manufactured problem on a box: coefficients, exact solution and its
/// Hessian, with f = A : D^2 u.
template <int Dim>
struct ProblemPreset {
  std::string id;
  std::string description;
  Box<Dim> domain;
  Coefficients<Dim> coefficients;
  ScalarField<Dim> exact;
  MatrixField<Dim> hessian;
  double alpha = 1.0;
  Smoothness smoothness = Smoothness::C3Alpha;
  /// Exponent of sum_i int_{omega_i} |A - A(x_i)|^d <= C h^beta; infinity for
  /// constant A.
  double beta = std::numeric_limits<double>::infinity();

  Mesh<Dim> mesh(double h) const { return generate_structured_mesh<Dim>(domain, h); }

  /// Exact solution at every vertex.
  NodalVector interpolate(const Mesh<Dim>& m) const {
    NodalVector out(m.num_vertices());
    for (Index i = 0; i < m.num_vertices(); ++i) out[i] = exact(m.vertex(i));
    return out;
  }
};

inline const std::vector<std::string>& preset_ids() {
  static const std::vector<std::string> ids = {"P1", "P2", "P3", "P4", "P5", "Z0"};
  return ids;
}

inline int preset_dimension(const std::string& id) {
  if (id == "P1") return 1;
  if (id == "P2" || id == "P3" || id == "P4" || id == "P5" || id == "Z0") return 2;
  throw DomainError("unknown preset '" + id + "' (expected P1..P5 or Z0)");
}

namespace detail {

template <int Dim>
ScalarField<Dim> contraction(MatrixField<Dim> A, MatrixField<Dim> hessian) {
  return [A = std::move(A), hessian = std::move(hessian)](const Vec<Dim>& x) {
    return A(x).cwiseProduct(hessian(x)).sum();
  };
}

inline Mat<2> sym2(double a, double b, double c) {
  Mat<2> m;
  m << a, b, b, c;
  return m;
}

}  // namespace detail

template <int Dim>
ProblemPreset<Dim> manufactured_problem(const std::string& id) {
  static_check_dim<Dim>();
  if (preset_dimension(id) != Dim)
    throw DomainError("preset '" + id + "' is " + std::to_string(preset_dimension(id)) + "-dimensional");
  constexpr double pi = std::numbers::pi;
  ProblemPreset<Dim> p;
  p.id = id;
  if constexpr (Dim == 1) {
    p.description = "A = 2 on (-1, 1), u = x^4 + x^2 - 2";
    p.domain = {Vec<1>(-1.0), Vec<1>(1.0)};
    p.coefficients.A = [](const Vec<1>&) { return Mat<1>::Constant(2.0); };
    p.coefficients.lambda = 2.0;
    p.coefficients.Lambda = 2.0;
    p.exact = [](const Vec<1>& x) { return std::pow(x[0], 4) + x[0] * x[0] - 2.0; };
    p.hessian = [](const Vec<1>& x) { return Mat<1>::Constant(12.0 * x[0] * x[0] + 2.0); };
  } else {
    p.domain = {Vec<2>(0.0, 0.0), Vec<2>(1.0, 1.0)};
    const MatrixField<2> identity = [](const Vec<2>&) { return Mat<2>::Identity().eval(); };
    if (id == "P2") {
      p.description = "A = I, u = sin(pi x1) sin(pi x2)";
      p.coefficients.A = identity;
      p.coefficients.lambda = p.coefficients.Lambda = 1.0;
      p.exact = [](const Vec<2>& x) { return std::sin(pi * x[0]) * std::sin(pi * x[1]); };
      p.hessian = [](const Vec<2>& x) {
        const double s1 = std::sin(pi * x[0]), s2 = std::sin(pi * x[1]);
        const double c1 = std::cos(pi * x[0]), c2 = std::cos(pi * x[1]);
        return detail::sym2(-pi * pi * s1 * s2, pi * pi * c1 * c2, -pi * pi * s1 * s2);
      };
    } else if (id == "P3") {
      p.description = "A = [[2, 1/2], [1/2, 1]], u = x1 (1 - x1) x2 (1 - x2)";
      const Mat<2> a = detail::sym2(2.0, 0.5, 1.0);
      p.coefficients.A = [a](const Vec<2>&) { return a; };
      p.coefficients.lambda = (3.0 - std::sqrt(2.0)) / 2.0;
      p.coefficients.Lambda = (3.0 + std::sqrt(2.0)) / 2.0;
      p.exact = [](const Vec<2>& x) { return x[0] * (1 - x[0]) * x[1] * (1 - x[1]); };
      p.hessian = [](const Vec<2>& x) {
        return detail::sym2(-2 * x[1] * (1 - x[1]), (1 - 2 * x[0]) * (1 - 2 * x[1]), -2 * x[0] * (1 - x[0]));
      };
    } else if (id == "P4") {
      p.description = "A = I + diag(x1, x2) / 2, u = sin(pi x1) sin(2 pi x2)";
      p.coefficients.A = [](const Vec<2>& x) { return detail::sym2(1 + 0.5 * x[0], 0.0, 1 + 0.5 * x[1]); };
      p.coefficients.lambda = 1.0;
      p.coefficients.Lambda = 1.5;
      p.beta = 2.0;  // Lipschitz A: |A - A(x_i)| = O(h) on omega_i
      p.exact = [](const Vec<2>& x) { return std::sin(pi * x[0]) * std::sin(2 * pi * x[1]); };
      p.hessian = [](const Vec<2>& x) {
        const double s1 = std::sin(pi * x[0]), s2 = std::sin(2 * pi * x[1]);
        const double c1 = std::cos(pi * x[0]), c2 = std::cos(2 * pi * x[1]);
        return detail::sym2(-pi * pi * s1 * s2, 2 * pi * pi * c1 * c2, -4 * pi * pi * s1 * s2);
      };
    } else if (id == "P5") {
      // u = 16 b(x) r^(2 + alpha), b the quadratic bubble, r = |x - x0|
      constexpr double alpha = 0.5, power = 2.0 + alpha;
      const Vec<2> x0(0.3, 0.4);
      p.description = "A = I, u = 16 x1 (1 - x1) x2 (1 - x2) |x - (0.3, 0.4)|^2.5";
      p.coefficients.A = identity;
      p.coefficients.lambda = p.coefficients.Lambda = 1.0;
      p.alpha = alpha;
      p.smoothness = Smoothness::C2Alpha;
      p.exact = [x0](const Vec<2>& x) {
        return 16 * x[0] * (1 - x[0]) * x[1] * (1 - x[1]) * std::pow((x - x0).norm(), power);
      };
      p.hessian = [x0](const Vec<2>& x) {
        const double b = x[0] * (1 - x[0]) * x[1] * (1 - x[1]);
        const Vec<2> db((1 - 2 * x[0]) * x[1] * (1 - x[1]), x[0] * (1 - x[0]) * (1 - 2 * x[1]));
        const Mat<2> d2b = detail::sym2(-2 * x[1] * (1 - x[1]), (1 - 2 * x[0]) * (1 - 2 * x[1]), -2 * x[0] * (1 - x[0]));
        const Vec<2> y = x - x0;
        const double r = y.norm();
        if (r == 0.0) return Mat<2>::Zero().eval();
        const double g = std::pow(r, power);
        const Vec<2> dg = power * std::pow(r, power - 2) * y;
        const Mat<2> d2g = power * std::pow(r, power - 2) * Mat<2>::Identity() +
                           power * (power - 2) * std::pow(r, power - 4) * y * y.transpose();
        return (16 * (g * d2b + b * d2g + db * dg.transpose() + dg * db.transpose())).eval();
      };
    } else {  // Z0
      p.description = "A = I, u = 0 (the only affine function with zero boundary values)";
      p.coefficients.A = identity;
      p.coefficients.lambda = p.coefficients.Lambda = 1.0;
      p.exact = [](const Vec<2>&) { return 0.0; };
      p.hessian = [](const Vec<2>&) { return Mat<2>::Zero().eval(); };
    }
  }
  p.coefficients.f = detail::contraction<Dim>(p.coefficients.A, p.hessian);
  return p;
}

// ---------------------------------------------------------------------------
// epsilon(h) coupling

enum class EpsilonRule {
  C2,          // C (h^2 |ln h|)^(1 / (2 + alpha))
  C3,          // C (h^2 |ln h|)^(1 / (3 + alpha))
  Fixed,       // C
  LowerBound,  // C h ln(1/h)
  SqrtLog,     // C h |ln h|^(1/2)
};

inline EpsilonRule parse_epsilon_rule(const std::string& name) {
  if (name == "c2") return EpsilonRule::C2;
  if (name == "c3") return EpsilonRule::C3;
  if (name == "fixed") return EpsilonRule::Fixed;
  if (name == "lower-bound") return EpsilonRule::LowerBound;
  if (name == "sqrt-log") return EpsilonRule::SqrtLog;
  throw DomainError("unknown epsilon rule '" + name + "' (expected c2, c3, fixed, lower-bound or sqrt-log)");
}

inline std::string to_string(EpsilonRule rule) {
  switch (rule) {
    case EpsilonRule::C2: return "c2";
    case EpsilonRule::C3: return "c3";
    case EpsilonRule::Fixed: return "fixed";
    case EpsilonRule::LowerBound: return "lower-bound";
    case EpsilonRule::SqrtLog: return "sqrt-log";
  }
  return "?";
}

inline double epsilon_rule(double h, EpsilonRule rule, double constant = 1.0, double alpha = 1.0) {
  require(h > 0.0 && h < 1.0, "epsilon_rule: h must lie in (0, 1)");
  require(constant > 0.0, "epsilon_rule: constant must be positive");
  const double log_h = std::log(1.0 / h);
  switch (rule) {
    case EpsilonRule::C2:
      require(alpha > 0.0 && alpha <= 1.0, "epsilon_rule: alpha must lie in (0, 1]");
      return constant * std::pow(h * h * log_h, 1.0 / (2.0 + alpha));
    case EpsilonRule::C3:
      require(alpha > 0.0 && alpha <= 1.0, "epsilon_rule: alpha must lie in (0, 1]");
      return constant * std::pow(h * h * log_h, 1.0 / (3.0 + alpha));
    case EpsilonRule::Fixed: return constant;
    case EpsilonRule::LowerBound: return constant * h * log_h;
    case EpsilonRule::SqrtLog: return constant * h * std::sqrt(log_h);
  }
  throw DomainError("epsilon_rule: invalid rule");
}

// ---------------------------------------------------------------------------
// Rate fitting

struct RateFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double standard_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  std::vector<std::string> notices;  // excluded rows
};

/// Least-squares slope of ln(error) against ln(x) with its standard error.
/// Rows with non-positive or non-finite error are excluded with a notice.
inline RateFit rate_fit(const std::vector<double>& x, const std::vector<double>& error) {
  require(x.size() == error.size(), "rate_fit: size mismatch");
  RateFit fit;
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(error[k] > 0.0) || !std::isfinite(error[k]) || !(x[k] > 0.0)) {
      std::ostringstream msg;
      msg << "row " << k << " excluded from rate fit (error " << error[k] << ")";
      fit.notices.push_back(msg.str());
      continue;
    }
    lx.push_back(std::log(x[k]));
    ly.push_back(std::log(error[k]));
  }
  fit.used = lx.size();
  require(fit.used >= 3, "rate_fit: need at least three rows with positive error");
  const double n = double(fit.used);
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) mx += lx[k] / n, my += ly[k] / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxx += (lx[k] - mx) * (lx[k] - mx);
    sxy += (lx[k] - mx) * (ly[k] - my);
  }
  require(sxx > 0.0, "rate_fit: abscissae must not all coincide");
  fit.slope = sxy / sxx;
  const double intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) ssr += std::pow(ly[k] - intercept - fit.slope * lx[k], 2);
  fit.standard_error = fit.used > 2 ? std::sqrt(ssr / (n - 2.0) / sxx) : 0.0;
  return fit;
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  std::string preset = "P2";
  std::vector<double> h = {1.0 / 8, 1.0 / 16, 1.0 / 32};
  EpsilonRule rule = EpsilonRule::C3;
  double constant = 1.0;
  std::optional<double> alpha;  // defaults to the preset's
  KernelProfile kernel = KernelProfile::Ball;
  int kernel_radial = 0;  // 0: library default
  int kernel_angular = 0;
  SolverKind solver = SolverKind::Auto;
  std::string output;
  std::optional<double> min_rate;  // exit code 2 when the slope vs h falls below
  bool timing = true;              // false writes wall_ms = 0 (byte-reproducible CSV)
  bool abp = true;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

/// Decimal number or fraction "p/q".
inline double parse_number(const std::string& text) {
  const std::string s = trim(text);
  std::size_t used = 0;
  double value = 0.0;
  try {
    const auto slash = s.find('/');
    if (slash != std::string::npos) {
      std::size_t u2 = 0;
      const double num = std::stod(s.substr(0, slash), &used);
      const std::string den_text = trim(s.substr(slash + 1));
      const double den = std::stod(den_text, &u2);
      require(used == trim(s.substr(0, slash)).size() && u2 == den_text.size() && den != 0.0, "");
      return num / den;
    }
    value = std::stod(s, &used);
  } catch (const std::exception&) {
    throw DomainError("not a number: '" + s + "'");
  }
  require(used == s.size(), "not a number: '" + s + "'");
  return value;
}

inline bool parse_bool(const std::string& s) {
  if (s == "on" || s == "true" || s == "yes" || s == "1") return true;
  if (s == "off" || s == "false" || s == "no" || s == "0") return false;
  throw DomainError("not a boolean: '" + s + "'");
}

}  // namespace detail

inline std::vector<double> parse_h_list(const std::string& text) {
  std::vector<double> hs;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (detail::trim(item).empty()) continue;
    hs.push_back(detail::parse_number(item));
  }
  require(!hs.empty(), "empty h list");
  return hs;
}

/// Flat "key = value" text; '#' starts a comment. Keys: preset, h (comma
/// separated, fractions allowed), eps_rule, eps_constant, alpha, kernel,
/// kernel_radial, kernel_angular, solver, output, min_rate, timing, abp.
inline RunConfig parse_run_config(std::istream& is) {
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = detail::trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, "config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    try {
      if (key == "preset") {
        preset_dimension(value);
        cfg.preset = value;
      } else if (key == "h") {
        cfg.h = parse_h_list(value);
      } else if (key == "eps_rule") {
        cfg.rule = parse_epsilon_rule(value);
      } else if (key == "eps_constant") {
        cfg.constant = detail::parse_number(value);
      } else if (key == "alpha") {
        cfg.alpha = detail::parse_number(value);
      } else if (key == "kernel") {
        cfg.kernel = parse_kernel_profile(value);
      } else if (key == "kernel_radial") {
        cfg.kernel_radial = int(detail::parse_number(value));
      } else if (key == "kernel_angular") {
        cfg.kernel_angular = int(detail::parse_number(value));
      } else if (key == "solver") {
        cfg.solver = parse_solver_kind(value);
      } else if (key == "output") {
        cfg.output = value;
      } else if (key == "min_rate") {
        cfg.min_rate = detail::parse_number(value);
      } else if (key == "timing") {
        cfg.timing = detail::parse_bool(value);
      } else if (key == "abp") {
        cfg.abp = detail::parse_bool(value);
      } else {
        throw DomainError("unknown key '" + key + "'");
      }
    } catch (const DomainError& e) {
      throw DomainError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

template <int Dim>
Kernel<Dim> make_kernel(const RunConfig& cfg) {
  const int radial = cfg.kernel_radial > 0 ? cfg.kernel_radial : (Dim == 1 ? 16 : 8);
  const int angular = cfg.kernel_angular > 0 ? cfg.kernel_angular : 16;
  return make_kernel<Dim>(cfg.kernel, radial, angular);
}

// ---------------------------------------------------------------------------
// Convergence study

struct ConvergenceRow {
  double h = 0.0;  // nominal grid spacing
  double epsilon = 0.0;
  double eps_over_h = 0.0;
  Index unknowns = 0;
  double linf_error = std::numeric_limits<double>::quiet_NaN();
  double rate_running = std::numeric_limits<double>::quiet_NaN();  // vs the previous row
  Index dmp_violations = 0;
  double abp_ratio = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
  bool monotone = false;
  bool ok = false;
  std::string message;  // failure reason
};

struct ConvergenceTable {
  std::string preset;
  std::vector<ConvergenceRow> rows;  // decreasing h
  std::optional<RateFit> fit_h;      // slope of ln error vs ln h
  std::optional<RateFit> fit_h2log;  // slope of ln error vs ln(h^2 ln(1/h))
  bool separation_grows = true;      // eps/h increases along the sweep
  std::vector<std::string> notices;
};

/// Solve the preset on every h (sorted decreasing) and fit rates. A failing
/// row is recorded with its message and the study continues.
template <int Dim>
ConvergenceTable convergence_study(const RunConfig& cfg, const ProblemPreset<Dim>& preset) {
  require(preset.exact != nullptr, "convergence_study: preset has no exact solution");
  std::vector<double> hs = cfg.h;
  std::sort(hs.begin(), hs.end(), std::greater<>());
  require(std::adjacent_find(hs.begin(), hs.end()) == hs.end(), "convergence_study: repeated h");
  const double alpha = cfg.alpha.value_or(preset.alpha);
  ConvergenceTable table;
  table.preset = preset.id;
  for (double h : hs) {
    const double eps = epsilon_rule(h, cfg.rule, cfg.constant, alpha);
    if (!(eps > h)) {
      std::ostringstream msg;
      msg << "epsilon = " << eps << " does not exceed h = " << h;
      throw DomainError("convergence_study: " + msg.str());
    }
  }
  const auto kernel = make_kernel<Dim>(cfg);
  for (double h : hs) {
    ConvergenceRow row;
    row.h = h;
    row.epsilon = epsilon_rule(h, cfg.rule, cfg.constant, alpha);
    row.eps_over_h = row.epsilon / h;
    const auto start = std::chrono::steady_clock::now();
    try {
      const auto mesh = preset.mesh(h);
      const auto sys = assemble(mesh, preset.coefficients, row.epsilon, kernel);
      row.unknowns = sys.size();
      const auto mono = monotonicity_check(sys);
      row.monotone = mono.passed;
      if (!mono.passed) table.notices.push_back("h = " + std::to_string(h) + ": monotonicity check failed");
      SolverOptions opts;
      opts.kind = cfg.solver;
      const auto sol = solve(sys, opts);
      const NodalVector exact = preset.interpolate(mesh);
      row.linf_error = (sol.values - exact).cwiseAbs().maxCoeff();
      row.dmp_violations = dmp_violations(sol, sys.rhs);
      if (cfg.abp) {
        const NodalVector f = lumped_load(mesh, preset.coefficients.f);
        row.abp_ratio = abp_report(mesh, sol.values, f).ratio;
      }
      row.ok = true;
    } catch (const std::exception& e) {
      row.message = e.what();
      table.notices.push_back("h = " + std::to_string(h) + ": row failed: " + e.what());
    }
    const auto stop = std::chrono::steady_clock::now();
    row.wall_ms = cfg.timing ? std::chrono::duration<double, std::milli>(stop - start).count() : 0.0;
    if (!table.rows.empty()) {
      const auto& prev = table.rows.back();
      if (row.ok && prev.ok && row.linf_error > 0.0 && prev.linf_error > 0.0)
        row.rate_running = std::log(prev.linf_error / row.linf_error) / std::log(prev.h / row.h);
      if (!(row.eps_over_h > prev.eps_over_h)) table.separation_grows = false;
    }
    table.rows.push_back(row);
  }
  if (!table.separation_grows) table.notices.push_back("eps/h does not increase along the sweep");

  std::vector<double> x_h, x_log, err;
  for (const auto& r : table.rows) {
    x_h.push_back(r.h);
    x_log.push_back(r.h * r.h * std::log(1.0 / r.h));
    err.push_back(r.ok ? r.linf_error : std::numeric_limits<double>::quiet_NaN());
  }
  try {
    table.fit_h = rate_fit(x_h, err);
    table.fit_h2log = rate_fit(x_log, err);
    for (const auto& n : table.fit_h->notices) table.notices.push_back(n);
  } catch (const DomainError& e) {
    table.notices.push_back(std::string("no rate fit: ") + e.what());
  }
  return table;
}

/// Dispatch on the preset dimension.
inline ConvergenceTable convergence_study(const RunConfig& cfg) {
  if (preset_dimension(cfg.preset) == 1) return convergence_study<1>(cfg, manufactured_problem<1>(cfg.preset));
  return convergence_study<2>(cfg, manufactured_problem<2>(cfg.preset));
}

namespace detail {

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10e", v);
  return buf;
}

}  // namespace detail

/// CSV with header h,epsilon,N,linf_error,rate_running,dmp_violations,abp_ratio,wall_ms.
inline void write_convergence_csv(std::ostream& os, const ConvergenceTable& table) {
  using detail::format_number;
  os << "h,epsilon,N,linf_error,rate_running,dmp_violations,abp_ratio,wall_ms\n";
  for (const auto& r : table.rows) {
    char wall[32];
    std::snprintf(wall, sizeof wall, "%.3f", r.wall_ms);
    os << format_number(r.h) << ',' << format_number(r.epsilon) << ',' << r.unknowns << ','
       << format_number(r.linf_error) << ',' << format_number(r.rate_running) << ',' << r.dmp_violations << ','
       << format_number(r.abp_ratio) << ',' << wall << '\n';
  }
}

}  // namespace twoscale
