#include "twoscale/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace twoscale;

namespace {

// central second differences, independent of the symbolic Hessians
double fd_contraction(const ProblemPreset<2>& p, const Vec<2>& x, double d) {
  const Mat<2> a = p.coefficients.A(x);
  auto u = [&](double dx, double dy) { return p.exact(Vec<2>(x[0] + dx, x[1] + dy)); };
  const double uxx = (u(d, 0) - 2 * u(0, 0) + u(-d, 0)) / (d * d);
  const double uyy = (u(0, d) - 2 * u(0, 0) + u(0, -d)) / (d * d);
  const double uxy = (u(d, d) - u(d, -d) - u(-d, d) + u(-d, -d)) / (4 * d * d);
  return a(0, 0) * uxx + (a(0, 1) + a(1, 0)) * uxy + a(1, 1) * uyy;
}

}  // namespace

TEST(Presets, OneDimensionalSourceAtOrigin) {
  const auto p = manufactured_problem<1>("P1");
  EXPECT_DOUBLE_EQ(p.coefficients.f(Vec<1>(0.0)), 4.0);
  EXPECT_DOUBLE_EQ(p.coefficients.f(Vec<1>(0.5)), 24 * 0.25 + 4);
  EXPECT_DOUBLE_EQ(p.exact(Vec<1>(1.0)), 0.0);
  EXPECT_DOUBLE_EQ(p.exact(Vec<1>(-1.0)), 0.0);
}

TEST(Presets, SineProductSourceAtCentre) {
  const auto p = manufactured_problem<2>("P2");
  EXPECT_NEAR(p.coefficients.f(Vec<2>(0.5, 0.5)), -2 * std::numbers::pi * std::numbers::pi, 1e-12);
}

TEST(Presets, SymbolicSourceMatchesFiniteDifferences) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (const std::string id : {"P2", "P3", "P4", "P5"}) {
    const auto p = manufactured_problem<2>(id);
    for (int k = 0; k < 50; ++k) {
      const Vec<2> x(u(rng), u(rng));
      if (id == "P5" && (x - Vec<2>(0.3, 0.4)).norm() < 0.05) continue;
      // truncation O(d^2) and round-off O(1e-16 / d^2) balance near d = 1e-4;
      // the quartic P3 is held to an absolute 1e-6, the rest relative to |f|
      const double f = p.coefficients.f(x);
      const double tol = id == "P3" ? 1e-6 : 1e-6 * std::max(1.0, std::abs(f));
      EXPECT_NEAR(f, fd_contraction(p, x, 1e-4), tol) << id << " at " << x.transpose();
    }
  }
}

TEST(Presets, HomogeneousBoundaryValues) {
  for (const std::string id : {"P2", "P3", "P4", "P5", "Z0"}) {
    const auto p = manufactured_problem<2>(id);
    const auto mesh = p.mesh(0.125);
    const NodalVector u = p.interpolate(mesh);
    for (Index i = 0; i < mesh.num_vertices(); ++i)
      if (mesh.is_boundary(i)) EXPECT_NEAR(u[i], 0.0, 1e-15) << id;
  }
}

TEST(Presets, CoefficientBoundsHold) {
  for (const std::string id : {"P2", "P3", "P4", "P5"}) {
    const auto p = manufactured_problem<2>(id);
    EXPECT_NO_THROW(validate_coefficients(p.mesh(0.25), p.coefficients)) << id;
  }
}

TEST(Presets, UnknownIdAndDimensionMismatch) {
  EXPECT_THROW(preset_dimension("P9"), DomainError);
  EXPECT_THROW(manufactured_problem<2>("P1"), DomainError);
  EXPECT_THROW(manufactured_problem<1>("P2"), DomainError);
  EXPECT_EQ(preset_dimension("P1"), 1);
  EXPECT_EQ(preset_dimension("P4"), 2);
}

TEST(EpsilonRule, ClosedFormValues) {
  const double h = 1.0 / 64;
  EXPECT_NEAR(epsilon_rule(h, EpsilonRule::C3, 1.0, 1.0), std::pow(h * h * std::log(64.0), 0.25), 1e-15);
  EXPECT_NEAR(epsilon_rule(h, EpsilonRule::C2, 2.0, 0.5), 2 * std::pow(h * h * std::log(64.0), 1 / 2.5), 1e-15);
  EXPECT_NEAR(epsilon_rule(h, EpsilonRule::LowerBound, 1.0), h * std::log(1 / h), 1e-15);
  EXPECT_NEAR(epsilon_rule(h, EpsilonRule::SqrtLog, 1.0), h * std::sqrt(std::log(1 / h)), 1e-15);
  EXPECT_EQ(epsilon_rule(0.5, EpsilonRule::Fixed, 0.3), epsilon_rule(0.01, EpsilonRule::Fixed, 0.3));
}

TEST(EpsilonRule, RejectsLargeMeshSize) {
  EXPECT_THROW(epsilon_rule(1.0, EpsilonRule::C3), DomainError);
  EXPECT_THROW(epsilon_rule(2.0, EpsilonRule::Fixed, 0.3), DomainError);
  EXPECT_THROW(epsilon_rule(0.0, EpsilonRule::C2), DomainError);
  EXPECT_THROW(parse_epsilon_rule("c4"), DomainError);
}

TEST(EpsilonRule, TwoScaleSeparationGrows) {
  for (auto rule : {EpsilonRule::C2, EpsilonRule::C3, EpsilonRule::LowerBound, EpsilonRule::SqrtLog}) {
    double prev = 0.0;
    for (int k = 3; k <= 10; ++k) {
      const double h = std::ldexp(1.0, -k), eps = epsilon_rule(h, rule);
      EXPECT_GT(eps, h) << to_string(rule);
      EXPECT_GT(eps / h, prev) << to_string(rule);
      prev = eps / h;
    }
  }
}

TEST(RateFit, ExactPowers) {
  std::vector<double> h, e1, e2;
  for (int k = 2; k <= 7; ++k) {
    h.push_back(std::ldexp(1.0, -k));
    e1.push_back(h.back());
    e2.push_back(h.back() * h.back());
  }
  EXPECT_NEAR(rate_fit(h, e1).slope, 1.0, 1e-12);
  EXPECT_NEAR(rate_fit(h, e2).slope, 2.0, 1e-12);
  EXPECT_NEAR(rate_fit(h, e2).standard_error, 0.0, 1e-10);
}

TEST(RateFit, NoisyPower) {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  std::vector<double> h, e;
  for (int k = 2; k <= 8; ++k) {
    h.push_back(std::ldexp(1.0, -k));
    e.push_back(std::pow(h.back(), 1.5) * (1 + 0.05 * noise(rng)));
  }
  const auto fit = rate_fit(h, e);
  EXPECT_GE(fit.slope, 1.35);
  EXPECT_LE(fit.slope, 1.65);
  EXPECT_GT(fit.standard_error, 0.0);
}

TEST(RateFit, DegenerateRowsExcluded) {
  const std::vector<double> h = {0.5, 0.25, 0.125, 0.0625, 0.03125};
  const std::vector<double> e = {0.5, 0.0, 0.125, std::nan(""), 0.03125};
  const auto fit = rate_fit(h, e);
  EXPECT_EQ(fit.used, 3u);
  EXPECT_EQ(fit.notices.size(), 2u);
  EXPECT_NEAR(fit.slope, 1.0, 1e-12);
  EXPECT_THROW(rate_fit({0.5, 0.25, 0.125}, {1.0, 0.0, 0.5}), DomainError);
}

TEST(RunConfig, ParsesKeyValueText) {
  std::istringstream is(
      "# sweep\n"
      "preset = P1\n"
      "h = 1/8, 1/16, 0.03125\n"
      "eps_rule = lower-bound\n"
      "eps_constant = 2\n"
      "alpha = 0.5   # C2 only\n"
      "kernel = bump\n"
      "solver = gmres\n"
      "output = out.csv\n"
      "min_rate = 0.8\n"
      "timing = off\n");
  const auto cfg = parse_run_config(is);
  EXPECT_EQ(cfg.preset, "P1");
  ASSERT_EQ(cfg.h.size(), 3u);
  EXPECT_DOUBLE_EQ(cfg.h[1], 1.0 / 16);
  EXPECT_DOUBLE_EQ(cfg.h[2], 1.0 / 32);
  EXPECT_EQ(cfg.rule, EpsilonRule::LowerBound);
  EXPECT_DOUBLE_EQ(cfg.constant, 2.0);
  EXPECT_DOUBLE_EQ(*cfg.alpha, 0.5);
  EXPECT_EQ(cfg.kernel, KernelProfile::Bump);
  EXPECT_EQ(cfg.solver, SolverKind::Gmres);
  EXPECT_EQ(cfg.output, "out.csv");
  EXPECT_DOUBLE_EQ(*cfg.min_rate, 0.8);
  EXPECT_FALSE(cfg.timing);
}

TEST(RunConfig, RejectsMalformedLines) {
  std::istringstream a("preset P2\n"), b("colour = red\n"), c("h = 1/0\n"), d("preset = Q7\n");
  EXPECT_THROW(parse_run_config(a), DomainError);
  EXPECT_THROW(parse_run_config(b), DomainError);
  EXPECT_THROW(parse_run_config(c), DomainError);
  EXPECT_THROW(parse_run_config(d), DomainError);
}

TEST(ConvergenceStudy, ZeroSolutionIsReproduced) {
  RunConfig cfg;
  cfg.preset = "Z0";
  cfg.h = {1.0 / 4, 1.0 / 8, 1.0 / 16};
  const auto table = convergence_study(cfg);
  ASSERT_EQ(table.rows.size(), 3u);
  for (const auto& r : table.rows) {
    EXPECT_TRUE(r.ok);
    EXPECT_LE(r.linf_error, 1e-9);
    EXPECT_TRUE(r.monotone);
  }
  EXPECT_FALSE(table.fit_h.has_value());  // no positive errors to fit
}

TEST(ConvergenceStudy, OneDimensionalRateIsLinear) {
  RunConfig cfg;
  cfg.preset = "P1";
  cfg.h = {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128};
  for (auto rule : {EpsilonRule::C2, EpsilonRule::C3}) {
    cfg.rule = rule;
    const auto table = convergence_study(cfg);
    ASSERT_TRUE(table.fit_h.has_value());
    EXPECT_GE(table.fit_h->slope, 0.8) << to_string(rule);
    EXPECT_LE(table.fit_h->slope, 1.3) << to_string(rule);
    EXPECT_TRUE(table.separation_grows);
    for (const auto& r : table.rows) {
      EXPECT_EQ(r.dmp_violations, 0);  // f > 0 forces u_h <= 0
      EXPECT_TRUE(std::isfinite(r.abp_ratio));
    }
  }
}

TEST(ConvergenceStudy, RowsSortedAndEpsilonRecorded) {
  RunConfig cfg;
  cfg.preset = "P2";
  cfg.h = {1.0 / 16, 1.0 / 4, 1.0 / 8};
  cfg.abp = false;
  const auto table = convergence_study(cfg);
  ASSERT_EQ(table.rows.size(), 3u);
  EXPECT_DOUBLE_EQ(table.rows[0].h, 0.25);
  EXPECT_DOUBLE_EQ(table.rows[2].h, 1.0 / 16);
  for (const auto& r : table.rows) EXPECT_DOUBLE_EQ(r.eps_over_h, r.epsilon / r.h);
  EXPECT_TRUE(std::isnan(table.rows[0].rate_running));
  EXPECT_TRUE(std::isfinite(table.rows[1].rate_running));
}

TEST(ConvergenceStudy, RejectsEpsilonBelowMeshSize) {
  RunConfig cfg;
  cfg.preset = "P2";
  cfg.h = {0.5, 0.25};
  cfg.rule = EpsilonRule::LowerBound;  // h ln 2 < h at h = 1/2
  EXPECT_THROW(convergence_study(cfg), DomainError);
}

TEST(ConvergenceStudy, CsvIsReproducible) {
  std::istringstream cfg_text("preset = P3\nh = 1/4, 1/8, 1/16\neps_rule = c3\ntiming = off\n");
  const auto cfg = parse_run_config(cfg_text);
  std::ostringstream a, b;
  write_convergence_csv(a, convergence_study(cfg));
  write_convergence_csv(b, convergence_study(cfg));
  EXPECT_EQ(a.str(), b.str());
  std::istringstream lines(a.str());
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "h,epsilon,N,linf_error,rate_running,dmp_violations,abp_ratio,wall_ms");
  int rows = 0;
  for (std::string line; std::getline(lines, line);) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 7);
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "0.000");
  }
  EXPECT_EQ(rows, 3);
}
