// Command-line front end: mesh checks, single solves, ABP reports and
// convergence sweeps.

#include "twoscale/twoscale.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <variant>

namespace ts = twoscale;

namespace {

struct SolveArgs {
  std::string preset = "P2";
  double h = 1.0 / 16;
  std::string rule = "c3";
  double constant = 1.0;
  double alpha = 0.0;  // 0: preset default
  std::string kernel = "ball";
  std::string solver = "auto";
  std::string out;
};

ts::RunConfig to_config(const SolveArgs& a) {
  ts::RunConfig cfg;
  cfg.preset = a.preset;
  cfg.h = {a.h};
  cfg.rule = ts::parse_epsilon_rule(a.rule);
  cfg.constant = a.constant;
  if (a.alpha > 0.0) cfg.alpha = a.alpha;
  cfg.kernel = ts::parse_kernel_profile(a.kernel);
  cfg.solver = ts::parse_solver_kind(a.solver);
  return cfg;
}

void add_solve_options(CLI::App* cmd, SolveArgs& a) {
  cmd->add_option("--preset", a.preset, "problem preset (P1..P5, Z0)")->capture_default_str();
  cmd->add_option("--h", a.h, "mesh size, 0 < h < 1")->capture_default_str();
  cmd->add_option("--eps-rule", a.rule, "c2, c3, fixed, lower-bound or sqrt-log")->capture_default_str();
  cmd->add_option("--eps-constant", a.constant, "rule constant (the value of epsilon for 'fixed')")
      ->capture_default_str();
  cmd->add_option("--alpha", a.alpha, "Hoelder exponent for c2/c3 (default: preset)");
  cmd->add_option("--kernel", a.kernel, "ball or bump")->capture_default_str();
  cmd->add_option("--solver", a.solver, "auto, lu or gmres")->capture_default_str();
}

template <int Dim>
struct Solved {
  ts::ProblemPreset<Dim> preset;
  ts::Mesh<Dim> mesh;
  ts::DiscreteSystem system;
  ts::Solution solution;
};

template <int Dim>
Solved<Dim> solve_preset(const ts::RunConfig& cfg) {
  auto preset = ts::manufactured_problem<Dim>(cfg.preset);
  const double h = cfg.h.front();
  const double eps = ts::epsilon_rule(h, cfg.rule, cfg.constant, cfg.alpha.value_or(preset.alpha));
  auto mesh = preset.mesh(h);
  auto system = ts::assemble(mesh, preset.coefficients, eps, ts::make_kernel<Dim>(cfg));
  ts::SolverOptions opts;
  opts.kind = cfg.solver;
  auto solution = ts::solve(system, opts);
  return {std::move(preset), std::move(mesh), std::move(system), std::move(solution)};
}

template <int Dim>
int run_solve(const SolveArgs& a) {
  const auto cfg = to_config(a);
  const auto s = solve_preset<Dim>(cfg);
  const double err = (s.solution.values - s.preset.interpolate(s.mesh)).cwiseAbs().maxCoeff();
  const auto mono = ts::monotonicity_check(s.system);
  std::printf("preset %s  h %.6g  epsilon %.6g  unknowns %td  nonzeros %td\n", a.preset.c_str(), a.h,
              s.system.epsilon, s.system.size(), s.system.matrix.nonZeros());
  std::printf("solver %s  residual (max norm) %.3e\n", s.solution.solver_info.method.c_str(), s.solution.residual_norm);
  std::printf("max nodal error %.6e  monotone %s\n", err, mono.passed ? "yes" : "no");
  for (const auto& w : s.system.warnings) std::printf("warning: %s\n", w.c_str());
  if (!a.out.empty()) {
    std::ofstream os(a.out);
    if (!os) throw std::runtime_error("cannot write " + a.out);
    ts::write_solution_csv(os, s.mesh, s.solution.values);
  }
  return 0;
}

template <int Dim>
int run_abp(const SolveArgs& a) {
  const auto cfg = to_config(a);
  const auto s = solve_preset<Dim>(cfg);
  const ts::NodalVector f = ts::lumped_load(s.mesh, s.preset.coefficients.f);
  std::cout << "lower (u^-):\n";
  ts::write_abp_report(std::cout, ts::abp_report(s.mesh, s.solution.values, f));
  std::cout << "upper (u^+):\n";
  ts::write_abp_report(std::cout, ts::abp_report_upper(s.mesh, s.solution.values, f));
  return 0;
}

template <int Dim>
void describe_mesh(const ts::Mesh<Dim>& mesh) {
  const auto acute = ts::weak_acuteness_report(mesh);
  std::printf("dimension %d\nvertices %td\nelements %td\ninterior nodes %zu\n", Dim, mesh.num_vertices(),
              mesh.num_elements(), mesh.interior_nodes().size());
  std::printf("h %.6g\nshape constant %.6g\nquasi-uniformity %.6g\n", mesh.h(), mesh.shape_constant(),
              mesh.quasi_uniformity());
  std::printf("weakly acute %s", acute.is_weakly_acute ? "yes" : "no");
  if (!acute.is_weakly_acute) std::printf(" (%zu positive stiffness entries)", acute.violating_pairs.size());
  std::printf("\n");
}

int run_convergence(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  const auto cfg = ts::parse_run_config(is);
  const auto table = ts::convergence_study(cfg);
  if (cfg.output.empty()) {
    ts::write_convergence_csv(std::cout, table);
  } else {
    std::ofstream os(cfg.output);
    if (!os) throw std::runtime_error("cannot write " + cfg.output);
    ts::write_convergence_csv(os, table);
  }
  for (const auto& n : table.notices) std::cerr << "notice: " << n << '\n';
  if (table.fit_h) {
    std::cerr << "slope vs h: " << table.fit_h->slope << " +- " << table.fit_h->standard_error
              << "; vs h^2 ln(1/h): " << table.fit_h2log->slope << " +- " << table.fit_h2log->standard_error << '\n';
  }
  if (cfg.min_rate) {
    if (!table.fit_h || !(table.fit_h->slope >= *cfg.min_rate)) {
      std::cerr << "FAIL: fitted slope below min_rate = " << *cfg.min_rate << '\n';
      return 2;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-scale finite element method for A : D^2 u = f"};
  app.set_help_flag("--help", "print this help and exit");  // -h is taken by --h
  app.require_subcommand(1);

  std::string mesh_file;
  auto* check = app.add_subcommand("check-mesh", "read a mesh file and report its geometry");
  check->add_option("meshfile", mesh_file, "mesh file")->required();

  SolveArgs solve_args, abp_args;
  auto* solve_cmd = app.add_subcommand("solve", "solve a preset on a structured mesh");
  add_solve_options(solve_cmd, solve_args);
  solve_cmd->add_option("--out", solve_args.out, "solution CSV (vertex_id,x1,..,value)");

  auto* abp_cmd = app.add_subcommand("abp-report", "discrete ABP diagnostic of a solved preset");
  add_solve_options(abp_cmd, abp_args);

  std::string config_file;
  auto* conv = app.add_subcommand("convergence", "run a convergence sweep from a key = value config");
  conv->add_option("--config", config_file, "config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*check) {
      std::ifstream is(mesh_file);
      if (!is) throw std::runtime_error("cannot read " + mesh_file);
      const auto any = ts::read_mesh_any(is);
      std::visit([](const auto& mesh) { describe_mesh(mesh); }, any);
      return 0;
    }
    if (*solve_cmd) {
      return ts::preset_dimension(solve_args.preset) == 1 ? run_solve<1>(solve_args) : run_solve<2>(solve_args);
    }
    if (*abp_cmd) {
      return ts::preset_dimension(abp_args.preset) == 1 ? run_abp<1>(abp_args) : run_abp<2>(abp_args);
    }
    return run_convergence(config_file);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
