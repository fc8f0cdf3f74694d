// holonomy-lab: compute holonomy of hybrid principal bundles, export lifted
// trajectories, run infinite-switching sweeps and validate system files.
//
// Exit codes: 0 success, 2 input/validation error, 3 numerical failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "holo/lift.hpp"
#include "holo/limits.hpp"
#include "holo/models.hpp"

namespace {

namespace fs = std::filesystem;
using holo::geometry::GroupElement;
using holo::hybrid::BaseLoop;
using holo::hybrid::HybridBundle;
using nlohmann::json;

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// Output files are written atomically: temp file in the target directory,
// then rename.
void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw holo::Error("cannot write '" + path.string() + "'");
    out << content;
  }
  fs::rename(tmp, path);
}

struct SystemChoice {
  std::string model;  // "walker" | "disk" | "" when --system given
  std::string system_path;
  double l = 1.0;
  double delta = 0.3;
  double r = 1.0;
  long cycles = 1;
  long windings = 1;
  std::string loop_name;
};

struct LoadedSystem {
  HybridBundle bundle;
  BaseLoop loop;
  std::string description;
};

LoadedSystem resolve_system(const SystemChoice& choice, double eps_t, double eps_c,
                            bool need_loop = true) {
  LoadedSystem out;
  if (!choice.system_path.empty()) {
    holo::models::SystemDefinition def = holo::models::load_system(choice.system_path);
    out.bundle = std::move(def.bundle);
    out.description = def.name;
    if (def.loops.empty() && need_loop)
      throw holo::ParseError("system file declares no loops");
    if (!def.loops.empty()) {
      if (choice.loop_name.empty()) {
        out.loop = def.loops.begin()->second;
      } else {
        const auto it = def.loops.find(choice.loop_name);
        if (it == def.loops.end())
          throw holo::ParseError("no loop named '" + choice.loop_name + "' in system file");
        out.loop = it->second;
      }
    }
  } else if (choice.model == "walker") {
    holo::models::PlanarWalker walker = holo::models::build_planar_walker(choice.l, choice.delta);
    out.loop = walker.loop(choice.cycles);
    out.bundle = std::move(walker.bundle);
    out.description = "planar-walker";
  } else if (choice.model == "disk") {
    holo::models::RollingDisk disk = holo::models::build_rolling_disk(choice.r);
    out.loop = disk.loop(choice.windings);
    out.bundle = std::move(disk.bundle);
    out.description = "rolling-disk";
  } else {
    throw holo::Error("choose a system: --model walker|disk or --system file.json");
  }
  if (eps_t > 0.0)
    for (auto& tr : out.bundle.transitions) tr.guard.transversality_tol = eps_t;
  if (eps_c > 0.0) out.loop.closure_tol = eps_c;
  return out;
}

void add_system_flags(CLI::App* cmd, SystemChoice& choice) {
  auto* model = cmd->add_option("--model", choice.model, "builtin system: walker or disk")
                    ->check(CLI::IsMember({"walker", "disk"}));
  auto* system = cmd->add_option("--system", choice.system_path, "system definition file");
  model->excludes(system);
  system->excludes(model);
  cmd->add_option("--l", choice.l, "walker leg length");
  cmd->add_option("--delta", choice.delta, "walker half step angle (radians)");
  cmd->add_option("--r", choice.r, "disk radius");
  cmd->add_option("--cycles", choice.cycles, "walker gait cycles");
  cmd->add_option("--windings", choice.windings, "disk winding count");
  cmd->add_option("--loop", choice.loop_name, "named loop from the system file");
}

holo::lift::Method parse_method(const std::string& name) {
  if (name == "quadrature") return holo::lift::Method::Quadrature;
  if (name == "potential") return holo::lift::Method::Potential;
  return holo::lift::Method::Both;
}

int run(int argc, char** argv) {
  CLI::App app{"holonomy of hybrid principal bundles with abelian structure group"};
  app.require_subcommand(1);

  SystemChoice choice;
  double tol = holo::quadrature::kDefaultTol;
  double eps_t = -1.0, eps_c = -1.0;
  std::string method_name = "both";
  std::string output, format = "json";
  std::string crossings_path;
  int samples = 256;
  bool serial = false;

  // holonomy
  auto* cmd_holonomy = app.add_subcommand("holonomy", "total holonomy of a loop");
  add_system_flags(cmd_holonomy, choice);
  cmd_holonomy->add_option("--method", method_name, "quadrature | potential | both")
      ->check(CLI::IsMember({"quadrature", "potential", "both"}));
  cmd_holonomy->add_option("--tol", tol, "quadrature absolute tolerance");
  cmd_holonomy->add_option("--eps-t", eps_t, "transversality tolerance override");
  cmd_holonomy->add_option("--eps-c", eps_c, "closure/continuity tolerance override");
  cmd_holonomy->add_option("--output", output, "report file");
  cmd_holonomy->add_option("--format", format, "csv | json")
      ->check(CLI::IsMember({"csv", "json"}));
  cmd_holonomy->add_flag("--serial", serial, "use the serial reference path");

  // lift
  auto* cmd_lift = app.add_subcommand("lift", "lifted trajectory as CSV");
  add_system_flags(cmd_lift, choice);
  cmd_lift->add_option("--tol", tol, "quadrature absolute tolerance");
  cmd_lift->add_option("--eps-t", eps_t, "transversality tolerance override");
  cmd_lift->add_option("--eps-c", eps_c, "closure/continuity tolerance override");
  cmd_lift->add_option("--samples", samples, "samples per segment");
  cmd_lift->add_option("--output", output, "trajectory CSV file")->required();
  cmd_lift->add_option("--crossings", crossings_path, "crossing log JSON file");
  cmd_lift->add_flag("--serial", serial, "use the serial reference path");
  std::vector<double> e0_values;
  cmd_lift->add_option("--e0", e0_values, "initial fiber value (defaults to zero)");

  // sweep
  auto* cmd_sweep = app.add_subcommand("sweep", "infinite-switching convergence study");
  double sweep_K = 0.5;
  double sweep_l = 1.0;
  std::vector<long> schedule{10, 100, 1000};
  cmd_sweep->add_option("--K", sweep_K, "fixed product N*delta");
  cmd_sweep->add_option("--l", sweep_l, "walker leg length");
  cmd_sweep->add_option("--schedule", schedule, "increasing N values")->delimiter(',');
  cmd_sweep->add_option("--tol", tol, "quadrature absolute tolerance");
  cmd_sweep->add_option("--output", output, "report file");
  cmd_sweep->add_option("--format", format, "csv | json")
      ->check(CLI::IsMember({"csv", "json"}));
  cmd_sweep->add_flag("--serial", serial, "use the serial reference path");

  // check
  auto* cmd_check = app.add_subcommand("check", "validate a system definition");
  add_system_flags(cmd_check, choice);
  std::uint64_t seed = 0;
  int check_samples = 32;
  int grid_res = 17;
  double exactness_tol = 1e-6;
  cmd_check->add_option("--seed", seed, "seed for validation sampling");
  cmd_check->add_option("--samples", check_samples, "guard samples per transition");
  cmd_check->add_option("--grid", grid_res, "grid nodes per axis for the exactness check");
  cmd_check->add_option("--exactness-tol", exactness_tol, "closedness tolerance");
  cmd_check->add_option("--output", output, "JSON report file");
  cmd_check->add_flag("--serial", serial, "use the serial reference path");

  CLI11_PARSE(app, argc, argv);

  holo::lift::Options opts;
  opts.quad_tol = tol;
  opts.samples_per_segment = samples;
  opts.policy = serial ? holo::parallel::Policy::Serial : holo::parallel::Policy::Parallel;

  if (cmd_holonomy->parsed()) {
    const LoadedSystem sys = resolve_system(choice, eps_t, eps_c);
    const holo::lift::Method method = parse_method(method_name);
    const holo::lift::HolonomyResult result =
        holo::lift::compute_holonomy(sys.bundle, sys.loop, method, opts);
    std::ostringstream report;
    report << "system: " << sys.description << "\n";
    report << "method: " << holo::lift::method_name(result.method) << "\n";
    for (std::size_t a = 0; a < result.value.dim(); ++a)
      report << "dg_" << (a + 1) << ": " << fmt(result.value.components[a]) << "\n";
    report << "abs: " << fmt(result.value.norm()) << "\n";
    if (method == holo::lift::Method::Both)
      report << "cross_check_residual: " << fmt(result.cross_check_residual) << "\n";
    std::cout << report.str();
    if (!output.empty()) {
      if (format == "json") {
        json j;
        j["system"] = sys.description;
        j["method"] = holo::lift::method_name(result.method);
        j["dg"] = result.value.components;
        if (method == holo::lift::Method::Both)
          j["cross_check_residual"] = result.cross_check_residual;
        write_file_atomic(output, j.dump(2) + "\n");
      } else {
        std::ostringstream csv;
        for (std::size_t a = 0; a < result.value.dim(); ++a) csv << (a ? "," : "") << "dg_" << (a + 1);
        csv << "\n";
        for (std::size_t a = 0; a < result.value.dim(); ++a)
          csv << (a ? "," : "") << fmt(result.value.components[a]);
        csv << "\n";
        write_file_atomic(output, csv.str());
      }
    }
    return 0;
  }

  if (cmd_lift->parsed()) {
    const LoadedSystem sys = resolve_system(choice, eps_t, eps_c);
    GroupElement e0 = e0_values.empty() ? GroupElement::zero(sys.bundle.fiber_dim())
                                        : GroupElement(e0_values);
    const holo::lift::LiftResult result = holo::lift::hybrid_lift(sys.bundle, sys.loop, e0, opts);
    std::ostringstream csv;
    holo::lift::write_lift_csv(result, csv);
    write_file_atomic(output, csv.str());
    if (!crossings_path.empty()) {
      std::ostringstream log;
      holo::lift::write_crossing_log_json(result, log);
      write_file_atomic(crossings_path, log.str());
    }
    std::cout << "segments: " << result.segments.size() << "\n";
    for (std::size_t a = 0; a < result.total.dim(); ++a)
      std::cout << "dg_" << (a + 1) << ": " << fmt(result.total.components[a]) << "\n";
    return 0;
  }

  if (cmd_sweep->parsed()) {
    const holo::limits::SweepProblem problem = holo::models::walker_sweep_problem(sweep_l);
    const holo::limits::ConvergenceReport report =
        holo::limits::convergence_sweep(problem, sweep_K, schedule, opts);
    std::ostringstream summary;
    summary << "entries: " << report.entries.size() << "\n";
    for (std::size_t a = 0; a < report.limit.dim(); ++a)
      summary << "limit_" << (a + 1) << ": " << fmt(report.limit.components[a]) << "\n";
    if (report.order) {
      summary << "order: " << fmt(*report.order) << "\n";
    } else {
      summary << "order: n/a\n";
    }
    summary << "C: " << fmt(report.impact_scale_c) << "\n";
    if (!report.warning.empty()) summary << "warning: " << report.warning << "\n";
    std::cout << summary.str();
    if (!output.empty()) {
      std::ostringstream body;
      if (format == "csv") {
        holo::limits::write_sweep_csv(report, body);
      } else {
        holo::limits::write_sweep_json(report, body);
      }
      write_file_atomic(output, body.str());
    }
    return 0;
  }

  if (cmd_check->parsed()) {
    const LoadedSystem sys = resolve_system(choice, eps_t, eps_c, /*need_loop=*/false);
    json j;
    j["system"] = sys.description;
    bool ok = true;

    // Commuting diagram + transversality probe on sampled guard points.
    try {
      const holo::hybrid::ValidationReport report =
          holo::hybrid::validate_bundle(sys.bundle, check_samples, seed);
      json transitions = json::array();
      for (const auto& tr : report.transitions) {
        transitions.push_back({{"source", tr.source},
                               {"target", tr.target},
                               {"samples", tr.samples_found},
                               {"max_violation", tr.max_violation},
                               {"min_guard_gradient", tr.min_guard_gradient}});
        std::cout << "diagram " << tr.source << " -> " << tr.target
                  << ": max violation " << fmt(tr.max_violation) << ", min |grad eta| "
                  << fmt(tr.min_guard_gradient) << "\n";
      }
      j["diagram"] = {{"passed", true}, {"transitions", std::move(transitions)}};
      std::cout << "diagram check: pass\n";
    } catch (const holo::ValidationError& e) {
      j["diagram"] = {{"passed", false}, {"error", e.what()}};
      std::cout << "diagram check: FAIL (" << e.what() << ")\n";
      ok = false;
    }

    // Exactness of A dm per mode, on the chart bounds or a default box.
    json exactness = json::array();
    for (const auto& mode : sys.bundle.modes) {
      const std::size_t d = mode.base_dim();
      holo::geometry::Box region =
          mode.chart.bounds ? *mode.chart.bounds
                            : holo::geometry::Box{holo::geometry::Vec(d, -1.0),
                                                  holo::geometry::Vec(d, 1.0)};
      holo::geometry::GridSpec grid{region, std::vector<int>(d, grid_res)};
      holo::geometry::Vec anchor(d);
      for (std::size_t i = 0; i < d; ++i) anchor[i] = 0.5 * (region.lo[i] + region.hi[i]);
      const auto result =
          holo::geometry::reconstruct_potential(mode, anchor, grid, exactness_tol, opts.policy);
      json entry;
      entry["mode"] = mode.id;
      if (const auto* rec = std::get_if<holo::geometry::ReconstructedPotential>(&result)) {
        entry["exact"] = true;
        entry["max_residual"] = rec->max_residual;
        std::cout << "exactness " << mode.id << ": exact, max residual "
                  << fmt(rec->max_residual) << "\n";
      } else {
        const auto& evidence = std::get<holo::geometry::NotExactEvidence>(result);
        entry["exact"] = false;
        entry["violation"] = evidence.violation;
        entry["grid_point"] = evidence.grid_point;
        entry["component"] = evidence.component;
        entry["pair"] = {evidence.var_j, evidence.var_k};
        std::cout << "exactness " << mode.id << ": NOT exact, violation "
                  << fmt(evidence.violation) << "\n";
        ok = false;
      }
      if (mode.potential) {
        std::vector<holo::geometry::Vec> probes;
        std::mt19937_64 rng(seed + 17);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (int s = 0; s < check_samples; ++s) {
          holo::geometry::Vec m(d);
          for (std::size_t i = 0; i < d; ++i)
            m[i] = region.lo[i] + unit(rng) * (region.hi[i] - region.lo[i]);
          probes.push_back(std::move(m));
        }
        const double worst = holo::geometry::potential_consistency(mode, probes);
        entry["declared_potential_residual"] = worst;
        std::cout << "potential " << mode.id << ": |dF - A dm| <= " << fmt(worst) << "\n";
        if (worst > 1e-6) ok = false;
      }
      exactness.push_back(std::move(entry));
    }
    j["exactness"] = std::move(exactness);
    j["passed"] = ok;
    std::cout << (ok ? "check: pass\n" : "check: FAIL\n");
    if (!output.empty()) write_file_atomic(output, j.dump(2) + "\n");
    return ok ? 0 : 2;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const holo::QuadratureError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const holo::CrossCheckError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const holo::AmbiguousCrossingError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const holo::DomainError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const holo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
