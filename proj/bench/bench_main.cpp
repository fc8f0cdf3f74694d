// Benchmark of the OpenMP kernels against the serial reference path. Each
// workload runs both ways; the parallel result must match the serial one
// bit for bit (the max |diff| column should print 0).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "holo/lift.hpp"
#include "holo/limits.hpp"
#include "holo/models.hpp"

namespace {

using Clock = std::chrono::steady_clock;
using holo::geometry::GroupElement;
using holo::parallel::Policy;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Row {
  std::string name;
  double serial_s;
  double parallel_s;
  double max_diff;
};

void print_rows(const std::vector<Row>& rows) {
  std::printf("%-34s %12s %12s %10s %12s\n", "workload", "serial [s]", "parallel [s]", "speedup",
              "max |diff|");
  for (const auto& row : rows) {
    std::printf("%-34s %12.4f %12.4f %10.2f %12g\n", row.name.c_str(), row.serial_s,
                row.parallel_s, row.serial_s / row.parallel_s, row.max_diff);
  }
}

Row time_both(const std::string& name,
              const std::function<std::vector<double>(Policy)>& workload) {
  const auto t0 = Clock::now();
  const std::vector<double> serial = workload(Policy::Serial);
  const double serial_s = seconds_since(t0);
  const auto t1 = Clock::now();
  const std::vector<double> parallel = workload(Policy::Parallel);
  const double parallel_s = seconds_since(t1);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < serial.size(); ++i)
    max_diff = std::max(max_diff, std::fabs(serial[i] - parallel[i]));
  return {name, serial_s, parallel_s, max_diff};
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", holo::parallel::max_threads());
  std::vector<Row> rows;

  {
    const auto walker = holo::models::build_planar_walker(1.0, 0.05);
    const auto loop = walker.loop(2000);
    rows.push_back(time_both("walker holonomy, 4000 segments", [&](Policy policy) {
      holo::lift::Options opts;
      opts.policy = policy;
      return holo::lift::hybrid_holonomy(walker.bundle, loop, holo::lift::Method::Quadrature,
                                         opts)
          .components;
    }));
  }

  {
    const auto problem = holo::models::walker_sweep_problem(1.0);
    const std::vector<long> schedule{10, 100, 1000, 5000};
    rows.push_back(time_both("walker sweep, N up to 5000", [&](Policy policy) {
      holo::lift::Options opts;
      opts.policy = policy;
      const auto report = holo::limits::convergence_sweep(problem, 0.5, schedule, opts);
      std::vector<double> flat;
      for (const auto& entry : report.entries)
        flat.insert(flat.end(), entry.dg.components.begin(), entry.dg.components.end());
      return flat;
    }));
  }

  {
    // 2-D exact connection, dense grid: closedness scan plus edge integrals.
    holo::geometry::Mode mode;
    mode.id = "bench2d";
    mode.chart.vars = {"u", "v"};
    mode.fiber_vars = {"x"};
    mode.connection.entries = {
        {holo::expr::parse("cos(u)*v"), holo::expr::parse("sin(u)+2*v")}};
    const holo::geometry::GridSpec grid{{{-1.0, -1.0}, {1.0, 1.0}}, {81, 81}};
    rows.push_back(time_both("potential reconstruction, 81x81", [&](Policy policy) {
      const auto result =
          holo::geometry::reconstruct_potential(mode, {0.0, 0.0}, grid, 1e-6, policy);
      const auto& rec = std::get<holo::geometry::ReconstructedPotential>(result);
      std::vector<double> flat{rec.max_residual};
      const auto sample = rec.table.eval({0.5, -0.25});
      flat.insert(flat.end(), sample.begin(), sample.end());
      return flat;
    }));
  }

  std::printf("\n");
  print_rows(rows);
  return 0;
}
