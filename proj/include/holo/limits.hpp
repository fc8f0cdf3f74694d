#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "holo/lift.hpp"

// Two-mode alternating holonomy and the infinite-switching limit. A loop
// bouncing N times between guard points m1 and m2 of two exact modes has
// the closed form
//
//   dg = N * ((F1 - F2)(m1) - (F1 - F2)(m2))
//
// under this library's sign convention (segment holonomy F(start) - F(end)).
// As the guard points merge with N * ||m1 - m2|| -> C the holonomy tends to
// C * d(F1 - F2), which convergence_sweep studies numerically.

namespace holo::limits {

using geometry::Chart;
using geometry::GroupElement;
using geometry::Vec;
using hybrid::BaseLoop;
using hybrid::HybridBundle;

/// Two potentials on a shared chart, two guard points, and a cycle count.
struct AlternationSpec {
  Chart chart;
  std::vector<expr::Expression> f1;
  std::vector<expr::Expression> f2;
  Vec m1;
  Vec m2;
  long cycles = 1;
};

/// Closed-form evaluation of the alternating loop; no quadrature. The
/// per-cycle term is grouped exactly like the telescoping segment sums of
/// the hybrid path: (F1(m1) - F1(m2)) + (F2(m2) - F2(m1)).
GroupElement alternating_holonomy(const AlternationSpec& spec);

/// C * (directional derivative of (F1 - F2) at m1 along `direction`),
/// derivatives by central differences. `direction` must be a unit vector.
GroupElement infinitesimal_holonomy(const Chart& chart, const std::vector<expr::Expression>& f1,
                                    const std::vector<expr::Expression>& f2, const Vec& m1,
                                    const Vec& direction, double C);

/// Builds the hybrid system for one sweep entry. delta is the half-angle
/// style guard parameter with N * delta == K fixed across the schedule.
struct SweepProblem {
  std::function<HybridBundle(double delta)> make_bundle;
  std::function<BaseLoop(const HybridBundle&, double delta, long n)> make_loop;
  std::size_t fiber_dim = 1;
};

struct SweepEntry {
  long n = 0;
  double delta = 0.0;
  GroupElement dg;
  /// N * distance between consecutive impact points, measured between the
  /// post-point of one crossing and the pre-point of the next.
  double impact_scale_c = 0.0;
  double abs_error = 0.0;  // |dg - limit| in the max norm, filled at the end
};

struct ConvergenceReport {
  std::vector<SweepEntry> entries;
  GroupElement limit;               // Richardson extrapolation, error ~ delta^2
  std::optional<double> order;      // log-log slope of errors vs delta
  double impact_scale_c = 0.0;      // C = lim N * ||m1 - m2||
  std::string warning;

  /// The strict accessor: throws InsufficientDataError when the schedule
  /// was too short (< 3 entries) to estimate the order.
  double order_or_throw() const;
};

/// Runs the schedule with delta_k = K / N_k, holonomy per entry by the
/// potential method when every mode carries one (else quadrature). Entries
/// are independent and run concurrently; the report is ordered by N.
ConvergenceReport convergence_sweep(const SweepProblem& problem, double K,
                                    const std::vector<long>& schedule,
                                    const lift::Options& opts = {});

/// CSV: N, delta, dg_1..dg_n, abs_error_vs_limit.
void write_sweep_csv(const ConvergenceReport& report, std::ostream& os);

/// JSON summary: limit, order, C, entries, warning.
void write_sweep_json(const ConvergenceReport& report, std::ostream& os);

}  // namespace holo::limits
