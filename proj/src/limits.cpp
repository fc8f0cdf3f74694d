#include "holo/limits.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <ostream>

#include <json.hpp>

namespace holo::limits {

using geometry::norm2;
using geometry::norm_inf;
using geometry::sub;

namespace {

Vec eval_components(const std::vector<expr::Expression>& f, const Chart& chart, const Vec& m) {
  const expr::Bindings b = chart.bind(m);
  Vec out(f.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f[i].evaluate(b);
  return out;
}

}  // namespace

GroupElement alternating_holonomy(const AlternationSpec& spec) {
  if (spec.f1.size() != spec.f2.size()) throw Error("potentials have different fiber dimension");
  if (spec.cycles < 0) throw Error("cycle count must be non-negative");
  const Vec f1_m1 = eval_components(spec.f1, spec.chart, spec.m1);
  const Vec f1_m2 = eval_components(spec.f1, spec.chart, spec.m2);
  const Vec f2_m1 = eval_components(spec.f2, spec.chart, spec.m1);
  const Vec f2_m2 = eval_components(spec.f2, spec.chart, spec.m2);
  GroupElement per_cycle = GroupElement::zero(spec.f1.size());
  for (std::size_t a = 0; a < per_cycle.dim(); ++a) {
    const double leg1 = f1_m1[a] - f1_m2[a];  // mode 1 travels m1 -> m2
    const double leg2 = f2_m2[a] - f2_m1[a];  // mode 2 travels m2 -> m1
    per_cycle.components[a] = leg1 + leg2;
  }
  return static_cast<double>(spec.cycles) * per_cycle;
}

GroupElement infinitesimal_holonomy(const Chart& chart, const std::vector<expr::Expression>& f1,
                                    const std::vector<expr::Expression>& f2, const Vec& m1,
                                    const Vec& direction, double C) {
  if (f1.size() != f2.size()) throw Error("potentials have different fiber dimension");
  if (C < 0.0) throw Error("impact scale C must be non-negative");
  if (std::fabs(norm2(direction) - 1.0) > 1e-6) throw Error("direction must be a unit vector");
  const expr::Bindings b = chart.bind(m1);
  GroupElement out = GroupElement::zero(f1.size());
  for (std::size_t a = 0; a < f1.size(); ++a) {
    double directional = 0.0;
    for (std::size_t j = 0; j < chart.dim(); ++j) {
      const double d1 = expr::numeric_partial(f1[a], chart.vars[j], b);
      const double d2 = expr::numeric_partial(f2[a], chart.vars[j], b);
      directional += direction[j] * (d1 - d2);
    }
    out.components[a] = C * directional;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convergence sweep

double ConvergenceReport::order_or_throw() const {
  if (!order)
    throw InsufficientDataError(
        "order estimation needs a schedule of at least 3 entries" +
        (warning.empty() ? std::string() : " (" + warning + ")"));
  return *order;
}

namespace {

bool all_modes_have_potential(const HybridBundle& bundle) {
  return std::all_of(bundle.modes.begin(), bundle.modes.end(),
                     [](const geometry::Mode& m) { return m.potential.has_value(); });
}

SweepEntry run_entry(const SweepProblem& problem, double K, long n, const lift::Options& opts) {
  SweepEntry entry;
  entry.n = n;
  entry.delta = K / static_cast<double>(n);
  const HybridBundle bundle = problem.make_bundle(entry.delta);
  const BaseLoop loop = problem.make_loop(bundle, entry.delta, n);
  const hybrid::SegmentedLoop segmented = hybrid::segment_loop(bundle, loop, opts.policy);
  const lift::Method method =
      all_modes_have_potential(bundle) ? lift::Method::Potential : lift::Method::Quadrature;
  entry.dg = lift::holonomy_of_segmented(bundle, loop, segmented, method, opts).value;
  if (segmented.crossings.size() >= 2) {
    const Vec& leave = segmented.crossings[0].post_point;
    const Vec& arrive = segmented.crossings[1].pre_point;
    entry.impact_scale_c = static_cast<double>(n) * norm2(sub(arrive, leave));
  }
  return entry;
}

std::optional<double> fit_order(const std::vector<SweepEntry>& entries) {
  // Least-squares slope of log(err) on log(delta), positive errors only.
  std::vector<double> xs, ys;
  for (const auto& e : entries) {
    if (e.abs_error > 0.0 && e.delta > 0.0) {
      xs.push_back(std::log(e.delta));
      ys.push_back(std::log(e.abs_error));
    }
  }
  if (xs.size() < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= xs.size();
  my /= ys.size();
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

}  // namespace

ConvergenceReport convergence_sweep(const SweepProblem& problem, double K,
                                    const std::vector<long>& schedule,
                                    const lift::Options& opts) {
  if (schedule.empty()) throw Error("sweep schedule is empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i] < 1) throw Error("sweep schedule entries must be positive");
    if (i > 0 && schedule[i] <= schedule[i - 1])
      throw Error("sweep schedule must be strictly increasing");
  }

  ConvergenceReport report;
  report.entries.resize(schedule.size());

  if (K == 0.0) {
    // Degenerate: the guard points coincide for every N and nothing moves.
    for (std::size_t i = 0; i < schedule.size(); ++i)
      report.entries[i] = {schedule[i], 0.0, GroupElement::zero(problem.fiber_dim), 0.0, 0.0};
    report.limit = GroupElement::zero(problem.fiber_dim);
    report.warning = "K = 0: all entries are identically zero; no order estimate";
    return report;
  }

  const long count = static_cast<long>(schedule.size());
  std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(dynamic) num_threads(parallel::thread_count(opts.policy))
  for (long i = 0; i < count; ++i) {
    try {
      report.entries[static_cast<std::size_t>(i)] =
          run_entry(problem, K, schedule[static_cast<std::size_t>(i)], opts);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  // Richardson extrapolation from the last two entries, assuming the error
  // scales like delta^2 (exact for sin(delta)/delta systems; the empirical
  // order below is estimated, not assumed).
  const SweepEntry& last = report.entries.back();
  if (report.entries.size() >= 2) {
    const SweepEntry& prev = report.entries[report.entries.size() - 2];
    const double rho = prev.delta / last.delta;
    const double rho2 = rho * rho;
    report.limit = GroupElement::zero(last.dg.dim());
    for (std::size_t a = 0; a < report.limit.dim(); ++a)
      report.limit.components[a] =
          (rho2 * last.dg.components[a] - prev.dg.components[a]) / (rho2 - 1.0);
  } else {
    report.limit = last.dg;
    report.warning = "schedule of length 1: limit is the single entry, no order estimate";
  }
  for (auto& entry : report.entries)
    entry.abs_error = norm_inf(sub(entry.dg.components, report.limit.components));

  if (report.entries.size() >= 3) {
    report.order = fit_order(report.entries);
    if (!report.order) report.warning = "errors vanished; order estimate unavailable";
  } else if (report.warning.empty()) {
    report.warning = "schedule shorter than 3 entries: no order estimate";
  }
  report.impact_scale_c = last.impact_scale_c;
  return report;
}

// ---------------------------------------------------------------------------
// Export

namespace {

void print_number(std::ostream& os, double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  os << buf;
}

}  // namespace

void write_sweep_csv(const ConvergenceReport& report, std::ostream& os) {
  const std::size_t n = report.limit.dim();
  os << "N,delta";
  for (std::size_t a = 1; a <= n; ++a) os << ",dg_" << a;
  os << ",abs_error_vs_limit\n";
  for (const auto& entry : report.entries) {
    os << entry.n << ',';
    print_number(os, entry.delta);
    for (double x : entry.dg.components) {
      os << ',';
      print_number(os, x);
    }
    os << ',';
    print_number(os, entry.abs_error);
    os << '\n';
  }
}

void write_sweep_json(const ConvergenceReport& report, std::ostream& os) {
  nlohmann::json j;
  j["limit"] = report.limit.components;
  if (report.order) {
    j["order"] = *report.order;
  } else {
    j["order"] = nullptr;
  }
  j["C"] = report.impact_scale_c;
  if (!report.warning.empty()) j["warning"] = report.warning;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& entry : report.entries) {
    entries.push_back({{"N", entry.n},
                       {"delta", entry.delta},
                       {"dg", entry.dg.components},
                       {"C", entry.impact_scale_c},
                       {"abs_error", entry.abs_error}});
  }
  j["entries"] = std::move(entries);
  os << j.dump(2) << '\n';
}

}  // namespace holo::limits
