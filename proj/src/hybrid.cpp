#include "holo/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace holo::hybrid {

using geometry::norm_inf;
using geometry::sub;

// ---------------------------------------------------------------------------
// Reset application

namespace {

expr::Bindings bind_base(const Mode& source, const Vec& m) { return source.chart.bind(m); }

expr::Bindings bind_total(const Mode& source, const Vec& m, const Vec& g) {
  expr::Bindings b = source.chart.bind(m);
  if (g.size() != source.fiber_dim()) throw Error("fiber value dimension mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) b.set(source.fiber_vars[i], g[i]);
  return b;
}

Vec eval_all(const std::vector<expr::Expression>& exprs, const expr::Bindings& b) {
  Vec out(exprs.size());
  for (std::size_t i = 0; i < exprs.size(); ++i) out[i] = exprs[i].evaluate(b);
  return out;
}

}  // namespace

Vec Reset::apply_base(const Mode& source, const Vec& m) const {
  return eval_all(base, bind_base(source, m));
}

Vec Reset::apply_lifted_base(const Mode& source, const Vec& m, const Vec& g) const {
  const expr::Bindings b = bind_total(source, m, g);
  return eval_all(lifted_base.empty() ? base : lifted_base, b);
}

Vec Reset::apply_fiber(const Mode& source, const Vec& m, const Vec& g) const {
  return eval_all(fiber, bind_total(source, m, g));
}

// ---------------------------------------------------------------------------
// Bundle structure

const Mode* HybridBundle::find_mode(const std::string& id) const {
  for (const auto& m : modes)
    if (m.id == id) return &m;
  return nullptr;
}

const Mode& HybridBundle::mode(const std::string& id) const {
  const Mode* m = find_mode(id);
  if (!m) throw ValidationError("unknown mode '" + id + "'");
  return *m;
}

std::vector<const Transition*> HybridBundle::transitions_from(const std::string& source_id) const {
  std::vector<const Transition*> out;
  for (const auto& t : transitions)
    if (t.guard.source == source_id) out.push_back(&t);
  return out;
}

const Transition* HybridBundle::transition(const std::string& source_id,
                                           const std::string& target_id) const {
  for (const auto& t : transitions)
    if (t.guard.source == source_id && t.guard.target == target_id) return &t;
  return nullptr;
}

std::size_t HybridBundle::fiber_dim() const {
  return modes.empty() ? 0 : modes.front().fiber_dim();
}

namespace {

void check_vars_subset(const std::set<std::string>& free, const std::vector<std::string>& chart,
                       const std::vector<std::string>& fiber, const std::string& where) {
  for (const auto& v : free) {
    if (std::find(chart.begin(), chart.end(), v) != chart.end()) continue;
    if (std::find(fiber.begin(), fiber.end(), v) != fiber.end()) continue;
    throw ValidationError(where + " uses unknown variable '" + v + "'");
  }
}

}  // namespace

void HybridBundle::check_structure() const {
  if (modes.empty()) throw ValidationError("bundle has no modes");
  std::set<std::string> ids;
  for (const auto& m : modes) {
    if (!ids.insert(m.id).second) throw ValidationError("duplicate mode id '" + m.id + "'");
    m.check();
    if (m.fiber_vars != modes.front().fiber_vars)
      throw ValidationError("mode '" + m.id + "': fiber variables differ across modes");
  }
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& t : transitions) {
    const Mode* src = find_mode(t.guard.source);
    const Mode* dst = find_mode(t.guard.target);
    if (!src || !dst)
      throw ValidationError("transition " + t.guard.source + " -> " + t.guard.target +
                            " references unknown mode");
    if (!keys.insert({t.guard.source, t.guard.target}).second)
      throw ValidationError("duplicate transition " + t.guard.source + " -> " + t.guard.target);
    const std::string where = "transition " + t.guard.source + " -> " + t.guard.target;
    check_vars_subset(t.guard.eta.free_variables(), src->chart.vars, {}, where + " guard");
    if (t.reset.base.size() != dst->chart.dim())
      throw ValidationError(where + ": base reset arity != target chart dimension");
    for (const auto& e : t.reset.base)
      check_vars_subset(e.free_variables(), src->chart.vars, {}, where + " base reset");
    if (t.reset.fiber.size() != src->fiber_dim())
      throw ValidationError(where + ": fiber reset arity != fiber dimension");
    for (const auto& e : t.reset.fiber)
      check_vars_subset(e.free_variables(), src->chart.vars, src->fiber_vars,
                        where + " fiber reset");
    if (!t.reset.lifted_base.empty()) {
      if (t.reset.lifted_base.size() != dst->chart.dim())
        throw ValidationError(where + ": lifted base reset arity != target chart dimension");
      for (const auto& e : t.reset.lifted_base)
        check_vars_subset(e.free_variables(), src->chart.vars, src->fiber_vars,
                          where + " lifted base reset");
    }
  }
}

// ---------------------------------------------------------------------------
// validate_bundle

namespace {

double eval_eta(const Guard& guard, const Mode& source, const Vec& m) {
  return guard.eta.evaluate(source.chart.bind(m));
}

double guard_gradient_norm(const Guard& guard, const Mode& source, const Vec& m) {
  const expr::Bindings b = source.chart.bind(m);
  double s = 0.0;
  for (const auto& var : source.chart.vars) {
    const double g = expr::numeric_partial(guard.eta, var, b);
    s += g * g;
  }
  return std::sqrt(s);
}

// d eta (gamma'(t)).
double transversality_value(const Guard& guard, const Mode& source, const Curve& curve,
                            double t) {
  const Vec m = curve.at(t);
  const Vec v = curve.velocity(t);
  const expr::Bindings b = source.chart.bind(m);
  double s = 0.0;
  for (std::size_t j = 0; j < source.chart.dim(); ++j)
    s += expr::numeric_partial(guard.eta, source.chart.vars[j], b) * v[j];
  return s;
}

// Sampling box for guard root-finding: chart bounds when present, else
// [-pi, pi]^d (the builtin charts are angles).
geometry::Box sampling_box(const Mode& mode) {
  if (mode.chart.bounds) return *mode.chart.bounds;
  constexpr double kPi = 3.14159265358979323846;
  return {Vec(mode.base_dim(), -kPi), Vec(mode.base_dim(), kPi)};
}

}  // namespace

ValidationReport validate_bundle(const HybridBundle& bundle, int samples, std::uint64_t seed) {
  if (samples < 1) throw Error("validate_bundle needs samples >= 1");
  bundle.check_structure();

  ValidationReport report;
  std::string worst_desc;
  for (std::size_t ti = 0; ti < bundle.transitions.size(); ++ti) {
    const Transition& tr = bundle.transitions[ti];
    const Mode& src = bundle.mode(tr.guard.source);
    const geometry::Box box = sampling_box(src);
    const std::size_t d = src.base_dim();
    const std::size_t n = src.fiber_dim();
    std::mt19937_64 rng(seed * 7919u + ti + 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> fiber_dist(-1.0, 1.0);

    TransitionReport tr_report{tr.guard.source, tr.guard.target, 0, 0.0,
                               std::numeric_limits<double>::infinity()};
    const int max_attempts = 200 * samples;
    for (int attempt = 0; attempt < max_attempts && tr_report.samples_found < samples;
         ++attempt) {
      // Random chart line p -> q; bisect a sign change of eta along it.
      Vec p(d), q(d);
      for (std::size_t i = 0; i < d; ++i) {
        p[i] = box.lo[i] + unit(rng) * (box.hi[i] - box.lo[i]);
        q[i] = box.lo[i] + unit(rng) * (box.hi[i] - box.lo[i]);
      }
      auto line_point = [&](double s) {
        Vec m(d);
        for (std::size_t i = 0; i < d; ++i) m[i] = (1.0 - s) * p[i] + s * q[i];
        return m;
      };
      constexpr int kLineScan = 64;
      double s_lo = 0.0, f_lo = eval_eta(tr.guard, src, line_point(0.0));
      bool found = false;
      double s_hi = 0.0;
      for (int i = 1; i <= kLineScan; ++i) {
        const double s = static_cast<double>(i) / kLineScan;
        const double f = eval_eta(tr.guard, src, line_point(s));
        if (f_lo == 0.0 || f_lo * f < 0.0) {
          s_hi = s;
          found = true;
          break;
        }
        s_lo = s;
        f_lo = f;
      }
      if (!found) continue;
      for (int it = 0; it < 80 && f_lo != 0.0; ++it) {
        const double s_mid = 0.5 * (s_lo + s_hi);
        const double f_mid = eval_eta(tr.guard, src, line_point(s_mid));
        if (f_lo * f_mid <= 0.0) {
          s_hi = s_mid;
          f_hi = f_mid;
        } else {
          s_lo = s_mid;
          f_lo = f_mid;
        }
      }
      const Vec m = line_point(f_lo == 0.0 ? s_lo : 0.5 * (s_lo + s_hi));

      Vec g(n);
      for (std::size_t i = 0; i < n; ++i) g[i] = fiber_dist(rng);

      // Commuting diagram in trivialized coordinates: the base part of the
      // lifted reset must equal Delta of the base point.
      const Vec via_base = tr.reset.apply_base(src, m);
      const Vec via_lift = tr.reset.apply_lifted_base(src, m, g);
      const double violation = norm_inf(sub(via_lift, via_base));
      if (violation > tr_report.max_violation) {
        tr_report.max_violation = violation;
        if (violation > report.max_violation) {
          std::ostringstream os;
          os << tr.guard.source << " -> " << tr.guard.target << " at (";
          for (std::size_t i = 0; i < m.size(); ++i) os << (i ? ", " : "") << m[i];
          os << ")";
          worst_desc = os.str();
        }
      }
      tr_report.min_guard_gradient =
          std::min(tr_report.min_guard_gradient, guard_gradient_norm(tr.guard, src, m));
      ++tr_report.samples_found;
    }
    if (tr_report.samples_found == 0)
      throw ValidationError("could not sample guard surface of transition " + tr.guard.source +
                            " -> " + tr.guard.target +
                            " (no sign change of eta found in the sampling box)");
    report.max_violation = std::max(report.max_violation, tr_report.max_violation);
    report.transitions.push_back(std::move(tr_report));
  }
  report.passed = report.max_violation <= kDiagramTol;
  if (!report.passed) {
    std::ostringstream os;
    os << "commuting diagram violated: max violation " << report.max_violation << " on "
       << worst_desc;
    throw ValidationError(os.str());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Crossing detection

namespace {

constexpr int kScanSteps = 1024;       // samples per declared-segment interval
constexpr double kRootAccuracy = 1e-12;
constexpr double kTouchScanWindow = 1e-6;  // |eta| below this marks a touch candidate
constexpr double kTouchTol = 1e-10;        // refined |eta| that counts as a root

struct Root {
  double t;
  const Transition* tr;
};

double eta_on_curve(const Transition& tr, const Mode& src, const Curve& curve, double t) {
  return eval_eta(tr.guard, src, curve.at(t));
}

double bisect_root(const Transition& tr, const Mode& src, const Curve& curve, double lo,
                   double hi, double f_lo) {
  while (hi - lo > kRootAccuracy) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = eta_on_curve(tr, src, curve, mid);
    if (f_mid == 0.0) return mid;
    if (f_lo * f_mid < 0.0) {
      hi = mid;
    } else {
      lo = mid;
      f_lo = f_mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Minimum of (eta o gamma)^2 by ternary search.
double ternary_min(const Transition& tr, const Mode& src, const Curve& curve, double lo,
                   double hi) {
  for (int it = 0; it < 200 && hi - lo > kRootAccuracy; ++it) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    const double f1 = eta_on_curve(tr, src, curve, m1);
    const double f2 = eta_on_curve(tr, src, curve, m2);
    if (f1 * f1 <= f2 * f2) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  return 0.5 * (lo + hi);
}

/// All guard roots of the active mode's outgoing transitions in (a, b),
/// strictly interior. Ends of the interval whose |eta| is within eps_amb
/// are treated as post-impact start / declared-boundary hit and never
/// produce interior roots in their adjacent scan step.
std::vector<Root> scan_roots(const HybridBundle& bundle, const Mode& src, const Curve& curve,
                             double a, double b, double eps_amb, parallel::Policy policy) {
  std::vector<Root> roots;
  if (!(b > a)) return roots;
  const auto outgoing = bundle.transitions_from(src.id);
  if (outgoing.empty()) return roots;

  const double step = (b - a) / kScanSteps;
  std::vector<std::vector<double>> eta(outgoing.size(),
                                       std::vector<double>(kScanSteps + 1, 0.0));
  std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(static) num_threads(parallel::thread_count(policy))
  for (int i = 0; i <= kScanSteps; ++i) {
    try {
      const double t = (i == kScanSteps) ? b : a + i * step;
      const Vec m = curve.at(t);
      const expr::Bindings bindings = src.chart.bind(m);
      for (std::size_t g = 0; g < outgoing.size(); ++g)
        eta[g][static_cast<std::size_t>(i)] = outgoing[g]->guard.eta.evaluate(bindings);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t g = 0; g < outgoing.size(); ++g) {
    const std::vector<double>& f = eta[g];
    const Transition& tr = *outgoing[g];

    // A run of samples within eps_amb of zero means eta o gamma hugs the
    // guard over positive measure; crossings cannot be isolated there.
    int run = 0;
    for (int i = 0; i <= kScanSteps; ++i) {
      run = std::fabs(f[static_cast<std::size_t>(i)]) <= eps_amb ? run + 1 : 0;
      if (run >= 3)
        throw AmbiguousCrossingError("guard " + tr.guard.source + " -> " + tr.guard.target +
                                         " stays on eta = 0 over an interval",
                                     a + (i - run + 1) * step);
    }

    const bool start_on_guard = std::fabs(f.front()) <= eps_amb;
    const bool end_on_guard = std::fabs(f.back()) <= eps_amb;
    for (int i = 0; i < kScanSteps; ++i) {
      const double fi = f[static_cast<std::size_t>(i)];
      const double fj = f[static_cast<std::size_t>(i + 1)];
      const double lo = a + i * step;
      const double hi = (i + 1 == kScanSteps) ? b : a + (i + 1) * step;
      if (fi * fj < 0.0) {
        // Sign changes adjacent to an on-guard interval end are that end's
        // numerical fuzz, not interior crossings.
        if (i == 0 && start_on_guard) continue;
        if (i + 1 == kScanSteps && end_on_guard) continue;
        roots.push_back({bisect_root(tr, src, curve, lo, hi, fi), outgoing[g]});
      }
    }
    // Tangential touches: interior local minima of |eta| that reach zero
    // without a sign change.
    for (int i = 1; i < kScanSteps; ++i) {
      const double fi = f[static_cast<std::size_t>(i)];
      const double fp = f[static_cast<std::size_t>(i - 1)];
      const double fn = f[static_cast<std::size_t>(i + 1)];
      if (std::fabs(fi) > kTouchScanWindow) continue;
      if (std::fabs(fi) > std::fabs(fp) || std::fabs(fi) > std::fabs(fn)) continue;
      if (fi * fp < 0.0 || fi * fn < 0.0) continue;  // handled as sign change
      const double lo = a + (i - 1) * step;
      const double hi = (i + 1 == kScanSteps) ? b : a + (i + 1) * step;
      const double t_min = ternary_min(tr, src, curve, lo, hi);
      const double f_min = eta_on_curve(tr, src, curve, t_min);
      if (std::fabs(f_min) <= kTouchTol) {
        roots.push_back({t_min, outgoing[g]});
      } else if (fi != 0.0 && f_min * fi < 0.0) {
        // The curve dipped through the guard and back inside one scan step:
        // a double crossing below scan resolution. Recover both roots.
        roots.push_back({bisect_root(tr, src, curve, lo, t_min, fp), outgoing[g]});
        roots.push_back({bisect_root(tr, src, curve, t_min, hi, f_min), outgoing[g]});
      }
    }
  }

  std::sort(roots.begin(), roots.end(), [](const Root& x, const Root& y) { return x.t < y.t; });
  // Drop duplicate detections of one root; simultaneous roots of different
  // guards cannot be ordered.
  std::vector<Root> unique;
  for (const Root& r : roots) {
    if (r.t <= a + kRootAccuracy) continue;
    if (!unique.empty() && r.t - unique.back().t <= kRootAccuracy) {
      if (unique.back().tr != r.tr)
        throw AmbiguousCrossingError("two guards cross within root accuracy", r.t);
      continue;
    }
    unique.push_back(r);
  }
  return unique;
}

}  // namespace

// ---------------------------------------------------------------------------
// Segmentation (shared by detect_crossings and segment_loop)

namespace {

SegmentedLoop analyze_loop(const HybridBundle& bundle, const BaseLoop& loop, bool enforce,
                           parallel::Policy policy) {
  bundle.check_structure();
  if (loop.segments.empty()) throw Error("loop has no segments");
  for (std::size_t k = 0; k < loop.segments.size(); ++k) {
    const LoopSegment& s = loop.segments[k];
    if (!(s.t1 > s.t0)) throw Error("loop segment interval must have positive length");
    if (k > 0 && std::fabs(s.t0 - loop.segments[k - 1].t1) > 1e-12)
      throw Error("loop segments must be contiguous in the parameter");
  }
  const double eps_c = loop.closure_tol;

  SegmentedLoop out;
  std::string active = loop.segments.front().mode_id;
  LoopPiece piece;
  piece.mode_id = active;
  piece.start_point = loop.segments.front().curve.at(loop.segments.front().t0);

  auto close_piece = [&](const Vec& end_point) {
    piece.end_point = end_point;
    out.pieces.push_back(std::move(piece));
    piece = LoopPiece{};
  };
  auto open_piece = [&](const std::string& mode_id, const Vec& start_point) {
    piece.mode_id = mode_id;
    piece.start_point = start_point;
  };

  const std::size_t K = loop.segments.size();
  for (std::size_t k = 0; k < K; ++k) {
    const LoopSegment& seg = loop.segments[k];
    if (seg.mode_id != active) {
      // A declared mode change is only legal through a transition, which the
      // boundary handling below performs; reaching here means the declared
      // sequence disagrees with the tracked mode.
      throw ContinuityError("segment " + std::to_string(k) + " declares mode '" + seg.mode_id +
                                "' but the active mode is '" + active + "'",
                            seg.t0);
    }

    double cur_t = seg.t0;
    bool rescan = true;
    while (rescan) {
      rescan = false;
      const Mode& src = bundle.mode(active);
      if (seg.curve.dim() != src.base_dim())
        throw ContinuityError("curve dimension does not match chart of mode '" + active + "'",
                              cur_t);
      const std::vector<Root> roots =
          scan_roots(bundle, src, seg.curve, cur_t, seg.t1, eps_c, policy);
      for (const Root& root : roots) {
        const double v = transversality_value(root.tr->guard, src, seg.curve, root.t);
        if (std::fabs(v) <= root.tr->guard.transversality_tol) {
          out.skipped.push_back({root.t, active, root.tr->guard.target, v});
          continue;
        }
        // Transversal interior crossing: the declared curve continues, so
        // the reset base point must coincide with it.
        const Vec pre = seg.curve.at(root.t);
        const Vec post = root.tr->reset.apply_base(src, pre);
        if (enforce) {
          const Mode& dst = bundle.mode(root.tr->guard.target);
          if (geometry::chart_distance(dst.chart, post, pre) > eps_c)
            throw ContinuityError("loop continues at gamma(t-) but the reset maps elsewhere",
                                  root.t);
        }
        piece.chunks.push_back({k, cur_t, root.t});
        close_piece(pre);
        out.crossings.push_back(
            {root.t, active, root.tr->guard.target, pre, post, v, false});
        active = root.tr->guard.target;
        open_piece(active, post);
        cur_t = root.t;
        rescan = true;
        break;
      }
    }
    piece.chunks.push_back({k, cur_t, seg.t1});

    // Declared boundary (the next segment; past the last one, the wrap back
    // to the first).
    const Mode& src = bundle.mode(active);
    const bool last = (k + 1 == K);
    const LoopSegment& next = loop.segments[last ? 0 : k + 1];
    const Vec end_pt = seg.curve.at(seg.t1);
    const Vec next_start = next.curve.at(next.t0);
    if (next.mode_id == active) {
      if (enforce && geometry::chart_distance(src.chart, end_pt, next_start) > eps_c) {
        throw ContinuityError(last ? "loop does not close" : "declared segments are discontinuous",
                              seg.t1);
      }
      if (last) {
        close_piece(end_pt);
        out.closes_via_reset = false;
      }
      // Otherwise the piece stays open and the next segment extends it.
    } else {
      const Transition* tr = bundle.transition(active, next.mode_id);
      if (!tr)
        throw ContinuityError(
            "no transition from '" + active + "' to '" + next.mode_id + "'", seg.t1);
      const double eta_end = eval_eta(tr->guard, src, end_pt);
      if (std::fabs(eta_end) > eps_c)
        throw ContinuityError("declared transition point is not on the guard (|eta| = " +
                                  std::to_string(std::fabs(eta_end)) + ")",
                              seg.t1);
      const double v = transversality_value(tr->guard, src, seg.curve, seg.t1);
      if (std::fabs(v) <= tr->guard.transversality_tol)
        throw ContinuityError("declared transition is tangential to the guard", seg.t1);
      const Vec post = tr->reset.apply_base(src, end_pt);
      const Mode& dst = bundle.mode(next.mode_id);
      if (enforce && geometry::chart_distance(dst.chart, post, next_start) > eps_c)
        throw ContinuityError(last ? "loop does not close through the final reset"
                                   : "next segment does not start at Delta(gamma(t-))",
                              seg.t1);
      out.crossings.push_back({seg.t1, active, next.mode_id, end_pt, post, v, true});
      close_piece(end_pt);
      active = next.mode_id;
      if (!last) {
        open_piece(active, post);
      } else {
        out.closes_via_reset = true;
      }
    }
  }
  return out;
}

}  // namespace

CrossingScan detect_crossings(const HybridBundle& bundle, const BaseLoop& loop,
                              parallel::Policy policy) {
  SegmentedLoop segmented = analyze_loop(bundle, loop, /*enforce=*/false, policy);
  return {std::move(segmented.crossings), std::move(segmented.skipped)};
}

SegmentedLoop segment_loop(const HybridBundle& bundle, const BaseLoop& loop,
                           parallel::Policy policy) {
  return analyze_loop(bundle, loop, /*enforce=*/true, policy);
}

}  // namespace holo::hybrid
