#include "holo/lift.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <ostream>

#include <json.hpp>

namespace holo::lift {

using geometry::Mode;
using geometry::norm_inf;
using hybrid::LoopPiece;

std::string method_name(Method m) {
  switch (m) {
    case Method::Quadrature:
      return "quadrature";
    case Method::Potential:
      return "potential";
    case Method::Both:
      return "both";
  }
  return "?";
}

namespace {

GroupElement piece_contribution_quadrature(const HybridBundle& bundle, const BaseLoop& loop,
                                           const LoopPiece& piece, double tol) {
  const Mode& mode = bundle.mode(piece.mode_id);
  GroupElement sum = GroupElement::zero(mode.fiber_dim());
  for (const auto& chunk : piece.chunks) {
    const auto& seg = loop.segments[chunk.segment_index];
    sum += geometry::segment_holonomy_quadrature(mode, seg.curve, chunk.t0, chunk.t1, tol);
  }
  return sum;
}

GroupElement piece_contribution_potential(const HybridBundle& bundle, const LoopPiece& piece) {
  const Mode& mode = bundle.mode(piece.mode_id);
  return geometry::segment_holonomy_potential(mode, piece.start_point, piece.end_point);
}

std::vector<GroupElement> piece_contributions(const HybridBundle& bundle, const BaseLoop& loop,
                                              const SegmentedLoop& segmented, bool use_potential,
                                              const Options& opts) {
  const long count = static_cast<long>(segmented.pieces.size());
  std::vector<GroupElement> out(segmented.pieces.size());
  std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(dynamic) num_threads(parallel::thread_count(opts.policy))
  for (long i = 0; i < count; ++i) {
    try {
      const LoopPiece& piece = segmented.pieces[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(i)] =
          use_potential ? piece_contribution_potential(bundle, piece)
                        : piece_contribution_quadrature(bundle, loop, piece, opts.quad_tol);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

/// In-order accumulation of contributions and fiber-reset jumps, tracking
/// the fiber value from g0. Jump records are appended when `jumps` is given.
GroupElement accumulate(const HybridBundle& bundle, const SegmentedLoop& segmented,
                        const std::vector<GroupElement>& contributions, const Vec& g0,
                        std::vector<ResetJump>* jumps) {
  const std::size_t n = bundle.fiber_dim();
  GroupElement total = GroupElement::zero(n);
  Vec g = g0;
  for (std::size_t i = 0; i < segmented.pieces.size(); ++i) {
    total += contributions[i];
    for (std::size_t a = 0; a < n; ++a) g[a] += contributions[i].components[a];
    if (i < segmented.crossings.size()) {
      const CrossingEvent& ev = segmented.crossings[i];
      const Mode& src = bundle.mode(ev.source_mode);
      const hybrid::Transition* tr = bundle.transition(ev.source_mode, ev.target_mode);
      const Vec g_post = tr->reset.apply_fiber(src, ev.pre_point, g);
      GroupElement jump = GroupElement::zero(n);
      for (std::size_t a = 0; a < n; ++a) jump.components[a] = g_post[a] - g[a];
      total += jump;
      if (jumps) jumps->push_back({ev, g, g_post});
      g = g_post;
    }
  }
  return total;
}

}  // namespace

HolonomyResult holonomy_of_segmented(const HybridBundle& bundle, const BaseLoop& loop,
                                     const SegmentedLoop& segmented, Method method,
                                     const Options& opts) {
  const std::size_t n = bundle.fiber_dim();
  const Vec g0(n, 0.0);
  HolonomyResult result;
  result.method = method;
  if (method == Method::Quadrature || method == Method::Both) {
    const auto contributions = piece_contributions(bundle, loop, segmented, false, opts);
    result.quadrature = accumulate(bundle, segmented, contributions, g0, nullptr);
  }
  if (method == Method::Potential || method == Method::Both) {
    const auto contributions = piece_contributions(bundle, loop, segmented, true, opts);
    result.potential = accumulate(bundle, segmented, contributions, g0, nullptr);
  }
  if (method == Method::Both) {
    result.cross_check_residual = norm_inf(
        geometry::sub(result.quadrature->components, result.potential->components));
    if (result.cross_check_residual > 10.0 * opts.quad_tol)
      throw CrossCheckError("quadrature and potential holonomy disagree by " +
                                std::to_string(result.cross_check_residual),
                            result.cross_check_residual);
  }
  result.value = method == Method::Potential ? *result.potential : *result.quadrature;
  return result;
}

HolonomyResult compute_holonomy(const HybridBundle& bundle, const BaseLoop& loop, Method method,
                                const Options& opts) {
  const SegmentedLoop segmented = hybrid::segment_loop(bundle, loop, opts.policy);
  return holonomy_of_segmented(bundle, loop, segmented, method, opts);
}

GroupElement hybrid_holonomy(const HybridBundle& bundle, const BaseLoop& loop, Method method,
                             const Options& opts) {
  return compute_holonomy(bundle, loop, method, opts).value;
}

// ---------------------------------------------------------------------------
// Lift with sampled trajectory

namespace {

struct PieceLift {
  std::vector<SamplePoint> samples;
  GroupElement contribution;
};

/// Samples one piece and integrates g cumulatively between samples. The
/// g values are pinned at the piece end to the single-shot contribution,
/// which sampling must not affect.
PieceLift lift_piece(const HybridBundle& bundle, const BaseLoop& loop, const LoopPiece& piece,
                     const Options& opts) {
  const Mode& mode = bundle.mode(piece.mode_id);
  const std::size_t n = mode.fiber_dim();

  PieceLift out;
  out.contribution = piece_contribution_quadrature(bundle, loop, piece, opts.quad_tol);

  const int samples = std::max(2, opts.samples_per_segment);
  const double piece_len = piece.t1() - piece.t0();
  const double sample_tol = opts.quad_tol / samples;
  Vec g(n, 0.0);  // relative to the piece start; shifted by the caller
  for (const auto& chunk : piece.chunks) {
    const auto& curve = loop.segments[chunk.segment_index].curve;
    const double len = chunk.t1 - chunk.t0;
    const int count =
        std::max(2, static_cast<int>(std::lround(samples * (len / piece_len))) + 1);
    for (int i = 0; i < count; ++i) {
      const double t = chunk.t0 + (chunk.t1 - chunk.t0) * i / (count - 1);
      if (i > 0) {
        const double prev = out.samples.back().t;
        const GroupElement step = geometry::segment_holonomy_quadrature(
            mode, curve, prev, t, sample_tol);
        for (std::size_t a = 0; a < n; ++a) g[a] += step.components[a];
      } else if (!out.samples.empty()) {
        continue;  // chunk joins share their sample point
      }
      out.samples.push_back({t, curve.at(t), g});
    }
  }
  if (!out.samples.empty()) out.samples.back().g = out.contribution.components;
  return out;
}

}  // namespace

LiftResult hybrid_lift(const HybridBundle& bundle, const BaseLoop& loop, const GroupElement& e0,
                       const Options& opts) {
  if (e0.dim() != bundle.fiber_dim()) throw Error("e0 dimension does not match fiber");
  const SegmentedLoop segmented = hybrid::segment_loop(bundle, loop, opts.policy);

  const long count = static_cast<long>(segmented.pieces.size());
  std::vector<PieceLift> lifted(segmented.pieces.size());
  std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(dynamic) num_threads(parallel::thread_count(opts.policy))
  for (long i = 0; i < count; ++i) {
    try {
      lifted[static_cast<std::size_t>(i)] =
          lift_piece(bundle, loop, segmented.pieces[static_cast<std::size_t>(i)], opts);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  const std::size_t n = bundle.fiber_dim();
  LiftResult result;
  result.method = Method::Quadrature;
  result.total = GroupElement::zero(n);
  Vec g = e0.components;
  for (std::size_t i = 0; i < segmented.pieces.size(); ++i) {
    SegmentLift seg;
    seg.mode_id = segmented.pieces[i].mode_id;
    seg.contribution = lifted[i].contribution;
    seg.samples = std::move(lifted[i].samples);
    for (auto& sample : seg.samples)
      for (std::size_t a = 0; a < n; ++a) sample.g[a] += g[a];
    result.total += seg.contribution;
    for (std::size_t a = 0; a < n; ++a) g[a] += seg.contribution.components[a];
    result.segments.push_back(std::move(seg));

    if (i < segmented.crossings.size()) {
      const CrossingEvent& ev = segmented.crossings[i];
      const Mode& src = bundle.mode(ev.source_mode);
      const hybrid::Transition* tr = bundle.transition(ev.source_mode, ev.target_mode);
      const Vec g_post = tr->reset.apply_fiber(src, ev.pre_point, g);
      GroupElement jump = GroupElement::zero(n);
      for (std::size_t a = 0; a < n; ++a) jump.components[a] = g_post[a] - g[a];
      result.total += jump;
      result.jumps.push_back({ev, g, g_post});
      g = g_post;
    }
  }
  return result;
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

void write_lift_csv(const LiftResult& result, std::ostream& os) {
  if (result.segments.empty()) return;
  const std::size_t d = result.segments.front().samples.empty()
                            ? 0
                            : result.segments.front().samples.front().m.size();
  const std::size_t n = result.total.dim();
  for (const auto& seg : result.segments)
    for (const auto& s : seg.samples)
      if (s.m.size() != d) throw Error("CSV export needs one base dimension across modes");

  os << "t";
  for (std::size_t j = 1; j <= d; ++j) os << ",m_" << j;
  for (std::size_t a = 1; a <= n; ++a) os << ",g_" << a;
  os << ",mode_id\n";
  for (std::size_t i = 0; i < result.segments.size(); ++i) {
    if (i > 0) os << "\n";
    const auto& seg = result.segments[i];
    for (const auto& s : seg.samples) {
      print_number(os, s.t);
      for (double x : s.m) {
        os << ',';
        print_number(os, x);
      }
      for (double x : s.g) {
        os << ',';
        print_number(os, x);
      }
      os << ',' << seg.mode_id << '\n';
    }
  }
}

void write_crossing_log_json(const LiftResult& result, std::ostream& os) {
  nlohmann::json log = nlohmann::json::array();
  for (const auto& jump : result.jumps) {
    nlohmann::json entry;
    entry["t"] = jump.event.t;
    entry["source"] = jump.event.source_mode;
    entry["target"] = jump.event.target_mode;
    entry["pre_point"] = jump.event.pre_point;
    entry["post_point"] = jump.event.post_point;
    entry["transversality"] = jump.event.transversality;
    entry["at_declared_boundary"] = jump.event.at_declared_boundary;
    entry["g_pre"] = jump.g_pre;
    entry["g_post"] = jump.g_post;
    Vec delta(jump.g_post.size());
    for (std::size_t a = 0; a < delta.size(); ++a) delta[a] = jump.g_post[a] - jump.g_pre[a];
    entry["jump"] = delta;
    log.push_back(std::move(entry));
  }
  os << log.dump(2) << '\n';
}

}  // namespace holo::lift
