#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "holo/hybrid.hpp"

// Hybrid lifts and total hybrid holonomy. A lift integrates gdot = -A(m) mdot
// along every piece of the segmented loop, restarting each piece from the
// fiber reset of the previous crossing. The total holonomy is the sum of the
// per-piece contributions plus the fiber-reset jumps, accumulated strictly in
// traversal order (the parallel path computes piece contributions
// concurrently and merges them in order, so its output is bit-identical to
// the serial reference).

namespace holo::lift {

using geometry::GroupElement;
using geometry::Vec;
using hybrid::BaseLoop;
using hybrid::CrossingEvent;
using hybrid::HybridBundle;
using hybrid::SegmentedLoop;

enum class Method { Quadrature, Potential, Both };

std::string method_name(Method m);

struct Options {
  double quad_tol = quadrature::kDefaultTol;
  int samples_per_segment = 256;  // lift trajectory only; no effect on holonomy
  parallel::Policy policy = parallel::Policy::Parallel;
};

struct SamplePoint {
  double t;
  Vec m;
  Vec g;
};

struct SegmentLift {
  std::string mode_id;
  std::vector<SamplePoint> samples;
  GroupElement contribution;
};

struct ResetJump {
  CrossingEvent event;
  Vec g_pre;
  Vec g_post;
};

struct LiftResult {
  std::vector<SegmentLift> segments;
  std::vector<ResetJump> jumps;
  GroupElement total;
  Method method = Method::Quadrature;
};

/// Lifts the loop through e0. The base projection of the lift equals the
/// input loop by construction (samples store the curve's own points).
LiftResult hybrid_lift(const HybridBundle& bundle, const BaseLoop& loop, const GroupElement& e0,
                       const Options& opts = {});

struct HolonomyResult {
  GroupElement value;
  std::optional<GroupElement> quadrature;
  std::optional<GroupElement> potential;
  double cross_check_residual = 0.0;  // set by Method::Both
  Method method = Method::Quadrature;
};

/// Total holonomy of an already segmented loop; used by sweeps that need
/// the segmentation for other purposes.
HolonomyResult holonomy_of_segmented(const HybridBundle& bundle, const BaseLoop& loop,
                                     const SegmentedLoop& segmented, Method method,
                                     const Options& opts = {});

HolonomyResult compute_holonomy(const HybridBundle& bundle, const BaseLoop& loop, Method method,
                                const Options& opts = {});

/// Method::Both cross-checks quadrature against the telescoping potential
/// sum within 10 * quad_tol and returns the quadrature result; throws
/// CrossCheckError on disagreement, NoPotentialError when a visited mode
/// lacks a potential.
GroupElement hybrid_holonomy(const HybridBundle& bundle, const BaseLoop& loop, Method method,
                             const Options& opts = {});

/// CSV blocks per segment (t, m_1..m_d, g_1..g_n, mode_id), blank-line
/// separated; all modes must share one base dimension.
void write_lift_csv(const LiftResult& result, std::ostream& os);

/// Crossing log with the fiber-reset jumps, as a JSON array.
void write_crossing_log_json(const LiftResult& result, std::ostream& os);

}  // namespace holo::lift
