#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "holo/geometry.hpp"

// Hybrid-bundle structure. Modes are glued by transitions: a guard, the
// level surface {eta = 0} on the source chart, and a reset pair acting on
// base and fiber. A transition fires where a base curve meets the guard
// transversally (d eta applied to the curve velocity stays away from zero);
// tangential touches are recorded but do not switch modes.

namespace holo::hybrid {

using geometry::Curve;
using geometry::GroupElement;
using geometry::Mode;
using geometry::Vec;

inline constexpr double kDefaultTransversalityTol = 1e-8;  // eps_t
inline constexpr double kDefaultClosureTol = 1e-9;         // eps_c

/// Guard surface {eta = 0} on the source mode's chart.
struct Guard {
  std::string source;
  std::string target;
  expr::Expression eta;
  double transversality_tol = kDefaultTransversalityTol;
};

/// Reset pair in trivialized coordinates. `base` is Delta (source chart ->
/// target chart). The lifted reset maps (m, g) to (lifted_base(m, g),
/// fiber(m, g)); when `lifted_base` is empty it defaults to `base`, which
/// makes the projection diagram commute by construction. System files may
/// declare it separately, and validate_bundle then checks the two agree on
/// the guard — that is the commuting-diagram check.
struct Reset {
  std::vector<expr::Expression> base;
  std::vector<expr::Expression> fiber;
  std::vector<expr::Expression> lifted_base;  // optional, defaults to base

  Vec apply_base(const Mode& source, const Vec& m) const;
  Vec apply_lifted_base(const Mode& source, const Vec& m, const Vec& g) const;
  Vec apply_fiber(const Mode& source, const Vec& m, const Vec& g) const;
};

struct Transition {
  Guard guard;
  Reset reset;
};

struct HybridBundle {
  std::string name;
  std::vector<Mode> modes;
  std::vector<Transition> transitions;

  const Mode& mode(const std::string& id) const;
  const Mode* find_mode(const std::string& id) const;
  std::vector<const Transition*> transitions_from(const std::string& source_id) const;
  const Transition* transition(const std::string& source_id, const std::string& target_id) const;
  std::size_t fiber_dim() const;

  /// Structural invariants: modes exist and are unique, fiber dimensions
  /// agree, transition expressions only use legal variables. Throws
  /// ValidationError.
  void check_structure() const;
};

/// One piece of a declared loop: the active mode at its start and a curve
/// over [t0, t1].
struct LoopSegment {
  std::string mode_id;
  Curve curve;
  double t0 = 0.0;
  double t1 = 1.0;
};

/// Piecewise base loop on [0, 1]. Segments tile the interval; the loop is
/// closed when the final point (after the closing reset, if the loop ends
/// on a guard) returns to the initial point within closure_tol.
struct BaseLoop {
  std::vector<LoopSegment> segments;
  double closure_tol = kDefaultClosureTol;  // eps_c
};

struct CrossingEvent {
  double t = 0.0;
  std::string source_mode;
  std::string target_mode;
  Vec pre_point;        // gamma(t-)
  Vec post_point;       // Delta(gamma(t-))
  double transversality = 0.0;  // d eta (gamma')
  bool at_declared_boundary = false;
};

/// A guard touch with |d eta (gamma')| <= eps_t: no transition happens.
struct TangentialTouch {
  double t = 0.0;
  std::string source_mode;
  std::string target_mode;
  double transversality = 0.0;
};

struct CrossingScan {
  std::vector<CrossingEvent> crossings;
  std::vector<TangentialTouch> skipped;
};

// ---------------------------------------------------------------------------
// validate_bundle

struct TransitionReport {
  std::string source;
  std::string target;
  int samples_found = 0;
  double max_violation = 0.0;       // commuting diagram, base coordinates
  double min_guard_gradient = 0.0;  // transversality probe: |grad eta| on {eta=0}
};

struct ValidationReport {
  std::vector<TransitionReport> transitions;
  double max_violation = 0.0;
  bool passed = false;
};

inline constexpr double kDiagramTol = 1e-9;

/// Samples each guard surface by root-finding along random chart lines,
/// draws random fiber values, and checks that the base part of the lifted
/// reset equals Delta there (commuting diagram, within 1e-9). Throws
/// ValidationError when a transition violates the diagram or its guard
/// cannot be sampled.
ValidationReport validate_bundle(const HybridBundle& bundle, int samples,
                                 std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Crossing detection / loop segmentation

/// Finds guard crossings of the loop. Each declared segment is scanned at
/// resolution 1/1024 of its interval; sign changes are bisected to |t|
/// accuracy 1e-12, tangential touches are classified by |d eta(gamma')|
/// against eps_t. A crossing at a declared segment endpoint is accepted
/// without bisection when |eta| <= eps_c there. Throws
/// AmbiguousCrossingError when eta stays within eps_c of zero over an
/// interval of positive measure.
CrossingScan detect_crossings(const HybridBundle& bundle, const BaseLoop& loop,
                              parallel::Policy policy = parallel::Policy::Parallel);

/// Part of one declared segment, attributed to a single active mode.
struct PieceChunk {
  std::size_t segment_index;
  double t0;
  double t1;
};

/// Maximal sub-interval of the loop on which the active mode is constant.
struct LoopPiece {
  std::string mode_id;
  std::vector<PieceChunk> chunks;
  Vec start_point;  // post-reset
  Vec end_point;    // pre-reset
  double t0() const { return chunks.front().t0; }
  double t1() const { return chunks.back().t1; }
};

struct SegmentedLoop {
  std::vector<LoopPiece> pieces;
  /// crossings[k] happens at the end of pieces[k]; when the loop closes via
  /// a final reset, crossings.size() == pieces.size(), otherwise one less.
  std::vector<CrossingEvent> crossings;
  std::vector<TangentialTouch> skipped;
  bool closes_via_reset = false;
};

/// Partitions the loop at its crossings, verifies the continuity condition
/// gamma(t+) = Delta(gamma(t-)) within eps_c at every transition, and
/// verifies closure. Throws ContinuityError.
SegmentedLoop segment_loop(const HybridBundle& bundle, const BaseLoop& loop,
                           parallel::Policy policy = parallel::Policy::Parallel);

}  // namespace holo::hybrid
