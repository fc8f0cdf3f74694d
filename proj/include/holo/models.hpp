#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "holo/hybrid.hpp"
#include "holo/limits.hpp"

// Builtin reference systems and JSON system-definition files.
//
// Rolling disk: one mode, chart theta on the universal cover of S^1,
// A = [-r], F = [-r*theta]; a loop winding n times gives holonomy 2*pi*r*n.
//
// Planar walker: two stance modes with charts theta / phi, A = [-l*cos],
// F = [-l*sin], guards eta = angle + delta (impact when the stance angle
// reaches -delta) and resets angle -> -angle (the new stance starts at
// +delta). The canonical N-cycle gait runs each stance linearly from delta
// to -delta; |Delta x| = 4*l*N*sin(delta).

namespace holo::models {

using hybrid::BaseLoop;
using hybrid::HybridBundle;

struct RollingDisk {
  HybridBundle bundle;
  double radius = 1.0;

  /// theta: 0 -> 2*pi*windings over [0, 1].
  BaseLoop loop(long windings) const;
};

RollingDisk build_rolling_disk(double r);

struct PlanarWalker {
  HybridBundle bundle;
  double leg_length = 1.0;
  double delta = 0.0;

  /// The piecewise-linear 2N-segment gait; N = 0 degenerates to a constant
  /// loop with zero holonomy.
  BaseLoop loop(long cycles) const;
};

PlanarWalker build_planar_walker(double l, double delta);

/// Sweep problem for the infinite-switching study: the walker rebuilt per
/// delta with its N-cycle gait.
limits::SweepProblem walker_sweep_problem(double l);

/// A parsed system-definition file: the validated bundle plus any named
/// loops the file declares.
struct SystemDefinition {
  int schema_version = 1;
  std::string name;
  std::map<std::string, double> parameters;
  HybridBundle bundle;
  std::map<std::string, BaseLoop> loops;
};

/// Parses, substitutes named parameters into every expression, checks for
/// leftover unbound names (ParseError), and runs validate_bundle.
SystemDefinition load_system(const std::filesystem::path& path);

/// Convenience: the validated bundle alone.
HybridBundle load_bundle(const std::filesystem::path& path);

/// Definition-file producers for the builtin models; saving and reloading
/// one of these yields bit-identical holonomy.
void save_disk_definition(double r, const std::filesystem::path& path);
void save_walker_definition(double l, double delta, const std::filesystem::path& path);

}  // namespace holo::models
