#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "holo/expr.hpp"
#include "holo/parallel.hpp"
#include "holo/quadrature.hpp"

// Single-mode principal-bundle machinery in trivialized coordinates. The
// structure group is abelian and isomorphic to (R^n, +): the group
// operation is componentwise addition, left translation and the adjoint
// are identities and never represented. The connection 1-form in a local
// trivialization is omega = dg + A(m) dm; horizontal lifts satisfy
// gdot = -A(m) mdot, so the holonomy of a base segment is
// -integral A(m) dm = F(start) - F(end) when a potential F with dF = A dm
// exists.
//
// Periodic coordinates live on the universal cover: curves carry unwound
// real values, so winding numbers are encoded in the curve itself.

namespace holo::geometry {

using Vec = std::vector<double>;

double norm_inf(const Vec& v);
double norm2(const Vec& v);
Vec sub(const Vec& a, const Vec& b);

/// A fiber displacement in the abelian structure group (R^n, +).
struct GroupElement {
  Vec components;

  GroupElement() = default;
  explicit GroupElement(Vec c) : components(std::move(c)) {}
  static GroupElement zero(std::size_t n) { return GroupElement(Vec(n, 0.0)); }

  std::size_t dim() const { return components.size(); }
  double norm() const { return norm_inf(components); }

  GroupElement& operator+=(const GroupElement& other);
  friend GroupElement operator+(GroupElement a, const GroupElement& b) { return a += b; }
  friend GroupElement operator-(const GroupElement& g);
  friend GroupElement operator-(const GroupElement& a, const GroupElement& b);
  friend GroupElement operator*(double s, GroupElement g);
  friend bool operator==(const GroupElement& a, const GroupElement& b) {
    return a.components == b.components;
  }
};

/// Axis-aligned box in chart coordinates.
struct Box {
  Vec lo;
  Vec hi;
  std::size_t dim() const { return lo.size(); }
  bool contains(const Vec& m) const;
};

struct Periodicity {
  bool periodic = false;
  double period = 0.0;
};

/// Local coordinates of a base chart: ordered variable names, optional
/// periodicity metadata (curves still use the universal cover) and an
/// optional coordinate box used by validation sampling.
struct Chart {
  std::vector<std::string> vars;
  std::vector<Periodicity> periodicity;  // empty or one entry per variable
  std::optional<Box> bounds;

  std::size_t dim() const { return vars.size(); }
  expr::Bindings bind(const Vec& m) const;
  void check() const;  // unique names, positive periods, box shape
};

/// Max-norm distance between chart points; periodic coordinates are
/// compared on the circle (difference reduced to the nearest period
/// multiple), so unwound curves still close.
double chart_distance(const Chart& chart, const Vec& a, const Vec& b);

/// The coefficient matrix A(m) of omega = dg + A(m) dm; entry (a, j)
/// couples base velocity mdot_j to fiber velocity gdot_a.
struct ConnectionCoeffs {
  std::vector<std::vector<expr::Expression>> entries;  // n rows, d columns

  std::size_t fiber_dim() const { return entries.size(); }
  std::size_t base_dim() const { return entries.empty() ? 0 : entries[0].size(); }
};

/// Componentwise potential F with dF = A dm.
struct Potential {
  std::vector<expr::Expression> components;  // length n
};

/// One trivialized bundle component: chart, connection coefficients and an
/// optional potential. Fiber variable names are shared across all modes of
/// a hybrid bundle (same structure group).
struct Mode {
  std::string id;
  Chart chart;
  ConnectionCoeffs connection;
  std::optional<Potential> potential;
  std::vector<std::string> fiber_vars;

  std::size_t base_dim() const { return chart.dim(); }
  std::size_t fiber_dim() const { return fiber_vars.size(); }
  void check() const;
};

// ---------------------------------------------------------------------------
// Curves

/// Coordinates given as expressions of a scalar parameter, with constant
/// bindings folded in at construction time.
struct ExprCurve {
  std::vector<expr::Expression> coords;
  std::string param = "t";
};

/// Piecewise-linear curve through (time, point) knots; velocities are
/// chords of the containing piece.
struct PolylineCurve {
  std::vector<double> times;  // strictly increasing
  std::vector<Vec> points;
};

class Curve;

/// t -> inner(warp(t)) for a scalar warp expression in t.
struct WarpedCurve {
  std::shared_ptr<const Curve> inner;
  expr::Expression warp;
};

/// A parametrized base-space segment. Velocities of expression-defined
/// curves use central differences (step 1e-6 * max(1, |t|)); polylines use
/// chords.
class Curve {
 public:
  static Curve from_expressions(std::vector<expr::Expression> coords, std::string param = "t");
  static Curve polyline(std::vector<double> times, std::vector<Vec> points);
  static Curve warped(Curve inner, expr::Expression warp);

  std::size_t dim() const;
  Vec at(double t) const;
  Vec velocity(double t) const;

 private:
  std::variant<ExprCurve, PolylineCurve, WarpedCurve> impl_;
};

// ---------------------------------------------------------------------------
// Operations

/// A(m) as a dense row-major n x d matrix.
std::vector<Vec> connection_matrix(const Mode& mode, const Vec& m);

/// omega(mdot, gdot) = gdot + A(m) mdot.
Vec connection_form_eval(const Mode& mode, const Vec& m, const Vec& mdot, const Vec& gdot);

/// The unique fiber velocity with omega = 0: gdot = -A(m) mdot.
Vec horizontal_velocity(const Mode& mode, const Vec& m, const Vec& mdot);

/// Holonomy contribution of one segment by adaptive quadrature:
/// -integral_{t0}^{t1} A(m(t)) m'(t) dt. Zero-length segments return the
/// identity without invoking quadrature.
GroupElement segment_holonomy_quadrature(const Mode& mode, const Curve& curve, double t0,
                                         double t1, double tol = quadrature::kDefaultTol);

/// F(m_start) - F(m_end); equals the quadrature result when A dm is exact.
/// Throws NoPotentialError when the mode carries no potential.
GroupElement segment_holonomy_potential(const Mode& mode, const Vec& m_start, const Vec& m_end);

Vec potential_eval(const Mode& mode, const Vec& m);

// ---------------------------------------------------------------------------
// Potential reconstruction

/// Regular node grid over a box; resolution counts nodes per axis (>= 2).
struct GridSpec {
  Box region;
  std::vector<int> resolution;

  std::size_t dim() const { return resolution.size(); }
  std::size_t node_count() const;
  double step(std::size_t axis) const;
  Vec node_point(const std::vector<int>& idx) const;
};

/// Dense tabulation of F on a grid, evaluated by multilinear interpolation.
class PotentialTable {
 public:
  PotentialTable(GridSpec grid, std::size_t fiber_dim, std::vector<Vec> node_values);

  const GridSpec& grid() const { return grid_; }
  std::size_t fiber_dim() const { return fiber_dim_; }
  const Vec& node_value(const std::vector<int>& idx) const;

  /// Throws DomainError outside the grid region.
  Vec eval(const Vec& m) const;

 private:
  GridSpec grid_;
  std::size_t fiber_dim_;
  std::vector<Vec> values_;  // node-major, strides from grid resolution
};

/// Largest closedness violation found on the grid.
struct NotExactEvidence {
  Vec grid_point;
  int component;  // fiber component a
  int var_j;      // the pair (j, k) with |dA_aj/dm_k - dA_ak/dm_j| maximal
  int var_k;
  double violation;
};

struct ReconstructedPotential {
  PotentialTable table;
  /// max over grid edges of |(F(node+e_j) - F(node)) - integral_edge A dm|;
  /// measures path independence of the tabulated values.
  double max_residual;
};

using ReconstructResult = std::variant<ReconstructedPotential, NotExactEvidence>;

/// Verifies that A dm is closed on the grid (mixed partials within tol) and,
/// if so, tabulates F by composite line integration from the grid node
/// nearest to `anchor` along axis-aligned paths.
ReconstructResult reconstruct_potential(const Mode& mode, const Vec& anchor, const GridSpec& grid,
                                        double tol,
                                        parallel::Policy policy = parallel::Policy::Parallel);

/// Max over sample points and entries of |d F_a / d m_j - A_aj|; used to
/// validate declared potentials against the connection.
double potential_consistency(const Mode& mode, const std::vector<Vec>& sample_points);

}  // namespace holo::geometry
