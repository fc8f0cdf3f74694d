#include "holo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <set>

namespace holo::geometry {

// ---------------------------------------------------------------------------
// Small vector helpers

double norm_inf(const Vec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

double norm2(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Vec sub(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

GroupElement& GroupElement::operator+=(const GroupElement& other) {
  if (components.size() != other.components.size())
    throw Error("group element dimension mismatch");
  for (std::size_t i = 0; i < components.size(); ++i) components[i] += other.components[i];
  return *this;
}

GroupElement operator-(const GroupElement& g) {
  GroupElement out = g;
  for (double& x : out.components) x = -x;
  return out;
}

GroupElement operator-(const GroupElement& a, const GroupElement& b) { return a + (-b); }

GroupElement operator*(double s, GroupElement g) {
  for (double& x : g.components) x *= s;
  return g;
}

bool Box::contains(const Vec& m) const {
  for (std::size_t i = 0; i < lo.size(); ++i)
    if (m[i] < lo[i] || m[i] > hi[i]) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Chart / Mode validation

expr::Bindings Chart::bind(const Vec& m) const {
  if (m.size() != vars.size()) throw Error("point dimension does not match chart");
  expr::Bindings b;
  for (std::size_t i = 0; i < vars.size(); ++i) b.set(vars[i], m[i]);
  return b;
}

void Chart::check() const {
  std::set<std::string> seen(vars.begin(), vars.end());
  if (seen.size() != vars.size()) throw ValidationError("chart variable names are not unique");
  if (!periodicity.empty() && periodicity.size() != vars.size())
    throw ValidationError("periodicity list does not match chart dimension");
  for (const auto& p : periodicity)
    if (p.periodic && p.period <= 0.0) throw ValidationError("periodic coordinate needs period > 0");
  if (bounds && (bounds->lo.size() != vars.size() || bounds->hi.size() != vars.size()))
    throw ValidationError("chart bounds do not match chart dimension");
}

double chart_distance(const Chart& chart, const Vec& a, const Vec& b) {
  if (a.size() != chart.dim() || b.size() != chart.dim())
    return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    if (i < chart.periodicity.size() && chart.periodicity[i].periodic)
      d = std::remainder(d, chart.periodicity[i].period);
    worst = std::max(worst, std::fabs(d));
  }
  return worst;
}

void Mode::check() const {
  chart.check();
  if (connection.fiber_dim() != fiber_vars.size())
    throw ValidationError("mode '" + id + "': connection rows != fiber dimension");
  for (const auto& row : connection.entries) {
    if (row.size() != chart.dim())
      throw ValidationError("mode '" + id + "': connection columns != chart dimension");
    for (const auto& entry : row)
      for (const auto& var : entry.free_variables())
        if (std::find(chart.vars.begin(), chart.vars.end(), var) == chart.vars.end())
          throw ValidationError("mode '" + id + "': connection uses unknown variable '" + var +
                                "'");
  }
  if (potential) {
    if (potential->components.size() != fiber_vars.size())
      throw ValidationError("mode '" + id + "': potential length != fiber dimension");
    for (const auto& component : potential->components)
      for (const auto& var : component.free_variables())
        if (std::find(chart.vars.begin(), chart.vars.end(), var) == chart.vars.end())
          throw ValidationError("mode '" + id + "': potential uses unknown variable '" + var +
                                "'");
  }
}

// ---------------------------------------------------------------------------
// Curves

Curve Curve::from_expressions(std::vector<expr::Expression> coords, std::string param) {
  Curve c;
  c.impl_ = ExprCurve{std::move(coords), std::move(param)};
  return c;
}

Curve Curve::polyline(std::vector<double> times, std::vector<Vec> points) {
  if (times.size() < 2 || times.size() != points.size())
    throw Error("polyline needs matching times and points, at least two");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (times[i] <= times[i - 1]) throw Error("polyline times must be strictly increasing");
  Curve c;
  c.impl_ = PolylineCurve{std::move(times), std::move(points)};
  return c;
}

Curve Curve::warped(Curve inner, expr::Expression warp) {
  Curve c;
  c.impl_ = WarpedCurve{std::make_shared<Curve>(std::move(inner)), std::move(warp)};
  return c;
}

std::size_t Curve::dim() const {
  if (const auto* e = std::get_if<ExprCurve>(&impl_)) return e->coords.size();
  if (const auto* p = std::get_if<PolylineCurve>(&impl_)) return p->points[0].size();
  return std::get<WarpedCurve>(impl_).inner->dim();
}

namespace {

// Containing piece of a polyline; the final knot belongs to the last piece.
std::size_t polyline_piece(const PolylineCurve& p, double t) {
  const auto it = std::upper_bound(p.times.begin(), p.times.end(), t);
  std::size_t hi = static_cast<std::size_t>(it - p.times.begin());
  if (hi == 0) hi = 1;
  if (hi >= p.times.size()) hi = p.times.size() - 1;
  return hi;
}

}  // namespace

Vec Curve::at(double t) const {
  if (const auto* e = std::get_if<ExprCurve>(&impl_)) {
    expr::Bindings b;
    b.set(e->param, t);
    Vec out(e->coords.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = e->coords[i].evaluate(b);
    return out;
  }
  if (const auto* p = std::get_if<PolylineCurve>(&impl_)) {
    const std::size_t hi = polyline_piece(*p, t);
    const double t0 = p->times[hi - 1], t1 = p->times[hi];
    const double w = (t - t0) / (t1 - t0);
    Vec out(p->points[hi].size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = (1.0 - w) * p->points[hi - 1][i] + w * p->points[hi][i];
    return out;
  }
  const auto& warped = std::get<WarpedCurve>(impl_);
  expr::Bindings b;
  b.set("t", t);
  return warped.inner->at(warped.warp.evaluate(b));
}

Vec Curve::velocity(double t) const {
  if (const auto* p = std::get_if<PolylineCurve>(&impl_)) {
    const std::size_t hi = polyline_piece(*p, t);
    const double dt = p->times[hi] - p->times[hi - 1];
    Vec out(p->points[hi].size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = (p->points[hi][i] - p->points[hi - 1][i]) / dt;
    return out;
  }
  const double h = 1e-6 * std::max(1.0, std::fabs(t));
  const Vec fp = at(t + h);
  const Vec fm = at(t - h);
  Vec out(fp.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (fp[i] - fm[i]) / (2.0 * h);
  return out;
}

// ---------------------------------------------------------------------------
// Connection evaluation

std::vector<Vec> connection_matrix(const Mode& mode, const Vec& m) {
  const expr::Bindings b = mode.chart.bind(m);
  std::vector<Vec> a(mode.fiber_dim(), Vec(mode.base_dim()));
  for (std::size_t row = 0; row < a.size(); ++row)
    for (std::size_t col = 0; col < a[row].size(); ++col)
      a[row][col] = mode.connection.entries[row][col].evaluate(b);
  return a;
}

Vec connection_form_eval(const Mode& mode, const Vec& m, const Vec& mdot, const Vec& gdot) {
  if (mdot.size() != mode.base_dim() || gdot.size() != mode.fiber_dim())
    throw Error("velocity dimensions do not match mode");
  const std::vector<Vec> a = connection_matrix(mode, m);
  Vec out(gdot);
  for (std::size_t row = 0; row < out.size(); ++row)
    for (std::size_t col = 0; col < mdot.size(); ++col) out[row] += a[row][col] * mdot[col];
  return out;
}

Vec horizontal_velocity(const Mode& mode, const Vec& m, const Vec& mdot) {
  const std::vector<Vec> a = connection_matrix(mode, m);
  Vec out(mode.fiber_dim(), 0.0);
  for (std::size_t row = 0; row < out.size(); ++row)
    for (std::size_t col = 0; col < mdot.size(); ++col) out[row] -= a[row][col] * mdot[col];
  return out;
}

GroupElement segment_holonomy_quadrature(const Mode& mode, const Curve& curve, double t0,
                                         double t1, double tol) {
  const std::size_t n = mode.fiber_dim();
  if (t0 == t1) return GroupElement::zero(n);
  auto integrand = [&](double t) {
    const Vec m = curve.at(t);
    const Vec mdot = curve.velocity(t);
    return horizontal_velocity(mode, m, mdot);  // -A(m) m'
  };
  return GroupElement(quadrature::integrate(integrand, t0, t1, n, tol));
}

Vec potential_eval(const Mode& mode, const Vec& m) {
  if (!mode.potential) throw NoPotentialError(mode.id);
  const expr::Bindings b = mode.chart.bind(m);
  Vec out(mode.potential->components.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mode.potential->components[i].evaluate(b);
  return out;
}

GroupElement segment_holonomy_potential(const Mode& mode, const Vec& m_start, const Vec& m_end) {
  const Vec fs = potential_eval(mode, m_start);
  const Vec fe = potential_eval(mode, m_end);
  return GroupElement(sub(fs, fe));
}

// ---------------------------------------------------------------------------
// Grid / potential table

std::size_t GridSpec::node_count() const {
  std::size_t n = 1;
  for (int r : resolution) n *= static_cast<std::size_t>(r);
  return n;
}

double GridSpec::step(std::size_t axis) const {
  return (region.hi[axis] - region.lo[axis]) / (resolution[axis] - 1);
}

Vec GridSpec::node_point(const std::vector<int>& idx) const {
  Vec m(dim());
  for (std::size_t axis = 0; axis < dim(); ++axis)
    m[axis] = region.lo[axis] + idx[axis] * step(axis);
  return m;
}

namespace {

std::vector<std::size_t> grid_strides(const GridSpec& grid) {
  std::vector<std::size_t> strides(grid.dim());
  std::size_t s = 1;
  for (std::size_t axis = grid.dim(); axis-- > 0;) {
    strides[axis] = s;
    s *= static_cast<std::size_t>(grid.resolution[axis]);
  }
  return strides;
}

std::size_t flat_index(const std::vector<std::size_t>& strides, const std::vector<int>& idx) {
  std::size_t f = 0;
  for (std::size_t axis = 0; axis < idx.size(); ++axis)
    f += strides[axis] * static_cast<std::size_t>(idx[axis]);
  return f;
}

// Odometer over all index tuples of the grid, in lexicographic order.
bool next_index(const GridSpec& grid, std::vector<int>& idx) {
  for (std::size_t axis = grid.dim(); axis-- > 0;) {
    if (++idx[axis] < grid.resolution[axis]) return true;
    idx[axis] = 0;
  }
  return false;
}

}  // namespace

PotentialTable::PotentialTable(GridSpec grid, std::size_t fiber_dim, std::vector<Vec> node_values)
    : grid_(std::move(grid)), fiber_dim_(fiber_dim), values_(std::move(node_values)) {
  if (values_.size() != grid_.node_count()) throw Error("potential table size mismatch");
}

const Vec& PotentialTable::node_value(const std::vector<int>& idx) const {
  return values_[flat_index(grid_strides(grid_), idx)];
}

Vec PotentialTable::eval(const Vec& m) const {
  const std::size_t d = grid_.dim();
  if (m.size() != d) throw Error("point dimension does not match table grid");
  std::vector<int> base(d);
  Vec frac(d);
  for (std::size_t axis = 0; axis < d; ++axis) {
    const double lo = grid_.region.lo[axis], hi = grid_.region.hi[axis];
    if (m[axis] < lo - 1e-12 || m[axis] > hi + 1e-12)
      throw DomainError("point outside potential table region");
    const double u = (m[axis] - lo) / grid_.step(axis);
    int cell = static_cast<int>(std::floor(u));
    cell = std::clamp(cell, 0, grid_.resolution[axis] - 2);
    base[axis] = cell;
    frac[axis] = u - cell;
  }
  const auto strides = grid_strides(grid_);
  Vec out(fiber_dim_, 0.0);
  const std::size_t corners = std::size_t{1} << d;
  for (std::size_t corner = 0; corner < corners; ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    for (std::size_t axis = 0; axis < d; ++axis) {
      const bool high = (corner >> axis) & 1u;
      w *= high ? frac[axis] : 1.0 - frac[axis];
      flat += strides[axis] * static_cast<std::size_t>(base[axis] + (high ? 1 : 0));
    }
    if (w == 0.0) continue;
    const Vec& v = values_[flat];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * v[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Potential reconstruction

namespace {

struct Edge {
  std::size_t from;   // flat node index
  std::size_t to;     // flat neighbor index (one step up along `axis`)
  std::size_t axis;
};

// -1 marks nothing found.
struct ClosednessScan {
  double max_violation = -1.0;
  std::size_t node = 0;
  int component = 0, var_j = 0, var_k = 0;
};

}  // namespace

ReconstructResult reconstruct_potential(const Mode& mode, const Vec& anchor, const GridSpec& grid,
                                        double tol, parallel::Policy policy) {
  const std::size_t d = grid.dim();
  const std::size_t n = mode.fiber_dim();
  if (d != mode.base_dim()) throw Error("grid dimension does not match mode chart");
  for (int r : grid.resolution)
    if (r < 2) throw Error("grid resolution must be at least 2 per axis");

  // Enumerate nodes once, lexicographic order.
  std::vector<std::vector<int>> nodes;
  nodes.reserve(grid.node_count());
  {
    std::vector<int> idx(d, 0);
    do {
      nodes.push_back(idx);
    } while (next_index(grid, idx));
  }
  const auto strides = grid_strides(grid);

  // Closedness: |dA_aj/dm_k - dA_ak/dm_j| <= tol at every node. Exceptions
  // may not escape an OpenMP region, so they are carried out by hand.
  const long node_total = static_cast<long>(nodes.size());
  std::vector<ClosednessScan> per_node(nodes.size());
  std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(static) num_threads(parallel::thread_count(policy))
  for (long ni = 0; ni < node_total; ++ni) {
    try {
      const Vec m = grid.node_point(nodes[static_cast<std::size_t>(ni)]);
      const expr::Bindings b = mode.chart.bind(m);
      ClosednessScan scan;
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t j = 0; j < d; ++j) {
          for (std::size_t k = j + 1; k < d; ++k) {
            const double djk =
                expr::numeric_partial(mode.connection.entries[a][j], mode.chart.vars[k], b);
            const double dkj =
                expr::numeric_partial(mode.connection.entries[a][k], mode.chart.vars[j], b);
            const double violation = std::fabs(djk - dkj);
            if (violation > scan.max_violation) {
              scan = {violation, static_cast<std::size_t>(ni), static_cast<int>(a),
                      static_cast<int>(j), static_cast<int>(k)};
            }
          }
        }
      }
      per_node[static_cast<std::size_t>(ni)] = scan;
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  ClosednessScan worst;
  for (const auto& scan : per_node)
    if (scan.max_violation > worst.max_violation) worst = scan;
  if (worst.max_violation > tol) {
    return NotExactEvidence{grid.node_point(nodes[worst.node]), worst.component, worst.var_j,
                            worst.var_k, worst.max_violation};
  }

  // All grid edges, each integrated independently: integral over
  // [m_axis, m_axis + h] of A[.][axis] with the other coordinates fixed.
  std::vector<Edge> edges;
  for (std::size_t ni = 0; ni < nodes.size(); ++ni) {
    for (std::size_t axis = 0; axis < d; ++axis) {
      if (nodes[ni][axis] + 1 < grid.resolution[axis])
        edges.push_back({ni, ni + strides[axis], axis});
    }
  }
  constexpr double kEdgeTol = 1e-13;
  std::vector<Vec> edge_integral(edges.size());
  const long edge_total = static_cast<long>(edges.size());
#pragma omp parallel for schedule(static) num_threads(parallel::thread_count(policy))
  for (long ei = 0; ei < edge_total; ++ei) {
    try {
      const Edge& edge = edges[static_cast<std::size_t>(ei)];
      const Vec base = grid.node_point(nodes[edge.from]);
      const double x0 = base[edge.axis];
      const double x1 = x0 + grid.step(edge.axis);
      auto integrand = [&](double x) {
        Vec m = base;
        m[edge.axis] = x;
        const expr::Bindings b = mode.chart.bind(m);
        Vec row(n);
        for (std::size_t a = 0; a < n; ++a)
          row[a] = mode.connection.entries[a][edge.axis].evaluate(b);
        return row;
      };
      edge_integral[static_cast<std::size_t>(ei)] =
          quadrature::integrate(integrand, x0, x1, n, kEdgeTol);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  // Edge lookup by (from, axis).
  std::vector<std::size_t> edge_of(nodes.size() * d, std::size_t(-1));
  for (std::size_t ei = 0; ei < edges.size(); ++ei)
    edge_of[edges[ei].from * d + edges[ei].axis] = ei;

  // Anchor snaps to the nearest grid node; F there is zero, the rest is a
  // march along axis-aligned paths using the precomputed edge integrals.
  std::vector<int> anchor_idx(d);
  for (std::size_t axis = 0; axis < d; ++axis) {
    const double u = (anchor[axis] - grid.region.lo[axis]) / grid.step(axis);
    anchor_idx[axis] = std::clamp(static_cast<int>(std::lround(u)), 0, grid.resolution[axis] - 1);
  }
  std::vector<Vec> values(nodes.size());
  values[flat_index(strides, anchor_idx)] = Vec(n, 0.0);
  // Axis by axis: after handling axis k, every node matching the anchor on
  // axes > k is filled in.
  for (std::size_t axis_filled = 0; axis_filled < d; ++axis_filled) {
    const std::size_t axis = axis_filled;
    for (std::size_t ni = 0; ni < nodes.size(); ++ni) {
      const auto& idx = nodes[ni];
      bool on_slab = true;
      for (std::size_t later = axis + 1; later < d; ++later)
        if (idx[later] != anchor_idx[later]) on_slab = false;
      if (!on_slab || idx[axis] != anchor_idx[axis]) continue;
      // March from this line seed in both directions along `axis`.
      for (int dir : {+1, -1}) {
        std::vector<int> cur = idx;
        while (true) {
          const int next = cur[axis] + dir;
          if (next < 0 || next >= grid.resolution[axis]) break;
          std::vector<int> nxt = cur;
          nxt[axis] = next;
          const std::size_t cur_flat = flat_index(strides, cur);
          const std::size_t nxt_flat = flat_index(strides, nxt);
          const std::size_t ei =
              dir > 0 ? edge_of[cur_flat * d + axis] : edge_of[nxt_flat * d + axis];
          const Vec& dF = edge_integral[ei];
          Vec v = values[cur_flat];
          for (std::size_t a = 0; a < n; ++a) v[a] += dir > 0 ? dF[a] : -dF[a];
          values[nxt_flat] = std::move(v);
          cur = nxt;
        }
      }
    }
  }

  // Residual: every edge difference against its integral, including the
  // edges the march never used. For an exact form these agree up to
  // quadrature error; disagreement measures path dependence.
  double max_residual = 0.0;
  for (std::size_t ei = 0; ei < edges.size(); ++ei) {
    const Edge& edge = edges[ei];
    for (std::size_t a = 0; a < n; ++a) {
      const double diff = values[edge.to][a] - values[edge.from][a] - edge_integral[ei][a];
      max_residual = std::max(max_residual, std::fabs(diff));
    }
  }

  return ReconstructedPotential{PotentialTable(grid, n, std::move(values)), max_residual};
}

double potential_consistency(const Mode& mode, const std::vector<Vec>& sample_points) {
  if (!mode.potential) throw NoPotentialError(mode.id);
  double worst = 0.0;
  for (const Vec& m : sample_points) {
    const expr::Bindings b = mode.chart.bind(m);
    const std::vector<Vec> a = connection_matrix(mode, m);
    for (std::size_t row = 0; row < mode.fiber_dim(); ++row) {
      for (std::size_t col = 0; col < mode.base_dim(); ++col) {
        const double dF =
            expr::numeric_partial(mode.potential->components[row], mode.chart.vars[col], b);
        worst = std::max(worst, std::fabs(dF - a[row][col]));
      }
    }
  }
  return worst;
}

}  // namespace holo::geometry
