#include "holo/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace holo::models {

using geometry::Box;
using geometry::Chart;
using geometry::ConnectionCoeffs;
using geometry::Curve;
using geometry::Mode;
using geometry::Periodicity;
using geometry::Potential;
using geometry::Vec;
using hybrid::Guard;
using hybrid::LoopSegment;
using hybrid::Reset;
using hybrid::Transition;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// Raw expression strings shared by the builders and the definition files,
// so a saved builtin reloads to bit-identical expressions.
constexpr const char* kDiskConnection = "-(r)";
constexpr const char* kDiskPotential = "-(r*theta)";

std::string walker_connection(const std::string& var) { return "-(l*cos(" + var + "))"; }
std::string walker_potential(const std::string& var) { return "-(l*sin(" + var + "))"; }
std::string walker_guard(const std::string& var) { return var + "+delta"; }
std::string walker_reset_base(const std::string& var) { return "-" + var; }

expr::Expression pexpr(const std::string& source, const expr::Bindings& params) {
  return expr::parse(source).substitute(params);
}

constexpr int kLoadValidationSamples = 16;

}  // namespace

// ---------------------------------------------------------------------------
// Rolling disk

RollingDisk build_rolling_disk(double r) {
  if (!(r > 0.0)) throw Error("disk radius must be positive");
  expr::Bindings params{{"r", r}};

  Mode mode;
  mode.id = "disk";
  mode.chart.vars = {"theta"};
  mode.chart.periodicity = {Periodicity{true, kTwoPi}};
  mode.connection.entries = {{pexpr(kDiskConnection, params)}};
  mode.potential = Potential{{pexpr(kDiskPotential, params)}};
  mode.fiber_vars = {"x"};

  RollingDisk disk;
  disk.radius = r;
  disk.bundle.name = "rolling-disk";
  disk.bundle.modes = {std::move(mode)};
  disk.bundle.check_structure();
  return disk;
}

BaseLoop RollingDisk::loop(long windings) const {
  // theta(t) = 2*pi*n*t on the universal cover; the winding number lives in
  // the curve, not in any chart wrap-around.
  expr::Bindings params{{"w", kTwoPi * static_cast<double>(windings)}};
  BaseLoop loop;
  loop.segments.push_back({"disk", Curve::from_expressions({pexpr("w*t", params)}), 0.0, 1.0});
  return loop;
}

// ---------------------------------------------------------------------------
// Planar walker

PlanarWalker build_planar_walker(double l, double delta) {
  if (!(l > 0.0)) throw Error("leg length must be positive");
  if (!(delta > 0.0 && delta < kPi / 2.0)) throw Error("delta must lie in (0, pi/2)");
  expr::Bindings params{{"l", l}, {"delta", delta}};

  auto stance = [&](const std::string& id, const std::string& var) {
    Mode m;
    m.id = id;
    m.chart.vars = {var};
    m.chart.periodicity = {Periodicity{true, kTwoPi}};
    m.chart.bounds = Box{{-kPi / 2.0}, {kPi / 2.0}};
    m.connection.entries = {{pexpr(walker_connection(var), params)}};
    m.potential = Potential{{pexpr(walker_potential(var), params)}};
    m.fiber_vars = {"x"};
    return m;
  };
  auto impact = [&](const std::string& src, const std::string& src_var, const std::string& dst) {
    Transition t;
    t.guard = Guard{src, dst, pexpr(walker_guard(src_var), params)};
    t.reset.base = {pexpr(walker_reset_base(src_var), params)};
    t.reset.fiber = {pexpr("x", params)};
    return t;
  };

  PlanarWalker walker;
  walker.leg_length = l;
  walker.delta = delta;
  walker.bundle.name = "planar-walker";
  walker.bundle.modes = {stance("stance_theta", "theta"), stance("stance_phi", "phi")};
  walker.bundle.transitions = {impact("stance_theta", "theta", "stance_phi"),
                               impact("stance_phi", "phi", "stance_theta")};
  walker.bundle.check_structure();
  return walker;
}

BaseLoop PlanarWalker::loop(long cycles) const {
  if (cycles < 0) throw Error("cycle count must be non-negative");
  BaseLoop loop;
  if (cycles == 0) {
    expr::Bindings params{{"a0", delta}};
    loop.segments.push_back(
        {"stance_theta", Curve::from_expressions({pexpr("a0", params)}), 0.0, 1.0});
    return loop;
  }
  // 2N segments; each stance angle runs linearly delta -> -delta, impact at
  // -delta, the new stance starting at +delta.
  const long segments = 2 * cycles;
  const double slope = 4.0 * static_cast<double>(cycles) * delta;
  for (long i = 0; i < segments; ++i) {
    const double t0 = static_cast<double>(i) / static_cast<double>(segments);
    const double t1 = static_cast<double>(i + 1) / static_cast<double>(segments);
    expr::Bindings params{{"a0", delta}, {"s", slope}, {"u0", t0}};
    loop.segments.push_back({i % 2 == 0 ? "stance_theta" : "stance_phi",
                             Curve::from_expressions({pexpr("a0-s*(t-u0)", params)}), t0, t1});
  }
  return loop;
}

limits::SweepProblem walker_sweep_problem(double l) {
  limits::SweepProblem problem;
  problem.fiber_dim = 1;
  problem.make_bundle = [l](double delta) { return build_planar_walker(l, delta).bundle; };
  problem.make_loop = [l](const HybridBundle&, double delta, long n) {
    return build_planar_walker(l, delta).loop(n);
  };
  return problem;
}

// ---------------------------------------------------------------------------
// Definition files

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ParseError(where + ": " + what);
}

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) fail(where, std::string("missing field '") + key + "'");
  return j.at(key);
}

expr::Expression load_expr(const json& j, const std::string& where, const expr::Bindings& params,
                           const std::vector<std::string>& allowed) {
  if (!j.is_string()) fail(where, "expected an expression string");
  expr::Expression e;
  try {
    e = expr::parse(j.get<std::string>()).substitute(params);
  } catch (const Error& err) {
    fail(where, err.what());
  }
  for (const auto& var : e.free_variables())
    if (std::find(allowed.begin(), allowed.end(), var) == allowed.end())
      fail(where, "unbound parameter '" + var + "'");
  return e;
}

Vec load_vec(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array of numbers");
  Vec out;
  for (const auto& x : j) {
    if (!x.is_number()) fail(where, "expected an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

Chart load_chart(const json& j, const std::string& where) {
  Chart chart;
  for (const auto& v : field(j, "vars", where)) chart.vars.push_back(v.get<std::string>());
  if (j.contains("periodic")) {
    chart.periodicity.assign(chart.vars.size(), Periodicity{});
    for (const auto& p : j.at("periodic")) {
      const std::string var = field(p, "var", where + ".periodic").get<std::string>();
      const auto it = std::find(chart.vars.begin(), chart.vars.end(), var);
      if (it == chart.vars.end()) fail(where, "periodic entry names unknown variable '" + var + "'");
      chart.periodicity[static_cast<std::size_t>(it - chart.vars.begin())] =
          Periodicity{true, field(p, "period", where + ".periodic").get<double>()};
    }
  }
  if (j.contains("bounds")) {
    Box box;
    box.lo = load_vec(field(j.at("bounds"), "lo", where + ".bounds"), where + ".bounds.lo");
    box.hi = load_vec(field(j.at("bounds"), "hi", where + ".bounds"), where + ".bounds.hi");
    chart.bounds = std::move(box);
  }
  return chart;
}

Curve load_curve(const json& j, const std::string& where, const expr::Bindings& params) {
  if (j.contains("curve")) {
    std::vector<expr::Expression> coords;
    const json& arr = j.at("curve");
    if (!arr.is_array()) fail(where, "'curve' must be an array of expression strings");
    for (std::size_t i = 0; i < arr.size(); ++i)
      coords.push_back(
          load_expr(arr[i], where + ".curve[" + std::to_string(i) + "]", params, {"t"}));
    return Curve::from_expressions(std::move(coords));
  }
  if (j.contains("polyline")) {
    const json& p = j.at("polyline");
    std::vector<double> times = load_vec(field(p, "times", where), where + ".polyline.times");
    std::vector<Vec> points;
    for (const auto& pt : field(p, "points", where))
      points.push_back(load_vec(pt, where + ".polyline.points"));
    return Curve::polyline(std::move(times), std::move(points));
  }
  fail(where, "segment needs either 'curve' or 'polyline'");
}

}  // namespace

SystemDefinition load_system(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }

  SystemDefinition def;
  def.schema_version = field(j, "schema_version", "system").get<int>();
  if (def.schema_version != 1)
    throw ParseError("unsupported schema_version " + std::to_string(def.schema_version));
  def.name = j.value("name", path.stem().string());
  def.bundle.name = def.name;

  expr::Bindings params;
  if (j.contains("parameters")) {
    for (const auto& [key, value] : j.at("parameters").items()) {
      if (!value.is_number()) fail("parameters." + key, "parameter values must be numbers");
      def.parameters[key] = value.get<double>();
      params.set(key, value.get<double>());
    }
  }

  std::vector<std::string> fiber_vars;
  for (const auto& v : field(j, "fiber", "system")) fiber_vars.push_back(v.get<std::string>());
  for (const auto& fv : fiber_vars)
    if (def.parameters.count(fv)) fail("fiber", "fiber variable '" + fv + "' shadows a parameter");

  for (std::size_t mi = 0; mi < field(j, "modes", "system").size(); ++mi) {
    const json& jm = j.at("modes")[mi];
    const std::string where = "modes[" + std::to_string(mi) + "]";
    Mode mode;
    mode.id = field(jm, "id", where).get<std::string>();
    mode.chart = load_chart(field(jm, "chart", where), where + ".chart");
    for (const auto& var : mode.chart.vars)
      if (def.parameters.count(var))
        fail(where, "chart variable '" + var + "' shadows a parameter");
    mode.fiber_vars = fiber_vars;

    const json& jc = field(jm, "connection", where);
    for (std::size_t row = 0; row < jc.size(); ++row) {
      std::vector<expr::Expression> entries;
      for (std::size_t col = 0; col < jc[row].size(); ++col)
        entries.push_back(load_expr(
            jc[row][col],
            where + ".connection[" + std::to_string(row) + "][" + std::to_string(col) + "]",
            params, mode.chart.vars));
      mode.connection.entries.push_back(std::move(entries));
    }
    if (jm.contains("potential")) {
      Potential potential;
      for (std::size_t a = 0; a < jm.at("potential").size(); ++a)
        potential.components.push_back(
            load_expr(jm.at("potential")[a], where + ".potential[" + std::to_string(a) + "]",
                      params, mode.chart.vars));
      mode.potential = std::move(potential);
    }
    def.bundle.modes.push_back(std::move(mode));
  }

  if (j.contains("transitions")) {
    for (std::size_t ti = 0; ti < j.at("transitions").size(); ++ti) {
      const json& jt = j.at("transitions")[ti];
      const std::string where = "transitions[" + std::to_string(ti) + "]";
      Transition tr;
      tr.guard.source = field(jt, "source", where).get<std::string>();
      tr.guard.target = field(jt, "target", where).get<std::string>();
      const Mode* src = def.bundle.find_mode(tr.guard.source);
      const Mode* dst = def.bundle.find_mode(tr.guard.target);
      if (!src || !dst) fail(where, "references unknown mode");
      tr.guard.eta = load_expr(field(jt, "guard", where), where + ".guard", params,
                               src->chart.vars);
      tr.guard.transversality_tol =
          jt.value("transversality_tol", hybrid::kDefaultTransversalityTol);
      std::vector<std::string> src_total = src->chart.vars;
      src_total.insert(src_total.end(), fiber_vars.begin(), fiber_vars.end());
      const json& jr = field(jt, "reset", where);
      for (std::size_t i = 0; i < field(jr, "base", where).size(); ++i)
        tr.reset.base.push_back(load_expr(jr.at("base")[i],
                                          where + ".reset.base[" + std::to_string(i) + "]",
                                          params, src->chart.vars));
      for (std::size_t i = 0; i < field(jr, "fiber", where).size(); ++i)
        tr.reset.fiber.push_back(load_expr(jr.at("fiber")[i],
                                           where + ".reset.fiber[" + std::to_string(i) + "]",
                                           params, src_total));
      if (jr.contains("lifted_base")) {
        for (std::size_t i = 0; i < jr.at("lifted_base").size(); ++i)
          tr.reset.lifted_base.push_back(
              load_expr(jr.at("lifted_base")[i],
                        where + ".reset.lifted_base[" + std::to_string(i) + "]", params,
                        src_total));
      }
      def.bundle.transitions.push_back(std::move(tr));
    }
  }

  if (j.contains("loops")) {
    for (std::size_t li = 0; li < j.at("loops").size(); ++li) {
      const json& jl = j.at("loops")[li];
      const std::string where = "loops[" + std::to_string(li) + "]";
      BaseLoop loop;
      loop.closure_tol = jl.value("closure_tol", hybrid::kDefaultClosureTol);
      for (std::size_t si = 0; si < field(jl, "segments", where).size(); ++si) {
        const json& js = jl.at("segments")[si];
        const std::string seg_where = where + ".segments[" + std::to_string(si) + "]";
        LoopSegment seg;
        seg.mode_id = field(js, "mode", seg_where).get<std::string>();
        const Vec interval = load_vec(field(js, "interval", seg_where), seg_where + ".interval");
        if (interval.size() != 2) fail(seg_where, "'interval' must be [t0, t1]");
        seg.t0 = interval[0];
        seg.t1 = interval[1];
        seg.curve = load_curve(js, seg_where, params);
        loop.segments.push_back(std::move(seg));
      }
      def.loops.emplace(field(jl, "name", where).get<std::string>(), std::move(loop));
    }
  }

  def.bundle.check_structure();
  hybrid::validate_bundle(def.bundle, kLoadValidationSamples);
  return def;
}

HybridBundle load_bundle(const std::filesystem::path& path) {
  return load_system(path).bundle;
}

// ---------------------------------------------------------------------------
// Saving builtin definitions

namespace {

void write_json_file(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

}  // namespace

void save_disk_definition(double r, const std::filesystem::path& path) {
  json j;
  j["schema_version"] = 1;
  j["name"] = "rolling-disk";
  j["parameters"] = {{"r", r}};
  j["fiber"] = {"x"};
  j["modes"] = json::array({{{"id", "disk"},
                             {"chart",
                              {{"vars", {"theta"}},
                               {"periodic", json::array({{{"var", "theta"}, {"period", kTwoPi}}})}}},
                             {"connection", {{kDiskConnection}}},
                             {"potential", {kDiskPotential}}}});
  j["transitions"] = json::array();
  j["loops"] = json::array(
      {{{"name", "one_winding"},
        {"segments",
         json::array({{{"mode", "disk"}, {"interval", {0.0, 1.0}}, {"curve", {"2*pi*t"}}}})}}});
  write_json_file(j, path);
}

void save_walker_definition(double l, double delta, const std::filesystem::path& path) {
  auto mode_json = [&](const std::string& id, const std::string& var) {
    return json{{"id", id},
                {"chart",
                 {{"vars", {var}},
                  {"periodic", json::array({{{"var", var}, {"period", kTwoPi}}})},
                  {"bounds", {{"lo", {-kPi / 2.0}}, {"hi", {kPi / 2.0}}}}}},
                {"connection", {{walker_connection(var)}}},
                {"potential", {walker_potential(var)}}};
  };
  auto transition_json = [&](const std::string& src, const std::string& var,
                             const std::string& dst) {
    return json{{"source", src},
                {"target", dst},
                {"guard", walker_guard(var)},
                {"reset", {{"base", {walker_reset_base(var)}}, {"fiber", {"x"}}}}};
  };
  json j;
  j["schema_version"] = 1;
  j["name"] = "planar-walker";
  j["parameters"] = {{"l", l}, {"delta", delta}};
  j["fiber"] = {"x"};
  j["modes"] = json::array({mode_json("stance_theta", "theta"), mode_json("stance_phi", "phi")});
  j["transitions"] = json::array({transition_json("stance_theta", "theta", "stance_phi"),
                                  transition_json("stance_phi", "phi", "stance_theta")});
  j["loops"] = json::array(
      {{{"name", "gait"},
        {"segments",
         json::array(
             {{{"mode", "stance_theta"},
               {"interval", {0.0, 0.5}},
               {"curve", {"delta-4*delta*t"}}},
              {{"mode", "stance_phi"},
               {"interval", {0.5, 1.0}},
               {"curve", {"delta-4*delta*(t-0.5)"}}}})}}});
  write_json_file(j, path);
}

}  // namespace holo::models
