#pragma once

#include <cmath>
#include <cstdlib>
#include <vector>

#include "holo/errors.hpp"

// Adaptive Simpson quadrature with interval bisection for vector-valued
// integrands. Absolute error target, refinement accepted when the classic
// |S2 - S1| <= 15*tol estimate holds componentwise, Richardson-corrected
// result. Integrands here are smooth except at segment endpoints, which the
// callers already split.

namespace holo::quadrature {

inline constexpr double kDefaultTol = 1e-10;
inline constexpr int kDefaultMaxDepth = 40;

namespace detail {

template <typename F>
struct Simpson {
  const F& f;
  int max_depth;

  std::vector<double> estimate(double a, double b, const std::vector<double>& fa,
                               const std::vector<double>& fm, const std::vector<double>& fb) {
    const double w = (b - a) / 6.0;
    std::vector<double> s(fa.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = w * (fa[i] + 4.0 * fm[i] + fb[i]);
    return s;
  }

  std::vector<double> refine(double a, double b, const std::vector<double>& fa,
                             const std::vector<double>& fm, const std::vector<double>& fb,
                             const std::vector<double>& whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const std::vector<double> flm = f(lm);
    const std::vector<double> frm = f(rm);
    std::vector<double> left = estimate(a, m, fa, flm, fm);
    std::vector<double> right = estimate(m, b, fm, frm, fb);

    double max_err = 0.0;
    for (std::size_t i = 0; i < whole.size(); ++i)
      max_err = std::max(max_err, std::fabs(left[i] + right[i] - whole[i]));
    if (max_err <= 15.0 * tol) {
      for (std::size_t i = 0; i < whole.size(); ++i)
        left[i] += right[i] + (left[i] + right[i] - whole[i]) / 15.0;
      return left;
    }
    if (depth >= max_depth)
      throw QuadratureError("adaptive quadrature did not converge within depth limit");
    std::vector<double> sl = refine(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1);
    const std::vector<double> sr = refine(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
    for (std::size_t i = 0; i < sl.size(); ++i) sl[i] += sr[i];
    return sl;
  }
};

}  // namespace detail

/// Integrates f: double -> vector<double> over [a, b] to absolute tolerance
/// tol per component. Zero-length intervals return zeros without evaluating
/// f. Throws QuadratureError past the depth limit.
template <typename F>
std::vector<double> integrate(const F& f, double a, double b, std::size_t dim,
                              double tol = kDefaultTol, int max_depth = kDefaultMaxDepth) {
  if (a == b) return std::vector<double>(dim, 0.0);
  detail::Simpson<F> simpson{f, max_depth};
  const std::vector<double> fa = f(a);
  const std::vector<double> fm = f(0.5 * (a + b));
  const std::vector<double> fb = f(b);
  std::vector<double> whole = simpson.estimate(a, b, fa, fm, fb);
  return simpson.refine(a, b, fa, fm, fb, whole, tol, 0);
}

/// Scalar convenience wrapper.
template <typename F>
double integrate_scalar(const F& f, double a, double b, double tol = kDefaultTol,
                        int max_depth = kDefaultMaxDepth) {
  auto wrapped = [&f](double t) { return std::vector<double>{f(t)}; };
  return integrate(wrapped, a, b, 1, tol, max_depth)[0];
}

}  // namespace holo::quadrature
