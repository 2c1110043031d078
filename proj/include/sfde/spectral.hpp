#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sfde/error.hpp"
#include "sfde/measure.hpp"
#include "sfde/resolvent.hpp"

namespace sfde {

using cplx = std::complex<double>;

namespace detail {

/// Delta(lambda) = lambda I - int e^{lambda s} mu(ds) and its derivative.
struct CharMatrix {
  Eigen::MatrixXcd value;
  Eigen::MatrixXcd derivative;
};

inline CharMatrix char_matrix(const DelayMeasure& m, cplx lambda) {
  if (std::abs(lambda.real()) * m.tau() > 600.0 || !std::isfinite(lambda.real()) || !std::isfinite(lambda.imag()))
    fail(ErrorKind::overflow, "characteristic function overflows at Re(lambda)*tau = " +
                                  std::to_string(lambda.real() * m.tau()));
  const auto n = static_cast<Eigen::Index>(m.dim());
  CharMatrix out{lambda * Eigen::MatrixXcd::Identity(n, n), Eigen::MatrixXcd::Identity(n, n)};
  for (const auto& a : m.atoms()) {
    const cplx e = std::exp(lambda * a.s);
    out.value -= e * a.A.cast<cplx>();
    out.derivative -= (a.s * e) * a.A.cast<cplx>();
  }
  if (const auto& d = m.density()) {
    const auto& v = d->values;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double u = -m.tau() + static_cast<double>(i) * d->step;
      const double w = (i == 0 || i + 1 == v.size()) ? 0.5 * d->step : d->step;
      const cplx e = std::exp(lambda * u);
      out.value -= (w * e) * v[i].cast<cplx>();
      out.derivative -= (w * u * e) * v[i].cast<cplx>();
    }
  }
  return out;
}

/// Characteristic determinant sampled at one contour point: log det and the
/// logarithmic derivative det'/det = tr(Delta^{-1} Delta').
struct ContourSample {
  cplx z;
  cplx log_det;
  cplx log_deriv;
};

inline ContourSample sample(const DelayMeasure& m, cplx z, double contour_tol) {
  const CharMatrix cm = char_matrix(m, z);
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(cm.value);
  const Eigen::MatrixXcd& LU = lu.matrixLU();
  cplx ld = 0.0;
  for (Eigen::Index i = 0; i < LU.rows(); ++i) {
    if (LU(i, i) == cplx(0.0)) fail(ErrorKind::root_on_contour, "characteristic root on the contour");
    ld += std::log(LU(i, i));
  }
  if (lu.permutationP().determinant() < 0) ld += cplx(0.0, std::numbers::pi);
  const cplx g = lu.solve(cm.derivative).trace();
  if (!std::isfinite(g.real()) || !std::isfinite(g.imag()) || 1.0 / std::abs(g) < contour_tol)
    fail(ErrorKind::root_on_contour, "a characteristic root lies within " + std::to_string(contour_tol) +
                                         " of the contour near lambda = " + std::to_string(z.real()) + "+" +
                                         std::to_string(z.imag()) + "i; perturb beta");
  return {z, ld, g};
}

inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a > std::numbers::pi) a -= two_pi;
  if (a <= -std::numbers::pi) a += two_pi;
  return a;
}

/// Change of arg(det) along [a, b]. A step is accepted once the trapezoid
/// rule on the log-derivative matches the principal log ratio, which fixes
/// the branch; otherwise the step is halved.
inline double arg_change(const DelayMeasure& m, const ContourSample& a, const ContourSample& b, double contour_tol,
                         int depth) {
  const cplx trap = 0.5 * (b.z - a.z) * (a.log_deriv + b.log_deriv);
  const cplx exact(b.log_det.real() - a.log_det.real(), wrap_angle(b.log_det.imag() - a.log_det.imag()));
  if (std::abs(exact.imag()) < 0.5 * std::numbers::pi && std::abs(trap - exact) < 0.3) return exact.imag();
  if (depth > 60 || std::abs(b.z - a.z) < contour_tol)
    fail(ErrorKind::root_on_contour, "contour refinement failed to resolve the argument near lambda = " +
                                         std::to_string(a.z.real()) + "+" + std::to_string(a.z.imag()) +
                                         "i; perturb beta");
  const ContourSample mid = sample(m, 0.5 * (a.z + b.z), contour_tol);
  return arg_change(m, a, mid, contour_tol, depth + 1) + arg_change(m, mid, b, contour_tol, depth + 1);
}

inline double winding(const DelayMeasure& m, const std::vector<cplx>& corners, double density_per_unit,
                      double contour_tol) {
  double total = 0.0;
  for (std::size_t e = 0; e < corners.size(); ++e) {
    const cplx za = corners[e];
    const cplx zb = corners[(e + 1) % corners.size()];
    const auto pieces = static_cast<int>(std::max(8.0, std::ceil(std::abs(zb - za) * density_per_unit)));
    ContourSample prev = sample(m, za, contour_tol);
    for (int k = 1; k <= pieces; ++k) {
      const cplx z = k == pieces ? zb : za + (zb - za) * (static_cast<double>(k) / pieces);
      const ContourSample cur = sample(m, z, contour_tol);
      total += arg_change(m, prev, cur, contour_tol, 0);
      prev = cur;
    }
  }
  return total / (2.0 * std::numbers::pi);
}

}  // namespace detail

/// det(lambda I - int e^{lambda s} mu(ds)), via LU with partial pivoting.
inline cplx char_det(const DelayMeasure& m, cplx lambda) {
  const detail::CharMatrix cm = detail::char_matrix(m, lambda);
  const cplx d = Eigen::PartialPivLU<Eigen::MatrixXcd>(cm.value).determinant();
  if (!std::isfinite(d.real()) || !std::isfinite(d.imag()))
    fail(ErrorKind::overflow, "characteristic determinant is not finite");
  return d;
}

struct RootCountOptions {
  double margin = 1.0;
  /// Roots closer than this to the contour are reported, not counted.
  double contour_tol = 1e-9;
  int max_refinements = 4;
};

/// Number of characteristic roots with Re(lambda) > beta, with multiplicity.
///
/// Every root with Re(lambda) >= beta satisfies
/// |lambda| <= |mu|([-tau,0]) e^{max(0,-beta) tau}, so the argument principle
/// on a finite rectangle captures all of them. The sample density along the
/// contour is doubled until the count repeats.
inline int root_count(const DelayMeasure& m, double beta, const RootCountOptions& opt = {}) {
  const double tv = total_variation(m);
  const double beta_max = tv + opt.margin;
  if (beta >= beta_max) return 0;
  const double omega = tv * std::exp(std::max(0.0, -beta) * m.tau()) + opt.margin;
  const std::vector<cplx> corners{{beta, -omega}, {beta_max, -omega}, {beta_max, omega}, {beta, omega}};
  double density = 4.0 * (1.0 + m.tau());
  std::optional<long> previous;
  for (int r = 0; r <= opt.max_refinements; ++r, density *= 2.0) {
    const double w = detail::winding(m, corners, density, opt.contour_tol);
    const long count = std::lround(w);
    if (std::abs(w - static_cast<double>(count)) > 1e-6 || count < 0)
      fail(ErrorKind::convergence, "winding number " + std::to_string(w) + " is not a nonnegative integer");
    if (previous && *previous == count) return static_cast<int>(count);
    previous = count;
  }
  fail(ErrorKind::convergence, "root count did not stabilise under contour refinement");
}

/// alpha_0 = sup Re(lambda) over characteristic roots, within +-tol.
inline double spectral_abscissa(const DelayMeasure& m, double tol = 1e-6) {
  if (!(tol > 0.0)) fail(ErrorKind::precondition, "tolerance must be positive");
  const double tv = total_variation(m);
  double hi = tv + 1.0;  // no roots to the right
  double lo = -tv - 1.0;
  RootCountOptions opt;
  opt.contour_tol = tol / 8.0;

  // Count at beta, nudging beta off a root that sits on the line.
  auto count_at = [&](double beta, double lo_, double hi_) -> std::pair<double, int> {
    const double nudge = tol / 4.0;
    for (double shift : {0.0, nudge, -nudge, 2.0 * nudge, -2.0 * nudge}) {
      const double b = beta + shift;
      if (b <= lo_ || b >= hi_) continue;
      try {
        return {b, root_count(m, b, opt)};
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::root_on_contour) throw;
      }
    }
    fail(ErrorKind::convergence, "could not place the bisection contour away from characteristic roots");
  };

  for (int widen = 0;; ++widen) {
    if (count_at(lo, lo - 1.0, hi).second > 0) break;
    if (widen >= 8) fail(ErrorKind::convergence, "no characteristic root found in the search bracket");
    lo -= (hi - lo);
  }
  for (int it = 0; hi - lo > 2.0 * tol; ++it) {
    if (it > 200) fail(ErrorKind::convergence, "spectral abscissa bisection did not converge");
    const auto [b, c] = count_at(0.5 * (lo + hi), lo, hi);
    if (c > 0)
      lo = b;
    else
      hi = b;
  }
  return 0.5 * (lo + hi);
}

/// For x'(t) = -a x(t) + b x(t-1): the unique mu in (|b|, a) with
/// mu e^{-a+mu} = |b|, so |r(t)| <= e^{(-a+mu) t}. Returns 0 when b = 0.
inline double decay_rate_root(double a, double b) {
  if (!(a > 0.0) || !(std::abs(b) < a))
    fail(ErrorKind::precondition, "decay-rate root requires a > 0 and |b| < a");
  const double ab = std::abs(b);
  if (ab == 0.0) return 0.0;
  auto g = [&](double mu) { return mu * std::exp(mu - a) - ab; };
  double lo = ab, hi = a;
  for (int it = 0; it < 400 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  const double mu = std::abs(g(lo)) <= std::abs(g(hi)) ? lo : hi;
  if (std::abs(g(mu)) > 1e-10) fail(ErrorKind::convergence, "decay-rate root residual above 1e-10");
  return mu;
}

struct CAlphaEstimate {
  double value = 1.0;
  double t_argmax = 0.0;
  bool low_confidence = false;
};

/// safety * max(1, max_t ||r(t)||_F e^{alpha t}) over the table's t >= 0.
inline CAlphaEstimate estimate_c_alpha(const ResolventTable& table, double alpha, double safety = 1.01) {
  if (!(alpha > 0.0)) fail(ErrorKind::precondition, "alpha must be positive");
  if (!(safety >= 1.0)) fail(ErrorKind::precondition, "safety factor must be >= 1");
  CAlphaEstimate out;
  double best = 1.0;
  for (std::int64_t j = 0; j <= table.last(); ++j) {
    const double t = table.time(j);
    const double v = table.at(j).norm() * std::exp(alpha * t);
    if (v > best) {
      best = v;
      out.t_argmax = t;
    }
  }
  out.value = safety * best;
  out.low_confidence = table.horizon() * alpha < 5.0;
  return out;
}

struct StabilityCertificate {
  double alpha0_est = 0.0;
  double alpha_star = 0.0;
  double c_alpha = 1.0;
  double lipschitz = 0.0;
  double k_const = 1.0;
  double rate = 0.0;
  bool certified = false;
  std::vector<std::string> diagnostics;
};

/// 32 points, geometric between 0.05 and 0.95 of -alpha0.
inline std::vector<double> default_alpha_grid(double alpha0, int count = 32) {
  if (!(alpha0 < 0.0)) fail(ErrorKind::unstable, "linear part unstable: spectral abscissa is not negative");
  std::vector<double> out;
  const double lo = 0.05 * -alpha0, hi = 0.95 * -alpha0;
  for (int i = 0; i < count; ++i)
    out.push_back(count == 1 ? hi : lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1)));
  return out;
}

struct CertifyOptions {
  double safety = 1.01;
  double abscissa_tol = 1e-6;
  /// Reuse a previously computed spectral abscissa.
  std::optional<double> alpha0;
};

/// Stability certificate for dx = [L(x_t) + f(x_t)]dt + Sigma dB with f
/// globally Lipschitz (constant `lipschitz`): picks the alpha on the grid
/// minimising L e^{alpha tau} C_alpha - alpha; certified when that is < 0.
inline StabilityCertificate certify(const DelayMeasure& m, double lipschitz, const std::vector<double>& alpha_grid,
                                    const ResolventTable& table, const CertifyOptions& opt = {}) {
  if (!(lipschitz >= 0.0)) fail(ErrorKind::precondition, "Lipschitz constant must be nonnegative");
  if (alpha_grid.empty()) fail(ErrorKind::precondition, "alpha grid is empty");
  const double alpha0 = opt.alpha0 ? *opt.alpha0 : spectral_abscissa(m, opt.abscissa_tol);
  if (!(alpha0 < 0.0))
    fail(ErrorKind::unstable, "linear part unstable: spectral abscissa " + std::to_string(alpha0) + " >= 0");
  const double tau = m.tau();
  StabilityCertificate best;
  bool have = false;
  bool low_conf = false;
  for (double alpha : alpha_grid) {
    if (!(alpha > 0.0 && alpha < -alpha0))
      fail(ErrorKind::precondition, "alpha " + std::to_string(alpha) + " lies outside (0, -alpha0)");
    const CAlphaEstimate c = estimate_c_alpha(table, alpha, opt.safety);
    const double rate = lipschitz * std::exp(alpha * tau) * c.value - alpha;
    if (!have || rate < best.rate) {
      have = true;
      best.alpha_star = alpha;
      best.c_alpha = c.value;
      best.rate = rate;
      low_conf = c.low_confidence;
    }
  }
  best.alpha0_est = alpha0;
  best.lipschitz = lipschitz;
  best.k_const = std::exp(best.alpha_star * tau) * best.c_alpha +
                 tau * std::exp(2.0 * best.alpha_star * tau) * best.c_alpha * total_variation(m);
  best.certified = best.rate < 0.0;
  best.diagnostics.push_back("C_alpha estimated empirically on [0, " + std::to_string(table.horizon()) +
                             "] with safety factor " + std::to_string(opt.safety) + "; no rigorous tail bound");
  if (low_conf) best.diagnostics.push_back("low confidence: horizon * alpha < 5 for the selected alpha");
  if (lipschitz > 0.0) best.diagnostics.push_back("Lipschitz constant is a declared input, not verified");
  return best;
}

}  // namespace sfde
