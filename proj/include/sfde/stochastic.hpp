#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "sfde/error.hpp"
#include "sfde/expr.hpp"
#include "sfde/measure.hpp"
#include "sfde/resolvent.hpp"
#include "sfde/segment.hpp"
#include "sfde/spectral.hpp"
#include "sfde/system.hpp"
#include "sfde/wiener.hpp"

namespace sfde {

namespace detail {

/// Euler-Maruyama state on [t0 - tau, t0 + T], node-major n-vectors.
struct EmBuffer {
  double h = 1.0;
  double tau = 0.0;
  std::int64_t j0 = 0;  ///< grid index of t0
  std::size_t lags = 0;
  std::size_t steps = 0;
  std::size_t n = 1;
  std::vector<double> x;

  const double* node(std::size_t p) const noexcept { return x.data() + p * n; }

  /// Segment whose last node is buffer node p (p >= lags).
  Segment segment_ending_at(std::size_t p) const {
    std::vector<double> v(x.begin() + static_cast<std::ptrdiff_t>((p - lags) * n),
                          x.begin() + static_cast<std::ptrdiff_t>((p + 1) * n));
    return Segment(tau, h, n, std::move(v));
  }
};

inline void check_history(const SystemSpec& sys, const WienerPath& path, const Segment& xi) {
  if (xi.dim() != sys.dim()) fail(ErrorKind::shape, "initial segment dimension does not match the system");
  if (path.dim() != sys.noise_dim()) fail(ErrorKind::shape, "path dimension does not match the noise matrix");
  if (std::abs(xi.h() - path.h()) > 1e-12 * path.h()) fail(ErrorKind::alignment, "segment and path grids differ");
  if (std::abs(xi.tau() - sys.tau()) > 1e-12 * std::max(1.0, sys.tau()))
    fail(ErrorKind::shape, "segment horizon does not match tau");
}

/// x_{j+1} = x_j + h [L(x_{t_j}) + f(x_{t_j})] + Sigma dB_j with history xi at t0.
inline EmBuffer em_run(const SystemSpec& sys, const WienerPath& path, const Segment& xi, double t0, double T) {
  check_history(sys, path, xi);
  if (!(T >= 0.0)) fail(ErrorKind::precondition, "integration length must be nonnegative");
  const double h = path.h();
  const DiscreteMeasure dm(sys.measure, h);
  std::optional<BoundNonlinearity> f;
  if (sys.nonlinearity) f.emplace(*sys.nonlinearity, h);

  EmBuffer b;
  b.h = h;
  b.tau = xi.tau();
  b.j0 = grid_index(t0, h, "start time");
  b.lags = dm.lags();
  b.steps = static_cast<std::size_t>(grid_index(T, h, "integration length"));
  b.n = sys.dim();
  const std::size_t n = b.n, m = sys.noise_dim();
  if (b.j0 < path.first_node() || b.j0 + static_cast<std::int64_t>(b.steps) > path.last_node())
    fail(ErrorKind::range, "integration interval leaves the sampled path range");

  b.x.assign((b.lags + b.steps + 1) * n, 0.0);
  std::copy(xi.values().begin(), xi.values().end(), b.x.begin());
  std::vector<double> dB(b.steps * m);
  path.increments(b.j0, b.steps, dB);

  std::vector<double> sigma(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < m; ++c)
      sigma[i * m + c] = sys.sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));

  std::vector<double> drift(n);
  for (std::size_t k = 0; k < b.steps; ++k) {
    const std::size_t p = b.lags + k;
    const double* cur = b.x.data() + p * n;
    double* nxt = b.x.data() + (p + 1) * n;
    std::fill(drift.begin(), drift.end(), 0.0);
    dm.accumulate(cur, 1, drift.data());
    if (f) f->accumulate(cur, n, drift.data());
    for (std::size_t i = 0; i < n; ++i) {
      double noise = 0.0;
      for (std::size_t c = 0; c < m; ++c) noise += sigma[i * m + c] * dB[k * m + c];
      nxt[i] = (cur[i] + h * drift[i]) + noise;
      if (!std::isfinite(nxt[i]) || std::abs(nxt[i]) > 1e300)
        fail(ErrorKind::overflow, "Euler-Maruyama solution blew up at t = " +
                                      std::to_string(static_cast<double>(b.j0 + static_cast<std::int64_t>(k) + 1) * h));
    }
  }
  return b;
}

/// Runs fn(i) for i in [0, count) on all hardware threads. Results must be
/// written to per-index slots; the first exception by index is rethrown.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn, unsigned workers = 0) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(count, 1)));
  std::vector<std::exception_ptr> errors(count);
  auto body = [&](unsigned w) {
    for (std::size_t i = w; i < count; i += workers) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    body(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body, w);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  const auto R = static_cast<double>(v.size());
  for (double x : v) out.mean += x;
  out.mean /= R;
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.se = v.size() > 1 ? std::sqrt(ss / (R - 1.0) / R) : 0.0;
  return out;
}

}  // namespace detail

struct EmResult {
  Trajectory trajectory;  ///< nodes t0, ..., t0 + T
  Segment terminal;       ///< x_{t0+T}
};

/// Euler-Maruyama solution from history xi at t0 over [t0, t0 + T] driven by
/// `path`. Deterministic in its inputs; chaining two calls through the
/// terminal segment reproduces one long call bit for bit.
inline EmResult em_solve(const SystemSpec& sys, const WienerPath& path, const Segment& xi, double t0, double T) {
  detail::EmBuffer b = detail::em_run(sys, path, xi, t0, T);
  EmResult out;
  out.trajectory.t0 = static_cast<double>(b.j0) * b.h;
  out.trajectory.h = b.h;
  out.trajectory.n = b.n;
  out.trajectory.values.assign(b.x.begin() + static_cast<std::ptrdiff_t>(b.lags * b.n), b.x.end());
  out.terminal = b.segment_ending_at(b.lags + b.steps);
  return out;
}

/// phi(t, theta_{-t} w, xi): start at -t with history xi and report the
/// segment at time 0.
inline Segment pullback(const SystemSpec& sys, const WienerPath& path, const Segment& xi, double t) {
  if (!(t >= 0.0)) fail(ErrorKind::precondition, "pullback time must be nonnegative");
  return em_solve(sys, path, xi, -t, t).terminal;
}

struct StationarySegment {
  Segment segment;
  double truncation = 0.0;
  double tail_bound = 0.0;
};

/// 40/alpha for affine systems, 40/|rate| otherwise, capped at 1e4 and rounded
/// up to the grid.
inline double default_truncation(const StabilityCertificate& cert, bool affine, double h) {
  double T = affine ? 40.0 / cert.alpha_star : 40.0 / std::abs(cert.rate);
  if (!std::isfinite(T)) T = 1e4;
  T = std::min(T, 1e4);
  return std::ceil(T / h - 1e-9) * h;
}

/// U(w) (affine) or V(w) (nonlinear): the pullback from the zero segment over
/// [-T_trunc, 0]. The limit does not depend on the starting segment, and the
/// distance to it decays like K e^{rate T_trunc}; `tail_bound` reports that
/// factor times the scale sup|U| + C_alpha ||Sigma|| / sqrt(2 alpha).
inline StationarySegment stationary_segment(const SystemSpec& sys, const WienerPath& path, double T_trunc,
                                            const StabilityCertificate& cert) {
  if (!(cert.alpha0_est < 0.0)) fail(ErrorKind::unstable, "linear part unstable: no stationary segment");
  if (!sys.affine() && !cert.certified)
    fail(ErrorKind::certification, "nonlinear system is not certified (rate >= 0); refusing to build V(w)");
  if (!(T_trunc > 0.0)) fail(ErrorKind::precondition, "truncation must be positive");
  const Segment zero(sys.tau(), path.h(), sys.dim());
  StationarySegment out;
  out.segment = pullback(sys, path, zero, T_trunc);
  out.truncation = T_trunc;
  const double scale = sup_norm(out.segment) + cert.c_alpha * sys.sigma.norm() / std::sqrt(2.0 * cert.alpha_star);
  out.tail_bound = cert.k_const * std::exp(cert.rate * T_trunc) * scale;
  return out;
}

/// Variation-of-constants evaluation of the segment at time t of the solution
/// started from zero history at t_start:
///   x(v) = int_{t_start}^{v} r(v - u) [f(x_u) du + Sigma dB(u)].
/// The dB-integral weights each increment by the cell average of the kernel
/// (trapezoid); the du-integral is a trapezoid rule. `traj` supplies x for
/// the f-term and may be null for affine systems.
inline Segment variation_of_constants_segment(const SystemSpec& sys, const WienerPath& path,
                                              const ResolventTable& table, double t_start, double t,
                                              const detail::EmBuffer* traj) {
  const double h = path.h();
  if (std::abs(table.h() - h) > 1e-12 * h) fail(ErrorKind::alignment, "resolvent table and path grids differ");
  const std::size_t n = sys.dim(), m = sys.noise_dim();
  const std::int64_t js = grid_index(t_start, h, "start time");
  const std::int64_t kt = grid_index(t, h, "evaluation time");
  const auto N = static_cast<std::int64_t>(grid_index(sys.tau(), h, "tau"));
  if (kt - js > table.last()) fail(ErrorKind::range, "resolvent table horizon shorter than the convolution window");
  const std::size_t K = static_cast<std::size_t>(std::max<std::int64_t>(kt - js, 0));
  std::vector<double> dB(K * m);
  path.increments(js, K, dB);

  // f(x_u) at nodes js..kt.
  std::vector<double> fv;
  if (!sys.affine()) {
    if (!traj || traj->j0 != js) fail(ErrorKind::precondition, "nonlinear convolution needs the trajectory from t_start");
    const BoundNonlinearity f(*sys.nonlinearity, h);
    fv.assign((K + 1) * n, 0.0);
    for (std::size_t k = 0; k <= K; ++k) f.accumulate(traj->node(traj->lags + k), n, fv.data() + k * n);
  }

  std::vector<double> out((static_cast<std::size_t>(N) + 1) * n, 0.0);
  std::vector<double> sdb(m);
  for (std::int64_t i = 0; i <= N; ++i) {
    const std::int64_t q = kt - N + i;  // target grid index
    double* y = out.data() + static_cast<std::size_t>(i) * n;
    for (std::int64_t j = js; j < q; ++j) {
      const double* r1 = table.data_at(q - j);
      const double* r0 = table.data_at(q - j - 1);
      const double* db = dB.data() + static_cast<std::size_t>(j - js) * m;
      for (std::size_t a = 0; a < n; ++a) {
        double acc = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
          double sb = 0.0;
          for (std::size_t c = 0; c < m; ++c)
            sb += sys.sigma(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c)) * db[c];
          acc += 0.5 * (r1[a * n + b] + r0[a * n + b]) * sb;
        }
        y[a] += acc;
      }
    }
    if (!fv.empty() && q > js) {
      for (std::int64_t j = js; j <= q; ++j) {
        const double w = (j == js || j == q) ? 0.5 * h : h;
        const double* r = table.data_at(q - j);
        const double* fj = fv.data() + static_cast<std::size_t>(j - js) * n;
        for (std::size_t a = 0; a < n; ++a)
          for (std::size_t b = 0; b < n; ++b) y[a] += w * r[a * n + b] * fj[b];
      }
    }
  }
  return Segment(sys.tau(), h, n, std::move(out));
}

/// Defect of the random-equilibrium identity phi(t, w, U(w)) = U(theta_t w):
/// the Euler-Maruyama image of u over [0, t] against the variation-of-constants
/// evaluation of the equilibrium at time t (sup norm). Both approximate the
/// same solution started at -T_trunc, so the defect is discretisation error.
inline double equilibrium_residual(const SystemSpec& sys, const WienerPath& path, const StationarySegment& u,
                                   double t, const ResolventTable& table) {
  if (!(t > 0.0)) fail(ErrorKind::precondition, "residual time must be positive");
  const Segment phi = em_solve(sys, path, u.segment, 0.0, t).terminal;
  std::optional<detail::EmBuffer> traj;
  if (!sys.affine()) {
    const Segment zero(sys.tau(), path.h(), sys.dim());
    traj = detail::em_run(sys, path, zero, -u.truncation, u.truncation + t);
  }
  const Segment ref = variation_of_constants_segment(sys, path, table, -u.truncation, t, traj ? &*traj : nullptr);
  return sup_distance(phi, ref);
}

struct VarianceQuadrature {
  double value = 0.0;
  bool low_confidence = false;
};

/// int_0^T ||r(u) Sigma||_F^2 du, the stationary second moment E|U(w)(s)|^2
/// (the same for every s in [-tau, 0]).
inline VarianceQuadrature variance_quadrature(const ResolventTable& table, const Eigen::MatrixXd& sigma, double s) {
  const double tau = table.measure().tau();
  if (!(s <= 1e-12 && s >= -tau - 1e-12)) fail(ErrorKind::range, "s must lie in [-tau, 0]");
  if (sigma.rows() != static_cast<Eigen::Index>(table.dim())) fail(ErrorKind::shape, "noise matrix has wrong row count");
  const double h = table.h();
  const std::int64_t K = table.last();
  VarianceQuadrature out;
  std::vector<double> g(static_cast<std::size_t>(K + 1));
  for (std::int64_t j = 0; j <= K; ++j) g[static_cast<std::size_t>(j)] = (table.at(j) * sigma).squaredNorm();
  for (std::int64_t j = 0; j <= K; ++j)
    out.value += ((j == 0 || j == K) ? 0.5 * h : h) * g[static_cast<std::size_t>(j)];
  const double window = std::max(tau, 1.0);
  const auto from = std::max<std::int64_t>(0, K - static_cast<std::int64_t>(std::llround(window / h)));
  double tail = 0.0;
  for (std::int64_t j = from; j <= K; ++j) tail = std::max(tail, g[static_cast<std::size_t>(j)]);
  out.low_confidence = tail * window > 1e-8 * std::max(out.value, std::numeric_limits<double>::min());
  return out;
}

struct MomentBounds {
  double ou4 = 0.0;  ///< bound on E|U(s)|^2
  double ou5 = 0.0;  ///< bound on E|U(s)|
  double ou6 = 0.0;  ///< bound on E||U||
  double ou7 = 0.0;  ///< bound on E||U||^2
};

inline MomentBounds moment_bounds(const DelayMeasure& mu, const Eigen::MatrixXd& sigma, double alpha, double c_alpha,
                                  std::size_t path_dim) {
  if (!(alpha > 0.0)) fail(ErrorKind::precondition, "alpha must be positive");
  const double s = sigma.norm();
  const double tau = mu.tau();
  const auto m = static_cast<double>(path_dim);
  const double w = weighted_variation(mu, alpha);
  MomentBounds b;
  b.ou4 = c_alpha * c_alpha * s * s / (2.0 * alpha);
  b.ou5 = c_alpha * s / std::sqrt(2.0 * alpha);
  b.ou6 = 2.0 * m * std::sqrt(tau) * s + std::sqrt(2.0 / (std::numbers::pi * alpha * alpha * alpha)) * m *
                                             std::exp(alpha * tau) * c_alpha * s * std::tgamma(1.5) * w;
  b.ou7 = 8.0 * m * tau * s * s +
          (2.0 * m / (alpha * alpha * alpha)) * std::exp(2.0 * alpha * tau) * c_alpha * c_alpha * s * s * w * w;
  return b;
}

struct MomentStats {
  Eigen::VectorXd mean;     ///< E[U(0)]
  double var = 0.0;         ///< E|U(0)|^2
  double sup_mean = 0.0;    ///< E||U||
  double sup_sq_mean = 0.0; ///< E||U||^2
  Eigen::VectorXd se_mean;
  double se_var = 0.0;
  double se_sup_mean = 0.0;
  double se_sup_sq_mean = 0.0;
  std::size_t replicas = 0;
  std::uint64_t master_seed = 0;
};

/// Monte Carlo moments of the stationary segment over independent paths.
/// Replica r uses seed rng::replica_seed(master_seed, r); aggregation runs in
/// replica order, so the result does not depend on the worker count.
inline MomentStats mc_moments(const SystemSpec& sys, const StabilityCertificate& cert, std::size_t replicas,
                              std::uint64_t master_seed, double T_trunc, double h, unsigned workers = 0) {
  if (replicas < 2) fail(ErrorKind::statistics, "need at least 2 replicas for standard errors");
  const std::size_t n = sys.dim();
  std::vector<double> u0(replicas * n), sq(replicas), sup(replicas), sup2(replicas);
  detail::parallel_for(
      replicas,
      [&](std::size_t r) {
        const WienerPath path = sample_path(rng::replica_seed(master_seed, r), h, -T_trunc, 0.0, sys.noise_dim());
        const Segment U = stationary_segment(sys, path, T_trunc, cert).segment;
        double s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double v = U.at(U.last())[i];
          u0[r * n + i] = v;
          s2 += v * v;
        }
        sq[r] = s2;
        sup[r] = sup_norm(U);
        sup2[r] = sup[r] * sup[r];
      },
      workers);
  MomentStats st;
  st.replicas = replicas;
  st.master_seed = master_seed;
  st.mean.resize(static_cast<Eigen::Index>(n));
  st.se_mean.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> col(replicas);
    for (std::size_t r = 0; r < replicas; ++r) col[r] = u0[r * n + i];
    const auto ms = detail::mean_se(col);
    st.mean(static_cast<Eigen::Index>(i)) = ms.mean;
    st.se_mean(static_cast<Eigen::Index>(i)) = ms.se;
  }
  const auto a = detail::mean_se(sq), b = detail::mean_se(sup), c = detail::mean_se(sup2);
  st.var = a.mean;
  st.se_var = a.se;
  st.sup_mean = b.mean;
  st.se_sup_mean = b.se;
  st.sup_sq_mean = c.mean;
  st.se_sup_sq_mean = c.se;
  return st;
}

struct ContractionResult {
  std::vector<double> t;
  std::vector<double> distance;  ///< sup-norm segment distance at multiples of tau
  double slope = 0.0;
  double intercept = 0.0;
  bool early_convergence = false;
};

namespace detail {

inline double segment_distance(const EmBuffer& x, const EmBuffer& y, std::size_t p) {
  double best = 0.0;
  for (std::size_t q = p - x.lags; q <= p; ++q) {
    double sq = 0.0;
    for (std::size_t i = 0; i < x.n; ++i) {
      const double d = x.node(q)[i] - y.node(q)[i];
      sq += d * d;
    }
    best = std::max(best, std::sqrt(sq));
  }
  return best;
}

}  // namespace detail

/// Forward solutions from xi and eta on the same path; d(t) = ||x_t - y_t||
/// sampled at multiples of tau (of 1 when tau = 0) and a least-squares fit of
/// log d(t) over [fit_from, fit_to].
inline ContractionResult contraction_rate(const SystemSpec& sys, const WienerPath& path, const Segment& xi,
                                          const Segment& eta, double T, double fit_from, double fit_to) {
  const detail::EmBuffer bx = detail::em_run(sys, path, xi, 0.0, T);
  const detail::EmBuffer by = detail::em_run(sys, path, eta, 0.0, T);
  const double h = bx.h;
  const double every = sys.tau() > 0.0 ? sys.tau() : 1.0;
  const auto step = static_cast<std::size_t>(grid_index(every, h, "sampling interval"));
  ContractionResult out;
  std::vector<double> ft, fy;
  for (std::size_t k = 0; k <= bx.steps; k += step) {
    const double t = static_cast<double>(k) * h;
    const double d = detail::segment_distance(bx, by, bx.lags + k);
    out.t.push_back(t);
    out.distance.push_back(d);
    if (d == 0.0 && t <= fit_to) out.early_convergence = true;
    if (t >= fit_from - 1e-12 && t <= fit_to + 1e-12 && d > 0.0) {
      ft.push_back(t);
      fy.push_back(std::log(d));
    }
  }
  if (ft.size() < 2) {
    if (!out.early_convergence) fail(ErrorKind::range, "fit window holds fewer than two samples");
    out.slope = -std::numeric_limits<double>::infinity();
    return out;
  }
  double tm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < ft.size(); ++i) {
    tm += ft[i];
    ym += fy[i];
  }
  tm /= static_cast<double>(ft.size());
  ym /= static_cast<double>(ft.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ft.size(); ++i) {
    num += (ft[i] - tm) * (fy[i] - ym);
    den += (ft[i] - tm) * (ft[i] - tm);
  }
  out.slope = num / den;
  out.intercept = ym - out.slope * tm;
  return out;
}

struct SyncResult {
  Trajectory x;
  Trajectory y;
  std::vector<double> t;
  std::vector<double> distance;  ///< |x(t) - y(t)| at every node
  double initial_sup_distance = 0.0;
};

inline SyncResult synchronize(const SystemSpec& sys, const WienerPath& path, const Segment& xi, const Segment& eta,
                              double T) {
  SyncResult out;
  out.x = em_solve(sys, path, xi, 0.0, T).trajectory;
  out.y = em_solve(sys, path, eta, 0.0, T).trajectory;
  out.initial_sup_distance = sup_distance(xi, eta);
  const std::size_t n = sys.dim();
  for (std::size_t k = 0; k < out.x.nodes(); ++k) {
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = out.x.values[k * n + i] - out.y.values[k * n + i];
      sq += d * d;
    }
    out.t.push_back(out.x.time(k));
    out.distance.push_back(std::sqrt(sq));
  }
  return out;
}

struct L2Point {
  double t = 0.0;
  double mean_sq = 0.0;  ///< E ||phi(t, theta_{-t} w, xi) - U(w)||^2
  double se = 0.0;
};

/// Ensemble estimate of the mean squared pullback distance to the stationary
/// segment at each time in `times` (all <= T_trunc).
inline std::vector<L2Point> pullback_l2(const SystemSpec& sys, const StabilityCertificate& cert, const Segment& xi,
                                        const std::vector<double>& times, std::size_t replicas,
                                        std::uint64_t master_seed, double T_trunc, unsigned workers = 0) {
  if (replicas < 2) fail(ErrorKind::statistics, "need at least 2 replicas for standard errors");
  for (double t : times)
    if (t > T_trunc) fail(ErrorKind::precondition, "pullback time exceeds the truncation horizon");
  const double h = xi.h();
  std::vector<double> d2(replicas * times.size());
  detail::parallel_for(
      replicas,
      [&](std::size_t r) {
        const WienerPath path = sample_path(rng::replica_seed(master_seed, r), h, -T_trunc, 0.0, sys.noise_dim());
        const Segment U = stationary_segment(sys, path, T_trunc, cert).segment;
        for (std::size_t k = 0; k < times.size(); ++k) {
          const double d = sup_distance(pullback(sys, path, xi, times[k]), U);
          d2[r * times.size() + k] = d * d;
        }
      },
      workers);
  std::vector<L2Point> out;
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<double> col(replicas);
    for (std::size_t r = 0; r < replicas; ++r) col[r] = d2[r * times.size() + k];
    const auto ms = detail::mean_se(col);
    out.push_back({times[k], ms.mean, ms.se});
  }
  return out;
}

}  // namespace sfde
