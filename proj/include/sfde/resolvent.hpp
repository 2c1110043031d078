#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "sfde/error.hpp"
#include "sfde/measure.hpp"
#include "sfde/segment.hpp"

namespace sfde {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Grid samples x(t0), x(t0+h), ..., x(t0+T).
struct Trajectory {
  double t0 = 0.0;
  double h = 1.0;
  std::size_t n = 1;
  std::vector<double> values;

  std::size_t nodes() const noexcept { return n == 0 ? 0 : values.size() / n; }
  double time(std::size_t k) const noexcept { return t0 + static_cast<double>(k) * h; }
  Eigen::VectorXd vector_at(std::size_t k) const {
    return Eigen::Map<const Eigen::VectorXd>(values.data() + k * n, static_cast<Eigen::Index>(n));
  }
};

/// The fundamental solution r(t) on the grid -tau, ..., 0, h, ..., T.
/// r = 0 on [-tau, 0) and node 0 stores the right limit r(0) = I.
class ResolventTable {
 public:
  ResolventTable(DelayMeasure m, double h, std::int64_t lags, std::int64_t steps, std::vector<double> values)
      : measure_(std::move(m)), h_(h), lags_(lags), steps_(steps), values_(std::move(values)) {}

  const DelayMeasure& measure() const noexcept { return measure_; }
  double h() const noexcept { return h_; }
  std::size_t dim() const noexcept { return measure_.dim(); }
  double horizon() const noexcept { return static_cast<double>(steps_) * h_; }
  /// First node index (-round(tau/h)).
  std::int64_t first() const noexcept { return -lags_; }
  /// Last node index (round(T/h)).
  std::int64_t last() const noexcept { return steps_; }
  double time(std::int64_t j) const noexcept { return static_cast<double>(j) * h_; }

  Eigen::Map<const RowMatrix> at(std::int64_t j) const {
    if (j < -lags_ || j > steps_) fail(ErrorKind::range, "resolvent node outside the tabulated range");
    const auto n = static_cast<Eigen::Index>(dim());
    return Eigen::Map<const RowMatrix>(values_.data() + static_cast<std::size_t>(j + lags_) * dim() * dim(), n, n);
  }

  /// Raw row-major block at node j (no range check).
  const double* data_at(std::int64_t j) const noexcept {
    return values_.data() + static_cast<std::size_t>(j + lags_) * dim() * dim();
  }

 private:
  DelayMeasure measure_;
  double h_;
  std::int64_t lags_;
  std::int64_t steps_;
  std::vector<double> values_;
};

namespace detail {

inline void check_finite_block(const double* p, std::size_t len, double t) {
  for (std::size_t k = 0; k < len; ++k)
    if (!std::isfinite(p[k]) || std::abs(p[k]) > 1e300)
      fail(ErrorKind::overflow, "solution overflowed at node t = " + std::to_string(t));
}

/// Heun (explicit trapezoid) steps for y' = L(y_t) on a node-major buffer of
/// n x w blocks. Node `start` must be the first unknown-free node; all nodes
/// before it (the history) are already filled.
inline void heun_linear(const DiscreteMeasure& dm, std::vector<double>& buf, std::size_t w, std::size_t start,
                        std::size_t steps, double h, bool fundamental) {
  const std::size_t blk = dm.dim() * w;
  std::vector<double> f0(blk), f1(blk);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t p = start + k;
    double* cur = buf.data() + p * blk;
    double* nxt = cur + blk;
    std::fill(f0.begin(), f0.end(), 0.0);
    std::fill(f1.begin(), f1.end(), 0.0);
    if (fundamental)
      dm.accumulate_fundamental(cur, static_cast<std::int64_t>(k), false, f0.data());
    else
      dm.accumulate(cur, w, f0.data());
    for (std::size_t q = 0; q < blk; ++q) nxt[q] = cur[q] + h * f0[q];
    if (fundamental)
      dm.accumulate_fundamental(nxt, static_cast<std::int64_t>(k + 1), true, f1.data());
    else
      dm.accumulate(nxt, w, f1.data());
    for (std::size_t q = 0; q < blk; ++q) nxt[q] = cur[q] + 0.5 * h * (f0[q] + f1[q]);
    check_finite_block(nxt, blk, static_cast<double>(k + 1) * h);
  }
}

}  // namespace detail

/// r'(t) = int mu(du) r(t+u), r(0) = I, zero history; Heun's method, O(h^2).
inline ResolventTable compute_resolvent(const DelayMeasure& m, double h, double T) {
  if (!(h > 0.0)) fail(ErrorKind::precondition, "step h must be positive");
  if (!(T >= m.tau()) || !(T > 0.0)) fail(ErrorKind::precondition, "resolvent horizon must satisfy T >= tau, T > 0");
  const DiscreteMeasure dm(m, h);
  const auto lags = static_cast<std::int64_t>(dm.lags());
  const auto steps = grid_index(T, h, "resolvent horizon");
  const std::size_t n = m.dim();
  std::vector<double> buf(static_cast<std::size_t>(lags + steps + 1) * n * n, 0.0);
  double* r0 = buf.data() + static_cast<std::size_t>(lags) * n * n;
  for (std::size_t i = 0; i < n; ++i) r0[i * n + i] = 1.0;
  detail::heun_linear(dm, buf, n, static_cast<std::size_t>(lags), static_cast<std::size_t>(steps), h, true);
  return ResolventTable(m, h, lags, steps, std::move(buf));
}

/// Solution of the homogeneous linear delay equation with history xi,
/// sampled at 0, h, ..., T (Heun, O(h^2)).
inline Trajectory integrate_linear(const DelayMeasure& m, const Segment& xi, double T) {
  if (xi.dim() != m.dim()) fail(ErrorKind::shape, "history dimension does not match the measure");
  if (std::abs(xi.tau() - m.tau()) > 1e-12 * std::max(1.0, m.tau()))
    fail(ErrorKind::shape, "history horizon does not match tau");
  const double h = xi.h();
  const DiscreteMeasure dm(m, h);
  const auto steps = static_cast<std::size_t>(grid_index(T, h, "integration horizon"));
  const std::size_t n = m.dim();
  const std::size_t lags = dm.lags();
  std::vector<double> buf((lags + steps + 1) * n, 0.0);
  std::copy(xi.values().begin(), xi.values().end(), buf.begin());
  detail::heun_linear(dm, buf, 1, lags, steps, h, false);
  Trajectory out{0.0, h, n, {}};
  out.values.assign(buf.begin() + static_cast<std::ptrdiff_t>(lags * n), buf.end());
  return out;
}

/// y(t, xi) = r(t) xi(0) + int_{-tau}^0 int_{-tau}^u r(t+s-u) mu(ds) xi(u) du,
/// with exact atom sums in s and trapezoid quadrature in u.
inline Eigen::VectorXd homogeneous_formula(const ResolventTable& table, const Segment& xi, double t) {
  const DelayMeasure& m = table.measure();
  const std::size_t n = m.dim();
  if (xi.dim() != n) fail(ErrorKind::shape, "history dimension does not match the table");
  if (std::abs(xi.h() - table.h()) > 1e-12 * table.h()) fail(ErrorKind::alignment, "history and table grids differ");
  if (!(t >= 0.0)) fail(ErrorKind::range, "formula time must be nonnegative");
  if (t + m.tau() > table.horizon() * (1.0 + 1e-12)) fail(ErrorKind::range, "t + tau exceeds the table horizon");
  const double h = table.h();
  const std::int64_t kt = grid_index(t, h, "formula time");
  const auto N = static_cast<std::int64_t>(xi.last());
  const auto nn = static_cast<Eigen::Index>(n);

  // r at argument index p, seen from the left when `left` is set.
  auto r = [&](std::int64_t p, bool left) -> RowMatrix {
    if (p < 0 || (p == 0 && left)) return RowMatrix::Zero(nn, nn);
    return table.at(p);
  };
  auto xi_at = [&](std::int64_t i) { return xi.vector_at(static_cast<std::size_t>(i)); };

  Eigen::VectorXd y = table.at(kt) * xi_at(N);

  for (const auto& a : m.atoms()) {
    const std::int64_t lag = grid_index(-a.s, h, "atom location");
    for (std::int64_t i = N - lag; i < N; ++i) {
      // Cell [u_i, u_{i+1}]; the kernel argument t + s - u decreases in u.
      const std::int64_t pl = kt - lag - i + N;
      y += 0.5 * h * (r(pl, true) * a.A * xi_at(i) + r(pl - 1, false) * a.A * xi_at(i + 1));
    }
  }

  if (const auto& d = m.density()) {
    std::vector<Eigen::MatrixXd> D;
    for (std::int64_t l = 0; l <= N; ++l) D.push_back(d->at(xi.node_time(static_cast<std::size_t>(l)), m.tau()));
    for (std::int64_t i = 0; i <= N; ++i) {
      Eigen::MatrixXd inner = Eigen::MatrixXd::Zero(nn, nn);
      for (std::int64_t l = 0; l < i; ++l) {
        const std::int64_t p = kt + l - i;
        inner += 0.5 * h * (r(p, false) * D[static_cast<std::size_t>(l)] + r(p + 1, true) * D[static_cast<std::size_t>(l + 1)]);
      }
      const double w = (i == 0 || i == N) ? 0.5 * h : h;
      y += w * inner * xi_at(i);
    }
  }
  return y;
}

struct DecayCheck {
  bool ok = true;
  double t_worst = 0.0;
  /// max over nodes of ||r(t)||_F e^{alpha t}
  double worst_ratio = 0.0;
};

/// ||r(t)||_F <= c e^{-alpha t} at every node of [-tau, T].
inline DecayCheck decay_check(const ResolventTable& table, double alpha, double c) {
  DecayCheck out;
  out.worst_ratio = -1.0;
  for (std::int64_t j = table.first(); j <= table.last(); ++j) {
    const double t = table.time(j);
    const double nrm = table.at(j).norm();
    const double ratio = nrm * std::exp(alpha * t);
    if (ratio > out.worst_ratio) {
      out.worst_ratio = ratio;
      out.t_worst = t;
    }
    if (nrm > c * std::exp(-alpha * t)) out.ok = false;
  }
  return out;
}

/// Max over nodes t_k of || r(t_k) - I - int_0^{t_k} int mu(du) r(s+u) ds ||_F,
/// the defect of the integrated resolvent equation. The ds-integral uses
/// composite Simpson panels on even nodes (plus one trapezoid cell at odd
/// nodes) with one-sided limits of the integrand at the panel ends, so
/// breakpoints are expected on even nodes.
inline double integral_residual(const ResolventTable& table) {
  const DiscreteMeasure dm(table.measure(), table.h());
  const std::size_t n = table.dim();
  const std::size_t blk = n * n;
  const std::int64_t K = table.last();
  const double h = table.h();
  // Integrand at node k from the right (cell start) and from the left (cell end).
  std::vector<double> fr(static_cast<std::size_t>(K + 1) * blk, 0.0), fl(fr.size(), 0.0);
  for (std::int64_t k = 0; k <= K; ++k) {
    const double* cur = table.data_at(k);
    dm.accumulate_fundamental(cur, k, false, fr.data() + static_cast<std::size_t>(k) * blk);
    dm.accumulate_fundamental(cur, k, true, fl.data() + static_cast<std::size_t>(k) * blk);
  }
  auto F = [&](std::int64_t k, int side, std::size_t q) {
    const std::size_t at = static_cast<std::size_t>(k) * blk + q;
    if (side > 0) return fr[at];
    if (side < 0) return fl[at];
    return 0.5 * (fr[at] + fl[at]);
  };
  double worst = 0.0;
  std::vector<double> simpson(blk, 0.0);  // cumulative through the last even node
  for (std::int64_t k = 1; k <= K; ++k) {
    std::vector<double> integral(blk);
    if (k % 2 == 0) {
      for (std::size_t q = 0; q < blk; ++q) {
        simpson[q] += h / 3.0 * (F(k - 2, +1, q) + 4.0 * F(k - 1, 0, q) + F(k, -1, q));
        integral[q] = simpson[q];
      }
    } else {
      for (std::size_t q = 0; q < blk; ++q) integral[q] = simpson[q] + 0.5 * h * (F(k - 1, +1, q) + F(k, -1, q));
    }
    const double* rk = table.data_at(k);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double e = rk[i * n + j] - (i == j ? 1.0 : 0.0) - integral[i * n + j];
        sq += e * e;
      }
    worst = std::max(worst, std::sqrt(sq));
  }
  return worst;
}

}  // namespace sfde
