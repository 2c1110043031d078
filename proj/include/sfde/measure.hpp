#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sfde/error.hpp"
#include "sfde/segment.hpp"

namespace sfde {

struct Atom {
  double s = 0.0;  ///< location in [-tau, 0]
  Eigen::MatrixXd A;
};

/// Matrix-valued density on [-tau, 0], piecewise linear between uniform nodes.
struct Density {
  double step = 0.0;
  std::vector<Eigen::MatrixXd> values;  ///< at -tau, -tau+step, ..., 0

  Eigen::MatrixXd at(double u, double tau) const {
    const double x = (u + tau) / step;
    const auto last = static_cast<std::ptrdiff_t>(values.size()) - 1;
    auto k = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::floor(x)), 0, std::max<std::ptrdiff_t>(last - 1, 0));
    if (last == 0) return values.front();
    const double w = std::clamp(x - static_cast<double>(k), 0.0, 1.0);
    return (1.0 - w) * values[static_cast<std::size_t>(k)] + w * values[static_cast<std::size_t>(k + 1)];
  }
};

/// The measure mu on [-tau, 0] representing the linear drift
/// L(phi) = sum_k A_k phi(s_k) + int density(u) phi(u) du.
class DelayMeasure {
 public:
  DelayMeasure() = default;

  DelayMeasure(double tau, std::size_t n, std::vector<Atom> atoms, std::optional<Density> density = std::nullopt)
      : tau_(tau), n_(n), atoms_(std::move(atoms)), density_(std::move(density)) {
    validate();
  }

  double tau() const noexcept { return tau_; }
  std::size_t dim() const noexcept { return n_; }
  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  const std::optional<Density>& density() const noexcept { return density_; }

  DelayMeasure scaled(double c) const {
    DelayMeasure out = *this;
    for (auto& a : out.atoms_) a.A *= c;
    if (out.density_)
      for (auto& d : out.density_->values) d *= c;
    return out;
  }

 private:
  void validate() {
    if (!(tau_ >= 0.0) || !std::isfinite(tau_)) fail(ErrorKind::precondition, "tau must be a nonnegative real");
    if (n_ == 0) fail(ErrorKind::shape, "state dimension must be positive");
    const double eps = 1e-12 * std::max(1.0, tau_);
    for (std::size_t k = 0; k < atoms_.size(); ++k) {
      const auto& a = atoms_[k];
      if (a.A.rows() != static_cast<Eigen::Index>(n_) || a.A.cols() != static_cast<Eigen::Index>(n_))
        fail(ErrorKind::shape, "atom " + std::to_string(k) + " matrix is not n x n");
      if (!(a.s <= eps && a.s >= -tau_ - eps))
        fail(ErrorKind::range, "atom " + std::to_string(k) + " location lies outside [-tau, 0]");
      if (!a.A.allFinite()) fail(ErrorKind::shape, "atom matrix has non-finite entries");
      for (std::size_t j = 0; j < k; ++j)
        if (std::abs(atoms_[j].s - a.s) <= eps) fail(ErrorKind::precondition, "atom locations must be distinct");
    }
    if (density_) {
      if (tau_ == 0.0) fail(ErrorKind::precondition, "a density requires tau > 0");
      const auto& d = *density_;
      if (!(d.step > 0.0)) fail(ErrorKind::precondition, "density step must be positive");
      if (!is_multiple_of(tau_, d.step) ||
          d.values.size() != static_cast<std::size_t>(std::llround(tau_ / d.step)) + 1)
        fail(ErrorKind::shape, "density grid must span [-tau, 0] with uniform step");
      for (const auto& v : d.values)
        if (v.rows() != static_cast<Eigen::Index>(n_) || v.cols() != static_cast<Eigen::Index>(n_) || !v.allFinite())
          fail(ErrorKind::shape, "density values must be finite n x n matrices");
    }
  }

  double tau_ = 0.0;
  std::size_t n_ = 1;
  std::vector<Atom> atoms_;
  std::optional<Density> density_;
};

/// sum_k ||A_k||_F + int ||density(u)||_F du (trapezoid on the density grid).
inline double total_variation(const DelayMeasure& m) {
  double tv = 0.0;
  for (const auto& a : m.atoms()) tv += a.A.norm();
  if (const auto& d = m.density()) {
    const auto& v = d->values;
    for (std::size_t i = 0; i + 1 < v.size(); ++i) tv += 0.5 * d->step * (v[i].norm() + v[i + 1].norm());
  }
  return tv;
}

/// int e^{-alpha rho} |mu|(d rho), the weight appearing in the sup-norm
/// moment bounds.
inline double weighted_variation(const DelayMeasure& m, double alpha) {
  double acc = 0.0;
  for (const auto& a : m.atoms()) acc += std::exp(-alpha * a.s) * a.A.norm();
  if (const auto& d = m.density()) {
    const auto& v = d->values;
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
      const double u0 = -m.tau() + static_cast<double>(i) * d->step;
      const double u1 = u0 + d->step;
      acc += 0.5 * d->step * (std::exp(-alpha * u0) * v[i].norm() + std::exp(-alpha * u1) * v[i + 1].norm());
    }
  }
  return acc;
}

/// A DelayMeasure bound to a grid step h: atom lags become node offsets and
/// the density is sampled on the grid. This is what the integrators consume.
class DiscreteMeasure {
 public:
  DiscreteMeasure(const DelayMeasure& m, double h) : n_(m.dim()), h_(h) {
    lags_ = static_cast<std::size_t>(grid_index(m.tau(), h, "tau"));
    for (const auto& a : m.atoms()) {
      const auto idx = grid_index(-a.s, h, "atom location");
      atoms_.push_back({static_cast<std::size_t>(idx), row_major(a.A)});
    }
    if (const auto& d = m.density()) {
      for (std::size_t i = 0; i <= lags_; ++i) {
        const double u = -m.tau() + static_cast<double>(i) * h;
        density_.push_back(row_major(d->at(u, m.tau())));
      }
    }
  }

  std::size_t dim() const noexcept { return n_; }
  double h() const noexcept { return h_; }
  /// round(tau / h): number of grid cells in [-tau, 0].
  std::size_t lags() const noexcept { return lags_; }

  /// out += L applied column-wise to an n x w block state.
  ///
  /// `cur` points at the block of the current node in a node-major buffer
  /// with node stride n*w; the node `lag` steps back is at cur - lag*n*w.
  /// Blocks are row-major.
  void accumulate(const double* cur, std::size_t w, double* out) const {
    const std::size_t stride = n_ * w;
    for (const auto& a : atoms_) mul_add(a.A.data(), 1.0, cur - static_cast<std::ptrdiff_t>(a.lag * stride), w, out);
    if (!density_.empty()) {
      for (std::size_t i = 0; i <= lags_; ++i) {
        const std::size_t lag = lags_ - i;
        const double wgt = (i == 0 || i == lags_) ? 0.5 * h_ : h_;
        mul_add(density_[i].data(), wgt, cur - static_cast<std::ptrdiff_t>(lag * stride), w, out);
      }
    }
  }

  /// Variant for the fundamental solution, whose history has a jump at 0:
  /// r = 0 on [-tau, 0) and r(0) = I. `j` is the current node index counted
  /// from t = 0. With `left_limit` set, delayed atom values at the jump use
  /// r(0-) = 0 (the node is the right end of a step); the density integrand
  /// always treats the jump node as belonging to the cell on its right.
  void accumulate_fundamental(const double* cur, std::int64_t j, bool left_limit, double* out) const {
    const std::size_t w = n_;
    const std::size_t stride = n_ * w;
    for (const auto& a : atoms_) {
      const std::int64_t d = j - static_cast<std::int64_t>(a.lag);
      if (d < 0 || (d == 0 && left_limit && a.lag > 0)) continue;
      mul_add(a.A.data(), 1.0, cur - static_cast<std::ptrdiff_t>(a.lag * stride), w, out);
    }
    if (!density_.empty()) {
      for (std::size_t i = 0; i <= lags_; ++i) {
        const std::size_t lag = lags_ - i;
        const std::int64_t d = j - static_cast<std::int64_t>(lag);
        if (d < 0) continue;
        double wgt = (i == 0 || i == lags_) ? 0.5 * h_ : h_;
        if (d == 0) wgt = i < lags_ ? 0.5 * h_ : 0.0;
        if (wgt == 0.0) continue;
        mul_add(density_[i].data(), wgt, cur - static_cast<std::ptrdiff_t>(lag * stride), w, out);
      }
    }
  }

 private:
  struct Point {
    std::size_t lag;
    std::vector<double> A;  // row-major n x n
  };

  static std::vector<double> row_major(const Eigen::MatrixXd& M) {
    std::vector<double> out(static_cast<std::size_t>(M.size()));
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      for (Eigen::Index j = 0; j < M.cols(); ++j) out[static_cast<std::size_t>(i * M.cols() + j)] = M(i, j);
    return out;
  }

  void mul_add(const double* A, double scale, const double* X, std::size_t w, double* out) const {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t k = 0; k < n_; ++k) {
        const double a = scale * A[i * n_ + k];
        if (a == 0.0) continue;
        for (std::size_t c = 0; c < w; ++c) out[i * w + c] += a * X[k * w + c];
      }
  }

  std::size_t n_;
  double h_;
  std::size_t lags_ = 0;
  std::vector<Point> atoms_;
  std::vector<std::vector<double>> density_;
};

/// L(s): exact atom sums plus a trapezoid rule for the density on the
/// segment's grid.
inline Eigen::VectorXd apply(const DelayMeasure& m, const Segment& s) {
  if (s.dim() != m.dim()) fail(ErrorKind::shape, "segment dimension does not match the measure");
  if (std::abs(s.tau() - m.tau()) > 1e-12 * std::max(1.0, m.tau()))
    fail(ErrorKind::shape, "segment horizon does not match the measure's tau");
  const DiscreteMeasure dm(m, s.h());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.dim()));
  dm.accumulate(s.values().data() + s.last() * s.dim(), 1, out.data());
  return out;
}

}  // namespace sfde
