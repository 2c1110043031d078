#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sfde/error.hpp"

namespace sfde {

/// A grid function on [-tau, 0] with values in R^n: an element of C_tau.
///
/// Node i sits at u = -tau + i*h. Storage is node-major, so the n components
/// of one node are contiguous.
class Segment {
 public:
  Segment() = default;

  /// Zero segment.
  Segment(double tau, double h, std::size_t n) : tau_(tau), h_(h), n_(n) {
    check_grid();
    values_.assign(nodes_ * n_, 0.0);
  }

  Segment(double tau, double h, std::size_t n, std::vector<double> values)
      : tau_(tau), h_(h), n_(n), values_(std::move(values)) {
    check_grid();
    if (values_.size() != nodes_ * n_)
      fail(ErrorKind::shape, "segment value count does not match round(tau/h)+1 nodes");
    for (double v : values_)
      if (!std::isfinite(v)) fail(ErrorKind::evaluation, "segment value is not finite");
  }

  /// Samples `fn(u, component)` at every node.
  static Segment from_function(double tau, double h, std::size_t n,
                               const std::function<double(double, std::size_t)>& fn) {
    Segment s(tau, h, n);
    for (std::size_t i = 0; i < s.nodes_; ++i)
      for (std::size_t c = 0; c < n; ++c) s.values_[i * n + c] = fn(s.node_time(i), c);
    for (double v : s.values_)
      if (!std::isfinite(v)) fail(ErrorKind::evaluation, "segment value is not finite");
    return s;
  }

  static Segment constant(double tau, double h, const Eigen::VectorXd& value) {
    return from_function(tau, h, static_cast<std::size_t>(value.size()),
                         [&](double, std::size_t c) { return value(static_cast<Eigen::Index>(c)); });
  }

  double tau() const noexcept { return tau_; }
  double h() const noexcept { return h_; }
  std::size_t dim() const noexcept { return n_; }
  std::size_t nodes() const noexcept { return nodes_; }
  /// Index of the node at u = 0.
  std::size_t last() const noexcept { return nodes_ - 1; }

  double node_time(std::size_t i) const noexcept {
    return static_cast<double>(static_cast<std::int64_t>(i) - static_cast<std::int64_t>(last())) * h_;
  }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  std::span<const double> at(std::size_t i) const noexcept {
    return std::span<const double>(values_).subspan(i * n_, n_);
  }
  std::span<double> at(std::size_t i) noexcept { return std::span<double>(values_).subspan(i * n_, n_); }

  Eigen::VectorXd vector_at(std::size_t i) const {
    return Eigen::Map<const Eigen::VectorXd>(values_.data() + i * n_, static_cast<Eigen::Index>(n_));
  }

  bool same_grid(const Segment& o) const noexcept {
    return n_ == o.n_ && nodes_ == o.nodes_ && std::abs(h_ - o.h_) <= 1e-12 * h_ &&
           std::abs(tau_ - o.tau_) <= 1e-12 * std::max(1.0, tau_);
  }

  friend bool operator==(const Segment& a, const Segment& b) = default;

 private:
  void check_grid() {
    if (!(h_ > 0.0)) fail(ErrorKind::precondition, "segment step h must be positive");
    if (!(tau_ >= 0.0)) fail(ErrorKind::precondition, "segment tau must be nonnegative");
    if (n_ == 0) fail(ErrorKind::shape, "segment dimension must be positive");
    nodes_ = static_cast<std::size_t>(grid_index(tau_, h_, "segment tau")) + 1;
  }

  double tau_ = 0.0;
  double h_ = 1.0;
  std::size_t n_ = 0;
  std::size_t nodes_ = 0;
  std::vector<double> values_;
};

/// Max over nodes of the Euclidean norm.
inline double sup_norm(const Segment& s) {
  double best = 0.0;
  for (std::size_t i = 0; i < s.nodes(); ++i) {
    double sq = 0.0;
    for (double v : s.at(i)) sq += v * v;
    best = std::max(best, std::sqrt(sq));
  }
  return best;
}

/// a*x + b*y on a shared grid.
inline Segment combine(double a, const Segment& x, double b, const Segment& y) {
  if (!x.same_grid(y)) fail(ErrorKind::shape, "segments live on different grids");
  std::vector<double> out(x.values().size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a * x.values()[k] + b * y.values()[k];
  return Segment(x.tau(), x.h(), x.dim(), std::move(out));
}

inline double sup_distance(const Segment& x, const Segment& y) { return sup_norm(combine(1.0, x, -1.0, y)); }

}  // namespace sfde
