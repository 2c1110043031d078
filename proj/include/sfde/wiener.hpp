#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "sfde/error.hpp"

namespace sfde {

namespace rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Key for (seed, counter, component); every Gaussian in the library is a
/// pure function of such a key.
inline constexpr std::uint64_t key(std::uint64_t seed, std::int64_t counter, std::uint32_t component) noexcept {
  const std::uint64_t a = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(counter)));
  return splitmix64(a + 0xD1B54A32D192ED03ULL * (static_cast<std::uint64_t>(component) + 1));
}

/// Box-Muller pair for a key.
inline void normal_pair(std::uint64_t k, double& z0, double& z1) noexcept {
  const double u1 = static_cast<double>((splitmix64(k) >> 11) + 1) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(splitmix64(k ^ 0xA0761D6478BD642FULL) >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  z0 = r * std::cos(a);
  z1 = r * std::sin(a);
}

/// Standard normal number `index` of stream (seed, component). Indices 2k and
/// 2k+1 share one Box-Muller pair.
inline double normal(std::uint64_t seed, std::int64_t index, std::uint32_t component) noexcept {
  double z0, z1;
  normal_pair(key(seed, index >> 1, component), z0, z1);
  return (index & 1) ? z1 : z0;
}

/// Seed of ensemble member `replica`: splitmix64(master ^ splitmix64(replica + c)).
inline constexpr std::uint64_t replica_seed(std::uint64_t master, std::uint64_t replica) noexcept {
  return splitmix64(master ^ splitmix64(replica + 0x632BE59BD9B4E019ULL));
}

}  // namespace rng

/// A two-sided m-dimensional Brownian path on the grid t = j*h, represented by
/// its increments dB_j = B((j+1)h) - B(jh). Nothing is stored: increments
/// are regenerated from (seed, fine node index, component), so sub-ranges,
/// shifted views and coarsened views all see the same underlying path.
class WienerPath {
 public:
  WienerPath(std::uint64_t seed, double h, std::int64_t lo, std::int64_t hi, std::size_t m, std::int64_t origin = 0,
             std::int64_t stride = 1)
      : seed_(seed), h_(h), lo_(lo), hi_(hi), m_(m), origin_(origin), stride_(stride),
        fine_scale_(std::sqrt(h / static_cast<double>(stride))) {}

  std::uint64_t seed() const noexcept { return seed_; }
  double h() const noexcept { return h_; }
  std::size_t dim() const noexcept { return m_; }
  std::int64_t first_node() const noexcept { return lo_; }
  std::int64_t last_node() const noexcept { return hi_; }
  double t_min() const noexcept { return static_cast<double>(lo_) * h_; }
  double t_max() const noexcept { return static_cast<double>(hi_) * h_; }
  /// Absolute grid index of this view's time 0 (nonzero for shifted views).
  std::int64_t origin() const noexcept { return origin_; }
  std::int64_t stride() const noexcept { return stride_; }

  /// dB over [jh, (j+1)h], component c.
  double increment(std::int64_t j, std::size_t c) const {
    if (j < lo_ || j >= hi_) fail(ErrorKind::range, "Wiener increment outside the sampled range");
    return raw_increment(j, c);
  }

  /// Increments for nodes j0, ..., j0+count-1, node-major (count x m).
  void increments(std::int64_t j0, std::size_t count, std::span<double> out) const {
    if (count == 0) return;
    if (j0 < lo_ || j0 + static_cast<std::int64_t>(count) > hi_)
      fail(ErrorKind::range, "Wiener increments requested outside the sampled range [" + std::to_string(t_min()) +
                                 ", " + std::to_string(t_max()) + "]");
    for (std::size_t c = 0; c < m_; ++c) {
      std::int64_t cached = std::numeric_limits<std::int64_t>::min();
      double z0 = 0.0, z1 = 0.0;
      for (std::size_t k = 0; k < count; ++k) {
        const std::int64_t base = (origin_ + j0 + static_cast<std::int64_t>(k)) * stride_;
        double acc = 0.0;
        for (std::int64_t q = 0; q < stride_; ++q) {
          const std::int64_t idx = base + q;
          if ((idx >> 1) != cached) {
            cached = idx >> 1;
            rng::normal_pair(rng::key(seed_, cached, static_cast<std::uint32_t>(c)), z0, z1);
          }
          acc += (idx & 1) ? z1 : z0;
        }
        out[k * m_ + c] = fine_scale_ * acc;
      }
    }
  }

  /// B(t) for grid t in [t_min, t_max]; B(0) = 0.
  Eigen::VectorXd value(double t) const {
    const std::int64_t j = grid_index(t, h_, "Wiener query time");
    if (j < lo_ || j > hi_) fail(ErrorKind::range, "Wiener query time outside the sampled range");
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m_));
    for (std::size_t c = 0; c < m_; ++c) {
      double acc = 0.0;
      if (j > 0)
        for (std::int64_t i = 0; i < j; ++i) acc += raw_increment(i, c);
      else
        for (std::int64_t i = -1; i >= j; --i) acc -= raw_increment(i, c);
      b(static_cast<Eigen::Index>(c)) = acc;
    }
    return b;
  }

 private:
  friend WienerPath shift(const WienerPath&, double);
  friend WienerPath coarsen(const WienerPath&, std::int64_t);

  double raw_increment(std::int64_t j, std::size_t c) const {
    const std::int64_t base = (origin_ + j) * stride_;
    double acc = 0.0;
    for (std::int64_t q = 0; q < stride_; ++q) acc += rng::normal(seed_, base + q, static_cast<std::uint32_t>(c));
    return fine_scale_ * acc;
  }

  std::uint64_t seed_;
  double h_;
  std::int64_t lo_, hi_;
  std::size_t m_;
  std::int64_t origin_;
  std::int64_t stride_;
  double fine_scale_;
};

/// Fresh path on [t_min, t_max] (t_min <= 0 <= t_max, both grid-aligned).
inline WienerPath sample_path(std::uint64_t seed, double h, double t_min, double t_max, std::size_t m) {
  if (!(h > 0.0)) fail(ErrorKind::precondition, "step h must be positive");
  if (m == 0) fail(ErrorKind::shape, "path dimension must be positive");
  if (!(t_min <= 0.0 && 0.0 <= t_max) || !(t_min < t_max))
    fail(ErrorKind::range, "path range must be nonempty and contain 0");
  return WienerPath(seed, h, grid_index(t_min, h, "t_min"), grid_index(t_max, h, "t_max"), m);
}

/// theta_t: B(s, theta_t w) = B(t+s) - B(t). A view; no resampling.
inline WienerPath shift(const WienerPath& p, double t) {
  const std::int64_t k = grid_index(t, p.h_, "shift");
  WienerPath out = p;
  out.origin_ += k;
  out.lo_ -= k;
  out.hi_ -= k;
  return out;
}

/// The same path seen on a grid `factor` times coarser.
inline WienerPath coarsen(const WienerPath& p, std::int64_t factor) {
  if (factor < 1) fail(ErrorKind::precondition, "coarsening factor must be >= 1");
  if (p.origin_ % factor || p.lo_ % factor || p.hi_ % factor)
    fail(ErrorKind::alignment, "path range is not aligned with the coarse grid");
  return WienerPath(p.seed_, p.h_ * static_cast<double>(factor), p.lo_ / factor, p.hi_ / factor, p.m_,
                    p.origin_ / factor, p.stride_ * factor);
}

}  // namespace sfde
