#pragma once

#include <optional>

#include <Eigen/Dense>

#include "sfde/error.hpp"
#include "sfde/expr.hpp"
#include "sfde/measure.hpp"

namespace sfde {

/// dx(t) = [L(x_t) + f(x_t)] dt + Sigma dB(t).
struct SystemSpec {
  DelayMeasure measure;
  Eigen::MatrixXd sigma;  ///< n x m
  std::optional<NonlinearitySpec> nonlinearity;

  SystemSpec(DelayMeasure m, Eigen::MatrixXd s, std::optional<NonlinearitySpec> f = std::nullopt)
      : measure(std::move(m)), sigma(std::move(s)), nonlinearity(std::move(f)) {
    if (sigma.rows() != static_cast<Eigen::Index>(measure.dim()) || sigma.cols() < 1)
      fail(ErrorKind::shape, "noise matrix must be n x m with n the state dimension");
    if (!sigma.allFinite()) fail(ErrorKind::shape, "noise matrix has non-finite entries");
    if (nonlinearity && nonlinearity->exprs.size() != measure.dim())
      fail(ErrorKind::shape, "nonlinearity dimension does not match the state dimension");
  }

  std::size_t dim() const noexcept { return measure.dim(); }
  std::size_t noise_dim() const noexcept { return static_cast<std::size_t>(sigma.cols()); }
  double tau() const noexcept { return measure.tau(); }
  bool affine() const noexcept { return !nonlinearity.has_value(); }
  double lipschitz() const noexcept { return nonlinearity ? nonlinearity->lipschitz : 0.0; }
};

}  // namespace sfde
