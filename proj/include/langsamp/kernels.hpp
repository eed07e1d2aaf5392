#pragma once

#include <cmath>
#include <span>
#include <string>

#include "langsamp/types.hpp"

namespace langsamp {

template <typename Scalar>
void check_finite(const Mat<Scalar>& x, const char* what) {
  if (!x.allFinite()) throw NumericError(std::string(what) + ": non-finite input");
}

// Row-wise softmax with max subtraction for overflow safety.
template <typename Scalar>
Mat<Scalar> softmax_rows(const Mat<Scalar>& x) {
  if (x.cols() < 1 || x.rows() < 1) throw ShapeError("softmax: input must be non-empty");
  check_finite(x, "softmax");
  Mat<Scalar> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

// Per-row layer normalization with learned scale/shift, population variance.
template <typename Scalar>
Mat<Scalar> layer_norm_rows(const Mat<Scalar>& x, const Mat<Scalar>& gamma,
                            const Mat<Scalar>& beta, Scalar eps) {
  if (x.cols() < 1 || x.rows() < 1) throw ShapeError("layer_norm: input must be non-empty");
  if (gamma.rows() != 1 || beta.rows() != 1 || gamma.cols() != x.cols() ||
      beta.cols() != x.cols())
    throw ShapeError("layer_norm: gamma and beta must be 1 x cols(x)");
  if (!(eps > Scalar(0))) throw ValueError("layer_norm: eps must be positive");
  check_finite(x, "layer_norm");
  Mat<Scalar> out(x.rows(), x.cols());
  const Scalar inv_n = Scalar(1) / Scalar(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).sum() * inv_n;
    const Scalar var = (x.row(r).array() - mean).square().sum() * inv_n;
    const Scalar inv_std = Scalar(1) / std::sqrt(var + eps);
    out.row(r) =
        ((x.row(r).array() - mean) * inv_std) * gamma.row(0).array() + beta.row(0).array();
  }
  return out;
}

// Tanh-approximation GELU and its derivative.
template <typename Scalar>
Scalar gelu_scalar(Scalar x) {
  const Scalar c = Scalar(0.7978845608028654);  // sqrt(2/pi)
  const Scalar a = Scalar(0.044715);
  const Scalar u = c * (x + a * x * x * x);
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(u));
}

template <typename Scalar>
Scalar gelu_grad_scalar(Scalar x) {
  const Scalar c = Scalar(0.7978845608028654);
  const Scalar a = Scalar(0.044715);
  const Scalar u = c * (x + a * x * x * x);
  const Scalar t = std::tanh(u);
  const Scalar du = c * (Scalar(1) + Scalar(3) * a * x * x);
  return Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * x * (Scalar(1) - t * t) * du;
}

template <typename Scalar>
Mat<Scalar> gelu(const Mat<Scalar>& x) {
  check_finite(x, "gelu");
  return x.unaryExpr([](Scalar v) { return gelu_scalar(v); });
}

template <typename Scalar>
Scalar log_sum_exp_row(const Mat<Scalar>& x, Eigen::Index row) {
  const Scalar m = x.row(row).maxCoeff();
  return m + std::log((x.row(row).array() - m).exp().sum());
}

// Negative log-likelihood of one target under a single logits row.
template <typename Scalar>
Scalar cross_entropy(const Mat<Scalar>& logits, int target) {
  if (logits.rows() != 1 || logits.cols() < 1)
    throw ShapeError("cross_entropy: logits must be a single non-empty row");
  if (target < 0 || target >= logits.cols())
    throw ValueError("cross_entropy: target id " + std::to_string(target) + " out of range");
  check_finite(logits, "cross_entropy");
  return log_sum_exp_row(logits, 0) - logits(0, target);
}

// Sum of per-row cross entropies; targets[r] indexes row r of the logits.
template <typename Scalar>
Scalar cross_entropy_sum(const Mat<Scalar>& logits, std::span<const int> targets) {
  if (logits.rows() != static_cast<Eigen::Index>(targets.size()))
    throw ShapeError("cross_entropy_sum: one target per logits row required");
  if (logits.cols() < 1) throw ShapeError("cross_entropy_sum: empty logits");
  check_finite(logits, "cross_entropy_sum");
  Scalar total = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= logits.cols())
      throw ValueError("cross_entropy_sum: target id " + std::to_string(t) + " out of range");
    total += log_sum_exp_row(logits, r) - logits(r, t);
  }
  return total;
}

}  // namespace langsamp
