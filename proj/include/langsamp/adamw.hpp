#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "langsamp/types.hpp"

namespace langsamp {

template <typename Scalar>
struct AdamWOptions {
  Scalar lr = Scalar(5e-5);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-6);
  Scalar weight_decay = Scalar(0.01);

  void validate() const {
    if (!(lr > Scalar(0))) throw ValueError("adamw: lr must be positive");
    if (!(eps > Scalar(0))) throw ValueError("adamw: eps must be positive");
    if (!(beta1 > Scalar(0) && beta1 < Scalar(1)) ||
        !(beta2 > Scalar(0) && beta2 < Scalar(1)))
      throw ValueError("adamw: beta1 and beta2 must lie in (0, 1)");
    if (weight_decay < Scalar(0)) throw ValueError("adamw: weight_decay must be nonnegative");
  }
};

// Optimizer state: first/second moment estimates aligned with the parameter
// list plus the global step count used for bias correction.
template <typename Scalar>
struct AdamWState {
  long step_count = 0;
  std::vector<Mat<Scalar>> m;
  std::vector<Mat<Scalar>> v;
  AdamWOptions<Scalar> hyper;

  static AdamWState zeros_like(std::span<const Mat<Scalar>* const> params,
                               AdamWOptions<Scalar> options) {
    options.validate();
    AdamWState state;
    state.hyper = options;
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const Mat<Scalar>* p : params) {
      state.m.push_back(Mat<Scalar>::Zero(p->rows(), p->cols()));
      state.v.push_back(Mat<Scalar>::Zero(p->rows(), p->cols()));
    }
    return state;
  }
};

// One decoupled-weight-decay Adam update with bias correction:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr (mhat / (sqrt(vhat) + eps) + wd p)
// Pure function of (params, grads, state); repeated calls from identical
// inputs are bit-identical. Tensors flagged frozen are skipped entirely.
template <typename Scalar>
void adamw_step(std::span<Mat<Scalar>* const> params,
                std::span<const Mat<Scalar>* const> grads, AdamWState<Scalar>& state,
                std::span<const std::uint8_t> frozen = {}) {
  state.hyper.validate();
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size())
    throw ShapeError("adamw_step: params, grads and state must have equal length");
  if (!frozen.empty() && frozen.size() != params.size())
    throw ShapeError("adamw_step: frozen mask length mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols() ||
        params[i]->rows() != state.m[i].rows() || params[i]->cols() != state.m[i].cols())
      throw ShapeError("adamw_step: tensor shape mismatch at index " + std::to_string(i));
  }

  state.step_count += 1;
  const Scalar b1 = state.hyper.beta1;
  const Scalar b2 = state.hyper.beta2;
  const Scalar bc1 = Scalar(1) - std::pow(b1, Scalar(state.step_count));
  const Scalar bc2 = Scalar(1) - std::pow(b2, Scalar(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!frozen.empty() && frozen[i]) continue;
    auto p = params[i]->array();
    const auto g = grads[i]->array();
    auto m = state.m[i].array();
    auto v = state.v[i].array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    const auto mhat = m / bc1;
    const auto vhat = v / bc2;
    p -= state.hyper.lr * (mhat / (vhat.sqrt() + state.hyper.eps) +
                           state.hyper.weight_decay * p);
  }
}

}  // namespace langsamp
