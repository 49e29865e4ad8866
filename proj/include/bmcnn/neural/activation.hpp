#pragma once

#include "bmcnn/neural/tensor.hpp"

namespace bmcnn::nn {

/// max(0, x).
template <typename Scalar>
Tensor<Scalar> relu_forward(const Tensor<Scalar>& input) {
  Tensor<Scalar> out = input;
  out.values() = input.values().cwiseMax(Scalar(0));
  return out;
}

/// Passes grad where the forward input was strictly positive; the subgradient at 0 is 0.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_out) {
  require_same_shape(input, grad_out, "relu_backward");
  Tensor<Scalar> out = grad_out;
  out.values() = (input.values().array() > Scalar(0)).select(grad_out.values(), Scalar(0));
  return out;
}

}  // namespace bmcnn::nn
