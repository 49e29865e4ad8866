#pragma once

#include "bmcnn/neural/tensor.hpp"

namespace bmcnn::nn {

template <typename Scalar>
struct LossResult {
  double loss = 0.0;
  Tensor<Scalar> grad;
};

/// Sum of absolute differences per sample, averaged over the batch. The gradient is
/// sign(estimate - target) / batch with sign(0) = 0.
template <typename Scalar>
LossResult<Scalar> l1_loss(const Tensor<Scalar>& estimate, const Tensor<Scalar>& target) {
  require_same_shape(estimate, target, "l1_loss");
  const double batch = static_cast<double>(estimate.batch());
  LossResult<Scalar> result{0.0, estimate};
  const auto diff = (estimate.values() - target.values()).array();
  result.loss = diff.abs().template cast<double>().sum() / batch;
  result.grad.values() = (diff.sign() / static_cast<Scalar>(batch)).matrix();
  return result;
}

}  // namespace bmcnn::nn
