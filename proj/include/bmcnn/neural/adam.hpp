#pragma once

#include <cmath>
#include <span>

#include "bmcnn/neural/tensor.hpp"

namespace bmcnn::nn {

enum class Regularizer { L2, L1 };

struct AdamConfig {
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lambda = 0.0002;  ///< weight-decay coefficient
  Regularizer regularizer = Regularizer::L2;
  long t = 0;  ///< steps taken so far
};

/// Gradient of the regularizer r(W): W for r = 0.5 * ||W||^2, sign(W) for r = ||W||_1.
template <typename Scalar>
RowMatrix<Scalar> regularizer_grad(const RowMatrix<Scalar>& w, Regularizer reg) {
  if (reg == Regularizer::L2) return w;
  return w.array().sign().matrix();
}

/// Increments cfg.t, then for every parameter:
///   g = grad + lambda * r'(W)   (decaying parameters only)
///   m = beta1 m + (1 - beta1) g
///   v = beta2 v + (1 - beta2) g^2
///   W -= alpha * sqrt(1 - beta2^t) / (1 - beta1^t) * m / (sqrt(v) + epsilon)
template <typename Scalar>
void adam_step(std::span<Parameter<Scalar>* const> params, AdamConfig& cfg) {
  ++cfg.t;
  const double t = static_cast<double>(cfg.t);
  const auto step = static_cast<Scalar>(cfg.alpha * std::sqrt(1.0 - std::pow(cfg.beta2, t)) /
                                        (1.0 - std::pow(cfg.beta1, t)));
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto eps = static_cast<Scalar>(cfg.epsilon);
  for (Parameter<Scalar>* p : params) {
    RowMatrix<Scalar> g = p->grad;
    if (p->decays && cfg.lambda != 0.0) g += static_cast<Scalar>(cfg.lambda) * regularizer_grad(p->value, cfg.regularizer);
    p->m = b1 * p->m + (Scalar(1) - b1) * g;
    p->v = b2 * p->v + (Scalar(1) - b2) * g.cwiseProduct(g);
    p->value.array() -= step * p->m.array() / (p->v.array().sqrt() + eps);
  }
}

}  // namespace bmcnn::nn
