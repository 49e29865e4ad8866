#pragma once

#include <cmath>
#include <string>

#include "bmcnn/neural/tensor.hpp"

namespace bmcnn::nn {

template <typename Scalar>
struct BatchNormParams {
  int channels = 0;
  Parameter<Scalar> gamma;  ///< (channels, 1)
  Parameter<Scalar> beta;   ///< (channels, 1)
  Vector<Scalar> running_mean;
  Vector<Scalar> running_var;
  double momentum = 0.9;  ///< running = momentum * running + (1 - momentum) * batch
  double epsilon = 1e-5;

  BatchNormParams() = default;
  explicit BatchNormParams(int c)
      : channels(c),
        gamma(c, 1, Scalar(1), false),
        beta(c, 1, Scalar(0), false),
        running_mean(Vector<Scalar>::Zero(c)),
        running_var(Vector<Scalar>::Ones(c)) {}

  void zero_grad() {
    gamma.zero_grad();
    beta.zero_grad();
  }
};

/// Forward state needed by batchnorm_backward.
template <typename Scalar>
struct BatchNormCache {
  Mode mode = Mode::Infer;
  Tensor<Scalar> normalized;  ///< x_hat
  Vector<Scalar> inv_std;
};

namespace detail {

template <typename Scalar>
void check_channels(const Tensor<Scalar>& t, const BatchNormParams<Scalar>& p) {
  if (t.channels() != p.channels) {
    throw DimensionError("batchnorm: tensor has " + std::to_string(t.channels()) + " channels, layer expects " +
                         std::to_string(p.channels));
  }
}

template <typename Scalar>
Tensor<Scalar> normalize(const Tensor<Scalar>& input, const BatchNormParams<Scalar>& params, const Vector<Scalar>& mean,
                         const Vector<Scalar>& inv_std, Tensor<Scalar>* normalized_out) {
  Tensor<Scalar> normalized(input.batch(), input.channels(), input.height(), input.width());
  Tensor<Scalar> out(input.batch(), input.channels(), input.height(), input.width());
  for (int b = 0; b < input.batch(); ++b) {
    auto x_hat = normalized.sample(b);
    x_hat = ((input.sample(b).colwise() - mean).array().colwise() * inv_std.array()).matrix();
    out.sample(b) = ((x_hat.array().colwise() * params.gamma.value.col(0).array()).colwise() +
                     params.beta.value.col(0).array())
                        .matrix();
  }
  if (normalized_out) *normalized_out = std::move(normalized);
  return out;
}

}  // namespace detail

/// Train mode normalizes with the biased per-channel batch statistics over
/// (batch, height, width) and folds them into the running statistics. Infer mode uses
/// the running statistics only.
template <typename Scalar>
Tensor<Scalar> batchnorm_forward(const Tensor<Scalar>& input, BatchNormParams<Scalar>& params, Mode mode,
                                 BatchNormCache<Scalar>* cache = nullptr) {
  detail::check_channels(input, params);
  const int channels = input.channels();
  const Eigen::Index count = Eigen::Index{input.batch()} * input.plane_size();
  if (mode == Mode::Train && count < 2) {
    throw DimensionError("batchnorm: training statistics need at least 2 values per channel, got " +
                         std::to_string(count));
  }

  Vector<Scalar> mean(channels), inv_std(channels);
  if (mode == Mode::Train) {
    for (int c = 0; c < channels; ++c) {
      double sum = 0.0;
      for (int b = 0; b < input.batch(); ++b) sum += input.sample(b).row(c).template cast<double>().sum();
      const double mu = sum / static_cast<double>(count);
      double sq = 0.0;
      for (int b = 0; b < input.batch(); ++b) {
        sq += (input.sample(b).row(c).template cast<double>().array() - mu).square().sum();
      }
      const double var = sq / static_cast<double>(count);
      mean(c) = static_cast<Scalar>(mu);
      inv_std(c) = static_cast<Scalar>(1.0 / std::sqrt(var + params.epsilon));
      params.running_mean(c) =
          static_cast<Scalar>(params.momentum * params.running_mean(c) + (1.0 - params.momentum) * mu);
      params.running_var(c) =
          static_cast<Scalar>(params.momentum * params.running_var(c) + (1.0 - params.momentum) * var);
    }
  } else {
    mean = params.running_mean;
    for (int c = 0; c < channels; ++c) {
      inv_std(c) = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(params.running_var(c)) + params.epsilon));
    }
  }

  Tensor<Scalar> normalized;
  Tensor<Scalar> out = detail::normalize(input, params, mean, inv_std, &normalized);
  if (cache) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

/// Inference-mode normalization; leaves the parameters untouched.
template <typename Scalar>
Tensor<Scalar> batchnorm_infer(const Tensor<Scalar>& input, const BatchNormParams<Scalar>& params) {
  detail::check_channels(input, params);
  Vector<Scalar> inv_std(params.channels);
  for (int c = 0; c < params.channels; ++c) {
    inv_std(c) = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(params.running_var(c)) + params.epsilon));
  }
  return detail::normalize(input, params, params.running_mean, inv_std, static_cast<Tensor<Scalar>*>(nullptr));
}

/// Gradient with respect to the input, including the batch-statistic coupling in train
/// mode; gamma/beta gradients are accumulated into params.
template <typename Scalar>
Tensor<Scalar> batchnorm_backward(const Tensor<Scalar>& grad_out, BatchNormParams<Scalar>& params,
                                  const BatchNormCache<Scalar>& cache) {
  detail::check_channels(grad_out, params);
  if (!grad_out.same_shape(cache.normalized)) throw DimensionError("batchnorm_backward: shape mismatch with forward");
  const int channels = grad_out.channels();
  const double count = static_cast<double>(grad_out.batch()) * static_cast<double>(grad_out.plane_size());

  Vector<double> sum_g = Vector<double>::Zero(channels);
  Vector<double> sum_gx = Vector<double>::Zero(channels);
  for (int b = 0; b < grad_out.batch(); ++b) {
    const auto g = grad_out.sample(b);
    const auto x_hat = cache.normalized.sample(b);
    sum_g += g.template cast<double>().rowwise().sum();
    sum_gx += g.cwiseProduct(x_hat).template cast<double>().rowwise().sum();
  }
  params.beta.grad.col(0) += sum_g.template cast<Scalar>();
  params.gamma.grad.col(0) += sum_gx.template cast<Scalar>();

  Tensor<Scalar> grad_in(grad_out.batch(), channels, grad_out.height(), grad_out.width());
  const Vector<Scalar> scale = params.gamma.value.col(0).cwiseProduct(cache.inv_std);
  for (int b = 0; b < grad_out.batch(); ++b) {
    const auto g = grad_out.sample(b);
    auto gi = grad_in.sample(b);
    if (cache.mode == Mode::Infer) {
      gi = g.array().colwise() * scale.array();
      continue;
    }
    const auto x_hat = cache.normalized.sample(b);
    // dx = gamma * inv_std * (g - mean(g) - x_hat * mean(g * x_hat))
    const Vector<Scalar> mean_g = (sum_g / count).template cast<Scalar>();
    const Vector<Scalar> mean_gx = (sum_gx / count).template cast<Scalar>();
    gi = (((g.colwise() - mean_g).array() - x_hat.array().colwise() * mean_gx.array()).colwise() * scale.array())
             .matrix();
  }
  return grad_in;
}

}  // namespace bmcnn::nn
