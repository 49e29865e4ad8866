#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "bmcnn/neural/tensor.hpp"
#include "bmcnn/parallel.hpp"

namespace bmcnn::nn {

/// 3x3 convolution, weights (out, in * 9) with column index c * 9 + dy * 3 + dx.
template <typename Scalar>
struct ConvParams {
  int in_channels = 0;
  int out_channels = 0;
  Parameter<Scalar> weights;
  Parameter<Scalar> bias;  ///< (out, 1)

  ConvParams() = default;
  ConvParams(int in, int out)
      : in_channels(in), out_channels(out), weights(out, Eigen::Index{in} * 9, Scalar(0), true), bias(out, 1, Scalar(0), false) {}

  void zero_grad() {
    weights.zero_grad();
    bias.zero_grad();
  }
};

/// Unfolds one sample (channels planes of h x w) into a (channels * 9, h * w) matrix of
/// zero-padded 3x3 neighbourhoods.
template <typename Scalar>
void im2col(const Scalar* planes, int channels, int h, int w, RowMatrix<Scalar>& cols) {
  cols.setZero(Eigen::Index{channels} * 9, Eigen::Index{h} * w);
  for (int c = 0; c < channels; ++c) {
    const Scalar* plane = planes + Eigen::Index{c} * h * w;
    for (int dy = 0; dy < 3; ++dy) {
      for (int dx = 0; dx < 3; ++dx) {
        Scalar* row = cols.row(c * 9 + dy * 3 + dx).data();
        const int y_lo = std::max(0, 1 - dy), y_hi = std::min(h, h + 1 - dy);
        const int x_lo = std::max(0, 1 - dx), x_hi = std::min(w, w + 1 - dx);
        for (int y = y_lo; y < y_hi; ++y) {
          const Scalar* src = plane + (y + dy - 1) * w + (dx - 1);
          Scalar* dst = row + y * w;
          for (int x = x_lo; x < x_hi; ++x) dst[x] = src[x];
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters-and-adds columns back onto the planes.
template <typename Scalar>
void col2im_add(const RowMatrix<Scalar>& cols, int channels, int h, int w, Scalar* planes) {
  for (int c = 0; c < channels; ++c) {
    Scalar* plane = planes + Eigen::Index{c} * h * w;
    for (int dy = 0; dy < 3; ++dy) {
      for (int dx = 0; dx < 3; ++dx) {
        const Scalar* row = cols.row(c * 9 + dy * 3 + dx).data();
        const int y_lo = std::max(0, 1 - dy), y_hi = std::min(h, h + 1 - dy);
        const int x_lo = std::max(0, 1 - dx), x_hi = std::min(w, w + 1 - dx);
        for (int y = y_lo; y < y_hi; ++y) {
          Scalar* dst = plane + (y + dy - 1) * w + (dx - 1);
          const Scalar* src = row + y * w;
          for (int x = x_lo; x < x_hi; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

/// Same-size output (zero padding 1):
/// out[b, o, y, x] = bias[o] + sum_{c, dy, dx} w[o, c, dy, dx] * in[b, c, y + dy - 1, x + dx - 1].
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const ConvParams<Scalar>& params) {
  if (input.channels() != params.in_channels) {
    throw DimensionError("conv2d: input has " + std::to_string(input.channels()) + " channels, layer expects " +
                         std::to_string(params.in_channels));
  }
  Tensor<Scalar> out(input.batch(), params.out_channels, input.height(), input.width());
  parallel_for(static_cast<std::size_t>(input.batch()), [&](std::size_t n) {
    const int b = static_cast<int>(n);
    RowMatrix<Scalar> cols;
    im2col(input.sample(b).data(), input.channels(), input.height(), input.width(), cols);
    auto dst = out.sample(b);
    dst.noalias() = params.weights.value * cols;
    dst.colwise() += params.bias.value.col(0);
  });
  return out;
}

/// Returns the gradient with respect to the input and adds the parameter gradients into
/// params.weights.grad / params.bias.grad. Per-sample contributions are summed in batch
/// order, independent of the worker count.
template <typename Scalar>
Tensor<Scalar> conv2d_backward(const Tensor<Scalar>& input, ConvParams<Scalar>& params, const Tensor<Scalar>& grad_out) {
  if (input.channels() != params.in_channels || grad_out.channels() != params.out_channels ||
      grad_out.batch() != input.batch() || grad_out.height() != input.height() || grad_out.width() != input.width()) {
    throw DimensionError("conv2d_backward: shapes inconsistent with forward");
  }
  const int batch = input.batch();
  Tensor<Scalar> grad_in(batch, input.channels(), input.height(), input.width());
  std::vector<RowMatrix<Scalar>> grad_w(static_cast<std::size_t>(batch));
  std::vector<RowMatrix<Scalar>> grad_b(static_cast<std::size_t>(batch));

  parallel_for(static_cast<std::size_t>(batch), [&](std::size_t n) {
    const int b = static_cast<int>(n);
    RowMatrix<Scalar> cols;
    im2col(input.sample(b).data(), input.channels(), input.height(), input.width(), cols);
    const auto g = grad_out.sample(b);
    grad_w[n].noalias() = g * cols.transpose();
    grad_b[n] = g.rowwise().sum();
    RowMatrix<Scalar> grad_cols = params.weights.value.transpose() * g;
    col2im_add(grad_cols, input.channels(), input.height(), input.width(), grad_in.sample(b).data());
  });

  for (std::size_t n = 0; n < grad_w.size(); ++n) {
    params.weights.grad += grad_w[n];
    params.bias.grad += grad_b[n];
  }
  return grad_in;
}

}  // namespace bmcnn::nn
