#pragma once

#include <cmath>
#include <cstdint>

#include "bmcnn/errors.hpp"
#include "bmcnn/neural/tensor.hpp"
#include "bmcnn/rng.hpp"

namespace bmcnn::nn {

/// i.i.d. N(0, 1 / n_in) entries; entry i (row-major) is Gaussian draw i of CounterRng(seed).
template <typename Scalar>
RowMatrix<Scalar> xavier_init(Eigen::Index rows, Eigen::Index cols, int n_in, std::uint64_t seed) {
  if (n_in < 1) throw ConfigError("xavier_init: fan-in must be at least 1");
  const CounterRng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_in));
  RowMatrix<Scalar> w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w.data()[i] = static_cast<Scalar>(scale * rng.gaussian(static_cast<std::uint64_t>(i)));
  }
  return w;
}

}  // namespace bmcnn::nn
