#pragma once

#include <Eigen/Core>

#include <array>
#include <string>

#include "bmcnn/errors.hpp"

namespace bmcnn::nn {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class Mode { Train, Infer };

/// Dense NCHW array.
template <typename Scalar>
class Tensor {
 public:
  using Shape = std::array<int, 4>;
  using SampleMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstSampleMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;
  Tensor(int batch, int channels, int height, int width)
      : shape_{batch, channels, height, width}, data_(Vector<Scalar>::Zero(Eigen::Index{batch} * channels * height * width)) {}

  int batch() const { return shape_[0]; }
  int channels() const { return shape_[1]; }
  int height() const { return shape_[2]; }
  int width() const { return shape_[3]; }
  Eigen::Index plane_size() const { return Eigen::Index{height()} * width(); }
  Eigen::Index size() const { return data_.size(); }
  const Shape& shape() const { return shape_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  Scalar& operator()(int n, int c, int y, int x) { return data_(index(n, c, y, x)); }
  Scalar operator()(int n, int c, int y, int x) const { return data_(index(n, c, y, x)); }

  Vector<Scalar>& values() { return data_; }
  const Vector<Scalar>& values() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  /// Sample n viewed as a (channels x height*width) matrix.
  SampleMap sample(int n) { return SampleMap(data_.data() + n * sample_size(), channels(), plane_size()); }
  ConstSampleMap sample(int n) const {
    return ConstSampleMap(data_.data() + n * sample_size(), channels(), plane_size());
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(batch(), channels(), height(), width());
    out.values() = data_.template cast<Other>();
    return out;
  }

 private:
  Eigen::Index sample_size() const { return Eigen::Index{channels()} * plane_size(); }
  Eigen::Index index(int n, int c, int y, int x) const {
    return ((Eigen::Index{n} * channels() + c) * height() + y) * width() + x;
  }

  Shape shape_{0, 0, 0, 0};
  Vector<Scalar> data_;
};

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* where) {
  if (!a.same_shape(b)) throw DimensionError(std::string(where) + ": tensor shapes differ");
}

/// A learnable array with its gradient and Adam moments.
template <typename Scalar>
struct Parameter {
  RowMatrix<Scalar> value;
  RowMatrix<Scalar> grad;
  RowMatrix<Scalar> m;
  RowMatrix<Scalar> v;
  bool decays = false;  ///< subject to the weight-decay regularizer

  Parameter() = default;
  Parameter(Eigen::Index rows, Eigen::Index cols, Scalar fill, bool decay)
      : value(RowMatrix<Scalar>::Constant(rows, cols, fill)),
        grad(RowMatrix<Scalar>::Zero(rows, cols)),
        m(RowMatrix<Scalar>::Zero(rows, cols)),
        v(RowMatrix<Scalar>::Zero(rows, cols)),
        decays(decay) {}

  void zero_grad() { grad.setZero(); }
};

}  // namespace bmcnn::nn
