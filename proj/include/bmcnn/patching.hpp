#pragma once

#include <Eigen/Core>

#include <span>
#include <variant>
#include <vector>

#include "bmcnn/image.hpp"

namespace bmcnn {

using PatchArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Square window of an image; `origin` is its top-left corner.
struct Patch {
  Coord origin;
  PatchArray data;

  int size() const { return static_cast<int>(data.rows()); }
};

/// Top-left patch positions covering an image, in raster order.
struct PatchGrid {
  int n_patch = 0;
  int stride = 0;
  std::vector<Coord> positions;
};

/// Start offsets 0, stride, 2*stride, ... along one axis, with extent - n_patch appended
/// when the lattice does not land on it. Strides above n_patch are reduced to n_patch.
std::vector<int> grid_starts(int extent, int n_patch, int stride);

PatchGrid build_grid(int height, int width, int n_patch, int stride);

Patch extract_patch(const GrayImage& image, Coord origin, int n_patch);

/// Geometric center of a patch, (origin + (n_patch - 1) / 2) on both axes.
Eigen::Vector2d patch_center(Coord origin, int n_patch);

/// Isotropic Gaussian density 1/sqrt(2 pi sw^2) exp(-|center - pixel|^2 / (2 sw^2)).
double gaussian_weight(const Eigen::Vector2d& center, const Eigen::Vector2d& pixel, double sigma_w);

/// n x n table of gaussian_weight from the patch center, shared by every patch of a size.
PatchArray gaussian_window(int n_patch, double sigma_w);

struct MeanAggregation {};
struct GaussianAggregation {
  double sigma_w = 5.0;
};
using AggregationMode = std::variant<MeanAggregation, GaussianAggregation>;

/// Per-pixel weighted sums for reassembling overlapping patch estimates.
class AggregationBuffer {
 public:
  AggregationBuffer(int height, int width);

  /// Adds weight(i, j) * patch(i, j) at the patch's location.
  void deposit(const Patch& patch, const PatchArray& weight);
  void deposit(const Patch& patch, double weight);

  /// weighted_sum / weight_sum; throws CoverageError at the first (raster order) pixel
  /// with no weight.
  GrayImage normalize() const;

  const ImageArray& weighted_sum() const { return weighted_sum_; }
  const ImageArray& weight_sum() const { return weight_sum_; }

 private:
  void check_bounds(const Patch& patch) const;

  ImageArray weighted_sum_;
  ImageArray weight_sum_;
};

GrayImage aggregate(std::span<const Patch> patches, int height, int width, const AggregationMode& mode);

}  // namespace bmcnn
