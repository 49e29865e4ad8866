#include "bmcnn/patching.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "bmcnn/errors.hpp"

namespace bmcnn {

std::vector<int> grid_starts(int extent, int n_patch, int stride) {
  std::vector<int> starts;
  const int last = extent - n_patch;
  // A stride wider than the patch would leave gaps between neighbours.
  const int step = std::min(stride, n_patch);
  for (int s = 0; s <= last; s += step) starts.push_back(s);
  if (starts.back() != last) starts.push_back(last);
  return starts;
}

PatchGrid build_grid(int height, int width, int n_patch, int stride) {
  if (n_patch < 1) throw ConfigError("patch size must be positive");
  if (stride < 1) throw ConfigError("stride must be positive");
  if (n_patch > height || n_patch > width) {
    throw ConfigError("patch size " + std::to_string(n_patch) + " exceeds image " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  PatchGrid grid{n_patch, stride, {}};
  const auto rows = grid_starts(height, n_patch, stride);
  const auto cols = grid_starts(width, n_patch, stride);
  grid.positions.reserve(rows.size() * cols.size());
  for (int r : rows)
    for (int c : cols) grid.positions.push_back({r, c});
  return grid;
}

Patch extract_patch(const GrayImage& image, Coord origin, int n_patch) {
  if (n_patch < 1 || origin.row < 0 || origin.col < 0 || origin.row + n_patch > image.height() ||
      origin.col + n_patch > image.width()) {
    throw BoundsError("patch of size " + std::to_string(n_patch) + " at (" + std::to_string(origin.row) + ", " +
                      std::to_string(origin.col) + ") exceeds image bounds");
  }
  return {origin, image.pixels().block(origin.row, origin.col, n_patch, n_patch)};
}

Eigen::Vector2d patch_center(Coord origin, int n_patch) {
  const double half = (n_patch - 1) / 2.0;
  return {origin.row + half, origin.col + half};
}

double gaussian_weight(const Eigen::Vector2d& center, const Eigen::Vector2d& pixel, double sigma_w) {
  if (!(sigma_w > 0.0)) throw ConfigError("gaussian weight sigma must be positive");
  const double var = sigma_w * sigma_w;
  return std::exp(-(center - pixel).squaredNorm() / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
}

PatchArray gaussian_window(int n_patch, double sigma_w) {
  PatchArray w(n_patch, n_patch);
  const Eigen::Vector2d center = patch_center({0, 0}, n_patch);
  for (int i = 0; i < n_patch; ++i)
    for (int j = 0; j < n_patch; ++j) w(i, j) = gaussian_weight(center, Eigen::Vector2d(i, j), sigma_w);
  return w;
}

AggregationBuffer::AggregationBuffer(int height, int width)
    : weighted_sum_(ImageArray::Zero(height, width)), weight_sum_(ImageArray::Zero(height, width)) {}

void AggregationBuffer::check_bounds(const Patch& patch) const {
  const int n = patch.size();
  if (patch.data.cols() != n || patch.origin.row < 0 || patch.origin.col < 0 ||
      patch.origin.row + n > weighted_sum_.rows() || patch.origin.col + n > weighted_sum_.cols()) {
    throw BoundsError("patch at (" + std::to_string(patch.origin.row) + ", " + std::to_string(patch.origin.col) +
                      ") does not fit the aggregation buffer");
  }
}

void AggregationBuffer::deposit(const Patch& patch, const PatchArray& weight) {
  check_bounds(patch);
  const int n = patch.size();
  if (weight.rows() != n || weight.cols() != n) throw DimensionError("weight window does not match patch size");
  weighted_sum_.block(patch.origin.row, patch.origin.col, n, n) += weight * patch.data;
  weight_sum_.block(patch.origin.row, patch.origin.col, n, n) += weight;
}

void AggregationBuffer::deposit(const Patch& patch, double weight) {
  check_bounds(patch);
  const int n = patch.size();
  weighted_sum_.block(patch.origin.row, patch.origin.col, n, n) += weight * patch.data;
  weight_sum_.block(patch.origin.row, patch.origin.col, n, n) += weight;
}

GrayImage AggregationBuffer::normalize() const {
  for (Eigen::Index r = 0; r < weight_sum_.rows(); ++r)
    for (Eigen::Index c = 0; c < weight_sum_.cols(); ++c)
      if (!(weight_sum_(r, c) > 0.0)) throw CoverageError(static_cast<int>(r), static_cast<int>(c));
  return GrayImage((weighted_sum_ / weight_sum_).eval());
}

GrayImage aggregate(std::span<const Patch> patches, int height, int width, const AggregationMode& mode) {
  AggregationBuffer buffer(height, width);
  if (std::holds_alternative<MeanAggregation>(mode)) {
    for (const Patch& p : patches) buffer.deposit(p, 1.0);
  } else {
    const double sigma_w = std::get<GaussianAggregation>(mode).sigma_w;
    std::map<int, PatchArray> windows;
    for (const Patch& p : patches) {
      auto it = windows.find(p.size());
      if (it == windows.end()) it = windows.emplace(p.size(), gaussian_window(p.size(), sigma_w)).first;
      buffer.deposit(p, it->second);
    }
  }
  return buffer.normalize();
}

}  // namespace bmcnn
