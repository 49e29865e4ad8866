#pragma once

#include <Eigen/Core>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

namespace bmcnn {

using ImageArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Pixel coordinate, also used for patch origins (top-left corner).
struct Coord {
  int row = 0;
  int col = 0;
  friend auto operator<=>(const Coord&, const Coord&) = default;
};

/// Grayscale intensity field on the 0-255 scale. Values are stored unclamped.
class GrayImage {
 public:
  GrayImage(int height, int width, double fill = 0.0);
  explicit GrayImage(ImageArray pixels);

  int height() const { return static_cast<int>(pixels_.rows()); }
  int width() const { return static_cast<int>(pixels_.cols()); }
  Eigen::Index size() const { return pixels_.size(); }

  double operator()(int row, int col) const { return pixels_(row, col); }
  double& operator()(int row, int col) { return pixels_(row, col); }

  const ImageArray& pixels() const { return pixels_; }
  ImageArray& pixels() { return pixels_; }

  std::span<const double> data() const { return {pixels_.data(), static_cast<std::size_t>(pixels_.size())}; }

  friend bool operator==(const GrayImage& a, const GrayImage& b) {
    return a.height() == b.height() && a.width() == b.width() && (a.pixels_ == b.pixels_).all();
  }

 private:
  ImageArray pixels_;
};

struct NoiseSpec {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Decodes binary (P5) or ASCII (P2) PGM with maxval <= 255.
GrayImage read_pgm(std::span<const std::uint8_t> bytes);

/// Encodes as P5; values rounded half away from zero, clamped to [0, 255].
std::vector<std::uint8_t> write_pgm(const GrayImage& image);

/// Grayscale PFM ("Pf"), little-endian float32, bottom-to-top rows.
GrayImage read_pfm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_pfm(const GrayImage& image);

/// Reads a PGM or PFM file, dispatching on the magic number.
GrayImage load_image(const std::filesystem::path& path);
/// Writes PGM unless the extension is ".pfm".
void save_image(const std::filesystem::path& path, const GrayImage& image);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// image + i.i.d. N(0, sigma^2), sample i drawn from CounterRng(seed) at raster index i.
/// The result is not clamped.
GrayImage add_awgn(const GrayImage& image, const NoiseSpec& noise);

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

/// Peak signal-to-noise ratio in dB against a 255 peak; both inputs clamped to [0, 255].
/// Identical inputs give kInfinitePsnr.
double psnr(const GrayImage& a, const GrayImage& b);

/// Rounds half away from zero and clamps to [0, 255].
GrayImage quantize(const GrayImage& image);

GrayImage crop(const GrayImage& image, Coord origin, int height, int width);

/// Variant v in [0, 8): rotation by (v % 4) quarter turns counter-clockwise, mirrored
/// left-right first when v >= 4. Variant 0 is the identity.
GrayImage augment(const GrayImage& image, int variant);

}  // namespace bmcnn
