#include "bmcnn/image.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "bmcnn/errors.hpp"
#include "bmcnn/rng.hpp"

namespace bmcnn {

GrayImage::GrayImage(int height, int width, double fill) {
  if (height < 1 || width < 1) {
    throw DimensionError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  pixels_ = ImageArray::Constant(height, width, fill);
}

GrayImage::GrayImage(ImageArray pixels) : pixels_(std::move(pixels)) {
  if (pixels_.rows() < 1 || pixels_.cols() < 1) throw DimensionError("image dimensions must be positive");
}

namespace {

// Header tokenizer shared by the netpbm-style formats. '#' starts a comment.
class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::string token(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && bytes_[pos_] != '#') ++pos_;
    if (start == pos_) throw FormatError(std::string("missing ") + field + " in header");
    return {reinterpret_cast<const char*>(bytes_.data()) + start, pos_ - start};
  }

  long integer(const char* field) {
    const std::string text = token(field);
    long value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw FormatError(std::string("invalid ") + field + " '" + text + "'");
    }
    return value;
  }

  // Exactly one whitespace byte separates the header from a binary raster.
  void end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw FormatError("truncated payload: no raster data");
    ++pos_;
  }

  std::size_t position() const { return pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

int positive_dimension(long value, const char* field) {
  if (value < 1 || value > (1L << 20)) throw FormatError(std::string("invalid ") + field + " " + std::to_string(value));
  return static_cast<int>(value);
}

double round_clamp(double v) { return std::clamp(std::round(v), 0.0, 255.0); }

}  // namespace

GrayImage read_pgm(std::span<const std::uint8_t> bytes) {
  HeaderReader header(bytes);
  const std::string magic = header.token("magic");
  if (magic != "P5" && magic != "P2") throw FormatError("unsupported magic '" + magic + "', expected P5 or P2");
  const int width = positive_dimension(header.integer("width"), "width");
  const int height = positive_dimension(header.integer("height"), "height");
  const long maxval = header.integer("maxval");
  if (maxval < 1 || maxval > 255) throw FormatError("unsupported maxval " + std::to_string(maxval) + " (must be 1..255)");

  GrayImage image(height, width);
  double* out = image.pixels().data();
  const std::size_t count = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  if (magic == "P5") {
    header.end_of_header();
    const std::size_t start = header.position();
    if (bytes.size() - start < count) {
      throw FormatError("truncated payload: expected " + std::to_string(count) + " bytes, found " +
                        std::to_string(bytes.size() - start));
    }
    for (std::size_t i = 0; i < count; ++i) out[i] = bytes[start + i];
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      long v = 0;
      try {
        v = header.integer("pixel value");
      } catch (const FormatError&) {
        throw FormatError("truncated payload: expected " + std::to_string(count) + " values, found " + std::to_string(i));
      }
      if (v < 0 || v > maxval) throw FormatError("pixel value " + std::to_string(v) + " exceeds maxval");
      out[i] = static_cast<double>(v);
    }
  }
  return image;
}

std::vector<std::uint8_t> write_pgm(const GrayImage& image) {
  const std::string header = "P5\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<std::size_t>(image.size()));
  for (double v : image.data()) out.push_back(static_cast<std::uint8_t>(round_clamp(v)));
  return out;
}

GrayImage read_pfm(std::span<const std::uint8_t> bytes) {
  HeaderReader header(bytes);
  const std::string magic = header.token("magic");
  if (magic != "Pf") throw FormatError("unsupported magic '" + magic + "', expected Pf");
  const int width = positive_dimension(header.integer("width"), "width");
  const int height = positive_dimension(header.integer("height"), "height");
  const std::string scale_text = header.token("scale");
  double scale = 0.0;
  try {
    scale = std::stod(scale_text);
  } catch (const std::exception&) {
    throw FormatError("invalid scale '" + scale_text + "'");
  }
  if (scale >= 0.0) throw FormatError("unsupported scale " + scale_text + ": only little-endian (negative) is supported");
  header.end_of_header();

  const std::size_t start = header.position();
  const std::size_t count = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  if (bytes.size() - start < count * 4) throw FormatError("truncated payload: expected " + std::to_string(count * 4) + " bytes");

  GrayImage image(height, width);
  for (int r = 0; r < height; ++r) {
    const std::size_t src_row = static_cast<std::size_t>(height - 1 - r);
    for (int c = 0; c < width; ++c) {
      std::uint32_t bits = 0;
      const std::size_t at = start + 4 * (src_row * static_cast<std::size_t>(width) + static_cast<std::size_t>(c));
      for (int b = 3; b >= 0; --b) bits = (bits << 8) | bytes[at + static_cast<std::size_t>(b)];
      image(r, c) = std::bit_cast<float>(bits);
    }
  }
  return image;
}

std::vector<std::uint8_t> write_pfm(const GrayImage& image) {
  const std::string header = "Pf\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n-1.0\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (int r = image.height() - 1; r >= 0; --r) {
    for (int c = 0; c < image.width(); ++c) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(image(r, c)));
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

GrayImage load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == 'f') return read_pfm(bytes);
    return read_pgm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_image(const std::filesystem::path& path, const GrayImage& image) {
  if (path.extension() == ".pfm") {
    write_file(path, write_pfm(image));
  } else {
    write_file(path, write_pgm(image));
  }
}

GrayImage add_awgn(const GrayImage& image, const NoiseSpec& noise) {
  if (noise.sigma < 0.0) throw ConfigError("noise sigma must be non-negative");
  GrayImage out = image;
  if (noise.sigma == 0.0) return out;
  const CounterRng rng(noise.seed);
  double* px = out.pixels().data();
  for (Eigen::Index i = 0; i < out.size(); ++i) px[i] += noise.sigma * rng.gaussian(static_cast<std::uint64_t>(i));
  return out;
}

double psnr(const GrayImage& a, const GrayImage& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError("psnr: image sizes differ (" + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                         " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()) + ")");
  }
  const double mse =
      (a.pixels().cwiseMax(0.0).cwiseMin(255.0) - b.pixels().cwiseMax(0.0).cwiseMin(255.0)).square().mean();
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

GrayImage quantize(const GrayImage& image) {
  return GrayImage(image.pixels().unaryExpr([](double v) { return round_clamp(v); }).eval());
}

GrayImage crop(const GrayImage& image, Coord origin, int height, int width) {
  if (origin.row < 0 || origin.col < 0 || height < 1 || width < 1 || origin.row + height > image.height() ||
      origin.col + width > image.width()) {
    throw BoundsError("crop window exceeds image bounds");
  }
  return GrayImage(image.pixels().block(origin.row, origin.col, height, width).eval());
}

GrayImage augment(const GrayImage& image, int variant) {
  if (variant < 0 || variant >= 8) throw ConfigError("augmentation variant must be in [0, 8)");
  ImageArray px = image.pixels();
  if (variant >= 4) px = px.rowwise().reverse().eval();
  for (int q = 0; q < variant % 4; ++q) {
    // Counter-clockwise quarter turn: transpose, then flip vertically.
    px = px.transpose().colwise().reverse().eval();
  }
  return GrayImage(std::move(px));
}

}  // namespace bmcnn
