#include "bmcnn/model.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>

#include "bmcnn/errors.hpp"

namespace bmcnn {

void validate(const NetworkSpec& spec) {
  if (spec.depth < 3) throw ConfigError("network depth must be at least 3, got " + std::to_string(spec.depth));
  if (spec.width < 1) throw ConfigError("network width must be positive");
  if (spec.k < 1) throw ConfigError("network k must be positive");
  if (spec.n_patch < 3) throw ConfigError("network patch size must be at least 3");
}

Stage stage_of(int layer, int depth) {
  if (layer < 1 || layer > depth) throw ConfigError("layer index out of range");
  const int extraction_end = static_cast<int>(std::lround(6.0 * depth / 17.0));
  const int refinement_end = static_cast<int>(std::lround(11.0 * depth / 17.0));
  if (layer <= extraction_end) return Stage::FeatureExtraction;
  if (layer <= refinement_end) return Stage::FeatureRefinement;
  return Stage::Reconstruction;
}

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::FeatureExtraction:
      return "feature extraction";
    case Stage::FeatureRefinement:
      return "feature refinement";
    case Stage::Reconstruction:
      return "reconstruction";
  }
  return "unknown";
}

std::size_t parameter_count(const NetworkSpec& spec) {
  validate(spec);
  const auto w = static_cast<std::size_t>(spec.width);
  const auto in = static_cast<std::size_t>(spec.in_channels());
  const std::size_t first = w * in * 9 + w;
  const std::size_t middle = w * w * 9 + w + 2 * w;
  const std::size_t last = w * 9 + 1;
  return first + static_cast<std::size_t>(spec.depth - 2) * middle + last;
}

namespace {

constexpr std::uint8_t kMagic[4] = {0x42, 0x4D, 0x57, 0x31};  // "BMW1"
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  template <typename Derived>
  void floats(const Eigen::DenseBase<Derived>& values) {
    // Row-major traversal regardless of storage order.
    for (Eigen::Index r = 0; r < values.rows(); ++r)
      for (Eigen::Index c = 0; c < values.cols(); ++c) u32(std::bit_cast<std::uint32_t>(static_cast<float>(values(r, c))));
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* field) {
    if (bytes_.size() - pos_ < 4) {
      throw WeightFormatError(WeightFormatError::Kind::Truncated, std::string("weight file truncated at ") + field);
    }
    std::uint32_t v = 0;
    for (int b = 3; b >= 0; --b) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(b)];
    pos_ += 4;
    return v;
  }
  template <typename Derived>
  void floats(Eigen::DenseBase<Derived>& values, const char* field) {
    for (Eigen::Index r = 0; r < values.rows(); ++r)
      for (Eigen::Index c = 0; c < values.cols(); ++c) values(r, c) = std::bit_cast<float>(u32(field));
  }
  std::size_t position() const { return pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

std::size_t payload_floats(const NetworkSpec& spec) {
  const auto w = static_cast<std::size_t>(spec.width);
  const auto middle = static_cast<std::size_t>(spec.depth - 2);
  return w * static_cast<std::size_t>(spec.in_channels()) * 9 + w + middle * (w * w * 9 + w + 4 * w) + w * 9 + 1;
}

}  // namespace

std::vector<std::uint8_t> save_weights(const Network<float>& net) {
  const NetworkSpec& spec = net.spec();
  Writer out;
  out.bytes.assign(std::begin(kMagic), std::end(kMagic));
  out.u32(kVersion);
  for (int field : {spec.depth, spec.width, spec.k, spec.n_patch, spec.sigma_tag}) out.u32(static_cast<std::uint32_t>(field));
  for (const auto& layer : net.layers()) {
    out.floats(layer.conv.weights.value);
    out.floats(layer.conv.bias.value);
    if (layer.bn) {
      out.floats(layer.bn->gamma.value);
      out.floats(layer.bn->beta.value);
      out.floats(layer.bn->running_mean);
      out.floats(layer.bn->running_var);
    }
  }
  out.u32(crc32_of(out.bytes));
  return out.bytes;
}

Network<float> load_weights(std::span<const std::uint8_t> bytes) {
  using Kind = WeightFormatError::Kind;
  if (bytes.size() < 4) throw WeightFormatError(Kind::Truncated, "weight file truncated before magic");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw WeightFormatError(Kind::MagicMismatch, "not a BMW1 weight file (magic mismatch)");
  }
  Reader in(bytes);
  in.skip(4);
  const std::uint32_t version = in.u32("version");
  if (version != kVersion) {
    throw WeightFormatError(Kind::VersionMismatch, "unsupported weight file version " + std::to_string(version));
  }
  NetworkSpec spec;
  int* fields[] = {&spec.depth, &spec.width, &spec.k, &spec.n_patch, &spec.sigma_tag};
  for (int* f : fields) {
    const std::uint32_t v = in.u32("header");
    if (v > (1u << 16)) throw WeightFormatError(Kind::ShapeInconsistency, "implausible header value " + std::to_string(v));
    *f = static_cast<int>(v);
  }
  try {
    validate(spec);
  } catch (const ConfigError& e) {
    throw WeightFormatError(Kind::ShapeInconsistency, std::string("invalid network shape: ") + e.what());
  }

  const std::size_t expected = in.position() + 4 * payload_floats(spec) + 4;
  if (bytes.size() < expected) {
    throw WeightFormatError(Kind::Truncated, "weight file truncated: expected " + std::to_string(expected) +
                                                 " bytes, found " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw WeightFormatError(Kind::ShapeInconsistency, "weight file has " + std::to_string(bytes.size() - expected) +
                                                          " bytes beyond the declared shape");
  }
  const std::uint32_t stored_crc =
      static_cast<std::uint32_t>(bytes[expected - 4]) | static_cast<std::uint32_t>(bytes[expected - 3]) << 8 |
      static_cast<std::uint32_t>(bytes[expected - 2]) << 16 | static_cast<std::uint32_t>(bytes[expected - 1]) << 24;
  if (stored_crc != crc32_of(bytes.first(expected - 4))) {
    throw WeightFormatError(Kind::ChecksumMismatch, "weight file checksum mismatch");
  }

  Network<float> net(spec);
  for (auto& layer : net.layers()) {
    in.floats(layer.conv.weights.value, "conv weights");
    in.floats(layer.conv.bias.value, "conv bias");
    if (layer.bn) {
      in.floats(layer.bn->gamma.value, "bn gamma");
      in.floats(layer.bn->beta.value, "bn beta");
      in.floats(layer.bn->running_mean, "bn running mean");
      in.floats(layer.bn->running_var, "bn running var");
    }
  }
  return net;
}

}  // namespace bmcnn
