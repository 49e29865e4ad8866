#include "bmcnn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <span>
#include <sstream>

#include "bmcnn/errors.hpp"
#include "bmcnn/neural/loss.hpp"
#include "bmcnn/parallel.hpp"
#include "bmcnn/rng.hpp"

namespace bmcnn {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

// Stream tags for derive_seed.
constexpr std::uint64_t kNoiseStream = 0x6E6F697365ULL;
constexpr std::uint64_t kOrderStream = 0x6F72646572ULL;
constexpr std::uint64_t kInitStream = 0x696E6974ULL;
constexpr std::uint64_t kBenchStream = 0x62656E6368ULL;

PilotConfig pilot_config_for(const PilotConfig& base, double sigma) {
  PilotConfig cfg = base;
  cfg.sigma = sigma;
  return cfg;
}

}  // namespace

const char* to_string(PilotKind kind) {
  switch (kind) {
    case PilotKind::Bm3dLite:
      return "bm3d-lite";
    case PilotKind::None:
      return "none";
    case PilotKind::External:
      return "external";
  }
  return "unknown";
}

const char* to_string(AggregationKind kind) { return kind == AggregationKind::Mean ? "mean" : "gaussian"; }

AggregationMode DenoiseConfig::aggregation_mode() const {
  if (aggregation == AggregationKind::Mean) return MeanAggregation{};
  return GaussianAggregation{sigma_w.value_or(n_patch / 4.0)};
}

void validate(const DenoiseConfig& cfg) {
  if (cfg.n_patch < 3) throw ConfigError("patch size must be at least 3");
  if (cfg.stride < 1 || cfg.stride > cfg.n_patch) throw ConfigError("stride must be in [1, patch size]");
  if (cfg.k < 1) throw ConfigError("k must be at least 1");
  if (cfg.window != kFullWindow && cfg.window < 0) throw ConfigError("search window must be non-negative or full");
  if (cfg.sigma < 0.0) throw ConfigError("sigma must be non-negative");
  if (cfg.sigma_w && !(*cfg.sigma_w > 0.0)) throw ConfigError("sigma_w must be positive");
  if (cfg.inference_batch < 1) throw ConfigError("inference batch must be positive");
  if (cfg.pilot == PilotKind::External && !cfg.external_pilot) throw ConfigError("external pilot selected but no image given");
}

GrayImage make_pilot(const GrayImage& noisy, const DenoiseConfig& cfg) {
  switch (cfg.pilot) {
    case PilotKind::Bm3dLite:
      return bm3d_lite_denoise(noisy, pilot_config_for(cfg.pilot_cfg, cfg.sigma));
    case PilotKind::None:
      return noisy;
    case PilotKind::External:
      if (!cfg.external_pilot) throw ConfigError("external pilot selected but no image given");
      if (cfg.external_pilot->height() != noisy.height() || cfg.external_pilot->width() != noisy.width()) {
        throw DimensionError("external pilot is " + std::to_string(cfg.external_pilot->height()) + "x" +
                             std::to_string(cfg.external_pilot->width()) + ", noisy image is " +
                             std::to_string(noisy.height()) + "x" + std::to_string(noisy.width()));
      }
      return *cfg.external_pilot;
  }
  throw ConfigError("unknown pilot kind");
}

GrayImage denoise_with_pilot(const GrayImage& noisy, const GrayImage& pilot, const Network<float>& net,
                             const DenoiseConfig& cfg, StageTimings* timings) {
  validate(cfg);
  if (net.spec().k != cfg.k) {
    throw DimensionError("network was built for k = " + std::to_string(net.spec().k) + ", config uses k = " +
                         std::to_string(cfg.k));
  }
  if (net.spec().n_patch != cfg.n_patch) {
    throw DimensionError("network was trained on " + std::to_string(net.spec().n_patch) + "-pixel patches, config uses " +
                         std::to_string(cfg.n_patch));
  }
  if (noisy.height() != pilot.height() || noisy.width() != pilot.width()) {
    throw DimensionError("pilot and noisy image sizes differ");
  }

  const PatchGrid grid = build_grid(noisy.height(), noisy.width(), cfg.n_patch, cfg.stride);
  const MatchConfig match{cfg.k, cfg.window, cfg.n_patch};
  const AggregationMode mode = cfg.aggregation_mode();
  const PatchArray window = std::holds_alternative<GaussianAggregation>(mode)
                                ? gaussian_window(cfg.n_patch, std::get<GaussianAggregation>(mode).sigma_w)
                                : PatchArray::Ones(cfg.n_patch, cfg.n_patch);

  StageTimings local;
  AggregationBuffer buffer(noisy.height(), noisy.width());
  constexpr std::size_t kChunk = 256;
  std::vector<PatchBlock> blocks;
  for (std::size_t begin = 0; begin < grid.positions.size(); begin += kChunk) {
    const std::size_t count = std::min(kChunk, grid.positions.size() - begin);

    auto t0 = Clock::now();
    blocks.assign(count, {});
    parallel_for(count, [&](std::size_t i) {
      const auto matches = find_similar(pilot, grid.positions[begin + i], match);
      std::vector<Coord> origins;
      origins.reserve(matches.size());
      for (const Match& m : matches) origins.push_back(m.origin);
      blocks[i] = assemble_block(noisy, pilot, origins, cfg.n_patch);
    });
    local.match_ms += elapsed_ms(t0);

    t0 = Clock::now();
    std::vector<Patch> denoised;
    denoised.reserve(count);
    const auto batch = static_cast<std::size_t>(cfg.inference_batch);
    for (std::size_t b = 0; b < count; b += batch) {
      const std::span<const PatchBlock> chunk(blocks.data() + b, std::min(batch, count - b));
      auto residuals = forward_residuals(net, chunk);
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        residuals[i].data = chunk[i].channels.front() - residuals[i].data;
        denoised.push_back(std::move(residuals[i]));
      }
    }
    local.net_ms += elapsed_ms(t0);

    t0 = Clock::now();
    for (const Patch& p : denoised) buffer.deposit(p, window);
    local.agg_ms += elapsed_ms(t0);
  }

  const auto t0 = Clock::now();
  GrayImage out = buffer.normalize();
  local.agg_ms += elapsed_ms(t0);
  if (timings) {
    timings->match_ms += local.match_ms;
    timings->net_ms += local.net_ms;
    timings->agg_ms += local.agg_ms;
  }
  return out;
}

GrayImage denoise_image(const GrayImage& noisy, const Network<float>& net, const DenoiseConfig& cfg,
                        StageTimings* timings, std::ostream* warnings) {
  validate(cfg);
  if (warnings && std::abs(net.spec().sigma_tag - cfg.sigma) > 1e-9) {
    *warnings << "warning: network was trained at sigma " << net.spec().sigma_tag << ", denoising at sigma "
              << cfg.sigma << "\n";
  }
  const auto t0 = Clock::now();
  const GrayImage pilot = make_pilot(noisy, cfg);
  if (timings) timings->pilot_ms += elapsed_ms(t0);
  return denoise_with_pilot(noisy, pilot, net, cfg, timings);
}

void validate(const TrainConfig& cfg) {
  validate(NetworkSpec{cfg.net.depth, cfg.net.width, cfg.net.k, cfg.net.n_patch, cfg.net.sigma_tag});
  if (cfg.crop < cfg.net.n_patch) throw ConfigError("crop size must be at least the patch size");
  if (cfg.block_stride < 1) throw ConfigError("block stride must be positive");
  if (cfg.augmentations < 1 || cfg.augmentations > 8) throw ConfigError("augmentations must be in [1, 8]");
  if (cfg.batch < 1) throw ConfigError("batch size must be positive");
  if (cfg.iterations < 0) throw ConfigError("iteration count must be non-negative");
  if (cfg.window != kFullWindow && cfg.window < 0) throw ConfigError("search window must be non-negative or full");
  if (cfg.adam.beta1 < 0.0 || cfg.adam.beta1 >= 1.0 || cfg.adam.beta2 < 0.0 || cfg.adam.beta2 >= 1.0) {
    throw ConfigError("Adam decay rates must lie in [0, 1)");
  }
  if (cfg.adam.alpha < 0.0 || cfg.adam.lambda < 0.0) throw ConfigError("learning rate and decay must be non-negative");
  const bool declared = std::any_of(std::begin(kTrainingSigmas), std::end(kTrainingSigmas),
                                    [&](int s) { return static_cast<double>(s) == cfg.sigma; });
  if (!declared) throw ConfigError("training sigma must be one of 15, 25, 50");
  if (cfg.smoothing_window < 1) throw ConfigError("smoothing window must be positive");
}

std::vector<GrayImage> load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DatasetError("dataset directory '" + dir.string() + "' not found");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".pgm" || ext == ".pfm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DatasetError("dataset directory '" + dir.string() + "' contains no PGM/PFM images");
  std::vector<GrayImage> images;
  images.reserve(files.size());
  for (const auto& f : files) images.push_back(load_image(f));
  return images;
}

TrainingSampler::TrainingSampler(std::vector<GrayImage> images, const TrainConfig& cfg) : cfg_(cfg) {
  validate(cfg_);
  if (images.empty()) throw DatasetError("training set is empty");
  crops_.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const GrayImage& im = images[i];
    if (im.height() < cfg_.crop || im.width() < cfg_.crop) {
      throw DatasetError("training image " + std::to_string(i) + " (" + std::to_string(im.height()) + "x" +
                         std::to_string(im.width()) + ") is smaller than the " + std::to_string(cfg_.crop) + " crop");
    }
    const Coord origin{(im.height() - cfg_.crop) / 2, (im.width() - cfg_.crop) / 2};
    crops_.push_back(crop(im, origin, cfg_.crop, cfg_.crop));
  }
  grid_ = build_grid(cfg_.crop, cfg_.crop, cfg_.net.n_patch, cfg_.block_stride);
}

std::size_t TrainingSampler::samples_per_epoch() const {
  return crops_.size() * static_cast<std::size_t>(cfg_.augmentations) * grid_.positions.size();
}

std::uint64_t TrainingSampler::noise_seed(std::size_t image, int augmentation, int epoch) const {
  return derive_seed(cfg_.seed, kNoiseStream, image, augmentation, cfg_.fresh_noise_per_epoch ? epoch : 0);
}

void TrainingSampler::start_epoch(int epoch) {
  const int noise_epoch = cfg_.fresh_noise_per_epoch ? epoch : 0;
  const bool reuse = !cfg_.fresh_noise_per_epoch && !variants_.empty();
  epoch_ = epoch;

  if (!reuse) {
    const auto augs = static_cast<std::size_t>(cfg_.augmentations);
    variants_.assign(crops_.size() * augs, Variant{GrayImage(1, 1), ImageArray(), GrayImage(1, 1), GrayImage(1, 1)});
    const PilotConfig pilot_cfg = pilot_config_for(cfg_.pilot_cfg, cfg_.sigma);
    parallel_for(variants_.size(), [&](std::size_t v) {
      const std::size_t image = v / augs;
      const int aug = static_cast<int>(v % augs);
      Variant& out = variants_[v];
      out.clean = augment(crops_[image], aug);
      // Same per-pixel arithmetic as add_awgn, with the noise kept so that the target
      // residual plus the clean patch reproduces the noisy patch exactly.
      const CounterRng rng(noise_seed(image, aug, noise_epoch));
      out.noise = ImageArray::Zero(out.clean.height(), out.clean.width());
      if (cfg_.sigma > 0.0) {
        for (Eigen::Index i = 0; i < out.noise.size(); ++i) {
          out.noise.data()[i] = cfg_.sigma * rng.gaussian(static_cast<std::uint64_t>(i));
        }
      }
      out.noisy = GrayImage((out.clean.pixels() + out.noise).eval());
      out.pilot = cfg_.pilot == PilotKind::Bm3dLite ? bm3d_lite_denoise(out.noisy, pilot_cfg) : out.noisy;
    });
  }

  const std::size_t total = samples_per_epoch();
  order_.resize(total);
  std::iota(order_.begin(), order_.end(), 0u);
  const CounterRng rng(derive_seed(cfg_.seed, kOrderStream, epoch));
  for (std::size_t i = total; i > 1; --i) {
    const std::size_t j = rng.below(i, i);
    std::swap(order_[i - 1], order_[j]);
  }
}

TrainingSample TrainingSampler::sample(std::size_t position) const {
  if (epoch_ < 0) throw ConfigError("start_epoch must be called before sampling");
  if (position >= order_.size()) throw BoundsError("sample position beyond the epoch");
  const std::size_t index = order_[position];
  const std::size_t variant = index / grid_.positions.size();
  const Coord ref = grid_.positions[index % grid_.positions.size()];
  const Variant& v = variants_[variant];
  const int n = cfg_.net.n_patch;

  const auto matches = find_similar(v.pilot, ref, {cfg_.net.k, cfg_.window, n});
  std::vector<Coord> origins;
  origins.reserve(matches.size());
  for (const Match& m : matches) origins.push_back(m.origin);

  TrainingSample s;
  s.block = assemble_block(v.noisy, v.pilot, origins, n);
  s.clean_ref = extract_patch(v.clean, ref, n);
  s.target = Patch{ref, v.noise.block(ref.row, ref.col, n, n)};
  s.image = static_cast<int>(variant / static_cast<std::size_t>(cfg_.augmentations));
  s.augmentation = static_cast<int>(variant % static_cast<std::size_t>(cfg_.augmentations));
  return s;
}

std::vector<double> smooth(const std::vector<double>& values, int window) {
  std::vector<double> out(values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += values[i];
    if (i >= static_cast<std::size_t>(window)) acc -= values[i - static_cast<std::size_t>(window)];
    out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window)));
  }
  return out;
}

namespace {

std::string layer_norms(Network<float>& net) {
  std::ostringstream os;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    os << (l ? ", " : "") << "L" << l + 1 << "=" << net.layers()[l].conv.weights.value.norm();
  }
  return os.str();
}

}  // namespace

TrainResult train(const std::vector<GrayImage>& images, const TrainConfig& cfg, const TrainProgress& progress) {
  validate(cfg);
  NetworkSpec spec = cfg.net;
  spec.sigma_tag = static_cast<int>(cfg.sigma);
  TrainResult result{build_network<float>(spec, derive_seed(cfg.seed, kInitStream)), {}};
  Network<float>& net = result.net;
  const auto params = net.parameters();
  nn::AdamConfig adam = cfg.adam;
  adam.t = 0;

  TrainingSampler sampler(images, cfg);
  const std::size_t per_epoch = sampler.samples_per_epoch();
  int epoch = 0;
  std::size_t cursor = 0;
  sampler.start_epoch(epoch);

  const auto batch = static_cast<std::size_t>(cfg.batch);
  const int n = cfg.net.n_patch;
  std::vector<PatchBlock> blocks(batch);
  nn::Tensor<float> target(cfg.batch, 1, n, n);
  result.loss_curve.reserve(static_cast<std::size_t>(cfg.iterations));

  for (long it = 1; it <= cfg.iterations; ++it) {
    for (std::size_t filled = 0; filled < batch;) {
      if (cursor == per_epoch) {
        sampler.start_epoch(++epoch);
        cursor = 0;
      }
      const std::size_t take = std::min(batch - filled, per_epoch - cursor);
      parallel_for(take, [&](std::size_t i) {
        TrainingSample s = sampler.sample(cursor + i);
        const PatchArray scaled = s.target.data / kIntensityScale;
        for (int p = 0; p < n * n; ++p) target.sample(static_cast<int>(filled + i))(0, p) = static_cast<float>(scaled.data()[p]);
        blocks[filled + i] = std::move(s.block);
      });
      filled += take;
      cursor += take;
    }

    const nn::Tensor<float> input = blocks_to_tensor<float>(blocks);
    ForwardTrace<float> trace;
    net.zero_grad();
    const nn::Tensor<float> estimate = net.forward_train(input, trace);
    const auto loss = nn::l1_loss(estimate, target);
    if (!std::isfinite(loss.loss)) {
      throw NumericalError("non-finite loss at iteration " + std::to_string(it) + "; layer weight norms: " +
                           layer_norms(net));
    }
    net.backward(trace, loss.grad);
    nn::adam_step<float>(params, adam);
    result.loss_curve.push_back(loss.loss);
    if (progress) progress(it, loss.loss);
  }
  return result;
}

TrainResult train(const TrainConfig& cfg, const TrainProgress& progress) {
  return train(load_dataset(cfg.dataset), cfg, progress);
}

std::vector<BenchAverage> BenchReport::averages() const {
  std::map<double, BenchAverage> by_sigma;
  for (const BenchRow& row : rows) {
    BenchAverage& avg = by_sigma[row.sigma];
    avg.sigma = row.sigma;
    avg.psnr_noisy += row.psnr_noisy;
    avg.psnr_pilot += row.psnr_pilot;
    avg.psnr_bmcnn += row.psnr_bmcnn;
    ++avg.count;
  }
  std::vector<BenchAverage> out;
  for (auto& [sigma, avg] : by_sigma) {
    const auto c = static_cast<double>(avg.count);
    avg.psnr_noisy /= c;
    avg.psnr_pilot /= c;
    avg.psnr_bmcnn /= c;
    out.push_back(avg);
  }
  return out;
}

namespace {

std::string fmt(const char* pattern, double v) {
  if (std::isinf(v)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

std::string BenchReport::to_csv() const {
  std::ostringstream os;
  os << "image,sigma,psnr_noisy,psnr_pilot,psnr_bmcnn,ms_match,ms_pilot,ms_net,ms_agg\n";
  for (const BenchRow& r : rows) {
    os << r.image << ',' << fmt("%g", r.sigma) << ',' << fmt("%.4f", r.psnr_noisy) << ',' << fmt("%.4f", r.psnr_pilot)
       << ',' << fmt("%.4f", r.psnr_bmcnn) << ',' << fmt("%.3f", r.timings.match_ms) << ','
       << fmt("%.3f", r.timings.pilot_ms) << ',' << fmt("%.3f", r.timings.net_ms) << ','
       << fmt("%.3f", r.timings.agg_ms) << '\n';
  }
  return os.str();
}

std::string BenchReport::to_table() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %6s %10s %10s %10s %10s %10s %10s %10s\n", "image", "sigma", "noisy",
                "pilot", "bmcnn", "ms_match", "ms_pilot", "ms_net", "ms_agg");
  os << line;
  for (const BenchRow& r : rows) {
    std::snprintf(line, sizeof line, "%-24s %6g %10s %10s %10s %10.1f %10.1f %10.1f %10.1f\n", r.image.c_str(), r.sigma,
                  fmt("%.2f", r.psnr_noisy).c_str(), fmt("%.2f", r.psnr_pilot).c_str(),
                  fmt("%.2f", r.psnr_bmcnn).c_str(), r.timings.match_ms, r.timings.pilot_ms, r.timings.net_ms,
                  r.timings.agg_ms);
    os << line;
  }
  for (const BenchAverage& a : averages()) {
    std::snprintf(line, sizeof line, "%-24s %6g %10s %10s %10s\n", "average", a.sigma, fmt("%.2f", a.psnr_noisy).c_str(),
                  fmt("%.2f", a.psnr_pilot).c_str(), fmt("%.2f", a.psnr_bmcnn).c_str());
    os << line;
  }
  return os.str();
}

BenchReport benchmark(const std::vector<NamedImage>& images, const std::map<int, Network<float>>& nets,
                      DenoiseConfig cfg, const std::vector<double>& sigmas, std::uint64_t seed) {
  if (cfg.pilot == PilotKind::External) throw ConfigError("benchmark synthesizes its own noise; external pilots are not supported");
  for (double sigma : sigmas) {
    if (!nets.contains(static_cast<int>(std::lround(sigma)))) {
      throw ConfigError("no network available for sigma " + fmt("%g", sigma));
    }
  }
  BenchReport report;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (double sigma : sigmas) {
      const Network<float>& net = nets.at(static_cast<int>(std::lround(sigma)));
      cfg.sigma = sigma;
      const GrayImage& clean = images[i].image;
      const GrayImage noisy = add_awgn(clean, {sigma, derive_seed(seed, kBenchStream, i, std::llround(sigma * 1000))});

      BenchRow row;
      row.image = images[i].name;
      row.sigma = sigma;
      const auto t0 = Clock::now();
      const GrayImage pilot = make_pilot(noisy, cfg);
      row.timings.pilot_ms = elapsed_ms(t0);
      const GrayImage out = denoise_with_pilot(noisy, pilot, net, cfg, &row.timings);
      row.psnr_noisy = psnr(noisy, clean);
      row.psnr_pilot = psnr(pilot, clean);
      row.psnr_bmcnn = psnr(out, clean);
      report.rows.push_back(row);
    }
  }
  return report;
}

std::vector<PatchArray> inspect_features(const Network<float>& net, const PatchBlock& block, int layer) {
  if (layer < 1 || layer > net.depth()) {
    throw ConfigError("layer " + std::to_string(layer) + " outside [1, " + std::to_string(net.depth()) + "]");
  }
  check_block(net, block);
  const nn::Tensor<float> act = net.infer(blocks_to_tensor<float>(std::span<const PatchBlock>(&block, 1)), layer);
  const double scale = layer == net.depth() ? kIntensityScale : 1.0;
  std::vector<PatchArray> planes;
  for (int c = 0; c < act.channels(); ++c) {
    PatchArray plane(act.height(), act.width());
    const auto row = act.sample(0).row(c);
    for (Eigen::Index i = 0; i < plane.size(); ++i) plane.data()[i] = static_cast<double>(row(i)) * scale;
    planes.push_back(std::move(plane));
  }
  return planes;
}

std::vector<std::filesystem::path> write_feature_planes(const std::vector<PatchArray>& planes,
                                                        const std::string& prefix) {
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < planes.size(); ++i) {
    const PatchArray& p = planes[i];
    const double lo = p.minCoeff();
    const double range = p.maxCoeff() - lo;
    ImageArray scaled = range > 0.0 ? ImageArray((p - lo) * (255.0 / range)) : ImageArray(ImageArray::Zero(p.rows(), p.cols()));
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "_%02zu.pgm", i);
    paths.emplace_back(prefix + suffix);
    save_image(paths.back(), GrayImage(std::move(scaled)));
  }
  return paths;
}

}  // namespace bmcnn
