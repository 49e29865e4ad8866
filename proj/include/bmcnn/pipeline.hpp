#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bmcnn/image.hpp"
#include "bmcnn/matcher.hpp"
#include "bmcnn/model.hpp"
#include "bmcnn/patching.hpp"
#include "bmcnn/pilot.hpp"

namespace bmcnn {

enum class PilotKind { Bm3dLite, None, External };
enum class AggregationKind { Mean, Gaussian };

const char* to_string(PilotKind kind);
const char* to_string(AggregationKind kind);

inline constexpr std::uint64_t kDefaultSeed = 20170616;

struct DenoiseConfig {
  int n_patch = 20;
  int stride = 10;
  int k = 4;
  int window = 20;  ///< or kFullWindow
  AggregationKind aggregation = AggregationKind::Gaussian;
  std::optional<double> sigma_w;  ///< defaults to n_patch / 4
  PilotKind pilot = PilotKind::Bm3dLite;
  std::optional<GrayImage> external_pilot;
  PilotConfig pilot_cfg;  ///< its sigma is overridden by `sigma`
  double sigma = 25.0;
  int inference_batch = 32;

  AggregationMode aggregation_mode() const;
};

void validate(const DenoiseConfig& cfg);

/// Wall-clock milliseconds per stage.
struct StageTimings {
  double match_ms = 0.0;
  double pilot_ms = 0.0;
  double net_ms = 0.0;
  double agg_ms = 0.0;
};

/// The matching image: BM3D-lite output, the noisy image itself, or the external image.
GrayImage make_pilot(const GrayImage& noisy, const DenoiseConfig& cfg);

/// Grid -> match on pilot -> assemble -> network -> aggregate, with a given pilot.
GrayImage denoise_with_pilot(const GrayImage& noisy, const GrayImage& pilot, const Network<float>& net,
                             const DenoiseConfig& cfg, StageTimings* timings = nullptr);

/// Full denoising flow. A network whose k or patch size differs from cfg is an error; a
/// sigma tag that differs from cfg.sigma only produces a warning on `warnings`.
GrayImage denoise_image(const GrayImage& noisy, const Network<float>& net, const DenoiseConfig& cfg,
                        StageTimings* timings = nullptr, std::ostream* warnings = nullptr);

/// Noise levels for which networks are trained.
inline constexpr int kTrainingSigmas[] = {15, 25, 50};

struct TrainConfig {
  std::filesystem::path dataset;
  int crop = 180;
  int block_stride = 20;
  int augmentations = 8;
  int batch = 32;
  long iterations = 1000;
  nn::AdamConfig adam;
  double sigma = 25.0;
  std::uint64_t seed = kDefaultSeed;
  NetworkSpec net;  ///< n_patch and k also drive sampling; sigma_tag is set from sigma
  int window = 20;
  PilotKind pilot = PilotKind::Bm3dLite;
  PilotConfig pilot_cfg;
  bool fresh_noise_per_epoch = true;
  bool deterministic = false;
  int smoothing_window = 20;
};

void validate(const TrainConfig& cfg);

/// Every *.pgm / *.pfm file in `dir`, sorted by file name.
std::vector<GrayImage> load_dataset(const std::filesystem::path& dir);

struct TrainingSample {
  PatchBlock block;
  Patch target;     ///< noisy reference minus clean reference
  Patch clean_ref;
  int image = 0;
  int augmentation = 0;
};

/// Epoch-wise source of training blocks. Each epoch visits every
/// (image, augmentation, grid position) exactly once in a seed-determined order.
class TrainingSampler {
 public:
  TrainingSampler(std::vector<GrayImage> images, const TrainConfig& cfg);

  std::size_t grid_size() const { return grid_.positions.size(); }
  std::size_t samples_per_epoch() const;

  /// Noise seed of (image, augmentation, epoch); the noisy copy equals
  /// add_awgn(augment(crop, augmentation), {sigma, noise_seed(...)}).
  std::uint64_t noise_seed(std::size_t image, int augmentation, int epoch) const;

  /// Synthesizes the noisy copies and pilots of `epoch`. With fresh_noise_per_epoch off,
  /// every epoch reuses epoch 0's noise.
  void start_epoch(int epoch);
  int epoch() const { return epoch_; }

  /// The position-th sample (0-based) of the current epoch's shuffled order.
  TrainingSample sample(std::size_t position) const;

 private:
  struct Variant {
    GrayImage clean;
    ImageArray noise;
    GrayImage noisy;  ///< clean + noise
    GrayImage pilot;
  };

  std::vector<GrayImage> crops_;
  TrainConfig cfg_;
  PatchGrid grid_;
  int epoch_ = -1;
  std::vector<Variant> variants_;  ///< image-major, augmentation-minor
  std::vector<std::uint32_t> order_;
};

struct TrainResult {
  Network<float> net;
  std::vector<double> loss_curve;  ///< data term per iteration
};

using TrainProgress = std::function<void(long iteration, double loss)>;

TrainResult train(const std::vector<GrayImage>& images, const TrainConfig& cfg, const TrainProgress& progress = {});
TrainResult train(const TrainConfig& cfg, const TrainProgress& progress = {});

/// Trailing moving average with the given window (shorter at the start).
std::vector<double> smooth(const std::vector<double>& values, int window);

struct BenchRow {
  std::string image;
  double sigma = 0.0;
  double psnr_noisy = 0.0;
  double psnr_pilot = 0.0;
  double psnr_bmcnn = 0.0;
  StageTimings timings;
};

struct BenchAverage {
  double sigma = 0.0;
  double psnr_noisy = 0.0;
  double psnr_pilot = 0.0;
  double psnr_bmcnn = 0.0;
  std::size_t count = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;

  /// Per-sigma means of the row PSNRs, ascending sigma.
  std::vector<BenchAverage> averages() const;
  /// `image,sigma,psnr_noisy,psnr_pilot,psnr_bmcnn,ms_match,ms_pilot,ms_net,ms_agg`
  std::string to_csv() const;
  std::string to_table() const;
};

struct NamedImage {
  std::string name;
  GrayImage image;
};

/// For every (image, sigma): AWGN with a seed derived from (seed, image index, sigma),
/// then pilot-only and full denoising, scored against the clean image.
BenchReport benchmark(const std::vector<NamedImage>& images, const std::map<int, Network<float>>& nets,
                      DenoiseConfig cfg, const std::vector<double>& sigmas, std::uint64_t seed = kDefaultSeed);

/// Activations after layer `layer` (1-based) for one block. Layer `depth` returns the
/// residual estimate in intensity units.
std::vector<PatchArray> inspect_features(const Network<float>& net, const PatchBlock& block, int layer);

/// Writes planes as `<prefix>_NN.pgm`, each min-max scaled to [0, 255].
std::vector<std::filesystem::path> write_feature_planes(const std::vector<PatchArray>& planes,
                                                        const std::string& prefix);

}  // namespace bmcnn
