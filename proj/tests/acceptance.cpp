// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the number of
// failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "bmcnn/diagnostics.hpp"
#include "bmcnn/matcher.hpp"
#include "bmcnn/model.hpp"
#include "bmcnn/pilot.hpp"
#include "bmcnn/pipeline.hpp"
#include "bmcnn/rng.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace bmcnn;

namespace {

const fs::path kData = BMCNN_TEST_DATA_DIR;
const std::string kCli = BMCNN_CLI_PATH;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

GrayImage random_image(int h, int w, std::uint64_t seed) {
  const CounterRng rng(seed);
  GrayImage im(h, w);
  for (Eigen::Index i = 0; i < im.size(); ++i) im.pixels().data()[i] = 255.0 * rng.uniform(static_cast<std::uint64_t>(i));
  return im;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "bmcnn_acceptance";
  fs::create_directories(dir);
  return dir / name;
}

// 1. Matcher against the exhaustive oracle.
Verdict matcher_oracle() {
  constexpr int kInstances = 150;
  const CounterRng rng(1001);
  int agree = 0, run = 0;
  std::uint64_t ctr = 0;
  while (run < kInstances) {
    const int h = 24 + static_cast<int>(rng.below(ctr++, 48));
    const int w = 24 + static_cast<int>(rng.below(ctr++, 48));
    const int n = 3 + static_cast<int>(rng.below(ctr++, 14));
    const int k = 1 + static_cast<int>(rng.below(ctr++, 12));
    const int window = rng.below(ctr++, 6) == 0 ? kFullWindow : static_cast<int>(rng.below(ctr++, 25));
    const Coord ref{static_cast<int>(rng.below(ctr++, static_cast<std::uint64_t>(h - n + 1))),
                    static_cast<int>(rng.below(ctr++, static_cast<std::uint64_t>(w - n + 1)))};
    GrayImage img = random_image(h, w, derive_seed(1001, ctr++));
    // A third of the instances use few grey levels so exact ties occur.
    if (run % 3 == 0) img.pixels() = (img.pixels() / 64.0).floor();
    const MatchConfig cfg{k, window, n};
    if (candidate_count(img, ref, cfg) < k) continue;
    ++run;
    const auto got = find_similar(img, ref, cfg);
    const auto want = oracle::brute_force_matches(img, ref, cfg);
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) same = got[i].origin == want[i].origin;
    agree += same;
  }
  return {agree == run, std::to_string(agree) + "/" + std::to_string(run) + " instances identical"};
}

// 2. Noise-distance statistics by simulation.
Verdict distance_statistics() {
  constexpr int kRealizations = 10000;
  constexpr int kN = 20;
  constexpr double kSigma = 25.0;
  bool pass = true;
  std::ostringstream detail;
  for (double d_clean : {0.0, 1e5}) {
    GrayImage clean(kN, 2 * kN, 0.0);
    for (int r = 0; r < kN; ++r) clean(r, kN) = std::sqrt(d_clean / kN);
    std::vector<double> d(kRealizations);
    for (int t = 0; t < kRealizations; ++t) {
      const GrayImage noisy = add_awgn(clean, {kSigma, derive_seed(2002, static_cast<std::uint64_t>(t), d_clean > 0)});
      d[static_cast<std::size_t>(t)] =
          dissimilarity(extract_patch(noisy, {0, 0}, kN), extract_patch(noisy, {0, kN}, kN));
    }
    double mean = 0.0;
    for (double x : d) mean += x;
    mean /= kRealizations;
    double m2 = 0.0, m4 = 0.0;
    for (double x : d) {
      const double c = (x - mean) * (x - mean);
      m2 += c;
      m4 += c * c;
    }
    m2 /= kRealizations;
    m4 /= kRealizations;
    const double var = m2 * kRealizations / (kRealizations - 1.0);
    const double se_mean = std::sqrt(m2 / kRealizations);
    const double se_var = std::sqrt((m4 - m2 * m2) / kRealizations);
    const DistanceMoments expect = match_distance_stats(kSigma, kN, d_clean);
    const bool mean_ok = std::abs(mean - expect.mean) < 3.0 * se_mean;
    const bool var_ok = std::abs(var - expect.variance) < 3.0 * se_var;
    pass = pass && mean_ok && var_ok;
    const double exact_var = 8.0 * std::pow(kSigma, 4) * kN * kN + 8.0 * kSigma * kSigma * d_clean;
    detail << "d_clean=" << fmt("%g", d_clean) << ": mean " << fmt("%.6g", mean) << " vs " << fmt("%.6g", expect.mean)
           << (mean_ok ? " ok" : " OUT") << ", var " << fmt("%.5g", var) << " vs " << fmt("%.5g", expect.variance)
           << " (se " << fmt("%.3g", se_var) << ")" << (var_ok ? " ok" : " OUT");
    if (!var_ok) {
      detail << " [sum-of-squares variance 8s^4N^2+8s^2d = " << fmt("%.5g", exact_var) << ", off by "
             << fmt("%.2f", std::abs(var - exact_var) / se_var) << " se]";
    }
    detail << "; ";
  }
  return {pass, detail.str()};
}

// 3. Finite-difference gradient checks.
Verdict gradients() {
  constexpr int kSeeds = 20;
  const auto cases = diagnostics::run_gradcheck_suite(3003, kSeeds);
  int failed = 0;
  double worst_single = 0.0, worst_stack = 0.0, worst_net = 0.0;
  for (const auto& c : cases) {
    failed += !c.passed();
    const double e = c.report.max_rel_error();
    if (c.tolerance == diagnostics::kSingleLayerTolerance) worst_single = std::max(worst_single, e);
    if (c.tolerance == diagnostics::kStackTolerance) worst_stack = std::max(worst_stack, e);
    if (c.tolerance == diagnostics::kNetworkTolerance) worst_net = std::max(worst_net, e);
  }
  const bool pass = failed == 0 && worst_single < 1e-6 && worst_stack < 1e-5 && worst_net < 1e-4 &&
                    cases.size() == 5u * kSeeds;
  return {pass, std::to_string(cases.size()) + " checks over " + std::to_string(kSeeds) + " seeds, " +
                    std::to_string(failed) + " failed; worst rel. error single " + fmt("%.2e", worst_single) +
                    ", conv+bn+relu " + fmt("%.2e", worst_stack) + ", depth-5 L1 " + fmt("%.2e", worst_net)};
}

// 4. Transform round trips and energy preservation.
Verdict transforms() {
  constexpr int kBlocks = 1000;
  const CounterRng rng(4004);
  std::uint64_t ctr = 0;
  double worst_dct = 0.0, worst_haar = 0.0, worst_3d = 0.0, worst_energy = 0.0;
  for (int b = 0; b < kBlocks; ++b) {
    const int n = 2 + static_cast<int>(rng.below(ctr++, 19));
    const int k = 1 << rng.below(ctr++, 5);
    std::vector<PatchArray> stack;
    double energy = 0.0;
    for (int s = 0; s < k; ++s) {
      PatchArray p(n, n);
      for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = 255.0 * rng.uniform(ctr++) - 64.0;
      energy += p.square().sum();
      stack.push_back(std::move(p));
    }
    worst_dct = std::max(worst_dct, (idct2(dct2(stack[0])) - stack[0]).abs().maxCoeff());
    const PatchArray c = dct2(stack[0]);
    worst_energy = std::max(worst_energy, std::abs(c.square().sum() - stack[0].square().sum()) / stack[0].square().sum());

    Eigen::VectorXd column(k);
    for (int s = 0; s < k; ++s) column(s) = stack[static_cast<std::size_t>(s)](0, 0);
    const Eigen::VectorXd h = haar1d(column);
    worst_haar = std::max(worst_haar, (ihaar1d(h) - column).cwiseAbs().maxCoeff());
    worst_energy = std::max(worst_energy, std::abs(h.squaredNorm() - column.squaredNorm()) / column.squaredNorm());

    const CoefficientBlock block = forward_3d(stack);
    worst_energy = std::max(worst_energy, std::abs(block.coeffs.square().sum() - energy) / energy);
    const auto back = inverse_3d(block);
    for (int s = 0; s < k; ++s)
      worst_3d = std::max(worst_3d, (back[static_cast<std::size_t>(s)] - stack[static_cast<std::size_t>(s)]).abs().maxCoeff());
  }
  const bool pass = worst_dct < 1e-9 && worst_haar < 1e-9 && worst_3d < 1e-9 && worst_energy < 1e-6;
  return {pass, std::to_string(kBlocks) + " blocks; max round-trip error dct " + fmt("%.1e", worst_dct) + ", haar " +
                    fmt("%.1e", worst_haar) + ", 3d " + fmt("%.1e", worst_3d) + "; max relative energy change " +
                    fmt("%.1e", worst_energy)};
}

// 5. Re-aggregating exact patches reproduces the image.
Verdict aggregation_conservation() {
  constexpr int kImages = 50;
  const CounterRng rng(5005);
  std::uint64_t ctr = 0;
  double worst = 0.0;
  for (int i = 0; i < kImages; ++i) {
    const int h = 8 + static_cast<int>(rng.below(ctr++, 90));
    const int w = 8 + static_cast<int>(rng.below(ctr++, 90));
    const int n = 1 + static_cast<int>(rng.below(ctr++, static_cast<std::uint64_t>(std::min({h, w, 32}))));
    const int stride = 1 + static_cast<int>(rng.below(ctr++, static_cast<std::uint64_t>(n)));
    const GrayImage im = random_image(h, w, derive_seed(5005, static_cast<std::uint64_t>(i)));
    std::vector<Patch> patches;
    for (const Coord& p : build_grid(h, w, n, stride).positions) patches.push_back(extract_patch(im, p, n));
    const double sigma_w = 0.5 + 0.25 * n * rng.uniform(ctr++);
    for (const AggregationMode& mode : {AggregationMode{MeanAggregation{}}, AggregationMode{GaussianAggregation{sigma_w}}})
      worst = std::max(worst, (aggregate(patches, h, w, mode).pixels() - im.pixels()).abs().maxCoeff());
  }
  return {worst < 1e-9, std::to_string(kImages) + " images x 2 modes, max error " + fmt("%.1e", worst)};
}

// 6. Pilot gains at least 4 dB on the fixed crop.
Verdict pilot_efficacy() {
  const GrayImage clean = load_image(kData / "camera256.pgm");
  const GrayImage noisy = add_awgn(clean, {25.0, kDefaultSeed});
  PilotConfig cfg;
  cfg.sigma = 25.0;
  const GrayImage pilot = bm3d_lite_denoise(noisy, cfg);
  const double p_noisy = psnr(noisy, clean);
  const double p_pilot = psnr(pilot, clean);
  return {p_pilot >= p_noisy + 4.0, "noisy " + fmt("%.2f", p_noisy) + " dB -> pilot " + fmt("%.2f", p_pilot) + " dB (+" +
                                        fmt("%.2f", p_pilot - p_noisy) + ")"};
}

// 7. Toy end-to-end training.
Verdict toy_training() {
  TrainConfig cfg;
  cfg.dataset = kData / "train";
  cfg.net = NetworkSpec{5, 16, 4, 20, 25};
  cfg.iterations = 2000;
  cfg.batch = 32;
  cfg.sigma = 25.0;
  cfg.deterministic = true;
  cfg.smoothing_window = 20;
  const TrainResult result = train(cfg);

  const auto smoothed = smooth(result.loss_curve, cfg.smoothing_window);
  const double initial = smoothed[static_cast<std::size_t>(cfg.smoothing_window - 1)];
  const double final_loss = smoothed.back();

  DenoiseConfig dcfg;
  dcfg.sigma = 25.0;
  std::ostringstream detail;
  bool every_image = true;
  double sum_noisy = 0.0, sum_out = 0.0;
  const auto held_out = load_dataset(kData / "heldout");
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    const GrayImage& clean = held_out[i];
    const GrayImage noisy = add_awgn(clean, {25.0, derive_seed(7007, i)});
    const GrayImage out = denoise_image(noisy, result.net, dcfg);
    const double pn = psnr(noisy, clean), po = psnr(out, clean);
    every_image = every_image && po >= pn + 2.0;
    sum_noisy += pn;
    sum_out += po;
    detail << fmt("%.2f", pn) << "->" << fmt("%.2f", po) << " ";
  }
  const double n = static_cast<double>(held_out.size());
  const bool loss_ok = final_loss < 0.7 * initial;
  const bool pass = held_out.size() == 4 && every_image && loss_ok;
  return {pass, "held-out PSNR " + detail.str() + "(mean " + fmt("%.2f", sum_noisy / n) + " -> " +
                    fmt("%.2f", sum_out / n) + " dB); smoothed loss " + fmt("%.3f", initial) + " -> " +
                    fmt("%.3f", final_loss) + " (ratio " + fmt("%.3f", final_loss / initial) + ")"};
}

// 8. Residual identity.
Verdict residual_identity() {
  TrainConfig cfg;
  cfg.dataset = kData / "train";
  TrainingSampler sampler(load_dataset(cfg.dataset), cfg);
  std::size_t exact = 0, total = 0;
  for (int epoch = 0; epoch < 2; ++epoch) {
    sampler.start_epoch(epoch);
    for (std::size_t i = 0; i < sampler.samples_per_epoch(); ++i, ++total) {
      const TrainingSample s = sampler.sample(i);
      exact += ((s.target.data + s.clean_ref.data) == s.block.channels[0]).all();
    }
  }

  DenoiseConfig dcfg;
  dcfg.pilot = PilotKind::None;
  double worst = 0.0;
  std::vector<GrayImage> images = load_dataset(kData / "heldout");
  images.push_back(load_image(kData / "camera256.pgm"));
  for (std::size_t i = 0; i < images.size(); ++i) {
    const GrayImage noisy = add_awgn(images[i], {25.0, derive_seed(8008, i)});
    for (auto agg : {AggregationKind::Gaussian, AggregationKind::Mean}) {
      dcfg.aggregation = agg;
      const GrayImage out = denoise_image(noisy, zero_network<float>(NetworkSpec{}), dcfg);
      worst = std::max(worst, (out.pixels() - noisy.pixels()).abs().maxCoeff());
    }
  }
  return {exact == total && total > 0 && worst < 1e-6,
          std::to_string(exact) + "/" + std::to_string(total) + " training pairs exact; zero-network max deviation " +
              fmt("%.1e", worst)};
}

int run_cli(const std::string& args) {
  const std::string cmd = "\"" + kCli + "\" " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

// 9. Bit-identical CLI outputs across runs and thread counts.
Verdict determinism() {
  const fs::path model = scratch("det_model.bmw");
  write_file(model, save_weights(build_network<float>({5, 16, 4, 20, 25}, 9009)));
  const fs::path noisy = scratch("det_noisy.pfm");
  save_image(noisy, add_awgn(load_image(kData / "camera256.pgm"), {25.0, 9009}));

  std::vector<std::vector<std::uint8_t>> denoised, weights, curves;
  int failures = 0;
  for (int threads : {1, 4}) {
    for (int rep = 0; rep < 2; ++rep) {
      const std::string tag = std::to_string(threads) + "_" + std::to_string(rep);
      const fs::path out = scratch("det_out_" + tag + ".pfm");
      failures += run_cli("denoise --in \"" + noisy.string() + "\" --out \"" + out.string() + "\" --model \"" +
                          model.string() + "\" --sigma 25 --deterministic --threads " + std::to_string(threads)) != 0;
      denoised.push_back(read_file(out));

      const fs::path w = scratch("det_train_" + tag + ".bmw");
      const fs::path csv = scratch("det_loss_" + tag + ".csv");
      failures += run_cli("train --data \"" + (kData / "train").string() + "\" --out \"" + w.string() +
                          "\" --loss-csv \"" + csv.string() +
                          "\" --iterations 25 --depth 5 --width 16 --k 4 --batch 16 --crop 100 --sigma 25"
                          " --log-every 0 --deterministic --threads " + std::to_string(threads)) != 0;
      weights.push_back(read_file(w));
      curves.push_back(read_file(csv));
    }
  }
  bool identical = failures == 0;
  for (std::size_t i = 1; i < denoised.size(); ++i)
    identical = identical && denoised[i] == denoised[0] && weights[i] == weights[0] && curves[i] == curves[0];
  return {identical, "denoise and train, 2 runs x threads {1,4}: " +
                         std::string(identical ? "all outputs bit-identical" : "outputs differ") +
                         (failures ? " (" + std::to_string(failures) + " command failures)" : "")};
}

// 10. Weight file round trip.
Verdict weight_round_trip() {
  Network<float> net = build_network<float>(NetworkSpec{}, 10010);
  const CounterRng rng(10010);
  std::uint64_t ctr = 0;
  for (auto& layer : net.layers())
    if (layer.bn) {
      for (Eigen::Index c = 0; c < layer.bn->running_mean.size(); ++c) {
        layer.bn->running_mean(c) = static_cast<float>(rng.gaussian(ctr++));
        layer.bn->running_var(c) = static_cast<float>(0.5 + rng.uniform(ctr++));
        layer.bn->gamma.value(c, 0) = static_cast<float>(1.0 + 0.1 * rng.gaussian(ctr++));
      }
    }
  const auto first = save_weights(net);
  const Network<float> loaded = load_weights(first);
  const auto second = save_weights(loaded);

  int identical_blocks = 0;
  constexpr int kBlocks = 10;
  for (int b = 0; b < kBlocks; ++b) {
    PatchBlock block{4, 20, std::vector<Coord>(4, Coord{0, 0}), {}};
    for (int c = 0; c < 8; ++c)
      block.channels.push_back(random_image(20, 20, derive_seed(10010, static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(c))).pixels());
    identical_blocks += (forward_residual(net, block).data == forward_residual(loaded, block).data).all();
  }
  const bool pass = first == second && identical_blocks == kBlocks;
  return {pass, std::string(first == second ? "save/load/save byte-identical" : "re-saved bytes differ") + " (" +
                    std::to_string(first.size()) + " bytes); " + std::to_string(identical_blocks) + "/" +
                    std::to_string(kBlocks) + " forward outputs identical"};
}

struct Criterion {
  int id;
  const char* name;
  double time_limit_s;
  std::function<Verdict()> check;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "matcher oracle equivalence", 30, matcher_oracle},
      {2, "noise-distance statistics", 60, distance_statistics},
      {3, "gradient correctness", 120, gradients},
      {4, "transform exactness", 10, transforms},
      {5, "aggregation conservation", 10, aggregation_conservation},
      {6, "pilot efficacy", 60, pilot_efficacy},
      {7, "end-to-end toy training", 1800, toy_training},
      {8, "residual identity", 600, residual_identity},
      {9, "determinism", 600, determinism},
      {10, "weight-format round trip", 60, weight_round_trip},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.time_limit_s;
    const bool pass = v.pass && in_time;
    failed += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << ": " << v.detail << " ["
              << fmt("%.1f", secs) << " s, limit " << fmt("%.0f", c.time_limit_s) << " s"
              << (in_time ? "" : ", EXCEEDED") << "]" << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed;
}
