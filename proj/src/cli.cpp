#include "bmcnn/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>

#include "bmcnn/diagnostics.hpp"
#include "bmcnn/errors.hpp"
#include "bmcnn/image.hpp"
#include "bmcnn/matcher.hpp"
#include "bmcnn/model.hpp"
#include "bmcnn/parallel.hpp"
#include "bmcnn/pipeline.hpp"
#include "bmcnn/pilot.hpp"

namespace bmcnn::cli {
namespace {

using nlohmann::json;

struct Common {
  int threads = 0;
  bool deterministic = false;
  bool dump_config = false;
  std::uint64_t seed = kDefaultSeed;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--threads", common.threads, "Worker threads (default: $BMCNN_THREADS or all cores)");
  cmd->add_flag("--deterministic", common.deterministic, "Fixed-order reductions (always on; accepted for scripts)");
  cmd->add_flag("--dump-config", common.dump_config, "Print the resolved configuration as JSON and exit");
  cmd->add_option("--seed", common.seed, "Random seed");
}

/// "20" or "full".
int parse_window(const std::string& text) {
  if (text == "full") return kFullWindow;
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used == text.size() && v >= 0) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("search window must be a non-negative integer or 'full', got '" + text + "'");
}

std::string window_text(int window) { return window == kFullWindow ? "full" : std::to_string(window); }

Coord parse_coord(const std::string& text) {
  int row = 0, col = 0;
  char sep = 0, extra = 0;
  if (std::sscanf(text.c_str(), "%d%c%d%c", &row, &sep, &col, &extra) != 3 || sep != ',') {
    throw ConfigError("expected ROW,COL, got '" + text + "'");
  }
  return {row, col};
}

struct PilotFlags {
  std::string choice = "bm3d-lite";
  PilotConfig cfg;
  std::string window = "20";
};

void add_pilot_knobs(CLI::App* cmd, PilotFlags& flags) {
  cmd->add_option("--pilot-n-patch", flags.cfg.n_patch, "Pilot patch size")->capture_default_str();
  cmd->add_option("--pilot-k", flags.cfg.k, "Pilot stack depth (power of two)")->capture_default_str();
  cmd->add_option("--pilot-stride", flags.cfg.stride, "Pilot reference stride")->capture_default_str();
  cmd->add_option("--pilot-window", flags.window, "Pilot search half-window or 'full'")->capture_default_str();
  cmd->add_option("--pilot-lambda", flags.cfg.lambda_thr, "Hard-threshold multiplier")->capture_default_str();
}

PilotConfig resolve_pilot(const PilotFlags& flags, double sigma) {
  PilotConfig cfg = flags.cfg;
  cfg.window = parse_window(flags.window);
  cfg.sigma = sigma;
  return cfg;
}

json to_json(const PilotConfig& c) {
  return {{"n_patch", c.n_patch}, {"k", c.k}, {"stride", c.stride}, {"window", window_text(c.window)},
          {"lambda_thr", c.lambda_thr}, {"sigma", c.sigma}};
}

json to_json(const DenoiseConfig& c) {
  json j{{"n_patch", c.n_patch},
         {"stride", c.stride},
         {"k", c.k},
         {"window", window_text(c.window)},
         {"aggregation", to_string(c.aggregation)},
         {"pilot", to_string(c.pilot)},
         {"sigma", c.sigma},
         {"inference_batch", c.inference_batch},
         {"pilot_config", to_json(c.pilot_cfg)}};
  if (c.aggregation == AggregationKind::Gaussian) j["sigma_w"] = c.sigma_w.value_or(c.n_patch / 4.0);
  return j;
}

json to_json(const TrainConfig& c) {
  return {{"dataset", c.dataset.string()},
          {"crop", c.crop},
          {"block_stride", c.block_stride},
          {"augmentations", c.augmentations},
          {"batch", c.batch},
          {"iterations", c.iterations},
          {"sigma", c.sigma},
          {"seed", c.seed},
          {"depth", c.net.depth},
          {"width", c.net.width},
          {"k", c.net.k},
          {"n_patch", c.net.n_patch},
          {"window", window_text(c.window)},
          {"pilot", to_string(c.pilot)},
          {"pilot_config", to_json(c.pilot_cfg)},
          {"fresh_noise_per_epoch", c.fresh_noise_per_epoch},
          {"smoothing_window", c.smoothing_window},
          {"adam",
           {{"alpha", c.adam.alpha},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"epsilon", c.adam.epsilon},
            {"lambda", c.adam.lambda},
            {"regularizer", c.adam.regularizer == nn::Regularizer::L2 ? "l2" : "l1"}}}};
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// Denoising flags shared by denoise, bench and inspect.
struct DenoiseFlags {
  DenoiseConfig cfg;
  std::string window = "20";
  std::string aggregation = "gaussian";
  std::optional<double> sigma_w;
  PilotFlags pilot;
  CLI::Option* n_patch_opt = nullptr;
  CLI::Option* k_opt = nullptr;
};

void add_denoise_knobs(CLI::App* cmd, DenoiseFlags& f) {
  f.n_patch_opt = cmd->add_option("--n-patch", f.cfg.n_patch, "Patch size (default: from the model)");
  cmd->add_option("--stride", f.cfg.stride, "Reference grid stride")->capture_default_str();
  f.k_opt = cmd->add_option("--k", f.cfg.k, "Matched patches per block (default: from the model)");
  cmd->add_option("--window", f.window, "Search half-window in pixels or 'full'")->capture_default_str();
  cmd->add_option("--aggregation", f.aggregation, "mean | gaussian")->capture_default_str();
  cmd->add_option("--sigma-w", f.sigma_w, "Gaussian aggregation width (default n_patch/4)");
  cmd->add_option("--sigma", f.cfg.sigma, "Noise standard deviation")->capture_default_str();
  cmd->add_option("--pilot", f.pilot.choice, "bm3d-lite | none | external:<file>")->capture_default_str();
  cmd->add_option("--batch", f.cfg.inference_batch, "Blocks per network call")->capture_default_str();
  add_pilot_knobs(cmd, f.pilot);
}

DenoiseConfig resolve_denoise(DenoiseFlags& f, const NetworkSpec* model) {
  DenoiseConfig cfg = f.cfg;
  if (model && f.n_patch_opt->count() == 0) cfg.n_patch = model->n_patch;
  if (model && f.k_opt->count() == 0) cfg.k = model->k;
  cfg.window = parse_window(f.window);
  if (f.aggregation == "mean") {
    cfg.aggregation = AggregationKind::Mean;
  } else if (f.aggregation == "gaussian") {
    cfg.aggregation = AggregationKind::Gaussian;
  } else {
    throw ConfigError("aggregation must be 'mean' or 'gaussian'");
  }
  cfg.sigma_w = f.sigma_w;
  const std::string& p = f.pilot.choice;
  if (p == "bm3d-lite") {
    cfg.pilot = PilotKind::Bm3dLite;
  } else if (p == "none") {
    cfg.pilot = PilotKind::None;
  } else if (p.rfind("external:", 0) == 0 && p.size() > 9) {
    cfg.pilot = PilotKind::External;
    cfg.external_pilot = load_image(p.substr(9));
  } else {
    throw ConfigError("pilot must be bm3d-lite, none or external:<file>");
  }
  cfg.pilot_cfg = resolve_pilot(f.pilot, cfg.sigma);
  validate(cfg);
  return cfg;
}

Network<float> load_model(const std::string& path) { return load_weights(read_file(path)); }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Block-matching CNN image denoiser"};
  app.name("bmcnn");
  app.require_subcommand(1, 1);
  Common common;

  // denoise
  auto* denoise = app.add_subcommand("denoise", "Denoise a grayscale image");
  std::string in_path, out_path, model_path, clean_path;
  DenoiseFlags dflags;
  denoise->add_option("--in", in_path, "Noisy input image (PGM/PFM)")->required();
  denoise->add_option("--out", out_path, "Output image (PGM, or PFM by extension)")->required();
  denoise->add_option("--model", model_path, "Weight file")->required();
  denoise->add_option("--clean", clean_path, "Clean reference; prints PSNR");
  add_denoise_knobs(denoise, dflags);
  add_common(denoise, common);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a network on a directory of clean images");
  TrainConfig tcfg;
  std::string train_out, loss_csv, reg = "l2", train_window = "20", train_pilot = "bm3d-lite";
  bool fixed_noise = false;
  int log_every = 100;
  PilotFlags tpilot;
  train_cmd->add_option("--data", tcfg.dataset, "Directory of clean PGM/PFM images")->required();
  train_cmd->add_option("--out", train_out, "Output weight file")->required();
  train_cmd->add_option("--sigma", tcfg.sigma, "Training noise level (15, 25 or 50)")->capture_default_str();
  train_cmd->add_option("--iterations", tcfg.iterations, "Optimizer steps")->capture_default_str();
  train_cmd->add_option("--batch", tcfg.batch, "Mini-batch size")->capture_default_str();
  train_cmd->add_option("--depth", tcfg.net.depth, "Network depth")->capture_default_str();
  train_cmd->add_option("--width", tcfg.net.width, "Feature maps per layer")->capture_default_str();
  train_cmd->add_option("--k", tcfg.net.k, "Matched patches per block")->capture_default_str();
  train_cmd->add_option("--n-patch", tcfg.net.n_patch, "Patch size")->capture_default_str();
  train_cmd->add_option("--crop", tcfg.crop, "Center crop size")->capture_default_str();
  train_cmd->add_option("--block-stride", tcfg.block_stride, "Sampling grid stride")->capture_default_str();
  train_cmd->add_option("--augmentations", tcfg.augmentations, "Flip/rotation variants (1-8)")->capture_default_str();
  train_cmd->add_option("--lr", tcfg.adam.alpha, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--beta1", tcfg.adam.beta1, "Adam beta1")->capture_default_str();
  train_cmd->add_option("--beta2", tcfg.adam.beta2, "Adam beta2")->capture_default_str();
  train_cmd->add_option("--adam-eps", tcfg.adam.epsilon, "Adam epsilon")->capture_default_str();
  train_cmd->add_option("--lambda", tcfg.adam.lambda, "Weight-decay coefficient")->capture_default_str();
  train_cmd->add_option("--reg", reg, "Regularizer: l2 | l1")->capture_default_str();
  train_cmd->add_option("--window", train_window, "Search half-window or 'full'")->capture_default_str();
  train_cmd->add_option("--pilot", train_pilot, "bm3d-lite | none")->capture_default_str();
  train_cmd->add_flag("--fixed-noise", fixed_noise, "Reuse the first epoch's noise in every epoch");
  train_cmd->add_option("--smoothing", tcfg.smoothing_window, "Loss smoothing window")->capture_default_str();
  train_cmd->add_option("--loss-csv", loss_csv, "Write iteration,loss,smoothed_loss");
  train_cmd->add_option("--log-every", log_every, "Progress interval on stderr (0 = silent)")->capture_default_str();
  add_pilot_knobs(train_cmd, tpilot);
  add_common(train_cmd, common);

  // bench
  auto* bench = app.add_subcommand("bench", "Benchmark on clean images with synthetic noise");
  std::string bench_images, bench_csv;
  std::vector<std::string> bench_models;
  std::vector<double> bench_sigmas{25.0};
  bool use_zero_network = false;
  int zero_depth = 17, zero_width = 64;
  DenoiseFlags bflags;
  bench->add_option("--images", bench_images, "Directory of clean test images")->required();
  bench->add_option("--model", bench_models, "Weight files (one per sigma; keyed by their sigma tag)");
  bench->add_flag("--zero-network", use_zero_network, "Use an all-zero network (identity denoiser baseline)");
  bench->add_option("--zero-depth", zero_depth, "Depth of the zero network")->capture_default_str();
  bench->add_option("--zero-width", zero_width, "Width of the zero network")->capture_default_str();
  bench->add_option("--sigmas", bench_sigmas, "Noise levels")->delimiter(',')->capture_default_str();
  bench->add_option("--csv", bench_csv, "Write the per-image CSV report here");
  add_denoise_knobs(bench, bflags);
  add_common(bench, common);

  // match
  auto* match_cmd = app.add_subcommand("match", "Print the k best matches of a reference patch");
  std::string match_pilot, match_ref, match_window = "20";
  MatchConfig mcfg;
  match_cmd->add_option("--pilot", match_pilot, "Image to search")->required();
  match_cmd->add_option("--ref", match_ref, "Reference origin ROW,COL")->required();
  match_cmd->add_option("--k", mcfg.k, "Number of matches")->capture_default_str();
  match_cmd->add_option("--window", match_window, "Search half-window or 'full'")->capture_default_str();
  match_cmd->add_option("--n-patch", mcfg.n_patch, "Patch size")->capture_default_str();
  add_common(match_cmd, common);

  // pilot
  auto* pilot_cmd = app.add_subcommand("pilot", "Run the BM3D-lite pre-denoiser alone");
  std::string pilot_in, pilot_out, pilot_clean;
  double pilot_sigma = 25.0;
  PilotFlags pflags;
  pilot_cmd->add_option("--in", pilot_in, "Noisy input image")->required();
  pilot_cmd->add_option("--out", pilot_out, "Output image")->required();
  pilot_cmd->add_option("--sigma", pilot_sigma, "Noise standard deviation")->capture_default_str();
  pilot_cmd->add_option("--clean", pilot_clean, "Clean reference; prints PSNR");
  add_pilot_knobs(pilot_cmd, pflags);
  add_common(pilot_cmd, common);

  // inspect
  auto* inspect = app.add_subcommand("inspect", "Dump feature maps of one block");
  std::string inspect_model, inspect_noisy, inspect_ref, inspect_prefix = "features";
  int inspect_layer = 1;
  DenoiseFlags iflags;
  inspect->add_option("--model", inspect_model, "Weight file")->required();
  inspect->add_option("--noisy", inspect_noisy, "Noisy image")->required();
  inspect->add_option("--ref", inspect_ref, "Reference origin ROW,COL")->required();
  inspect->add_option("--layer", inspect_layer, "Layer (1-based)")->capture_default_str();
  inspect->add_option("--out-prefix", inspect_prefix, "Output file prefix")->capture_default_str();
  add_denoise_knobs(inspect, iflags);
  add_common(inspect, common);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of all backward passes");
  int gradcheck_seeds = 20;
  gradcheck->add_option("--seeds", gradcheck_seeds, "Number of random seeds")->capture_default_str();
  add_common(gradcheck, common);

  std::vector<std::string> argv_storage{"bmcnn"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsageError;
  }

  if (common.threads > 0) set_num_threads(common.threads);

  try {
    if (*denoise) {
      const Network<float> net = load_model(model_path);
      const DenoiseConfig cfg = resolve_denoise(dflags, &net.spec());
      if (common.dump_config) {
        out << json{{"command", "denoise"}, {"config", to_json(cfg)}, {"threads", num_threads()}}.dump(2) << "\n";
        return kSuccess;
      }
      const GrayImage noisy = load_image(in_path);
      const GrayImage result = denoise_image(noisy, net, cfg, nullptr, &err);
      save_image(out_path, result);
      if (!clean_path.empty()) {
        const GrayImage clean = load_image(clean_path);
        out << "psnr_noisy " << format_double(psnr(noisy, clean)) << "\n";
        out << "psnr_denoised " << format_double(psnr(result, clean)) << "\n";
      }
      return kSuccess;
    }

    if (*train_cmd) {
      if (reg == "l2") {
        tcfg.adam.regularizer = nn::Regularizer::L2;
      } else if (reg == "l1") {
        tcfg.adam.regularizer = nn::Regularizer::L1;
      } else {
        throw ConfigError("regularizer must be l1 or l2");
      }
      if (train_pilot == "bm3d-lite") {
        tcfg.pilot = PilotKind::Bm3dLite;
      } else if (train_pilot == "none") {
        tcfg.pilot = PilotKind::None;
      } else {
        throw ConfigError("training pilot must be bm3d-lite or none");
      }
      tcfg.window = parse_window(train_window);
      tcfg.pilot_cfg = resolve_pilot(tpilot, tcfg.sigma);
      tcfg.fresh_noise_per_epoch = !fixed_noise;
      tcfg.deterministic = common.deterministic;
      tcfg.seed = common.seed;
      validate(tcfg);
      if (common.dump_config) {
        out << json{{"command", "train"}, {"config", to_json(tcfg)}, {"threads", num_threads()}}.dump(2) << "\n";
        return kSuccess;
      }
      const TrainResult result = train(tcfg, [&](long it, double loss) {
        if (log_every > 0 && it % log_every == 0) err << "iteration " << it << " loss " << loss << "\n";
      });
      write_file(train_out, save_weights(result.net));
      if (!loss_csv.empty()) {
        std::ofstream csv(loss_csv);
        if (!csv) throw FormatError("cannot write '" + loss_csv + "'");
        const auto smoothed = smooth(result.loss_curve, tcfg.smoothing_window);
        csv << "iteration,loss,smoothed_loss\n";
        for (std::size_t i = 0; i < smoothed.size(); ++i) {
          csv << i + 1 << ',' << result.loss_curve[i] << ',' << smoothed[i] << '\n';
        }
      }
      if (!result.loss_curve.empty()) {
        const auto smoothed = smooth(result.loss_curve, tcfg.smoothing_window);
        out << "final_smoothed_loss " << smoothed.back() << "\n";
      }
      return kSuccess;
    }

    if (*bench) {
      std::map<int, Network<float>> nets;
      for (const auto& path : bench_models) {
        Network<float> net = load_model(path);
        const int tag = net.spec().sigma_tag;
        nets.emplace(tag, std::move(net));
      }
      const NetworkSpec* spec_hint = nets.empty() ? nullptr : &nets.begin()->second.spec();
      DenoiseConfig cfg = resolve_denoise(bflags, spec_hint);
      if (use_zero_network) {
        for (double s : bench_sigmas) {
          nets.emplace(static_cast<int>(std::lround(s)),
                       zero_network<float>(NetworkSpec{zero_depth, zero_width, cfg.k, cfg.n_patch,
                                                       static_cast<int>(std::lround(s))}));
        }
      }
      if (common.dump_config) {
        json sigmas = bench_sigmas;
        out << json{{"command", "bench"}, {"config", to_json(cfg)}, {"sigmas", sigmas}, {"seed", common.seed}}.dump(2)
            << "\n";
        return kSuccess;
      }
      std::vector<NamedImage> images;
      {
        std::vector<std::filesystem::path> files;
        if (!std::filesystem::is_directory(bench_images)) throw DatasetError("image directory '" + bench_images + "' not found");
        for (const auto& e : std::filesystem::directory_iterator(bench_images)) {
          const auto ext = e.path().extension();
          if (e.is_regular_file() && (ext == ".pgm" || ext == ".pfm")) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw DatasetError("no PGM/PFM images in '" + bench_images + "'");
        for (const auto& f : files) images.push_back({f.stem().string(), load_image(f)});
      }
      const BenchReport report = benchmark(images, nets, cfg, bench_sigmas, common.seed);
      out << report.to_table();
      if (!bench_csv.empty()) {
        const std::string csv = report.to_csv();
        write_file(bench_csv, std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
      }
      return kSuccess;
    }

    if (*match_cmd) {
      mcfg.window = parse_window(match_window);
      const Coord ref = parse_coord(match_ref);
      if (common.dump_config) {
        out << json{{"command", "match"},
                    {"config", {{"k", mcfg.k}, {"window", window_text(mcfg.window)}, {"n_patch", mcfg.n_patch}}},
                    {"ref", {ref.row, ref.col}}}
                   .dump(2)
            << "\n";
        return kSuccess;
      }
      const GrayImage pilot = load_image(match_pilot);
      for (const Match& m : find_similar(pilot, ref, mcfg)) {
        out << m.origin.row << ' ' << m.origin.col << ' ' << format_double(m.distance) << "\n";
      }
      return kSuccess;
    }

    if (*pilot_cmd) {
      const PilotConfig cfg = resolve_pilot(pflags, pilot_sigma);
      if (common.dump_config) {
        out << json{{"command", "pilot"}, {"config", to_json(cfg)}}.dump(2) << "\n";
        return kSuccess;
      }
      const GrayImage noisy = load_image(pilot_in);
      const GrayImage result = bm3d_lite_denoise(noisy, cfg);
      save_image(pilot_out, result);
      if (!pilot_clean.empty()) {
        const GrayImage clean = load_image(pilot_clean);
        out << "psnr_noisy " << format_double(psnr(noisy, clean)) << "\n";
        out << "psnr_pilot " << format_double(psnr(result, clean)) << "\n";
      }
      return kSuccess;
    }

    if (*inspect) {
      const Network<float> net = load_model(inspect_model);
      const DenoiseConfig cfg = resolve_denoise(iflags, &net.spec());
      const Coord ref = parse_coord(inspect_ref);
      if (common.dump_config) {
        out << json{{"command", "inspect"}, {"config", to_json(cfg)}, {"layer", inspect_layer}}.dump(2) << "\n";
        return kSuccess;
      }
      const GrayImage noisy = load_image(inspect_noisy);
      const GrayImage pilot = make_pilot(noisy, cfg);
      std::vector<Coord> origins;
      for (const Match& m : find_similar(pilot, ref, {cfg.k, cfg.window, cfg.n_patch})) origins.push_back(m.origin);
      const PatchBlock block = assemble_block(noisy, pilot, origins, cfg.n_patch);
      const auto planes = inspect_features(net, block, inspect_layer);
      const auto paths = write_feature_planes(planes, inspect_prefix);
      out << "layer " << inspect_layer << " (" << stage_name(stage_of(inspect_layer, net.depth())) << "): "
          << planes.size() << " planes\n";
      for (const auto& p : paths) out << p.string() << "\n";
      return kSuccess;
    }

    if (*gradcheck) {
      if (common.dump_config) {
        out << json{{"command", "gradcheck"}, {"seeds", gradcheck_seeds}, {"seed", common.seed}}.dump(2) << "\n";
        return kSuccess;
      }
      bool ok = true;
      std::map<std::string, std::pair<double, double>> worst;  // name -> (error, tolerance)
      for (const auto& c : diagnostics::run_gradcheck_suite(common.seed, gradcheck_seeds)) {
        auto& w = worst[c.name];
        w.first = std::max(w.first, c.report.max_rel_error());
        w.second = c.tolerance;
        ok = ok && c.passed();
      }
      for (const auto& [name, w] : worst) {
        char line[160];
        std::snprintf(line, sizeof line, "%-28s max_rel_error %.3e  tolerance %.0e  %s\n", name.c_str(), w.first,
                      w.second, w.first < w.second ? "PASS" : "FAIL");
        out << line;
      }
      return ok ? kSuccess : kNumericalError;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsageError;
}

}  // namespace bmcnn::cli
