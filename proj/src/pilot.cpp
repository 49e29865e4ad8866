#include "bmcnn/pilot.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "bmcnn/errors.hpp"
#include "bmcnn/matcher.hpp"
#include "bmcnn/parallel.hpp"

namespace bmcnn {

Eigen::MatrixXd dct_matrix(int n) {
  Eigen::MatrixXd c(n, n);
  for (int u = 0; u < n; ++u) {
    const double scale = std::sqrt((u == 0 ? 1.0 : 2.0) / n);
    for (int x = 0; x < n; ++x) c(u, x) = scale * std::cos(std::numbers::pi * (2 * x + 1) * u / (2.0 * n));
  }
  return c;
}

PatchArray dct2(const PatchArray& patch) {
  if (patch.rows() != patch.cols()) throw DimensionError("dct2 expects a square patch");
  const Eigen::MatrixXd c = dct_matrix(static_cast<int>(patch.rows()));
  return (c * patch.matrix() * c.transpose()).array();
}

PatchArray idct2(const PatchArray& coeffs) {
  if (coeffs.rows() != coeffs.cols()) throw DimensionError("idct2 expects a square coefficient plane");
  const Eigen::MatrixXd c = dct_matrix(static_cast<int>(coeffs.rows()));
  return (c.transpose() * coeffs.matrix() * c).array();
}

bool is_power_of_two(int k) { return k >= 1 && (k & (k - 1)) == 0; }

Eigen::VectorXd haar1d(const Eigen::VectorXd& stack) {
  const int k = static_cast<int>(stack.size());
  if (!is_power_of_two(k)) throw ConfigError("Haar transform needs a power-of-two length, got " + std::to_string(k));
  Eigen::VectorXd out = stack;
  Eigen::VectorXd tmp(k);
  for (int len = k; len > 1; len /= 2) {
    const int half = len / 2;
    for (int i = 0; i < half; ++i) {
      tmp(i) = (out(2 * i) + out(2 * i + 1)) * std::numbers::sqrt2 / 2.0;
      tmp(half + i) = (out(2 * i) - out(2 * i + 1)) * std::numbers::sqrt2 / 2.0;
    }
    out.head(len) = tmp.head(len);
  }
  return out;
}

Eigen::VectorXd ihaar1d(const Eigen::VectorXd& coeffs) {
  const int k = static_cast<int>(coeffs.size());
  if (!is_power_of_two(k)) throw ConfigError("Haar transform needs a power-of-two length, got " + std::to_string(k));
  Eigen::VectorXd out = coeffs;
  Eigen::VectorXd tmp(k);
  for (int len = 2; len <= k; len *= 2) {
    const int half = len / 2;
    for (int i = 0; i < half; ++i) {
      tmp(2 * i) = (out(i) + out(half + i)) * std::numbers::sqrt2 / 2.0;
      tmp(2 * i + 1) = (out(i) - out(half + i)) * std::numbers::sqrt2 / 2.0;
    }
    out.head(len) = tmp.head(len);
  }
  return out;
}

Eigen::MatrixXd haar_matrix(int k) {
  Eigen::MatrixXd h(k, k);
  for (int j = 0; j < k; ++j) h.col(j) = haar1d(Eigen::VectorXd::Unit(k, j));
  return h;
}

namespace {

CoefficientBlock forward_3d(const std::vector<PatchArray>& stack, const Eigen::MatrixXd& dct,
                            const Eigen::MatrixXd& haar) {
  const int k = static_cast<int>(stack.size());
  const int n = static_cast<int>(stack.front().rows());
  Eigen::MatrixXd planes(k, n * n);
  for (int s = 0; s < k; ++s) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> coeff =
        dct * stack[static_cast<std::size_t>(s)].matrix() * dct.transpose();
    planes.row(s) = Eigen::Map<const Eigen::RowVectorXd>(coeff.data(), n * n);
  }
  return {k, n, (haar * planes).array()};
}

std::vector<PatchArray> inverse_3d(const CoefficientBlock& block, const Eigen::MatrixXd& dct,
                                   const Eigen::MatrixXd& haar) {
  const int n = block.n_patch;
  const Eigen::MatrixXd planes = haar.transpose() * block.coeffs.matrix();
  std::vector<PatchArray> out;
  out.reserve(static_cast<std::size_t>(block.k));
  for (int s = 0; s < block.k; ++s) {
    const Eigen::RowVectorXd row = planes.row(s);
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> coeff(row.data(), n,
                                                                                                       n);
    out.emplace_back((dct.transpose() * coeff * dct).array());
  }
  return out;
}

void check_stack(const std::vector<PatchArray>& stack) {
  if (stack.empty()) throw ConfigError("empty patch stack");
  if (!is_power_of_two(static_cast<int>(stack.size()))) throw ConfigError("stack depth must be a power of two");
  for (const auto& p : stack) {
    if (p.rows() != stack.front().rows() || p.cols() != p.rows()) throw DimensionError("stack patches must be equal squares");
  }
}

}  // namespace

CoefficientBlock forward_3d(const std::vector<PatchArray>& stack) {
  check_stack(stack);
  const int n = static_cast<int>(stack.front().rows());
  return forward_3d(stack, dct_matrix(n), haar_matrix(static_cast<int>(stack.size())));
}

std::vector<PatchArray> inverse_3d(const CoefficientBlock& block) {
  if (!is_power_of_two(block.k)) throw ConfigError("stack depth must be a power of two");
  return inverse_3d(block, dct_matrix(block.n_patch), haar_matrix(block.k));
}

CoefficientBlock hard_threshold(const CoefficientBlock& block, double threshold) {
  if (threshold < 0.0) throw ConfigError("threshold must be non-negative");
  CoefficientBlock out = block;
  out.coeffs = (block.coeffs.abs() < threshold).select(0.0, block.coeffs);
  if (out.coeffs.size() > 0) out.coeffs(0, 0) = block.coeffs(0, 0);
  return out;
}

GrayImage bm3d_lite_denoise(const GrayImage& noisy, const PilotConfig& cfg) {
  if (!is_power_of_two(cfg.k)) throw ConfigError("pilot k must be a power of two, got " + std::to_string(cfg.k));
  if (!(cfg.lambda_thr > 0.0)) throw ConfigError("pilot threshold multiplier must be positive");
  if (cfg.sigma < 0.0) throw ConfigError("pilot sigma must be non-negative");
  const PatchGrid grid = build_grid(noisy.height(), noisy.width(), cfg.n_patch, cfg.stride);

  const Eigen::MatrixXd dct = dct_matrix(cfg.n_patch);
  const double threshold = cfg.lambda_thr * cfg.sigma;

  struct Group {
    std::vector<Coord> origins;
    std::vector<PatchArray> patches;
    double weight = 0.0;
  };
  std::vector<Group> groups(grid.positions.size());

  parallel_for(grid.positions.size(), [&](std::size_t i) {
    const Coord ref = grid.positions[i];
    MatchConfig match{cfg.k, cfg.window, cfg.n_patch};
    // Small images may not offer k candidates; shrink to the largest power of two that fits.
    const int available = candidate_count(noisy, ref, match);
    while (match.k > available) match.k /= 2;
    const auto matches = find_similar(noisy, ref, match);

    std::vector<PatchArray> stack;
    stack.reserve(matches.size());
    for (const Match& m : matches) stack.push_back(extract_patch(noisy, m.origin, cfg.n_patch).data);

    const Eigen::MatrixXd haar = haar_matrix(match.k);
    const CoefficientBlock kept = hard_threshold(forward_3d(stack, dct, haar), threshold);
    const auto nonzero = (kept.coeffs != 0.0).count();

    Group& g = groups[i];
    g.patches = inverse_3d(kept, dct, haar);
    g.weight = 1.0 / (1.0 + static_cast<double>(nonzero));
    for (const Match& m : matches) g.origins.push_back(m.origin);
  });

  AggregationBuffer buffer(noisy.height(), noisy.width());
  for (const Group& g : groups)
    for (std::size_t s = 0; s < g.patches.size(); ++s) buffer.deposit(Patch{g.origins[s], g.patches[s]}, g.weight);
  return buffer.normalize();
}

}  // namespace bmcnn
