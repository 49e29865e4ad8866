#include "bmcnn/matcher.hpp"

#include <algorithm>
#include <string>

#include "bmcnn/errors.hpp"

namespace bmcnn {
namespace {

struct Window {
  int row_lo, row_hi, col_lo, col_hi;  // inclusive origin ranges

  int count() const { return (row_hi - row_lo + 1) * (col_hi - col_lo + 1); }
};

Window search_window(const GrayImage& image, Coord ref, const MatchConfig& cfg) {
  const int max_row = image.height() - cfg.n_patch;
  const int max_col = image.width() - cfg.n_patch;
  if (cfg.window == kFullWindow) return {0, max_row, 0, max_col};
  return {std::max(0, ref.row - cfg.window), std::min(max_row, ref.row + cfg.window), std::max(0, ref.col - cfg.window),
          std::min(max_col, ref.col + cfg.window)};
}

void validate(const GrayImage& image, Coord ref, const MatchConfig& cfg) {
  if (cfg.k < 1) throw ConfigError("k must be at least 1");
  if (cfg.window != kFullWindow && cfg.window < 0) throw ConfigError("search window must be non-negative or full");
  if (cfg.n_patch < 1 || ref.row < 0 || ref.col < 0 || ref.row + cfg.n_patch > image.height() ||
      ref.col + cfg.n_patch > image.width()) {
    throw BoundsError("reference patch at (" + std::to_string(ref.row) + ", " + std::to_string(ref.col) +
                      ") exceeds image bounds");
  }
}

// Row-major accumulation; matches dissimilarity() bit for bit.
double ssd(const double* a, const double* b, int stride, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i, a += stride, b += stride) {
    for (int j = 0; j < n; ++j) {
      const double d = a[j] - b[j];
      acc += d * d;
    }
  }
  return acc;
}

}  // namespace

double dissimilarity(const Patch& p, const Patch& q) {
  if (p.data.rows() != q.data.rows() || p.data.cols() != q.data.cols()) {
    throw DimensionError("dissimilarity: patch sizes differ");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.data.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.data.cols(); ++j) {
      const double d = p.data(i, j) - q.data(i, j);
      acc += d * d;
    }
  }
  return acc;
}

int candidate_count(const GrayImage& image, Coord ref_origin, const MatchConfig& cfg) {
  validate(image, ref_origin, cfg);
  return search_window(image, ref_origin, cfg).count();
}

std::vector<Match> find_similar(const GrayImage& pilot, Coord ref_origin, const MatchConfig& cfg) {
  validate(pilot, ref_origin, cfg);
  const Window win = search_window(pilot, ref_origin, cfg);
  if (win.count() < cfg.k) {
    throw ConfigError("search window holds " + std::to_string(win.count()) + " candidates, fewer than k = " +
                      std::to_string(cfg.k));
  }

  const int stride = pilot.width();
  const double* base = pilot.pixels().data();
  const double* ref = base + ref_origin.row * stride + ref_origin.col;

  // Candidates arrive in raster order, so a stable ordering on distance alone yields the
  // (distance, raster) tie-break. The kept list is bounded at k - 1 entries.
  const auto keep = static_cast<std::size_t>(cfg.k - 1);
  std::vector<Match> best;
  best.reserve(keep + 1);
  auto worse = [](const Match& a, const Match& b) { return a.distance < b.distance; };

  if (keep > 0) {
    for (int r = win.row_lo; r <= win.row_hi; ++r) {
      for (int c = win.col_lo; c <= win.col_hi; ++c) {
        if (r == ref_origin.row && c == ref_origin.col) continue;
        if (best.size() == keep && best.back().distance == 0.0) break;
        const double d = ssd(ref, base + r * stride + c, stride, cfg.n_patch);
        if (best.size() == keep && !(d < best.back().distance)) continue;
        const Match m{{r, c}, d};
        best.insert(std::upper_bound(best.begin(), best.end(), m, worse), m);
        if (best.size() > keep) best.pop_back();
      }
    }
  }

  std::vector<Match> out;
  out.reserve(static_cast<std::size_t>(cfg.k));
  out.push_back({ref_origin, 0.0});
  out.insert(out.end(), best.begin(), best.end());
  return out;
}

PatchBlock assemble_block(const GrayImage& noisy, const GrayImage& pilot, const std::vector<Coord>& origins,
                          int n_patch) {
  if (noisy.height() != pilot.height() || noisy.width() != pilot.width()) {
    throw DimensionError("noisy and pilot images differ in size");
  }
  if (origins.empty()) throw ConfigError("a block needs at least one origin");
  PatchBlock block;
  block.k = static_cast<int>(origins.size());
  block.n_patch = n_patch;
  block.origins = origins;
  block.channels.resize(2 * origins.size());
  for (std::size_t i = 0; i < origins.size(); ++i) {
    block.channels[i] = extract_patch(noisy, origins[i], n_patch).data;
    block.channels[origins.size() + i] = extract_patch(pilot, origins[i], n_patch).data;
  }
  return block;
}

DistanceMoments match_distance_stats(double sigma, int n_patch, double d_clean) {
  if (sigma < 0.0 || n_patch < 1 || d_clean < 0.0) throw ConfigError("match_distance_stats: invalid arguments");
  const double s2 = sigma * sigma;
  const double n2 = static_cast<double>(n_patch) * n_patch;
  return {d_clean + 2.0 * s2 * n2, 8.0 * s2 * n2 * (s2 + d_clean)};
}

}  // namespace bmcnn
