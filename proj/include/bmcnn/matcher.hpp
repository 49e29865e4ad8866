#pragma once

#include <vector>

#include "bmcnn/image.hpp"
#include "bmcnn/patching.hpp"

namespace bmcnn {

/// Search window half-size meaning "the whole image".
inline constexpr int kFullWindow = -1;

struct MatchConfig {
  int k = 4;
  int window = 20;  ///< half-size in pixels around the reference origin, or kFullWindow
  int n_patch = 20;
};

struct Match {
  Coord origin;
  double distance = 0.0;
};

/// k noisy patches and their k pilot counterparts, reference first.
struct PatchBlock {
  int k = 0;
  int n_patch = 0;
  std::vector<Coord> origins;
  std::vector<PatchArray> channels;  ///< 2k planes: noisy 0..k-1, pilot k..2k-1
};

/// Sum of squared differences.
double dissimilarity(const Patch& p, const Patch& q);

/// The k best matches of the reference patch in `pilot`, reference first, then by
/// (distance, raster order of origin).
std::vector<Match> find_similar(const GrayImage& pilot, Coord ref_origin, const MatchConfig& cfg);

/// Number of candidate origins inside the clipped search window.
int candidate_count(const GrayImage& image, Coord ref_origin, const MatchConfig& cfg);

PatchBlock assemble_block(const GrayImage& noisy, const GrayImage& pilot, const std::vector<Coord>& origins,
                          int n_patch);

struct DistanceMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Moments of the noisy-patch distance when both patches carry independent
/// N(0, sigma^2) noise and their clean distance is d_clean.
DistanceMoments match_distance_stats(double sigma, int n_patch, double d_clean);

}  // namespace bmcnn
