#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bmcnn/neural/gradcheck.hpp"

namespace bmcnn::diagnostics {

/// One finite-difference check of analytic gradients at 64-bit precision.
struct GradCheckCase {
  std::string name;
  double tolerance = 0.0;
  nn::GradCheckReport report;

  bool passed() const { return report.max_rel_error() < tolerance; }
};

inline constexpr double kSingleLayerTolerance = 1e-6;
inline constexpr double kStackTolerance = 1e-5;
inline constexpr double kNetworkTolerance = 1e-4;

/// Each case draws its tensors and parameters from `seed` and differentiates a random
/// linear projection of the layer output (or the L1 loss, for the network case).
GradCheckCase check_conv_layer(std::uint64_t seed);
GradCheckCase check_batchnorm_layer(std::uint64_t seed);
GradCheckCase check_relu_layer(std::uint64_t seed);
GradCheckCase check_conv_bn_relu(std::uint64_t seed);
GradCheckCase check_network_l1(std::uint64_t seed, int depth = 5);

/// All cases above for seeds base_seed .. base_seed + seeds - 1.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t base_seed, int seeds);

}  // namespace bmcnn::diagnostics
