#pragma once

#include <Eigen/Core>

#include "bmcnn/image.hpp"
#include "bmcnn/patching.hpp"

namespace bmcnn {

/// Parameters of the collaborative hard-thresholding pre-denoiser.
struct PilotConfig {
  int n_patch = 8;
  int k = 8;  ///< stack depth, power of two
  int stride = 4;
  int window = 20;
  double lambda_thr = 2.7;
  double sigma = 25.0;
};

/// Orthonormal DCT-II basis, row u holds frequency u.
Eigen::MatrixXd dct_matrix(int n);

PatchArray dct2(const PatchArray& patch);
PatchArray idct2(const PatchArray& coeffs);

bool is_power_of_two(int k);

/// Orthonormal Haar analysis: output[0] is the scaling coefficient, followed by detail
/// coefficients from coarsest to finest.
Eigen::VectorXd haar1d(const Eigen::VectorXd& stack);
Eigen::VectorXd ihaar1d(const Eigen::VectorXd& coeffs);

/// k x k matrix H with haar1d(x) == H * x.
Eigen::MatrixXd haar_matrix(int k);

/// Row s holds the (row-major flattened) 2D coefficients of stack entry s after the
/// Haar transform along the stack. coeffs(0, 0) is the all-lowpass coefficient.
struct CoefficientBlock {
  int k = 0;
  int n_patch = 0;
  Eigen::ArrayXXd coeffs;
};

CoefficientBlock forward_3d(const std::vector<PatchArray>& stack);
std::vector<PatchArray> inverse_3d(const CoefficientBlock& block);

/// Zeroes every coefficient with |c| < threshold except the all-lowpass one.
CoefficientBlock hard_threshold(const CoefficientBlock& block, double threshold);

/// Grouping on the noisy image, 3D hard thresholding at lambda_thr * sigma, and
/// aggregation with weight 1 / (1 + retained non-zero coefficients).
GrayImage bm3d_lite_denoise(const GrayImage& noisy, const PilotConfig& cfg);

}  // namespace bmcnn
