#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bmcnn/errors.hpp"
#include "bmcnn/pilot.hpp"
#include "bmcnn/rng.hpp"
#include "test_support.hpp"

using namespace bmcnn;

namespace {

PatchArray random_patch(int n, std::uint64_t seed) {
  const CounterRng rng(seed);
  PatchArray p(n, n);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.gaussian(static_cast<std::uint64_t>(i)) * 40.0;
  return p;
}

// Textbook DCT-II coefficient with the orthonormal scale factors.
double naive_dct_coeff(const PatchArray& x, int u, int v) {
  const int n = static_cast<int>(x.rows());
  auto alpha = [n](int f) { return f == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n); };
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      acc += x(i, j) * std::cos(std::numbers::pi * (2 * i + 1) * u / (2.0 * n)) *
             std::cos(std::numbers::pi * (2 * j + 1) * v / (2.0 * n));
  return alpha(u) * alpha(v) * acc;
}

}  // namespace

TEST_CASE("dct2") {
  SUBCASE("constant patch has only a DC coefficient N*c") {
    const PatchArray c = PatchArray::Constant(8, 8, 3.5);
    const PatchArray d = dct2(c);
    CHECK(d(0, 0) == doctest::Approx(8 * 3.5).epsilon(1e-14));
    PatchArray ac = d;
    ac(0, 0) = 0.0;
    CHECK(ac.abs().maxCoeff() < 1e-12);
  }
  SUBCASE("matches the textbook sum") {
    const PatchArray x = random_patch(6, 2);
    const PatchArray d = dct2(x);
    for (int u = 0; u < 6; ++u)
      for (int v = 0; v < 6; ++v) CHECK(std::abs(d(u, v) - naive_dct_coeff(x, u, v)) < 1e-10);
  }
  SUBCASE("Parseval and round trip on random 8x8 patches") {
    for (std::uint64_t s = 0; s < 50; ++s) {
      const PatchArray x = random_patch(8, 100 + s);
      const PatchArray d = dct2(x);
      CHECK(std::abs(d.square().sum() - x.square().sum()) / x.square().sum() < 1e-12);
      CHECK((idct2(d) - x).abs().maxCoeff() < 1e-9);
    }
  }
  CHECK_THROWS_AS(dct2(PatchArray::Zero(3, 4)), DimensionError);
}

TEST_CASE("haar1d") {
  SUBCASE("pair (a, a)") {
    Eigen::VectorXd x(2);
    x << 3.0, 3.0;
    const Eigen::VectorXd h = haar1d(x);
    CHECK(h(0) == doctest::Approx(3.0 * std::sqrt(2.0)));
    CHECK(std::abs(h(1)) < 1e-15);
  }
  SUBCASE("equal stack keeps only the scaling coefficient") {
    const Eigen::VectorXd h = haar1d(Eigen::VectorXd::Constant(8, -2.0));
    CHECK(h(0) == doctest::Approx(-2.0 * std::sqrt(8.0)));
    CHECK(h.tail(7).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("energy preserved and inverse exact") {
    const CounterRng rng(9);
    for (int k : {1, 2, 4, 8, 16}) {
      Eigen::VectorXd x(k);
      for (int i = 0; i < k; ++i) x(i) = rng.gaussian(static_cast<std::uint64_t>(k * 31 + i));
      const Eigen::VectorXd h = haar1d(x);
      CHECK(std::abs(h.squaredNorm() - x.squaredNorm()) < 1e-12 * (1.0 + x.squaredNorm()));
      CHECK((ihaar1d(h) - x).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((haar_matrix(k) * x - h).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((haar_matrix(k) * haar_matrix(k).transpose() - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  CHECK_THROWS_AS(haar1d(Eigen::VectorXd::Zero(3)), ConfigError);
  CHECK(is_power_of_two(1));
  CHECK_FALSE(is_power_of_two(6));
  CHECK_FALSE(is_power_of_two(0));
}

TEST_CASE("forward_3d is orthonormal and invertible") {
  std::vector<PatchArray> stack;
  for (std::uint64_t s = 0; s < 4; ++s) stack.push_back(random_patch(5, 40 + s));
  const CoefficientBlock b = forward_3d(stack);
  CHECK(b.k == 4);
  CHECK(b.coeffs.rows() == 4);
  CHECK(b.coeffs.cols() == 25);
  double energy = 0.0;
  for (const auto& p : stack) energy += p.square().sum();
  CHECK(std::abs(b.coeffs.square().sum() - energy) / energy < 1e-12);
  const auto back = inverse_3d(b);
  for (std::size_t i = 0; i < 4; ++i) CHECK((back[i] - stack[i]).abs().maxCoeff() < 1e-9);

  SUBCASE("all-lowpass coefficient is sqrt(k) N times the mean") {
    std::vector<PatchArray> flat(4, PatchArray::Constant(5, 5, 2.0));
    CHECK(forward_3d(flat).coeffs(0, 0) == doctest::Approx(2.0 * 5.0 * 2.0));
  }
  CHECK_THROWS_AS(forward_3d(std::vector<PatchArray>(3, PatchArray::Zero(4, 4))), ConfigError);
}

TEST_CASE("hard_threshold") {
  CoefficientBlock b{2, 3, Eigen::ArrayXXd(2, 9)};
  const CounterRng rng(3);
  for (Eigen::Index i = 0; i < b.coeffs.size(); ++i) b.coeffs.data()[i] = rng.gaussian(static_cast<std::uint64_t>(i)) * 5.0;
  b.coeffs(0, 0) = 0.1;
  b.coeffs(1, 3) = 2.0;  // exactly at the threshold survives

  SUBCASE("zero threshold is the identity") { CHECK((hard_threshold(b, 0.0).coeffs == b.coeffs).all()); }
  SUBCASE("huge threshold keeps only the DC") {
    const auto t = hard_threshold(b, 1e9);
    CHECK(t.coeffs(0, 0) == 0.1);
    CHECK((t.coeffs != 0.0).count() == 1);
  }
  SUBCASE("element-wise against a scalar loop") {
    const auto t = hard_threshold(b, 2.0);
    for (Eigen::Index r = 0; r < 2; ++r)
      for (Eigen::Index c = 0; c < 9; ++c) {
        double want = b.coeffs(r, c);
        if (!(r == 0 && c == 0) && std::abs(want) < 2.0) want = 0.0;
        CHECK(t.coeffs(r, c) == want);
        CHECK(std::abs(t.coeffs(r, c)) <= std::abs(b.coeffs(r, c)));
      }
  }
  CHECK_THROWS_AS(hard_threshold(b, -1.0), ConfigError);
}

TEST_CASE("bm3d_lite_denoise") {
  SUBCASE("sigma 0 leaves the image unchanged") {
    const GrayImage im = testing::random_image(40, 40, 21);
    PilotConfig cfg;
    cfg.sigma = 0.0;
    CHECK((bm3d_lite_denoise(im, cfg).pixels() - im.pixels()).abs().maxCoeff() < 1e-6);
  }
  SUBCASE("constant image: residual variance below 5% of the noise variance") {
    const GrayImage flat(128, 128, 128.0);
    const GrayImage noisy = add_awgn(flat, {25.0, 12});
    const ImageArray out = bm3d_lite_denoise(noisy, PilotConfig{}).pixels();
    const double var = (out - out.mean()).square().mean();
    CHECK(var < 0.05 * 625.0);
  }
  SUBCASE("natural 256x256 crop at sigma 25 gains at least 4 dB") {
    const GrayImage clean = load_image(testing::data_dir() / "camera256.pgm");
    const GrayImage noisy = add_awgn(clean, {25.0, 7});
    const GrayImage pilot = bm3d_lite_denoise(noisy, PilotConfig{});
    CHECK(psnr(pilot, clean) >= psnr(noisy, clean) + 4.0);
    CHECK(bm3d_lite_denoise(noisy, PilotConfig{}) == pilot);
  }
  SUBCASE("never worse than the noisy input on the held-out crops") {
    for (const char* name : {"camera.pgm", "gravel.pgm", "cell.pgm", "page.pgm"}) {
      const GrayImage clean = load_image(testing::data_dir() / "heldout" / name);
      for (double sigma : {10.0, 25.0, 50.0}) {
        const GrayImage noisy = add_awgn(clean, {sigma, 3});
        PilotConfig cfg;
        cfg.sigma = sigma;
        CHECK(psnr(bm3d_lite_denoise(noisy, cfg), clean) >= psnr(noisy, clean));
      }
    }
  }
  SUBCASE("small images shrink the stack") {
    const GrayImage tiny = add_awgn(GrayImage(9, 9, 50.0), {10.0, 1});
    PilotConfig cfg;
    cfg.sigma = 10.0;
    CHECK(bm3d_lite_denoise(tiny, cfg).height() == 9);
  }
  SUBCASE("config errors") {
    const GrayImage im(32, 32, 0.0);
    PilotConfig cfg;
    cfg.k = 6;
    CHECK_THROWS_AS(bm3d_lite_denoise(im, cfg), ConfigError);
    CHECK_THROWS_AS(bm3d_lite_denoise(GrayImage(6, 6), PilotConfig{}), ConfigError);
  }
}
