#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bmcnn/errors.hpp"
#include "bmcnn/patching.hpp"
#include "bmcnn/rng.hpp"
#include "test_support.hpp"

using namespace bmcnn;

TEST_CASE("grid_starts and build_grid") {
  SUBCASE("100x100, n=20, stride 10") {
    CHECK(grid_starts(100, 20, 10) == std::vector<int>{0, 10, 20, 30, 40, 50, 60, 70, 80});
    CHECK(build_grid(100, 100, 20, 10).positions.size() == 81);
  }
  SUBCASE("180x180, n=20, stride 20 gives the 81 training blocks") {
    CHECK(build_grid(180, 180, 20, 20).positions.size() == 81);
    CHECK(81 * 400 * 8 == 259200);
  }
  SUBCASE("flush-to-border") {
    CHECK(grid_starts(25, 20, 10) == std::vector<int>{0, 5});
    CHECK(build_grid(25, 25, 20, 10).positions.size() == 4);
    CHECK(grid_starts(20, 20, 7) == std::vector<int>{0});
  }
  SUBCASE("raster order") {
    const PatchGrid g = build_grid(30, 40, 20, 10);
    REQUIRE(g.positions.size() == 2 * 3);
    CHECK(g.positions[0] == Coord{0, 0});
    CHECK(g.positions[1] == Coord{0, 10});
    CHECK(g.positions[2] == Coord{0, 20});
    CHECK(g.positions[3] == Coord{10, 0});
    CHECK(std::is_sorted(g.positions.begin(), g.positions.end()));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(build_grid(10, 30, 20, 5), ConfigError);
    CHECK_THROWS_AS(build_grid(30, 30, 20, 0), ConfigError);
    CHECK_THROWS_AS(build_grid(30, 30, 0, 1), ConfigError);
  }
}

TEST_CASE("build_grid covers every pixel for random sizes") {
  const CounterRng rng(77);
  for (std::uint64_t t = 0; t < 300; ++t) {
    const int h = 1 + static_cast<int>(rng.below(4 * t, 60));
    const int w = 1 + static_cast<int>(rng.below(4 * t + 1, 60));
    const int n = 1 + static_cast<int>(rng.below(4 * t + 2, static_cast<std::uint64_t>(std::min(h, w))));
    const int s = 1 + static_cast<int>(rng.below(4 * t + 3, 25));
    const PatchGrid g = build_grid(h, w, n, s);
    Eigen::ArrayXXi hits = Eigen::ArrayXXi::Zero(h, w);
    for (const Coord& p : g.positions) {
      CHECK(p.row + n <= h);
      CHECK(p.col + n <= w);
      hits.block(p.row, p.col, n, n) += 1;
    }
    CHECK(hits.minCoeff() >= 1);
  }
}

TEST_CASE("extract_patch") {
  const GrayImage im = testing::random_image(12, 9, 4);
  SUBCASE("whole image") {
    const GrayImage sq = crop(im, {0, 0}, 9, 9);
    CHECK((extract_patch(sq, {0, 0}, 9).data == sq.pixels()).all());
  }
  SUBCASE("single pixel") {
    const Patch p = extract_patch(im, {7, 3}, 1);
    CHECK(p.data(0, 0) == im(7, 3));
    CHECK(p.origin == Coord{7, 3});
  }
  SUBCASE("adjacent extractions agree on shared pixels") {
    const Patch a = extract_patch(im, {2, 2}, 5);
    const Patch b = extract_patch(im, {3, 4}, 5);
    for (int r = 3; r < 7; ++r)
      for (int c = 4; c < 7; ++c) CHECK(a.data(r - 2, c - 2) == b.data(r - 3, c - 4));
  }
  SUBCASE("out of bounds") {
    CHECK_THROWS_AS(extract_patch(im, {8, 0}, 5), BoundsError);
    CHECK_THROWS_AS(extract_patch(im, {0, -1}, 5), BoundsError);
  }
}

TEST_CASE("gaussian_weight") {
  const Eigen::Vector2d c(9.5, 9.5);
  CHECK(gaussian_weight(c, c, 5.0) == doctest::Approx(1.0 / std::sqrt(50.0 * std::numbers::pi)));
  CHECK(std::abs(gaussian_weight(c, c, 5.0) - 0.079788) < 1e-6);
  CHECK(std::abs(gaussian_weight(c, c + Eigen::Vector2d(3.0, 4.0), 5.0) - 0.048394) < 1e-6);
  CHECK(gaussian_weight(c, c + Eigen::Vector2d(5.0, 0.0), 5.0) ==
        doctest::Approx(0.07978845608028654 * std::exp(-0.5)).epsilon(1e-12));
  SUBCASE("radially symmetric") {
    const double w = gaussian_weight(c, c + Eigen::Vector2d(3.0, 4.0), 5.0);
    CHECK(gaussian_weight(c, c + Eigen::Vector2d(-4.0, 3.0), 5.0) == doctest::Approx(w).epsilon(1e-15));
    CHECK(gaussian_weight(c, c + Eigen::Vector2d(0.0, -5.0), 5.0) == doctest::Approx(w).epsilon(1e-15));
  }
  CHECK_THROWS_AS(gaussian_weight(c, c, 0.0), ConfigError);
}

TEST_CASE("gaussian_window is centred and symmetric") {
  const PatchArray w = gaussian_window(20, 5.0);
  CHECK(w.rows() == 20);
  CHECK(patch_center({0, 0}, 20) == Eigen::Vector2d(9.5, 9.5));
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 20; ++c) {
      CHECK(w(r, c) == w(19 - r, c));
      CHECK(w(r, c) == w(c, r));
    }
  CHECK(w(9, 9) == w.maxCoeff());
}

namespace {

std::vector<Patch> exact_patches(const GrayImage& im, const PatchGrid& g) {
  std::vector<Patch> out;
  for (const Coord& p : g.positions) out.push_back(extract_patch(im, p, g.n_patch));
  return out;
}

const AggregationMode kModes[] = {MeanAggregation{}, GaussianAggregation{5.0}};

}  // namespace

TEST_CASE("aggregate") {
  SUBCASE("non-overlapping tiling is an exact mosaic") {
    const GrayImage im = testing::random_image(40, 60, 12);
    const auto patches = exact_patches(im, build_grid(40, 60, 20, 20));
    CHECK(aggregate(patches, 40, 60, MeanAggregation{}) == im);
    CHECK((aggregate(patches, 40, 60, GaussianAggregation{5.0}).pixels() - im.pixels()).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("constant patches give a constant image") {
    const GrayImage c(33, 27, 71.25);
    const auto patches = exact_patches(c, build_grid(33, 27, 10, 3));
    for (const auto& mode : kModes) CHECK((aggregate(patches, 33, 27, mode).pixels() - 71.25).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("two estimates 10 and 30 average to 20") {
    std::vector<Patch> patches{{{0, 0}, PatchArray::Constant(2, 2, 10.0)}, {{0, 1}, PatchArray::Constant(2, 2, 30.0)}};
    const GrayImage out = aggregate(patches, 2, 3, MeanAggregation{});
    CHECK(out(0, 1) == 20.0);
    CHECK(out(1, 1) == 20.0);
    CHECK(out(0, 0) == 10.0);
    CHECK(out(0, 2) == 30.0);
  }
  SUBCASE("uncovered pixel names the pixel") {
    std::vector<Patch> patches{{{0, 0}, PatchArray::Constant(2, 2, 1.0)}};
    try {
      aggregate(patches, 3, 3, MeanAggregation{});
      FAIL("expected CoverageError");
    } catch (const CoverageError& e) {
      CHECK(e.row() == 0);
      CHECK(e.col() == 2);
    }
  }
  SUBCASE("patch outside the buffer") {
    std::vector<Patch> patches{{{2, 2}, PatchArray::Constant(2, 2, 1.0)}};
    CHECK_THROWS_AS(aggregate(patches, 3, 3, MeanAggregation{}), BoundsError);
  }
}

TEST_CASE("aggregation is a convex combination") {
  const CounterRng rng(5);
  const PatchGrid g = build_grid(30, 30, 8, 3);
  std::vector<Patch> patches;
  std::uint64_t ctr = 0;
  for (const Coord& p : g.positions) {
    PatchArray d(8, 8);
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = 255.0 * rng.uniform(ctr++);
    patches.push_back({p, d});
  }
  for (const auto& mode : kModes) {
    const GrayImage out = aggregate(patches, 30, 30, mode);
    for (int r = 0; r < 30; ++r)
      for (int c = 0; c < 30; ++c) {
        double lo = 1e300, hi = -1e300;
        for (const Patch& p : patches) {
          if (r < p.origin.row || c < p.origin.col || r >= p.origin.row + 8 || c >= p.origin.col + 8) continue;
          lo = std::min(lo, p.data(r - p.origin.row, c - p.origin.col));
          hi = std::max(hi, p.data(r - p.origin.row, c - p.origin.col));
        }
        CHECK(out(r, c) >= lo - 1e-9);
        CHECK(out(r, c) <= hi + 1e-9);
      }
  }
}

TEST_CASE("aggregating exact patches reproduces the image") {
  const CounterRng rng(31);
  for (std::uint64_t t = 0; t < 20; ++t) {
    const int h = 20 + static_cast<int>(rng.below(3 * t, 40));
    const int w = 20 + static_cast<int>(rng.below(3 * t + 1, 40));
    const int n = 4 + static_cast<int>(rng.below(3 * t + 2, 16));
    const GrayImage im = testing::random_image(h, w, 1000 + t);
    const auto patches = exact_patches(im, build_grid(h, w, n, std::max(1, n / 2)));
    for (const auto& mode : kModes) CHECK((aggregate(patches, h, w, mode).pixels() - im.pixels()).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("strides wider than the patch are capped to keep coverage") {
  CHECK(grid_starts(50, 10, 25) == std::vector<int>{0, 10, 20, 30, 40});
}
