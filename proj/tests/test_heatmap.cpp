#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "toothdet/heatmap.hpp"

using namespace toothdet;

TEST_CASE("HeatmapStack validates channel count", "[heatmap]") {
  CHECK_THROWS_AS(HeatmapStack({4, 4, 4}, 0), std::invalid_argument);
  CHECK_THROWS_AS(HeatmapStack({4, 4, 4}, 33), std::invalid_argument);
  const HeatmapStack s({4, 3, 2}, 5);
  CHECK(s.num_channels() == 5);
  CHECK(s.voxels() == 24);
}

TEST_CASE("render_gaussian hits exact values", "[heatmap]") {
  GaussianSpec spec;
  spec.center = {8, 8, 8};
  spec.sigma = {2, 2, 2};
  const VolumeD g = render_gaussian({17, 17, 17}, spec);

  CHECK(g.at(8, 8, 8) == 1.0);  // integer center renders an exact 1
  CHECK(g.at(10, 8, 8) == Catch::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(g.at(8, 10, 8) == g.at(10, 8, 8));  // isotropic symmetry
  // Separable product at a diagonal offset.
  CHECK(g.at(9, 10, 8) ==
        Catch::Approx(std::exp(-0.5 * (1 + 4) / 4.0)).epsilon(1e-12));
  // Beyond the truncation radius the field is exactly zero.
  CHECK(g.at(0, 0, 0) == 0.0);
  for (double v : g.data) CHECK((v == 0.0 || v >= kGaussianTruncation));
}

TEST_CASE("render_gaussian validates inputs", "[heatmap]") {
  GaussianSpec spec;
  spec.center = {2, 2, 2};
  spec.sigma = {1, 0, 1};
  CHECK_THROWS_AS(render_gaussian({8, 8, 8}, spec), std::invalid_argument);
  spec.sigma = {1, 1, 1};
  spec.center = {8.2, 2, 2};  // past the 7.5 face
  CHECK_THROWS_AS(render_gaussian({8, 8, 8}, spec), std::invalid_argument);
}

TEST_CASE("encode_ground_truth renders one channel per tooth", "[heatmap]") {
  GroundTruth gts;
  gts.push_back({ToothId(11), BBox3{{10, 10, 10}, {22, 16, 16}}});
  gts.push_back({ToothId(36), BBox3{{30, 30, 8}, {42, 42, 20}}});
  const HeatmapStack stack = encode_ground_truth(gts, {48, 48, 32});
  REQUIRE(stack.num_channels() == kNumTeeth);

  const int c11 = ToothId(11).channel(), c36 = ToothId(36).channel();
  CHECK(stack.channels[c11].at(16, 13, 13) == 1.0);  // box center
  CHECK(stack.channels[c36].at(36, 36, 14) == 1.0);
  for (int c = 0; c < kNumTeeth; ++c) {
    if (c == c11 || c == c36) continue;
    for (double v : stack.channels[c].data) REQUIRE(v == 0.0);
  }

  // sigma follows each axis extent: extent (12, 6, 6) -> sigma (2, 1, 1).
  CHECK(stack.channels[c11].at(18, 13, 13) ==
        Catch::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(stack.channels[c11].at(16, 14, 13) ==
        Catch::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("encode_ground_truth isotropic mode uses the max extent",
          "[heatmap]") {
  GroundTruth gts;
  gts.push_back({ToothId(11), BBox3{{10, 10, 10}, {22, 16, 16}}});
  const HeatmapStack stack =
      encode_ground_truth(gts, {48, 48, 32}, 1.0 / 6.0, true);
  const int c = ToothId(11).channel();
  // All axes use sigma = 12/6 = 2.
  CHECK(stack.channels[c].at(16, 15, 13) ==
        Catch::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("encode_ground_truth validates inputs", "[heatmap]") {
  GroundTruth gts;
  gts.push_back({ToothId(11), BBox3{{0, 0, 0}, {4, 4, 4}}});
  gts.push_back({ToothId(11), BBox3{{8, 8, 8}, {12, 12, 12}}});
  CHECK_THROWS_AS(encode_ground_truth(gts, {16, 16, 16}),
                  std::invalid_argument);
  gts.pop_back();
  CHECK_THROWS_AS(encode_ground_truth(gts, {16, 16, 16}, 0.0),
                  std::invalid_argument);
  gts[0].second.hi[1] = 0;  // degenerate extent on y
  CHECK_THROWS_AS(encode_ground_truth(gts, {16, 16, 16}),
                  std::invalid_argument);
}

TEST_CASE("decode_peaks finds per-channel argmax voxels", "[heatmap]") {
  HeatmapStack stack({5, 4, 3}, 2);
  stack.channels[0].at(3, 1, 2) = 0.9;
  stack.channels[0].at(1, 1, 1) = 0.4;
  stack.channels[1].at(0, 3, 0) = 0.2;
  const auto peaks = decode_peaks(stack);
  REQUIRE(peaks.size() == 2);
  CHECK(peaks[0].tooth == ToothId(11));
  CHECK(peaks[0].voxel == std::array<int, 3>{3, 1, 2});
  CHECK(peaks[0].score == 0.9);
  CHECK(peaks[1].voxel == std::array<int, 3>{0, 3, 0});
}

TEST_CASE("decode_peaks drops channels below the threshold", "[heatmap]") {
  HeatmapStack stack({4, 4, 4}, 3);
  stack.channels[0].at(1, 1, 1) = 0.8;
  stack.channels[1].at(2, 2, 2) = 0.3;
  // channel 2 stays all zero
  const auto peaks = decode_peaks(stack, 0.5);
  REQUIRE(peaks.size() == 1);
  CHECK(peaks[0].tooth == ToothId(11));
  // threshold 0 keeps even all-zero channels (peak score 0 is not below 0)
  CHECK(decode_peaks(stack, 0.0).size() == 3);
  CHECK_THROWS_AS(decode_peaks(stack, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(decode_peaks(stack, 1.5), std::invalid_argument);
}

TEST_CASE("decode_peaks breaks ties at the lowest raster index", "[heatmap]") {
  HeatmapStack stack({4, 4, 4}, 1);
  stack.channels[0].at(3, 3, 3) = 0.7;
  stack.channels[0].at(2, 1, 0) = 0.7;  // same value, earlier raster index
  const auto peaks = decode_peaks(stack);
  REQUIRE(peaks.size() == 1);
  CHECK(peaks[0].voxel == std::array<int, 3>{2, 1, 0});
}

TEST_CASE("assemble_bbox places center +- half dims", "[heatmap]") {
  const BBox3 b = assemble_bbox({64, 64, 64}, {20, 30, 40});
  CHECK(b.lo == std::array<double, 3>{54, 49, 44});
  CHECK(b.hi == std::array<double, 3>{74, 79, 84});
  // No clamping: boxes may extend past the volume.
  const BBox3 n = assemble_bbox({0, 0, 0}, {4, 4, 4});
  CHECK(n.lo == std::array<double, 3>{-2, -2, -2});
  CHECK_THROWS_AS(assemble_bbox({0, 0, 0}, {1, 0, 1}), std::invalid_argument);

  Detection d;
  d.tooth = ToothId(11);
  d.center = {10, 11, 12};
  d.box_dims = {2, 4, 6};
  const BBox3 db = detection_box(d);
  CHECK(db.lo == std::array<double, 3>{9, 9, 9});
  CHECK(db.hi == std::array<double, 3>{11, 13, 15});
}

TEST_CASE("decode recovers encoded centers to the nearest voxel",
          "[heatmap]") {
  GroundTruth gts;
  gts.push_back({ToothId(13), BBox3{{5, 6, 7}, {15, 14, 13}}});   // center (10,10,10)
  gts.push_back({ToothId(14), BBox3{{20, 6, 7}, {29, 14, 13}}});  // center (24.5,10,10)
  const HeatmapStack stack = encode_ground_truth(gts, {40, 24, 24});
  const auto peaks = decode_peaks(stack, 0.5);
  REQUIRE(peaks.size() == 2);
  CHECK(peaks[0].voxel == std::array<int, 3>{10, 10, 10});
  // Half-integer center: both 24 and 25 are nearest; ties take the lower
  // raster index.
  CHECK(peaks[1].voxel == std::array<int, 3>{24, 10, 10});
}
