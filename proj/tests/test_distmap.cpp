#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "reference_impls.hpp"
#include "toothdet/distmap.hpp"
#include "toothdet/rng.hpp"

using namespace toothdet;

TEST_CASE("chamfer_edt on a 1-D bar", "[distmap]") {
  VolumeU8 mask(7, 1, 1);
  mask.data = {0, 1, 1, 1, 1, 1, 0};
  const VolumeD d = chamfer_edt(mask);
  const std::vector<double> want = {0, 1, 2, 3, 2, 1, 0};
  for (int i = 0; i < 7; ++i) CHECK(d.data[i] == want[i]);
}

TEST_CASE("chamfer_edt diagonal steps use Euclidean weights", "[distmap]") {
  VolumeU8 mask(2, 2, 2);
  for (auto& v : mask.data) v = 1;
  mask.at(0, 0, 0) = 0;
  const VolumeD d = chamfer_edt(mask);
  CHECK(d.at(1, 0, 0) == 1.0);
  CHECK(d.at(1, 1, 0) == std::sqrt(2.0));
  CHECK(d.at(1, 1, 1) == std::sqrt(3.0));
}

TEST_CASE("chamfer_edt without background yields the diagonal sentinel",
          "[distmap]") {
  VolumeU8 mask(2, 3, 2);
  for (auto& v : mask.data) v = 1;
  const double diag = std::sqrt(4.0 + 9.0 + 4.0);
  const VolumeD d = chamfer_edt(mask);
  for (double v : d.data) CHECK(v == diag);
  const VolumeD e = exact_edt_bruteforce(mask);
  for (double v : e.data) CHECK(v == diag);
}

TEST_CASE("chamfer_edt rejects non-binary masks", "[distmap]") {
  VolumeU8 mask(2, 1, 1);
  mask.data = {0, 2};
  CHECK_THROWS_AS(chamfer_edt(mask), std::invalid_argument);
  CHECK_THROWS_AS(exact_edt_bruteforce(mask), std::invalid_argument);
}

TEST_CASE("exact_edt_bruteforce measures straight-line distance", "[distmap]") {
  VolumeU8 mask(5, 5, 5);
  for (auto& v : mask.data) v = 1;
  mask.at(0, 0, 0) = 0;
  const VolumeD d = exact_edt_bruteforce(mask);
  CHECK(d.at(2, 1, 0) == std::sqrt(5.0));
  CHECK(d.at(3, 0, 0) == 3.0);
  CHECK(d.at(0, 0, 0) == 0.0);
}

TEST_CASE("chamfer_edt brackets the exact distance", "[distmap]") {
  // Two-pass chamfer with the 3x3x3 neighborhood overestimates the exact
  // Euclidean distance by at most a fixed metric factor.
  Rng rng(42);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = int(rng.uniform_int(8, 12));
    VolumeU8 mask(n, n, n);
    const double p = rng.uniform(0.3, 0.7);
    for (auto& v : mask.data) v = rng.uniform() < p ? 1 : 0;
    mask.data[0] = 0;
    const VolumeD cd = chamfer_edt(mask);
    const VolumeD ed = exact_edt_bruteforce(mask);
    for (size_t i = 0; i < cd.data.size(); ++i) {
      CHECK(ed.data[i] <= cd.data[i] * (1.0 + 1e-12) + 1e-12);
      CHECK(cd.data[i] <= 1.129 * ed.data[i] + 1e-6);
    }
  }
}

TEST_CASE("chamfer_edt matches a shortest-path reference", "[distmap]") {
  // The two-pass sweep realizes the same grid-path metric as Dijkstra over
  // the 26-neighborhood, up to summation order.
  Rng rng(7);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = int(rng.uniform_int(10, 14));
    VolumeU8 mask(n, n, n);
    const double p = rng.uniform(0.2, 0.8);
    for (auto& v : mask.data) v = rng.uniform() < p ? 1 : 0;
    mask.data[mask.data.size() / 2] = 0;
    const VolumeD cd = chamfer_edt(mask);
    const VolumeD ref = refimpl::dijkstra_chamfer(mask);
    for (size_t i = 0; i < cd.data.size(); ++i) {
      const double scale = std::max(1.0, std::max(cd.data[i], ref.data[i]));
      CHECK(std::abs(cd.data[i] - ref.data[i]) <= 1e-9 * scale);
    }
  }
}

TEST_CASE("chamfer_edt is exact along axis-aligned runs", "[distmap]") {
  // A slab with one background face: every distance is a whole number of
  // unit steps, which both algorithms produce exactly.
  VolumeU8 mask(16, 4, 4);
  for (auto& v : mask.data) v = 1;
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y) mask.at(0, y, z) = 0;
  const VolumeD cd = chamfer_edt(mask);
  const VolumeD ed = exact_edt_bruteforce(mask);
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 16; ++x) {
        CHECK(cd.at(x, y, z) == double(x));
        CHECK(ed.at(x, y, z) == double(x));
      }
}

TEST_CASE("chamfer_edt can scale steps by voxel spacing", "[distmap]") {
  VolumeU8 mask(1, 3, 1);
  mask.spacing = {1.0, 2.0, 1.0};
  mask.data = {0, 1, 1};
  const VolumeD d = chamfer_edt(mask, true);
  CHECK(d.data[0] == 0.0);
  CHECK(d.data[1] == 2.0);
  CHECK(d.data[2] == 4.0);
  // Default ignores spacing.
  const VolumeD u = chamfer_edt(mask);
  CHECK(u.data[2] == 2.0);
}

TEST_CASE("make_gt_distance selects one label as foreground", "[distmap]") {
  VolumeU8 labels(6, 3, 3);
  for (int x = 1; x <= 2; ++x) labels.at(x, 1, 1) = 3;
  for (int x = 4; x <= 5; ++x) labels.at(x, 1, 1) = 7;

  const VolumeD d3 = make_gt_distance(labels, 3);
  VolumeU8 mask3(6, 3, 3);
  for (int x = 1; x <= 2; ++x) mask3.at(x, 1, 1) = 1;
  const VolumeD want = chamfer_edt(mask3);
  for (size_t i = 0; i < want.data.size(); ++i)
    CHECK(d3.data[i] == want.data[i]);

  // Voxels of other labels count as background.
  CHECK(d3.at(4, 1, 1) == 0.0);
  CHECK_THROWS_AS(make_gt_distance(labels, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_gt_distance(labels, -2), std::invalid_argument);
}

TEST_CASE("threshold_to_mask keeps voxels at or above tau", "[distmap]") {
  VolumeD dist(4, 1, 1);
  dist.data = {0.0, 0.4, 0.5, 2.0};
  const VolumeU8 m = threshold_to_mask(dist, 0.5);
  CHECK(m.data == std::vector<uint8_t>({0, 0, 1, 1}));
  const VolumeU8 all = threshold_to_mask(dist, 0.0);
  CHECK(all.data == std::vector<uint8_t>({1, 1, 1, 1}));
  CHECK_THROWS_AS(threshold_to_mask(dist, -0.1), std::invalid_argument);
}

TEST_CASE("thresholding the label distance map recovers the mask",
          "[distmap]") {
  Rng rng(11);
  VolumeU8 labels(12, 12, 12);
  for (auto& v : labels.data) v = uint8_t(rng.uniform_int(0, 2));
  const VolumeU8 m = threshold_to_mask(make_gt_distance(labels, 2), 0.5);
  for (size_t i = 0; i < labels.data.size(); ++i)
    CHECK(int(m.data[i]) == int(labels.data[i] == 2));
}
