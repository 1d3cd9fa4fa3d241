#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "toothdet/losses.hpp"
#include "toothdet/rng.hpp"

using namespace toothdet;

namespace {

HeatmapStack single_voxel_stack(double v) {
  HeatmapStack s({1, 1, 1}, 1);
  s.channels[0].data[0] = v;
  return s;
}

}  // namespace

TEST_CASE("focal_loss on a single positive pixel", "[losses]") {
  const HeatmapStack x = single_voxel_stack(0.5);
  const HeatmapStack y = single_voxel_stack(1.0);
  const ScalarGrad r = focal_loss(x, y);
  // -(1-0.5)^2 * log(0.5)
  CHECK(r.value == Catch::Approx(0.25 * std::log(2.0)).epsilon(1e-12));
  CHECK(r.value == Catch::Approx(0.17328679513998632).epsilon(1e-12));
  // Gradient is negative: raising x lowers the loss on a positive pixel.
  CHECK(r.grad.channels[0].data[0] < 0.0);
}

TEST_CASE("focal_loss mixes branches and counts positives", "[losses]") {
  HeatmapStack x({2, 1, 1}, 1), y({2, 1, 1}, 1);
  y.channels[0].data = {1.0, 0.5};
  x.channels[0].data = {0.8, 0.1};
  const ScalarGrad r = focal_loss(x, y);
  const double pos = 0.04 * std::log(0.8);
  const double neg = std::pow(0.5, 4) * 0.01 * std::log(0.9);
  CHECK(r.value == Catch::Approx(-(pos + neg)).epsilon(1e-12));
  CHECK(r.value == Catch::Approx(0.008991592374).epsilon(1e-9));
  CHECK(r.grad.channels[0].data[1] > 0.0);  // negative pixel pushes x down
}

TEST_CASE("focal_loss positive count spans channels and floors at one",
          "[losses]") {
  HeatmapStack x({2, 1, 1}, 2), y({2, 1, 1}, 2);
  y.channels[0].data = {1.0, 0.0};
  y.channels[1].data = {1.0, 1.0};
  for (auto& ch : x.channels) ch.data = {0.5, 0.5};
  const ScalarGrad r3 = focal_loss(x, y);
  // Same stack with no positives: N floors to 1, the value stays finite.
  for (auto& ch : y.channels) ch.data = {0.0, 0.0};
  const ScalarGrad r0 = focal_loss(x, y);
  CHECK(std::isfinite(r3.value));
  CHECK(std::isfinite(r0.value));
  // Three positives scale the shared normalization by 1/3.
  CHECK(r3.value > 0.0);
}

TEST_CASE("focal_loss is minimized at the target", "[losses]") {
  const FocalParams params;
  auto value_at = [&](double xv, double yv) {
    return focal_loss(single_voxel_stack(xv), single_voxel_stack(yv), params)
        .value;
  };
  // Positive pixel: loss decreases monotonically toward x = 1.
  double prev = value_at(0.05, 1.0);
  for (double xv : {0.2, 0.5, 0.8, 0.999, 1.0}) {
    const double v = value_at(xv, 1.0);
    CHECK(v < prev);
    prev = v;
  }
  // Sub-one pixel: loss increases away from x = eps.
  prev = value_at(params.clamp_eps, 0.6);
  for (double xv : {0.1, 0.4, 0.7, 0.95}) {
    const double v = value_at(xv, 0.6);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("focal_loss clamps x before the logs", "[losses]") {
  // x = 0 and x = 1 would produce log(0); the clamp keeps both finite.
  CHECK(std::isfinite(
      focal_loss(single_voxel_stack(0.0), single_voxel_stack(1.0)).value));
  CHECK(std::isfinite(
      focal_loss(single_voxel_stack(1.0), single_voxel_stack(0.0)).value));
}

TEST_CASE("focal_loss validates inputs", "[losses]") {
  const HeatmapStack a({2, 2, 2}, 1), b({2, 2, 2}, 2), c({2, 2, 1}, 1);
  CHECK_THROWS_AS(focal_loss(a, b), std::invalid_argument);
  CHECK_THROWS_AS(focal_loss(a, c), std::invalid_argument);
  FocalParams bad;
  bad.clamp_eps = 0.7;
  CHECK_THROWS_AS(focal_loss(a, a, bad), std::invalid_argument);
  bad = FocalParams{};
  bad.alpha = -1;
  CHECK_THROWS_AS(focal_loss(a, a, bad), std::invalid_argument);
}

TEST_CASE("Loss reductions are bit reproducible", "[losses]") {
  Rng rng(5);
  HeatmapStack x({8, 8, 8}, 3), y({8, 8, 8}, 3);
  for (auto& ch : x.channels)
    for (double& v : ch.data) v = rng.uniform(0.01, 0.99);
  for (auto& ch : y.channels)
    for (double& v : ch.data) v = rng.uniform(0.0, 1.0);
  const double v1 = focal_loss(x, y).value;
  const double v2 = focal_loss(x, y).value;
  CHECK(v1 == v2);
  const AdjacencySet adj = default_adjacency();
  CHECK(gd_loss(x, adj).value == gd_loss(x, adj).value);
}

TEST_CASE("intermediate_loss weights the per-stack focal terms", "[losses]") {
  HeatmapStack y({2, 2, 2}, 1);
  y.channels[0].data[0] = 1.0;
  HeatmapStack a({2, 2, 2}, 1), b({2, 2, 2}, 1);
  for (double& v : a.channels[0].data) v = 0.3;
  for (double& v : b.channels[0].data) v = 0.7;

  const double fa = focal_loss(a, y).value;
  const double fb = focal_loss(b, y).value;

  const StacksGrad def = intermediate_loss({a, b}, y, {});
  CHECK(def.value == Catch::Approx(fa + fb).epsilon(1e-15));
  REQUIRE(def.grads.size() == 2);

  SupervisionWeights w;
  w.w = {2.0, 0.5};
  const StacksGrad wt = intermediate_loss({a, b}, y, w);
  CHECK(wt.value == Catch::Approx(2.0 * fa + 0.5 * fb).epsilon(1e-15));
  CHECK(wt.grads[0].channels[0].data[0] ==
        Catch::Approx(2.0 * def.grads[0].channels[0].data[0]).epsilon(1e-15));

  w.w = {1.0};
  CHECK_THROWS_AS(intermediate_loss({a, b}, y, w), std::invalid_argument);
  w.w = {1.0, -1.0};
  CHECK_THROWS_AS(intermediate_loss({a, b}, y, w), std::invalid_argument);
  CHECK_THROWS_AS(intermediate_loss({}, y, {}), std::invalid_argument);
}

TEST_CASE("bbox_mse averages squared size differences", "[losses]") {
  BoxSizeList x{{ToothId(11), {2, 2, 2}}};
  BoxSizeList y{{ToothId(11), {0, 0, 0}}};
  const BoxMseResult r = bbox_mse(x, y);
  CHECK(r.value == 4.0);
  for (int a = 0; a < 3; ++a)
    CHECK(r.grad[0][a] == Catch::Approx(4.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("bbox_mse pairs by tooth id, not list position", "[losses]") {
  BoxSizeList x{{ToothId(11), {3, 3, 3}}, {ToothId(21), {5, 5, 5}}};
  BoxSizeList y_fwd{{ToothId(11), {3, 3, 3}}, {ToothId(21), {1, 1, 1}}};
  BoxSizeList y_rev{{ToothId(21), {1, 1, 1}}, {ToothId(11), {3, 3, 3}}};
  CHECK(bbox_mse(x, y_fwd).value == bbox_mse(x, y_rev).value);
  CHECK(bbox_mse(x, y_fwd).value == Catch::Approx(8.0).epsilon(1e-15));

  BoxSizeList mismatch{{ToothId(11), {3, 3, 3}}, {ToothId(22), {1, 1, 1}}};
  CHECK_THROWS_AS(bbox_mse(x, mismatch), std::invalid_argument);
  BoxSizeList dup{{ToothId(11), {3, 3, 3}}, {ToothId(11), {1, 1, 1}}};
  CHECK_THROWS_AS(bbox_mse(dup, dup), std::invalid_argument);
  BoxSizeList shorter{{ToothId(11), {3, 3, 3}}};
  CHECK_THROWS_AS(bbox_mse(x, shorter), std::invalid_argument);
  CHECK(bbox_mse({}, {}).value == 0.0);
}

TEST_CASE("gd_loss sums products over adjacent channels", "[losses]") {
  const AdjacencySet adj = default_adjacency();
  HeatmapStack x({1, 1, 1}, 2);
  x.channels[0].data[0] = 0.5;
  x.channels[1].data[0] = 0.5;
  const ScalarGrad r = gd_loss(x, adj);
  CHECK(r.value == 0.25);
  CHECK(r.grad.channels[0].data[0] == 0.5);  // partner value
  CHECK(r.grad.channels[1].data[0] == 0.5);

  // A single channel has no in-prefix pairs.
  HeatmapStack one({1, 1, 1}, 1);
  one.channels[0].data[0] = 0.9;
  CHECK(gd_loss(one, adj).value == 0.0);
}

TEST_CASE("gd_loss accumulates over multiple pairs", "[losses]") {
  // Channels 0,1,2 = teeth 11,12,13: pairs (11,12) and (12,13) are adjacent,
  // (11,13) is not. Channel 1 sees gradient from both partners.
  const AdjacencySet adj = default_adjacency();
  HeatmapStack x({1, 1, 1}, 3);
  x.channels[0].data[0] = 0.2;
  x.channels[1].data[0] = 0.3;
  x.channels[2].data[0] = 0.5;
  const ScalarGrad r = gd_loss(x, adj);
  CHECK(r.value == Catch::Approx(0.2 * 0.3 + 0.3 * 0.5).epsilon(1e-15));
  CHECK(r.grad.channels[1].data[0] ==
        Catch::Approx(0.2 + 0.5).epsilon(1e-15));
  CHECK(r.grad.channels[0].data[0] == Catch::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("total_loss composes the weighted terms", "[losses]") {
  const AdjacencySet adj = default_adjacency();
  HeatmapStack y({2, 1, 1}, 2);
  y.channels[0].data = {1.0, 0.0};
  HeatmapStack s1({2, 1, 1}, 2), s2({2, 1, 1}, 2);
  for (auto& ch : s1.channels) ch.data = {0.4, 0.2};
  for (auto& ch : s2.channels) ch.data = {0.6, 0.1};
  BoxSizeList xb{{ToothId(11), {4, 4, 4}}};
  BoxSizeList yb{{ToothId(11), {2, 2, 2}}};
  LossWeights w;
  w.lambda_heat = 0.1;
  w.lambda_bbox = 0.1;
  w.lambda_gd = 1.0;

  const TotalResult r = total_loss({s1, s2}, y, xb, yb, w, adj);
  const double heat =
      focal_loss(s1, y).value + focal_loss(s2, y).value;
  const double bbox = bbox_mse(xb, yb).value;
  const double gd_final = gd_loss(s2, adj).value;
  CHECK(r.heat_value == Catch::Approx(heat).epsilon(1e-15));
  CHECK(r.bbox_value == Catch::Approx(bbox).epsilon(1e-15));
  CHECK(r.gd_value == Catch::Approx(gd_final).epsilon(1e-15));
  CHECK(r.value ==
        Catch::Approx(0.1 * heat + 0.1 * bbox + 1.0 * gd_final).epsilon(1e-15));
  REQUIRE(r.heat_grads.size() == 2);
  REQUIRE(r.bbox_grad.size() == 1);

  // gd_per_stack applies the penalty to every stack.
  const TotalResult rp = total_loss({s1, s2}, y, xb, yb, w, adj, {}, {}, true);
  CHECK(rp.gd_value ==
        Catch::Approx(gd_loss(s1, adj).value + gd_final).epsilon(1e-15));

  LossWeights bad;
  bad.lambda_gd = -1;
  CHECK_THROWS_AS(total_loss({s1}, y, xb, yb, bad, adj),
                  std::invalid_argument);
}

TEST_CASE("distance_mse sums or averages squared differences", "[losses]") {
  const std::array<int, 3> d211{2, 1, 1};
  VolumeD x(d211), y(d211);
  x.data = {1.0, 0.0};
  y.data = {0.0, 2.0};
  const VolumeGrad sum = distance_mse(x, y);
  CHECK(sum.value == 5.0);
  CHECK(sum.grad.data[0] == 2.0);
  CHECK(sum.grad.data[1] == -4.0);

  const VolumeGrad mean = distance_mse(x, y, true);
  CHECK(mean.value == 2.5);
  CHECK(mean.grad.data[0] == 1.0);
  CHECK(mean.grad.data[1] == -2.0);

  VolumeD z(std::array<int, 3>{3, 1, 1});
  CHECK_THROWS_AS(distance_mse(x, z), std::invalid_argument);
}
