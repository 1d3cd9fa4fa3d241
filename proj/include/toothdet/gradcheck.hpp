#pragma once

// Central finite-difference verification of every analytic gradient, on
// seeded random 8^3 fixtures. Reports the max relative error over sampled
// coordinates; the library target is max error <= 1e-4.

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "toothdet/anatomy.hpp"
#include "toothdet/losses.hpp"
#include "toothdet/optimize.hpp"
#include "toothdet/rng.hpp"

namespace toothdet {

inline constexpr double kGradCheckStep = 1e-4;
inline constexpr double kGradCheckTol = 1e-4;

struct GradCheckResult {
  std::string op;
  double max_rel_err = 0.0;
  std::size_t samples = 0;
  bool pass() const { return max_rel_err <= kGradCheckTol; }
};

namespace detail {

// Relative error with an absolute floor so near-zero gradients cannot blow
// up the ratio through benign rounding.
inline double grad_rel_err(double analytic, double fd) {
  return std::abs(analytic - fd) /
         std::max({std::abs(analytic), std::abs(fd), 1e-3});
}

inline HeatmapStack random_stack(Rng& rng, int channels, double lo, double hi) {
  HeatmapStack s({8, 8, 8}, channels);
  for (auto& ch : s.channels)
    for (double& v : ch.data) v = rng.uniform(lo, hi);
  return s;
}

// Target heatmaps: smooth values below 1 plus a few exact-1 peaks per
// channel, so both focal branches are exercised.
inline HeatmapStack random_target(Rng& rng, int channels) {
  HeatmapStack y = random_stack(rng, channels, 0.0, 0.99);
  for (auto& ch : y.channels)
    for (int k = 0; k < 3; ++k)
      ch.data[std::size_t(rng.uniform_int(0, int(ch.data.size()) - 1))] = 1.0;
  return y;
}

template <class Value>
inline GradCheckResult sample_stack_fd(const char* name, HeatmapStack& x,
                                       const HeatmapStack& analytic,
                                       Rng& rng, int samples, Value value) {
  GradCheckResult res{name, 0.0, std::size_t(samples)};
  for (int s = 0; s < samples; ++s) {
    const int c = rng.uniform_int(0, x.num_channels() - 1);
    const std::size_t i =
        std::size_t(rng.uniform_int(0, int(x.channels[c].data.size()) - 1));
    double& slot = x.channels[c].data[i];
    const double orig = slot;
    slot = orig + kGradCheckStep;
    const double fp = value();
    slot = orig - kGradCheckStep;
    const double fm = value();
    slot = orig;
    const double fd = (fp - fm) / (2.0 * kGradCheckStep);
    res.max_rel_err =
        std::max(res.max_rel_err,
                 grad_rel_err(analytic.channels[c].data[i], fd));
  }
  return res;
}

}  // namespace detail

inline GradCheckResult gradcheck_focal(std::uint64_t seed, int samples = 64) {
  Rng rng(seed);
  const int nch = 2 + int(rng.uniform_int(0, 2));
  HeatmapStack x = detail::random_stack(rng, nch, 0.05, 0.95);
  const HeatmapStack y = detail::random_target(rng, nch);
  const FocalParams params;
  const HeatmapStack analytic = focal_loss(x, y, params).grad;
  return detail::sample_stack_fd(
      "focal_loss", x, analytic, rng, samples,
      [&] { return focal_loss(x, y, params).value; });
}

inline GradCheckResult gradcheck_gd(std::uint64_t seed, int samples = 64) {
  Rng rng(seed);
  const int nch = 2 + int(rng.uniform_int(0, 2));
  HeatmapStack x = detail::random_stack(rng, nch, 0.05, 0.95);
  const AdjacencySet adj = default_adjacency();
  const HeatmapStack analytic = gd_loss(x, adj).grad;
  return detail::sample_stack_fd("gd_loss", x, analytic, rng, samples,
                                 [&] { return gd_loss(x, adj).value; });
}

inline GradCheckResult gradcheck_bbox(std::uint64_t seed) {
  Rng rng(seed);
  // Distinct teeth via a seeded partial shuffle of the channel range.
  std::array<int, kNumTeeth> chan;
  for (int i = 0; i < kNumTeeth; ++i) chan[i] = i;
  for (int i = kNumTeeth - 1; i > 0; --i)
    std::swap(chan[i], chan[rng.uniform_int(0, i)]);
  const int n = 3 + int(rng.uniform_int(0, 2));
  BoxSizeList x, y;
  for (int i = 0; i < n; ++i) {
    const ToothId tid = ToothId::from_channel(chan[i]);
    x.push_back({tid, {rng.uniform(1, 20), rng.uniform(1, 20), rng.uniform(1, 20)}});
    y.push_back({tid, {rng.uniform(1, 20), rng.uniform(1, 20), rng.uniform(1, 20)}});
  }
  const BoxMseResult base = bbox_mse(x, y);
  GradCheckResult res{"bbox_mse", 0.0, std::size_t(n) * 3};
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) {
      double& slot = x[std::size_t(i)].second[a];
      const double orig = slot;
      slot = orig + kGradCheckStep;
      const double fp = bbox_mse(x, y).value;
      slot = orig - kGradCheckStep;
      const double fm = bbox_mse(x, y).value;
      slot = orig;
      const double fd = (fp - fm) / (2.0 * kGradCheckStep);
      res.max_rel_err = std::max(
          res.max_rel_err, detail::grad_rel_err(base.grad[std::size_t(i)][a], fd));
    }
  return res;
}

inline GradCheckResult gradcheck_distance(std::uint64_t seed,
                                          int samples = 64) {
  Rng rng(seed);
  const std::array<int, 3> dims{8, 8, 8};
  VolumeD x(dims), y(dims);
  for (double& v : x.data) v = rng.uniform(0, 5);
  for (double& v : y.data) v = rng.uniform(0, 5);
  const VolumeGrad base = distance_mse(x, y);
  GradCheckResult res{"distance_mse", 0.0, std::size_t(samples)};
  for (int s = 0; s < samples; ++s) {
    const std::size_t i =
        std::size_t(rng.uniform_int(0, int(x.data.size()) - 1));
    const double orig = x.data[i];
    x.data[i] = orig + kGradCheckStep;
    const double fp = distance_mse(x, y).value;
    x.data[i] = orig - kGradCheckStep;
    const double fm = distance_mse(x, y).value;
    x.data[i] = orig;
    const double fd = (fp - fm) / (2.0 * kGradCheckStep);
    res.max_rel_err =
        std::max(res.max_rel_err, detail::grad_rel_err(base.grad.data[i], fd));
  }
  return res;
}

// The optimizer's composed objective, checked in logit space.
inline GradCheckResult gradcheck_demo_objective(std::uint64_t seed,
                                                int samples = 64) {
  Rng rng(seed);
  const int nch = 2 + int(rng.uniform_int(0, 2));
  HeatmapStack z({8, 8, 8}, nch);
  for (auto& ch : z.channels)
    for (double& v : ch.data) v = rng.normal(0.0, 1.0);
  const HeatmapStack target = detail::random_target(rng, nch);
  const AdjacencySet adj = default_adjacency();
  const LossWeights weights;
  const FocalParams focal;

  HeatmapStack x, grad;
  demo_objective(z, target, adj, weights, focal, x, &grad);
  return detail::sample_stack_fd(
      "demo_objective", z, grad, rng, samples, [&] {
        return demo_objective(z, target, adj, weights, focal, x).total;
      });
}

// All five ops across `trials` seeded fixtures each; one aggregated
// (max-error) row per op.
inline std::vector<GradCheckResult> run_gradcheck(std::uint64_t seed,
                                                  int trials) {
  if (trials < 1) throw std::invalid_argument("run_gradcheck: trials < 1");
  std::vector<GradCheckResult> agg;
  const std::pair<const char*, int> ops[] = {{"focal_loss", 0},
                                             {"gd_loss", 1},
                                             {"bbox_mse", 2},
                                             {"distance_mse", 3},
                                             {"demo_objective", 4}};
  for (const auto& [name, op] : ops) {
    GradCheckResult total{name, 0.0, 0};
    for (int t = 0; t < trials; ++t) {
      const std::uint64_t s = child_seed(seed, std::uint64_t(op) * 100003 + t);
      GradCheckResult r;
      switch (op) {
        case 0: r = gradcheck_focal(s); break;
        case 1: r = gradcheck_gd(s); break;
        case 2: r = gradcheck_bbox(s); break;
        case 3: r = gradcheck_distance(s); break;
        default: r = gradcheck_demo_objective(s); break;
      }
      total.max_rel_err = std::max(total.max_rel_err, r.max_rel_err);
      total.samples += r.samples;
    }
    agg.push_back(total);
  }
  return agg;
}

}  // namespace toothdet
