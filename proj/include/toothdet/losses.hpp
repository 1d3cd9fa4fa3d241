#pragma once

// Training objectives as value+gradient kernels: penalty-reduced focal loss,
// weighted intermediate supervision, box-size MSE, overlap (pairwise product)
// penalty on adjacent channels, their weighted total, and distance-map MSE.
// All reductions run in a fixed canonical order (channel-major, raster inner)
// so values are bit-reproducible.

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "toothdet/anatomy.hpp"
#include "toothdet/heatmap.hpp"
#include "toothdet/volume.hpp"

namespace toothdet {

struct FocalParams {
  double alpha = 2.0;
  double beta = 4.0;
  double clamp_eps = 1e-6;
};

inline void validate(const FocalParams& p) {
  if (p.alpha < 0 || p.beta < 0)
    throw std::invalid_argument("FocalParams: exponents must be >= 0");
  if (!(p.clamp_eps > 0 && p.clamp_eps < 0.5))
    throw std::invalid_argument("FocalParams: clamp_eps outside (0, 0.5)");
}

struct SupervisionWeights {
  std::vector<double> w;  // one weight per stack, default all 1
};

struct LossWeights {
  double lambda_heat = 0.1;
  double lambda_bbox = 0.1;
  double lambda_gd = 1.0;
};

inline void validate(const LossWeights& w) {
  if (w.lambda_heat < 0 || w.lambda_bbox < 0 || w.lambda_gd < 0)
    throw std::invalid_argument("LossWeights: weights must be >= 0");
}

struct ScalarGrad {
  double value = 0.0;
  HeatmapStack grad;
};

struct StacksGrad {
  double value = 0.0;
  std::vector<HeatmapStack> grads;
};

using BoxSizeList = std::vector<std::pair<ToothId, std::array<double, 3>>>;

struct BoxMseResult {
  double value = 0.0;
  std::vector<std::array<double, 3>> grad;  // aligned with the x list
};

struct VolumeGrad {
  double value = 0.0;
  VolumeD grad;
};

struct TotalResult {
  double value = 0.0;
  double heat_value = 0.0;
  double bbox_value = 0.0;
  double gd_value = 0.0;
  std::vector<HeatmapStack> heat_grads;
  std::vector<std::array<double, 3>> bbox_grad;
};

namespace detail {

// pow specialized for the small integer exponents the defaults use.
inline double pw(double v, double e) {
  if (e == 0.0) return 1.0;
  if (e == 1.0) return v;
  if (e == 2.0) return v * v;
  if (e == 3.0) return v * v * v;
  if (e == 4.0) {
    const double v2 = v * v;
    return v2 * v2;
  }
  return std::pow(v, e);
}

}  // namespace detail

// value = -(1/N) * sum_p [ y==1 ? (1-x)^a log x : (1-y)^b x^a log(1-x) ]
// N = count of exact-1 target pixels over the whole stack, floored at 1.
// x is clamped to [eps, 1-eps]; the gradient is the derivative of the
// clamped expression evaluated at the clamped value.
inline ScalarGrad focal_loss(const HeatmapStack& x, const HeatmapStack& y,
                             const FocalParams& params = {}) {
  validate(params);
  check_same_shape(x, y, "focal_loss");
  const double a = params.alpha, b = params.beta, eps = params.clamp_eps;

  std::size_t n_pos = 0;
  for (const auto& ch : y.channels)
    for (double v : ch.data) n_pos += (v == 1.0);
  const double inv_n = 1.0 / double(std::max<std::size_t>(n_pos, 1));

  ScalarGrad out;
  out.grad = HeatmapStack(x.dims, x.num_channels());
  double sum = 0.0;
  for (int c = 0; c < x.num_channels(); ++c) {
    const auto& xd = x.channels[c].data;
    const auto& yd = y.channels[c].data;
    auto& gd = out.grad.channels[c].data;
    for (std::size_t i = 0; i < xd.size(); ++i) {
      const double xv = std::min(std::max(xd[i], eps), 1.0 - eps);
      const double yv = yd[i];
      if (yv == 1.0) {
        const double om = 1.0 - xv;
        sum += detail::pw(om, a) * std::log(xv);
        gd[i] = (a * detail::pw(om, a - 1.0) * std::log(xv) -
                 detail::pw(om, a) / xv) *
                inv_n;
      } else {
        const double pen = detail::pw(1.0 - yv, b);
        sum += pen * detail::pw(xv, a) * std::log(1.0 - xv);
        gd[i] = pen *
                (detail::pw(xv, a) / (1.0 - xv) -
                 a * detail::pw(xv, a - 1.0) * std::log(1.0 - xv)) *
                inv_n;
      }
    }
  }
  out.value = -sum * inv_n;
  return out;
}

// Weighted sum of focal losses over a sequence of prediction stacks that all
// target the same ground truth.
inline StacksGrad intermediate_loss(const std::vector<HeatmapStack>& stacks,
                                    const HeatmapStack& y,
                                    const SupervisionWeights& weights,
                                    const FocalParams& params = {}) {
  if (stacks.empty())
    throw std::invalid_argument("intermediate_loss: no stacks");
  std::vector<double> w = weights.w;
  if (w.empty()) w.assign(stacks.size(), 1.0);
  if (w.size() != stacks.size())
    throw std::invalid_argument(
        "intermediate_loss: weight count does not match stack count");
  for (double v : w)
    if (v < 0)
      throw std::invalid_argument("intermediate_loss: negative weight");

  StacksGrad out;
  for (std::size_t s = 0; s < stacks.size(); ++s) {
    ScalarGrad f = focal_loss(stacks[s], y, params);
    out.value += w[s] * f.value;
    for (auto& ch : f.grad.channels)
      for (double& g : ch.data) g *= w[s];
    out.grads.push_back(std::move(f.grad));
  }
  return out;
}

// Mean squared componentwise difference of box sizes, paired by tooth.
inline BoxMseResult bbox_mse(const BoxSizeList& x, const BoxSizeList& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("bbox_mse: list length mismatch");
  std::array<int, kNumTeeth> y_at;
  y_at.fill(-1);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int c = y[i].first.channel();
    if (y_at[c] >= 0) throw std::invalid_argument("bbox_mse: duplicate tooth");
    y_at[c] = int(i);
  }
  BoxMseResult out;
  out.grad.assign(x.size(), {0, 0, 0});
  if (x.empty()) return out;

  const double count = 3.0 * double(x.size());
  std::array<bool, kNumTeeth> used{};
  // Canonical order: accumulate by channel index, not list position.
  std::array<int, kNumTeeth> x_at;
  x_at.fill(-1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int c = x[i].first.channel();
    if (used[c]) throw std::invalid_argument("bbox_mse: duplicate tooth");
    used[c] = true;
    if (y_at[c] < 0)
      throw std::invalid_argument("bbox_mse: tooth sets do not match");
    x_at[c] = int(i);
  }
  double sum = 0.0;
  for (int c = 0; c < kNumTeeth; ++c) {
    if (x_at[c] < 0) continue;
    const auto& xe = x[x_at[c]].second;
    const auto& ye = y[y_at[c]].second;
    for (int a = 0; a < 3; ++a) {
      const double d = xe[a] - ye[a];
      sum += d * d;
      out.grad[x_at[c]][a] = 2.0 * d / count;
    }
  }
  out.value = sum / count;
  return out;
}

// Overlap penalty: sum over adjacent channel pairs of the voxelwise product.
// Pairs whose channels fall outside the stack's channel prefix are skipped.
inline ScalarGrad gd_loss(const HeatmapStack& x, const AdjacencySet& adj) {
  ScalarGrad out;
  out.grad = HeatmapStack(x.dims, x.num_channels());
  double sum = 0.0;
  for (const auto& [ci, cj] : adj.channel_pairs()) {
    if (ci >= x.num_channels() || cj >= x.num_channels()) continue;
    const auto& xi = x.channels[ci].data;
    const auto& xj = x.channels[cj].data;
    auto& gi = out.grad.channels[ci].data;
    auto& gj = out.grad.channels[cj].data;
    for (std::size_t p = 0; p < xi.size(); ++p) {
      sum += xi[p] * xj[p];
      gi[p] += xj[p];
      gj[p] += xi[p];
    }
  }
  out.value = sum;
  return out;
}

// weights.lambda_heat * L_heat + lambda_bbox * L_bbox + lambda_gd * L_gd.
// The overlap penalty applies to the final stack, or to every stack when
// gd_per_stack is set. Gradients compose linearly into heat_grads/bbox_grad.
inline TotalResult total_loss(const std::vector<HeatmapStack>& stacks,
                              const HeatmapStack& y_heat,
                              const BoxSizeList& x_bbox,
                              const BoxSizeList& y_bbox,
                              const LossWeights& weights,
                              const AdjacencySet& adj,
                              const FocalParams& params = {},
                              const SupervisionWeights& sup = {},
                              bool gd_per_stack = false) {
  validate(weights);
  StacksGrad heat = intermediate_loss(stacks, y_heat, sup, params);
  BoxMseResult bbox = bbox_mse(x_bbox, y_bbox);

  TotalResult out;
  out.heat_value = heat.value;
  out.bbox_value = bbox.value;
  out.heat_grads = std::move(heat.grads);
  for (auto& stack : out.heat_grads)
    for (auto& ch : stack.channels)
      for (double& g : ch.data) g *= weights.lambda_heat;
  out.bbox_grad = std::move(bbox.grad);
  for (auto& g : out.bbox_grad)
    for (int a = 0; a < 3; ++a) g[a] *= weights.lambda_bbox;

  for (std::size_t s = 0; s < stacks.size(); ++s) {
    const bool apply = gd_per_stack || s + 1 == stacks.size();
    if (!apply) continue;
    ScalarGrad gd = gd_loss(stacks[s], adj);
    out.gd_value += gd.value;
    for (int c = 0; c < gd.grad.num_channels(); ++c) {
      auto& dst = out.heat_grads[s].channels[c].data;
      const auto& src = gd.grad.channels[c].data;
      for (std::size_t p = 0; p < dst.size(); ++p)
        dst[p] += weights.lambda_gd * src[p];
    }
  }
  out.value = weights.lambda_heat * out.heat_value +
              weights.lambda_bbox * out.bbox_value +
              weights.lambda_gd * out.gd_value;
  return out;
}

// Squared L2 difference of two distance maps, summed (default) or averaged.
template <class T>
inline VolumeGrad distance_mse(const Volume3<T>& x, const Volume3<T>& y,
                               bool mean_mode = false) {
  static_assert(std::is_floating_point_v<T>);
  if (x.dims != y.dims)
    throw std::invalid_argument("distance_mse: dim mismatch");
  VolumeGrad out;
  out.grad = VolumeD(x.dims);
  const double scale = mean_mode ? 1.0 / double(x.size()) : 1.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double d = double(x.data[i]) - double(y.data[i]);
    sum += d * d;
    out.grad.data[i] = 2.0 * d * scale;
  }
  out.value = sum * scale;
  return out;
}

}  // namespace toothdet
