#pragma once

// Ground-truth heatmap rendering, per-channel peak decoding, and center+dims
// box assembly.

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "toothdet/anatomy.hpp"
#include "toothdet/volume.hpp"

namespace toothdet {

// Rendered Gaussian values below this are set to exactly 0.
inline constexpr double kGaussianTruncation = 1e-4;

struct GaussianSpec {
  std::array<double, 3> center{0, 0, 0};
  std::array<double, 3> sigma{1, 1, 1};
};

// One channel per tooth in canonical channel order. channels.size() may be a
// prefix 1..32 of the channel space; encode_ground_truth always emits 32.
struct HeatmapStack {
  std::array<int, 3> dims{0, 0, 0};
  std::vector<VolumeD> channels;

  HeatmapStack() = default;
  HeatmapStack(const std::array<int, 3>& d, int num_channels) : dims(d) {
    if (num_channels < 1 || num_channels > kNumTeeth)
      throw std::invalid_argument("HeatmapStack: channel count out of range");
    channels.assign(num_channels, VolumeD(d));
  }

  int num_channels() const { return int(channels.size()); }
  std::size_t voxels() const {
    return std::size_t(dims[0]) * dims[1] * dims[2];
  }
};

inline void check_same_shape(const HeatmapStack& a, const HeatmapStack& b,
                             const char* what) {
  if (a.dims != b.dims || a.channels.size() != b.channels.size())
    throw std::invalid_argument(std::string(what) + ": stack shape mismatch");
}

struct Detection {
  ToothId tooth;
  std::array<double, 3> center{0, 0, 0};
  std::array<double, 3> box_dims{0, 0, 0};
  double score = 1.0;
};

// Ground-truth instances: tooth id plus its box.
using GroundTruth = std::vector<std::pair<ToothId, BBox3>>;

struct Peak {
  ToothId tooth;
  std::array<int, 3> voxel{0, 0, 0};
  double score = 0.0;
};

// Separable Gaussian exp(-sum (p_i-c_i)^2 / (2 s_i^2)) with exact 1 at an
// integer-coordinate center; values below kGaussianTruncation become 0.
inline VolumeD render_gaussian(const std::array<int, 3>& dims,
                               const GaussianSpec& spec) {
  VolumeD out(dims);
  for (int a = 0; a < 3; ++a) {
    if (!(spec.sigma[a] > 0))
      throw std::invalid_argument("render_gaussian: sigma must be positive");
    if (spec.center[a] < -0.5 || spec.center[a] > dims[a] - 0.5)
      throw std::invalid_argument("render_gaussian: center outside extent");
  }
  // Support radius where the Gaussian falls to the truncation threshold.
  const double reach = std::sqrt(-2.0 * std::log(kGaussianTruncation));
  std::array<int, 3> lo, hi;
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max(0, int(std::ceil(spec.center[a] - reach * spec.sigma[a])));
    hi[a] = std::min(dims[a] - 1,
                     int(std::floor(spec.center[a] + reach * spec.sigma[a])));
  }
  for (int z = lo[2]; z <= hi[2]; ++z) {
    const double ez = (z - spec.center[2]) / spec.sigma[2];
    for (int y = lo[1]; y <= hi[1]; ++y) {
      const double ey = (y - spec.center[1]) / spec.sigma[1];
      for (int x = lo[0]; x <= hi[0]; ++x) {
        const double ex = (x - spec.center[0]) / spec.sigma[0];
        const double v = std::exp(-0.5 * (ex * ex + ey * ey + ez * ez));
        if (v >= kGaussianTruncation) out.at(x, y, z) = v;
      }
    }
  }
  return out;
}

inline std::array<double, 3> box_center(const BBox3& b) {
  return {0.5 * (b.lo[0] + b.hi[0]), 0.5 * (b.lo[1] + b.hi[1]),
          0.5 * (b.lo[2] + b.hi[2])};
}

inline std::array<double, 3> box_extent(const BBox3& b) {
  return {b.hi[0] - b.lo[0], b.hi[1] - b.lo[1], b.hi[2] - b.lo[2]};
}

// Renders one channel per present tooth: center = box center, sigma_i =
// sigma_k * box extent_i (or sigma_k * max extent on every axis when
// isotropic). Absent teeth stay all-zero. Always returns all 32 channels.
inline HeatmapStack encode_ground_truth(
    const GroundTruth& teeth, const std::array<int, 3>& dims,
    double sigma_k = 1.0 / 6.0, bool isotropic = false) {
  if (!(sigma_k > 0))
    throw std::invalid_argument("encode_ground_truth: sigma_k must be > 0");
  HeatmapStack stack(dims, kNumTeeth);
  std::array<bool, kNumTeeth> seen{};
  for (const auto& [tooth, box] : teeth) {
    validate_box(box);
    const int c = tooth.channel();
    if (seen[c])
      throw std::invalid_argument("encode_ground_truth: duplicate tooth " +
                                  std::to_string(tooth.fdi));
    seen[c] = true;
    GaussianSpec spec;
    spec.center = box_center(box);
    const auto ext = box_extent(box);
    const double iso = std::max({ext[0], ext[1], ext[2]});
    for (int a = 0; a < 3; ++a) {
      const double e = isotropic ? iso : ext[a];
      if (!(e > 0))
        throw std::invalid_argument(
            "encode_ground_truth: degenerate box extent");
      spec.sigma[a] = sigma_k * e;
    }
    stack.channels[c] = render_gaussian(dims, spec);
  }
  return stack;
}

// Per-channel argmax with value; channels whose peak is below score_threshold
// are omitted. Ties resolve to the lowest raster index.
inline std::vector<Peak> decode_peaks(const HeatmapStack& stack,
                                      double score_threshold = 0.0) {
  if (score_threshold < 0 || score_threshold > 1)
    throw std::invalid_argument("decode_peaks: threshold outside [0,1]");
  std::vector<Peak> peaks;
  for (int c = 0; c < stack.num_channels(); ++c) {
    const VolumeD& ch = stack.channels[c];
    std::size_t best = 0;
    double best_v = ch.data.empty() ? 0.0 : ch.data[0];
    for (std::size_t i = 1; i < ch.data.size(); ++i)
      if (ch.data[i] > best_v) {
        best_v = ch.data[i];
        best = i;
      }
    if (best_v < score_threshold) continue;
    Peak p;
    p.tooth = ToothId::from_channel(c);
    const int nx = stack.dims[0], ny = stack.dims[1];
    p.voxel = {int(best % nx), int(best / nx % ny), int(best / nx / ny)};
    p.score = best_v;
    peaks.push_back(p);
  }
  return peaks;
}

// center +- dims/2 as min/max corners; no clamping, negative coords allowed.
inline BBox3 assemble_bbox(const std::array<double, 3>& center,
                           const std::array<double, 3>& box_dims) {
  BBox3 b;
  for (int a = 0; a < 3; ++a) {
    if (!(box_dims[a] > 0))
      throw std::invalid_argument("assemble_bbox: non-positive dims");
    b.lo[a] = center[a] - box_dims[a] / 2.0;
    b.hi[a] = center[a] + box_dims[a] / 2.0;
  }
  return b;
}

inline BBox3 detection_box(const Detection& d) {
  return assemble_bbox(d.center, d.box_dims);
}

}  // namespace toothdet
