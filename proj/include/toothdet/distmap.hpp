#pragma once

// Two-pass chamfer distance transform over the 26-neighborhood with local
// Euclidean weights (1, sqrt2, sqrt3), an O(n^2) exact-EDT oracle, label-mask
// distance-map generation, and threshold-based mask recovery.

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "toothdet/volume.hpp"

namespace toothdet {

namespace detail {

template <class T>
inline void check_binary(const Volume3<T>& mask, const char* what) {
  for (const T& v : mask.data)
    if (!(v == T(0) || v == T(1)))
      throw std::invalid_argument(std::string(what) + ": mask is not binary");
}

struct ChamferOffset {
  int dx, dy, dz;
  double w;
};

// The 13 causal neighbors of the forward raster pass (x-fastest order).
inline std::vector<ChamferOffset> forward_offsets(
    const std::array<double, 3>& sp) {
  std::vector<ChamferOffset> offs;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const bool causal =
            dz < 0 || (dz == 0 && dy < 0) || (dz == 0 && dy == 0 && dx < 0);
        if (!causal) continue;
        const double ex = dx * sp[0], ey = dy * sp[1], ez = dz * sp[2];
        offs.push_back({dx, dy, dz, std::sqrt(ex * ex + ey * ey + ez * ez)});
      }
  return offs;
}

}  // namespace detail

// Distance from each foreground voxel to the nearest background voxel under
// the chamfer path metric; background voxels are 0. A foreground voxel with a
// face-adjacent background voxel gets exactly 1 (voxel-center convention).
// With no background voxel at all, every voxel gets the volume diagonal as a
// finite sentinel. Distances are in voxel units unless use_spacing is set.
template <class T>
inline VolumeD chamfer_edt(const Volume3<T>& mask, bool use_spacing = false) {
  detail::check_binary(mask, "chamfer_edt");
  const int nx = mask.dims[0], ny = mask.dims[1], nz = mask.dims[2];
  const std::array<double, 3> sp =
      use_spacing ? mask.spacing : std::array<double, 3>{1, 1, 1};
  const double inf = std::numeric_limits<double>::infinity();

  VolumeD d(mask.dims);
  d.spacing = mask.spacing;
  for (std::size_t i = 0; i < d.data.size(); ++i)
    d.data[i] = mask.data[i] == T(0) ? 0.0 : inf;

  const auto fwd = detail::forward_offsets(sp);
  auto relax = [&](int x, int y, int z, int sgn) {
    const std::size_t p = d.index(x, y, z);
    if (d.data[p] == 0.0) return;
    double best = d.data[p];
    for (const auto& o : fwd) {
      const int qx = x + sgn * o.dx, qy = y + sgn * o.dy, qz = z + sgn * o.dz;
      if (!d.in_bounds(qx, qy, qz)) continue;
      const double cand = d.data[d.index(qx, qy, qz)] + o.w;
      if (cand < best) best = cand;
    }
    d.data[p] = best;
  };

  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) relax(x, y, z, +1);
  for (int z = nz - 1; z >= 0; --z)
    for (int y = ny - 1; y >= 0; --y)
      for (int x = nx - 1; x >= 0; --x) relax(x, y, z, -1);

  const double diag = std::sqrt(double(nx) * sp[0] * nx * sp[0] +
                                double(ny) * sp[1] * ny * sp[1] +
                                double(nz) * sp[2] * nz * sp[2]);
  for (double& v : d.data)
    if (!std::isfinite(v)) v = diag;
  return d;
}

// Exact Euclidean distance by minimizing over every background voxel.
// Quadratic cost; intended as a reference for small volumes.
template <class T>
inline VolumeD exact_edt_bruteforce(const Volume3<T>& mask) {
  detail::check_binary(mask, "exact_edt_bruteforce");
  const int nx = mask.dims[0], ny = mask.dims[1], nz = mask.dims[2];

  std::vector<std::array<int, 3>> background;
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x)
        if (mask.at(x, y, z) == T(0)) background.push_back({x, y, z});

  VolumeD d(mask.dims);
  d.spacing = mask.spacing;
  const double diag =
      std::sqrt(double(nx) * nx + double(ny) * ny + double(nz) * nz);
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        if (mask.at(x, y, z) == T(0)) continue;
        double best2 = std::numeric_limits<double>::infinity();
        for (const auto& b : background) {
          const double ddx = x - b[0], ddy = y - b[1], ddz = z - b[2];
          const double e2 = ddx * ddx + ddy * ddy + ddz * ddz;
          if (e2 < best2) best2 = e2;
        }
        d.at(x, y, z) = background.empty() ? diag : std::sqrt(best2);
      }
  return d;
}

// Distance map of one instance: chamfer transform of (label == target_label).
// Other instances and background read 0.
template <class L>
inline VolumeD make_gt_distance(const Volume3<L>& label_patch,
                                long target_label) {
  static_assert(std::is_integral_v<L>);
  if (target_label < 1)
    throw std::invalid_argument("make_gt_distance: label must be >= 1");
  VolumeU8 mask(label_patch.dims);
  mask.spacing = label_patch.spacing;
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    mask.data[i] = long(label_patch.data[i]) == target_label ? 1 : 0;
  return chamfer_edt(mask);
}

// Foreground iff dist >= tau. tau = 0.5 recovers the generating mask exactly
// because interior distances are >= 1 and exterior are 0.
template <class T>
inline VolumeU8 threshold_to_mask(const Volume3<T>& dist, double tau = 0.5) {
  static_assert(std::is_floating_point_v<T>);
  if (!(tau >= 0))
    throw std::invalid_argument("threshold_to_mask: tau must be >= 0");
  VolumeU8 mask(dist.dims);
  mask.spacing = dist.spacing;
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    mask.data[i] = double(dist.data[i]) >= tau ? 1 : 0;
  return mask;
}

}  // namespace toothdet
