#pragma once

// Volume3<T>: dense 3D scalar grid in x-fastest raster order, the carrier for
// images, heatmaps, label maps, masks, and distance maps. BBox3: axis-aligned
// box in continuous voxel coordinates (voxel i spans [i-0.5, i+0.5), so the
// full extent of an n-voxel axis is [-0.5, n-0.5]).

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace toothdet {

// I/O failures; everything else invalid throws std::invalid_argument.
struct io_error : std::runtime_error {
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

struct BBox3 {
  std::array<double, 3> lo{0, 0, 0};
  std::array<double, 3> hi{0, 0, 0};
};

inline void validate_box(const BBox3& b) {
  for (int a = 0; a < 3; ++a)
    if (!(b.lo[a] <= b.hi[a])) throw std::invalid_argument("BBox3: min > max");
}

inline double box_volume(const BBox3& b) {
  return (b.hi[0] - b.lo[0]) * (b.hi[1] - b.lo[1]) * (b.hi[2] - b.lo[2]);
}

inline bool box_contains(const BBox3& b, const std::array<double, 3>& p) {
  return p[0] >= b.lo[0] && p[0] <= b.hi[0] && p[1] >= b.lo[1] &&
         p[1] <= b.hi[1] && p[2] >= b.lo[2] && p[2] <= b.hi[2];
}

// Pushes every face outward by margin voxels.
inline BBox3 expand_box(const BBox3& box, double margin) {
  if (margin < 0) throw std::invalid_argument("expand_box: negative margin");
  BBox3 out = box;
  for (int a = 0; a < 3; ++a) {
    out.lo[a] -= margin;
    out.hi[a] += margin;
  }
  return out;
}

template <class T>
struct Volume3 {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<T> data;

  Volume3() = default;
  Volume3(int nx, int ny, int nz, T fill = T{}) : dims{nx, ny, nz} {
    if (nx <= 0 || ny <= 0 || nz <= 0)
      throw std::invalid_argument("Volume3: non-positive dims");
    data.assign(std::size_t(nx) * ny * nz, fill);
  }
  explicit Volume3(const std::array<int, 3>& d, T fill = T{})
      : Volume3(d[0], d[1], d[2], fill) {}

  std::size_t size() const { return data.size(); }

  std::size_t index(int x, int y, int z) const {
    return std::size_t(x) +
           std::size_t(dims[0]) * (std::size_t(y) + std::size_t(dims[1]) * z);
  }
  T& at(int x, int y, int z) { return data[index(x, y, z)]; }
  const T& at(int x, int y, int z) const { return data[index(x, y, z)]; }

  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && x < dims[0] && y >= 0 && y < dims[1] && z >= 0 &&
           z < dims[2];
  }

  BBox3 extent() const {
    return BBox3{{-0.5, -0.5, -0.5},
                 {dims[0] - 0.5, dims[1] - 0.5, dims[2] - 0.5}};
  }
};

using VolumeF = Volume3<float>;
using VolumeD = Volume3<double>;
using VolumeU8 = Volume3<uint8_t>;
using VolumeU16 = Volume3<uint16_t>;

template <class To, class From>
Volume3<To> astype(const Volume3<From>& v) {
  Volume3<To> out(v.dims);
  out.spacing = v.spacing;
  for (std::size_t i = 0; i < v.data.size(); ++i)
    out.data[i] = To(v.data[i]);
  return out;
}

inline bool boxes_intersect(const BBox3& a, const BBox3& b) {
  for (int ax = 0; ax < 3; ++ax)
    if (a.hi[ax] < b.lo[ax] || b.hi[ax] < a.lo[ax]) return false;
  return true;
}

enum class ResizeMode { nearest, trilinear };

namespace detail {

// Nearest-voxel index for continuous coordinate s. Exact .5 fractions round
// away from the box center c (the rasterization rule for fractional extents
// produced by center +- W/2 boxes).
inline int nearest_index(double s, double c) {
  const double f = std::floor(s);
  const double frac = s - f;
  if (frac == 0.5) {
    if (s < c) return int(f);
    if (s > c) return int(f) + 1;
    return int(f);
  }
  return int(std::floor(s + 0.5));
}

template <class T>
double sample_or_zero(const Volume3<T>& v, int x, int y, int z) {
  return v.in_bounds(x, y, z) ? double(v.at(x, y, z)) : 0.0;
}

template <class T>
double trilinear_sample(const Volume3<T>& v, double sx, double sy, double sz) {
  const int x0 = int(std::floor(sx)), y0 = int(std::floor(sy)),
            z0 = int(std::floor(sz));
  const double fx = sx - x0, fy = sy - y0, fz = sz - z0;
  double acc = 0.0;
  for (int dz = 0; dz <= 1; ++dz)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) *
                         (dz ? fz : 1 - fz);
        if (w != 0.0)
          acc += w * sample_or_zero(v, x0 + dx, y0 + dy, z0 + dz);
      }
  return acc;
}

}  // namespace detail

// Samples v over box into an out_dims grid. Output voxel j along axis a reads
// the source coordinate lo + (j+0.5) * (hi-lo) / out so a full-extent box with
// out_dims == dims is an exact identity. Coordinates outside v read as 0.
template <class T>
Volume3<T> crop_resize(const Volume3<T>& v, const BBox3& box,
                       const std::array<int, 3>& out_dims, ResizeMode mode) {
  validate_box(box);
  for (int a = 0; a < 3; ++a)
    if (out_dims[a] <= 0)
      throw std::invalid_argument("crop_resize: non-positive out_dims");
  if (!boxes_intersect(box, v.extent()))
    throw std::invalid_argument("crop_resize: box does not intersect volume");

  Volume3<T> out(out_dims);
  out.spacing = v.spacing;
  std::array<double, 3> step, center;
  for (int a = 0; a < 3; ++a) {
    step[a] = (box.hi[a] - box.lo[a]) / out_dims[a];
    center[a] = 0.5 * (box.lo[a] + box.hi[a]);
  }

  std::size_t o = 0;
  for (int z = 0; z < out_dims[2]; ++z) {
    const double sz = box.lo[2] + (z + 0.5) * step[2];
    for (int y = 0; y < out_dims[1]; ++y) {
      const double sy = box.lo[1] + (y + 0.5) * step[1];
      for (int x = 0; x < out_dims[0]; ++x, ++o) {
        const double sx = box.lo[0] + (x + 0.5) * step[0];
        if (mode == ResizeMode::nearest) {
          const int ix = detail::nearest_index(sx, center[0]);
          const int iy = detail::nearest_index(sy, center[1]);
          const int iz = detail::nearest_index(sz, center[2]);
          out.data[o] =
              v.in_bounds(ix, iy, iz) ? v.at(ix, iy, iz) : T(0);
        } else {
          out.data[o] = T(detail::trilinear_sample(v, sx, sy, sz));
        }
      }
    }
  }
  return out;
}

// Min-max rescale to [0,1]; a constant volume maps to all zeros.
template <class T>
Volume3<T> normalize(const Volume3<T>& v) {
  static_assert(std::is_floating_point_v<T>,
                "normalize expects a floating-point volume");
  Volume3<T> out(v.dims);
  out.spacing = v.spacing;
  if (v.data.empty()) return out;
  T lo = v.data[0], hi = v.data[0];
  for (const T& x : v.data) {
    if (x < lo) lo = x;
    if (x > hi) hi = x;
  }
  if (hi == lo) return out;  // already all zeros
  const T range = hi - lo;
  for (std::size_t i = 0; i < v.data.size(); ++i)
    out.data[i] = (v.data[i] - lo) / range;
  return out;
}

}  // namespace toothdet
