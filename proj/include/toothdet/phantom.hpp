#pragma once

// Seeded synthetic dental-arch generator: ellipsoidal teeth placed along two
// elliptical arcs, producing an intensity volume, a label volume, tight
// ground-truth boxes, and controllable perturbed detections.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "toothdet/anatomy.hpp"
#include "toothdet/heatmap.hpp"
#include "toothdet/rng.hpp"
#include "toothdet/volume.hpp"

namespace toothdet {

struct ArchSpec {
  double radius_x = 44.0;  // arc semi-axis, voxels
  double radius_y = 36.0;
  double z = 82.0;                            // occlusal plane height
  std::array<double, 8> extent{10, 9, 11, 12, 13, 15, 17, 19};  // position 1..8
};

struct PhantomSpec {
  std::uint64_t seed = 0;
  std::array<int, 3> dims{128, 128, 128};
  std::array<double, 2> arch_center{64.0, 70.0};
  ArchSpec upper{44.0, 36.0, 82.0, {10, 9, 11, 12, 13, 15, 17, 19}};
  ArchSpec lower{40.0, 33.0, 46.0, {8, 8, 10, 11, 12, 15, 18, 20}};
  double center_jitter = 0.5;  // stddev, voxels
  double size_jitter = 0.3;    // stddev on each semi-axis, voxels
  double gap = 0.6;            // minimum surface clearance along center lines
  std::vector<int> missing_teeth;  // FDI codes to skip
  double background_intensity = 0.05;
  double tooth_intensity = 0.85;
  double intensity_noise = 0.02;
};

inline void validate(const PhantomSpec& spec) {
  for (int d : spec.dims)
    if (d <= 0) throw std::invalid_argument("PhantomSpec: non-positive dims");
  for (const ArchSpec* arch : {&spec.upper, &spec.lower}) {
    if (!(arch->radius_x > 0) || !(arch->radius_y > 0))
      throw std::invalid_argument("PhantomSpec: non-positive arch radius");
    for (double e : arch->extent)
      if (!(e > 0))
        throw std::invalid_argument("PhantomSpec: non-positive tooth extent");
  }
  if (spec.center_jitter < 0 || spec.size_jitter < 0)
    throw std::invalid_argument("PhantomSpec: negative jitter");
  if (spec.gap < 0) throw std::invalid_argument("PhantomSpec: negative gap");
  for (int fdi : spec.missing_teeth)
    if (!is_valid_fdi(fdi))
      throw std::invalid_argument("PhantomSpec: invalid missing tooth code");
}

struct PhantomTooth {
  ToothId tooth;
  std::array<double, 3> center{0, 0, 0};  // box center, voxel coordinates
  BBox3 box;                              // tight AABB of the label mask
  double arch_angle = 0.0;                // station parameter along the arc
};

struct PhantomTruth {
  VolumeF intensity;
  VolumeU8 labels;  // channel+1, 0 = background
  std::vector<PhantomTooth> teeth;
};

struct NoiseSpec {
  double center_sigma = 0.0;
  double size_sigma = 0.0;
  double drop_prob = 0.0;
  double misid_prob = 0.0;
};

namespace detail {

// Tangential and radial semi-axes from the tooth's occlusal extent. Caps keep
// neighbors separable on the default arch.
inline double tangential_radius(double extent) {
  return std::min(3.1, 0.22 * extent);
}
inline double radial_radius(double extent) {
  return std::min(4.2, 0.3 * extent + 0.6);
}

struct Ellipsoid {
  ToothId tooth;
  std::array<double, 3> c{0, 0, 0};
  std::array<double, 3> r{1, 1, 1};
  double angle = 0.0;
  bool present = false;
};

// Support radius of an axis-aligned ellipsoid in direction u (unit).
inline double support(const Ellipsoid& e, const std::array<double, 3>& u) {
  double s = 0.0;
  for (int a = 0; a < 3; ++a) s += e.r[a] * u[a] * e.r[a] * u[a];
  return std::sqrt(s);
}

// Arc-length table of the half ellipse x = cx + rx cos t, y = cy - ry sin t,
// t in [t0, pi - t0]. Teeth get stations at prescribed arc-length fractions.
struct ArcTable {
  double t0 = 0.0, t1 = 0.0;
  std::vector<double> t;    // parameter samples
  std::vector<double> s;    // cumulative length at t
  double total() const { return s.back(); }

  ArcTable(double rx, double ry, double margin) {
    constexpr int kSamples = 4096;
    t0 = margin;
    t1 = 3.14159265358979323846 - margin;
    t.resize(kSamples + 1);
    s.resize(kSamples + 1);
    double prev_x = 0.0, prev_y = 0.0;
    for (int i = 0; i <= kSamples; ++i) {
      const double ti = t0 + (t1 - t0) * i / kSamples;
      const double x = rx * std::cos(ti), y = -ry * std::sin(ti);
      t[i] = ti;
      s[i] = i == 0 ? 0.0
                    : s[i - 1] + std::hypot(x - prev_x, y - prev_y);
      prev_x = x;
      prev_y = y;
    }
  }

  double param_at(double target) const {
    target = std::clamp(target, 0.0, total());
    const auto it = std::lower_bound(s.begin(), s.end(), target);
    const std::size_t i = std::size_t(it - s.begin());
    if (i == 0) return t.front();
    const double seg = s[i] - s[i - 1];
    const double f = seg > 0 ? (target - s[i - 1]) / seg : 0.0;
    return t[i - 1] + f * (t[i] - t[i - 1]);
  }
};

}  // namespace detail

// Deterministic phantom generation. Teeth are strict-interior voxelizations
// of axis-aligned ellipsoids; ground-truth boxes are the exact tight AABBs of
// the label masks in voxel-center coordinates.
inline PhantomTruth generate_phantom(const PhantomSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);

  std::array<detail::Ellipsoid, kNumTeeth> teeth;
  std::array<bool, kNumTeeth> missing{};
  for (int fdi : spec.missing_teeth) missing[fdi_to_channel(fdi)] = true;

  // Station placement: arc length allocated proportionally to tooth width so
  // molars get wider berths than incisors.
  for (const bool upper : {true, false}) {
    const ArchSpec& arch = upper ? spec.upper : spec.lower;
    const auto order = upper ? upper_arch_order() : lower_arch_order();
    const detail::ArcTable table(arch.radius_x, arch.radius_y, 0.08);

    std::array<double, 16> width;
    double total_width = 0.0;
    for (int i = 0; i < 16; ++i) {
      const ToothId tid(order[i]);
      const double ext = arch.extent[tid.position() - 1];
      width[i] = 2.0 * detail::tangential_radius(ext) + spec.gap;
      total_width += width[i];
    }
    // Squeeze proportionally when the arc is shorter than the tooth row; the
    // separation pass below then shrinks radii or rejects the spec.
    const double scale =
        total_width > table.total() ? table.total() / total_width : 1.0;

    double cum = 0.0;
    for (int i = 0; i < 16; ++i) {
      const ToothId tid(order[i]);
      const double s_mid = (cum + width[i] / 2.0) * scale +
                           (table.total() - total_width * scale) / 2.0;
      cum += width[i];
      const double theta = table.param_at(s_mid);

      detail::Ellipsoid& e = teeth[tid.channel()];
      e.tooth = tid;
      e.angle = theta;
      e.present = !missing[tid.channel()];
      e.c = {spec.arch_center[0] + arch.radius_x * std::cos(theta),
             spec.arch_center[1] - arch.radius_y * std::sin(theta), arch.z};

      const double ext = arch.extent[tid.position() - 1];
      const double r_tan = detail::tangential_radius(ext);
      const double r_rad = detail::radial_radius(ext);
      // Unit tangent of the arc; the normal is its 90-degree rotation, so the
      // axis-aligned semi-axes blend tangential/radial widths by |components|.
      const double tx = -arch.radius_x * std::sin(theta);
      const double ty = -arch.radius_y * std::cos(theta);
      const double tn = std::hypot(tx, ty);
      const double ax = std::abs(tx) / tn, ay = std::abs(ty) / tn;
      e.r = {ax * r_tan + ay * r_rad, ay * r_tan + ax * r_rad, ext / 2.0};
    }
  }

  // Jitter draws happen for every tooth in channel order, present or not, so
  // the stream layout is fixed.
  for (int c = 0; c < kNumTeeth; ++c) {
    std::array<double, 3> dc, dr;
    for (int a = 0; a < 3; ++a) dc[a] = rng.normal(0.0, spec.center_jitter);
    for (int a = 0; a < 3; ++a) dr[a] = rng.normal(0.0, spec.size_jitter);
    if (!teeth[c].present) continue;
    for (int a = 0; a < 3; ++a) {
      teeth[c].c[a] += dc[a];
      // Floor 1.6 keeps every tooth at least two voxels wide per axis, so
      // ground-truth boxes never degenerate to zero extent.
      teeth[c].r[a] = std::max(1.6, teeth[c].r[a] + dr[a]);
    }
  }

  // Deterministic separation: shrink violating pairs until every pair of
  // present teeth admits a separating plane with the requested clearance.
  for (int round = 0; round < 16; ++round) {
    bool violated = false;
    for (int i = 0; i < kNumTeeth; ++i) {
      if (!teeth[i].present) continue;
      for (int j = i + 1; j < kNumTeeth; ++j) {
        if (!teeth[j].present) continue;
        std::array<double, 3> d{teeth[j].c[0] - teeth[i].c[0],
                                teeth[j].c[1] - teeth[i].c[1],
                                teeth[j].c[2] - teeth[i].c[2]};
        const double dist = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        if (dist <= spec.gap)
          throw std::invalid_argument(
              "generate_phantom: coincident tooth centers, spec cannot fit");
        for (double& v : d) v /= dist;
        const double need = detail::support(teeth[i], d) +
                            detail::support(teeth[j], d) + spec.gap;
        if (need <= dist) continue;
        violated = true;
        const double f = std::max(0.5, (dist - spec.gap) / (need - spec.gap));
        for (int a = 0; a < 3; ++a) {
          teeth[i].r[a] = std::max(1.6, teeth[i].r[a] * f);
          teeth[j].r[a] = std::max(1.6, teeth[j].r[a] * f);
        }
        // Radius floors can leave the pair touching; push the centers apart
        // along the pair axis to restore the clearance.
        const double still = detail::support(teeth[i], d) +
                             detail::support(teeth[j], d) + spec.gap - dist;
        if (still > 1e-9) {
          for (int a = 0; a < 3; ++a) {
            teeth[i].c[a] -= d[a] * (still / 2 + 0.01);
            teeth[j].c[a] += d[a] * (still / 2 + 0.01);
          }
        }
      }
    }
    if (!violated) break;
    if (round == 15)
      throw std::invalid_argument(
          "generate_phantom: teeth cannot be separated, spec cannot fit");
  }

  // Bounds check before voxelization; a tooth poking out of the volume would
  // silently crop its ground truth.
  for (const auto& e : teeth) {
    if (!e.present) continue;
    for (int a = 0; a < 3; ++a)
      if (e.c[a] - e.r[a] < -0.5 || e.c[a] + e.r[a] > spec.dims[a] - 0.5)
        throw std::invalid_argument(
            "generate_phantom: tooth exceeds volume, spec cannot fit");
  }

  PhantomTruth truth;
  truth.labels = VolumeU8(spec.dims);
  truth.intensity = VolumeF(spec.dims, float(spec.background_intensity));

  for (int c = 0; c < kNumTeeth; ++c) {
    const detail::Ellipsoid& e = teeth[c];
    if (!e.present) continue;
    std::array<int, 3> lo, hi;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, int(std::ceil(e.c[a] - e.r[a])));
      hi[a] = std::min(spec.dims[a] - 1, int(std::floor(e.c[a] + e.r[a])));
    }
    std::array<int, 3> vmin{INT32_MAX, INT32_MAX, INT32_MAX};
    std::array<int, 3> vmax{INT32_MIN, INT32_MIN, INT32_MIN};
    for (int z = lo[2]; z <= hi[2]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[0]; x <= hi[0]; ++x) {
          const double ex = (x - e.c[0]) / e.r[0];
          const double ey = (y - e.c[1]) / e.r[1];
          const double ez = (z - e.c[2]) / e.r[2];
          const double rho2 = ex * ex + ey * ey + ez * ez;
          if (rho2 >= 1.0) continue;
          auto& lab = truth.labels.at(x, y, z);
          if (lab != 0)
            throw std::logic_error("generate_phantom: overlapping labels");
          lab = std::uint8_t(c + 1);
          truth.intensity.at(x, y, z) =
              float(spec.tooth_intensity * (1.0 - 0.3 * rho2));
          for (int a = 0; a < 3; ++a) {
            const int v = a == 0 ? x : a == 1 ? y : z;
            vmin[a] = std::min(vmin[a], v);
            vmax[a] = std::max(vmax[a], v);
          }
        }
    PhantomTooth pt;
    pt.tooth = e.tooth;
    pt.arch_angle = e.angle;
    for (int a = 0; a < 3; ++a) {
      pt.box.lo[a] = vmin[a];
      pt.box.hi[a] = vmax[a];
      pt.center[a] = (vmin[a] + vmax[a]) / 2.0;
    }
    truth.teeth.push_back(pt);
  }

  if (spec.intensity_noise > 0) {
    for (float& v : truth.intensity.data) {
      v = float(std::clamp(double(v) + rng.normal(0.0, spec.intensity_noise),
                           0.0, 1.0));
    }
  }
  return truth;
}

inline GroundTruth ground_truth_boxes(const PhantomTruth& truth) {
  GroundTruth gts;
  for (const auto& t : truth.teeth) gts.push_back({t.tooth, t.box});
  return gts;
}

inline std::vector<Detection> to_detections(const PhantomTruth& truth) {
  std::vector<Detection> dets;
  for (const auto& t : truth.teeth) {
    Detection d;
    d.tooth = t.tooth;
    d.center = t.center;
    d.box_dims = box_extent(t.box);
    d.score = 1.0;
    dets.push_back(d);
  }
  return dets;
}

// Seeded perturbation of the ground truth into imperfect "predictions". Every
// tooth consumes a fixed number of draws before any decision, so one tooth's
// outcome never shifts another's noise. Scores stay 1.0: zero noise yields
// detections bit-equal to the ground truth.
inline std::vector<Detection> perturb_predictions(const PhantomTruth& truth,
                                                  const NoiseSpec& noise,
                                                  std::uint64_t seed) {
  if (noise.drop_prob < 0 || noise.drop_prob > 1 || noise.misid_prob < 0 ||
      noise.misid_prob > 1)
    throw std::invalid_argument(
        "perturb_predictions: probabilities outside [0,1]");
  if (noise.center_sigma < 0 || noise.size_sigma < 0)
    throw std::invalid_argument("perturb_predictions: negative sigma");

  const AdjacencySet adj = default_adjacency();
  Rng rng(seed);
  std::vector<Detection> dets;
  for (const auto& t : truth.teeth) {
    std::array<double, 3> nc, ns;
    for (int a = 0; a < 3; ++a) nc[a] = rng.normal();
    for (int a = 0; a < 3; ++a) ns[a] = rng.normal();
    const double u_drop = rng.uniform();
    const double u_mis = rng.uniform();
    const double u_neighbor = rng.uniform();

    if (u_drop < noise.drop_prob) continue;
    Detection d;
    d.tooth = t.tooth;
    if (u_mis < noise.misid_prob) {
      const auto neighbors = adj.neighbors(t.tooth);
      if (!neighbors.empty()) {
        const std::size_t pick = std::min(
            neighbors.size() - 1, std::size_t(u_neighbor * neighbors.size()));
        d.tooth = ToothId::from_channel(neighbors[pick]);
      }
    }
    const auto ext = box_extent(t.box);
    for (int a = 0; a < 3; ++a) {
      d.center[a] = t.center[a] + noise.center_sigma * nc[a];
      d.box_dims[a] = std::max(1.0, ext[a] + noise.size_sigma * ns[a]);
    }
    d.score = 1.0;
    dets.push_back(d);
  }
  return dets;
}

}  // namespace toothdet
