#pragma once

// Heavy-ball gradient descent over heatmap logits, minimizing the focal term
// plus the adjacent-channel overlap penalty. Demonstrates, without any
// network, that the overlap penalty pulls entangled neighboring peaks apart.

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "toothdet/anatomy.hpp"
#include "toothdet/heatmap.hpp"
#include "toothdet/losses.hpp"
#include "toothdet/rng.hpp"
#include "toothdet/svg.hpp"

namespace toothdet {

struct OptimizerConfig {
  double step_size = 0.5;
  double momentum = 0.9;
  int max_iters = 2000;
  double loss_tolerance = 1e-8;  // relative change stop
  LossWeights weights;           // lambda_bbox unused: no box parameters here
  FocalParams focal;
  double init_noise = 0.1;       // stddev of the seeded initial logits
};

inline void validate(const OptimizerConfig& cfg) {
  if (!(cfg.step_size > 0))
    throw std::invalid_argument("OptimizerConfig: step_size must be > 0");
  if (!(cfg.momentum >= 0 && cfg.momentum < 1))
    throw std::invalid_argument("OptimizerConfig: momentum outside [0,1)");
  if (cfg.max_iters < 1)
    throw std::invalid_argument("OptimizerConfig: max_iters must be >= 1");
  if (cfg.loss_tolerance < 0)
    throw std::invalid_argument("OptimizerConfig: negative tolerance");
  if (cfg.init_noise < 0)
    throw std::invalid_argument("OptimizerConfig: negative init noise");
  validate(cfg.weights);
  validate(cfg.focal);
}

struct divergence_error : std::runtime_error {
  int iteration;
  explicit divergence_error(int iter)
      : std::runtime_error("optimizer diverged (non-finite loss) at iteration " +
                           std::to_string(iter)),
        iteration(iter) {}
};

struct OptRecord {
  int iteration = 0;
  double total = 0.0;
  double heat = 0.0;
  double gd = 0.0;
  std::vector<Peak> peaks;  // per-channel argmax at this iteration
};

struct OptTrace {
  std::vector<OptRecord> records;
};

struct ObjectiveParts {
  double total = 0.0;
  double heat = 0.0;
  double gd = 0.0;
};

// Numerically stable logistic.
inline double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// The exact objective the optimizer descends, in logit space:
//   lambda_heat * focal(logistic(z), target) + lambda_gd * overlap(logistic(z))
// Writes x = logistic(z) to x_out and, when grad_out is non-null, d/dz of the
// objective (loss gradients chained through x(1-x)).
inline ObjectiveParts demo_objective(const HeatmapStack& z,
                                     const HeatmapStack& target,
                                     const AdjacencySet& adj,
                                     const LossWeights& weights,
                                     const FocalParams& focal,
                                     HeatmapStack& x_out,
                                     HeatmapStack* grad_out = nullptr) {
  check_same_shape(z, target, "demo_objective");
  if (x_out.dims != z.dims || x_out.channels.size() != z.channels.size())
    x_out = HeatmapStack(z.dims, z.num_channels());
  for (int c = 0; c < z.num_channels(); ++c) {
    const auto& zd = z.channels[c].data;
    auto& xd = x_out.channels[c].data;
    for (std::size_t i = 0; i < zd.size(); ++i) xd[i] = logistic(zd[i]);
  }

  ScalarGrad f = focal_loss(x_out, target, focal);
  ScalarGrad g = gd_loss(x_out, adj);
  ObjectiveParts parts;
  parts.heat = f.value;
  parts.gd = g.value;
  parts.total = weights.lambda_heat * f.value + weights.lambda_gd * g.value;

  if (grad_out) {
    if (grad_out->dims != z.dims ||
        grad_out->channels.size() != z.channels.size())
      *grad_out = HeatmapStack(z.dims, z.num_channels());
    for (int c = 0; c < z.num_channels(); ++c) {
      const auto& xd = x_out.channels[c].data;
      const auto& fd = f.grad.channels[c].data;
      const auto& gd = g.grad.channels[c].data;
      auto& od = grad_out->channels[c].data;
      for (std::size_t i = 0; i < xd.size(); ++i)
        od[i] = (weights.lambda_heat * fd[i] + weights.lambda_gd * gd[i]) *
                xd[i] * (1.0 - xd[i]);
    }
  }
  return parts;
}

namespace detail {

inline std::vector<Peak> stack_peaks(const HeatmapStack& x) {
  std::vector<Peak> peaks;
  for (int c = 0; c < x.num_channels(); ++c) {
    const auto& d = x.channels[c].data;
    std::size_t best = 0;
    for (std::size_t i = 1; i < d.size(); ++i)
      if (d[i] > d[best]) best = i;
    Peak p;
    p.tooth = ToothId::from_channel(c);
    const int nx = x.dims[0], ny = x.dims[1];
    p.voxel = {int(best % nx), int(best / nx % ny), int(best / nx / ny)};
    p.score = d.empty() ? 0.0 : d[best];
    peaks.push_back(p);
  }
  return peaks;
}

}  // namespace detail

// Gradient descent with momentum on unconstrained logits z, x = logistic(z).
// Initial z is seeded Gaussian noise. Records one trace entry per evaluated
// iteration; stops at max_iters or when the relative loss change drops below
// loss_tolerance. Logits are kept in [-40, 40], which leaves x strictly
// inside (0,1) and every loss term finite.
inline std::pair<HeatmapStack, OptTrace> optimize_heatmaps(
    const HeatmapStack& target, const AdjacencySet& adj,
    const OptimizerConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(seed);
  HeatmapStack z(target.dims, target.num_channels());
  for (auto& ch : z.channels)
    for (double& v : ch.data) v = rng.normal(0.0, cfg.init_noise);

  HeatmapStack x, grad;
  HeatmapStack velocity(target.dims, target.num_channels());
  OptTrace trace;
  double prev = 0.0;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const ObjectiveParts parts =
        demo_objective(z, target, adj, cfg.weights, cfg.focal, x, &grad);
    if (!std::isfinite(parts.total)) throw divergence_error(iter);

    OptRecord rec;
    rec.iteration = iter;
    rec.total = parts.total;
    rec.heat = parts.heat;
    rec.gd = parts.gd;
    rec.peaks = detail::stack_peaks(x);
    trace.records.push_back(std::move(rec));

    if (iter > 0 &&
        std::abs(parts.total - prev) <=
            cfg.loss_tolerance * std::max(std::abs(prev), 1e-12))
      break;
    prev = parts.total;

    for (int c = 0; c < z.num_channels(); ++c) {
      auto& zd = z.channels[c].data;
      auto& vd = velocity.channels[c].data;
      const auto& gd = grad.channels[c].data;
      for (std::size_t i = 0; i < zd.size(); ++i) {
        vd[i] = cfg.momentum * vd[i] - cfg.step_size * gd[i];
        zd[i] = std::clamp(zd[i] + vd[i], -40.0, 40.0);
      }
    }
  }
  // x holds logistic(z) from the last evaluation.
  return {std::move(x), std::move(trace)};
}

// Pairwise overlap of the two-channel result, the quantity the penalty
// drives toward zero.
inline double pairwise_overlap(const HeatmapStack& x, int ci, int cj) {
  const auto& a = x.channels.at(ci).data;
  const auto& b = x.channels.at(cj).data;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Two adjacent-channel targets whose Gaussians sit 2 voxels apart on 64^3:
// heavily entangled, with half-integer centers so neither target contains an
// exact-1 anchor pixel. Channels 0 and 1 (an adjacent pair).
inline HeatmapStack entangled_pair_target(int n = 64) {
  HeatmapStack target({n, n, n}, 2);
  const double mid = n / 2.0;
  GaussianSpec a, b;
  a.center = {mid - 0.5, mid, mid};
  b.center = {mid + 1.5, mid, mid};
  a.sigma = b.sigma = {3.0, 3.0, 3.0};
  // Both adjacent channels receive the identical merged response: the two
  // teeth blur into one plateau and grouped supervision cannot say which
  // channel owns which tooth. The plateau tops out just below the positive
  // value 1, so the focal term leaves it essentially frozen.
  const VolumeD ga = render_gaussian(target.dims, a);
  const VolumeD gb = render_gaussian(target.dims, b);
  VolumeD merged(target.dims);
  for (std::size_t i = 0; i < merged.data.size(); ++i)
    merged.data[i] = std::min(0.995, ga.data[i] + gb.data[i]);
  target.channels[0] = merged;
  target.channels[1] = std::move(merged);
  return target;
}

// Two well-separated integer-center targets on the same adjacent pair.
inline HeatmapStack separated_pair_target(int n = 64) {
  HeatmapStack target({n, n, n}, 2);
  GaussianSpec a, b;
  a.center = {n / 4.0, n / 2.0, n / 2.0};
  b.center = {3.0 * n / 4.0, n / 2.0, n / 2.0};
  a.sigma = b.sigma = {2.0, 2.0, 2.0};
  target.channels[0] = render_gaussian(target.dims, a);
  target.channels[1] = render_gaussian(target.dims, b);
  return target;
}

// CSV (and optional SVG) comparison of two runs on the same target: the
// per-iteration overlap columns, then a final peak table per run. trace_a is
// the unpenalized baseline, trace_b the penalized run.
inline void disentangle_report(const OptTrace& trace_a, const OptTrace& trace_b,
                               const std::string& csv_path,
                               const std::string& svg_path = "") {
  if (trace_a.records.empty() || trace_b.records.empty())
    throw std::invalid_argument("disentangle_report: empty trace");
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw io_error("disentangle_report: cannot open " + csv_path);
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  out << "iteration,overlap_baseline,overlap_penalized,total_baseline,"
         "total_penalized\n";
  const std::size_t rows =
      std::max(trace_a.records.size(), trace_b.records.size());
  for (std::size_t i = 0; i < rows; ++i) {
    out << i << ",";
    if (i < trace_a.records.size()) out << num(trace_a.records[i].gd);
    out << ",";
    if (i < trace_b.records.size()) out << num(trace_b.records[i].gd);
    out << ",";
    if (i < trace_a.records.size()) out << num(trace_a.records[i].total);
    out << ",";
    if (i < trace_b.records.size()) out << num(trace_b.records[i].total);
    out << "\n";
  }
  out << "\nrun,channel,fdi,peak_x,peak_y,peak_z,peak_score\n";
  for (const auto* pair : {&trace_a, &trace_b}) {
    const char* name = pair == &trace_a ? "baseline" : "penalized";
    for (const Peak& p : pair->records.back().peaks)
      out << name << "," << p.tooth.channel() << "," << p.tooth.fdi << ","
          << p.voxel[0] << "," << p.voxel[1] << "," << p.voxel[2] << ","
          << num(p.score) << "\n";
  }
  if (!out) throw io_error("disentangle_report: write failed for " + csv_path);
  out.close();

  if (!svg_path.empty()) {
    PlotSeries sa, sb;
    sa.label = "overlap, no penalty";
    sb.label = "overlap, with penalty";
    for (const auto& r : trace_a.records)
      sa.pts.push_back({double(r.iteration), r.gd});
    for (const auto& r : trace_b.records)
      sb.pts.push_back({double(r.iteration), r.gd});
    svg_xy_plot(svg_path, "Adjacent-channel overlap during optimization",
                "iteration", "overlap", {sa, sb});
  }
}

}  // namespace toothdet
