#pragma once

// Detection/identification evaluation: box IOU, object inclusion ratio,
// greedy score-ordered matching, precision/recall, average precision with an
// every-point precision envelope, misidentification confusion matrix, and a
// multi-case aggregate report.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "toothdet/anatomy.hpp"
#include "toothdet/heatmap.hpp"
#include "toothdet/volume.hpp"

namespace toothdet {

// Continuous-volume intersection over union; 0 when the union is empty.
inline double iou(const BBox3& a, const BBox3& b) {
  validate_box(a);
  validate_box(b);
  double inter = 1.0;
  for (int i = 0; i < 3; ++i)
    inter *= std::max(0.0, std::min(a.hi[i], b.hi[i]) -
                               std::max(a.lo[i], b.lo[i]));
  const double uni = box_volume(a) + box_volume(b) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// |M intersect D| / |M| where M is the mask's foreground voxel set and D the
// voxel centers lying inside the closed box.
template <class T>
inline double oir(const Volume3<T>& mask, const BBox3& box) {
  validate_box(box);
  std::size_t m = 0, hit = 0;
  for (int z = 0; z < mask.dims[2]; ++z)
    for (int y = 0; y < mask.dims[1]; ++y)
      for (int x = 0; x < mask.dims[0]; ++x) {
        if (mask.at(x, y, z) == T(0)) continue;
        ++m;
        hit += box_contains(box, {double(x), double(y), double(z)});
      }
  if (m == 0) throw std::invalid_argument("oir: empty mask");
  return double(hit) / double(m);
}

// Same ratio computed against (labels == value) without materializing a mask.
template <class L>
inline double oir_labeled(const Volume3<L>& labels, long value,
                          const BBox3& box) {
  validate_box(box);
  std::size_t m = 0, hit = 0;
  for (int z = 0; z < labels.dims[2]; ++z)
    for (int y = 0; y < labels.dims[1]; ++y)
      for (int x = 0; x < labels.dims[0]; ++x) {
        if (long(labels.at(x, y, z)) != value) continue;
        ++m;
        hit += box_contains(box, {double(x), double(y), double(z)});
      }
  if (m == 0) throw std::invalid_argument("oir: empty mask");
  return double(hit) / double(m);
}

namespace detail {

// Rank order for greedy matching: score desc, channel asc, insertion asc.
inline std::vector<std::size_t> ranked_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> idx(dets.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return dets[a].tooth.channel() < dets[b].tooth.channel();
  });
  return idx;
}

}  // namespace detail

// Greedy matching in descending score order. A detection claims the unmatched
// ground truth of the SAME tooth id with maximal IOU >= iou_thresh, else it is
// a false positive. Returns, per input detection, the matched GT index or -1.
inline std::vector<int> match_detections(const std::vector<Detection>& dets,
                                         const GroundTruth& gts,
                                         double iou_thresh = 0.5) {
  if (!(iou_thresh > 0 && iou_thresh < 1))
    throw std::invalid_argument("match_detections: iou_thresh outside (0,1)");
  std::vector<int> gt_of_det(dets.size(), -1);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t di : detail::ranked_order(dets)) {
    const BBox3 dbox = detection_box(dets[di]);
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (taken[gi] || gts[gi].first != dets[di].tooth) continue;
      const double v = iou(dbox, gts[gi].second);
      if (v >= iou_thresh && v > best_iou) {
        best_iou = v;
        best = int(gi);
      }
    }
    if (best >= 0) {
      taken[best] = true;
      gt_of_det[di] = best;
    }
  }
  return gt_of_det;
}

// TP/(TP+FP), TP/(TP+FN); empty denominators count as perfect by convention.
inline std::pair<double, double> precision_recall(
    const std::vector<int>& gt_of_det, std::size_t num_gt) {
  const std::size_t tp =
      std::size_t(std::count_if(gt_of_det.begin(), gt_of_det.end(),
                                [](int g) { return g >= 0; }));
  const double precision =
      gt_of_det.empty() ? 1.0 : double(tp) / double(gt_of_det.size());
  const double recall = num_gt == 0 ? 1.0 : double(tp) / double(num_gt);
  return {precision, recall};
}

struct PRCurve {
  struct Point {
    double recall = 0.0;
    double precision = 0.0;
  };
  std::vector<Point> points;                   // one per rank
  std::vector<std::pair<double, bool>> ranked; // (score, is_true_positive)
};

// Average precision at a fixed IOU threshold over a multi-image set.
// Detections are ranked globally (score desc, channel asc, image asc,
// insertion asc); matching is greedy per image in that global order; AP is
// the area under the monotone precision envelope sampled at every rank.
inline std::pair<double, PRCurve> ap50(
    const std::vector<std::vector<Detection>>& dets,
    const std::vector<GroundTruth>& gts, double iou_thresh = 0.5) {
  if (dets.size() != gts.size())
    throw std::invalid_argument("ap50: image count mismatch");
  struct Entry {
    std::size_t image, index;
  };
  std::vector<Entry> entries;
  for (std::size_t im = 0; im < dets.size(); ++im)
    for (std::size_t i = 0; i < dets[im].size(); ++i)
      entries.push_back({im, i});
  std::stable_sort(entries.begin(), entries.end(),
                   [&](const Entry& a, const Entry& b) {
                     const Detection& da = dets[a.image][a.index];
                     const Detection& db = dets[b.image][b.index];
                     if (da.score != db.score) return da.score > db.score;
                     if (da.tooth.channel() != db.tooth.channel())
                       return da.tooth.channel() < db.tooth.channel();
                     return a.image < b.image;
                   });

  std::size_t total_gt = 0;
  for (const auto& g : gts) total_gt += g.size();

  std::vector<std::vector<bool>> taken(gts.size());
  for (std::size_t im = 0; im < gts.size(); ++im)
    taken[im].assign(gts[im].size(), false);

  PRCurve curve;
  std::size_t tp = 0, fp = 0;
  for (const Entry& e : entries) {
    const Detection& det = dets[e.image][e.index];
    const BBox3 dbox = detection_box(det);
    const GroundTruth& g = gts[e.image];
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t gi = 0; gi < g.size(); ++gi) {
      if (taken[e.image][gi] || g[gi].first != det.tooth) continue;
      const double v = iou(dbox, g[gi].second);
      if (v >= iou_thresh && v > best_iou) {
        best_iou = v;
        best = int(gi);
      }
    }
    const bool is_tp = best >= 0;
    if (is_tp) {
      taken[e.image][best] = true;
      ++tp;
    } else {
      ++fp;
    }
    curve.ranked.push_back({det.score, is_tp});
    PRCurve::Point p;
    p.precision = double(tp) / double(tp + fp);
    p.recall = total_gt == 0 ? 0.0 : double(tp) / double(total_gt);
    curve.points.push_back(p);
  }

  if (total_gt == 0 || curve.points.empty()) return {0.0, curve};

  // Monotone envelope from the right, then sum precision over recall steps.
  std::vector<double> env(curve.points.size());
  double run = 0.0;
  for (std::size_t i = curve.points.size(); i-- > 0;) {
    run = std::max(run, curve.points[i].precision);
    env[i] = run;
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const double r = curve.points[i].recall;
    if (r > prev_recall) {
      ap += (r - prev_recall) * env[i];
      prev_recall = r;
    }
  }
  return {ap, curve};
}

struct ConfusionMatrix {
  std::array<std::array<double, kNumTeeth>, kNumTeeth> cells{};  // [actual][predicted]
  bool normalized = false;
};

namespace detail {

// Class-agnostic greedy matching; adds one count per matched (actual,
// predicted) channel pair and one GT count per actual channel.
inline void accumulate_confusion(const std::vector<Detection>& dets,
                                 const GroundTruth& gts, double iou_thresh,
                                 ConfusionMatrix& m,
                                 std::array<std::size_t, kNumTeeth>& gt_count) {
  for (const auto& g : gts) ++gt_count[g.first.channel()];
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t di : ranked_order(dets)) {
    const BBox3 dbox = detection_box(dets[di]);
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (taken[gi]) continue;
      const double v = iou(dbox, gts[gi].second);
      if (v >= iou_thresh && v > best_iou) {
        best_iou = v;
        best = int(gi);
      }
    }
    if (best < 0) continue;
    taken[best] = true;
    m.cells[gts[best].first.channel()][dets[di].tooth.channel()] += 1.0;
  }
}

inline void normalize_confusion(ConfusionMatrix& m,
                                const std::array<std::size_t, kNumTeeth>& gt_count) {
  for (int r = 0; r < kNumTeeth; ++r) {
    if (gt_count[r] == 0) continue;  // degenerate row stays all-zero
    for (int c = 0; c < kNumTeeth; ++c) m.cells[r][c] /= double(gt_count[r]);
  }
  m.normalized = true;
}

}  // namespace detail

// Rows are actual classes, columns predicted classes; matching ignores class
// so misidentifications land off-diagonal. Normalized rows sum to <= 1
// (undetected ground-truth mass is dropped).
inline ConfusionMatrix confusion_matrix(const std::vector<Detection>& dets,
                                        const GroundTruth& gts,
                                        double iou_thresh = 0.5,
                                        bool normalize = true) {
  ConfusionMatrix m;
  std::array<std::size_t, kNumTeeth> gt_count{};
  detail::accumulate_confusion(dets, gts, iou_thresh, m, gt_count);
  if (normalize) detail::normalize_confusion(m, gt_count);
  return m;
}

struct EvalConfig {
  double iou_thresh = 0.5;
  double oir_margin = 0.0;        // box expansion before the inclusion test
  bool mean_iou_matched_only = false;
};

// One image worth of inputs. labels, when present, enables the inclusion
// ratio; a ground truth with channel c is the voxel set (labels == c+1).
struct EvalCase {
  std::vector<Detection> dets;
  GroundTruth gts;
  const VolumeU8* labels = nullptr;
};

struct PerClassStats {
  std::size_t gt = 0, tp = 0, fp = 0;
  double iou_sum = 0.0;  // over the mean-IOU pairing, unmatched GT adds 0
  double oir_sum = 0.0;
};

struct EvalReport {
  double ap50 = 0.0;
  double mean_iou = 0.0;
  std::optional<double> mean_oir;
  double precision = 1.0;
  double recall = 1.0;
  ConfusionMatrix confusion;
  PRCurve pr;
  std::array<PerClassStats, kNumTeeth> per_class{};
};

namespace detail {

// Count of voxels with the given label whose centers lie inside the closed
// box; only the box's voxel range is visited.
inline std::size_t box_label_count(const VolumeU8& labels, int value,
                                   const BBox3& box) {
  std::array<int, 3> lo, hi;
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max(0, int(std::ceil(box.lo[a])));
    hi[a] = std::min(labels.dims[a] - 1, int(std::floor(box.hi[a])));
  }
  std::size_t n = 0;
  for (int z = lo[2]; z <= hi[2]; ++z)
    for (int y = lo[1]; y <= hi[1]; ++y)
      for (int x = lo[0]; x <= hi[0]; ++x)
        n += labels.at(x, y, z) == value;
  return n;
}

// Best-scoring detection of the given tooth, insertion order breaking ties;
// -1 when none exists. This pairing carries NO IOU threshold.
inline int best_same_tooth(const std::vector<Detection>& dets, ToothId tooth) {
  int best = -1;
  for (std::size_t di = 0; di < dets.size(); ++di) {
    if (dets[di].tooth != tooth) continue;
    if (best < 0 || dets[di].score > dets[std::size_t(best)].score)
      best = int(di);
  }
  return best;
}

}  // namespace detail

// Mean object-inclusion ratio over all ground truths: each GT pairs with the
// best-scoring detection of the same tooth id, the detection box is expanded
// by `margin`, and the ratio of the GT's labeled voxels falling inside the
// box is averaged. Unmatched GT counts 0 unless matched_only. Returns nullopt
// unless every case carries a label volume. When per_class is given, each
// ratio is also added to its class's oir_sum.
inline std::optional<double> mean_inclusion_ratio(
    const std::vector<EvalCase>& cases, double margin,
    bool matched_only = false,
    std::array<PerClassStats, kNumTeeth>* per_class = nullptr) {
  if (cases.empty()) return std::nullopt;
  for (const EvalCase& cs : cases)
    if (!cs.labels) return std::nullopt;

  double total = 0.0;
  std::size_t n = 0;
  for (const EvalCase& cs : cases) {
    std::array<std::size_t, 256> hist{};
    for (std::uint8_t v : cs.labels->data) ++hist[v];
    for (const auto& [tooth, gbox] : cs.gts) {
      (void)gbox;
      const int value = tooth.channel() + 1;
      if (hist[std::size_t(value)] == 0)
        throw std::invalid_argument(
            "mean_inclusion_ratio: empty label mask for tooth " +
            std::to_string(tooth.fdi));
      const int best = detail::best_same_tooth(cs.dets, tooth);
      if (best < 0) {
        if (!matched_only) ++n;
        continue;
      }
      const BBox3 obox =
          expand_box(detection_box(cs.dets[std::size_t(best)]), margin);
      const double o =
          double(detail::box_label_count(*cs.labels, value, obox)) /
          double(hist[std::size_t(value)]);
      total += o;
      if (per_class) (*per_class)[tooth.channel()].oir_sum += o;
      ++n;
    }
  }
  return n == 0 ? 1.0 : total / double(n);
}

// Aggregates every metric over a case list. Precision/recall/AP use
// class-aware matching at iou_thresh; mean IOU (and mean inclusion ratio)
// pair each GT with the best-scoring detection of the same tooth id WITHOUT
// an IOU threshold, counting unmatched GT as 0 unless matched_only is set.
inline EvalReport evaluate(const std::vector<EvalCase>& cases,
                           const EvalConfig& config = {}) {
  EvalReport rep;
  std::size_t tp = 0, num_gt = 0, num_det = 0;
  std::array<std::size_t, kNumTeeth> gt_count{};
  double iou_total = 0.0;
  std::size_t iou_n = 0;

  for (const EvalCase& cs : cases) {
    const std::vector<int> match =
        match_detections(cs.dets, cs.gts, config.iou_thresh);
    num_gt += cs.gts.size();
    num_det += cs.dets.size();
    for (const auto& g : cs.gts) ++rep.per_class[g.first.channel()].gt;
    for (std::size_t di = 0; di < cs.dets.size(); ++di) {
      auto& pc = rep.per_class[cs.dets[di].tooth.channel()];
      if (match[di] >= 0) {
        ++tp;
        ++pc.tp;
      } else {
        ++pc.fp;
      }
    }
    detail::accumulate_confusion(cs.dets, cs.gts, config.iou_thresh,
                                 rep.confusion, gt_count);

    for (const auto& [tooth, gbox] : cs.gts) {
      const int best = detail::best_same_tooth(cs.dets, tooth);
      auto& pc = rep.per_class[tooth.channel()];
      if (best < 0) {
        if (!config.mean_iou_matched_only) ++iou_n;
        continue;
      }
      const double v = iou(detection_box(cs.dets[std::size_t(best)]), gbox);
      iou_total += v;
      pc.iou_sum += v;
      ++iou_n;
    }
  }

  detail::normalize_confusion(rep.confusion, gt_count);
  rep.precision = num_det == 0 ? 1.0 : double(tp) / double(num_det);
  rep.recall = num_gt == 0 ? 1.0 : double(tp) / double(num_gt);
  rep.mean_iou = iou_n == 0 ? 1.0 : iou_total / double(iou_n);
  rep.mean_oir = mean_inclusion_ratio(cases, config.oir_margin,
                                      config.mean_iou_matched_only,
                                      &rep.per_class);

  std::vector<std::vector<Detection>> all_dets;
  std::vector<GroundTruth> all_gts;
  for (const EvalCase& cs : cases) {
    all_dets.push_back(cs.dets);
    all_gts.push_back(cs.gts);
  }
  auto [ap, curve] = ap50(all_dets, all_gts, config.iou_thresh);
  rep.ap50 = ap;
  rep.pr = std::move(curve);
  return rep;
}

}  // namespace toothdet
