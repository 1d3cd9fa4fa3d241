#pragma once

// End-to-end dataflow on phantoms: detections -> margin-expanded boxes ->
// label patch at 128x64x64 -> per-instance distance map -> threshold ->
// mask back in original coordinates; plus a config-driven experiment runner
// that writes all report artifacts deterministically.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "toothdet/distmap.hpp"
#include "toothdet/heatmap.hpp"
#include "toothdet/io.hpp"
#include "toothdet/metrics.hpp"
#include "toothdet/parallel.hpp"
#include "toothdet/phantom.hpp"
#include "toothdet/rng.hpp"
#include "toothdet/svg.hpp"
#include "toothdet/volume.hpp"

namespace toothdet {

namespace detail {

// Patch shape rule: the axis with the largest expanded-box extent gets the
// major dimension (ties to the lower axis index), the others the minor one.
inline std::array<int, 3> patch_dims(const BBox3& box, int major, int minor) {
  const auto ext = box_extent(box);
  int axis = 0;
  for (int a = 1; a < 3; ++a)
    if (ext[a] > ext[axis]) axis = a;
  std::array<int, 3> dims{minor, minor, minor};
  dims[axis] = major;
  return dims;
}

}  // namespace detail

// Per-detection instance masks in original volume coordinates. The stand-in
// for the learned stage is the ground-truth distance map of the detected
// tooth on the cropped label patch. Patch-to-volume mapping is inverse
// nearest resampling, exact whenever the patch oversamples the box.
inline std::vector<std::pair<ToothId, VolumeU8>> segment_instances(
    const VolumeF& volume, const VolumeU8& labels,
    const std::vector<Detection>& dets, double margin, double tau = 0.5,
    int major_dim = 128, int minor_dim = 64) {
  if (volume.dims != labels.dims)
    throw std::invalid_argument("segment_instances: volume/labels misaligned");
  if (margin < 0)
    throw std::invalid_argument("segment_instances: negative margin");
  if (major_dim < 1 || minor_dim < 1)
    throw std::invalid_argument("segment_instances: non-positive patch dims");

  std::vector<std::pair<ToothId, VolumeU8>> out;
  for (const Detection& det : dets) {
    const BBox3 box = expand_box(detection_box(det), margin);
    const std::array<int, 3> pdims =
        detail::patch_dims(box, major_dim, minor_dim);
    const VolumeU8 patch = crop_resize(labels, box, pdims, ResizeMode::nearest);
    const VolumeD dist = make_gt_distance(patch, det.tooth.channel() + 1);
    const VolumeU8 pmask = threshold_to_mask(dist, tau);

    VolumeU8 mask(volume.dims);
    std::array<int, 3> lo, hi;
    std::array<double, 3> step;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, int(std::ceil(box.lo[a])));
      hi[a] = std::min(volume.dims[a] - 1, int(std::floor(box.hi[a])));
      step[a] = (box.hi[a] - box.lo[a]) / pdims[a];
    }
    for (int z = lo[2]; z <= hi[2]; ++z) {
      const int jz = std::clamp(
          int(std::ceil((z - box.lo[2]) / step[2] - 1.0)), 0, pdims[2] - 1);
      for (int y = lo[1]; y <= hi[1]; ++y) {
        const int jy = std::clamp(
            int(std::ceil((y - box.lo[1]) / step[1] - 1.0)), 0, pdims[1] - 1);
        for (int x = lo[0]; x <= hi[0]; ++x) {
          const int jx = std::clamp(
              int(std::ceil((x - box.lo[0]) / step[0] - 1.0)), 0,
              pdims[0] - 1);
          mask.at(x, y, z) = pmask.at(jx, jy, jz);
        }
      }
    }
    out.push_back({det.tooth, std::move(mask)});
  }
  return out;
}

struct ExperimentConfig {
  std::uint64_t seed = 0;
  int phantoms = 5;
  std::string out_dir;  // empty -> caller/CWD default
  PhantomSpec phantom;  // per-phantom seeds derive from `seed`
  NoiseSpec noise;
  std::vector<double> margins{0, 2, 5, 10};
  double tau = 0.5;
  double iou_thresh = 0.5;
  double oir_margin = 0.0;
  double segment_margin = 10.0;
  bool write_volumes = false;
  bool write_masks = false;
  bool svg = true;
  int jobs = 1;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> known,
                                const char* where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok)
      throw std::invalid_argument(std::string("config: unknown key '") + key +
                                  "' in " + where);
  }
}

}  // namespace detail

// Phantom overrides shared by the experiment config and the phantom CLI.
inline void apply_phantom_json(const nlohmann::json& p, PhantomSpec& spec) {
  detail::reject_unknown_keys(p,
                              {"dims", "missing_teeth", "center_jitter",
                               "size_jitter", "gap", "intensity_noise"},
                              "phantom");
  if (p.contains("dims")) spec.dims = p["dims"].get<std::array<int, 3>>();
  if (p.contains("missing_teeth"))
    spec.missing_teeth = p["missing_teeth"].get<std::vector<int>>();
  if (p.contains("center_jitter"))
    spec.center_jitter = p["center_jitter"].get<double>();
  if (p.contains("size_jitter"))
    spec.size_jitter = p["size_jitter"].get<double>();
  if (p.contains("gap")) spec.gap = p["gap"].get<double>();
  if (p.contains("intensity_noise"))
    spec.intensity_noise = p["intensity_noise"].get<double>();
}

inline ExperimentConfig parse_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("config: missing file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("config: bad JSON in " + path + ": " + e.what());
  }

  ExperimentConfig cfg;
  try {
    detail::reject_unknown_keys(
        j,
        {"seed", "phantoms", "out_dir", "phantom", "noise", "margins", "tau",
         "iou_thresh", "oir_margin", "segment_margin", "write_volumes",
         "write_masks", "svg", "jobs"},
        "top level");
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("phantoms")) cfg.phantoms = j["phantoms"].get<int>();
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("phantom")) apply_phantom_json(j["phantom"], cfg.phantom);
    if (j.contains("noise")) {
      const auto& n = j["noise"];
      detail::reject_unknown_keys(
          n, {"center_sigma", "size_sigma", "drop_prob", "misid_prob"},
          "noise");
      if (n.contains("center_sigma"))
        cfg.noise.center_sigma = n["center_sigma"].get<double>();
      if (n.contains("size_sigma"))
        cfg.noise.size_sigma = n["size_sigma"].get<double>();
      if (n.contains("drop_prob"))
        cfg.noise.drop_prob = n["drop_prob"].get<double>();
      if (n.contains("misid_prob"))
        cfg.noise.misid_prob = n["misid_prob"].get<double>();
    }
    if (j.contains("margins"))
      cfg.margins = j["margins"].get<std::vector<double>>();
    if (j.contains("tau")) cfg.tau = j["tau"].get<double>();
    if (j.contains("iou_thresh"))
      cfg.iou_thresh = j["iou_thresh"].get<double>();
    if (j.contains("oir_margin"))
      cfg.oir_margin = j["oir_margin"].get<double>();
    if (j.contains("segment_margin"))
      cfg.segment_margin = j["segment_margin"].get<double>();
    if (j.contains("write_volumes"))
      cfg.write_volumes = j["write_volumes"].get<bool>();
    if (j.contains("write_masks"))
      cfg.write_masks = j["write_masks"].get<bool>();
    if (j.contains("svg")) cfg.svg = j["svg"].get<bool>();
    if (j.contains("jobs")) cfg.jobs = j["jobs"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: bad field in " + path + ": " +
                                e.what());
  }
  if (cfg.phantoms < 1)
    throw std::invalid_argument("config: phantoms must be >= 1");
  if (cfg.jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");
  if (cfg.tau < 0 || cfg.segment_margin < 0 || cfg.oir_margin < 0)
    throw std::invalid_argument("config: negative threshold or margin");
  for (double m : cfg.margins)
    if (m < 0) throw std::invalid_argument("config: negative margin");
  return cfg;
}

namespace detail {

inline std::string fmt10(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string phantom_dir(const std::string& out, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "phantom_%03d", i);
  return out + "/" + buf;
}

}  // namespace detail

// Generates phantoms, perturbs their ground truth into predictions, writes
// per-phantom artifacts and aggregate reports, and returns the aggregate
// evaluation. Output bytes depend only on the config, never on jobs.
inline EvalReport run_experiment(const ExperimentConfig& cfg) {
  const std::string out = cfg.out_dir.empty() ? "." : cfg.out_dir;
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw io_error("run_experiment: cannot create " + out);

  struct Slot {
    PhantomTruth truth;
    std::vector<Detection> preds;
  };
  std::vector<Slot> slots(std::size_t(cfg.phantoms));

  parallel_for(std::size_t(cfg.phantoms), cfg.jobs, [&](std::size_t i) {
    PhantomSpec spec = cfg.phantom;
    spec.seed = child_seed(cfg.seed, std::uint64_t(i));
    Slot& slot = slots[i];
    slot.truth = generate_phantom(spec);
    slot.preds = perturb_predictions(
        slot.truth, cfg.noise, child_seed(cfg.seed, 1000000 + std::uint64_t(i)));

    const std::string pdir = detail::phantom_dir(out, int(i));
    std::error_code dec;
    std::filesystem::create_directories(pdir, dec);
    if (dec) throw io_error("run_experiment: cannot create " + pdir);
    save_detections(to_detections(slot.truth), pdir + "/gt.json");
    save_detections(slot.preds, pdir + "/pred.json");
    if (cfg.write_volumes) {
      save_volume(slot.truth.intensity, pdir + "/intensity");
      save_volume(slot.truth.labels, pdir + "/labels");
    }
    if (cfg.write_masks) {
      std::filesystem::create_directories(pdir + "/masks", dec);
      if (dec) throw io_error("run_experiment: cannot create " + pdir + "/masks");
      const auto masks =
          segment_instances(slot.truth.intensity, slot.truth.labels,
                            slot.preds, cfg.segment_margin, cfg.tau);
      for (const auto& [tooth, mask] : masks) {
        char name[32];
        std::snprintf(name, sizeof name, "mask_fdi%d", tooth.fdi);
        save_volume(mask, pdir + "/masks/" + name);
      }
    }
  });

  std::vector<EvalCase> cases;
  for (const Slot& slot : slots) {
    EvalCase cs;
    cs.dets = slot.preds;
    cs.gts = ground_truth_boxes(slot.truth);
    cs.labels = &slot.truth.labels;
    cases.push_back(std::move(cs));
  }
  EvalConfig ecfg;
  ecfg.iou_thresh = cfg.iou_thresh;
  ecfg.oir_margin = cfg.oir_margin;
  const EvalReport rep = evaluate(cases, ecfg);

  {
    std::ofstream csv(out + "/report.csv", std::ios::binary);
    if (!csv) throw io_error("run_experiment: cannot open report.csv");
    csv << "image,num_gt,num_det,precision,recall,mean_iou,mean_oir,ap50\n";
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const EvalReport r = evaluate({cases[i]}, ecfg);
      csv << i << "," << cases[i].gts.size() << "," << cases[i].dets.size()
          << "," << detail::fmt10(r.precision) << ","
          << detail::fmt10(r.recall) << "," << detail::fmt10(r.mean_iou)
          << "," << (r.mean_oir ? detail::fmt10(*r.mean_oir) : "") << ","
          << detail::fmt10(r.ap50) << "\n";
    }
    std::size_t tg = 0, td = 0;
    for (const auto& cs : cases) {
      tg += cs.gts.size();
      td += cs.dets.size();
    }
    csv << "all," << tg << "," << td << "," << detail::fmt10(rep.precision)
        << "," << detail::fmt10(rep.recall) << ","
        << detail::fmt10(rep.mean_iou) << ","
        << (rep.mean_oir ? detail::fmt10(*rep.mean_oir) : "") << ","
        << detail::fmt10(rep.ap50) << "\n";
    if (!csv) throw io_error("run_experiment: write failed for report.csv");
  }

  {
    std::ofstream csv(out + "/pr_curve.csv", std::ios::binary);
    if (!csv) throw io_error("run_experiment: cannot open pr_curve.csv");
    csv << "rank,score,is_tp,precision,recall\n";
    for (std::size_t r = 0; r < rep.pr.points.size(); ++r)
      csv << r << "," << detail::fmt10(rep.pr.ranked[r].first) << ","
          << (rep.pr.ranked[r].second ? 1 : 0) << ","
          << detail::fmt10(rep.pr.points[r].precision) << ","
          << detail::fmt10(rep.pr.points[r].recall) << "\n";
    if (!csv) throw io_error("run_experiment: write failed for pr_curve.csv");
  }

  std::vector<std::array<double, 2>> margin_pts;
  if (!cfg.margins.empty()) {
    std::ofstream csv(out + "/oir_margins.csv", std::ios::binary);
    if (!csv) throw io_error("run_experiment: cannot open oir_margins.csv");
    csv << "margin,mean_oir\n";
    for (double m : cfg.margins) {
      const auto v = mean_inclusion_ratio(cases, m);
      csv << detail::fmt10(m) << "," << (v ? detail::fmt10(*v) : "") << "\n";
      if (v) margin_pts.push_back({m, *v});
    }
    if (!csv)
      throw io_error("run_experiment: write failed for oir_margins.csv");
  }

  if (cfg.svg) {
    PlotSeries pr;
    pr.label = "precision vs recall";
    for (const auto& p : rep.pr.points)
      pr.pts.push_back({p.recall, p.precision});
    if (!pr.pts.empty())
      svg_xy_plot(out + "/pr_curve.svg", "Precision-recall curve", "recall",
                  "precision", {pr});
    if (!margin_pts.empty()) {
      PlotSeries ms;
      ms.label = "mean inclusion ratio";
      ms.pts = margin_pts;
      svg_xy_plot(out + "/oir_margins.svg", "Inclusion ratio vs box margin",
                  "margin (voxels)", "mean inclusion ratio", {ms});
    }
  }
  return rep;
}

}  // namespace toothdet
