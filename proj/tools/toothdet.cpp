// Multi-subcommand CLI exposing every pipeline stage.
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "toothdet/toothdet.hpp"

namespace td = toothdet;

namespace {

std::string resolve_out(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("TOOTHDET_OUT"); env && *env) return env;
  return ".";
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw td::io_error("cannot create directory " + dir);
}

std::array<int, 3> dims_from_header(const std::string& volume_path) {
  const std::string base = td::detail::volume_base(volume_path);
  std::ifstream in(base + ".json", std::ios::binary);
  if (!in) throw td::io_error("missing volume header " + base + ".json");
  nlohmann::json j;
  try {
    in >> j;
    return j.at("dims").get<std::array<int, 3>>();
  } catch (const nlohmann::json::exception& e) {
    throw td::io_error("bad volume header " + base + ".json: " + e.what());
  }
}

int cmd_phantom(std::uint64_t seed, const std::string& spec_path,
                const std::string& out_flag) {
  td::PhantomSpec spec;
  if (!spec_path.empty()) {
    std::ifstream in(spec_path, std::ios::binary);
    if (!in) throw td::io_error("missing spec file " + spec_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw td::io_error("bad JSON in " + spec_path + ": " + e.what());
    }
    td::apply_phantom_json(j, spec);
  }
  spec.seed = seed;
  const std::string out = resolve_out(out_flag);
  ensure_dir(out);
  const td::PhantomTruth truth = td::generate_phantom(spec);
  td::save_volume(truth.intensity, out + "/intensity");
  td::save_volume(truth.labels, out + "/labels");
  td::save_detections(td::to_detections(truth), out + "/gt.json");
  std::cout << "phantom: " << truth.teeth.size() << " teeth -> " << out
            << "\n";
  return 0;
}

int cmd_encode(const std::string& gt_path, std::vector<int> dims_flag,
               const std::string& dims_from, double sigma_k, bool isotropic,
               const std::string& out_flag) {
  std::array<int, 3> dims;
  if (!dims_from.empty()) {
    dims = dims_from_header(dims_from);
  } else if (dims_flag.size() == 3) {
    dims = {dims_flag[0], dims_flag[1], dims_flag[2]};
  } else {
    throw std::invalid_argument("encode: pass --dims nx ny nz or --dims-from");
  }
  const auto dets = td::load_detections(gt_path);
  const td::GroundTruth gts = td::detections_to_ground_truth(dets);
  const td::HeatmapStack stack =
      td::encode_ground_truth(gts, dims, sigma_k, isotropic);
  const std::string out = resolve_out(out_flag);
  td::save_stack(stack, out);
  std::cout << "encode: " << gts.size() << " teeth -> " << out << "\n";
  return 0;
}

int cmd_decode(const std::string& in_dir, double threshold,
               const std::string& dims_from, const std::string& out_path) {
  const td::HeatmapStack stack = td::load_stack(in_dir);
  const std::vector<td::Peak> peaks = td::decode_peaks(stack, threshold);

  std::array<std::array<double, 3>, td::kNumTeeth> dims_of;
  std::array<bool, td::kNumTeeth> have{};
  if (!dims_from.empty()) {
    for (const td::Detection& d : td::load_detections(dims_from)) {
      dims_of[std::size_t(d.tooth.channel())] = d.box_dims;
      have[std::size_t(d.tooth.channel())] = true;
    }
  }
  std::vector<td::Detection> dets;
  for (const td::Peak& p : peaks) {
    td::Detection d;
    d.tooth = p.tooth;
    d.center = {double(p.voxel[0]), double(p.voxel[1]), double(p.voxel[2])};
    d.box_dims = have[std::size_t(p.tooth.channel())]
                     ? dims_of[std::size_t(p.tooth.channel())]
                     : std::array<double, 3>{1, 1, 1};
    d.score = p.score;
    dets.push_back(d);
  }
  td::save_detections(dets, out_path);
  std::cout << "decode: " << dets.size() << " peaks -> " << out_path << "\n";
  return 0;
}

int cmd_distmap(const std::string& labels_path, int label, int fdi,
                const std::string& out_path) {
  if ((label < 0) == (fdi < 0))
    throw std::invalid_argument("distmap: pass exactly one of --label/--fdi");
  const int target = fdi >= 0 ? td::fdi_to_channel(fdi) + 1 : label;
  const td::VolumeU8 labels = td::load_volume_as<std::uint8_t>(labels_path);
  const td::VolumeD dist = td::make_gt_distance(labels, target);
  td::save_volume(td::astype<float>(dist), out_path);
  std::cout << "distmap: label " << target << " -> " << out_path << "\n";
  return 0;
}

int cmd_segment(const std::string& volume_path, const std::string& labels_path,
                const std::string& dets_path, double margin, double tau,
                const std::string& out_flag) {
  const td::VolumeF volume = td::load_volume_as<float>(volume_path);
  const td::VolumeU8 labels = td::load_volume_as<std::uint8_t>(labels_path);
  const auto dets = td::load_detections(dets_path);
  const auto masks = td::segment_instances(volume, labels, dets, margin, tau);
  const std::string out = resolve_out(out_flag);
  ensure_dir(out);
  for (const auto& [tooth, mask] : masks) {
    char name[32];
    std::snprintf(name, sizeof name, "mask_fdi%d", tooth.fdi);
    td::save_volume(mask, out + "/" + name);
  }
  std::cout << "segment: " << masks.size() << " masks -> " << out << "\n";
  return 0;
}

int cmd_eval(const std::vector<std::string>& pred_paths,
             const std::vector<std::string>& gt_paths,
             const std::vector<std::string>& label_paths, double iou_thresh,
             double oir_margin, bool svg, const std::string& out_flag) {
  if (pred_paths.size() != gt_paths.size())
    throw std::invalid_argument("eval: --pred and --gt counts differ");
  if (!label_paths.empty() && label_paths.size() != pred_paths.size())
    throw std::invalid_argument("eval: --labels count differs from --pred");

  std::vector<td::VolumeU8> label_volumes;
  label_volumes.reserve(label_paths.size());
  for (const auto& p : label_paths)
    label_volumes.push_back(td::load_volume_as<std::uint8_t>(p));

  std::vector<td::EvalCase> cases;
  for (std::size_t i = 0; i < pred_paths.size(); ++i) {
    td::EvalCase cs;
    cs.dets = td::load_detections(pred_paths[i]);
    cs.gts = td::detections_to_ground_truth(td::load_detections(gt_paths[i]));
    if (!label_volumes.empty()) cs.labels = &label_volumes[i];
    cases.push_back(std::move(cs));
  }
  td::EvalConfig cfg;
  cfg.iou_thresh = iou_thresh;
  cfg.oir_margin = oir_margin;
  const td::EvalReport rep = td::evaluate(cases, cfg);

  const std::string out = resolve_out(out_flag);
  ensure_dir(out);
  {
    std::ofstream csv(out + "/report.csv", std::ios::binary);
    if (!csv) throw td::io_error("eval: cannot open report.csv");
    csv << "image,num_gt,num_det,precision,recall,mean_iou,mean_oir,ap50\n";
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const td::EvalReport r = td::evaluate({cases[i]}, cfg);
      csv << i << "," << cases[i].gts.size() << "," << cases[i].dets.size()
          << "," << td::detail::fmt10(r.precision) << ","
          << td::detail::fmt10(r.recall) << ","
          << td::detail::fmt10(r.mean_iou) << ","
          << (r.mean_oir ? td::detail::fmt10(*r.mean_oir) : "") << ","
          << td::detail::fmt10(r.ap50) << "\n";
    }
    std::size_t tg = 0, tdn = 0;
    for (const auto& cs : cases) {
      tg += cs.gts.size();
      tdn += cs.dets.size();
    }
    csv << "all," << tg << "," << tdn << ","
        << td::detail::fmt10(rep.precision) << ","
        << td::detail::fmt10(rep.recall) << ","
        << td::detail::fmt10(rep.mean_iou) << ","
        << (rep.mean_oir ? td::detail::fmt10(*rep.mean_oir) : "") << ","
        << td::detail::fmt10(rep.ap50) << "\n";
    if (!csv) throw td::io_error("eval: write failed for report.csv");
  }
  {
    std::ofstream csv(out + "/pr_curve.csv", std::ios::binary);
    if (!csv) throw td::io_error("eval: cannot open pr_curve.csv");
    csv << "rank,score,is_tp,precision,recall\n";
    for (std::size_t r = 0; r < rep.pr.points.size(); ++r)
      csv << r << "," << td::detail::fmt10(rep.pr.ranked[r].first) << ","
          << (rep.pr.ranked[r].second ? 1 : 0) << ","
          << td::detail::fmt10(rep.pr.points[r].precision) << ","
          << td::detail::fmt10(rep.pr.points[r].recall) << "\n";
    if (!csv) throw td::io_error("eval: write failed for pr_curve.csv");
  }
  if (svg && !rep.pr.points.empty()) {
    td::PlotSeries s;
    s.label = "precision vs recall";
    for (const auto& p : rep.pr.points) s.pts.push_back({p.recall, p.precision});
    td::svg_xy_plot(out + "/pr_curve.svg", "Precision-recall curve", "recall",
                    "precision", {s});
  }
  std::cout << "eval: ap50 " << td::detail::fmt10(rep.ap50) << ", precision "
            << td::detail::fmt10(rep.precision) << ", recall "
            << td::detail::fmt10(rep.recall) << ", mean_iou "
            << td::detail::fmt10(rep.mean_iou);
  if (rep.mean_oir)
    std::cout << ", mean_oir " << td::detail::fmt10(*rep.mean_oir);
  std::cout << " -> " << out << "\n";
  return 0;
}

int cmd_demo(double lambda_gd, const std::string& fixture, int iters,
             double step, double momentum, double init_noise,
             std::uint64_t seed, bool svg, const std::string& out_flag) {
  td::HeatmapStack target;
  if (fixture == "entangled") {
    target = td::entangled_pair_target();
  } else if (fixture == "separated") {
    target = td::separated_pair_target();
  } else {
    throw std::invalid_argument("demo-disentangle: unknown fixture '" +
                                fixture + "'");
  }
  td::OptimizerConfig cfg;
  cfg.max_iters = iters;
  cfg.step_size = step;
  cfg.momentum = momentum;
  cfg.init_noise = init_noise;
  const td::AdjacencySet adj = td::default_adjacency();

  td::OptimizerConfig base = cfg;
  base.weights.lambda_gd = 0.0;
  td::OptimizerConfig pen = cfg;
  pen.weights.lambda_gd = lambda_gd;

  auto [x_base, trace_base] = td::optimize_heatmaps(target, adj, base, seed);
  auto [x_pen, trace_pen] = td::optimize_heatmaps(target, adj, pen, seed);

  const std::string out = resolve_out(out_flag);
  ensure_dir(out);
  td::disentangle_report(trace_base, trace_pen, out + "/disentangle.csv",
                         svg ? out + "/disentangle.svg" : "");
  std::cout << "demo-disentangle: overlap without penalty "
            << td::detail::fmt10(td::pairwise_overlap(x_base, 0, 1))
            << ", with penalty "
            << td::detail::fmt10(td::pairwise_overlap(x_pen, 0, 1)) << " -> "
            << out << "\n";
  return 0;
}

int cmd_gradcheck(int trials, std::uint64_t seed, const std::string& out_flag) {
  const auto results = td::run_gradcheck(seed, trials);
  const std::string out = resolve_out(out_flag);
  ensure_dir(out);
  std::ofstream csv(out + "/gradcheck.csv", std::ios::binary);
  if (!csv) throw td::io_error("gradcheck: cannot open gradcheck.csv");
  csv << "op,max_rel_err,samples,tolerance,pass\n";
  bool all_pass = true;
  for (const auto& r : results) {
    csv << r.op << "," << td::detail::fmt10(r.max_rel_err) << "," << r.samples
        << "," << td::detail::fmt10(td::kGradCheckTol) << ","
        << (r.pass() ? 1 : 0) << "\n";
    std::cout << r.op << ": max relative error "
              << td::detail::fmt10(r.max_rel_err) << " over " << r.samples
              << " samples -> " << (r.pass() ? "ok" : "FAIL") << "\n";
    all_pass = all_pass && r.pass();
  }
  if (!csv) throw td::io_error("gradcheck: write failed for gradcheck.csv");
  if (!all_pass)
    throw std::invalid_argument("gradcheck: gradient mismatch above tolerance");
  return 0;
}

int cmd_run(const std::string& config_path, int jobs_flag,
            const std::string& out_flag) {
  td::ExperimentConfig cfg = td::parse_experiment_config(config_path);
  if (jobs_flag > 0) cfg.jobs = jobs_flag;
  if (!out_flag.empty())
    cfg.out_dir = out_flag;
  else if (cfg.out_dir.empty())
    cfg.out_dir = resolve_out("");
  const td::EvalReport rep = td::run_experiment(cfg);
  std::cout << "run: ap50 " << td::detail::fmt10(rep.ap50) << ", precision "
            << td::detail::fmt10(rep.precision) << ", recall "
            << td::detail::fmt10(rep.recall) << ", mean_iou "
            << td::detail::fmt10(rep.mean_iou);
  if (rep.mean_oir)
    std::cout << ", mean_oir " << td::detail::fmt10(*rep.mean_oir);
  std::cout << " -> " << cfg.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D tooth detection toolkit: phantoms, heatmaps, losses, "
               "distance maps, metrics, and experiments"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out;

  // phantom
  auto* sc_phantom = app.add_subcommand(
      "phantom", "Generate a synthetic dental-arch volume with ground truth");
  std::string phantom_spec;
  sc_phantom->add_option("--seed", seed, "RNG seed")->capture_default_str();
  sc_phantom->add_option("--spec", phantom_spec, "phantom spec JSON file");
  sc_phantom->add_option("--out", out, "output directory");

  // encode
  auto* sc_encode = app.add_subcommand(
      "encode", "Render ground-truth Gaussian heatmaps from detections");
  std::string enc_gt, enc_dims_from;
  std::vector<int> enc_dims;
  double sigma_k = 1.0 / 6.0;
  bool isotropic = false;
  sc_encode->add_option("--gt", enc_gt, "ground-truth detections JSON")
      ->required();
  sc_encode->add_option("--dims", enc_dims, "volume dims nx ny nz")
      ->expected(3);
  sc_encode->add_option("--dims-from", enc_dims_from,
                        "take dims from this volume's header");
  sc_encode->add_option("--sigma-k", sigma_k, "sigma as fraction of box extent")
      ->capture_default_str();
  sc_encode->add_flag("--isotropic", isotropic,
                      "use the max extent on all axes");
  sc_encode->add_option("--out", out, "output stack directory");

  // decode
  auto* sc_decode = app.add_subcommand(
      "decode", "Extract per-channel peak detections from a heatmap stack");
  std::string dec_in, dec_dims_from, dec_out = "detections.json";
  double threshold = 0.0;
  sc_decode->add_option("--in", dec_in, "heatmap stack directory")->required();
  sc_decode->add_option("--threshold", threshold, "peak score threshold")
      ->capture_default_str();
  sc_decode->add_option("--dims-from", dec_dims_from,
                        "detections JSON supplying box dims per tooth");
  sc_decode->add_option("--out", dec_out, "output detections JSON")
      ->capture_default_str();

  // distmap
  auto* sc_distmap = app.add_subcommand(
      "distmap", "Distance map of one instance from a label volume");
  std::string dm_labels, dm_out = "distmap";
  int dm_label = -1, dm_fdi = -1;
  sc_distmap->add_option("--labels", dm_labels, "label volume")->required();
  sc_distmap->add_option("--label", dm_label, "target label value");
  sc_distmap->add_option("--fdi", dm_fdi, "target tooth FDI code");
  sc_distmap->add_option("--out", dm_out, "output volume base path")
      ->capture_default_str();

  // segment
  auto* sc_segment = app.add_subcommand(
      "segment", "Per-detection instance masks via cropped distance maps");
  std::string sg_volume, sg_labels, sg_dets;
  double sg_margin = 10.0, sg_tau = 0.5;
  sc_segment->add_option("--volume", sg_volume, "intensity volume")->required();
  sc_segment->add_option("--labels", sg_labels, "label volume")->required();
  sc_segment->add_option("--dets", sg_dets, "detections JSON")->required();
  sc_segment->add_option("--margin", sg_margin, "box expansion, voxels")
      ->capture_default_str();
  sc_segment->add_option("--tau", sg_tau, "distance threshold")
      ->capture_default_str();
  sc_segment->add_option("--out", out, "output directory");

  // eval
  auto* sc_eval = app.add_subcommand(
      "eval", "Evaluate detections against ground truth");
  std::vector<std::string> ev_pred, ev_gt, ev_labels;
  double ev_iou = 0.5, ev_oir_margin = 0.0;
  bool ev_svg = false;
  sc_eval->add_option("--pred", ev_pred, "prediction JSON (repeatable)")
      ->required();
  sc_eval->add_option("--gt", ev_gt, "ground-truth JSON (repeatable)")
      ->required();
  sc_eval->add_option("--labels", ev_labels,
                      "label volumes enabling inclusion ratio (repeatable)");
  sc_eval->add_option("--iou", ev_iou, "IOU threshold")->capture_default_str();
  sc_eval->add_option("--oir-margin", ev_oir_margin, "box margin for inclusion")
      ->capture_default_str();
  sc_eval->add_flag("--svg", ev_svg, "write PR-curve SVG");
  sc_eval->add_option("--out", out, "output directory");

  // demo-disentangle
  auto* sc_demo = app.add_subcommand(
      "demo-disentangle",
      "Compare heatmap optimization with and without the overlap penalty");
  double lambda_gd = 1.0, dm_step = 2.0, dm_momentum = 0.95, dm_init = 0.1;
  int dm_iters = 100;
  std::string fixture = "entangled";
  bool demo_svg = true;
  sc_demo->add_option("--lambda-gd", lambda_gd, "overlap penalty weight")
      ->capture_default_str();
  sc_demo->add_option("--fixture", fixture, "entangled | separated")
      ->capture_default_str();
  sc_demo->add_option("--iters", dm_iters, "iteration cap")
      ->capture_default_str();
  sc_demo->add_option("--step", dm_step, "step size")->capture_default_str();
  sc_demo->add_option("--momentum", dm_momentum, "momentum")
      ->capture_default_str();
  sc_demo->add_option("--init-noise", dm_init, "initial logit noise stddev")
      ->capture_default_str();
  sc_demo->add_option("--seed", seed, "RNG seed")->capture_default_str();
  sc_demo->add_flag("--svg,!--no-svg", demo_svg, "write overlap-curve SVG");
  sc_demo->add_option("--out", out, "output directory");

  // gradcheck
  auto* sc_gradcheck = app.add_subcommand(
      "gradcheck", "Finite-difference verification of analytic gradients");
  int trials = 100;
  sc_gradcheck->add_option("--trials", trials, "fixtures per op")
      ->capture_default_str();
  sc_gradcheck->add_option("--seed", seed, "RNG seed")->capture_default_str();
  sc_gradcheck->add_option("--out", out, "output directory");

  // run
  auto* sc_run = app.add_subcommand(
      "run", "Config-driven experiment: phantoms, predictions, reports");
  std::string run_config;
  int run_jobs = 0;
  sc_run->add_option("--config", run_config, "experiment config JSON")
      ->required();
  sc_run->add_option("--jobs", run_jobs, "parallel phantom jobs");
  sc_run->add_option("--out", out, "output directory (overrides config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sc_phantom->parsed()) return cmd_phantom(seed, phantom_spec, out);
    if (sc_encode->parsed())
      return cmd_encode(enc_gt, enc_dims, enc_dims_from, sigma_k, isotropic,
                        out);
    if (sc_decode->parsed())
      return cmd_decode(dec_in, threshold, dec_dims_from, dec_out);
    if (sc_distmap->parsed())
      return cmd_distmap(dm_labels, dm_label, dm_fdi, dm_out);
    if (sc_segment->parsed())
      return cmd_segment(sg_volume, sg_labels, sg_dets, sg_margin, sg_tau,
                         out);
    if (sc_eval->parsed())
      return cmd_eval(ev_pred, ev_gt, ev_labels, ev_iou, ev_oir_margin, ev_svg,
                      out);
    if (sc_demo->parsed())
      return cmd_demo(lambda_gd, fixture, dm_iters, dm_step, dm_momentum,
                      dm_init, seed, demo_svg, out);
    if (sc_gradcheck->parsed()) return cmd_gradcheck(trials, seed, out);
    if (sc_run->parsed()) return cmd_run(run_config, run_jobs, out);
    std::cerr << "no subcommand given\n";
    return 1;
  } catch (const td::io_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
