#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "reference_impls.hpp"
#include "toothdet/pipeline.hpp"

using namespace toothdet;

namespace {

std::string write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  return path;
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("patch_dims gives the longest axis the major size", "[pipeline]") {
  BBox3 box;
  box.lo = {0, 0, 0};
  box.hi = {10, 20, 5};
  CHECK(detail::patch_dims(box, 128, 64) ==
        std::array<int, 3>({64, 128, 64}));
  box.hi = {7, 7, 3};  // tie: lower axis wins
  CHECK(detail::patch_dims(box, 128, 64) ==
        std::array<int, 3>({128, 64, 64}));
  box.hi = {1, 2, 9};
  CHECK(detail::patch_dims(box, 48, 24) == std::array<int, 3>({24, 24, 48}));
}

TEST_CASE("segment_instances recovers an oversampled label mask exactly",
          "[pipeline]") {
  // One ellipsoidal "tooth" with label 1 (tooth 11) in a 24-cube. With the
  // patch oversampling every axis (step < 1 voxel), the round trip through
  // crop, distance map, threshold, and inverse mapping is exact.
  const std::array<int, 3> dims{24, 24, 24};
  VolumeU8 labels(dims);
  const std::array<double, 3> c{11.0, 12.0, 12.5};
  const std::array<double, 3> r{5.0, 3.5, 3.0};
  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x) {
        const double ex = (x - c[0]) / r[0], ey = (y - c[1]) / r[1],
                     ez = (z - c[2]) / r[2];
        if (ex * ex + ey * ey + ez * ez < 1.0) labels.at(x, y, z) = 1;
      }
  VolumeF volume(dims);

  Detection d;
  d.tooth = ToothId(11);
  d.center = c;
  d.box_dims = {2 * r[0], 2 * r[1], 2 * r[2]};
  const auto masks = segment_instances(volume, labels, {d}, 3.0, 0.5, 48, 24);
  REQUIRE(masks.size() == 1);
  CHECK(masks[0].first == ToothId(11));
  REQUIRE(masks[0].second.dims == dims);
  std::size_t diff = 0, fg = 0;
  for (std::size_t i = 0; i < labels.data.size(); ++i) {
    fg += labels.data[i] == 1;
    diff += (masks[0].second.data[i] != 0) != (labels.data[i] == 1);
  }
  CHECK(fg > 0);
  CHECK(diff == 0);
}

TEST_CASE("segment_instances validates its inputs", "[pipeline]") {
  VolumeF volume(8, 8, 8);
  VolumeU8 labels(8, 8, 4);
  CHECK_THROWS_AS(segment_instances(volume, labels, {}, 1.0),
                  std::invalid_argument);
  VolumeU8 ok(8, 8, 8);
  ok.at(4, 4, 4) = 1;
  Detection d;
  d.tooth = ToothId(11);
  d.center = {4, 4, 4};
  d.box_dims = {2, 2, 2};
  CHECK_THROWS_AS(segment_instances(volume, ok, {d}, -1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(segment_instances(volume, ok, {d}, 1.0, 0.5, 0, 24),
                  std::invalid_argument);
}

TEST_CASE("parse_experiment_config reads overrides and keeps defaults",
          "[pipeline]") {
  const std::string dir = refimpl::fresh_dir("scratch_pipeline_cfg");
  const std::string path = write_text(dir + "/cfg.json", R"({
    "seed": 5,
    "phantoms": 3,
    "margins": [0, 1.5],
    "noise": {"drop_prob": 0.25},
    "phantom": {"dims": [64, 64, 64], "missing_teeth": [18]},
    "jobs": 2,
    "svg": false
  })");
  const ExperimentConfig cfg = parse_experiment_config(path);
  CHECK(cfg.seed == 5);
  CHECK(cfg.phantoms == 3);
  CHECK(cfg.margins == std::vector<double>({0, 1.5}));
  CHECK(cfg.noise.drop_prob == 0.25);
  CHECK(cfg.noise.center_sigma == 0.0);
  CHECK(cfg.phantom.dims == std::array<int, 3>({64, 64, 64}));
  CHECK(cfg.phantom.missing_teeth == std::vector<int>({18}));
  CHECK(cfg.jobs == 2);
  CHECK_FALSE(cfg.svg);
  // Untouched fields keep their defaults.
  CHECK(cfg.tau == 0.5);
  CHECK(cfg.iou_thresh == 0.5);
  CHECK(cfg.segment_margin == 10.0);
  CHECK_FALSE(cfg.write_volumes);
}

TEST_CASE("parse_experiment_config rejects malformed input", "[pipeline]") {
  const std::string dir = refimpl::fresh_dir("scratch_pipeline_badcfg");
  CHECK_THROWS_AS(parse_experiment_config(dir + "/absent.json"), io_error);
  CHECK_THROWS_AS(
      parse_experiment_config(write_text(dir + "/bad.json", "{not json")),
      io_error);
  CHECK_THROWS_AS(parse_experiment_config(
                      write_text(dir + "/unk.json", R"({"bogus": 1})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      parse_experiment_config(write_text(
          dir + "/unknoise.json", R"({"noise": {"bogus": 1}})")),
      std::invalid_argument);
  CHECK_THROWS_AS(
      parse_experiment_config(write_text(
          dir + "/unkphant.json", R"({"phantom": {"radius": 3}})")),
      std::invalid_argument);
  CHECK_THROWS_AS(
      parse_experiment_config(write_text(dir + "/badtype.json",
                                         R"({"phantoms": "three"})")),
      std::invalid_argument);
  CHECK_THROWS_AS(
      parse_experiment_config(
          write_text(dir + "/zero.json", R"({"phantoms": 0})")),
      std::invalid_argument);
  CHECK_THROWS_AS(
      parse_experiment_config(write_text(dir + "/jobs.json", R"({"jobs": 0})")),
      std::invalid_argument);
  CHECK_THROWS_AS(
      parse_experiment_config(write_text(dir + "/margin.json",
                                         R"({"margins": [0, -1]})")),
      std::invalid_argument);
  CHECK_THROWS_AS(
      parse_experiment_config(
          write_text(dir + "/tau.json", R"({"tau": -0.5})")),
      std::invalid_argument);
}

TEST_CASE("run_experiment writes deterministic reports", "[pipeline]") {
  const std::string dir = refimpl::fresh_dir("scratch_pipeline_run");
  ExperimentConfig cfg;
  cfg.seed = 12;
  cfg.phantoms = 2;
  cfg.noise.center_sigma = 0.5;
  cfg.noise.drop_prob = 0.1;
  cfg.noise.misid_prob = 0.1;
  cfg.margins = {0, 2};

  cfg.out_dir = dir + "/a";
  const EvalReport rep = run_experiment(cfg);
  REQUIRE(rep.mean_oir.has_value());
  CHECK(rep.recall <= 1.0);
  CHECK(rep.mean_iou > 0.0);

  namespace fs = std::filesystem;
  for (const char* name :
       {"report.csv", "pr_curve.csv", "oir_margins.csv", "pr_curve.svg",
        "oir_margins.svg", "phantom_000/gt.json", "phantom_000/pred.json",
        "phantom_001/gt.json", "phantom_001/pred.json"})
    CHECK(fs::exists(cfg.out_dir + "/" + name));
  // No volumes or masks unless asked.
  CHECK_FALSE(fs::exists(cfg.out_dir + "/phantom_000/intensity.json"));
  CHECK_FALSE(fs::exists(cfg.out_dir + "/phantom_000/masks"));

  const std::string report = refimpl::read_file(cfg.out_dir + "/report.csv");
  CHECK(count_lines(report) == 4);  // header, two images, aggregate
  CHECK(report.rfind("image,num_gt,num_det,precision,recall,mean_iou,"
                     "mean_oir,ap50\n",
                     0) == 0);
  CHECK(report.find("\nall,") != std::string::npos);
  const std::string margins =
      refimpl::read_file(cfg.out_dir + "/oir_margins.csv");
  CHECK(count_lines(margins) == 3);

  // Byte-identical on re-run, and independent of the job count.
  cfg.out_dir = dir + "/b";
  run_experiment(cfg);
  cfg.out_dir = dir + "/c";
  cfg.jobs = 4;
  run_experiment(cfg);
  for (const char* name : {"report.csv", "pr_curve.csv", "oir_margins.csv"}) {
    const std::string a = refimpl::read_file(dir + "/a/" + std::string(name));
    CHECK(a == refimpl::read_file(dir + "/b/" + std::string(name)));
    CHECK(a == refimpl::read_file(dir + "/c/" + std::string(name)));
    CHECK(!a.empty());
  }
}
