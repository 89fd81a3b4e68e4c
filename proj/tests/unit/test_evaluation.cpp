#include <doctest.h>

#include <fstream>

#include "cloak/core/image_io.hpp"
#include "cloak/core/key_tree.hpp"
#include "cloak/detector/toy_detector.hpp"
#include "cloak/detector/toy_scenes.hpp"
#include "cloak/evaluation/evaluation.hpp"
#include "../support/test_support.hpp"

using namespace cloak;
using namespace cloak::evaluation;
using cloak::testing::TempDir;

namespace {

const detector::ToyDetector& toy() {
  static const detector::ToyDetector det = detector::ToyDetector::load(detector::default_toy_fixture_dir());
  return det;
}

const SceneSet& test_set() {
  static const SceneSet set = detector::make_toy_scene_set(22, 6, "test", SplitTag::kTest);
  return set;
}

EvalConfig quick_eval() {
  EvalConfig cfg = default_eval_config();
  cfg.repetitions = 3;
  cfg.seed = 9;
  return cfg;
}

trainer::TrainConfig quick_train() {
  trainer::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 1;
  cfg.eot = transforms::eot_preset("conventional");
  cfg.eot.alpha = {0.9, 0.9};
  return cfg;
}

void write_images(const std::filesystem::path& dir, int detected, int blank) {
  std::filesystem::create_directories(dir);
  const Tensor person = detector::toy_canonical_scene().image;
  for (int i = 0; i < detected; ++i) write_image(dir / ("p" + std::to_string(i) + ".png"), person, BitDepth::k8);
  for (int i = 0; i < blank; ++i)
    write_image(dir / ("b" + std::to_string(i) + ".jpg"), Tensor::image(64, 64, 3, 0.0), BitDepth::k8);
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("attack success rate fixtures") {
  CHECK(attack_success_rate(0, 602) == 0.0);
  CHECK(attack_success_rate(301, 602) == 50.0);
  CHECK(attack_success_rate(90, 100) == 90.0);
  CHECK_THROWS_AS(attack_success_rate(0, 0), std::invalid_argument);
  CHECK_THROWS_AS(attack_success_rate(5, 4), std::invalid_argument);
  CHECK_THROWS_AS(attack_success_rate(-1, 4), std::invalid_argument);
}

TEST_CASE("attack success rate is scale free") {
  const DigitalReport r = digital_eval(new_patch(12, 8, RandomInit{2}), test_set(), toy(), quick_eval());
  EvalOutcome twice = r.repetitions[0].outcome;
  twice.n_all *= 2;
  twice.n_undetected *= 2;
  const auto scenes = twice.scenes;
  twice.scenes.insert(twice.scenes.end(), scenes.begin(), scenes.end());
  CHECK(attack_success_rate(twice) == attack_success_rate(r.repetitions[0].outcome));
}

TEST_CASE("digital: no patch leaves every baseline person detected") {
  const DigitalReport r = digital_eval(std::nullopt, test_set(), toy(), quick_eval());
  CHECK(r.gt_persons == 6);
  CHECK(r.baseline_detected >= 5);
  REQUIRE(r.repetitions.size() == 3);
  for (const auto& rep : r.repetitions) CHECK(rep.rs_percent == 0.0);
  CHECK(r.mean_rs == 0.0);
}

TEST_CASE("digital: deterministic, mean within min and max") {
  EvalConfig cfg = quick_eval();
  cfg.repetitions = 1;
  const Patch p = new_patch(12, 8, RandomInit{5});
  const DigitalReport a = digital_eval(p, test_set(), toy(), cfg);
  const DigitalReport b = digital_eval(p, test_set(), toy(), cfg);
  CHECK(a.mean_rs == b.mean_rs);
  CHECK(a.repetitions[0].outcome.n_undetected == b.repetitions[0].outcome.n_undetected);

  const DigitalReport c = digital_eval(p, test_set(), toy(), quick_eval());
  CHECK(c.mean_rs >= c.min_rs);
  CHECK(c.mean_rs <= c.max_rs);
  CHECK(c.repetitions[0].seed != c.repetitions[1].seed);
  for (const auto& rep : c.repetitions) {
    CHECK(rep.outcome.n_all == c.baseline_detected);
    CHECK(rep.outcome.n_undetected <= rep.outcome.n_all);
  }
}

TEST_CASE("digital: errors") {
  SceneSet empty;
  CHECK_THROWS_AS(digital_eval(std::nullopt, empty, toy(), quick_eval()), std::invalid_argument);
  EvalConfig bad = quick_eval();
  bad.repetitions = 0;
  CHECK_THROWS_AS(digital_eval(std::nullopt, test_set(), toy(), bad), std::invalid_argument);
  SceneSet blank = test_set();
  for (Scene& s : blank.scenes) s.image = Tensor::image(64, 64, 3);
  CHECK_THROWS(digital_eval(std::nullopt, blank, toy(), quick_eval()));
}

TEST_CASE("eval keys round trip") {
  EvalConfig cfg = quick_eval();
  cfg.nms_iou = 0.3;
  cfg.eot.rotate_deg = {-3.0, 3.0};
  KeyTree tree;
  write_eval_keys(tree, cfg);
  CHECK(eval_config_from(KeyTree::parse(tree.to_string())) == cfg);
  CHECK(default_eval_config().nms_iou == 0.4);
  CHECK(default_eval_config().score_threshold == 0.5);
}

TEST_CASE("photos: hand-counted fixture") {
  // 10 photos: the canonical person scene is detected, a black frame is not.
  TempDir root("photos");
  write_images(root.path() / "outdoor" / "2m" / "0deg", 6, 4);
  write_images(root.path() / "indoor" / "4m" / "15deg", 3, 0);
  std::ofstream(root.path() / "indoor" / "4m" / "15deg" / "meta.json") << R"({"persons_per_image": 2})";
  std::ofstream(root.path() / "outdoor" / "2m" / "0deg" / "broken.png") << "not an image";

  const auto results = photo_eval(root.path(), toy(), quick_eval());
  REQUIRE(results.size() == 2);
  CHECK(results[0].key.label() == "indoor/4m/15deg");
  CHECK(results[0].n_all == 6);
  CHECK(results[0].n_undetected == 3);
  CHECK(results[0].rs_percent == 50.0);
  CHECK(results[1].key.label() == "outdoor/2m/0deg");
  CHECK(results[1].images == 10);
  CHECK(results[1].n_all == 10);
  CHECK(results[1].n_undetected == 4);
  CHECK(results[1].rs_percent == 40.0);
  CHECK(results[1].skipped.size() == 1);
}

TEST_CASE("photos: all detected or none detected") {
  TempDir root("photos_extremes");
  write_images(root.path() / "lab" / "1m" / "0deg", 5, 0);
  write_images(root.path() / "lab" / "1m" / "90deg", 0, 5);
  const auto results = photo_eval(root.path(), toy(), quick_eval());
  REQUIRE(results.size() == 2);
  CHECK(results[0].rs_percent == 0.0);
  CHECK(results[1].rs_percent == 100.0);
}

TEST_CASE("photos: empty or unreadable conditions are errors") {
  TempDir root("photos_empty");
  std::filesystem::create_directories(root.path() / "a" / "b" / "c");
  CHECK_THROWS(photo_eval(root.path(), toy(), quick_eval()));
  std::ofstream(root.path() / "a" / "b" / "c" / "x.png") << "garbage";
  CHECK_THROWS(photo_eval(root.path(), toy(), quick_eval()));
  CHECK_THROWS(photo_eval(root.path() / "missing", toy(), quick_eval()));
}

TEST_CASE("sweep spec parsing and validation") {
  const KeyTree tree = KeyTree::parse(
      "sweep.entries = noise, red\nsweep.noise.init = random\nsweep.noise.seed = 3\n"
      "sweep.red.init = constant\nsweep.red.color = 1,0,0\nsweep.red.color_tag = red\n"
      "sweep.patch_height = 12\nsweep.patch_width = 8\n");
  const SweepSpec spec = sweep_spec_from(tree);
  REQUIRE(spec.entries.size() == 2);
  CHECK(std::get<RandomInit>(spec.entries[0].init).seed == 3);
  CHECK(std::get<ConstantInit>(spec.entries[1].init).r == 1.0);
  CHECK(spec.entries[1].color_tag == "red");
  CHECK(spec.patch_height == 12);
  CHECK_THROWS(sweep_spec_from(KeyTree::parse("sweep.entries = a, a\n")));
  CHECK_THROWS(sweep_spec_from(KeyTree::parse("sweep.entries =\n")));
  CHECK_THROWS(sweep_spec_from(KeyTree::parse("sweep.entries = a\nsweep.a.init = dream\n")));
}

TEST_CASE("sweep: one entry equals a direct train and digital_eval") {
  const SceneSet train_set = detector::make_toy_scene_set(11, 4, "train", SplitTag::kTrain);
  SweepSpec spec;
  spec.entries = {{"only", RandomInit{4}, "mixed", "none"}};
  spec.train = quick_train();
  spec.eval = quick_eval();
  spec.patch_height = 12;
  spec.patch_width = 8;
  const auto rows = sweep(spec, train_set, test_set(), toy());
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].error.empty());

  const auto trained = trainer::train(new_patch(12, 8, RandomInit{4}), train_set, toy(), spec.train);
  const DigitalReport direct = digital_eval(trained.patch, test_set(), toy(), spec.eval);
  CHECK(rows[0].mean_rs == direct.mean_rs);
  CHECK(rows[0].min_rs == direct.min_rs);
  CHECK(rows[0].n_all == direct.baseline_detected);
  CHECK(rows[0].class_histogram.size() == 4);
  int total = 0;
  for (int c : rows[0].class_histogram) total += c;
  CHECK(total >= 3);
}

TEST_CASE("sweep: ranking is deterministic and failures are kept") {
  const SceneSet train_set = detector::make_toy_scene_set(11, 4, "train", SplitTag::kTrain);
  SweepSpec spec;
  spec.entries = {{"seed1", RandomInit{1}, "", ""},
                  {"seed2", RandomInit{2}, "", ""},
                  {"red", ConstantInit{1, 0, 0}, "red", ""},
                  {"missing", ImageInit{"/nonexistent.png"}, "", ""}};
  spec.train = quick_train();
  spec.eval = quick_eval();
  spec.patch_height = 12;
  spec.patch_width = 8;
  const auto a = sweep(spec, train_set, test_set(), toy());
  const auto b = sweep(spec, train_set, test_set(), toy());
  CHECK(a == b);
  REQUIRE(a.size() == 4);
  CHECK(a.back().name == "missing");
  CHECK_FALSE(a.back().error.empty());
  for (std::size_t i = 0; i + 2 < a.size(); ++i) CHECK(a[i].mean_rs >= a[i + 1].mean_rs);
}

TEST_CASE("report: empty report is a header-only csv") {
  TempDir dir("report_empty");
  emit_report(Report{}, dir.path());
  std::ifstream in(dir.path() / "report.csv");
  std::string line, rest;
  std::getline(in, line);
  CHECK(line == "condition,n_all,n_undetected,rs_percent");
  CHECK_FALSE(std::getline(in, rest));
  CHECK_FALSE(std::filesystem::exists(dir.path() / "sweep.csv"));
}

TEST_CASE("report: json round trip and plot output") {
  DigitalReport d;
  d.gt_persons = 10;
  d.baseline_detected = 8;
  for (int r = 0; r < 3; ++r) {
    Repetition rep;
    rep.seed = static_cast<std::uint64_t>(r);
    rep.outcome.n_all = 8;
    rep.outcome.n_undetected = 5 + r;
    rep.rs_percent = attack_success_rate(rep.outcome);
    d.repetitions.push_back(rep);
  }
  d.mean_rs = 75.0;
  d.min_rs = 62.5;
  d.max_rs = 87.5;
  Report report = to_report(d);
  CHECK(report.rows.size() == 6);
  CHECK(report.rows[3].condition == "digital/mean");
  CHECK(report.rows[3].n_undetected == 6.0);

  std::vector<trainer::EpochRecord> history;
  for (int e = 1; e <= 5; ++e) history.push_back({e, {1.0 / e, 0.1, 0.2, 0.0, 1.0 / e + 0.3}, 0.1, 0});
  report.plots.push_back(loss_plot(history));
  Plot rs{"rs_vs_epoch", "R_s by epoch", "epoch", "R_s (%)",
          {{"mean", {1, 2, 3}, {10, 40, 70}}, {"min", {1, 2, 3}, {5, 30, 60}}, {"max", {1, 2, 3}, {15, 50, 80}}}};
  report.plots.push_back(rs);
  SweepRow row{"red", "red", "", 8, 4.0, 50.0, 40.0, 60.0, {1, 0, 0, 2}, ""};
  report.sweep.push_back(row);

  TempDir dir("report_full");
  emit_report(report, dir.path());
  CHECK(read_report_json(dir.path() / "report.json") == report);
  CHECK(std::filesystem::file_size(dir.path() / "training_loss.png") > 0);
  CHECK(std::filesystem::file_size(dir.path() / "rs_vs_epoch.png") > 0);
  CHECK(std::filesystem::exists(dir.path() / "sweep.csv"));
  CHECK(read_image(dir.path() / "rs_vs_epoch.png").height() > 100);
}

TEST_CASE("report: unwritable directory is an error") {
  TempDir dir("report_blocked");
  std::ofstream(dir.path() / "file") << "x";
  CHECK_THROWS_AS(emit_report(Report{}, dir.path() / "file" / "out"), std::runtime_error);
}

TEST_CASE("report rows from photos and sweeps") {
  ConditionResult c;
  c.key = {"outdoor", "2m", "0deg"};
  c.n_all = 10;
  c.n_undetected = 9;
  c.rs_percent = 90.0;
  const Report r = to_report(std::vector<ConditionResult>{c});
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0] == ReportRow{"outdoor/2m/0deg", 10, 9.0, 90.0});
  const Report s = to_report(std::vector<SweepRow>{{"a", "", "", 4, 2.0, 50.0, 25.0, 75.0, {0, 0, 0, 3}, ""}});
  CHECK(s.sweep.size() == 1);
  CHECK(s.plots.size() == 1);
}

}  // TEST_SUITE
