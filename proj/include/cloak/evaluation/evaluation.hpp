#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cloak/core/key_tree.hpp"
#include "cloak/core/patch.hpp"
#include "cloak/core/scene.hpp"
#include "cloak/detector/adapter.hpp"
#include "cloak/detector/nms.hpp"
#include "cloak/trainer/trainer.hpp"
#include "cloak/transforms/params.hpp"

namespace cloak::evaluation {

struct EvalConfig {
  double score_threshold = 0.5;
  double nms_iou = 0.4;
  double match_iou = 0.5;
  int repetitions = 10;
  std::uint64_t seed = 0;
  transforms::EotConfig eot;  // placement distribution; see default_eval_eot()
  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

// Scale and rotation only, at the training placement.
transforms::EotConfig default_eval_eot();
EvalConfig default_eval_config();
void validate(const EvalConfig& cfg);
void write_eval_keys(KeyTree& tree, const EvalConfig& cfg);  // eval.*
EvalConfig eval_config_from(const KeyTree& tree, EvalConfig base = default_eval_config());

struct PersonMatch {
  int box_index = 0;
  detector::BoxGeometry baseline;  // matched baseline detection
  bool still_detected = false;
};

struct SceneRecord {
  std::string scene_id;
  std::vector<detector::Detection> detections;  // person detections after the attack
  std::vector<PersonMatch> matches;             // baseline-detected persons only
};

struct EvalOutcome {
  int n_all = 0;
  int n_undetected = 0;
  std::vector<SceneRecord> scenes;
};

// 100 * n_undetected / n_all. Throws std::invalid_argument for n_all < 1 or
// counts out of range.
double attack_success_rate(int n_undetected, int n_all);
double attack_success_rate(const EvalOutcome& outcome);

struct Repetition {
  std::uint64_t seed = 0;
  EvalOutcome outcome;
  double rs_percent = 0.0;
};

struct DigitalReport {
  int gt_persons = 0;
  int baseline_detected = 0;  // N_all
  std::vector<Repetition> repetitions;
  double mean_rs = 0.0;
  double min_rs = 0.0;
  double max_rs = 0.0;
};

// Baseline-detected persons (IoU >= match_iou with an unpatched person
// detection) define N_all. Each repetition pastes the patch on those
// persons with a placement drawn from cfg.eot and counts how many lose
// every overlapping person detection. A missing patch leaves scenes as is.
DigitalReport digital_eval(const std::optional<Patch>& patch, const SceneSet& test_set,
                           const detector::DetectorAdapter& detector, const EvalConfig& cfg);

struct ConditionKey {
  std::string scene_tag;
  std::string distance_tag;
  std::string angle_tag;
  std::string label() const { return scene_tag + "/" + distance_tag + "/" + angle_tag; }
  friend auto operator<=>(const ConditionKey&, const ConditionKey&) = default;
};

struct ConditionResult {
  ConditionKey key;
  int images = 0;
  int persons_per_image = 1;
  int n_all = 0;
  int n_undetected = 0;
  double rs_percent = 0.0;
  std::vector<std::string> skipped;  // undecodable files
};

// Walks <root>/<scene>/<distance>/<angle>/ for .png/.jpg/.jpeg files; an
// optional meta.json {"persons_per_image": k} per condition directory.
// Results are sorted by condition.
std::vector<ConditionResult> photo_eval(const std::filesystem::path& root, const detector::DetectorAdapter& detector,
                                        const EvalConfig& cfg);

struct SweepEntry {
  std::string name;
  InitSpec init;
  std::string color_tag;
  std::string shape_tag;
};

struct SweepSpec {
  std::vector<SweepEntry> entries;
  trainer::TrainConfig train;
  EvalConfig eval = default_eval_config();
  int patch_height = 300;
  int patch_width = 200;
};

// Key-tree form: sweep.entries = a,b,...; sweep.patch_height/width;
// sweep.<name>.init = random|constant|image with .seed, .color (r,g,b) or
// .path, and .color_tag/.shape_tag. Train and eval keys as elsewhere.
SweepSpec sweep_spec_from(const KeyTree& tree, const std::filesystem::path& base_dir = {});
void validate(const SweepSpec& spec);

struct SweepRow {
  std::string name;
  std::string color_tag;
  std::string shape_tag;
  int n_all = 0;
  double mean_undetected = 0.0;
  double mean_rs = 0.0;
  double min_rs = 0.0;
  double max_rs = 0.0;
  std::vector<int> class_histogram;  // per class, plus a final "nothing detected" bin
  std::string error;                 // non-empty if the entry failed
  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

// Classes the detector reports on gray canvases showing only the patch.
std::vector<int> patch_class_histogram(const Patch& patch, const detector::DetectorAdapter& detector,
                                       const EvalConfig& cfg);

// Trains and evaluates every entry; failures are recorded per row. Rows are
// sorted by mean R_s (descending), then name.
std::vector<SweepRow> sweep(const SweepSpec& spec, const SceneSet& train_set, const SceneSet& test_set,
                            const detector::DetectorAdapter& detector,
                            const std::filesystem::path& work_dir = {});

struct ReportRow {
  std::string condition;
  int n_all = 0;
  double n_undetected = 0.0;  // a mean over repetitions may be fractional
  double rs_percent = 0.0;
  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  friend bool operator==(const Series&, const Series&) = default;
};

struct Plot {
  std::string name;  // file stem
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  friend bool operator==(const Plot&, const Plot&) = default;
};

struct Report {
  std::vector<ReportRow> rows;
  std::vector<SweepRow> sweep;
  std::vector<Plot> plots;
  friend bool operator==(const Report&, const Report&) = default;
};

Report to_report(const DigitalReport& digital, const std::string& label = "digital");
Report to_report(const std::vector<ConditionResult>& photos);
Report to_report(const std::vector<SweepRow>& rows);

// Loss curves of a training history.
Plot loss_plot(const std::vector<trainer::EpochRecord>& history);

// Writes report.csv (condition,n_all,n_undetected,rs_percent), report.json,
// sweep.csv when sweep rows are present, and one PNG per plot. Throws std::runtime_error if out_dir is unwritable.
void emit_report(const Report& report, const std::filesystem::path& out_dir);
Report read_report_json(const std::filesystem::path& path);
void render_plot(const Plot& plot, const std::filesystem::path& path);

}  // namespace cloak::evaluation
