#include "cloak/evaluation/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cloak/core/image_io.hpp"
#include "cloak/core/log.hpp"
#include "cloak/core/rng.hpp"
#include "cloak/transforms/pipeline.hpp"

namespace cloak::evaluation {

transforms::EotConfig default_eval_eot() {
  transforms::EotConfig cfg = transforms::eot_preset("conventional");
  cfg.brightness_enabled = cfg.contrast_enabled = cfg.noise_enabled = false;
  return cfg;
}

EvalConfig default_eval_config() {
  EvalConfig cfg;
  cfg.eot = default_eval_eot();
  return cfg;
}

void validate(const EvalConfig& cfg) {
  if (!(cfg.score_threshold > 0 && cfg.score_threshold < 1)) throw std::invalid_argument("eval.score_threshold must lie in (0, 1)");
  if (!(cfg.nms_iou > 0 && cfg.nms_iou < 1)) throw std::invalid_argument("eval.nms_iou must lie in (0, 1)");
  if (!(cfg.match_iou > 0 && cfg.match_iou <= 1)) throw std::invalid_argument("eval.match_iou must lie in (0, 1]");
  if (cfg.repetitions < 1) throw std::invalid_argument("eval.repetitions must be >= 1");
  transforms::validate(cfg.eot);
}

void write_eval_keys(KeyTree& t, const EvalConfig& cfg) {
  t.set("eval.score_threshold", cfg.score_threshold);
  t.set("eval.nms_iou", cfg.nms_iou);
  t.set("eval.match_iou", cfg.match_iou);
  t.set("eval.repetitions", static_cast<std::int64_t>(cfg.repetitions));
  t.set("eval.seed", std::to_string(cfg.seed));
  transforms::write_eot_keys(t, "eval.eot", cfg.eot);
}

EvalConfig eval_config_from(const KeyTree& t, EvalConfig c) {
  c.score_threshold = t.get_double("eval.score_threshold", c.score_threshold);
  c.nms_iou = t.get_double("eval.nms_iou", c.nms_iou);
  c.match_iou = t.get_double("eval.match_iou", c.match_iou);
  c.repetitions = static_cast<int>(t.get_int("eval.repetitions", c.repetitions));
  c.seed = t.get_u64("eval.seed", c.seed);
  c.eot = transforms::read_eot_keys(t, "eval.eot", c.eot);
  validate(c);
  return c;
}

double attack_success_rate(int n_undetected, int n_all) {
  if (n_all < 1) throw std::invalid_argument("attack success rate needs at least one person");
  if (n_undetected < 0 || n_undetected > n_all) throw std::invalid_argument("undetected count out of range");
  return 100.0 * n_undetected / n_all;
}

double attack_success_rate(const EvalOutcome& outcome) {
  return attack_success_rate(outcome.n_undetected, outcome.n_all);
}

namespace {

std::vector<detector::Detection> persons(const detector::DetectorAdapter& det, const Tensor& image,
                                         const EvalConfig& cfg) {
  return detector::detect_persons(detector::run_detector(det, image), det.descriptor().person_class,
                                  cfg.score_threshold, cfg.nms_iou);
}

struct Baseline {
  Scene attacked;  // the scene with only baseline-detected boxes
  std::vector<int> box_index;
  std::vector<detector::BoxGeometry> matched;
};

// Greedy one-to-one matching of ground-truth boxes to baseline detections.
Baseline match_baseline(const Scene& scene, const std::vector<detector::Detection>& dets, double match_iou) {
  Baseline b;
  b.attacked.id = scene.id;
  b.attacked.image = scene.image;
  std::vector<bool> used(dets.size(), false);
  for (std::size_t i = 0; i < scene.person_boxes.size(); ++i) {
    const PersonBox& gt = scene.person_boxes[i];
    const detector::BoxGeometry g{gt.cx, gt.cy, gt.w, gt.h};
    int best = -1;
    double best_iou = match_iou;
    for (std::size_t k = 0; k < dets.size(); ++k) {
      const double v = detector::iou(dets[k].box, g);
      if (!used[k] && v >= best_iou) {
        best = static_cast<int>(k);
        best_iou = v;
      }
    }
    if (best < 0) continue;
    used[static_cast<std::size_t>(best)] = true;
    b.attacked.person_boxes.push_back(gt);
    b.box_index.push_back(static_cast<int>(i));
    b.matched.push_back(dets[static_cast<std::size_t>(best)].box);
  }
  return b;
}

}  // namespace

DigitalReport digital_eval(const std::optional<Patch>& patch, const SceneSet& test_set,
                           const detector::DetectorAdapter& det, const EvalConfig& cfg) {
  validate(cfg);
  if (test_set.scenes.empty()) throw std::invalid_argument("digital evaluation needs a non-empty test set");

  DigitalReport report;
  std::vector<Baseline> baselines;
  std::vector<Scene> attacked;
  for (const Scene& s : test_set.scenes) {
    report.gt_persons += static_cast<int>(s.person_boxes.size());
    baselines.push_back(match_baseline(s, persons(det, s.image, cfg), cfg.match_iou));
    attacked.push_back(baselines.back().attacked);
    report.baseline_detected += static_cast<int>(baselines.back().matched.size());
  }
  if (report.baseline_detected == 0) {
    throw std::invalid_argument("no annotated person is detected without the patch; R_s is undefined");
  }

  for (int r = 0; r < cfg.repetitions; ++r) {
    Repetition rep;
    rep.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(r));
    SeedableRng rng(rep.seed);
    std::vector<Tensor> images;
    if (patch) {
      images = transforms::batch_apply(attacked, *patch, cfg.eot, rng).images;
    } else {
      for (const Scene& s : attacked) images.push_back(s.image);
    }
    for (std::size_t i = 0; i < attacked.size(); ++i) {
      SceneRecord rec;
      rec.scene_id = attacked[i].id;
      rec.detections = persons(det, images[i], cfg);
      for (std::size_t k = 0; k < baselines[i].matched.size(); ++k) {
        PersonMatch m{baselines[i].box_index[k], baselines[i].matched[k], false};
        m.still_detected = std::any_of(rec.detections.begin(), rec.detections.end(), [&](const detector::Detection& d) {
          return detector::iou(d.box, m.baseline) >= cfg.match_iou;
        });
        ++rep.outcome.n_all;
        if (!m.still_detected) ++rep.outcome.n_undetected;
        rec.matches.push_back(m);
      }
      rep.outcome.scenes.push_back(std::move(rec));
    }
    rep.rs_percent = attack_success_rate(rep.outcome);
    report.repetitions.push_back(std::move(rep));
  }

  double sum = 0.0;
  report.min_rs = report.max_rs = report.repetitions.front().rs_percent;
  for (const auto& rep : report.repetitions) {
    sum += rep.rs_percent;
    report.min_rs = std::min(report.min_rs, rep.rs_percent);
    report.max_rs = std::max(report.max_rs, rep.rs_percent);
  }
  report.mean_rs = sum / static_cast<double>(report.repetitions.size());
  return report;
}

namespace {

std::vector<std::filesystem::path> sorted_subdirs(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_directory()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

int persons_per_image(const std::filesystem::path& dir) {
  const auto meta = dir / "meta.json";
  if (!std::filesystem::exists(meta)) return 1;
  std::ifstream in(meta);
  try {
    const int k = nlohmann::json::parse(in).value("persons_per_image", 1);
    if (k < 1) throw std::invalid_argument("persons_per_image must be >= 1 in " + meta.string());
    return k;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed " + meta.string() + ": " + e.what());
  }
}

}  // namespace

std::vector<ConditionResult> photo_eval(const std::filesystem::path& root, const detector::DetectorAdapter& det,
                                        const EvalConfig& cfg) {
  validate(cfg);
  if (!std::filesystem::is_directory(root)) throw std::invalid_argument("photo root is not a directory: " + root.string());
  std::vector<ConditionResult> results;
  for (const auto& scene_dir : sorted_subdirs(root)) {
    for (const auto& distance_dir : sorted_subdirs(scene_dir)) {
      for (const auto& angle_dir : sorted_subdirs(distance_dir)) {
        ConditionResult res;
        res.key = {scene_dir.filename().string(), distance_dir.filename().string(), angle_dir.filename().string()};
        res.persons_per_image = persons_per_image(angle_dir);
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(angle_dir)) {
          if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
          Tensor image;
          try {
            image = read_image(f);
          } catch (const std::exception& e) {
            log_warning("skipping " + f.string() + ": " + e.what());
            res.skipped.push_back(f.filename().string());
            continue;
          }
          ++res.images;
          const int found = static_cast<int>(persons(det, image, cfg).size());
          res.n_undetected += res.persons_per_image - std::min(found, res.persons_per_image);
        }
        if (res.images == 0) throw std::invalid_argument("condition directory has no readable images: " + angle_dir.string());
        res.n_all = res.persons_per_image * res.images;
        res.rs_percent = attack_success_rate(res.n_undetected, res.n_all);
        results.push_back(std::move(res));
      }
    }
  }
  return results;
}

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

SweepSpec sweep_spec_from(const KeyTree& tree, const std::filesystem::path& base_dir) {
  SweepSpec spec;
  spec.train = trainer::train_config_from(tree);
  spec.eval = eval_config_from(tree);
  spec.patch_height = static_cast<int>(tree.get_int("sweep.patch_height", spec.patch_height));
  spec.patch_width = static_cast<int>(tree.get_int("sweep.patch_width", spec.patch_width));
  for (const std::string& name : split_list(tree.get_string("sweep.entries", ""))) {
    const std::string p = "sweep." + name + ".";
    SweepEntry e;
    e.name = name;
    const std::string kind = tree.get_string(p + "init", "random");
    if (kind == "random") {
      e.init = RandomInit{tree.get_u64(p + "seed", 0)};
    } else if (kind == "constant") {
      const auto parts = split_list(tree.get_string(p + "color", "0.5,0.5,0.5"));
      if (parts.size() != 3) throw std::invalid_argument(p + "color must be r,g,b");
      e.init = ConstantInit{std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])};
    } else if (kind == "image") {
      std::filesystem::path path = tree.get_string(p + "path", "");
      if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
      e.init = ImageInit{path};
    } else {
      throw std::invalid_argument("unknown init kind '" + kind + "' for sweep entry " + name);
    }
    e.color_tag = tree.get_string(p + "color_tag", "");
    e.shape_tag = tree.get_string(p + "shape_tag", "");
    spec.entries.push_back(std::move(e));
  }
  validate(spec);
  return spec;
}

void validate(const SweepSpec& spec) {
  if (spec.entries.empty()) throw std::invalid_argument("sweep spec needs at least one entry");
  std::vector<std::string> names;
  for (const auto& e : spec.entries) names.push_back(e.name);
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end()) {
    throw std::invalid_argument("sweep entry names must be unique");
  }
  if (spec.patch_height < 2 || spec.patch_width < 2) throw std::invalid_argument("sweep patch size must be >= 2");
  trainer::validate(spec.train);
  validate(spec.eval);
}

std::vector<int> patch_class_histogram(const Patch& patch, const detector::DetectorAdapter& det,
                                       const EvalConfig& cfg) {
  const detector::Descriptor& d = det.descriptor();
  std::vector<int> histogram(static_cast<std::size_t>(d.classes) + 1, 0);
  for (double fraction : {0.4, 0.6, 0.8}) {
    Tensor canvas = Tensor::image(d.input_height, d.input_width, 3, 0.5);
    const int h = std::max(2, static_cast<int>(fraction * d.input_height));
    const int w = std::max(2, static_cast<int>(h / patch.aspect_hint()));
    const Tensor resized = resize_bilinear(patch.pixels(), h, std::min(w, d.input_width));
    const int y0 = (d.input_height - resized.height()) / 2, x0 = (d.input_width - resized.width()) / 2;
    for (int y = 0; y < resized.height(); ++y) {
      for (int x = 0; x < resized.width(); ++x) {
        for (int c = 0; c < 3; ++c) canvas.at(y0 + y, x0 + x, c) = resized.at(y, x, c);
      }
    }
    const auto dets = detector::detect_all(detector::run_detector(det, canvas), cfg.score_threshold, cfg.nms_iou);
    if (dets.empty()) ++histogram.back();
    for (const auto& det_box : dets) ++histogram[static_cast<std::size_t>(det_box.class_index)];
  }
  return histogram;
}

std::vector<SweepRow> sweep(const SweepSpec& spec, const SceneSet& train_set, const SceneSet& test_set,
                            const detector::DetectorAdapter& det, const std::filesystem::path& work_dir) {
  validate(spec);
  std::vector<SweepRow> rows;
  for (const auto& entry : spec.entries) {
    SweepRow row;
    row.name = entry.name;
    row.color_tag = entry.color_tag;
    row.shape_tag = entry.shape_tag;
    try {
      const Patch init = new_patch(spec.patch_height, spec.patch_width, entry.init);
      trainer::RunOptions options;
      if (!work_dir.empty()) options.checkpoint_dir = work_dir / entry.name;
      const trainer::TrainResult trained = trainer::train(init, train_set, det, spec.train, options);
      const DigitalReport report = digital_eval(trained.patch, test_set, det, spec.eval);
      row.n_all = report.baseline_detected;
      double undetected = 0.0;
      for (const auto& rep : report.repetitions) undetected += rep.outcome.n_undetected;
      row.mean_undetected = undetected / static_cast<double>(report.repetitions.size());
      row.mean_rs = report.mean_rs;
      row.min_rs = report.min_rs;
      row.max_rs = report.max_rs;
      row.class_histogram = patch_class_histogram(trained.patch, det, spec.eval);
      if (!work_dir.empty()) save_patch_png(work_dir / entry.name / "patch.png", trained.patch);
    } catch (const std::exception& e) {
      row.error = e.what();
      log_warning("sweep entry '" + entry.name + "' failed: " + row.error);
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.error.empty() != b.error.empty()) return a.error.empty();
    if (a.mean_rs != b.mean_rs) return a.mean_rs > b.mean_rs;
    return a.name < b.name;
  });
  return rows;
}

}  // namespace cloak::evaluation
