// Command-line entry point: train, eval-digital, eval-photos, sweep, report,
// make-toy-corpus.
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cloak/core/key_tree.hpp"
#include "cloak/core/log.hpp"
#include "cloak/core/patch.hpp"
#include "cloak/core/scene.hpp"
#include "cloak/detector/toy_detector.hpp"
#include "cloak/detector/toy_scenes.hpp"
#include "cloak/evaluation/evaluation.hpp"
#include "cloak/trainer/trainer.hpp"

using namespace cloak;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Key-tree config file");
  cmd->add_option("--set", c.sets, "Override a config key (key=value), repeatable");
  cmd->add_option("--seed", c.seed, "Sets train.seed and eval.seed");
  cmd->add_option("--out", c.out, "Output directory");
}

KeyTree effective_config(const Common& c) {
  KeyTree tree;
  if (!c.config.empty()) tree = KeyTree::load(c.config);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    tree.merge(KeyTree::parse(s.substr(0, eq) + " = " + s.substr(eq + 1)));
  }
  if (c.seed) {
    tree.set("train.seed", std::to_string(*c.seed));
    tree.set("eval.seed", std::to_string(*c.seed));
  }
  return tree;
}

detector::ToyDetector load_detector(const KeyTree& tree) {
  const std::string kind = tree.get_string("detector.kind", "toy");
  if (kind != "toy") throw std::invalid_argument("unsupported detector.kind '" + kind + "'");
  return detector::ToyDetector::load(tree.get_string("detector.dir", detector::default_toy_fixture_dir().string()));
}

// data.<split>_dir names a corpus; otherwise data.toy_<split> synthetic
// scenes are generated from data.toy_<split>_seed, or from a split-specific
// stream of data.toy_seed.
SceneSet scene_set(const KeyTree& tree, const std::string& split) {
  const std::string dir = tree.get_string("data." + split + "_dir", "");
  if (!dir.empty()) return load_scene_set(dir, split);
  const int count = static_cast<int>(tree.get_int("data.toy_" + split, 16));
  const std::uint64_t base = mix_seed(tree.get_u64("data.toy_seed", 7), split == "train" ? 1 : 2);
  const std::uint64_t seed = tree.get_u64("data.toy_" + split + "_seed", base);
  return detector::make_toy_scene_set(seed, count, split, parse_split_tag(split));
}

InitSpec parse_init(const std::string& text) {
  if (text == "gray") return ConstantInit{};
  if (text.starts_with("random")) {
    const auto colon = text.find(':');
    return RandomInit{colon == std::string::npos ? 0 : std::stoull(text.substr(colon + 1))};
  }
  if (text.starts_with("constant:")) {
    double r = 0, g = 0, b = 0;
    if (std::sscanf(text.c_str() + 9, "%lf,%lf,%lf", &r, &g, &b) != 3) {
      throw std::invalid_argument("patch.init constant expects constant:r,g,b");
    }
    return ConstantInit{r, g, b};
  }
  if (text.starts_with("image:")) return ImageInit{text.substr(6)};
  throw std::invalid_argument("unknown patch.init '" + text + "'");
}

void print_rows(const evaluation::Report& report) {
  for (const auto& r : report.rows) {
    std::printf("%-28s n_all=%-5d undetected=%-8.3g R_s=%.2f%%\n", r.condition.c_str(), r.n_all, r.n_undetected,
                r.rs_percent);
  }
}

int run_train(const Common& c, const std::string& resume_from, std::optional<int> epochs) {
  KeyTree tree = effective_config(c);
  if (epochs) tree.set("train.epochs", static_cast<std::int64_t>(*epochs));
  const auto det = load_detector(tree);
  const SceneSet train_set = scene_set(tree, "train");
  const std::filesystem::path out = c.out;
  trainer::RunOptions options;
  options.checkpoint_dir = out / "checkpoints";
  options.on_epoch = [](const trainer::EpochRecord& r) {
    std::printf("epoch %4d  detection %.4f  tv %.4f  nps %.4f  disappear %.4f  total %.4f  (%.2fs)\n", r.epoch,
                r.mean.detection, r.mean.tv, r.mean.nps, r.mean.disappear, r.mean.total, r.seconds);
    std::fflush(stdout);
  };
  options.stop_after_epoch = static_cast<int>(tree.get_int("train.stop_after_epoch", 0));

  trainer::TrainResult result = [&] {
    if (!resume_from.empty()) return trainer::resume(resume_from, train_set, det, options);
    const trainer::TrainConfig cfg = trainer::train_config_from(tree);
    const Patch init = new_patch(static_cast<int>(tree.get_int("patch.height", 300)),
                                 static_cast<int>(tree.get_int("patch.width", 200)),
                                 parse_init(tree.get_string("patch.init", "gray")));
    std::filesystem::create_directories(out);
    std::ofstream(out / "config.txt") << to_key_tree(cfg).to_string();
    return trainer::train(init, train_set, det, cfg, options);
  }();

  save_patch_png(out / "patch.png", result.patch);
  trainer::write_history_csv(out / "history.csv", result.history.epochs);
  evaluation::Report report;
  report.plots.push_back(evaluation::loss_plot(result.history.epochs));
  evaluation::emit_report(report, out);
  std::printf("patch written to %s\n", (out / "patch.png").string().c_str());
  return 0;
}

int run_eval_digital(const Common& c, const std::string& patch_path) {
  const KeyTree tree = effective_config(c);
  const auto det = load_detector(tree);
  const SceneSet test_set = scene_set(tree, "test");
  const evaluation::EvalConfig cfg = evaluation::eval_config_from(tree);
  std::optional<Patch> patch;
  if (!patch_path.empty()) patch = load_patch_png(patch_path);
  const auto digital = evaluation::digital_eval(patch, test_set, det, cfg);
  const auto report = evaluation::to_report(digital);
  evaluation::emit_report(report, c.out);
  print_rows(report);
  return 0;
}

int run_eval_photos(const Common& c, const std::string& root) {
  const KeyTree tree = effective_config(c);
  const auto det = load_detector(tree);
  const auto report = evaluation::to_report(evaluation::photo_eval(root, det, evaluation::eval_config_from(tree)));
  evaluation::emit_report(report, c.out);
  print_rows(report);
  return 0;
}

int run_sweep(const Common& c) {
  const KeyTree tree = effective_config(c);
  const auto det = load_detector(tree);
  const auto base = c.config.empty() ? std::filesystem::path{} : std::filesystem::path(c.config).parent_path();
  const auto spec = evaluation::sweep_spec_from(tree, base);
  const auto rows = evaluation::sweep(spec, scene_set(tree, "train"), scene_set(tree, "test"), det,
                                      std::filesystem::path(c.out) / "entries");
  const auto report = evaluation::to_report(rows);
  evaluation::emit_report(report, c.out);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::printf("%2zu. %-20s color=%-10s shape=%-10s mean %.2f%% [%.2f, %.2f]%s%s\n", i + 1, r.name.c_str(),
                r.color_tag.c_str(), r.shape_tag.c_str(), r.mean_rs, r.min_rs, r.max_rs,
                r.error.empty() ? "" : "  error: ", r.error.c_str());
  }
  return 0;
}

// R_s of every checkpoint of a training run plus its loss curves.
int run_report(const Common& c, const std::string& run_dir) {
  const KeyTree tree = effective_config(c);
  const auto det = load_detector(tree);
  const SceneSet test_set = scene_set(tree, "test");
  const evaluation::EvalConfig cfg = evaluation::eval_config_from(tree);
  const std::filesystem::path run = run_dir;

  evaluation::Report report;
  std::vector<std::filesystem::path> checkpoints;
  for (const auto& e : std::filesystem::directory_iterator(run / "checkpoints")) {
    const std::string name = e.path().filename().string();
    if (name.starts_with("epoch_") && name.ends_with(".png")) checkpoints.push_back(e.path());
  }
  std::sort(checkpoints.begin(), checkpoints.end());
  evaluation::Plot rs{"rs_vs_epoch", "Attack success rate per checkpoint", "epoch", "R_s (%)", {}};
  evaluation::Series mean{"mean", {}, {}}, lo{"min", {}, {}}, hi{"max", {}, {}};
  for (const auto& ckpt : checkpoints) {
    const trainer::Checkpoint state = trainer::load_checkpoint(ckpt);
    const auto digital = evaluation::digital_eval(state.patch, test_set, det, cfg);
    char label[32];
    std::snprintf(label, sizeof label, "epoch_%04d", state.epoch);
    const auto rows = evaluation::to_report(digital, label).rows;
    report.rows.insert(report.rows.end(), rows.end() - 3, rows.end());
    for (auto* s : {&mean, &lo, &hi}) s->x.push_back(state.epoch);
    mean.y.push_back(digital.mean_rs);
    lo.y.push_back(digital.min_rs);
    hi.y.push_back(digital.max_rs);
  }
  rs.series = {mean, lo, hi};
  if (!checkpoints.empty()) report.plots.push_back(rs);
  if (std::filesystem::exists(run / "history.csv")) {
    report.plots.push_back(evaluation::loss_plot(trainer::read_history_csv(run / "history.csv")));
  }
  evaluation::emit_report(report, c.out);
  print_rows(report);
  return 0;
}

int run_make_corpus(const Common& c, int count, const std::string& split) {
  const KeyTree tree = effective_config(c);
  const std::uint64_t seed = c.seed.value_or(tree.get_u64("data.toy_seed", 7));
  save_scene_set(c.out, detector::make_toy_scene_set(seed, count, split, parse_split_tag(split)));
  std::printf("%d scenes written to %s\n", count, c.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial wearable patch synthesis and evaluation against grid detectors"};
  app.require_subcommand(1);

  Common train_c, digital_c, photos_c, sweep_c, report_c, corpus_c;
  std::string resume_from, patch_path, photo_root, run_dir, split = "train";
  std::optional<int> epochs;
  int count = 16;

  auto* train = app.add_subcommand("train", "Optimize a patch against the detector");
  add_common(train, train_c);
  train->add_option("--resume", resume_from, "Continue from a checkpoint file or directory");
  train->add_option("--epochs", epochs, "Sets train.epochs");

  auto* digital = app.add_subcommand("eval-digital", "Digital attack success rate on an annotated test set");
  add_common(digital, digital_c);
  digital->add_option("--patch", patch_path, "Patch PNG; omit for the no-patch baseline");

  auto* photos = app.add_subcommand("eval-photos", "Attack success rate over <scene>/<distance>/<angle> photo folders");
  add_common(photos, photos_c);
  photos->add_option("--root", photo_root, "Photo root directory")->required();

  auto* sweep = app.add_subcommand("sweep", "Train and rank patches from several initial images");
  add_common(sweep, sweep_c);

  auto* report = app.add_subcommand("report", "Evaluate every checkpoint of a training run and plot");
  add_common(report, report_c);
  report->add_option("--run", run_dir, "Output directory of a train command")->required();

  auto* corpus = app.add_subcommand("make-toy-corpus", "Write a synthetic annotated corpus");
  add_common(corpus, corpus_c);
  corpus->add_option("--count", count, "Number of scenes");
  corpus->add_option("--split", split, "train or test");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return run_train(train_c, resume_from, epochs);
    if (*digital) return run_eval_digital(digital_c, patch_path);
    if (*photos) return run_eval_photos(photos_c, photo_root);
    if (*sweep) return run_sweep(sweep_c);
    if (*report) return run_report(report_c, run_dir);
    if (*corpus) return run_make_corpus(corpus_c, count, split);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
