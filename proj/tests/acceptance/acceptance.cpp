// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cloak/autodiff/ops.hpp"
#include "cloak/core/palette.hpp"
#include "cloak/detector/adapter.hpp"
#include "cloak/detector/nms.hpp"
#include "cloak/detector/toy_detector.hpp"
#include "cloak/detector/toy_scenes.hpp"
#include "cloak/evaluation/evaluation.hpp"
#include "cloak/losses/losses.hpp"
#include "cloak/trainer/trainer.hpp"
#include "cloak/transforms/pipeline.hpp"
#include "cloak/transforms/warps.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace cloak;
namespace ts = cloak::testing;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit_s;  // 0: no limit
  std::function<Verdict()> run;
};

const detector::ToyDetector& toy() {
  static const detector::ToyDetector det = detector::ToyDetector::load(detector::default_toy_fixture_dir());
  return det;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Toy end-to-end setting shared by criteria 6 to 9.
const SceneSet& toy_train_set() {
  static const SceneSet s = detector::make_toy_scene_set(11, 16, "train", SplitTag::kTrain);
  return s;
}
const SceneSet& toy_test_set() {
  static const SceneSet s = detector::make_toy_scene_set(22, 16, "test", SplitTag::kTest);
  return s;
}

trainer::TrainConfig toy_config(int epochs) {
  trainer::TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 8;
  cfg.eot_samples = 32;
  cfg.seed = 5;
  cfg.adam.step_size = 0.03;
  cfg.eot = transforms::eot_preset("conventional");
  cfg.eot.alpha = {0.9, 0.9};
  cfg.weights.lambda_tv = 0.1;
  return cfg;
}

evaluation::EvalConfig toy_eval_config() {
  evaluation::EvalConfig cfg = evaluation::default_eval_config();
  cfg.eot.alpha = {0.9, 0.9};
  return cfg;
}

Patch toy_init() { return new_patch(30, 20, ConstantInit{}); }

const trainer::TrainResult& toy_run() {
  static const trainer::TrainResult r = trainer::train(toy_init(), toy_train_set(), toy(), toy_config(200));
  return r;
}

Verdict loss_oracles() {
  const Palette pal = default_palette();
  double worst_tv = 0.0, worst_nps = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Tensor p = ts::random_tensor({8, 8, 3}, 1000 + s);
    worst_tv = std::max(worst_tv, std::abs(losses::tv_loss(p) - oracle::tv(p)));
    worst_nps = std::max(worst_nps, std::abs(losses::nps_loss(p, pal) - oracle::nps(p, pal)));
  }
  return {worst_tv < 1e-6 && worst_nps < 1e-6,
          "max |tv - oracle| " + fmt("%.2e", worst_tv) + ", max |nps - oracle| " + fmt("%.2e", worst_nps)};
}

Verdict score_oracle() {
  detector::Descriptor d;
  d.grid = 13;
  d.boxes = 5;
  d.classes = 80;
  d.anchors.assign(5, {1.0, 1.0});
  int mismatches = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto g = detector::decode_grid(ts::random_tensor({13, 13, 5, 85}, 2000 + s, -4.0, 4.0), d);
    if (detector::extract_person_score(g, 0) != oracle::person_score(g, 0)) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 100 grids differ"};
}

Verdict gradient_suite() {
  const auto idx = [](std::size_t n, std::uint64_t seed) { return ts::sample_indices(n, 20, seed); };
  const Palette pal = default_palette();
  const Tensor small = ts::random_tensor({6, 6, 3}, 3000, 0.05, 0.95);
  const double tv = ts::check_gradient([](ad::Tape& t, ad::Var x) { return losses::tv_loss(t, x); }, small,
                                       idx(small.size(), 1))
                        .max_rel_error;
  const double nps = ts::check_gradient([&](ad::Tape& t, ad::Var x) { return losses::nps_loss(t, x, pal); }, small,
                                        idx(small.size(), 2))
                         .max_rel_error;

  // Detection loss of the toy detector, differentiated w.r.t. the patch
  // through placement on a scene.
  const std::vector<Scene> scenes{detector::toy_canonical_scene()};
  const Tensor patch = ts::random_tensor({12, 8, 3}, 3001, 0.2, 0.8);
  const auto conventional = transforms::eot_preset("conventional");
  const auto detection = [&](ad::Tape& t, ad::Var x) {
    SeedableRng rng(7);
    const auto composed = transforms::batch_apply(t, x, kDefaultAspectHint, scenes, conventional, rng);
    const auto& d = toy().descriptor();
    const std::vector<detector::GridVars> grids{
        detector::decode_grid(t, toy().forward(t, detector::fit_to_input(t, composed.images[0], d)), d)};
    return losses::detection_loss(t, grids, d.person_class);
  };
  const double det = ts::check_gradient(detection, patch, idx(patch.size(), 3), 1e-5, 1e-9).max_rel_error;

  const auto combined = transforms::eot_preset("combined");
  const std::vector<Scene> plain{detector::toy_canonical_scene(), detector::make_toy_sample(4).scene};
  const auto chain = [&](ad::Tape& t, ad::Var x) {
    SeedableRng rng(11);
    const auto composed = transforms::batch_apply(t, x, kDefaultAspectHint, plain, combined, rng);
    return ad::add(t, ad::mean(t, composed.images[0]), ad::mean(t, composed.images[1]));
  };
  const double warp = ts::check_gradient(chain, patch, idx(patch.size(), 4), 1e-5, 1e-9).max_rel_error;

  transforms::TransformParams occ;
  occ.occlusion_fraction = 0.25;
  occ.occlusion_seed = 5;
  ad::Tape t;
  const ad::Var x = t.variable(ts::random_tensor({20, 20, 3}, 3002));
  const auto layer = transforms::apply_3d(t, transforms::apply_conventional(t, x, occ), occ);
  t.backward(ad::sum(t, layer.image));
  const Tensor g = t.gradient(x);
  int leaked = 0, covered = 0;
  for (std::size_t p = 0; p < layer.occluded.size(); ++p) {
    if (layer.occluded[p] < 0.5) continue;
    ++covered;
    for (int c = 0; c < 3; ++c) leaked += g[p * 3 + static_cast<std::size_t>(c)] != 0.0 ? 1 : 0;
  }
  const double worst = std::max({tv, nps, det, warp});
  return {worst < 1e-3 && leaked == 0 && covered > 0,
          "rel err tv " + fmt("%.1e", tv) + ", nps " + fmt("%.1e", nps) + ", detection " + fmt("%.1e", det) +
              ", transform chain " + fmt("%.1e", warp) + "; nonzero grads under occluder " + std::to_string(leaked) +
              " of " + std::to_string(covered * 3)};
}

Verdict transform_invariants() {
  const Patch p(ts::random_tensor({16, 12, 3}, 4000));
  const auto id = transforms::apply_transforms(p, transforms::TransformParams{});
  const double identity_err = ts::max_abs_diff(id.image, p.pixels());

  const SceneSet scenes = detector::make_toy_scene_set(4, 6, "inv", SplitTag::kTest);
  const auto cfg = transforms::eot_preset("combined");
  SeedableRng r1(99), r2(99);
  const auto a = transforms::batch_apply(scenes.scenes, p, cfg, r1);
  const auto b = transforms::batch_apply(scenes.scenes, p, cfg, r2);
  const bool bitwise = a.images == b.images;
  const bool replay = transforms::replay_batch(scenes.scenes, p, a.log).images == a.images;

  int worst_off = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    double count = 0.0;
    for (double v : transforms::occlusion_mask(100, 100, 0.2, s).data()) count += v;
    worst_off = std::max(worst_off, static_cast<int>(std::abs(count - 2000)));
  }
  return {identity_err < 1e-6 && bitwise && replay && worst_off <= 100,
          "identity err " + fmt("%.1e", identity_err) + ", seeded batch bitwise " + (bitwise ? "yes" : "no") +
              ", replay bitwise " + (replay ? "yes" : "no") + ", worst occlusion count offset " +
              std::to_string(worst_off) + " px"};
}

Verdict metric_fixtures() {
  const double a = evaluation::attack_success_rate(0, 602);
  const double b = evaluation::attack_success_rate(301, 602);
  const double c = evaluation::attack_success_rate(90, 100);
  return {a == 0.0 && b == 50.0 && c == 90.0,
          fmt("(0,602) -> %g%%", a) + fmt(", (301,602) -> %g%%", b) + fmt(", (90,100) -> %g%%", c)};
}

Verdict toy_end_to_end() {
  const auto& run = toy_run();
  const double first = run.history.epochs.front().mean.detection;
  const double last = run.history.epochs.back().mean.detection;
  const double drop = 1.0 - last / first;
  const auto report = evaluation::digital_eval(run.patch, toy_test_set(), toy(), toy_eval_config());
  const auto again = trainer::train(toy_init(), toy_train_set(), toy(), toy_config(200));
  const bool deterministic = again.patch.pixels() == run.patch.pixels();
  return {drop >= 0.5 && report.mean_rs >= 80.0 && deterministic,
          "detection loss " + fmt("%.4f", first) + fmt(" -> %.4f", last) + fmt(" (%.1f%% drop)", 100 * drop) +
              ", digital R_s mean " + fmt("%.1f%%", report.mean_rs) + fmt(" [%.1f, ", report.min_rs) +
              fmt("%.1f] over ", report.max_rs) + std::to_string(report.baseline_detected) +
              " baseline persons, rerun bitwise " + (deterministic ? "yes" : "no")};
}

Verdict convergence() {
  const auto& h = toy_run().history.epochs;
  std::vector<double> smooth;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const std::size_t lo = i >= 4 ? i - 4 : 0;
    double s = 0.0;
    for (std::size_t j = lo; j <= i; ++j) s += h[j].mean.total;
    smooth.push_back(s / static_cast<double>(i - lo + 1));
  }
  // Non-increasing within slack: no later smoothed value exceeds an earlier
  // one in the final quarter by more than 5%.
  const std::size_t start = h.size() - h.size() / 4;
  double worst = 0.0;
  double running_min = smooth[start];
  for (std::size_t i = start; i < smooth.size(); ++i) {
    running_min = std::min(running_min, smooth[i]);
    worst = std::max(worst, smooth[i] / running_min - 1.0);
  }
  return {worst <= 0.05, "epochs " + std::to_string(start + 1) + "-" + std::to_string(h.size()) +
                             ", worst rise above running minimum " + fmt("%.2f%%", 100 * worst)};
}

Verdict disappearance() {
  trainer::TrainConfig cfg = toy_config(200);
  cfg.weights.mu_disappear = losses::kDefaultDisappearWeight;
  const auto run = trainer::train(toy_init(), toy_train_set(), toy(), cfg);
  const auto eval = toy_eval_config();
  const auto& scenes = toy_test_set().scenes;
  int clean = 0, total = 0;
  for (int rep = 0; rep < eval.repetitions; ++rep) {
    SeedableRng rng(mix_seed(eval.seed, static_cast<std::uint64_t>(rep)));
    const auto out = transforms::batch_apply(scenes, run.patch, eval.eot, rng);
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const Tensor& img = scenes[i].image;
      const auto dets =
          detector::detect_all(detector::run_detector(toy(), out.images[i]), eval.score_threshold, eval.nms_iou);
      bool any = false;
      for (const auto& r : out.regions[i]) {
        const auto region = losses::normalized_region(r.x0, r.y0, r.width, r.height, img.height(), img.width());
        for (const auto& d : dets) any = any || region.contains(d.box.cx, d.box.cy);
      }
      clean += any ? 0 : 1;
      ++total;
    }
  }
  const double rate = 100.0 * clean / total;
  return {rate >= 70.0, std::to_string(clean) + " of " + std::to_string(total) +
                            " held-out placements have no detection of any class in the patch region (" +
                            fmt("%.1f%%)", rate)};
}

Verdict resume_equivalence() {
  ts::TempDir straight_dir("acceptance_straight"), split_dir("acceptance_split");
  trainer::TrainConfig cfg = toy_config(20);
  trainer::RunOptions straight_opts;
  straight_opts.checkpoint_dir = straight_dir.path();
  const auto straight = trainer::train(toy_init(), toy_train_set(), toy(), cfg, straight_opts);

  trainer::RunOptions first;
  first.checkpoint_dir = split_dir.path();
  first.stop_after_epoch = 10;
  trainer::train(toy_init(), toy_train_set(), toy(), cfg, first);
  trainer::RunOptions second;
  second.checkpoint_dir = split_dir.path();
  const auto resumed = trainer::resume(split_dir.path(), toy_train_set(), toy(), second);

  bool history_equal = resumed.history.epochs.size() == straight.history.epochs.size();
  for (std::size_t i = 0; history_equal && i < straight.history.epochs.size(); ++i) {
    const auto& a = resumed.history.epochs[i].mean;
    const auto& b = straight.history.epochs[i].mean;
    history_equal = a.detection == b.detection && a.tv == b.tv && a.nps == b.nps && a.total == b.total;
  }
  const bool patch_equal = resumed.patch.pixels() == straight.patch.pixels();
  return {patch_equal && history_equal, std::string("final patch bitwise ") + (patch_equal ? "equal" : "different") +
                                            ", loss history " + (history_equal ? "equal" : "different")};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "loss oracles", 10, loss_oracles},
      {2, "score extraction oracle", 10, score_oracle},
      {3, "gradient suite", 120, gradient_suite},
      {4, "transform invariants", 60, transform_invariants},
      {5, "metric fixtures", 0, metric_fixtures},
      {6, "toy end-to-end", 900, toy_end_to_end},
      {7, "convergence", 0, convergence},
      {8, "disappearance mode", 0, disappearance},
      {9, "resume equivalence", 0, resume_equivalence},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.2fs", secs);
    if (c.time_limit_s > 0) {
      timing += fmt(" of %.0fs allowed", c.time_limit_s);
      if (secs > c.time_limit_s) v.pass = false;
    }
    failures += v.pass ? 0 : 1;
    std::printf("criterion %d %s: %s (%s; %s)\n", c.id, c.name.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
  }
  std::printf("criterion 10 full-scale reproduction: not run (needs pretrained detector weights and a real corpus)\n");
  return failures == 0 ? 0 : 1;
}
