// Regenerates the versioned toy detector fixture under data/toy_detector.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "cloak/core/rng.hpp"
#include "cloak/detector/grid.hpp"
#include "cloak/detector/nms.hpp"
#include "cloak/detector/toy_detector.hpp"
#include "cloak/detector/toy_scenes.hpp"
#include "cloak/detector/toy_training.hpp"

using namespace cloak;
using namespace cloak::detector;

namespace {

// Fraction of persons in fresh samples matched (IoU >= 0.5) by a person
// detection at score 0.5.
double held_out_recall(const ToyDetector& net, int samples) {
  const Descriptor& d = net.descriptor();
  int found = 0, total = 0;
  for (int i = 0; i < samples; ++i) {
    const ToySample s = make_toy_sample(mix_seed(0x686f6c64ULL, static_cast<std::uint64_t>(i)));
    const auto dets = detect_persons(run_detector(net, s.scene.image), d.person_class, 0.5, 0.4);
    for (const auto& b : s.scene.person_boxes) {
      ++total;
      const BoxGeometry g{b.cx, b.cy, b.w, b.h};
      if (std::any_of(dets.begin(), dets.end(), [&](const Detection& x) { return iou(x.box, g) >= 0.5; })) ++found;
    }
  }
  return static_cast<double>(found) / total;
}

// Gates are evaluated on the float32 weights as stored.
int report_gates(const std::string& dir) {
  const ToyDetector stored = ToyDetector::load(dir);
  const Descriptor& d = stored.descriptor();
  const double blank = extract_person_score(run_detector(stored, Tensor::image(64, 64)), d.person_class);
  const double canonical = extract_person_score(run_detector(stored, toy_canonical_scene().image), d.person_class);
  const double recall = held_out_recall(stored, 300);
  std::printf("blank image person score     %.4f (gate < 0.3)\n", blank);
  std::printf("canonical scene person score %.4f (gate > 0.7)\n", canonical);
  std::printf("held-out recall at 0.5       %.3f (gate > 0.8)\n", recall);
  return blank < 0.3 && canonical > 0.7 && recall > 0.8 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pre-train the toy grid detector and write its fixture"};
  ToyTrainingConfig cfg;
  std::string out = default_toy_fixture_dir().string();
  bool check_only = false;
  app.add_option("--out", out, "Fixture directory");
  app.add_option("--steps", cfg.steps, "Optimizer steps");
  app.add_option("--batch", cfg.batch_size, "Samples per step");
  app.add_option("--lr", cfg.learning_rate, "Base learning rate");
  app.add_option("--seed", cfg.seed, "Initialization and data seed");
  app.add_option("--occluder", cfg.scenes.occluder_probability, "Probability of a torso occluder per sample");
  app.add_flag("--check", check_only, "Only evaluate the fixture at --out");
  CLI11_PARSE(app, argc, argv);
  if (check_only) return report_gates(out);

  const auto start = std::chrono::steady_clock::now();
  double running = 0.0;
  ToyDetector net = pretrain_toy_detector(cfg, [&](int step, double loss) {
    running = step == 0 ? loss : 0.98 * running + 0.02 * loss;
    if ((step + 1) % 250 == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::printf("step %5d  loss %.4f  (%.0fs)\n", step + 1, running, secs);
      std::fflush(stdout);
    }
  });
  net.save(out);
  return report_gates(out);
}
