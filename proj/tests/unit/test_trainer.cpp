#include <doctest.h>

#include <cmath>
#include <fstream>

#include "cloak/core/key_tree.hpp"
#include "cloak/detector/toy_detector.hpp"
#include "cloak/detector/toy_scenes.hpp"
#include "cloak/trainer/trainer.hpp"
#include "../support/test_support.hpp"

using namespace cloak;
using namespace cloak::trainer;
using cloak::testing::TempDir;

namespace {

const detector::ToyDetector& toy() {
  static const detector::ToyDetector det = detector::ToyDetector::load(detector::default_toy_fixture_dir());
  return det;
}

const SceneSet& small_set() {
  static const SceneSet set = detector::make_toy_scene_set(11, 4, "train", SplitTag::kTrain);
  return set;
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 2;
  cfg.seed = 3;
  cfg.eot = transforms::eot_preset("conventional");
  cfg.eot.alpha = {0.9, 0.9};
  cfg.weights.lambda_tv = 0.1;
  cfg.checkpoint_every = 2;
  return cfg;
}

Patch gray() { return new_patch(12, 8, ConstantInit{}); }

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("config validation rejects bad fields") {
  TrainConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.epochs = 0;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.adam.beta1 = 1.0;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.adam.step_size = -0.1;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.eot = transforms::eot_preset("conventional");
  cfg.eot.scale_enabled = cfg.eot.rotate_enabled = cfg.eot.brightness_enabled = cfg.eot.contrast_enabled =
      cfg.eot.noise_enabled = false;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
}

TEST_CASE("config key tree round trip and hash") {
  TrainConfig cfg = quick_config();
  cfg.seed = 0xfedcba9876543210ULL;
  cfg.score_mode = detector::ScoreMode::kClassOnly;
  cfg.adam.decay_every = 7;
  const TrainConfig back = train_config_from(KeyTree::parse(to_key_tree(cfg).to_string()));
  CHECK(back == cfg);
  CHECK(config_hash(back) == config_hash(cfg));
  TrainConfig other = cfg;
  other.weights.lambda_nps = 0.5;
  CHECK(config_hash(other) != config_hash(cfg));
  CHECK_THROWS(train_config_from(KeyTree::parse("train.score_mode = sometimes\n")));
}

TEST_CASE("step size decays by half every 50 epochs") {
  AdamSettings a;
  CHECK(step_size_at(a, 1) == 0.03);
  CHECK(step_size_at(a, 50) == 0.03);
  CHECK(step_size_at(a, 51) == 0.015);
  CHECK(step_size_at(a, 101) == 0.0075);
  a.decay_every = 0;
  CHECK(step_size_at(a, 400) == 0.03);
}

TEST_CASE("zero step size leaves the patch unchanged") {
  TrainConfig cfg = quick_config();
  cfg.epochs = 2;
  cfg.adam.step_size = 0.0;
  const Patch init = new_patch(12, 8, RandomInit{4});
  const TrainResult r = train(init, small_set(), toy(), cfg);
  CHECK(r.patch.pixels() == init.pixels());
  CHECK(r.history.epochs.size() == 2);
}

TEST_CASE("training is deterministic and keeps pixels feasible") {
  std::vector<EpochRecord> seen;
  RunOptions opts;
  opts.on_epoch = [&](const EpochRecord& e) {
    seen.push_back(e);
  };
  const TrainResult a = train(gray(), small_set(), toy(), quick_config(), opts);
  const TrainResult b = train(gray(), small_set(), toy(), quick_config());
  CHECK(a.patch.pixels() == b.patch.pixels());
  REQUIRE(a.history.epochs.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.history.epochs[i].epoch == static_cast<int>(i) + 1);
    CHECK(a.history.epochs[i].mean.total == b.history.epochs[i].mean.total);
  }
  CHECK(seen.size() == 4);
  for (double v : a.patch.pixels().data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(a.patch.pixels() != gray().pixels());
}

TEST_CASE("empty train set and boxless corpus are rejected") {
  SceneSet empty;
  CHECK_THROWS_AS(train(gray(), empty, toy(), quick_config()), std::invalid_argument);
  SceneSet boxless = small_set();
  for (Scene& s : boxless.scenes) s.person_boxes.clear();
  CHECK_THROWS_AS(train(gray(), boxless, toy(), quick_config()), std::invalid_argument);
}

TEST_CASE("early stop when the epoch mean drops below the threshold") {
  TrainConfig cfg = quick_config();
  cfg.stop_threshold = 10.0;
  const TrainResult r = train(gray(), small_set(), toy(), cfg);
  CHECK(r.history.stopped_early);
  CHECK(r.history.epochs.size() == 1);
}

TEST_CASE("checkpoint save/load round trip") {
  TempDir dir("ckpt");
  Checkpoint c{Patch(cloak::testing::random_tensor({6, 4, 3}, 5))};
  c.config = quick_config();
  c.adam_steps = 17;
  c.adam_m = std::vector<double>(72, 0.125);
  c.adam_v = std::vector<double>(72, 1e-7);
  c.history = {{1, {0.5, 0.1, 0.2, 0.0, 0.7}, 0.01, 42}};
  c.epoch = 1;
  c.corpus_hash = 0x1234;
  const auto stem = checkpoint_stem(dir.path(), 1);
  CHECK(stem.filename() == "epoch_0001");
  save_checkpoint(stem, c);
  const Checkpoint back = load_checkpoint(dir.path());
  CHECK(back.patch.pixels() == c.patch.pixels());
  CHECK(back.config == c.config);
  CHECK(back.adam_steps == 17);
  CHECK(back.adam_m == c.adam_m);
  CHECK(back.adam_v == c.adam_v);
  CHECK(back.history.size() == 1);
  CHECK(back.history[0].rng_seed == 42);
  CHECK(back.corpus_hash == 0x1234);
  CHECK(load_checkpoint(stem.string() + ".png").epoch == 1);

  {
    std::fstream f(stem.string() + ".state.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x55');
  }
  CHECK_THROWS_AS(load_checkpoint(stem), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "nothing"), std::runtime_error);
}

TEST_CASE("resume: stop then continue equals an uninterrupted run") {
  TempDir full_dir("resume_full"), split_dir("resume_split");
  RunOptions full;
  full.checkpoint_dir = full_dir.path();
  const TrainResult straight = train(gray(), small_set(), toy(), quick_config(), full);

  RunOptions first;
  first.checkpoint_dir = split_dir.path();
  first.stop_after_epoch = 2;
  const TrainResult paused = train(gray(), small_set(), toy(), quick_config(), first);
  CHECK(paused.history.epochs.size() == 2);
  RunOptions rest;
  rest.checkpoint_dir = split_dir.path();
  const TrainResult resumed = resume(split_dir.path(), small_set(), toy(), rest);
  CHECK(resumed.patch.pixels() == straight.patch.pixels());
  REQUIRE(resumed.history.epochs.size() == straight.history.epochs.size());
  for (std::size_t i = 0; i < straight.history.epochs.size(); ++i) {
    CHECK(resumed.history.epochs[i].mean.total == straight.history.epochs[i].mean.total);
    CHECK(resumed.history.epochs[i].rng_seed == straight.history.epochs[i].rng_seed);
  }
}

TEST_CASE("resume: completed run returns immediately, altered corpus is refused") {
  TempDir dir("resume_done");
  RunOptions opts;
  opts.checkpoint_dir = dir.path();
  const TrainResult done = train(gray(), small_set(), toy(), quick_config(), opts);
  int calls = 0;
  RunOptions again;
  again.on_epoch = [&](const EpochRecord&) { ++calls; };
  const TrainResult r = resume(dir.path(), small_set(), toy(), again);
  CHECK(calls == 0);
  CHECK(r.patch.pixels() == done.patch.pixels());
  CHECK(r.history.epochs.size() == 4);

  SceneSet altered = small_set();
  altered.scenes[0].person_boxes[0].cx += 0.01;
  CHECK_THROWS_AS(resume(dir.path(), altered, toy()), std::runtime_error);
}

TEST_CASE("unwritable checkpoint directory is an error") {
  TempDir dir("ckpt_blocked");
  std::ofstream(dir.path() / "file") << "x";
  RunOptions opts;
  opts.checkpoint_dir = dir.path() / "file" / "sub";
  CHECK_THROWS_AS(train(gray(), small_set(), toy(), quick_config(), opts), std::runtime_error);
}

TEST_CASE("history csv round trip") {
  TempDir dir("history");
  const std::vector<EpochRecord> h{{1, {0.5, 0.25, 0.125, 0.0, 0.6}, 0.5, 0}, {2, {0.4, 0.2, 0.1, 0.05, 0.5}, 0.25, 0}};
  write_history_csv(dir.path() / "history.csv", h);
  std::ifstream in(dir.path() / "history.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,detection,tv,nps,disappear,total,seconds");
  const auto back = read_history_csv(dir.path() / "history.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].epoch == 2);
  CHECK(back[1].mean.disappear == 0.05);
  CHECK(back[0].seconds == 0.5);
}

}  // TEST_SUITE

namespace {

// Emits NaN for every raw output value.
class BrokenDetector final : public detector::DetectorAdapter {
 public:
  const detector::Descriptor& descriptor() const override { return d_; }
  ad::Var forward(ad::Tape& tape, ad::Var image) const override {
    Tensor raw({d_.box_count() * d_.row_length()});
    for (double& v : raw.data()) v = std::nan("");
    return tape.record(raw, {image}, [](ad::Tape&, ad::Var) {});
  }

 private:
  detector::Descriptor d_;
};

}  // namespace

TEST_CASE("non-finite detector output aborts with epoch and batch" * doctest::test_suite("trainer")) {
  try {
    train(gray(), small_set(), BrokenDetector{}, quick_config());
    FAIL("expected an abort");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("epoch 1, batch 0") != std::string::npos);
  }
}
