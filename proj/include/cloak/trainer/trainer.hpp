#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cloak/core/key_tree.hpp"
#include "cloak/core/palette.hpp"
#include "cloak/core/patch.hpp"
#include "cloak/core/scene.hpp"
#include "cloak/detector/adapter.hpp"
#include "cloak/losses/losses.hpp"
#include "cloak/transforms/params.hpp"

namespace cloak::trainer {

struct AdamSettings {
  double step_size = 0.03;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int decay_every = 50;      // epochs; 0 disables decay
  double decay_factor = 0.5;
  friend bool operator==(const AdamSettings&, const AdamSettings&) = default;
};

struct TrainConfig {
  int epochs = 150;
  int batch_size = 8;
  int eot_samples = 1;  // independent transform draws per box per step
  AdamSettings adam;
  double stop_threshold = 0.0;  // 0 disables early stopping
  std::uint64_t seed = 0;
  transforms::EotConfig eot;
  losses::LossWeights weights;
  int checkpoint_every = 10;
  detector::ScoreMode score_mode = detector::ScoreMode::kObjectnessTimesClass;
  std::string palette = "default";  // "default" or a palette file path

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Throws std::invalid_argument on out-of-range fields, including a
// configuration with every EOT sub-transform disabled.
void validate(const TrainConfig& cfg);

// Key-tree form: train.*, adam.*, weights.*, eot.*.
KeyTree to_key_tree(const TrainConfig& cfg);
TrainConfig train_config_from(const KeyTree& tree, TrainConfig base = {});
std::uint64_t config_hash(const TrainConfig& cfg);

Palette resolve_palette(const TrainConfig& cfg);

// Step size in effect during a 1-based epoch.
double step_size_at(const AdamSettings& adam, int epoch);

struct EpochRecord {
  int epoch = 0;
  losses::LossBreakdown mean;
  double seconds = 0.0;
  std::uint64_t rng_seed = 0;  // seed of the epoch's random stream
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::filesystem::path final_patch;  // last checkpoint PNG, empty without a checkpoint dir
  bool stopped_early = false;
};

struct TrainResult {
  Patch patch;
  TrainHistory history;
};

// Settings that do not change the optimization itself.
struct RunOptions {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  int stop_after_epoch = 0;              // > 0: pause after this epoch
  std::function<void(const EpochRecord&)> on_epoch;
};

// Adam over the patch pixels, one transform draw per (scene, box) per step.
// Throws std::invalid_argument for an empty train set or bad config and
// std::runtime_error for a non-finite loss or unwritable checkpoint.
TrainResult train(const Patch& init, const SceneSet& train_set, const detector::DetectorAdapter& detector,
                  const TrainConfig& cfg, const RunOptions& options = {});

// Continues a run from a checkpoint (a directory, which selects its latest
// checkpoint, or a checkpoint path with or without extension). The corpus
// must hash to the recorded value.
TrainResult resume(const std::filesystem::path& checkpoint, const SceneSet& train_set,
                   const detector::DetectorAdapter& detector, const RunOptions& options = {});

// Checkpoint files: <stem>.png (16-bit), <stem>.meta.json, <stem>.state.bin.
struct Checkpoint {
  Patch patch;
  TrainConfig config;
  std::int64_t adam_steps = 0;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::vector<EpochRecord> history;
  int epoch = 0;
  bool finished = false;
  std::uint64_t corpus_hash = 0;
};

std::filesystem::path checkpoint_stem(const std::filesystem::path& dir, int epoch);
void save_checkpoint(const std::filesystem::path& stem, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);
std::vector<EpochRecord> read_history_csv(const std::filesystem::path& path);

}  // namespace cloak::trainer
