#include "cloak/trainer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "cloak/autodiff/adam.hpp"
#include "cloak/autodiff/ops.hpp"
#include "cloak/core/log.hpp"
#include "cloak/core/rng.hpp"
#include "cloak/transforms/pipeline.hpp"

namespace cloak::trainer {
namespace {

struct RunState {
  Tensor pixels;
  double aspect_hint;
  ad::Adam adam;
  std::vector<EpochRecord> history;
};

void prepare_checkpoint_dir(const std::filesystem::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto probe = dir / ".write_probe";
  std::ofstream out(probe);
  if (ec || !out) throw std::runtime_error("checkpoint directory is not writable: " + dir.string());
  out.close();
  std::filesystem::remove(probe, ec);
}

std::vector<std::size_t> epoch_order(std::size_t n, SeedableRng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

bool finite(const losses::LossBreakdown& b) {
  return std::isfinite(b.detection) && std::isfinite(b.tv) && std::isfinite(b.nps) && std::isfinite(b.disappear) &&
         std::isfinite(b.total);
}

// One forward/backward over a minibatch; updates the patch in place.
losses::LossBreakdown step_batch(RunState& st, std::span<const Scene> scenes, const detector::DetectorAdapter& det,
                                 const TrainConfig& cfg, const Palette& palette, SeedableRng& rng, double step_size,
                                 int epoch, int batch) {
  ad::Tape tape;
  const ad::Var patch = tape.variable(st.pixels);
  const transforms::BatchResult composed = transforms::batch_apply(tape, patch, st.aspect_hint, scenes, cfg.eot, rng);

  const detector::Descriptor& d = det.descriptor();
  std::vector<detector::GridVars> grids;
  std::vector<std::vector<losses::Region>> regions;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const ad::Var input = detector::fit_to_input(tape, composed.images[i], d);
    const ad::Var raw = det.forward(tape, input);
    try {
      grids.push_back(detector::decode_grid(tape, raw, d));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("detector output rejected at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batch) + ": " + e.what());
    }
    std::vector<losses::Region> r;
    const Tensor& img = scenes[i].image;
    for (const auto& rect : composed.regions[i]) {
      r.push_back(losses::normalized_region(rect.x0, rect.y0, rect.width, rect.height, img.height(), img.width()));
    }
    regions.push_back(std::move(r));
  }
  const losses::ObjectiveTerms terms =
      losses::total_objective(tape, patch, grids, regions, palette, cfg.weights, {d.person_class, cfg.score_mode});
  const losses::LossBreakdown b = losses::breakdown(tape, terms);
  if (!finite(b)) {
    throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch));
  }
  tape.backward(terms.total);
  const Tensor grad = tape.gradient(patch);
  for (double g : grad.data()) {
    if (!std::isfinite(g)) {
      throw std::runtime_error("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batch));
    }
  }
  st.adam.step(st.pixels.data(), grad.data(), step_size);
  st.pixels = clamp_unit(st.pixels);
  return b;
}

void write_checkpoint(const RunState& st, const TrainConfig& cfg, const SceneSet& set, int epoch, bool finished,
                      const std::filesystem::path& dir, TrainHistory& history) {
  if (dir.empty()) return;
  Checkpoint ckpt{Patch(st.pixels, st.aspect_hint), cfg, st.adam.steps(), st.adam.first_moment(),
                  st.adam.second_moment(), st.history, epoch, finished, corpus_hash(set)};
  const auto stem = checkpoint_stem(dir, epoch);
  save_checkpoint(stem, ckpt);
  write_history_csv(dir / "history.csv", st.history);
  history.final_patch = stem.parent_path() / (stem.filename().string() + ".png");
}

TrainResult run(RunState st, int first_epoch, const SceneSet& set, const detector::DetectorAdapter& det,
                const TrainConfig& cfg, const RunOptions& options) {
  prepare_checkpoint_dir(options.checkpoint_dir);
  const Palette palette = resolve_palette(cfg);
  TrainHistory history;
  const int last = options.stop_after_epoch > 0 ? std::min(cfg.epochs, options.stop_after_epoch) : cfg.epochs;

  for (int epoch = first_epoch; epoch <= last; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.rng_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch));
    SeedableRng rng(rec.rng_seed);
    const std::vector<std::size_t> order = epoch_order(set.scenes.size(), rng);
    const double step = step_size_at(cfg.adam, epoch);

    losses::LossBreakdown sum;
    int batch = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Scene> scenes;
      for (std::size_t k = begin; k < end; ++k) {
        for (int s = 0; s < cfg.eot_samples; ++s) scenes.push_back(set.scenes[order[k]]);
      }
      const losses::LossBreakdown b = step_batch(st, scenes, det, cfg, palette, rng, step, epoch, batch);
      const double n = static_cast<double>(end - begin);
      sum.detection += n * b.detection;
      sum.tv += n * b.tv;
      sum.nps += n * b.nps;
      sum.disappear += n * b.disappear;
      sum.total += n * b.total;
    }
    const double n = static_cast<double>(order.size());
    rec.mean = {sum.detection / n, sum.tv / n, sum.nps / n, sum.disappear / n, sum.total / n};
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    st.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    const bool early = cfg.stop_threshold > 0 && rec.mean.total < cfg.stop_threshold;
    const bool finished = early || epoch == cfg.epochs;
    if (finished || epoch == last || epoch % cfg.checkpoint_every == 0) {
      write_checkpoint(st, cfg, set, epoch, finished, options.checkpoint_dir, history);
    }
    if (early) {
      history.stopped_early = true;
      break;
    }
  }
  history.epochs = st.history;
  return {Patch(st.pixels, st.aspect_hint), std::move(history)};
}

void check_train_set(const SceneSet& set) {
  if (set.scenes.empty() || set.box_count() == 0) {
    throw std::invalid_argument("train set has no annotated person boxes");
  }
}

}  // namespace

TrainResult train(const Patch& init, const SceneSet& train_set, const detector::DetectorAdapter& detector,
                  const TrainConfig& cfg, const RunOptions& options) {
  validate(cfg);
  check_train_set(train_set);
  RunState st{clamp_unit(init.pixels()), init.aspect_hint(),
              ad::Adam(init.pixels().size(), {cfg.adam.beta1, cfg.adam.beta2, cfg.adam.eps}), {}};
  return run(std::move(st), 1, train_set, detector, cfg, options);
}

TrainResult resume(const std::filesystem::path& checkpoint, const SceneSet& train_set,
                   const detector::DetectorAdapter& detector, const RunOptions& options) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  if (corpus_hash(train_set) != ckpt.corpus_hash) {
    throw std::runtime_error("corpus hash mismatch: the checkpoint was trained on a different scene set");
  }
  const TrainConfig& cfg = ckpt.config;
  validate(cfg);
  check_train_set(train_set);
  if (ckpt.finished || ckpt.epoch >= cfg.epochs) {
    TrainHistory history;
    history.epochs = ckpt.history;
    history.stopped_early = ckpt.finished && ckpt.epoch < cfg.epochs;
    return {ckpt.patch, std::move(history)};
  }
  RunState st{ckpt.patch.pixels(), ckpt.patch.aspect_hint(),
              ad::Adam(ckpt.patch.pixels().size(), {cfg.adam.beta1, cfg.adam.beta2, cfg.adam.eps}), ckpt.history};
  st.adam.restore(ckpt.adam_steps, std::move(ckpt.adam_m), std::move(ckpt.adam_v));
  return run(std::move(st), ckpt.epoch + 1, train_set, detector, cfg, options);
}

}  // namespace cloak::trainer
