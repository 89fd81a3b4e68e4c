#include <cmath>
#include <stdexcept>

#include "cloak/trainer/trainer.hpp"

namespace cloak::trainer {

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  if (cfg.eot_samples < 1) throw std::invalid_argument("train.eot_samples must be >= 1");
  if (!(cfg.adam.step_size >= 0) || !std::isfinite(cfg.adam.step_size)) {
    throw std::invalid_argument("adam.step_size must be finite and >= 0");
  }
  if (!(cfg.adam.beta1 >= 0 && cfg.adam.beta1 < 1) || !(cfg.adam.beta2 >= 0 && cfg.adam.beta2 < 1)) {
    throw std::invalid_argument("adam betas must lie in [0, 1)");
  }
  if (!(cfg.adam.eps > 0)) throw std::invalid_argument("adam.eps must be > 0");
  if (cfg.adam.decay_every < 0 || !(cfg.adam.decay_factor > 0)) {
    throw std::invalid_argument("adam decay settings out of range");
  }
  if (!std::isfinite(cfg.stop_threshold) || cfg.stop_threshold < 0) {
    throw std::invalid_argument("train.stop_threshold must be finite and >= 0");
  }
  if (cfg.checkpoint_every < 1) throw std::invalid_argument("train.checkpoint_every must be >= 1");
  transforms::validate(cfg.eot);
  if (!cfg.eot.any_enabled()) throw std::invalid_argument("at least one EOT sub-transform must be enabled");
  losses::validate(cfg.weights);
}

KeyTree to_key_tree(const TrainConfig& cfg) {
  KeyTree t;
  t.set("train.epochs", static_cast<std::int64_t>(cfg.epochs));
  t.set("train.batch_size", static_cast<std::int64_t>(cfg.batch_size));
  t.set("train.eot_samples", static_cast<std::int64_t>(cfg.eot_samples));
  t.set("train.stop_threshold", cfg.stop_threshold);
  t.set("train.seed", std::to_string(cfg.seed));
  t.set("train.checkpoint_every", static_cast<std::int64_t>(cfg.checkpoint_every));
  t.set("train.score_mode",
        std::string(cfg.score_mode == detector::ScoreMode::kClassOnly ? "class" : "objectness_x_class"));
  t.set("train.palette", cfg.palette);
  t.set("adam.step_size", cfg.adam.step_size);
  t.set("adam.beta1", cfg.adam.beta1);
  t.set("adam.beta2", cfg.adam.beta2);
  t.set("adam.eps", cfg.adam.eps);
  t.set("adam.decay_every", static_cast<std::int64_t>(cfg.adam.decay_every));
  t.set("adam.decay_factor", cfg.adam.decay_factor);
  t.set("weights.lambda_tv", cfg.weights.lambda_tv);
  t.set("weights.lambda_nps", cfg.weights.lambda_nps);
  t.set("weights.mu_disappear", cfg.weights.mu_disappear);
  transforms::write_eot_keys(t, "eot", cfg.eot);
  return t;
}

TrainConfig train_config_from(const KeyTree& t, TrainConfig c) {
  c.epochs = static_cast<int>(t.get_int("train.epochs", c.epochs));
  c.batch_size = static_cast<int>(t.get_int("train.batch_size", c.batch_size));
  c.eot_samples = static_cast<int>(t.get_int("train.eot_samples", c.eot_samples));
  c.stop_threshold = t.get_double("train.stop_threshold", c.stop_threshold);
  c.seed = t.get_u64("train.seed", c.seed);
  c.checkpoint_every = static_cast<int>(t.get_int("train.checkpoint_every", c.checkpoint_every));
  const std::string mode = t.get_string(
      "train.score_mode", c.score_mode == detector::ScoreMode::kClassOnly ? "class" : "objectness_x_class");
  if (mode == "class") c.score_mode = detector::ScoreMode::kClassOnly;
  else if (mode == "objectness_x_class") c.score_mode = detector::ScoreMode::kObjectnessTimesClass;
  else throw std::invalid_argument("unknown train.score_mode '" + mode + "'");
  c.palette = t.get_string("train.palette", c.palette);
  c.adam.step_size = t.get_double("adam.step_size", c.adam.step_size);
  c.adam.beta1 = t.get_double("adam.beta1", c.adam.beta1);
  c.adam.beta2 = t.get_double("adam.beta2", c.adam.beta2);
  c.adam.eps = t.get_double("adam.eps", c.adam.eps);
  c.adam.decay_every = static_cast<int>(t.get_int("adam.decay_every", c.adam.decay_every));
  c.adam.decay_factor = t.get_double("adam.decay_factor", c.adam.decay_factor);
  c.weights.lambda_tv = t.get_double("weights.lambda_tv", c.weights.lambda_tv);
  c.weights.lambda_nps = t.get_double("weights.lambda_nps", c.weights.lambda_nps);
  c.weights.mu_disappear = t.get_double("weights.mu_disappear", c.weights.mu_disappear);
  c.eot = transforms::read_eot_keys(t, "eot", c.eot);
  return c;
}

std::uint64_t config_hash(const TrainConfig& cfg) { return to_key_tree(cfg).hash(); }

Palette resolve_palette(const TrainConfig& cfg) {
  return cfg.palette == "default" ? default_palette() : load_palette(cfg.palette);
}

double step_size_at(const AdamSettings& adam, int epoch) {
  if (adam.decay_every <= 0) return adam.step_size;
  return adam.step_size * std::pow(adam.decay_factor, (epoch - 1) / adam.decay_every);
}

}  // namespace cloak::trainer
