#include "cloak/transforms/params.hpp"

#include <stdexcept>

namespace cloak::transforms {
namespace {

void check(const Range& r, const char* name) {
  if (!(r.lo <= r.hi)) throw std::invalid_argument(std::string("EOT range '") + name + "' has lo > hi");
}

double draw(SeedableRng& rng, const Range& r) { return r.lo == r.hi ? r.lo : rng.uniform(r.lo, r.hi); }

}  // namespace

bool EotConfig::any_enabled() const {
  return scale_enabled || rotate_enabled || brightness_enabled || contrast_enabled || noise_enabled ||
         wrinkle_enabled || radian_enabled || angle_enabled || occlusion_enabled;
}

void validate(const EotConfig& cfg) {
  check(cfg.scale, "scale");
  check(cfg.rotate_deg, "rotate");
  check(cfg.brightness, "brightness");
  check(cfg.contrast, "contrast");
  check(cfg.noise_amp, "noise");
  check(cfg.wrinkle_amp_px, "wrinkle");
  check(cfg.curvature, "curvature");
  check(cfg.yaw_deg, "yaw");
  check(cfg.pitch_deg, "pitch");
  check(cfg.occlusion_fraction, "occlusion");
  check(cfg.alpha, "alpha");
  check(cfg.v_anchor, "v_anchor");
  if (!(cfg.scale.lo > 0)) throw std::invalid_argument("EOT scale must be > 0");
  if (cfg.occlusion_fraction.lo < 0 || cfg.occlusion_fraction.hi > 0.3) {
    throw std::invalid_argument("EOT occlusion fraction must lie in [0, 0.3]");
  }
  if (cfg.noise_amp.lo < 0 || cfg.wrinkle_amp_px.lo < 0 || cfg.curvature.lo < 0) {
    throw std::invalid_argument("EOT noise, wrinkle and curvature ranges must be non-negative");
  }
  if (cfg.wrinkle_grid < 2) throw std::invalid_argument("EOT wrinkle grid must be >= 2");
  if (!(cfg.alpha.lo > 0)) throw std::invalid_argument("EOT alpha must be > 0");
}

EotConfig eot_preset(const std::string& name) {
  EotConfig cfg;
  cfg.wrinkle_enabled = cfg.radian_enabled = cfg.angle_enabled = cfg.occlusion_enabled = false;
  if (name == "conventional") return cfg;
  if (name == "radian") cfg.radian_enabled = true;
  else if (name == "angle") cfg.angle_enabled = true;
  else if (name == "occlusion") cfg.occlusion_enabled = true;
  else if (name == "wrinkle") cfg.wrinkle_enabled = true;
  else if (name == "combined") cfg.wrinkle_enabled = cfg.radian_enabled = cfg.angle_enabled = cfg.occlusion_enabled = true;
  else throw std::invalid_argument("unknown EOT preset '" + name + "'");
  return cfg;
}

TransformParams sample_transform_params(const EotConfig& cfg, SeedableRng& rng) {
  validate(cfg);
  TransformParams p;
  if (cfg.scale_enabled) p.scale = draw(rng, cfg.scale);
  if (cfg.rotate_enabled) p.rotate_deg = draw(rng, cfg.rotate_deg);
  if (cfg.brightness_enabled) p.brightness_add = draw(rng, cfg.brightness);
  if (cfg.contrast_enabled) p.contrast_mul = draw(rng, cfg.contrast);
  if (cfg.noise_enabled) {
    p.noise_amp = draw(rng, cfg.noise_amp);
    p.noise_seed = rng.next_u64();
  }
  p.wrinkle_grid = cfg.wrinkle_grid;
  if (cfg.wrinkle_enabled) {
    p.wrinkle_amp_px = draw(rng, cfg.wrinkle_amp_px);
    p.wrinkle_seed = rng.next_u64();
  }
  if (cfg.radian_enabled) p.curvature = draw(rng, cfg.curvature);
  if (cfg.angle_enabled) {
    p.yaw_deg = draw(rng, cfg.yaw_deg);
    p.pitch_deg = draw(rng, cfg.pitch_deg);
  }
  if (cfg.occlusion_enabled) {
    p.occlusion_fraction = draw(rng, cfg.occlusion_fraction);
    p.occlusion_seed = rng.next_u64();
    if (cfg.occlusion_fill == OcclusionFill::kRandom) {
      for (double& c : p.occlusion_fill) c = rng.uniform();
    }
  }
  p.alpha = draw(rng, cfg.alpha);
  p.v_anchor = draw(rng, cfg.v_anchor);
  return p;
}

}  // namespace cloak::transforms

namespace cloak::transforms {
namespace {

struct RangeField {
  const char* name;
  bool* enabled;
  Range* range;
};

template <typename Cfg>
std::vector<RangeField> range_fields(Cfg& cfg) {
  // alpha and v_anchor are always drawn; their enable flag is a dummy.
  static bool always = true;
  return {{"scale", &cfg.scale_enabled, &cfg.scale},
          {"rotate_deg", &cfg.rotate_enabled, &cfg.rotate_deg},
          {"brightness", &cfg.brightness_enabled, &cfg.brightness},
          {"contrast", &cfg.contrast_enabled, &cfg.contrast},
          {"noise", &cfg.noise_enabled, &cfg.noise_amp},
          {"wrinkle", &cfg.wrinkle_enabled, &cfg.wrinkle_amp_px},
          {"radian", &cfg.radian_enabled, &cfg.curvature},
          {"yaw_deg", &cfg.angle_enabled, &cfg.yaw_deg},
          {"pitch_deg", &cfg.angle_enabled, &cfg.pitch_deg},
          {"occlusion", &cfg.occlusion_enabled, &cfg.occlusion_fraction},
          {"alpha", &always, &cfg.alpha},
          {"v_anchor", &always, &cfg.v_anchor}};
}

bool has_enable_key(const std::string& name) {
  return name != "alpha" && name != "v_anchor" && name != "pitch_deg";
}

}  // namespace

void write_eot_keys(KeyTree& tree, const std::string& prefix, const EotConfig& cfg) {
  EotConfig copy = cfg;
  for (const auto& f : range_fields(copy)) {
    const std::string key = prefix + "." + f.name;
    // yaw and pitch share the angle flag, stored once under yaw_deg.
    if (has_enable_key(f.name)) tree.set(key + ".enabled", *f.enabled);
    tree.set(key + ".min", f.range->lo);
    tree.set(key + ".max", f.range->hi);
  }
  tree.set(prefix + ".wrinkle.grid", static_cast<std::int64_t>(cfg.wrinkle_grid));
  tree.set(prefix + ".occlusion.fill", std::string(cfg.occlusion_fill == OcclusionFill::kBlack ? "black" : "random"));
}

EotConfig read_eot_keys(const KeyTree& tree, const std::string& prefix, EotConfig base) {
  if (const auto preset = tree.find(prefix + ".preset")) base = eot_preset(*preset);
  for (const auto& f : range_fields(base)) {
    const std::string key = prefix + "." + f.name;
    if (has_enable_key(f.name)) *f.enabled = tree.get_bool(key + ".enabled", *f.enabled);
    f.range->lo = tree.get_double(key + ".min", f.range->lo);
    f.range->hi = tree.get_double(key + ".max", f.range->hi);
  }
  base.wrinkle_grid = static_cast<int>(tree.get_int(prefix + ".wrinkle.grid", base.wrinkle_grid));
  const std::string fill = tree.get_string(prefix + ".occlusion.fill",
                                           base.occlusion_fill == OcclusionFill::kBlack ? "black" : "random");
  if (fill == "black") base.occlusion_fill = OcclusionFill::kBlack;
  else if (fill == "random") base.occlusion_fill = OcclusionFill::kRandom;
  else throw std::invalid_argument("unknown occlusion fill '" + fill + "'");
  validate(base);
  return base;
}

}  // namespace cloak::transforms
