#pragma once

#include <cstdint>
#include <string>

#include "cloak/core/key_tree.hpp"
#include "cloak/core/palette.hpp"
#include "cloak/core/rng.hpp"

namespace cloak::transforms {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

// One concrete draw from the conventional (R) and 3D (U) families plus the
// placement parameters. Default-constructed values are the identity.
struct TransformParams {
  // R: conventional
  double scale = 1.0;
  double rotate_deg = 0.0;
  double brightness_add = 0.0;
  double contrast_mul = 1.0;
  std::uint64_t noise_seed = 0;
  double noise_amp = 0.0;
  // U: 3D
  int wrinkle_grid = 5;
  double wrinkle_amp_px = 0.0;
  std::uint64_t wrinkle_seed = 0;
  double curvature = 0.0;  // max angular half-extent of the cylinder, radians
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  double occlusion_fraction = 0.0;
  std::uint64_t occlusion_seed = 0;
  Rgb occlusion_fill{0.0, 0.0, 0.0};
  // placement
  double alpha = 0.6;     // patch width / person box width
  double v_anchor = 0.45; // patch center, fraction of box height from top

  friend bool operator==(const TransformParams&, const TransformParams&) = default;
};

enum class OcclusionFill { kRandom, kBlack };

// Sampling ranges (uniform) and per-sub-transform enable flags.
struct EotConfig {
  bool scale_enabled = true;
  Range scale{0.8, 1.2};
  bool rotate_enabled = true;
  Range rotate_deg{-20.0, 20.0};
  bool brightness_enabled = true;
  Range brightness{-0.1, 0.1};
  bool contrast_enabled = true;
  Range contrast{0.8, 1.2};
  bool noise_enabled = true;
  Range noise_amp{0.1, 0.1};

  bool wrinkle_enabled = true;
  int wrinkle_grid = 5;
  Range wrinkle_amp_px{0.0, 6.0};
  bool radian_enabled = true;
  Range curvature{0.0, 0.5235987755982988};  // deflection <= 30 degrees
  bool angle_enabled = true;
  Range yaw_deg{-30.0, 30.0};
  Range pitch_deg{-10.0, 10.0};
  bool occlusion_enabled = true;
  Range occlusion_fraction{0.0, 0.25};
  OcclusionFill occlusion_fill = OcclusionFill::kRandom;

  Range alpha{0.6, 0.6};
  Range v_anchor{0.45, 0.45};

  bool any_enabled() const;
  friend bool operator==(const EotConfig&, const EotConfig&) = default;
};

// Checks range ordering and bounds (scale > 0, occlusion within [0, 0.3],
// wrinkle grid >= 2). Does not require any sub-transform to be enabled.
void validate(const EotConfig& cfg);

// Six variants: conventional, radian, angle, occlusion, wrinkle, combined.
// Every variant includes the conventional family.
EotConfig eot_preset(const std::string& name);

// Draws each enabled field independently and uniformly; disabled
// sub-transforms keep identity values and consume no randomness.
TransformParams sample_transform_params(const EotConfig& cfg, SeedableRng& rng);

// Key-tree form under `prefix` (e.g. "eot"): <prefix>.preset, then
// <prefix>.<name>.enabled / .min / .max per sub-transform, plus
// <prefix>.wrinkle.grid and <prefix>.occlusion.fill (random|black).
// A preset key is applied first; explicit keys override it.
void write_eot_keys(KeyTree& tree, const std::string& prefix, const EotConfig& cfg);
EotConfig read_eot_keys(const KeyTree& tree, const std::string& prefix, EotConfig base = {});

}  // namespace cloak::transforms
