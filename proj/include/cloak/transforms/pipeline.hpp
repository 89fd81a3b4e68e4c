#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cloak/autodiff/tape.hpp"
#include "cloak/core/patch.hpp"
#include "cloak/core/scene.hpp"
#include "cloak/transforms/params.hpp"

namespace cloak::transforms {

// A transformed patch on its own canvas. mask marks pixels that carry
// patch content; occluded marks pixels replaced by the occluder fill.
struct PatchLayer {
  ad::Var image;
  Tensor mask;      // {H, W} 0/1
  Tensor occluded;  // {H, W} 0/1
  double aspect_hint = kDefaultAspectHint;
};

// Integer pixel rectangle of a composited patch.
struct PixelRect {
  int x0 = 0, y0 = 0, width = 0, height = 0;
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

// Scale, rotation, contrast, brightness and uniform noise, then
// clamp_unit. Pixels outside the rotated/scaled source get mask 0 and value 0.
PatchLayer apply_conventional(ad::Tape& tape, ad::Var patch, const TransformParams& p,
                              double aspect_hint = kDefaultAspectHint);

// Wrinkle, radian, angle, occlusion, in that order. Input is the output of
// apply_conventional.
PatchLayer apply_3d(ad::Tape& tape, const PatchLayer& in, const TransformParams& p);

// Target rectangle for a patch layer on a person box in an image of the
// given size. Throws std::invalid_argument for a zero-pixel target.
PixelRect placement_rect(int image_height, int image_width, const PersonBox& box,
                         const TransformParams& p, double aspect_hint);

// Bilinearly resizes the layer into placement_rect and composites it where
// the layer mask is 1. Throws std::invalid_argument if the rectangle is
// degenerate or lies fully outside the image.
ad::Var place_patch(ad::Tape& tape, ad::Var scene_image, const PatchLayer& layer, const PersonBox& box,
                    const TransformParams& p, PixelRect* placed = nullptr);

struct ParamsRecord {
  std::string scene_id;
  int box_index = 0;
  TransformParams params;
  friend bool operator==(const ParamsRecord&, const ParamsRecord&) = default;
};

struct BatchResult {
  std::vector<ad::Var> images;                  // one per scene
  std::vector<std::vector<PixelRect>> regions;  // composited rectangles per scene
  std::vector<ParamsRecord> log;
  std::vector<std::string> warnings;
};

// R then U then placement for every (scene, box), with params drawn from a
// stream split per scene index so the result does not depend on schedule.
// Placement failures skip that box with a warning.
BatchResult batch_apply(ad::Tape& tape, ad::Var patch, double aspect_hint, std::span<const Scene> scenes,
                        const EotConfig& cfg, SeedableRng& rng);

// Re-runs a batch from a params log.
BatchResult replay_batch(ad::Tape& tape, ad::Var patch, double aspect_hint, std::span<const Scene> scenes,
                         const std::vector<ParamsRecord>& log);

// Value-level conveniences.
struct LayerValue {
  Tensor image;
  Tensor mask;
  Tensor occluded;
};
LayerValue apply_conventional(const Patch& patch, const TransformParams& p);
LayerValue apply_transforms(const Patch& patch, const TransformParams& p);

struct BatchImages {
  std::vector<Tensor> images;
  std::vector<std::vector<PixelRect>> regions;
  std::vector<ParamsRecord> log;
  std::vector<std::string> warnings;
};
BatchImages batch_apply(std::span<const Scene> scenes, const Patch& patch, const EotConfig& cfg,
                        SeedableRng& rng);
BatchImages replay_batch(std::span<const Scene> scenes, const Patch& patch,
                         const std::vector<ParamsRecord>& log);

// JSON-lines params log.
void write_params_log(const std::filesystem::path& path, const std::vector<ParamsRecord>& log);
std::vector<ParamsRecord> read_params_log(const std::filesystem::path& path);
std::string params_to_json(const ParamsRecord& record);
ParamsRecord params_from_json(const std::string& line);

}  // namespace cloak::transforms
