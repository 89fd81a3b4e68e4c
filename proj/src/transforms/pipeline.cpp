#include "cloak/transforms/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "cloak/autodiff/ops.hpp"
#include "cloak/core/log.hpp"
#include "cloak/transforms/warps.hpp"

namespace cloak::transforms {
namespace {

constexpr double kFlatCurvature = 1e-9;

Tensor expand_to_channels(const Tensor& mask, int channels) {
  Tensor out = Tensor::image(mask.dim(0), mask.dim(1), channels);
  for (std::size_t p = 0; p < mask.size(); ++p) {
    for (int c = 0; c < channels; ++c) out[p * channels + c] = mask[p];
  }
  return out;
}

bool all_ones(const Tensor& mask) {
  return std::all_of(mask.data().begin(), mask.data().end(), [](double v) { return v >= 0.5; });
}

void warp_layer(ad::Tape& tape, PatchLayer& layer, const ad::Warp& warp) {
  layer.image = ad::resample(tape, layer.image, warp);
  layer.mask = warp.apply_mask(layer.mask);
  layer.occluded = warp.apply_mask(layer.occluded);
  // apply_mask marks a pixel valid only if all its taps are; occluded pixels
  // must instead follow any occluded tap, but occlusion is the last step so
  // an incoming occlusion mask is always empty here.
  layer.occluded.fill(0.0);
}

void zero_invalid(ad::Tape& tape, PatchLayer& layer) {
  if (!all_ones(layer.mask)) {
    layer.image = ad::mul_const(tape, layer.image, expand_to_channels(layer.mask, 3));
  }
}

}  // namespace

PatchLayer apply_conventional(ad::Tape& tape, ad::Var patch, const TransformParams& p, double aspect_hint) {
  const Tensor& v = tape.value(patch);
  const int h = v.height(), w = v.width();
  PatchLayer layer{patch, ad::full_mask(h, w), ad::full_mask(h, w, 0.0), aspect_hint};
  if (p.scale != 1.0 || p.rotate_deg != 0.0) {
    if (!(p.scale > 0)) throw std::invalid_argument("transform scale must be > 0");
    warp_layer(tape, layer, rotate_scale_warp(h, w, p.scale, p.rotate_deg));
  }
  if (p.contrast_mul != 1.0) layer.image = ad::scale(tape, layer.image, p.contrast_mul);
  if (p.brightness_add != 0.0) layer.image = ad::add_scalar(tape, layer.image, p.brightness_add);
  if (p.noise_amp > 0.0) {
    SeedableRng rng(p.noise_seed);
    Tensor noise = Tensor::image(h, w);
    for (double& n : noise.data()) n = rng.uniform(-p.noise_amp, p.noise_amp);
    layer.image = ad::add_const(tape, layer.image, noise);
  }
  layer.image = ad::clamp_unit(tape, layer.image);
  zero_invalid(tape, layer);
  return layer;
}

PatchLayer apply_3d(ad::Tape& tape, const PatchLayer& in, const TransformParams& p) {
  PatchLayer layer = in;
  const Tensor& v = tape.value(in.image);
  const int h = v.height(), w = v.width();

  if (p.wrinkle_amp_px > 0.0) {
    const WrinkleField field = wrinkle_field(h, w, p.wrinkle_grid, p.wrinkle_amp_px, p.wrinkle_seed);
    warp_layer(tape, layer, displacement_warp(field));
    layer.image = ad::mul_const(tape, layer.image, expand_to_channels(wrinkle_shading(field), 3));
    layer.image = ad::clamp_unit(tape, layer.image);
  }
  if (std::abs(p.curvature) >= kFlatCurvature) {
    warp_layer(tape, layer, radian_warp(h, w, p.curvature));
    layer.image = ad::mul_const(tape, layer.image, expand_to_channels(radian_shading(h, w, p.curvature), 3));
  }
  if (p.yaw_deg != 0.0 || p.pitch_deg != 0.0) {
    warp_layer(tape, layer, angle_warp(h, w, p.yaw_deg, p.pitch_deg));
  }
  if (p.occlusion_fraction > 0.0) {
    Tensor occ = occlusion_mask(h, w, p.occlusion_fraction, p.occlusion_seed);
    for (std::size_t i = 0; i < occ.size(); ++i) occ[i] = occ[i] * layer.mask[i];
    Tensor fill = Tensor::image(h, w);
    for (std::size_t i = 0; i < occ.size(); ++i) {
      for (int c = 0; c < 3; ++c) fill[i * 3 + c] = p.occlusion_fill[static_cast<std::size_t>(c)];
    }
    layer.image = ad::select(tape, layer.image, tape.constant(std::move(fill)), occ);
    layer.occluded = std::move(occ);
  }
  zero_invalid(tape, layer);
  return layer;
}

PixelRect placement_rect(int image_height, int image_width, const PersonBox& box, const TransformParams& p,
                         double aspect_hint) {
  const double box_w = box.w * image_width;
  const double box_h = box.h * image_height;
  PixelRect r;
  r.width = static_cast<int>(std::lround(p.alpha * box_w));
  r.height = static_cast<int>(std::lround(r.width * aspect_hint));
  if (r.width < 1 || r.height < 1) throw std::invalid_argument("degenerate patch placement (zero pixels)");
  const double center_x = box.cx * image_width;
  const double center_y = (box.cy - box.h / 2) * image_height + p.v_anchor * box_h;
  r.x0 = static_cast<int>(std::lround(center_x - r.width / 2.0));
  r.y0 = static_cast<int>(std::lround(center_y - r.height / 2.0));
  return r;
}

ad::Var place_patch(ad::Tape& tape, ad::Var scene_image, const PatchLayer& layer, const PersonBox& box,
                    const TransformParams& p, PixelRect* placed) {
  const Tensor& scene = tape.value(scene_image);
  const Tensor& src = tape.value(layer.image);
  const int hs = scene.height(), ws = scene.width();
  const int hp = src.height(), wp = src.width();
  const PixelRect r = placement_rect(hs, ws, box, p, layer.aspect_hint);
  if (r.x0 >= ws || r.y0 >= hs || r.x0 + r.width <= 0 || r.y0 + r.height <= 0) {
    throw std::invalid_argument("patch placement lies fully outside the image");
  }

  ad::Warp warp = ad::Warp::empty(hp, wp, hs, ws);
  const double rx = static_cast<double>(wp) / r.width;
  const double ry = static_cast<double>(hp) / r.height;
  for (int y = std::max(r.y0, 0); y < std::min(r.y0 + r.height, hs); ++y) {
    const double sy = std::clamp((y - r.y0 + 0.5) * ry - 0.5, 0.0, hp - 1.0);
    for (int x = std::max(r.x0, 0); x < std::min(r.x0 + r.width, ws); ++x) {
      const double sx = std::clamp((x - r.x0 + 0.5) * rx - 0.5, 0.0, wp - 1.0);
      ad::bilinear_taps(sx, sy, hp, wp, warp.taps[static_cast<std::size_t>(y) * ws + x]);
    }
  }
  if (placed) *placed = r;
  const Tensor composite = warp.apply_mask(layer.mask);
  return ad::select(tape, scene_image, ad::resample(tape, layer.image, warp), composite);
}

namespace {

void composite_box(ad::Tape& tape, ad::Var patch, double aspect_hint, const Scene& scene, int box_index,
                   const TransformParams& params, ad::Var& image, std::vector<PixelRect>& regions,
                   std::vector<std::string>& warnings) {
  try {
    const PatchLayer layer = apply_3d(tape, apply_conventional(tape, patch, params, aspect_hint), params);
    PixelRect rect;
    image = place_patch(tape, image, layer, scene.person_boxes[static_cast<std::size_t>(box_index)], params, &rect);
    regions.push_back(rect);
  } catch (const std::invalid_argument& e) {
    std::string msg = "scene '" + scene.id + "' box " + std::to_string(box_index) + " skipped: " + e.what();
    log_warning(msg);
    warnings.push_back(std::move(msg));
  }
}

}  // namespace

BatchResult batch_apply(ad::Tape& tape, ad::Var patch, double aspect_hint, std::span<const Scene> scenes,
                        const EotConfig& cfg, SeedableRng& rng) {
  validate(cfg);
  const std::uint64_t batch_seed = rng.next_u64();
  BatchResult out;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Scene& scene = scenes[i];
    ad::Var image = tape.constant(scene.image);
    std::vector<PixelRect> regions;
    for (std::size_t j = 0; j < scene.person_boxes.size(); ++j) {
      SeedableRng local(mix_seed(batch_seed, i, j));
      const TransformParams params = sample_transform_params(cfg, local);
      out.log.push_back({scene.id, static_cast<int>(j), params});
      composite_box(tape, patch, aspect_hint, scene, static_cast<int>(j), params, image, regions, out.warnings);
    }
    out.images.push_back(image);
    out.regions.push_back(std::move(regions));
  }
  return out;
}

BatchResult replay_batch(ad::Tape& tape, ad::Var patch, double aspect_hint, std::span<const Scene> scenes,
                         const std::vector<ParamsRecord>& log) {
  BatchResult out;
  for (const Scene& scene : scenes) {
    ad::Var image = tape.constant(scene.image);
    std::vector<PixelRect> regions;
    for (const auto& rec : log) {
      if (rec.scene_id != scene.id) continue;
      if (rec.box_index < 0 || rec.box_index >= static_cast<int>(scene.person_boxes.size())) {
        throw std::invalid_argument("params log refers to missing box " + std::to_string(rec.box_index) +
                                    " of scene '" + scene.id + "'");
      }
      out.log.push_back(rec);
      composite_box(tape, patch, aspect_hint, scene, rec.box_index, rec.params, image, regions, out.warnings);
    }
    out.images.push_back(image);
    out.regions.push_back(std::move(regions));
  }
  return out;
}

namespace {

LayerValue to_value(const ad::Tape& tape, const PatchLayer& layer) {
  return {tape.value(layer.image), layer.mask, layer.occluded};
}

BatchImages to_images(const ad::Tape& tape, BatchResult&& r) {
  BatchImages out;
  for (ad::Var v : r.images) out.images.push_back(tape.value(v));
  out.regions = std::move(r.regions);
  out.log = std::move(r.log);
  out.warnings = std::move(r.warnings);
  return out;
}

}  // namespace

LayerValue apply_conventional(const Patch& patch, const TransformParams& p) {
  ad::Tape tape;
  return to_value(tape, apply_conventional(tape, tape.constant(patch.pixels()), p, patch.aspect_hint()));
}

LayerValue apply_transforms(const Patch& patch, const TransformParams& p) {
  ad::Tape tape;
  const PatchLayer conv = apply_conventional(tape, tape.constant(patch.pixels()), p, patch.aspect_hint());
  return to_value(tape, apply_3d(tape, conv, p));
}

BatchImages batch_apply(std::span<const Scene> scenes, const Patch& patch, const EotConfig& cfg, SeedableRng& rng) {
  ad::Tape tape;
  return to_images(tape, batch_apply(tape, tape.constant(patch.pixels()), patch.aspect_hint(), scenes, cfg, rng));
}

BatchImages replay_batch(std::span<const Scene> scenes, const Patch& patch, const std::vector<ParamsRecord>& log) {
  ad::Tape tape;
  return to_images(tape, replay_batch(tape, tape.constant(patch.pixels()), patch.aspect_hint(), scenes, log));
}

std::string params_to_json(const ParamsRecord& r) {
  const TransformParams& p = r.params;
  const nlohmann::json j = {
      {"scene_id", r.scene_id},
      {"box_index", r.box_index},
      {"order", "conventional>3d>placement"},
      {"scale", p.scale},
      {"rotate_deg", p.rotate_deg},
      {"brightness_add", p.brightness_add},
      {"contrast_mul", p.contrast_mul},
      {"noise_seed", p.noise_seed},
      {"noise_amp", p.noise_amp},
      {"wrinkle_grid", p.wrinkle_grid},
      {"wrinkle_amp_px", p.wrinkle_amp_px},
      {"wrinkle_seed", p.wrinkle_seed},
      {"curvature", p.curvature},
      {"yaw_deg", p.yaw_deg},
      {"pitch_deg", p.pitch_deg},
      {"occlusion_fraction", p.occlusion_fraction},
      {"occlusion_seed", p.occlusion_seed},
      {"occlusion_fill", p.occlusion_fill},
      {"alpha", p.alpha},
      {"v_anchor", p.v_anchor},
  };
  return j.dump();
}

ParamsRecord params_from_json(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    ParamsRecord r;
    r.scene_id = j.at("scene_id");
    r.box_index = j.at("box_index");
    TransformParams& p = r.params;
    p.scale = j.at("scale");
    p.rotate_deg = j.at("rotate_deg");
    p.brightness_add = j.at("brightness_add");
    p.contrast_mul = j.at("contrast_mul");
    p.noise_seed = j.at("noise_seed");
    p.noise_amp = j.at("noise_amp");
    p.wrinkle_grid = j.at("wrinkle_grid");
    p.wrinkle_amp_px = j.at("wrinkle_amp_px");
    p.wrinkle_seed = j.at("wrinkle_seed");
    p.curvature = j.at("curvature");
    p.yaw_deg = j.at("yaw_deg");
    p.pitch_deg = j.at("pitch_deg");
    p.occlusion_fraction = j.at("occlusion_fraction");
    p.occlusion_seed = j.at("occlusion_seed");
    p.occlusion_fill = j.at("occlusion_fill").get<Rgb>();
    p.alpha = j.at("alpha");
    p.v_anchor = j.at("v_anchor");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed params log record: ") + e.what());
  }
}

void write_params_log(const std::filesystem::path& path, const std::vector<ParamsRecord>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write params log: " + path.string());
  for (const auto& r : log) out << params_to_json(r) << '\n';
}

std::vector<ParamsRecord> read_params_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read params log: " + path.string());
  std::vector<ParamsRecord> log;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) log.push_back(params_from_json(line));
  }
  return log;
}

}  // namespace cloak::transforms
