#include "cloak/core/patch.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cloak/core/image_io.hpp"
#include "cloak/core/rng.hpp"

namespace cloak {

Patch::Patch(Tensor pixels, double aspect_hint)
    : pixels_(std::move(pixels)), aspect_hint_(aspect_hint) {
  if (pixels_.rank() != 3 || pixels_.channels() != 3) {
    throw std::invalid_argument("patch pixels must be HxWx3");
  }
  if (pixels_.height() < 2 || pixels_.width() < 2) {
    throw std::invalid_argument("patch must be at least 2x2");
  }
  if (!(aspect_hint_ > 0.0) || !std::isfinite(aspect_hint_)) {
    throw std::invalid_argument("patch aspect hint must be positive");
  }
  for (double v : pixels_.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("patch pixel outside [0, 1]");
  }
}

Tensor clamp_unit(Tensor values) {
  for (double& v : values.data()) v = std::min(1.0, std::max(0.0, v));
  return values;
}

Patch clamp_unit(const Patch& patch) {
  return Patch(clamp_unit(patch.pixels()), patch.aspect_hint());
}

Tensor resize_bilinear(const Tensor& image, int height, int width) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("resize target must be positive");
  const int sh = image.height();
  const int sw = image.width();
  const int ch = image.channels();
  Tensor out = Tensor::image(height, width, ch);
  const double ry = static_cast<double>(sh) / height;
  const double rx = static_cast<double>(sw) / width;
  for (int y = 0; y < height; ++y) {
    const double sy = std::clamp((y + 0.5) * ry - 0.5, 0.0, static_cast<double>(sh - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, sh - 1);
    const double fy = sy - y0;
    for (int x = 0; x < width; ++x) {
      const double sx = std::clamp((x + 0.5) * rx - 0.5, 0.0, static_cast<double>(sw - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, sw - 1);
      const double fx = sx - x0;
      for (int c = 0; c < ch; ++c) {
        const double top = image.at(y0, x0, c) * (1 - fx) + image.at(y0, x1, c) * fx;
        const double bottom = image.at(y1, x0, c) * (1 - fx) + image.at(y1, x1, c) * fx;
        out.at(y, x, c) = top * (1 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

namespace {

struct InitVisitor {
  int height;
  int width;

  Tensor operator()(const RandomInit& init) const {
    SeedableRng rng(init.seed);
    Tensor t = Tensor::image(height, width);
    for (double& v : t.data()) v = rng.uniform();
    return t;
  }
  Tensor operator()(const ConstantInit& init) const {
    Tensor t = Tensor::image(height, width);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        t.at(y, x, 0) = init.r;
        t.at(y, x, 1) = init.g;
        t.at(y, x, 2) = init.b;
      }
    }
    return clamp_unit(std::move(t));
  }
  Tensor operator()(const ImageInit& init) const {
    return clamp_unit(resize_bilinear(read_image(init.path), height, width));
  }
};

}  // namespace

Patch new_patch(int height_px, int width_px, const InitSpec& init, double aspect_hint) {
  if (height_px < 2 || width_px < 2) {
    throw std::invalid_argument("patch dimensions must be at least 2x2, got " +
                                std::to_string(height_px) + "x" + std::to_string(width_px));
  }
  return Patch(std::visit(InitVisitor{height_px, width_px}, init), aspect_hint);
}

void save_patch_png(const std::filesystem::path& path, const Patch& patch) {
  write_image(path, patch.pixels(), BitDepth::k16);
}

Patch load_patch_png(const std::filesystem::path& path, double aspect_hint) {
  return Patch(read_image(path), aspect_hint);
}

}  // namespace cloak
