#pragma once

#include <cstdint>
#include <filesystem>
#include <variant>

#include "cloak/core/tensor.hpp"

namespace cloak {

// Physical height:width ratio of the printed patch (43 cm x 29 cm).
inline constexpr double kDefaultAspectHint = 43.0 / 29.0;

// Optimized pixel rectangle. Pixels are HxWx3 in [0, 1]; H, W >= 2.
class Patch {
 public:
  // Throws std::invalid_argument if the shape or pixel range is invalid.
  explicit Patch(Tensor pixels, double aspect_hint = kDefaultAspectHint);

  const Tensor& pixels() const { return pixels_; }
  int height() const { return pixels_.height(); }
  int width() const { return pixels_.width(); }
  double aspect_hint() const { return aspect_hint_; }

 private:
  Tensor pixels_;
  double aspect_hint_;
};

struct RandomInit {
  std::uint64_t seed = 0;
};
struct ConstantInit {
  double r = 0.5, g = 0.5, b = 0.5;
};
struct ImageInit {
  std::filesystem::path path;
};
using InitSpec = std::variant<RandomInit, ConstantInit, ImageInit>;

Patch new_patch(int height_px, int width_px, const InitSpec& init,
                double aspect_hint = kDefaultAspectHint);

Tensor clamp_unit(Tensor values);
Patch clamp_unit(const Patch& patch);

// Bilinear resize with half-pixel centers and edge clamping.
Tensor resize_bilinear(const Tensor& image, int height, int width);

// 16-bit PNG, the patch checkpoint image format.
void save_patch_png(const std::filesystem::path& path, const Patch& patch);
Patch load_patch_png(const std::filesystem::path& path,
                     double aspect_hint = kDefaultAspectHint);

}  // namespace cloak
