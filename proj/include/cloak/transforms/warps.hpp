#pragma once

#include <cstdint>

#include "cloak/autodiff/warp.hpp"
#include "cloak/core/tensor.hpp"

namespace cloak::transforms {

// Inverse-mapped sampling grids used by the transform pipeline. All maps
// keep the canvas size (H x W) and use pixel centers at integer indices.

// In-plane rotation (counter-clockwise on screen) and isotropic scaling
// about the canvas center.
ad::Warp rotate_scale_warp(int height, int width, double scale, double rotate_deg);

// Smooth displacement field: a zero-mean grid x grid random field per axis,
// normalized to unit peak, scaled by amp_px, upsampled (bilinear, corners
// aligned) to H x W.
struct WrinkleField {
  Tensor dx;  // {H, W}
  Tensor dy;  // {H, W}
};
WrinkleField wrinkle_field(int height, int width, int grid, double amp_px, std::uint64_t seed);
ad::Warp displacement_warp(const WrinkleField& field);
// 1 + 0.5 * d(dx)/dx, floored at 0; {H, W}.
Tensor wrinkle_shading(const WrinkleField& field);

// Vertical-axis cylinder: output column u' in [-1, 1] samples source column
// u = asin(u' sin k) / k; shading cos(u k).
ad::Warp radian_warp(int height, int width, double curvature);
Tensor radian_shading(int height, int width, double curvature);

// Plane rotated by yaw (vertical axis) then pitch (horizontal axis) about
// its center, viewed by a pinhole of focal length 2 * max(H, W).
ad::Warp angle_warp(int height, int width, double yaw_deg, double pitch_deg);

// One axis-aligned rectangle of area fraction * H * W (aspect w/h drawn in
// [0.5, 2]); returns an {H, W} 0/1 mask.
Tensor occlusion_mask(int height, int width, double fraction, std::uint64_t seed);

}  // namespace cloak::transforms
