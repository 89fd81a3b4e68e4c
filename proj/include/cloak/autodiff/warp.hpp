#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cloak/core/tensor.hpp"

namespace cloak::ad {

// Linear resampling map from an HsxWs image to an HoxWo image: each output
// pixel is a weighted sum of at most four source pixels (same weights for
// every channel). Output pixels with no taps are zero and invalid.
struct Warp {
  struct Taps {
    std::array<std::int32_t, 4> index{-1, -1, -1, -1};
    std::array<double, 4> weight{};
    int count = 0;
  };

  int src_height = 0;
  int src_width = 0;
  int out_height = 0;
  int out_width = 0;
  std::vector<Taps> taps;

  static Warp empty(int src_height, int src_width, int out_height, int out_width);

  Tensor apply(const Tensor& src) const;
  // Masks are {H, W} tensors of 0/1. An output pixel is valid when it has
  // taps and every tap lands on a valid source pixel.
  Tensor apply_mask(const Tensor& src_mask) const;
};

// Bilinear taps for continuous pixel-index coordinates (pixel centers at
// integers). Returns false, leaving taps empty, when the point lies outside
// [0, W-1] x [0, H-1] beyond a 1e-6 tolerance.
bool bilinear_taps(double sx, double sy, int height, int width, Warp::Taps& taps);

Tensor full_mask(int height, int width, double value = 1.0);

}  // namespace cloak::ad

namespace cloak::ad {

// Bilinear resize map with half-pixel centers and edge clamping; matches
// cloak::resize_bilinear.
Warp resize_warp(int src_height, int src_width, int out_height, int out_width);

}  // namespace cloak::ad
