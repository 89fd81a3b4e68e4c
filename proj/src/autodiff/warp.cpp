#include "cloak/autodiff/warp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cloak::ad {
namespace {
constexpr double kEdgeTolerance = 1e-6;
constexpr double kZeroWeight = 1e-12;
}  // namespace

Warp Warp::empty(int src_height, int src_width, int out_height, int out_width) {
  Warp w;
  w.src_height = src_height;
  w.src_width = src_width;
  w.out_height = out_height;
  w.out_width = out_width;
  w.taps.resize(static_cast<std::size_t>(out_height) * out_width);
  return w;
}

bool bilinear_taps(double sx, double sy, int height, int width, Warp::Taps& taps) {
  taps = Warp::Taps{};
  if (!std::isfinite(sx) || !std::isfinite(sy)) return false;
  if (sx < -kEdgeTolerance || sx > width - 1 + kEdgeTolerance) return false;
  if (sy < -kEdgeTolerance || sy > height - 1 + kEdgeTolerance) return false;
  sx = std::fmin(std::fmax(sx, 0.0), width - 1.0);
  sy = std::fmin(std::fmax(sy, 0.0), height - 1.0);
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const double fx = sx - x0;
  const double fy = sy - y0;
  const int xs[2] = {x0, x0 + 1};
  const int ys[2] = {y0, y0 + 1};
  const double wx[2] = {1.0 - fx, fx};
  const double wy[2] = {1.0 - fy, fy};
  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < 2; ++i) {
      const double w = wy[j] * wx[i];
      if (w <= kZeroWeight) continue;
      taps.index[taps.count] = ys[j] * width + xs[i];
      taps.weight[taps.count] = w;
      ++taps.count;
    }
  }
  return taps.count > 0;
}

Tensor full_mask(int height, int width, double value) { return Tensor({height, width}, value); }

Tensor Warp::apply(const Tensor& src) const {
  if (src.rank() != 3 || src.height() != src_height || src.width() != src_width) {
    throw std::invalid_argument("warp source shape mismatch");
  }
  const int ch = src.channels();
  Tensor out = Tensor::image(out_height, out_width, ch);
  const auto s = src.data();
  auto o = out.data();
  for (std::size_t p = 0; p < taps.size(); ++p) {
    const Taps& tp = taps[p];
    for (int k = 0; k < tp.count; ++k) {
      const std::size_t base = static_cast<std::size_t>(tp.index[k]) * ch;
      for (int c = 0; c < ch; ++c) o[p * ch + c] += tp.weight[k] * s[base + c];
    }
  }
  return out;
}

Tensor Warp::apply_mask(const Tensor& src_mask) const {
  if (src_mask.size() != static_cast<std::size_t>(src_height) * src_width) {
    throw std::invalid_argument("warp mask shape mismatch");
  }
  Tensor out = full_mask(out_height, out_width, 0.0);
  for (std::size_t p = 0; p < taps.size(); ++p) {
    const Taps& tp = taps[p];
    bool ok = tp.count > 0;
    for (int k = 0; k < tp.count && ok; ++k) ok = src_mask[static_cast<std::size_t>(tp.index[k])] >= 0.5;
    out[p] = ok ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace cloak::ad

namespace cloak::ad {

Warp resize_warp(int src_height, int src_width, int out_height, int out_width) {
  Warp w = Warp::empty(src_height, src_width, out_height, out_width);
  const double ry = static_cast<double>(src_height) / out_height;
  const double rx = static_cast<double>(src_width) / out_width;
  for (int y = 0; y < out_height; ++y) {
    const double sy = std::clamp((y + 0.5) * ry - 0.5, 0.0, src_height - 1.0);
    for (int x = 0; x < out_width; ++x) {
      const double sx = std::clamp((x + 0.5) * rx - 0.5, 0.0, src_width - 1.0);
      bilinear_taps(sx, sy, src_height, src_width, w.taps[static_cast<std::size_t>(y) * out_width + x]);
    }
  }
  return w;
}

}  // namespace cloak::ad
