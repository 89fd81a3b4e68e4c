#include "cloak/transforms/warps.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "cloak/core/rng.hpp"

namespace cloak::transforms {
namespace {

constexpr double kShadingGain = 0.5;
constexpr double kFlatCurvature = 1e-9;

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

Mat3 inverse(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 r{};
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return r;
}

// Bilinear sample of a coarse {g, g} grid with corners aligned to the
// canvas corners.
double upsample(const std::vector<double>& grid, int g, double fy, double fx) {
  const int y0 = std::min(static_cast<int>(std::floor(fy)), g - 2);
  const int x0 = std::min(static_cast<int>(std::floor(fx)), g - 2);
  const double ty = fy - y0, tx = fx - x0;
  const auto at = [&](int y, int x) { return grid[static_cast<std::size_t>(y) * g + x]; };
  return (at(y0, x0) * (1 - tx) + at(y0, x0 + 1) * tx) * (1 - ty) +
         (at(y0 + 1, x0) * (1 - tx) + at(y0 + 1, x0 + 1) * tx) * ty;
}

}  // namespace

ad::Warp rotate_scale_warp(int height, int width, double scale, double rotate_deg) {
  ad::Warp w = ad::Warp::empty(height, width, height, width);
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  const double th = radians(rotate_deg);
  const double c = std::cos(th), s = std::sin(th);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      // Inverse map back into the source canvas.
      const double ox = x - cx, oy = y - cy;
      const double sx = cx + (c * ox - s * oy) / scale;
      const double sy = cy + (s * ox + c * oy) / scale;
      ad::bilinear_taps(sx, sy, height, width, w.taps[static_cast<std::size_t>(y) * width + x]);
    }
  }
  return w;
}

WrinkleField wrinkle_field(int height, int width, int grid, double amp_px, std::uint64_t seed) {
  SeedableRng rng(seed);
  WrinkleField f{Tensor({height, width}), Tensor({height, width})};
  for (Tensor* out : {&f.dx, &f.dy}) {
    std::vector<double> coarse(static_cast<std::size_t>(grid) * grid);
    double mean = 0.0;
    for (double& v : coarse) mean += (v = rng.uniform(-1.0, 1.0));
    mean /= static_cast<double>(coarse.size());
    double peak = 0.0;
    for (double& v : coarse) peak = std::max(peak, std::abs(v -= mean));
    const double gain = peak > 0 ? amp_px / peak : 0.0;
    for (double& v : coarse) v *= gain;
    for (int y = 0; y < height; ++y) {
      const double fy = height > 1 ? y * (grid - 1.0) / (height - 1.0) : 0.0;
      for (int x = 0; x < width; ++x) {
        const double fx = width > 1 ? x * (grid - 1.0) / (width - 1.0) : 0.0;
        (*out)[static_cast<std::size_t>(y) * width + x] = upsample(coarse, grid, fy, fx);
      }
    }
  }
  return f;
}

ad::Warp displacement_warp(const WrinkleField& field) {
  const int h = field.dx.dim(0), w = field.dx.dim(1);
  ad::Warp warp = ad::Warp::empty(h, w, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      ad::bilinear_taps(x + field.dx[p], y + field.dy[p], h, w, warp.taps[p]);
    }
  }
  return warp;
}

Tensor wrinkle_shading(const WrinkleField& field) {
  const int h = field.dx.dim(0), w = field.dx.dim(1);
  Tensor s({h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
      const auto at = [&](int xx) { return field.dx[static_cast<std::size_t>(y) * w + xx]; };
      const double slope = xr > xl ? (at(xr) - at(xl)) / (xr - xl) : 0.0;
      s[static_cast<std::size_t>(y) * w + x] = std::max(0.0, 1.0 + kShadingGain * slope);
    }
  }
  return s;
}

ad::Warp radian_warp(int height, int width, double curvature) {
  ad::Warp w = ad::Warp::empty(height, width, height, width);
  const double cx = (width - 1) / 2.0;
  const double half = std::max(cx, 1e-12);
  const double sk = std::sin(curvature);
  const bool flat = std::abs(curvature) < kFlatCurvature;
  for (int x = 0; x < width; ++x) {
    const double u_out = (x - cx) / half;
    const double u_src = flat ? u_out : std::asin(std::clamp(u_out * sk, -1.0, 1.0)) / curvature;
    const double sx = cx + u_src * half;
    for (int y = 0; y < height; ++y) {
      ad::bilinear_taps(sx, y, height, width, w.taps[static_cast<std::size_t>(y) * width + x]);
    }
  }
  return w;
}

Tensor radian_shading(int height, int width, double curvature) {
  Tensor s({height, width});
  const double cx = (width - 1) / 2.0;
  const double half = std::max(cx, 1e-12);
  const double sk = std::sin(curvature);
  const bool flat = std::abs(curvature) < kFlatCurvature;
  for (int x = 0; x < width; ++x) {
    const double u_out = (x - cx) / half;
    const double u_src = flat ? u_out : std::asin(std::clamp(u_out * sk, -1.0, 1.0)) / curvature;
    const double shade = flat ? 1.0 : std::cos(u_src * curvature);
    for (int y = 0; y < height; ++y) s[static_cast<std::size_t>(y) * width + x] = shade;
  }
  return s;
}

ad::Warp angle_warp(int height, int width, double yaw_deg, double pitch_deg) {
  const double f = 2.0 * std::max(height, width);
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  const double cyaw = std::cos(radians(yaw_deg)), syaw = std::sin(radians(yaw_deg));
  const double cp = std::cos(radians(pitch_deg)), sp = std::sin(radians(pitch_deg));
  const Mat3 ry{{{cyaw, 0, syaw}, {0, 1, 0}, {-syaw, 0, cyaw}}};
  const Mat3 rx{{{1, 0, 0}, {0, cp, -sp}, {0, sp, cp}}};
  const Mat3 r = multiply(rx, ry);
  // Plane point (X, Y, 0) -> camera point R (X, Y, 0) + (0, 0, f).
  const Mat3 plane{{{r[0][0], r[0][1], 0.0}, {r[1][0], r[1][1], 0.0}, {r[2][0], r[2][1], f}}};
  const Mat3 k{{{f, 0, cx}, {0, f, cy}, {0, 0, 1}}};
  const Mat3 shift{{{1, 0, -cx}, {0, 1, -cy}, {0, 0, 1}}};
  const Mat3 inv = inverse(multiply(k, multiply(plane, shift)));

  ad::Warp w = ad::Warp::empty(height, width, height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double hx = inv[0][0] * x + inv[0][1] * y + inv[0][2];
      const double hy = inv[1][0] * x + inv[1][1] * y + inv[1][2];
      const double hz = inv[2][0] * x + inv[2][1] * y + inv[2][2];
      if (hz <= 0) continue;
      ad::bilinear_taps(hx / hz, hy / hz, height, width, w.taps[static_cast<std::size_t>(y) * width + x]);
    }
  }
  return w;
}

Tensor occlusion_mask(int height, int width, double fraction, std::uint64_t seed) {
  Tensor mask({height, width}, 0.0);
  if (fraction <= 0.0) return mask;
  SeedableRng rng(seed);
  const double area = fraction * height * width;
  const double aspect = rng.uniform(0.5, 2.0);
  const int rw = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, width);
  const int rh = std::clamp(static_cast<int>(std::lround(area / rw)), 1, height);
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(width - rw + 1)));
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(height - rh + 1)));
  for (int y = y0; y < y0 + rh; ++y) {
    for (int x = x0; x < x0 + rw; ++x) mask[static_cast<std::size_t>(y) * width + x] = 1.0;
  }
  return mask;
}

}  // namespace cloak::transforms
