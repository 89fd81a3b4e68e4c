#pragma once

// Brute-force reference implementations written independently of the
// library code they check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cloak/core/palette.hpp"
#include "cloak/core/tensor.hpp"
#include "cloak/detector/grid.hpp"
#include "cloak/detector/nms.hpp"

namespace cloak::oracle {

// Total variation with the declared boundary rule, one channel at a time.
inline double tv(const Tensor& p) {
  const double eps = 1e-8;
  double total = 0.0;
  for (int c = 0; c < p.channels(); ++c) {
    for (int i = 0; i < p.height(); ++i) {
      for (int j = 0; j < p.width(); ++j) {
        double down = 0.0, right = 0.0;
        if (i + 1 < p.height()) down = p.at(i, j, c) - p.at(i + 1, j, c);
        if (j + 1 < p.width()) right = p.at(i, j, c) - p.at(i, j + 1, c);
        total += std::sqrt(down * down + right * right + eps) - std::sqrt(eps);
      }
    }
  }
  return total;
}

inline double nps(const Tensor& p, const Palette& palette) {
  double total = 0.0;
  for (int i = 0; i < p.height(); ++i) {
    for (int j = 0; j < p.width(); ++j) {
      double best = std::numeric_limits<double>::max();
      for (const Rgb& c : palette.colors()) {
        double sq = 0.0;
        for (int k = 0; k < 3; ++k) sq += (p.at(i, j, k) - c[static_cast<std::size_t>(k)]) * (p.at(i, j, k) - c[static_cast<std::size_t>(k)]);
        best = std::min(best, std::sqrt(sq));
      }
      total += best;
    }
  }
  return total;
}

// Exhaustive S*S*B scan of P_obj * P(person).
inline double person_score(const detector::DetectionGrid& g, int person) {
  double best = -1.0;
  for (int row = 0; row < g.grid; ++row) {
    for (int col = 0; col < g.grid; ++col) {
      for (int b = 0; b < g.boxes; ++b) {
        const std::size_t n = static_cast<std::size_t>((row * g.grid + col) * g.boxes + b);
        best = std::max(best, g.objectness[n] * g.class_probs[n * static_cast<std::size_t>(g.classes) + static_cast<std::size_t>(person)]);
      }
    }
  }
  return best;
}

inline double box_iou(const detector::BoxGeometry& a, const detector::BoxGeometry& b) {
  const double ix = std::max(0.0, std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2));
  const double iy = std::max(0.0, std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// O(n^2) greedy NMS: repeatedly keep the best remaining candidate and drop
// every same-class candidate overlapping it.
inline std::vector<detector::Detection> nms(std::vector<detector::Detection> c, double thr) {
  std::vector<detector::Detection> kept;
  std::vector<bool> gone(c.size(), false);
  for (;;) {
    int best = -1;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (!gone[i] && (best < 0 || c[i].score > c[static_cast<std::size_t>(best)].score)) best = static_cast<int>(i);
    }
    if (best < 0) break;
    const auto keep = c[static_cast<std::size_t>(best)];
    kept.push_back(keep);
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (!gone[i] && c[i].class_index == keep.class_index && box_iou(c[i].box, keep.box) >= thr) gone[i] = true;
    }
  }
  return kept;
}

}  // namespace cloak::oracle
