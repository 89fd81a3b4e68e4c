#include "cloak/detector/nms.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

namespace cloak::detector {
namespace {

void check_unit_open(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument(std::string(name) + " must lie in (0, 1)");
}

}  // namespace

double iou(const BoxGeometry& a, const BoxGeometry& b) {
  const double ix = std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2);
  const double iy = std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2);
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::vector<Detection> threshold_boxes(const DetectionGrid& grid, double score_threshold) {
  std::vector<Detection> out;
  for (std::size_t i = 0; i < grid.box_count(); ++i) {
    int best = 0;
    for (int c = 1; c < grid.classes; ++c) {
      if (grid.class_prob(i, c) > grid.class_prob(i, best)) best = c;
    }
    const double score = grid.objectness[i] * grid.class_prob(i, best);
    if (score >= score_threshold) out.push_back({grid.geometry[i], score, best});
  }
  return out;
}

std::vector<Detection> non_max_suppression(std::vector<Detection> candidates, double nms_iou) {
  check_unit_open(nms_iou, "nms_iou");
  const auto key = [](const Detection& d) {
    return std::make_tuple(-d.score, d.class_index, d.box.cx, d.box.cy, d.box.w, d.box.h);
  };
  std::sort(candidates.begin(), candidates.end(),
            [&](const Detection& a, const Detection& b) { return key(a) < key(b); });
  std::vector<Detection> kept;
  for (const auto& c : candidates) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_index == c.class_index && iou(k.box, c.box) >= nms_iou;
    });
    if (!suppressed) kept.push_back(c);
  }
  return kept;
}

std::vector<Detection> detect_all(const DetectionGrid& grid, double score_threshold, double nms_iou) {
  check_unit_open(score_threshold, "score_threshold");
  return non_max_suppression(threshold_boxes(grid, score_threshold), nms_iou);
}

std::vector<Detection> detect_persons(const DetectionGrid& grid, int person_class,
                                      double score_threshold, double nms_iou) {
  std::vector<Detection> all = detect_all(grid, score_threshold, nms_iou);
  std::erase_if(all, [&](const Detection& d) { return d.class_index != person_class; });
  return all;
}

}  // namespace cloak::detector
