#pragma once

#include <vector>

#include "cloak/detector/grid.hpp"

namespace cloak::detector {

struct Detection {
  BoxGeometry box;
  double score = 0.0;  // P_obj x max class prob of the source box
  int class_index = 0;
};

double iou(const BoxGeometry& a, const BoxGeometry& b);

// Boxes whose P_obj x max class prob reaches score_threshold.
std::vector<Detection> threshold_boxes(const DetectionGrid& grid, double score_threshold);

// Greedy same-class suppression in descending score order. Ties are broken
// on geometry so the result does not depend on input order.
std::vector<Detection> non_max_suppression(std::vector<Detection> candidates, double nms_iou);

// All classes after thresholding and NMS.
std::vector<Detection> detect_all(const DetectionGrid& grid, double score_threshold, double nms_iou);

// detect_all restricted to the person class.
std::vector<Detection> detect_persons(const DetectionGrid& grid, int person_class,
                                      double score_threshold, double nms_iou);

}  // namespace cloak::detector
