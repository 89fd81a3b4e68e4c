#pragma once

#include <array>
#include <vector>

#include "cloak/autodiff/tape.hpp"
#include "cloak/core/tensor.hpp"

namespace cloak::detector {

// Shape of a grid detector's output: S x S cells, B anchors per cell, C
// classes. Anchors are (w, h) in grid-cell units, one per box slot.
struct Descriptor {
  int grid = 4;
  int boxes = 1;
  int classes = 3;
  int input_height = 64;
  int input_width = 64;
  int person_class = 0;
  std::vector<std::array<double, 2>> anchors{{1.0, 1.5}};

  int row_length() const { return 5 + classes; }
  int box_count() const { return grid * grid * boxes; }
};

// Throws std::invalid_argument on inconsistent fields.
void validate(const Descriptor& d);

struct BoxGeometry {
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;
  friend bool operator==(const BoxGeometry&, const BoxGeometry&) = default;
};

// Decoded detector output (values). Box n = (row * S + col) * B + anchor.
struct DetectionGrid {
  int grid = 0;
  int boxes = 0;
  int classes = 0;
  std::vector<double> objectness;   // N
  std::vector<double> class_probs;  // N x C
  std::vector<BoxGeometry> geometry;

  std::size_t box_count() const { return objectness.size(); }
  double class_prob(std::size_t box, int cls) const {
    return class_probs[box * static_cast<std::size_t>(classes) + static_cast<std::size_t>(cls)];
  }
};

// Differentiable view of the same quantities on a tape.
struct GridVars {
  int grid = 0;
  int boxes = 0;
  int classes = 0;
  ad::Var objectness;   // {N}
  ad::Var class_probs;  // {N, C}
  ad::Var geometry;     // {N, 4}: cx, cy, w, h
};

enum class ScoreMode { kObjectnessTimesClass, kClassOnly };

// P_obj = logistic(t_o); class_probs = softmax(class logits);
// cx = (col + logistic(tx)) / S, cy = (row + logistic(ty)) / S,
// w = anchor_w * exp(tw) / S, h = anchor_h * exp(th) / S.
// Throws on shape mismatch or non-finite input.
GridVars decode_grid(ad::Tape& tape, ad::Var raw, const Descriptor& d);
DetectionGrid decode_grid(const Tensor& raw, const Descriptor& d);
DetectionGrid grid_values(const ad::Tape& tape, const GridVars& vars);

// Max over all boxes of P_obj * P(person) (or P(person) alone).
double extract_person_score(const DetectionGrid& grid, int person_class,
                            ScoreMode mode = ScoreMode::kObjectnessTimesClass);
ad::Var extract_person_score(ad::Tape& tape, const GridVars& grid, int person_class,
                             ScoreMode mode = ScoreMode::kObjectnessTimesClass);

}  // namespace cloak::detector
