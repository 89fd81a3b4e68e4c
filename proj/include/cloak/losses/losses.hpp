#pragma once

#include <span>
#include <vector>

#include "cloak/autodiff/tape.hpp"
#include "cloak/core/palette.hpp"
#include "cloak/core/patch.hpp"
#include "cloak/detector/grid.hpp"

namespace cloak::losses {

inline constexpr double kTvEpsilon = 1e-8;

struct LossWeights {
  double lambda_tv = 2.5;
  double lambda_nps = 0.01;
  double mu_disappear = 0.0;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

// Default weight for the disappearance term when that mode is switched on.
inline constexpr double kDefaultDisappearWeight = 1.0;

// Throws std::invalid_argument unless every weight is finite and >= 0.
void validate(const LossWeights& w);

struct LossBreakdown {
  double detection = 0.0;
  double tv = 0.0;
  double nps = 0.0;
  double disappear = 0.0;
  double total = 0.0;
};

// Total variation of an HxWxC image: per pixel and channel,
// sqrt(dv^2 + dh^2 + eps) - sqrt(eps) with dv, dh the differences to the
// pixel below and to the right (0 past the last row/column).
double tv_loss(const Tensor& image);
double tv_loss(const Patch& patch);
ad::Var tv_loss(ad::Tape& tape, ad::Var image);

// Sum over pixels of the Euclidean RGB distance to the nearest palette color.
double nps_loss(const Tensor& image, const Palette& palette);
double nps_loss(const Patch& patch, const Palette& palette);
ad::Var nps_loss(ad::Tape& tape, ad::Var image, const Palette& palette);

// Mean over grids of the max person score. Throws on an empty batch.
double detection_loss(std::span<const detector::DetectionGrid> grids, int person_class,
                      detector::ScoreMode mode = detector::ScoreMode::kObjectnessTimesClass);
ad::Var detection_loss(ad::Tape& tape, std::span<const detector::GridVars> grids, int person_class,
                       detector::ScoreMode mode = detector::ScoreMode::kObjectnessTimesClass);

// Patch rectangle in normalized image coordinates, [x0, x1) x [y0, y1).
struct Region {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

// Clips a pixel rectangle to the image and normalizes it.
Region normalized_region(int x0, int y0, int width, int height, int image_height, int image_width);

// regions[g] lists the patch rectangles of grid g's source image. Mean over
// grids of the max, over boxes whose center lies in one of the grid's
// regions, of P_obj * max_c P(c); 0 for a grid with no such box. Throws if a
// region is empty or leaves the unit square, or if the counts differ.
double disappearance_loss(std::span<const detector::DetectionGrid> grids,
                          std::span<const std::vector<Region>> regions);
ad::Var disappearance_loss(ad::Tape& tape, std::span<const detector::GridVars> grids,
                           std::span<const std::vector<Region>> regions);

struct ObjectiveTerms {
  ad::Var detection;
  ad::Var tv;
  ad::Var nps;
  ad::Var disappear;  // invalid when mu_disappear == 0
  ad::Var total;
};

struct ObjectiveOptions {
  int person_class = 0;
  detector::ScoreMode score_mode = detector::ScoreMode::kObjectnessTimesClass;
};

// total = detection + lambda_tv * tv + lambda_nps * nps + mu * disappear,
// where tv and nps are per-pixel means (tv_loss / (H*W), nps_loss / (H*W)).
ObjectiveTerms total_objective(ad::Tape& tape, ad::Var patch, std::span<const detector::GridVars> grids,
                               std::span<const std::vector<Region>> regions, const Palette& palette,
                               const LossWeights& w, const ObjectiveOptions& opts = {});
LossBreakdown breakdown(const ad::Tape& tape, const ObjectiveTerms& terms);

LossBreakdown total_objective(const Tensor& patch, std::span<const detector::DetectionGrid> grids,
                              std::span<const std::vector<Region>> regions, const Palette& palette,
                              const LossWeights& w, const ObjectiveOptions& opts = {});

}  // namespace cloak::losses
