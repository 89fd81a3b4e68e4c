#include "cloak/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cloak/autodiff/ops.hpp"

namespace cloak::losses {
namespace {

Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

void check_image(const Tensor& image, const char* what) {
  if (image.rank() != 3) throw std::invalid_argument(std::string(what) + " expects an HxWxC tensor");
}

double pixel_count(const Tensor& image) { return static_cast<double>(image.height()) * image.width(); }

struct NearestColor {
  double distance;
  std::size_t index;
};

NearestColor nearest(const double* px, const Palette& palette) {
  NearestColor best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t k = 0; k < palette.size(); ++k) {
    const Rgb& c = palette.colors()[k];
    const double d = std::sqrt((px[0] - c[0]) * (px[0] - c[0]) + (px[1] - c[1]) * (px[1] - c[1]) +
                               (px[2] - c[2]) * (px[2] - c[2]));
    if (d < best.distance) best = {d, k};
  }
  return best;
}

void check_regions(std::size_t grid_count, std::span<const std::vector<Region>> regions) {
  if (regions.size() != grid_count) throw std::invalid_argument("one region list per grid is required");
  for (const auto& list : regions) {
    for (const Region& r : list) {
      if (!(r.x0 >= 0 && r.y0 >= 0 && r.x1 <= 1 && r.y1 <= 1 && r.x0 < r.x1 && r.y0 < r.y1)) {
        throw std::invalid_argument("patch region is empty or outside the image");
      }
    }
  }
}

std::vector<int> boxes_in_regions(const std::vector<detector::BoxGeometry>& geometry,
                                  const std::vector<Region>& regions) {
  std::vector<int> inside;
  for (std::size_t n = 0; n < geometry.size(); ++n) {
    const auto& g = geometry[n];
    if (std::any_of(regions.begin(), regions.end(), [&](const Region& r) { return r.contains(g.cx, g.cy); })) {
      inside.push_back(static_cast<int>(n));
    }
  }
  return inside;
}

}  // namespace

void validate(const LossWeights& w) {
  for (double v : {w.lambda_tv, w.lambda_nps, w.mu_disappear}) {
    if (!std::isfinite(v) || v < 0) throw std::invalid_argument("loss weights must be finite and >= 0");
  }
}

double tv_loss(const Tensor& image) {
  check_image(image, "tv_loss");
  const int h = image.height(), w = image.width(), c = image.channels();
  const double base = std::sqrt(kTvEpsilon);
  double total = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        const double v = image.at(y, x, k);
        const double dv = y + 1 < h ? v - image.at(y + 1, x, k) : 0.0;
        const double dh = x + 1 < w ? v - image.at(y, x + 1, k) : 0.0;
        total += std::sqrt(dv * dv + dh * dh + kTvEpsilon) - base;
      }
    }
  }
  return total;
}

double tv_loss(const Patch& patch) { return tv_loss(patch.pixels()); }

ad::Var tv_loss(ad::Tape& tape, ad::Var image) {
  const Tensor& v = tape.value(image);
  return tape.record(scalar(tv_loss(v)), {image}, [image](ad::Tape& t, ad::Var self) {
    const Tensor& p = t.value(image);
    const double g = t.grad(self)[0];
    Tensor& gi = t.grad(image);
    const int h = p.height(), w = p.width(), c = p.channels();
    const auto idx = [&](int y, int x, int k) { return (static_cast<std::size_t>(y) * w + x) * c + k; };
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int k = 0; k < c; ++k) {
          const double val = p[idx(y, x, k)];
          const double dv = y + 1 < h ? val - p[idx(y + 1, x, k)] : 0.0;
          const double dh = x + 1 < w ? val - p[idx(y, x + 1, k)] : 0.0;
          const double r = std::sqrt(dv * dv + dh * dh + kTvEpsilon);
          gi[idx(y, x, k)] += g * (dv + dh) / r;
          if (y + 1 < h) gi[idx(y + 1, x, k)] -= g * dv / r;
          if (x + 1 < w) gi[idx(y, x + 1, k)] -= g * dh / r;
        }
      }
    }
  });
}

double nps_loss(const Tensor& image, const Palette& palette) {
  check_image(image, "nps_loss");
  if (image.channels() != 3) throw std::invalid_argument("nps_loss expects RGB pixels");
  double total = 0.0;
  for (std::size_t p = 0; p < image.size(); p += 3) total += nearest(image.data().data() + p, palette).distance;
  return total;
}

double nps_loss(const Patch& patch, const Palette& palette) { return nps_loss(patch.pixels(), palette); }

ad::Var nps_loss(ad::Tape& tape, ad::Var image, const Palette& palette) {
  const Tensor& v = tape.value(image);
  const double value = nps_loss(v, palette);
  return tape.record(scalar(value), {image}, [image, palette](ad::Tape& t, ad::Var self) {
    const Tensor& p = t.value(image);
    const double g = t.grad(self)[0];
    Tensor& gi = t.grad(image);
    for (std::size_t i = 0; i < p.size(); i += 3) {
      const NearestColor n = nearest(p.data().data() + i, palette);
      if (n.distance == 0.0) continue;
      const Rgb& c = palette.colors()[n.index];
      for (std::size_t k = 0; k < 3; ++k) gi[i + k] += g * (p[i + k] - c[k]) / n.distance;
    }
  });
}

double detection_loss(std::span<const detector::DetectionGrid> grids, int person_class, detector::ScoreMode mode) {
  if (grids.empty()) throw std::invalid_argument("detection_loss of an empty batch");
  double total = 0.0;
  for (const auto& g : grids) total += detector::extract_person_score(g, person_class, mode);
  return total / static_cast<double>(grids.size());
}

ad::Var detection_loss(ad::Tape& tape, std::span<const detector::GridVars> grids, int person_class,
                       detector::ScoreMode mode) {
  if (grids.empty()) throw std::invalid_argument("detection_loss of an empty batch");
  std::vector<ad::Var> scores;
  for (const auto& g : grids) scores.push_back(detector::extract_person_score(tape, g, person_class, mode));
  return ad::scale(tape, ad::add_n(tape, scores), 1.0 / static_cast<double>(grids.size()));
}

Region normalized_region(int x0, int y0, int width, int height, int image_height, int image_width) {
  const int cx0 = std::clamp(x0, 0, image_width), cx1 = std::clamp(x0 + width, 0, image_width);
  const int cy0 = std::clamp(y0, 0, image_height), cy1 = std::clamp(y0 + height, 0, image_height);
  if (cx0 >= cx1 || cy0 >= cy1) throw std::invalid_argument("patch region is empty or outside the image");
  return {static_cast<double>(cx0) / image_width, static_cast<double>(cy0) / image_height,
          static_cast<double>(cx1) / image_width, static_cast<double>(cy1) / image_height};
}

double disappearance_loss(std::span<const detector::DetectionGrid> grids,
                          std::span<const std::vector<Region>> regions) {
  if (grids.empty()) throw std::invalid_argument("disappearance_loss of an empty batch");
  check_regions(grids.size(), regions);
  double total = 0.0;
  for (std::size_t g = 0; g < grids.size(); ++g) {
    const auto& grid = grids[g];
    double best = 0.0;
    for (int n : boxes_in_regions(grid.geometry, regions[g])) {
      double top = 0.0;
      for (int c = 0; c < grid.classes; ++c) top = std::max(top, grid.class_prob(n, c));
      best = std::max(best, grid.objectness[n] * top);
    }
    total += best;
  }
  return total / static_cast<double>(grids.size());
}

ad::Var disappearance_loss(ad::Tape& tape, std::span<const detector::GridVars> grids,
                           std::span<const std::vector<Region>> regions) {
  if (grids.empty()) throw std::invalid_argument("disappearance_loss of an empty batch");
  check_regions(grids.size(), regions);
  std::vector<ad::Var> terms;
  for (std::size_t g = 0; g < grids.size(); ++g) {
    const auto values = detector::grid_values(tape, grids[g]);
    const std::vector<int> inside = boxes_in_regions(values.geometry, regions[g]);
    if (inside.empty()) {
      terms.push_back(tape.constant(scalar(0.0)));
      continue;
    }
    const ad::Var top = ad::row_max(tape, grids[g].class_probs, grids[g].classes);
    const ad::Var score = ad::mul(tape, grids[g].objectness, top);
    terms.push_back(ad::max_all(tape, ad::gather(tape, score, inside)));
  }
  return ad::scale(tape, ad::add_n(tape, terms), 1.0 / static_cast<double>(grids.size()));
}

ObjectiveTerms total_objective(ad::Tape& tape, ad::Var patch, std::span<const detector::GridVars> grids,
                               std::span<const std::vector<Region>> regions, const Palette& palette,
                               const LossWeights& w, const ObjectiveOptions& opts) {
  validate(w);
  const Tensor& p = tape.value(patch);
  check_image(p, "total_objective");
  const double per_pixel = 1.0 / pixel_count(p);
  ObjectiveTerms terms;
  terms.detection = detection_loss(tape, grids, opts.person_class, opts.score_mode);
  terms.tv = ad::scale(tape, tv_loss(tape, patch), per_pixel);
  terms.nps = ad::scale(tape, nps_loss(tape, patch, palette), per_pixel);
  std::vector<ad::Var> sum{terms.detection, ad::scale(tape, terms.tv, w.lambda_tv),
                           ad::scale(tape, terms.nps, w.lambda_nps)};
  if (w.mu_disappear > 0) {
    terms.disappear = disappearance_loss(tape, grids, regions);
    sum.push_back(ad::scale(tape, terms.disappear, w.mu_disappear));
  }
  terms.total = ad::add_n(tape, sum);
  return terms;
}

LossBreakdown breakdown(const ad::Tape& tape, const ObjectiveTerms& terms) {
  LossBreakdown b;
  b.detection = tape.value(terms.detection)[0];
  b.tv = tape.value(terms.tv)[0];
  b.nps = tape.value(terms.nps)[0];
  b.disappear = terms.disappear.valid() ? tape.value(terms.disappear)[0] : 0.0;
  b.total = tape.value(terms.total)[0];
  return b;
}

LossBreakdown total_objective(const Tensor& patch, std::span<const detector::DetectionGrid> grids,
                              std::span<const std::vector<Region>> regions, const Palette& palette,
                              const LossWeights& w, const ObjectiveOptions& opts) {
  validate(w);
  check_image(patch, "total_objective");
  const double per_pixel = 1.0 / pixel_count(patch);
  LossBreakdown b;
  b.detection = detection_loss(grids, opts.person_class, opts.score_mode);
  b.tv = tv_loss(patch) * per_pixel;
  b.nps = nps_loss(patch, palette) * per_pixel;
  if (w.mu_disappear > 0) b.disappear = disappearance_loss(grids, regions);
  b.total = b.detection + w.lambda_tv * b.tv + w.lambda_nps * b.nps + w.mu_disappear * b.disappear;
  return b;
}

}  // namespace cloak::losses
