#include "cloak/detector/toy_scenes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "cloak/core/patch.hpp"
#include "cloak/core/rng.hpp"

namespace cloak::detector {
namespace {

using Shape = std::function<bool(double, double)>;

void paint(Tensor& img, const Shape& inside, const std::array<double, 3>& rgb) {
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (!inside(x + 0.5, y + 0.5)) continue;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c];
    }
  }
}

Shape ellipse(double cx, double cy, double rx, double ry) {
  return [=](double x, double y) {
    const double u = (x - cx) / rx, v = (y - cy) / ry;
    return u * u + v * v <= 1.0;
  };
}

Shape rect(double x0, double y0, double x1, double y1) {
  return [=](double x, double y) { return x >= x0 && x < x1 && y >= y0 && y < y1; };
}

Tensor background(SeedableRng& rng, int size, bool flat) {
  Tensor img = Tensor::image(size, size);
  std::array<double, 3> base{};
  for (double& b : base) b = rng.uniform(0.05, 0.5);
  if (flat) {
    const double level = rng.uniform(0.0, 0.5);
    img.fill(level);
    return img;
  }
  Tensor coarse = Tensor::image(4, 4);
  for (double& v : coarse.data()) v = rng.uniform(-0.12, 0.12);
  const Tensor smooth = resize_bilinear(coarse, size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = std::clamp(base[c] + smooth.at(y, x, c) + rng.uniform(-0.03, 0.03), 0.0, 1.0);
      }
    }
  }
  return img;
}

struct PixelBox {
  double x0, y0, x1, y1;
  bool overlaps(const PixelBox& o, double margin) const {
    return x0 < o.x1 + margin && o.x0 < x1 + margin && y0 < o.y1 + margin && o.y0 < y1 + margin;
  }
};

PersonBox normalized(const PixelBox& b, int size, int label) {
  const double s = size;
  return {(b.x0 + b.x1) / 2 / s, (b.y0 + b.y1) / 2 / s, (b.x1 - b.x0) / s, (b.y1 - b.y0) / s, label};
}

PixelBox draw_person(Tensor& img, SeedableRng& rng, double h, double w, double cx, double top,
                     const ToySceneOptions& options) {
  const double base = rng.uniform(0.75, 1.0);
  std::array<double, 3> color{};
  for (double& c : color) c = std::clamp(base + rng.uniform(-0.1, 0.0), 0.0, 1.0);
  paint(img, ellipse(cx, top + 0.12 * h, 0.12 * h, 0.12 * h), color);
  paint(img, ellipse(cx, top + 0.45 * h, w / 2, 0.22 * h), color);
  paint(img, rect(cx - 0.4 * w, top + 0.6 * h, cx - 0.08 * w, top + h), color);
  paint(img, rect(cx + 0.08 * w, top + 0.6 * h, cx + 0.4 * w, top + h), color);

  if (rng.uniform() < options.occluder_probability) {
    const double ow = w * rng.uniform(0.4, 0.7);
    const double oh = h * rng.uniform(0.2, 0.45);
    const double ocx = cx + rng.uniform(-0.1, 0.1) * w;
    const double ocy = top + h * rng.uniform(0.35, 0.55);
    std::array<double, 3> fill{};
    for (double& c : fill) c = rng.uniform();
    paint(img, rect(ocx - ow / 2, ocy - oh / 2, ocx + ow / 2, ocy + oh / 2), fill);
  }
  return {cx - w / 2, top, cx + w / 2, top + h};
}

PixelBox draw_vehicle(Tensor& img, SeedableRng& rng, double x0, double y0, double w, double h) {
  const std::array<double, 3> body{rng.uniform(0.1, 0.3), rng.uniform(0.5, 0.8), rng.uniform(0.85, 1.0)};
  const double wheel = 0.12 * w;
  paint(img, rect(x0, y0, x0 + w, y0 + h - wheel), body);
  const std::array<double, 3> dark{0.05, 0.05, 0.05};
  paint(img, ellipse(x0 + 0.25 * w, y0 + h - wheel, wheel, wheel), dark);
  paint(img, ellipse(x0 + 0.75 * w, y0 + h - wheel, wheel, wheel), dark);
  return {x0, y0, x0 + w, y0 + h};
}

PixelBox draw_ball(Tensor& img, SeedableRng& rng, double cx, double cy, double r) {
  const std::array<double, 3> color{rng.uniform(0.1, 0.3), rng.uniform(0.8, 1.0), rng.uniform(0.1, 0.3)};
  paint(img, ellipse(cx, cy, r, r), color);
  return {cx - r, cy - r, cx + r, cy + r};
}

}  // namespace

ToySample make_toy_sample(std::uint64_t seed, const ToySceneOptions& options) {
  SeedableRng rng(seed);
  const int size = options.size;
  const double s = size;
  ToySample sample;
  sample.scene.image = background(rng, size, rng.uniform() < options.flat_background_probability);
  Tensor& img = sample.scene.image;

  std::vector<PixelBox> taken;
  for (int p = 0; p < options.persons; ++p) {
    const double h = rng.uniform(0.41, 0.69) * s;
    const double w = h * rng.uniform(0.36, 0.48);
    const double cx = rng.uniform(w / 2 + 1, s - w / 2 - 1);
    const double top = rng.uniform(1, s - h - 1);
    const PixelBox box = draw_person(img, rng, h, w, cx, top, options);
    taken.push_back(box);
    const PersonBox nb = normalized(box, size, kToyPerson);
    sample.scene.person_boxes.push_back(nb);
    sample.objects.push_back(nb);
  }

  if (rng.uniform() < options.distractor_probability) {
    const bool vehicle = rng.uniform() < 0.5;
    for (int attempt = 0; attempt < 20; ++attempt) {
      PixelBox candidate{};
      double a = 0, b = 0, c = 0, d = 0;
      if (vehicle) {
        c = rng.uniform(0.28, 0.47) * s;
        d = c * rng.uniform(0.4, 0.55);
        a = rng.uniform(1, s - c - 1);
        b = rng.uniform(1, s - d - 1);
        candidate = {a, b, a + c, b + d};
      } else {
        c = rng.uniform(0.08, 0.14) * s;
        a = rng.uniform(c + 1, s - c - 1);
        b = rng.uniform(c + 1, s - c - 1);
        candidate = {a - c, b - c, a + c, b + c};
      }
      const bool clash = std::any_of(taken.begin(), taken.end(),
                                     [&](const PixelBox& t) { return t.overlaps(candidate, 2.0); });
      if (clash) continue;
      const PixelBox drawn = vehicle ? draw_vehicle(img, rng, a, b, c, d) : draw_ball(img, rng, a, b, c);
      taken.push_back(drawn);
      sample.objects.push_back(normalized(drawn, size, vehicle ? kToyVehicle : kToyBall));
      break;
    }
  }
  return sample;
}

SceneSet make_toy_scene_set(std::uint64_t seed, int count, const std::string& prefix, SplitTag split,
                            const ToySceneOptions& options) {
  SceneSet set;
  set.split = split;
  for (int i = 0; i < count; ++i) {
    ToySample sample = make_toy_sample(mix_seed(seed, static_cast<std::uint64_t>(i)), options);
    char id[64];
    std::snprintf(id, sizeof id, "%s_%04d", prefix.c_str(), i);
    sample.scene.id = id;
    set.scenes.push_back(std::move(sample.scene));
  }
  return set;
}

Scene toy_canonical_scene() {
  SeedableRng rng(20240601);
  Scene scene;
  scene.id = "canonical";
  scene.image = background(rng, 64, false);
  ToySceneOptions plain;
  const PixelBox box = draw_person(scene.image, rng, 40.0, 17.0, 40.0, 20.0, plain);
  scene.person_boxes.push_back(normalized(box, 64, kToyPerson));
  return scene;
}

}  // namespace cloak::detector
