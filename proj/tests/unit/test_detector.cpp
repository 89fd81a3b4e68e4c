#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "cloak/autodiff/ops.hpp"
#include "cloak/core/hash.hpp"
#include "cloak/detector/adapter.hpp"
#include "cloak/detector/grid.hpp"
#include "cloak/detector/nms.hpp"
#include "cloak/detector/toy_detector.hpp"
#include "cloak/detector/toy_scenes.hpp"
#include "cloak/detector/toy_training.hpp"
#include "../support/oracles.hpp"
#include "../support/test_support.hpp"

using namespace cloak;
using namespace cloak::detector;
using cloak::testing::random_tensor;
using cloak::testing::TempDir;

namespace {

const ToyDetector& fixture() {
  static const ToyDetector det = ToyDetector::load(default_toy_fixture_dir());
  return det;
}

Descriptor big_descriptor() {
  Descriptor d;
  d.grid = 13;
  d.boxes = 5;
  d.classes = 80;
  d.anchors.assign(5, {1.0, 1.0});
  return d;
}

DetectionGrid one_box_grid(double p_obj, std::vector<double> class_probs) {
  DetectionGrid g;
  g.grid = 1;
  g.boxes = 1;
  g.classes = static_cast<int>(class_probs.size());
  g.objectness = {p_obj};
  g.class_probs = std::move(class_probs);
  g.geometry = {{0.5, 0.5, 0.2, 0.2}};
  return g;
}

Detection det_at(double cx, double cy, double w, double h, double score, int cls = 0) {
  return {{cx, cy, w, h}, score, cls};
}

}  // namespace

TEST_SUITE("detector") {

TEST_CASE("decode: zero logit gives one half, equal logits give uniform classes") {
  Descriptor d;
  const Tensor raw({d.box_count() * d.row_length()});
  const DetectionGrid g = decode_grid(raw, d);
  for (std::size_t n = 0; n < g.box_count(); ++n) {
    CHECK(g.objectness[n] == 0.5);
    for (int c = 0; c < d.classes; ++c) CHECK(g.class_prob(n, c) == doctest::Approx(1.0 / 3.0));
  }
}

TEST_CASE("decode: geometry follows the anchor rule") {
  Descriptor d;
  Tensor raw({d.box_count() * d.row_length()});
  const int row = 2, col = 3;
  const std::size_t n = static_cast<std::size_t>(row * d.grid + col);
  const std::size_t base = n * d.row_length();
  raw[base + 0] = 0.4;
  raw[base + 1] = -1.2;
  raw[base + 2] = 0.3;
  raw[base + 3] = -0.5;
  const BoxGeometry b = decode_grid(raw, d).geometry[n];
  const auto logistic = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  CHECK(b.cx == doctest::Approx((col + logistic(0.4)) / 4));
  CHECK(b.cy == doctest::Approx((row + logistic(-1.2)) / 4));
  CHECK(b.w == doctest::Approx(1.0 * std::exp(0.3) / 4));
  CHECK(b.h == doctest::Approx(1.5 * std::exp(-0.5) / 4));
}

TEST_CASE("decode: class rows match an independent softmax on a 13x13x5x85 tensor") {
  const Descriptor d = big_descriptor();
  const Tensor raw = random_tensor({13, 13, 5, 85}, 21, -6.0, 6.0);
  const DetectionGrid g = decode_grid(raw, d);
  REQUIRE(g.box_count() == 845);
  for (std::size_t n = 0; n < g.box_count(); ++n) {
    const double* logits = &raw.data()[n * 85 + 5];
    const double top = *std::max_element(logits, logits + 80);
    double z = 0.0;
    for (int c = 0; c < 80; ++c) z += std::exp(logits[c] - top);
    double total = 0.0;
    for (int c = 0; c < 80; ++c) {
      CHECK(g.class_prob(n, c) == doctest::Approx(std::exp(logits[c] - top) / z).epsilon(1e-10));
      total += g.class_prob(n, c);
    }
    CHECK(std::abs(total - 1.0) <= 1e-5);
    CHECK(g.objectness[n] >= 0.0);
    CHECK(g.objectness[n] <= 1.0);
  }
}

TEST_CASE("decode: errors on shape mismatch and non-finite input") {
  Descriptor d;
  CHECK_THROWS_AS(decode_grid(Tensor({7}), d), std::invalid_argument);
  Tensor raw({d.box_count() * d.row_length()});
  raw[3] = std::nan("");
  CHECK_THROWS_AS(decode_grid(raw, d), std::invalid_argument);
}

TEST_CASE("person score: max and product examples") {
  DetectionGrid g;
  g.grid = 1;
  g.boxes = 3;
  g.classes = 2;
  g.objectness = {1.0, 1.0, 1.0};
  g.class_probs = {0.1, 0.9, 0.9, 0.1, 0.3, 0.7};
  g.geometry.resize(3);
  CHECK(extract_person_score(g, 0) == doctest::Approx(0.9));
  CHECK(extract_person_score(one_box_grid(0.8, {0.5, 0.5}), 0) == doctest::Approx(0.40));
  CHECK(extract_person_score(one_box_grid(0.8, {0.5, 0.5}), 0, ScoreMode::kClassOnly) == doctest::Approx(0.5));
  CHECK_THROWS_AS(extract_person_score(g, 2), std::out_of_range);
  CHECK_THROWS_AS(extract_person_score(g, -1), std::out_of_range);
}

TEST_CASE("person score: equals an exhaustive scan on a random 13x13x5 grid") {
  const Descriptor d = big_descriptor();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const DetectionGrid g = decode_grid(random_tensor({13, 13, 5, 85}, seed, -4.0, 4.0), d);
    CHECK(extract_person_score(g, 0) == oracle::person_score(g, 0));
    CHECK(extract_person_score(g, 17) == oracle::person_score(g, 17));
  }
}

TEST_CASE("person score: tape value matches and gradient reaches only the argmax box") {
  Descriptor d;
  const Tensor raw = random_tensor({d.box_count() * d.row_length()}, 31, -3.0, 3.0);
  ad::Tape t;
  const ad::Var r = t.variable(raw);
  const ad::Var s = extract_person_score(t, decode_grid(t, r, d), 0);
  const DetectionGrid values = decode_grid(raw, d);
  CHECK(t.value(s)[0] == doctest::Approx(oracle::person_score(values, 0)).epsilon(1e-12));
  t.backward(s);
  const Tensor g = t.gradient(r);
  int touched_boxes = 0;
  for (int n = 0; n < d.box_count(); ++n) {
    bool any = false;
    for (int k = 0; k < d.row_length(); ++k) any = any || g[static_cast<std::size_t>(n * d.row_length() + k)] != 0.0;
    touched_boxes += any ? 1 : 0;
  }
  CHECK(touched_boxes == 1);
}

TEST_CASE("person score is invariant to shifting the class logits") {
  Descriptor d;
  const Tensor raw = random_tensor({d.box_count() * d.row_length()}, 41, -3.0, 3.0);
  Tensor shifted = raw;
  for (int n = 0; n < d.box_count(); ++n)
    for (int c = 5; c < d.row_length(); ++c) shifted[static_cast<std::size_t>(n * d.row_length() + c)] += 7.5;
  CHECK(std::abs(extract_person_score(decode_grid(raw, d), 0) - extract_person_score(decode_grid(shifted, d), 0)) <=
        1e-7);
}

TEST_CASE("nms: identical boxes collapse to the higher score") {
  const DetectionGrid g = [] {
    DetectionGrid x;
    x.grid = 1;
    x.boxes = 2;
    x.classes = 2;
    x.objectness = {0.9, 0.8};
    x.class_probs = {1.0, 0.0, 1.0, 0.0};
    x.geometry = {{0.5, 0.5, 0.3, 0.6}, {0.5, 0.5, 0.3, 0.6}};
    return x;
  }();
  const auto dets = detect_persons(g, 0, 0.5, 0.4);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].score == doctest::Approx(0.9));
  CHECK(detect_persons(g, 0, 0.95, 0.4).empty());
  CHECK_THROWS_AS(detect_persons(g, 0, 0.0, 0.4), std::invalid_argument);
  CHECK_THROWS_AS(detect_persons(g, 0, 0.5, 1.0), std::invalid_argument);
}

TEST_CASE("nms: other classes neither suppress persons nor are returned") {
  std::vector<Detection> c{det_at(0.5, 0.5, 0.2, 0.2, 0.9, 1), det_at(0.5, 0.5, 0.2, 0.2, 0.8, 0)};
  CHECK(non_max_suppression(c, 0.4).size() == 2);
}

TEST_CASE("nms: matches the O(n^2) reference and ignores input order") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SeedableRng rng(seed);
    std::vector<Detection> boxes;
    for (int i = 0; i < 10; ++i) {
      boxes.push_back(det_at(rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.1, 0.4),
                             rng.uniform(0.1, 0.4), rng.uniform(0.5, 1.0), static_cast<int>(rng.below(2))));
    }
    const auto expected = oracle::nms(boxes, 0.4);
    const auto got = non_max_suppression(boxes, 0.4);
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].box == expected[i].box);
      CHECK(got[i].score == expected[i].score);
    }
    std::vector<Detection> shuffled = boxes;
    std::reverse(shuffled.begin(), shuffled.end());
    std::swap(shuffled[1], shuffled[6]);
    const auto again = non_max_suppression(shuffled, 0.4);
    REQUIRE(again.size() == got.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(again[i].box == got[i].box);
  }
}

TEST_CASE("iou agrees with the reference") {
  SeedableRng rng(3);
  for (int i = 0; i < 50; ++i) {
    const BoxGeometry a{rng.uniform(), rng.uniform(), rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5)};
    const BoxGeometry b{rng.uniform(), rng.uniform(), rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5)};
    CHECK(iou(a, b) == doctest::Approx(oracle::box_iou(a, b)).epsilon(1e-12));
  }
  CHECK(iou({0.5, 0.5, 0.2, 0.2}, {0.5, 0.5, 0.2, 0.2}) == doctest::Approx(1.0));
}

TEST_CASE("toy fixture: checksum, gates and frozen blank score") {
  std::ifstream desc(default_toy_fixture_dir() / "descriptor.json");
  const std::string text((std::istreambuf_iterator<char>(desc)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"weights_fnv1a\": \"c86f6495986f037b\"") != std::string::npos);

  const ToyDetector& det = fixture();
  const Descriptor& d = det.descriptor();
  CHECK(d.grid == 4);
  CHECK(d.boxes == 1);
  CHECK(d.classes == 3);
  const double blank = extract_person_score(run_detector(det, Tensor::image(64, 64, 3)), 0);
  CHECK(blank < 0.3);
  CHECK(blank == doctest::Approx(0.000956190345034).epsilon(1e-6));
  CHECK(extract_person_score(run_detector(det, toy_canonical_scene().image), 0) > 0.7);
}

TEST_CASE("toy fixture: forward is deterministic and input size is enforced") {
  const Tensor img = random_tensor({64, 64, 3}, 5);
  ad::Tape t1, t2;
  const Tensor a = t1.value(fixture().forward(t1, t1.constant(img)));
  const Tensor b = t2.value(fixture().forward(t2, t2.constant(img)));
  CHECK(a == b);
  ad::Tape t3;
  CHECK_THROWS_AS(fixture().forward(t3, t3.constant(Tensor::image(32, 64, 3))), std::invalid_argument);
  CHECK_THROWS_AS(ToyDetector::load("/nonexistent/fixture"), std::runtime_error);
}

TEST_CASE("toy fixture: corrupt weights are rejected") {
  TempDir dir("fixture");
  fixture().save(dir.path());
  CHECK_NOTHROW(ToyDetector::load(dir.path()));
  {
    std::fstream f(dir.path() / "weights.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(10);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(ToyDetector::load(dir.path()), std::runtime_error);
}

TEST_CASE("toy fixture: input gradient matches finite differences") {
  const Tensor img = random_tensor({64, 64, 3}, 77);
  const auto f = [](ad::Tape& t, ad::Var x) {
    const Descriptor& d = fixture().descriptor();
    return extract_person_score(t, decode_grid(t, fixture().forward(t, x), d), 0);
  };
  const auto r = cloak::testing::check_gradient(f, img, cloak::testing::sample_indices(img.size(), 20, 9), 1e-3);
  CHECK(r.checked == 20);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("fit_to_input resizes arbitrary images") {
  ad::Tape t;
  const ad::Var v = fit_to_input(t, t.constant(Tensor::image(100, 80, 3, 0.5)), fixture().descriptor());
  CHECK(t.value(v).shape() == std::vector<int>{64, 64, 3});
}

TEST_CASE("toy scenes are deterministic and boxes stay inside the image") {
  const ToySample a = make_toy_sample(4), b = make_toy_sample(4);
  CHECK(a.scene.image == b.scene.image);
  const SceneSet set = make_toy_scene_set(3, 10, "s", SplitTag::kTrain);
  CHECK(set.scenes.size() == 10);
  for (const Scene& s : set.scenes)
    for (const PersonBox& p : s.person_boxes) {
      CHECK(p.cx - p.w / 2 >= -1e-9);
      CHECK(p.cx + p.w / 2 <= 1 + 1e-9);
      CHECK(p.cy + p.h / 2 <= 1 + 1e-9);
    }
}

TEST_CASE("toy pre-training lowers the batch loss") {
  ToyTrainingConfig cfg;
  cfg.steps = 30;
  cfg.batch_size = 4;
  std::vector<double> losses;
  pretrain_toy_detector(cfg, [&](int, double loss) { losses.push_back(loss); });
  REQUIRE(losses.size() >= 2);
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 5; ++i) {
    early += losses[static_cast<std::size_t>(i)];
    late += losses[losses.size() - 1 - static_cast<std::size_t>(i)];
  }
  CHECK(late < early);
}

TEST_CASE("toy training loss gradient matches finite differences for a few weights") {
  const ToyDetector net = ToyDetector::initialize(3);
  std::vector<ToySample> batch{make_toy_sample(1), make_toy_sample(2)};
  std::vector<Tensor> grads;
  toy_training_loss(net, batch, &grads);
  std::vector<Tensor> params = net.parameters();
  const double h = 1e-5;
  for (std::size_t layer : {std::size_t{0}, params.size() - 2, params.size() - 1}) {
    for (std::size_t i : {std::size_t{0}, params[layer].size() / 2}) {
      ToyDetector plus = net, minus = net;
      auto p = params, m = params;
      p[layer][i] += h;
      m[layer][i] -= h;
      plus.set_parameters(p);
      minus.set_parameters(m);
      const double numeric =
          (toy_training_loss(plus, batch, nullptr) - toy_training_loss(minus, batch, nullptr)) / (2 * h);
      const double analytic = grads[layer][i];
      CHECK(std::abs(numeric - analytic) <= 1e-4 * std::max({std::abs(numeric), std::abs(analytic), 1e-3}));
    }
  }
}

}  // TEST_SUITE
