#include "cloak/detector/toy_training.hpp"

#include <cmath>

#include "cloak/autodiff/adam.hpp"
#include "cloak/autodiff/ops.hpp"
#include "cloak/core/rng.hpp"

namespace cloak::detector {
namespace {

constexpr double kObjectWeight = 2.0;
constexpr double kNoObjectWeight = 1.0;
constexpr double kCenterWeight = 4.0;
constexpr double kSizeWeight = 1.0;

}  // namespace

double toy_training_loss(const ToyDetector& net, const std::vector<ToySample>& batch,
                         std::vector<Tensor>* gradients) {
  const Descriptor& d = net.descriptor();
  const int n = d.box_count();
  const int row = d.row_length();
  ad::Tape tape;
  std::vector<ad::Var> params;
  for (const auto& p : net.parameters()) params.push_back(gradients ? tape.variable(p) : tape.constant(p));

  std::vector<ad::Var> terms;
  for (const auto& sample : batch) {
    const ad::Var raw = net.forward(tape, tape.constant(sample.scene.image), params);

    Tensor obj_target({n}, 0.0), obj_weight({n}, kNoObjectWeight);
    std::vector<int> cls_target(static_cast<std::size_t>(n), 0);
    Tensor cls_weight({n}, 0.0);
    Tensor xy_target({n, 2}, 0.0), xy_weight({n, 2}, 0.0);
    Tensor wh_target({n, 2}, 0.0), wh_weight({n, 2}, 0.0);
    for (const auto& obj : sample.objects) {
      const int gx = std::min(d.grid - 1, static_cast<int>(obj.cx * d.grid));
      const int gy = std::min(d.grid - 1, static_cast<int>(obj.cy * d.grid));
      // Single anchor slot per cell for the default descriptor; pick the
      // anchor with the closest aspect otherwise.
      int best = 0;
      for (int b = 1; b < d.boxes; ++b) {
        const auto ratio = [&](int k) { return std::abs(std::log(d.anchors[k][1] / d.anchors[k][0] * obj.w / obj.h)); };
        if (ratio(b) < ratio(best)) best = b;
      }
      const int i = (gy * d.grid + gx) * d.boxes + best;
      obj_target[i] = 1.0;
      obj_weight[i] = kObjectWeight;
      cls_target[static_cast<std::size_t>(i)] = obj.label;
      cls_weight[i] = 1.0;
      xy_target[i * 2] = obj.cx * d.grid - gx;
      xy_target[i * 2 + 1] = obj.cy * d.grid - gy;
      xy_weight[i * 2] = xy_weight[i * 2 + 1] = kCenterWeight;
      wh_target[i * 2] = std::log(obj.w * d.grid / d.anchors[best][0]);
      wh_target[i * 2 + 1] = std::log(obj.h * d.grid / d.anchors[best][1]);
      wh_weight[i * 2] = wh_weight[i * 2 + 1] = kSizeWeight;
    }
    const ad::Var obj_logits = ad::columns(tape, raw, row, 4, 5);
    const ad::Var cls_logits = ad::columns(tape, raw, row, 5, row);
    const ad::Var xy = ad::sigmoid(tape, ad::columns(tape, raw, row, 0, 2));
    const ad::Var wh = ad::columns(tape, raw, row, 2, 4);
    terms.push_back(ad::bce_with_logits(tape, obj_logits, obj_target, obj_weight));
    terms.push_back(ad::softmax_cross_entropy(tape, cls_logits, d.classes, cls_target, cls_weight));
    terms.push_back(ad::weighted_squared_error(tape, xy, xy_target, xy_weight));
    terms.push_back(ad::weighted_squared_error(tape, wh, wh_target, wh_weight));
  }
  const ad::Var loss = ad::scale(tape, ad::add_n(tape, terms), 1.0 / static_cast<double>(batch.size()));
  if (gradients) {
    tape.backward(loss);
    gradients->clear();
    for (ad::Var p : params) gradients->push_back(tape.gradient(p));
  }
  return tape.value(loss)[0];
}

ToyDetector pretrain_toy_detector(const ToyTrainingConfig& cfg,
                                  const std::function<void(int, double)>& progress) {
  ToyDetector net = ToyDetector::initialize(cfg.seed);
  std::vector<Tensor> params = net.parameters();
  std::size_t total = 0;
  for (const auto& p : params) total += p.size();
  std::vector<double> flat(total), grad(total);
  ad::Adam adam(total, {});

  SeedableRng rng(mix_seed(cfg.seed, 0x70726574ULL));
  std::vector<Tensor> grads;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<ToySample> batch;
    for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(make_toy_sample(rng.next_u64(), cfg.scenes));
    const double loss = toy_training_loss(net, batch, &grads);

    std::size_t k = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (std::size_t j = 0; j < params[i].size(); ++j, ++k) {
        flat[k] = params[i][j];
        grad[k] = grads[i][j];
      }
    }
    // Cosine decay to 5% of the base rate.
    const double frac = static_cast<double>(step) / cfg.steps;
    const double lr = cfg.learning_rate * (0.05 + 0.95 * 0.5 * (1 + std::cos(3.141592653589793 * frac)));
    adam.step(flat, grad, lr);
    k = 0;
    for (auto& p : params) {
      for (double& v : p.data()) v = flat[k++];
    }
    net.set_parameters(params);
    if (progress) progress(step, loss);
  }
  return net;
}

}  // namespace cloak::detector
