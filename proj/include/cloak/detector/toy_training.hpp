#pragma once

#include <cstdint>
#include <functional>

#include "cloak/detector/toy_detector.hpp"
#include "cloak/detector/toy_scenes.hpp"

namespace cloak::detector {

struct ToyTrainingConfig {
  int steps = 2000;
  int batch_size = 16;
  double learning_rate = 2e-3;
  std::uint64_t seed = 1;
  ToySceneOptions scenes{64, 1, 0.6, 0.0, 0.05};
};

// Scripted pre-training of the toy detector on freshly generated samples:
// logistic objectness loss on every box, softmax cross-entropy and
// center/size regression on the box responsible for each object.
ToyDetector pretrain_toy_detector(const ToyTrainingConfig& cfg,
                                  const std::function<void(int step, double loss)>& progress = {});

// Loss of one batch, exposed for tests. Accumulates parameter gradients.
double toy_training_loss(const ToyDetector& net, const std::vector<ToySample>& batch,
                         std::vector<Tensor>* gradients);

}  // namespace cloak::detector
