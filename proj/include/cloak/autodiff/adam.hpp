#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cloak::ad {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over one flat parameter block. State is plain data so it can be
// checkpointed and restored bit for bit.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t size, AdamHyper hyper);

  // params -= step_size * m_hat / (sqrt(v_hat) + eps)
  void step(std::span<double> params, std::span<const double> grads, double step_size);

  const AdamHyper& hyper() const { return hyper_; }
  std::int64_t steps() const { return t_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }
  void restore(std::int64_t steps, std::vector<double> m, std::vector<double> v);

 private:
  AdamHyper hyper_;
  std::int64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace cloak::ad
