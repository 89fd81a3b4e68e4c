#include "cloak/autodiff/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace cloak::ad {

Adam::Adam(std::size_t size, AdamHyper hyper) : hyper_(hyper), m_(size, 0.0), v_(size, 0.0) {
  if (!(hyper.beta1 >= 0 && hyper.beta1 < 1) || !(hyper.beta2 >= 0 && hyper.beta2 < 1) || !(hyper.eps > 0)) {
    throw std::invalid_argument("Adam: beta1, beta2 must lie in [0, 1) and eps > 0");
  }
}

void Adam::step(std::span<double> params, std::span<const double> grads, double step_size) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("Adam: parameter block size changed");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = hyper_.beta1 * m_[i] + (1.0 - hyper_.beta1) * grads[i];
    v_[i] = hyper_.beta2 * v_[i] + (1.0 - hyper_.beta2) * grads[i] * grads[i];
    params[i] -= step_size * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + hyper_.eps);
  }
}

void Adam::restore(std::int64_t steps, std::vector<double> m, std::vector<double> v) {
  if (m.size() != m_.size() || v.size() != v_.size() || steps < 0) {
    throw std::invalid_argument("Adam: restored state does not match parameter block");
  }
  t_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace cloak::ad
