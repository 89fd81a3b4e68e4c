#include "cloak/core/tensor.hpp"

#include <algorithm>
#include <stdexcept>

namespace cloak {

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != element_count(shape_)) {
    throw std::invalid_argument("tensor data size does not match shape");
  }
}

Tensor Tensor::image(int height, int width, int channels, double fill) {
  return Tensor({height, width, channels}, fill);
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

}  // namespace cloak
