#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cloak {

// Dense row-major tensor of doubles. Images use rank-3 HWC layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor image(int height, int width, int channels = 3, double fill = 0.0);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // HWC accessors; only valid for rank-3 tensors.
  int height() const { return shape_[0]; }
  int width() const { return shape_[1]; }
  int channels() const { return shape_[2]; }
  double& at(int y, int x, int c) {
    return data_[(static_cast<std::size_t>(y) * shape_[1] + x) * shape_[2] + c];
  }
  double at(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * shape_[1] + x) * shape_[2] + c];
  }

  Tensor reshaped(std::vector<int> shape) const;
  void fill(double value);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::size_t element_count(const std::vector<int>& shape);

}  // namespace cloak
