#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cloak/detector/adapter.hpp"

namespace cloak::detector {

struct ConvLayer {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 0;
  bool leaky = true;
  Tensor weight;  // [out][k][k][in]
  Tensor bias;    // [out]
};

// Five-layer convolutional grid detector used as a desk-scale stand-in for
// a pretrained model. Default: 64x64 input, S = 4, B = 1, C = 3, person = 0.
//
// Fixture layout (a directory): descriptor.json carries the descriptor,
// layer shapes and byte offsets; weights.bin holds the named float32 arrays
// back to back in little-endian order.
class ToyDetector final : public DetectorAdapter {
 public:
  static constexpr int kFixtureVersion = 1;
  static constexpr double kLeakySlope = 0.1;

  // Throws std::runtime_error for a missing or corrupt fixture.
  static ToyDetector load(const std::filesystem::path& fixture_dir);
  // Fresh He-initialized network with the default architecture.
  static ToyDetector initialize(std::uint64_t seed);

  void save(const std::filesystem::path& fixture_dir) const;

  const Descriptor& descriptor() const override { return descriptor_; }
  // Weights enter the tape as constants.
  ad::Var forward(ad::Tape& tape, ad::Var image) const override;
  // params holds (weight, bias) vars per layer, in layer order.
  ad::Var forward(ad::Tape& tape, ad::Var image, const std::vector<ad::Var>& params) const;

  std::vector<Tensor> parameters() const;
  void set_parameters(const std::vector<Tensor>& params);
  const std::vector<ConvLayer>& layers() const { return layers_; }

 private:
  ToyDetector(Descriptor d, std::vector<ConvLayer> layers);

  Descriptor descriptor_;
  std::vector<ConvLayer> layers_;
};

// Fixture shipped with the source tree.
std::filesystem::path default_toy_fixture_dir();

}  // namespace cloak::detector
