#pragma once

#include "cloak/autodiff/tape.hpp"
#include "cloak/detector/grid.hpp"

namespace cloak::detector {

// Contract every detector backend implements: a fixed descriptor and a
// differentiable forward pass from an input-sized HxWx3 image to the raw
// S x S x B x (5 + C) tensor. Adapters are read-only after construction.
class DetectorAdapter {
 public:
  virtual ~DetectorAdapter() = default;
  virtual const Descriptor& descriptor() const = 0;
  virtual ad::Var forward(ad::Tape& tape, ad::Var image) const = 0;
};

// Resizes an arbitrary HxWx3 image to the detector input (bilinear).
ad::Var fit_to_input(ad::Tape& tape, ad::Var image, const Descriptor& d);

// Convenience value-level pass: fit, forward, decode.
DetectionGrid run_detector(const DetectorAdapter& detector, const Tensor& image);

}  // namespace cloak::detector
