#include "cloak/detector/adapter.hpp"

#include "cloak/autodiff/ops.hpp"

namespace cloak::detector {

ad::Var fit_to_input(ad::Tape& tape, ad::Var image, const Descriptor& d) {
  const Tensor& v = tape.value(image);
  if (v.height() == d.input_height && v.width() == d.input_width) return image;
  return ad::resample(tape, image, ad::resize_warp(v.height(), v.width(), d.input_height, d.input_width));
}

DetectionGrid run_detector(const DetectorAdapter& detector, const Tensor& image) {
  ad::Tape tape;
  const auto& d = detector.descriptor();
  const ad::Var in = fit_to_input(tape, tape.constant(image), d);
  const ad::Var raw = detector.forward(tape, in);
  return grid_values(tape, decode_grid(tape, raw, d));
}

}  // namespace cloak::detector
