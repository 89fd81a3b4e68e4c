#pragma once

#include <vector>

#include "cloak/autodiff/tape.hpp"
#include "cloak/autodiff/warp.hpp"

namespace cloak::ad {

// Elementwise; operands must have equal element counts.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double factor);
Var add_scalar(Tape& t, Var a, double offset);
Var mul_const(Tape& t, Var a, const Tensor& factors);
Var add_const(Tape& t, Var a, const Tensor& offsets);
Var clamp_unit(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var exp(Tape& t, Var a);
Var leaky_relu(Tape& t, Var a, double slope);

// Sum of scalars (or equal-shaped tensors).
Var add_n(Tape& t, const std::vector<Var>& terms);

// Reductions to a one-element tensor.
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);
// Gradient flows to the first maximal element only.
Var max_all(Tape& t, Var a);

// Row-wise ops over a tensor viewed as rows of row_len contiguous values.
Var softmax_rows(Tape& t, Var a, int row_len);
Var row_max(Tape& t, Var a, int row_len);
Var columns(Tape& t, Var a, int row_len, int begin, int end);

Var gather(Tape& t, Var a, const std::vector<int>& indices);

// HWC convolution; weight is [out][k][k][in], bias is [out].
Var conv2d(Tape& t, Var input, Var weight, Var bias, int stride, int pad);

// Channel-wise resampling of an HxWxC tensor through a Warp.
Var resample(Tape& t, Var src, const Warp& warp);
// out = mask ? over : base, per pixel; mask is {H, W}.
Var select(Tape& t, Var base, Var over, const Tensor& mask);

// Sums used by detector pre-training.
Var bce_with_logits(Tape& t, Var logits, const Tensor& targets, const Tensor& weights);
Var softmax_cross_entropy(Tape& t, Var logits, int row_len, const std::vector<int>& targets,
                          const Tensor& row_weights);
Var weighted_squared_error(Tape& t, Var a, const Tensor& targets, const Tensor& weights);

}  // namespace cloak::ad
