#pragma once

#include <cstdint>
#include <vector>

#include "tsa/rng.hpp"
#include "tsa/tensor.hpp"

namespace tsa {

// Boolean validity mask (1 = valid, 0 = masked), broadcastable against the
// tensor it applies to. Masks never carry gradients.
struct Mask {
  Shape shape;
  std::vector<std::uint8_t> valid;
};

// Elementwise ops broadcast both operands numpy-style; gradients reduce back
// over the broadcast axes automatically.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor pow_scalar(const Tensor& x, double p);  // caller keeps x in p's domain

// Matrix product over the last two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x, std::size_t dim_a, std::size_t dim_b);
Tensor reshape(const Tensor& x, Shape new_shape);

Tensor relu(const Tensor& x);  // subgradient at 0 is 0
Tensor tanh_op(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Softmax over the last axis with max-subtraction. Masked positions get
// weight exactly 0; a fully-masked row raises InvalidMaskError.
Tensor softmax_masked(const Tensor& x, const Mask* mask = nullptr);

// Per-position standardization over the last axis, then affine. gain and
// bias have shape [D] where D is the last extent.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// Inverted dropout: train mode zeroes each element with probability p and
// scales survivors by 1/(1-p); eval mode is the identity.
Tensor dropout(const Tensor& x, double p, Mode mode, Rng* rng);

// Mean over the batch of cross-entropy against the smoothed target
// (1-eps_ls) * onehot + eps_ls / C.
Tensor label_smoothed_ce(const Tensor& logits, const std::vector<int>& labels,
                         double eps_ls);

Tensor sum_all(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim = false);

Tensor concat_last(const std::vector<Tensor>& parts);
Tensor slice_last(const Tensor& x, std::size_t start, std::size_t len);
Tensor slice_time(const Tensor& x, std::size_t t);    // [B,T,...] -> [B,...]
Tensor stack_time(const std::vector<Tensor>& steps);  // T x [B,...] -> [B,T,...]

}  // namespace tsa
