#pragma once

#include <vector>

#include "mdn/tensor.hpp"

namespace mdn {

// Elementwise; operand shapes must match exactly or one side must be a
// scalar (numel == 1). Broadcasting beyond scalar is rejected.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor neg(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor abs_op(const Tensor& a);  // subgradient at 0 is 0
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);

/// Sum of all elements, returned as a scalar tensor.
Tensor sum_all(const Tensor& a);

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

/// Same-padded stride-1 correlation. x: [ci,h,w], w: [co,ci,kh,kw], b: [co].
/// Kernel extents must be odd.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);

/// Per-channel same-padded correlation. x: [c,h,w], kernel: [c,kh,kw].
Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel);

/// Normalize to zero mean / unit variance over `axis`, then scale and shift.
/// gain/bias have length shape[axis]; axis may be negative (-1 = last).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                  int axis = -1);

/// 2x2 average pooling with ceil semantics; border cells average over the
/// cells that exist. [c,h,w] -> [c,ceil(h/2),ceil(w/2)].
Tensor avg_pool2(const Tensor& x);

/// Nearest-neighbour upsampling to an explicit target size (inverse of
/// avg_pool2's ceil shapes). [c,h,w] -> [c,out_h,out_w].
Tensor upsample_nearest2(const Tensor& x, int out_h, int out_w);

/// Concatenate along the channel axis: [ca,h,w] + [cb,h,w] -> [ca+cb,h,w].
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Same data, new extents (numel must match).
Tensor reshape(const Tensor& x, std::vector<int> shape);

/// Permute columns: out[ch][k] = x[ch][order[k]]. `order` must be a
/// permutation of 0..L-1; x is [c,L].
Tensor gather_cols(const Tensor& x, const std::vector<int>& order);

}  // namespace mdn
