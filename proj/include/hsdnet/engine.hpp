#pragma once

#include "hsdnet/tensor.hpp"

namespace hsdnet {

// Layer kernels over NCHW tensors. All kernels accumulate in a fixed order
// (input channels, then kernel rows, then kernel columns) so repeated runs
// are bit-identical.

// x: (N,I,H,W), w: (O,I,KH,KW), b: (O). Zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gy, int stride, int pad,
                     Tensor* gx, Tensor* gw, Tensor* gb);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& gy);

// 2x2 window, stride 2; even spatial extents required. Ties go to the first
// maximum in row-major window order.
Tensor maxpool2x2(const Tensor& x);
Tensor maxpool2x2_backward(const Tensor& x, const Tensor& gy);

// (N,C,H,W) -> (N,C)
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& x, const Tensor& gy);

// x: (N,I), w: (O,I), b: (O) -> (N,O)
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);
void dense_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                    Tensor* gx, Tensor* gw, Tensor* gb);

// Row-wise softmax with max subtraction; output rows sum to 1.
Tensor softmax_rows(const Tensor& z);
// gp is the gradient at the softmax output p; returns the gradient at the logits.
Tensor softmax_backward(const Tensor& p, const Tensor& gp);

// Per-channel multiply y[n,c,:,:] = s[c] * x[n,c,:,:].
Tensor scale_channels(const Tensor& x, const std::vector<double>& s);
// Gradients of a per-channel scale given the unscaled input and the output gradient.
std::vector<double> scale_channels_grad(const Tensor& x, const Tensor& gy);
Tensor scale_channels_backward_input(const Tensor& gy, const std::vector<double>& s);

// Per-channel affine y = s[c]*x + t[c] over (N,C,H,W); s,t: (C).
Tensor channel_affine(const Tensor& x, const Tensor& s, const Tensor& t);
void channel_affine_backward(const Tensor& x, const Tensor& s, const Tensor& gy,
                             Tensor* gx, Tensor* gs, Tensor* gt);

}  // namespace hsdnet
