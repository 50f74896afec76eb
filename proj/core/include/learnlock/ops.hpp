#pragma once

#include <vector>

#include "learnlock/tensor.hpp"

namespace learnlock::ops {

// Elementwise binary ops. The right operand may be (a) the same shape,
// (b) a scalar, (c) the left shape minus its leading dimension (applied per
// leading index), or (d) a per-channel vector [C] against [N,C,H,W].
// Anything else is a shape error; reshape explicitly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, float c);
Tensor mul_scalar(const Tensor& a, float c);

/// a [m,k] x b [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

/// x [N,Ci,H,W], w [Co,Ci,kh,kw], optional bias [Co]; zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride = 1, int pad = 0);
Tensor conv2d(const Tensor& x, const Tensor& w, int stride = 1, int pad = 0);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);

/// Row-wise softmax over the last dimension of a 2-D tensor.
Tensor softmax(const Tensor& logits);

/// Mean cross-entropy with integer labels; numerically stable log-sum-exp.
Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels);

/// Mean cross-entropy against per-row probability targets [N,K].
Tensor cross_entropy_soft(const Tensor& logits, const Tensor& targets);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// clamp to [lo, hi]; the projection used when rebuilding perturbed images.
Tensor clip(const Tensor& x, float lo, float hi);

/// 2x2 max pooling, stride 2. Odd trailing rows/cols are dropped.
Tensor max_pool2d(const Tensor& x);

/// [N,C,H,W] -> [N,C] spatial mean.
Tensor global_avg_pool(const Tensor& x);

/// Shape change with gradient flow.
Tensor reshape(const Tensor& x, Shape shape);

// Raw (non-autodiff) kernels, shared with spectral normalization and the
// inference-only lock paths.
namespace raw {

void conv2d_forward(const float* x, const float* w, const float* bias,
                    float* y, int N, int Ci, int H, int W, int Co, int kh, int kw,
                    int stride, int pad);

/// Adjoint of conv2d w.r.t. its input (a transposed convolution).
void conv2d_grad_input(const float* dy, const float* w, float* dx,
                       int N, int Ci, int H, int W, int Co, int kh, int kw,
                       int stride, int pad);

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

}  // namespace raw

}  // namespace learnlock::ops
