#pragma once

#include <vector>

#include "acl/tensor.hpp"

// Per-op forward kernels with explicit backward counterparts. Convolution and
// matrix products run through BLAS dgemm (im2col for conv); everything here is
// double precision and deterministic.
namespace acl::ops {

struct ConvDims {
  int out_h = 0, out_w = 0;
};
ConvDims conv2d_output_dims(const std::vector<int>& input_shape, const std::vector<int>& weight_shape,
                            int stride, int padding);

// input [N,C,H,W], weight [F,C,kh,kw], bias [F] -> [N,F,H',W']
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding);

struct Conv2dBackward {
  Tensor d_input;   // empty unless need_input_grad
  Tensor d_weight;  // empty unless need_param_grad
  Tensor d_bias;
};
Conv2dBackward conv2d_backward(const Tensor& d_out, const Tensor& input, const Tensor& weight,
                               int stride, int padding, bool need_input_grad = true,
                               bool need_param_grad = true);

// input [N,D], weight [O,D], bias [O] -> [N,O];  out = input * weight^T + bias
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

struct LinearBackward {
  Tensor d_input;
  Tensor d_weight;
  Tensor d_bias;
};
LinearBackward linear_backward(const Tensor& d_out, const Tensor& input, const Tensor& weight,
                               bool need_input_grad = true, bool need_param_grad = true);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& d_out, const Tensor& x);

// non-overlapping window pooling (stride == window)
struct MaxPoolResult {
  Tensor output;
  std::vector<int64_t> argmax;  // flat input index per output element
};
MaxPoolResult max_pool2d(const Tensor& x, int window);
Tensor max_pool2d_backward(const Tensor& d_out, const std::vector<int64_t>& argmax,
                           const std::vector<int>& input_shape);

// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& d_out, const std::vector<int>& input_shape);

// [N,C,H,W] -> [N,C,2H,2W]
Tensor upsample_nearest2x(const Tensor& x);
Tensor upsample_nearest2x_backward(const Tensor& d_out);

struct SoftmaxXent {
  double loss = 0.0;   // mean over rows of -log p[target]
  Tensor probs;        // [N,C], rows sum to 1
  Tensor d_logits;     // (probs - onehot)/N, empty unless need_grad
};
// logits [N,C], targets in [0,C); numerically stabilized via max-subtraction
SoftmaxXent softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                                  bool need_grad = true);

}  // namespace acl::ops
