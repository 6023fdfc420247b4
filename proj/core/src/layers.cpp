#include "acl/layers.hpp"

#include "acl/errors.hpp"

namespace acl {

namespace {
void require_recorded(bool recorded, const char* what) {
  if (!recorded) throw ContractError(std::string(what) + "::backward called without a recorded forward");
}
}  // namespace

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride_,
               int padding_, Rng& rng)
    : weight(name + ".weight", Tensor({out_channels, in_channels, kernel, kernel})),
      bias(name + ".bias", Tensor({out_channels})),
      stride(stride_),
      padding(padding_) {
  init_he_normal(weight.value, in_channels * kernel * kernel, rng);
}

Tensor Conv2d::forward(const Tensor& x, bool record) {
  if (record) {
    cached_input_ = x;
    recorded_ = true;
  }
  return ops::conv2d(x, weight.value, bias.value, stride, padding);
}

Tensor Conv2d::backward(const Tensor& d_out, bool need_input_grad) {
  require_recorded(recorded_, "Conv2d");
  const bool need_params = !weight.frozen;
  auto g = ops::conv2d_backward(d_out, cached_input_, weight.value, stride, padding, need_input_grad,
                                need_params);
  if (need_params) {
    weight.accumulate(g.d_weight.data);
    bias.accumulate(g.d_bias.data);
  }
  return need_input_grad ? std::move(g.d_input) : Tensor{};
}

void Conv2d::set_frozen(bool on) {
  weight.frozen = on;
  bias.frozen = on;
}

Linear::Linear(std::string name, int in_features, int out_features, Rng& rng)
    : weight(name + ".weight", Tensor({out_features, in_features})),
      bias(name + ".bias", Tensor({out_features})) {
  init_he_normal(weight.value, in_features, rng);
}

Tensor Linear::forward(const Tensor& x, bool record) {
  if (record) {
    cached_input_ = x;
    recorded_ = true;
  }
  return ops::linear(x, weight.value, bias.value);
}

Tensor Linear::backward(const Tensor& d_out, bool need_input_grad) {
  require_recorded(recorded_, "Linear");
  const bool need_params = !weight.frozen;
  auto g = ops::linear_backward(d_out, cached_input_, weight.value, need_input_grad, need_params);
  if (need_params) {
    weight.accumulate(g.d_weight.data);
    bias.accumulate(g.d_bias.data);
  }
  return need_input_grad ? std::move(g.d_input) : Tensor{};
}

void Linear::set_frozen(bool on) {
  weight.frozen = on;
  bias.frozen = on;
}

Tensor ReLU::forward(const Tensor& x, bool record) {
  if (record) {
    cached_input_ = x;
    recorded_ = true;
  }
  return ops::relu(x);
}

Tensor ReLU::backward(const Tensor& d_out) {
  require_recorded(recorded_, "ReLU");
  return ops::relu_backward(d_out, cached_input_);
}

Tensor MaxPool2d::forward(const Tensor& x, bool record) {
  auto r = ops::max_pool2d(x, window_);
  if (record) {
    argmax_ = std::move(r.argmax);
    input_shape_ = x.shape;
    recorded_ = true;
  }
  return std::move(r.output);
}

Tensor MaxPool2d::backward(const Tensor& d_out) {
  require_recorded(recorded_, "MaxPool2d");
  return ops::max_pool2d_backward(d_out, argmax_, input_shape_);
}

Tensor GlobalAvgPool::forward(const Tensor& x, bool record) {
  if (record) {
    input_shape_ = x.shape;
    recorded_ = true;
  }
  return ops::global_avg_pool(x);
}

Tensor GlobalAvgPool::backward(const Tensor& d_out) {
  require_recorded(recorded_, "GlobalAvgPool");
  return ops::global_avg_pool_backward(d_out, input_shape_);
}

}  // namespace acl
