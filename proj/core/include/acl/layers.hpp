#pragma once

#include <string>
#include <vector>

#include "acl/ops.hpp"
#include "acl/tensor.hpp"

// Thin stateful wrappers over the ops kernels. forward(x, record=true) caches
// whatever the matching backward needs; backward accumulates parameter
// gradients (skipped while frozen) and returns the input gradient.
namespace acl {

class Conv2d {
public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int padding,
         Rng& rng);

  Tensor forward(const Tensor& x, bool record = true);
  Tensor backward(const Tensor& d_out, bool need_input_grad = true);

  std::vector<Parameter*> params() { return {&weight, &bias}; }
  void set_frozen(bool on);

  Parameter weight;  // [F,C,kh,kw]
  Parameter bias;    // [F]
  int stride = 1, padding = 0;

private:
  Tensor cached_input_;
  bool recorded_ = false;
};

class Linear {
public:
  Linear() = default;  // empty shell, filled by assignment or checkpoint load
  Linear(std::string name, int in_features, int out_features, Rng& rng);

  Tensor forward(const Tensor& x, bool record = true);
  Tensor backward(const Tensor& d_out, bool need_input_grad = true);

  std::vector<Parameter*> params() { return {&weight, &bias}; }
  void set_frozen(bool on);
  int in_features() const { return weight.value.dim(1); }
  int out_features() const { return weight.value.dim(0); }

  Parameter weight;  // [O,D]
  Parameter bias;    // [O]

private:
  Tensor cached_input_;
  bool recorded_ = false;
};

class ReLU {
public:
  Tensor forward(const Tensor& x, bool record = true);
  Tensor backward(const Tensor& d_out);

private:
  Tensor cached_input_;
  bool recorded_ = false;
};

class MaxPool2d {
public:
  explicit MaxPool2d(int window) : window_(window) {}
  Tensor forward(const Tensor& x, bool record = true);
  Tensor backward(const Tensor& d_out);
  int window() const { return window_; }

private:
  int window_;
  std::vector<int64_t> argmax_;
  std::vector<int> input_shape_;
  bool recorded_ = false;
};

class GlobalAvgPool {
public:
  Tensor forward(const Tensor& x, bool record = true);
  Tensor backward(const Tensor& d_out);

private:
  std::vector<int> input_shape_;
  bool recorded_ = false;
};

class UpsampleNearest2x {
public:
  Tensor forward(const Tensor& x, bool record = true) {
    (void)record;
    return ops::upsample_nearest2x(x);
  }
  Tensor backward(const Tensor& d_out) { return ops::upsample_nearest2x_backward(d_out); }
};

}  // namespace acl
