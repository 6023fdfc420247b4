#include "acl/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "acl/errors.hpp"

namespace acl::ops {

namespace {

void require_rank(const Tensor& t, int rank, const char* what) {
  if (t.rank() != rank)
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_str(t.shape));
}

// col layout: [C*kh*kw, N*H'*W'], column j = (n*outH + oy)*outW + ox
void im2col(const Tensor& in, int kh, int kw, int stride, int padding, int out_h, int out_w,
            std::vector<double>& col) {
  const int n_imgs = in.dim(0), ch = in.dim(1), h = in.dim(2), w = in.dim(3);
  const int64_t cols = static_cast<int64_t>(n_imgs) * out_h * out_w;
  col.assign(static_cast<size_t>(ch) * kh * kw * cols, 0.0);
  const double* src = in.data.data();
  for (int c = 0; c < ch; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        double* dst = col.data() + (static_cast<int64_t>((c * kh + ky) * kw + kx)) * cols;
        for (int n = 0; n < n_imgs; ++n) {
          const double* img = src + (static_cast<int64_t>(n) * ch + c) * h * w;
          for (int oy = 0; oy < out_h; ++oy) {
            const int iy = oy * stride - padding + ky;
            double* row = dst + (static_cast<int64_t>(n) * out_h + oy) * out_w;
            if (iy < 0 || iy >= h) continue;  // stays zero
            const double* in_row = img + static_cast<int64_t>(iy) * w;
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - padding + kx;
              if (ix >= 0 && ix < w) row[ox] = in_row[ix];
            }
          }
        }
      }
    }
  }
}

// inverse of im2col: scatter-add columns back into image gradients
void col2im(const std::vector<double>& col, const std::vector<int>& in_shape, int kh, int kw,
            int stride, int padding, int out_h, int out_w, Tensor& d_in) {
  const int n_imgs = in_shape[0], ch = in_shape[1], h = in_shape[2], w = in_shape[3];
  const int64_t cols = static_cast<int64_t>(n_imgs) * out_h * out_w;
  d_in = Tensor(in_shape);
  double* dst_base = d_in.data.data();
  for (int c = 0; c < ch; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const double* src = col.data() + (static_cast<int64_t>((c * kh + ky) * kw + kx)) * cols;
        for (int n = 0; n < n_imgs; ++n) {
          double* img = dst_base + (static_cast<int64_t>(n) * ch + c) * h * w;
          for (int oy = 0; oy < out_h; ++oy) {
            const int iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= h) continue;
            const double* row = src + (static_cast<int64_t>(n) * out_h + oy) * out_w;
            double* out_row = img + static_cast<int64_t>(iy) * w;
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - padding + kx;
              if (ix >= 0 && ix < w) out_row[ix] += row[ox];
            }
          }
        }
      }
    }
  }
}

// gather [N,F,H',W'] into [F, N*H'*W']
void gather_fmajor(const Tensor& t, std::vector<double>& out) {
  const int n_imgs = t.dim(0), f = t.dim(1);
  const int64_t hw = static_cast<int64_t>(t.dim(2)) * t.dim(3);
  out.resize(static_cast<size_t>(f) * n_imgs * hw);
  for (int i = 0; i < f; ++i)
    for (int n = 0; n < n_imgs; ++n) {
      const double* src = t.data.data() + (static_cast<int64_t>(n) * f + i) * hw;
      std::copy(src, src + hw, out.data() + (static_cast<int64_t>(i) * n_imgs + n) * hw);
    }
}

}  // namespace

ConvDims conv2d_output_dims(const std::vector<int>& in, const std::vector<int>& w, int stride,
                            int padding) {
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1, got " + std::to_string(stride));
  if (padding < 0) throw ShapeError("conv2d: padding must be >= 0, got " + std::to_string(padding));
  const int h = in[2], wdt = in[3], kh = w[2], kw = w[3];
  if (in[1] != w[1])
    throw ShapeError("conv2d: channel axis mismatch, input C=" + std::to_string(in[1]) +
                     " vs weight C=" + std::to_string(w[1]));
  if (kh > h + 2 * padding)
    throw ShapeError("conv2d: kernel height " + std::to_string(kh) + " exceeds padded input height " +
                     std::to_string(h + 2 * padding));
  if (kw > wdt + 2 * padding)
    throw ShapeError("conv2d: kernel width " + std::to_string(kw) + " exceeds padded input width " +
                     std::to_string(wdt + 2 * padding));
  ConvDims d;
  d.out_h = (h + 2 * padding - kh) / stride + 1;
  d.out_w = (wdt + 2 * padding - kw) / stride + 1;
  return d;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  if (bias.numel() != weight.dim(0))
    throw ShapeError("conv2d: bias axis F=" + std::to_string(bias.numel()) + " vs weight F=" +
                     std::to_string(weight.dim(0)));
  const auto dims = conv2d_output_dims(input.shape, weight.shape, stride, padding);
  const int n_imgs = input.dim(0), f = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const int kc = weight.dim(1) * kh * kw;
  const int64_t cols = static_cast<int64_t>(n_imgs) * dims.out_h * dims.out_w;

  thread_local std::vector<double> col, prod;
  im2col(input, kh, kw, stride, padding, dims.out_h, dims.out_w, col);
  prod.assign(static_cast<size_t>(f) * cols, 0.0);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, f, static_cast<int>(cols), kc, 1.0,
              weight.data.data(), kc, col.data(), static_cast<int>(cols), 0.0, prod.data(),
              static_cast<int>(cols));

  Tensor out({n_imgs, f, dims.out_h, dims.out_w});
  const int64_t hw = static_cast<int64_t>(dims.out_h) * dims.out_w;
  for (int n = 0; n < n_imgs; ++n)
    for (int i = 0; i < f; ++i) {
      const double* src = prod.data() + (static_cast<int64_t>(i) * n_imgs + n) * hw;
      double* dst = out.data.data() + (static_cast<int64_t>(n) * f + i) * hw;
      const double b = bias.data[static_cast<size_t>(i)];
      for (int64_t j = 0; j < hw; ++j) dst[j] = src[j] + b;
    }
  return out;
}

Conv2dBackward conv2d_backward(const Tensor& d_out, const Tensor& input, const Tensor& weight,
                               int stride, int padding, bool need_input_grad, bool need_param_grad) {
  const auto dims = conv2d_output_dims(input.shape, weight.shape, stride, padding);
  if (d_out.dim(2) != dims.out_h || d_out.dim(3) != dims.out_w || d_out.dim(1) != weight.dim(0) ||
      d_out.dim(0) != input.dim(0))
    throw ShapeError("conv2d_backward: upstream gradient shape " + shape_str(d_out.shape) +
                     " does not match forward output");
  const int n_imgs = input.dim(0), f = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const int kc = weight.dim(1) * kh * kw;
  const int64_t cols = static_cast<int64_t>(n_imgs) * dims.out_h * dims.out_w;

  thread_local std::vector<double> dout_m, col, dcol;
  gather_fmajor(d_out, dout_m);

  Conv2dBackward g;
  g.d_bias = Tensor({f});
  for (int i = 0; i < f; ++i) {
    const double* row = dout_m.data() + static_cast<int64_t>(i) * cols;
    double s = 0.0;
    for (int64_t j = 0; j < cols; ++j) s += row[j];
    g.d_bias.data[static_cast<size_t>(i)] = s;
  }

  if (need_param_grad) {
    im2col(input, kh, kw, stride, padding, dims.out_h, dims.out_w, col);
    g.d_weight = Tensor(weight.shape);
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, f, kc, static_cast<int>(cols), 1.0,
                dout_m.data(), static_cast<int>(cols), col.data(), static_cast<int>(cols), 0.0,
                g.d_weight.data.data(), kc);
  }
  if (need_input_grad) {
    dcol.assign(static_cast<size_t>(kc) * cols, 0.0);
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kc, static_cast<int>(cols), f, 1.0,
                weight.data.data(), kc, dout_m.data(), static_cast<int>(cols), 0.0, dcol.data(),
                static_cast<int>(cols));
    col2im(dcol, input.shape, kh, kw, stride, padding, dims.out_h, dims.out_w, g.d_input);
  }
  return g;
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const int n = input.dim(0), d = input.dim(1), o = weight.dim(0);
  if (weight.dim(1) != d)
    throw ShapeError("linear: feature axis mismatch, input D=" + std::to_string(d) + " vs weight D=" +
                     std::to_string(weight.dim(1)));
  if (bias.numel() != o)
    throw ShapeError("linear: bias axis O=" + std::to_string(bias.numel()) + " vs weight O=" +
                     std::to_string(o));
  Tensor out({n, o});
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, n, o, d, 1.0, input.data.data(), d,
              weight.data.data(), d, 0.0, out.data.data(), o);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < o; ++j) out.data[static_cast<size_t>(i) * o + j] += bias.data[static_cast<size_t>(j)];
  return out;
}

LinearBackward linear_backward(const Tensor& d_out, const Tensor& input, const Tensor& weight,
                               bool need_input_grad, bool need_param_grad) {
  const int n = input.dim(0), d = input.dim(1), o = weight.dim(0);
  if (d_out.dim(0) != n || d_out.dim(1) != o)
    throw ShapeError("linear_backward: upstream gradient shape " + shape_str(d_out.shape) +
                     " does not match [N,O]");
  LinearBackward g;
  if (need_input_grad) {
    g.d_input = Tensor({n, d});
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, n, d, o, 1.0, d_out.data.data(), o,
                weight.data.data(), d, 0.0, g.d_input.data.data(), d);
  }
  if (need_param_grad) {
    g.d_weight = Tensor({o, d});
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, o, d, n, 1.0, d_out.data.data(), o,
                input.data.data(), d, 0.0, g.d_weight.data.data(), d);
    g.d_bias = Tensor({o});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < o; ++j) g.d_bias.data[static_cast<size_t>(j)] += d_out.data[static_cast<size_t>(i) * o + j];
  }
  return g;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  out.requires_grad = false;
  out.grad.clear();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& d_out, const Tensor& x) {
  if (d_out.shape != x.shape)
    throw ShapeError("relu_backward: gradient shape " + shape_str(d_out.shape) + " vs input " +
                     shape_str(x.shape));
  Tensor g(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) g.data[i] = x.data[i] > 0.0 ? d_out.data[i] : 0.0;
  return g;
}

MaxPoolResult max_pool2d(const Tensor& x, int window) {
  require_rank(x, 4, "max_pool2d input");
  if (window < 1) throw ShapeError("max_pool2d: window must be >= 1");
  const int n_imgs = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < window || w < window)
    throw ShapeError("max_pool2d: window " + std::to_string(window) + " exceeds spatial axes of " +
                     shape_str(x.shape));
  const int oh = h / window, ow = w / window;
  MaxPoolResult r;
  r.output = Tensor({n_imgs, c, oh, ow});
  r.argmax.resize(r.output.data.size());
  int64_t oi = 0;
  for (int n = 0; n < n_imgs; ++n)
    for (int ci = 0; ci < c; ++ci) {
      const int64_t plane = (static_cast<int64_t>(n) * c + ci) * h * w;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox, ++oi) {
          double best = -std::numeric_limits<double>::infinity();
          int64_t best_idx = -1;
          for (int ky = 0; ky < window; ++ky)
            for (int kx = 0; kx < window; ++kx) {
              const int64_t idx = plane + static_cast<int64_t>(oy * window + ky) * w + ox * window + kx;
              if (x.data[static_cast<size_t>(idx)] > best) {
                best = x.data[static_cast<size_t>(idx)];
                best_idx = idx;
              }
            }
          r.output.data[static_cast<size_t>(oi)] = best;
          r.argmax[static_cast<size_t>(oi)] = best_idx;
        }
    }
  return r;
}

Tensor max_pool2d_backward(const Tensor& d_out, const std::vector<int64_t>& argmax,
                           const std::vector<int>& input_shape) {
  if (d_out.data.size() != argmax.size())
    throw ShapeError("max_pool2d_backward: gradient size does not match recorded argmax");
  Tensor g(input_shape);
  for (size_t i = 0; i < argmax.size(); ++i) g.data[static_cast<size_t>(argmax[i])] += d_out.data[i];
  return g;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool input");
  const int n_imgs = x.dim(0), c = x.dim(1);
  const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  Tensor out({n_imgs, c});
  for (int n = 0; n < n_imgs; ++n)
    for (int ci = 0; ci < c; ++ci) {
      const double* p = x.data.data() + (static_cast<int64_t>(n) * c + ci) * hw;
      double s = 0.0;
      for (int64_t j = 0; j < hw; ++j) s += p[j];
      out.data[static_cast<size_t>(n) * c + ci] = s / static_cast<double>(hw);
    }
  return out;
}

Tensor global_avg_pool_backward(const Tensor& d_out, const std::vector<int>& input_shape) {
  const int n_imgs = input_shape[0], c = input_shape[1];
  const int64_t hw = static_cast<int64_t>(input_shape[2]) * input_shape[3];
  if (d_out.dim(0) != n_imgs || d_out.dim(1) != c)
    throw ShapeError("global_avg_pool_backward: gradient shape " + shape_str(d_out.shape));
  Tensor g(input_shape);
  for (int n = 0; n < n_imgs; ++n)
    for (int ci = 0; ci < c; ++ci) {
      const double v = d_out.data[static_cast<size_t>(n) * c + ci] / static_cast<double>(hw);
      double* p = g.data.data() + (static_cast<int64_t>(n) * c + ci) * hw;
      for (int64_t j = 0; j < hw; ++j) p[j] = v;
    }
  return g;
}

Tensor upsample_nearest2x(const Tensor& x) {
  require_rank(x, 4, "upsample_nearest2x input");
  const int n_imgs = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n_imgs, c, 2 * h, 2 * w});
  for (int n = 0; n < n_imgs; ++n)
    for (int ci = 0; ci < c; ++ci) {
      const double* src = x.data.data() + (static_cast<int64_t>(n) * c + ci) * h * w;
      double* dst = out.data.data() + (static_cast<int64_t>(n) * c + ci) * 4 * h * w;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const double v = src[static_cast<int64_t>(y) * w + xx];
          const int64_t base = static_cast<int64_t>(2 * y) * 2 * w + 2 * xx;
          dst[base] = v;
          dst[base + 1] = v;
          dst[base + 2 * w] = v;
          dst[base + 2 * w + 1] = v;
        }
    }
  return out;
}

Tensor upsample_nearest2x_backward(const Tensor& d_out) {
  require_rank(d_out, 4, "upsample_nearest2x_backward input");
  const int n_imgs = d_out.dim(0), c = d_out.dim(1), h2 = d_out.dim(2), w2 = d_out.dim(3);
  if (h2 % 2 || w2 % 2) throw ShapeError("upsample_nearest2x_backward: odd spatial axis in " + shape_str(d_out.shape));
  const int h = h2 / 2, w = w2 / 2;
  Tensor g({n_imgs, c, h, w});
  for (int n = 0; n < n_imgs; ++n)
    for (int ci = 0; ci < c; ++ci) {
      const double* src = d_out.data.data() + (static_cast<int64_t>(n) * c + ci) * h2 * w2;
      double* dst = g.data.data() + (static_cast<int64_t>(n) * c + ci) * h * w;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const int64_t base = static_cast<int64_t>(2 * y) * w2 + 2 * xx;
          dst[static_cast<int64_t>(y) * w + xx] = src[base] + src[base + 1] + src[base + w2] + src[base + w2 + 1];
        }
    }
  return g;
}

SoftmaxXent softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets, bool need_grad) {
  require_rank(logits, 2, "softmax_cross_entropy logits");
  const int n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int>(targets.size()) != n)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(n) + " rows");
  SoftmaxXent r;
  r.probs = Tensor({n, c});
  if (need_grad) r.d_logits = Tensor({n, c});
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int t = targets[static_cast<size_t>(i)];
    if (t < 0 || t >= c)
      throw ContractError("softmax_cross_entropy: target index " + std::to_string(t) +
                          " out of range [0," + std::to_string(c) + ") at row " + std::to_string(i));
    const double* row = logits.data.data() + static_cast<int64_t>(i) * c;
    double m = row[0];
    for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(row[j] - m);
    const double logz = std::log(z);
    double* p = r.probs.data.data() + static_cast<int64_t>(i) * c;
    for (int j = 0; j < c; ++j) p[j] = std::exp(row[j] - m) / z;
    total += -(row[t] - m - logz);
    if (need_grad) {
      double* d = r.d_logits.data.data() + static_cast<int64_t>(i) * c;
      for (int j = 0; j < c; ++j) d[j] = p[j] / n;
      d[t] -= 1.0 / n;
    }
  }
  r.loss = total / n;
  return r;
}

}  // namespace acl::ops
