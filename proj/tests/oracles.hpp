#pragma once

// Independent reference implementations used as test oracles. Everything here
// is deliberately naive (direct loops, closed forms, long-double accumulation)
// and shares no code with the library kernels it checks.

#include <cmath>
#include <map>
#include <vector>

#include "acl/heads.hpp"
#include "acl/tensor.hpp"

namespace oracle {

// direct 6-loop convolution
inline acl::Tensor conv2d_reference(const acl::Tensor& in, const acl::Tensor& w,
                                    const acl::Tensor& b, int stride, int padding) {
  const int n_imgs = in.dim(0), c = in.dim(1), h = in.dim(2), wd = in.dim(3);
  const int f = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int oh = (h + 2 * padding - kh) / stride + 1;
  const int ow = (wd + 2 * padding - kw) / stride + 1;
  acl::Tensor out({n_imgs, f, oh, ow});
  for (int n = 0; n < n_imgs; ++n)
    for (int fi = 0; fi < f; ++fi)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b.data[(size_t)fi];
          for (int ci = 0; ci < c; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride - padding + ky;
                const int ix = ox * stride - padding + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += in.data[(size_t)in.at4(n, ci, iy, ix)] *
                       w.data[(size_t)w.at4(fi, ci, ky, kx)];
              }
          out.data[(size_t)out.at4(n, fi, oy, ox)] = acc;
        }
  return out;
}

// naive matrix multiply: out = x * w^T + b
inline acl::Tensor linear_reference(const acl::Tensor& x, const acl::Tensor& w, const acl::Tensor& b) {
  const int n = x.dim(0), d = x.dim(1), o = w.dim(0);
  acl::Tensor out({n, o});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < o; ++j) {
      double acc = b.data[(size_t)j];
      for (int k = 0; k < d; ++k)
        acc += x.data[(size_t)(i * d + k)] * w.data[(size_t)(j * d + k)];
      out.data[(size_t)(i * o + j)] = acc;
    }
  return out;
}

// closed-form softmax cross entropy in long double, with the analytic gradient
struct XentReference {
  double loss;
  std::vector<double> probs;     // row-major [N,C]
  std::vector<double> d_logits;  // (p - onehot)/N
};
inline XentReference softmax_xent_reference(const acl::Tensor& logits, const std::vector<int>& targets) {
  const int n = logits.dim(0), c = logits.dim(1);
  XentReference r;
  r.probs.resize((size_t)n * c);
  r.d_logits.resize((size_t)n * c);
  long double total = 0.0L;
  for (int i = 0; i < n; ++i) {
    long double m = logits.data[(size_t)(i * c)];
    for (int j = 1; j < c; ++j) m = std::max<long double>(m, logits.data[(size_t)(i * c + j)]);
    long double z = 0.0L;
    for (int j = 0; j < c; ++j) z += expl((long double)logits.data[(size_t)(i * c + j)] - m);
    for (int j = 0; j < c; ++j) {
      const long double p = expl((long double)logits.data[(size_t)(i * c + j)] - m) / z;
      r.probs[(size_t)(i * c + j)] = (double)p;
      r.d_logits[(size_t)(i * c + j)] = (double)(p / n);
    }
    r.d_logits[(size_t)(i * c + targets[(size_t)i])] -= 1.0 / n;
    total += -((long double)logits.data[(size_t)(i * c + targets[(size_t)i])] - m - logl(z));
  }
  r.loss = (double)(total / n);
  return r;
}

// reference SGD(momentum, weight decay) trajectory on one weight vector
inline std::vector<double> sgd_reference(std::vector<double> w, const std::vector<std::vector<double>>& grads,
                                         double lr, double momentum, double wd) {
  std::vector<double> vel(w.size(), 0.0);
  for (const auto& g : grads)
    for (size_t j = 0; j < w.size(); ++j) {
      const double gg = g[j] + wd * w[j];
      vel[j] = momentum * vel[j] + gg;
      w[j] -= lr * vel[j];
    }
  return w;
}

// brute-force restatement of the head-selection rule
inline int select_prediction_reference(const std::vector<acl::HeadProbRow>& heads,
                                       int* chosen_task = nullptr) {
  size_t best = 0;
  for (size_t s = 1; s < heads.size(); ++s) {
    const double a = heads[s].probs[heads[s].class_list.size()];
    const double b = heads[best].probs[heads[best].class_list.size()];
    if (a < b || (a == b && heads[s].task_id < heads[best].task_id)) best = s;
  }
  const auto& h = heads[best];
  if (chosen_task) *chosen_task = h.task_id;
  size_t arg = 0;
  for (size_t j = 1; j < h.class_list.size(); ++j)
    if (h.probs[j] > h.probs[arg]) arg = j;
  return h.class_list[arg];
}

// per-class recall through an explicit confusion matrix
inline double mcr_reference(const std::vector<int>& pred, const std::vector<int>& truth,
                            const std::vector<int>& classes) {
  std::map<int, std::map<int, int>> confusion;
  for (size_t i = 0; i < truth.size(); ++i) ++confusion[truth[i]][pred[i]];
  double sum = 0.0;
  for (int cls : classes) {
    int total = 0, diag = 0;
    for (const auto& [p, n] : confusion[cls]) {
      total += n;
      if (p == cls) diag = n;
    }
    sum += (double)diag / total;
  }
  return sum / (double)classes.size();
}

inline acl::Tensor random_tensor(std::vector<int> shape, acl::Rng& rng, double scale = 1.0) {
  acl::Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, scale);
  for (double& v : t.data) v = dist(rng);
  return t;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double mag = std::max(std::abs(a[i]), std::abs(b[i]));
    if (mag > 1e-12) m = std::max(m, std::abs(a[i] - b[i]) / mag);
  }
  return m;
}

}  // namespace oracle
