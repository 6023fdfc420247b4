#include "acl/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "acl/errors.hpp"

extern "C" void openblas_set_num_threads(int);

namespace acl {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension " + std::to_string(d) + " in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
  data.assign(static_cast<size_t>(shape_numel(shape)), fill);
}

Tensor Tensor::from(std::vector<int> s, std::vector<double> values) {
  if (shape_numel(s) != static_cast<int64_t>(values.size()))
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " + shape_str(s));
  Tensor t;
  t.shape = std::move(s);
  t.data = std::move(values);
  return t;
}

void Tensor::set_requires_grad(bool on) {
  requires_grad = on;
  if (on)
    grad.assign(data.size(), 0.0);
  else
    grad.clear();
}

void Tensor::zero_grad() {
  if (requires_grad) grad.assign(data.size(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Parameter::Parameter(std::string n, Tensor t) : name(std::move(n)), value(std::move(t)) {
  value.set_requires_grad(true);
}

void Parameter::accumulate(const std::vector<double>& g) {
  if (g.size() != value.grad.size())
    throw ShapeError("gradient size mismatch for parameter '" + name + "'");
  for (size_t i = 0; i < g.size(); ++i) value.grad[i] += g[i];
  has_grad = true;
}

void Parameter::zero_grad() {
  value.zero_grad();
  has_grad = false;
}

uint64_t checksum_bytes(const void* p, size_t n, uint64_t h) {
  const auto* b = static_cast<const unsigned char*>(p);
  for (size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t checksum_params(const std::vector<Parameter*>& params) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const Parameter* p : params)
    h = checksum_bytes(p->value.data.data(), p->value.data.size() * sizeof(double), h);
  return h;
}

void init_he_normal(Tensor& t, int fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (double& v : t.data) v = dist(rng);
}

uint64_t derive_seed(uint64_t base, uint64_t tag) {
  uint64_t z = base + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void init_numerics() {
  static bool done = false;
  if (!done) {
    openblas_set_num_threads(1);
    done = true;
  }
}

}  // namespace acl
