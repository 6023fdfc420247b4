#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace acl {

using Rng = std::mt19937_64;

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Dense row-major n-d array of doubles with an optional same-shape gradient.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // same length as data when requires_grad

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);
  static Tensor from(std::vector<int> s, std::vector<double> values);

  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data.size()); }

  void set_requires_grad(bool on);
  void zero_grad();
  bool all_finite() const;

  // row-major offset into a [N,C,H,W] tensor
  int64_t at4(int n, int c, int y, int x) const {
    return ((static_cast<int64_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x;
  }
};

// Learnable tensor. Frozen parameters are skipped by optimizers and must keep
// their exact bits across any number of steps.
struct Parameter {
  std::string name;
  Tensor value;
  bool frozen = false;
  bool has_grad = false;  // set by gradient accumulation, cleared by zero_grad

  Parameter() = default;
  Parameter(std::string n, Tensor t);

  void accumulate(const std::vector<double>& g);
  void zero_grad();
  int64_t numel() const { return value.numel(); }
};

// FNV-1a over raw little-endian bytes; used for bit-exact freezing checks.
uint64_t checksum_bytes(const void* p, size_t n, uint64_t h = 0xcbf29ce484222325ull);
uint64_t checksum_params(const std::vector<Parameter*>& params);

// He-style fan-in scaled Gaussian init, N(0, sqrt(2/fan_in)).
void init_he_normal(Tensor& t, int fan_in, Rng& rng);

// splitmix64 mix of a base seed and a stream tag
uint64_t derive_seed(uint64_t base, uint64_t tag);

// Pins the BLAS backend to one thread so repeated runs are bit-identical.
void init_numerics();

}  // namespace acl
