#pragma once

#include <utility>
#include <vector>

#include "acl/tensor.hpp"

namespace acl {

enum class OptimKind { sgd_momentum, adam };

struct OptimSpec {
  OptimKind kind = OptimKind::sgd_momentum;
  double lr = 0.01;
  double weight_decay = 0.0;
  double momentum = 0.9;            // sgd_momentum only
  double beta1 = 0.9;               // adam only
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // (epoch, multiplicative factor) pairs, epochs strictly increasing; the
  // factor applies from that epoch on
  std::vector<std::pair<int, double>> schedule;
  int epochs = 60;
  int batch_size = 32;

  void validate() const;  // throws ConfigError
};

double lr_at_epoch(const OptimSpec& spec, int epoch);

// SGD with weight decay applied before the momentum update:
//   g = grad + wd*w;  v = mu*v + g;  w -= lr*v
// Adam with bias-corrected moments:
//   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2;  w -= lr * m^ / (sqrt(v^) + eps)
// Frozen parameters are never touched. Stepping a non-frozen parameter whose
// gradient was never populated is a contract error.
class Optimizer {
public:
  Optimizer(OptimSpec spec, std::vector<Parameter*> params);

  void set_epoch(int epoch) { lr_now_ = lr_at_epoch(spec_, epoch); }
  double learning_rate() const { return lr_now_; }
  void step();
  void zero_grad();
  const OptimSpec& spec() const { return spec_; }

private:
  OptimSpec spec_;
  std::vector<Parameter*> params_;
  std::vector<std::vector<double>> m_;  // sgd velocity / adam first moment
  std::vector<std::vector<double>> v_;  // adam second moment
  int64_t step_count_ = 0;
  double lr_now_;
};

}  // namespace acl
