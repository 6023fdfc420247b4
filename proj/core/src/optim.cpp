#include "acl/optim.hpp"

#include <cmath>

#include "acl/errors.hpp"

namespace acl {

void OptimSpec::validate() const {
  if (lr <= 0.0) throw ConfigError("optimizer: learning rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("optimizer: weight decay must be non-negative");
  if (epochs < 0) throw ConfigError("optimizer: epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("optimizer: batch size must be >= 1");
  int prev = -1;
  for (const auto& [epoch, factor] : schedule) {
    if (epoch <= prev) throw ConfigError("optimizer: schedule epochs must be strictly increasing");
    if (factor <= 0.0) throw ConfigError("optimizer: schedule factor must be positive");
    prev = epoch;
  }
}

double lr_at_epoch(const OptimSpec& spec, int epoch) {
  double lr = spec.lr;
  for (const auto& [e, factor] : spec.schedule)
    if (epoch >= e) lr *= factor;
  return lr;
}

Optimizer::Optimizer(OptimSpec spec, std::vector<Parameter*> params)
    : spec_(std::move(spec)), params_(std::move(params)), lr_now_(spec_.lr) {
  spec_.validate();
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.data.size(), 0.0);
    v_.emplace_back(spec_.kind == OptimKind::adam ? p->value.data.size() : 0, 0.0);
  }
}

void Optimizer::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(step_count_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (p.frozen) continue;
    if (!p.has_grad)
      throw ContractError("optimizer: missing gradient on non-frozen parameter '" + p.name + "'");
    auto& w = p.value.data;
    const auto& dw = p.value.grad;
    if (spec_.kind == OptimKind::sgd_momentum) {
      auto& vel = m_[i];
      for (size_t j = 0; j < w.size(); ++j) {
        const double g = dw[j] + spec_.weight_decay * w[j];
        vel[j] = spec_.momentum * vel[j] + g;
        w[j] -= lr_now_ * vel[j];
      }
    } else {
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < w.size(); ++j) {
        const double g = dw[j] + spec_.weight_decay * w[j];
        m[j] = spec_.beta1 * m[j] + (1.0 - spec_.beta1) * g;
        v[j] = spec_.beta2 * v[j] + (1.0 - spec_.beta2) * g * g;
        w[j] -= lr_now_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + spec_.epsilon);
      }
    }
  }
}

void Optimizer::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace acl
