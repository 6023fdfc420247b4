#include "acl/adapter.hpp"

#include "acl/errors.hpp"

namespace acl {

void AdapterConfig::validate(int num_gaps) const {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("adapter: kernel must be odd and positive");
  if (bottleneck_ratio < 1) throw ConfigError("adapter: bottleneck ratio must be >= 1");
  if (!gap_mask.empty() && static_cast<int>(gap_mask.size()) != num_gaps)
    throw ConfigError("adapter: gap mask length " + std::to_string(gap_mask.size()) +
                      " does not match " + std::to_string(num_gaps) + " gaps");
}

namespace {
std::string adapter_prefix(int task_id, int gap_index) {
  return "task" + std::to_string(task_id) + ".adapter.gap" + std::to_string(gap_index);
}
}  // namespace

Adapter::Adapter(int task_id, int gap_index, int channels, const AdapterConfig& config, Rng& rng)
    : task_id_(task_id),
      gap_index_(gap_index),
      channels_(channels),
      down_(adapter_prefix(task_id, gap_index) + ".down", channels,
            std::max(1, channels / config.bottleneck_ratio), config.kernel, 2, config.kernel / 2, rng),
      up_(adapter_prefix(task_id, gap_index) + ".up", std::max(1, channels / config.bottleneck_ratio),
          channels, config.kernel, 1, config.kernel / 2, rng),
      alpha_(adapter_prefix(task_id, gap_index) + ".alpha", Tensor({1})) {
  // alpha starts at 0 so a fresh adapter is literally the identity map
}

Tensor Adapter::forward(const Tensor& z, bool record) {
  if (z.rank() != 4 || z.dim(1) != channels_)
    throw ShapeError("adapter gap " + std::to_string(gap_index_) + ": input " + shape_str(z.shape) +
                     " does not carry " + std::to_string(channels_) + " channels");
  if (z.dim(2) % 2 != 0 || z.dim(3) % 2 != 0)
    throw ShapeError("adapter gap " + std::to_string(gap_index_) + ": odd spatial axis in " +
                     shape_str(z.shape) + ", downsample/upsample cannot restore the shape");
  Tensor h = down_.forward(z, record);
  h = act_.forward(h, record);
  h = upsample_.forward(h, record);
  Tensor branch = up_.forward(h, record);
  if (branch.shape != z.shape)
    throw ShapeError("adapter gap " + std::to_string(gap_index_) + ": branch output " +
                     shape_str(branch.shape) + " does not match input " + shape_str(z.shape));
  if (record) {
    cached_branch_ = branch;
    recorded_ = true;
  }
  const double a = alpha_.value.data[0];
  Tensor out = z;
  out.requires_grad = false;
  out.grad.clear();
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += a * branch.data[i];
  return out;
}

Tensor Adapter::backward(const Tensor& d_out) {
  if (!recorded_) throw ContractError("Adapter::backward called without a recorded forward");
  const double a = alpha_.value.data[0];
  if (!alpha_.frozen) {
    double d_alpha = 0.0;
    for (size_t i = 0; i < d_out.data.size(); ++i) d_alpha += d_out.data[i] * cached_branch_.data[i];
    alpha_.accumulate({d_alpha});
  }
  Tensor d_branch(d_out.shape);
  for (size_t i = 0; i < d_out.data.size(); ++i) d_branch.data[i] = a * d_out.data[i];
  Tensor d = up_.backward(d_branch);
  d = upsample_.backward(d);
  d = act_.backward(d);
  d = down_.backward(d);
  for (size_t i = 0; i < d.data.size(); ++i) d.data[i] += d_out.data[i];  // residual path
  return d;
}

std::vector<Parameter*> Adapter::params() {
  std::vector<Parameter*> out = down_.params();
  for (Parameter* p : up_.params()) out.push_back(p);
  out.push_back(&alpha_);
  return out;
}

void Adapter::set_frozen(bool on) {
  down_.set_frozen(on);
  up_.set_frozen(on);
  alpha_.frozen = on;
}

AdapterSet::AdapterSet(int task_id, const std::vector<int>& gap_channels, const AdapterConfig& config,
                       Rng& rng)
    : task_id_(task_id) {
  config.validate(static_cast<int>(gap_channels.size()));
  for (size_t gap = 0; gap < gap_channels.size(); ++gap) {
    if (config.gap_enabled(static_cast<int>(gap)))
      adapters_.emplace_back(Adapter(task_id, static_cast<int>(gap) + 1, gap_channels[gap], config, rng));
    else
      adapters_.emplace_back(std::nullopt);
  }
}

Tensor AdapterSet::forward(int gap, const Tensor& z, bool record) {
  if (gap < 0 || gap >= static_cast<int>(adapters_.size()))
    throw ShapeError("adapter set: gap " + std::to_string(gap) + " out of range");
  auto& a = adapters_[static_cast<size_t>(gap)];
  return a ? a->forward(z, record) : z;
}

Tensor AdapterSet::backward(int gap, const Tensor& d_out) {
  auto& a = adapters_[static_cast<size_t>(gap)];
  return a ? a->backward(d_out) : d_out;
}

std::vector<Parameter*> AdapterSet::params() {
  std::vector<Parameter*> out;
  for (auto& a : adapters_)
    if (a)
      for (Parameter* p : a->params()) out.push_back(p);
  return out;
}

void AdapterSet::set_frozen(bool on) {
  for (auto& a : adapters_)
    if (a) a->set_frozen(on);
}

uint64_t AdapterSet::checksum() const {
  auto* self = const_cast<AdapterSet*>(this);
  return checksum_params(self->params());
}

}  // namespace acl
