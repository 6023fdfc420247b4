#pragma once

#include <optional>
#include <vector>

#include "acl/backbone.hpp"
#include "acl/layers.hpp"

namespace acl {

struct AdapterConfig {
  int kernel = 3;              // both convolutions
  int bottleneck_ratio = 4;    // down conv maps C -> max(1, C/ratio)
  std::vector<uint8_t> gap_mask;  // per-gap enable; empty = all gaps carry adapters

  bool gap_enabled(int gap) const {
    return gap_mask.empty() || (gap < static_cast<int>(gap_mask.size()) && gap_mask[static_cast<size_t>(gap)]);
  }
  void validate(int num_gaps) const;
};

// Residual module inserted at one stage gap: a stride-2 down convolution, ReLU,
// nearest-neighbor 2x upsampling, a second convolution back to C channels, and
// a learnable global scale applied to the branch before the residual addition.
// With alpha = 0 the module is an exact identity.
class Adapter {
public:
  Adapter(int task_id, int gap_index, int channels, const AdapterConfig& config, Rng& rng);

  // z -> alpha * up(relu(down(z))) + z, same shape as z
  Tensor forward(const Tensor& z, bool record = true);
  Tensor backward(const Tensor& d_out);  // accumulates own grads, returns dz

  std::vector<Parameter*> params();
  void set_frozen(bool on);
  double alpha() const { return alpha_.value.data[0]; }
  int task_id() const { return task_id_; }
  int gap_index() const { return gap_index_; }  // 1-based, matching z_k numbering
  int channels() const { return channels_; }

private:
  int task_id_, gap_index_, channels_;
  Conv2d down_, up_;
  ReLU act_;
  UpsampleNearest2x upsample_;
  Parameter alpha_;
  Tensor cached_branch_;  // branch output before scaling, for d_alpha
  bool recorded_ = false;
};

// One adapter per enabled gap of a task. Acts as the backbone tap; after the
// owning task's round completes the whole set is frozen for good.
class AdapterSet : public StageTap {
public:
  AdapterSet() = default;
  AdapterSet(int task_id, const std::vector<int>& gap_channels, const AdapterConfig& config, Rng& rng);

  Tensor forward(int gap, const Tensor& z, bool record) override;
  Tensor backward(int gap, const Tensor& d_out) override;

  std::vector<Parameter*> params();
  void set_frozen(bool on);
  uint64_t checksum() const;
  bool empty() const { return adapters_.empty(); }
  int task_id() const { return task_id_; }
  const std::vector<std::optional<Adapter>>& adapters() const { return adapters_; }
  std::vector<std::optional<Adapter>>& adapters() { return adapters_; }

private:
  int task_id_ = 0;
  std::vector<std::optional<Adapter>> adapters_;  // slot per gap; disabled gaps stay empty
};

}  // namespace acl
