#pragma once

#include <string>
#include <vector>

#include "acl/dataset.hpp"
#include "acl/layers.hpp"
#include "acl/optim.hpp"
#include "acl/tensor.hpp"

namespace acl {

// Hook inserted between consecutive stages: gap k (0-based, k in [0,K-2])
// receives the stage-k output z and returns what stage k+1 consumes.
class StageTap {
public:
  virtual ~StageTap() = default;
  virtual Tensor forward(int gap, const Tensor& z, bool record) = 0;
  virtual Tensor backward(int gap, const Tensor& d_out) = 0;
};

struct StageSpec {
  int stage_index = 0;  // 0-based
  int in_channels = 0;
  int out_channels = 0;
  int num_convs = 2;
  int spatial_downsample = 2;  // trailing max-pool window
};

struct BackboneConfig {
  int input_channels = 1;
  int input_size = 32;                     // square input
  std::vector<int> stage_channels = {16, 32, 64};
  int conv_kernel = 3;                     // padding = kernel/2 keeps spatial size
  int pool_window = 2;

  int num_stages() const { return static_cast<int>(stage_channels.size()); }
  std::vector<StageSpec> stage_specs() const;
  void validate() const;  // stage arithmetic must stay integral and adapter-friendly
};

// conv-relu-conv-relu-pool block
class Stage {
public:
  Stage(std::string name, int in_channels, int out_channels, int kernel, int pool_window, Rng& rng);
  Tensor forward(const Tensor& x, bool record = true);
  Tensor backward(const Tensor& d_out, bool need_input_grad = true);
  std::vector<Parameter*> params();

private:
  Conv2d conv1_, conv2_;
  ReLU act1_, act2_;
  MaxPool2d pool_;
};

struct StageForward {
  std::vector<Tensor> stage_outputs;  // z_1..z_{K-1} (pre-tap)
  Tensor feature;                     // [N,D] after global average pooling
};

// Frozen multi-stage convolutional feature extractor. Stages are indexed
// 0..K-1; taps sit at gaps 0..K-2 right after the matching stage.
class Backbone {
public:
  Backbone(const BackboneConfig& config, Rng& rng);

  // Full forward; z_k outputs are the raw stage outputs before any tap.
  StageForward forward_stages(const Tensor& x, StageTap* taps = nullptr, bool record = false);

  // Partial forward beginning at first_stage, consuming that stage's input
  // (first_stage = 0 consumes pixels, 1 consumes the tap output of gap 0 ...).
  Tensor forward_from(int first_stage, const Tensor& input, StageTap* taps, bool record);
  // Backward through stages [first_stage..K); returns the gradient at the
  // first_stage input when requested, otherwise an empty tensor.
  Tensor backward_from(int first_stage, const Tensor& d_feature, StageTap* taps,
                       bool need_input_grad = false);
  // Forward through a single stage, no tap applied.
  Tensor stage_forward(int stage, const Tensor& input, bool record = false);

  void freeze();
  bool frozen() const { return frozen_; }
  int num_stages() const { return static_cast<int>(stages_.size()); }
  int feature_dim() const { return config_.stage_channels.back(); }
  const BackboneConfig& config() const { return config_; }
  std::vector<Parameter*> params();
  uint64_t checksum() const;

private:
  BackboneConfig config_;
  std::vector<Stage> stages_;
  GlobalAvgPool gap_;
  bool frozen_ = false;
};

// ---- checkpoint round trips (ACLT format) ----
void save_backbone(const std::string& path, const Backbone& backbone);
Backbone load_backbone(const std::string& path, const std::string& manifest_path);
void write_backbone_manifest(const std::string& manifest_path, const BackboneConfig& config);

// ---- base-task pretraining (stands in for ImageNet pretraining) ----
struct PretrainConfig {
  OptimSpec optim;            // defaults below
  int epochs = 30;
  double min_accuracy = 0.90; // on the held-out base split
  PretrainConfig() {
    optim.kind = OptimKind::sgd_momentum;
    optim.lr = 0.01;
    optim.momentum = 0.9;
    optim.weight_decay = 5e-4;
    optim.batch_size = 32;
  }
};

struct PretrainResult {
  double holdout_accuracy = 0.0;
  int epochs_run = 0;
};

// Trains backbone+temporary head on the base classes, evaluates on the
// held-out split, freezes the backbone and discards the head. Throws
// ContractError with a pretraining-failure report when the configured
// minimum accuracy is not reached.
PretrainResult pretrain_backbone(Backbone& backbone, const Dataset& base_train,
                                 const Dataset& base_holdout, const PretrainConfig& config, Rng& rng);

}  // namespace acl
