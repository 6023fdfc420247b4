#include "acl/backbone.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "acl/checkpoint.hpp"
#include "acl/errors.hpp"
#include "json.hpp"

namespace acl {

std::vector<StageSpec> BackboneConfig::stage_specs() const {
  std::vector<StageSpec> specs;
  int in_ch = input_channels;
  for (size_t i = 0; i < stage_channels.size(); ++i) {
    StageSpec s;
    s.stage_index = static_cast<int>(i);
    s.in_channels = in_ch;
    s.out_channels = stage_channels[i];
    s.spatial_downsample = pool_window;
    specs.push_back(s);
    in_ch = stage_channels[i];
  }
  return specs;
}

void BackboneConfig::validate() const {
  if (stage_channels.size() < 2) throw ConfigError("backbone: need K >= 2 stages");
  if (input_channels < 1) throw ConfigError("backbone: input_channels must be positive");
  if (conv_kernel % 2 == 0) throw ConfigError("backbone: conv kernel must be odd");
  int size = input_size;
  for (size_t i = 0; i < stage_channels.size(); ++i) {
    if (stage_channels[i] < 1) throw ConfigError("backbone: stage channels must be positive");
    if (size % pool_window != 0)
      throw ConfigError("backbone: input_size " + std::to_string(input_size) +
                        " does not divide evenly through stage " + std::to_string(i + 1));
    size /= pool_window;
  }
  if (size < 1) throw ConfigError("backbone: input_size too small for " +
                                  std::to_string(stage_channels.size()) + " stages");
}

Stage::Stage(std::string name, int in_channels, int out_channels, int kernel, int pool_window, Rng& rng)
    : conv1_(name + ".conv1", in_channels, out_channels, kernel, 1, kernel / 2, rng),
      conv2_(name + ".conv2", out_channels, out_channels, kernel, 1, kernel / 2, rng),
      pool_(pool_window) {}

Tensor Stage::forward(const Tensor& x, bool record) {
  Tensor h = conv1_.forward(x, record);
  h = act1_.forward(h, record);
  h = conv2_.forward(h, record);
  h = act2_.forward(h, record);
  return pool_.forward(h, record);
}

Tensor Stage::backward(const Tensor& d_out, bool need_input_grad) {
  Tensor d = pool_.backward(d_out);
  d = act2_.backward(d);
  d = conv2_.backward(d);
  d = act1_.backward(d);
  return conv1_.backward(d, need_input_grad);
}

std::vector<Parameter*> Stage::params() {
  std::vector<Parameter*> out = conv1_.params();
  for (Parameter* p : conv2_.params()) out.push_back(p);
  return out;
}

Backbone::Backbone(const BackboneConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  int in_ch = config_.input_channels;
  for (size_t i = 0; i < config_.stage_channels.size(); ++i) {
    stages_.emplace_back("backbone.stage" + std::to_string(i), in_ch, config_.stage_channels[i],
                         config_.conv_kernel, config_.pool_window, rng);
    in_ch = config_.stage_channels[i];
  }
}

StageForward Backbone::forward_stages(const Tensor& x, StageTap* taps, bool record) {
  if (x.rank() != 4 || x.dim(1) != config_.input_channels || x.dim(2) != config_.input_size ||
      x.dim(3) != config_.input_size)
    throw ShapeError("backbone: input " + shape_str(x.shape) + " does not match stage-1 input [N," +
                     std::to_string(config_.input_channels) + "," + std::to_string(config_.input_size) +
                     "," + std::to_string(config_.input_size) + "]");
  StageForward out;
  Tensor h = x;
  const int k = num_stages();
  for (int i = 0; i < k; ++i) {
    h = stages_[static_cast<size_t>(i)].forward(h, record);
    if (i < k - 1) {
      out.stage_outputs.push_back(h);
      if (taps) h = taps->forward(i, h, record);
    }
  }
  out.feature = gap_.forward(h, record);
  return out;
}

Tensor Backbone::forward_from(int first_stage, const Tensor& input, StageTap* taps, bool record) {
  const int k = num_stages();
  if (first_stage < 0 || first_stage >= k)
    throw ShapeError("backbone: first_stage " + std::to_string(first_stage) + " out of range");
  Tensor h = input;
  for (int i = first_stage; i < k; ++i) {
    h = stages_[static_cast<size_t>(i)].forward(h, record);
    if (i < k - 1 && taps) h = taps->forward(i, h, record);
  }
  return gap_.forward(h, record);
}

Tensor Backbone::backward_from(int first_stage, const Tensor& d_feature, StageTap* taps,
                               bool need_input_grad) {
  const int k = num_stages();
  Tensor d = gap_.backward(d_feature);
  for (int i = k - 1; i >= first_stage; --i) {
    const bool need_below = i > first_stage || need_input_grad;
    d = stages_[static_cast<size_t>(i)].backward(d, need_below);
    if (i > first_stage && taps) d = taps->backward(i - 1, d);
  }
  return d;
}

Tensor Backbone::stage_forward(int stage, const Tensor& input, bool record) {
  return stages_[static_cast<size_t>(stage)].forward(input, record);
}

void Backbone::freeze() {
  frozen_ = true;
  for (Parameter* p : params()) p->frozen = true;
}

std::vector<Parameter*> Backbone::params() {
  std::vector<Parameter*> out;
  for (auto& s : stages_)
    for (Parameter* p : s.params()) out.push_back(p);
  return out;
}

uint64_t Backbone::checksum() const {
  auto* self = const_cast<Backbone*>(this);
  return checksum_params(self->params());
}

void save_backbone(const std::string& path, const Backbone& backbone) {
  auto* self = const_cast<Backbone*>(&backbone);
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (Parameter* p : self->params()) tensors.emplace_back(p->name, &p->value);
  write_checkpoint(path, tensors);
}

void write_backbone_manifest(const std::string& manifest_path, const BackboneConfig& config) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["input_channels"] = config.input_channels;
  j["input_size"] = config.input_size;
  j["stage_channels"] = config.stage_channels;
  j["conv_kernel"] = config.conv_kernel;
  j["pool_window"] = config.pool_window;
  std::ofstream os(manifest_path, std::ios::trunc);
  if (!os) throw CheckpointError("cannot open for writing: " + manifest_path);
  os << j.dump(2) << "\n";
}

Backbone load_backbone(const std::string& path, const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw CheckpointError("cannot open: " + manifest_path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("bad backbone manifest " + manifest_path + ": " + e.what());
  }
  BackboneConfig config;
  config.input_channels = j.at("input_channels").get<int>();
  config.input_size = j.at("input_size").get<int>();
  config.stage_channels = j.at("stage_channels").get<std::vector<int>>();
  config.conv_kernel = j.at("conv_kernel").get<int>();
  config.pool_window = j.at("pool_window").get<int>();

  Rng rng(0);  // immediately overwritten from the checkpoint
  Backbone backbone(config, rng);
  const NamedTensors tensors = read_checkpoint(path);
  for (Parameter* p : backbone.params()) {
    const Tensor& t = tensors.get(p->name);
    if (t.shape != p->value.shape)
      throw CheckpointError("tensor '" + p->name + "' has shape " + shape_str(t.shape) +
                            ", expected " + shape_str(p->value.shape));
    p->value.data = t.data;
  }
  backbone.freeze();
  return backbone;
}

PretrainResult pretrain_backbone(Backbone& backbone, const Dataset& base_train,
                                 const Dataset& base_holdout, const PretrainConfig& config, Rng& rng) {
  if (backbone.frozen()) throw ContractError("pretrain_backbone: backbone is already frozen");
  if (base_train.empty()) throw ContractError("pretrain_backbone: empty base training set");

  // dense label mapping for the temporary base head
  const std::vector<int> classes = base_train.class_ids();
  auto local_of = [&](int global) {
    const auto it = std::lower_bound(classes.begin(), classes.end(), global);
    if (it == classes.end() || *it != global)
      throw ContractError("pretrain_backbone: label " + std::to_string(global) +
                          " absent from base class set");
    return static_cast<int>(it - classes.begin());
  };

  Linear head("pretrain.head", backbone.feature_dim(), static_cast<int>(classes.size()), rng);
  std::vector<Parameter*> all_params = backbone.params();
  for (Parameter* p : head.params()) all_params.push_back(p);
  OptimSpec spec = config.optim;
  Optimizer opt(spec, all_params);

  std::vector<int> order(base_train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    opt.set_epoch(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(spec.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(spec.batch_size));
      const std::vector<int> batch(order.begin() + static_cast<int64_t>(start),
                                   order.begin() + static_cast<int64_t>(end));
      Tensor x = stack_images(base_train, batch);
      std::vector<int> targets;
      targets.reserve(batch.size());
      for (int idx : batch) targets.push_back(local_of(base_train.samples[static_cast<size_t>(idx)].label));

      opt.zero_grad();
      Tensor feature = backbone.forward_from(0, x, nullptr, true);
      Tensor logits = head.forward(feature, true);
      auto xent = ops::softmax_cross_entropy(logits, targets);
      Tensor d_feature = head.backward(xent.d_logits);
      backbone.backward_from(0, d_feature, nullptr, false);
      opt.step();
    }
  }

  // held-out accuracy with the temporary head, before it is discarded
  PretrainResult result;
  result.epochs_run = config.epochs;
  if (!base_holdout.empty()) {
    size_t correct = 0;
    constexpr int kEvalBatch = 64;
    std::vector<int> idx;
    for (size_t start = 0; start < base_holdout.size(); start += kEvalBatch) {
      const size_t end = std::min(base_holdout.size(), start + kEvalBatch);
      idx.clear();
      for (size_t i = start; i < end; ++i) idx.push_back(static_cast<int>(i));
      Tensor logits = head.forward(backbone.forward_from(0, stack_images(base_holdout, idx), nullptr, false), false);
      const int c = logits.dim(1);
      for (size_t i = 0; i < idx.size(); ++i) {
        const double* row = logits.data.data() + static_cast<int64_t>(i) * c;
        const int pred = static_cast<int>(std::max_element(row, row + c) - row);
        if (classes[static_cast<size_t>(pred)] ==
            base_holdout.samples[start + i].label)
          ++correct;
      }
    }
    result.holdout_accuracy = static_cast<double>(correct) / static_cast<double>(base_holdout.size());
  }

  backbone.freeze();
  if (result.holdout_accuracy < config.min_accuracy && !base_holdout.empty()) {
    std::ostringstream os;
    os << "pretraining failure: held-out accuracy " << result.holdout_accuracy << " after "
       << config.epochs << " epochs is below the configured minimum " << config.min_accuracy;
    throw ContractError(os.str());
  }
  return result;
}

}  // namespace acl
