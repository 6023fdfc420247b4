#include "acl/engine.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>

#include "acl/checkpoint.hpp"
#include "acl/errors.hpp"
#include "acl/ops.hpp"
#include "json.hpp"

namespace acl {

namespace {

constexpr int kEvalChunk = 64;

std::vector<int> iota_indices(size_t n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// rows of src at the given positions -> new [B, D] tensor
Tensor gather_rows(const Tensor& src, const std::vector<int>& positions) {
  const int d = src.dim(1);
  Tensor out({static_cast<int>(positions.size()), d});
  for (size_t i = 0; i < positions.size(); ++i)
    std::copy_n(src.data.begin() + static_cast<int64_t>(positions[i]) * d, d,
                out.data.begin() + static_cast<int64_t>(i) * d);
  return out;
}

std::vector<int> slice_at(const std::vector<int>& values, const std::vector<int>& positions) {
  std::vector<int> out;
  out.reserve(positions.size());
  for (int p : positions) out.push_back(values[static_cast<size_t>(p)]);
  return out;
}

// split a batched [N,...] tensor into per-sample tensors
std::vector<Tensor> split_batch(const Tensor& batch) {
  std::vector<int> sample_shape(batch.shape.begin() + 1, batch.shape.end());
  const size_t per = static_cast<size_t>(shape_numel(sample_shape));
  std::vector<Tensor> out;
  out.reserve(static_cast<size_t>(batch.dim(0)));
  for (int i = 0; i < batch.dim(0); ++i) {
    Tensor t(sample_shape);
    std::copy_n(batch.data.begin() + static_cast<int64_t>(i) * static_cast<int64_t>(per), per,
                t.data.begin());
    out.push_back(std::move(t));
  }
  return out;
}

Tensor stack_tensors(const std::vector<Tensor>& items, const std::vector<int>& indices) {
  std::vector<int> shape = items[static_cast<size_t>(indices[0])].shape;
  shape.insert(shape.begin(), static_cast<int>(indices.size()));
  Tensor out(shape);
  const size_t per = items[static_cast<size_t>(indices[0])].data.size();
  for (size_t i = 0; i < indices.size(); ++i)
    std::copy_n(items[static_cast<size_t>(indices[i])].data.begin(), per,
                out.data.begin() + static_cast<int64_t>(i * per));
  return out;
}

}  // namespace

RoundConfig::RoundConfig() {
  adapter_optim.kind = OptimKind::sgd_momentum;
  adapter_optim.lr = 0.01;
  adapter_optim.momentum = 0.9;
  adapter_optim.weight_decay = 5e-4;
  adapter_optim.batch_size = 32;
  adapter_optim.schedule = {{70, 0.1}, {100, 0.1}, {130, 0.1}};
  adapter_optim.epochs = 60;  // desk-scale default; the 200-epoch schedule is the "paper" preset

  finetune_optim.kind = OptimKind::adam;
  finetune_optim.lr = 0.001;
  finetune_optim.weight_decay = 0.0;
  finetune_optim.batch_size = 32;
  finetune_optim.schedule = {{55, 0.1}, {80, 0.1}};
  finetune_optim.epochs = 30;
}

void RoundConfig::validate() const {
  adapter_optim.validate();
  finetune_optim.validate();
  if (augment.rotation_max_deg < 0.0) throw ConfigError("round config: rotation bound must be >= 0");
  if (augment.resize_to < 0) throw ConfigError("round config: resize target must be >= 0");
}

int RehearsalMemory::total_stored() const {
  int n = 0;
  for (const auto& [cls, v] : store) n += static_cast<int>(v.size());
  return n;
}

std::vector<int> RehearsalMemory::classes() const {
  std::vector<int> out;
  for (const auto& [cls, v] : store) out.push_back(cls);
  return out;
}

Dataset RehearsalMemory::as_dataset(int channels, int height, int width) const {
  Dataset out;
  out.channels = channels;
  out.height = height;
  out.width = width;
  for (const auto& [cls, v] : store)
    for (const auto& smp : v) out.samples.push_back(smp);
  return out;
}

void RehearsalMemory::check_budget() const {
  if (total_stored() > budget)
    throw ContractError("rehearsal memory holds " + std::to_string(total_stored()) +
                        " exemplars, over budget " + std::to_string(budget));
}

void rehearsal_update(RehearsalMemory& memory, const Dataset& new_data) {
  std::set<int> all_classes;
  for (const auto& [cls, v] : memory.store) all_classes.insert(cls);
  for (const auto& smp : new_data.samples) all_classes.insert(smp.label);
  if (all_classes.empty()) return;

  const int n = static_cast<int>(all_classes.size());
  if (memory.budget <= 0)
    throw ContractError("rehearsal memory: budget " + std::to_string(memory.budget) +
                        " cannot hold any of " + std::to_string(n) + " classes");
  const int quota = memory.budget / n;
  int remainder = memory.budget % n;
  if (quota == 0)
    std::cerr << "[acl] warning: memory budget " << memory.budget << " is below the class count "
              << n << "; some classes will hold no exemplar\n";

  // remainder goes to the lowest class ids
  std::map<int, int> target;
  for (int cls : all_classes) {
    target[cls] = quota + (remainder > 0 ? 1 : 0);
    if (remainder > 0) --remainder;
  }

  for (const auto& [cls, tgt] : target) {
    auto it = memory.store.find(cls);
    if (it != memory.store.end()) {
      // keep-once-chosen: truncate to the new quota, earliest selections first
      if (static_cast<int>(it->second.size()) > tgt) it->second.resize(static_cast<size_t>(tgt));
    } else {
      std::vector<int> idx;
      for (size_t i = 0; i < new_data.samples.size(); ++i)
        if (new_data.samples[i].label == cls) idx.push_back(static_cast<int>(i));
      Rng rng(derive_seed(memory.selection_seed, static_cast<uint64_t>(cls)));
      std::shuffle(idx.begin(), idx.end(), rng);
      auto& vec = memory.store[cls];
      const int take = std::min(tgt, static_cast<int>(idx.size()));
      for (int j = 0; j < take; ++j) vec.push_back(new_data.samples[static_cast<size_t>(idx[static_cast<size_t>(j)])]);
    }
  }
  memory.check_budget();
}

ContinualModel::ContinualModel(Backbone backbone, int memory_budget, uint64_t selection_seed)
    : backbone_(std::move(backbone)) {
  if (!backbone_.frozen())
    throw ContractError("continual model: backbone must be frozen before continual learning");
  if (memory_budget < 0) throw ConfigError("continual model: memory budget must be non-negative");
  memory_.budget = memory_budget;
  memory_.selection_seed = selection_seed;
  backbone_checksum_ = backbone_.checksum();
}

std::vector<int> ContinualModel::learned_classes() const {
  std::vector<int> out;
  for (const auto& rec : records_) out.insert(out.end(), rec.class_list.begin(), rec.class_list.end());
  std::sort(out.begin(), out.end());
  return out;
}

void ContinualModel::assert_backbone_unchanged(const char* where) const {
  if (backbone_.checksum() != backbone_checksum_)
    throw ContractError(std::string(where) + ": frozen backbone parameters changed");
}

void ContinualModel::assert_adapters_unchanged(const char* where) const {
  for (const auto& rec : records_)
    if (rec.adapters.checksum() != rec.adapter_checksum)
      throw ContractError(std::string(where) + ": adapter set of task " +
                          std::to_string(rec.task_id) + " changed after its round");
}

Tensor ContinualModel::features_for(const Dataset& data, const std::vector<int>& indices,
                                    int task_index, const AugmentSpec& augment, Rng* rng) {
  const int d = backbone_.feature_dim();
  Tensor out({static_cast<int>(indices.size()), d});
  AdapterSet& aset = records_[static_cast<size_t>(task_index)].adapters;
  StageTap* tap = aset.empty() ? nullptr : &aset;
  for (size_t start = 0; start < indices.size(); start += kEvalChunk) {
    const size_t end = std::min(indices.size(), start + kEvalChunk);
    const std::vector<int> chunk(indices.begin() + static_cast<int64_t>(start),
                                 indices.begin() + static_cast<int64_t>(end));
    Tensor x;
    if (augment.enabled() && rng) {
      std::vector<Tensor> imgs;
      imgs.reserve(chunk.size());
      for (int i : chunk) imgs.push_back(augment_image(data.samples[static_cast<size_t>(i)].image, augment, *rng));
      x = stack_tensors(imgs, iota_indices(imgs.size()));
    } else {
      x = stack_images(data, chunk);
    }
    Tensor f = backbone_.forward_stages(x, tap, false).feature;
    std::copy(f.data.begin(), f.data.end(), out.data.begin() + static_cast<int64_t>(start) * d);
  }
  return out;
}

void ContinualModel::learn_task(const Dataset& new_data, const RoundConfig& config, Rng& rng) {
  config.validate();
  if (new_data.empty()) throw ContractError("learn_task: empty new_data");
  const std::vector<int> new_classes = new_data.class_ids();
  const std::vector<int> learned = learned_classes();
  for (int cls : new_classes)
    if (std::binary_search(learned.begin(), learned.end(), cls))
      throw ContractError("learn_task: class " + std::to_string(cls) +
                          " overlaps a previously learned task");

  const int t = static_cast<int>(records_.size()) + 1;
  const uint64_t pre_checksum = [&] {
    std::vector<Parameter*> pre = backbone_.params();
    for (auto& rec : records_) {
      for (Parameter* p : rec.adapters.params()) pre.push_back(p);
      for (Parameter* p : rec.head.params()) pre.push_back(p);
    }
    return checksum_params(pre);
  }();

  std::vector<int> known = learned;
  known.insert(known.end(), new_classes.begin(), new_classes.end());
  std::sort(known.begin(), known.end());

  TaskRecord rec;
  rec.task_id = t;
  rec.class_list = new_classes;
  if (config.toggles.adapters) {
    const auto& channels = backbone_.config().stage_channels;
    const std::vector<int> gap_channels(channels.begin(), channels.end() - 1);
    rec.adapters = AdapterSet(t, gap_channels, config.adapter, rng);
  }
  rec.head = TaskHead(t, new_classes, backbone_.feature_dim(), config.toggles.others_neuron, rng);

  // training pool: new classes, plus preserved old data labeled `others`
  Dataset pool = new_data;
  if (config.toggles.others_neuron && memory_.total_stored() > 0)
    pool.append(memory_.as_dataset(new_data.channels, new_data.height, new_data.width));
  const std::vector<int> pool_labels = gather_labels(pool, iota_indices(pool.size()));
  const std::vector<int> pool_targets = rec.head.map_labels(pool_labels, known);

  const OptimSpec& ospec = config.adapter_optim;
  std::vector<Parameter*> train_params = rec.adapters.params();
  for (Parameter* p : rec.head.params()) train_params.push_back(p);
  Optimizer opt(ospec, train_params);

  const bool use_augment = config.augment.enabled();
  const bool has_adapters = !rec.adapters.empty();

  // Frozen-path caches: everything below the first gap never changes, so the
  // stage-1 outputs (or the full features when no adapters are in play) are
  // computed once per pool.
  std::vector<Tensor> z1_cache;
  Tensor feature_cache;
  if (!use_augment) {
    if (has_adapters) {
      std::vector<Tensor> all;
      all.reserve(pool.size());
      const auto idx = iota_indices(pool.size());
      for (size_t start = 0; start < idx.size(); start += kEvalChunk) {
        const size_t end = std::min(idx.size(), start + kEvalChunk);
        const std::vector<int> chunk(idx.begin() + static_cast<int64_t>(start),
                                     idx.begin() + static_cast<int64_t>(end));
        auto split = split_batch(backbone_.stage_forward(0, stack_images(pool, chunk), false));
        for (auto& s : split) all.push_back(std::move(s));
      }
      z1_cache = std::move(all);
    } else {
      StageTap* no_tap = nullptr;
      const auto idx = iota_indices(pool.size());
      feature_cache = Tensor({static_cast<int>(pool.size()), backbone_.feature_dim()});
      for (size_t start = 0; start < idx.size(); start += kEvalChunk) {
        const size_t end = std::min(idx.size(), start + kEvalChunk);
        const std::vector<int> chunk(idx.begin() + static_cast<int64_t>(start),
                                     idx.begin() + static_cast<int64_t>(end));
        Tensor f = backbone_.forward_stages(stack_images(pool, chunk), no_tap, false).feature;
        std::copy(f.data.begin(), f.data.end(),
                  feature_cache.data.begin() + static_cast<int64_t>(start) * backbone_.feature_dim());
      }
    }
  }

  std::vector<int> order = iota_indices(pool.size());
  for (int epoch = 0; epoch < ospec.epochs; ++epoch) {
    opt.set_epoch(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(ospec.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(ospec.batch_size));
      const std::vector<int> batch(order.begin() + static_cast<int64_t>(start),
                                   order.begin() + static_cast<int64_t>(end));
      const std::vector<int> targets = slice_at(pool_targets, batch);
      opt.zero_grad();

      double loss;
      if (has_adapters) {
        Tensor feature;
        if (use_augment) {
          std::vector<Tensor> imgs;
          imgs.reserve(batch.size());
          for (int i : batch)
            imgs.push_back(augment_image(pool.samples[static_cast<size_t>(i)].image, config.augment, rng));
          Tensor x = stack_tensors(imgs, iota_indices(imgs.size()));
          feature = backbone_.forward_stages(x, &rec.adapters, true).feature;
        } else {
          Tensor z1 = stack_tensors(z1_cache, batch);
          Tensor zhat = rec.adapters.forward(0, z1, true);
          feature = backbone_.forward_from(1, zhat, &rec.adapters, true);
        }
        Tensor logits = rec.head.logits(feature, true);
        auto xent = ops::softmax_cross_entropy(logits, targets);
        loss = xent.loss;
        Tensor d_feature = rec.head.backward(xent.d_logits);
        if (use_augment) {
          backbone_.backward_from(0, d_feature, &rec.adapters, false);
        } else {
          Tensor d_zhat = backbone_.backward_from(1, d_feature, &rec.adapters, true);
          rec.adapters.backward(0, d_zhat);
        }
      } else {
        Tensor feats;
        if (use_augment) {
          std::vector<Tensor> imgs;
          imgs.reserve(batch.size());
          for (int i : batch)
            imgs.push_back(augment_image(pool.samples[static_cast<size_t>(i)].image, config.augment, rng));
          feats = backbone_.forward_stages(stack_tensors(imgs, iota_indices(imgs.size())), nullptr, false).feature;
        } else {
          feats = gather_rows(feature_cache, batch);
        }
        Tensor logits = rec.head.logits(feats, true);
        auto xent = ops::softmax_cross_entropy(logits, targets);
        loss = xent.loss;
        rec.head.backward(xent.d_logits);
      }
      opt.step();
      epoch_loss += loss;
      ++batches;
    }
    assert_backbone_unchanged("learn_task");
    if (batches > 0) last_train_loss_ = epoch_loss / batches;
  }

  rec.adapters.set_frozen(true);
  rec.adapter_checksum = rec.adapters.checksum();
  records_.push_back(std::move(rec));

  const uint64_t post_checksum = [&] {
    std::vector<Parameter*> pre = backbone_.params();
    for (size_t i = 0; i + 1 < records_.size(); ++i) {
      for (Parameter* p : records_[i].adapters.params()) pre.push_back(p);
      for (Parameter* p : records_[i].head.params()) pre.push_back(p);
    }
    return checksum_params(pre);
  }();
  if (post_checksum != pre_checksum)
    throw ContractError("learn_task: pre-existing parameters changed while learning task " +
                        std::to_string(t));
}

void ContinualModel::update_memory(const Dataset& new_data) { rehearsal_update(memory_, new_data); }

Dataset ContinualModel::build_finetune_set(const Dataset& current_task_data, Rng& rng) const {
  const std::vector<int> learned = learned_classes();
  if (learned.empty()) throw ContractError("build_finetune_set: no learned classes");
  const int n = static_cast<int>(learned.size());
  const int q_base = memory_.budget / n;
  if (q_base <= 0)
    throw ContractError("build_finetune_set: per-class quota is zero (budget " +
                        std::to_string(memory_.budget) + " below class count " + std::to_string(n) + ")");

  const std::vector<int> current_classes = current_task_data.class_ids();
  const std::set<int> current_set(current_classes.begin(), current_classes.end());

  // availability per class; the balanced set must stay exactly uniform, so q
  // shrinks to the scarcest class
  std::map<int, std::vector<int>> current_indices;
  for (size_t i = 0; i < current_task_data.samples.size(); ++i)
    current_indices[current_task_data.samples[i].label].push_back(static_cast<int>(i));

  int q = q_base;
  for (int cls : learned) {
    int avail;
    if (current_set.count(cls)) {
      avail = static_cast<int>(current_indices[cls].size());
    } else {
      const auto it = memory_.store.find(cls);
      avail = it == memory_.store.end() ? 0 : static_cast<int>(it->second.size());
    }
    if (avail == 0)
      throw ContractError("build_finetune_set: class " + std::to_string(cls) +
                          " has zero available samples");
    q = std::min(q, avail);
  }
  if (q < q_base)
    std::cerr << "[acl] warning: fine-tune quota reduced from " << q_base << " to " << q
              << " by the scarcest class\n";

  Dataset out;
  out.channels = current_task_data.channels ? current_task_data.channels : backbone_.config().input_channels;
  out.height = current_task_data.height ? current_task_data.height : backbone_.config().input_size;
  out.width = current_task_data.width ? current_task_data.width : backbone_.config().input_size;
  for (int cls : learned) {
    if (current_set.count(cls)) {
      std::vector<int> idx = current_indices[cls];
      std::shuffle(idx.begin(), idx.end(), rng);  // seeded subsample of the current task
      for (int j = 0; j < q; ++j)
        out.samples.push_back(current_task_data.samples[static_cast<size_t>(idx[static_cast<size_t>(j)])]);
    } else {
      const auto& stored = memory_.store.at(cls);
      for (int j = 0; j < q; ++j) out.samples.push_back(stored[static_cast<size_t>(j)]);
    }
  }
  return out;
}

double ContinualModel::finetune_heads(const Dataset& balanced, const RoundConfig& config, Rng& rng) {
  if (records_.empty()) throw ContractError("finetune_heads: no task records");
  if (balanced.empty()) throw ContractError("finetune_heads: empty fine-tune set");
  const int t = static_cast<int>(records_.size());
  const std::vector<int> learned = learned_classes();
  const auto all_idx = iota_indices(balanced.size());
  const std::vector<int> labels = gather_labels(balanced, all_idx);

  // one feature extraction run per task; adapters and backbone are frozen so
  // the features are constants of the fine-tune stage
  std::vector<Tensor> feats(static_cast<size_t>(t));
  std::vector<std::vector<int>> targets(static_cast<size_t>(t));
  for (int s = 0; s < t; ++s) {
    feats[static_cast<size_t>(s)] = features_for(balanced, all_idx, s, AugmentSpec{}, nullptr);
    targets[static_cast<size_t>(s)] = records_[static_cast<size_t>(s)].head.map_labels(labels, learned);
  }

  std::vector<Parameter*> head_params;
  for (auto& rec : records_)
    for (Parameter* p : rec.head.params()) head_params.push_back(p);
  Optimizer opt(config.finetune_optim, head_params);

  double final_loss = 0.0;
  std::vector<int> order = iota_indices(balanced.size());
  for (int epoch = 0; epoch < config.finetune_optim.epochs; ++epoch) {
    opt.set_epoch(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.finetune_optim.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.finetune_optim.batch_size));
      const std::vector<int> batch(order.begin() + static_cast<int64_t>(start),
                                   order.begin() + static_cast<int64_t>(end));
      opt.zero_grad();
      double loss = 0.0;
      for (int s = 0; s < t; ++s) {
        auto& rec = records_[static_cast<size_t>(s)];
        Tensor fb = gather_rows(feats[static_cast<size_t>(s)], batch);
        Tensor logits = rec.head.logits(fb, true);
        auto xent = ops::softmax_cross_entropy(logits, slice_at(targets[static_cast<size_t>(s)], batch));
        loss += xent.loss / t;  // mean over heads
        for (double& g : xent.d_logits.data) g /= t;
        rec.head.backward(xent.d_logits);
      }
      opt.step();
      epoch_loss += loss;
      ++batches;
    }
    assert_backbone_unchanged("finetune_heads");
    if (batches > 0) final_loss = epoch_loss / batches;
  }
  assert_adapters_unchanged("finetune_heads");
  last_train_loss_ = final_loss;
  return final_loss;
}

std::vector<double> ContinualModel::per_head_losses(const Dataset& balanced) const {
  auto* self = const_cast<ContinualModel*>(this);
  const auto all_idx = iota_indices(balanced.size());
  const std::vector<int> labels = gather_labels(balanced, all_idx);
  const std::vector<int> learned = learned_classes();
  std::vector<double> out;
  for (size_t s = 0; s < records_.size(); ++s) {
    Tensor f = self->features_for(balanced, all_idx, static_cast<int>(s), AugmentSpec{}, nullptr);
    auto& rec = self->records_[s];
    Tensor logits = rec.head.fc().forward(f, false);
    out.push_back(ops::softmax_cross_entropy(logits, rec.head.map_labels(labels, learned), false).loss);
  }
  return out;
}

double ContinualModel::multi_head_loss(const Dataset& balanced) const {
  const auto losses = per_head_losses(balanced);
  double total = 0.0;
  for (double l : losses) total += l / static_cast<double>(losses.size());
  return total;
}

Tensor ContinualModel::extract_task_feature(int task_id, const Tensor& batch_images) {
  for (size_t s = 0; s < records_.size(); ++s)
    if (records_[s].task_id == task_id) {
      AdapterSet& aset = records_[s].adapters;
      return backbone_.forward_stages(batch_images, aset.empty() ? nullptr : &aset, false).feature;
    }
  throw ContractError("extract_task_feature: unknown task id " + std::to_string(task_id));
}

ContinualModel::BatchPrediction ContinualModel::predict_batch(const Dataset& data) {
  if (records_.empty() && !unified_head_) throw ContractError("predict: no learned tasks");
  const int n = static_cast<int>(data.size());
  BatchPrediction out;
  out.predicted.resize(static_cast<size_t>(n));
  out.selected_task.assign(static_cast<size_t>(n), 0);
  const auto all_idx = iota_indices(data.size());

  if (unified_head_) {
    const int t = static_cast<int>(records_.size());
    const int d = backbone_.feature_dim();
    Tensor concat({n, t * d});
    for (int s = 0; s < t; ++s) {
      Tensor f = features_for(data, all_idx, s, AugmentSpec{}, nullptr);
      for (int i = 0; i < n; ++i)
        std::copy_n(f.data.begin() + static_cast<int64_t>(i) * d, d,
                    concat.data.begin() + (static_cast<int64_t>(i) * t + s) * d);
    }
    Tensor logits = unified_head_->forward(concat, false);
    const int c = logits.dim(1);
    for (int i = 0; i < n; ++i) {
      const double* row = logits.data.data() + static_cast<int64_t>(i) * c;
      const int arg = static_cast<int>(std::max_element(row, row + c) - row);
      out.predicted[static_cast<size_t>(i)] = unified_classes_[static_cast<size_t>(arg)];
    }
    return out;
  }

  const int t = static_cast<int>(records_.size());
  std::vector<Tensor> probs(static_cast<size_t>(t));
  for (int s = 0; s < t; ++s) {
    Tensor f = features_for(data, all_idx, s, AugmentSpec{}, nullptr);
    probs[static_cast<size_t>(s)] = records_[static_cast<size_t>(s)].head.probabilities(f);
  }
  for (int i = 0; i < n; ++i) {
    std::vector<HeadProbRow> rows;
    rows.reserve(static_cast<size_t>(t));
    for (int s = 0; s < t; ++s) {
      const auto& rec = records_[static_cast<size_t>(s)];
      HeadProbRow row;
      row.task_id = rec.task_id;
      row.class_list = rec.class_list;
      row.has_others = rec.head.has_others();
      const int c = probs[static_cast<size_t>(s)].dim(1);
      row.probs.assign(probs[static_cast<size_t>(s)].data.begin() + static_cast<int64_t>(i) * c,
                       probs[static_cast<size_t>(s)].data.begin() + static_cast<int64_t>(i + 1) * c);
      rows.push_back(std::move(row));
    }
    int chosen_task = 0;
    out.predicted[static_cast<size_t>(i)] = select_prediction(rows, &chosen_task);
    out.selected_task[static_cast<size_t>(i)] = chosen_task;
  }
  return out;
}

int ContinualModel::predict(const Tensor& chw_image) {
  Dataset one;
  one.channels = chw_image.dim(0);
  one.height = chw_image.dim(1);
  one.width = chw_image.dim(2);
  one.samples.push_back({chw_image, 0});
  return predict_batch(one).predicted[0];
}

EvalOutcome ContinualModel::evaluate(const Dataset& test_learned) {
  const std::vector<int> learned =
      unified_head_ ? unified_classes_ : learned_classes();
  auto bp = predict_batch(test_learned);
  const std::vector<int> truth = gather_labels(test_learned, iota_indices(test_learned.size()));

  EvalOutcome out;
  out.tally = mcr_from_predictions(bp.predicted, truth, learned);
  if (!unified_head_) {
    size_t sel_correct = 0;
    std::map<int, int> owning_task;
    for (const auto& rec : records_)
      for (int cls : rec.class_list) owning_task[cls] = rec.task_id;
    for (size_t i = 0; i < truth.size(); ++i)
      if (bp.selected_task[i] == owning_task.at(truth[i])) ++sel_correct;
    out.head_selection_acc = static_cast<double>(sel_correct) / static_cast<double>(truth.size());
  }
  for (const auto& rec : records_) {
    double sum = 0.0;
    int cnt = 0;
    for (int cls : rec.class_list) {
      const auto it = out.tally.per_class_recall.find(cls);
      if (it != out.tally.per_class_recall.end()) {
        sum += it->second;
        ++cnt;
      }
    }
    if (cnt > 0) out.per_task_accuracy[rec.task_id] = sum / cnt;
  }
  return out;
}

namespace {
// trains a bare linear head on fixed features; shared by the unified ablation
double train_linear_head(Linear& head, const Tensor& features, const std::vector<int>& targets,
                         const OptimSpec& spec, Rng& rng) {
  Optimizer opt(spec, head.params());
  std::vector<int> order = iota_indices(static_cast<size_t>(features.dim(0)));
  double final_loss = 0.0;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    opt.set_epoch(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(spec.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(spec.batch_size));
      const std::vector<int> batch(order.begin() + static_cast<int64_t>(start),
                                   order.begin() + static_cast<int64_t>(end));
      opt.zero_grad();
      Tensor fb = gather_rows(features, batch);
      Tensor logits = head.forward(fb, true);
      auto xent = ops::softmax_cross_entropy(logits, slice_at(targets, batch));
      head.backward(xent.d_logits);
      opt.step();
      epoch_loss += xent.loss;
      ++batches;
    }
    if (batches > 0) final_loss = epoch_loss / batches;
  }
  return final_loss;
}
}  // namespace

void ContinualModel::run_round_unified(const Dataset& new_data, const RoundConfig& config, Rng& rng) {
  learn_task(new_data, config, rng);  // trains this task's adapters; its head is unused at inference
  update_memory(new_data);

  unified_classes_ = learned_classes();
  const int t = static_cast<int>(records_.size());
  const int d = backbone_.feature_dim();
  unified_head_.emplace("unified.head", t * d, static_cast<int>(unified_classes_.size()), rng);

  auto concat_features = [&](const Dataset& data) {
    const auto idx = iota_indices(data.size());
    Tensor concat({static_cast<int>(data.size()), t * d});
    for (int s = 0; s < t; ++s) {
      Tensor f = features_for(data, idx, s, AugmentSpec{}, nullptr);
      for (size_t i = 0; i < data.size(); ++i)
        std::copy_n(f.data.begin() + static_cast<int64_t>(i) * d, d,
                    concat.data.begin() + (static_cast<int64_t>(i) * t + s) * d);
    }
    return concat;
  };
  auto dense_targets = [&](const Dataset& data) {
    std::vector<int> out;
    for (const auto& smp : data.samples) {
      const auto it = std::lower_bound(unified_classes_.begin(), unified_classes_.end(), smp.label);
      out.push_back(static_cast<int>(it - unified_classes_.begin()));
    }
    return out;
  };

  // train on new data plus preserved old-class exemplars
  Dataset pool = new_data;
  Dataset mem = memory_.as_dataset(new_data.channels, new_data.height, new_data.width);
  const std::vector<int> new_classes = new_data.class_ids();
  const std::set<int> current(new_classes.begin(), new_classes.end());
  for (const auto& smp : mem.samples)
    if (!current.count(smp.label)) pool.samples.push_back(smp);
  last_train_loss_ = train_linear_head(*unified_head_, concat_features(pool), dense_targets(pool),
                                       config.finetune_optim, rng);

  if (config.toggles.finetune && t >= 2) {
    Dataset balanced = build_finetune_set(new_data, rng);
    last_train_loss_ = train_linear_head(*unified_head_, concat_features(balanced),
                                         dense_targets(balanced), config.finetune_optim, rng);
  }
}

RoundReport ContinualModel::run_round(const Dataset& new_data, const Dataset& test_learned,
                                      const RoundConfig& config, Rng& rng) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  if (!config.toggles.task_specific_heads) {
    run_round_unified(new_data, config, rng);
  } else {
    learn_task(new_data, config, rng);
    update_memory(new_data);
    if (config.toggles.finetune && records_.size() >= 2) {
      // round-1 fine-tune is skipped: a single head has nothing to calibrate
      Dataset balanced = build_finetune_set(new_data, rng);
      finetune_heads(balanced, config, rng);
    }
  }

  assert_backbone_unchanged("run_round");
  assert_adapters_unchanged("run_round");
  memory_.check_budget();

  RoundReport rep;
  rep.round = static_cast<int>(records_.size());
  rep.task_id = records_.back().task_id;
  rep.new_classes = records_.back().class_list;
  rep.classes_learned = learned_classes();
  rep.final_train_loss = last_train_loss_;
  rep.toggles = {{"task_specific_heads", config.toggles.task_specific_heads},
                 {"adapters", config.toggles.adapters},
                 {"others_neuron", config.toggles.others_neuron},
                 {"finetune", config.toggles.finetune}};
  if (!test_learned.empty()) {
    auto ev = evaluate(test_learned);
    rep.mcr = ev.tally.mcr;
    rep.per_class_recall = ev.tally.per_class_recall;
    rep.per_task_accuracy = ev.per_task_accuracy;
    rep.head_selection_acc = ev.head_selection_acc;
  }
  rep.wall_clock_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

void ContinualModel::save(const std::string& checkpoint_path, const std::string& manifest_path) const {
  auto* self = const_cast<ContinualModel*>(this);
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (Parameter* p : self->backbone_.params()) tensors.emplace_back(p->name, &p->value);
  for (auto& rec : self->records_) {
    for (Parameter* p : rec.adapters.params()) tensors.emplace_back(p->name, &p->value);
    for (Parameter* p : rec.head.params()) tensors.emplace_back(p->name, &p->value);
  }
  if (self->unified_head_)
    for (Parameter* p : self->unified_head_->params()) tensors.emplace_back(p->name, &p->value);
  write_checkpoint(checkpoint_path, tensors);

  nlohmann::json j;
  j["format_version"] = 1;
  const auto& bc = backbone_.config();
  j["backbone"] = {{"input_channels", bc.input_channels},
                   {"input_size", bc.input_size},
                   {"stage_channels", bc.stage_channels},
                   {"conv_kernel", bc.conv_kernel},
                   {"pool_window", bc.pool_window}};
  j["memory"] = {{"budget", memory_.budget}, {"selection_seed", memory_.selection_seed}};
  nlohmann::json tasks = nlohmann::json::array();
  for (auto& rec : self->records_) {
    nlohmann::json tj;
    tj["task_id"] = rec.task_id;
    tj["class_list"] = rec.class_list;
    tj["has_others"] = rec.head.has_others();
    tj["has_adapters"] = !rec.adapters.params().empty();
    if (tj["has_adapters"].get<bool>()) {
      auto& first = *std::find_if(rec.adapters.adapters().begin(), rec.adapters.adapters().end(),
                                  [](const auto& a) { return a.has_value(); });
      tj["adapter_kernel"] = first->params()[0]->value.dim(2);
      tj["adapter_down_channels"] = first->params()[0]->value.dim(0);
      nlohmann::json mask = nlohmann::json::array();
      for (const auto& a : rec.adapters.adapters()) mask.push_back(a.has_value());
      tj["gap_mask"] = mask;
    }
    tasks.push_back(tj);
  }
  j["tasks"] = tasks;
  if (unified_head_) j["unified_classes"] = unified_classes_;

  std::ofstream os(manifest_path, std::ios::trunc);
  if (!os) throw CheckpointError("cannot open for writing: " + manifest_path);
  os << j.dump(2) << "\n";
}

ContinualModel ContinualModel::load(const std::string& checkpoint_path,
                                    const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw CheckpointError("cannot open: " + manifest_path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("bad model manifest " + manifest_path + ": " + e.what());
  }

  BackboneConfig bc;
  bc.input_channels = j.at("backbone").at("input_channels").get<int>();
  bc.input_size = j.at("backbone").at("input_size").get<int>();
  bc.stage_channels = j.at("backbone").at("stage_channels").get<std::vector<int>>();
  bc.conv_kernel = j.at("backbone").at("conv_kernel").get<int>();
  bc.pool_window = j.at("backbone").at("pool_window").get<int>();

  Rng rng(0);  // all parameters are replaced by checkpoint payloads
  Backbone backbone(bc, rng);
  const NamedTensors tensors = read_checkpoint(checkpoint_path);
  auto load_params = [&](std::vector<Parameter*> params) {
    for (Parameter* p : params) {
      const Tensor& t = tensors.get(p->name);
      if (t.shape != p->value.shape)
        throw CheckpointError("tensor '" + p->name + "' has shape " + shape_str(t.shape) +
                              ", expected " + shape_str(p->value.shape));
      p->value.data = t.data;
    }
  };
  load_params(backbone.params());
  backbone.freeze();

  ContinualModel model(std::move(backbone), j.at("memory").at("budget").get<int>(),
                       j.at("memory").at("selection_seed").get<uint64_t>());

  const auto& channels = model.backbone_.config().stage_channels;
  const std::vector<int> gap_channels(channels.begin(), channels.end() - 1);
  for (const auto& tj : j.at("tasks")) {
    TaskRecord rec;
    rec.task_id = tj.at("task_id").get<int>();
    rec.class_list = tj.at("class_list").get<std::vector<int>>();
    if (tj.value("has_adapters", false)) {
      AdapterConfig ac;
      ac.kernel = tj.at("adapter_kernel").get<int>();
      const int down = tj.at("adapter_down_channels").get<int>();
      ac.bottleneck_ratio = std::max(1, gap_channels[0] / down);
      const auto mask = tj.at("gap_mask").get<std::vector<bool>>();
      ac.gap_mask.assign(mask.begin(), mask.end());
      rec.adapters = AdapterSet(rec.task_id, gap_channels, ac, rng);
      load_params(rec.adapters.params());
      rec.adapters.set_frozen(true);
    }
    rec.head = TaskHead(rec.task_id, rec.class_list, model.backbone_.feature_dim(),
                        tj.at("has_others").get<bool>(), rng);
    load_params(rec.head.params());
    rec.adapter_checksum = rec.adapters.checksum();
    model.records_.push_back(std::move(rec));
  }
  if (j.contains("unified_classes")) {
    model.unified_classes_ = j.at("unified_classes").get<std::vector<int>>();
    model.unified_head_.emplace("unified.head",
                                static_cast<int>(model.records_.size()) * model.backbone_.feature_dim(),
                                static_cast<int>(model.unified_classes_.size()), rng);
    load_params(model.unified_head_->params());
  }
  return model;
}

}  // namespace acl
