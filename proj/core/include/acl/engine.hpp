#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "acl/adapter.hpp"
#include "acl/backbone.hpp"
#include "acl/dataset.hpp"
#include "acl/heads.hpp"
#include "acl/metrics.hpp"
#include "acl/optim.hpp"
#include "acl/report.hpp"

namespace acl {

struct AblationToggles {
  bool task_specific_heads = true;
  bool adapters = true;
  bool others_neuron = true;
  bool finetune = true;
};

struct RoundConfig {
  OptimSpec adapter_optim;   // SGD+momentum for adapter+head learning
  OptimSpec finetune_optim;  // Adam for the balanced multi-head fine-tune
  AblationToggles toggles;
  AdapterConfig adapter;
  AugmentSpec augment;

  RoundConfig();
  void validate() const;
};

// Class-balanced exemplar store under a fixed total budget. Per-class quota is
// floor(M / #classes) with the remainder going to the lowest class ids; once
// selected, exemplars are kept (and only truncated) in selection order.
struct RehearsalMemory {
  int budget = 0;
  uint64_t selection_seed = 0;
  std::map<int, std::vector<Sample>> store;

  int total_stored() const;
  std::vector<int> classes() const;
  Dataset as_dataset(int channels, int height, int width) const;
  void check_budget() const;  // throws ContractError when over budget
};

// Inserts the new classes (uniform random selection, seeded) and truncates
// every class to the new quota. Warns on stderr when the budget cannot give
// each class even one exemplar; throws when the budget is zero.
void rehearsal_update(RehearsalMemory& memory, const Dataset& new_data);

struct TaskRecord {
  int task_id = 0;
  std::vector<int> class_list;
  AdapterSet adapters;  // empty when the round ran without adapters
  TaskHead head;
  uint64_t adapter_checksum = 0;  // recorded when the round completed
};

struct EvalOutcome {
  RecallTally tally;
  double head_selection_acc = 1.0;
  std::map<int, double> per_task_accuracy;
};

// The continual learner: frozen backbone, ordered task records, rehearsal
// memory, and the per-round procedure (learn_task -> update_memory ->
// build_finetune_set -> finetune_heads).
class ContinualModel {
public:
  ContinualModel(Backbone backbone, int memory_budget, uint64_t selection_seed);

  // Trains a fresh AdapterSet (alpha = 0 at init) and TaskHead on the new
  // classes plus memory-as-`others`, then freezes the adapters and appends
  // the TaskRecord. Everything that existed before is bit-identical after.
  void learn_task(const Dataset& new_data, const RoundConfig& config, Rng& rng);

  void update_memory(const Dataset& new_data);

  // Exactly q samples per learned class, q = floor(budget / #learned):
  // old classes come from memory, current-task classes are subsampled
  // (seeded). q shrinks to the smallest available count if a class cannot
  // fill its quota, and a zero-sample class is an error.
  Dataset build_finetune_set(const Dataset& current_task_data, Rng& rng) const;

  // Eq.-style joint fine-tune: mean over heads of each head's cross-entropy
  // on its own feature extraction; only head weights move. Returns the final
  // epoch's mean loss.
  double finetune_heads(const Dataset& balanced, const RoundConfig& config, Rng& rng);

  // learn_task -> update_memory -> (finetune stages per toggles) -> evaluate
  RoundReport run_round(const Dataset& new_data, const Dataset& test_learned,
                        const RoundConfig& config, Rng& rng);

  // multi-head loss of Eq. form on the current heads, no parameter updates
  double multi_head_loss(const Dataset& balanced) const;
  std::vector<double> per_head_losses(const Dataset& balanced) const;

  Tensor extract_task_feature(int task_id, const Tensor& batch_images);

  struct BatchPrediction {
    std::vector<int> predicted;
    std::vector<int> selected_task;  // head chosen per sample (0 for unified)
  };
  BatchPrediction predict_batch(const Dataset& data);
  int predict(const Tensor& chw_image);
  EvalOutcome evaluate(const Dataset& test_learned);

  Backbone& backbone() { return backbone_; }
  const Backbone& backbone() const { return backbone_; }
  std::vector<TaskRecord>& records() { return records_; }
  const std::vector<TaskRecord>& records() const { return records_; }
  RehearsalMemory& memory() { return memory_; }
  const RehearsalMemory& memory() const { return memory_; }
  std::vector<int> learned_classes() const;  // sorted over all records
  int rounds_completed() const { return static_cast<int>(records_.size()); }
  uint64_t frozen_backbone_checksum() const { return backbone_checksum_; }
  double last_train_loss() const { return last_train_loss_; }
  bool unified_mode() const { return unified_head_.has_value(); }

  void save(const std::string& checkpoint_path, const std::string& manifest_path) const;
  static ContinualModel load(const std::string& checkpoint_path, const std::string& manifest_path);

private:
  friend struct EngineTestAccess;

  void assert_backbone_unchanged(const char* where) const;
  void assert_adapters_unchanged(const char* where) const;
  Tensor features_for(const Dataset& data, const std::vector<int>& indices, int task_index,
                      const AugmentSpec& augment, Rng* rng);
  void run_round_unified(const Dataset& new_data, const RoundConfig& config, Rng& rng);

  Backbone backbone_;
  std::vector<TaskRecord> records_;
  RehearsalMemory memory_;
  uint64_t backbone_checksum_ = 0;
  double last_train_loss_ = 0.0;

  // unified-classifier ablation (no task-specific heads): one linear head
  // over the concatenated per-task features, rebuilt every round
  std::optional<Linear> unified_head_;
  std::vector<int> unified_classes_;
};

}  // namespace acl
