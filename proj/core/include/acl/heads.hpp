#pragma once

#include <vector>

#include "acl/layers.hpp"
#include "acl/tensor.hpp"

namespace acl {

// Per-task affine classifier over the task's classes plus, by default, one
// trailing `others` output absorbing every class learned outside this task.
class TaskHead {
public:
  TaskHead() = default;
  TaskHead(int task_id, std::vector<int> class_list, int feature_dim, bool with_others, Rng& rng);

  Tensor logits(const Tensor& features, bool record = true);
  Tensor probabilities(const Tensor& features);  // softmax rows, sum to 1
  Tensor backward(const Tensor& d_logits);       // returns d_features

  // global label -> local target index; labels outside the task map to the
  // `others` index. Labels that were never learned at all are rejected.
  std::vector<int> map_labels(const std::vector<int>& global_labels,
                              const std::vector<int>& all_learned_classes) const;

  int task_id() const { return task_id_; }
  const std::vector<int>& class_list() const { return class_list_; }
  int num_in_task() const { return static_cast<int>(class_list_.size()); }
  bool has_others() const { return has_others_; }
  int others_index() const { return num_in_task(); }  // always last
  int num_outputs() const { return num_in_task() + (has_others_ ? 1 : 0); }
  std::vector<Parameter*> params() { return fc_.params(); }
  Linear& fc() { return fc_; }

private:
  int task_id_ = 0;
  std::vector<int> class_list_;
  bool has_others_ = true;
  Linear fc_;
};

// One head's probability row for a single sample, as consumed by the
// selection rule below.
struct HeadProbRow {
  int task_id = 0;
  std::vector<double> probs;       // length C_t (+1 when has_others)
  std::vector<int> class_list;     // global ids, length C_t
  bool has_others = true;
};

// Inference rule: pick the head with the smallest `others` probability (ties
// break toward the lowest task id), then return the global id of its highest
// in-task output; the `others` pseudo-class is never returned. When heads
// carry no `others` output (ablation), falls back to the single largest
// in-task probability across all heads. chosen_task, when given, receives the
// selected head's task id.
int select_prediction(const std::vector<HeadProbRow>& heads, int* chosen_task = nullptr);

}  // namespace acl
