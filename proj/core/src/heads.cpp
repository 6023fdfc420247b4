#include "acl/heads.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "acl/errors.hpp"
#include "acl/ops.hpp"

namespace acl {

TaskHead::TaskHead(int task_id, std::vector<int> class_list, int feature_dim, bool with_others, Rng& rng)
    : task_id_(task_id),
      class_list_(std::move(class_list)),
      has_others_(with_others),
      fc_("task" + std::to_string(task_id) + ".head", feature_dim,
          static_cast<int>(class_list_.size()) + (with_others ? 1 : 0), rng) {
  if (class_list_.empty()) throw ContractError("task head: empty class list");
}

Tensor TaskHead::logits(const Tensor& features, bool record) { return fc_.forward(features, record); }

Tensor TaskHead::probabilities(const Tensor& features) {
  Tensor l = fc_.forward(features, false);
  const int n = l.dim(0), c = l.dim(1);
  Tensor p({n, c});
  for (int i = 0; i < n; ++i) {
    const double* row = l.data.data() + static_cast<int64_t>(i) * c;
    double m = row[0];
    for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(row[j] - m);
    for (int j = 0; j < c; ++j) p.data[static_cast<int64_t>(i) * c + j] = std::exp(row[j] - m) / z;
  }
  return p;
}

Tensor TaskHead::backward(const Tensor& d_logits) { return fc_.backward(d_logits); }

std::vector<int> TaskHead::map_labels(const std::vector<int>& global_labels,
                                      const std::vector<int>& all_learned_classes) const {
  const std::set<int> known(all_learned_classes.begin(), all_learned_classes.end());
  std::vector<int> out;
  out.reserve(global_labels.size());
  for (int g : global_labels) {
    const auto it = std::find(class_list_.begin(), class_list_.end(), g);
    if (it != class_list_.end()) {
      out.push_back(static_cast<int>(it - class_list_.begin()));
    } else {
      if (!known.count(g))
        throw ContractError("map_labels: global class id " + std::to_string(g) +
                            " was never learned");
      if (!has_others_)
        throw ContractError("map_labels: class " + std::to_string(g) + " is outside task " +
                            std::to_string(task_id_) + " and this head has no `others` output");
      out.push_back(others_index());
    }
  }
  return out;
}

int select_prediction(const std::vector<HeadProbRow>& heads, int* chosen_task) {
  if (heads.empty()) throw ContractError("select_prediction: no learned tasks");

  bool any_others = false;
  for (const auto& h : heads) any_others = any_others || h.has_others;

  const HeadProbRow* chosen = nullptr;
  if (any_others) {
    double best = 0.0;
    int best_task = 0;
    for (const auto& h : heads) {
      if (!h.has_others)
        throw ContractError("select_prediction: mixed heads with and without `others` outputs");
      const double p_others = h.probs[h.class_list.size()];
      if (!chosen || p_others < best || (p_others == best && h.task_id < best_task)) {
        chosen = &h;
        best = p_others;
        best_task = h.task_id;
      }
    }
  } else {
    // ablation without the `others` neuron: largest in-task probability wins
    double best = -1.0;
    int best_task = 0;
    for (const auto& h : heads) {
      const double top = *std::max_element(h.probs.begin(), h.probs.begin() + static_cast<int64_t>(h.class_list.size()));
      if (!chosen || top > best || (top == best && h.task_id < best_task)) {
        chosen = &h;
        best = top;
        best_task = h.task_id;
      }
    }
  }

  if (chosen_task) *chosen_task = chosen->task_id;
  int arg = 0;
  for (size_t j = 1; j < chosen->class_list.size(); ++j)  // `others` excluded
    if (chosen->probs[j] > chosen->probs[static_cast<size_t>(arg)]) arg = static_cast<int>(j);
  return chosen->class_list[static_cast<size_t>(arg)];
}

}  // namespace acl
