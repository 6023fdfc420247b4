#include "acl/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "acl/errors.hpp"
#include "acl/metrics.hpp"
#include "acl/ops.hpp"

namespace acl {

namespace {

constexpr int kEvalChunk = 64;

std::vector<int> iota_indices(size_t n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// full fine-tune of backbone+head on the given data (labels mapped densely
// into class_order)
double train_all(Backbone& net, Linear& head, const Dataset& data,
                 const std::vector<int>& class_order, const OptimSpec& spec, Rng& rng) {
  auto local_of = [&](int global) {
    const auto it = std::find(class_order.begin(), class_order.end(), global);
    if (it == class_order.end())
      throw ContractError("baseline: label " + std::to_string(global) + " missing from head");
    return static_cast<int>(it - class_order.begin());
  };
  std::vector<Parameter*> params = net.params();
  for (Parameter* p : head.params()) params.push_back(p);
  Optimizer opt(spec, params);
  std::vector<int> order = iota_indices(data.size());
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
      std::vector<int> targets;
      targets.reserve(batch.size());
      for (int i : batch) targets.push_back(local_of(data.samples[static_cast<size_t>(i)].label));
      opt.zero_grad();
      Tensor feature = net.forward_from(0, stack_images(data, batch), nullptr, true);
      Tensor logits = head.forward(feature, true);
      auto xent = ops::softmax_cross_entropy(logits, targets);
      Tensor d_feature = head.backward(xent.d_logits);
      net.backward_from(0, d_feature, nullptr, false);
      opt.step();
      epoch_loss += xent.loss;
      ++batches;
    }
    if (batches > 0) final_loss = epoch_loss / batches;
  }
  return final_loss;
}

// argmax over an allowed subset of head outputs
std::vector<int> predict_masked(Backbone& net, Linear& head, const Dataset& data,
                                const std::vector<int>& class_order,
                                const std::vector<int>& allowed) {
  std::vector<char> ok(class_order.size(), 0);
  for (int cls : allowed) {
    const auto it = std::find(class_order.begin(), class_order.end(), cls);
    if (it != class_order.end()) ok[static_cast<size_t>(it - class_order.begin())] = 1;
  }
  std::vector<int> preds;
  preds.reserve(data.size());
  const auto idx = iota_indices(data.size());
  for (size_t start = 0; start < idx.size(); start += kEvalChunk) {
    const size_t end = std::min(idx.size(), start + kEvalChunk);
    const std::vector<int> chunk(idx.begin() + static_cast<int64_t>(start),
                                 idx.begin() + static_cast<int64_t>(end));
    Tensor logits = head.forward(net.forward_from(0, stack_images(data, chunk), nullptr, false), false);
    const int c = logits.dim(1);
    for (size_t i = 0; i < chunk.size(); ++i) {
      const double* row = logits.data.data() + static_cast<int64_t>(i) * c;
      int best = -1;
      for (int j = 0; j < c; ++j)
        if (ok[static_cast<size_t>(j)] && (best < 0 || row[j] > row[best])) best = j;
      preds.push_back(class_order[static_cast<size_t>(best)]);
    }
  }
  return preds;
}

RoundReport make_report(const std::string& kind, int round, const std::vector<int>& learned,
                        const std::vector<int>& new_classes, const std::vector<int>& preds,
                        const Dataset& test, uint64_t seed, double train_loss, double ms) {
  RoundReport rep;
  rep.kind = kind;
  rep.round = round;
  rep.task_id = 0;
  rep.classes_learned = learned;
  rep.new_classes = new_classes;
  const std::vector<int> truth = gather_labels(test, iota_indices(test.size()));
  rep.head_selection_acc = 1.0;  // single head
  auto tally = mcr_from_predictions(preds, truth, learned);
  rep.mcr = tally.mcr;
  rep.per_class_recall = tally.per_class_recall;
  rep.final_train_loss = train_loss;
  rep.seed = seed;
  rep.wall_clock_ms = ms;
  return rep;
}

}  // namespace

std::vector<RoundReport> run_naive_baseline(const Backbone& pretrained, const TaskSplit& split,
                                            const Dataset& train, const Dataset& test,
                                            const BaselineConfig& config, uint64_t seed) {
  Rng rng(seed);
  Backbone net = pretrained;  // private copy; the original stays frozen
  for (Parameter* p : net.params()) p->frozen = false;

  std::vector<RoundReport> reports;
  std::vector<int> class_order;
  Linear head("naive.head", net.feature_dim(), 1, rng);
  for (size_t r = 0; r < split.rounds.size(); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& new_classes = split.rounds[r];

    // widen the head: keep old rows, append freshly initialized ones
    std::vector<int> wider_order = class_order;
    wider_order.insert(wider_order.end(), new_classes.begin(), new_classes.end());
    Linear wider("naive.head", net.feature_dim(), static_cast<int>(wider_order.size()), rng);
    if (!class_order.empty()) {
      std::copy(head.weight.value.data.begin(), head.weight.value.data.end(),
                wider.weight.value.data.begin());
      std::copy(head.bias.value.data.begin(), head.bias.value.data.end(), wider.bias.value.data.begin());
    }
    head = std::move(wider);
    class_order = std::move(wider_order);

    // current round's data only: the forgetting reference
    const Dataset round_train = train.filter_classes(new_classes);
    const double loss = train_all(net, head, round_train, class_order, config.optim, rng);

    const std::vector<int> learned = split.classes_through_round(static_cast<int>(r));
    std::vector<int> learned_sorted = learned;
    std::sort(learned_sorted.begin(), learned_sorted.end());
    const Dataset round_test = test.filter_classes(learned_sorted);
    const auto preds = predict_masked(net, head, round_test, class_order, learned_sorted);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    reports.push_back(make_report("naive", static_cast<int>(r) + 1, learned_sorted, new_classes, preds,
                                  round_test, seed, loss, ms));
  }
  return reports;
}

std::vector<RoundReport> run_joint_baseline(const Backbone& pretrained, const TaskSplit& split,
                                            const Dataset& train, const Dataset& test,
                                            const BaselineConfig& config, uint64_t seed) {
  Rng rng(seed);
  Backbone net = pretrained;
  for (Parameter* p : net.params()) p->frozen = false;

  std::vector<int> all_classes = split.classes_through_round(static_cast<int>(split.rounds.size()) - 1);
  std::sort(all_classes.begin(), all_classes.end());
  Linear head("joint.head", net.feature_dim(), static_cast<int>(all_classes.size()), rng);

  const auto t0 = std::chrono::steady_clock::now();
  const Dataset joint_train = train.filter_classes(all_classes);
  const double loss = train_all(net, head, joint_train, all_classes, config.optim, rng);
  const double train_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  std::vector<RoundReport> reports;
  for (size_t r = 0; r < split.rounds.size(); ++r) {
    const auto e0 = std::chrono::steady_clock::now();
    std::vector<int> learned = split.classes_through_round(static_cast<int>(r));
    std::sort(learned.begin(), learned.end());
    const Dataset round_test = test.filter_classes(learned);
    const auto preds = predict_masked(net, head, round_test, all_classes, learned);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - e0).count();
    reports.push_back(make_report("joint", static_cast<int>(r) + 1, learned, split.rounds[r], preds,
                                  round_test, seed, loss, r == 0 ? train_ms + ms : ms));
  }
  return reports;
}

}  // namespace acl
