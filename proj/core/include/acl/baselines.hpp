#pragma once

#include <vector>

#include "acl/backbone.hpp"
#include "acl/dataset.hpp"
#include "acl/engine.hpp"
#include "acl/report.hpp"

namespace acl {

struct BaselineConfig {
  OptimSpec optim;  // SGD over the whole network
  BaselineConfig() {
    optim.kind = OptimKind::sgd_momentum;
    optim.lr = 0.01;
    optim.momentum = 0.9;
    optim.weight_decay = 5e-4;
    optim.batch_size = 32;
    optim.epochs = 30;
  }
};

// Forgetting reference: one expanding softmax head on top of the (unfrozen)
// pretrained backbone, fine-tuned on each round's data only — no memory, no
// adapters. Evaluated after every round over all classes learned so far.
std::vector<RoundReport> run_naive_baseline(const Backbone& pretrained, const TaskSplit& split,
                                            const Dataset& train, const Dataset& test,
                                            const BaselineConfig& config, uint64_t seed);

// Upper bound: the same network trained once on every round's classes
// jointly; per-round reports evaluate with predictions masked to the classes
// learned by that round.
std::vector<RoundReport> run_joint_baseline(const Backbone& pretrained, const TaskSplit& split,
                                            const Dataset& train, const Dataset& test,
                                            const BaselineConfig& config, uint64_t seed);

}  // namespace acl
