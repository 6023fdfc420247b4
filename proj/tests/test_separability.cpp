// Separability probe for the synthetic generator: a small CNN must separate
// the classes while a linear probe on raw pixels must not. Slower than the
// other unit suites, so it lives in its own binary.

#include <numeric>

#include "acl/backbone.hpp"
#include "acl/dataset.hpp"
#include "acl/layers.hpp"
#include "acl/ops.hpp"
#include "acl/optim.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace acl;

namespace {

// multinomial logistic regression on flattened pixels
double linear_probe_accuracy(const Dataset& train, const Dataset& test, int num_classes) {
  Rng rng(11);
  const int d = train.channels * train.height * train.width;
  Linear fc("probe", d, num_classes, rng);
  for (Parameter* p : fc.params()) std::fill(p->value.data.begin(), p->value.data.end(), 0.0);

  auto flatten = [&](const Dataset& data) {
    Tensor x({static_cast<int>(data.size()), d});
    for (size_t i = 0; i < data.size(); ++i)
      std::copy(data.samples[i].image.data.begin(), data.samples[i].image.data.end(),
                x.data.begin() + static_cast<int64_t>(i) * d);
    return x;
  };
  Tensor xtr = flatten(train);
  std::vector<int> ytr;
  for (const auto& smp : train.samples) ytr.push_back(smp.label);

  OptimSpec spec;
  spec.kind = OptimKind::adam;
  spec.lr = 0.01;
  spec.epochs = 300;
  Optimizer opt(spec, fc.params());
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    opt.zero_grad();
    auto xent = ops::softmax_cross_entropy(fc.forward(xtr, true), ytr);
    fc.backward(xent.d_logits);
    opt.step();
  }

  Tensor logits = fc.forward(flatten(test), false);
  size_t correct = 0;
  for (size_t i = 0; i < test.size(); ++i) {
    const double* row = logits.data.data() + static_cast<int64_t>(i) * num_classes;
    const int pred = static_cast<int>(std::max_element(row, row + num_classes) - row);
    if (pred == test.samples[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace

TEST_CASE("gratings: small CNN separates what a linear pixel probe cannot") {
  SyntheticSpec spec;
  spec.num_classes = 4;
  spec.train_per_class = 100;
  spec.test_per_class = 20;
  spec.height = 16;
  spec.width = 16;
  auto data = generate_synthetic(spec, 314159);

  const double linear_acc = linear_probe_accuracy(data.train, data.test, 4);
  CHECK(linear_acc <= 0.70);

  Rng rng(1);
  BackboneConfig bc;
  bc.input_size = 16;
  bc.stage_channels = {16, 32, 64};
  Backbone cnn(bc, rng);
  PretrainConfig pc;
  pc.epochs = 30;
  pc.min_accuracy = 0.0;
  const auto result = pretrain_backbone(cnn, data.train, data.test, pc, rng);
  CHECK(result.holdout_accuracy >= 0.95);

  MESSAGE("linear probe ", linear_acc, " vs cnn ", result.holdout_accuracy);
}
