#include "acl/adapter.hpp"
#include "acl/errors.hpp"
#include "acl/gradcheck.hpp"
#include "acl/ops.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace acl;

TEST_CASE("alpha = 0 makes the adapter an exact identity") {
  Rng rng(1);
  AdapterConfig cfg;
  Adapter a(1, 1, 8, cfg, rng);
  CHECK(a.alpha() == 0.0);
  Tensor z = oracle::random_tensor({2, 8, 6, 6}, rng);
  Tensor out = a.forward(z, false);
  CHECK(oracle::max_abs_diff(out.data, z.data) == 0.0);
}

TEST_CASE("zero input with zero biases maps to zero") {
  Rng rng(2);
  AdapterConfig cfg;
  Adapter a(1, 1, 4, cfg, rng);
  a.params().back()->value.data[0] = 1.3;  // alpha != 0 so the branch is live
  Tensor z({1, 4, 4, 4}, 0.0);
  Tensor out = a.forward(z, false);
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("1x1-kernel adapter matches a hand computation") {
  Rng rng(3);
  AdapterConfig cfg;
  cfg.kernel = 1;
  cfg.bottleneck_ratio = 2;
  Adapter a(1, 1, 2, cfg, rng);  // channels 2 -> bottleneck 1
  auto params = a.params();      // down.w, down.b, up.w, up.b, alpha
  params[0]->value.data = {0.5, -0.25};  // down weight [1,2,1,1]
  params[1]->value.data = {0.1};
  params[2]->value.data = {2.0, -1.0};   // up weight [2,1,1,1]
  params[3]->value.data = {0.05, -0.05};
  params[4]->value.data = {0.7};

  Tensor z = oracle::random_tensor({1, 2, 4, 4}, rng);
  Tensor out = a.forward(z, false);

  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      // down picks the even-coordinate pixel of each 2x2 block (stride 2)
      const int sy = (y / 2) * 2, sx = (x / 2) * 2;
      const double d =
          0.5 * z.data[(size_t)z.at4(0, 0, sy, sx)] - 0.25 * z.data[(size_t)z.at4(0, 1, sy, sx)] + 0.1;
      const double r = d > 0 ? d : 0;
      const double up0 = 2.0 * r + 0.05, up1 = -1.0 * r - 0.05;
      CHECK(out.data[(size_t)out.at4(0, 0, y, x)] ==
            doctest::Approx(z.data[(size_t)z.at4(0, 0, y, x)] + 0.7 * up0).epsilon(1e-12));
      CHECK(out.data[(size_t)out.at4(0, 1, y, x)] ==
            doctest::Approx(z.data[(size_t)z.at4(0, 1, y, x)] + 0.7 * up1).epsilon(1e-12));
    }
}

TEST_CASE("odd spatial size is rejected with a shape error") {
  Rng rng(4);
  AdapterConfig cfg;
  Adapter a(1, 1, 4, cfg, rng);
  Tensor z({1, 4, 5, 6});
  CHECK_THROWS_WITH_AS(a.forward(z, false), doctest::Contains("odd spatial"), ShapeError);
}

TEST_CASE("gradients flow to down, up and alpha and pass finite differences") {
  Rng rng(5);
  AdapterConfig cfg;
  Adapter a(1, 1, 4, cfg, rng);
  a.params().back()->value.data[0] = 0.3;  // make all paths live
  Tensor z = oracle::random_tensor({2, 4, 4, 4}, rng);
  const std::vector<int> targets = {1, 3};

  auto forward = [&](bool record) {
    Tensor zhat = a.forward(z, record);
    return ops::global_avg_pool(zhat);
  };
  auto loss_fn = [&] { return ops::softmax_cross_entropy(forward(false), targets, false).loss; };

  auto params = a.params();
  for (Parameter* p : params) p->zero_grad();
  auto xent = ops::softmax_cross_entropy(forward(true), targets);
  Tensor dz = ops::global_avg_pool_backward(xent.d_logits, z.shape);
  a.backward(dz);
  for (Parameter* p : params) CHECK(p->has_grad);

  auto report = finite_difference_check(loss_fn, params, 1e-5);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("adapter set is light-weight next to the backbone") {
  Rng rng(6);
  BackboneConfig bc;  // default desk-scale backbone: 16/32/64 channels
  Backbone bb(bc, rng);
  AdapterConfig cfg;  // default 3x3 kernels, ratio 4
  AdapterSet aset(1, {16, 32}, cfg, rng);

  int64_t backbone_params = 0, adapter_params = 0;
  for (Parameter* p : bb.params()) backbone_params += p->numel();
  for (Parameter* p : aset.params()) adapter_params += p->numel();
  CHECK(adapter_params > 0);
  CHECK(adapter_params < backbone_params / 10);
}

TEST_CASE("gap mask controls which gaps carry adapters") {
  Rng rng(7);
  AdapterConfig cfg;
  cfg.gap_mask = {1, 0};
  AdapterSet aset(3, {8, 16}, cfg, rng);
  CHECK(aset.adapters()[0].has_value());
  CHECK_FALSE(aset.adapters()[1].has_value());
  Tensor z = oracle::random_tensor({1, 16, 4, 4}, rng);
  Tensor out = aset.forward(1, z, false);  // disabled gap passes through
  CHECK(oracle::max_abs_diff(out.data, z.data) == 0.0);

  cfg.gap_mask = {1, 0, 1};
  CHECK_THROWS_AS(AdapterSet(1, {8, 16}, cfg, rng), ConfigError);
}

TEST_CASE("frozen adapter set survives optimizer steps bit-exactly") {
  Rng rng(8);
  AdapterConfig cfg;
  AdapterSet aset(1, {8, 16}, cfg, rng);
  aset.set_frozen(true);
  const uint64_t before = aset.checksum();
  auto params = aset.params();
  for (Parameter* p : params) {
    p->value.zero_grad();
    p->has_grad = true;
    for (double& g : p->value.grad) g = 2.0;
  }
  OptimSpec spec;
  Optimizer opt(spec, params);
  opt.step();
  CHECK(aset.checksum() == before);
}
