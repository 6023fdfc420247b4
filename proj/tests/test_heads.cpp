#include <algorithm>

#include "acl/errors.hpp"
#include "acl/heads.hpp"
#include "acl/ops.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace acl;

TEST_CASE("zero weights and biases give a uniform distribution") {
  Rng rng(1);
  TaskHead head(1, {4, 5}, 6, true, rng);
  for (Parameter* p : head.params())
    std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
  Tensor f = oracle::random_tensor({3, 6}, rng);
  Tensor p = head.probabilities(f);
  for (double v : p.data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("huge bias on `others` saturates its probability") {
  Rng rng(2);
  TaskHead head(1, {0, 1}, 4, true, rng);
  head.params()[1]->value.data = {0.0, 0.0, 50.0};
  Tensor f({1, 4}, 0.0);
  Tensor p = head.probabilities(f);
  CHECK(p.data[2] > 0.999999);
}

TEST_CASE("head probabilities match the closed-form linear+softmax oracle") {
  Rng rng(3);
  TaskHead head(2, {7, 8, 9}, 5, true, rng);
  Tensor f = oracle::random_tensor({4, 5}, rng);
  Tensor got = head.probabilities(f);
  Tensor logits = oracle::linear_reference(f, head.params()[0]->value, head.params()[1]->value);
  auto ref = oracle::softmax_xent_reference(logits, {0, 0, 0, 0});
  CHECK(oracle::max_rel_diff(got.data, ref.probs) < 1e-9);
  for (int i = 0; i < 4; ++i) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) s += got.data[(size_t)(i * 4 + j)];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("selection rule: single head picks its best in-task class") {
  HeadProbRow h;
  h.task_id = 1;
  h.class_list = {10, 11};
  h.probs = {0.7, 0.2, 0.1};
  CHECK(select_prediction({h}) == 10);
}

TEST_CASE("selection rule: smallest `others` probability wins") {
  HeadProbRow h1{1, {0.05, 0.05, 0.9}, {0, 1}, true};
  HeadProbRow h2{2, {0.1, 0.7, 0.2}, {2, 3}, true};
  int chosen = 0;
  CHECK(select_prediction({h1, h2}, &chosen) == 3);
  CHECK(chosen == 2);
}

TEST_CASE("selection rule: equal `others` breaks toward the lowest task id") {
  HeadProbRow h1{1, {0.2, 0.3, 0.5}, {0, 1}, true};
  HeadProbRow h2{2, {0.4, 0.1, 0.5}, {2, 3}, true};
  int chosen = 0;
  CHECK(select_prediction({h2, h1}, &chosen) == 1);  // storage order must not matter
  CHECK(chosen == 1);
}

TEST_CASE("selection rule never returns the `others` pseudo-class") {
  Rng rng(5);
  std::uniform_int_distribution<int> n_heads(1, 5), n_cls(1, 4);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<HeadProbRow> heads;
    int next_class = 0;
    const int t = n_heads(rng);
    for (int s = 0; s < t; ++s) {
      HeadProbRow h;
      h.task_id = s + 1;
      const int c = n_cls(rng);
      for (int j = 0; j < c; ++j) h.class_list.push_back(next_class++);
      double total = 0.0;
      for (int j = 0; j <= c; ++j) {
        h.probs.push_back(u(rng));
        total += h.probs.back();
      }
      for (double& p : h.probs) p /= total;
      heads.push_back(std::move(h));
    }
    const int got = select_prediction(heads);
    const int want = oracle::select_prediction_reference(heads);
    CHECK(got == want);
    bool in_some_task = false;
    for (const auto& h : heads)
      in_some_task |= std::find(h.class_list.begin(), h.class_list.end(), got) != h.class_list.end();
    CHECK(in_some_task);
  }
}

TEST_CASE("selection is invariant to permuting head storage order") {
  Rng rng(7);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<HeadProbRow> heads;
    for (int s = 0; s < 4; ++s) {
      HeadProbRow h;
      h.task_id = s + 1;
      h.class_list = {s * 2, s * 2 + 1};
      double total = 0.0;
      for (int j = 0; j < 3; ++j) {
        h.probs.push_back(u(rng));
        total += h.probs.back();
      }
      for (double& p : h.probs) p /= total;
      heads.push_back(std::move(h));
    }
    const int baseline = select_prediction(heads);
    std::shuffle(heads.begin(), heads.end(), rng);
    CHECK(select_prediction(heads) == baseline);
  }
}

TEST_CASE("`others` forced to -inf-like bias reduces to plain argmax") {
  Rng rng(9);
  TaskHead head(1, {3, 4, 5}, 6, true, rng);
  head.params()[1]->value.data[3] = -1e9;  // effectively remove `others`
  Tensor f = oracle::random_tensor({5, 6}, rng);
  Tensor probs = head.probabilities(f);
  for (int i = 0; i < 5; ++i) {
    HeadProbRow row{1,
                    {probs.data.begin() + i * 4, probs.data.begin() + (i + 1) * 4},
                    {3, 4, 5},
                    true};
    const int got = select_prediction({row});
    // plain argmax over the in-task logits
    Tensor logits = oracle::linear_reference(f, head.params()[0]->value, head.params()[1]->value);
    int arg = 0;
    for (int j = 1; j < 3; ++j)
      if (logits.data[(size_t)(i * 4 + j)] > logits.data[(size_t)(i * 4 + arg)]) arg = j;
    CHECK(got == 3 + arg);
    CHECK(row.probs[3] == doctest::Approx(0.0));
  }
}

TEST_CASE("map_labels sends in-task ids to local indices and the rest to `others`") {
  Rng rng(11);
  TaskHead head(1, {4, 5}, 3, true, rng);
  const std::vector<int> learned = {0, 1, 4, 5};
  CHECK(head.map_labels({4, 5, 4}, learned) == std::vector<int>{0, 1, 0});
  CHECK(head.map_labels({0, 1}, learned) == std::vector<int>{2, 2});

  SUBCASE("mixed batches agree with a dictionary oracle") {
    std::map<int, int> dict{{4, 0}, {5, 1}, {0, 2}, {1, 2}};
    std::uniform_int_distribution<int> pick(0, 3);
    std::vector<int> batch;
    for (int i = 0; i < 64; ++i) batch.push_back(learned[(size_t)pick(rng)]);
    const auto got = head.map_labels(batch, learned);
    for (size_t i = 0; i < batch.size(); ++i) CHECK(got[i] == dict.at(batch[i]));
  }

  SUBCASE("a label that was never learned is rejected") {
    CHECK_THROWS_WITH_AS(head.map_labels({9}, learned), doctest::Contains("never learned"),
                         ContractError);
  }
}
