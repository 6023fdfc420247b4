#include <cstring>
#include <filesystem>
#include <fstream>

#include "acl/cli.hpp"
#include "acl/config.hpp"
#include "acl/dataset.hpp"
#include "acl/errors.hpp"
#include "acl/metrics.hpp"
#include "acl/report.hpp"
#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"

using namespace acl;

TEST_CASE("mcr: perfect classifier scores 1.0") {
  std::vector<int> truth = {0, 0, 1, 1, 2};
  auto r = mcr_from_predictions(truth, truth, {0, 1, 2});
  CHECK(r.mcr == 1.0);
  CHECK(r.accuracy == 1.0);
}

TEST_CASE("mcr equals accuracy on a class-balanced set") {
  Rng rng(3);
  std::uniform_int_distribution<int> cls(0, 3);
  std::vector<int> truth, pred;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 25; ++i) {
      truth.push_back(c);
      pred.push_back(cls(rng));
    }
  auto r = mcr_from_predictions(pred, truth, {0, 1, 2, 3});
  CHECK(std::abs(r.mcr - r.accuracy) < 1e-12);
}

TEST_CASE("mcr matches the confusion-matrix oracle on a fixed table") {
  // confusion [[8,2],[5,5]] -> MCR = (0.8 + 0.5)/2
  std::vector<int> truth, pred;
  for (int i = 0; i < 8; ++i) { truth.push_back(0); pred.push_back(0); }
  for (int i = 0; i < 2; ++i) { truth.push_back(0); pred.push_back(1); }
  for (int i = 0; i < 5; ++i) { truth.push_back(1); pred.push_back(0); }
  for (int i = 0; i < 5; ++i) { truth.push_back(1); pred.push_back(1); }
  auto r = mcr_from_predictions(pred, truth, {0, 1});
  CHECK(r.mcr == doctest::Approx(0.65).epsilon(1e-12));
  CHECK(r.mcr == doctest::Approx(oracle::mcr_reference(pred, truth, {0, 1})).epsilon(1e-12));
  CHECK(r.per_class_recall.at(0) == doctest::Approx(0.8));
  CHECK(r.per_class_recall.at(1) == doctest::Approx(0.5));
}

TEST_CASE("mcr rejects a class with zero test samples") {
  CHECK_THROWS_WITH_AS(mcr_from_predictions({0}, {0}, {0, 1}), doctest::Contains("zero test samples"),
                       ContractError);
}

TEST_CASE("synthetic generation is byte-deterministic per seed") {
  SyntheticSpec spec;
  spec.num_classes = 4;
  spec.train_per_class = 6;
  spec.test_per_class = 2;
  spec.height = 12;
  spec.width = 12;
  auto a = generate_synthetic(spec, 42);
  auto b = generate_synthetic(spec, 42);
  REQUIRE(a.train.size() == b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train.samples[i].label == b.train.samples[i].label);
    CHECK(std::memcmp(a.train.samples[i].image.data.data(), b.train.samples[i].image.data.data(),
                      a.train.samples[i].image.data.size() * sizeof(double)) == 0);
  }
  auto c = generate_synthetic(spec, 43);
  CHECK(std::memcmp(a.train.samples[0].image.data.data(), c.train.samples[0].image.data.data(),
                    a.train.samples[0].image.data.size() * sizeof(double)) != 0);
}

TEST_CASE("train and test splits share no identical image") {
  SyntheticSpec spec;
  spec.num_classes = 3;
  spec.train_per_class = 10;
  spec.test_per_class = 5;
  spec.height = 8;
  spec.width = 8;
  auto data = generate_synthetic(spec, 7);
  for (const auto& tr : data.train.samples)
    for (const auto& te : data.test.samples)
      CHECK(std::memcmp(tr.image.data.data(), te.image.data.data(),
                        tr.image.data.size() * sizeof(double)) != 0);
}

TEST_CASE("degenerate synthetic shapes are rejected") {
  SyntheticSpec spec;
  spec.num_classes = 1;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.num_classes = 4;
  spec.height = 2;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("blob pattern generates and stays deterministic") {
  SyntheticSpec spec;
  spec.num_classes = 3;
  spec.train_per_class = 4;
  spec.test_per_class = 2;
  spec.height = 12;
  spec.width = 12;
  spec.pattern = PatternKind::blobs;
  auto a = generate_synthetic(spec, 9);
  auto b = generate_synthetic(spec, 9);
  CHECK(std::memcmp(a.train.samples[3].image.data.data(), b.train.samples[3].image.data.data(),
                    a.train.samples[3].image.data.size() * sizeof(double)) == 0);
}

TEST_CASE("acld dataset files round-trip") {
  SyntheticSpec spec;
  spec.num_classes = 3;
  spec.train_per_class = 4;
  spec.test_per_class = 2;
  spec.height = 8;
  spec.width = 8;
  auto data = generate_synthetic(spec, 11);
  const std::string path = "ds_roundtrip.acld";
  write_dataset(path, data.train);
  Dataset loaded = read_dataset(path);
  REQUIRE(loaded.size() == data.train.size());
  CHECK(loaded.height == 8);
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded.samples[i].label == data.train.samples[i].label);
    // payload is f32, so round-tripped values agree to float precision
    CHECK(oracle::max_abs_diff(loaded.samples[i].image.data, data.train.samples[i].image.data) < 1e-6);
  }
  std::filesystem::remove(path);
}

TEST_CASE("acld loader rejects foreign files") {
  const std::string path = "ds_bad.acld";
  {
    std::ofstream os(path, std::ios::binary);
    os << "JUNKJUNKJUNK";
  }
  CHECK_THROWS_WITH_AS(read_dataset(path), doctest::Contains("magic"), CheckpointError);
  std::filesystem::remove(path);
}

TEST_CASE("augmentation: zero rotation and same-size resize are identities") {
  Rng rng(13);
  Tensor img = oracle::random_tensor({1, 8, 8}, rng);
  CHECK(oracle::max_abs_diff(resize_image(img, 8, 8).data, img.data) == 0.0);
  Tensor rot = rotate_image(img, 0.0);
  CHECK(oracle::max_abs_diff(rot.data, img.data) < 1e-12);
  Tensor rot90 = rotate_image(img, 90.0);
  CHECK(oracle::max_abs_diff(rot90.data, img.data) > 1e-3);  // actually moved

  AugmentSpec spec;
  spec.rotation_max_deg = 15.0;
  Rng r1(5), r2(5);
  Tensor a = augment_image(img, spec, r1);
  Tensor b = augment_image(img, spec, r2);
  CHECK(oracle::max_abs_diff(a.data, b.data) == 0.0);  // seeded determinism
}

TEST_CASE("task split validation catches overlaps") {
  TaskSplit split;
  split.base_classes = {0, 1};
  split.rounds = {{2, 3}, {3, 4}};
  CHECK_THROWS_WITH_AS(split.validate(), doctest::Contains("more than one group"), ConfigError);
  split.rounds = {{2, 3}, {4, 5}};
  split.validate();
  CHECK(split.classes_through_round(1) == std::vector<int>{2, 3, 4, 5});
}

TEST_CASE("config: unknown keys are rejected with their location") {
  nlohmann::json j = {{"round", {{"adapter", {{"lrr", 0.1}}}}}};
  CHECK_THROWS_WITH_AS(RunConfig::from_json(j), doctest::Contains("/round/adapter/lrr"), ConfigError);
  nlohmann::json j2 = {{"no_such_section", 1}};
  CHECK_THROWS_WITH_AS(RunConfig::from_json(j2), doctest::Contains("no_such_section"), ConfigError);
}

TEST_CASE("config: invalid values are rejected") {
  nlohmann::json j = {{"round", {{"adapter", {{"lr", -0.5}}}}}};
  CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  nlohmann::json j2 = {{"dataset", {{"pattern", "stripes"}}}};
  CHECK_THROWS_AS(RunConfig::from_json(j2), ConfigError);
}

TEST_CASE("config: paper preset switches the long schedules") {
  nlohmann::json j = nlohmann::json::object();
  j["preset"] = "paper";
  auto cfg = RunConfig::from_json(j);
  CHECK(cfg.round.adapter_optim.epochs == 200);
  CHECK(cfg.round.finetune_optim.epochs == 100);
  CHECK(cfg.round.adapter_optim.schedule ==
        std::vector<std::pair<int, double>>{{70, 0.1}, {100, 0.1}, {130, 0.1}});
}

TEST_CASE("config: --set overrides nest into the document") {
  nlohmann::json doc = nlohmann::json::object();
  apply_override(doc, "round.adapter.epochs=5");
  apply_override(doc, "toggles.finetune=false");
  apply_override(doc, "dataset.pattern=blobs");
  auto cfg = RunConfig::from_json(doc);
  CHECK(cfg.round.adapter_optim.epochs == 5);
  CHECK_FALSE(cfg.round.toggles.finetune);
  CHECK(cfg.dataset.pattern == PatternKind::blobs);
  CHECK_THROWS_AS(apply_override(doc, "novalue"), ConfigError);
}

TEST_CASE("run log lines parse in isolation and survive a round trip") {
  RoundReport rep;
  rep.round = 2;
  rep.task_id = 2;
  rep.classes_learned = {0, 1, 2, 3};
  rep.new_classes = {2, 3};
  rep.mcr = 0.5625;
  rep.per_class_recall = {{0, 0.5}, {1, 0.75}, {2, 0.25}, {3, 0.75}};
  rep.head_selection_acc = 0.875;
  rep.seed = 17;
  rep.wall_clock_ms = 123.0;
  rep.toggles = {{"adapters", true}};

  const std::string path = "log_test.jsonl";
  {
    RunLog log(path);
    log.write(rep.to_json());
    log.write(rep.to_json());
  }
  std::ifstream is(path);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    ++lines;
    auto j = nlohmann::json::parse(line);  // parses in isolation
    auto back = RoundReport::from_json(j);
    CHECK(back.mcr == rep.mcr);
    CHECK(back.classes_learned == rep.classes_learned);
    CHECK(back.per_class_recall == rep.per_class_recall);
  }
  CHECK(lines == 2);
  std::filesystem::remove(path);
}

TEST_CASE("canonical form strips wall-clock but keeps everything else") {
  const std::string path = "log_canon.jsonl";
  {
    RunLog log(path);
    nlohmann::json j = {{"type", "round"}, {"mcr", 0.5}, {"wall_clock_ms", 77.0}};
    log.write(j);
  }
  const std::string canon = canonical_run_log(path);
  CHECK(canon.find("wall_clock_ms") == std::string::npos);
  CHECK(canon.find("mcr") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("summary csv lists one row per round with per-class recall columns") {
  RoundReport r1;
  r1.round = 1;
  r1.mcr = 1.0;
  r1.per_class_recall = {{4, 1.0}, {5, 1.0}};
  r1.head_selection_acc = 1.0;
  RoundReport r2;
  r2.round = 2;
  r2.mcr = 0.75;
  r2.per_class_recall = {{4, 1.0}, {5, 0.5}, {6, 0.75}, {7, 0.75}};
  r2.head_selection_acc = 0.9;
  const std::string path = "summary_test.csv";
  write_summary_csv(path, {r1, r2}, {4, 5, 6, 7});
  std::ifstream is(path);
  std::string header, row1, row2;
  std::getline(is, header);
  std::getline(is, row1);
  std::getline(is, row2);
  CHECK(header == "round,mcr,recall_4,recall_5,recall_6,recall_7,head_selection_acc");
  CHECK(row1 == "1,1.000000,1.000000,1.000000,,,1.000000");
  CHECK(row2 == "2,0.750000,1.000000,0.500000,0.750000,0.750000,0.900000");
  std::filesystem::remove(path);
}

TEST_CASE("cli: gen-data writes loadable files and honors the seed") {
  const std::string cfg_path = "cli_gen.json";
  {
    std::ofstream os(cfg_path);
    os << R"({"dataset": {"num_classes": 3, "train_per_class": 4, "test_per_class": 2,
               "height": 8, "width": 8}})";
  }
  CHECK(acl::cli::run({"gen-data", "--config", cfg_path, "--seed", "5", "--out-train",
                       "cli_train.acld", "--out-test", "cli_test.acld"}) == 0);
  Dataset train = read_dataset("cli_train.acld");
  CHECK(train.size() == 12);
  Dataset test = read_dataset("cli_test.acld");
  CHECK(test.size() == 6);
  for (const auto& p : {"cli_gen.json", "cli_train.acld", "cli_test.acld"})
    std::filesystem::remove(p);
}

TEST_CASE("cli: config errors exit with code 1, missing files with code 2 paths") {
  const std::string cfg_path = "cli_bad.json";
  {
    std::ofstream os(cfg_path);
    os << R"({"unknown_key": 1})";
  }
  CHECK(acl::cli::run({"run", "--config", cfg_path, "--seed", "1"}) == 1);
  CHECK(acl::cli::run({"run", "--config", "does_not_exist.json", "--seed", "1"}) == 1);
  CHECK(acl::cli::run({"eval", "--model", "missing_model", "--data", "missing.acld"}) == 2);
  std::filesystem::remove(cfg_path);
}

TEST_CASE("cli: run is deterministic for a fixed seed, byte-compared sans wall-clock") {
  const std::string cfg_path = "cli_det.json";
  {
    std::ofstream os(cfg_path);
    os << R"({
      "dataset": {"num_classes": 6, "train_per_class": 10, "test_per_class": 3,
                  "height": 16, "width": 16, "gen_seed": 3},
      "backbone": {"input_size": 16, "stage_channels": [8, 16, 24]},
      "split": {"base_classes": [0, 1], "rounds": [[2, 3], [4, 5]]},
      "pretrain": {"epochs": 2, "min_accuracy": 0.0},
      "memory": {"budget": 12},
      "round": {"adapter": {"epochs": 2}, "finetune": {"epochs": 2}},
      "output": {"run_log": "cli_det_a.jsonl"}
    })";
  }
  CHECK(acl::cli::run({"run", "--config", cfg_path, "--seed", "9"}) == 0);
  CHECK(acl::cli::run({"run", "--config", cfg_path, "--seed", "9", "--log", "cli_det_b.jsonl"}) == 0);
  const std::string a = canonical_run_log("cli_det_a.jsonl");
  const std::string b = canonical_run_log("cli_det_b.jsonl");
  CHECK(a == b);
  CHECK(a.find("\"type\":\"round\"") != std::string::npos);
  for (const auto& p : {"cli_det.json", "cli_det_a.jsonl", "cli_det_b.jsonl"})
    std::filesystem::remove(p);
}

TEST_CASE("cli: ablation matrix emits exactly rows x rounds report lines") {
  const std::string cfg_path = "cli_abl.json";
  {
    std::ofstream os(cfg_path);
    os << R"({
      "dataset": {"num_classes": 6, "train_per_class": 8, "test_per_class": 3,
                  "height": 16, "width": 16, "gen_seed": 3},
      "backbone": {"input_size": 16, "stage_channels": [8, 16, 24]},
      "split": {"base_classes": [0, 1], "rounds": [[2, 3], [4, 5]]},
      "pretrain": {"epochs": 1, "min_accuracy": 0.0},
      "memory": {"budget": 12},
      "round": {"adapter": {"epochs": 1}, "finetune": {"epochs": 1}},
      "output": {"run_log": "cli_abl.jsonl"}
    })";
  }
  CHECK(acl::cli::run({"ablate", "--config", cfg_path, "--seeds", "1"}) == 0);
  std::ifstream is("cli_abl.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(is, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 4 * 2);  // 4 matrix rows x 2 rounds
  std::filesystem::remove("cli_abl.json");
  std::filesystem::remove("cli_abl.jsonl");
  std::filesystem::remove(cfg_path);
}

TEST_CASE("cli: pretrain then run from the saved backbone, then eval a checkpoint") {
  const std::string cfg_path = "cli_pipe.json";
  {
    std::ofstream os(cfg_path);
    os << R"({
      "dataset": {"num_classes": 6, "train_per_class": 10, "test_per_class": 3,
                  "height": 16, "width": 16, "gen_seed": 3},
      "backbone": {"input_size": 16, "stage_channels": [8, 16, 24]},
      "split": {"base_classes": [0, 1], "rounds": [[2, 3], [4, 5]]},
      "pretrain": {"epochs": 3, "min_accuracy": 0.0},
      "memory": {"budget": 12},
      "round": {"adapter": {"epochs": 2}, "finetune": {"epochs": 2}},
      "output": {"run_log": "cli_pipe.jsonl"}
    })";
  }
  CHECK(acl::cli::run({"pretrain", "--config", cfg_path, "--seed", "4", "--out", "cli_pipe_bb"}) == 0);
  CHECK(acl::cli::run({"run", "--config", cfg_path, "--seed", "4", "--backbone", "cli_pipe_bb",
                       "--ckpt-dir", "cli_pipe_ckpt"}) == 0);
  CHECK(acl::cli::run({"gen-data", "--config", cfg_path, "--out-train", "cli_pipe_train.acld",
                       "--out-test", "cli_pipe_test.acld"}) == 0);
  CHECK(acl::cli::run({"eval", "--model", "cli_pipe_ckpt/round2", "--data", "cli_pipe_test.acld"}) == 0);
  CHECK(acl::cli::run({"baseline", "--config", cfg_path, "--seed", "4", "--kind", "naive", "--log",
                       "cli_pipe_naive.jsonl", "--set", "baseline.epochs=1"}) == 0);

  std::filesystem::remove(cfg_path);
  std::filesystem::remove("cli_pipe.jsonl");
  std::filesystem::remove("cli_pipe_naive.jsonl");
  std::filesystem::remove("cli_pipe_bb.aclt");
  std::filesystem::remove("cli_pipe_bb.manifest.json");
  std::filesystem::remove("cli_pipe_train.acld");
  std::filesystem::remove("cli_pipe_test.acld");
  std::filesystem::remove_all("cli_pipe_ckpt");
}
