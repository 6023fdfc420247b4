#include "acl/cli.hpp"

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "acl/baselines.hpp"
#include "acl/config.hpp"
#include "acl/engine.hpp"
#include "acl/errors.hpp"
#include "json.hpp"

namespace acl::cli {

namespace {

struct LoadedData {
  Dataset train, test;
};

LoadedData load_or_generate(const RunConfig& cfg) {
  LoadedData out;
  if (cfg.dataset_source == "synthetic") {
    auto data = generate_synthetic(cfg.dataset, cfg.gen_seed);
    out.train = std::move(data.train);
    out.test = std::move(data.test);
  } else {
    out.train = read_dataset(cfg.train_path);
    out.test = read_dataset(cfg.test_path);
  }
  if (out.train.height != cfg.backbone.input_size || out.train.width != cfg.backbone.input_size ||
      out.train.channels != cfg.backbone.input_channels)
    throw ConfigError("dataset image shape " + std::to_string(out.train.channels) + "x" +
                      std::to_string(out.train.height) + "x" + std::to_string(out.train.width) +
                      " does not match the backbone input " +
                      std::to_string(cfg.backbone.input_channels) + "x" +
                      std::to_string(cfg.backbone.input_size) + "x" +
                      std::to_string(cfg.backbone.input_size));
  return out;
}

Backbone pretrain_for(const RunConfig& cfg, const LoadedData& data, uint64_t seed, bool verbose) {
  Rng rng(derive_seed(seed, 0x70726574));  // pretrain stream
  Backbone backbone(cfg.backbone, rng);
  const Dataset base_train = data.train.filter_classes(cfg.split.base_classes);
  const Dataset base_test = data.test.filter_classes(cfg.split.base_classes);
  const auto result = pretrain_backbone(backbone, base_train, base_test, cfg.pretrain, rng);
  if (verbose)
    std::cerr << "[acl] pretrain: held-out accuracy " << result.holdout_accuracy << " after "
              << result.epochs_run << " epochs\n";
  return backbone;
}

Backbone obtain_backbone(const RunConfig& cfg, const LoadedData& data, uint64_t seed,
                         const std::string& backbone_prefix, bool verbose) {
  if (!backbone_prefix.empty())
    return load_backbone(backbone_prefix + ".aclt", backbone_prefix + ".manifest.json");
  return pretrain_for(cfg, data, seed, verbose);
}

std::vector<RoundReport> continual_run(const RunConfig& cfg, const LoadedData& data,
                                       Backbone backbone, uint64_t seed, RunLog* log,
                                       const RoundConfig& round_cfg,
                                       const std::string& checkpoint_dir) {
  ContinualModel model(std::move(backbone), cfg.memory_budget, seed);
  Rng run_rng(derive_seed(seed, 0x72756e));
  std::vector<RoundReport> reports;
  for (size_t r = 0; r < cfg.split.rounds.size(); ++r) {
    const Dataset new_data = data.train.filter_classes(cfg.split.rounds[r]);
    const Dataset test_learned = data.test.filter_classes(cfg.split.classes_through_round(static_cast<int>(r)));
    RoundReport rep = model.run_round(new_data, test_learned, round_cfg, run_rng);
    rep.seed = seed;
    reports.push_back(rep);
    if (log) log->write(rep.to_json());
    if (!checkpoint_dir.empty()) {
      std::filesystem::create_directories(checkpoint_dir);
      const std::string prefix = checkpoint_dir + "/round" + std::to_string(r + 1);
      model.save(prefix + ".aclt", prefix + ".manifest.json");
    }
  }
  return reports;
}

std::vector<int> all_split_classes(const RunConfig& cfg) {
  auto v = cfg.split.classes_through_round(static_cast<int>(cfg.split.rounds.size()) - 1);
  std::sort(v.begin(), v.end());
  return v;
}

int run_command_run(const RunConfig& cfg, uint64_t seed, const std::string& backbone_prefix) {
  const LoadedData data = load_or_generate(cfg);
  RunLog log(cfg.run_log);
  nlohmann::json header;
  header["type"] = "run_config";
  header["seed"] = seed;
  header["config"] = cfg.to_json();
  log.write(header);
  auto reports = continual_run(cfg, data, obtain_backbone(cfg, data, seed, backbone_prefix, true),
                               seed, &log, cfg.round, cfg.checkpoint_dir);
  if (!cfg.summary_csv.empty()) write_summary_csv(cfg.summary_csv, reports, all_split_classes(cfg));
  std::cout << "run complete: " << reports.size() << " rounds, last-round MCR "
            << (reports.empty() ? 0.0 : reports.back().mcr) << "\n";
  return 0;
}

int run_command_baseline(const RunConfig& cfg, uint64_t seed, const std::string& kind,
                         const std::string& backbone_prefix) {
  const LoadedData data = load_or_generate(cfg);
  Backbone backbone = obtain_backbone(cfg, data, seed, backbone_prefix, true);
  std::vector<RoundReport> reports;
  if (kind == "naive")
    reports = run_naive_baseline(backbone, cfg.split, data.train, data.test, cfg.baseline,
                                 derive_seed(seed, 0x6e616976));
  else if (kind == "joint")
    reports = run_joint_baseline(backbone, cfg.split, data.train, data.test, cfg.baseline,
                                 derive_seed(seed, 0x6a6f696e));
  else
    throw ConfigError("baseline kind must be naive or joint, got: " + kind);
  for (auto& rep : reports) rep.seed = seed;
  RunLog log(cfg.run_log);
  for (const auto& rep : reports) log.write(rep.to_json());
  if (!cfg.summary_csv.empty()) write_summary_csv(cfg.summary_csv, reports, all_split_classes(cfg));
  std::cout << kind << " baseline complete: last-round MCR "
            << (reports.empty() ? 0.0 : reports.back().mcr) << "\n";
  return 0;
}

AblationToggles ablation_row(int row) {
  // Component build-up: heads only, +adapters, +others, +fine-tune.
  AblationToggles t;
  t.task_specific_heads = true;
  t.adapters = row >= 1;
  t.others_neuron = row >= 2;
  t.finetune = row >= 3;
  return t;
}

int run_command_ablate(const RunConfig& cfg, const std::vector<uint64_t>& seeds, bool include_unified,
                       bool with_baselines) {
  const LoadedData data = load_or_generate(cfg);
  RunLog log(cfg.run_log);
  for (uint64_t seed : seeds) {
    Backbone pretrained = pretrain_for(cfg, data, seed, true);
    double full_acl_last = 0.0;
    for (int row = 0; row < 4 + (include_unified ? 1 : 0); ++row) {
      RoundConfig round_cfg = cfg.round;
      if (row < 4) {
        round_cfg.toggles = ablation_row(row);
      } else {
        round_cfg.toggles = AblationToggles{};
        round_cfg.toggles.task_specific_heads = false;
        round_cfg.toggles.others_neuron = false;
      }
      auto reports = continual_run(cfg, data, pretrained, seed, nullptr, round_cfg, "");
      for (auto& rep : reports) {
        rep.seed = seed;
        log.write(rep.to_json());
      }
      if (row == 3) full_acl_last = reports.back().mcr;
    }
    if (with_baselines) {
      auto naive = run_naive_baseline(pretrained, cfg.split, data.train, data.test, cfg.baseline,
                                      derive_seed(seed, 0x6e616976));
      auto joint = run_joint_baseline(pretrained, cfg.split, data.train, data.test, cfg.baseline,
                                      derive_seed(seed, 0x6a6f696e));
      for (auto& rep : naive) {
        rep.seed = seed;
        log.write(rep.to_json());
      }
      for (auto& rep : joint) {
        rep.seed = seed;
        // upper bound should dominate full ACL; flag (not fail) when it does not
        rep.upper_bound_violated = rep.round == static_cast<int>(cfg.split.rounds.size()) &&
                                   rep.mcr < full_acl_last;
        if (rep.upper_bound_violated)
          std::cerr << "[acl] warning: joint upper bound " << rep.mcr
                    << " below full ACL last-round MCR " << full_acl_last << " (seed " << seed << ")\n";
        log.write(rep.to_json());
      }
    }
  }
  std::cout << "ablation complete: log at " << cfg.run_log << "\n";
  return 0;
}

int run_command_pretrain(const RunConfig& cfg, uint64_t seed, const std::string& out_prefix) {
  const LoadedData data = load_or_generate(cfg);
  Backbone backbone = pretrain_for(cfg, data, seed, false);
  save_backbone(out_prefix + ".aclt", backbone);
  write_backbone_manifest(out_prefix + ".manifest.json", backbone.config());
  nlohmann::json j;
  j["type"] = "pretrain";
  j["seed"] = seed;
  j["checkpoint"] = out_prefix + ".aclt";
  std::cout << j.dump() << "\n";
  return 0;
}

int run_command_gen_data(const RunConfig& cfg, uint64_t seed, const std::string& out_train,
                         const std::string& out_test) {
  SyntheticSpec spec = cfg.dataset;
  auto data = generate_synthetic(spec, seed);
  write_dataset(out_train, data.train);
  write_dataset(out_test, data.test);
  std::cout << "wrote " << data.train.size() << " train / " << data.test.size() << " test samples\n";
  return 0;
}

int run_command_eval(const std::string& model_prefix, const std::string& data_path,
                     const std::string& csv_path) {
  ContinualModel model =
      ContinualModel::load(model_prefix + ".aclt", model_prefix + ".manifest.json");
  Dataset test = read_dataset(data_path);
  const auto learned = model.learned_classes();
  auto ev = model.evaluate(test.filter_classes(learned));
  nlohmann::json j;
  j["type"] = "eval";
  j["mcr"] = ev.tally.mcr;
  j["accuracy"] = ev.tally.accuracy;
  j["head_selection_acc"] = ev.head_selection_acc;
  nlohmann::json recalls = nlohmann::json::object();
  for (const auto& [cls, v] : ev.tally.per_class_recall) recalls[std::to_string(cls)] = v;
  j["per_class_recall"] = recalls;
  std::cout << j.dump() << "\n";
  if (!csv_path.empty()) {
    RoundReport rep;
    rep.round = static_cast<int>(model.records().size());
    rep.mcr = ev.tally.mcr;
    rep.per_class_recall = ev.tally.per_class_recall;
    rep.head_selection_acc = ev.head_selection_acc;
    write_summary_csv(csv_path, {rep}, learned);
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"adapter-based continual learning engine"};
  app.require_subcommand(1);

  std::string config_path, out_prefix = "backbone", out_train = "train.acld", out_test = "test.acld";
  std::string backbone_prefix, baseline_kind = "naive", model_prefix, data_path, csv_path;
  std::string log_override, csv_override, ckpt_override;
  std::vector<std::string> overrides;
  uint64_t seed = 0;
  std::string seeds_csv = "1,2,3";
  bool include_unified = false, with_baselines = false;

  auto add_common = [&](CLI::App* cmd, bool seed_required) {
    cmd->add_option("--config", config_path, "JSON run configuration")->required();
    auto* s = cmd->add_option("--seed", seed, "run seed");
    if (seed_required) s->required();
    cmd->add_option("--set", overrides, "override config keys, e.g. --set round.adapter.epochs=30");
    cmd->add_option("--log", log_override, "run-log path (overrides output.run_log)");
    cmd->add_option("--csv", csv_override, "summary CSV path (overrides output.summary_csv)");
  };

  auto* cmd_pretrain = app.add_subcommand("pretrain", "train and freeze the backbone on base classes");
  add_common(cmd_pretrain, false);
  cmd_pretrain->add_option("--out", out_prefix, "checkpoint prefix (writes .aclt and .manifest.json)");

  auto* cmd_run = app.add_subcommand("run", "full continual-learning run");
  add_common(cmd_run, true);
  cmd_run->add_option("--backbone", backbone_prefix, "pretrained backbone prefix (skips pretraining)");
  cmd_run->add_option("--ckpt-dir", ckpt_override, "per-round model checkpoints directory");

  auto* cmd_baseline = app.add_subcommand("baseline", "naive sequential or joint upper-bound baseline");
  add_common(cmd_baseline, true);
  cmd_baseline->add_option("--kind", baseline_kind, "naive | joint")->required();
  cmd_baseline->add_option("--backbone", backbone_prefix, "pretrained backbone prefix");

  auto* cmd_ablate = app.add_subcommand("ablate", "run the component-ablation matrix");
  cmd_ablate->add_option("--config", config_path, "JSON run configuration")->required();
  cmd_ablate->add_option("--seeds", seeds_csv, "comma-separated seeds (default 1,2,3)");
  cmd_ablate->add_option("--set", overrides, "override config keys");
  cmd_ablate->add_option("--log", log_override, "run-log path");
  cmd_ablate->add_flag("--include-unified", include_unified, "add the fused-head configuration");
  cmd_ablate->add_flag("--with-baselines", with_baselines, "also run naive and joint baselines");

  auto* cmd_eval = app.add_subcommand("eval", "evaluate a saved model checkpoint");
  cmd_eval->add_option("--model", model_prefix, "model prefix (.aclt / .manifest.json)")->required();
  cmd_eval->add_option("--data", data_path, "ACLD test dataset")->required();
  cmd_eval->add_option("--csv", csv_path, "optional summary CSV");

  auto* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic ACLD dataset pair");
  add_common(cmd_gen, false);
  cmd_gen->add_option("--out-train", out_train, "train split path");
  cmd_gen->add_option("--out-test", out_test, "test split path");

  std::vector<std::string> argv_copy = args;
  try {
    std::vector<const char*> argv;
    argv.push_back("acl");
    for (const auto& a : argv_copy) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    init_numerics();
    if (app.got_subcommand(cmd_eval)) return run_command_eval(model_prefix, data_path, csv_path);

    nlohmann::json doc = load_json_file(config_path);
    for (const auto& a : overrides) apply_override(doc, a);
    RunConfig cfg = RunConfig::from_json(doc);
    if (!log_override.empty()) cfg.run_log = log_override;
    if (!csv_override.empty()) cfg.summary_csv = csv_override;
    if (!ckpt_override.empty()) cfg.checkpoint_dir = ckpt_override;

    if (app.got_subcommand(cmd_pretrain)) return run_command_pretrain(cfg, seed, out_prefix);
    if (app.got_subcommand(cmd_run)) return run_command_run(cfg, seed, backbone_prefix);
    if (app.got_subcommand(cmd_baseline))
      return run_command_baseline(cfg, seed, baseline_kind, backbone_prefix);
    if (app.got_subcommand(cmd_gen)) {
      const uint64_t gen_seed = cmd_gen->count("--seed") ? seed : cfg.gen_seed;
      return run_command_gen_data(cfg, gen_seed, out_train, out_test);
    }
    if (app.got_subcommand(cmd_ablate)) {
      std::vector<uint64_t> seeds;
      size_t start = 0;
      while (start <= seeds_csv.size()) {
        const auto comma = seeds_csv.find(',', start);
        const std::string tok = seeds_csv.substr(start, comma == std::string::npos ? std::string::npos
                                                                                   : comma - start);
        if (!tok.empty()) seeds.push_back(std::stoull(tok));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      if (seeds.empty()) throw ConfigError("ablate: --seeds produced no seeds");
      return run_command_ablate(cfg, seeds, include_unified, with_baselines);
    }
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace acl::cli
