#include "acl/config.hpp"

#include <fstream>
#include <set>

#include "acl/errors.hpp"

namespace acl {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError("config: expected an object at " + where);
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key at " + where + "/" + it.key());
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad value type for key ") + key);
  }
}

std::vector<std::pair<int, double>> schedule_from(const json& obj, const std::string& where,
                                                  std::vector<std::pair<int, double>> fallback) {
  if (!obj.contains("decay_epochs")) return fallback;
  const auto epochs = obj.at("decay_epochs").get<std::vector<int>>();
  const double factor = get_or<double>(obj, "decay_factor", 0.1);
  std::vector<std::pair<int, double>> out;
  for (int e : epochs) out.emplace_back(e, factor);
  (void)where;
  return out;
}

OptimSpec optim_from(const json& obj, const std::string& where, OptimSpec base) {
  reject_unknown(obj, {"lr", "momentum", "weight_decay", "beta1", "beta2", "epsilon", "epochs",
                       "batch_size", "decay_epochs", "decay_factor"},
                 where);
  base.lr = get_or<double>(obj, "lr", base.lr);
  base.momentum = get_or<double>(obj, "momentum", base.momentum);
  base.weight_decay = get_or<double>(obj, "weight_decay", base.weight_decay);
  base.beta1 = get_or<double>(obj, "beta1", base.beta1);
  base.beta2 = get_or<double>(obj, "beta2", base.beta2);
  base.epsilon = get_or<double>(obj, "epsilon", base.epsilon);
  base.epochs = get_or<int>(obj, "epochs", base.epochs);
  base.batch_size = get_or<int>(obj, "batch_size", base.batch_size);
  base.schedule = schedule_from(obj, where, base.schedule);
  base.validate();
  return base;
}

}  // namespace

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  try {
    nlohmann::json j;
    is >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  reject_unknown(j, {"preset", "dataset", "backbone", "split", "pretrain", "memory", "round",
                     "adapter", "toggles", "baseline", "output"},
                 "");
  RunConfig cfg;

  const std::string preset = get_or<std::string>(j, "preset", "desk");
  if (preset == "paper") {
    cfg.round.adapter_optim.epochs = 200;
    cfg.round.finetune_optim.epochs = 100;
  } else if (preset != "desk") {
    throw ConfigError("config: unknown preset '" + preset + "' (expected desk or paper)");
  }

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    reject_unknown(d,
                   {"source", "num_classes", "train_per_class", "test_per_class", "channels",
                    "height", "width", "pattern", "noise_sigma", "gen_seed", "train_path",
                    "test_path", "augment"},
                   "/dataset");
    cfg.dataset_source = get_or<std::string>(d, "source", cfg.dataset_source);
    if (cfg.dataset_source != "synthetic" && cfg.dataset_source != "binary_tensor_file")
      throw ConfigError("config: /dataset/source must be synthetic or binary_tensor_file");
    cfg.dataset.num_classes = get_or<int>(d, "num_classes", cfg.dataset.num_classes);
    cfg.dataset.train_per_class = get_or<int>(d, "train_per_class", cfg.dataset.train_per_class);
    cfg.dataset.test_per_class = get_or<int>(d, "test_per_class", cfg.dataset.test_per_class);
    cfg.dataset.channels = get_or<int>(d, "channels", cfg.dataset.channels);
    cfg.dataset.height = get_or<int>(d, "height", cfg.dataset.height);
    cfg.dataset.width = get_or<int>(d, "width", cfg.dataset.width);
    const std::string pattern = get_or<std::string>(d, "pattern", "gratings");
    if (pattern == "gratings")
      cfg.dataset.pattern = PatternKind::gratings;
    else if (pattern == "blobs")
      cfg.dataset.pattern = PatternKind::blobs;
    else
      throw ConfigError("config: /dataset/pattern must be gratings or blobs");
    cfg.dataset.noise_sigma = get_or<double>(d, "noise_sigma", cfg.dataset.noise_sigma);
    cfg.gen_seed = get_or<uint64_t>(d, "gen_seed", cfg.gen_seed);
    cfg.train_path = get_or<std::string>(d, "train_path", "");
    cfg.test_path = get_or<std::string>(d, "test_path", "");
    if (d.contains("augment")) {
      reject_unknown(d.at("augment"), {"rotation_max_deg", "resize_to"}, "/dataset/augment");
      cfg.dataset.augment.rotation_max_deg =
          get_or<double>(d.at("augment"), "rotation_max_deg", 0.0);
      cfg.dataset.augment.resize_to = get_or<int>(d.at("augment"), "resize_to", 0);
      cfg.round.augment = cfg.dataset.augment;
    }
  }

  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    reject_unknown(b, {"input_channels", "input_size", "stage_channels", "conv_kernel", "pool_window"},
                   "/backbone");
    cfg.backbone.input_channels = get_or<int>(b, "input_channels", cfg.backbone.input_channels);
    cfg.backbone.input_size = get_or<int>(b, "input_size", cfg.backbone.input_size);
    cfg.backbone.stage_channels =
        get_or<std::vector<int>>(b, "stage_channels", cfg.backbone.stage_channels);
    cfg.backbone.conv_kernel = get_or<int>(b, "conv_kernel", cfg.backbone.conv_kernel);
    cfg.backbone.pool_window = get_or<int>(b, "pool_window", cfg.backbone.pool_window);
  }
  cfg.backbone.validate();

  if (j.contains("split")) {
    const auto& s = j.at("split");
    reject_unknown(s, {"base_classes", "rounds"}, "/split");
    cfg.split.base_classes = get_or<std::vector<int>>(s, "base_classes", {});
    if (s.contains("rounds")) cfg.split.rounds = s.at("rounds").get<std::vector<std::vector<int>>>();
  }
  cfg.split.validate();

  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    reject_unknown(p, {"epochs", "lr", "momentum", "weight_decay", "batch_size", "min_accuracy",
                       "decay_epochs", "decay_factor"},
                   "/pretrain");
    cfg.pretrain.epochs = get_or<int>(p, "epochs", cfg.pretrain.epochs);
    cfg.pretrain.min_accuracy = get_or<double>(p, "min_accuracy", cfg.pretrain.min_accuracy);
    cfg.pretrain.optim.lr = get_or<double>(p, "lr", cfg.pretrain.optim.lr);
    cfg.pretrain.optim.momentum = get_or<double>(p, "momentum", cfg.pretrain.optim.momentum);
    cfg.pretrain.optim.weight_decay = get_or<double>(p, "weight_decay", cfg.pretrain.optim.weight_decay);
    cfg.pretrain.optim.batch_size = get_or<int>(p, "batch_size", cfg.pretrain.optim.batch_size);
    cfg.pretrain.optim.schedule = schedule_from(p, "/pretrain", cfg.pretrain.optim.schedule);
    cfg.pretrain.optim.validate();
  }

  if (j.contains("memory")) {
    reject_unknown(j.at("memory"), {"budget"}, "/memory");
    cfg.memory_budget = get_or<int>(j.at("memory"), "budget", cfg.memory_budget);
    if (cfg.memory_budget < 0) throw ConfigError("config: /memory/budget must be non-negative");
  }

  if (j.contains("round")) {
    const auto& r = j.at("round");
    reject_unknown(r, {"adapter", "finetune"}, "/round");
    if (r.contains("adapter"))
      cfg.round.adapter_optim = optim_from(r.at("adapter"), "/round/adapter", cfg.round.adapter_optim);
    if (r.contains("finetune"))
      cfg.round.finetune_optim =
          optim_from(r.at("finetune"), "/round/finetune", cfg.round.finetune_optim);
  }

  if (j.contains("adapter")) {
    const auto& a = j.at("adapter");
    reject_unknown(a, {"kernel", "bottleneck_ratio", "gap_mask"}, "/adapter");
    cfg.round.adapter.kernel = get_or<int>(a, "kernel", cfg.round.adapter.kernel);
    cfg.round.adapter.bottleneck_ratio =
        get_or<int>(a, "bottleneck_ratio", cfg.round.adapter.bottleneck_ratio);
    if (a.contains("gap_mask")) {
      const auto mask = a.at("gap_mask").get<std::vector<bool>>();
      cfg.round.adapter.gap_mask.assign(mask.begin(), mask.end());
    }
    cfg.round.adapter.validate(cfg.backbone.num_stages() - 1);
  }

  if (j.contains("toggles")) {
    const auto& t = j.at("toggles");
    reject_unknown(t, {"task_specific_heads", "adapters", "others_neuron", "finetune"}, "/toggles");
    cfg.round.toggles.task_specific_heads =
        get_or<bool>(t, "task_specific_heads", cfg.round.toggles.task_specific_heads);
    cfg.round.toggles.adapters = get_or<bool>(t, "adapters", cfg.round.toggles.adapters);
    cfg.round.toggles.others_neuron = get_or<bool>(t, "others_neuron", cfg.round.toggles.others_neuron);
    cfg.round.toggles.finetune = get_or<bool>(t, "finetune", cfg.round.toggles.finetune);
  }

  if (j.contains("baseline")) {
    cfg.baseline.optim = optim_from(j.at("baseline"), "/baseline", cfg.baseline.optim);
  }

  if (j.contains("output")) {
    const auto& o = j.at("output");
    reject_unknown(o, {"run_log", "summary_csv", "checkpoint_dir"}, "/output");
    cfg.run_log = get_or<std::string>(o, "run_log", cfg.run_log);
    cfg.summary_csv = get_or<std::string>(o, "summary_csv", cfg.summary_csv);
    cfg.checkpoint_dir = get_or<std::string>(o, "checkpoint_dir", cfg.checkpoint_dir);
  }

  cfg.round.validate();
  if (cfg.dataset_source == "synthetic") cfg.dataset.validate();
  else if (cfg.train_path.empty() || cfg.test_path.empty())
    throw ConfigError("config: binary_tensor_file source needs /dataset/train_path and test_path");
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) { return from_json(load_json_file(path)); }

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["dataset"] = {{"source", dataset_source},
                  {"num_classes", dataset.num_classes},
                  {"train_per_class", dataset.train_per_class},
                  {"test_per_class", dataset.test_per_class},
                  {"channels", dataset.channels},
                  {"height", dataset.height},
                  {"width", dataset.width},
                  {"pattern", dataset.pattern == PatternKind::gratings ? "gratings" : "blobs"},
                  {"noise_sigma", dataset.noise_sigma},
                  {"gen_seed", gen_seed},
                  {"augment",
                   {{"rotation_max_deg", dataset.augment.rotation_max_deg},
                    {"resize_to", dataset.augment.resize_to}}}};
  if (!train_path.empty()) j["dataset"]["train_path"] = train_path;
  if (!test_path.empty()) j["dataset"]["test_path"] = test_path;
  j["backbone"] = {{"input_channels", backbone.input_channels},
                   {"input_size", backbone.input_size},
                   {"stage_channels", backbone.stage_channels},
                   {"conv_kernel", backbone.conv_kernel},
                   {"pool_window", backbone.pool_window}};
  j["split"] = {{"base_classes", split.base_classes}, {"rounds", split.rounds}};
  j["pretrain"] = {{"epochs", pretrain.epochs},
                   {"lr", pretrain.optim.lr},
                   {"momentum", pretrain.optim.momentum},
                   {"weight_decay", pretrain.optim.weight_decay},
                   {"batch_size", pretrain.optim.batch_size},
                   {"min_accuracy", pretrain.min_accuracy}};
  j["memory"] = {{"budget", memory_budget}};
  auto optim_json = [](const OptimSpec& s) {
    std::vector<int> decay;
    for (const auto& [e, f] : s.schedule) decay.push_back(e);
    const double factor = s.schedule.empty() ? 0.1 : s.schedule.front().second;
    return nlohmann::json{{"lr", s.lr},           {"momentum", s.momentum},
                          {"weight_decay", s.weight_decay}, {"epochs", s.epochs},
                          {"batch_size", s.batch_size},     {"decay_epochs", decay},
                          {"decay_factor", factor}};
  };
  j["round"] = {{"adapter", optim_json(round.adapter_optim)},
                {"finetune", optim_json(round.finetune_optim)}};
  std::vector<bool> mask(round.adapter.gap_mask.begin(), round.adapter.gap_mask.end());
  j["adapter"] = {{"kernel", round.adapter.kernel},
                  {"bottleneck_ratio", round.adapter.bottleneck_ratio},
                  {"gap_mask", mask}};
  j["toggles"] = {{"task_specific_heads", round.toggles.task_specific_heads},
                  {"adapters", round.toggles.adapters},
                  {"others_neuron", round.toggles.others_neuron},
                  {"finetune", round.toggles.finetune}};
  j["baseline"] = optim_json(baseline.optim);
  j["output"] = {{"run_log", run_log}, {"summary_csv", summary_csv}, {"checkpoint_dir", checkpoint_dir}};
  return j;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like key.path=value, got: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = value;  // plain string
  }

  nlohmann::json* node = &doc;
  size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override has an empty path segment: " + assignment);
    if (dot == std::string::npos) {
      (*node)[key] = parsed;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace acl
