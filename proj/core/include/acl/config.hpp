#pragma once

#include <string>
#include <vector>

#include "acl/backbone.hpp"
#include "acl/baselines.hpp"
#include "acl/dataset.hpp"
#include "acl/engine.hpp"
#include "json.hpp"

namespace acl {

// Fully-resolved run configuration. Unknown keys anywhere in the file are
// rejected with their JSON-pointer location; "preset": "paper" switches the
// round stage to the 200/100-epoch schedule before explicit keys apply.
struct RunConfig {
  std::string dataset_source = "synthetic";  // synthetic | binary_tensor_file
  SyntheticSpec dataset;
  std::string train_path, test_path;  // binary_tensor_file source
  uint64_t gen_seed = 1234;

  BackboneConfig backbone;
  TaskSplit split;
  PretrainConfig pretrain;
  int memory_budget = 100;
  RoundConfig round;
  BaselineConfig baseline;

  std::string run_log = "run.jsonl";
  std::string summary_csv;
  std::string checkpoint_dir;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
  nlohmann::json to_json() const;  // echo of the resolved configuration
};

// --set key.path=value overrides: value parses as JSON when possible, else as
// a string. Applied to the raw document before validation.
void apply_override(nlohmann::json& doc, const std::string& assignment);

nlohmann::json load_json_file(const std::string& path);  // ConfigError on parse failure

}  // namespace acl
