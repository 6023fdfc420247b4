#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace acl {

// One evaluation after one learning round; serialized as a single JSON object
// per line in the run log.
struct RoundReport {
  int round = 0;    // 1-based
  int task_id = 0;  // 0 for single-head baselines
  std::vector<int> classes_learned;          // exactly the classes of rounds 1..round
  std::vector<int> new_classes;
  double mcr = 0.0;
  std::map<int, double> per_class_recall;
  std::map<int, double> per_task_accuracy;   // task id -> mean recall of its classes
  double head_selection_acc = 1.0;
  double final_train_loss = 0.0;
  uint64_t seed = 0;
  double wall_clock_ms = 0.0;
  std::map<std::string, bool> toggles;       // ablation cell echo (empty for baselines)
  std::string kind = "acl";                  // acl | naive | joint
  bool upper_bound_violated = false;         // soft flag set by the harness

  nlohmann::json to_json() const;
  static RoundReport from_json(const nlohmann::json& j);
};

// Append-only JSON-lines writer; every line parses in isolation.
class RunLog {
public:
  explicit RunLog(const std::string& path);
  void write(const nlohmann::json& object);
  const std::string& path() const { return path_; }

private:
  std::string path_;
};

// Strips volatile fields (wall clock) so two runs of the same seed can be
// byte-compared.
std::string canonical_run_log(const std::string& path);

// columns: round, mcr, recall_<class>..., head_selection_acc
void write_summary_csv(const std::string& path, const std::vector<RoundReport>& reports,
                       const std::vector<int>& all_classes);

}  // namespace acl
