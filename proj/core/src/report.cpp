#include "acl/report.hpp"

#include <fstream>
#include <sstream>

#include "acl/errors.hpp"

namespace acl {

namespace {
nlohmann::json recall_map_to_json(const std::map<int, double>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [cls, v] : m) j[std::to_string(cls)] = v;
  return j;
}
std::map<int, double> recall_map_from_json(const nlohmann::json& j) {
  std::map<int, double> m;
  for (auto it = j.begin(); it != j.end(); ++it) m[std::stoi(it.key())] = it.value().get<double>();
  return m;
}
}  // namespace

nlohmann::json RoundReport::to_json() const {
  nlohmann::json j;
  j["type"] = "round";
  j["kind"] = kind;
  j["round"] = round;
  j["task_id"] = task_id;
  j["classes_learned"] = classes_learned;
  j["new_classes"] = new_classes;
  j["mcr"] = mcr;
  j["per_class_recall"] = recall_map_to_json(per_class_recall);
  j["per_task_accuracy"] = recall_map_to_json(per_task_accuracy);
  j["head_selection_acc"] = head_selection_acc;
  j["final_train_loss"] = final_train_loss;
  j["seed"] = seed;
  j["wall_clock_ms"] = wall_clock_ms;
  if (!toggles.empty()) j["toggles"] = toggles;
  if (upper_bound_violated) j["upper_bound_violated"] = true;
  return j;
}

RoundReport RoundReport::from_json(const nlohmann::json& j) {
  RoundReport r;
  r.kind = j.value("kind", "acl");
  r.round = j.at("round").get<int>();
  r.task_id = j.value("task_id", 0);
  r.classes_learned = j.at("classes_learned").get<std::vector<int>>();
  r.new_classes = j.value("new_classes", std::vector<int>{});
  r.mcr = j.at("mcr").get<double>();
  r.per_class_recall = recall_map_from_json(j.at("per_class_recall"));
  if (j.contains("per_task_accuracy")) r.per_task_accuracy = recall_map_from_json(j.at("per_task_accuracy"));
  r.head_selection_acc = j.value("head_selection_acc", 1.0);
  r.final_train_loss = j.value("final_train_loss", 0.0);
  r.seed = j.value("seed", uint64_t{0});
  r.wall_clock_ms = j.value("wall_clock_ms", 0.0);
  if (j.contains("toggles"))
    for (auto it = j["toggles"].begin(); it != j["toggles"].end(); ++it)
      r.toggles[it.key()] = it.value().get<bool>();
  r.upper_bound_violated = j.value("upper_bound_violated", false);
  return r;
}

RunLog::RunLog(const std::string& path) : path_(path) {
  std::ofstream os(path_, std::ios::trunc);  // start a fresh log
  if (!os) throw CheckpointError("cannot open run log for writing: " + path_);
}

void RunLog::write(const nlohmann::json& object) {
  std::ofstream os(path_, std::ios::app);
  if (!os) throw CheckpointError("cannot append to run log: " + path_);
  os << object.dump() << "\n";
}

std::string canonical_run_log(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw CheckpointError("cannot open run log: " + path);
  std::ostringstream out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    j.erase("wall_clock_ms");
    out << j.dump() << "\n";
  }
  return out.str();
}

void write_summary_csv(const std::string& path, const std::vector<RoundReport>& reports,
                       const std::vector<int>& all_classes) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw CheckpointError("cannot open summary csv for writing: " + path);
  os << "round,mcr";
  for (int cls : all_classes) os << ",recall_" << cls;
  os << ",head_selection_acc\n";
  char buf[32];
  auto fmt = [&](double v) {
    snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  for (const auto& r : reports) {
    os << r.round << "," << fmt(r.mcr);
    for (int cls : all_classes) {
      const auto it = r.per_class_recall.find(cls);
      os << ",";
      if (it != r.per_class_recall.end()) os << fmt(it->second);
    }
    os << "," << fmt(r.head_selection_acc) << "\n";
  }
}

}  // namespace acl
