#include "acl/metrics.hpp"

#include <cmath>
#include <string>

#include "acl/errors.hpp"

namespace acl {

RecallTally mcr_from_predictions(const std::vector<int>& predicted, const std::vector<int>& truth,
                                 const std::vector<int>& classes) {
  if (predicted.size() != truth.size())
    throw ContractError("mcr_from_predictions: prediction/truth length mismatch");
  if (truth.empty()) throw ContractError("mcr_from_predictions: empty evaluation set");

  RecallTally r;
  std::map<int, int> correct;
  for (int cls : classes) {
    r.per_class_count[cls] = 0;
    correct[cls] = 0;
  }
  size_t total_correct = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    const auto it = r.per_class_count.find(truth[i]);
    if (it == r.per_class_count.end())
      throw ContractError("mcr_from_predictions: truth label " + std::to_string(truth[i]) +
                          " is not in the evaluated class set");
    ++it->second;
    if (predicted[i] == truth[i]) {
      ++correct[truth[i]];
      ++total_correct;
    }
  }
  double sum = 0.0;
  for (int cls : classes) {
    if (r.per_class_count[cls] == 0)
      throw ContractError("mcr_from_predictions: class " + std::to_string(cls) +
                          " has zero test samples");
    const double recall = static_cast<double>(correct[cls]) / r.per_class_count[cls];
    r.per_class_recall[cls] = recall;
    sum += recall;
  }
  r.mcr = sum / static_cast<double>(classes.size());
  r.accuracy = static_cast<double>(total_correct) / static_cast<double>(truth.size());

  // independent confusion-matrix tally; the two routes must agree exactly
  {
    std::map<int, std::map<int, int>> confusion;
    for (size_t i = 0; i < truth.size(); ++i) ++confusion[truth[i]][predicted[i]];
    double sum2 = 0.0;
    for (int cls : classes) {
      int row_total = 0, diag = 0;
      for (const auto& [pred, n] : confusion[cls]) {
        row_total += n;
        if (pred == cls) diag = n;
      }
      sum2 += static_cast<double>(diag) / row_total;
    }
    const double mcr2 = sum2 / static_cast<double>(classes.size());
    if (std::abs(mcr2 - r.mcr) > 1e-12)
      throw ContractError("mcr_from_predictions: dual computation mismatch");
  }
  return r;
}

}  // namespace acl
