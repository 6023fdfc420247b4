#pragma once

#include <map>
#include <vector>

namespace acl {

struct RecallTally {
  double mcr = 0.0;                        // mean over classes of per-class recall
  double accuracy = 0.0;                   // plain accuracy over all samples
  std::map<int, double> per_class_recall;  // keyed by global class id
  std::map<int, int> per_class_count;
};

// Tallies recalls over (predicted, truth) pairs. Every class in `classes`
// must occur in truth at least once; a class with zero samples has no recall
// and is a contract error. The tally is recomputed through a confusion matrix
// in debug-style dual computation and cross-checked.
RecallTally mcr_from_predictions(const std::vector<int>& predicted, const std::vector<int>& truth,
                                 const std::vector<int>& classes);

}  // namespace acl
