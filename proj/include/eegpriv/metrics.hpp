#pragma once

#include <vector>

namespace eegpriv {

// Balanced classification accuracy: mean over classes of per-class recall,
// (1/P) * sum_p correct_p / N_p. Labels and predictions are 1-based.
// Throws if any class in {1..P} has no labels (recall undefined).
double bca(const std::vector<int>& predictions, const std::vector<int>& labels, int n_classes);

}  // namespace eegpriv
