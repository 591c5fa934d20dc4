#include "eegpriv/metrics.hpp"

#include <stdexcept>
#include <string>

namespace eegpriv {

double bca(const std::vector<int>& predictions, const std::vector<int>& labels, int n_classes) {
    if (predictions.size() != labels.size())
        throw std::runtime_error("bca: predictions and labels differ in length");
    if (n_classes < 1) throw std::runtime_error("bca: n_classes must be >= 1");
    std::vector<long> total(n_classes, 0), correct(n_classes, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 1 || y > n_classes) throw std::runtime_error("bca: label out of range");
        ++total[y - 1];
        if (predictions[i] == y) ++correct[y - 1];
    }
    double acc = 0.0;
    for (int p = 0; p < n_classes; ++p) {
        if (total[p] == 0)
            throw std::runtime_error("bca: class " + std::to_string(p + 1) +
                                     " has no samples, recall undefined");
        acc += static_cast<double>(correct[p]) / total[p];
    }
    return acc / n_classes;
}

}  // namespace eegpriv
