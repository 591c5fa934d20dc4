#pragma once

#include "eegpriv/dataset.hpp"
#include "eegpriv/models.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace eegpriv {

struct ProtectionConfig {
    std::vector<std::string> privacy_types;  // must be non-empty, subset of the vocabulary
    Arch surrogate_arch = Arch::EEGNet;
    double alpha = 0.01;        // amplitude trade-off weight
    int surrogate_epochs = 100; // T_m
    int perturb_epochs = 100;   // T_p
    double init_std = 1e-3;     // stddev of the Gaussian init (N(0, 0.001) read as stddev)
    double perturb_lr = 1e-2;
    int batch_size = 128;
    bool squared_norm = false;  // plain Frobenius norm by default
    double surrogate_lr = 1e-3;
    CnnHyper surrogate_hyper;
    // Snap the final bank to the container grid so apply/undo are exact in
    // float32. Off only for the analytic gradient tests.
    bool quantize_bank = true;
    std::uint64_t seed = 0;

    void validate(const EEGDataset& ds) const;
};

// One class-wise perturbation array per protected privacy type, frozen after
// generation. delta(type) has shape [P_m, c, t] in post-z-score units.
struct PerturbationBank {
    std::vector<std::string> types;       // generation order
    std::map<std::string, int> classes;   // type -> P_m
    int c = 0;
    int t = 0;
    std::map<std::string, std::vector<float>> deltas;  // [P_m * c * t]
    // generation metadata
    double alpha = 0.0;
    int surrogate_epochs = 0;
    int perturb_epochs = 0;
    double init_std = 0.0;
    double perturb_lr = 0.0;
    std::string surrogate_arch;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> surrogate_param_hash;
    std::map<std::string, double> final_objective;

    MapTrialConst delta(const std::string& type, int cls) const;
    void validate_against(const EEGDataset& ds) const;
};

// meta JSON + flat float32 blob ordered by (type, class, channel, sample).
void save_bank(const PerturbationBank& bank, const std::string& dir);
PerturbationBank load_bank(const std::string& dir);

// Deterministic seeds for the per-type sub-runs, shared between
// generate_protected_dataset and the standalone entry points.
std::uint64_t surrogate_seed(const ProtectionConfig& cfg, const std::string& type);
std::uint64_t perturbation_seed(const ProtectionConfig& cfg, const std::string& type);

// Trains G'_m on every trial of ds (tasks mixed) against the labels of one
// privacy type for T_m epochs.
std::unique_ptr<CnnClassifier> train_privacy_surrogate(const EEGDataset& ds,
                                                       const std::string& type,
                                                       const ProtectionConfig& cfg);

// Anything that maps an input batch to logits and can push gradients back to
// the input. CnnClassifier adapts below; tests substitute a linear map.
class LogitModel {
public:
    virtual ~LogitModel() = default;
    virtual nn::Tensor<float> forward(const nn::Tensor<float>& x) = 0;
    virtual nn::Tensor<float> backward_input(const nn::Tensor<float>& dlogits) = 0;
};

class FrozenCnn : public LogitModel {
public:
    explicit FrozenCnn(const CnnClassifier& clf) : clf_(clf) {}
    nn::Tensor<float> forward(const nn::Tensor<float>& x) override { return clf_.forward_eval(x); }
    nn::Tensor<float> backward_input(const nn::Tensor<float>& d) override {
        return clf_.backward_input(d);
    }

private:
    const CnnClassifier& clf_;
};

// Minimizes mean[ CE(G'(x + delta_p), p) + alpha * ||delta_p||_2 ] over the
// class-wise bank of one type by mini-batch subgradient descent, the surrogate
// frozen throughout. Returns [P_m * c * t].
std::vector<float> optimize_perturbation(LogitModel& surrogate, const EEGDataset& ds,
                                         const std::string& type, const ProtectionConfig& cfg);

// x'_i = x_i + sum_m delta_{m, p_im}; labels and metadata unchanged.
EEGDataset apply_perturbations(const EEGDataset& ds, const PerturbationBank& bank);

// Mean cross-entropy of a frozen model over the dataset, with the bank's
// class-wise perturbation of `type` added when bank != nullptr.
double mean_cross_entropy(LogitModel& model, const EEGDataset& ds, const std::string& type,
                          const PerturbationBank* bank, int batch_size = 128);

struct ProtectedDataset {
    EEGDataset dataset;
    PerturbationBank bank;
};

// Algorithm: per type, train the surrogate on the ORIGINAL dataset, optimize
// the class-wise bank against it, then superpose all banks onto every trial.
ProtectedDataset generate_protected_dataset(const EEGDataset& ds, const ProtectionConfig& cfg);

}  // namespace eegpriv
