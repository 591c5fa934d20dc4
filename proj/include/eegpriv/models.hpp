#pragma once

#include "eegpriv/dataset.hpp"
#include "eegpriv/nn.hpp"

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace eegpriv {

enum class Arch { EEGNet, DeepCNN, ShallowCNN };

std::string to_string(Arch a);
Arch arch_from_string(const std::string& s);

// Width/kernel knobs for the three CNN families. Defaults follow the
// reference implementations with temporal kernels scaled to 128 Hz
// (EEGNet temporal kernel = fs/2 = 64 samples).
struct CnnHyper {
    int eegnet_f1 = 8;
    int eegnet_depth = 2;
    int eegnet_kernel = 64;
    int eegnet_sep_kernel = 16;
    int eegnet_pool1 = 4;
    int eegnet_pool2 = 8;
    double eegnet_dropout = 0.25;

    int deep_filters = 25;  // doubles each block: 25/50/100/200
    int deep_kernel = 5;
    int deep_pool = 3;
    // 0.25 rather than the reference 0.5: heavier block dropout desynchronizes
    // the batch-norm running statistics from eval-mode activations at the
    // short schedules used here
    double deep_dropout = 0.25;

    int shallow_filters = 40;
    int shallow_kernel = 13;
    int shallow_pool = 38;
    int shallow_pool_stride = 8;
    double shallow_dropout = 0.5;
};

struct ModelSpec {
    Arch arch = Arch::EEGNet;
    int c = 0;
    int t = 0;
    int n_classes = 0;
    double learning_rate = 1e-3;
    int batch_size = 128;
    double weight_decay = 0.0;
    CnnHyper hyper;
    std::uint64_t seed = 0;
};

struct EpochStat {
    double loss = 0.0;
    double train_bca = 0.0;
    double test_bca = -1.0;  // -1 when not recorded
};

// Assembles [B, 1, c, t] batches straight from the dataset buffer.
template <class S>
nn::Tensor<S> make_batch(const EEGDataset& ds, const std::vector<int>& idx) {
    nn::Tensor<S> x(static_cast<int>(idx.size()), 1, ds.c, ds.t);
    const std::size_t block = static_cast<std::size_t>(ds.c) * ds.t;
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const float* src = ds.data.data() + static_cast<std::size_t>(idx[b]) * block;
        S* dst = x.v.data() + b * block;
        for (std::size_t i = 0; i < block; ++i) dst[i] = static_cast<S>(src[i]);
    }
    return x;
}

// Builds the requested architecture as an engine network. Throws when the
// input shape is smaller than the architecture's receptive field.
template <class S>
nn::Net<S> build_net(const ModelSpec& spec);

// One of the three CNN families behind the uniform train/predict surface.
// Deterministic: (spec, data, seed) fixes parameters and predictions.
class CnnClassifier {
public:
    explicit CnnClassifier(const ModelSpec& spec);

    const ModelSpec& spec() const { return spec_; }
    const std::vector<EpochStat>& training_curve() const { return curve_; }
    std::size_t param_count() const { return net_->param_count(); }
    std::string label_space() const { return label_space_; }
    void set_label_space(const std::string& s) { label_space_ = s; }
    bool trained() const { return trained_; }

    // Mini-batch Adam on mean cross-entropy. labels are 1-based and must
    // cover every class. test_ds/test_labels, when given, add a per-epoch
    // test BCA to the curve.
    void train(const EEGDataset& ds, const std::vector<int>& idx, const std::vector<int>& labels,
               int epochs, std::uint64_t train_seed, const EEGDataset* test_ds = nullptr,
               const std::vector<int>* test_labels = nullptr);

    std::vector<int> predict(const EEGDataset& ds, const std::vector<int>& idx) const;
    std::vector<int> predict(const EEGDataset& ds) const;
    // Class probabilities, rows on the simplex.
    nn::Mat<float> predict_proba(const EEGDataset& ds, const std::vector<int>& idx) const;

    // Frozen-model plumbing for perturbation optimization (eval-mode forward,
    // gradient with respect to the input batch).
    nn::Tensor<float> forward_eval(const nn::Tensor<float>& x) const;
    nn::Tensor<float> backward_input(const nn::Tensor<float>& dlogits) const;

    std::vector<float> flat_params() const { return net_->flat_params(); }
    void set_flat_params(const std::vector<float>& p) { net_->set_flat_params(p); }
    std::string param_hash() const;

    nn::Net<float>& net() { return *net_; }

private:
    ModelSpec spec_;
    mutable std::unique_ptr<nn::Net<float>> net_;
    mutable std::mutex mutex_;  // layer caches make forward non-reentrant
    std::vector<EpochStat> curve_;
    std::string label_space_;
    bool trained_ = false;
};

std::unique_ptr<CnnClassifier> build_model(const ModelSpec& spec);

// Checkpoints: <stem>.json (spec + curve) and <stem>.f32 (parameters plus
// batch-norm running statistics).
void save_checkpoint(const CnnClassifier& clf, const std::string& stem);
std::unique_ptr<CnnClassifier> load_checkpoint(const std::string& stem);

}  // namespace eegpriv
