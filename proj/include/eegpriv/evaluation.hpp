#pragma once

#include "eegpriv/dataset.hpp"
#include "eegpriv/metrics.hpp"
#include "eegpriv/models.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace eegpriv {

struct LabelSelector {
    std::string name;
    int n_classes = 0;
    std::function<int(const TrialMeta&)> get;
};

LabelSelector privacy_selector(const EEGDataset& ds, const std::string& type);
LabelSelector task_selector(const EEGDataset& ds, const std::string& task);

// Trains on the train fold, predicts the test fold. Fills `curve` when asked.
using TrainPredictFn = std::function<std::vector<int>(
    const EEGDataset& train_ds, const std::vector<int>& y_train, const EEGDataset& test_ds,
    const std::vector<int>& y_test, std::uint64_t seed, std::vector<EpochStat>* curve)>;

struct LosoRun {
    int holdout_session = 0;
    int repeat = 0;
    std::uint64_t seed = 0;
    double bca = 0.0;
    std::vector<EpochStat> curve;  // recorded for the first run only
};

struct LosoResult {
    double mean_bca = 0.0;
    std::vector<LosoRun> runs;
};

// Leave-one-session-out: every session once as holdout, `repeats` re-trainings
// with per-repeat model seeds, grand mean over sessions x repeats. The train
// fold comes from train_source and the test fold from test_source; the classic
// single-dataset protocol passes the same dataset twice.
LosoResult loso_cv_paired(const EEGDataset& train_source, const EEGDataset& test_source,
                          const TrainPredictFn& model, const LabelSelector& selector,
                          int repeats, const std::vector<std::uint64_t>& seeds,
                          bool record_first_curve = false, int n_threads = 0);

LosoResult loso_cv(const EEGDataset& ds, const TrainPredictFn& model,
                   const LabelSelector& selector, int repeats,
                   const std::vector<std::uint64_t>& seeds, bool record_first_curve = false,
                   int n_threads = 0);

struct EvalOptions {
    int repeats = 5;
    std::uint64_t base_seed = 1;
    std::map<std::string, int> arch_epochs = {
        {"EEGNet", 12}, {"DeepCNN", 8}, {"ShallowCNN", 8}};
    double learning_rate = 1e-3;
    int batch_size = 128;
    CnnHyper hyper;
    // Privacy-classifier training data comes from the protected container; the
    // held-out session is evaluated unperturbed (the attacker never controls
    // the perturbation of future recordings).
    bool test_on_original = true;
    bool record_curves = false;
    int n_threads = 0;  // 0 = hardware concurrency
    // classical task pipelines
    int xdawn_filters = 4;
    int csp_pairs = 3;
    int cca_harmonics = 2;
    std::vector<double> cca_freqs = {8.57, 10.0, 12.0, 15.0};
};

struct EvalCell {
    std::string label_space;  // privacy type or task name
    std::string arch;
    double bca_original = 0.0;
    double bca_perturbed = 0.0;
    double reduction = 0.0;
};

struct RunDetail {
    std::string label_space;
    std::string arch;
    std::string variant;  // "original" | "perturbed"
    int holdout_session = 0;
    int repeat = 0;
    std::uint64_t seed = 0;
    double bca = 0.0;
};

struct EvalReport {
    std::vector<EvalCell> rows;
    std::vector<RunDetail> runs;
    std::map<std::string, std::vector<EpochStat>> curves;  // "<row>/<arch>/<variant>"
    int repeats = 0;
    std::uint64_t base_seed = 0;
    std::vector<int> sessions;
    std::string bank_arch;  // surrogate family that generated the bank
    bool test_on_original = true;
};

// Table-1 analogue: per (privacy type, arch) LOSO BCA on the original data and
// on the protected data, tasks mixed. The bank is generated once by one
// surrogate family, so every other arch row is a transfer evaluation.
EvalReport privacy_eval(const EEGDataset& ds_original, const EEGDataset& ds_protected,
                        const std::vector<Arch>& archs, const std::vector<std::string>& types,
                        const EvalOptions& opts, const std::string& bank_arch = "");

// Table-2 analogue: per (task, arch) rows plus the matched classical pipeline
// (xDAWN+LR for ERP, CSP+LR for MI, CCA for SSVEP).
EvalReport task_eval(const EEGDataset& ds_original, const EEGDataset& ds_protected,
                     const std::vector<Arch>& archs, const EvalOptions& opts,
                     bool include_classical = true);

void write_report_csv(const EvalReport& report, const std::string& path);
void write_runs_csv(const EvalReport& report, const std::string& path);
void write_curves_csv(const EvalReport& report, const std::string& path);
std::string format_report_table(const EvalReport& report);

// Restricts a dataset to the trials of one task.
EEGDataset filter_task(const EEGDataset& ds, const std::string& task);

}  // namespace eegpriv
