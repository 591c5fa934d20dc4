#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace eegpriv {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapTrial = Eigen::Map<RowMatrixXf>;
using MapTrialConst = Eigen::Map<const RowMatrixXf>;

// Per-trial labels. Trial samples live in the dataset's flat buffer so that
// the on-disk layout (row-major [N, c, t] float32) is also the in-memory one.
struct TrialMeta {
    int subject_id = 0;
    int session_id = 0;
    std::string task;                       // "ERP" | "MI" | "SSVEP"
    int y = 0;                              // task label, 1-based
    std::map<std::string, int> privacy;     // privacy type -> class, 1-based
};

struct EEGDataset {
    std::vector<std::string> channel_names;
    double sampling_rate = 0.0;
    std::vector<std::pair<std::string, int>> task_vocab;     // task -> K
    std::vector<std::pair<std::string, int>> privacy_vocab;  // type -> P_m
    std::string provenance;
    std::vector<TrialMeta> trials;
    std::vector<float> data;  // N * c * t, row-major
    int c = 0;
    int t = 0;

    int n() const { return static_cast<int>(trials.size()); }

    MapTrialConst trial(int i) const {
        return MapTrialConst(data.data() + static_cast<std::size_t>(i) * c * t, c, t);
    }
    MapTrial trial_mut(int i) {
        return MapTrial(data.data() + static_cast<std::size_t>(i) * c * t, c, t);
    }

    int task_classes(const std::string& task) const;
    int privacy_classes(const std::string& type) const;
    bool has_privacy_type(const std::string& type) const;
    std::vector<int> session_ids() const;  // sorted unique

    // Throws std::runtime_error on any invariant violation.
    void validate() const;
};

// Bit-exact container: <dir>/meta.json + <dir>/data.f32 (little-endian float32).
void save_dataset(const EEGDataset& ds, const std::string& dir);
EEGDataset load_dataset(const std::string& dir);

// (train, holdout) split on session_id. Throws if the session is absent.
std::pair<EEGDataset, EEGDataset> split_by_session(const EEGDataset& ds, int holdout_session);

// Maps a prepared export of the Lee et al. 54-subject dataset (see
// tools/export_lee2019.py for the expected source layout) into the container
// format. Fails loudly on anything missing; never fabricates trials.
void convert_public_dataset(const std::string& source_path, const std::string& out_path);

}  // namespace eegpriv
