#pragma once

#include "eegpriv/dataset.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace eegpriv {

struct PreprocessConfig {
    std::map<std::string, std::pair<double, double>> band_edges = {
        {"ERP", {1.0, 40.0}}, {"MI", {4.0, 40.0}}, {"SSVEP", {4.0, 64.0}}};
    double target_rate = 128.0;
    std::pair<double, double> epoch_window = {0.0, 2.0};
    int erp_cap = 200;  // trials per (subject, session); 0 disables capping
    int filter_order = 4;
    double zscore_epsilon = 1e-8;
    // Snap output samples to a 2^-14 grid. Bank perturbations live on the same
    // grid, which makes x + delta and x' - delta exact float32 operations.
    bool quantize_output = true;

    void validate(double source_rate) const;
};

// Biquad cascade for an order-N Butterworth band-pass (N/2 high-pass plus
// N/2 low-pass sections), applied forward-backward for zero phase.
struct Biquad {
    double b0, b1, b2, a1, a2;
};
std::vector<Biquad> design_bandpass(double lo_hz, double hi_hz, double fs, int order);
// Squared magnitude response of the forward-backward cascade at f_hz.
double bandpass_response(const std::vector<Biquad>& sections, double f_hz, double fs);

// Zero-phase band-pass per channel; shape preserved.
RowMatrixXf bandpass(const RowMatrixXf& x, double lo_hz, double hi_hz, double fs, int order);

// Fourier-domain resample per channel to round(t * fs_out / fs_in) samples.
RowMatrixXf resample(const RowMatrixXf& x, double fs_in, double fs_out);

// Slice [t0, t1) seconds after the stimulus sample out of a continuous record.
RowMatrixXf extract_epoch(const RowMatrixXf& x, int stim_index,
                          std::pair<double, double> window, double fs);

// z-score each channel over the concatenated trials of every
// (subject, task, session) group. Constant channels are zeroed and reported.
EEGDataset zscore_per_group(const EEGDataset& ds, double epsilon = 1e-8,
                            std::vector<std::string>* warnings = nullptr);

// Class-stratified downsample of one task to n trials per (subject, session).
EEGDataset cap_trials(const EEGDataset& ds, const std::string& task, int n, std::uint64_t seed);

// Snap every sample to the 2^-14 grid (exact in float32 up to |x| < 512).
EEGDataset quantize_to_grid(const EEGDataset& ds);

// Full recipe: band-pass at the source rate, resample, z-score, cap, quantize.
EEGDataset preprocess_dataset(const EEGDataset& ds, const PreprocessConfig& cfg,
                              std::uint64_t seed,
                              std::vector<std::string>* warnings = nullptr);

}  // namespace eegpriv
