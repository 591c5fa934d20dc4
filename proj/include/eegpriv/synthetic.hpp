#pragma once

#include "eegpriv/dataset.hpp"

#include <cstdint>
#include <vector>

namespace eegpriv {

// Desk-scale stand-in for a multi-task EEG recording. Every private attribute
// is planted in its own signal dimension so concealment of one can be measured
// without touching the others:
//   identity   - per-subject spatial pattern mixing a subject-unique oscillation
//   gender     - multiplicative amplitude shift of a broad 10.5 Hz component
//                (8-13 Hz band power ratio of shift^2 between the classes)
//   experience - amplitude scale of a broad 31-39 Hz background component
//                (survives per-channel z-scoring as a band-power fraction)
// Task structure: ERP targets carry a transient peak near 300 ms, MI trials
// attenuate the 12.5 Hz rhythm on the half of the channels opposite to the
// imagined hand, SSVEP trials carry one of four flicker sinusoids.
struct SyntheticConfig {
    int n_subjects = 8;
    int n_sessions = 2;
    int trials_per_task_per_session = 60;
    int c = 8;
    int t = 512;
    double sampling_rate = 256.0;
    double noise_std = 1.0;

    double identity_gain = 0.8;
    double gender_gain = 0.9;
    double gender_shift = 1.5;
    double experience_gain = 0.7;
    double experience_scale = 1.6;
    double erp_gain = 3.0;
    double mi_gain = 1.4;
    double mi_attenuation = 0.3;
    double ssvep_gain = 1.5;
    // per-trial log-normal amplitude spread of the privacy components; keeps
    // their trial-to-trial strength realistic instead of deterministic
    double amplitude_jitter = 0.8;
    // per-subject baseline spread of each privacy component; 0 keeps classes
    // cleanly separated at the population level (subject baselines at the
    // 8-subject desk scale turn every attribute into subject lookup)
    double subject_variability = 0.0;
    // per-session drift: amplitude re-scaling, identity frequency shift, and
    // spatial pattern rotation between the two recordings
    double session_variability = 0.3;
    double identity_freq_drift = 0.25;  // Hz
    double spatial_drift = 0.12;
    // privacy and MI rhythms are narrowband oscillations, not pure tones
    double oscillation_bandwidth = 2.0;  // Hz, full width
    // background noise is band-limited like real EEG: flat up to
    // noise_lowpass_hz, cosine rolloff, then a residual broadband floor
    double noise_lowpass_hz = 38.0;
    double noise_highband_floor = 0.003;  // amplitude relative to the passband
    std::vector<double> flicker_freqs = {8.57, 10.0, 12.0, 15.0};

    std::uint64_t seed = 77;

    void validate() const;
};

EEGDataset generate_synthetic(const SyntheticConfig& cfg);

}  // namespace eegpriv
