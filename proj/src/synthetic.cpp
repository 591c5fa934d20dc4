#include "eegpriv/synthetic.hpp"

#include "eegpriv/fft.hpp"
#include "eegpriv/rng.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

namespace eegpriv {

namespace {

const char* kTasks[3] = {"ERP", "MI", "SSVEP"};

// Spectrum shape of the background noise: flat passband, cosine rolloff over
// ~6 Hz, residual floor above. Mimics the band-limited character of scalp EEG.
double noise_spectrum(double f, double lowpass_hz, double floor_amp) {
    const double ramp = 6.0;
    if (f <= lowpass_hz) return 1.0;
    if (f >= lowpass_hz + ramp) return floor_amp * floor_amp;
    const double u = (f - lowpass_hz) / ramp;
    const double w = 0.5 * (1.0 + std::cos(M_PI * u));
    return floor_amp * floor_amp + (1.0 - floor_amp * floor_amp) * w;
}

// Unit-variance Gaussian noise with the given power spectrum, synthesized in
// the frequency domain (bins drawn in a fixed order so the output is
// seed-deterministic).
template <class SpectrumFn>
std::vector<double> spectral_noise(Rng& rng, int t, double fs, SpectrumFn spectrum) {
    const int half = t / 2;
    std::vector<std::complex<double>> spec(half + 1, {0.0, 0.0});
    double sum_s = 0.0;
    for (int k = 1; k < half; ++k) {
        const double s = spectrum(fs * k / t);
        const double c = std::sqrt(s);
        spec[k] = {c * rng.normal(), c * rng.normal()};
        sum_s += s;
    }
    // var(x) = (4 / t^2) * sum_k S_k for this construction; rescale to 1
    auto x = fft::irfft(spec, t);
    const double scale = t / (2.0 * std::sqrt(sum_s));
    for (double& v : x) v *= scale;
    return x;
}

std::vector<double> shaped_noise(Rng& rng, int t, double fs, double lowpass_hz,
                                 double floor_amp) {
    return spectral_noise(rng, t, fs,
                          [&](double f) { return noise_spectrum(f, lowpass_hz, floor_amp); });
}

// Narrowband oscillation around f0 (Gaussian spectral envelope), unit variance.
// sqrt(2) scaling makes its band power match a sine of the same amplitude.
std::vector<double> narrowband_osc(Rng& rng, int t, double fs, double f0, double bw) {
    const double sf = std::max(bw / 2.0, 0.25);
    auto x = spectral_noise(rng, t, fs, [&](double f) {
        const double d = (f - f0) / sf;
        return std::exp(-0.5 * d * d);
    });
    for (double& v : x) v /= std::sqrt(2.0);
    return x;
}

std::vector<std::string> default_channel_names(int c) {
    static const std::vector<std::string> base = {"F3", "C3", "P3", "Cz",
                                                  "F4", "C4", "P4", "Oz"};
    std::vector<std::string> names;
    for (int i = 0; i < c; ++i) {
        if (i < static_cast<int>(base.size()))
            names.push_back(base[i]);
        else
            names.push_back("S" + std::to_string(i + 1));
    }
    return names;
}

}  // namespace

void SyntheticConfig::validate() const {
    if (n_subjects < 2) throw std::runtime_error("SyntheticConfig: n_subjects must be >= 2");
    if (n_sessions < 1 || trials_per_task_per_session < 1 || c < 1 || t < 1)
        throw std::runtime_error("SyntheticConfig: all counts must be >= 1");
    if (noise_std <= 0.0) throw std::runtime_error("SyntheticConfig: noise_std must be > 0");
    if (sampling_rate <= 0.0) throw std::runtime_error("SyntheticConfig: sampling_rate must be > 0");
    if (flicker_freqs.size() != 4)
        throw std::runtime_error("SyntheticConfig: exactly 4 flicker frequencies expected");
    for (double f : flicker_freqs)
        if (f <= 0.0 || f >= sampling_rate / 2.0)
            throw std::runtime_error("SyntheticConfig: flicker frequency outside (0, Nyquist)");
}

EEGDataset generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();

    EEGDataset ds;
    ds.channel_names = default_channel_names(cfg.c);
    ds.sampling_rate = cfg.sampling_rate;
    ds.task_vocab = {{"ERP", 2}, {"MI", 2}, {"SSVEP", 4}};
    ds.privacy_vocab = {{"identity", cfg.n_subjects}, {"gender", 2}, {"experience", 2}};
    ds.provenance = "synthetic seed=" + std::to_string(cfg.seed);
    ds.c = cfg.c;
    ds.t = cfg.t;

    const int c = cfg.c, t = cfg.t;
    const double fs = cfg.sampling_rate;

    // Fixed (seed-determined) spatial structure shared by all trials.
    Rng structure_rng(seed_mix({cfg.seed, hash_str("structure")}));
    auto unit_rms = [c](std::vector<double>& v) {
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm / c);
        for (double& x : v) x /= norm;
    };
    std::vector<std::vector<double>> subject_pattern(cfg.n_subjects, std::vector<double>(c));
    for (auto& pat : subject_pattern) {
        for (double& v : pat) v = structure_rng.normal();
        unit_rms(pat);
    }
    auto broad_profile = [&]() {
        std::vector<double> w(c);
        double norm = 0.0;
        for (double& v : w) {
            v = 0.5 + std::abs(structure_rng.normal());
            norm += v * v;
        }
        norm = std::sqrt(norm / c);
        for (double& v : w) v /= norm;
        return w;
    };
    const std::vector<double> gender_profile = broad_profile();
    const std::vector<double> experience_profile = broad_profile();

    std::vector<double> erp_profile(c);  // peaked at fronto-central channels
    {
        const double i_cz = (c - 1) / 2.0;
        double norm = 0.0;
        for (int i = 0; i < c; ++i) {
            erp_profile[i] = 0.3 + std::exp(-0.5 * (i - i_cz) * (i - i_cz) / 2.0);
            norm += erp_profile[i] * erp_profile[i];
        }
        norm = std::sqrt(norm / c);
        for (double& v : erp_profile) v /= norm;
    }
    std::vector<double> ssvep_profile(c);  // rises toward posterior channels
    {
        double norm = 0.0;
        for (int i = 0; i < c; ++i) {
            double r = c > 1 ? static_cast<double>(i) / (c - 1) : 1.0;
            ssvep_profile[i] = 0.15 + 0.85 * r * r * r;
            norm += ssvep_profile[i] * ssvep_profile[i];
        }
        norm = std::sqrt(norm / c);
        for (double& v : ssvep_profile) v /= norm;
    }

    const double osc_bw = cfg.oscillation_bandwidth;

    // Per-subject baselines and per-session drifts of the privacy components.
    // Individual baselines dominate the class separation at the single-trial
    // level, as they do in real recordings.
    auto lognormal = [&](Rng& r, double sigma) {
        return std::exp(sigma * r.normal() - sigma * sigma / 2.0);
    };
    const int n_subj = cfg.n_subjects, n_sess = cfg.n_sessions;
    std::vector<double> subj_base_id(n_subj), subj_base_gender(n_subj), subj_base_exp(n_subj);
    for (int s = 0; s < n_subj; ++s) {
        subj_base_id[s] = lognormal(structure_rng, cfg.subject_variability);
        subj_base_gender[s] = lognormal(structure_rng, cfg.subject_variability);
        subj_base_exp[s] = lognormal(structure_rng, cfg.subject_variability);
    }
    std::vector<std::vector<double>> sess_mult_id(n_subj, std::vector<double>(n_sess));
    auto sess_mult_gender = sess_mult_id, sess_mult_exp = sess_mult_id;
    std::vector<std::vector<double>> sess_freq_shift(n_subj, std::vector<double>(n_sess));
    std::vector<std::vector<std::vector<double>>> sess_pattern(
        n_subj, std::vector<std::vector<double>>(n_sess, std::vector<double>(c)));
    for (int s = 0; s < n_subj; ++s)
        for (int e = 0; e < n_sess; ++e) {
            sess_mult_id[s][e] = lognormal(structure_rng, cfg.session_variability);
            sess_mult_gender[s][e] = lognormal(structure_rng, cfg.session_variability);
            sess_mult_exp[s][e] = lognormal(structure_rng, cfg.session_variability);
            sess_freq_shift[s][e] = cfg.identity_freq_drift * structure_rng.normal();
            auto& pat = sess_pattern[s][e];
            for (int ch = 0; ch < c; ++ch)
                pat[ch] = subject_pattern[s][ch] + cfg.spatial_drift * structure_rng.normal();
            unit_rms(pat);
        }

    const std::size_t n_total = static_cast<std::size_t>(cfg.n_subjects) * cfg.n_sessions * 3 *
                                cfg.trials_per_task_per_session;
    ds.data.assign(n_total * c * t, 0.0f);
    ds.trials.reserve(n_total);

    std::size_t trial_idx = 0;
    for (int s = 1; s <= cfg.n_subjects; ++s) {
        const int gender = (s % 2 == 1) ? 1 : 2;
        const int experience = (s > (3 * cfg.n_subjects) / 4) ? 2 : 1;
        const double f_id_base =
            16.0 + 12.0 * (s - 1) / std::max(cfg.n_subjects - 1, 1);  // 16..28 Hz

        for (int sess = 1; sess <= cfg.n_sessions; ++sess) {
            for (int task_i = 0; task_i < 3; ++task_i) {
                for (int k = 1; k <= cfg.trials_per_task_per_session; ++k) {
                    TrialMeta tr;
                    tr.subject_id = s;
                    tr.session_id = sess;
                    tr.task = kTasks[task_i];
                    tr.privacy["identity"] = s;
                    tr.privacy["gender"] = gender;
                    tr.privacy["experience"] = experience;
                    if (task_i == 0)
                        tr.y = (k % 5 == 0) ? 2 : 1;  // 12 targets per 60
                    else if (task_i == 1)
                        tr.y = (k % 2 == 0) ? 2 : 1;
                    else
                        tr.y = (k - 1) % 4 + 1;

                    Rng rng(seed_mix({cfg.seed, static_cast<std::uint64_t>(s),
                                      static_cast<std::uint64_t>(sess),
                                      static_cast<std::uint64_t>(task_i),
                                      static_cast<std::uint64_t>(k)}));
                    const double phi_task = 2.0 * M_PI * rng.uniform();
                    const double phi_task2 = 2.0 * M_PI * rng.uniform();

                    // mean-preserving log-normal amplitude spread per trial
                    auto jitter = [&]() { return lognormal(rng, cfg.amplitude_jitter); };
                    const double id_amp = cfg.identity_gain * subj_base_id[s - 1] *
                                          sess_mult_id[s - 1][sess - 1] * jitter();
                    const double gender_amp = cfg.gender_gain *
                                              (gender == 2 ? cfg.gender_shift : 1.0) *
                                              subj_base_gender[s - 1] *
                                              sess_mult_gender[s - 1][sess - 1] * jitter();
                    const double exp_amp = cfg.experience_gain *
                                           (experience == 2 ? cfg.experience_scale : 1.0) *
                                           subj_base_exp[s - 1] *
                                           sess_mult_exp[s - 1][sess - 1] * jitter();
                    const double f_id = f_id_base + sess_freq_shift[s - 1][sess - 1];
                    const auto& id_pattern = sess_pattern[s - 1][sess - 1];

                    // narrowband oscillations carrying the privacy attributes
                    // and the MI rhythm (drawn before the channel noise so the
                    // rng stream layout is fixed)
                    const auto w_id = narrowband_osc(rng, t, fs, f_id, osc_bw);
                    const auto w_gender = narrowband_osc(rng, t, fs, 10.5, osc_bw);
                    const auto w_exp = spectral_noise(
                        rng, t, fs, [](double f) { return (f >= 30.0 && f < 40.0) ? 1.0 : 0.0; });
                    const auto w_mi = narrowband_osc(rng, t, fs, 12.5, osc_bw);
                    std::vector<std::vector<double>> noise(c);
                    for (int ch = 0; ch < c; ++ch)
                        noise[ch] = shaped_noise(rng, t, fs, cfg.noise_lowpass_hz,
                                                 cfg.noise_highband_floor);

                    float* base = ds.data.data() + trial_idx * c * t;
                    for (int j = 0; j < t; ++j) {
                        const double tau = j / fs;
                        double w_task = 0.0;
                        if (task_i == 0 && tr.y == 2) {
                            const double d = tau - 0.3;
                            w_task = std::exp(-0.5 * d * d / (0.06 * 0.06));
                        } else if (task_i == 1) {
                            w_task = w_mi[j];
                        } else if (task_i == 2) {
                            const double f_fl = cfg.flicker_freqs[tr.y - 1];
                            w_task = std::sin(2.0 * M_PI * f_fl * tau + phi_task) +
                                     0.3 * std::sin(2.0 * M_PI * 2.0 * f_fl * tau + phi_task2);
                        }

                        for (int ch = 0; ch < c; ++ch) {
                            double v = cfg.noise_std * noise[ch][j];
                            v += id_amp * id_pattern[ch] * w_id[j];
                            v += gender_amp * gender_profile[ch] * w_gender[j];
                            v += exp_amp * experience_profile[ch] * w_exp[j] / std::sqrt(2.0);
                            if (task_i == 0) {
                                v += cfg.erp_gain * erp_profile[ch] * w_task;
                            } else if (task_i == 1) {
                                // imagined hand suppresses the rhythm on the opposite half
                                double att = 1.0;
                                const bool left_half = ch < c / 2;
                                if ((tr.y == 1 && !left_half) || (tr.y == 2 && left_half))
                                    att = cfg.mi_attenuation;
                                v += cfg.mi_gain * att * w_task;
                            } else {
                                v += cfg.ssvep_gain * ssvep_profile[ch] * w_task;
                            }
                            base[static_cast<std::size_t>(ch) * t + j] = static_cast<float>(v);
                        }
                    }
                    ds.trials.push_back(std::move(tr));
                    ++trial_idx;
                }
            }
        }
    }
    return ds;
}

}  // namespace eegpriv
