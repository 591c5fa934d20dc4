#include "eegpriv/preprocess.hpp"

#include "eegpriv/fft.hpp"
#include "eegpriv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

namespace eegpriv {

namespace {
constexpr double kGrid = 1.0 / 16384.0;  // 2^-14
constexpr float kGridClamp = 255.0f;
}  // namespace

void PreprocessConfig::validate(double source_rate) const {
    for (const auto& [task, band] : band_edges) {
        if (!(0.0 < band.first && band.first < band.second))
            throw std::runtime_error("band edges for " + task + " must satisfy 0 < lo < hi");
        if (band.second > source_rate / 2.0)
            throw std::runtime_error("band upper edge for " + task + " exceeds source Nyquist");
    }
    if (target_rate <= 0.0 || target_rate > source_rate)
        throw std::runtime_error("target_rate must be in (0, source_rate]");
    if (!(epoch_window.first < epoch_window.second))
        throw std::runtime_error("epoch window start must precede end");
    if (erp_cap != 0 && erp_cap < 2) throw std::runtime_error("erp_cap must be >= 2 (or 0)");
    if (filter_order < 2 || filter_order % 2 != 0)
        throw std::runtime_error("filter_order must be a positive even number");
    if (zscore_epsilon <= 0.0) throw std::runtime_error("zscore_epsilon must be > 0");
}

std::vector<Biquad> design_bandpass(double lo_hz, double hi_hz, double fs, int order) {
    if (!(0.0 < lo_hz && lo_hz < hi_hz)) throw std::runtime_error("bandpass: need 0 < lo < hi");
    if (hi_hz > fs / 2.0) throw std::runtime_error("bandpass: upper edge above Nyquist");
    if (order < 2 || order % 2 != 0) throw std::runtime_error("bandpass: order must be even");

    std::vector<Biquad> sections;
    const int n_pairs = order / 2;
    for (int k = 0; k < n_pairs; ++k) {
        // Butterworth prototype pole pair: s^2 + 2 sin(theta) s + 1
        const double a = 2.0 * std::sin(M_PI * (2.0 * k + 1.0) / (2.0 * order));
        {  // high-pass section at lo_hz
            const double K = std::tan(M_PI * lo_hz / fs);
            const double norm = 1.0 / (1.0 + a * K + K * K);
            sections.push_back({norm, -2.0 * norm, norm, 2.0 * (K * K - 1.0) * norm,
                                (1.0 - a * K + K * K) * norm});
        }
        {  // low-pass section at hi_hz
            const double K = std::tan(M_PI * hi_hz / fs);
            const double norm = 1.0 / (1.0 + a * K + K * K);
            sections.push_back({K * K * norm, 2.0 * K * K * norm, K * K * norm,
                                2.0 * (K * K - 1.0) * norm, (1.0 - a * K + K * K) * norm});
        }
    }
    return sections;
}

double bandpass_response(const std::vector<Biquad>& sections, double f_hz, double fs) {
    const std::complex<double> z = std::exp(std::complex<double>(0.0, -2.0 * M_PI * f_hz / fs));
    std::complex<double> h(1.0, 0.0);
    for (const auto& s : sections) {
        h *= (s.b0 + s.b1 * z + s.b2 * z * z) / (1.0 + s.a1 * z + s.a2 * z * z);
    }
    const double mag = std::abs(h);
    return mag * mag;  // forward-backward pass squares the magnitude
}

namespace {

void run_cascade(std::vector<double>& x, const std::vector<Biquad>& sections) {
    for (const auto& s : sections) {
        double w1 = 0.0, w2 = 0.0;  // direct form II transposed state
        for (double& v : x) {
            const double in = v;
            const double out = s.b0 * in + w1;
            w1 = s.b1 * in - s.a1 * out + w2;
            w2 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
}

// Forward-backward filtering with odd-reflection padding.
std::vector<double> filtfilt(const std::vector<double>& x, const std::vector<Biquad>& sections) {
    const int n = static_cast<int>(x.size());
    const int pad = std::min(n - 1, 3 * (2 * static_cast<int>(sections.size()) + 1));
    std::vector<double> ext(n + 2 * pad);
    for (int i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
    for (int i = 0; i < n; ++i) ext[pad + i] = x[i];
    for (int i = 0; i < pad; ++i) ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

    run_cascade(ext, sections);
    std::reverse(ext.begin(), ext.end());
    run_cascade(ext, sections);
    std::reverse(ext.begin(), ext.end());

    return {ext.begin() + pad, ext.begin() + pad + n};
}

}  // namespace

RowMatrixXf bandpass(const RowMatrixXf& x, double lo_hz, double hi_hz, double fs, int order) {
    if (!x.allFinite()) throw std::runtime_error("bandpass: non-finite input");
    const auto sections = design_bandpass(lo_hz, hi_hz, fs, order);
    RowMatrixXf out(x.rows(), x.cols());
    std::vector<double> row(x.cols());
    for (Eigen::Index ch = 0; ch < x.rows(); ++ch) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) row[j] = x(ch, j);
        auto filtered = filtfilt(row, sections);
        for (Eigen::Index j = 0; j < x.cols(); ++j) out(ch, j) = static_cast<float>(filtered[j]);
    }
    return out;
}

RowMatrixXf resample(const RowMatrixXf& x, double fs_in, double fs_out) {
    if (fs_out > fs_in) throw std::runtime_error("resample: fs_out must not exceed fs_in");
    const int t_in = static_cast<int>(x.cols());
    const int t_out = static_cast<int>(std::lround(t_in * fs_out / fs_in));
    if (t_out < 1) throw std::runtime_error("resample: output would be empty");
    if (t_out == t_in) return x;

    RowMatrixXf out(x.rows(), t_out);
    std::vector<double> row(t_in);
    for (Eigen::Index ch = 0; ch < x.rows(); ++ch) {
        for (int j = 0; j < t_in; ++j) row[j] = x(ch, j);
        auto res = fft::resample_fourier(row, t_out);
        for (int j = 0; j < t_out; ++j) out(ch, j) = static_cast<float>(res[j]);
    }
    return out;
}

RowMatrixXf extract_epoch(const RowMatrixXf& x, int stim_index,
                          std::pair<double, double> window, double fs) {
    const int start = stim_index + static_cast<int>(std::lround(window.first * fs));
    const int len = static_cast<int>(std::lround((window.second - window.first) * fs));
    if (len < 1) throw std::runtime_error("extract_epoch: empty window");
    if (start < 0 || start + len > x.cols())
        throw std::runtime_error("extract_epoch: window [" + std::to_string(start) + ", " +
                                 std::to_string(start + len) + ") exceeds recording of length " +
                                 std::to_string(x.cols()));
    return x.block(0, start, x.rows(), len);
}

EEGDataset zscore_per_group(const EEGDataset& ds, double epsilon,
                            std::vector<std::string>* warnings) {
    EEGDataset out = ds;
    std::map<std::tuple<int, std::string, int>, std::vector<int>> groups;
    for (int i = 0; i < ds.n(); ++i)
        groups[{ds.trials[i].subject_id, ds.trials[i].task, ds.trials[i].session_id}].push_back(i);

    for (const auto& [key, idx] : groups) {
        if (idx.empty()) continue;
        for (int ch = 0; ch < ds.c; ++ch) {
            double sum = 0.0, sum2 = 0.0;
            const std::size_t count = idx.size() * static_cast<std::size_t>(ds.t);
            for (int i : idx) {
                auto x = ds.trial(i);
                for (int j = 0; j < ds.t; ++j) {
                    const double v = x(ch, j);
                    sum += v;
                    sum2 += v * v;
                }
            }
            const double mean = sum / count;
            const double var = std::max(sum2 / count - mean * mean, 0.0);
            const double stddev = std::sqrt(var);
            if (stddev < 10.0 * epsilon && warnings != nullptr)
                warnings->push_back("constant channel " + ds.channel_names[ch] + " in group (subject=" +
                                    std::to_string(std::get<0>(key)) + ", task=" + std::get<1>(key) +
                                    ", session=" + std::to_string(std::get<2>(key)) + ")");
            const double inv = 1.0 / (stddev + epsilon);
            for (int i : idx) {
                auto x = out.trial_mut(i);
                for (int j = 0; j < ds.t; ++j)
                    x(ch, j) = static_cast<float>((static_cast<double>(x(ch, j)) - mean) * inv);
            }
        }
    }
    return out;
}

EEGDataset cap_trials(const EEGDataset& ds, const std::string& task, int n, std::uint64_t seed) {
    if (n < 2) throw std::runtime_error("cap_trials: n must be >= 2");

    std::map<std::pair<int, int>, std::vector<int>> groups;  // (subject, session) -> indices
    for (int i = 0; i < ds.n(); ++i)
        if (ds.trials[i].task == task)
            groups[{ds.trials[i].subject_id, ds.trials[i].session_id}].push_back(i);

    std::set<int> keep;
    for (int i = 0; i < ds.n(); ++i)
        if (ds.trials[i].task != task) keep.insert(i);

    for (const auto& [key, idx] : groups) {
        if (static_cast<int>(idx.size()) < n)
            throw std::runtime_error("cap_trials: group (subject=" + std::to_string(key.first) +
                                     ", session=" + std::to_string(key.second) + ") has only " +
                                     std::to_string(idx.size()) + " trials, need " +
                                     std::to_string(n));
        if (static_cast<int>(idx.size()) == n) {
            keep.insert(idx.begin(), idx.end());
            continue;
        }
        // largest-remainder allocation of n slots across classes
        std::map<int, std::vector<int>> by_class;
        for (int i : idx) by_class[ds.trials[i].y].push_back(i);
        const double total = static_cast<double>(idx.size());
        std::vector<std::pair<int, int>> alloc;  // (class, count)
        std::vector<std::pair<double, int>> remainders;
        int assigned = 0;
        for (const auto& [cls, members] : by_class) {
            const double exact = n * members.size() / total;
            int base = static_cast<int>(std::floor(exact));
            base = std::min(base, static_cast<int>(members.size()));
            alloc.emplace_back(cls, base);
            remainders.emplace_back(exact - base, cls);
            assigned += base;
        }
        std::sort(remainders.begin(), remainders.end(),
                  [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                  });
        for (std::size_t r = 0; assigned < n; r = (r + 1) % remainders.size()) {
            for (auto& [cls, cnt] : alloc) {
                if (cls == remainders[r].second &&
                    cnt < static_cast<int>(by_class[cls].size())) {
                    ++cnt;
                    ++assigned;
                    break;
                }
            }
        }

        Rng rng(seed_mix({seed, static_cast<std::uint64_t>(key.first),
                          static_cast<std::uint64_t>(key.second)}));
        for (const auto& [cls, cnt] : alloc) {
            std::vector<int> members = by_class[cls];
            rng.shuffle(members);
            for (int r = 0; r < cnt; ++r) keep.insert(members[r]);
        }
    }

    EEGDataset out;
    out.channel_names = ds.channel_names;
    out.sampling_rate = ds.sampling_rate;
    out.task_vocab = ds.task_vocab;
    out.privacy_vocab = ds.privacy_vocab;
    out.provenance = ds.provenance;
    out.c = ds.c;
    out.t = ds.t;
    const std::size_t block = static_cast<std::size_t>(ds.c) * ds.t;
    for (int i : keep) {
        out.trials.push_back(ds.trials[i]);
        out.data.insert(out.data.end(), ds.data.begin() + i * block,
                        ds.data.begin() + (i + 1) * block);
    }
    return out;
}

EEGDataset quantize_to_grid(const EEGDataset& ds) {
    EEGDataset out = ds;
    for (float& v : out.data) {
        const float clamped = std::clamp(v, -kGridClamp, kGridClamp);
        v = static_cast<float>(std::nearbyint(clamped / kGrid) * kGrid);
    }
    return out;
}

EEGDataset preprocess_dataset(const EEGDataset& ds, const PreprocessConfig& cfg,
                              std::uint64_t seed, std::vector<std::string>* warnings) {
    cfg.validate(ds.sampling_rate);
    ds.validate();

    EEGDataset out = ds;
    for (int i = 0; i < out.n(); ++i) {
        const auto& band = cfg.band_edges.at(out.trials[i].task);
        RowMatrixXf x = bandpass(out.trial(i), band.first, band.second, out.sampling_rate,
                                 cfg.filter_order);
        out.trial_mut(i) = x;
    }

    if (cfg.target_rate != out.sampling_rate) {
        const int t_out =
            static_cast<int>(std::lround(out.t * cfg.target_rate / out.sampling_rate));
        EEGDataset res = out;
        res.t = t_out;
        res.sampling_rate = cfg.target_rate;
        res.data.assign(static_cast<std::size_t>(out.n()) * out.c * t_out, 0.0f);
        for (int i = 0; i < out.n(); ++i)
            res.trial_mut(i) = resample(out.trial(i), out.sampling_rate, cfg.target_rate);
        out = std::move(res);
    }

    out = zscore_per_group(out, cfg.zscore_epsilon, warnings);

    if (cfg.erp_cap > 0) out = cap_trials(out, "ERP", cfg.erp_cap, seed);

    if (cfg.quantize_output) out = quantize_to_grid(out);
    return out;
}

}  // namespace eegpriv
