#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eegpriv/fft.hpp"
#include "eegpriv/preprocess.hpp"
#include "eegpriv/synthetic.hpp"

#include <cmath>
#include <set>

using namespace eegpriv;

namespace {

RowMatrixXf sine_trial(int c, int t, double freq, double fs, double amp = 1.0) {
    RowMatrixXf x(c, t);
    for (int ch = 0; ch < c; ++ch)
        for (int j = 0; j < t; ++j)
            x(ch, j) = static_cast<float>(amp * std::sin(2.0 * M_PI * freq * j / fs));
    return x;
}

double rms(const RowMatrixXf& x) {
    return std::sqrt(x.cast<double>().array().square().mean());
}

}  // namespace

TEST_CASE("bandpass maps zero to zero and preserves shape") {
    RowMatrixXf zero = RowMatrixXf::Zero(3, 200);
    auto out = bandpass(zero, 4.0, 40.0, 1000.0, 4);
    CHECK(out.rows() == 3);
    CHECK(out.cols() == 200);
    CHECK(out.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("bandpass attenuation and passband match the designed response") {
    const double fs = 1000.0;
    // oracle: evaluate the cascade's squared magnitude at the two frequencies
    auto sections = design_bandpass(4.0, 40.0, fs, 4);
    const double h2_stop = bandpass_response(sections, 2.0, fs);
    const double h2_pass = bandpass_response(sections, 10.0, fs);
    CHECK(h2_stop < 0.01);
    CHECK(h2_pass > 0.81);

    auto stop = bandpass(sine_trial(1, 4000, 2.0, fs), 4.0, 40.0, fs, 4);
    auto pass = bandpass(sine_trial(1, 4000, 10.0, fs), 4.0, 40.0, fs, 4);
    const double in_rms = rms(sine_trial(1, 4000, 2.0, fs));
    CHECK(rms(stop) <= 0.1 * in_rms);
    CHECK(rms(pass) >= 0.9 * in_rms);
    // filtered sine RMS tracks the response oracle
    CHECK(rms(pass) == doctest::Approx(std::sqrt(h2_pass) * in_rms).epsilon(0.02));
}

TEST_CASE("bandpass rejects an upper edge above Nyquist") {
    RowMatrixXf x = RowMatrixXf::Zero(1, 100);
    CHECK_THROWS_AS(bandpass(x, 4.0, 70.0, 128.0, 4), std::runtime_error);
}

TEST_CASE("resample sample counts, DC preservation, and peak location") {
    RowMatrixXf x = RowMatrixXf::Constant(2, 512, 3.25f);
    auto half = resample(x, 256.0, 128.0);
    CHECK(half.cols() == 256);
    for (int j = 0; j < half.cols(); ++j) CHECK(half(0, j) == doctest::Approx(3.25).epsilon(1e-6));

    // 10 Hz sine at 1000 Hz -> 128 Hz: dominant DFT bin stays at 10 Hz
    auto sine = sine_trial(1, 2000, 10.0, 1000.0);
    auto res = resample(sine, 1000.0, 128.0);
    CHECK(res.cols() == 256);
    std::vector<double> row(res.cols());
    for (int j = 0; j < res.cols(); ++j) row[j] = res(0, j);
    auto spec = fft::rfft(row);
    int peak = 0;
    for (std::size_t k = 1; k < spec.size(); ++k)
        if (std::abs(spec[k]) > std::abs(spec[peak])) peak = static_cast<int>(k);
    const double peak_hz = 128.0 * peak / res.cols();
    CHECK(peak_hz == doctest::Approx(10.0).epsilon(0.05));

    CHECK_THROWS_AS(resample(x, 128.0, 256.0), std::runtime_error);
}

TEST_CASE("extract_epoch slices the stated window") {
    RowMatrixXf rec = RowMatrixXf::Zero(2, 1000);
    for (int j = 0; j < 1000; ++j) rec(0, j) = static_cast<float>(j);

    auto ep = extract_epoch(rec, 100, {0.0, 2.0}, 128.0);
    CHECK(ep.cols() == 256);
    CHECK(ep(0, 0) == 100.0f);

    auto small = extract_epoch(rec, 100, {0.0, 0.5}, 128.0);
    CHECK(small.cols() == 64);

    CHECK_THROWS_AS(extract_epoch(rec, 900, {0.0, 2.0}, 128.0), std::runtime_error);
}

TEST_CASE("zscore_per_group centers and scales each channel per group") {
    SyntheticConfig cfg;
    cfg.n_subjects = 3;
    cfg.n_sessions = 2;
    cfg.trials_per_task_per_session = 4;
    cfg.c = 3;
    cfg.t = 64;
    cfg.sampling_rate = 128.0;
    auto ds = generate_synthetic(cfg);
    auto z = zscore_per_group(ds);

    std::map<std::tuple<int, std::string, int>, std::vector<int>> groups;
    for (int i = 0; i < z.n(); ++i)
        groups[{z.trials[i].subject_id, z.trials[i].task, z.trials[i].session_id}].push_back(i);
    for (const auto& [key, idx] : groups) {
        for (int ch = 0; ch < z.c; ++ch) {
            double sum = 0.0, sum2 = 0.0;
            const std::size_t count = idx.size() * static_cast<std::size_t>(z.t);
            for (int i : idx) {
                auto x = z.trial(i);
                for (int j = 0; j < z.t; ++j) {
                    sum += x(ch, j);
                    sum2 += static_cast<double>(x(ch, j)) * x(ch, j);
                }
            }
            const double mean = sum / count;
            const double sd = std::sqrt(std::max(sum2 / count - mean * mean, 0.0));
            CHECK(std::abs(mean) < 1e-6);
            CHECK(std::abs(sd - 1.0) < 1e-4);
        }
    }

    // idempotence
    auto zz = zscore_per_group(z);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < z.data.size(); ++i)
        max_diff = std::max(max_diff, static_cast<double>(std::abs(z.data[i] - zz.data[i])));
    CHECK(max_diff < 1e-5);
}

TEST_CASE("zscore guards constant channels with a warning") {
    SyntheticConfig cfg;
    cfg.n_subjects = 2;
    cfg.n_sessions = 1;
    cfg.trials_per_task_per_session = 2;
    cfg.c = 2;
    cfg.t = 32;
    cfg.sampling_rate = 128.0;
    auto ds = generate_synthetic(cfg);
    for (int i = 0; i < ds.n(); ++i) {
        auto x = ds.trial_mut(i);
        for (int j = 0; j < ds.t; ++j) x(1, j) = 7.0f;  // constant channel
    }
    std::vector<std::string> warnings;
    auto z = zscore_per_group(ds, 1e-8, &warnings);
    CHECK(!warnings.empty());
    for (int i = 0; i < z.n(); ++i) {
        auto x = z.trial(i);
        for (int j = 0; j < z.t; ++j) {
            CHECK(std::isfinite(x(1, j)));
            CHECK(std::abs(x(1, j)) < 1e-3);
        }
    }
}

TEST_CASE("cap_trials keeps n per session group, stratified and seeded") {
    SyntheticConfig cfg;
    cfg.n_subjects = 2;
    cfg.n_sessions = 2;
    cfg.trials_per_task_per_session = 60;  // 12 targets / 48 non-targets
    cfg.c = 2;
    cfg.t = 16;
    cfg.sampling_rate = 128.0;
    auto ds = generate_synthetic(cfg);

    auto capped = cap_trials(ds, "ERP", 20, 5);
    std::map<std::pair<int, int>, std::pair<int, int>> counts;  // group -> (targets, total)
    for (const auto& tr : capped.trials) {
        if (tr.task != "ERP") continue;
        auto& [targets, total] = counts[{tr.subject_id, tr.session_id}];
        if (tr.y == 2) ++targets;
        ++total;
    }
    CHECK(counts.size() == 4);
    for (const auto& [key, val] : counts) {
        CHECK(val.second == 20);
        CHECK(val.first == 4);  // 20 * 12/60 preserved exactly
    }
    // non-ERP tasks untouched
    int mi = 0;
    for (const auto& tr : capped.trials) mi += tr.task == "MI";
    CHECK(mi == 2 * 2 * 60);

    // determinism + identity when n equals the group size
    auto capped2 = cap_trials(ds, "ERP", 20, 5);
    CHECK(capped2.n() == capped.n());
    CHECK(std::memcmp(capped.data.data(), capped2.data.data(),
                      capped.data.size() * sizeof(float)) == 0);

    auto full = cap_trials(ds, "ERP", 60, 5);
    int erp = 0;
    for (const auto& tr : full.trials) erp += tr.task == "ERP";
    CHECK(erp == 2 * 2 * 60);

    CHECK_THROWS_AS(cap_trials(ds, "ERP", 61, 5), std::runtime_error);
}

TEST_CASE("full pipeline produces uniform (c, 256) trials at 128 Hz") {
    SyntheticConfig cfg;
    cfg.n_subjects = 2;
    cfg.n_sessions = 2;
    cfg.trials_per_task_per_session = 4;
    cfg.c = 4;
    cfg.t = 512;
    cfg.sampling_rate = 256.0;
    auto ds = generate_synthetic(cfg);

    PreprocessConfig pcfg;
    pcfg.erp_cap = 0;
    auto out = preprocess_dataset(ds, pcfg, 9);
    CHECK(out.sampling_rate == 128.0);
    CHECK(out.t == 256);
    CHECK(out.c == 4);
    CHECK(out.n() == ds.n());
    out.validate();

    // quantized samples sit on the 2^-14 grid
    for (float v : out.data) {
        const double scaled = static_cast<double>(v) * 16384.0;
        CHECK(scaled == doctest::Approx(std::nearbyint(scaled)).epsilon(1e-9));
    }
}
