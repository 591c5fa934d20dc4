#include "eegpriv/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>

namespace eegpriv::fft {

namespace {

// FFTW planning is not thread safe; execution with the new-array interface is.
std::mutex plan_mutex;

struct PlanPair {
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;
};

PlanPair& plans_for(int n) {
    static std::map<int, PlanPair> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    PlanPair p;
    p.fwd = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
    p.inv = fftw_plan_dft_c2r_1d(n, out, in, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    return cache.emplace(n, p).first->second;
}

}  // namespace

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    if (n < 1) throw std::invalid_argument("rfft: empty input");

    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(plan_mutex);
        plan = plans_for(n).fwd;
    }
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    std::memcpy(in, x.data(), sizeof(double) * n);
    fftw_execute_dft_r2c(plan, in, out);

    std::vector<std::complex<double>> spec(n / 2 + 1);
    for (int k = 0; k < n / 2 + 1; ++k) spec[k] = {out[k][0], out[k][1]};
    fftw_free(in);
    fftw_free(out);
    return spec;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& spec, int n) {
    if (n < 1 || static_cast<int>(spec.size()) != n / 2 + 1)
        throw std::invalid_argument("irfft: spectrum size does not match n");

    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(plan_mutex);
        plan = plans_for(n).inv;
    }
    double* out = fftw_alloc_real(n);
    fftw_complex* in = fftw_alloc_complex(n / 2 + 1);
    for (int k = 0; k < n / 2 + 1; ++k) {
        in[k][0] = spec[k].real();
        in[k][1] = spec[k].imag();
    }
    fftw_execute_dft_c2r(plan, in, out);

    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = out[i] / n;
    fftw_free(in);
    fftw_free(out);
    return x;
}

std::vector<double> resample_fourier(const std::vector<double>& x, int n_out) {
    const int n_in = static_cast<int>(x.size());
    if (n_out < 1) throw std::invalid_argument("resample_fourier: n_out < 1");
    if (n_out == n_in) return x;
    if (n_out > n_in) throw std::invalid_argument("resample_fourier: upsampling not supported");

    auto spec = rfft(x);
    std::vector<std::complex<double>> out_spec(n_out / 2 + 1, {0.0, 0.0});
    // Keep bins strictly below the new Nyquist; the boundary bin is zeroed.
    const int keep = (n_out + 1) / 2;  // bins 0 .. keep-1
    const double scale = static_cast<double>(n_out) / n_in;
    for (int k = 0; k < keep; ++k) out_spec[k] = spec[k] * scale;
    return irfft(out_spec, n_out);
}

double band_power(const std::vector<double>& x, double fs, double f_lo, double f_hi) {
    const int n = static_cast<int>(x.size());
    auto spec = rfft(x);
    double acc = 0.0;
    int count = 0;
    for (int k = 0; k < static_cast<int>(spec.size()); ++k) {
        double f = fs * k / n;
        if (f >= f_lo && f < f_hi) {
            acc += std::norm(spec[k]);
            ++count;
        }
    }
    if (count == 0) return 0.0;
    // Periodogram scale: |X_k|^2 * 2 / (fs * n), summed over band bins times df.
    return acc * 2.0 / (static_cast<double>(n) * n);
}

}  // namespace eegpriv::fft
