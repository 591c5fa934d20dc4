#pragma once

#include <complex>
#include <vector>

namespace eegpriv::fft {

// Thin deterministic wrappers around FFTW (double precision, FFTW_ESTIMATE
// plans, cached per transform size).

// Real-to-complex FFT; returns n/2+1 bins.
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

// Inverse of rfft for a signal of length n (normalized by 1/n).
std::vector<double> irfft(const std::vector<std::complex<double>>& spec, int n);

// Fourier-domain resampling to n_out samples (ideal low-pass + rate change).
// Bins at or above the output Nyquist are discarded.
std::vector<double> resample_fourier(const std::vector<double>& x, int n_out);

// Mean band power in [f_lo, f_hi) Hz via the periodogram, one-sided.
double band_power(const std::vector<double>& x, double fs, double f_lo, double f_hi);

}  // namespace eegpriv::fft
