// SPDX-License-Identifier: Apache-2.0
//
// Shared numerical primitives: FIR convolution, Lagrange fractional-delay
// design, sampled first-order lowpass responses, windowed spectra in dBFS,
// and a midrise uniform quantizer. All functions are pure.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace ebpcal {

struct RealFir {
    std::vector<double> taps;

    RealFir() = default;
    explicit RealFir(std::vector<double> t) : taps(std::move(t)) {
        if (taps.empty()) throw std::invalid_argument("RealFir: empty tap list");
        for (double v : taps)
            if (!std::isfinite(v)) throw std::invalid_argument("RealFir: non-finite coefficient");
    }

    int length() const { return static_cast<int>(taps.size()); }
    // Samples at the head of a convolution output that still see zero history.
    int transient() const { return length() - 1; }
};

// Linear convolution, output aligned so tap index 0 multiplies the newest
// sample: y[n] = sum_l h[l] x[n-l]. Output length equals input length (the
// tail is truncated); the first fir.transient() samples are start-up.
inline std::vector<double> convolve(std::span<const double> signal, const RealFir& fir) {
    if (signal.empty()) throw std::invalid_argument("convolve: empty signal");
    const int n = static_cast<int>(signal.size());
    const int lt = fir.length();
    std::vector<double> y(signal.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        const int lmax = std::min(lt - 1, i);
        for (int l = 0; l <= lmax; ++l) acc += fir.taps[static_cast<std::size_t>(l)] * signal[static_cast<std::size_t>(i - l)];
        y[static_cast<std::size_t>(i)] = acc;
    }
    return y;
}

inline std::vector<std::complex<double>> convolve(std::span<const std::complex<double>> signal,
                                                  std::span<const std::complex<double>> taps) {
    if (signal.empty()) throw std::invalid_argument("convolve: empty signal");
    if (taps.empty()) throw std::invalid_argument("convolve: empty tap list");
    const int n = static_cast<int>(signal.size());
    const int lt = static_cast<int>(taps.size());
    std::vector<std::complex<double>> y(signal.size());
    for (int i = 0; i < n; ++i) {
        std::complex<double> acc = 0.0;
        const int lmax = std::min(lt - 1, i);
        for (int l = 0; l <= lmax; ++l) acc += taps[static_cast<std::size_t>(l)] * signal[static_cast<std::size_t>(i - l)];
        y[static_cast<std::size_t>(i)] = acc;
    }
    return y;
}

// Full linear convolution of two tap sets (length la+lb-1), for composing
// cascaded responses.
inline std::vector<double> convolve_full(std::span<const double> a, std::span<const double> b) {
    std::vector<double> y(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) y[i + j] += a[i] * b[j];
    return y;
}

// Integer part of the group delay a Lagrange interpolator of this order
// carries on top of the requested fractional delay.
inline int lagrange_center(int order) { return (order - 1) / 2; }

// Lagrange fractional-delay interpolator. The returned filter realizes a
// delay of lagrange_center(order) + delay samples; coefficients sum to 1.
inline RealFir design_fractional_delay(double delay, int order) {
    if (!(std::abs(delay) < 1.0))
        throw std::invalid_argument("design_fractional_delay: |delay| must be < 1 sample");
    if (order != 1 && order != 3 && order != 5 && order != 7)
        throw std::invalid_argument("design_fractional_delay: order must be one of {1,3,5,7}");
    const int n = order + 1;
    const double t = lagrange_center(order) + delay;
    std::vector<double> taps(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        double c = 1.0;
        for (int i = 0; i < n; ++i)
            if (i != j) c *= (t - i) / static_cast<double>(j - i);
        taps[static_cast<std::size_t>(j)] = c;
    }
    return RealFir(std::move(taps));
}

// First-order lowpass h(t) = 2*pi*B*exp(-2*pi*B*t)*u(t) sampled at the given
// rate (impulse invariance, scaled by Ts), truncated to n_taps and
// renormalized to unit DC gain.
inline RealFir sample_first_order_lowpass(double bandwidth_3db, double sample_rate, int n_taps) {
    if (!(bandwidth_3db > 0.0 && bandwidth_3db < sample_rate / 2.0))
        throw std::invalid_argument("sample_first_order_lowpass: bandwidth out of (0, fs/2)");
    if (n_taps < 1) throw std::invalid_argument("sample_first_order_lowpass: n_taps must be >= 1");
    const double ts = 1.0 / sample_rate;
    const double a = 2.0 * std::numbers::pi * bandwidth_3db;
    std::vector<double> taps(static_cast<std::size_t>(n_taps));
    double dc = 0.0;
    for (int n = 0; n < n_taps; ++n) {
        taps[static_cast<std::size_t>(n)] = ts * a * std::exp(-a * n * ts);
        dc += taps[static_cast<std::size_t>(n)];
    }
    for (auto& v : taps) v /= dc;
    return RealFir(std::move(taps));
}

// ---------------------------------------------------------------------------
// FFT and spectra

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline void fft_inplace(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (!is_power_of_two(n)) throw std::invalid_argument("fft_inplace: size must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

// Periodic 4-term Blackman-Harris window (-92 dB sidelobes). A coherent
// bin-centered tone occupies exactly the fundamental bin +/- 3 bins.
inline std::vector<double> blackman_harris(int n) {
    constexpr double a0 = 0.35875, a1 = 0.48829, a2 = 0.14128, a3 = 0.01168;
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double x = 2.0 * std::numbers::pi * i / static_cast<double>(n);
        w[static_cast<std::size_t>(i)] = a0 - a1 * std::cos(x) + a2 * std::cos(2.0 * x) - a3 * std::cos(3.0 * x);
    }
    return w;
}

// Width (in bins, one side) of the windowed mainlobe of a coherent tone.
inline constexpr int kWindowLeakBins = 3;

struct Spectrum {
    std::vector<double> bin_magnitudes_dbfs; // single sided, bins 0..n_fft/2
    std::vector<double> bin_freqs;           // Hz
    int n_fft = 0;
    double full_scale = 1.0;

    int bins() const { return static_cast<int>(bin_magnitudes_dbfs.size()); }
};

// Windowed single-sided magnitude spectrum in dBFS (0 dBFS = full-scale sine
// amplitude), with coherent-gain correction for the window.
inline Spectrum spectrum_dbfs(std::span<const double> signal, int n_fft, double full_scale,
                              double sample_rate = 1.0) {
    if (!(full_scale > 0.0)) throw std::invalid_argument("spectrum_dbfs: full_scale must be > 0");
    if (!is_power_of_two(static_cast<std::size_t>(n_fft)))
        throw std::invalid_argument("spectrum_dbfs: n_fft must be a power of two");
    if (static_cast<int>(signal.size()) < n_fft)
        throw std::invalid_argument("spectrum_dbfs: insufficient samples");

    const std::vector<double> w = blackman_harris(n_fft);
    const double cg = std::accumulate(w.begin(), w.end(), 0.0); // coherent gain * n
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(n_fft));
    for (int i = 0; i < n_fft; ++i)
        buf[static_cast<std::size_t>(i)] = signal[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)];
    fft_inplace(buf);

    const int nbins = n_fft / 2 + 1;
    Spectrum sp;
    sp.n_fft = n_fft;
    sp.full_scale = full_scale;
    sp.bin_magnitudes_dbfs.resize(static_cast<std::size_t>(nbins));
    sp.bin_freqs.resize(static_cast<std::size_t>(nbins));
    constexpr double floor_db = -300.0;
    for (int k = 0; k < nbins; ++k) {
        const double one_sided = (k == 0 || k == n_fft / 2) ? 1.0 : 2.0;
        const double amp = one_sided * std::abs(buf[static_cast<std::size_t>(k)]) / cg;
        const double rel = amp / full_scale;
        sp.bin_magnitudes_dbfs[static_cast<std::size_t>(k)] =
            rel > 0.0 ? std::max(floor_db, 20.0 * std::log10(rel)) : floor_db;
        sp.bin_freqs[static_cast<std::size_t>(k)] = sample_rate * k / static_cast<double>(n_fft);
    }
    return sp;
}

// ---------------------------------------------------------------------------
// Quantizer

inline double quantize_sample(double x, int n_bits, double full_scale) {
    const double lsb = 2.0 * full_scale / static_cast<double>(1ll << n_bits);
    const double top = full_scale - 0.5 * lsb;
    double q = (std::floor(x / lsb) + 0.5) * lsb;
    return std::clamp(q, -top, top);
}

// Midrise uniform quantizer with saturating clip at +/- full_scale.
inline std::vector<double> quantize_uniform(std::span<const double> signal, int n_bits,
                                            double full_scale) {
    if (n_bits < 2 || n_bits > 16)
        throw std::invalid_argument("quantize_uniform: n_bits must be in [2, 16]");
    if (!(full_scale > 0.0)) throw std::invalid_argument("quantize_uniform: full_scale must be > 0");
    std::vector<double> y(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) y[i] = quantize_sample(signal[i], n_bits, full_scale);
    return y;
}

// Coherent test tone centred on an FFT bin: sin(2*pi*bin*n/n_fft + phase).
inline std::vector<double> synth_coherent_sine(int n_samples, int bin, int n_fft, double amplitude,
                                               double phase = 0.0) {
    std::vector<double> x(static_cast<std::size_t>(n_samples));
    const double w = 2.0 * std::numbers::pi * bin / static_cast<double>(n_fft);
    for (int i = 0; i < n_samples; ++i) x[static_cast<std::size_t>(i)] = amplitude * std::sin(w * i + phase);
    return x;
}

} // namespace ebpcal
