// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>

#include "ebpcal/dsp.hpp"
#include "ebpcal/metrics.hpp"
#include "ebpcal/rng.hpp"

using namespace ebpcal;

TEST_CASE("convolve: identity and pure delay") {
    std::vector<double> x{1, 0, 0};
    auto y = convolve(x, RealFir({1.0}));
    CHECK(y == std::vector<double>{1, 0, 0});

    std::vector<double> x2{1, 0, 0, 0};
    auto y2 = convolve(x2, RealFir({0.0, 1.0}));
    CHECK(y2 == std::vector<double>{0, 1, 0, 0});
}

TEST_CASE("convolve: matches direct O(NL) sum on random input") {
    Rng rng(11);
    std::vector<double> x(97), h(5);
    for (auto& v : x) v = rng.normal();
    for (auto& v : h) v = rng.normal();
    auto y = convolve(x, RealFir(h));
    for (std::size_t n = 0; n < x.size(); ++n) {
        double acc = 0;
        for (std::size_t l = 0; l < h.size(); ++l)
            if (n >= l) acc += h[l] * x[n - l];
        CHECK(y[n] == doctest::Approx(acc).epsilon(1e-14));
    }
}

TEST_CASE("convolve: linearity to machine precision") {
    Rng rng(12);
    std::vector<double> x(64), y(64), h(7);
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = rng.normal();
    for (auto& v : h) v = rng.normal();
    const double a = 1.7, b = -0.3;
    std::vector<double> mix(64);
    for (int i = 0; i < 64; ++i) mix[i] = a * x[i] + b * y[i];
    auto lhs = convolve(mix, RealFir(h));
    auto cx = convolve(x, RealFir(h));
    auto cy = convolve(y, RealFir(h));
    for (int i = 0; i < 64; ++i)
        CHECK(lhs[i] == doctest::Approx(a * cx[i] + b * cy[i]).epsilon(1e-12));
}

TEST_CASE("convolve: rejects empty inputs") {
    CHECK_THROWS_AS((void)RealFir(std::vector<double>{}), std::invalid_argument);
    std::vector<double> empty;
    CHECK_THROWS_AS((void)convolve(empty, RealFir({1.0})), std::invalid_argument);
}

TEST_CASE("fractional delay: zero delay is the unit impulse for all orders") {
    for (int order : {1, 3, 5, 7}) {
        auto fir = design_fractional_delay(0.0, order);
        for (int j = 0; j < fir.length(); ++j) {
            const double expect = (j == lagrange_center(order)) ? 1.0 : 0.0;
            CHECK(fir.taps[static_cast<std::size_t>(j)] == doctest::Approx(expect).epsilon(1e-15));
        }
    }
}

TEST_CASE("fractional delay: linear midpoint") {
    auto fir = design_fractional_delay(0.5, 1);
    REQUIRE(fir.length() == 2);
    CHECK(fir.taps[0] == doctest::Approx(0.5));
    CHECK(fir.taps[1] == doctest::Approx(0.5));
}

TEST_CASE("fractional delay: coefficients sum to 1") {
    Rng rng(5);
    for (int order : {1, 3, 5, 7})
        for (int it = 0; it < 8; ++it) {
            auto fir = design_fractional_delay(rng.uniform(-0.99, 0.99), order);
            double s = 0;
            for (double v : fir.taps) s += v;
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
}

TEST_CASE("fractional delay: sinusoid phase shift matches the analytic value") {
    const double f = 0.05; // cycles per sample
    const double d = 0.25;
    auto fir = design_fractional_delay(d, 3);
    const int n = 4000;
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = std::sin(2 * std::numbers::pi * f * i);
    auto y = convolve(x, fir);
    // project the steady-state tail on sin/cos to estimate the phase
    double si = 0, sq = 0;
    for (int i = 100; i < n; ++i) {
        si += y[i] * std::sin(2 * std::numbers::pi * f * i);
        sq += y[i] * std::cos(2 * std::numbers::pi * f * i);
    }
    const double phase = std::atan2(sq, si); // negative of the delay phase
    const double expect = -2 * std::numbers::pi * f * (lagrange_center(3) + d);
    CHECK(phase == doctest::Approx(expect).epsilon(0).scale(1).epsilon(1e-3));
    CHECK(std::abs(phase - expect) < 1e-3);
}

TEST_CASE("fractional delay: rejects out-of-range inputs") {
    CHECK_THROWS_AS((void)design_fractional_delay(1.0, 3), std::invalid_argument);
    CHECK_THROWS_AS((void)design_fractional_delay(0.2, 2), std::invalid_argument);
}

TEST_CASE("first-order lowpass: unit DC gain, near-allpass single tap") {
    auto one = sample_first_order_lowpass(0.99e9 / 2.0001, 1e9, 1);
    REQUIRE(one.length() == 1);
    CHECK(one.taps[0] == doctest::Approx(1.0));

    auto fir = sample_first_order_lowpass(53e9, 192e9, 16);
    double dc = 0;
    for (double v : fir.taps) dc += v;
    CHECK(dc == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("first-order lowpass: sampled decay rate tracks the bandwidth") {
    // The impulse-invariant taps decay as exp(-2*pi*B*Ts); a 7.5% bandwidth
    // offset shifts the log-decay rate by exactly 7.5%.
    const double fs = 192e9, b0 = 53e9;
    auto h0 = sample_first_order_lowpass(b0, fs, 16);
    auto h1 = sample_first_order_lowpass(b0 * 1.075, fs, 16);
    const double r0 = std::log(h0.taps[1] / h0.taps[2]);
    const double r1 = std::log(h1.taps[1] / h1.taps[2]);
    CHECK(r1 / r0 == doctest::Approx(1.075).epsilon(0.005));
    // sanity: the decay rate itself equals 2*pi*B/fs
    CHECK(r0 == doctest::Approx(2 * std::numbers::pi * b0 / fs).epsilon(1e-9));
}

TEST_CASE("first-order lowpass: DTFT magnitude matches the closed form") {
    const double fs = 192e9, b = 53e9;
    auto fir = sample_first_order_lowpass(b, fs, 24);
    // closed form of the normalized geometric series (truncation negligible)
    const double a = std::exp(-2 * std::numbers::pi * b / fs);
    for (double f : {10e9, 30e9, 53e9, 80e9}) {
        const double th = 2 * std::numbers::pi * f / fs;
        std::complex<double> num(1.0, 0.0), den(1.0 - a * std::cos(th), a * std::sin(th));
        const double expect = (1.0 - a) / std::abs(den);
        std::complex<double> acc = 0;
        for (int n = 0; n < fir.length(); ++n)
            acc += fir.taps[static_cast<std::size_t>(n)] * std::exp(std::complex<double>(0, -th * n));
        CHECK(std::abs(acc) == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("spectrum: full-scale coherent sine reads 0 dBFS") {
    const int nfft = 8192;
    auto x = synth_coherent_sine(nfft, 511, nfft, 1.0);
    auto sp = spectrum_dbfs(x, nfft, 1.0);
    CHECK(sp.bin_magnitudes_dbfs[511] == doctest::Approx(0.0).epsilon(0).scale(1).epsilon(0.1));
    CHECK(std::abs(sp.bin_magnitudes_dbfs[511]) < 0.1);
}

TEST_CASE("spectrum: zero signal sits at the numerical floor") {
    std::vector<double> x(8192, 0.0);
    auto sp = spectrum_dbfs(x, 8192, 1.0);
    for (double v : sp.bin_magnitudes_dbfs) CHECK(v <= -200.0);
}

TEST_CASE("spectrum: -40 dBc spur reads -40 dBFS") {
    const int nfft = 8192;
    auto x = synth_coherent_sine(nfft, 511, nfft, 1.0);
    auto spur = synth_coherent_sine(nfft, 1999, nfft, 0.01);
    for (int i = 0; i < nfft; ++i) x[static_cast<std::size_t>(i)] += spur[static_cast<std::size_t>(i)];
    auto sp = spectrum_dbfs(x, nfft, 1.0);
    CHECK(std::abs(sp.bin_magnitudes_dbfs[1999] - (-40.0)) < 0.2);
}

TEST_CASE("spectrum: input validation") {
    std::vector<double> x(100, 0.0);
    CHECK_THROWS_AS((void)spectrum_dbfs(x, 8192, 1.0), std::invalid_argument);
    CHECK_THROWS_AS((void)spectrum_dbfs(x, 100, 1.0), std::invalid_argument); // not a power of two
}

TEST_CASE("quantizer: zero maps to the nearest half-LSB level") {
    const double fs = 1.0;
    const double lsb = 2.0 / 256;
    std::vector<double> x{0.0};
    auto y = quantize_uniform(x, 8, fs);
    CHECK(y[0] == doctest::Approx(lsb / 2).epsilon(1e-12));
}

TEST_CASE("quantizer: saturating clip") {
    const double fs = 1.0;
    const double lsb = 2.0 / 256;
    std::vector<double> x{2.0, -3.5};
    auto y = quantize_uniform(x, 8, fs);
    CHECK(y[0] == doctest::Approx(fs - lsb / 2));
    CHECK(y[1] == doctest::Approx(-(fs - lsb / 2)));
}

TEST_CASE("quantizer: idempotent") {
    Rng rng(3);
    std::vector<double> x(4096);
    for (auto& v : x) v = rng.normal(0.7);
    for (double fs : {1.0, 2.25}) {
        auto y = quantize_uniform(x, 8, fs);
        auto z = quantize_uniform(y, 8, fs);
        CHECK(y == z);
    }
}

TEST_CASE("quantizer: 8-bit full-scale sine SNDR matches the 6.02N+1.76 rule") {
    const int nfft = 8192;
    auto x = synth_coherent_sine(nfft, 511, nfft, 1.0);
    auto y = quantize_uniform(x, 8, 1.0);
    auto rep = sndr_sfdr(y, nfft, 1.0, 511);
    CHECK(std::abs(rep.sndr_db - 49.9) < 0.5);
    CHECK(std::abs(rep.enob_bits - (rep.sndr_db - 1.76) / 6.02) < 1e-12);
}
