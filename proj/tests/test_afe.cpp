// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "ebpcal/afe.hpp"
#include "ebpcal/metrics.hpp"

using namespace ebpcal;

namespace {

AfeConfig desk_afe(bool quantize = true) {
    AfeConfig a;
    a.sample_rate_hz = 192e9;
    a.nominal_bw_hz = 52.8e9;
    a.bits = 8;
    a.full_scale = 2.0;
    a.quantize = quantize;
    return a;
}

} // namespace

TEST_CASE("build: mismatch-free interleaves are identical and equal the nominal response") {
    auto imp = ImpairmentSet::zero(4);
    auto model = build_tiadc_model(imp, 0, desk_afe());
    for (int m = 1; m < 4; ++m) CHECK(model.h[static_cast<std::size_t>(m)].taps == model.h[0].taps);
    auto single = build_tiadc_model(ImpairmentSet::zero(1), 0, desk_afe());
    CHECK(model.h[0].taps == single.h[0].taps);
}

TEST_CASE("build: gain error scales the interleave response norm") {
    auto imp = ImpairmentSet::zero(4);
    imp.gain_err[0][2] = 0.15;
    auto model = build_tiadc_model(imp, 0, desk_afe());
    auto norm = [](const RealFir& f) {
        double s = 0;
        for (double v : f.taps) s += v * v;
        return std::sqrt(s);
    };
    CHECK(norm(model.h[2]) == doctest::Approx(1.15 * norm(model.h[0])).epsilon(1e-12));
}

TEST_CASE("build: sampling-phase error shifts the group delay by the requested fraction") {
    auto imp = ImpairmentSet::zero(2);
    imp.phase_err_t[0][1] = 0.075;
    auto model = build_tiadc_model(imp, 0, desk_afe());
    // group delay from the DTFT phase slope over the occupied band
    auto group_delay = [](const RealFir& f, double w) {
        std::complex<double> h0 = 0, h1 = 0;
        const double dw = 1e-4;
        for (int n = 0; n < f.length(); ++n) {
            h0 += f.taps[static_cast<std::size_t>(n)] * std::exp(std::complex<double>(0, -(w - dw) * n));
            h1 += f.taps[static_cast<std::size_t>(n)] * std::exp(std::complex<double>(0, -(w + dw) * n));
        }
        return -(std::arg(h1 / h0)) / (2 * dw);
    };
    const double w = 2 * std::numbers::pi * 0.1;
    const double shift_samples = group_delay(model.h[1], w) - group_delay(model.h[0], w);
    CHECK(shift_samples / 2.0 == doctest::Approx(0.075).epsilon(0).scale(1).epsilon(1e-2));
    CHECK(std::abs(shift_samples / 2.0 - 0.075) < 0.005);
}

TEST_CASE("digitize: M=1 without offsets equals plain convolution plus quantization") {
    auto imp = ImpairmentSet::zero(1);
    auto model = build_tiadc_model(imp, 0, desk_afe());
    Rng rng(1);
    std::vector<double> x(512);
    for (auto& v : x) v = rng.normal(0.4);
    auto y = digitize(x, model);
    auto ref = quantize_uniform(convolve(x, model.h[0]), model.bits, model.full_scale);
    CHECK(y == ref);
}

TEST_CASE("digitize: constant offsets shift the DC by the injected fraction") {
    auto imp = ImpairmentSet::zero(4);
    for (int m = 0; m < 4; ++m) imp.dc_off_fs[0][static_cast<std::size_t>(m)] = 0.025;
    auto cfg = desk_afe(false);
    auto model = build_tiadc_model(imp, 0, cfg);
    std::vector<double> x(2048, 0.0);
    auto y = digitize(x, model);
    double mean = 0;
    for (std::size_t i = 100; i < y.size(); ++i) mean += y[i];
    mean /= static_cast<double>(y.size() - 100);
    CHECK(mean == doctest::Approx(0.025 * cfg.full_scale).epsilon(1e-9));
}

TEST_CASE("digitize: phase mismatch produces image spurs, equal phases do not") {
    auto cfg = desk_afe();
    const int nfft = 8192;
    auto tone = synth_coherent_sine(nfft + 512, 1229, nfft, 0.9 * cfg.full_scale);

    auto imp = ImpairmentSet::zero(4);
    imp.phase_err_t[0] = {0.04, -0.03, 0.02, -0.04};
    auto model = build_tiadc_model(imp, 0, cfg);
    auto y = digitize(tone, model);
    std::vector<double> tail(y.end() - nfft, y.end());
    auto rep = sndr_sfdr(tail, nfft, cfg.full_scale, 1229);
    // images of bin 1229 under an M=4 pattern: |k*2048 +- 1229|
    std::set<int> expect{819, 2867, 3277};
    REQUIRE(rep.spurs.size() >= 3);
    for (int i = 0; i < 3; ++i) CHECK(expect.count(rep.spurs[static_cast<std::size_t>(i)].bin) == 1);

    auto same = ImpairmentSet::zero(4);
    for (int m = 0; m < 4; ++m) same.phase_err_t[0][static_cast<std::size_t>(m)] = 0.04;
    auto model2 = build_tiadc_model(same, 0, cfg);
    auto y2 = digitize(tone, model2);
    std::vector<double> tail2(y2.end() - nfft, y2.end());
    auto rep2 = sndr_sfdr(tail2, nfft, cfg.full_scale, 1229);
    CHECK(rep2.sfdr_db > rep.sfdr_db + 15.0); // no interleave spurs left, floor-limited
}

TEST_CASE("digitize: M-periodicity of the time-varying filter") {
    auto imp = ImpairmentSet::zero(4);
    imp.phase_err_t[0] = {0.05, -0.02, 0.01, -0.06};
    imp.gain_err[0] = {0.1, -0.1, 0.05, 0.0};
    auto cfg = desk_afe(false);
    auto model = build_tiadc_model(imp, 0, cfg);
    Rng rng(7);
    std::vector<double> x(600);
    for (auto& v : x) v = rng.normal(0.4);
    // input shifted by M samples -> output shifted by M samples
    std::vector<double> xs(x.size() + 4, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) xs[i + 4] = x[i];
    auto y = digitize(x, model);
    auto ys = digitize(xs, model);
    for (std::size_t n = 64; n < y.size(); ++n) CHECK(ys[n + 4] == doctest::Approx(y[n]).epsilon(1e-12));
}

TEST_CASE("digitize: mismatch-free output is independent of n mod M") {
    auto cfg = desk_afe();
    cfg.bits = 14;
    auto model4 = build_tiadc_model(ImpairmentSet::zero(4), 0, cfg);
    auto model1 = build_tiadc_model(ImpairmentSet::zero(1), 0, cfg);
    Rng rng(9);
    std::vector<double> x(1024);
    for (auto& v : x) v = rng.normal(0.4);
    auto y4 = digitize(x, model4);
    auto y1 = digitize(x, model1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y4[i] - y1[i]) < 1e-9 * cfg.full_scale);
}

TEST_CASE("hierarchical rank-1 phase errors restrict spurs to multiples of fs/M1") {
    auto cfg = desk_afe();
    auto imp = ImpairmentSet::zero(8, 4, 2);
    // phases attach to the 4 rank-1 switches
    const double sw[4] = {0.04, -0.02, 0.03, -0.045};
    for (int m = 0; m < 8; ++m) imp.phase_err_t[0][static_cast<std::size_t>(m)] = sw[m % 4];
    auto model = build_tiadc_model(imp, 0, cfg);
    const int nfft = 8192;
    auto tone = synth_coherent_sine(nfft + 512, 1229, nfft, 0.9 * cfg.full_scale);
    auto y = digitize(tone, model);
    std::vector<double> tail(y.end() - nfft, y.end());
    auto rep = sndr_sfdr(tail, nfft, cfg.full_scale, 1229);
    // all dominant spurs at |k*nfft/4 +- fund|, none at odd multiples of nfft/8
    std::set<int> allowed{819, 2867, 3277};
    for (std::size_t i = 0; i < 3 && i < rep.spurs.size(); ++i)
        CHECK(allowed.count(rep.spurs[i].bin) == 1);
}

TEST_CASE("sample_impairments: bounds respected and uniform by KS test") {
    ImpairmentBounds b;
    b.phase_err_t = 0.075;
    b.gain_err = 0.15;
    // zero-width bounds give the mismatch-free set
    ImpairmentBounds zero;
    auto clean = sample_impairments(zero, 52.8e9, 4, 123);
    for (int lane = 0; lane < 4; ++lane)
        for (int m = 0; m < 4; ++m) CHECK(clean.phase_err_t[static_cast<std::size_t>(lane)][static_cast<std::size_t>(m)] == 0.0);

    double lo = 1e9, hi = -1e9;
    std::vector<double> draws;
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        auto s = sample_impairments(b, 52.8e9, 4, seed);
        for (int lane = 0; lane < 4; ++lane)
            for (int m = 0; m < 4; ++m) {
                const double v = s.phase_err_t[static_cast<std::size_t>(lane)][static_cast<std::size_t>(m)];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
                if (draws.size() < 10000) draws.push_back(v);
            }
    }
    CHECK(lo >= -0.075);
    CHECK(hi <= 0.075);
    // KS statistic against U(-0.075, 0.075), 1% critical value 1.63/sqrt(n)
    std::sort(draws.begin(), draws.end());
    double ks = 0;
    const double n = static_cast<double>(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i) {
        const double cdf = (draws[i] + 0.075) / 0.15;
        ks = std::max(ks, std::abs(cdf - (static_cast<double>(i) + 1.0) / n));
        ks = std::max(ks, std::abs(cdf - static_cast<double>(i) / n));
    }
    CHECK(ks < 1.63 / std::sqrt(n));
}

TEST_CASE("impairments: serialization round trip") {
    ImpairmentBounds b;
    b.phase_err_t = 0.05;
    b.gain_err = 0.1;
    b.dc_off_fs = 0.02;
    b.bw_off_frac = 0.075;
    b.iq_skew_t = 0.06;
    auto s = sample_impairments(b, 52.8e9, 8, 77, 4, 2);
    std::stringstream ss;
    save_impairments(s, ss);
    auto r = load_impairments(ss);
    CHECK(r.m == s.m);
    CHECK(r.m1 == s.m1);
    CHECK(r.gain_err == s.gain_err);
    CHECK(r.phase_err_t == s.phase_err_t);
    CHECK(r.bw_off_hz == s.bw_off_hz);
    CHECK(r.dc_off_fs == s.dc_off_fs);
    CHECK(r.iq_skew_h_t == s.iq_skew_h_t);
}

TEST_CASE("impairments: invariant violations rejected") {
    auto s = ImpairmentSet::zero(4);
    s.phase_err_t[0][1] = 0.6;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    auto g = ImpairmentSet::zero(4);
    g.gain_err[2][3] = -1.5;
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
    CHECK_THROWS_AS((void)ImpairmentSet::zero(8, 3, 2), std::invalid_argument);
}

TEST_CASE("jitter: white sampling-time noise raises the floor of a clean capture") {
    auto cfg = desk_afe();
    cfg.bits = 12;
    auto quiet = build_tiadc_model(ImpairmentSet::zero(4), 0, cfg);
    cfg.jitter_rms_s = 2e-12;
    auto noisy = build_tiadc_model(ImpairmentSet::zero(4), 0, cfg);
    const int nfft = 8192;
    auto tone = synth_coherent_sine(nfft + 512, 1229, nfft, 0.9 * cfg.full_scale);
    auto yq = digitize(tone, quiet, 5);
    auto yn = digitize(tone, noisy, 5);
    std::vector<double> tq(yq.end() - nfft, yq.end()), tn(yn.end() - nfft, yn.end());
    auto rq = sndr_sfdr(tq, nfft, cfg.full_scale, 1229);
    auto rn = sndr_sfdr(tn, nfft, cfg.full_scale, 1229);
    CHECK(rn.sndr_db < rq.sndr_db - 3.0);
}
