// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ebpcal/ebp.hpp"
#include "ebpcal/oracle.hpp"
#include "ebpcal/rx_dsp.hpp"

using namespace ebpcal;

namespace {

std::array<std::vector<double>, 4> random_lanes(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::array<std::vector<double>, 4> x;
    for (auto& lane : x) {
        lane.resize(static_cast<std::size_t>(n));
        for (auto& v : lane) v = rng.normal();
    }
    return x;
}

} // namespace

TEST_CASE("ffe_forward: identity taps pass the even samples through") {
    auto x = random_lanes(128, 1);
    auto fir = MimoFir::identity(1, 0);
    auto u = ffe_forward(x, fir);
    for (int j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < u[static_cast<std::size_t>(j)].size(); ++k)
            CHECK(u[static_cast<std::size_t>(j)][k] == x[static_cast<std::size_t>(j)][2 * k]);
}

TEST_CASE("ffe_forward: lane permutation taps swap the outputs") {
    auto x = random_lanes(128, 2);
    MimoFir fir = MimoFir::identity(1, 0);
    // swap lanes 0 and 2
    fir.at(0, 0, 0) = 0;
    fir.at(2, 2, 0) = 0;
    fir.at(0, 2, 0) = 1;
    fir.at(2, 0, 0) = 1;
    auto u = ffe_forward(x, fir);
    for (std::size_t k = 0; k < u[0].size(); ++k) {
        CHECK(u[0][k] == x[2][2 * k]);
        CHECK(u[2][k] == x[0][2 * k]);
        CHECK(u[1][k] == x[1][2 * k]);
    }
}

TEST_CASE("ffe_forward: matches the literal quadruple sum") {
    auto x = random_lanes(256, 3);
    Rng rng(4);
    MimoFir fir = MimoFir::identity(9, 4);
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i)
            for (int l = 0; l < 9; ++l) fir.at(j, i, l) += rng.normal(0.3);
    auto u = ffe_forward(x, fir);
    auto ref = direct_ffe_forward(x, fir);
    for (int j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < u[static_cast<std::size_t>(j)].size(); ++k)
            CHECK(u[static_cast<std::size_t>(j)][k] == doctest::Approx(ref[static_cast<std::size_t>(j)][k]).epsilon(1e-13));
}

TEST_CASE("ffe_forward: shifting the input by two samples shifts the output by one symbol") {
    auto x = random_lanes(300, 5);
    std::array<std::vector<double>, 4> xs;
    for (int i = 0; i < 4; ++i) {
        xs[static_cast<std::size_t>(i)].assign(302, 0.0);
        for (std::size_t n = 0; n < 300; ++n) xs[static_cast<std::size_t>(i)][n + 2] = x[static_cast<std::size_t>(i)][n];
    }
    Rng rng(6);
    MimoFir fir = MimoFir::identity(7, 3);
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i)
            for (int l = 0; l < 7; ++l) fir.at(j, i, l) += rng.normal(0.2);
    auto u = ffe_forward(x, fir);
    auto us = ffe_forward(xs, fir);
    for (int j = 0; j < 4; ++j)
        for (std::size_t k = 8; k + 1 < u[static_cast<std::size_t>(j)].size(); ++k)
            CHECK(us[static_cast<std::size_t>(j)][k + 1] == doctest::Approx(u[static_cast<std::size_t>(j)][k]).epsilon(1e-12));
}

TEST_CASE("slicer: on-grid input has zero error") {
    PamSlicer s(Modulation::qam64);
    for (int i = 0; i < 8; ++i) {
        const double u = s.level(i);
        auto rec = slice({u, u, u, u}, s);
        for (int j = 0; j < 4; ++j) {
            CHECK(rec.level_index[static_cast<std::size_t>(j)] == i);
            CHECK(rec.e[static_cast<std::size_t>(j)] == 0.0);
        }
    }
}

TEST_CASE("slicer: midpoint breaks toward the lower level") {
    PamSlicer s(Modulation::qam64);
    const double mid = 0.5 * (s.level(2) + s.level(3));
    CHECK(s.slice_index(mid) == 2);
    CHECK(std::abs(mid - s.level(2)) == doctest::Approx(s.d));
}

TEST_CASE("slicer: saturation clamps to the outer level") {
    PamSlicer s(Modulation::qam64);
    CHECK(s.slice_index(100.0) == 7);
    CHECK(s.slice_index(-100.0) == 0);
}

TEST_CASE("total_squared_error") {
    CHECK(total_squared_error({0, 0, 0, 0}) == 0.0);
    CHECK(total_squared_error({1, 0, 0, 0}) == 1.0);
    Rng rng(7);
    std::array<double, 4> e{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    double ref = 0;
    for (double v : e) ref += v * v;
    CHECK(total_squared_error(e) == doctest::Approx(ref));
}

TEST_CASE("ffe_adapt: zero error and zero step are no-ops") {
    std::array<Tape<double>, 4> x;
    Rng rng(8);
    for (auto& t : x) {
        std::vector<double> v(64);
        for (auto& s : v) s = rng.normal();
        t.append(v);
    }
    MimoFir fir = MimoFir::identity(5, 2);
    MimoFir before = fir;
    ffe_adapt(fir, x, 10, {0, 0, 0, 0}, 1e-2);
    CHECK(fir.w == before.w);
    ffe_adapt(fir, x, 10, {1, 1, 1, 1}, 0.0);
    CHECK(fir.w == before.w);
}

TEST_CASE("ffe_adapt: converged MSE below -25 dB for 64-QAM at Es/N0 = 26.5 dB") {
    ScenarioConfig sc;
    sc.modulation = 64;
    sc.symbols = 60000;
    sc.genie_symbols = 60000; // genie-aided throughout
    sc.target_ber = 1e-3;
    sc.es_n0_db = 26.5;
    sc.m = 1;
    sc.adc_bits = 14;
    sc.channel = "identity";
    sc.measure_fraction = 0.25;
    sc.imp_mode = ImpMode::none;
    sc.validate();
    RunResult r = run_calibration(sc);
    CHECK_FALSE(r.diverged);
    CHECK(r.final_mse_db < -25.0);
}

TEST_CASE("decision-directed matches genie-aided when the symbol error rate is low") {
    ScenarioConfig sc;
    sc.modulation = 64;
    sc.symbols = 120000;
    sc.genie_symbols = 20000;
    sc.target_ber = 1e-3;
    sc.m = 1;
    sc.adc_bits = 14;
    sc.channel = "rotate:15";
    sc.measure_fraction = 0.25;
    sc.imp_mode = ImpMode::none;
    sc.validate();
    RunResult dd = run_calibration(sc);
    ScenarioConfig sg = sc;
    sg.genie_symbols = sc.symbols; // genie throughout
    RunResult genie = run_calibration(sg);
    CHECK_FALSE(dd.diverged);
    CHECK(std::abs(dd.final_mse_db - genie.final_mse_db) < 0.5);
}
