// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ebpcal/harness.hpp"
#include "ebpcal/oracle.hpp"

using namespace ebpcal;

namespace {

ChainSnapshot random_snapshot(std::uint64_t seed, int m = 4, int lg = 3, int lt = 5, int symbols = 64) {
    Rng rng(seed);
    std::array<std::vector<double>, 4> w;
    for (auto& lane : w) {
        lane.resize(static_cast<std::size_t>(2 * symbols));
        for (auto& v : lane) v = rng.normal(0.6);
    }
    CeState ce = CeState::identity(m, lg, PinConstraint{0, 0, (lg - 1) / 2}, false);
    for (int lane = 0; lane < 4; ++lane)
        for (int s = 0; s < m; ++s)
            for (int l = 0; l < lg; ++l) ce.fir[static_cast<std::size_t>(lane)].at(s, l) += rng.normal(0.2);
    MimoFir gamma = MimoFir::identity(lt, (lt - 1) / 2);
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i)
            for (int l = 0; l < lt; ++l) gamma.at(j, i, l) += rng.normal(0.25);
    return make_snapshot(w, ce, gamma, Modulation::qam64);
}

} // namespace

TEST_CASE("fd_gradient: zero-error configuration reports zero within the cancellation floor") {
    // identity CE, spike Gamma, on-grid inputs: errors are exactly zero
    const int lg = 3;
    CeState ce = CeState::identity(2, lg, PinConstraint{0, 0, 1}, false);
    MimoFir gamma = MimoFir::identity(1, 0);
    std::array<std::vector<double>, 4> w;
    PamSlicer s(Modulation::qam64);
    Rng rng(1);
    for (auto& lane : w) {
        lane.resize(64);
        for (std::size_t n = 0; n < lane.size(); ++n) lane[n] = s.level(static_cast<int>(rng.next_u64() % 8));
    }
    // x[n] = w[n-1] via the identity center; shift so decisions are on-grid
    auto snap = make_snapshot(w, ce, gamma, Modulation::qam64);
    for (int lane = 0; lane < 4; ++lane)
        for (int set = 0; set < 2; ++set) {
            FdStatus st;
            const double g = fd_gradient(snap, lane, set, 1, 1e-6, &st);
            CHECK(std::abs(g) < 1e-6);
        }
}

TEST_CASE("fd_gradient: self-consistent across epsilon decades and matches backprop") {
    auto snap = random_snapshot(11);
    const auto bp = mean_bp_gradient(snap);
    double worst = 0;
    for (int lane = 0; lane < 4; ++lane)
        for (int set = 0; set < 4; ++set)
            for (int l = 0; l < 3; ++l) {
                const double f5 = fd_gradient(snap, lane, set, l, 1e-5);
                const double f6 = fd_gradient(snap, lane, set, l, 1e-6);
                const double f7 = fd_gradient(snap, lane, set, l, 1e-7);
                const double b = bp[static_cast<std::size_t>(lane)][static_cast<std::size_t>(set * 3 + l)];
                worst = std::max(worst, std::abs(f6 - b));
                CHECK(std::abs(f5 - f6) < 1e-5 * std::max(1.0, std::abs(f6)));
                CHECK(std::abs(f7 - f6) < 1e-4 * std::max(1.0, std::abs(f6)));
            }
    CHECK(worst < 1e-6);
}

TEST_CASE("fd_gradient: cancellation detector flags too-small epsilon") {
    auto snap = random_snapshot(12);
    FdStatus st;
    (void)fd_gradient(snap, 0, 0, 0, 1e-15, &st);
    CHECK(st.cancellation_suspected);
}

TEST_CASE("oracle reports a nonzero gradient for the pinned set; the updater ignores it") {
    auto snap = random_snapshot(13);
    snap.ce.pin_enabled = true;
    snap.ce.pin = PinConstraint{0, 0, 1};
    const double g = fd_gradient(snap, 0, 0, 1, 1e-6);
    CHECK(std::abs(g) > 1e-9);
    CeState ce = snap.ce;
    pin_constraint(ce.fir[0], ce.pin);
    EbpAccumulators acc = EbpAccumulators::zero(4, 4, 3);
    acc.ce[0][1] = g;
    update_ce(ce, acc, 1e-2);
    CHECK(ce.fir[0].at(0, 1) == 1.0); // pinned center stays
}

TEST_CASE("direct_backprop equals the optimized implementation on 1000 random instances") {
    Rng rng(14);
    for (int inst = 0; inst < 1000; ++inst) {
        const int lt = 1 + static_cast<int>(rng.next_u64() % 8);
        const std::int64_t ks = 16 + static_cast<std::int64_t>(rng.next_u64() % 16);
        OversampledError err;
        err.k0 = static_cast<std::int64_t>(rng.next_u64() % 4);
        err.k1 = err.k0 + ks;
        for (auto& v : err.e) {
            v.resize(static_cast<std::size_t>(ks));
            for (auto& e : v) e = rng.normal();
        }
        MimoFir fir = MimoFir::identity(lt, 0);
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 4; ++i)
                for (int l = 0; l < lt; ++l) fir.at(j, i, l) = rng.normal();
        const std::int64_t n0 = 2 * err.k0 - lt;
        const std::int64_t n1 = 2 * err.k1 + 2;
        auto a = backpropagate(err, fir, n0, n1);
        auto b = direct_backprop(err, fir, n0, n1);
        for (int i = 0; i < 4; ++i)
            for (std::size_t n = 0; n < a[static_cast<std::size_t>(i)].size(); ++n)
                REQUIRE(std::abs(a[static_cast<std::size_t>(i)][n] - b[static_cast<std::size_t>(i)][n]) <=
                        1e-12 * std::max(1.0, std::abs(b[static_cast<std::size_t>(i)][n])));
    }
}

TEST_CASE("gradient_check harness: randomized instances stay below tolerance") {
    auto rep = gradient_check(10, 99);
    CHECK(rep.instances == 10);
    CHECK(rep.failures == 0);
    CHECK(rep.worst_rel_err < 1e-6);
}
