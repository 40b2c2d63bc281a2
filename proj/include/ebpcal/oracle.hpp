// SPDX-License-Identifier: Apache-2.0
//
// Independent brute-force verifiers used by tests and acceptance: central
// finite differences of the slicer error energy through the full
// CE -> FFE -> slicer chain (decisions frozen), literal nested-loop
// evaluations of the forward, backpropagation and batch-gradient formulas,
// and a polyphase reference for the periodic CE. Deliberately unoptimized.

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ebpcal/compensation.hpp"
#include "ebpcal/ebp.hpp"
#include "ebpcal/rx_dsp.hpp"

namespace ebpcal {

// Literal evaluation of the downsampled MIMO forward pass,
// u_k[j] = sum_i sum_l Gamma[j][i][l] x_i[2k-l], x zero before index 0.
inline std::array<std::vector<double>, 4> direct_ffe_forward(const std::array<std::vector<double>, 4>& x,
                                                             const MimoFir& gamma) {
    const std::int64_t ks = static_cast<std::int64_t>(x[0].size()) / 2;
    std::array<std::vector<double>, 4> u;
    for (auto& v : u) v.assign(static_cast<std::size_t>(ks), 0.0);
    for (std::int64_t k = 0; k < ks; ++k)
        for (int j = 0; j < 4; ++j) {
            double acc = 0.0;
            for (int i = 0; i < 4; ++i)
                for (int l = 0; l < gamma.lt; ++l) {
                    const std::int64_t idx = 2 * k - l;
                    if (idx >= 0 && idx < static_cast<std::int64_t>(x[static_cast<std::size_t>(i)].size()))
                        acc += gamma.at(j, i, l) * x[static_cast<std::size_t>(i)][static_cast<std::size_t>(idx)];
                }
            u[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] = acc;
        }
    return u;
}

// Literal nested-loop backpropagation,
// e_hat[i][n] = sum_j sum_l Gamma[j][i][l] e[j][n+l] for n in [n0, n1).
inline std::array<std::vector<double>, 4> direct_backprop(const OversampledError& err, const MimoFir& gamma,
                                                          std::int64_t n0, std::int64_t n1) {
    std::array<std::vector<double>, 4> ebp;
    for (auto& v : ebp) v.assign(static_cast<std::size_t>(n1 - n0), 0.0);
    for (std::int64_t n = n0; n < n1; ++n)
        for (int i = 0; i < 4; ++i) {
            double acc = 0.0;
            for (int j = 0; j < 4; ++j)
                for (int l = 0; l < gamma.lt; ++l) acc += gamma.at(j, i, l) * err.at(j, n + l);
            ebp[static_cast<std::size_t>(i)][static_cast<std::size_t>(n - n0)] = acc;
        }
    return ebp;
}

// Polyphase reference for the M-periodic CE: each output phase is an
// ordinary convolution with its own coefficient set.
inline std::vector<double> polyphase_ce_apply(std::span<const double> w, const PeriodicFir& ce) {
    std::vector<double> x(w.size(), 0.0);
    for (std::size_t n = 0; n < w.size(); ++n) {
        const int set = ce.set_index(static_cast<std::int64_t>(n));
        double acc = 0.0;
        for (int l = 0; l < ce.lg; ++l) {
            const std::int64_t idx = static_cast<std::int64_t>(n) - l;
            if (idx >= 0) acc += ce.at(set, l) * w[static_cast<std::size_t>(idx)];
        }
        x[n] = acc;
    }
    return x;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient of the mean squared slicer error

// Frozen view of the chain: a fixed CE input block (zero history), the CE and
// FFE coefficients, and the slicer decisions of the unperturbed forward pass.
// The objective covers symbols [k_min, k_max].
struct ChainSnapshot {
    std::array<std::vector<double>, 4> w;
    CeState ce;
    MimoFir gamma;
    Modulation mod = Modulation::qam64;
    std::int64_t k_min = 0, k_max = 0;
    std::array<std::vector<int>, 4> frozen_levels; // indexed k - k_min
};

namespace oracle_detail {

inline std::array<std::vector<double>, 4> forward_x(const ChainSnapshot& s, const CeState& ce) {
    std::array<std::vector<double>, 4> x;
    for (int lane = 0; lane < 4; ++lane)
        x[static_cast<std::size_t>(lane)] = polyphase_ce_apply(s.w[static_cast<std::size_t>(lane)],
                                                               ce.fir[static_cast<std::size_t>(lane)]);
    return x;
}

} // namespace oracle_detail

inline ChainSnapshot make_snapshot(const std::array<std::vector<double>, 4>& w, const CeState& ce,
                                   const MimoFir& gamma, Modulation mod) {
    ChainSnapshot s;
    s.w = w;
    s.ce = ce;
    s.gamma = gamma;
    s.mod = mod;
    const std::int64_t ks = static_cast<std::int64_t>(w[0].size()) / 2;
    s.k_min = (gamma.lt - 1 + 1) / 2; // first k with 2k-l >= 0 for all l
    s.k_max = ks - 1;
    if (s.k_min > s.k_max) throw std::invalid_argument("make_snapshot: block too short");
    const auto x = oracle_detail::forward_x(s, ce);
    const auto u = direct_ffe_forward(x, gamma);
    const PamSlicer slicer(mod);
    for (int j = 0; j < 4; ++j) {
        auto& lv = s.frozen_levels[static_cast<std::size_t>(j)];
        lv.resize(static_cast<std::size_t>(s.k_max - s.k_min + 1));
        for (std::int64_t k = s.k_min; k <= s.k_max; ++k)
            lv[static_cast<std::size_t>(k - s.k_min)] =
                slicer.slice_index(u[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)]);
    }
    return s;
}

// Mean total squared error over the snapshot's symbol range, with decisions
// frozen to the unperturbed run (slicer treated as piecewise constant).
inline double mean_error(const ChainSnapshot& s, const CeState& ce) {
    const auto x = oracle_detail::forward_x(s, ce);
    const auto u = direct_ffe_forward(x, s.gamma);
    const PamSlicer slicer(s.mod);
    double acc = 0.0;
    for (std::int64_t k = s.k_min; k <= s.k_max; ++k)
        for (int j = 0; j < 4; ++j) {
            const double a_hat = slicer.level(
                s.frozen_levels[static_cast<std::size_t>(j)][static_cast<std::size_t>(k - s.k_min)]);
            const double e = u[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] - a_hat;
            acc += e * e;
        }
    return acc / static_cast<double>(s.k_max - s.k_min + 1);
}

struct FdStatus {
    bool cancellation_suspected = false;
    double noise_estimate = 0.0;
};

// Central difference of mean_error with respect to g[lane][set][tap].
inline double fd_gradient(const ChainSnapshot& s, int lane, int set, int tap, double eps,
                          FdStatus* status = nullptr) {
    if (!(eps > 0.0)) throw std::invalid_argument("fd_gradient: eps must be > 0");
    CeState plus = s.ce;
    CeState minus = s.ce;
    plus.fir[static_cast<std::size_t>(lane)].at(set, tap) += eps;
    minus.fir[static_cast<std::size_t>(lane)].at(set, tap) -= eps;
    const double ep = mean_error(s, plus);
    const double em = mean_error(s, minus);
    const double g = (ep - em) / (2.0 * eps);
    if (status != nullptr) {
        // rounding noise of the difference relative to the result
        const double base = std::max(std::abs(ep), std::abs(em));
        status->noise_estimate = base * 1e-16 / eps;
        status->cancellation_suspected = std::abs(g) > 0.0 && status->noise_estimate > 0.1 * std::abs(g);
    }
    return g;
}

// Mean backpropagated gradient over the snapshot range, including the
// factor 2 from d(e^2)/du, so it matches fd_gradient exactly (to rounding).
inline std::array<std::vector<double>, 4> mean_bp_gradient(const ChainSnapshot& s) {
    const int m = s.ce.fir[0].m;
    const int lg = s.ce.fir[0].lg;
    const auto x = oracle_detail::forward_x(s, s.ce);
    const auto u = direct_ffe_forward(x, s.gamma);
    const PamSlicer slicer(s.mod);
    OversampledError err;
    err.k0 = s.k_min;
    err.k1 = s.k_max + 1;
    for (int j = 0; j < 4; ++j) {
        auto& ev = err.e[static_cast<std::size_t>(j)];
        ev.resize(static_cast<std::size_t>(err.k1 - err.k0));
        for (std::int64_t k = s.k_min; k <= s.k_max; ++k) {
            const double a_hat = slicer.level(
                s.frozen_levels[static_cast<std::size_t>(j)][static_cast<std::size_t>(k - s.k_min)]);
            ev[static_cast<std::size_t>(k - s.k_min)] = u[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] - a_hat;
        }
    }
    const std::int64_t n_lo = 2 * s.k_min - (s.gamma.lt - 1);
    const std::int64_t n_hi = 2 * s.k_max + 1;
    const auto ebp = backpropagate(err, s.gamma, n_lo, n_hi);
    std::array<std::vector<double>, 4> grad;
    for (auto& g : grad) g.assign(static_cast<std::size_t>(m * lg), 0.0);
    for (std::int64_t n = n_lo; n < n_hi; ++n) {
        const int mm = static_cast<int>(((n % m) + m) % m);
        for (int lane = 0; lane < 4; ++lane) {
            const auto li = static_cast<std::size_t>(lane);
            const double eh = ebp[li][static_cast<std::size_t>(n - n_lo)];
            if (eh == 0.0) continue;
            for (int l = 0; l < lg; ++l) {
                const std::int64_t idx = n - l;
                const double wv = idx >= 0 && idx < static_cast<std::int64_t>(s.w[li].size())
                                      ? s.w[li][static_cast<std::size_t>(idx)]
                                      : 0.0;
                grad[li][static_cast<std::size_t>(mm * lg + l)] += eh * wv;
            }
        }
    }
    const double norm = 2.0 / static_cast<double>(s.k_max - s.k_min + 1);
    for (auto& g : grad)
        for (auto& v : g) v *= norm;
    return grad;
}

// Literal evaluation of the batch-gradient formula: for each (lane, m0, l0),
// sum over k of e_hat[m0 + kM] w[m0 + kM - l0], normalized like
// mean_bp_gradient. The backpropagated error here comes from the literal
// direct_backprop path.
inline std::array<std::vector<double>, 4> batch_gradient_direct(const ChainSnapshot& s) {
    const int m = s.ce.fir[0].m;
    const int lg = s.ce.fir[0].lg;
    const auto x = oracle_detail::forward_x(s, s.ce);
    const auto u = direct_ffe_forward(x, s.gamma);
    const PamSlicer slicer(s.mod);
    OversampledError err;
    err.k0 = s.k_min;
    err.k1 = s.k_max + 1;
    for (int j = 0; j < 4; ++j) {
        auto& ev = err.e[static_cast<std::size_t>(j)];
        ev.resize(static_cast<std::size_t>(err.k1 - err.k0));
        for (std::int64_t k = s.k_min; k <= s.k_max; ++k) {
            const double a_hat = slicer.level(
                s.frozen_levels[static_cast<std::size_t>(j)][static_cast<std::size_t>(k - s.k_min)]);
            ev[static_cast<std::size_t>(k - s.k_min)] = u[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] - a_hat;
        }
    }
    const std::int64_t n_lo = 2 * s.k_min - (s.gamma.lt - 1);
    const std::int64_t n_hi = 2 * s.k_max + 1;
    const auto ebp = direct_backprop(err, s.gamma, n_lo, n_hi);
    std::array<std::vector<double>, 4> grad;
    for (auto& g : grad) g.assign(static_cast<std::size_t>(m * lg), 0.0);
    for (int m0 = 0; m0 < m; ++m0)
        for (int l0 = 0; l0 < lg; ++l0)
            for (int lane = 0; lane < 4; ++lane) {
                const auto li = static_cast<std::size_t>(lane);
                double acc = 0.0;
                for (std::int64_t n = m0; n < n_hi; n += m) {
                    if (n < n_lo) continue;
                    const double eh = ebp[li][static_cast<std::size_t>(n - n_lo)];
                    const std::int64_t idx = n - l0;
                    const double wv = idx >= 0 && idx < static_cast<std::int64_t>(s.w[li].size())
                                          ? s.w[li][static_cast<std::size_t>(idx)]
                                          : 0.0;
                    acc += eh * wv;
                }
                grad[li][static_cast<std::size_t>(m0 * lg + l0)] = acc;
            }
    const double norm = 2.0 / static_cast<double>(s.k_max - s.k_min + 1);
    for (auto& g : grad)
        for (auto& v : g) v *= norm;
    return grad;
}

} // namespace ebpcal
