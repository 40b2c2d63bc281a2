// SPDX-License-Identifier: Apache-2.0
//
// Receiver DSP block modeled as a real 4x4 MIMO T/2 fractionally spaced
// equalizer with downsampling to the baud rate, plus the slicer and its
// error. u_k[j] = sum_i sum_l Gamma[j][i][l] x_i[2k - l].

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ebpcal/tape.hpp"
#include "ebpcal/txchain.hpp"

namespace ebpcal {

struct MimoFir {
    int lt = 1; // L_Gamma
    std::array<std::array<std::vector<double>, 4>, 4> w; // w[j][i][l]

    double& at(int j, int i, int l) { return w[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)][static_cast<std::size_t>(l)]; }
    double at(int j, int i, int l) const { return w[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)][static_cast<std::size_t>(l)]; }

    // Single spike per diagonal path at tap `center`.
    static MimoFir identity(int lt, int center) {
        if (lt < 1) throw std::invalid_argument("MimoFir: L must be >= 1");
        if (center < 0 || center >= lt) throw std::invalid_argument("MimoFir: center out of range");
        MimoFir f;
        f.lt = lt;
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 4; ++i) {
                f.w[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(lt), 0.0);
                if (i == j) f.at(j, i, center) = 1.0;
            }
        return f;
    }

    double norm_sq() const {
        double s = 0.0;
        for (const auto& row : w)
            for (const auto& taps : row)
                for (double v : taps) s += v * v;
        return s;
    }
};

// One downsampled output symbol: u_k[j] = sum_i sum_l Gamma[j][i][l] x_i[2k-l].
inline std::array<double, 4> ffe_forward_symbol(const std::array<Tape<double>, 4>& x, const MimoFir& fir,
                                                std::int64_t k) {
    std::array<double, 4> u{};
    for (int j = 0; j < 4; ++j) {
        double acc = 0.0;
        for (int i = 0; i < 4; ++i) {
            const auto& taps = fir.w[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
            const auto& xt = x[static_cast<std::size_t>(i)];
            for (int l = 0; l < fir.lt; ++l) acc += taps[static_cast<std::size_t>(l)] * xt.at(2 * k - l);
        }
        u[static_cast<std::size_t>(j)] = acc;
    }
    return u;
}

// Downsampled forward pass for symbols k in [k0, k1); u[j] gets k1-k0 values.
inline void ffe_forward_block(const std::array<Tape<double>, 4>& x, const MimoFir& fir, std::int64_t k0,
                              std::int64_t k1, std::array<std::vector<double>, 4>& u) {
    for (auto& v : u) {
        v.clear();
        v.reserve(static_cast<std::size_t>(k1 - k0));
    }
    for (std::int64_t k = k0; k < k1; ++k) {
        for (int j = 0; j < 4; ++j) {
            double acc = 0.0;
            for (int i = 0; i < 4; ++i) {
                const auto& taps = fir.w[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
                const auto& xt = x[static_cast<std::size_t>(i)];
                for (int l = 0; l < fir.lt; ++l) acc += taps[static_cast<std::size_t>(l)] * xt.at(2 * k - l);
            }
            u[static_cast<std::size_t>(j)].push_back(acc);
        }
    }
}

inline std::array<std::vector<double>, 4> ffe_forward(const std::array<std::vector<double>, 4>& x,
                                                      const MimoFir& fir) {
    std::array<Tape<double>, 4> t;
    for (int i = 0; i < 4; ++i) t[static_cast<std::size_t>(i)].append(x[static_cast<std::size_t>(i)]);
    std::array<std::vector<double>, 4> u;
    ffe_forward_block(t, fir, 0, static_cast<std::int64_t>(x[0].size()) / 2, u);
    return u;
}

// Nearest-grid PAM decision; midpoints break toward the lower level, inputs
// beyond the outermost level clamp to it.
struct PamSlicer {
    Modulation mod = Modulation::qam64;
    int levels = 8;
    double d = 0.0; // half level spacing

    explicit PamSlicer(Modulation m) : mod(m), levels(pam_levels(m)), d(pam_scale(m)) {}

    int slice_index(double u) const {
        const double y = (u / d + (levels - 1)) / 2.0;
        int idx = static_cast<int>(std::ceil(y - 0.5)); // round half down
        if (idx < 0) idx = 0;
        if (idx >= levels) idx = levels - 1;
        return idx;
    }

    double level(int idx) const { return d * (2.0 * idx - (levels - 1)); }
};

struct SlicerRecord {
    std::array<int, 4> level_index{};
    std::array<double, 4> a_hat{};
    std::array<double, 4> e{};
};

inline SlicerRecord slice(const std::array<double, 4>& u, const PamSlicer& slicer) {
    SlicerRecord r;
    for (int j = 0; j < 4; ++j) {
        const auto ji = static_cast<std::size_t>(j);
        r.level_index[ji] = slicer.slice_index(u[ji]);
        r.a_hat[ji] = slicer.level(r.level_index[ji]);
        r.e[ji] = u[ji] - r.a_hat[ji];
    }
    return r;
}

// E_k = sum_j |e_k[j]|^2
inline double total_squared_error(const std::array<double, 4>& e) {
    double s = 0.0;
    for (double v : e) s += v * v;
    return s;
}

// One LMS step: Gamma[j][i][l] -= step * e[j] * x_i[2k - l].
inline void ffe_adapt(MimoFir& fir, const std::array<Tape<double>, 4>& x, std::int64_t k,
                      const std::array<double, 4>& e, double step) {
    if (step == 0.0) return;
    for (int j = 0; j < 4; ++j) {
        const double ej = e[static_cast<std::size_t>(j)];
        if (ej == 0.0) continue;
        for (int i = 0; i < 4; ++i) {
            auto& taps = fir.w[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
            const auto& xt = x[static_cast<std::size_t>(i)];
            for (int l = 0; l < fir.lt; ++l)
                taps[static_cast<std::size_t>(l)] -= step * ej * xt.at(2 * k - l);
        }
    }
}

} // namespace ebpcal
