// SPDX-License-Identifier: Apache-2.0
//
// Compensation Equalizer: M-periodic offset subtraction followed by an
// M-periodic time-varying FIR per lane. One coefficient set is pinned to a
// pure delay to break the gain ambiguity against the downstream adaptive
// equalizer. Also the mixed-signal actuator model (quantized delay cells,
// gain trims, offset trims) that rewrites the effective impairments.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ebpcal/afe.hpp"
#include "ebpcal/tape.hpp"

namespace ebpcal {

// M-periodic time-varying real FIR: coefficient set used at time n is
// g[(n - n0) mod M]; n0 is a multiple of M, so this is n mod M.
struct PeriodicFir {
    int m = 1;
    int lg = 1; // odd
    std::vector<double> g; // g[set * lg + l]
    std::int64_t n0 = 0;

    double& at(int set, int l) { return g[static_cast<std::size_t>(set * lg + l)]; }
    double at(int set, int l) const { return g[static_cast<std::size_t>(set * lg + l)]; }

    int set_index(std::int64_t n) const {
        return static_cast<int>((((n - n0) % m) + m) % m);
    }

    int center() const { return (lg - 1) / 2; }

    // All sets a unit impulse at the physical center tap.
    static PeriodicFir identity(int m, int lg, std::int64_t n0 = 0) {
        if (m < 1) throw std::invalid_argument("PeriodicFir: M must be >= 1");
        if (lg < 1 || lg % 2 == 0) throw std::invalid_argument("PeriodicFir: L_g must be odd and >= 1");
        if (n0 % m != 0) throw std::invalid_argument("PeriodicFir: n0 must be a multiple of M");
        PeriodicFir p;
        p.m = m;
        p.lg = lg;
        p.n0 = n0;
        p.g.assign(static_cast<std::size_t>(m * lg), 0.0);
        for (int s = 0; s < m; ++s) p.at(s, p.center()) = 1.0;
        return p;
    }
};

// x[n] = sum_l g_{n mod M}[l] w[n-l] for n in [n0, n1), appended to out.
inline void ce_apply_block(const Tape<double>& w, const PeriodicFir& ce, std::int64_t n0,
                           std::int64_t n1, Tape<double>& out) {
    if (out.end_index() != n0) throw std::invalid_argument("ce_apply_block: output tape out of position");
    for (std::int64_t n = n0; n < n1; ++n) {
        const int set = ce.set_index(n);
        double acc = 0.0;
        for (int l = 0; l < ce.lg; ++l) acc += ce.at(set, l) * w.at(n - l);
        out.push_back(acc);
    }
}

inline std::vector<double> ce_apply(std::span<const double> w, const PeriodicFir& ce) {
    Tape<double> in;
    in.append(w);
    Tape<double> out;
    ce_apply_block(in, ce, 0, static_cast<std::int64_t>(w.size()), out);
    std::vector<double> x(w.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = out.at(static_cast<std::int64_t>(i));
    return x;
}

// M-periodic DC offset estimate, signal units.
struct OffsetEstimate {
    int m = 1;
    std::vector<double> o_hat;

    static OffsetEstimate zero(int m) {
        OffsetEstimate e;
        e.m = m;
        e.o_hat.assign(static_cast<std::size_t>(m), 0.0);
        return e;
    }
};

// w[n] = y[n] - o_hat[n mod M] for n in [n0, n1), appended to out.
inline void offset_subtract_block(const Tape<double>& y, const OffsetEstimate& est, std::int64_t n0,
                                  std::int64_t n1, Tape<double>& out) {
    if (out.end_index() != n0) throw std::invalid_argument("offset_subtract_block: output tape out of position");
    for (std::int64_t n = n0; n < n1; ++n) {
        const int mm = static_cast<int>(((n % est.m) + est.m) % est.m);
        out.push_back(y.at(n) - est.o_hat[static_cast<std::size_t>(mm)]);
    }
}

inline std::vector<double> offset_subtract(std::span<const double> y, const OffsetEstimate& est) {
    Tape<double> in;
    in.append(y);
    Tape<double> out;
    offset_subtract_block(in, est, 0, static_cast<std::int64_t>(y.size()), out);
    std::vector<double> w(y.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = out.at(static_cast<std::int64_t>(i));
    return w;
}

// Adaptation constraint: the designated set is a fixed time-delay line.
struct PinConstraint {
    int lane = 0;       // 0-based lane index
    int interleave = 0; // coefficient set
    int center = 0;     // tap index of the unit impulse
};

// Force the designated set to a unit impulse at `center`; updaters must treat
// that set as read-only afterwards.
inline void pin_constraint(PeriodicFir& ce, const PinConstraint& pin) {
    if (pin.center < 0 || pin.center >= ce.lg)
        throw std::invalid_argument("pin_constraint: center out of [0, L_g)");
    if (pin.interleave < 0 || pin.interleave >= ce.m)
        throw std::invalid_argument("pin_constraint: interleave out of range");
    for (int l = 0; l < ce.lg; ++l) ce.at(pin.interleave, l) = (l == pin.center) ? 1.0 : 0.0;
}

// Full CE state for the four lanes.
struct CeState {
    std::array<PeriodicFir, 4> fir;
    std::array<OffsetEstimate, 4> offsets;
    PinConstraint pin;
    bool pin_enabled = true;

    static CeState identity(int m, int lg, const PinConstraint& pin, bool pin_enabled = true) {
        CeState s;
        for (int lane = 0; lane < 4; ++lane) {
            s.fir[static_cast<std::size_t>(lane)] = PeriodicFir::identity(m, lg);
            s.offsets[static_cast<std::size_t>(lane)] = OffsetEstimate::zero(m);
        }
        s.pin = pin;
        s.pin_enabled = pin_enabled;
        if (pin_enabled) pin_constraint(s.fir[static_cast<std::size_t>(pin.lane)], pin);
        return s;
    }

    bool is_pinned(int lane, int set) const {
        return pin_enabled && lane == pin.lane && set == pin.interleave;
    }
};

// ---------------------------------------------------------------------------
// Mixed-signal actuators

// Per-lane analog trims: quantized delay cells on the rank-1 switches, gain
// and offset trims on the sub-ADCs.
struct ActuatorState {
    int m1 = 1; // rank-1 switches per lane
    int m = 1;  // sub-ADCs per lane
    double delay_step_s = 260e-15;
    double delay_range_s = 50e-12; // cell range; runs also clamp to the model's phase validity
    std::array<std::vector<double>, 4> tau_hat_s; // continuous timing estimate per switch
    std::array<std::vector<int>, 4> delay_code;   // quantized actuator codes
    std::array<std::vector<double>, 4> gain_trim;     // init 1
    std::array<std::vector<double>, 4> offset_trim_fs; // fraction of full scale
    bool saturation_flagged = false;

    static ActuatorState zero(int m1, int m) {
        ActuatorState a;
        a.m1 = m1;
        a.m = m;
        for (int lane = 0; lane < 4; ++lane) {
            a.tau_hat_s[static_cast<std::size_t>(lane)].assign(static_cast<std::size_t>(m1), 0.0);
            a.delay_code[static_cast<std::size_t>(lane)].assign(static_cast<std::size_t>(m1), 0);
            a.gain_trim[static_cast<std::size_t>(lane)].assign(static_cast<std::size_t>(m), 1.0);
            a.offset_trim_fs[static_cast<std::size_t>(lane)].assign(static_cast<std::size_t>(m), 0.0);
        }
        return a;
    }

    int max_code() const { return static_cast<int>(std::floor(delay_range_s / delay_step_s)); }

    // Quantize the continuous timing estimates to actuator codes, flagging
    // (not failing on) range saturation.
    void quantize_codes() {
        const int cmax = max_code();
        for (int lane = 0; lane < 4; ++lane)
            for (int sw = 0; sw < m1; ++sw) {
                const double tau = tau_hat_s[static_cast<std::size_t>(lane)][static_cast<std::size_t>(sw)];
                int code = static_cast<int>(std::lround(tau / delay_step_s));
                if (code > cmax || code < -cmax) {
                    saturation_flagged = true;
                    code = std::clamp(code, -cmax, cmax);
                }
                delay_code[static_cast<std::size_t>(lane)][static_cast<std::size_t>(sw)] = code;
            }
    }
};

// Effective impairments seen by the ADC after the analog corrections:
// phase delta_m - code*step, gain gamma/gamma_trim, offset o - o_trim.
inline ImpairmentSet actuator_apply(const ImpairmentSet& afe, const ActuatorState& act,
                                    double symbol_period_s) {
    ImpairmentSet eff = afe;
    const int m1 = act.m1;
    for (int lane = 0; lane < 4; ++lane) {
        const auto li = static_cast<std::size_t>(lane);
        for (int mm = 0; mm < afe.m; ++mm) {
            const auto mi = static_cast<std::size_t>(mm);
            const int sw = mm % m1;
            const double corr_t =
                act.delay_code[li][static_cast<std::size_t>(sw)] * act.delay_step_s / symbol_period_s;
            eff.phase_err_t[li][mi] = afe.phase_err_t[li][mi] - corr_t;
            const double gt = act.gain_trim[li][mi];
            if (gt != 1.0) eff.gain_err[li][mi] = (1.0 + afe.gain_err[li][mi]) / gt - 1.0;
            eff.dc_off_fs[li][mi] = afe.dc_off_fs[li][mi] - act.offset_trim_fs[li][mi];
        }
    }
    return eff;
}

} // namespace ebpcal
