// SPDX-License-Identifier: Apache-2.0
//
// AFE and TI-ADC impairment model. Each lane is digitized by an M-periodic
// time-varying filter composed per interleave from the lane response (lowpass
// plus I/Q skew), the T&H response (lowpass at the mismatched bandwidth) and
// the sampling-phase interpolation filter scaled by the gain error, followed
// by M-periodic DC offsets and a midrise quantizer.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "ebpcal/dsp.hpp"
#include "ebpcal/rng.hpp"
#include "ebpcal/tape.hpp"

namespace ebpcal {

// Per-lane, per-interleave error parameters. Phase quantities are fractions
// of the symbol period T; offsets are fractions of the quantizer full scale.
struct ImpairmentSet {
    int m = 1;           // interleave count M
    int m1 = 0, m2 = 0;  // optional hierarchical ranks, m1*m2 == m (0,0 = flat)
    std::array<std::vector<double>, 4> gain_err;    // delta-gamma per interleave
    std::array<std::vector<double>, 4> phase_err_t; // delta_m, fraction of T
    std::array<std::vector<double>, 4> bw_off_hz;   // delta-B per interleave
    std::array<std::vector<double>, 4> dc_off_fs;   // o_m, fraction of full scale
    double iq_skew_h_t = 0.0; // tau_H, fraction of T
    double iq_skew_v_t = 0.0; // tau_V, fraction of T

    bool hierarchical() const { return m1 > 0 && m2 > 0; }

    static ImpairmentSet zero(int m, int m1 = 0, int m2 = 0) {
        ImpairmentSet s;
        s.m = m;
        s.m1 = m1;
        s.m2 = m2;
        if (m < 1) throw std::invalid_argument("ImpairmentSet: M must be >= 1");
        if ((m1 > 0 || m2 > 0) && m1 * m2 != m)
            throw std::invalid_argument("ImpairmentSet: M1*M2 must equal M");
        for (int lane = 0; lane < 4; ++lane) {
            s.gain_err[static_cast<std::size_t>(lane)].assign(static_cast<std::size_t>(m), 0.0);
            s.phase_err_t[static_cast<std::size_t>(lane)].assign(static_cast<std::size_t>(m), 0.0);
            s.bw_off_hz[static_cast<std::size_t>(lane)].assign(static_cast<std::size_t>(m), 0.0);
            s.dc_off_fs[static_cast<std::size_t>(lane)].assign(static_cast<std::size_t>(m), 0.0);
        }
        return s;
    }

    void validate() const {
        if (m < 1) throw std::invalid_argument("ImpairmentSet: M must be >= 1");
        if ((m1 > 0 || m2 > 0) && m1 * m2 != m)
            throw std::invalid_argument("ImpairmentSet: M1*M2 must equal M");
        for (int lane = 0; lane < 4; ++lane) {
            const auto l = static_cast<std::size_t>(lane);
            if (static_cast<int>(gain_err[l].size()) != m || static_cast<int>(phase_err_t[l].size()) != m ||
                static_cast<int>(bw_off_hz[l].size()) != m || static_cast<int>(dc_off_fs[l].size()) != m)
                throw std::invalid_argument("ImpairmentSet: per-interleave vectors must have length M");
            for (int mm = 0; mm < m; ++mm) {
                if (!(std::abs(phase_err_t[l][static_cast<std::size_t>(mm)]) < 0.5))
                    throw std::invalid_argument("ImpairmentSet: |phase error| must be < 0.5 T");
                if (!(1.0 + gain_err[l][static_cast<std::size_t>(mm)] > 0.0))
                    throw std::invalid_argument("ImpairmentSet: gain 1+dg must be > 0");
            }
        }
    }
};

// UDRV half-ranges in the units of ImpairmentSet fields.
struct ImpairmentBounds {
    double gain_err = 0.0;    // |dg|
    double phase_err_t = 0.0; // fraction of T
    double bw_off_frac = 0.0; // fraction of nominal bandwidth
    double dc_off_fs = 0.0;   // fraction of full scale
    double iq_skew_t = 0.0;   // fraction of T
};

// Independent uniform draws per parameter, reproducible by seed. In
// hierarchical mode (m1, m2 > 0) sampling phases attach to the m1 rank-1
// switches (delta_m repeats with period m1); gains and offsets stay
// per sub-ADC.
inline ImpairmentSet sample_impairments(const ImpairmentBounds& b, double nominal_bw_hz, int m,
                                        std::uint64_t seed, int m1 = 0, int m2 = 0) {
    ImpairmentSet s = ImpairmentSet::zero(m, m1, m2);
    Rng rng(seed);
    for (int lane = 0; lane < 4; ++lane)
        for (int mm = 0; mm < m; ++mm)
            s.gain_err[static_cast<std::size_t>(lane)][static_cast<std::size_t>(mm)] = rng.uniform_pm(b.gain_err);
    if (s.hierarchical()) {
        for (int lane = 0; lane < 4; ++lane) {
            std::vector<double> sw(static_cast<std::size_t>(m1));
            for (auto& v : sw) v = rng.uniform_pm(b.phase_err_t);
            for (int mm = 0; mm < m; ++mm)
                s.phase_err_t[static_cast<std::size_t>(lane)][static_cast<std::size_t>(mm)] = sw[static_cast<std::size_t>(mm % m1)];
        }
    } else {
        for (int lane = 0; lane < 4; ++lane)
            for (int mm = 0; mm < m; ++mm)
                s.phase_err_t[static_cast<std::size_t>(lane)][static_cast<std::size_t>(mm)] = rng.uniform_pm(b.phase_err_t);
    }
    for (int lane = 0; lane < 4; ++lane)
        for (int mm = 0; mm < m; ++mm)
            s.bw_off_hz[static_cast<std::size_t>(lane)][static_cast<std::size_t>(mm)] =
                rng.uniform_pm(b.bw_off_frac * nominal_bw_hz);
    for (int lane = 0; lane < 4; ++lane)
        for (int mm = 0; mm < m; ++mm)
            s.dc_off_fs[static_cast<std::size_t>(lane)][static_cast<std::size_t>(mm)] = rng.uniform_pm(b.dc_off_fs);
    s.iq_skew_h_t = rng.uniform_pm(b.iq_skew_t);
    s.iq_skew_v_t = rng.uniform_pm(b.iq_skew_t);
    return s;
}

// Structured-text serialization for scenario replay.
inline void save_impairments(const ImpairmentSet& s, std::ostream& os) {
    os << "m = " << s.m << "\n";
    os << "m1 = " << s.m1 << "\n";
    os << "m2 = " << s.m2 << "\n";
    char buf[64];
    auto wr = [&](const char* name, const std::array<std::vector<double>, 4>& v) {
        for (int lane = 0; lane < 4; ++lane) {
            os << name << "." << (lane + 1) << " =";
            for (double x : v[static_cast<std::size_t>(lane)]) {
                std::snprintf(buf, sizeof buf, " %.17g", x);
                os << buf;
            }
            os << "\n";
        }
    };
    wr("gain_err", s.gain_err);
    wr("phase_err_t", s.phase_err_t);
    wr("bw_off_hz", s.bw_off_hz);
    wr("dc_off_fs", s.dc_off_fs);
    std::snprintf(buf, sizeof buf, "%.17g", s.iq_skew_h_t);
    os << "iq_skew_h_t = " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", s.iq_skew_v_t);
    os << "iq_skew_v_t = " << buf << "\n";
}

inline ImpairmentSet load_impairments(std::istream& is) {
    ImpairmentSet s;
    int m = 1, m1 = 0, m2 = 0;
    std::string line;
    struct Row {
        std::string key;
        std::vector<double> vals;
    };
    std::vector<Row> rows;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ss(line);
        Row r;
        std::string eq;
        if (!(ss >> r.key)) continue;
        if (!(ss >> eq) || eq != "=") throw std::runtime_error("impairments: expected '=' after " + r.key);
        double v = 0.0;
        while (ss >> v) r.vals.push_back(v);
        rows.push_back(std::move(r));
    }
    for (const auto& r : rows) {
        if (r.key == "m") m = static_cast<int>(r.vals.at(0));
        if (r.key == "m1") m1 = static_cast<int>(r.vals.at(0));
        if (r.key == "m2") m2 = static_cast<int>(r.vals.at(0));
    }
    s = ImpairmentSet::zero(m, m1, m2);
    for (const auto& r : rows) {
        auto lane_of = [](const std::string& k) { return k.back() - '1'; };
        if (r.key.rfind("gain_err.", 0) == 0) s.gain_err[static_cast<std::size_t>(lane_of(r.key))] = r.vals;
        else if (r.key.rfind("phase_err_t.", 0) == 0) s.phase_err_t[static_cast<std::size_t>(lane_of(r.key))] = r.vals;
        else if (r.key.rfind("bw_off_hz.", 0) == 0) s.bw_off_hz[static_cast<std::size_t>(lane_of(r.key))] = r.vals;
        else if (r.key.rfind("dc_off_fs.", 0) == 0) s.dc_off_fs[static_cast<std::size_t>(lane_of(r.key))] = r.vals;
        else if (r.key == "iq_skew_h_t") s.iq_skew_h_t = r.vals.at(0);
        else if (r.key == "iq_skew_v_t") s.iq_skew_v_t = r.vals.at(0);
    }
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Discrete-time model

struct AfeConfig {
    double sample_rate_hz = 192e9; // 2/T
    double nominal_bw_hz = 52.8e9; // B0; the analog path response is one
                                   // first-order lowpass at B0 + dB per interleave
    double lane_bw_hz = -1.0;      // optional extra interconnect pole (<0 = none)
    int lowpass_taps = 16;
    int composite_taps = 33;
    int lagrange_order = 3;
    int bits = 8;                // quantizer resolution
    double full_scale = 2.0;     // quantizer full scale (signal units)
    bool quantize = true;
    double jitter_rms_s = 0.0;   // white sampling-time jitter, rank-1 clocks
    std::uint64_t jitter_seed = 0;
};

// One lane's discrete-time equivalent: per-interleave responses at 2/T, the
// M-periodic offset sequence in signal units, and the quantizer settings.
struct TiAdcModel {
    int m = 1;
    std::vector<RealFir> h;      // per interleave, equal length
    std::vector<double> offset;  // per interleave, signal units
    int bits = 8;
    double full_scale = 2.0;
    bool quantize = true;
    double jitter_rms_samples = 0.0;
    int center = 0; // integer group-delay reference of h

    int taps() const { return h.empty() ? 0 : h[0].length(); }
};

// Compose c (x) f_m (x) p_m per interleave and sample at Ts. The two
// Lagrange interpolators contribute a constant integer delay of
// 2*lagrange_center(order); that value is reported in TiAdcModel::center.
inline TiAdcModel build_tiadc_model(const ImpairmentSet& imp, int lane, const AfeConfig& cfg) {
    imp.validate();
    if (lane < 0 || lane > 3) throw std::invalid_argument("build_tiadc_model: lane out of range");
    const auto li = static_cast<std::size_t>(lane);
    TiAdcModel model;
    model.m = imp.m;
    model.bits = cfg.bits;
    model.full_scale = cfg.full_scale;
    model.quantize = cfg.quantize;
    model.jitter_rms_samples = cfg.jitter_rms_s * cfg.sample_rate_hz;
    model.center = 2 * lagrange_center(cfg.lagrange_order);

    // I/Q skew split: +tau/2 on I, -tau/2 on Q of the same polarization.
    const double tau = (lane < 2) ? imp.iq_skew_h_t : imp.iq_skew_v_t;
    const double skew_t = (lane % 2 == 0) ? +0.5 * tau : -0.5 * tau;
    const double skew_samples = skew_t * 2.0; // T -> samples at 2/T
    if (!(std::abs(skew_samples) < 1.0))
        throw std::invalid_argument("build_tiadc_model: I/Q skew exceeds interpolator support");

    const RealFir skew_fd = design_fractional_delay(skew_samples, cfg.lagrange_order);
    std::vector<double> c = skew_fd.taps;
    if (cfg.lane_bw_hz > 0.0) {
        const RealFir lane_lp = sample_first_order_lowpass(cfg.lane_bw_hz, cfg.sample_rate_hz, cfg.lowpass_taps);
        c = convolve_full(lane_lp.taps, c);
    }

    model.h.reserve(static_cast<std::size_t>(imp.m));
    model.offset.resize(static_cast<std::size_t>(imp.m));
    for (int mm = 0; mm < imp.m; ++mm) {
        const auto mi = static_cast<std::size_t>(mm);
        const double bw = cfg.nominal_bw_hz + imp.bw_off_hz[li][mi];
        if (!(bw > 0.0 && bw < cfg.sample_rate_hz / 2.0))
            throw std::invalid_argument("build_tiadc_model: mismatched bandwidth out of range");
        const RealFir th_lp = sample_first_order_lowpass(bw, cfg.sample_rate_hz, cfg.lowpass_taps);
        const double delay_samples = imp.phase_err_t[li][mi] * 2.0;
        if (!(std::abs(delay_samples) < 1.0))
            throw std::invalid_argument("build_tiadc_model: sampling-phase error exceeds interpolator support");
        RealFir fd = design_fractional_delay(delay_samples, cfg.lagrange_order);
        const double gamma = 1.0 + imp.gain_err[li][mi];
        for (auto& v : fd.taps) v *= gamma;

        std::vector<double> comp = convolve_full(convolve_full(c, th_lp.taps), fd.taps);
        comp.resize(static_cast<std::size_t>(cfg.composite_taps), 0.0); // tail truncation
        model.h.emplace_back(std::move(comp));
        model.offset[mi] = imp.dc_off_fs[li][mi] * cfg.full_scale;
    }
    return model;
}

// y[n] = sum_l h_{n mod M}[l] s[n-l] + o[n mod M] + q[n] for n in [n0, n1),
// appended to `out` (out.end_index() must equal n0). Sampling jitter, when
// enabled, perturbs the filtered sample by jitter * local slope.
inline void digitize_block(const Tape<double>& s, const TiAdcModel& model, std::int64_t n0,
                           std::int64_t n1, Tape<double>& out, Rng* jitter_rng = nullptr) {
    if (out.end_index() != n0) throw std::invalid_argument("digitize_block: output tape out of position");
    const int lt = model.taps();
    auto filtered = [&](std::int64_t n) {
        const int mm = static_cast<int>(((n % model.m) + model.m) % model.m);
        const auto& taps = model.h[static_cast<std::size_t>(mm)].taps;
        double acc = 0.0;
        for (int l = 0; l < lt; ++l) acc += taps[static_cast<std::size_t>(l)] * s.at(n - l);
        return acc;
    };
    for (std::int64_t n = n0; n < n1; ++n) {
        double r = filtered(n);
        if (model.jitter_rms_samples > 0.0 && jitter_rng != nullptr) {
            const double slope = 0.5 * (filtered(n + 1) - filtered(n - 1));
            r += jitter_rng->normal(model.jitter_rms_samples) * slope;
        }
        const int mm = static_cast<int>(((n % model.m) + model.m) % model.m);
        r += model.offset[static_cast<std::size_t>(mm)];
        if (model.quantize) r = quantize_sample(r, model.bits, model.full_scale);
        out.push_back(r);
    }
}

// Non-streaming convenience for tests.
inline std::vector<double> digitize(std::span<const double> signal, const TiAdcModel& model,
                                    std::uint64_t jitter_seed = 0) {
    Tape<double> in;
    in.append(signal);
    Tape<double> out;
    Rng jr(jitter_seed);
    digitize_block(in, model, 0, static_cast<std::int64_t>(signal.size()), out,
                   model.jitter_rms_samples > 0.0 ? &jr : nullptr);
    std::vector<double> y(signal.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = out.at(static_cast<std::int64_t>(i));
    return y;
}

} // namespace ebpcal
