// SPDX-License-Identifier: Apache-2.0
//
// Error backpropagation engine. Slicer errors are propagated backward
// through the MIMO equalizer response,
//   e_hat[i][n] = sum_j sum_l Gamma[j][i][l] e[j][n+l],
// with e the oversampled slicer error (zero at odd indices). The
// backpropagated error drives stochastic-gradient updates of the
// compensation equalizer and offset estimates (all-digital variant) or of
// the analog actuators (mixed-signal variant), with block decimation and
// gear shifting. run_calibration() is the full streaming control loop.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "ebpcal/compensation.hpp"
#include "ebpcal/rx_dsp.hpp"
#include "ebpcal/scenario.hpp"

namespace ebpcal {

// Block of slicer errors for symbols [k0, k1), viewed at rate 2/T:
// at(j, n) = e[j][n/2] when n is even and n/2 in range, else 0.
struct OversampledError {
    std::int64_t k0 = 0, k1 = 0;
    std::array<std::vector<double>, 4> e; // indexed k - k0

    double at(int lane, std::int64_t n) const {
        if (n % 2 != 0) return 0.0;
        const std::int64_t k = n / 2;
        if (k < k0 || k >= k1) return 0.0;
        return e[static_cast<std::size_t>(lane)][static_cast<std::size_t>(k - k0)];
    }
};

// e_hat[i][n] for n in [n0, n1), zero-padding e outside its block.
inline std::array<std::vector<double>, 4> backpropagate(const OversampledError& err, const MimoFir& gamma,
                                                        std::int64_t n0, std::int64_t n1) {
    std::array<std::vector<double>, 4> ebp;
    for (auto& v : ebp) v.assign(static_cast<std::size_t>(n1 - n0), 0.0);
    for (std::int64_t n = n0; n < n1; ++n) {
        // only even n+l carries an error sample
        const int lstart = static_cast<int>(((n % 2) + 2) % 2);
        for (int i = 0; i < 4; ++i) {
            double acc = 0.0;
            for (int j = 0; j < 4; ++j) {
                const auto& taps = gamma.w[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
                for (int l = lstart; l < gamma.lt; l += 2)
                    acc += taps[static_cast<std::size_t>(l)] * err.at(j, n + l);
            }
            ebp[static_cast<std::size_t>(i)][static_cast<std::size_t>(n - n0)] = acc;
        }
    }
    return ebp;
}

// Convenience for full-length vectors: e_os[j] already oversampled at 2/T.
inline std::array<std::vector<double>, 4> backpropagate_os(const std::array<std::vector<double>, 4>& e_os,
                                                           const MimoFir& gamma) {
    OversampledError err;
    err.k0 = 0;
    err.k1 = static_cast<std::int64_t>(e_os[0].size()) / 2;
    for (int j = 0; j < 4; ++j) {
        err.e[static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(err.k1));
        for (std::int64_t k = 0; k < err.k1; ++k)
            err.e[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] = e_os[static_cast<std::size_t>(j)][static_cast<std::size_t>(2 * k)];
    }
    return backpropagate(err, gamma, 0, static_cast<std::int64_t>(e_os[0].size()));
}

// Instantaneous gradient component e_hat[n] * [w[n] ... w[n-Lg+1]] (the
// proportionality constant is absorbed into the step size).
inline std::vector<double> ce_gradient(double ebp_n, const Tape<double>& w, std::int64_t n, int lg) {
    std::vector<double> g(static_cast<std::size_t>(lg));
    for (int l = 0; l < lg; ++l) g[static_cast<std::size_t>(l)] = ebp_n * w.at(n - l);
    return g;
}

// Per-block gradient accumulators (sums of instantaneous terms).
struct EbpAccumulators {
    int m = 1, m1 = 1, lg = 1;
    std::array<std::vector<double>, 4> ce;      // [lane][set*lg + l]
    std::array<std::vector<double>, 4> offset;  // [lane][set]
    std::array<std::vector<double>, 4> gain;    // [lane][sub-adc]
    std::array<std::vector<double>, 4> timing;  // [lane][switch]
    std::int64_t instants = 0;

    static EbpAccumulators zero(int m, int m1, int lg) {
        EbpAccumulators a;
        a.m = m;
        a.m1 = m1;
        a.lg = lg;
        for (int lane = 0; lane < 4; ++lane) {
            a.ce[static_cast<std::size_t>(lane)].assign(static_cast<std::size_t>(m * lg), 0.0);
            a.offset[static_cast<std::size_t>(lane)].assign(static_cast<std::size_t>(m), 0.0);
            a.gain[static_cast<std::size_t>(lane)].assign(static_cast<std::size_t>(m), 0.0);
            a.timing[static_cast<std::size_t>(lane)].assign(static_cast<std::size_t>(m1), 0.0);
        }
        return a;
    }
};

// Accumulate all gradient sums over n in [n_lo, n_hi) given the
// backpropagated error block (indexed from n_lo). The offset sums are chained
// through the CE coefficients, so the estimate for interleave phase p gathers
// e_hat[n] * g_{n mod M}[l] over (n - l) == p (mod M); with an identity CE
// this reduces to e_hat at the delayed phase. Timing terms need w[n+1] and
// are skipped on the last sample when it is not available.
inline void accumulate_gradients(EbpAccumulators& acc, const std::array<std::vector<double>, 4>& ebp,
                                 std::int64_t n_lo, std::int64_t n_hi, const CeState& ce,
                                 const std::array<Tape<double>, 4>& w, std::int64_t w_end) {
    const int m = acc.m;
    const int m1 = acc.m1;
    const int lg = acc.lg;
    for (std::int64_t n = n_lo; n < n_hi; ++n) {
        const int mm = static_cast<int>(((n % m) + m) % m);
        const int sw = static_cast<int>(((n % m1) + m1) % m1);
        for (int lane = 0; lane < 4; ++lane) {
            const auto li = static_cast<std::size_t>(lane);
            const double eh = ebp[li][static_cast<std::size_t>(n - n_lo)];
            if (eh == 0.0) continue;
            const auto& wt = w[li];
            double* g = acc.ce[li].data() + mm * lg;
            for (int l = 0; l < lg; ++l) g[l] += eh * wt.at(n - l);
            const auto& fir = ce.fir[li];
            for (int l = 0; l < fir.lg; ++l) {
                const int p = static_cast<int>((((n - l) % m) + m) % m);
                acc.offset[li][static_cast<std::size_t>(p)] += eh * fir.at(mm, l);
            }
            acc.gain[li][static_cast<std::size_t>(mm)] += eh * wt.at(n);
            if (n + 1 < w_end)
                acc.timing[li][static_cast<std::size_t>(sw)] += eh * (wt.at(n + 1) - wt.at(n - 1));
        }
        acc.instants += 1;
    }
}

class DivergenceError : public std::runtime_error {
  public:
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

// SGD step on the CE coefficient sets; the pinned set is left untouched.
inline void update_ce(CeState& ce, const EbpAccumulators& acc, double mu_scaled) {
    if (mu_scaled == 0.0) return;
    double norm_sq = 0.0;
    for (int lane = 0; lane < 4; ++lane) {
        auto& fir = ce.fir[static_cast<std::size_t>(lane)];
        for (int set = 0; set < fir.m; ++set) {
            if (ce.is_pinned(lane, set)) continue;
            for (int l = 0; l < fir.lg; ++l) {
                double& g = fir.at(set, l);
                g -= mu_scaled * acc.ce[static_cast<std::size_t>(lane)][static_cast<std::size_t>(set * fir.lg + l)];
                norm_sq += g * g;
            }
        }
    }
    if (!std::isfinite(norm_sq) || norm_sq > 1e6)
        throw DivergenceError("update_ce: coefficient norm explosion");
}

// Offset estimator driven by the backpropagated error. With the subtractive
// conventions w = y - o_hat (and actuator offset o - o_hat), gradient descent
// on the slicer MSE moves o_hat along +e_hat.
inline void update_offsets(std::array<OffsetEstimate, 4>& est, const EbpAccumulators& acc, double mu_o_scaled,
                           double magnitude_limit = 0.0) {
    for (int lane = 0; lane < 4; ++lane)
        for (int mm = 0; mm < est[static_cast<std::size_t>(lane)].m; ++mm) {
            double& o = est[static_cast<std::size_t>(lane)].o_hat[static_cast<std::size_t>(mm)];
            o += mu_o_scaled * acc.offset[static_cast<std::size_t>(lane)][static_cast<std::size_t>(mm)];
            if (!std::isfinite(o) || (magnitude_limit > 0.0 && std::abs(o) >= magnitude_limit))
                throw DivergenceError("update_offsets: estimate out of range");
        }
}

// Mixed-signal gain trims (effective gain = gamma / trim).
inline void update_gain_ms(ActuatorState& act, const EbpAccumulators& acc, double mu_g_scaled) {
    for (int lane = 0; lane < 4; ++lane)
        for (int mm = 0; mm < act.m; ++mm) {
            double& g = act.gain_trim[static_cast<std::size_t>(lane)][static_cast<std::size_t>(mm)];
            g += mu_g_scaled * acc.gain[static_cast<std::size_t>(lane)][static_cast<std::size_t>(mm)];
            if (!std::isfinite(g) || g <= 0.1 || g >= 10.0)
                throw DivergenceError("update_gain_ms: gain trim out of range");
        }
}

// Mixed-signal MMSE timing update per rank-1 switch; the continuous estimate
// is then quantized to delay-cell codes (effective phase = delta - code*step).
// A positive phase error delays the lane waveform, so the error-slope
// correlation is negative for a positive residual: descent is tau minus the
// correlation sum.
inline void update_timing_ms(ActuatorState& act, const EbpAccumulators& acc, double mu_tau_t_scaled,
                             double symbol_period_s) {
    // keep the corrected phase within the discrete model's validity besides
    // the physical cell range
    const double tau_lim = std::min(act.delay_range_s, 0.35 * symbol_period_s);
    for (int lane = 0; lane < 4; ++lane)
        for (int sw = 0; sw < act.m1; ++sw) {
            double& tau = act.tau_hat_s[static_cast<std::size_t>(lane)][static_cast<std::size_t>(sw)];
            tau -= mu_tau_t_scaled * symbol_period_s * acc.timing[static_cast<std::size_t>(lane)][static_cast<std::size_t>(sw)];
            if (!std::isfinite(tau)) throw DivergenceError("update_timing_ms: non-finite estimate");
            if (tau > tau_lim || tau < -tau_lim) {
                act.saturation_flagged = true;
                tau = std::clamp(tau, -tau_lim, tau_lim);
            }
            // anti-windup against the quantized cell setting
            const double realized = act.delay_code[static_cast<std::size_t>(lane)][static_cast<std::size_t>(sw)] *
                                    act.delay_step_s;
            tau = std::clamp(tau, realized - act.delay_step_s, realized + act.delay_step_s);
        }
    act.quantize_codes();
}

// ---------------------------------------------------------------------------
// Full calibration loop

struct TraceRecord {
    std::int64_t block = 0;
    std::int64_t symbols_done = 0;
    std::int64_t bit_errors = 0;
    std::int64_t bits = 0;
    double ber_inst = 0.0;
    double ber_ma = 0.0;
    double mse_db = 0.0;
    int updates = 0;
};

struct RunResult {
    bool diverged = false;
    std::string diagnostic;
    std::vector<TraceRecord> trace;
    std::int64_t meas_bits = 0;
    std::int64_t meas_bit_errors = 0;
    double final_ber = 0.0;
    double final_ber_upper95 = 0.0;
    double final_mse_db = 0.0;
    std::int64_t delay_symbols = 0;
    int ffe_center = 0;
    CeState ce;
    ActuatorState actuators;
    MimoFir ffe;
    ImpairmentSet impairments; // injected
    ImpairmentSet effective;   // after actuators (== injected in digital mode)
    std::vector<std::vector<double>> ce_snapshots; // optional, flattened per update
};

struct RunOptions {
    bool compensation_enabled = true;         // adapt CE (digital) / actuators (mixed)
    std::uint64_t trial_index = 0;            // seed derivation counter
    const ImpairmentSet* impairments = nullptr; // override (paired Monte Carlo arms)
};

inline double gear_scale_at(const std::vector<GearStage>& stages, std::int64_t idx, std::int64_t total) {
    double scale = 1.0;
    if (total < 1) total = 1;
    const double frac = static_cast<double>(idx) / static_cast<double>(total);
    for (const auto& st : stages)
        if (frac >= st.start_frac) scale = st.scale;
    return scale;
}

inline double ber_upper95(std::int64_t errors, std::int64_t bits) {
    if (bits <= 0) return 1.0;
    const double n = static_cast<double>(errors);
    return (n + 1.96 * std::sqrt(n) + 1.92) / static_cast<double>(bits);
}

inline ImpairmentSet scenario_impairments(const ScenarioConfig& sc, std::uint64_t trial_index) {
    switch (sc.imp_mode) {
        case ImpMode::none: return ImpairmentSet::zero(sc.m, sc.m1, sc.m2);
        case ImpMode::bounds: {
            ImpairmentBounds b;
            b.gain_err = sc.gain_err_pp;
            b.phase_err_t = sc.phase_err_pp_t;
            b.bw_off_frac = sc.bw_mismatch_pp;
            b.dc_off_fs = sc.dc_offset_pp_fs;
            b.iq_skew_t = sc.iq_skew_pp_t;
            return sample_impairments(b, sc.nominal_bw_hz, sc.m,
                                      derive_seed(sc.master_seed, "impair", trial_index), sc.m1, sc.m2);
        }
        case ImpMode::file: {
            std::ifstream f(sc.imp_file);
            if (!f) throw ConfigError("config: cannot open imp_file " + sc.imp_file);
            return load_impairments(f);
        }
    }
    return ImpairmentSet::zero(sc.m);
}

inline AfeConfig scenario_afe(const ScenarioConfig& sc, std::uint64_t trial_index) {
    AfeConfig a;
    a.sample_rate_hz = sc.sample_rate_hz();
    a.nominal_bw_hz = sc.nominal_bw_hz;
    a.lane_bw_hz = sc.lane_bw_hz;
    a.bits = sc.adc_bits;
    a.full_scale = sc.full_scale;
    a.jitter_rms_s = sc.jitter_rms_s;
    a.jitter_seed = derive_seed(sc.master_seed, "jitter", trial_index);
    return a;
}

inline TxConfig scenario_tx(const ScenarioConfig& sc, std::uint64_t trial_index) {
    TxConfig tx;
    tx.symbols.mod = sc.mod();
    for (int lane = 0; lane < 4; ++lane)
        tx.symbols.prbs_seed[static_cast<std::size_t>(lane)] =
            derive_seed(sc.master_seed, "prbs.lane" + std::to_string(lane), trial_index);
    tx.rolloff = sc.rolloff;
    tx.rrc_span_symbols = sc.rrc_span_symbols;
    tx.channel = make_channel(sc);
    tx.lane_noise_variance = sc.es_n0_db >= 0.0
                                 ? lane_noise_variance_for_es_n0(std::pow(10.0, sc.es_n0_db / 10.0))
                                 : set_noise_for_target_ber(sc.mod(), sc.target_ber);
    tx.noise_seed = derive_seed(sc.master_seed, "noise", trial_index);
    return tx;
}

inline RunResult run_calibration(const ScenarioConfig& sc, const RunOptions& opt = {}) {
    sc.validate();
    RunResult res;

    const Modulation mod = sc.mod();
    const PamSlicer slicer(mod);
    const int kb = bits_per_pam(mod);
    const int m = sc.m;
    const int m1 = sc.m1 > 0 ? sc.m1 : sc.m;
    const std::int64_t nblk = sc.block_samples;
    const std::int64_t total_blocks = std::max<std::int64_t>(1, 2 * sc.symbols / nblk);
    const std::int64_t total_updates = std::max<std::int64_t>(1, total_blocks / sc.block_decimation);

    // injected impairments
    res.impairments = opt.impairments ? *opt.impairments : scenario_impairments(sc, opt.trial_index);
    res.impairments.validate();
    if (res.impairments.m != sc.m)
        throw ConfigError("config: impairment set M does not match key 'm'");

    const AfeConfig afe_cfg = scenario_afe(sc, opt.trial_index);
    const TxConfig tx_cfg = scenario_tx(sc, opt.trial_index);
    TxStream tx(tx_cfg);

    // mixed-signal actuators
    res.actuators = ActuatorState::zero(m1, m);
    res.actuators.delay_step_s = sc.delay_step_s;
    res.actuators.delay_range_s = sc.delay_range_s;

    res.effective = sc.mode == CalMode::mixed
                        ? actuator_apply(res.impairments, res.actuators, sc.symbol_period_s())
                        : res.impairments;
    std::array<TiAdcModel, 4> models;
    for (int lane = 0; lane < 4; ++lane) models[static_cast<std::size_t>(lane)] = build_tiadc_model(res.effective, lane, afe_cfg);
    Rng jitter_rng(afe_cfg.jitter_seed);

    // CE: identity start; the mixed-signal variant bypasses it (delay-free
    // single-tap passthrough), and the no-compensation arm freezes it.
    const int ce_lg = sc.mode == CalMode::mixed ? 1 : sc.lg;
    const PinConstraint pin{sc.pin_lane - 1, sc.pin_interleave, (ce_lg - 1) / 2};
    res.ce = CeState::identity(m, ce_lg, pin);
    // ce_enabled gates the CE FIR adaptation; the offset estimator runs
    // whenever digital compensation is active.
    const bool adapt_ce = sc.mode == CalMode::digital && opt.compensation_enabled && sc.ce_enabled;
    const bool adapt_offsets = sc.mode == CalMode::digital && opt.compensation_enabled;
    const bool adapt_act = sc.mode == CalMode::mixed && opt.compensation_enabled;

    // FFE: single spike; center parity chosen so the chain delay is an
    // integer number of symbols.
    const int afe_center = models[0].center;
    const int base_delay = tx.nominal_delay_samples() + afe_center + res.ce.fir[0].center();
    int ffe_center = (sc.l_gamma - 1) / 2;
    if ((base_delay + ffe_center) % 2 != 0) ffe_center += (ffe_center + 1 < sc.l_gamma) ? 1 : -1;
    if (ffe_center < 0 || ffe_center >= sc.l_gamma)
        throw ConfigError("config: l_gamma too short for delay alignment");
    MimoFir ffe = MimoFir::identity(sc.l_gamma, ffe_center);
    res.ffe_center = ffe_center;
    res.delay_symbols = (base_delay + ffe_center) / 2;

    std::array<Tape<double>, 4> y, w, x;
    std::vector<double> ma_window;
    int updates = 0;
    std::int64_t meas_from_symbol = static_cast<std::int64_t>((1.0 - sc.measure_fraction) * static_cast<double>(total_blocks * nblk / 2));
    double meas_mse_acc = 0.0;
    std::int64_t meas_mse_blocks = 0;

    res.trace.reserve(static_cast<std::size_t>(total_blocks));

    try {
        for (std::int64_t b = 0; b < total_blocks; ++b) {
            const std::int64_t n0 = b * nblk;
            const std::int64_t n1 = n0 + nblk;
            const std::int64_t k0 = n0 / 2;
            const std::int64_t k1 = n1 / 2;

            tx.advance_to(n1 + 2);
            for (int lane = 0; lane < 4; ++lane) {
                const auto li = static_cast<std::size_t>(lane);
                digitize_block(tx.lane(lane), models[li], n0, n1, y[li],
                               models[li].jitter_rms_samples > 0.0 ? &jitter_rng : nullptr);
                offset_subtract_block(y[li], res.ce.offsets[li], n0, n1, w[li]);
                ce_apply_block(w[li], res.ce.fir[li], n0, n1, x[li]);
            }

            // Gamma snapshot for backpropagation; the forward pass adapts the
            // FFE symbol by symbol (decision directed, genie-aided warmup).
            const MimoFir gamma_snapshot = ffe;
            const double fscale = gear_scale_at(sc.gear_shift, b, total_blocks);

            OversampledError err;
            err.k0 = k0;
            err.k1 = k1;
            for (auto& v : err.e) v.resize(static_cast<std::size_t>(k1 - k0));
            std::int64_t blk_errors = 0, blk_bits = 0;
            double blk_e2 = 0.0;
            for (std::int64_t k = k0; k < k1; ++k) {
                const auto ki = static_cast<std::size_t>(k - k0);
                const bool genie = k < sc.genie_symbols && k >= res.delay_symbols;
                const std::array<double, 4> u = ffe_forward_symbol(x, ffe, k);
                std::array<double, 4> ek{};
                for (int j = 0; j < 4; ++j) {
                    const auto ji = static_cast<std::size_t>(j);
                    const double uj = u[ji];
                    const int det = slicer.slice_index(uj);
                    double ref_for_error;
                    if (genie) {
                        ref_for_error = tx.ref_value(j, k - res.delay_symbols);
                    } else {
                        ref_for_error = slicer.level(det);
                    }
                    ek[ji] = uj - ref_for_error;
                    err.e[ji][ki] = ek[ji];
                    blk_e2 += ek[ji] * ek[ji];
                    if (k >= res.delay_symbols) {
                        const int ref = tx.ref_level(j, k - res.delay_symbols);
                        blk_errors += std::popcount(level_to_bits(det) ^ level_to_bits(ref));
                        blk_bits += kb;
                    }
                }
                if (sc.ffe_adapt_symbols == 0 || k < sc.ffe_adapt_symbols)
                    ffe_adapt(ffe, x, k, ek, sc.mu_ffe * fscale);
            }
            if (!std::isfinite(ffe.norm_sq()) || ffe.norm_sq() > 1e6)
                throw DivergenceError("ffe_adapt: coefficient norm explosion");

            // EBP updates on every block_decimation-th block
            const bool ebp_block = opt.compensation_enabled && (b % sc.block_decimation == 0) &&
                                   (k0 >= sc.ebp_start_symbols) && (adapt_ce || adapt_offsets || adapt_act);
            if (ebp_block) {
                const std::int64_t n_lo = std::max<std::int64_t>(0, n0 - (ffe.lt - 1));
                const auto ebp = backpropagate(err, gamma_snapshot, n_lo, n1);
                EbpAccumulators acc = EbpAccumulators::zero(m, m1, ce_lg);
                accumulate_gradients(acc, ebp, n_lo, n1, res.ce, w, n1);
                const double scale = gear_scale_at(sc.gear_shift, updates, total_updates);
                if (sc.mode == CalMode::digital) {
                    if (adapt_ce) update_ce(res.ce, acc, sc.mu * scale);
                    if (adapt_offsets)
                        update_offsets(res.ce.offsets, acc, sc.mu_offset * scale, 0.5 * sc.full_scale);
                } else {
                    update_gain_ms(res.actuators, acc, sc.mu_gain * scale);
                    update_timing_ms(res.actuators, acc, sc.mu_tau_t * scale, sc.symbol_period_s());
                    // offset trims share the offset-estimator update, in FS units
                    for (int lane = 0; lane < 4; ++lane)
                        for (int mm = 0; mm < m; ++mm)
                            res.actuators.offset_trim_fs[static_cast<std::size_t>(lane)][static_cast<std::size_t>(mm)] +=
                                sc.mu_offset * scale *
                                acc.offset[static_cast<std::size_t>(lane)][static_cast<std::size_t>(mm)] / sc.full_scale;
                    res.effective = actuator_apply(res.impairments, res.actuators, sc.symbol_period_s());
                    try {
                        for (int lane = 0; lane < 4; ++lane)
                            models[static_cast<std::size_t>(lane)] = build_tiadc_model(res.effective, lane, afe_cfg);
                    } catch (const std::invalid_argument& ex) {
                        throw DivergenceError(std::string("actuator drove the model out of range: ") + ex.what());
                    }
                }
                ++updates;
                if (sc.trace_coefficients) {
                    std::vector<double> snap;
                    for (int lane = 0; lane < 4; ++lane)
                        snap.insert(snap.end(), res.ce.fir[static_cast<std::size_t>(lane)].g.begin(),
                                    res.ce.fir[static_cast<std::size_t>(lane)].g.end());
                    res.ce_snapshots.push_back(std::move(snap));
                }
            }

            // trace
            TraceRecord rec;
            rec.block = b;
            rec.symbols_done = k1;
            rec.bit_errors = blk_errors;
            rec.bits = blk_bits;
            rec.ber_inst = blk_bits > 0 ? static_cast<double>(blk_errors) / static_cast<double>(blk_bits) : 0.0;
            ma_window.push_back(rec.ber_inst);
            if (ma_window.size() > 10) ma_window.erase(ma_window.begin());
            double ma = 0.0;
            for (double v : ma_window) ma += v;
            rec.ber_ma = ma / static_cast<double>(ma_window.size());
            const double mse = blk_e2 / (2.0 * static_cast<double>(k1 - k0));
            rec.mse_db = mse > 0.0 ? 10.0 * std::log10(mse) : -300.0;
            rec.updates = updates;
            res.trace.push_back(rec);

            if (k0 >= meas_from_symbol) {
                res.meas_bits += blk_bits;
                res.meas_bit_errors += blk_errors;
                meas_mse_acc += mse;
                ++meas_mse_blocks;
            }

            // retain just enough history
            const std::int64_t margin = sc.l_gamma + sc.lg + models[0].taps() + 16;
            for (int lane = 0; lane < 4; ++lane) {
                const auto li = static_cast<std::size_t>(lane);
                y[li].drop_before(n1 - margin);
                w[li].drop_before(n1 - margin);
                x[li].drop_before(n1 - margin);
            }
            tx.trim(n1, k1 - res.delay_symbols - 16);
        }
    } catch (const DivergenceError& ex) {
        res.diverged = true;
        res.diagnostic = ex.what();
    }

    res.ffe = ffe;
    res.final_ber = res.meas_bits > 0 ? static_cast<double>(res.meas_bit_errors) / static_cast<double>(res.meas_bits) : 0.0;
    res.final_ber_upper95 = ber_upper95(res.meas_bit_errors, res.meas_bits);
    res.final_mse_db = meas_mse_blocks > 0 ? 10.0 * std::log10(std::max(1e-30, meas_mse_acc / static_cast<double>(meas_mse_blocks))) : -300.0;
    return res;
}

} // namespace ebpcal
