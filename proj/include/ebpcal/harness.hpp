// SPDX-License-Identifier: Apache-2.0
//
// Scenario-driven front end used by the CLI and the acceptance suite:
// single runs with artifact emission, paired Monte Carlo sweeps over a
// worker pool, SNDR probes of the calibrated chain, and the randomized
// gradient-check report. All tabular artifacts are CSV.

#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

#include "ebpcal/ebp.hpp"
#include "ebpcal/metrics.hpp"
#include "ebpcal/oracle.hpp"

namespace ebpcal {

namespace detail {

inline std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::ofstream open_artifact(const std::filesystem::path& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    std::ofstream f(dir / name, std::ios::binary); // fixed newlines for byte-stable artifacts
    if (!f) throw std::runtime_error("cannot open artifact " + (dir / name).string());
    return f;
}

} // namespace detail

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& trace) {
    os << "block,symbols,bit_errors,bits,ber_inst,ber_ma,mse_db,updates\n";
    for (const auto& r : trace) {
        os << r.block << ',' << r.symbols_done << ',' << r.bit_errors << ',' << r.bits << ','
           << detail::fmt_g(r.ber_inst) << ',' << detail::fmt_g(r.ber_ma) << ','
           << detail::fmt_g(r.mse_db) << ',' << r.updates << "\n";
    }
}

inline void write_metrics_csv(std::ostream& os, const RunResult& r) {
    os << "final_ber,final_ber_upper95,meas_bits,meas_bit_errors,final_mse_db,delay_symbols,diverged\n";
    os << detail::fmt_g(r.final_ber) << ',' << detail::fmt_g(r.final_ber_upper95) << ',' << r.meas_bits
       << ',' << r.meas_bit_errors << ',' << detail::fmt_g(r.final_mse_db) << ',' << r.delay_symbols
       << ',' << (r.diverged ? 1 : 0) << "\n";
}

inline void write_coeffs_csv(std::ostream& os, const RunResult& r, int m, int lg) {
    os << "update";
    for (int lane = 1; lane <= 4; ++lane)
        for (int set = 0; set < m; ++set)
            for (int l = 0; l < lg; ++l) os << ",g_i" << lane << "_m" << set << "_l" << l;
    os << "\n";
    for (std::size_t p = 0; p < r.ce_snapshots.size(); ++p) {
        os << p;
        for (double v : r.ce_snapshots[p]) os << ',' << detail::fmt_g(v);
        os << "\n";
    }
}

inline void write_actuators_csv(std::ostream& os, const ActuatorState& a) {
    os << "lane,kind,index,value\n";
    for (int lane = 0; lane < 4; ++lane) {
        for (int sw = 0; sw < a.m1; ++sw)
            os << (lane + 1) << ",delay_code," << sw << ','
               << a.delay_code[static_cast<std::size_t>(lane)][static_cast<std::size_t>(sw)] << "\n";
        for (int mm = 0; mm < a.m; ++mm)
            os << (lane + 1) << ",gain_trim," << mm << ','
               << detail::fmt_g(a.gain_trim[static_cast<std::size_t>(lane)][static_cast<std::size_t>(mm)]) << "\n";
        for (int mm = 0; mm < a.m; ++mm)
            os << (lane + 1) << ",offset_trim_fs," << mm << ','
               << detail::fmt_g(a.offset_trim_fs[static_cast<std::size_t>(lane)][static_cast<std::size_t>(mm)]) << "\n";
    }
}

// ---------------------------------------------------------------------------
// SNDR probe of the (possibly calibrated) chain, lane by lane

struct SndrProbe {
    SndrReport pre;
    SndrReport post;
    int bin = 0;
    double freq_hz = 0.0;
};

// Feed a coherent full-scale-ish tone through the lane's TI-ADC model and, in
// the all-digital variant, through the converged offset estimate and CE.
inline SndrProbe sndr_probe(const ScenarioConfig& sc, const RunResult& run, int lane, int bin) {
    const AfeConfig afe_cfg = scenario_afe(sc, 0);
    const int n_fft = sc.sndr_n_fft;
    const int settle = 512;
    const int n = n_fft + settle;
    const double amp = sc.full_scale * std::pow(10.0, -1.0 / 20.0); // -1 dBFS probe
    const std::vector<double> tone = synth_coherent_sine(n, bin, n_fft, amp);

    auto capture = [&](const ImpairmentSet& imp, const CeState* ce) {
        const TiAdcModel model = build_tiadc_model(imp, lane, afe_cfg);
        std::vector<double> y = digitize(tone, model, derive_seed(sc.master_seed, "sndr.jitter"));
        std::vector<double> out;
        if (ce != nullptr) {
            const auto li = static_cast<std::size_t>(lane);
            const std::vector<double> w = offset_subtract(y, ce->offsets[li]);
            out = ce_apply(w, ce->fir[li]);
        } else {
            out = std::move(y);
        }
        return std::vector<double>(out.end() - n_fft, out.end());
    };

    SndrProbe p;
    p.bin = bin;
    p.freq_hz = sc.sample_rate_hz() * bin / static_cast<double>(n_fft);
    if (sc.mode == CalMode::digital) {
        p.pre = sndr_sfdr(capture(run.impairments, nullptr), n_fft, sc.full_scale, bin, sc.sample_rate_hz());
        p.post = sndr_sfdr(capture(run.impairments, &run.ce), n_fft, sc.full_scale, bin, sc.sample_rate_hz());
    } else {
        p.pre = sndr_sfdr(capture(run.impairments, nullptr), n_fft, sc.full_scale, bin, sc.sample_rate_hz());
        p.post = sndr_sfdr(capture(run.effective, nullptr), n_fft, sc.full_scale, bin, sc.sample_rate_hz());
    }
    return p;
}

inline int default_probe_bin(const ScenarioConfig& sc) {
    int bin = static_cast<int>(std::lround(sc.sndr_tone_frac * sc.sndr_n_fft / 2.0));
    if (bin % 2 == 0) bin += 1; // odd bin keeps harmonics off the fundamental
    return bin;
}

// ---------------------------------------------------------------------------
// Single scenario run with artifacts

inline RunResult run_scenario(const ScenarioConfig& sc, const std::string& out_dir) {
    const std::filesystem::path dir(out_dir);
    {
        auto f = detail::open_artifact(dir, "config_echo.txt");
        f << sc.echo();
    }
    RunOptions opt;
    const RunResult res = run_calibration(sc, opt);
    {
        auto f = detail::open_artifact(dir, "impairments.txt");
        save_impairments(res.impairments, f);
    }
    {
        auto f = detail::open_artifact(dir, "trace.csv");
        write_trace_csv(f, res.trace);
    }
    {
        auto f = detail::open_artifact(dir, "metrics.csv");
        write_metrics_csv(f, res);
    }
    if (sc.trace_coefficients) {
        auto f = detail::open_artifact(dir, "coeffs.csv");
        write_coeffs_csv(f, res, res.ce.fir[0].m, res.ce.fir[0].lg);
    }
    if (sc.mode == CalMode::mixed) {
        auto f = detail::open_artifact(dir, "actuators.csv");
        write_actuators_csv(f, res.actuators);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Monte Carlo sweep with paired with/without-compensation arms

struct TrialResult {
    std::int64_t trial = 0;
    double ber_with = 0.0;
    double ber_without = 0.0;
    double mse_with_db = 0.0;
    double mse_without_db = 0.0;
    bool diverged_with = false;
    bool diverged_without = false;
    std::string diagnostic;
};

struct MonteCarloResult {
    std::vector<TrialResult> trials;
    Histogram hist_with;
    Histogram hist_without;
    double median_with = 0.0;
    double median_without = 0.0;
    std::int64_t failures = 0;
};

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline MonteCarloResult run_montecarlo(const ScenarioConfig& sc, int jobs = 1,
                                       const std::function<void(std::int64_t)>& progress = {}) {
    MonteCarloResult mc;
    mc.trials.resize(static_cast<std::size_t>(sc.trials));
    std::atomic<std::int64_t> next{0};
    std::atomic<std::int64_t> done{0};

    auto worker = [&]() {
        for (;;) {
            const std::int64_t t = next.fetch_add(1);
            if (t >= sc.trials) return;
            TrialResult tr;
            tr.trial = t;
            try {
                const ImpairmentSet imp = scenario_impairments(sc, static_cast<std::uint64_t>(t));
                RunOptions with_opt;
                with_opt.compensation_enabled = true;
                with_opt.trial_index = static_cast<std::uint64_t>(t);
                with_opt.impairments = &imp;
                const RunResult rw = run_calibration(sc, with_opt);
                RunOptions wo_opt = with_opt;
                wo_opt.compensation_enabled = false;
                const RunResult ro = run_calibration(sc, wo_opt);
                tr.ber_with = rw.final_ber;
                tr.ber_without = ro.final_ber;
                tr.mse_with_db = rw.final_mse_db;
                tr.mse_without_db = ro.final_mse_db;
                tr.diverged_with = rw.diverged;
                tr.diverged_without = ro.diverged;
                if (rw.diverged) tr.diagnostic = rw.diagnostic;
                if (ro.diverged) tr.diagnostic += (tr.diagnostic.empty() ? "" : "; ") + ro.diagnostic;
            } catch (const std::exception& ex) {
                tr.diverged_with = tr.diverged_without = true;
                tr.diagnostic = ex.what();
            }
            mc.trials[static_cast<std::size_t>(t)] = std::move(tr);
            const std::int64_t d = done.fetch_add(1) + 1;
            if (progress) progress(d);
        }
    };

    jobs = std::max(1, jobs);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs - 1));
    for (int i = 1; i < jobs; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    std::vector<double> bw, bo;
    for (const auto& tr : mc.trials) {
        if (tr.diverged_with || tr.diverged_without) {
            ++mc.failures;
            continue;
        }
        bw.push_back(tr.ber_with);
        bo.push_back(tr.ber_without);
    }
    if (!bw.empty()) {
        mc.hist_with = histogram(bw);
        mc.hist_without = histogram(bo);
        mc.median_with = median_of(bw);
        mc.median_without = median_of(bo);
    }
    return mc;
}

inline void write_montecarlo_artifacts(const ScenarioConfig& sc, const MonteCarloResult& mc,
                                       const std::string& out_dir) {
    const std::filesystem::path dir(out_dir);
    {
        auto f = detail::open_artifact(dir, "config_echo.txt");
        f << sc.echo();
    }
    {
        auto f = detail::open_artifact(dir, "trials.csv");
        f << "trial,ber_with,ber_without,mse_with_db,mse_without_db,diverged_with,diverged_without,diagnostic\n";
        for (const auto& t : mc.trials)
            f << t.trial << ',' << detail::fmt_g(t.ber_with) << ',' << detail::fmt_g(t.ber_without) << ','
              << detail::fmt_g(t.mse_with_db) << ',' << detail::fmt_g(t.mse_without_db) << ','
              << (t.diverged_with ? 1 : 0) << ',' << (t.diverged_without ? 1 : 0) << ','
              << t.diagnostic << "\n";
    }
    if (!mc.hist_with.counts.empty()) {
        auto f = detail::open_artifact(dir, "hist.csv");
        f << "bin_lo,bin_hi,count_with,count_without\n";
        for (std::size_t i = 0; i < mc.hist_with.counts.size(); ++i)
            f << detail::fmt_g(mc.hist_with.edges[i]) << ',' << detail::fmt_g(mc.hist_with.edges[i + 1]) << ','
              << mc.hist_with.counts[i] << ',' << mc.hist_without.counts[i] << "\n";
    }
    {
        auto f = detail::open_artifact(dir, "summary.csv");
        f << "trials,failures,median_ber_with,median_ber_without\n";
        f << mc.trials.size() << ',' << mc.failures << ',' << detail::fmt_g(mc.median_with) << ','
          << detail::fmt_g(mc.median_without) << "\n";
    }
}

// ---------------------------------------------------------------------------
// SNDR sweep artifact

inline void run_sndr_sweep(const ScenarioConfig& sc, const std::vector<int>& bins,
                           const std::string& out_dir) {
    const std::filesystem::path dir(out_dir);
    {
        auto f = detail::open_artifact(dir, "config_echo.txt");
        f << sc.echo();
    }
    RunOptions opt;
    const RunResult run = run_calibration(sc, opt);
    auto f = detail::open_artifact(dir, "sndr.csv");
    f << "bin,freq_hz,sndr_pre_db,sfdr_pre_db,sndr_post_db,sfdr_post_db,enob_pre,enob_post\n";
    for (int bin : bins) {
        const SndrProbe p = sndr_probe(sc, run, 0, bin);
        f << bin << ',' << detail::fmt_g(p.freq_hz) << ',' << detail::fmt_g(p.pre.sndr_db) << ','
          << detail::fmt_g(p.pre.sfdr_db) << ',' << detail::fmt_g(p.post.sndr_db) << ','
          << detail::fmt_g(p.post.sfdr_db) << ',' << detail::fmt_g(p.pre.enob_bits) << ','
          << detail::fmt_g(p.post.enob_bits) << "\n";
    }
}

// ---------------------------------------------------------------------------
// Randomized gradient check (backpropagation vs finite differences)

struct GradientCheckReport {
    int instances = 0;
    int failures = 0;
    double worst_rel_err = 0.0;
    std::vector<std::string> lines;
};

inline GradientCheckReport gradient_check(int instances = 100, std::uint64_t seed = 7,
                                          double tolerance = 1e-6) {
    GradientCheckReport rep;
    Rng rng(seed);
    const int m = 4;
    const int lg_choices[] = {3, 5};
    const int lt_choices[] = {1, 5, 9};
    for (int inst = 0; inst < instances; ++inst) {
        const int lg = lg_choices[rng.next_u64() % 2];
        const int lt = lt_choices[rng.next_u64() % 3];
        const std::int64_t symbols = 64 + static_cast<std::int64_t>(rng.next_u64() % 193);
        std::array<std::vector<double>, 4> w;
        for (auto& lane : w) {
            lane.resize(static_cast<std::size_t>(2 * symbols));
            for (auto& v : lane) v = rng.normal(0.6);
        }
        CeState ce = CeState::identity(m, lg, PinConstraint{0, 0, (lg - 1) / 2}, false);
        for (int lane = 0; lane < 4; ++lane)
            for (int set = 0; set < m; ++set)
                for (int l = 0; l < lg; ++l) ce.fir[static_cast<std::size_t>(lane)].at(set, l) += rng.normal(0.2);
        MimoFir gamma = MimoFir::identity(lt, (lt - 1) / 2);
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 4; ++i)
                for (int l = 0; l < lt; ++l) gamma.at(j, i, l) += rng.normal(0.25);

        const ChainSnapshot snap = make_snapshot(w, ce, gamma, Modulation::qam64);
        const auto bp = mean_bp_gradient(snap);
        double max_abs_fd = 0.0, max_abs_diff = 0.0;
        for (int lane = 0; lane < 4; ++lane)
            for (int set = 0; set < m; ++set)
                for (int l = 0; l < lg; ++l) {
                    const double fd = fd_gradient(snap, lane, set, l, 1e-6);
                    const double b = bp[static_cast<std::size_t>(lane)][static_cast<std::size_t>(set * lg + l)];
                    max_abs_fd = std::max(max_abs_fd, std::abs(fd));
                    max_abs_diff = std::max(max_abs_diff, std::abs(fd - b));
                }
        const double rel = max_abs_diff / std::max(max_abs_fd, 1e-12);
        rep.worst_rel_err = std::max(rep.worst_rel_err, rel);
        const bool ok = rel < tolerance;
        if (!ok) ++rep.failures;
        char line[160];
        std::snprintf(line, sizeof line, "%s instance %3d: M=4 Lg=%d Lgamma=%d symbols=%lld rel_err=%.3e",
                      ok ? "PASS" : "FAIL", inst, lg, lt, static_cast<long long>(symbols), rel);
        rep.lines.emplace_back(line);
        ++rep.instances;
    }
    return rep;
}

} // namespace ebpcal
