// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: run single scenarios, Monte Carlo sweeps, SNDR
// sweeps of the calibrated converter, and the randomized gradient check.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "ebpcal/harness.hpp"

namespace {

struct CommonFlags {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::int64_t trials = 0;
    std::string mode;
    int jobs = 1;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required = true) {
    auto* c = cmd->add_option("--config", f.config, "scenario config file");
    if (config_required) c->required();
    cmd->add_option("--out", f.out, "output directory (overrides config)");
    cmd->add_option("--seed", f.seed, "master seed (overrides config)")->each([&](const std::string&) {
        f.seed_set = true;
    });
    cmd->add_option("--trials", f.trials, "trial count (overrides config)");
    cmd->add_option("--mode", f.mode, "calibration mode: digital|mixed (overrides config)")
        ->check(CLI::IsMember({"digital", "mixed"}));
    cmd->add_option("--jobs", f.jobs, "worker threads for Monte Carlo")->check(CLI::PositiveNumber);
}

ebpcal::ScenarioConfig load_with_overrides(const CommonFlags& f) {
    ebpcal::ScenarioConfig sc = ebpcal::load_scenario(f.config);
    if (!f.out.empty()) sc.out_dir = f.out;
    if (f.seed_set) sc.master_seed = f.seed;
    if (f.trials > 0) sc.trials = f.trials;
    if (!f.mode.empty()) sc.mode = f.mode == "mixed" ? ebpcal::CalMode::mixed : ebpcal::CalMode::digital;
    sc.validate();
    return sc;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ebpcal - backpropagation-based background calibration of TI-ADC receivers"};
    app.require_subcommand(1);

    CommonFlags run_f, mc_f, sndr_f, grad_f;

    auto* run_cmd = app.add_subcommand("run", "run one scenario and emit artifacts");
    add_common(run_cmd, run_f);

    auto* mc_cmd = app.add_subcommand("montecarlo", "paired with/without-compensation Monte Carlo sweep");
    add_common(mc_cmd, mc_f);

    auto* sndr_cmd = app.add_subcommand("sndr-sweep", "calibrate, then sweep SNDR/SFDR vs tone frequency");
    add_common(sndr_cmd, sndr_f);
    int sndr_points = 8;
    sndr_cmd->add_option("--points", sndr_points, "number of probe tones across the band")->check(CLI::PositiveNumber);

    auto* grad_cmd = app.add_subcommand("gradient-check", "backpropagation vs finite-difference oracle");
    add_common(grad_cmd, grad_f, false);
    int grad_instances = 100;
    grad_cmd->add_option("--instances", grad_instances, "randomized instances")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            const auto sc = load_with_overrides(run_f);
            const auto res = ebpcal::run_scenario(sc, sc.out_dir);
            std::printf("final_ber=%.6g final_mse_db=%.3f diverged=%d artifacts=%s\n", res.final_ber,
                        res.final_mse_db, res.diverged ? 1 : 0, sc.out_dir.c_str());
            if (res.diverged) {
                std::fprintf(stderr, "divergence: %s\n", res.diagnostic.c_str());
                return 2;
            }
            return 0;
        }
        if (mc_cmd->parsed()) {
            const auto sc = load_with_overrides(mc_f);
            const auto mc = ebpcal::run_montecarlo(sc, mc_f.jobs, [&](std::int64_t d) {
                if (d % 10 == 0 || d == sc.trials)
                    std::fprintf(stderr, "\rtrials %lld/%lld", static_cast<long long>(d),
                                 static_cast<long long>(sc.trials));
            });
            std::fprintf(stderr, "\n");
            ebpcal::write_montecarlo_artifacts(sc, mc, sc.out_dir);
            std::printf("trials=%zu failures=%lld median_ber_with=%.6g median_ber_without=%.6g\n",
                        mc.trials.size(), static_cast<long long>(mc.failures), mc.median_with,
                        mc.median_without);
            return 0;
        }
        if (sndr_cmd->parsed()) {
            const auto sc = load_with_overrides(sndr_f);
            std::vector<int> bins;
            for (int p = 1; p <= sndr_points; ++p) {
                int bin = static_cast<int>(std::lround(0.9 * sc.sndr_n_fft / 2.0 * p / sndr_points));
                if (bin % 2 == 0) bin += 1;
                bins.push_back(bin);
            }
            ebpcal::run_sndr_sweep(sc, bins, sc.out_dir);
            std::printf("sndr sweep written to %s\n", sc.out_dir.c_str());
            return 0;
        }
        if (grad_cmd->parsed()) {
            const auto rep = ebpcal::gradient_check(grad_instances);
            for (const auto& line : rep.lines) std::puts(line.c_str());
            std::printf("gradient-check: %d instances, %d failures, worst_rel_err=%.3e\n", rep.instances,
                        rep.failures, rep.worst_rel_err);
            return rep.failures == 0 ? 0 : 1;
        }
    } catch (const ebpcal::ConfigError& ex) {
        std::fprintf(stderr, "config error: %s\n", ex.what());
        return 64;
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 1;
    }
    return 0;
}
