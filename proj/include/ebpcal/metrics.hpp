// SPDX-License-Identifier: Apache-2.0
//
// Quantitative evaluation: BER with moving average, SNDR/SFDR/ENOB from
// windowed spectra in dBFS, interleave-spur identification and log-spaced
// histograms.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ebpcal/dsp.hpp"

namespace ebpcal {

// Lag that maximizes symbol agreement between detected and reference level
// streams: detected[k] is compared with reference[k - lag]. Throws when no
// lag reaches the agreement threshold.
inline std::int64_t align_by_correlation(std::span<const int> detected, std::span<const int> reference,
                                         int max_lag, double min_agreement = 0.5) {
    if (detected.empty() || reference.empty())
        throw std::invalid_argument("align_by_correlation: empty stream");
    std::int64_t best_lag = -1;
    double best = -1.0;
    for (int lag = 0; lag <= max_lag; ++lag) {
        std::int64_t agree = 0, total = 0;
        for (std::size_t k = static_cast<std::size_t>(lag); k < detected.size(); ++k) {
            const std::size_t r = k - static_cast<std::size_t>(lag);
            if (r >= reference.size()) break;
            agree += detected[k] == reference[r] ? 1 : 0;
            ++total;
        }
        if (total < 16) continue;
        const double frac = static_cast<double>(agree) / static_cast<double>(total);
        if (frac > best) {
            best = frac;
            best_lag = lag;
        }
    }
    if (best_lag < 0 || best < min_agreement)
        throw std::runtime_error("align_by_correlation: alignment failure");
    return best_lag;
}

struct BerTrace {
    std::vector<double> instantaneous; // per block
    std::vector<double> moving_average;
    std::int64_t bits = 0;
    std::int64_t errors = 0;
    double ber = 0.0;
    double upper95 = 0.0; // one-sided 95% bound, reported when errors < 100
    bool under_sampled = false;
};

// Instantaneous BER per block of `block_bits` bits plus a moving average of
// the given window (default 10 blocks). Streams must already be aligned.
inline BerTrace ber(std::span<const std::uint8_t> detected_bits, std::span<const std::uint8_t> reference_bits,
                    int ma_window = 10, std::int64_t block_bits = 4096) {
    const std::size_t n = std::min(detected_bits.size(), reference_bits.size());
    if (n == 0) throw std::invalid_argument("ber: empty streams");
    BerTrace t;
    std::int64_t blk_err = 0, blk_cnt = 0;
    std::vector<double> window;
    for (std::size_t i = 0; i < n; ++i) {
        blk_err += (detected_bits[i] ^ reference_bits[i]) & 1;
        if (++blk_cnt == block_bits || i + 1 == n) {
            const double inst = static_cast<double>(blk_err) / static_cast<double>(blk_cnt);
            t.instantaneous.push_back(inst);
            window.push_back(inst);
            if (static_cast<int>(window.size()) > ma_window) window.erase(window.begin());
            double s = 0.0;
            for (double v : window) s += v;
            t.moving_average.push_back(s / static_cast<double>(window.size()));
            t.errors += blk_err;
            t.bits += blk_cnt;
            blk_err = blk_cnt = 0;
        }
    }
    t.ber = static_cast<double>(t.errors) / static_cast<double>(t.bits);
    t.under_sampled = t.errors < 100;
    const double e = static_cast<double>(t.errors);
    t.upper95 = (e + 1.96 * std::sqrt(e) + 1.92) / static_cast<double>(t.bits);
    return t;
}

// ---------------------------------------------------------------------------
// SNDR / SFDR

struct SpurInfo {
    int bin = 0;
    double freq = 0.0;
    double level_dbfs = 0.0;
};

struct SndrReport {
    double sndr_db = 0.0;
    double sfdr_db = 0.0;
    double enob_bits = 0.0;
    int fundamental_bin = 0;
    double fundamental_dbfs = 0.0;
    std::vector<SpurInfo> spurs; // non-fundamental peaks, strongest first
};

// SNDR/SFDR from a coherent sine capture. The fundamental's power is summed
// over the window mainlobe (+/- kWindowLeakBins); the same exclusion applies
// around DC. SFDR compares the fundamental bin peak against the largest
// remaining bin. fundamental_bin < 0 selects the strongest bin automatically.
inline SndrReport sndr_sfdr(std::span<const double> samples, int n_fft, double full_scale,
                            int fundamental_bin = -1, double sample_rate = 1.0) {
    const Spectrum sp = spectrum_dbfs(samples, n_fft, full_scale, sample_rate);
    const int nb = sp.bins();
    const int guard = kWindowLeakBins;
    std::vector<double> p(static_cast<std::size_t>(nb));
    for (int k = 0; k < nb; ++k) {
        const double a = std::pow(10.0, sp.bin_magnitudes_dbfs[static_cast<std::size_t>(k)] / 20.0);
        p[static_cast<std::size_t>(k)] = a * a;
    }
    int fund = fundamental_bin;
    if (fund < 0) {
        double best = -1.0;
        for (int k = guard + 1; k < nb - 1; ++k)
            if (p[static_cast<std::size_t>(k)] > best) {
                best = p[static_cast<std::size_t>(k)];
                fund = k;
            }
    }
    if (fund <= guard || fund >= nb - 1)
        throw std::runtime_error("sndr_sfdr: fundamental not found");
    if (sp.bin_magnitudes_dbfs[static_cast<std::size_t>(fund)] < -120.0)
        throw std::runtime_error("sndr_sfdr: fundamental not found");

    auto in_fund = [&](int k) { return std::abs(k - fund) <= guard; };
    auto in_dc = [&](int k) { return k <= guard; };

    double p_sig = 0.0, p_nd = 0.0;
    for (int k = 0; k < nb; ++k) {
        if (in_dc(k)) continue;
        if (in_fund(k))
            p_sig += p[static_cast<std::size_t>(k)];
        else
            p_nd += p[static_cast<std::size_t>(k)];
    }
    SndrReport r;
    r.fundamental_bin = fund;
    r.fundamental_dbfs = sp.bin_magnitudes_dbfs[static_cast<std::size_t>(fund)];
    r.sndr_db = 10.0 * std::log10(p_sig / std::max(p_nd, 1e-30));
    r.enob_bits = (r.sndr_db - 1.76) / 6.02;

    // spur scan: local maxima outside the DC and fundamental regions
    for (int k = 1; k < nb - 1; ++k) {
        if (in_dc(k) || in_fund(k)) continue;
        const double v = sp.bin_magnitudes_dbfs[static_cast<std::size_t>(k)];
        if (v >= sp.bin_magnitudes_dbfs[static_cast<std::size_t>(k - 1)] &&
            v >= sp.bin_magnitudes_dbfs[static_cast<std::size_t>(k + 1)]) {
            r.spurs.push_back({k, sp.bin_freqs[static_cast<std::size_t>(k)], v});
        }
    }
    std::sort(r.spurs.begin(), r.spurs.end(),
              [](const SpurInfo& a, const SpurInfo& b) { return a.level_dbfs > b.level_dbfs; });
    if (r.spurs.size() > 64) r.spurs.resize(64);
    r.sfdr_db = r.spurs.empty() ? 200.0 : r.fundamental_dbfs - r.spurs.front().level_dbfs;
    return r;
}

// ---------------------------------------------------------------------------
// Histograms

struct Histogram {
    std::vector<double> edges; // bins+1 edges, log spaced
    std::vector<std::int64_t> counts;
};

// Log-spaced histogram (Fig.-6 style BER histograms). Values at or below the
// lowest edge land in the first bin, values above the top edge in the last.
inline Histogram histogram(std::span<const double> values, double lo = 1e-7, double hi = 1.0,
                           int bins_per_decade = 4) {
    if (values.empty()) throw std::invalid_argument("histogram: empty input");
    if (!(lo > 0.0 && hi > lo)) throw std::invalid_argument("histogram: bad range");
    const double decades = std::log10(hi / lo);
    const int nbins = std::max(1, static_cast<int>(std::lround(decades * bins_per_decade)));
    Histogram h;
    h.edges.resize(static_cast<std::size_t>(nbins + 1));
    for (int i = 0; i <= nbins; ++i)
        h.edges[static_cast<std::size_t>(i)] = lo * std::pow(10.0, decades * i / nbins);
    h.counts.assign(static_cast<std::size_t>(nbins), 0);
    for (double v : values) {
        int idx = 0;
        if (v > lo) {
            idx = static_cast<int>(std::floor(std::log10(v / lo) / decades * nbins));
            idx = std::clamp(idx, 0, nbins - 1);
        }
        h.counts[static_cast<std::size_t>(idx)] += 1;
    }
    return h;
}

} // namespace ebpcal
