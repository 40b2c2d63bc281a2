// SPDX-License-Identifier: Apache-2.0
//
// Transmit chain: PRBS symbol generation, Gray-mapped QAM, root-raised-cosine
// pulse shaping at 2 samples/symbol, a 2x2 complex MIMO channel, and AWGN.
// Lane numbering follows the receiver convention: (H,I)->1, (H,Q)->2,
// (V,I)->3, (V,Q)->4 (0-based 0..3 in code).

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "ebpcal/dsp.hpp"
#include "ebpcal/rng.hpp"
#include "ebpcal/tape.hpp"

namespace ebpcal {

enum class Modulation : int { qam4 = 4, qam16 = 16, qam64 = 64, qam256 = 256 };

inline Modulation modulation_from_order(int order) {
    switch (order) {
        case 4: return Modulation::qam4;
        case 16: return Modulation::qam16;
        case 64: return Modulation::qam64;
        case 256: return Modulation::qam256;
        default: throw std::invalid_argument("modulation: unsupported QAM order " + std::to_string(order));
    }
}

// PAM levels per I/Q component (e.g. 64-QAM -> 8).
inline int pam_levels(Modulation m) {
    switch (m) {
        case Modulation::qam4: return 2;
        case Modulation::qam16: return 4;
        case Modulation::qam64: return 8;
        case Modulation::qam256: return 16;
    }
    return 2;
}

inline int bits_per_pam(Modulation m) {
    int l = pam_levels(m), b = 0;
    while (l > 1) {
        l >>= 1;
        ++b;
    }
    return b;
}

// Half level spacing d so that the complex constellation has unit average
// power: levels are d*{+/-1, +/-3, ...} per component.
inline double pam_scale(Modulation m) {
    const int order = static_cast<int>(m);
    return std::sqrt(3.0 / (2.0 * (order - 1)));
}

inline double pam_value(Modulation m, int level_index) {
    return pam_scale(m) * (2.0 * level_index - (pam_levels(m) - 1));
}

inline std::uint32_t gray_encode(std::uint32_t b) { return b ^ (b >> 1); }

inline std::uint32_t gray_decode(std::uint32_t g) {
    g ^= g >> 1;
    g ^= g >> 2;
    g ^= g >> 4;
    return g;
}

// Fibonacci LFSR PRBS with standard maximal-length taps.
class PrbsLfsr {
  public:
    PrbsLfsr(int order, std::uint64_t seed) : order_(order) {
        switch (order) {
            case 7: tap_ = 6; break;
            case 9: tap_ = 5; break;
            case 11: tap_ = 9; break;
            case 15: tap_ = 14; break;
            case 20: tap_ = 17; break;
            case 23: tap_ = 18; break;
            case 31: tap_ = 28; break;
            default: throw std::invalid_argument("PrbsLfsr: unsupported order " + std::to_string(order));
        }
        const std::uint64_t mask = (order == 64) ? ~0ull : ((1ull << order) - 1);
        state_ = seed & mask;
        if (state_ == 0) state_ = 1;
    }

    int next_bit() {
        const int out = static_cast<int>(state_ & 1);
        // Fibonacci form of x^order + x^tap + 1: feedback from bits 0 and order-tap
        const int fb = static_cast<int>((state_ ^ (state_ >> (order_ - tap_))) & 1);
        state_ = (state_ >> 1) | (static_cast<std::uint64_t>(fb) << (order_ - 1));
        return out;
    }

    std::uint32_t next_bits(int k) {
        std::uint32_t v = 0;
        for (int i = 0; i < k; ++i) v = (v << 1) | static_cast<std::uint32_t>(next_bit());
        return v;
    }

  private:
    std::uint64_t state_;
    int order_;
    int tap_;
};

struct SymbolGenConfig {
    Modulation mod = Modulation::qam64;
    std::array<int, 4> prbs_order{23, 15, 31, 11};
    std::array<std::uint64_t, 4> prbs_seed{1, 2, 3, 4};
};

struct SymbolStream {
    Modulation mod = Modulation::qam64;
    std::array<std::vector<int>, 4> level; // per lane PAM level index, 0..L-1
    std::array<std::vector<double>, 4> value;

    std::int64_t count() const { return static_cast<std::int64_t>(level[0].size()); }
};

// Reproducible Gray-mapped QAM symbols; one PRBS per lane.
inline SymbolStream generate_symbols(const SymbolGenConfig& cfg, std::int64_t count) {
    if (count < 1) throw std::invalid_argument("generate_symbols: count must be >= 1");
    SymbolStream s;
    s.mod = cfg.mod;
    const int kb = bits_per_pam(cfg.mod);
    const int levels = pam_levels(cfg.mod);
    for (int lane = 0; lane < 4; ++lane) {
        PrbsLfsr prbs(cfg.prbs_order[static_cast<std::size_t>(lane)], cfg.prbs_seed[static_cast<std::size_t>(lane)]);
        auto& li = s.level[static_cast<std::size_t>(lane)];
        auto& lv = s.value[static_cast<std::size_t>(lane)];
        li.resize(static_cast<std::size_t>(count));
        lv.resize(static_cast<std::size_t>(count));
        for (std::int64_t k = 0; k < count; ++k) {
            const std::uint32_t bits = prbs.next_bits(kb);
            const int idx = static_cast<int>(gray_decode(bits)) % levels;
            li[static_cast<std::size_t>(k)] = idx;
            lv[static_cast<std::size_t>(k)] = pam_value(cfg.mod, idx);
        }
    }
    return s;
}

// Bits carried by a detected level index (Gray labelling), MSB first.
inline std::uint32_t level_to_bits(int level_index) {
    return gray_encode(static_cast<std::uint32_t>(level_index));
}

// Root-raised-cosine pulse, sps samples per symbol, odd length
// 2*span_symbols*sps + 1, normalized to unit energy.
inline RealFir design_rrc(double rolloff, int sps, int span_symbols) {
    if (!(rolloff > 0.0 && rolloff < 1.0)) throw std::invalid_argument("design_rrc: rolloff out of (0,1)");
    const int half = span_symbols * sps;
    std::vector<double> taps(static_cast<std::size_t>(2 * half + 1));
    const double b = rolloff;
    for (int n = -half; n <= half; ++n) {
        const double t = static_cast<double>(n) / sps; // in symbols
        double v = 0.0;
        if (n == 0) {
            v = 1.0 - b + 4.0 * b / std::numbers::pi;
        } else if (std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-9) {
            v = (b / std::sqrt(2.0)) * ((1.0 + 2.0 / std::numbers::pi) * std::sin(std::numbers::pi / (4.0 * b)) +
                                        (1.0 - 2.0 / std::numbers::pi) * std::cos(std::numbers::pi / (4.0 * b)));
        } else {
            const double num = std::sin(std::numbers::pi * t * (1.0 - b)) +
                               4.0 * b * t * std::cos(std::numbers::pi * t * (1.0 + b));
            const double den = std::numbers::pi * t * (1.0 - (4.0 * b * t) * (4.0 * b * t));
            v = num / den;
        }
        taps[static_cast<std::size_t>(n + half)] = v;
    }
    double e = 0.0;
    for (double v : taps) e += v * v;
    const double g = 1.0 / std::sqrt(e);
    for (auto& v : taps) v *= g;
    return RealFir(std::move(taps));
}

// ---------------------------------------------------------------------------
// Channel

// 2x2 complex MIMO channel at rate 2/T plus per-lane AWGN variance. The
// `center` tap index is the integer group-delay reference used for symbol
// alignment bookkeeping.
struct ChannelModel {
    std::array<std::array<std::vector<std::complex<double>>, 2>, 2> taps; // taps[out][in]
    int center = 0;
    double lane_noise_variance = 0.0;

    int length() const { return static_cast<int>(taps[0][0].size()); }

    bool any_nonzero() const {
        for (const auto& row : taps)
            for (const auto& h : row)
                for (auto v : h)
                    if (std::abs(v) > 0.0) return true;
        return false;
    }

    double total_energy() const {
        double e = 0.0;
        for (const auto& row : taps)
            for (const auto& h : row)
                for (auto v : h) e += std::norm(v);
        return e;
    }

    // Scale so total received power equals transmitted power (energy 2 for
    // the two unit-power polarizations).
    void energy_normalize() {
        const double e = total_energy();
        if (e <= 0.0) throw std::invalid_argument("ChannelModel: all responses zero");
        const double g = std::sqrt(2.0 / e);
        for (auto& row : taps)
            for (auto& h : row)
                for (auto& v : h) v *= g;
    }

    static ChannelModel identity() {
        ChannelModel c;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) c.taps[i][j] = {i == j ? std::complex<double>(1.0) : 0.0};
        c.center = 0;
        return c;
    }

    // Frequency-flat polarization rotation by theta (unitary).
    static ChannelModel rotation(double theta_rad) {
        ChannelModel c;
        const double cs = std::cos(theta_rad), sn = std::sin(theta_rad);
        c.taps[0][0] = {std::complex<double>(cs)};
        c.taps[0][1] = {std::complex<double>(sn)};
        c.taps[1][0] = {std::complex<double>(-sn)};
        c.taps[1][1] = {std::complex<double>(cs)};
        c.center = 0;
        return c;
    }

    // Polarization rotation plus symmetric three-tap ISI on every path, with
    // a common group delay so all four lanes stay symbol-aligned.
    static ChannelModel dispersive(double theta_rad, double isi) {
        ChannelModel c = rotation(theta_rad);
        for (auto& row : c.taps)
            for (auto& h : row) {
                const std::complex<double> g = h[0];
                h = {isi * g, g, isi * g};
            }
        c.center = 1;
        c.energy_normalize();
        return c;
    }

    // Band-limiting channel: polarization rotation cascaded with a sampled
    // first-order lowpass on every path (the ISI the receiver equalizer must
    // invert). bandwidth and sample rate in consistent units.
    static ChannelModel lowpass_rotation(double theta_rad, double bandwidth, double sample_rate,
                                         int n_taps = 9) {
        ChannelModel c = rotation(theta_rad);
        const RealFir lp = sample_first_order_lowpass(bandwidth, sample_rate, n_taps);
        for (auto& row : c.taps)
            for (auto& h : row) {
                const std::complex<double> g = h[0];
                h.assign(lp.taps.size(), 0.0);
                for (std::size_t i = 0; i < lp.taps.size(); ++i) h[i] = g * lp.taps[i];
            }
        c.center = 0;
        c.energy_normalize();
        return c;
    }
};

// Text format: optional "center = <int>" line, then one "h<i><j> = re,im re,im ..."
// line per response, i,j in {1,2}. '#' starts a comment.
inline ChannelModel load_channel_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("channel file: cannot open " + path);
    ChannelModel c;
    bool seen[2][2] = {{false, false}, {false, false}};
    int maxlen = 1;
    std::string line;
    c.center = -1;
    while (std::getline(f, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ss(line);
        std::string key, eq;
        if (!(ss >> key)) continue;
        if (!(ss >> eq) || eq != "=") throw std::runtime_error("channel file: expected '=' after " + key);
        if (key == "center") {
            ss >> c.center;
            continue;
        }
        if (key.size() != 3 || key[0] != 'h' || key[1] < '1' || key[1] > '2' || key[2] < '1' || key[2] > '2')
            throw std::runtime_error("channel file: unknown key " + key);
        const int i = key[1] - '1', j = key[2] - '1';
        std::vector<std::complex<double>> taps;
        std::string tok;
        while (ss >> tok) {
            const auto comma = tok.find(',');
            if (comma == std::string::npos) throw std::runtime_error("channel file: tap must be re,im in " + key);
            taps.emplace_back(std::stod(tok.substr(0, comma)), std::stod(tok.substr(comma + 1)));
        }
        if (taps.empty()) throw std::runtime_error("channel file: empty response " + key);
        maxlen = std::max(maxlen, static_cast<int>(taps.size()));
        c.taps[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = std::move(taps);
        seen[i][j] = true;
    }
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            if (!seen[i][j]) c.taps[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = {std::complex<double>(0.0)};
            c.taps[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(maxlen), 0.0);
        }
    if (!c.any_nonzero()) throw std::runtime_error("channel file: all responses zero");
    if (c.center < 0) c.center = (maxlen - 1) / 2;
    c.energy_normalize();
    return c;
}

// ---------------------------------------------------------------------------
// Noise sizing from the analytic QAM BER

inline double qfunc(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

inline double qfunc_inv(double p) {
    if (!(p > 0.0 && p < 0.5)) throw std::invalid_argument("qfunc_inv: p out of (0, 0.5)");
    double lo = 0.0, hi = 40.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (qfunc(mid) > p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Nearest-neighbour Gray-mapped square-QAM BER at a given Es/N0 (linear).
inline double qam_ber(Modulation mod, double es_n0) {
    const double m = static_cast<double>(static_cast<int>(mod));
    const double l = std::sqrt(m);
    const double coef = 4.0 / std::log2(m) * (1.0 - 1.0 / l);
    return coef * qfunc(std::sqrt(3.0 * es_n0 / (m - 1.0)));
}

// Es/N0 (linear) required for the ideal matched-filter receiver to hit the
// target BER.
inline double es_n0_for_ber(Modulation mod, double target_ber) {
    if (!(target_ber > 0.0)) throw std::invalid_argument("es_n0_for_ber: target must be > 0");
    const double m = static_cast<double>(static_cast<int>(mod));
    const double coef = 4.0 / std::log2(m) * (1.0 - 1.0 / std::sqrt(m));
    const double p = target_ber / coef;
    if (!(p < 0.5)) throw std::invalid_argument("es_n0_for_ber: unreachable BER target");
    const double x = qfunc_inv(p);
    return x * x * (m - 1.0) / 3.0;
}

// Per-lane AWGN variance at 2 samples/symbol for a given Es/N0. With
// unit-energy T/2 pulses and unit symbol energy, the complex noise spectral
// level after matched filtering equals twice the per-lane sample variance.
inline double lane_noise_variance_for_es_n0(double es_n0) { return 1.0 / (2.0 * es_n0); }

// AWGN variance per lane sample such that the ideal receiver reaches
// target_ber; target 0 selects the noiseless mode.
inline double set_noise_for_target_ber(Modulation mod, double target_ber) {
    if (target_ber == 0.0) return 0.0;
    return lane_noise_variance_for_es_n0(es_n0_for_ber(mod, target_ber));
}

// ---------------------------------------------------------------------------
// Streaming transmitter

struct TxConfig {
    SymbolGenConfig symbols;
    double rolloff = 0.10;
    int rrc_span_symbols = 10;
    ChannelModel channel = ChannelModel::identity();
    double lane_noise_variance = 0.0;
    std::uint64_t noise_seed = 1;
};

// Produces the four received lane signals at rate 2/T block by block, along
// with the transmitted symbol history for genie training and BER reference.
class TxStream {
  public:
    explicit TxStream(const TxConfig& cfg)
        : cfg_(cfg),
          rrc_(design_rrc(cfg.rolloff, 2, cfg.rrc_span_symbols)),
          noise_(cfg.noise_seed) {
        for (int lane = 0; lane < 4; ++lane)
            prbs_.emplace_back(cfg.symbols.prbs_order[static_cast<std::size_t>(lane)],
                               cfg.symbols.prbs_seed[static_cast<std::size_t>(lane)]);
        ch_len_ = cfg_.channel.length();
    }

    // Integer group delay (in samples at 2/T) from symbol impulse to lane
    // output: RRC center plus channel center.
    int nominal_delay_samples() const { return cfg_.rrc_span_symbols * 2 + cfg_.channel.center; }

    const Tape<double>& lane(int i) const { return lanes_[static_cast<std::size_t>(i)]; }
    int ref_level(int lane, std::int64_t k) const { return sym_level_[static_cast<std::size_t>(lane)].at(k); }
    double ref_value(int lane, std::int64_t k) const { return sym_value_[static_cast<std::size_t>(lane)].at(k); }
    Modulation modulation() const { return cfg_.symbols.mod; }

    // Extend lane tapes so that samples [0, n_end) are available.
    void advance_to(std::int64_t n_end) {
        // need symbols up to ceil((n_end + conv support)/2)
        const std::int64_t k_need = (n_end + 1) / 2 + 2;
        ensure_symbols(k_need);
        while (lanes_[0].end_index() < n_end) produce_sample();
    }

    // Allow dropping history older than n (keeps filter support margin).
    void trim(std::int64_t n, std::int64_t k_sym) {
        const std::int64_t margin = rrc_.length() + 2 * ch_len_ + 4;
        for (auto& t : shaped_) t.drop_before(n - margin);
        for (auto& t : lanes_) t.drop_before(n - margin);
        for (auto& t : sym_value_) t.drop_before(k_sym);
        for (auto& t : sym_level_) t.drop_before(k_sym);
    }

  private:
    void ensure_symbols(std::int64_t k_need) {
        const int kb = bits_per_pam(cfg_.symbols.mod);
        const int levels = pam_levels(cfg_.symbols.mod);
        while (sym_level_[0].end_index() < k_need) {
            for (int lane = 0; lane < 4; ++lane) {
                const std::uint32_t bits = prbs_[static_cast<std::size_t>(lane)].next_bits(kb);
                const int idx = static_cast<int>(gray_decode(bits)) % levels;
                sym_level_[static_cast<std::size_t>(lane)].push_back(idx);
                sym_value_[static_cast<std::size_t>(lane)].push_back(pam_value(cfg_.symbols.mod, idx));
            }
        }
    }

    // One sample at 2/T through shaping, channel and noise, appended to all
    // four lanes.
    void produce_sample() {
        const std::int64_t n = lanes_[0].end_index();
        // shaped_[pol] at n: sum over symbols of rrc, upsampled by 2
        for (int pol = 0; pol < 2; ++pol) {
            std::complex<double> acc = 0.0;
            const int lt = rrc_.length();
            // x[n] = sum_l rrc[l] * v[n-l], v[2k] = a_k
            std::int64_t l0 = n & 1; // parity where v is nonzero
            for (std::int64_t l = l0; l < lt; l += 2) {
                const std::int64_t k = (n - l) / 2;
                if (k < 0) break;
                acc += rrc_.taps[static_cast<std::size_t>(l)] *
                       std::complex<double>(sym_value_[static_cast<std::size_t>(2 * pol)].at(k),
                                            sym_value_[static_cast<std::size_t>(2 * pol + 1)].at(k));
            }
            shaped_[static_cast<std::size_t>(pol)].push_back(acc);
        }
        // channel mixing
        std::array<std::complex<double>, 2> out{};
        for (int i = 0; i < 2; ++i) {
            std::complex<double> acc = 0.0;
            for (int j = 0; j < 2; ++j) {
                const auto& h = cfg_.channel.taps[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                for (int l = 0; l < static_cast<int>(h.size()); ++l) {
                    const std::int64_t idx = n - l;
                    if (idx < 0) break;
                    acc += h[static_cast<std::size_t>(l)] * shaped_[static_cast<std::size_t>(j)].at(idx);
                }
            }
            out[static_cast<std::size_t>(i)] = acc;
        }
        const double sigma = std::sqrt(cfg_.lane_noise_variance);
        lanes_[0].push_back(out[0].real() + (sigma > 0 ? noise_.normal(sigma) : 0.0));
        lanes_[1].push_back(out[0].imag() + (sigma > 0 ? noise_.normal(sigma) : 0.0));
        lanes_[2].push_back(out[1].real() + (sigma > 0 ? noise_.normal(sigma) : 0.0));
        lanes_[3].push_back(out[1].imag() + (sigma > 0 ? noise_.normal(sigma) : 0.0));
    }

    TxConfig cfg_;
    RealFir rrc_;
    Rng noise_;
    std::vector<PrbsLfsr> prbs_;
    int ch_len_ = 1;
    std::array<Tape<int>, 4> sym_level_;
    std::array<Tape<double>, 4> sym_value_;
    std::array<Tape<std::complex<double>>, 2> shaped_;
    std::array<Tape<double>, 4> lanes_;
};

// Non-streaming convenience: full lane signals for a fixed symbol count.
inline std::array<std::vector<double>, 4> apply_channel(const TxConfig& cfg, std::int64_t symbol_count) {
    TxStream tx(cfg);
    const std::int64_t n = 2 * symbol_count;
    tx.advance_to(n);
    std::array<std::vector<double>, 4> lanes;
    for (int i = 0; i < 4; ++i) {
        lanes[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(n));
        for (std::int64_t s = 0; s < n; ++s) lanes[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)] = tx.lane(i).at(s);
    }
    return lanes;
}

} // namespace ebpcal
