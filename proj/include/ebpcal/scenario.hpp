// SPDX-License-Identifier: Apache-2.0
//
// Scenario configuration: versioned key = value text schema describing one
// experiment (modulation, channel, impairments, adaptation hyperparameters,
// seeds). Unknown or malformed keys are reported by name.

#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ebpcal/afe.hpp"
#include "ebpcal/txchain.hpp"

namespace ebpcal {

enum class CalMode { digital, mixed };

enum class ImpMode { none, bounds, file };

struct GearStage {
    double start_frac = 0.0; // fraction of total updates
    double scale = 1.0;
};

struct ScenarioConfig {
    int schema_version = 1;

    // signal
    int modulation = 64;
    double symbol_rate_hz = 96e9;
    int oversampling = 2; // fixed by the architecture
    double rolloff = 0.10;
    int rrc_span_symbols = 10;
    std::string channel = "identity"; // identity | rotate:<deg> | file:<path>
    double target_ber = 1e-3;         // 0 selects noiseless operation
    double es_n0_db = -1.0;           // <0 = auto (from target_ber)
    std::int64_t symbols = 200000;
    std::int64_t genie_symbols = 20000;
    double measure_fraction = 0.5;

    // AFE / TI-ADC
    int adc_bits = 8;
    double full_scale = 2.0;
    double nominal_bw_hz = 52.8e9;
    double lane_bw_hz = -1.0; // optional extra interconnect pole (<0 = none)
    int m = 4;
    int m1 = 0, m2 = 0;
    double jitter_rms_s = 0.0;

    // impairments
    ImpMode imp_mode = ImpMode::none;
    std::string imp_file;
    double gain_err_pp = 0.0;
    double phase_err_pp_t = 0.0;
    double bw_mismatch_pp = 0.0; // fraction of nominal bandwidth
    double dc_offset_pp_fs = 0.0;
    double iq_skew_pp_t = 0.0;

    // calibration
    CalMode mode = CalMode::digital;
    bool ce_enabled = true;
    int lg = 7;
    int l_gamma = 21;
    int pin_lane = 1; // 1-based, matching the H/I,H/Q,V/I,V/Q lane numbering
    int pin_interleave = 0;

    // adaptation schedule
    std::int64_t block_samples = 8192;
    int block_decimation = 1;
    std::int64_t ebp_start_symbols = 0; // delay before the first EBP update
    std::int64_t ffe_adapt_symbols = 0; // 0 = adaptive throughout, else static afterwards
    double mu = 5e-4;
    double mu_ffe = 2e-3;
    double mu_offset = 5e-4;
    double mu_gain = 5e-4;
    double mu_tau_t = 1e-3;
    std::vector<GearStage> gear_shift{{0.0, 1.0}, {0.5, 0.25}, {0.8, 0.0625}};
    double delay_step_s = 260e-15;
    double delay_range_s = 50e-12;

    // harness
    std::int64_t trials = 500;
    std::uint64_t master_seed = 1;
    std::string out_dir = "out";
    bool trace_coefficients = false;
    int sndr_n_fft = 8192; // 2^13
    double sndr_tone_frac = 0.35; // fraction of Nyquist for the probe tone

    double symbol_period_s() const { return 1.0 / symbol_rate_hz; }
    double sample_rate_hz() const { return 2.0 * symbol_rate_hz; }
    Modulation mod() const { return modulation_from_order(modulation); }

    void validate() const;
    std::string echo() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace detail

class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline std::vector<GearStage> parse_gear_shift(const std::string& text) {
    std::vector<GearStage> stages;
    std::istringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("gear_shift: expected frac:scale, got '" + item + "'");
        GearStage st;
        st.start_frac = std::stod(item.substr(0, colon));
        st.scale = std::stod(item.substr(colon + 1));
        if (st.start_frac < 0.0 || st.start_frac > 1.0 || st.scale <= 0.0)
            throw ConfigError("gear_shift: stage out of range in '" + item + "'");
        stages.push_back(st);
    }
    if (stages.empty()) throw ConfigError("gear_shift: empty stage list");
    return stages;
}

inline std::string gear_shift_to_string(const std::vector<GearStage>& stages) {
    std::string s;
    char buf[64];
    for (std::size_t i = 0; i < stages.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%g:%g", i ? "," : "", stages[i].start_frac, stages[i].scale);
        s += buf;
    }
    return s;
}

inline ScenarioConfig parse_scenario(std::istream& is) {
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (kv.count(key)) throw ConfigError("config: duplicate key '" + key + "'");
        kv[key] = val;
    }

    ScenarioConfig sc;
    auto take = [&](const char* key) -> std::string* {
        static std::string tmp;
        auto it = kv.find(key);
        if (it == kv.end()) return nullptr;
        tmp = it->second;
        kv.erase(it);
        return &tmp;
    };
    auto get_d = [&](const char* key, double& out) {
        if (auto* v = take(key)) {
            try {
                std::size_t pos = 0;
                out = std::stod(*v, &pos);
                if (pos != v->size()) throw std::invalid_argument("trailing");
            } catch (...) {
                throw ConfigError(std::string("config: key '") + key + "' has malformed numeric value '" + *v + "'");
            }
        }
    };
    auto get_i = [&](const char* key, auto& out) {
        double d = static_cast<double>(out);
        get_d(key, d);
        out = static_cast<std::decay_t<decltype(out)>>(d);
        if (static_cast<double>(out) != d)
            throw ConfigError(std::string("config: key '") + key + "' must be an integer");
    };
    auto get_b = [&](const char* key, bool& out) {
        if (auto* v = take(key)) {
            if (*v == "true" || *v == "1") out = true;
            else if (*v == "false" || *v == "0") out = false;
            else throw ConfigError(std::string("config: key '") + key + "' must be true/false");
        }
    };
    auto get_s = [&](const char* key, std::string& out) {
        if (auto* v = take(key)) out = *v;
    };

    get_i("schema_version", sc.schema_version);
    if (sc.schema_version != 1) throw ConfigError("config: unsupported schema_version");
    get_i("modulation", sc.modulation);
    get_d("symbol_rate_hz", sc.symbol_rate_hz);
    get_i("oversampling", sc.oversampling);
    get_d("rolloff", sc.rolloff);
    get_i("rrc_span_symbols", sc.rrc_span_symbols);
    get_s("channel", sc.channel);
    get_d("target_ber", sc.target_ber);
    get_d("es_n0_db", sc.es_n0_db);
    get_i("symbols", sc.symbols);
    get_i("genie_symbols", sc.genie_symbols);
    get_d("measure_fraction", sc.measure_fraction);
    get_i("adc_bits", sc.adc_bits);
    get_d("full_scale", sc.full_scale);
    get_d("nominal_bw_hz", sc.nominal_bw_hz);
    get_d("lane_bw_hz", sc.lane_bw_hz);
    get_i("m", sc.m);
    get_i("m1", sc.m1);
    get_i("m2", sc.m2);
    get_d("jitter_rms_s", sc.jitter_rms_s);
    if (auto* v = take("imp_mode")) {
        if (*v == "none") sc.imp_mode = ImpMode::none;
        else if (*v == "bounds") sc.imp_mode = ImpMode::bounds;
        else if (*v == "file") sc.imp_mode = ImpMode::file;
        else throw ConfigError("config: key 'imp_mode' must be none|bounds|file");
    }
    get_s("imp_file", sc.imp_file);
    get_d("gain_err_pp", sc.gain_err_pp);
    get_d("phase_err_pp_t", sc.phase_err_pp_t);
    get_d("bw_mismatch_pp", sc.bw_mismatch_pp);
    get_d("dc_offset_pp_fs", sc.dc_offset_pp_fs);
    get_d("iq_skew_pp_t", sc.iq_skew_pp_t);
    if (auto* v = take("mode")) {
        if (*v == "digital") sc.mode = CalMode::digital;
        else if (*v == "mixed") sc.mode = CalMode::mixed;
        else throw ConfigError("config: key 'mode' must be digital|mixed");
    }
    get_b("ce_enabled", sc.ce_enabled);
    get_i("lg", sc.lg);
    get_i("l_gamma", sc.l_gamma);
    get_i("pin_lane", sc.pin_lane);
    get_i("pin_interleave", sc.pin_interleave);
    get_i("block_samples", sc.block_samples);
    get_i("block_decimation", sc.block_decimation);
    get_i("ebp_start_symbols", sc.ebp_start_symbols);
    get_i("ffe_adapt_symbols", sc.ffe_adapt_symbols);
    get_d("mu", sc.mu);
    get_d("mu_ffe", sc.mu_ffe);
    get_d("mu_offset", sc.mu_offset);
    get_d("mu_gain", sc.mu_gain);
    get_d("mu_tau_t", sc.mu_tau_t);
    if (auto* v = take("gear_shift")) sc.gear_shift = parse_gear_shift(*v);
    get_d("delay_step_s", sc.delay_step_s);
    get_d("delay_range_s", sc.delay_range_s);
    get_i("trials", sc.trials);
    if (auto* v = take("master_seed")) {
        try {
            sc.master_seed = std::stoull(*v);
        } catch (...) {
            throw ConfigError("config: key 'master_seed' has malformed value '" + *v + "'");
        }
    }
    get_s("out_dir", sc.out_dir);
    get_b("trace_coefficients", sc.trace_coefficients);
    get_i("sndr_n_fft", sc.sndr_n_fft);
    get_d("sndr_tone_frac", sc.sndr_tone_frac);

    if (!kv.empty()) {
        std::string unknown;
        for (const auto& [k, v] : kv) {
            if (!unknown.empty()) unknown += ", ";
            unknown += "'" + k + "'";
        }
        throw ConfigError("config: unknown key(s): " + unknown);
    }
    sc.validate();
    return sc;
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    return parse_scenario(f);
}

inline void ScenarioConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
        throw ConfigError("config: key '" + key + "' " + why);
    };
    if (modulation != 4 && modulation != 16 && modulation != 64 && modulation != 256)
        fail("modulation", "must be 4, 16, 64 or 256");
    if (oversampling != 2) fail("oversampling", "is fixed at 2");
    if (!(symbol_rate_hz > 0.0)) fail("symbol_rate_hz", "must be > 0");
    if (!(rolloff > 0.0 && rolloff < 1.0)) fail("rolloff", "must be in (0, 1)");
    if (rrc_span_symbols < 2) fail("rrc_span_symbols", "must be >= 2");
    if (target_ber < 0.0 || target_ber >= 0.5) fail("target_ber", "must be in [0, 0.5)");
    if (symbols < 1000) fail("symbols", "must be >= 1000");
    if (genie_symbols < 0) fail("genie_symbols", "must be >= 0");
    if (!(measure_fraction > 0.0 && measure_fraction <= 1.0)) fail("measure_fraction", "must be in (0, 1]");
    if (adc_bits < 2 || adc_bits > 16) fail("adc_bits", "must be in [2, 16]");
    if (!(full_scale > 0.0)) fail("full_scale", "must be > 0");
    if (!(nominal_bw_hz > 0.0 && nominal_bw_hz < sample_rate_hz() / 2.0))
        fail("nominal_bw_hz", "must be in (0, sample_rate/2)");
    if (m < 1) fail("m", "must be >= 1");
    if ((m1 != 0 || m2 != 0) && m1 * m2 != m) fail("m1", "and m2 must satisfy m1*m2 == m (or both 0)");
    if (imp_mode == ImpMode::file && imp_file.empty()) fail("imp_file", "required when imp_mode = file");
    if (gain_err_pp < 0 || phase_err_pp_t < 0 || bw_mismatch_pp < 0 || dc_offset_pp_fs < 0 || iq_skew_pp_t < 0)
        fail("gain_err_pp", "and other bound keys must be >= 0");
    if (phase_err_pp_t >= 0.5) fail("phase_err_pp_t", "must be < 0.5");
    if (lg < 1 || lg % 2 == 0) fail("lg", "must be odd and >= 1");
    if (l_gamma < 1) fail("l_gamma", "must be >= 1");
    if (pin_lane < 1 || pin_lane > 4) fail("pin_lane", "must be in [1, 4]");
    if (pin_interleave < 0 || pin_interleave >= m) fail("pin_interleave", "must be in [0, m)");
    if (block_samples < l_gamma + lg) fail("block_samples", "must be >= l_gamma + lg");
    if (block_samples % (2 * m) != 0) fail("block_samples", "must be a multiple of 2*m");
    if (block_decimation < 1) fail("block_decimation", "must be >= 1");
    if (ebp_start_symbols < 0) fail("ebp_start_symbols", "must be >= 0");
    if (ffe_adapt_symbols < 0) fail("ffe_adapt_symbols", "must be >= 0");
    if (!(mu > 0.0) || !(mu_ffe > 0.0) || !(mu_offset > 0.0) || !(mu_gain > 0.0) || !(mu_tau_t > 0.0))
        fail("mu", "and the other step sizes must be > 0");
    if (!(delay_step_s > 0.0) || !(delay_range_s > delay_step_s)) fail("delay_step_s", "and delay_range_s invalid");
    if (trials < 1) fail("trials", "must be >= 1");
    if (!is_power_of_two(static_cast<std::size_t>(sndr_n_fft))) fail("sndr_n_fft", "must be a power of two");
    if (!(sndr_tone_frac > 0.0 && sndr_tone_frac < 1.0)) fail("sndr_tone_frac", "must be in (0, 1)");
}

inline std::string ScenarioConfig::echo() const {
    std::ostringstream os;
    char buf[64];
    auto put_d = [&](const char* k, double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << k << " = " << buf << "\n";
    };
    os << "schema_version = " << schema_version << "\n";
    os << "modulation = " << modulation << "\n";
    put_d("symbol_rate_hz", symbol_rate_hz);
    os << "oversampling = " << oversampling << "\n";
    put_d("rolloff", rolloff);
    os << "rrc_span_symbols = " << rrc_span_symbols << "\n";
    os << "channel = " << channel << "\n";
    put_d("target_ber", target_ber);
    put_d("es_n0_db", es_n0_db);
    os << "symbols = " << symbols << "\n";
    os << "genie_symbols = " << genie_symbols << "\n";
    put_d("measure_fraction", measure_fraction);
    os << "adc_bits = " << adc_bits << "\n";
    put_d("full_scale", full_scale);
    put_d("nominal_bw_hz", nominal_bw_hz);
    put_d("lane_bw_hz", lane_bw_hz);
    os << "m = " << m << "\n";
    os << "m1 = " << m1 << "\n";
    os << "m2 = " << m2 << "\n";
    put_d("jitter_rms_s", jitter_rms_s);
    os << "imp_mode = " << (imp_mode == ImpMode::none ? "none" : imp_mode == ImpMode::bounds ? "bounds" : "file") << "\n";
    if (!imp_file.empty()) os << "imp_file = " << imp_file << "\n";
    put_d("gain_err_pp", gain_err_pp);
    put_d("phase_err_pp_t", phase_err_pp_t);
    put_d("bw_mismatch_pp", bw_mismatch_pp);
    put_d("dc_offset_pp_fs", dc_offset_pp_fs);
    put_d("iq_skew_pp_t", iq_skew_pp_t);
    os << "mode = " << (mode == CalMode::digital ? "digital" : "mixed") << "\n";
    os << "ce_enabled = " << (ce_enabled ? "true" : "false") << "\n";
    os << "lg = " << lg << "\n";
    os << "l_gamma = " << l_gamma << "\n";
    os << "pin_lane = " << pin_lane << "\n";
    os << "pin_interleave = " << pin_interleave << "\n";
    os << "block_samples = " << block_samples << "\n";
    os << "block_decimation = " << block_decimation << "\n";
    os << "ebp_start_symbols = " << ebp_start_symbols << "\n";
    os << "ffe_adapt_symbols = " << ffe_adapt_symbols << "\n";
    put_d("mu", mu);
    put_d("mu_ffe", mu_ffe);
    put_d("mu_offset", mu_offset);
    put_d("mu_gain", mu_gain);
    put_d("mu_tau_t", mu_tau_t);
    os << "gear_shift = " << gear_shift_to_string(gear_shift) << "\n";
    put_d("delay_step_s", delay_step_s);
    put_d("delay_range_s", delay_range_s);
    os << "trials = " << trials << "\n";
    os << "master_seed = " << master_seed << "\n";
    os << "out_dir = " << out_dir << "\n";
    os << "trace_coefficients = " << (trace_coefficients ? "true" : "false") << "\n";
    os << "sndr_n_fft = " << sndr_n_fft << "\n";
    put_d("sndr_tone_frac", sndr_tone_frac);
    return os.str();
}

// Resolve the channel key into a model.
inline ChannelModel make_channel(const ScenarioConfig& sc) {
    if (sc.channel == "identity") return ChannelModel::identity();
    if (sc.channel.rfind("rotate:", 0) == 0) {
        const double deg = std::stod(sc.channel.substr(7));
        return ChannelModel::rotation(deg * std::numbers::pi / 180.0);
    }
    if (sc.channel.rfind("dispersive:", 0) == 0) {
        // dispersive:<deg>:<isi>
        const std::string rest = sc.channel.substr(11);
        const auto colon = rest.find(':');
        if (colon == std::string::npos)
            throw ConfigError("config: key 'channel' dispersive form is dispersive:<deg>:<isi>");
        const double deg = std::stod(rest.substr(0, colon));
        const double isi = std::stod(rest.substr(colon + 1));
        return ChannelModel::dispersive(deg * std::numbers::pi / 180.0, isi);
    }
    if (sc.channel.rfind("lowpass:", 0) == 0) {
        // lowpass:<deg>:<bw_frac_of_symbol_rate>
        const std::string rest = sc.channel.substr(8);
        const auto colon = rest.find(':');
        if (colon == std::string::npos)
            throw ConfigError("config: key 'channel' lowpass form is lowpass:<deg>:<bw_frac>");
        const double deg = std::stod(rest.substr(0, colon));
        const double bw_frac = std::stod(rest.substr(colon + 1));
        return ChannelModel::lowpass_rotation(deg * std::numbers::pi / 180.0, bw_frac * sc.symbol_rate_hz,
                                              sc.sample_rate_hz());
    }
    if (sc.channel.rfind("file:", 0) == 0) return load_channel_file(sc.channel.substr(5));
    throw ConfigError("config: key 'channel' must be identity, rotate:<deg>, dispersive:<deg>:<isi>, lowpass:<deg>:<bw_frac> or file:<path>");
}

} // namespace ebpcal
