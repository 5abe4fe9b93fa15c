#pragma once

// Pipeline configuration: flat key=value text with dotted section prefixes.
// Physical quantities are SI (W, Hz, V); phase-space quantities are
// dimensionless. Unknown keys are rejected.

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hqrng/acquisition.hpp"
#include "hqrng/dsp.hpp"
#include "hqrng/error.hpp"
#include "hqrng/extractor.hpp"
#include "hqrng/keyvalue.hpp"
#include "hqrng/phase_space.hpp"

namespace hqrng {

/// Accepts plain decimals and the power form "2^-100".
inline double parse_real(const std::string& s, const std::string& key) {
    if (auto caret = s.find('^'); caret != std::string::npos) {
        const double base = KeyValueDoc::to_double(s.substr(0, caret), key);
        const double expo = KeyValueDoc::to_double(s.substr(caret + 1), key);
        return std::pow(base, expo);
    }
    return KeyValueDoc::to_double(s, key);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

/// "vacuum", "coherent:RE,IM", "thermal:NBAR", "mixture:W,RE,IM;W,RE,IM;..."
inline StateModel parse_state(const std::string& text) {
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);
    auto nums = [&](const std::string& s) {
        std::vector<double> v;
        for (const auto& p : split(s, ',')) v.push_back(KeyValueDoc::to_double(p, "state"));
        return v;
    };
    StateModel st;
    if (kind == "vacuum") {
        st = Vacuum{};
    } else if (kind == "coherent") {
        const auto v = nums(args);
        detail::require(v.size() == 2, "coherent state needs RE,IM");
        st = Coherent{{v[0], v[1]}};
    } else if (kind == "thermal") {
        const auto v = nums(args);
        detail::require(v.size() == 1, "thermal state needs NBAR");
        st = Thermal{v[0]};
    } else if (kind == "mixture") {
        CoherentMixture mix;
        for (const auto& comp : split(args, ';')) {
            const auto v = nums(comp);
            detail::require(v.size() == 3, "mixture component needs W,RE,IM");
            mix.components.push_back({v[0], {v[1], v[2]}});
        }
        st = mix;
    } else {
        throw ValidationError("unknown state '" + text + "'");
    }
    validate(st);
    return st;
}

inline std::string format_state(const StateModel& st) {
    return std::visit(
        [](const auto& s) -> std::string {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Vacuum>) {
                return "vacuum";
            } else if constexpr (std::is_same_v<T, Coherent>) {
                return "coherent:" + format_double(s.center.re) + "," + format_double(s.center.im);
            } else if constexpr (std::is_same_v<T, Thermal>) {
                return "thermal:" + format_double(s.mean_photons);
            } else {
                std::string out = "mixture:";
                for (std::size_t k = 0; k < s.components.size(); ++k) {
                    const auto& c = s.components[k];
                    if (k) out += ";";
                    out += format_double(c.weight) + "," + format_double(c.center.re) + "," +
                           format_double(c.center.im);
                }
                return out;
            }
        },
        st);
}

struct PipelineConfig {
    StateModel state = Vacuum{};

    // local oscillator and its monitor tap
    double lo_power = 4.05e-3;
    double lo_tap_ratio = 0.1;
    double lo_tolerance = 0.01;
    double lo_monitor_noise = 1e-3;
    std::size_t lo_monitor_samples = 64;
    std::vector<std::uint64_t> lo_drift_blocks;
    double lo_drift_factor = 1.05;

    AdcConfig adc{10e9, 10, 0.0};  // full_scale 0: derive from target_delta_q
    double target_delta_q = 14.05e-3;

    BandSpec band{};
    bool dsp_enabled = true;
    std::size_t dsp_frame_len = std::size_t{1} << 16;
    std::size_t dsp_margin = std::size_t{1} << 12;
    std::size_t dsp_phase = 0;

    DetectorCalibration calibration = reference_calibration();
    std::string calibration_file;  // overrides inline values when set

    TechnicalNoise noise{};

    double epsilon = std::ldexp(1.0, -100);
    std::size_t extract_block_samples = 20000;
    MasterSeed extract_seed = {0x243f6a8885a308d3ull, 0x13198a2e03707344ull, 0xa4093822299f31d0ull,
                               0x082efa98ec4e6c89ull};
    bool extract_seed_reuse = false;

    std::uint64_t sim_seed = 1;
    std::uint64_t sim_samples = 10000000;  // raw ADC samples
    std::size_t sim_block_samples = std::size_t{1} << 23;

    double test_alpha = 0.01;
    std::uint64_t test_bits = 0;  // 0: all extracted bits
    std::size_t autocorr_max_lag = 100;
    std::size_t autocorr_samples = 5000000;

    std::size_t workers = 1;

    /// Calibration in effect where codes are converted to phase space: the
    /// detector lines scaled by the fraction of noise power the band keeps.
    DetectorCalibration effective_calibration() const {
        return dsp_enabled ? calibration.scaled(noise_bandwidth_fraction(band, adc.sample_rate)) : calibration;
    }

    /// ADC with full scale resolved (derived from the target resolution if 0).
    AdcConfig resolved_adc() const {
        AdcConfig a = adc;
        if (a.full_scale <= 0.0)
            a.full_scale = full_scale_for_delta(target_delta_q, effective_calibration(), lo_power, a.bits);
        return a;
    }

    std::size_t decimation() const { return dsp_enabled ? decimation_factor(adc.sample_rate, band) : 1; }
    double output_rate() const { return adc.sample_rate / static_cast<double>(decimation()); }

    StreamingBandpass::Options dsp_options() const {
        return {dsp_frame_len, dsp_margin, decimation(), dsp_phase};
    }

    void validate() const {
        hqrng::validate(state);
        detail::require(lo_power > 0.0, "lo.power must be > 0");
        detail::require(lo_tap_ratio > 0.0 && lo_tap_ratio < 1.0, "lo.tap_ratio must lie in (0, 1)");
        detail::require(lo_tolerance > 0.0, "lo.tolerance must be > 0");
        detail::require(lo_monitor_samples >= 1, "lo.monitor_samples must be >= 1");
        detail::require(lo_drift_factor > 0.0, "lo.drift_factor must be > 0");
        detail::require(adc.bits >= 4 && adc.bits <= 16, "adc.bits must lie in [4, 16]");
        detail::require(adc.sample_rate > 0.0, "adc.sample_rate must be > 0");
        detail::require(adc.full_scale >= 0.0, "adc.full_scale must be >= 0");
        detail::require(target_delta_q > 0.0, "adc.target_delta_q must be > 0");
        band.validate(adc.sample_rate);
        if (dsp_enabled) {
            (void)decimation();
            StreamingBandpass probe(adc.sample_rate, band, dsp_options());
        }
        calibration.validate();
        detail::require(epsilon > 0.0 && epsilon < 1.0, "extract.epsilon must lie in (0, 1)");
        detail::require(extract_block_samples >= 1, "extract.block_samples must be >= 1");
        detail::require(sim_samples >= 1, "sim.samples must be >= 1");
        detail::require(sim_block_samples >= 1, "sim.block_samples must be >= 1");
        detail::require(test_alpha > 0.0 && test_alpha < 1.0, "test.alpha must lie in (0, 1)");
        detail::require(workers >= 1, "pipeline.workers must be >= 1");
        resolved_adc().validate();
    }

    static const std::set<std::string>& known_keys() {
        static const std::set<std::string> keys = {
            "state",           "lo.power",           "lo.tap_ratio",       "lo.tolerance",
            "lo.monitor_noise", "lo.monitor_samples", "lo.drift_blocks",    "lo.drift_factor",
            "adc.sample_rate", "adc.bits",           "adc.full_scale",     "adc.target_delta_q",
            "band.f_lo",       "band.f_hi",          "dsp.enabled",        "dsp.frame_len",
            "dsp.margin",      "dsp.phase",          "calibration.file",   "calibration.m1",
            "calibration.q1",  "calibration.m2",     "calibration.q2",     "calibration.m1_err",
            "calibration.q1_err", "calibration.m2_err", "calibration.q2_err", "noise.lowfreq_cutoff",
            "noise.lowfreq_variance", "noise.spurs", "extract.epsilon",    "extract.block_samples",
            "extract.master_seed", "extract.seed_reuse", "sim.seed",       "sim.samples",
            "sim.block_samples", "test.alpha",       "test.bits",          "autocorr.max_lag",
            "autocorr.samples", "pipeline.workers"};
        return keys;
    }

    /// Apply entries of `kv` on top of this configuration.
    void apply(const KeyValueDoc& kv) {
        for (const auto& key : kv.keys())
            if (!known_keys().count(key)) throw ValidationError("unknown configuration key '" + key + "'");
        auto real = [&](const char* k, double& dst) {
            if (auto v = kv.get(k)) dst = parse_real(*v, k);
        };
        auto count = [&](const char* k, auto& dst) {
            if (auto v = kv.get(k)) {
                const auto x = KeyValueDoc::to_int(*v, k);
                detail::require(x >= 0, std::string(k) + " must be >= 0");
                dst = static_cast<std::remove_reference_t<decltype(dst)>>(x);
            }
        };
        auto flag = [&](const char* k, bool& dst) {
            if (auto v = kv.get(k)) {
                detail::require(*v == "true" || *v == "false", std::string(k) + " must be true or false");
                dst = *v == "true";
            }
        };
        if (auto v = kv.get("state")) state = parse_state(*v);
        real("lo.power", lo_power);
        real("lo.tap_ratio", lo_tap_ratio);
        real("lo.tolerance", lo_tolerance);
        real("lo.monitor_noise", lo_monitor_noise);
        count("lo.monitor_samples", lo_monitor_samples);
        if (auto v = kv.get("lo.drift_blocks")) {
            lo_drift_blocks.clear();
            for (const auto& s : split(*v, ','))
                lo_drift_blocks.push_back(static_cast<std::uint64_t>(KeyValueDoc::to_int(s, "lo.drift_blocks")));
        }
        real("lo.drift_factor", lo_drift_factor);
        real("adc.sample_rate", adc.sample_rate);
        if (auto v = kv.get("adc.bits")) adc.bits = static_cast<int>(KeyValueDoc::to_int(*v, "adc.bits"));
        real("adc.full_scale", adc.full_scale);
        real("adc.target_delta_q", target_delta_q);
        real("band.f_lo", band.f_lo);
        real("band.f_hi", band.f_hi);
        flag("dsp.enabled", dsp_enabled);
        count("dsp.frame_len", dsp_frame_len);
        count("dsp.margin", dsp_margin);
        count("dsp.phase", dsp_phase);
        if (auto v = kv.get("calibration.file")) {
            calibration_file = *v;
            if (!calibration_file.empty()) {
                try {
                    calibration = DetectorCalibration::from_kv(KeyValueDoc::load(*v));
                } catch (const StageError& e) {
                    throw ValidationError(std::string("calibration.file: ") + e.what());
                }
            }
        }
        real("calibration.m1", calibration.slope_1);
        real("calibration.q1", calibration.intercept_1);
        real("calibration.m2", calibration.slope_2);
        real("calibration.q2", calibration.intercept_2);
        real("calibration.m1_err", calibration.slope_err_1);
        real("calibration.q1_err", calibration.intercept_err_1);
        real("calibration.m2_err", calibration.slope_err_2);
        real("calibration.q2_err", calibration.intercept_err_2);
        real("noise.lowfreq_cutoff", noise.lowfreq_cutoff);
        real("noise.lowfreq_variance", noise.lowfreq_variance);
        if (auto v = kv.get("noise.spurs")) {
            noise.spurs.clear();
            for (const auto& s : split(*v, ',')) {
                const auto c = s.find(':');
                detail::require(c != std::string::npos, "noise.spurs entries are FREQ:AMPLITUDE");
                noise.spurs.push_back({parse_real(s.substr(0, c), "noise.spurs"),
                                       parse_real(s.substr(c + 1), "noise.spurs")});
            }
        }
        real("extract.epsilon", epsilon);
        count("extract.block_samples", extract_block_samples);
        if (auto v = kv.get("extract.master_seed")) extract_seed = parse_master_seed(*v);
        flag("extract.seed_reuse", extract_seed_reuse);
        count("sim.seed", sim_seed);
        count("sim.samples", sim_samples);
        count("sim.block_samples", sim_block_samples);
        real("test.alpha", test_alpha);
        count("test.bits", test_bits);
        count("autocorr.max_lag", autocorr_max_lag);
        count("autocorr.samples", autocorr_samples);
        count("pipeline.workers", workers);
    }

    static PipelineConfig from_kv(const KeyValueDoc& kv) {
        PipelineConfig c;
        c.apply(kv);
        return c;
    }

    KeyValueDoc to_kv() const {
        KeyValueDoc kv;
        kv.set("state", format_state(state));
        kv.set("lo.power", lo_power);
        kv.set("lo.tap_ratio", lo_tap_ratio);
        kv.set("lo.tolerance", lo_tolerance);
        kv.set("lo.monitor_noise", lo_monitor_noise);
        kv.set("lo.monitor_samples", lo_monitor_samples);
        std::string drift;
        for (std::size_t k = 0; k < lo_drift_blocks.size(); ++k)
            drift += (k ? "," : "") + std::to_string(lo_drift_blocks[k]);
        kv.set("lo.drift_blocks", drift);
        kv.set("lo.drift_factor", lo_drift_factor);
        kv.set("adc.sample_rate", adc.sample_rate);
        kv.set("adc.bits", adc.bits);
        kv.set("adc.full_scale", adc.full_scale);
        kv.set("adc.target_delta_q", target_delta_q);
        kv.set("band.f_lo", band.f_lo);
        kv.set("band.f_hi", band.f_hi);
        kv.set("dsp.enabled", dsp_enabled);
        kv.set("dsp.frame_len", dsp_frame_len);
        kv.set("dsp.margin", dsp_margin);
        kv.set("dsp.phase", dsp_phase);
        if (!calibration_file.empty()) kv.set("calibration.file", calibration_file);
        kv.merge(calibration.to_kv(), "calibration.");
        kv.set("noise.lowfreq_cutoff", noise.lowfreq_cutoff);
        kv.set("noise.lowfreq_variance", noise.lowfreq_variance);
        std::string spurs;
        for (std::size_t k = 0; k < noise.spurs.size(); ++k)
            spurs += (k ? "," : "") + format_double(noise.spurs[k].frequency) + ":" +
                     format_double(noise.spurs[k].amplitude);
        kv.set("noise.spurs", spurs);
        kv.set("extract.epsilon", epsilon);
        kv.set("extract.block_samples", extract_block_samples);
        kv.set("extract.master_seed", format_master_seed(extract_seed));
        kv.set("extract.seed_reuse", extract_seed_reuse);
        kv.set("sim.seed", static_cast<unsigned long long>(sim_seed));
        kv.set("sim.samples", static_cast<unsigned long long>(sim_samples));
        kv.set("sim.block_samples", sim_block_samples);
        kv.set("test.alpha", test_alpha);
        kv.set("test.bits", static_cast<unsigned long long>(test_bits));
        kv.set("autocorr.max_lag", autocorr_max_lag);
        kv.set("autocorr.samples", autocorr_samples);
        kv.set("pipeline.workers", workers);
        return kv;
    }

    friend bool operator==(const PipelineConfig& a, const PipelineConfig& b) {
        return a.to_kv().str() == b.to_kv().str();
    }
};

}  // namespace hqrng
