#pragma once

// Front-end emulation: balanced-detector voltages with shot and electronic
// noise, ADC quantization, variance-vs-LO-power calibration, conversion of
// ADC codes to phase-space units, and LO power monitoring.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hqrng/error.hpp"
#include "hqrng/keyvalue.hpp"
#include "hqrng/phase_space.hpp"
#include "hqrng/rng.hpp"

namespace hqrng {

/// Variance-vs-LO-power line per detector channel: var = slope*P + intercept.
/// Slope in V^2/W, intercept (electronic noise) in V^2.
struct DetectorCalibration {
    double slope_1 = 0.0;
    double intercept_1 = 0.0;
    double slope_2 = 0.0;
    double intercept_2 = 0.0;
    double slope_err_1 = 0.0;
    double intercept_err_1 = 0.0;
    double slope_err_2 = 0.0;
    double intercept_err_2 = 0.0;

    double slope(int channel) const { return channel == 1 ? slope_1 : slope_2; }
    double intercept(int channel) const { return channel == 1 ? intercept_1 : intercept_2; }

    /// Expected voltage variance of `channel` at LO power `power`.
    double variance(int channel, double power) const { return slope(channel) * power + intercept(channel); }

    /// Calibration with both lines multiplied by `gain` (e.g. the noise
    /// bandwidth fraction kept by a digital filter).
    DetectorCalibration scaled(double gain) const {
        DetectorCalibration c = *this;
        for (double* v : {&c.slope_1, &c.intercept_1, &c.slope_2, &c.intercept_2, &c.slope_err_1,
                          &c.intercept_err_1, &c.slope_err_2, &c.intercept_err_2})
            *v *= gain;
        return c;
    }

    void validate() const {
        detail::require(slope_1 > 0.0 && slope_2 > 0.0, "calibration slopes must be strictly positive");
        detail::require(intercept_1 >= 0.0 && intercept_2 >= 0.0, "calibration intercepts must be >= 0");
    }

    KeyValueDoc to_kv() const {
        KeyValueDoc kv;
        kv.set("m1", slope_1);
        kv.set("m1_err", slope_err_1);
        kv.set("q1", intercept_1);
        kv.set("q1_err", intercept_err_1);
        kv.set("m2", slope_2);
        kv.set("m2_err", slope_err_2);
        kv.set("q2", intercept_2);
        kv.set("q2_err", intercept_err_2);
        return kv;
    }

    static DetectorCalibration from_kv(const KeyValueDoc& kv, const std::string& prefix = "") {
        DetectorCalibration c;
        c.slope_1 = kv.number(prefix + "m1");
        c.intercept_1 = kv.number(prefix + "q1");
        c.slope_2 = kv.number(prefix + "m2");
        c.intercept_2 = kv.number(prefix + "q2");
        c.slope_err_1 = kv.number_or(prefix + "m1_err", 0.0);
        c.intercept_err_1 = kv.number_or(prefix + "q1_err", 0.0);
        c.slope_err_2 = kv.number_or(prefix + "m2_err", 0.0);
        c.intercept_err_2 = kv.number_or(prefix + "q2_err", 0.0);
        c.validate();
        return c;
    }
};

/// Fitted detector lines of the reference setup (two balanced detectors).
inline DetectorCalibration reference_calibration() {
    return {2.783e-2, 1.526e-5, 2.748e-2, 1.419e-5, 0.005e-2, 0.005e-5, 0.004e-2, 0.004e-5};
}

struct AdcConfig {
    double sample_rate = 10e9;  // samples/s
    int bits = 10;
    double full_scale = 0.0;  // V, peak to peak

    std::int32_t code_min() const { return -(std::int32_t{1} << (bits - 1)); }
    std::int32_t code_max() const { return (std::int32_t{1} << (bits - 1)) - 1; }
    std::int64_t code_count() const { return std::int64_t{1} << bits; }
    double lsb() const { return full_scale / static_cast<double>(code_count()); }

    void validate() const {
        detail::require(bits >= 4 && bits <= 16, "ADC bits must lie in [4, 16]");
        detail::require(sample_rate > 0.0, "ADC sample rate must be > 0");
        detail::require(full_scale > 0.0, "ADC full scale must be > 0");
    }
};

/// Paired ADC codes from the two quadrature channels.
struct SampleBlock {
    std::vector<std::int16_t> codes_i;
    std::vector<std::int16_t> codes_q;
    AdcConfig adc;
    double lo_power = 0.0;  // W
    std::uint64_t clipped_count = 0;
    std::uint64_t seed_tag = 0;

    std::size_t size() const noexcept { return codes_i.size(); }

    void validate() const {
        adc.validate();
        detail::require(codes_i.size() == codes_q.size(), "I and Q code streams differ in length");
        const auto lo = adc.code_min();
        const auto hi = adc.code_max();
        auto in_range = [&](std::int16_t c) { return c >= lo && c <= hi; };
        detail::require(std::all_of(codes_i.begin(), codes_i.end(), in_range) &&
                            std::all_of(codes_q.begin(), codes_q.end(), in_range),
                        "ADC code outside the converter range");
    }
};

/// Optional technical noise added to the electronic path: a first-order
/// low-pass random process below `lowfreq_cutoff` and sinusoidal spurs.
struct TechnicalNoise {
    struct Spur {
        double frequency = 0.0;  // Hz
        double amplitude = 0.0;  // V
    };
    double lowfreq_cutoff = 0.0;    // Hz; 0 disables
    double lowfreq_variance = 0.0;  // V^2
    std::vector<Spur> spurs;

    bool enabled() const { return (lowfreq_cutoff > 0.0 && lowfreq_variance > 0.0) || !spurs.empty(); }
};

struct VoltageStreams {
    std::vector<double> i;
    std::vector<double> q;
};

namespace detail {

inline void add_technical_noise(std::span<double> v, const TechnicalNoise& noise, double sample_rate,
                                std::uint64_t first_index, Engine& engine, double phase) {
    if (noise.lowfreq_cutoff > 0.0 && noise.lowfreq_variance > 0.0) {
        Gaussian g(engine);
        const double a = std::exp(-2.0 * std::numbers::pi * noise.lowfreq_cutoff / sample_rate);
        const double drive = std::sqrt((1.0 - a * a) * noise.lowfreq_variance);
        double state = std::sqrt(noise.lowfreq_variance) * g();
        for (auto& x : v) {
            state = a * state + drive * g();
            x += state;
        }
    }
    for (const auto& s : noise.spurs) {
        const double w = 2.0 * std::numbers::pi * s.frequency / sample_rate;
        for (std::size_t t = 0; t < v.size(); ++t)
            v[t] += s.amplitude * std::cos(w * static_cast<double>(first_index + t) + phase);
    }
}

}  // namespace detail

/// Balanced-detector output voltages for both channels.
///
/// Each sample is N(0, m_k*P + q_k): the shot-noise and electronic terms are
/// independent Gaussians, drawn here as one deviate with the summed
/// variance. `stream` selects an independent sub-stream of `seed` (one per
/// block); `first_index` is the absolute sample index used to keep spur
/// phases continuous across blocks.
///
/// For a non-vacuum signal state the shot-noise term is replaced by the
/// heterodyne outcome of that state scaled by sqrt(2*m_k*P) per channel
/// (I carries Re(alpha), Q carries Im(alpha)), plus electronic noise.
inline VoltageStreams simulate_detector_stream(const DetectorCalibration& cal, double lo_power,
                                               const AdcConfig& adc, std::size_t n, std::uint64_t seed,
                                               std::uint64_t stream = 0,
                                               const TechnicalNoise& noise = {},
                                               std::uint64_t first_index = 0,
                                               const StateModel& state = Vacuum{}) {
    cal.validate();
    detail::require(lo_power >= 0.0 && std::isfinite(lo_power), "LO power must be >= 0");
    detail::require(adc.sample_rate > 0.0, "sample rate must be > 0");
    detail::require(n >= 1, "sample count must be >= 1");
    auto engine = make_engine(seed, stream);
    Gaussian g(engine);
    VoltageStreams out{std::vector<double>(n), std::vector<double>(n)};
    if (std::holds_alternative<Vacuum>(state)) {
        const double sd1 = std::sqrt(cal.variance(1, lo_power));
        const double sd2 = std::sqrt(cal.variance(2, lo_power));
        for (std::size_t t = 0; t < n; ++t) {
            out.i[t] = sd1 * g();
            out.q[t] = sd2 * g();
        }
    } else {
        const auto alpha = sample_heterodyne(state, n, seed ^ 0x5349474e414cull, stream);
        const double s1 = std::sqrt(2.0 * cal.slope_1 * lo_power);
        const double s2 = std::sqrt(2.0 * cal.slope_2 * lo_power);
        const double e1 = std::sqrt(cal.intercept_1);
        const double e2 = std::sqrt(cal.intercept_2);
        for (std::size_t t = 0; t < n; ++t) {
            out.i[t] = s1 * alpha[t].re + e1 * g();
            out.q[t] = s2 * alpha[t].im + e2 * g();
        }
    }
    if (noise.enabled()) {
        detail::add_technical_noise(out.i, noise, adc.sample_rate, first_index, engine, 0.0);
        detail::add_technical_noise(out.q, noise, adc.sample_rate, first_index, engine,
                                    std::numbers::pi / 2);
    }
    return out;
}

struct QuantizedStream {
    std::vector<std::int16_t> codes;
    std::uint64_t clipped = 0;
};

/// Mid-tread quantizer: code = clamp(round(v / lsb)), rounding half away
/// from zero. Saturated samples are counted in `clipped`.
inline QuantizedStream quantize(std::span<const double> voltages, const AdcConfig& adc) {
    adc.validate();
    const double inv = 1.0 / adc.lsb();
    const double lo = adc.code_min();
    const double hi = adc.code_max();
    QuantizedStream out;
    out.codes.resize(voltages.size());
    for (std::size_t t = 0; t < voltages.size(); ++t) {
        double c = std::round(voltages[t] * inv);
        if (c > hi || c < lo || std::isnan(c)) {
            ++out.clipped;
            c = std::isnan(c) ? 0.0 : std::clamp(c, lo, hi);
        }
        out.codes[t] = static_cast<std::int16_t>(c);
    }
    return out;
}

/// Simulate and quantize one block.
inline SampleBlock acquire_block(const DetectorCalibration& cal, double lo_power, const AdcConfig& adc,
                                 std::size_t n, std::uint64_t seed, std::uint64_t block_index = 0,
                                 const TechnicalNoise& noise = {}, const StateModel& state = Vacuum{}) {
    auto v = simulate_detector_stream(cal, lo_power, adc, n, seed, block_index, noise, block_index * n, state);
    auto qi = quantize(v.i, adc);
    auto qq = quantize(v.q, adc);
    SampleBlock b;
    b.codes_i = std::move(qi.codes);
    b.codes_q = std::move(qq.codes);
    b.adc = adc;
    b.lo_power = lo_power;
    b.clipped_count = qi.clipped + qq.clipped;
    b.seed_tag = seed;
    return b;
}

struct PhaseSpaceSamples {
    std::vector<double> re;
    std::vector<double> im;
    double delta_q = 0.0;
    double delta_p = 0.0;
};

/// Volts per phase-space unit for `channel`: sqrt(2*m_k*P), so that
/// shot-noise-only voltage maps to the vacuum variance 1/2.
inline double phase_space_scale(const DetectorCalibration& cal, int channel, double lo_power) {
    detail::require(cal.slope(channel) > 0.0, "calibration slope must be strictly positive");
    detail::require(lo_power > 0.0, "LO power must be strictly positive");
    return std::sqrt(2.0 * cal.slope(channel) * lo_power);
}

/// Phase-space resolutions (dq, dp) of an ADC read through `cal` at `lo_power`.
inline std::pair<double, double> phase_space_resolution(const DetectorCalibration& cal, double lo_power,
                                                        const AdcConfig& adc) {
    return {adc.lsb() / phase_space_scale(cal, 1, lo_power), adc.lsb() / phase_space_scale(cal, 2, lo_power)};
}

inline PhaseSpaceSamples codes_to_phase_space(const SampleBlock& block, const DetectorCalibration& cal) {
    detail::require(cal.slope_1 > 0.0 && cal.slope_2 > 0.0, "calibration slope must be strictly positive");
    block.validate();
    const auto [dq, dp] = phase_space_resolution(cal, block.lo_power, block.adc);
    PhaseSpaceSamples out;
    out.delta_q = dq;
    out.delta_p = dp;
    out.re.resize(block.size());
    out.im.resize(block.size());
    for (std::size_t t = 0; t < block.size(); ++t) {
        out.re[t] = block.codes_i[t] * dq;
        out.im[t] = block.codes_q[t] * dp;
    }
    return out;
}

/// ADC full scale that yields phase-space resolution `target_delta_q` on
/// channel 1 for the given calibration and LO power.
inline double full_scale_for_delta(double target_delta_q, const DetectorCalibration& cal, double lo_power,
                                   int bits) {
    detail::require(target_delta_q > 0.0, "target resolution must be > 0");
    return target_delta_q * phase_space_scale(cal, 1, lo_power) * std::ldexp(1.0, bits);
}

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationPoint {
    double power = 0.0;       // W
    double variance_1 = 0.0;  // V^2
    double variance_2 = 0.0;  // V^2
};

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_err = 0.0;
    double intercept_err = 0.0;
    double rms_residual = 0.0;
    double max_abs_residual = 0.0;
};

/// Ordinary least squares with textbook standard errors.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
    }
    detail::require(sxx > 0.0, "calibration powers are degenerate");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double r = y[k] - (f.slope * x[k] + f.intercept);
        ssr += r * r;
        f.max_abs_residual = std::max(f.max_abs_residual, std::abs(r));
    }
    const double s2 = ssr / (n - 2.0);
    f.slope_err = std::sqrt(s2 / sxx);
    f.intercept_err = std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
    f.rms_residual = std::sqrt(ssr / n);
    return f;
}

struct CalibrationFit {
    DetectorCalibration calibration;
    LineFit channel_1;
    LineFit channel_2;
};

/// Per-channel linear fit of variance against LO power.
inline CalibrationFit fit_calibration_detailed(std::span<const CalibrationPoint> points) {
    detail::require(points.size() >= 3, "calibration needs at least 3 points");
    std::vector<double> x, y1, y2;
    for (const auto& p : points) {
        x.push_back(p.power);
        y1.push_back(p.variance_1);
        y2.push_back(p.variance_2);
    }
    auto distinct = x;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    detail::require(distinct.size() >= 3, "calibration needs at least 3 distinct powers");

    CalibrationFit out;
    out.channel_1 = fit_line(x, y1);
    out.channel_2 = fit_line(x, y2);
    if (out.channel_1.slope <= 0.0 || out.channel_2.slope <= 0.0)
        throw ValidationError("nonpositive fitted slope: detector not responding to LO");
    auto& c = out.calibration;
    c.slope_1 = out.channel_1.slope;
    c.intercept_1 = out.channel_1.intercept;
    c.slope_err_1 = out.channel_1.slope_err;
    c.intercept_err_1 = out.channel_1.intercept_err;
    c.slope_2 = out.channel_2.slope;
    c.intercept_2 = out.channel_2.intercept;
    c.slope_err_2 = out.channel_2.slope_err;
    c.intercept_err_2 = out.channel_2.intercept_err;
    return out;
}

inline DetectorCalibration fit_calibration(std::span<const CalibrationPoint> points) {
    return fit_calibration_detailed(points).calibration;
}

/// `count` LO powers evenly spaced over [lo, hi] (default: 0.01 mW to 4.05 mW).
inline std::vector<double> linear_powers(std::size_t count = 20, double lo = 0.01e-3, double hi = 4.05e-3) {
    detail::require(count >= 2 && hi > lo && lo > 0.0, "invalid power range");
    std::vector<double> out(count);
    for (std::size_t k = 0; k < count; ++k)
        out[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
    return out;
}

/// Sample variance (n-1 normalization) of simulated analog voltages at each
/// LO power. Point k uses sub-stream k of `seed`.
inline std::vector<CalibrationPoint> run_calibration_sweep(const DetectorCalibration& truth,
                                                           std::span<const double> powers,
                                                           std::size_t samples_per_point,
                                                           const AdcConfig& adc, std::uint64_t seed) {
    detail::require(!powers.empty(), "calibration sweep needs at least one power");
    detail::require(samples_per_point >= 2, "calibration sweep needs >= 2 samples per point");
    detail::require(adc.sample_rate > 0.0, "sample rate must be > 0");
    truth.validate();
    std::vector<CalibrationPoint> out;
    for (std::size_t k = 0; k < powers.size(); ++k) {
        detail::require(powers[k] > 0.0, "calibration powers must be > 0");
        auto engine = make_engine(seed, k);
        Gaussian g(engine);
        CalibrationPoint pt{powers[k], 0.0, 0.0};
        for (int ch = 1; ch <= 2; ++ch) {
            const double sd = std::sqrt(truth.variance(ch, powers[k]));
            double mean = 0.0, m2 = 0.0;
            for (std::size_t t = 0; t < samples_per_point; ++t) {
                const double v = sd * g();
                const double d = v - mean;
                mean += d / static_cast<double>(t + 1);
                m2 += d * (v - mean);
            }
            (ch == 1 ? pt.variance_1 : pt.variance_2) = m2 / static_cast<double>(samples_per_point - 1);
        }
        out.push_back(pt);
    }
    return out;
}

// ---------------------------------------------------------------------------
// LO monitor

struct MonitorReport {
    bool ok = true;
    double max_relative_deviation = 0.0;
    std::vector<std::size_t> violations;
};

inline MonitorReport lo_monitor_check(std::span<const double> monitor_powers, double nominal,
                                      double rel_tolerance) {
    detail::require(!monitor_powers.empty(), "LO monitor stream is empty");
    detail::require(nominal > 0.0, "nominal LO power must be > 0");
    detail::require(rel_tolerance > 0.0, "LO tolerance must be > 0");
    MonitorReport r;
    for (std::size_t k = 0; k < monitor_powers.size(); ++k) {
        const double dev = std::abs(monitor_powers[k] - nominal) / nominal;
        r.max_relative_deviation = std::max(r.max_relative_deviation, dev);
        if (dev > rel_tolerance) r.violations.push_back(k);
    }
    r.ok = r.violations.empty();
    return r;
}

/// Monitor photodiode readings: tap_ratio * P with relative Gaussian jitter,
/// multiplied by `drift` (1 = no drift).
inline std::vector<double> simulate_monitor(double lo_power, double tap_ratio, std::size_t n,
                                            double relative_noise, double drift, std::uint64_t seed,
                                            std::uint64_t stream) {
    auto engine = make_engine(seed ^ 0x4d4f4e49544f52ull, stream);
    Gaussian g(engine);
    std::vector<double> out(n);
    for (auto& x : out) x = tap_ratio * lo_power * drift * (1.0 + relative_noise * g());
    return out;
}

}  // namespace hqrng
