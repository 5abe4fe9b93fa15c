#pragma once

// File-to-file pipeline stages. Each stage reads the previous stage's file,
// so running them one by one reproduces `run_pipeline` bit for bit.
//
//   simulate  -> raw.qrb1       (10-bit codes at the ADC rate, LO-gated)
//   filter    -> filtered.qrb1  (band-limited, decimated, requantized)
//   entropy   -> certificate
//   extract   -> bits.bin + bits.bin.kv sidecar
//   test      -> battery report

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "hqrng/acquisition.hpp"
#include "hqrng/bits.hpp"
#include "hqrng/config.hpp"
#include "hqrng/dsp.hpp"
#include "hqrng/entropy_bounds.hpp"
#include "hqrng/error.hpp"
#include "hqrng/extractor.hpp"
#include "hqrng/keyvalue.hpp"
#include "hqrng/qrb1.hpp"
#include "hqrng/randomness_tests.hpp"

namespace hqrng {

inline std::string sha256_hex(const std::uint8_t* data, std::size_t n) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data, n, md, &len, EVP_sha256(), nullptr) != 1) throw StageError("digest", "SHA-256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned k = 0; k < len; ++k) {
        out += hex[md[k] >> 4];
        out += hex[md[k] & 15];
    }
    return out;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateSummary {
    std::uint64_t samples_written = 0;
    std::uint64_t blocks_total = 0;
    std::vector<std::uint64_t> excluded_blocks;
    std::uint64_t clipped = 0;
    AdcConfig adc;

    KeyValueDoc to_kv() const {
        KeyValueDoc kv;
        kv.set("simulate.samples", static_cast<unsigned long long>(samples_written));
        kv.set("simulate.blocks", static_cast<unsigned long long>(blocks_total));
        std::string ex;
        for (std::size_t k = 0; k < excluded_blocks.size(); ++k)
            ex += (k ? "," : "") + std::to_string(excluded_blocks[k]);
        kv.set("simulate.excluded_blocks", ex);
        kv.set("simulate.clipped", static_cast<unsigned long long>(clipped));
        kv.set("simulate.full_scale", adc.full_scale);
        return kv;
    }
};

/// Monitor verdict for acquisition block `k` (drift injected on the
/// configured blocks).
inline MonitorReport monitor_block(const PipelineConfig& cfg, std::uint64_t k) {
    const bool drift = std::find(cfg.lo_drift_blocks.begin(), cfg.lo_drift_blocks.end(), k) !=
                       cfg.lo_drift_blocks.end();
    const auto readings = simulate_monitor(cfg.lo_power, cfg.lo_tap_ratio, cfg.lo_monitor_samples,
                                           cfg.lo_monitor_noise, drift ? cfg.lo_drift_factor : 1.0,
                                           cfg.sim_seed, k);
    return lo_monitor_check(readings, cfg.lo_tap_ratio * cfg.lo_power, cfg.lo_tolerance);
}

/// Simulate `cfg.sim_samples` raw samples in acquisition blocks and write the
/// blocks the LO monitor accepts. Blocks are generated `cfg.workers` at a
/// time; the output does not depend on the worker count.
inline SimulateSummary simulate_stage(const PipelineConfig& cfg, const std::string& out_path) {
    cfg.validate();
    SimulateSummary sum;
    sum.adc = cfg.resolved_adc();
    qrb1::Writer writer(out_path, {sum.adc.bits, sum.adc.sample_rate, sum.adc.full_scale, cfg.lo_power});
    const std::uint64_t bs = cfg.sim_block_samples;
    sum.blocks_total = (cfg.sim_samples + bs - 1) / bs;
    auto make = [&](std::uint64_t k) {
        const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(bs, cfg.sim_samples - k * bs));
        auto v = simulate_detector_stream(cfg.calibration, cfg.lo_power, sum.adc, n, cfg.sim_seed, k, cfg.noise,
                                          k * bs, cfg.state);
        auto qi = quantize(v.i, sum.adc);
        auto qq = quantize(v.q, sum.adc);
        SampleBlock b;
        b.codes_i = std::move(qi.codes);
        b.codes_q = std::move(qq.codes);
        b.adc = sum.adc;
        b.lo_power = cfg.lo_power;
        b.clipped_count = qi.clipped + qq.clipped;
        b.seed_tag = cfg.sim_seed;
        return b;
    };
    for (std::uint64_t k0 = 0; k0 < sum.blocks_total; k0 += cfg.workers) {
        const auto k1 = std::min<std::uint64_t>(sum.blocks_total, k0 + cfg.workers);
        std::vector<std::future<SampleBlock>> jobs;
        std::vector<bool> keep;
        for (auto k = k0; k < k1; ++k) {
            const bool ok = monitor_block(cfg, k).ok;
            keep.push_back(ok);
            if (!ok) sum.excluded_blocks.push_back(k);
            jobs.push_back(ok ? std::async(cfg.workers > 1 ? std::launch::async : std::launch::deferred, make, k)
                              : std::future<SampleBlock>{});
        }
        for (std::size_t j = 0; j < jobs.size(); ++j) {
            if (!keep[j]) continue;
            const auto b = jobs[j].get();
            sum.clipped += b.clipped_count;
            writer.write(b);
        }
    }
    writer.close();
    sum.samples_written = writer.samples_written();
    if (sum.samples_written == 0) throw StageError("simulate", "every block was rejected by the LO monitor");
    return sum;
}

// ---------------------------------------------------------------------------
// filter

struct FilterSummary {
    std::uint64_t samples_in = 0;
    std::uint64_t samples_out = 0;
    std::uint64_t clipped = 0;
    double output_rate = 0.0;

    KeyValueDoc to_kv() const {
        KeyValueDoc kv;
        kv.set("filter.samples_in", static_cast<unsigned long long>(samples_in));
        kv.set("filter.samples_out", static_cast<unsigned long long>(samples_out));
        kv.set("filter.clipped", static_cast<unsigned long long>(clipped));
        kv.set("filter.output_rate", output_rate);
        return kv;
    }
};

/// Band-limit and decimate both channels, then requantize on the same ADC
/// grid. With DSP disabled the codes are copied through.
inline FilterSummary filter_stage(const PipelineConfig& cfg, const std::string& in_path,
                                  const std::string& out_path) {
    cfg.validate();
    qrb1::Reader reader(in_path);
    const auto in_h = reader.header();
    if (std::abs(in_h.sample_rate - cfg.adc.sample_rate) > 1e-9 * cfg.adc.sample_rate)
        throw ValidationError("input sample rate differs from adc.sample_rate");
    FilterSummary sum;
    sum.samples_in = reader.total_samples();
    sum.output_rate = cfg.output_rate();
    auto out_h = in_h;
    out_h.sample_rate = sum.output_rate;
    qrb1::Writer writer(out_path, out_h);
    const std::size_t chunk = std::size_t{1} << 20;

    if (!cfg.dsp_enabled) {
        while (reader.remaining()) writer.write(reader.read(chunk));
        writer.close();
        sum.samples_out = writer.samples_written();
        return sum;
    }

    StreamingBandpass fi(cfg.adc.sample_rate, cfg.band, cfg.dsp_options());
    StreamingBandpass fq(cfg.adc.sample_rate, cfg.band, cfg.dsp_options());
    const AdcConfig out_adc = out_h.adc();
    std::vector<double> xi, xq, yi, yq;
    auto emit = [&] {
        const std::size_t n = std::min(yi.size(), yq.size());
        if (n == 0) return;
        auto qi = quantize(std::span<const double>(yi.data(), n), AdcConfig{out_adc.sample_rate, out_adc.bits,
                                                                           static_cast<double>(out_adc.code_count())});
        auto qq = quantize(std::span<const double>(yq.data(), n), AdcConfig{out_adc.sample_rate, out_adc.bits,
                                                                           static_cast<double>(out_adc.code_count())});
        SampleBlock b;
        b.codes_i = std::move(qi.codes);
        b.codes_q = std::move(qq.codes);
        b.adc = out_adc;
        b.lo_power = in_h.lo_power;
        sum.clipped += qi.clipped + qq.clipped;
        writer.write(b);
        yi.erase(yi.begin(), yi.begin() + static_cast<std::ptrdiff_t>(n));
        yq.erase(yq.begin(), yq.begin() + static_cast<std::ptrdiff_t>(n));
    };
    while (reader.remaining()) {
        const auto b = reader.read(chunk);
        xi.assign(b.codes_i.begin(), b.codes_i.end());
        xq.assign(b.codes_q.begin(), b.codes_q.end());
        fi.push(xi, yi);
        fq.push(xq, yq);
        emit();
    }
    fi.finish(yi);
    fq.finish(yq);
    emit();
    writer.close();
    sum.samples_out = writer.samples_written();
    return sum;
}

// ---------------------------------------------------------------------------
// entropy

/// Calibration that maps the codes of a file with header `h` to phase space:
/// band-scaled for decimated output, the detector lines for raw codes.
inline DetectorCalibration calibration_for(const PipelineConfig& cfg, const qrb1::Header& h) {
    const bool raw = std::abs(h.sample_rate - cfg.adc.sample_rate) <= 1e-9 * cfg.adc.sample_rate;
    return raw ? cfg.calibration : cfg.effective_calibration();
}

inline std::pair<double, double> file_resolution(const PipelineConfig& cfg, const qrb1::Header& h) {
    detail::require(h.lo_power > 0.0, "file records no LO power");
    return phase_space_resolution(calibration_for(cfg, h), h.lo_power, h.adc());
}

/// Certificate for a code file; variances are measured over the whole file.
inline EntropyCertificate entropy_stage(const PipelineConfig& cfg, const std::string& in_path) {
    qrb1::Reader reader(in_path);
    const auto h = reader.header();
    const auto [dq, dp] = file_resolution(cfg, h);
    double sq = 0.0, sq2 = 0.0, sp = 0.0, sp2 = 0.0;
    std::uint64_t n = 0;
    while (reader.remaining()) {
        const auto b = reader.read(std::size_t{1} << 20);
        for (std::size_t t = 0; t < b.size(); ++t) {
            const double q = b.codes_i[t] * dq;
            const double p = b.codes_q[t] * dp;
            sq += q;
            sq2 += q * q;
            sp += p;
            sp2 += p * p;
        }
        n += b.size();
    }
    std::optional<double> vq, vp;
    if (n >= 2) {
        const auto nd = static_cast<double>(n);
        vq = (sq2 - sq * sq / nd) / (nd - 1.0);
        vp = (sp2 - sp * sp / nd) / (nd - 1.0);
    }
    return build_certificate(dq, dp, vq, vp, h.sample_rate, cfg.epsilon);
}

// ---------------------------------------------------------------------------
// extract

/// Appends bit blocks to a packed MSB-first byte file.
class BitFileWriter {
public:
    explicit BitFileWriter(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw StageError("io", "cannot write " + path);
    }

    void append(const BitBlock& b) {
        pending_.append(b);
        const std::size_t whole = pending_.size() / 8 * 8;
        if (whole == 0) return;
        const auto& bytes = pending_.bytes();
        out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(whole / 8));
        pending_ = pending_.slice(whole, pending_.size() - whole);
        written_ += whole;
        if (!out_) throw StageError("io", "write failed for " + path_);
    }

    /// Flush the final partial byte (zero padded); returns total bits.
    std::uint64_t close() {
        if (!pending_.empty()) {
            out_.write(reinterpret_cast<const char*>(pending_.bytes().data()), 1);
            written_ += pending_.size();
        }
        out_.close();
        if (!out_) throw StageError("io", "close failed for " + path_);
        return written_;
    }

private:
    std::string path_;
    std::ofstream out_;
    BitBlock pending_;
    std::uint64_t written_ = 0;
};

struct ExtractSummary {
    EntropyCertificate certificate;
    std::uint64_t blocks = 0;
    std::uint64_t input_bits = 0;
    std::uint64_t output_bits = 0;
    std::uint64_t dropped_samples = 0;  // tail too short for a positive output length
    KeyValueDoc sidecar;

    double ratio() const { return input_bits ? static_cast<double>(output_bits) / input_bits : 0.0; }
};

inline std::string sidecar_path(const std::string& bits_path) { return bits_path + ".kv"; }

/// Toeplitz-hash the code file in blocks of `extract.block_samples` samples
/// at the certified conditional min-entropy. Writes the packed output and a
/// sidecar with the certificate and per-block SHA-256 digests.
inline ExtractSummary extract_stage(const PipelineConfig& cfg, const std::string& in_path,
                                    const std::string& out_path) {
    cfg.validate();
    qrb1::Reader reader(in_path);
    const auto h = reader.header();
    const auto [dq, dp] = file_resolution(cfg, h);
    ExtractSummary sum;
    sum.certificate = build_certificate(dq, dp, std::nullopt, std::nullopt, h.sample_rate, cfg.epsilon);
    const double hmin = sum.certificate.h_quantum_bound;
    detail::require(hmin > 0.0, "certified min-entropy is not positive");
    const auto bits_per_sample = static_cast<std::size_t>(2 * h.bits);

    BitFileWriter out(out_path);
    auto& side = sum.sidecar;
    side.comment("extraction sidecar");
    side.merge(sum.certificate.to_kv(), "cert.");
    side.set("extract.block_samples", cfg.extract_block_samples);
    side.set("extract.seed_policy", cfg.extract_seed_reuse ? "reuse" : "per_block");
    side.set("extract.seed_sha256", sha256_hex(reinterpret_cast<const std::uint8_t*>(
                                                   format_master_seed(cfg.extract_seed).data()),
                                               64));
    while (reader.remaining()) {
        const auto b = reader.read(cfg.extract_block_samples);
        const double k = static_cast<double>(b.size()) * hmin;
        if (k - 2.0 * std::log2(1.0 / cfg.epsilon) < 1.0) {
            sum.dropped_samples += b.size();
            continue;
        }
        const auto n_seed = ExtractorParams::required_seed_bits(b.size(), bits_per_sample, hmin, cfg.epsilon);
        auto seed = seed_expand(cfg.extract_seed, n_seed, cfg.extract_seed_reuse ? 0 : sum.blocks);
        const auto params =
            ExtractorParams::for_block(b.size(), bits_per_sample, hmin, cfg.epsilon, std::move(seed));
        const auto y = toeplitz_extract(pack_samples_to_bits(b), params);
        out.append(y);
        const std::string tag = "block." + std::to_string(sum.blocks) + ".";
        side.set(tag + "bits", y.size());
        side.set(tag + "sha256", sha256_hex(y.bytes().data(), y.bytes().size()));
        sum.input_bits += params.n_input_bits;
        sum.output_bits += y.size();
        ++sum.blocks;
    }
    const auto total = out.close();
    detail::require(total == sum.output_bits, "bit file length mismatch");
    side.set("extract.blocks", static_cast<unsigned long long>(sum.blocks));
    side.set("extract.input_bits", static_cast<unsigned long long>(sum.input_bits));
    side.set("extract.output_bits", static_cast<unsigned long long>(sum.output_bits));
    side.set("extract.dropped_samples", static_cast<unsigned long long>(sum.dropped_samples));
    side.set("extract.ratio", sum.ratio());
    side.save(sidecar_path(out_path));
    return sum;
}

/// Read `count` bits starting at bit `first` of a packed bit file.
inline BitBlock read_bits(const std::string& path, std::uint64_t first, std::uint64_t count) {
    detail::require(first % 8 == 0, "bit offset must be byte aligned");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StageError("io", "cannot open " + path);
    in.seekg(static_cast<std::streamoff>(first / 8));
    std::vector<std::uint8_t> bytes((count + 7) / 8);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw StageError("io", path + ": short read");
    return BitBlock::from_bytes(std::move(bytes), static_cast<std::size_t>(count), BitBlock::Origin::extracted);
}

/// Bit count of a packed bit file: from its sidecar when present, otherwise
/// 8 bits per byte.
inline std::uint64_t bit_file_length(const std::string& path) {
    std::ifstream probe(sidecar_path(path));
    if (probe) return static_cast<std::uint64_t>(KeyValueDoc::load(sidecar_path(path)).integer("extract.output_bits"));
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw StageError("io", "cannot open " + path);
    return static_cast<std::uint64_t>(in.tellg()) * 8;
}

// ---------------------------------------------------------------------------
// test

/// Battery on the first `n_bits` bits (0: the whole file). One failing test
/// triggers a rerun on the next `n_bits` bits when the file holds them.
inline RetestOutcome test_stage(const std::string& bits_path, std::uint64_t n_bits, double alpha) {
    const auto total = bit_file_length(bits_path);
    if (n_bits == 0) n_bits = total;
    if (n_bits > total)
        throw ValidationError("requested " + std::to_string(n_bits) + " bits but the file holds " +
                              std::to_string(total));
    const std::uint64_t step = (n_bits + 7) / 8 * 8;
    std::function<BitBlock()> fresh;
    if (step + n_bits <= total) fresh = [&] { return read_bits(bits_path, step, n_bits); };
    return run_battery_with_retest(read_bits(bits_path, 0, n_bits), fresh, alpha);
}

// ---------------------------------------------------------------------------
// diagnostics

struct AutocorrSummary {
    std::vector<double> r;  // lags 0..max_lag
    std::size_t samples = 0;
    double threshold = 0.0;  // 4/sqrt(N)
    double max_abs = 0.0;    // over lags >= 1
    std::size_t worst_lag = 0;

    bool flagged() const { return max_abs > threshold; }
};

inline AutocorrSummary summarize_autocorrelation(std::span<const double> x, std::size_t max_lag) {
    AutocorrSummary s;
    s.r = autocorrelation(x, max_lag);
    s.samples = x.size();
    s.threshold = 4.0 / std::sqrt(static_cast<double>(x.size()));
    for (std::size_t k = 1; k < s.r.size(); ++k)
        if (std::abs(s.r[k]) > s.max_abs) {
            s.max_abs = std::abs(s.r[k]);
            s.worst_lag = k;
        }
    return s;
}

/// Autocorrelation of one channel ('i' or 'q') of a code file over its
/// first `max_samples` samples.
inline AutocorrSummary autocorr_file(const std::string& path, std::size_t max_lag, std::size_t max_samples,
                                     char channel = 'i') {
    qrb1::Reader reader(path);
    const auto b = reader.read(static_cast<std::size_t>(std::min<std::uint64_t>(max_samples, reader.total_samples())));
    const auto& c = channel == 'q' ? b.codes_q : b.codes_i;
    const std::vector<double> x(c.begin(), c.end());
    detail::require(x.size() > max_lag, "stream shorter than the requested lag range");
    return summarize_autocorrelation(x, max_lag);
}

inline PsdEstimate psd_file(const std::string& path, std::size_t segment, double overlap, std::size_t max_samples,
                            char channel = 'i') {
    qrb1::Reader reader(path);
    const auto b = reader.read(static_cast<std::size_t>(std::min<std::uint64_t>(max_samples, reader.total_samples())));
    const auto& c = channel == 'q' ? b.codes_q : b.codes_i;
    const double lsb = b.adc.lsb();
    std::vector<double> x(c.size());
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = c[t] * lsb;
    return welch_psd(x, reader.header().sample_rate, segment, overlap);
}

/// Raw LO-off (electronic noise only) record with the same ADC settings,
/// used as the reference for the shot-noise clearance.
inline void simulate_lo_off(const PipelineConfig& cfg, std::size_t n, const std::string& out_path) {
    const auto adc = cfg.resolved_adc();
    auto v = simulate_detector_stream(cfg.calibration, 0.0, adc, n, cfg.sim_seed ^ 0x4c4f4f4646ull, 0, cfg.noise);
    SampleBlock b;
    b.codes_i = quantize(v.i, adc).codes;
    b.codes_q = quantize(v.q, adc).codes;
    b.adc = adc;
    qrb1::Writer w(out_path, {adc.bits, adc.sample_rate, adc.full_scale, 0.0});
    w.write(b);
    w.close();
}

// ---------------------------------------------------------------------------
// run

struct RunReport {
    SimulateSummary simulate;
    FilterSummary filter;
    EntropyCertificate certificate;
    ExtractSummary extract;
    AutocorrSummary autocorr;
    double band_gap_db = 0.0;
    RetestOutcome battery;

    KeyValueDoc to_kv() const {
        KeyValueDoc kv;
        kv.comment("pipeline run report");
        kv.merge(simulate.to_kv());
        kv.merge(filter.to_kv());
        kv.merge(certificate.to_kv(), "cert.");
        kv.set("extract.blocks", static_cast<unsigned long long>(extract.blocks));
        kv.set("extract.input_bits", static_cast<unsigned long long>(extract.input_bits));
        kv.set("extract.output_bits", static_cast<unsigned long long>(extract.output_bits));
        kv.set("extract.ratio", extract.ratio());
        kv.set("autocorr.samples", autocorr.samples);
        kv.set("autocorr.threshold", autocorr.threshold);
        kv.set("autocorr.max_abs", autocorr.max_abs);
        kv.set("autocorr.worst_lag", autocorr.worst_lag);
        kv.set("autocorr.flagged", autocorr.flagged());
        kv.set("spectrum.band_gap_db", band_gap_db);
        kv.merge(battery.first.to_kv("test.first."));
        if (battery.retest) kv.merge(battery.retest->to_kv("test.retest."));
        kv.set("test.passed", battery.passed());
        return kv;
    }
};

struct RunPaths {
    std::string raw, filtered, bits, lo_off, report, config;

    explicit RunPaths(const std::string& dir)
        : raw(dir + "/raw.qrb1"),
          filtered(dir + "/filtered.qrb1"),
          bits(dir + "/bits.bin"),
          lo_off(dir + "/lo_off.qrb1"),
          report(dir + "/report.kv"),
          config(dir + "/config.kv") {}
};

namespace detail {

/// Run `f` and tag any failure with the pipeline stage name, keeping the
/// validation/runtime distinction.
template <class F>
auto in_stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string(name) + ": " + e.what());
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

}  // namespace detail

/// All stages in sequence through files in `dir` (which must exist).
inline RunReport run_pipeline(const PipelineConfig& cfg, const std::string& dir) {
    detail::in_stage("config", [&] {
        cfg.validate();
        return 0;
    });
    const RunPaths p(dir);
    cfg.to_kv().save(p.config);
    RunReport rep;
    rep.simulate = detail::in_stage("simulate", [&] { return simulate_stage(cfg, p.raw); });

    constexpr std::size_t seg = 4096;
    const std::size_t psd_samples = 64 * seg;
    rep.band_gap_db = detail::in_stage("spectrum", [&] {
        simulate_lo_off(cfg, psd_samples, p.lo_off);
        return band_gap_db(psd_file(p.raw, seg, 0.5, psd_samples), psd_file(p.lo_off, seg, 0.5, psd_samples),
                           cfg.band);
    });

    rep.filter = detail::in_stage("filter", [&] { return filter_stage(cfg, p.raw, p.filtered); });
    rep.certificate = detail::in_stage("entropy", [&] { return entropy_stage(cfg, p.filtered); });
    rep.autocorr = detail::in_stage("autocorr", [&] {
        return autocorr_file(p.filtered, cfg.autocorr_max_lag, cfg.autocorr_samples);
    });
    rep.extract = detail::in_stage("extract", [&] { return extract_stage(cfg, p.filtered, p.bits); });
    rep.battery = detail::in_stage("test", [&] { return test_stage(p.bits, cfg.test_bits, cfg.test_alpha); });
    rep.to_kv().save(p.report);
    return rep;
}

}  // namespace hqrng
