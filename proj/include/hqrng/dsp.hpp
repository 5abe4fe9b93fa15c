#pragma once

// Digital post-detection processing: ideal (brick-wall) band selection in
// the frequency domain, decimation at the first zero of the resulting sinc
// autocorrelation, and the autocorrelation / PSD diagnostics.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "hqrng/error.hpp"
#include "hqrng/fft.hpp"
#include "hqrng/keyvalue.hpp"

namespace hqrng {

struct BandSpec {
    double f_lo = 250e6;  // Hz
    double f_hi = 1.5e9;  // Hz

    double width() const noexcept { return f_hi - f_lo; }

    void validate(double sample_rate) const {
        detail::require(sample_rate > 0.0, "sample rate must be > 0");
        detail::require(f_lo >= 0.0 && f_lo < f_hi, "band requires 0 <= f_lo < f_hi");
        detail::require(f_hi <= sample_rate / 2.0 * (1.0 + 1e-12), "band exceeds the Nyquist frequency");
    }
};

/// Fraction of white-noise power a brick-wall band keeps.
inline double noise_bandwidth_fraction(const BandSpec& band, double sample_rate) {
    band.validate(sample_rate);
    return band.width() / (sample_rate / 2.0);
}

namespace detail {

/// Zero every bin whose frequency lies outside [f_lo, f_hi], and DC always.
inline void apply_band_mask(std::span<std::complex<double>> spec, std::size_t n, double sample_rate,
                            const BandSpec& band) {
    const double df = sample_rate / static_cast<double>(n);
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const double f = static_cast<double>(k) * df;
        if (k == 0 || f < band.f_lo * (1.0 - 1e-12) || f > band.f_hi * (1.0 + 1e-12)) spec[k] = 0.0;
    }
}

}  // namespace detail

/// Whole-stream brick-wall filter: one transform over the full length.
inline std::vector<double> bandpass_brickwall(std::span<const double> stream, double sample_rate,
                                              const BandSpec& band) {
    band.validate(sample_rate);
    detail::require(stream.size() >= 2, "stream must hold at least 2 samples");
    const std::size_t n = stream.size();
    fft::RealTransform tr(n);
    std::copy(stream.begin(), stream.end(), tr.time().begin());
    tr.forward();
    detail::apply_band_mask(tr.spectrum(), n, sample_rate, band);
    tr.inverse();
    std::vector<double> out(n);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t t = 0; t < n; ++t) out[t] = tr.time()[t] * scale;
    return out;
}

/// Decimation factor M at which the ideal band's autocorrelation
/// r(k) = [sin(2 pi f_hi k/fs) - sin(2 pi f_lo k/fs)] / (2 pi B k/fs)
/// vanishes at every multiple of M.
///
/// M = fs/B always works (the sinc envelope is zero there). When f_lo is an
/// integer multiple of B (e.g. a low-pass band), the zeros already fall at
/// multiples of fs/(2B), the Nyquist rate of the band; that smaller factor is
/// used when it is an integer.
inline std::size_t decimation_factor(double sample_rate, const BandSpec& band) {
    band.validate(sample_rate);
    auto is_int = [](double v) { return std::abs(v - std::round(v)) <= 1e-9 * std::max(1.0, std::abs(v)); };
    const double ratio = sample_rate / band.width();
    if (!is_int(ratio) || std::round(ratio) < 1.0)
        throw ValidationError("band width must divide the sample rate (fs/B = " + format_double(ratio) +
                              "); adjust f_lo/f_hi so the ratio is an integer");
    const auto m = static_cast<std::size_t>(std::round(ratio));
    if (m % 2 == 0 && is_int(band.f_lo / band.width())) return m / 2;
    return m;
}

struct Downsampled {
    std::vector<double> samples;
    double sample_rate = 0.0;
    std::size_t factor = 1;
};

/// Keep every M-th sample (starting at `phase`). For an ideal band of width
/// B the autocorrelation is a sinc whose first zero sits at lag fs/B.
inline Downsampled decorrelating_downsample(std::span<const double> stream, double sample_rate,
                                            const BandSpec& band, std::size_t phase = 0) {
    const std::size_t m = decimation_factor(sample_rate, band);
    detail::require(phase < m, "downsample phase must be < factor");
    Downsampled out;
    out.factor = m;
    out.sample_rate = sample_rate / static_cast<double>(m);
    for (std::size_t t = phase; t < stream.size(); t += m) out.samples.push_back(stream[t]);
    return out;
}

/// Streaming brick-wall filter with overlap-discard framing and optional
/// fused decimation.
///
/// Each frame of `frame_len` samples is transformed, masked and inverted;
/// `margin` samples at each frame edge are discarded, so consecutive frames
/// advance by frame_len - 2*margin. The stream is zero-extended before its
/// first and after its last sample. With decimation M > 1, the masked
/// spectrum is folded to frame_len/M bins before the inverse transform, which
/// yields exactly the samples at positions phase + k*M.
class StreamingBandpass {
public:
    struct Options {
        std::size_t frame_len = std::size_t{1} << 16;
        std::size_t margin = std::size_t{1} << 12;
        std::size_t decimation = 1;
        std::size_t phase = 0;
    };

    StreamingBandpass(double sample_rate, const BandSpec& band, Options opt)
        : fs_(sample_rate), band_(band), opt_(opt) {
        band.validate(sample_rate);
        const auto m = opt.decimation;
        detail::require(m >= 1 && opt.phase < m, "invalid decimation settings");
        detail::require(opt.frame_len >= 8 && opt.frame_len % (2 * m) == 0,
                        "frame length must be a multiple of 2x the decimation factor");
        detail::require(opt.margin % m == 0, "margin must be a multiple of the decimation factor");
        detail::require(2 * opt.margin < opt.frame_len, "margin must be below half the frame length");
        hop_ = opt.frame_len - 2 * opt.margin;
        // leading context: zeros standing in for samples before t = 0
        buffer_.assign(opt.margin, 0.0);
    }

    double output_rate() const { return fs_ / static_cast<double>(opt_.decimation); }
    std::size_t hop() const { return hop_; }

    /// Append filtered output that becomes available after `x`.
    void push(std::span<const double> x, std::vector<double>& out) {
        buffer_.insert(buffer_.end(), x.begin(), x.end());
        std::size_t start = 0;
        while (buffer_.size() - start >= opt_.frame_len) {
            process_frame(std::span<const double>(buffer_).subspan(start, opt_.frame_len), hop_, out);
            start += hop_;
        }
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(start));
    }

    /// Flush the remaining samples (zero-extended on the right).
    void finish(std::vector<double>& out) {
        const std::size_t pending = buffer_.size() - opt_.margin;  // samples not yet emitted
        std::size_t done = 0;
        while (done < pending) {
            std::vector<double> frame(opt_.frame_len, 0.0);
            const std::size_t avail = std::min(opt_.frame_len, buffer_.size() - done);
            std::copy_n(buffer_.begin() + static_cast<std::ptrdiff_t>(done), avail, frame.begin());
            process_frame(frame, std::min(hop_, pending - done), out);
            done += hop_;
        }
        buffer_.assign(opt_.margin, 0.0);
        emitted_ = 0;
    }

private:
    /// Emit frame positions [margin, margin + keep) (decimated if requested).
    void process_frame(std::span<const double> frame, std::size_t keep, std::vector<double>& out) {
        const std::size_t n = opt_.frame_len;
        const std::size_t m = opt_.decimation;
        auto& tr = fft::cached(n);
        std::copy(frame.begin(), frame.end(), tr.time().begin());
        tr.forward();
        auto spec = tr.spectrum();
        detail::apply_band_mask(spec, n, fs_, band_);
        const double scale = 1.0 / static_cast<double>(n);

        if (m == 1) {
            tr.inverse();
            auto t = tr.time();
            for (std::size_t k = 0; k < keep; ++k) out.push_back(t[opt_.margin + k] * scale);
            emitted_ += keep;
            return;
        }

        // Global index of frame position 0 is emitted_ - margin; we need the
        // frame positions p with (emitted_ - margin + p - phase) % m == 0.
        const std::size_t r = (opt_.phase + m - (emitted_ % m)) % m;  // margin % m == 0
        const std::size_t nd = n / m;
        auto& small = fft::cached(nd);
        auto folded = small.spectrum();
        const double w = 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(n);
        auto full = [&](std::size_t f) {
            return f <= n / 2 ? spec[f] : std::conj(spec[n - f]);
        };
        for (std::size_t g = 0; g < folded.size(); ++g) {
            std::complex<double> acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                const std::size_t f = g + j * nd;
                const auto x = full(f);
                if (x == 0.0) continue;
                acc += r == 0 ? x : x * std::polar(1.0, w * static_cast<double>(f));
            }
            folded[g] = acc;
        }
        small.inverse();
        auto t = small.time();
        for (std::size_t k = 0; k < nd; ++k) {
            const std::size_t pos = r + k * m;
            if (pos >= opt_.margin && pos < opt_.margin + keep) out.push_back(t[k] * scale);
        }
        emitted_ += keep;
    }

    double fs_;
    BandSpec band_;
    Options opt_;
    std::size_t hop_ = 0;
    std::vector<double> buffer_;
    std::uint64_t emitted_ = 0;  // input samples covered by emitted output
};

/// Filter (and optionally decimate) a finite stream with the streaming
/// engine.
inline std::vector<double> bandpass_blocked(std::span<const double> stream, double sample_rate,
                                            const BandSpec& band, StreamingBandpass::Options opt) {
    StreamingBandpass f(sample_rate, band, opt);
    std::vector<double> out;
    out.reserve(stream.size() / opt.decimation + 1);
    f.push(stream, out);
    f.finish(out);
    return out;
}

// ---------------------------------------------------------------------------
// Diagnostics

/// Normalized biased autocorrelation r(0..max_lag), computed with
/// transform-based correlation over chunks.
inline std::vector<double> autocorrelation(std::span<const double> stream, std::size_t max_lag) {
    const std::size_t n = stream.size();
    detail::require(n >= 2 && max_lag < n / 2, "max_lag must be below half the stream length");
    double mean = 0.0;
    for (double x : stream) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : stream) var += (x - mean) * (x - mean);
    detail::require(var > 0.0, "stream has zero variance");

    const std::size_t len =
        std::min(std::max<std::size_t>(std::size_t{1} << 16, fft::next_pow2(4 * (max_lag + 1))),
                 fft::next_pow2(n + max_lag + 1));
    const std::size_t chunk = len - max_lag - 1;
    auto& tr_a = fft::cached(len);
    std::vector<std::complex<double>> fa(tr_a.bins());
    std::vector<double> acc(max_lag + 1, 0.0);
    for (std::size_t a = 0; a < n; a += chunk) {
        const std::size_t na = std::min(chunk, n - a);
        const std::size_t nb = std::min(chunk + max_lag, n - a);
        auto t = tr_a.time();
        std::fill(t.begin(), t.end(), 0.0);
        for (std::size_t k = 0; k < na; ++k) t[k] = stream[a + k] - mean;
        tr_a.forward();
        std::copy(tr_a.spectrum().begin(), tr_a.spectrum().end(), fa.begin());
        std::fill(t.begin(), t.end(), 0.0);
        for (std::size_t k = 0; k < nb; ++k) t[k] = stream[a + k] - mean;
        tr_a.forward();
        auto s = tr_a.spectrum();
        for (std::size_t k = 0; k < s.size(); ++k) s[k] *= std::conj(fa[k]);
        tr_a.inverse();
        for (std::size_t k = 0; k <= max_lag; ++k) acc[k] += tr_a.time()[k] / static_cast<double>(len);
    }
    for (auto& v : acc) v /= var;
    acc[0] = 1.0;
    return acc;
}

struct PsdEstimate {
    std::vector<double> frequencies;  // Hz
    std::vector<double> power;        // V^2/Hz, one-sided
    std::size_t segment_length = 0;
    double overlap = 0.0;
};

/// Welch estimate: Hann-windowed, averaged, one-sided periodogram.
inline PsdEstimate welch_psd(std::span<const double> stream, double sample_rate, std::size_t segment_length,
                             double overlap = 0.5) {
    detail::require(!stream.empty(), "stream is empty");
    detail::require(sample_rate > 0.0, "sample rate must be > 0");
    detail::require(segment_length >= 2, "segment length must be >= 2");
    detail::require(segment_length <= stream.size(), "segment longer than stream");
    detail::require(overlap >= 0.0 && overlap <= 0.9, "overlap must lie in [0, 0.9]");
    const std::size_t step =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(segment_length * (1.0 - overlap))));
    std::vector<double> win(segment_length);
    double wsum2 = 0.0;
    for (std::size_t k = 0; k < segment_length; ++k) {
        win[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                                      static_cast<double>(segment_length));
        wsum2 += win[k] * win[k];
    }
    auto& tr = fft::cached(segment_length);
    PsdEstimate psd;
    psd.segment_length = segment_length;
    psd.overlap = overlap;
    psd.power.assign(tr.bins(), 0.0);
    std::size_t segments = 0;
    for (std::size_t a = 0; a + segment_length <= stream.size(); a += step) {
        double mean = 0.0;
        for (std::size_t k = 0; k < segment_length; ++k) mean += stream[a + k];
        mean /= static_cast<double>(segment_length);
        auto t = tr.time();
        for (std::size_t k = 0; k < segment_length; ++k) t[k] = (stream[a + k] - mean) * win[k];
        tr.forward();
        auto s = tr.spectrum();
        for (std::size_t k = 0; k < s.size(); ++k) psd.power[k] += std::norm(s[k]);
        ++segments;
    }
    const double norm = 1.0 / (sample_rate * wsum2 * static_cast<double>(segments));
    psd.frequencies.resize(psd.power.size());
    for (std::size_t k = 0; k < psd.power.size(); ++k) {
        const bool edge = k == 0 || (segment_length % 2 == 0 && k == segment_length / 2);
        psd.power[k] *= norm * (edge ? 1.0 : 2.0);
        psd.frequencies[k] = static_cast<double>(k) * sample_rate / static_cast<double>(segment_length);
    }
    return psd;
}

/// Minimum over in-band bins of 10*log10(on/off).
inline double band_gap_db(const PsdEstimate& on, const PsdEstimate& off, const BandSpec& band) {
    detail::require(on.frequencies.size() == off.frequencies.size(), "PSD grids differ in size");
    double gap = std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t k = 0; k < on.frequencies.size(); ++k) {
        const double f = on.frequencies[k];
        detail::require(std::abs(f - off.frequencies[k]) <= 1e-9 * std::max(1.0, std::abs(f)),
                        "PSD frequency grids differ");
        if (f < band.f_lo || f > band.f_hi || f == 0.0) continue;
        any = true;
        gap = std::min(gap, 10.0 * std::log10(on.power[k] / off.power[k]));
    }
    detail::require(any, "no PSD bins inside the band");
    return gap;
}

/// Two-column text export ("x value" per line, '#' header lines).
inline void write_two_column(const std::string& path, std::span<const double> x, std::span<const double> y,
                             const std::vector<std::string>& header = {}) {
    detail::require(x.size() == y.size(), "column lengths differ");
    std::ofstream out(path);
    if (!out) throw StageError("io", "cannot write " + path);
    for (const auto& h : header) out << "# " << h << '\n';
    for (std::size_t k = 0; k < x.size(); ++k) out << format_double(x[k]) << ' ' << format_double(y[k]) << '\n';
    if (!out) throw StageError("io", "write failed for " + path);
}

}  // namespace hqrng
