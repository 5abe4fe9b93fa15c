#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hqrng/dsp.hpp"

using namespace hqrng;

namespace {

constexpr double kFs = 10e9;
constexpr double kPi = std::numbers::pi;
const BandSpec kBand{250e6, 1.5e9};

std::vector<double> white(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sd);
    std::vector<double> x(n);
    for (auto& v : x) v = g(rng);
    return x;
}

std::vector<double> tone(std::size_t n, double f, double amp = 1.0, double phase = 0.3) {
    std::vector<double> x(n);
    for (std::size_t t = 0; t < n; ++t) x[t] = amp * std::cos(2 * kPi * f * t / kFs + phase);
    return x;
}

double energy(const std::vector<double>& x) {
    double e = 0;
    for (double v : x) e += v * v;
    return e;
}

double variance(std::span<const double> x) {
    double s = 0, s2 = 0;
    for (double v : x) {
        s += v;
        s2 += v * v;
    }
    const double n = static_cast<double>(x.size());
    return (s2 - s * s / n) / (n - 1);
}

// Autocorrelation of ideal band-limited white noise on [f_lo, f_hi].
double band_autocorr(std::size_t k, const BandSpec& b) {
    if (k == 0) return 1.0;
    const double w = 2 * kPi * static_cast<double>(k) / kFs;
    return (std::sin(w * b.f_hi) - std::sin(w * b.f_lo)) / (w * (b.f_hi - b.f_lo));
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    EXPECT_EQ(a.size(), b.size());
    double m = 0;
    for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

}  // namespace

// 80000 samples at 10 GS/s give a 125 kHz grid: both tones are bin-centered.
constexpr std::size_t kGridN = 80000;

TEST(Brickwall, InBandTonePassesUnchanged) {
    const auto x = tone(kGridN, 875e6);
    const auto y = bandpass_brickwall(x, kFs, kBand);
    EXPECT_LT(max_abs_diff(x, y), 1e-6);
}

TEST(Brickwall, OutOfBandToneRemoved) {
    const auto x = tone(kGridN, 50e6);
    const auto y = bandpass_brickwall(x, kFs, kBand);
    EXPECT_LT(std::sqrt(energy(y) / energy(x)), 1e-6);
    EXPECT_LT(energy(y) / energy(x), 1e-10);
}

TEST(Brickwall, DcAlwaysRemoved) {
    std::vector<double> x(4096, 3.0);
    const auto y = bandpass_brickwall(x, kFs, BandSpec{0.0, 5e9});
    EXPECT_LT(std::sqrt(energy(y)), 1e-9);
}

TEST(Brickwall, WhiteNoiseKeepsBandFraction) {
    const std::size_t n = 10000000;
    const auto y = bandpass_brickwall(white(n, 1), kFs, kBand);
    const double g = noise_bandwidth_fraction(kBand, kFs);
    EXPECT_DOUBLE_EQ(g, 0.25);
    // Sample variance of noise with autocorrelation rho has relative SE
    // sqrt(2 * sum rho^2 / n); for a band fraction g, sum rho^2 = 1/g.
    EXPECT_NEAR(variance(y), g, 5 * g * std::sqrt(2.0 / (g * n)));
}

TEST(Brickwall, IdempotentAndLinear) {
    const auto x = white(1 << 16, 2), z = white(1 << 16, 3);
    const auto y = bandpass_brickwall(x, kFs, kBand);
    EXPECT_LT(max_abs_diff(bandpass_brickwall(y, kFs, kBand), y), 1e-9);
    std::vector<double> mix(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) mix[k] = 2.5 * x[k] - 0.75 * z[k];
    const auto ym = bandpass_brickwall(mix, kFs, kBand);
    const auto yz = bandpass_brickwall(z, kFs, kBand);
    std::vector<double> lin(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) lin[k] = 2.5 * y[k] - 0.75 * yz[k];
    EXPECT_LT(max_abs_diff(ym, lin), 1e-9);
}

TEST(Brickwall, RejectsBandBeyondNyquist) {
    EXPECT_THROW(bandpass_brickwall(white(100, 1), kFs, BandSpec{1e9, 6e9}), ValidationError);
    EXPECT_THROW(bandpass_brickwall(white(100, 1), kFs, BandSpec{2e9, 1e9}), ValidationError);
}

TEST(Downsample, FactorAndRate) {
    EXPECT_EQ(decimation_factor(kFs, kBand), 8u);
    EXPECT_EQ(decimation_factor(kFs, BandSpec{0.0, 1.25e9}), 4u);     // low-pass: Nyquist rate of the band
    EXPECT_EQ(decimation_factor(kFs, BandSpec{1.25e9, 2.5e9}), 4u);  // integer band position
    EXPECT_EQ(decimation_factor(kFs, BandSpec{1e9, 3.5e9}), 4u);     // fs/B = 4, f_lo/B not integer
    const auto d = decorrelating_downsample(white(800, 4), kFs, kBand);
    EXPECT_EQ(d.factor, 8u);
    EXPECT_EQ(d.sample_rate, 1.25e9);
    EXPECT_EQ(d.samples.size(), 100u);
}

TEST(Downsample, FullBandIsIdentity) {
    const auto x = white(1000, 5);
    const auto d = decorrelating_downsample(x, kFs, BandSpec{0.0, 5e9});
    EXPECT_EQ(d.factor, 1u);
    EXPECT_EQ(d.samples, x);
}

TEST(Downsample, NonIntegerFactorAsksForBandAdjustment) {
    try {
        decimation_factor(kFs, BandSpec{250e6, 1.4e9});
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("adjust"), std::string::npos);
    }
}

TEST(Streaming, ConvergesToWholeStreamWithMargin) {
    // Each frame applies the ideal response truncated at the discard margin T;
    // the neglected tail carries a fraction ~ 4/(pi^2 T) of the output power
    // for this band, so the relative RMS error falls like 1/sqrt(T).
    const auto x = white(1 << 21, 6);
    const auto whole = bandpass_brickwall(x, kFs, kBand);
    auto rel_err = [&](StreamingBandpass::Options opt) {
        const auto blocked = bandpass_blocked(x, kFs, kBand, opt);
        EXPECT_EQ(blocked.size(), x.size());
        double err = 0, ref = 0;
        for (std::size_t t = 1 << 19; t < x.size() - (1 << 19); ++t) {
            err += (whole[t] - blocked[t]) * (whole[t] - blocked[t]);
            ref += whole[t] * whole[t];
        }
        return std::sqrt(err / ref);
    };
    const double coarse = rel_err({1 << 16, 1 << 12, 1, 0});
    const double fine = rel_err({1 << 20, 1 << 18, 1, 0});
    EXPECT_LT(coarse, 2.0 * std::sqrt(4.0 / (kPi * kPi * 4096)));
    EXPECT_LT(fine, 2.0 * std::sqrt(4.0 / (kPi * kPi * 262144)));
    EXPECT_NEAR(coarse / fine, 8.0, 3.0);
}

TEST(Streaming, FusedDecimationEqualsFilterThenDownsample) {
    const auto x = white(300000, 7);
    const auto full = bandpass_blocked(x, kFs, kBand, {1 << 14, 1 << 10, 1, 0});
    for (std::size_t phase : {0u, 3u, 7u}) {
        const auto dec = bandpass_blocked(x, kFs, kBand, {1 << 14, 1 << 10, 8, phase});
        std::vector<double> ref;
        for (std::size_t t = phase; t < full.size(); t += 8) ref.push_back(full[t]);
        EXPECT_LT(max_abs_diff(dec, ref), 1e-9) << "phase " << phase;
    }
}

TEST(Streaming, ChunkingDoesNotChangeOutput) {
    const auto x = white(200000, 8);
    StreamingBandpass::Options opt{1 << 13, 1 << 9, 8, 2};
    const auto once = bandpass_blocked(x, kFs, kBand, opt);
    StreamingBandpass f(kFs, kBand, opt);
    std::vector<double> out;
    std::size_t pos = 0, step = 1;
    while (pos < x.size()) {
        const std::size_t n = std::min(step, x.size() - pos);
        f.push(std::span<const double>(x).subspan(pos, n), out);
        pos += n;
        step = step * 3 + 7;
    }
    f.finish(out);
    EXPECT_EQ(out, once);
}

TEST(Streaming, RejectsInconsistentFraming) {
    EXPECT_THROW(StreamingBandpass(kFs, kBand, {1000, 100, 8, 0}), ValidationError);
    EXPECT_THROW(StreamingBandpass(kFs, kBand, {1 << 12, 1 << 11, 1, 0}), ValidationError);
    EXPECT_THROW(StreamingBandpass(kFs, kBand, {1 << 12, 100, 8, 0}), ValidationError);
    EXPECT_THROW(StreamingBandpass(kFs, kBand, {1 << 12, 128, 8, 8}), ValidationError);
}

TEST(Autocorrelation, WhiteNoiseBelowBound) {
    const std::size_t n = 1000000;
    const auto r = autocorrelation(white(n, 9), 100);
    EXPECT_EQ(r[0], 1.0);
    for (std::size_t k = 1; k <= 100; ++k) EXPECT_LT(std::abs(r[k]), 5 / std::sqrt(double(n))) << "lag " << k;
}

TEST(Autocorrelation, MatchesDirectSum) {
    const auto x = white(5000, 10);
    const auto r = autocorrelation(x, 40);
    double mean = 0;
    for (double v : x) mean += v;
    mean /= x.size();
    double c0 = 0;
    for (double v : x) c0 += (v - mean) * (v - mean);
    for (std::size_t k = 1; k <= 40; ++k) {
        double ck = 0;
        for (std::size_t t = 0; t + k < x.size(); ++t) ck += (x[t] - mean) * (x[t + k] - mean);
        EXPECT_NEAR(r[k], ck / c0, 1e-12);
    }
}

TEST(Autocorrelation, CosineFollowsCosine) {
    const std::size_t n = 1000000;
    const double f = 123.4e6;
    const auto r = autocorrelation(tone(n, f), 100);
    for (std::size_t k = 0; k <= 100; ++k) EXPECT_NEAR(r[k], std::cos(2 * kPi * f * k / kFs), 1e-3);
}

TEST(Autocorrelation, FilteredNoiseFollowsSinc) {
    const std::size_t n = 4000000;
    const auto y = bandpass_brickwall(white(n, 11), kFs, kBand);
    const auto r = autocorrelation(y, 100);
    double sum_rho2 = 0;
    for (int k = -20000; k <= 20000; ++k) sum_rho2 += std::pow(band_autocorr(std::abs(k), kBand), 2);
    EXPECT_NEAR(sum_rho2, 4.0, 0.01);
    // Bartlett: var(r_k) <= 2 * sum rho^2 / N.
    const double tol = 5 * std::sqrt(2 * sum_rho2 / n);
    const double rootn = std::sqrt(static_cast<double>(n));
    for (std::size_t k = 1; k <= 100; ++k) {
        const double sinc_env = std::abs(std::sin(kPi * kBand.width() * k / kFs) / (kPi * kBand.width() * k / kFs));
        EXPECT_LE(std::abs(r[k]), sinc_env + 5 / rootn) << "lag " << k;
        EXPECT_NEAR(r[k], band_autocorr(k, kBand), tol) << "lag " << k;
    }
    // first zero of the envelope at lag fs/B = 8
    EXPECT_NEAR(band_autocorr(8, kBand), 0.0, 1e-15);
}

TEST(Autocorrelation, Errors) {
    EXPECT_THROW(autocorrelation(std::vector<double>(1000, 2.0), 10), ValidationError);
    EXPECT_THROW(autocorrelation(white(100, 1), 50), ValidationError);
}

TEST(Decorrelation, DownsampledFilteredNoisePassesBoundInMostTrials) {
    const std::size_t raw = 800000;
    int pass = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto y = bandpass_blocked(white(raw, 1000 + trial), kFs, kBand, {1 << 14, 1 << 10, 8, 0});
        const auto r = autocorrelation(y, 100);
        const double bound = 4 / std::sqrt(static_cast<double>(y.size()));
        bool ok = true;
        for (std::size_t k = 1; k <= 100; ++k) ok = ok && std::abs(r[k]) < bound;
        pass += ok;
    }
    EXPECT_GE(pass, 99);
}

TEST(Welch, WhiteNoiseIsFlat) {
    const auto x = white(4000000, 12);
    const auto psd = welch_psd(x, kFs, 256, 0.5);
    ASSERT_EQ(psd.frequencies.size(), 129u);
    for (std::size_t k = 1; k < psd.frequencies.size(); ++k) EXPECT_GT(psd.frequencies[k], psd.frequencies[k - 1]);
    for (std::size_t k = 2; k + 1 < psd.power.size(); ++k) EXPECT_NEAR(psd.power[k] * kFs / 2, 1.0, 0.05) << k;
}

TEST(Welch, TonePeak) {
    const double f = 1e9;
    const auto psd = welch_psd(tone(1 << 16, f), kFs, 1000, 0.5);
    const auto peak = std::max_element(psd.power.begin(), psd.power.end()) - psd.power.begin();
    EXPECT_NEAR(psd.frequencies[peak], f, kFs / 1000 / 2);
}

TEST(Welch, Errors) {
    EXPECT_THROW(welch_psd(std::vector<double>{}, kFs, 16), ValidationError);
    EXPECT_THROW(welch_psd(white(100, 1), kFs, 200), ValidationError);
}

TEST(WienerKhinchin, AutocorrelationTransformMatchesPsdShape) {
    const auto y = bandpass_brickwall(white(1 << 22, 13), kFs, kBand);
    const std::size_t lags = 512;
    const auto r = autocorrelation(y, lags);
    const auto psd = welch_psd(y, kFs, 1024, 0.5);
    double total = 0;
    for (double p : psd.power) total += p;
    for (std::size_t k = 1; k < psd.frequencies.size(); ++k) {
        const double f = psd.frequencies[k];
        // Hann-tapered cosine transform of r, normalized like the PSD bins.
        double s = r[0];
        for (std::size_t j = 1; j <= lags; ++j)
            s += 2 * r[j] * std::cos(2 * kPi * f * j / kFs) * 0.5 * (1 + std::cos(kPi * j / lags));
        const double from_r = s / (psd.frequencies.size() - 1);
        const double from_psd = psd.power[k] / total;
        const bool inside = f > kBand.f_lo + 30e6 && f < kBand.f_hi - 30e6;
        const bool outside = f < kBand.f_lo - 60e6 || f > kBand.f_hi + 60e6;
        if (inside) EXPECT_NEAR(from_r / from_psd, 1.0, 0.15) << f;
        if (outside) {
            EXPECT_LT(std::abs(from_r), 0.02 * (1.0 / 256));
            EXPECT_LT(from_psd, 1e-4);
        }
    }
}

TEST(BandGap, Examples) {
    PsdEstimate on, off;
    for (int k = 0; k < 100; ++k) {
        on.frequencies.push_back(k * 50e6);
        off.frequencies.push_back(k * 50e6);
        off.power.push_back(1e-12 * (1 + k));
        on.power.push_back(1e-11 * (1 + k));
    }
    EXPECT_NEAR(band_gap_db(on, off, kBand), 10.0, 1e-12);
    EXPECT_NEAR(band_gap_db(on, on, kBand), 0.0, 1e-12);
    off.frequencies[3] += 1.0;
    EXPECT_THROW(band_gap_db(on, off, kBand), ValidationError);
    off.frequencies.pop_back();
    EXPECT_THROW(band_gap_db(on, off, kBand), ValidationError);
}

TEST(BandGap, ShotNoiseClearance) {
    // LO on: variance m*P + q; LO off: q. White spectra, so the gap is flat.
    const double m = 2.783e-2, q = 1.526e-5, p = 4.05e-3;
    const auto on = welch_psd(white(4000000, 14, std::sqrt(m * p + q)), kFs, 1024);
    const auto off = welch_psd(white(4000000, 15, std::sqrt(q)), kFs, 1024);
    const double expected = 10 * std::log10((m * p + q) / q);
    EXPECT_NEAR(expected, 9.236, 0.001);
    const double gap = band_gap_db(on, off, kBand);
    EXPECT_LE(gap, expected + 0.05);  // minimum over bins sits at or below the mean
    EXPECT_GE(gap, expected - 0.5);
}

TEST(Export, TwoColumnText) {
    const std::string path = ::testing::TempDir() + "/two_col.txt";
    write_two_column(path, std::vector<double>{1, 2}, std::vector<double>{0.5, 0.25}, {"lag r"});
    std::ifstream in(path);
    std::string all((std::istreambuf_iterator<char>(in)), {});
    EXPECT_EQ(all, "# lag r\n1 0.5\n2 0.25\n");
}
