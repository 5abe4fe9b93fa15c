#pragma once

// Seeded Toeplitz hashing calibrated by the leftover hash lemma.
//
// For n input bits and m output bits the matrix is T[i][j] = s[j - i + m - 1]
// with a seed s of m + n - 1 bits: the first row is s[m-1 .. m+n-1) and the
// first column, read from the bottom row up, is s[0 .. m). Every row is thus a
// window of the seed, and y = T*x over GF(2) is a sliding correlation,
//   y_i = XOR_j s[(m-1-i) + j] & x_j,
// evaluated here as one real-valued transform convolution followed by
// rounding and parity.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hqrng/acquisition.hpp"
#include "hqrng/bits.hpp"
#include "hqrng/error.hpp"
#include "hqrng/fft.hpp"
#include "hqrng/keyvalue.hpp"

namespace hqrng {

/// Output length from the leftover hash lemma: floor(n*h - 2*log2(1/eps)).
///
/// A relative slack of 1e-12 absorbs binary representation error in n*h
/// (e.g. 10^6 * 13.949).
inline std::size_t output_length(std::size_t n_samples, double hmin_bits_per_sample, double epsilon) {
    detail::require(n_samples >= 1, "sample count must be >= 1");
    detail::require(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0, 1)");
    detail::require(hmin_bits_per_sample > 0.0, "min-entropy must be > 0");
    const double k = static_cast<double>(n_samples) * hmin_bits_per_sample;
    const double len = std::floor(k - 2.0 * std::log2(1.0 / epsilon) + 1e-12 * k);
    if (len < 1.0) throw ValidationError("block too small for requested epsilon");
    return static_cast<std::size_t>(len);
}

struct ExtractorParams {
    std::size_t input_bits_per_sample = 20;
    double hmin_bits_per_sample = 0.0;
    double epsilon = 0.0;
    std::size_t n_input_bits = 0;
    std::size_t n_output_bits = 0;
    BitBlock seed_bits;

    std::size_t seed_length() const noexcept { return n_input_bits + n_output_bits - 1; }

    void validate() const {
        detail::require(n_output_bits >= 1, "extractor output length must be >= 1");
        detail::require(n_input_bits >= 1, "extractor input length must be >= 1");
        detail::require(seed_bits.size() == seed_length(), "Toeplitz seed must hold n_in + n_out - 1 bits");
    }

    /// Parameters for a block of `n_samples` samples; the seed must already
    /// have the right length (see required_seed_bits).
    static ExtractorParams for_block(std::size_t n_samples, std::size_t bits_per_sample, double hmin,
                                     double epsilon, BitBlock seed) {
        ExtractorParams p;
        p.input_bits_per_sample = bits_per_sample;
        p.hmin_bits_per_sample = hmin;
        p.epsilon = epsilon;
        p.n_input_bits = n_samples * bits_per_sample;
        p.n_output_bits = output_length(n_samples, hmin, epsilon);
        p.seed_bits = std::move(seed);
        p.validate();
        return p;
    }

    static std::size_t required_seed_bits(std::size_t n_samples, std::size_t bits_per_sample, double hmin,
                                          double epsilon) {
        return n_samples * bits_per_sample + output_length(n_samples, hmin, epsilon) - 1;
    }
};

/// Serialize each sample as the I code then the Q code, `bits` bits each,
/// two's complement, most significant bit first.
inline BitBlock pack_samples_to_bits(const SampleBlock& block) {
    detail::require(block.adc.bits >= 1 && block.adc.bits <= 16, "ADC bits must be <= 16");
    const auto b = static_cast<unsigned>(block.adc.bits);
    const std::uint64_t mask = (std::uint64_t{1} << b) - 1u;
    const std::size_t n_bits = 2 * b * block.size();
    std::vector<std::uint8_t> bytes((n_bits + 7) / 8);
    std::uint64_t acc = 0;  // pending bits, right aligned
    unsigned pending = 0;
    std::size_t out = 0;
    auto emit = [&](std::uint64_t v) {
        acc = (acc << b) | (v & mask);
        pending += b;
        while (pending >= 8) {
            pending -= 8;
            bytes[out++] = static_cast<std::uint8_t>(acc >> pending);
        }
    };
    for (std::size_t t = 0; t < block.size(); ++t) {
        emit(static_cast<std::uint16_t>(block.codes_i[t]));
        emit(static_cast<std::uint16_t>(block.codes_q[t]));
    }
    if (pending) bytes[out] = static_cast<std::uint8_t>(acc << (8 - pending));
    return BitBlock::from_bytes(std::move(bytes), n_bits);
}

namespace detail {

/// Smallest 2^a * 3^b * 5^c >= n (sizes FFTW handles efficiently).
inline std::size_t smooth_size(std::size_t n) {
    std::size_t best = fft::next_pow2(n);
    for (std::size_t p5 = 1; p5 < best; p5 *= 5)
        for (std::size_t p35 = p5; p35 < best; p35 *= 3) {
            std::size_t v = p35;
            while (v < n) v *= 2;
            best = std::min(best, v);
        }
    return best;
}

/// Bits as 0.0/1.0 doubles at the front of `dst`, zeros after.
inline void unpack_bits(const BitBlock& bits, std::span<double> dst) {
    static const auto table = [] {
        std::array<std::array<double, 8>, 256> t{};
        for (unsigned v = 0; v < 256; ++v)
            for (unsigned k = 0; k < 8; ++k) t[v][k] = (v >> (7 - k)) & 1u;
        return t;
    }();
    const auto bytes = bits.bytes();
    const std::size_t whole = bits.size() / 8;
    for (std::size_t i = 0; i < whole; ++i) std::copy_n(table[bytes[i]].data(), 8, dst.data() + 8 * i);
    for (std::size_t k = whole * 8; k < bits.size(); ++k) dst[k] = bits[k];
    std::fill(dst.begin() + static_cast<std::ptrdiff_t>(bits.size()), dst.end(), 0.0);
}

}  // namespace detail

/// y = T*x over GF(2), computed by transform-based correlation.
inline BitBlock toeplitz_extract(const BitBlock& input, const ExtractorParams& params) {
    params.validate();
    if (input.size() != params.n_input_bits)
        throw ValidationError("extractor input has " + std::to_string(input.size()) + " bits, expected " +
                              std::to_string(params.n_input_bits));
    const std::size_t n_in = params.n_input_bits;
    const std::size_t n_out = params.n_output_bits;
    const std::size_t len = detail::smooth_size(n_in + n_out - 1);
    auto& tr = fft::cached(len);

    auto t = tr.time();
    detail::unpack_bits(input, t);
    tr.forward();
    std::vector<std::complex<double>> fx(tr.spectrum().begin(), tr.spectrum().end());

    detail::unpack_bits(params.seed_bits, t);
    tr.forward();
    auto s = tr.spectrum();
    for (std::size_t k = 0; k < s.size(); ++k) s[k] *= std::conj(fx[k]);
    tr.inverse();

    // c[d] = sum_j s[d + j] x_j; output row i reads lag d = n_out - 1 - i.
    const double scale = 1.0 / static_cast<double>(len);
    BitBlock out(n_out, BitBlock::Origin::extracted);
    double worst = 0.0;
    for (std::size_t i = 0; i < n_out; ++i) {
        const double c = t[n_out - 1 - i] * scale;
        const double r = std::round(c);
        worst = std::max(worst, std::abs(c - r));
        if (static_cast<std::int64_t>(r) & 1) out.set(i, true);
    }
    if (worst > 0.25) throw StageError("extract", "transform rounding error too large for exact parity");
    return out;
}

// ---------------------------------------------------------------------------
// Seed material

using MasterSeed = std::array<std::uint64_t, 4>;

inline MasterSeed parse_master_seed(const std::string& hex) {
    detail::require(hex.size() == 64, "master seed must be 64 hex digits (256 bits)");
    MasterSeed s{};
    for (std::size_t w = 0; w < 4; ++w) {
        const char* first = hex.data() + 16 * w;
        auto [ptr, ec] = std::from_chars(first, first + 16, s[w], 16);
        detail::require(ec == std::errc() && ptr == first + 16, "master seed must be hexadecimal");
    }
    return s;
}

inline std::string format_master_seed(const MasterSeed& s) {
    std::string out;
    char buf[17];
    for (auto w : s) {
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(w));
        out += buf;
    }
    return out;
}

/// Deterministic expansion of a 256-bit master seed into `n_needed` bits:
/// std::seed_seq over the seed words and `stream`, then std::mt19937_64
/// output consumed most significant bit first.
///
/// This is a reproducibility device, not a cryptographic construction. A
/// deployment must draw Toeplitz seeds from an independent uniform source.
inline BitBlock seed_expand(const MasterSeed& master, std::size_t n_needed, std::uint64_t stream = 0) {
    detail::require(n_needed >= 1, "requested seed length must be >= 1");
    std::vector<std::uint32_t> words;
    for (auto w : master) {
        words.push_back(static_cast<std::uint32_t>(w >> 32));
        words.push_back(static_cast<std::uint32_t>(w));
    }
    words.push_back(static_cast<std::uint32_t>(stream >> 32));
    words.push_back(static_cast<std::uint32_t>(stream));
    std::seed_seq seq(words.begin(), words.end());
    std::mt19937_64 engine(seq);
    std::vector<std::uint8_t> bytes((n_needed + 7) / 8);
    for (std::size_t k = 0; k < bytes.size(); k += 8) {
        const auto v = engine();
        for (std::size_t b = 0; b < 8 && k + b < bytes.size(); ++b)
            bytes[k + b] = static_cast<std::uint8_t>(v >> (56 - 8 * b));
    }
    return BitBlock::from_bytes(std::move(bytes), n_needed);
}

}  // namespace hqrng
