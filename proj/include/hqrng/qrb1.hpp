#pragma once

// QRB1 sample files.
//
//   offset  size  field
//   0       4     magic "QRB1"
//   4       2     version (u16, = 1)
//   6       2     ADC bits (u16)
//   8       8     sample rate, Hz (f64)
//   16      8     ADC full scale, V (f64)
//   24      8     LO power, W (f64)
//   32      ...   samples: s16 I, s16 Q, interleaved
//
// All fields little-endian.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "hqrng/acquisition.hpp"
#include "hqrng/error.hpp"

namespace hqrng::qrb1 {

inline constexpr std::size_t kHeaderSize = 32;
inline constexpr std::uint16_t kVersion = 1;

struct Header {
    int bits = 10;
    double sample_rate = 0.0;
    double full_scale = 0.0;
    double lo_power = 0.0;

    AdcConfig adc() const { return {sample_rate, bits, full_scale}; }
};

namespace detail {

template <class T>
void put_le(unsigned char* p, T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
    auto u = std::bit_cast<U>(v);
    for (std::size_t k = 0; k < sizeof(T); ++k) p[k] = static_cast<unsigned char>(u >> (8 * k));
}

template <class T>
T get_le(const unsigned char* p) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
    U u = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) u |= static_cast<U>(static_cast<U>(p[k]) << (8 * k));
    return std::bit_cast<T>(u);
}

}  // namespace detail

inline std::array<unsigned char, kHeaderSize> encode_header(const Header& h) {
    std::array<unsigned char, kHeaderSize> buf{};
    std::memcpy(buf.data(), "QRB1", 4);
    detail::put_le<std::uint16_t>(buf.data() + 4, kVersion);
    detail::put_le<std::uint16_t>(buf.data() + 6, static_cast<std::uint16_t>(h.bits));
    detail::put_le<double>(buf.data() + 8, h.sample_rate);
    detail::put_le<double>(buf.data() + 16, h.full_scale);
    detail::put_le<double>(buf.data() + 24, h.lo_power);
    return buf;
}

inline Header decode_header(const unsigned char* buf, const std::string& origin) {
    if (std::memcmp(buf, "QRB1", 4) != 0) throw StageError("qrb1", origin + ": bad magic");
    const auto version = detail::get_le<std::uint16_t>(buf + 4);
    if (version != kVersion)
        throw StageError("qrb1", origin + ": unsupported version " + std::to_string(version));
    Header h;
    h.bits = detail::get_le<std::uint16_t>(buf + 6);
    h.sample_rate = detail::get_le<double>(buf + 8);
    h.full_scale = detail::get_le<double>(buf + 16);
    h.lo_power = detail::get_le<double>(buf + 24);
    try {
        h.adc().validate();
    } catch (const ValidationError& e) {
        throw StageError("qrb1", origin + ": invalid header: " + e.what());
    }
    return h;
}

/// Streams blocks into one QRB1 file; the header is written on open.
class Writer {
public:
    Writer(const std::string& path, const Header& header) : path_(path), header_(header) {
        out_.open(path, std::ios::binary | std::ios::trunc);
        if (!out_) throw StageError("io", "cannot write " + path);
        const auto h = encode_header(header);
        out_.write(reinterpret_cast<const char*>(h.data()), h.size());
    }

    void write(const SampleBlock& block) {
        detail_check(block);
        const auto lo = header_.adc().code_min(), hi = header_.adc().code_max();
        std::vector<unsigned char> buf(block.size() * 4);
        for (std::size_t t = 0; t < block.size(); ++t) {
            if (block.codes_i[t] < lo || block.codes_i[t] > hi || block.codes_q[t] < lo || block.codes_q[t] > hi)
                throw ValidationError("ADC code outside the converter range");
            detail::put_le<std::int16_t>(buf.data() + 4 * t, block.codes_i[t]);
            detail::put_le<std::int16_t>(buf.data() + 4 * t + 2, block.codes_q[t]);
        }
        out_.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!out_) throw StageError("io", "write failed for " + path_);
        samples_ += block.size();
    }

    std::uint64_t samples_written() const noexcept { return samples_; }

    void close() {
        out_.close();
        if (!out_) throw StageError("io", "close failed for " + path_);
    }

private:
    void detail_check(const SampleBlock& block) const {
        if (block.adc.bits != header_.bits)
            throw StageError("qrb1", "block bit depth differs from file header");
        if (block.codes_i.size() != block.codes_q.size())
            throw ValidationError("I and Q code streams differ in length");
    }

    std::string path_;
    Header header_;
    std::ofstream out_;
    std::uint64_t samples_ = 0;
};

/// Sequential block reader.
class Reader {
public:
    explicit Reader(const std::string& path) : path_(path) {
        in_.open(path, std::ios::binary);
        if (!in_) throw StageError("io", "cannot open " + path);
        std::array<unsigned char, kHeaderSize> buf{};
        in_.read(reinterpret_cast<char*>(buf.data()), buf.size());
        if (in_.gcount() != static_cast<std::streamsize>(kHeaderSize))
            throw StageError("qrb1", path + ": truncated header");
        header_ = decode_header(buf.data(), path);
        in_.seekg(0, std::ios::end);
        const auto bytes = static_cast<std::uint64_t>(in_.tellg()) - kHeaderSize;
        if (bytes % 4 != 0) throw StageError("qrb1", path + ": payload is not a whole number of samples");
        total_ = bytes / 4;
        in_.seekg(kHeaderSize);
    }

    const Header& header() const noexcept { return header_; }
    std::uint64_t total_samples() const noexcept { return total_; }
    std::uint64_t remaining() const noexcept { return total_ - consumed_; }

    /// Next block of up to `max_samples` samples; empty at end of file.
    SampleBlock read(std::size_t max_samples) {
        const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(max_samples, remaining()));
        SampleBlock b;
        b.adc = header_.adc();
        b.lo_power = header_.lo_power;
        b.codes_i.resize(n);
        b.codes_q.resize(n);
        std::vector<unsigned char> buf(n * 4);
        in_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (in_.gcount() != static_cast<std::streamsize>(buf.size()))
            throw StageError("qrb1", path_ + ": short read");
        for (std::size_t t = 0; t < n; ++t) {
            b.codes_i[t] = detail::get_le<std::int16_t>(buf.data() + 4 * t);
            b.codes_q[t] = detail::get_le<std::int16_t>(buf.data() + 4 * t + 2);
        }
        consumed_ += n;
        try {
            b.validate();
        } catch (const ValidationError& e) {
            throw StageError("qrb1", path_ + ": " + e.what());
        }
        return b;
    }

    SampleBlock read_all() { return read(static_cast<std::size_t>(remaining())); }

private:
    std::string path_;
    std::ifstream in_;
    Header header_;
    std::uint64_t total_ = 0;
    std::uint64_t consumed_ = 0;
};

}  // namespace hqrng::qrb1
