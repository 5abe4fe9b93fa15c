#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hqrng/error.hpp"

namespace hqrng {

/// Packed bit string, most significant bit first within each byte. Bits past
/// `size()` in the last byte are always zero.
class BitBlock {
public:
    enum class Origin { raw, extracted };

    BitBlock() = default;
    explicit BitBlock(std::size_t n_bits, Origin origin = Origin::raw)
        : bytes_((n_bits + 7) / 8, 0), size_(n_bits), origin_(origin) {}

    static BitBlock from_bytes(std::vector<std::uint8_t> bytes, std::size_t n_bits,
                               Origin origin = Origin::raw) {
        detail::require(n_bits <= bytes.size() * 8, "bit count exceeds byte buffer");
        BitBlock b;
        bytes.resize((n_bits + 7) / 8);
        b.bytes_ = std::move(bytes);
        b.size_ = n_bits;
        b.origin_ = origin;
        if (n_bits % 8) b.bytes_.back() &= static_cast<std::uint8_t>(0xFF00u >> (n_bits % 8));
        return b;
    }

    /// Parse a string of '0'/'1' characters.
    static BitBlock from_string(const std::string& s, Origin origin = Origin::raw) {
        BitBlock b(s.size(), origin);
        for (std::size_t k = 0; k < s.size(); ++k) {
            detail::require(s[k] == '0' || s[k] == '1', "bit string must contain only 0 and 1");
            b.set(k, s[k] == '1');
        }
        return b;
    }

    std::size_t size() const noexcept { return size_; }
    bool empty() const noexcept { return size_ == 0; }
    Origin origin() const noexcept { return origin_; }
    void set_origin(Origin o) noexcept { origin_ = o; }

    bool operator[](std::size_t i) const noexcept { return (bytes_[i >> 3] >> (7 - (i & 7))) & 1u; }

    void set(std::size_t i, bool v) noexcept {
        const auto mask = static_cast<std::uint8_t>(0x80u >> (i & 7));
        if (v) {
            bytes_[i >> 3] |= mask;
        } else {
            bytes_[i >> 3] &= static_cast<std::uint8_t>(~mask);
        }
    }

    void push_back(bool v) {
        if (size_ % 8 == 0) bytes_.push_back(0);
        ++size_;
        set(size_ - 1, v);
    }

    /// Append the low `count` bits of `value`, most significant first.
    void push_bits(std::uint64_t value, unsigned count) {
        for (unsigned k = count; k-- > 0;) push_back((value >> k) & 1u);
    }

    void append(const BitBlock& other) {
        if (size_ % 8 == 0) {
            bytes_.insert(bytes_.end(), other.bytes_.begin(), other.bytes_.end());
            size_ += other.size_;
            return;
        }
        for (std::size_t k = 0; k < other.size(); ++k) push_back(other[k]);
    }

    BitBlock slice(std::size_t first, std::size_t count) const {
        detail::require(first + count <= size_, "bit slice out of range");
        BitBlock out(count, origin_);
        if (first % 8 == 0) {
            std::copy_n(bytes_.begin() + static_cast<std::ptrdiff_t>(first / 8), (count + 7) / 8,
                        out.bytes_.begin());
            if (count % 8) out.bytes_.back() &= static_cast<std::uint8_t>(0xFF00u >> (count % 8));
            return out;
        }
        for (std::size_t k = 0; k < count; ++k) out.set(k, (*this)[first + k]);
        return out;
    }

    std::size_t popcount() const noexcept {
        std::size_t c = 0;
        for (auto b : bytes_) c += static_cast<std::size_t>(__builtin_popcount(b));
        return c;
    }

    std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }

    std::string to_string() const {
        std::string s(size_, '0');
        for (std::size_t k = 0; k < size_; ++k) s[k] = (*this)[k] ? '1' : '0';
        return s;
    }

    friend bool operator==(const BitBlock& a, const BitBlock& b) noexcept {
        return a.size_ == b.size_ && a.bytes_ == b.bytes_;
    }

    friend BitBlock operator^(const BitBlock& a, const BitBlock& b) {
        detail::require(a.size_ == b.size_, "xor of bit blocks with different lengths");
        BitBlock out = a;
        for (std::size_t k = 0; k < out.bytes_.size(); ++k) out.bytes_[k] ^= b.bytes_[k];
        return out;
    }

private:
    std::vector<std::uint8_t> bytes_;
    std::size_t size_ = 0;
    Origin origin_ = Origin::raw;
};

}  // namespace hqrng
