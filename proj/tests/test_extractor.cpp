#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "hqrng/extractor.hpp"

using namespace hqrng;

namespace {

// Straight from the matrix definition: T[i][j] = s[j - i + n_out - 1].
BitBlock naive_toeplitz(const BitBlock& x, const BitBlock& seed, std::size_t n_out) {
    BitBlock y(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        bool acc = false;
        for (std::size_t j = 0; j < x.size(); ++j) acc ^= seed[j + n_out - 1 - i] && x[j];
        y.set(i, acc);
    }
    return y;
}

ExtractorParams params_for(std::size_t n_in, std::size_t n_out, BitBlock seed) {
    ExtractorParams p;
    p.n_input_bits = n_in;
    p.n_output_bits = n_out;
    p.seed_bits = std::move(seed);
    return p;
}

BitBlock random_bits(std::size_t n, std::mt19937_64& rng) {
    BitBlock b(n);
    for (std::size_t k = 0; k < n; ++k) b.set(k, rng() & 1u);
    return b;
}

std::size_t hamming(const BitBlock& a, const BitBlock& b) { return (a ^ b).popcount(); }

}  // namespace

TEST(OutputLength, ReferenceBlock) {
    EXPECT_EQ(output_length(1000000, 13.949, std::ldexp(1.0, -100)), 13948800u);
    const double ratio = static_cast<double>(output_length(1000000, 13.949, std::ldexp(1.0, -100))) / 20e6;
    EXPECT_NEAR(ratio, 0.6973, 2e-4);  // 0.69744
}

TEST(OutputLength, TooSmallBlockIsAnError) {
    try {
        output_length(1, 13.949, std::ldexp(1.0, -100));
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("too small"), std::string::npos);
    }
    EXPECT_THROW(output_length(0, 13.949, 0.5), ValidationError);
    EXPECT_THROW(output_length(100, 13.949, 1.0), ValidationError);
    EXPECT_THROW(output_length(100, 0.0, 0.5), ValidationError);
}

TEST(OutputLength, FloorOfBound) {
    // 15 * 13.949 = 209.235, minus 200.
    EXPECT_EQ(output_length(15, 13.949, std::ldexp(1.0, -100)), 9u);
    EXPECT_EQ(output_length(10, 3.5, 0.25), 31u);
}

TEST(PackSamples, TwosComplementMsbFirst) {
    SampleBlock b;
    b.adc = AdcConfig{10e9, 10, 1.0};
    b.codes_i = {0, -1, 5};
    b.codes_q = {0, 0, -512};
    const auto bits = pack_samples_to_bits(b);
    ASSERT_EQ(bits.size(), 60u);
    EXPECT_EQ(bits.slice(0, 20).to_string(), std::string(20, '0'));
    EXPECT_EQ(bits.slice(20, 20).to_string(), "11111111110000000000");
    EXPECT_EQ(bits.slice(40, 20).to_string(), "00000001011000000000");
}

TEST(PackSamples, LengthIsTwiceBitsPerSample) {
    SampleBlock b;
    b.adc = AdcConfig{10e9, 12, 1.0};
    b.codes_i.assign(37, 3);
    b.codes_q.assign(37, -3);
    EXPECT_EQ(pack_samples_to_bits(b).size(), 37u * 24u);
}

TEST(Toeplitz, SmallExampleExhaustive) {
    const auto seed = BitBlock::from_string("10110");
    const auto p = params_for(4, 2, seed);
    for (unsigned v = 0; v < 16; ++v) {
        BitBlock x(4);
        for (unsigned j = 0; j < 4; ++j) x.set(j, (v >> (3 - j)) & 1u);
        EXPECT_EQ(toeplitz_extract(x, p), naive_toeplitz(x, seed, 2)) << "input " << x.to_string();
    }
    // Written out: rows are windows s[1..5) = 0110 and s[0..4) = 1011.
    // Input 1011 gives 0+0+1+0 = 1 and 1+0+1+1 = 1.
    EXPECT_EQ(toeplitz_extract(BitBlock::from_string("1011"), p).to_string(), "11");
}

TEST(Toeplitz, MatchesNaiveOnRandomInstances) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n_in = 1 + rng() % 64;
        const std::size_t n_out = 1 + rng() % 32;
        const auto seed = random_bits(n_in + n_out - 1, rng);
        const auto x = random_bits(n_in, rng);
        ASSERT_EQ(toeplitz_extract(x, params_for(n_in, n_out, seed)), naive_toeplitz(x, seed, n_out))
            << "n_in " << n_in << " n_out " << n_out;
    }
}

TEST(Toeplitz, MatchesNaiveAtLargerSize) {
    std::mt19937_64 rng(7);
    const std::size_t n_in = 20000, n_out = 3000;
    const auto seed = random_bits(n_in + n_out - 1, rng);
    const auto x = random_bits(n_in, rng);
    EXPECT_EQ(toeplitz_extract(x, params_for(n_in, n_out, seed)), naive_toeplitz(x, seed, n_out));
}

TEST(Toeplitz, TwoUniversalExhaustive) {
    // For x != y, T x = T y iff T z = 0 with z = x ^ y. Over all 2^19 seeds of
    // a 4 x 16 Toeplitz matrix the collision fraction must be at most 2^-4
    // (plus a little slack). The oracle is bit-parallel: row i of T is the
    // 16-bit window of the seed starting at 3 - i.
    std::mt19937_64 rng(99);
    const unsigned n_in = 16, n_out = 4, n_seed = n_in + n_out - 1;
    for (int pair = 0; pair < 10; ++pair) {
        const std::uint32_t x = rng() & 0xFFFFu;
        std::uint32_t y = rng() & 0xFFFFu;
        if (y == x) y ^= 1u;
        const std::uint32_t z = x ^ y;
        std::uint64_t collisions = 0;
        for (std::uint32_t s = 0; s < (1u << n_seed); ++s) {
            bool zero = true;
            for (unsigned i = 0; i < n_out && zero; ++i) {
                // seed bit k is bit (n_seed - 1 - k) of s; window starts at k = n_out - 1 - i.
                const std::uint32_t row = (s >> (n_seed - (n_out - 1 - i) - n_in)) & 0xFFFFu;
                zero = (__builtin_popcount(row & z) & 1) == 0;
            }
            collisions += zero;
        }
        EXPECT_LE(static_cast<double>(collisions) / (1u << n_seed), 1.0 / 16 + 1.0 / 65536) << "pair " << pair;
        // Toeplitz hashing is exactly universal: the kernel condition is 4
        // independent linear constraints on the seed.
        EXPECT_EQ(collisions, 1u << (n_seed - n_out));
    }
    // Spot-check the bit-parallel oracle against the production path.
    for (std::uint32_t s : {0x5A5A5u, 0x12345u, 0x7FFFFu}) {
        BitBlock seed(n_seed);
        for (unsigned k = 0; k < n_seed; ++k) seed.set(k, (s >> (n_seed - 1 - k)) & 1u);
        BitBlock x(n_in);
        for (unsigned j = 0; j < n_in; ++j) x.set(j, (0xB3C1u >> (n_in - 1 - j)) & 1u);
        const auto y = toeplitz_extract(x, params_for(n_in, n_out, seed));
        for (unsigned i = 0; i < n_out; ++i) {
            const std::uint32_t row = (s >> (n_seed - (n_out - 1 - i) - n_in)) & 0xFFFFu;
            EXPECT_EQ(y[i], (__builtin_popcount(row & 0xB3C1u) & 1) == 1);
        }
    }
}

TEST(Toeplitz, LinearAndZeroPreserving) {
    std::mt19937_64 rng(5);
    const auto seed = random_bits(256 + 100 - 1, rng);
    const auto p = params_for(256, 100, seed);
    const auto x = random_bits(256, rng), y = random_bits(256, rng);
    EXPECT_EQ(toeplitz_extract(x ^ y, p), toeplitz_extract(x, p) ^ toeplitz_extract(y, p));
    EXPECT_EQ(toeplitz_extract(BitBlock(256), p).popcount(), 0u);
}

TEST(Toeplitz, RejectsLengthMismatch) {
    std::mt19937_64 rng(1);
    const auto p = params_for(64, 8, random_bits(71, rng));
    EXPECT_THROW(toeplitz_extract(BitBlock(63), p), ValidationError);
    auto bad = p;
    bad.seed_bits = BitBlock(70);
    EXPECT_THROW(toeplitz_extract(BitBlock(64), bad), ValidationError);
}

TEST(Toeplitz, OutputMarkedExtracted) {
    std::mt19937_64 rng(3);
    const auto out = toeplitz_extract(random_bits(40, rng), params_for(40, 10, random_bits(49, rng)));
    EXPECT_EQ(out.origin(), BitBlock::Origin::extracted);
}

TEST(Toeplitz, CostScalesAsNLogN) {
    auto run_time = [](std::size_t total) {
        std::mt19937_64 rng(11);
        const std::size_t n_out = total / 4;
        const std::size_t n_in = total - n_out + 1;
        const auto p = params_for(n_in, n_out, random_bits(total, rng));
        const auto x = random_bits(n_in, rng);
        toeplitz_extract(x, p);  // plan and warm up
        std::vector<double> t;
        for (int rep = 0; rep < 5; ++rep) {
            const auto a = std::chrono::steady_clock::now();
            toeplitz_extract(x, p);
            t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - a).count());
        }
        std::sort(t.begin(), t.end());
        return t[2];
    };
    const double ratio = run_time(std::size_t{1} << 22) / run_time(std::size_t{1} << 21);
    EXPECT_GE(ratio, 1.8);
    EXPECT_LE(ratio, 2.6);
}

TEST(ExtractorParams, ForBlockUsesBound) {
    const std::size_t need = ExtractorParams::required_seed_bits(1000, 20, 13.949, std::ldexp(1.0, -100));
    EXPECT_EQ(need, 20000u + 13749u - 1u);
    const auto p = ExtractorParams::for_block(1000, 20, 13.949, std::ldexp(1.0, -100), BitBlock(need));
    EXPECT_EQ(p.n_input_bits, 20000u);
    EXPECT_EQ(p.n_output_bits, 13749u);
    EXPECT_THROW(ExtractorParams::for_block(1000, 20, 13.949, std::ldexp(1.0, -100), BitBlock(need - 1)),
                 ValidationError);
}

TEST(SeedExpand, Deterministic) {
    const MasterSeed m{1, 2, 3, 4};
    EXPECT_EQ(seed_expand(m, 12345), seed_expand(m, 12345));
    EXPECT_EQ(seed_expand(m, 12345).size(), 12345u);
    EXPECT_EQ(seed_expand(m, 100).to_string(), seed_expand(m, 200).slice(0, 100).to_string());
}

TEST(SeedExpand, DifferentSeedsAreFarApart) {
    const std::size_t n = 10000;
    const auto a = seed_expand(MasterSeed{1, 2, 3, 4}, n);
    const auto b = seed_expand(MasterSeed{1, 2, 3, 5}, n);
    const auto c = seed_expand(MasterSeed{1, 2, 3, 4}, n, 1);
    for (const auto* other : {&b, &c})
        EXPECT_NEAR(static_cast<double>(hamming(a, *other)), n / 2.0, 4.0 * std::sqrt(static_cast<double>(n)));
}

TEST(SeedExpand, BitsBalanced) {
    const std::size_t n = 1000000;
    const auto s = seed_expand(MasterSeed{9, 9, 9, 9}, n);
    EXPECT_NEAR(static_cast<double>(s.popcount()), n / 2.0, 5.0 * std::sqrt(n / 4.0));
}

TEST(MasterSeed, HexRoundTrip) {
    const std::string hex = "0123456789abcdef00000000000000ffffffffffffffffff8000000000000001";
    const auto s = parse_master_seed(hex);
    EXPECT_EQ(s[0], 0x0123456789abcdefull);
    EXPECT_EQ(s[3], 0x8000000000000001ull);
    EXPECT_EQ(format_master_seed(s), hex);
    EXPECT_THROW(parse_master_seed("1234"), ValidationError);
    EXPECT_THROW(parse_master_seed(std::string(63, '0') + "g"), ValidationError);
}

TEST(BitBlock, PackingAndSlicing) {
    auto b = BitBlock::from_string("1010000111");
    EXPECT_EQ(b.size(), 10u);
    EXPECT_EQ(b.bytes()[0], 0xA1);
    EXPECT_EQ(b.bytes()[1], 0xC0);  // padding bits zero
    EXPECT_EQ(b.slice(3, 5).to_string(), "00001");
    EXPECT_EQ(b.popcount(), 5u);
    auto c = BitBlock::from_string("011");
    b.append(c);
    EXPECT_EQ(b.to_string(), "1010000111011");
    const auto d = BitBlock::from_bytes({0xFF, 0xFF}, 11);
    EXPECT_EQ(d.bytes()[1], 0xE0);
    EXPECT_THROW(BitBlock::from_string("012"), ValidationError);
    EXPECT_THROW(b.slice(10, 4), ValidationError);
}
