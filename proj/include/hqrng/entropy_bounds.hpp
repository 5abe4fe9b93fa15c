#pragma once

// Min-entropy quantities for heterodyne randomness generation.
//
// Two families live here. Classical min-entropy treats the outcome
// distribution as fully trusted. The conditional (quantum) bounds hold
// against an adversary who prepares the measured state: for any POVM the
// guessing probability is at most the largest eigenvalue over elements, and
// for heterodyne detection binned at resolution (dq, dp) it is at most
// dq*dp/pi. The coherent-state oracle shows the heterodyne bound is
// attained in the small-bin limit.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "hqrng/error.hpp"
#include "hqrng/keyvalue.hpp"
#include "hqrng/phase_space.hpp"

namespace hqrng {

// ---------------------------------------------------------------------------
// Finite-dimensional POVMs

using HermitianMatrix = Eigen::MatrixXcd;

/// Set of PSD operators on C^d summing to the identity.
class FinitePovm {
public:
    static constexpr double kPsdTolerance = 1e-10;
    static constexpr double kCompletenessTolerance = 1e-9;

    explicit FinitePovm(std::vector<HermitianMatrix> elements) : elements_(std::move(elements)) {
        detail::require(!elements_.empty(), "POVM needs at least one element");
        const auto d = elements_.front().rows();
        detail::require(d >= 1, "POVM dimension must be >= 1");
        HermitianMatrix sum = HermitianMatrix::Zero(d, d);
        for (std::size_t i = 0; i < elements_.size(); ++i) {
            const auto& e = elements_[i];
            const std::string tag = "POVM element " + std::to_string(i);
            detail::require(e.rows() == d && e.cols() == d, tag + " has mismatched dimension");
            detail::require((e - e.adjoint()).norm() <= kCompletenessTolerance, tag + " is not Hermitian");
            Eigen::SelfAdjointEigenSolver<HermitianMatrix> es(e, Eigen::EigenvaluesOnly);
            detail::require(es.eigenvalues().minCoeff() >= -kPsdTolerance,
                            tag + " is not positive semidefinite");
            sum += e;
        }
        const double residual = (sum - HermitianMatrix::Identity(d, d)).norm();
        if (residual > kCompletenessTolerance)
            throw ValidationError("POVM elements do not sum to identity: residual Frobenius norm " +
                                  format_double(residual));
    }

    std::size_t size() const noexcept { return elements_.size(); }
    Eigen::Index dimension() const noexcept { return elements_.front().rows(); }
    const std::vector<HermitianMatrix>& elements() const noexcept { return elements_; }

private:
    std::vector<HermitianMatrix> elements_;
};

/// Largest eigenvalue of a Hermitian PSD matrix; exactly 1 for projectors.
inline double top_eigenvalue(const HermitianMatrix& m) {
    Eigen::SelfAdjointEigenSolver<HermitianMatrix> es(m, Eigen::EigenvaluesOnly);
    const double top = es.eigenvalues().maxCoeff();
    if (top > 0.5 && (m * m - m).norm() <= 1e-12) return 1.0;
    return top;
}

/// Lower bound on H_min(X|E) for any source: -log2 max_x lambda_max(Pi_x).
///
/// The trace Tr[Pi_x tau] over density matrices tau is maximized by the top
/// eigenvector of Pi_x, so the optimization reduces to an eigenvalue problem.
inline double povm_guess_bound(const FinitePovm& povm) {
    double best = 0.0;
    for (const auto& e : povm.elements()) best = std::max(best, top_eigenvalue(e));
    return best >= 1.0 ? 0.0 : -std::log2(best);
}

// ---------------------------------------------------------------------------
// Heterodyne bounds

/// log2(pi): bound on the conditional min-entropy of the continuous outcome.
/// It bounds a density, not a probability: Q(alpha) <= 1/pi for every state.
inline double quantum_bound_continuous() { return std::log2(std::numbers::pi); }

/// H_min(X_delta|E) >= log2(pi / (dq*dp)).
inline double quantum_bound_discrete(double delta_q, double delta_p) {
    detail::require(delta_q > 0.0 && delta_p > 0.0, "resolutions must be strictly positive");
    return std::log2(std::numbers::pi / (delta_q * delta_p));
}

/// Guessing probability Eve achieves with a coherent state centered on a
/// bin: erf(dq/2) * erf(dp/2). Never exceeds dq*dp/pi.
inline double pguess_oracle_heterodyne(double delta_q, double delta_p) {
    detail::require(delta_q > 0.0 && delta_p > 0.0, "resolutions must be strictly positive");
    return std::erf(delta_q / 2.0) * std::erf(delta_p / 2.0);
}

// ---------------------------------------------------------------------------
// Classical min-entropy

/// Peak-bin approximation for a Gaussian outcome distribution, valid when the
/// bins are much narrower than the standard deviations.
inline double classical_min_entropy_gaussian(double var_q, double var_p, double delta_q,
                                             double delta_p) {
    detail::require(var_q > 0.0 && var_p > 0.0 && delta_q > 0.0 && delta_p > 0.0,
                    "variances and resolutions must be strictly positive");
    const double peak = delta_q * delta_p / (2.0 * std::numbers::pi * std::sqrt(var_q * var_p));
    return -std::log2(peak);
}

/// Empirical -log2(max count / total). No finite-size correction is applied;
/// with many near-peak bins the maximum is biased upward, so this estimate
/// sits slightly below the true value.
inline double classical_min_entropy_hist(std::span<const std::uint64_t> counts, std::uint64_t total) {
    detail::require(!counts.empty(), "histogram is empty");
    detail::require(total >= 1, "histogram total must be >= 1");
    std::uint64_t sum = 0;
    std::uint64_t peak = 0;
    for (auto c : counts) {
        sum += c;
        peak = std::max(peak, c);
    }
    detail::require(sum == total, "histogram counts do not sum to total");
    detail::require(peak > 0, "histogram is empty");
    return -std::log2(static_cast<double>(peak) / static_cast<double>(total));
}

/// Streaming 2D histogram over bins [m*dq, (m+1)*dq) x [n*dp, (n+1)*dp).
class BinCounter {
public:
    BinCounter(double delta_q, double delta_p) : dq_(delta_q), dp_(delta_p) {
        detail::require(delta_q > 0.0 && delta_p > 0.0, "resolutions must be strictly positive");
    }

    void add(double q, double p) {
        const auto m = static_cast<std::int64_t>(std::floor(q / dq_));
        const auto n = static_cast<std::int64_t>(std::floor(p / dp_));
        if (m >= -kHalf && m < kHalf && n >= -kHalf && n < kHalf) {
            if (dense_.empty()) dense_.assign(static_cast<std::size_t>(4 * kHalf * kHalf), 0);
            ++dense_[static_cast<std::size_t>((m + kHalf) * 2 * kHalf + (n + kHalf))];
        } else {
            ++sparse_[(static_cast<std::uint64_t>(m) << 32) ^ static_cast<std::uint32_t>(n)];
        }
        ++total_;
    }

    void add(std::span<const ComplexAmplitude> xs) {
        for (const auto& x : xs) add(x.re, x.im);
    }

    /// Add already-binned integer indices (e.g. ADC codes).
    void add_index(std::int64_t m, std::int64_t n) { add((m + 0.5) * dq_, (n + 0.5) * dp_); }

    std::uint64_t total() const noexcept { return total_; }

    std::vector<std::uint64_t> counts() const {
        std::vector<std::uint64_t> out;
        for (auto c : dense_)
            if (c) out.push_back(c);
        for (const auto& [k, c] : sparse_) out.push_back(c);
        return out;
    }

    double min_entropy() const {
        const auto c = counts();
        return classical_min_entropy_hist(c, total_);
    }

private:
    static constexpr std::int64_t kHalf = 1024;
    double dq_;
    double dp_;
    std::vector<std::uint64_t> dense_;
    std::unordered_map<std::uint64_t, std::uint64_t> sparse_;
    std::uint64_t total_ = 0;
};

// ---------------------------------------------------------------------------
// Certificate

struct EntropyCertificate {
    double delta_q = 0.0;
    double delta_p = 0.0;
    std::optional<double> h_classical;  // bits/sample; absent without variances
    double h_quantum_bound = 0.0;       // bits/sample
    double epsilon = 0.0;
    double samples_per_second = 0.0;
    double secure_rate = 0.0;  // bits/second

    KeyValueDoc to_kv() const {
        KeyValueDoc kv;
        kv.comment("entropy certificate (bits per sample, rates in Hz and bit/s)");
        kv.set("delta_q", delta_q);
        kv.set("delta_p", delta_p);
        if (h_classical) kv.set("h_classical", format_fixed(*h_classical, 3));
        kv.set("h_quantum_bound", format_fixed(h_quantum_bound, 3));
        kv.set("epsilon", epsilon);
        kv.set("samples_per_second", samples_per_second);
        kv.set("secure_rate", secure_rate);
        return kv;
    }

    /// Derived fields are recomputed from the resolutions and rate, then
    /// checked against the serialized (rounded) values.
    static EntropyCertificate from_kv(const KeyValueDoc& kv, const std::string& prefix = "") {
        EntropyCertificate c;
        c.delta_q = kv.number(prefix + "delta_q");
        c.delta_p = kv.number(prefix + "delta_p");
        c.h_quantum_bound = quantum_bound_discrete(c.delta_q, c.delta_p);
        if (kv.has(prefix + "h_classical")) c.h_classical = kv.number(prefix + "h_classical");
        c.epsilon = kv.number(prefix + "epsilon");
        c.samples_per_second = kv.number(prefix + "samples_per_second");
        c.secure_rate = c.h_quantum_bound * c.samples_per_second;
        detail::require(c.epsilon > 0.0 && c.epsilon < 1.0, "certificate epsilon must be in (0,1)");
        detail::require(std::abs(kv.number(prefix + "h_quantum_bound") - c.h_quantum_bound) <= 5e-4 + 1e-12,
                        "certificate h_quantum_bound inconsistent with resolutions");
        return c;
    }
};

/// Assemble a certificate. Variances are optional; without them the
/// classical estimate is omitted and only the conditional bound is reported.
inline EntropyCertificate build_certificate(double delta_q, double delta_p,
                                            std::optional<double> var_q,
                                            std::optional<double> var_p, double sample_rate,
                                            double epsilon) {
    detail::require(sample_rate > 0.0, "sample rate must be strictly positive");
    detail::require(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0, 1)");
    EntropyCertificate c;
    c.delta_q = delta_q;
    c.delta_p = delta_p;
    c.h_quantum_bound = quantum_bound_discrete(delta_q, delta_p);
    if (var_q && var_p) c.h_classical = classical_min_entropy_gaussian(*var_q, *var_p, delta_q, delta_p);
    c.epsilon = epsilon;
    c.samples_per_second = sample_rate;
    c.secure_rate = c.h_quantum_bound * sample_rate;
    return c;
}

}  // namespace hqrng
