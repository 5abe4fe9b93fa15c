#pragma once

// Heterodyne outcome statistics in phase space.
//
// Units: dimensionless, scaled so the vacuum Husimi function has variance 1/2
// per quadrature. Every supported state (vacuum, coherent, thermal, finite
// mixtures of coherent states) has a Husimi function that is a finite mixture
// of isotropic 2D Gaussians, so densities, bin probabilities and sampling are
// all exact.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "hqrng/error.hpp"
#include "hqrng/rng.hpp"

namespace hqrng {

struct ComplexAmplitude {
    double re = 0.0;
    double im = 0.0;

    friend bool operator==(const ComplexAmplitude&, const ComplexAmplitude&) = default;
};

struct Vacuum {};

struct Coherent {
    ComplexAmplitude center;
};

struct Thermal {
    double mean_photons = 0.0;
};

struct MixtureComponent {
    double weight = 1.0;
    ComplexAmplitude center;
};

/// Finite positive-P mixture of coherent states.
struct CoherentMixture {
    std::vector<MixtureComponent> components;
};

using StateModel = std::variant<Vacuum, Coherent, Thermal, CoherentMixture>;

/// Axis-aligned rectangle in phase space: [q_lo, q_hi) x [p_lo, p_hi).
struct PhaseSpaceBin {
    double q_lo = 0.0;
    double q_hi = 0.0;
    double p_lo = 0.0;
    double p_hi = 0.0;

    double delta_q() const noexcept { return q_hi - q_lo; }
    double delta_p() const noexcept { return p_hi - p_lo; }

    static PhaseSpaceBin centered(ComplexAmplitude c, double dq, double dp) {
        return {c.re - dq / 2, c.re + dq / 2, c.im - dp / 2, c.im + dp / 2};
    }
};

/// Variance of the vacuum Husimi function along either quadrature.
inline constexpr double kVacuumVariance = 0.5;

/// One isotropic Gaussian term of a Husimi function.
struct GaussianTerm {
    double weight;
    ComplexAmplitude mean;
    double variance;  // per quadrature
};

inline void validate(const ComplexAmplitude& a) {
    detail::require(std::isfinite(a.re) && std::isfinite(a.im), "complex amplitude must be finite");
}

inline void validate(const PhaseSpaceBin& b) {
    detail::require(std::isfinite(b.q_lo) && std::isfinite(b.q_hi) && std::isfinite(b.p_lo) &&
                        std::isfinite(b.p_hi),
                    "bin edges must be finite");
    detail::require(b.q_hi > b.q_lo && b.p_hi > b.p_lo, "bin must have positive width");
}

inline void validate(const StateModel& state) {
    std::visit(
        [](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Coherent>) {
                validate(s.center);
            } else if constexpr (std::is_same_v<T, Thermal>) {
                detail::require(std::isfinite(s.mean_photons) && s.mean_photons >= 0.0,
                                "thermal mean photon number must be >= 0");
            } else if constexpr (std::is_same_v<T, CoherentMixture>) {
                detail::require(!s.components.empty(), "mixture needs at least one component");
                double total = 0.0;
                for (const auto& c : s.components) {
                    detail::require(c.weight > 0.0, "mixture weights must be strictly positive");
                    validate(c.center);
                    total += c.weight;
                }
                detail::require(std::abs(total - 1.0) <= 1e-12, "mixture weights must sum to 1");
            }
        },
        state);
}

/// Husimi function of `state` as a list of Gaussian terms.
inline std::vector<GaussianTerm> gaussian_terms(const StateModel& state) {
    validate(state);
    return std::visit(
        [](const auto& s) -> std::vector<GaussianTerm> {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Vacuum>) {
                return {{1.0, {}, kVacuumVariance}};
            } else if constexpr (std::is_same_v<T, Coherent>) {
                return {{1.0, s.center, kVacuumVariance}};
            } else if constexpr (std::is_same_v<T, Thermal>) {
                return {{1.0, {}, kVacuumVariance * (1.0 + s.mean_photons)}};
            } else {
                std::vector<GaussianTerm> out;
                out.reserve(s.components.size());
                for (const auto& c : s.components) out.push_back({c.weight, c.center, kVacuumVariance});
                return out;
            }
        },
        state);
}

/// Q(alpha) = <alpha|rho|alpha> / pi.
inline double husimi_density(const StateModel& state, ComplexAmplitude alpha) {
    validate(alpha);
    double q = 0.0;
    for (const auto& t : gaussian_terms(state)) {
        const double dx = alpha.re - t.mean.re;
        const double dy = alpha.im - t.mean.im;
        q += t.weight / (2.0 * std::numbers::pi * t.variance) *
             std::exp(-(dx * dx + dy * dy) / (2.0 * t.variance));
    }
    return q;
}

/// n i.i.d. heterodyne outcomes drawn from Q. Deterministic in (seed, stream).
inline std::vector<ComplexAmplitude> sample_heterodyne(const StateModel& state, std::size_t n,
                                                       std::uint64_t seed,
                                                       std::uint64_t stream = 0) {
    detail::require(n >= 1, "sample count must be >= 1");
    const auto terms = gaussian_terms(state);
    std::vector<double> cumulative;
    double acc = 0.0;
    for (const auto& t : terms) cumulative.push_back(acc += t.weight);

    auto engine = make_engine(seed, stream);
    Gaussian gauss(engine);
    std::vector<ComplexAmplitude> out(n);
    for (auto& x : out) {
        std::size_t k = 0;
        if (terms.size() > 1) {
            const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53 * acc;
            while (k + 1 < terms.size() && u >= cumulative[k]) ++k;
        }
        const double sd = std::sqrt(terms[k].variance);
        x.re = terms[k].mean.re + sd * gauss();
        x.im = terms[k].mean.im + sd * gauss();
    }
    return out;
}

namespace detail {

/// P(lo <= X < hi) for X ~ N(mean, variance), accurate in both tails.
inline double normal_interval(double lo, double hi, double mean, double variance) {
    const double s = std::sqrt(2.0 * variance);
    const double a = (lo - mean) / s;
    const double b = (hi - mean) / s;
    if (a >= 0.0) return 0.5 * (std::erfc(a) - std::erfc(b));
    if (b <= 0.0) return 0.5 * (std::erfc(-b) - std::erfc(-a));
    return 0.5 * (std::erf(b) - std::erf(a));
}

}  // namespace detail

/// Probability that the heterodyne outcome lands in `bin`.
inline double bin_probability(const StateModel& state, const PhaseSpaceBin& bin) {
    validate(bin);
    double p = 0.0;
    for (const auto& t : gaussian_terms(state)) {
        p += t.weight * detail::normal_interval(bin.q_lo, bin.q_hi, t.mean.re, t.variance) *
             detail::normal_interval(bin.p_lo, bin.p_hi, t.mean.im, t.variance);
    }
    return std::clamp(p, 0.0, 1.0);
}

}  // namespace hqrng
