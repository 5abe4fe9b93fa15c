#pragma once

// Thin RAII layer over FFTW's real-to-complex transforms. Plans are created
// with FFTW_ESTIMATE and cached per thread and size; creation is serialized
// because the FFTW planner is not reentrant.

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>

#include <fftw3.h>

#include "hqrng/error.hpp"

namespace hqrng::fft {

namespace detail {

inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

}  // namespace detail

/// A length-n real transform with its own aligned work buffers.
///
/// forward(): time buffer -> spectrum buffer (n/2+1 bins, unnormalized).
/// inverse(): spectrum buffer -> time buffer (unnormalized, scales by n).
/// inverse() clobbers the spectrum buffer.
class RealTransform {
public:
    explicit RealTransform(std::size_t n) : n_(n) {
        hqrng::detail::require(n >= 2, "transform length must be at least 2");
        time_.reset(fftw_alloc_real(n));
        spec_.reset(fftw_alloc_complex(n / 2 + 1));
        if (!time_ || !spec_) throw std::bad_alloc();
        std::lock_guard lock(detail::planner_mutex());
        auto* t = static_cast<double*>(time_.get());
        auto* s = static_cast<fftw_complex*>(spec_.get());
        fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), t, s, FFTW_ESTIMATE);
        inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), s, t, FFTW_ESTIMATE);
    }

    RealTransform(const RealTransform&) = delete;
    RealTransform& operator=(const RealTransform&) = delete;

    ~RealTransform() {
        std::lock_guard lock(detail::planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(inv_);
    }

    std::size_t size() const noexcept { return n_; }
    std::size_t bins() const noexcept { return n_ / 2 + 1; }

    std::span<double> time() noexcept { return {static_cast<double*>(time_.get()), n_}; }
    std::span<std::complex<double>> spectrum() noexcept {
        return {reinterpret_cast<std::complex<double>*>(spec_.get()), bins()};
    }

    void forward() noexcept { fftw_execute(fwd_); }
    void inverse() noexcept { fftw_execute(inv_); }

private:
    std::size_t n_;
    std::unique_ptr<void, detail::FftwFree> time_;
    std::unique_ptr<void, detail::FftwFree> spec_;
    fftw_plan fwd_{};
    fftw_plan inv_{};
};

/// Per-thread cached transform of length n.
inline RealTransform& cached(std::size_t n) {
    thread_local std::map<std::size_t, std::unique_ptr<RealTransform>> cache;
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<RealTransform>(n);
    return *slot;
}

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace hqrng::fft
