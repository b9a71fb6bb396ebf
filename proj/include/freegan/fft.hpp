#ifndef FREEGAN_FFT_HPP
#define FREEGAN_FFT_HPP

#include <complex>
#include <vector>

#include "freegan/common.hpp"

namespace freegan {

// Iterative radix-2 Cooley-Tukey, in place. n must be a power of two.
inline void fft_inplace(std::vector<std::complex<real>>& a, bool inverse) {
    const size_t n = a.size();
    if (n < 2) return;
    // bit-reversal permutation
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const real ang = (inverse ? kTwoPi : -kTwoPi) / static_cast<real>(len);
        const std::complex<real> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<real> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                std::complex<real> u = a[i + k];
                std::complex<real> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const real inv = 1.0 / static_cast<real>(n);
        for (auto& x : a) x *= inv;
    }
}

// Real-input FFT: returns the n/2+1 non-redundant bins.
inline std::vector<std::complex<real>> rfft(const std::vector<real>& x, int n) {
    std::vector<std::complex<real>> buf(static_cast<size_t>(n), {0.0, 0.0});
    const size_t m = std::min(x.size(), static_cast<size_t>(n));
    for (size_t i = 0; i < m; ++i) buf[i] = {x[i], 0.0};
    fft_inplace(buf, false);
    buf.resize(static_cast<size_t>(n) / 2 + 1);
    return buf;
}

// Inverse of rfft: reconstructs the length-n real signal from n/2+1 bins
// by Hermitian extension.
inline std::vector<real> irfft(const std::vector<std::complex<real>>& half, int n) {
    std::vector<std::complex<real>> buf(static_cast<size_t>(n));
    const size_t nb = static_cast<size_t>(n) / 2 + 1;
    for (size_t k = 0; k < nb; ++k) buf[k] = half[k];
    for (size_t k = nb; k < static_cast<size_t>(n); ++k) buf[k] = std::conj(half[n - k]);
    fft_inplace(buf, true);
    std::vector<real> out(static_cast<size_t>(n));
    for (size_t i = 0; i < out.size(); ++i) out[i] = buf[i].real();
    return out;
}

}  // namespace freegan

#endif  // FREEGAN_FFT_HPP
