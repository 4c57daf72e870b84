#pragma once

// In-place complex DFT, unnormalised in both directions:
//     X[k] = sum_n x[n] exp(sign * j 2 pi n k / n_total).
// Power-of-two lengths use iterative radix-2; other lengths fall back to O(n^2).

#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

namespace lodc::fft {

using Complex = std::complex<double>;

enum class Direction : int { forward = -1, inverse = +1 };

namespace detail {

inline void radix2(std::vector<Complex>& x, double sign) {
    const std::size_t n = x.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
        const std::size_t half = len / 2;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                // Twiddles straight from cos/sin rather than by repeated multiply,
                // so error does not accumulate along the butterfly.
                const Complex w{std::cos(ang * k), std::sin(ang * k)};
                const Complex u = x[i + k];
                const Complex v = x[i + k + half] * w;
                x[i + k] = u + v;
                x[i + k + half] = u - v;
            }
        }
    }
}

inline void naive(std::vector<Complex>& x, double sign) {
    const std::size_t n = x.size();
    std::vector<Complex> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        Complex acc{0.0, 0.0};
        for (std::size_t m = 0; m < n; ++m) {
            const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((m * k) % n) / static_cast<double>(n);
            acc += x[m] * Complex{std::cos(ang), std::sin(ang)};
        }
        out[k] = acc;
    }
    x.swap(out);
}

} // namespace detail

inline void transform(std::vector<Complex>& x, Direction dir) {
    if (x.size() <= 1) return;
    const double sign = static_cast<double>(static_cast<int>(dir));
    if (std::has_single_bit(x.size())) {
        detail::radix2(x, sign);
    } else {
        detail::naive(x, sign);
    }
}

} // namespace lodc::fft
