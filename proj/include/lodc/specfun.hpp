#pragma once

// Special functions and Gaussian moment primitives used by the Bussgang analysis.

#include <cmath>
#include <limits>
#include <numbers>

#include "lodc/error.hpp"

namespace lodc::specfun {

namespace detail {

inline constexpr int kMaxIterations = 10000;
inline constexpr double kEps = std::numeric_limits<double>::epsilon();

// e^{-x} x^s, evaluated in log space so large s and x do not overflow early.
inline double gamma_prefactor(double s, double x) {
    return std::exp(s * std::log(x) - x);
}

// gamma(s, x) by its power series; converges for all x, fast for x < s + 1.
inline double lower_gamma_series(double s, double x) {
    double term = 1.0 / s;
    double sum = term;
    for (int n = 1; n < kMaxIterations; ++n) {
        term *= x / (s + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEps) {
            return sum * gamma_prefactor(s, x);
        }
    }
    throw NumericalError("lower incomplete gamma series did not converge");
}

// Gamma(s, x) by the Legendre continued fraction (modified Lentz), x >= s + 1.
inline double upper_gamma_fraction(double s, double x) {
    constexpr double tiny = std::numeric_limits<double>::min() / kEps;
    double b = x + 1.0 - s;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIterations; ++i) {
        const double an = -i * (i - s);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) {
            return h * gamma_prefactor(s, x);
        }
    }
    throw NumericalError("upper incomplete gamma continued fraction did not converge");
}

inline void check_gamma_args(double s, double x) {
    if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("incomplete gamma: s must be finite and > 0");
    if (!(x >= 0.0) || std::isnan(x)) throw DomainError("incomplete gamma: x must be >= 0");
}

} // namespace detail

/// Gaussian tail probability Q(x) = P(Z > x) for standard normal Z.
inline double q_function(double x) {
    if (!std::isfinite(x)) throw DomainError("q_function: argument must be finite");
    return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

/// Upper incomplete gamma Gamma(s, x) = int_x^inf t^{s-1} e^{-t} dt.
inline double upper_incomplete_gamma(double s, double x) {
    detail::check_gamma_args(s, x);
    if (x == 0.0) return std::tgamma(s);
    if (std::isinf(x)) return 0.0;
    if (x < s + 1.0) return std::tgamma(s) - detail::lower_gamma_series(s, x);
    return detail::upper_gamma_fraction(s, x);
}

/// Lower incomplete gamma gamma(s, x) = int_0^x t^{s-1} e^{-t} dt.
///
/// Each branch computes the smaller of gamma/Gamma directly so the result keeps
/// full relative precision when x is far below or far above s.
inline double lower_incomplete_gamma(double s, double x) {
    detail::check_gamma_args(s, x);
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return std::tgamma(s);
    if (x < s + 1.0) return detail::lower_gamma_series(s, x);
    return std::tgamma(s) - detail::upper_gamma_fraction(s, x);
}

/// n!! with (-1)!! = 0!! = 1.
inline double double_factorial(int n) {
    if (n < -1) throw DomainError("double_factorial: n must be >= -1");
    double result = 1.0;
    for (int k = n; k > 1; k -= 2) result *= k;
    return result;
}

/// E{X^order} for X ~ N(0, sigma^2); order must be even (odd moments vanish).
inline double gaussian_central_moment(int order, double sigma) {
    if (order < 0 || order % 2 != 0) throw DomainError("gaussian_central_moment: order must be even and >= 0");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("gaussian_central_moment: sigma must be > 0");
    return std::pow(sigma, order) * double_factorial(order - 1);
}

} // namespace lodc::specfun
