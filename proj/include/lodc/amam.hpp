#pragma once

// Empirical AM-AM transfer model of the Rydberg sensor,
//
//     F[x] = exp(-a x^2 / (b + x^2)),
//
// together with its Taylor machinery around an LO operating point. All field
// quantities are in mV/cm and measured above the detection threshold x0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "lodc/error.hpp"

namespace lodc::amam {

class AmAmModel {
public:
    AmAmModel(double a, double b, double x0 = 0.0) : a_(a), b_(b), x0_(x0) {
        if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("AmAmModel: a must be finite and > 0");
        if (!(b > 0.0) || !std::isfinite(b)) throw DomainError("AmAmModel: b must be finite and > 0");
        if (!(x0 >= 0.0) || !std::isfinite(x0)) throw DomainError("AmAmModel: x0 must be finite and >= 0");
    }

    double a() const noexcept { return a_; }
    double b() const noexcept { return b_; }
    double x0() const noexcept { return x0_; }

    friend bool operator==(const AmAmModel&, const AmAmModel&) = default;

private:
    double a_;
    double b_;
    double x0_;
};

/// Maps a raw field magnitude onto the threshold-removed coordinate, clamped at 0.
inline double remove_threshold(const AmAmModel& model, double raw_field) {
    return std::max(raw_field - model.x0(), 0.0);
}

inline double eval(const AmAmModel& model, double x) {
    if (!(x >= 0.0)) throw DomainError("amam::eval: x must be >= 0");
    const double x2 = x * x;
    return std::exp(-model.a() * x2 / (model.b() + x2));
}

inline double derivative1(const AmAmModel& model, double x) {
    if (!(x >= 0.0)) throw DomainError("amam::derivative1: x must be >= 0");
    const double p = model.b() + x * x;
    return -2.0 * model.a() * model.b() * x / (p * p) * eval(model, x);
}

/// Field of steepest descent of F (argmin of F'), from F'' = 0:
/// x^2 = (-b - ab + b sqrt(a^2 + 2a + 4)) / 3.
inline double max_slope_point(const AmAmModel& model) {
    const double a = model.a();
    const double b = model.b();
    // Rationalised form of the same root; stays accurate for large a where the
    // direct expression cancels.
    const double ap1 = a + 1.0;
    const double x2 = b / (ap1 + std::sqrt(ap1 * ap1 + 3.0));
    return std::sqrt(x2);
}

/// Distance from x_lo to the nearest complex singularity +-j sqrt(b).
inline double convergence_radius(const AmAmModel& model, double x_lo) {
    if (!(x_lo >= 0.0)) throw DomainError("convergence_radius: x_lo must be >= 0");
    return std::sqrt(x_lo * x_lo + model.b());
}

struct TaylorSeries {
    double x_lo = 0.0;
    std::vector<double> coeffs;  // c_m = F^(m)[x_lo] / m!
    double radius = 0.0;

    std::size_t order() const noexcept { return coeffs.empty() ? 0 : coeffs.size() - 1; }
};

/// Taylor coefficients of F about x_lo through max_order.
///
/// c_0..c_3 are closed forms; higher orders come from the five-term recursion
///   m c_m + 4x(m+1) c_{m+1} + 2((m+2)(3x^2+b) + ab) c_{m+2}
///   + 2x(2(b+x^2)(m+3) + ab) c_{m+3} + (m+4)(b+x^2)^2 c_{m+4} = 0,
/// which follows from (b+x^2)^2 F' = -2abx F.
inline TaylorSeries taylor_coefficients(const AmAmModel& model, double x_lo, int max_order) {
    if (max_order < 3) throw ArgumentError("taylor_coefficients: max_order must be >= 3");
    if (!(x_lo >= 0.0) || !std::isfinite(x_lo)) throw DomainError("taylor_coefficients: x_lo must be >= 0");

    const double a = model.a();
    const double b = model.b();
    const double x = x_lo;
    const double x2 = x * x;
    const double p = b + x2;
    const double f = eval(model, x);

    std::vector<double> c(static_cast<std::size_t>(max_order) + 1);
    c[0] = f;
    c[1] = -2.0 * a * b * x / (p * p) * f;
    c[2] = a * b * (3.0 * x2 * x2 + 2.0 * (a + 1.0) * b * x2 - b * b) / std::pow(p, 4) * f;
    c[3] = -2.0 * a * b * x / (3.0 * std::pow(p, 6)) *
           (2.0 * a * a * b * b * x2 - 3.0 * a * b * b * b + 6.0 * a * b * b * x2 + 9.0 * a * b * x2 * x2 -
            6.0 * b * b * b - 6.0 * b * b * x2 + 6.0 * b * x2 * x2 + 6.0 * x2 * x2 * x2) *
           f;

    for (int m = 0; m + 4 <= max_order; ++m) {
        const auto k = static_cast<std::size_t>(m);
        const double rest = m * c[k] + 4.0 * x * (m + 1) * c[k + 1] +
                            2.0 * ((m + 2) * (3.0 * x2 + b) + a * b) * c[k + 2] +
                            2.0 * x * (2.0 * p * (m + 3) + a * b) * c[k + 3];
        c[k + 4] = -rest / ((m + 4) * p * p);
    }
    return TaylorSeries{x_lo, std::move(c), convergence_radius(model, x_lo)};
}

/// Cauchy product c~_m = sum_k c_k c_{m-k}: the Taylor coefficients of F^2.
inline std::vector<double> squared_series_coefficients(const TaylorSeries& series, int max_order) {
    if (max_order < 0) throw ArgumentError("squared_series_coefficients: max_order must be >= 0");
    if (static_cast<std::size_t>(max_order) > series.order() || series.coeffs.empty()) {
        throw ArgumentError("squared_series_coefficients: series order too low");
    }
    const auto& c = series.coeffs;
    std::vector<double> out(static_cast<std::size_t>(max_order) + 1, 0.0);
    for (std::size_t m = 0; m < out.size(); ++m) {
        double acc = 0.0;
        for (std::size_t k = 0; k <= m; ++k) acc += c[k] * c[m - k];
        out[m] = acc;
    }
    return out;
}

struct SeriesValue {
    double value = 0.0;
    bool inside_radius = true;  // false: |x - x_lo| >= radius, convergence not guaranteed
};

/// Horner evaluation of the stored partial sum, optionally truncated at `order`.
inline SeriesValue series_eval(const TaylorSeries& series, double x, std::size_t order) {
    if (series.coeffs.empty()) throw ArgumentError("series_eval: empty series");
    order = std::min(order, series.order());
    const double dx = x - series.x_lo;
    double acc = 0.0;
    for (std::size_t m = order + 1; m-- > 0;) acc = acc * dx + series.coeffs[m];
    return {acc, std::abs(dx) < series.radius};
}

inline SeriesValue series_eval(const TaylorSeries& series, double x) {
    return series_eval(series, x, series.order());
}

} // namespace lodc::amam
