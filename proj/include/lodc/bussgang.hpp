#pragma once

// Closed-form Bussgang analysis of the composite clip + AM-AM nonlinearity
//
//     G[x] = F[x_lo + clip(x, delta_x)],   x ~ N(0, sigma_t^2).
//
// The useful-gain / distortion split is s_d = alpha s_t + n_d with
// E{n_d s_t} = 0.

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include "lodc/amam.hpp"
#include "lodc/error.hpp"
#include "lodc/specfun.hpp"

namespace lodc::bussgang {

inline constexpr int kDefaultMaxOrder = 40;
inline constexpr double kConvergedRelChange = 1e-10;
inline constexpr double kAcceptableRelChange = 1e-6;

// 10 log10((5/3)^2): below this power, 3 sigma_t < delta_x = 5.
inline constexpr double kLowPowerBoundaryDb = 4.436974992327127;

struct OperatingPoint {
    double x_lo = 10.0;
    double delta_x = 5.0;
    double sigma_t2 = 2.0163;

    double sigma_t() const { return std::sqrt(sigma_t2); }

    /// x_lo >= delta_x > 0 (the LO keeps the biased signal non-negative), sigma_t2 > 0.
    void validate() const {
        if (!std::isfinite(x_lo) || !std::isfinite(delta_x) || !std::isfinite(sigma_t2)) {
            throw DomainError("OperatingPoint: non-finite value");
        }
        if (!(delta_x > 0.0)) throw DomainError("OperatingPoint: delta_x must be > 0");
        if (!(x_lo >= delta_x)) throw DomainError("OperatingPoint: x_lo must be >= delta_x");
        if (!(sigma_t2 > 0.0)) throw DomainError("OperatingPoint: sigma_t2 must be > 0");
    }

    /// The clip window [x_lo - dx, x_lo + dx] must sit inside the Taylor disc.
    void validate(const amam::AmAmModel& model) const {
        validate();
        const double r = amam::convergence_radius(model, x_lo);
        if (!(delta_x < r)) {
            std::ostringstream msg;
            msg << "OperatingPoint: delta_x = " << delta_x << " is outside the convergence radius " << r;
            throw DomainError(msg.str());
        }
    }
};

/// v_{2i} = E{x^{2i} 1[|x| <= dx]} for x ~ N(0, sigma_t^2).
///
/// Uses 2^i sigma^{2i} / sqrt(pi) * gamma(i + 1/2, dx~^2), dx~ = dx / (sqrt(2) sigma_t),
/// which equals sigma^{2i} (2i-1)!! - 2^i sigma^{2i} Gamma(i + 1/2, dx~^2) / sqrt(pi)
/// without the cancellation when dx~ is small.
inline double clipped_gaussian_moment(int i, double sigma_t, double delta_x) {
    if (i < 0) throw DomainError("clipped_gaussian_moment: i must be >= 0");
    if (!(sigma_t > 0.0) || !std::isfinite(sigma_t)) throw DomainError("clipped_gaussian_moment: sigma_t must be > 0");
    if (!(delta_x > 0.0)) throw DomainError("clipped_gaussian_moment: delta_x must be > 0");
    if (std::isinf(delta_x)) return specfun::gaussian_central_moment(2 * i, sigma_t);
    const double dxt = delta_x / (std::numbers::sqrt2 * sigma_t);
    const double s = i + 0.5;
    const double scale = std::exp(i * std::log(2.0 * sigma_t * sigma_t)) / std::sqrt(std::numbers::pi);
    return scale * specfun::lower_incomplete_gamma(s, dxt * dxt);
}

/// Running sums for truncation orders I = 0..max_order.
struct PartialSums {
    std::vector<double> alpha;
    std::vector<double> e_nd;
    std::vector<double> e_sd2;
    std::vector<double> sigma_d2;
};

/// sigma_d^2 = E{s_d^2} - E{n_d}^2 - alpha^2 sigma_t^2.
///
/// Values in [-1e-12 e_sd2, 0) are round-off and clamp to zero; anything more
/// negative means the truncated series are inconsistent.
inline double distortion_power(double alpha, double e_nd, double e_sd2, double sigma_t2) {
    const double v = e_sd2 - e_nd * e_nd - alpha * alpha * sigma_t2;
    if (v >= 0.0) return v;
    if (v >= -1e-12 * std::abs(e_sd2)) return 0.0;
    std::ostringstream msg;
    msg << "distortion_power: negative sigma_d2 = " << v << " (e_sd2 = " << e_sd2 << ")";
    throw TruncationError(msg.str());
}

/// Partial sums of alpha, E{n_d}, E{s_d^2} and sigma_d^2 for I = 0..max_order.
/// Order I uses odd coefficients up to 2I+1 for alpha and even ones up to 2I for
/// the moments. sigma_d2 entries are the raw combination (not clamped).
inline PartialSums partial_sums(const amam::AmAmModel& model, const OperatingPoint& op, int max_order) {
    if (max_order < 1) throw ArgumentError("partial_sums: max_order must be >= 1");
    op.validate(model);
    const auto series = amam::taylor_coefficients(model, op.x_lo, 2 * max_order + 1);
    const auto sq = amam::squared_series_coefficients(series, 2 * max_order);
    const auto& c = series.coeffs;

    const double sigma = op.sigma_t();
    const double q = specfun::q_function(op.delta_x / sigma);
    const double f_lo = amam::eval(model, op.x_lo - op.delta_x);
    const double f_hi = amam::eval(model, op.x_lo + op.delta_x);
    const double clip_mean = (f_lo + f_hi) * q;
    const double clip_power = (f_lo * f_lo + f_hi * f_hi) * q;

    PartialSums out;
    double alpha = 0.0;
    double e_nd = clip_mean;
    double e_sd2 = clip_power;
    for (int i = 0; i <= max_order; ++i) {
        const auto k = static_cast<std::size_t>(2 * i);
        const double v = clipped_gaussian_moment(i, sigma, op.delta_x);
        alpha += (2 * i + 1) * c[k + 1] * v;
        e_nd += c[k] * v;
        e_sd2 += sq[k] * v;
        out.alpha.push_back(alpha);
        out.e_nd.push_back(e_nd);
        out.e_sd2.push_back(e_sd2);
        out.sigma_d2.push_back(e_sd2 - e_nd * e_nd - alpha * alpha * op.sigma_t2);
    }
    return out;
}

struct BussgangAnalysis {
    double alpha = 0.0;
    double e_nd = 0.0;
    double e_sd2 = 0.0;
    double sigma_d2 = 0.0;
    int order_used = 0;
    bool converged = false;
    double final_rel_change = 0.0;
    PartialSums sums;
};

namespace detail {

inline double rel_change(const std::vector<double>& v, std::size_t i, double floor) {
    const double scale = std::max(std::abs(v[i]), floor);
    return scale == 0.0 ? 0.0 : std::abs(v[i] - v[i - 1]) / scale;
}

// Largest relative step of any tracked quantity between orders i-1 and i.
inline double step_change(const PartialSums& s, std::size_t i) {
    const double tiny = std::numeric_limits<double>::min();
    double r = rel_change(s.alpha, i, tiny);
    r = std::max(r, rel_change(s.e_nd, i, tiny));
    r = std::max(r, rel_change(s.e_sd2, i, tiny));
    // sigma_d2 is a difference of O(e_sd2) terms; its absolute noise floor is a
    // few ulps of e_sd2.
    r = std::max(r, rel_change(s.sigma_d2, i, 1e-9 * std::abs(s.e_sd2[i])));
    return r;
}

} // namespace detail

/// Full analysis with the truncation protocol: stop at the first order I where
/// two consecutive steps change every quantity by < 1e-10 relative. If max_order
/// is reached with a last step above 1e-6, throw ConvergenceError; in between,
/// return the max_order result flagged converged = false.
inline BussgangAnalysis analyze(const amam::AmAmModel& model, const OperatingPoint& op,
                                int max_order = kDefaultMaxOrder) {
    BussgangAnalysis out;
    out.sums = partial_sums(model, op, max_order);
    const auto& s = out.sums;

    std::size_t stop = s.alpha.size() - 1;
    double last = detail::step_change(s, stop);
    for (std::size_t i = 2; i < s.alpha.size(); ++i) {
        if (detail::step_change(s, i - 1) < kConvergedRelChange && detail::step_change(s, i) < kConvergedRelChange) {
            stop = i;
            last = detail::step_change(s, i);
            out.converged = true;
            break;
        }
    }
    if (!out.converged && last > kAcceptableRelChange) {
        std::ostringstream msg;
        msg << "Bussgang series did not converge by order " << max_order << " (last relative change " << last
            << "); the clip window is too close to the convergence radius";
        throw ConvergenceError(msg.str(), s.alpha);
    }

    out.order_used = static_cast<int>(stop);
    out.final_rel_change = last;
    out.alpha = s.alpha[stop];
    out.e_nd = s.e_nd[stop];
    out.e_sd2 = s.e_sd2[stop];
    out.sigma_d2 = distortion_power(out.alpha, out.e_nd, out.e_sd2, op.sigma_t2);
    return out;
}

/// alpha alone, with the same protocol as analyze.
inline std::pair<double, bool> attenuation_factor(const amam::AmAmModel& model, const OperatingPoint& op,
                                                  int max_order = kDefaultMaxOrder) {
    const auto r = analyze(model, op, max_order);
    return {r.alpha, r.converged};
}

struct DistortionMoments {
    double e_nd = 0.0;
    double e_sd2 = 0.0;
};

inline DistortionMoments distortion_moments(const amam::AmAmModel& model, const OperatingPoint& op,
                                            int max_order = kDefaultMaxOrder) {
    const auto r = analyze(model, op, max_order);
    return {r.e_nd, r.e_sd2};
}

struct SnrResult {
    double snr_d = 0.0;
    double snr_r = 0.0;
    double snr_d_k = 0.0;
    double snr_r_k = 0.0;
};

inline double to_db(double linear) { return 10.0 * std::log10(linear); }

/// Infinite SNR is reported as +inf when the noise power is exactly zero.
inline SnrResult snr(const BussgangAnalysis& an, const OperatingPoint& op, int n_half, double sigma_r2) {
    if (n_half < 2) throw ArgumentError("snr: n_half must be >= 2");
    if (!(sigma_r2 >= 0.0)) throw DomainError("snr: sigma_r2 must be >= 0");
    const double signal = an.alpha * an.alpha * op.sigma_t2;
    auto ratio = [&](double noise) { return noise == 0.0 ? std::numeric_limits<double>::infinity() : signal / noise; };
    const double factor = static_cast<double>(n_half) / (n_half - 1);
    SnrResult r;
    r.snr_d = ratio(an.sigma_d2);
    r.snr_r = ratio(an.sigma_d2 + sigma_r2);
    r.snr_d_k = factor * r.snr_d;
    r.snr_r_k = factor * r.snr_r;
    return r;
}

inline int bits_per_symbol(int m_qam) {
    if (m_qam < 4 || !std::has_single_bit(static_cast<unsigned>(m_qam))) {
        throw ArgumentError("m_qam must be a power of two >= 4");
    }
    const int bits = std::countr_zero(static_cast<unsigned>(m_qam));
    if (bits % 2 != 0) throw ArgumentError("m_qam must be a square QAM order (4, 16, 64, ...)");
    return bits;
}

struct BerResult {
    double ber_d_k = 0.0;
    double ber_r_k = 0.0;
};

/// Nearest-neighbour Gray square-QAM BER on one subcarrier,
///   (4/log2 M)(1 - 1/sqrt M) Q(q0 sqrt(2 alpha^2 / (sigma_dk^2 + sigma_rk^2))),
/// sigma_dk^2 = sigma_d^2 / 2N, sigma_rk^2 = sigma_r^2 / 2N.
inline BerResult theoretical_ber(const BussgangAnalysis& an, int m_qam, double q0, int n_half, double sigma_r2) {
    const int bits = bits_per_symbol(m_qam);
    if (!(q0 > 0.0)) throw DomainError("theoretical_ber: q0 must be > 0");
    if (n_half < 2) throw ArgumentError("theoretical_ber: n_half must be >= 2");
    if (!(sigma_r2 >= 0.0)) throw DomainError("theoretical_ber: sigma_r2 must be >= 0");
    const double pref = 4.0 / bits * (1.0 - 1.0 / std::sqrt(static_cast<double>(m_qam)));
    const double two_n = 2.0 * n_half;
    auto ber = [&](double noise_k) {
        if (noise_k == 0.0) return an.alpha == 0.0 ? pref * 0.5 : 0.0;
        return pref * specfun::q_function(q0 * std::sqrt(2.0 * an.alpha * an.alpha / noise_k));
    };
    return {ber(an.sigma_d2 / two_n), ber((an.sigma_d2 + sigma_r2) / two_n)};
}

/// Exact BER of Gray-coded square M-QAM in Gaussian noise, with z the ratio of
/// half the minimum distance to the per-dimension noise standard deviation.
inline double exact_gray_qam_ber(int m_qam, double z) {
    const int bits = bits_per_symbol(m_qam);
    if (!(z >= 0.0)) throw DomainError("exact_gray_qam_ber: z must be >= 0");
    const int levels = 1 << (bits / 2);
    auto cdf_above = [&](double t) {  // P(noise > t), t in half-distance units
        if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
        return specfun::q_function(t * z);
    };
    const double inf = std::numeric_limits<double>::infinity();
    double errors = 0.0;
    for (int t = 0; t < levels; ++t) {
        const double pos = 2.0 * t - levels + 1;
        const unsigned gt = static_cast<unsigned>(t ^ (t >> 1));
        for (int r = 0; r < levels; ++r) {
            if (r == t) continue;
            const double lo = r == 0 ? -inf : 2.0 * r - levels;
            const double hi = r == levels - 1 ? inf : 2.0 * r - levels + 2;
            const double p = cdf_above(lo - pos) - cdf_above(hi - pos);
            const unsigned gr = static_cast<unsigned>(r ^ (r >> 1));
            errors += p * std::popcount(gt ^ gr);
        }
    }
    // I and Q are independent PAMs carrying half the bits each.
    return errors / (levels * (bits / 2));
}

/// Same link quantities as theoretical_ber, evaluated with exact_gray_qam_ber.
inline BerResult exact_ber(const BussgangAnalysis& an, int m_qam, double q0, int n_half, double sigma_r2) {
    const double two_n = 2.0 * n_half;
    auto ber = [&](double noise_k) {
        if (noise_k == 0.0) return 0.0;
        return exact_gray_qam_ber(m_qam, q0 * std::sqrt(2.0 * an.alpha * an.alpha / noise_k));
    };
    return {ber(an.sigma_d2 / two_n), ber((an.sigma_d2 + sigma_r2) / two_n)};
}

/// 10 log10(sigma_t^2 / (log2 M sigma_r^2)).
inline double eb_over_n0_db(double sigma_t2, int m_qam, double sigma_r2) {
    if (!(sigma_r2 > 0.0)) throw DomainError("eb_over_n0_db: sigma_r2 must be > 0");
    if (!(sigma_t2 > 0.0)) throw DomainError("eb_over_n0_db: sigma_t2 must be > 0");
    return to_db(sigma_t2 / (bits_per_symbol(m_qam) * sigma_r2));
}

/// Inverse of eb_over_n0_db: receiver noise power giving the requested Eb/Nr.
inline double sigma_r2_for_eb_n0(double eb_n0_db, double sigma_t2, int m_qam) {
    return sigma_t2 / (bits_per_symbol(m_qam) * std::pow(10.0, eb_n0_db / 10.0));
}

} // namespace lodc::bussgang
