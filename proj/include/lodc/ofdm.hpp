#pragma once

// LODC-OFDM baseband chain: Gray square QAM, Hermitian framing on 2N carriers,
// unnormalised inverse DFT, symmetric clipping, composite nonlinear channel,
// 1/2N DFT demodulation with alpha q0 compensation.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lodc/amam.hpp"
#include "lodc/bussgang.hpp"
#include "lodc/error.hpp"
#include "lodc/fft.hpp"
#include "lodc/rng.hpp"

namespace lodc::ofdm {

using Complex = std::complex<double>;
using Bits = std::vector<std::uint8_t>;

struct LinkConfig {
    int n_half = 128;
    int m_qam = 4;
    double q0 = 0.063;
    double delta_x = 5.0;
    double x_lo = 10.0;
    double x0 = 0.0;
    double sigma_r2 = 0.0;

    int carriers() const { return 2 * n_half; }
    int data_carriers() const { return n_half - 1; }
    int bits_per_symbol() const { return bussgang::bits_per_symbol(m_qam); }

    /// sigma_t^2 = 2 q0^2 (M - 1)(2N - 2) / 3.
    double total_signal_power() const {
        return 2.0 * q0 * q0 * (m_qam - 1) * (2.0 * n_half - 2.0) / 3.0;
    }

    bussgang::OperatingPoint operating_point() const { return {x_lo, delta_x, total_signal_power()}; }

    void validate() const {
        if (2 * n_half < 64) throw DomainError("LinkConfig: 2N must be >= 64");
        if (m_qam != 4 && m_qam != 16 && m_qam != 64 && m_qam != 256) {
            throw DomainError("LinkConfig: m_qam must be one of 4, 16, 64, 256");
        }
        if (!(q0 > 0.0) || !std::isfinite(q0)) throw DomainError("LinkConfig: q0 must be > 0");
        if (!(delta_x > 0.0) || !std::isfinite(delta_x)) throw DomainError("LinkConfig: delta_x must be > 0");
        if (!(x_lo >= delta_x) || !std::isfinite(x_lo)) throw DomainError("LinkConfig: x_lo must be >= delta_x");
        if (!(x0 >= 0.0)) throw DomainError("LinkConfig: x0 must be >= 0");
        if (!(sigma_r2 >= 0.0) || !std::isfinite(sigma_r2)) throw DomainError("LinkConfig: sigma_r2 must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// Gray square QAM. Per symbol: the first log2(M)/2 bits select the in-phase
// level, the rest the quadrature level, MSB first. Levels are odd integers
// -(L-1)..(L-1); level index j carries Gray code j ^ (j >> 1).

namespace detail {

inline int gray_to_index(unsigned g) {
    unsigned j = g;
    for (unsigned s = g >> 1; s != 0; s >>= 1) j ^= s;
    return static_cast<int>(j);
}

inline unsigned index_to_gray(int j) { return static_cast<unsigned>(j ^ (j >> 1)); }

// Nearest level index; exact midpoints go to the neighbour with the lower Gray code.
inline int decide_level(double r, int levels) {
    const double u = (r + levels - 1) / 2.0;  // level index units
    if (!(u > 0.0)) return 0;
    if (u >= levels - 1) return levels - 1;
    const double fl = std::floor(u);
    const int j = static_cast<int>(fl);
    const double frac = u - fl;
    if (frac < 0.5) return j;
    if (frac > 0.5) return j + 1;
    return index_to_gray(j) < index_to_gray(j + 1) ? j : j + 1;
}

} // namespace detail

inline std::vector<Complex> qam_map(std::span<const std::uint8_t> bits, int m_qam) {
    const int k = bussgang::bits_per_symbol(m_qam);
    if (bits.size() % static_cast<std::size_t>(k) != 0) {
        throw ArgumentError("qam_map: bit count must be a multiple of log2(M)");
    }
    const int half = k / 2;
    const int levels = 1 << half;
    std::vector<Complex> out;
    out.reserve(bits.size() / static_cast<std::size_t>(k));
    for (std::size_t s = 0; s < bits.size(); s += static_cast<std::size_t>(k)) {
        unsigned gi = 0;
        unsigned gq = 0;
        for (int b = 0; b < half; ++b) {
            gi = (gi << 1) | (bits[s + b] & 1u);
            gq = (gq << 1) | (bits[s + half + b] & 1u);
        }
        const int ji = detail::gray_to_index(gi);
        const int jq = detail::gray_to_index(gq);
        out.emplace_back(2.0 * ji - levels + 1, 2.0 * jq - levels + 1);
    }
    return out;
}

inline Bits qam_demap(std::span<const Complex> symbols, int m_qam) {
    const int k = bussgang::bits_per_symbol(m_qam);
    const int half = k / 2;
    const int levels = 1 << half;
    Bits out;
    out.reserve(symbols.size() * static_cast<std::size_t>(k));
    for (const auto& s : symbols) {
        if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) throw DomainError("qam_demap: non-finite symbol");
        const unsigned gi = detail::index_to_gray(detail::decide_level(s.real(), levels));
        const unsigned gq = detail::index_to_gray(detail::decide_level(s.imag(), levels));
        for (int b = half - 1; b >= 0; --b) out.push_back(static_cast<std::uint8_t>((gi >> b) & 1u));
        for (int b = half - 1; b >= 0; --b) out.push_back(static_cast<std::uint8_t>((gq >> b) & 1u));
    }
    return out;
}

/// 2(M - 1)/3.
inline double constellation_power(int m_qam) { return 2.0 * (m_qam - 1) / 3.0; }

// ---------------------------------------------------------------------------
// Framing

struct OfdmFrame {
    std::vector<Complex> freq_symbols;  // S_{t,k}, k = 0..2N-1 (before q0)
    std::vector<double> time_samples;   // s_{t,n}
    double imag_residue = 0.0;          // max |Im| discarded from the inverse DFT
};

/// Carriers 1..N-1 carry data, 0 and N are empty, S_{2N-k} = conj(S_k);
/// s_n = sum_k q0 S_k exp(+j 2 pi n k / 2N).
inline OfdmFrame build_frame(std::span<const Complex> data_symbols, const LinkConfig& config) {
    const int n = config.n_half;
    if (data_symbols.size() != static_cast<std::size_t>(n - 1)) {
        throw ArgumentError("build_frame: expected N - 1 data symbols");
    }
    const auto two_n = static_cast<std::size_t>(2 * n);
    OfdmFrame frame;
    frame.freq_symbols.assign(two_n, Complex{0.0, 0.0});
    for (int k = 1; k < n; ++k) {
        const Complex s = data_symbols[static_cast<std::size_t>(k - 1)];
        frame.freq_symbols[static_cast<std::size_t>(k)] = s;
        frame.freq_symbols[two_n - static_cast<std::size_t>(k)] = std::conj(s);
    }
    std::vector<Complex> work(two_n);
    for (std::size_t k = 0; k < two_n; ++k) work[k] = config.q0 * frame.freq_symbols[k];
    fft::transform(work, fft::Direction::inverse);
    frame.time_samples.resize(two_n);
    for (std::size_t i = 0; i < two_n; ++i) {
        frame.time_samples[i] = work[i].real();
        frame.imag_residue = std::max(frame.imag_residue, std::abs(work[i].imag()));
    }
    return frame;
}

inline double clip_sample(double x, double delta_x) { return std::clamp(x, -delta_x, delta_x); }

inline std::vector<double> clip(std::span<const double> samples, double delta_x) {
    if (!(delta_x > 0.0)) throw DomainError("clip: delta_x must be > 0");
    std::vector<double> out(samples.size());
    std::transform(samples.begin(), samples.end(), out.begin(), [&](double x) { return clip_sample(x, delta_x); });
    return out;
}

// ---------------------------------------------------------------------------
// Channel

/// G[x] = F[x_lo + clip(x, dx)], continuous with flat saturation outside +-dx.
class CompositeGain {
public:
    CompositeGain(amam::AmAmModel model, double x_lo, double delta_x)
        : model_(model), x_lo_(x_lo), delta_x_(delta_x) {
        if (!(delta_x > 0.0)) throw DomainError("CompositeGain: delta_x must be > 0");
        if (!(x_lo >= delta_x)) throw DomainError("CompositeGain: x_lo must be >= delta_x");
    }
    CompositeGain(amam::AmAmModel model, const bussgang::OperatingPoint& op)
        : CompositeGain(model, op.x_lo, op.delta_x) {}

    double operator()(double x) const { return amam::eval(model_, x_lo_ + clip_sample(x, delta_x_)); }

    const amam::AmAmModel& model() const { return model_; }
    double x_lo() const { return x_lo_; }
    double delta_x() const { return delta_x_; }

private:
    amam::AmAmModel model_;
    double x_lo_;
    double delta_x_;
};

inline double composite_gain(const amam::AmAmModel& model, const bussgang::OperatingPoint& op, double x) {
    return CompositeGain(model, op)(x);
}

/// Linear pass-through used to test the chain without the sensor.
struct IdentityGain {
    double operator()(double x) const { return x; }
};

/// s_r,n = G[s_t,n] + n_r,n with n_r ~ N(0, sigma_r2), drawn from `noise`.
template <class Gain>
std::vector<double> channel(std::span<const double> samples, const Gain& gain, double sigma_r2, rng::Philox& noise) {
    if (!(sigma_r2 >= 0.0)) throw DomainError("channel: sigma_r2 must be >= 0");
    const double sr = std::sqrt(sigma_r2);
    std::vector<double> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out[i] = gain(samples[i]);
        if (sr > 0.0) out[i] += sr * noise.normal();
    }
    return out;
}

template <class Gain>
std::vector<double> channel(const OfdmFrame& frame, const Gain& gain, const LinkConfig& config, rng::Philox& noise) {
    return channel(std::span<const double>(frame.time_samples), gain, config.sigma_r2, noise);
}

/// S_r,k = (1 / 2N) sum_n s_r,n exp(-j 2 pi n k / 2N) / (alpha q0), k = 1..N-1.
inline std::vector<Complex> demodulate(std::span<const double> received, const LinkConfig& config, double alpha) {
    if (alpha == 0.0 || !std::isfinite(alpha)) throw DomainError("demodulate: alpha must be finite and non-zero");
    const auto two_n = static_cast<std::size_t>(config.carriers());
    if (received.size() != two_n) throw ArgumentError("demodulate: expected 2N samples");
    std::vector<Complex> work(received.begin(), received.end());
    fft::transform(work, fft::Direction::forward);
    const double scale = 1.0 / (static_cast<double>(two_n) * alpha * config.q0);
    std::vector<Complex> out(static_cast<std::size_t>(config.data_carriers()));
    for (std::size_t k = 1; k <= out.size(); ++k) out[k - 1] = work[k] * scale;
    return out;
}

} // namespace lodc::ofdm
