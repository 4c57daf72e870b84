#pragma once

// Four-level ladder model of the Rydberg sensor: |1> -probe- |2> -coupling- |3> -RF- |4>.
//
// Frequencies (Rabi, detunings, decay rates) are angular, in rad/s. Matrices are
// returned in units of hbar, i.e. H/hbar, so the master equation reads
//     d rho/dt = -i [H/hbar, rho] + L[rho].

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lodc/amam.hpp"
#include "lodc/error.hpp"

namespace lodc::physics {

using Complex = std::complex<double>;
using Matrix4c = Eigen::Matrix<Complex, 4, 4>;
using Liouvillian = Eigen::Matrix<Complex, 16, 16>;

// CODATA 2018, SI.
namespace constants {
inline constexpr double hbar = 1.054571817e-34;       // J s
inline constexpr double boltzmann = 1.380649e-23;     // J/K
inline constexpr double epsilon0 = 8.8541878128e-12;  // F/m
inline constexpr double rb87_mass = 1.443160648e-25;  // kg
} // namespace constants

// 1 mV/cm = 0.1 V/m.
inline constexpr double volts_per_metre(double mv_per_cm) { return 0.1 * mv_per_cm; }

struct CellConstants {
    double n0 = 1.0e15;          // atom density, m^-3
    double mu_p = 2.534e-29;     // probe transition dipole, C m
    double length = 0.05;        // cell length, m
    double lambda_p = 780.0e-9;  // probe wavelength, m
    double lambda_c = 480.0e-9;  // coupling wavelength, m
    double temperature = 303.15; // K
    double mass = constants::rb87_mass;

    void validate() const {
        for (double v : {n0, mu_p, length, lambda_p, lambda_c, temperature, mass}) {
            if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("CellConstants: all constants must be positive");
        }
    }
};

struct FourLevelSystem {
    double omega_p = 0.0;
    double omega_c = 0.0;
    double omega_rf = 0.0;
    double delta_p = 0.0;
    double delta_c = 0.0;
    double delta_rf = 0.0;
    double gamma2 = 2.0 * std::numbers::pi * 6.0666e6;
    double gamma3 = 0.0;
    double gamma4 = 0.0;
    CellConstants cell{};

    void validate() const {
        if (omega_p < 0.0 || omega_c < 0.0 || omega_rf < 0.0) throw DomainError("FourLevelSystem: Rabi frequencies must be >= 0");
        if (!(gamma2 > 0.0)) throw DomainError("FourLevelSystem: gamma2 must be > 0");
        if (gamma3 < 0.0 || gamma4 < 0.0) throw DomainError("FourLevelSystem: gamma3, gamma4 must be >= 0");
        for (double v : {omega_p, omega_c, omega_rf, delta_p, delta_c, delta_rf, gamma2, gamma3, gamma4}) {
            if (!std::isfinite(v)) throw DomainError("FourLevelSystem: non-finite parameter");
        }
    }
};

/// Rabi frequency |E| mu / hbar for a field given in mV/cm.
inline double rabi_frequency(double field_mv_per_cm, double dipole) {
    return std::abs(volts_per_metre(field_mv_per_cm)) * dipole / constants::hbar;
}

/// Rotating-wave Hamiltonian divided by hbar.
inline Matrix4c hamiltonian(const FourLevelSystem& sys) {
    sys.validate();
    Matrix4c h = Matrix4c::Zero();
    h(0, 1) = h(1, 0) = sys.omega_p;
    h(1, 2) = h(2, 1) = sys.omega_c;
    h(2, 3) = h(3, 2) = sys.omega_rf;
    h(1, 1) = -2.0 * sys.delta_p;
    h(2, 2) = -2.0 * (sys.delta_p + sys.delta_c);
    h(3, 3) = -2.0 * (sys.delta_p + sys.delta_c + sys.delta_rf);
    return 0.5 * h;
}

// Row-major vectorisation: rho(i, j) -> index 4 i + j.
inline constexpr int vec_index(int i, int j) { return 4 * i + j; }

/// Superoperator of the master equation for an arbitrary Hermitian H/hbar with
/// cascade decay |2>->|1> (gamma2), |3>->|2> (gamma3), |4>->|3> (gamma4), each a
/// collapse operator sqrt(G)|lower><upper|.
inline Liouvillian liouvillian(const Matrix4c& h, double gamma2, double gamma3, double gamma4) {
    Liouvillian l = Liouvillian::Zero();
    const Complex i_unit{0.0, 1.0};

    // -i [H, rho]: (H rho)_{ij} = sum_k H_ik rho_kj, (rho H)_{ij} = sum_k rho_ik H_kj.
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            for (int k = 0; k < 4; ++k) {
                l(vec_index(i, j), vec_index(k, j)) += -i_unit * h(i, k);
                l(vec_index(i, j), vec_index(i, k)) += i_unit * h(k, j);
            }
        }
    }

    const std::pair<int, int> channels[] = {{0, 1}, {1, 2}, {2, 3}};
    const double rates[] = {gamma2, gamma3, gamma4};
    for (int c = 0; c < 3; ++c) {
        const double g = rates[c];
        if (g == 0.0) continue;
        const auto [lower, upper] = channels[c];
        // C rho C^dag feeds population from upper to lower.
        l(vec_index(lower, lower), vec_index(upper, upper)) += g;
        // -1/2 {C^dag C, rho}, C^dag C = G |upper><upper|.
        for (int k = 0; k < 4; ++k) {
            l(vec_index(upper, k), vec_index(upper, k)) -= 0.5 * g;
            l(vec_index(k, upper), vec_index(k, upper)) -= 0.5 * g;
        }
    }
    return l;
}

inline Liouvillian liouvillian(const FourLevelSystem& sys) {
    return liouvillian(hamiltonian(sys), sys.gamma2, sys.gamma3, sys.gamma4);
}

/// Null vector of the Liouvillian with the |1><1| population equation replaced
/// by tr(rho) = 1.
inline Matrix4c steady_state_rho(const Liouvillian& l) {
    Eigen::ColPivHouseholderQR<Liouvillian> qr(l);
    qr.setThreshold(1e-11);
    if (qr.rank() < 15) {
        std::ostringstream msg;
        msg << "steady_state_rho: Liouvillian rank " << qr.rank()
            << " < 15, steady state is not unique (isolated levels without decay?)";
        throw ModelError(msg.str());
    }

    Liouvillian a = l;
    Eigen::Matrix<Complex, 16, 1> rhs = Eigen::Matrix<Complex, 16, 1>::Zero();
    a.row(0).setZero();
    for (int k = 0; k < 4; ++k) a(0, vec_index(k, k)) = 1.0;
    rhs(0) = 1.0;

    const Eigen::Matrix<Complex, 16, 1> v = a.fullPivLu().solve(rhs);
    Matrix4c rho;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) rho(i, j) = v(vec_index(i, j));
    }
    return 0.5 * (rho + rho.adjoint());
}

inline Matrix4c steady_state_rho(const FourLevelSystem& sys) { return steady_state_rho(liouvillian(sys)); }

/// Resonant, gamma3 = gamma4 = 0 closed form of rho_21.
inline Complex rho21_resonant_closed_form(const FourLevelSystem& sys) {
    sys.validate();
    if (sys.delta_p != 0.0 || sys.delta_c != 0.0 || sys.delta_rf != 0.0) {
        throw DomainError("rho21_resonant_closed_form: detunings must be zero");
    }
    const double op2 = sys.omega_p * sys.omega_p;
    const double oc2 = sys.omega_c * sys.omega_c;
    const double orf2 = sys.omega_rf * sys.omega_rf;
    const double g2 = sys.gamma2;
    const double den = 2.0 * op2 * op2 + 2.0 * oc2 * op2 + (g2 * g2 + 2.0 * op2) * orf2;
    if (den == 0.0) throw DomainError("rho21_resonant_closed_form: all Rabi frequencies are zero");
    return {0.0, -g2 * sys.omega_p * orf2 / den};
}

/// Probe and coupling detunings seen by an atom moving at velocity v (m/s).
/// The beams counter-propagate, so the shifts have opposite sign.
inline std::pair<double, double> doppler_shifted_detunings(const FourLevelSystem& sys, double velocity) {
    const double kp = 2.0 * std::numbers::pi / sys.cell.lambda_p;
    const double kc = 2.0 * std::numbers::pi / sys.cell.lambda_c;
    return {sys.delta_p - kp * velocity, sys.delta_c + kc * velocity};
}

/// Most probable thermal speed parameter u = sqrt(kB T / m).
inline double thermal_velocity(const CellConstants& cell) {
    return std::sqrt(constants::boltzmann * cell.temperature / cell.mass);
}

struct DopplerOptions {
    int initial_nodes = 201;     // odd: composite Simpson
    double rel_tol = 1e-6;
    int max_nodes = 409601;
};

/// (1 / (sqrt(pi) u)) int_{-3u}^{3u} rho_21(Delta_p', Delta_c') exp(-v^2/u^2) dv.
///
/// Composite Simpson on fixed nodes; the node count doubles until two successive
/// estimates agree to rel_tol. Each node is an independent steady-state solve.
inline Complex doppler_averaged_rho21(const FourLevelSystem& sys, const DopplerOptions& opts = {}) {
    sys.validate();
    sys.cell.validate();
    if (opts.initial_nodes < 3 || opts.initial_nodes % 2 == 0) {
        throw ArgumentError("doppler_averaged_rho21: initial_nodes must be odd and >= 3");
    }
    const double u = thermal_velocity(sys.cell);
    const double lo = -3.0 * u;
    const double hi = 3.0 * u;

    auto integrand = [&](double v) {
        FourLevelSystem shifted = sys;
        std::tie(shifted.delta_p, shifted.delta_c) = doppler_shifted_detunings(sys, v);
        const double w = std::exp(-(v * v) / (u * u));
        return steady_state_rho(shifted)(1, 0) * w;
    };

    auto simpson = [&](int nodes) {
        const int intervals = nodes - 1;
        const double h = (hi - lo) / intervals;
        Complex acc = integrand(lo) + integrand(hi);
        for (int k = 1; k < intervals; ++k) acc += (k % 2 == 1 ? 4.0 : 2.0) * integrand(lo + k * h);
        return acc * (h / 3.0) / (std::sqrt(std::numbers::pi) * u);
    };

    int nodes = opts.initial_nodes;
    Complex prev = simpson(nodes);
    while (true) {
        const int next_nodes = 2 * (nodes - 1) + 1;
        if (next_nodes > opts.max_nodes) {
            throw NumericalError("doppler_averaged_rho21: quadrature did not converge within max_nodes");
        }
        const Complex next = simpson(next_nodes);
        const double scale = std::max(std::abs(next), std::numeric_limits<double>::min());
        if (std::abs(next - prev) <= opts.rel_tol * scale) return next;
        prev = next;
        nodes = next_nodes;
    }
}

/// Probe transmittance exp((2 N0 mu_p^2 k L / (eps0 hbar Omega_p)) Im rho_21).
inline double transmittance(const FourLevelSystem& sys, Complex rho21) {
    sys.cell.validate();
    if (!(sys.omega_p > 0.0)) throw DomainError("transmittance: omega_p must be > 0");
    if (rho21.imag() > 0.0) throw DomainError("transmittance: Im(rho21) must be <= 0 for an absorbing medium");
    const auto& c = sys.cell;
    const double k = 2.0 * std::numbers::pi / c.lambda_p;
    const double scale = 2.0 * c.n0 * c.mu_p * c.mu_p * k * c.length / (constants::epsilon0 * constants::hbar * sys.omega_p);
    return std::exp(scale * rho21.imag());
}

enum class CurveSource { measured, simulated };

struct CurvePoint {
    double field = 0.0;     // mV/cm
    double response = 0.0;  // normalised, [0, 1]
};

struct AmAmCurve {
    std::vector<CurvePoint> points;
    CurveSource source = CurveSource::measured;

    void validate() const {
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto& p = points[i];
            if (!std::isfinite(p.field) || !std::isfinite(p.response)) throw DomainError("AmAmCurve: non-finite value");
            if (p.response < 0.0 || p.response > 1.0) throw DomainError("AmAmCurve: responses must lie in [0, 1]");
            if (i > 0 && !(p.field > points[i - 1].field)) throw DomainError("AmAmCurve: fields must be strictly increasing");
        }
    }
};

/// AM-AM curve of the four-level model on a field grid (mV/cm). The RF Rabi
/// frequency follows the field through `dipole_rf`; responses are normalised to the
/// zero-field transmittance.
inline AmAmCurve simulate_amam_curve(const FourLevelSystem& sys, const std::vector<double>& field_grid, double dipole_rf,
                                     bool doppler = false) {
    if (!(dipole_rf > 0.0)) throw DomainError("simulate_amam_curve: dipole_rf must be > 0");
    auto response_at = [&](double field) {
        FourLevelSystem s = sys;
        s.omega_rf = rabi_frequency(field, dipole_rf);
        const Complex rho21 = doppler ? doppler_averaged_rho21(s) : rho21_resonant_closed_form(s);
        return transmittance(s, rho21);
    };
    const double t0 = response_at(0.0);

    AmAmCurve curve;
    curve.source = CurveSource::simulated;
    curve.points.reserve(field_grid.size());
    for (double field : field_grid) curve.points.push_back({field, response_at(field) / t0});
    curve.validate();
    return curve;
}

// ---------------------------------------------------------------------------
// Fitting (a, b, x0) to a measured curve.

class FitError : public Error {
public:
    FitError(const std::string& what, std::vector<double> last_iterate = {})
        : Error(what), last_iterate_(std::move(last_iterate)) {}
    // (a, b, x0) at the point of failure, when an iterate exists.
    const std::vector<double>& last_iterate() const noexcept { return last_iterate_; }

private:
    std::vector<double> last_iterate_;
};

struct FitOptions {
    int max_iterations = 500;
    double step_tol = 1e-13;
};

struct FitResult {
    amam::AmAmModel model{1.0, 1.0, 0.0};
    double residual_rms = 0.0;
    double noise_estimate = 0.0;
    double x0_initial = 0.0;
    int iterations = 0;
    std::size_t points = 0;
};

namespace detail {

struct FitParams {
    double log_a;
    double log_b;
    double x0;
};

inline double model_response(const FitParams& p, double field) {
    const double z = std::max(field - p.x0, 0.0);
    const double z2 = z * z;
    return std::exp(-std::exp(p.log_a) * z2 / (std::exp(p.log_b) + z2));
}

inline double sum_squares(const FitParams& p, const std::vector<CurvePoint>& pts) {
    double s = 0.0;
    for (const auto& q : pts) {
        const double r = model_response(p, q.field) - q.response;
        s += r * r;
    }
    return s;
}

} // namespace detail

/// Least-squares fit of F[field - x0] to a normalised curve.
///
/// x0 is seeded from the flat leading region (first point that drops below
/// 1 - 3 sigma_noise, sigma_noise from the first three points), (a, b) from the
/// curve depth and half-depth field. All three parameters are then refined
/// jointly by Levenberg-Marquardt on (log a, log b, x0), with x0 kept >= 0.
inline FitResult fit_amam(const AmAmCurve& curve, const FitOptions& opts = {}) {
    curve.validate();
    const auto& pts = curve.points;
    if (pts.size() < 8) throw FitError("fit_amam: need at least 8 points");
    double rmin = 1.0;
    double rmax = 0.0;
    for (const auto& q : pts) {
        rmin = std::min(rmin, q.response);
        rmax = std::max(rmax, q.response);
    }
    if (rmax - rmin < 0.3) throw FitError("fit_amam: response range below 0.3, curve is degenerate");

    double noise = 0.0;
    for (std::size_t i = 0; i < 3; ++i) noise += (pts[i].response - 1.0) * (pts[i].response - 1.0);
    noise = std::sqrt(noise / 3.0);

    std::size_t drop = 0;
    while (drop < pts.size() && pts[drop].response >= 1.0 - 3.0 * noise) ++drop;
    const double x0_init = drop == 0 ? 0.0 : std::max(pts[drop - 1].field, 0.0);

    const double a_init = -std::log(std::max(rmin, 1e-12));
    const double half = std::exp(-0.5 * a_init);
    double half_field = pts.back().field;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (pts[i].response <= half && pts[i - 1].response > half) {
            const double t = (pts[i - 1].response - half) / (pts[i - 1].response - pts[i].response);
            half_field = pts[i - 1].field + t * (pts[i].field - pts[i - 1].field);
            break;
        }
    }
    const double b_init = std::max(half_field - x0_init, 1e-3 * (pts.back().field - pts.front().field));

    detail::FitParams p{std::log(a_init), 2.0 * std::log(b_init), x0_init};
    double cost = detail::sum_squares(p, pts);
    double lambda = 1e-3;
    int iter = 0;
    bool converged = false;

    for (; iter < opts.max_iterations && !converged; ++iter) {
        Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
        Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
        const double a = std::exp(p.log_a);
        const double b = std::exp(p.log_b);
        for (const auto& q : pts) {
            const double z = std::max(q.field - p.x0, 0.0);
            const double z2 = z * z;
            const double den = b + z2;
            const double f = std::exp(-a * z2 / den);
            Eigen::Vector3d j;
            j(0) = -a * z2 / den * f;
            j(1) = a * b * z2 / (den * den) * f;
            j(2) = 2.0 * a * b * z / (den * den) * f;
            const double r = f - q.response;
            jtj += j * j.transpose();
            jtr += j * r;
        }

        // Marquardt damping scaled by the diagonal; retry with more damping until
        // the cost does not increase.
        bool accepted = false;
        for (int attempt = 0; attempt < 60 && !accepted; ++attempt) {
            Eigen::Matrix3d damped = jtj;
            for (int d = 0; d < 3; ++d) damped(d, d) += lambda * std::max(jtj(d, d), 1e-300);
            Eigen::Vector3d step = damped.ldlt().solve(-jtr);
            if (p.x0 <= 0.0 && step(2) < 0.0) {
                // x0 pinned at its bound: solve for (log a, log b) alone
                const Eigen::Vector2d reduced = damped.topLeftCorner<2, 2>().ldlt().solve(-jtr.head<2>());
                step << reduced(0), reduced(1), 0.0;
            }
            detail::FitParams trial{p.log_a + step(0), p.log_b + step(1), std::max(p.x0 + step(2), 0.0)};
            const double trial_cost = detail::sum_squares(trial, pts);
            if (std::isfinite(trial_cost) && trial_cost <= cost) {
                const double moved = std::abs(trial.log_a - p.log_a) + std::abs(trial.log_b - p.log_b) +
                                     std::abs(trial.x0 - p.x0) / (1.0 + std::abs(p.x0));
                p = trial;
                const double prev_cost = cost;
                cost = trial_cost;
                lambda = std::max(lambda * 0.3, 1e-12);
                accepted = true;
                if (moved < opts.step_tol || prev_cost - cost <= 1e-15 * prev_cost) converged = true;
            } else {
                lambda *= 10.0;
            }
        }
        if (!accepted) converged = true;  // no descent direction left: at a minimum to machine precision
    }

    if (!converged) {
        throw FitError("fit_amam: no convergence within iteration cap", {std::exp(p.log_a), std::exp(p.log_b), p.x0});
    }

    FitResult out;
    out.model = amam::AmAmModel(std::exp(p.log_a), std::exp(p.log_b), p.x0);
    out.residual_rms = std::sqrt(cost / static_cast<double>(pts.size()));
    out.noise_estimate = noise;
    out.x0_initial = x0_init;
    out.iterations = iter;
    out.points = pts.size();
    return out;
}

// ---------------------------------------------------------------------------
// AmAmCurve CSV: header `field_mV_per_cm,response_norm`, '.' decimals.

class CsvError : public Error {
public:
    CsvError(const std::string& what, std::size_t line) : Error(what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

inline constexpr const char* kCurveCsvHeader = "field_mV_per_cm,response_norm";

inline AmAmCurve parse_amam_csv(std::istream& in) {
    AmAmCurve curve;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    auto trim = [](std::string s) {
        const auto first = s.find_first_not_of(" \t\r\n");
        if (first == std::string::npos) return std::string{};
        const auto last = s.find_last_not_of(" \t\r\n");
        return s.substr(first, last - first + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (!header_seen) {
            if (t != kCurveCsvHeader) throw CsvError("expected header '" + std::string(kCurveCsvHeader) + "'", lineno);
            header_seen = true;
            continue;
        }
        const auto comma = t.find(',');
        if (comma == std::string::npos || t.find(',', comma + 1) != std::string::npos) {
            throw CsvError("expected exactly two columns", lineno);
        }
        auto parse = [&](const std::string& s) {
            const std::string v = trim(s);
            std::size_t used = 0;
            double d = 0.0;
            try {
                d = std::stod(v, &used);
            } catch (const std::exception&) {
                throw CsvError("not a number: '" + v + "'", lineno);
            }
            if (used != v.size() || !std::isfinite(d)) throw CsvError("not a number: '" + v + "'", lineno);
            return d;
        };
        const double field = parse(t.substr(0, comma));
        const double response = parse(t.substr(comma + 1));
        if (!curve.points.empty() && !(field > curve.points.back().field)) {
            throw CsvError("fields must be strictly increasing", lineno);
        }
        if (response < 0.0 || response > 1.0) throw CsvError("response outside [0, 1]", lineno);
        curve.points.push_back({field, response});
    }
    if (!header_seen) throw CsvError("empty file", lineno == 0 ? 1 : lineno);
    if (curve.points.empty()) throw CsvError("no data rows", lineno);
    return curve;
}

inline AmAmCurve read_amam_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open '" + path + "'", 0);
    return parse_amam_csv(in);
}

inline void write_amam_csv(std::ostream& out, const AmAmCurve& curve) {
    out << kCurveCsvHeader << '\n';
    out.precision(17);
    for (const auto& p : curve.points) out << p.field << ',' << p.response << '\n';
}

} // namespace lodc::physics
