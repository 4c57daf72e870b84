#pragma once

// Monte Carlo validation of the analytic link model.
//
// Work is cut into fixed-size blocks indexed by frame (or sample group); every
// block draws from its own Philox stream and fills its own accumulator slot, and
// slots are combined by an ordered pairwise reduction. Results are therefore
// identical for any thread count.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lodc/amam.hpp"
#include "lodc/bussgang.hpp"
#include "lodc/error.hpp"
#include "lodc/ofdm.hpp"
#include "lodc/rng.hpp"

namespace lodc::montecarlo {

inline int default_threads() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

/// Runs body(i) for i in [0, count) on up to `threads` workers. The first
/// exception thrown by any task is rethrown after all workers stop.
template <class Body>
void parallel_for(std::size_t count, int threads, Body&& body) {
    const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next.store(count);
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

/// Ordered pairwise reduction: ((0+1)+(2+3))+... independent of scheduling.
template <class T>
T pairwise_reduce(std::vector<T> items) {
    if (items.empty()) return T{};
    while (items.size() > 1) {
        std::vector<T> next;
        next.reserve((items.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < items.size(); i += 2) next.push_back(items[i] + items[i + 1]);
        if (items.size() % 2 == 1) next.push_back(items.back());
        items.swap(next);
    }
    return items.front();
}

// ---------------------------------------------------------------------------
// Link trials

struct SweepAxis {
    std::string name;
    std::vector<double> grid;
};

struct TrialPlan {
    ofdm::LinkConfig config{};
    amam::AmAmModel model{3.5609, 55.1572, 0.0};
    std::int64_t n_frames = 10000;
    std::uint64_t base_seed = 1;
    std::optional<SweepAxis> sweep_axis;
    bool identity_channel = false;  // G replaced by pass-through
    int threads = 1;
    int max_order = bussgang::kDefaultMaxOrder;
    std::int64_t frames_per_block = 64;

    void validate() const {
        config.validate();
        if (n_frames < 1) throw DomainError("TrialPlan: n_frames must be >= 1");
        if (frames_per_block < 1) throw DomainError("TrialPlan: frames_per_block must be >= 1");
        if (sweep_axis) {
            const auto& g = sweep_axis->grid;
            if (g.empty()) throw ArgumentError("TrialPlan: sweep grid is empty");
            const bool up = std::adjacent_find(g.begin(), g.end(), std::greater_equal<>()) == g.end();
            const bool down = std::adjacent_find(g.begin(), g.end(), std::less_equal<>()) == g.end();
            if (!up && !down) throw ArgumentError("TrialPlan: sweep grid must be strictly monotone");
        }
    }
};

struct LinkTrialResult {
    double ber_empirical = 0.0;
    double ber_stderr = 0.0;
    std::int64_t bit_errors = 0;
    std::int64_t bits_total = 0;
    bool reliable = false;  // at least 10 bit errors counted
    double alpha_used = 0.0;
    double alpha_hat = 0.0;
    double sigma_d2_hat = 0.0;
    double e_nd_hat = 0.0;
    double sigma_t2_hat = 0.0;
    double clip_fraction = 0.0;
    std::int64_t samples = 0;
    double wall_time = 0.0;  // seconds
};

namespace detail {

struct LinkAccumulator {
    double st = 0.0;
    double st2 = 0.0;
    double sd = 0.0;
    double sd2 = 0.0;
    double sdst = 0.0;
    std::int64_t n = 0;
    std::int64_t clipped = 0;
    std::int64_t bit_errors = 0;
    std::int64_t bits = 0;

    LinkAccumulator operator+(const LinkAccumulator& o) const {
        return {st + o.st,       st2 + o.st2, sd + o.sd,           sd2 + o.sd2,    sdst + o.sdst,
                n + o.n,         clipped + o.clipped, bit_errors + o.bit_errors, bits + o.bits};
    }
};

template <class Gain>
LinkAccumulator run_block(const TrialPlan& plan, const Gain& gain, double alpha, std::int64_t first, std::int64_t last) {
    const auto& cfg = plan.config;
    const int k = cfg.bits_per_symbol();
    const auto nbits = static_cast<std::size_t>(cfg.data_carriers() * k);
    LinkAccumulator acc;
    ofdm::Bits bits(nbits);
    for (std::int64_t f = first; f < last; ++f) {
        const auto frame_index = static_cast<std::uint64_t>(f);
        rng::Philox bit_src(plan.base_seed, rng::Stream::bits, frame_index);
        rng::Philox noise_src(plan.base_seed, rng::Stream::noise, frame_index);
        for (std::size_t i = 0; i < nbits; i += 32) {
            const std::uint32_t w = bit_src.next_u32();
            for (std::size_t b = 0; b < 32 && i + b < nbits; ++b) bits[i + b] = static_cast<std::uint8_t>((w >> b) & 1u);
        }
        const auto frame = ofdm::build_frame(ofdm::qam_map(bits, cfg.m_qam), cfg);
        std::vector<double> distorted(frame.time_samples.size());
        for (std::size_t i = 0; i < distorted.size(); ++i) {
            const double s = frame.time_samples[i];
            const double d = gain(s);
            distorted[i] = d;
            acc.st += s;
            acc.st2 += s * s;
            acc.sd += d;
            acc.sd2 += d * d;
            acc.sdst += d * s;
            if (std::abs(s) > cfg.delta_x) ++acc.clipped;
        }
        acc.n += static_cast<std::int64_t>(distorted.size());
        const auto received = ofdm::channel(std::span<const double>(distorted), ofdm::IdentityGain{}, cfg.sigma_r2, noise_src);
        const auto decided = ofdm::qam_demap(ofdm::demodulate(received, cfg, alpha), cfg.m_qam);
        for (std::size_t i = 0; i < nbits; ++i) acc.bit_errors += decided[i] != bits[i];
        acc.bits += static_cast<std::int64_t>(nbits);
    }
    return acc;
}

} // namespace detail

/// Analytic alpha used for compensation: 1 for the pass-through channel,
/// otherwise the Bussgang gain at the configuration's own signal power.
inline double compensation_alpha(const TrialPlan& plan) {
    if (plan.identity_channel) return 1.0;
    return bussgang::analyze(plan.model, plan.config.operating_point(), plan.max_order).alpha;
}

inline LinkTrialResult run_link_trials(const TrialPlan& plan) {
    plan.validate();
    const auto start = std::chrono::steady_clock::now();
    const double alpha = compensation_alpha(plan);

    const std::int64_t blocks = (plan.n_frames + plan.frames_per_block - 1) / plan.frames_per_block;
    std::vector<detail::LinkAccumulator> parts(static_cast<std::size_t>(blocks));
    auto run = [&](const auto& gain) {
        parallel_for(parts.size(), plan.threads, [&](std::size_t b) {
            const std::int64_t first = static_cast<std::int64_t>(b) * plan.frames_per_block;
            const std::int64_t last = std::min(first + plan.frames_per_block, plan.n_frames);
            parts[b] = detail::run_block(plan, gain, alpha, first, last);
        });
    };
    if (plan.identity_channel) {
        run(ofdm::IdentityGain{});
    } else {
        run(ofdm::CompositeGain(plan.model, plan.config.x_lo, plan.config.delta_x));
    }
    const auto acc = pairwise_reduce(std::move(parts));

    LinkTrialResult r;
    r.alpha_used = alpha;
    r.bit_errors = acc.bit_errors;
    r.bits_total = acc.bits;
    r.ber_empirical = static_cast<double>(acc.bit_errors) / static_cast<double>(acc.bits);
    r.ber_stderr = std::sqrt(r.ber_empirical * (1.0 - r.ber_empirical) / static_cast<double>(acc.bits));
    r.reliable = acc.bit_errors >= 10;
    const double n = static_cast<double>(acc.n);
    r.samples = acc.n;
    r.alpha_hat = acc.sdst / acc.st2;
    r.e_nd_hat = acc.sd / n;
    r.sigma_t2_hat = acc.st2 / n - (acc.st / n) * (acc.st / n);
    const double m = acc.sd / n - r.alpha_hat * acc.st / n;
    const double second = (acc.sd2 - 2.0 * r.alpha_hat * acc.sdst + r.alpha_hat * r.alpha_hat * acc.st2) / n;
    r.sigma_d2_hat = std::max(second - m * m, 0.0);
    r.clip_fraction = static_cast<double>(acc.clipped) / n;
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

// ---------------------------------------------------------------------------
// Direct Gaussian sampling of the Bussgang moments

struct Estimate {
    double value = 0.0;
    double se = 0.0;  // standard error
};

struct BussgangEstimate {
    Estimate alpha;
    Estimate e_nd;
    Estimate e_sd2;
    Estimate sigma_d2;
    Estimate orthogonality;  // E{(G[s] - alpha_ref s) s}
    Estimate clip_high;      // P(s > dx)
    Estimate clip_low;       // P(s < -dx)
    std::int64_t samples = 0;
};

struct EstimateOptions {
    int groups = 100;  // jackknife groups
    int threads = 1;
};

namespace detail {

struct MomentSums {
    double s = 0.0;
    double s2 = 0.0;
    double g = 0.0;
    double g2 = 0.0;
    double gs = 0.0;
    double n = 0.0;
    double hi = 0.0;
    double lo = 0.0;

    MomentSums operator+(const MomentSums& o) const {
        return {s + o.s, s2 + o.s2, g + o.g, g2 + o.g2, gs + o.gs, n + o.n, hi + o.hi, lo + o.lo};
    }
    MomentSums operator-(const MomentSums& o) const {
        return {s - o.s, s2 - o.s2, g - o.g, g2 - o.g2, gs - o.gs, n - o.n, hi - o.hi, lo - o.lo};
    }
};

// Leave-one-group-out jackknife of a statistic of the pooled sums.
template <class Stat>
Estimate jackknife(const std::vector<MomentSums>& groups, const MomentSums& total, Stat stat) {
    const double full = stat(total);
    const auto g = static_cast<double>(groups.size());
    std::vector<double> loo(groups.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        loo[i] = stat(total - groups[i]);
        mean += loo[i];
    }
    mean /= g;
    double ss = 0.0;
    for (double v : loo) ss += (v - mean) * (v - mean);
    return {full, std::sqrt((g - 1.0) / g * ss)};
}

} // namespace detail

/// Draws s ~ N(0, sigma_t2) n_samples times, applies `gain`, and returns moment
/// estimates with jackknife standard errors. `alpha_ref` sets the gain used in
/// the orthogonality statistic; `delta_x` the clip level counted.
template <class Gain>
BussgangEstimate estimate_bussgang(const Gain& gain, double sigma_t2, double delta_x, std::int64_t n_samples,
                                   std::uint64_t seed, double alpha_ref, const EstimateOptions& opts = {}) {
    if (n_samples < 10000) throw DomainError("estimate_bussgang: n_samples must be >= 1e4");
    if (!(sigma_t2 > 0.0)) throw DomainError("estimate_bussgang: sigma_t2 must be > 0");
    if (opts.groups < 2) throw ArgumentError("estimate_bussgang: need at least 2 jackknife groups");
    const double sigma = std::sqrt(sigma_t2);
    const auto groups = static_cast<std::size_t>(opts.groups);
    std::vector<detail::MomentSums> parts(groups);
    parallel_for(groups, opts.threads, [&](std::size_t g) {
        const std::int64_t first = n_samples * static_cast<std::int64_t>(g) / opts.groups;
        const std::int64_t last = n_samples * static_cast<std::int64_t>(g + 1) / opts.groups;
        rng::Philox src(seed, rng::Stream::samples, g);
        detail::MomentSums acc;
        for (std::int64_t i = first; i < last; ++i) {
            const double s = sigma * src.normal();
            const double v = gain(s);
            acc.s += s;
            acc.s2 += s * s;
            acc.g += v;
            acc.g2 += v * v;
            acc.gs += v * s;
            acc.hi += s > delta_x;
            acc.lo += s < -delta_x;
        }
        acc.n = static_cast<double>(last - first);
        parts[g] = acc;
    });
    const auto total = pairwise_reduce(parts);

    using detail::MomentSums;
    auto alpha = [](const MomentSums& m) { return m.gs / m.s2; };
    BussgangEstimate out;
    out.samples = n_samples;
    out.alpha = detail::jackknife(parts, total, alpha);
    out.e_nd = detail::jackknife(parts, total, [](const MomentSums& m) { return m.g / m.n; });
    out.e_sd2 = detail::jackknife(parts, total, [](const MomentSums& m) { return m.g2 / m.n; });
    out.sigma_d2 = detail::jackknife(parts, total, [&](const MomentSums& m) {
        const double a = alpha(m);
        const double mean = (m.g - a * m.s) / m.n;
        return (m.g2 - 2.0 * a * m.gs + a * a * m.s2) / m.n - mean * mean;
    });
    out.orthogonality = detail::jackknife(parts, total, [&](const MomentSums& m) { return (m.gs - alpha_ref * m.s2) / m.n; });
    out.clip_high = detail::jackknife(parts, total, [](const MomentSums& m) { return m.hi / m.n; });
    out.clip_low = detail::jackknife(parts, total, [](const MomentSums& m) { return m.lo / m.n; });
    return out;
}

inline BussgangEstimate estimate_bussgang(const amam::AmAmModel& model, const bussgang::OperatingPoint& op,
                                          std::int64_t n_samples, std::uint64_t seed, double alpha_ref,
                                          const EstimateOptions& opts = {}) {
    op.validate();
    return estimate_bussgang(ofdm::CompositeGain(model, op), op.sigma_t2, op.delta_x, n_samples, seed, alpha_ref, opts);
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
    double axis = 0.0;
    std::vector<std::pair<std::string, double>> values;
    bool ok = true;
    std::string status = "ok";

    double get(const std::string& key) const {
        for (const auto& [k, v] : values) {
            if (k == key) return v;
        }
        return std::numeric_limits<double>::quiet_NaN();
    }
};

/// Evaluates `point` on every grid value. A library error in one row marks that
/// row failed and the sweep continues; rows come back in grid order.
template <class Point>
std::vector<SweepRow> sweep_grid(const std::vector<double>& grid, Point&& point, int threads = 1) {
    if (grid.empty()) throw ArgumentError("sweep: empty grid");
    std::vector<SweepRow> rows(grid.size());
    parallel_for(grid.size(), threads, [&](std::size_t i) {
        SweepRow row;
        row.axis = grid[i];
        try {
            row.values = point(grid[i]);
        } catch (const Error& e) {
            row.ok = false;
            row.status = e.what();
        }
        rows[i] = std::move(row);
    });
    return rows;
}

/// Applies a named axis value to a copy of the plan. Supported axes: x_lo,
/// delta_x, q0, sigma_r2, eb_n0_db (sets sigma_r2 from the configuration's power).
inline TrialPlan apply_axis(TrialPlan plan, const std::string& axis, double value) {
    auto& c = plan.config;
    if (axis == "x_lo") {
        c.x_lo = value;
    } else if (axis == "delta_x") {
        c.delta_x = value;
    } else if (axis == "q0") {
        c.q0 = value;
    } else if (axis == "sigma_r2") {
        c.sigma_r2 = value;
    } else if (axis == "eb_n0_db") {
        c.sigma_r2 = bussgang::sigma_r2_for_eb_n0(value, c.total_signal_power(), c.m_qam);
    } else {
        throw ArgumentError("unknown sweep axis '" + axis + "'");
    }
    plan.sweep_axis.reset();
    return plan;
}

/// Analytic metrics (alpha, sigma_d2, SNRs in dB, theoretical BER) for every
/// axis value; empirical BER columns when `empirical` is set. Each row uses the
/// plan's seed offset by its grid index.
inline std::vector<SweepRow> sweep(const TrialPlan& plan, bool empirical) {
    plan.validate();
    if (!plan.sweep_axis) throw ArgumentError("sweep: plan has no sweep axis");
    const auto& axis = *plan.sweep_axis;
    std::vector<SweepRow> rows(axis.grid.size());
    for (std::size_t i = 0; i < axis.grid.size(); ++i) {
        SweepRow& row = rows[i];
        row.axis = axis.grid[i];
        try {
            TrialPlan p = apply_axis(plan, axis.name, axis.grid[i]);
            p.config.validate();
            const auto& c = p.config;
            const auto op = c.operating_point();
            const auto an = bussgang::analyze(p.model, op, p.max_order);
            const auto s = bussgang::snr(an, op, c.n_half, c.sigma_r2);
            const auto ber = bussgang::theoretical_ber(an, c.m_qam, c.q0, c.n_half, c.sigma_r2);
            row.values = {{"alpha", an.alpha},
                          {"sigma_d2", an.sigma_d2},
                          {"snr_d_db", bussgang::to_db(s.snr_d)},
                          {"snr_r_db", bussgang::to_db(s.snr_r)},
                          {"ber_theory", ber.ber_r_k}};
            if (empirical) {
                p.base_seed = plan.base_seed + i;
                const auto r = run_link_trials(p);
                row.values.emplace_back("ber_mc", r.ber_empirical);
                row.values.emplace_back("stderr", r.ber_stderr);
                row.values.emplace_back("bit_errors", static_cast<double>(r.bit_errors));
                if (!r.reliable) row.status = "few_errors";
            }
        } catch (const Error& e) {
            row.ok = false;
            row.status = e.what();
            row.values.clear();
        }
    }
    return rows;
}

} // namespace lodc::montecarlo
