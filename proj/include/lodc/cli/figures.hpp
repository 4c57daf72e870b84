#pragma once

// Figure presets: each tag expands to a fixed sweep and yields a CSV table.
//
//   fig7   alpha partial sums vs Taylor order, x_lo = 10, four powers
//   fig8   sigma_d^2 partial sums vs Taylor order, same points
//   fig9   SNR_d vs 10 log10 sigma_t^2, x_lo in {5, 10, 15}
//   fig10  BER vs x_lo, M in {4, 16, 64}, sigma_r = 0
//   fig11  SNR_d and SNR_r vs x_lo, four powers
//   fig12  BER vs x_lo, M = 4, several sigma_r^2
//   fig13  BER vs Eb/Nr, M in {4, 16, 64}, x_lo in {5, 10, 15}

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "lodc/bussgang.hpp"
#include "lodc/cli/config.hpp"
#include "lodc/error.hpp"
#include "lodc/montecarlo.hpp"

namespace lodc::cli {

inline const std::vector<double>& fig_powers() {
    static const std::vector<double> p{0.5, 2.0163, 10.0813, 42.3413};
    return p;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::size_t failed = 0;

    double ok_fraction() const {
        return rows.empty() ? 0.0 : 1.0 - static_cast<double>(failed) / static_cast<double>(rows.size());
    }

    void write_csv(std::ostream& out) const {
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
            out << '\n';
        };
        line(header);
        for (const auto& r : rows) line(r);
    }
};

inline std::string fmt(double v) {
    if (std::isnan(v)) return "";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string fmt(long long v) { return std::to_string(v); }

// CSV-safe status text.
inline std::string status_text(const std::string& s) {
    std::string out;
    for (char c : s) out += (c == ',' || c == '\n' || c == '\r' || c == '"') ? ' ' : c;
    return out;
}

namespace detail {

inline std::vector<double> range(double start, double stop, double step) {
    std::vector<double> g;
    const auto n = static_cast<int>(std::floor((stop - start) / step + 1e-9));
    for (int i = 0; i <= n; ++i) g.push_back(start + i * step);
    return g;
}

// Adds one row; a library error fills the metric cells empty and the status
// column with the message.
template <class Fill>
void add_row(Table& t, std::vector<std::string> lead, Fill&& fill) {
    const std::size_t metrics = t.header.size() - lead.size() - 1;
    std::vector<std::string> cells;
    std::string status = "ok";
    try {
        cells = fill();
        if (cells.size() == metrics + 1) {
            status = cells.back();
            cells.pop_back();
        }
    } catch (const Error& e) {
        cells.assign(metrics, "");
        status = status_text(e.what());
        ++t.failed;
    }
    lead.insert(lead.end(), cells.begin(), cells.end());
    lead.push_back(status);
    t.rows.push_back(std::move(lead));
}

// Analytic BER columns plus optional Monte Carlo ones for one link setting.
inline std::vector<std::string> ber_cells(const RunConfig& cfg, ofdm::LinkConfig link, bool empirical,
                                          std::uint64_t seed) {
    link.validate();
    const auto op = link.operating_point();
    const auto an = bussgang::analyze(cfg.model, op, cfg.max_order);
    const auto th = bussgang::theoretical_ber(an, link.m_qam, link.q0, link.n_half, link.sigma_r2);
    const auto ex = bussgang::exact_ber(an, link.m_qam, link.q0, link.n_half, link.sigma_r2);
    std::vector<std::string> cells{fmt(th.ber_r_k), fmt(ex.ber_r_k)};
    std::string status = "ok";
    if (empirical) {
        auto plan = cfg.trial_plan();
        plan.config = link;
        plan.sweep_axis.reset();
        plan.base_seed = seed;
        const auto r = montecarlo::run_link_trials(plan);
        cells.push_back(fmt(r.ber_empirical));
        cells.push_back(fmt(r.ber_stderr));
        cells.push_back(fmt(static_cast<long long>(r.bit_errors)));
        if (!r.reliable) status = "few_errors";
    } else {
        cells.insert(cells.end(), {"", "", ""});
    }
    cells.push_back(status);
    return cells;
}

inline bool empirical_default(const RunConfig& cfg) {
    return cfg.sweep && cfg.sweep->empirical_set ? *cfg.sweep->empirical_set : true;
}

} // namespace detail

inline Table figure_order(const RunConfig& cfg, bool sigma_d2) {
    Table t;
    t.header = {"order", "sigma_t2", sigma_d2 ? "sigma_d2" : "alpha", "status"};
    for (double p : fig_powers()) {
        const bussgang::OperatingPoint op{10.0, cfg.link.delta_x, p};
        bussgang::PartialSums sums;
        std::string error;
        try {
            sums = bussgang::partial_sums(cfg.model, op, cfg.max_order);
        } catch (const Error& e) {
            error = e.what();
        }
        for (int i = 0; i <= cfg.max_order; ++i) {
            detail::add_row(t, {fmt(static_cast<long long>(i)), fmt(p)}, [&]() -> std::vector<std::string> {
                if (!error.empty()) throw NumericalError(error);
                const auto k = static_cast<std::size_t>(i);
                return {fmt(sigma_d2 ? sums.sigma_d2[k] : sums.alpha[k])};
            });
        }
    }
    return t;
}

inline Table figure9(const RunConfig& cfg) {
    Table t;
    t.header = {"sigma_t2_db", "x_lo", "sigma_t2", "alpha", "sigma_d2", "snr_d_db", "status"};
    for (double x_lo : {5.0, 10.0, 15.0}) {
        for (double db : detail::range(-10.0, 20.0, 0.5)) {
            const double p = std::pow(10.0, db / 10.0);
            detail::add_row(t, {fmt(db), fmt(x_lo)}, [&]() -> std::vector<std::string> {
                const bussgang::OperatingPoint op{x_lo, cfg.link.delta_x, p};
                const auto an = bussgang::analyze(cfg.model, op, cfg.max_order);
                const auto s = bussgang::snr(an, op, cfg.link.n_half, 0.0);
                return {fmt(p), fmt(an.alpha), fmt(an.sigma_d2), fmt(bussgang::to_db(s.snr_d))};
            });
        }
    }
    return t;
}

inline Table figure10(const RunConfig& cfg) {
    Table t;
    t.header = {"x_lo", "m_qam", "ber_theory", "ber_exact", "ber_mc", "stderr", "bit_errors", "status"};
    const bool mc = detail::empirical_default(cfg);
    std::uint64_t row = 0;
    for (int m : {4, 16, 64}) {
        for (double x_lo : detail::range(5.0, 20.0, 1.0)) {
            auto link = cfg.link;
            link.m_qam = m;
            link.x_lo = x_lo;
            link.sigma_r2 = 0.0;
            detail::add_row(t, {fmt(x_lo), fmt(static_cast<long long>(m))},
                            [&] { return detail::ber_cells(cfg, link, mc, cfg.seed + row); });
            ++row;
        }
    }
    return t;
}

inline Table figure11(const RunConfig& cfg, double sigma_r2) {
    Table t;
    t.header = {"x_lo", "sigma_t2", "sigma_r2", "alpha", "sigma_d2", "snr_d_db", "snr_r_db", "status"};
    for (double p : fig_powers()) {
        for (double x_lo : detail::range(cfg.link.delta_x, 20.0, 0.5)) {
            detail::add_row(t, {fmt(x_lo), fmt(p), fmt(sigma_r2)}, [&]() -> std::vector<std::string> {
                const bussgang::OperatingPoint op{x_lo, cfg.link.delta_x, p};
                const auto an = bussgang::analyze(cfg.model, op, cfg.max_order);
                const auto s = bussgang::snr(an, op, cfg.link.n_half, sigma_r2);
                return {fmt(an.alpha), fmt(an.sigma_d2), fmt(bussgang::to_db(s.snr_d)), fmt(bussgang::to_db(s.snr_r))};
            });
        }
    }
    return t;
}

inline const std::vector<double>& fig12_noise_levels() {
    static const std::vector<double> v{0.0, 1e-6, 1e-5, 1e-4};
    return v;
}

inline Table figure12(const RunConfig& cfg) {
    Table t;
    t.header = {"x_lo", "sigma_r2", "ber_theory", "ber_exact", "ber_mc", "stderr", "bit_errors", "status"};
    const bool mc = detail::empirical_default(cfg);
    std::uint64_t row = 0;
    for (double sr2 : fig12_noise_levels()) {
        for (double x_lo : detail::range(5.0, 20.0, 1.0)) {
            auto link = cfg.link;
            link.m_qam = 4;
            link.x_lo = x_lo;
            link.sigma_r2 = sr2;
            detail::add_row(t, {fmt(x_lo), fmt(sr2)}, [&] { return detail::ber_cells(cfg, link, mc, cfg.seed + row); });
            ++row;
        }
    }
    return t;
}

inline Table figure13(const RunConfig& cfg) {
    Table t;
    t.header = {"eb_n0_db", "m_qam", "x_lo", "ber_theory", "ber_exact", "ber_mc", "stderr", "bit_errors", "status"};
    const bool mc = detail::empirical_default(cfg);
    std::uint64_t row = 0;
    for (int m : {4, 16, 64}) {
        for (double x_lo : {5.0, 10.0, 15.0}) {
            for (double db : detail::range(30.0, 70.0, 2.5)) {
                auto link = cfg.link;
                link.m_qam = m;
                link.x_lo = x_lo;
                link.sigma_r2 = bussgang::sigma_r2_for_eb_n0(db, link.total_signal_power(), m);
                detail::add_row(t, {fmt(db), fmt(static_cast<long long>(m)), fmt(x_lo)},
                                [&] { return detail::ber_cells(cfg, link, mc, cfg.seed + row); });
                ++row;
            }
        }
    }
    return t;
}

inline Table figure_table(const RunConfig& cfg, const std::string& tag) {
    if (tag == "fig7") return figure_order(cfg, false);
    if (tag == "fig8") return figure_order(cfg, true);
    if (tag == "fig9") return figure9(cfg);
    if (tag == "fig10") return figure10(cfg);
    if (tag == "fig11") return figure11(cfg, cfg.link.sigma_r2 > 0.0 ? cfg.link.sigma_r2 : 1e-4);
    if (tag == "fig12") return figure12(cfg);
    if (tag == "fig13") return figure13(cfg);
    throw ArgumentError("unknown figure tag '" + tag + "'");
}

/// Table for a custom `sweep` section (axis over the link parameters).
inline Table custom_sweep_table(const RunConfig& cfg) {
    if (!cfg.sweep || cfg.sweep->axis.empty()) throw ArgumentError("sweep: no axis declared");
    if (cfg.sweep->grid.empty()) throw ArgumentError("sweep: empty grid");
    const auto rows = montecarlo::sweep(cfg.trial_plan(), cfg.sweep->empirical);
    Table t;
    t.header = {cfg.sweep->axis, "alpha", "sigma_d2", "snr_d_db", "snr_r_db", "ber_theory"};
    if (cfg.sweep->empirical) t.header.insert(t.header.end(), {"ber_mc", "stderr", "bit_errors"});
    t.header.push_back("status");
    for (const auto& r : rows) {
        std::vector<std::string> cells{fmt(r.axis)};
        for (std::size_t i = 1; i + 1 < t.header.size(); ++i) cells.push_back(r.ok ? fmt(r.get(t.header[i])) : "");
        cells.push_back(status_text(r.status));
        if (!r.ok) ++t.failed;
        t.rows.push_back(std::move(cells));
    }
    return t;
}

} // namespace lodc::cli
