// lodc_sim: fit / analyze / sweep / montecarlo front end.
//
// Exit status: 0 ok, 1 other failure, 2 input error, 3 fit failure,
// 4 series convergence failure, 5 sweep degraded (< 90% of rows ok).

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lodc/bussgang.hpp"
#include "lodc/cli/config.hpp"
#include "lodc/cli/figures.hpp"
#include "lodc/error.hpp"
#include "lodc/montecarlo.hpp"
#include "lodc/physics.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace lodc;

enum Exit : int { ok = 0, other = 1, input = 2, fit_failed = 3, no_convergence = 4, degraded = 5 };

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
    auto* opt = cmd->add_option("--config", c.config, "RunConfig JSON document");
    if (config_required) opt->required();
    cmd->add_option("--seed", c.seed, "base seed (overrides the config)");
    cmd->add_option("--threads", c.threads, "worker threads (default: LODC_SIM_THREADS, then hardware)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", c.out, "output directory");
}

int resolve_threads(const Common& c, const cli::RunConfig& cfg) {
    if (c.threads) return *c.threads;
    if (const char* env = std::getenv("LODC_SIM_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
        throw cli::ConfigError("LODC_SIM_THREADS must be a positive integer");
    }
    if (cfg.threads) return *cfg.threads;
    return montecarlo::default_threads();
}

cli::RunConfig load(const Common& c) {
    cli::RunConfig cfg = c.config.empty() ? cli::parse_run_config(json{{"schema_version", cli::kSchemaVersion}})
                                          : cli::load_run_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    cfg.threads = resolve_threads(c, cfg);
    if (c.out) cfg.output_dir = *c.out;
    return cfg;
}

fs::path output_path(const cli::RunConfig& cfg, const std::string& name) {
    const fs::path dir = cfg.output_dir.value_or(".");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw cli::ConfigError("cannot create output directory '" + dir.string() + "'");
    return dir / name;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw cli::ConfigError("cannot write '" + path.string() + "'");
    out << text;
}

json number_or_inf(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

json model_json(const amam::AmAmModel& m) { return {{"a", m.a()}, {"b", m.b()}, {"x0", m.x0()}}; }

int cmd_fit(const Common& c, const std::string& input_arg) {
    const auto cfg = load(c);
    const std::string csv = !input_arg.empty() ? input_arg : cfg.input.value_or("");
    if (csv.empty()) throw cli::ConfigError("fit: no input CSV given");

    physics::AmAmCurve curve;
    try {
        curve = physics::read_amam_csv(csv);
    } catch (const physics::CsvError& e) {
        std::cerr << "lodc_sim fit: " << csv << ":" << e.line() << ": " << e.what() << "\n";
        return input;
    }
    physics::FitResult fit;
    try {
        fit = physics::fit_amam(curve);
    } catch (const physics::FitError& e) {
        std::cerr << "lodc_sim fit: " << e.what() << "\n";
        return fit_failed;
    }
    json doc{{"schema_version", cli::kSchemaVersion},
             {"model", model_json(fit.model)},
             {"diagnostics",
              {{"residual_rms", fit.residual_rms},
               {"noise_estimate", fit.noise_estimate},
               {"x0_initial", fit.x0_initial},
               {"iterations", fit.iterations},
               {"points", fit.points}}},
             {"input", csv}};
    const auto path = output_path(cfg, "fit.json");
    write_text(path, doc.dump(2) + "\n");
    std::cout << "fit: a=" << fit.model.a() << " b=" << fit.model.b() << " x0=" << fit.model.x0()
              << " rms=" << fit.residual_rms << " -> " << path.string() << "\n";
    return ok;
}

int cmd_analyze(const Common& c) {
    const auto cfg = load(c);
    const auto op = cfg.operating_point();
    try {
        op.validate(cfg.model);
    } catch (const DomainError& e) {
        throw cli::ConfigError(e.what());
    }
    const auto an = bussgang::analyze(cfg.model, op, cfg.max_order);
    const auto& link = cfg.link;
    const auto s = bussgang::snr(an, op, link.n_half, link.sigma_r2);
    const auto ber = bussgang::theoretical_ber(an, link.m_qam, link.q0, link.n_half, link.sigma_r2);
    const auto exact = bussgang::exact_ber(an, link.m_qam, link.q0, link.n_half, link.sigma_r2);

    json doc{{"schema_version", cli::kSchemaVersion},
             {"model", model_json(cfg.model)},
             {"operating_point", {{"x_lo", op.x_lo}, {"delta_x", op.delta_x}, {"sigma_t2", op.sigma_t2}}},
             {"link", {{"n_half", link.n_half}, {"m_qam", link.m_qam}, {"q0", link.q0}, {"sigma_r2", link.sigma_r2}}},
             {"alpha", an.alpha},
             {"e_nd", an.e_nd},
             {"e_sd2", an.e_sd2},
             {"sigma_d2", an.sigma_d2},
             {"order_used", an.order_used},
             {"converged", an.converged},
             {"final_rel_change", an.final_rel_change},
             {"snr",
              {{"snr_d", number_or_inf(s.snr_d)},
               {"snr_r", number_or_inf(s.snr_r)},
               {"snr_d_k", number_or_inf(s.snr_d_k)},
               {"snr_r_k", number_or_inf(s.snr_r_k)},
               {"snr_d_db", number_or_inf(bussgang::to_db(s.snr_d))},
               {"snr_r_db", number_or_inf(bussgang::to_db(s.snr_r))}}},
             {"ber", {{"ber_d_k", ber.ber_d_k}, {"ber_r_k", ber.ber_r_k}}},
             {"ber_exact", {{"ber_d_k", exact.ber_d_k}, {"ber_r_k", exact.ber_r_k}}}};
    if (link.sigma_r2 > 0.0) doc["eb_n0_db"] = bussgang::eb_over_n0_db(op.sigma_t2, link.m_qam, link.sigma_r2);

    const auto path = output_path(cfg, "analysis.json");
    write_text(path, doc.dump(2) + "\n");
    std::cout << "analyze: alpha=" << an.alpha << " sigma_d2=" << an.sigma_d2 << " order=" << an.order_used
              << " converged=" << (an.converged ? "true" : "false") << " -> " << path.string() << "\n";
    return ok;
}

int cmd_sweep(const Common& c) {
    const auto cfg = load(c);
    std::vector<std::pair<std::string, cli::Table>> tables;
    if (!cfg.figures.empty()) {
        for (const auto& tag : cfg.figures) tables.emplace_back(tag, cli::figure_table(cfg, tag));
    } else if (cfg.sweep) {
        if (cfg.sweep->grid.empty()) throw cli::ConfigError("sweep: empty grid");
        if (cfg.sweep->axis.empty()) throw cli::ConfigError("sweep: no axis declared");
        tables.emplace_back("sweep", cli::custom_sweep_table(cfg));
    } else {
        throw cli::ConfigError("sweep: config declares neither `figure` nor `sweep`");
    }

    int status = ok;
    for (const auto& [name, table] : tables) {
        const auto path = output_path(cfg, name + ".csv");
        std::ofstream out(path, std::ios::binary);
        if (!out) throw cli::ConfigError("cannot write '" + path.string() + "'");
        table.write_csv(out);
        std::cout << "sweep: " << name << " rows=" << table.rows.size() << " failed=" << table.failed << " -> "
                  << path.string() << "\n";
        if (table.ok_fraction() < 0.9) status = degraded;
    }
    return status;
}

int cmd_montecarlo(const Common& c) {
    const auto cfg = load(c);
    auto plan = cfg.trial_plan();
    plan.sweep_axis.reset();
    const auto r = montecarlo::run_link_trials(plan);

    json doc{{"schema_version", cli::kSchemaVersion},
             {"seed", cfg.seed},
             {"n_frames", plan.n_frames},
             {"identity_channel", plan.identity_channel},
             {"model", model_json(cfg.model)},
             {"link",
              {{"n_half", plan.config.n_half},
               {"m_qam", plan.config.m_qam},
               {"q0", plan.config.q0},
               {"delta_x", plan.config.delta_x},
               {"x_lo", plan.config.x_lo},
               {"sigma_r2", plan.config.sigma_r2}}},
             {"ber_empirical", r.ber_empirical},
             {"ber_stderr", r.ber_stderr},
             {"bit_errors", r.bit_errors},
             {"bits_total", r.bits_total},
             {"reliable", r.reliable},
             {"alpha_hat", r.alpha_hat},
             {"sigma_d2_hat", r.sigma_d2_hat},
             {"e_nd_hat", r.e_nd_hat},
             {"sigma_t2_hat", r.sigma_t2_hat},
             {"clip_fraction", r.clip_fraction},
             {"samples", r.samples}};
    if (!plan.identity_channel) {
        const auto op = plan.config.operating_point();
        const auto an = bussgang::analyze(cfg.model, op, cfg.max_order);
        const auto ber = bussgang::theoretical_ber(an, plan.config.m_qam, plan.config.q0, plan.config.n_half,
                                                   plan.config.sigma_r2);
        doc["analytic"] = {{"alpha", an.alpha},
                           {"sigma_d2", an.sigma_d2},
                           {"e_nd", an.e_nd},
                           {"sigma_t2", op.sigma_t2},
                           {"clip_fraction", 2.0 * specfun::q_function(op.delta_x / op.sigma_t())},
                           {"ber_theory", ber.ber_r_k}};
    }
    const auto path = output_path(cfg, "montecarlo.json");
    write_text(path, doc.dump(2) + "\n");
    std::cout << "montecarlo: ber=" << r.ber_empirical << " (" << r.bit_errors << "/" << r.bits_total << ") -> "
              << path.string() << "\n";
    std::cerr << "wall_time " << r.wall_time << " s\n";
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"LODC-OFDM link analysis over a Rydberg sensor AM-AM model"};
    app.require_subcommand(1);

    Common fit_opts, analyze_opts, sweep_opts, mc_opts;
    std::string fit_input;
    auto* fit = app.add_subcommand("fit", "fit (a, b, x0) to an AM-AM curve CSV");
    add_common(fit, fit_opts, false);
    fit->add_option("input", fit_input, "curve CSV (field_mV_per_cm,response_norm)");
    auto* analyze = app.add_subcommand("analyze", "closed-form Bussgang analysis at one operating point");
    add_common(analyze, analyze_opts, true);
    auto* sweep = app.add_subcommand("sweep", "figure or custom sweep tables (CSV)");
    add_common(sweep, sweep_opts, true);
    auto* mc = app.add_subcommand("montecarlo", "end-to-end Monte Carlo link trial");
    add_common(mc, mc_opts, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : input;
    }

    try {
        if (*fit) return cmd_fit(fit_opts, fit_input);
        if (*analyze) return cmd_analyze(analyze_opts);
        if (*sweep) return cmd_sweep(sweep_opts);
        if (*mc) return cmd_montecarlo(mc_opts);
    } catch (const ConvergenceError& e) {
        std::cerr << "lodc_sim: " << e.what() << "\npartial sums:";
        for (double v : e.partial_sums()) std::cerr << ' ' << v;
        std::cerr << "\n";
        return no_convergence;
    } catch (const physics::FitError& e) {
        std::cerr << "lodc_sim: " << e.what() << "\n";
        return fit_failed;
    } catch (const ArgumentError& e) {
        std::cerr << "lodc_sim: " << e.what() << "\n";
        return input;
    } catch (const DomainError& e) {
        std::cerr << "lodc_sim: " << e.what() << "\n";
        return input;
    } catch (const std::exception& e) {
        std::cerr << "lodc_sim: " << e.what() << "\n";
        return other;
    }
    return other;
}
