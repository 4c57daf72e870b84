#pragma once

// RunConfig: the JSON document driving the lodc_sim tool. Every object is
// checked against its allowed keys before use; unknown keys are input errors.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lodc/amam.hpp"
#include "lodc/bussgang.hpp"
#include "lodc/error.hpp"
#include "lodc/montecarlo.hpp"
#include "lodc/ofdm.hpp"

namespace lodc::cli {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// Raised for anything wrong with the configuration document; maps to exit 2.
class ConfigError : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

struct SweepSpec {
    std::string axis;
    std::vector<double> grid;
    bool empirical = false;
    std::optional<bool> empirical_set;
};

struct RunConfig {
    amam::AmAmModel model{3.5609, 55.1572, 0.0};
    ofdm::LinkConfig link{};
    std::optional<double> sigma_t2;  // overrides the link-derived power in `analyze`
    int max_order = bussgang::kDefaultMaxOrder;
    std::uint64_t seed = 1;
    std::optional<int> threads;
    std::int64_t n_frames = 10000;
    bool identity_channel = false;
    std::vector<std::string> figures;
    std::optional<SweepSpec> sweep;
    std::optional<std::string> input;
    std::optional<std::string> output_dir;

    bussgang::OperatingPoint operating_point() const {
        return {link.x_lo, link.delta_x, sigma_t2 ? *sigma_t2 : link.total_signal_power()};
    }

    montecarlo::TrialPlan trial_plan() const {
        montecarlo::TrialPlan p;
        p.config = link;
        p.model = model;
        p.n_frames = n_frames;
        p.base_seed = seed;
        p.identity_channel = identity_channel;
        p.threads = threads.value_or(1);
        p.max_order = max_order;
        if (sweep) p.sweep_axis = montecarlo::SweepAxis{sweep->axis, sweep->grid};
        return p;
    }
};

inline const std::set<std::string>& figure_tags() {
    static const std::set<std::string> tags{"fig7", "fig8", "fig9", "fig10", "fig11", "fig12", "fig13"};
    return tags;
}

namespace detail {

inline void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& item : obj.items()) {
        bool ok = false;
        for (const char* k : allowed) ok = ok || item.key() == k;
        if (!ok) throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
}

inline double number(const json& obj, const char* key, const std::string& where, double fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(where + "." + key + ": must be finite");
    return d;
}

inline std::int64_t integer(const json& obj, const char* key, const std::string& where, std::int64_t fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
    return v.get<std::int64_t>();
}

inline bool boolean(const json& obj, const char* key, const std::string& where, bool fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_boolean()) throw ConfigError(where + "." + key + ": expected true or false");
    return v.get<bool>();
}

inline std::string string(const json& obj, const char* key, const std::string& where) {
    const auto& v = obj.at(key);
    if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
    return v.get<std::string>();
}

// Either an explicit array or {"start", "stop", "step"} (inclusive of stop).
inline std::vector<double> grid(const json& v, const std::string& where) {
    std::vector<double> out;
    if (v.is_array()) {
        for (const auto& x : v) {
            if (!x.is_number()) throw ConfigError(where + ": grid entries must be numbers");
            out.push_back(x.get<double>());
        }
        return out;
    }
    check_keys(v, where, {"start", "stop", "step"});
    for (const char* k : {"start", "stop", "step"}) {
        if (!v.contains(k)) throw ConfigError(where + ": missing '" + k + "'");
    }
    const double start = number(v, "start", where, 0.0);
    const double stop = number(v, "stop", where, 0.0);
    const double step = number(v, "step", where, 0.0);
    if (!(step > 0.0)) throw ConfigError(where + ".step: must be > 0");
    const auto n = static_cast<std::int64_t>(std::floor((stop - start) / step + 1e-9));
    if (n > 1000000) throw ConfigError(where + ": grid too large");
    for (std::int64_t i = 0; i <= n; ++i) out.push_back(start + static_cast<double>(i) * step);
    return out;
}

} // namespace detail

inline RunConfig parse_run_config(const json& doc) {
    using namespace detail;
    check_keys(doc, "config", {"schema_version", "model", "link", "sigma_t2", "max_order", "seed", "threads",
                               "montecarlo", "figure", "sweep", "input", "output"});
    if (!doc.contains("schema_version")) throw ConfigError("config: missing schema_version");
    if (integer(doc, "schema_version", "config", 0) != kSchemaVersion) {
        throw ConfigError("config: unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
    }

    RunConfig cfg;
    try {
        if (doc.contains("model")) {
            const auto& m = doc.at("model");
            check_keys(m, "model", {"a", "b", "x0"});
            cfg.model = amam::AmAmModel(number(m, "a", "model", 3.5609), number(m, "b", "model", 55.1572),
                                        number(m, "x0", "model", 0.0));
        }
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }

    if (doc.contains("link")) {
        const auto& l = doc.at("link");
        check_keys(l, "link", {"n_half", "m_qam", "q0", "delta_x", "x_lo", "x0", "sigma_r2"});
        auto& k = cfg.link;
        k.n_half = static_cast<int>(integer(l, "n_half", "link", k.n_half));
        k.m_qam = static_cast<int>(integer(l, "m_qam", "link", k.m_qam));
        k.q0 = number(l, "q0", "link", k.q0);
        k.delta_x = number(l, "delta_x", "link", k.delta_x);
        k.x_lo = number(l, "x_lo", "link", k.x_lo);
        k.x0 = number(l, "x0", "link", cfg.model.x0());
        k.sigma_r2 = number(l, "sigma_r2", "link", k.sigma_r2);
    } else {
        cfg.link.x0 = cfg.model.x0();
    }
    try {
        cfg.link.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }

    if (doc.contains("sigma_t2")) {
        cfg.sigma_t2 = number(doc, "sigma_t2", "config", 0.0);
        if (!(*cfg.sigma_t2 > 0.0)) throw ConfigError("config.sigma_t2: must be > 0");
    }
    cfg.max_order = static_cast<int>(integer(doc, "max_order", "config", cfg.max_order));
    if (cfg.max_order < 1 || cfg.max_order > 200) throw ConfigError("config.max_order: must be in 1..200");

    if (doc.contains("seed")) {
        const auto& s = doc.at("seed");
        if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
            throw ConfigError("config.seed: expected a non-negative integer");
        }
        cfg.seed = s.get<std::uint64_t>();
    }
    if (doc.contains("threads")) {
        cfg.threads = static_cast<int>(integer(doc, "threads", "config", 1));
        if (*cfg.threads < 1) throw ConfigError("config.threads: must be >= 1");
    }

    if (doc.contains("montecarlo")) {
        const auto& m = doc.at("montecarlo");
        check_keys(m, "montecarlo", {"n_frames", "identity_channel"});
        cfg.n_frames = integer(m, "n_frames", "montecarlo", cfg.n_frames);
        if (cfg.n_frames < 1) throw ConfigError("montecarlo.n_frames: must be >= 1");
        cfg.identity_channel = boolean(m, "identity_channel", "montecarlo", false);
    }

    if (doc.contains("figure")) {
        const auto& f = doc.at("figure");
        std::vector<std::string> tags;
        if (f.is_string()) {
            tags.push_back(f.get<std::string>());
        } else if (f.is_array()) {
            for (const auto& t : f) {
                if (!t.is_string()) throw ConfigError("config.figure: entries must be strings");
                tags.push_back(t.get<std::string>());
            }
        } else {
            throw ConfigError("config.figure: expected a tag or a list of tags");
        }
        for (const auto& t : tags) {
            if (!figure_tags().count(t)) throw ConfigError("config.figure: unknown tag '" + t + "'");
        }
        cfg.figures = tags;
    }

    if (doc.contains("sweep")) {
        const auto& s = doc.at("sweep");
        check_keys(s, "sweep", {"axis", "grid", "empirical"});
        SweepSpec spec;
        if (s.contains("axis")) spec.axis = string(s, "axis", "sweep");
        if (s.contains("grid")) spec.grid = grid(s.at("grid"), "sweep.grid");
        if (s.contains("empirical")) spec.empirical_set = boolean(s, "empirical", "sweep", false);
        spec.empirical = spec.empirical_set.value_or(false);
        cfg.sweep = spec;
    }

    if (doc.contains("input")) cfg.input = string(doc, "input", "config");
    if (doc.contains("output")) {
        const auto& o = doc.at("output");
        check_keys(o, "output", {"dir"});
        if (o.contains("dir")) cfg.output_dir = string(o, "dir", "output");
    }
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_run_config(doc);
}

} // namespace lodc::cli
