#pragma once

// Command implementations behind the `ndc` executable.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ndc/ndc.hpp"

namespace ndc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kNumerical = 1, kUsage = 2 };

struct Options {
    std::string config;
    std::string data;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    bool strict = false;
    std::string mode;                   // identify
    std::vector<std::string> validate;  // compare
};

namespace detail {

inline RunConfig load(const Options& o) {
    if (o.config.empty()) throw ConfigError("", "--config is required");
    auto cfg = load_run_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    return cfg;
}

inline Dataset load_data(const Options& o) {
    if (o.data.empty()) throw ConfigError("", "--data is required");
    return read_dataset(o.data);
}

inline fs::path out_dir(const Options& o) {
    fs::path dir(o.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

inline void write_json(const fs::path& path, const json& j) { ndc::detail::write_atomically(path, j.dump(2) + "\n"); }

inline std::vector<double> times(std::size_t n, double dt) {
    std::vector<double> t(n);
    for (std::size_t k = 0; k < n; ++k) t[k] = static_cast<double>(k) * dt;
    return t;
}

template <std::size_t N>
json named(const std::array<double, N>& v, const std::array<const char*, N>& names) {
    json o = json::object();
    for (std::size_t i = 0; i < N; ++i) o[names[i]] = v[i];
    return o;
}

inline json physical_json(const NdcParams& p) {
    json j = {{"c_b", p.c_b}, {"c_s", p.c_s}, {"r_b", p.r_b}, {"r_s", p.r_s},
              {"r_1", p.r_1}, {"c_1", p.c_1}, {"capacity", p.total_capacity()}};
    j["r0"] = config_detail::to_json(p.r0);
    j["ocv"] = config_detail::to_json(p.ocv);
    return j;
}

inline json metrics_json(const FitMetrics& m) {
    return {{"rmse_v", m.rmse}, {"max_abs_v", m.max_abs}, {"max_abs_percent_error", m.max_abs_percent()}};
}

inline ComparisonModel require_model(const RunConfig& cfg) {
    if (!cfg.model) throw ConfigError("model", "missing required section");
    return *cfg.model;
}

inline std::vector<double> require_profile(const RunConfig& cfg) {
    if (cfg.profile.empty()) throw ConfigError("profile", "missing required section");
    try {
        return build_profile(cfg);
    } catch (const InvalidArgument& e) {
        throw ConfigError("profile", e.what());
    }
}

inline int report_truncation(const Dataset& data, bool strict) {
    if (data.meta.count("truncated") && data.meta.at("truncated") == "true") {
        std::cerr << "warning: simulation truncated at sample " << data.meta.at("truncated_at") << " ("
                  << data.meta.at("truncation") << ")\n";
        if (strict) return kNumerical;
    }
    return kOk;
}

}  // namespace detail

/// Noiseless response of the configured model; writes dataset.csv and states.csv.
inline int cmd_simulate(const Options& o) {
    const auto cfg = detail::load(o);
    const auto model = detail::require_model(cfg);
    const auto profile = detail::require_profile(cfg);
    const auto sim = simulate(model, profile, cfg.dt, cfg.soc0);
    if (sim.voltage.size() < 2) throw NumericalError("simulation truncated before two samples were produced");

    const auto dir = detail::out_dir(o);
    Dataset data = synthesize(model, profile, cfg.dt, cfg.soc0, 0.0, cfg.seed);
    write_dataset(dir / "dataset.csv", data);

    std::vector<NamedSeries> states = {{"current_a", data.current}, {"v_b", {}}, {"v_s", {}}, {"v_1", {}},
                                       {"soc", sim.soc},            {"voltage_v", sim.voltage}};
    for (const auto& s : sim.states) {
        states[1].values.push_back(s.v_b);
        states[2].values.push_back(s.v_s);
        states[3].values.push_back(s.v_1);
    }
    export_series(dir / "states.csv", detail::times(sim.voltage.size(), cfg.dt), states);
    std::cout << "simulate: " << sim.voltage.size() << " samples -> " << dir.string() << "\n";
    return detail::report_truncation(data, o.strict);
}

/// Noisy synthetic measurement; writes dataset.csv.
inline int cmd_generate(const Options& o) {
    const auto cfg = detail::load(o);
    const auto model = detail::require_model(cfg);
    const auto profile = detail::require_profile(cfg);
    Dataset data = synthesize(model, profile, cfg.dt, cfg.soc0, cfg.noise_std, cfg.seed);
    if (data.size() < 2) throw NumericalError("simulation truncated before two samples were produced");
    const auto dir = detail::out_dir(o);
    write_dataset(dir / "dataset.csv", data);
    std::cout << "generate: " << data.size() << " samples -> " << dir.string() << "\n";
    return detail::report_truncation(data, o.strict);
}

namespace detail {

inline int identify_cc_ocv(const RunConfig& cfg, const Dataset& data, const fs::path& dir) {
    const auto fit = cc::fit_soc_ocv(data);
    double net = 0.0;
    for (std::size_t k = 0; k + 1 < data.size(); ++k) net += data.current[k];
    const auto soc = soc_trajectory(fit.q_t, data.current, data.dt, net < 0.0 ? 1.0 : 0.0);
    std::vector<double> pred(data.size());
    for (std::size_t k = 0; k < data.size(); ++k) pred[k] = fit.ocv(soc[k]);
    const auto m = metrics(pred, data.voltage);

    const auto a = fit.ocv.coefficients();
    json report = {{"mode", "cc-ocv"},
                   {"ocv", config_detail::to_json(fit.ocv)},
                   {"coefficients", {a[0], a[1], a[2], a[3], a[4], a[5]}},
                   {"q_t", fit.q_t},
                   {"metrics", metrics_json(m)},
                   {"config", to_json(cfg)}};
    write_json(dir / "report.json", report);

    std::vector<double> grid(101), curve(101);
    for (std::size_t i = 0; i <= 100; ++i) {
        grid[i] = static_cast<double>(i) / 100.0;
        curve[i] = fit.ocv(grid[i]);
    }
    export_series(dir / "ocv_curve.csv", grid, {{"ocv_v", curve}});
    std::cout << "identify cc-ocv: q_t = " << fit.q_t << " C, rmse = " << m.rmse << " V\n";
    return kOk;
}

inline int identify_cc_impedance(const RunConfig& cfg, const Dataset& data, const fs::path& dir) {
    if (!cfg.cc) throw ConfigError("cc", "missing required section");
    const auto& c = *cfg.cc;
    std::optional<OcvPolynomial> ocv = c.ocv;
    if (!ocv && cfg.model) ocv = cfg.model->ocv();
    if (!ocv) throw ConfigError("cc.ocv", "no OCV polynomial given in cc.ocv or model");
    std::optional<double> q_t = c.q_t;
    if (!q_t && cfg.model) q_t = cfg.model->total_capacity();
    if (!q_t) throw ConfigError("cc.q_t", "no capacity given in cc.q_t or model");

    const auto fit = cc::fit_cc(data, *ocv, *q_t, c.bounds, c.initial, c.noise_cov_scale, c.options);
    const cc::CcProblem problem(data, *ocv, *q_t, c.noise_cov_scale);
    const auto pred = problem.predict(fit.theta);
    const auto m = metrics(pred, data.voltage);

    // Charge moved by the test itself, for comparison with the configured capacity.
    const double tested = std::abs(problem.current()) * data.dt * static_cast<double>(data.size());

    json report = {{"mode", "cc-impedance"},
                   {"theta", named(fit.theta.values, cc::CcTheta::names)},
                   {"beta1", problem.beta1()},
                   {"q_t", *q_t},
                   {"charge_moved_by_test", tested},
                   {"converged", fit.converged},
                   {"iterations", fit.iterations},
                   {"message", fit.message},
                   {"projected_gradient_norm", fit.projected_gradient_norm},
                   {"cost_trace", fit.cost_trace},
                   {"bounds",
                    {{"lower", named(c.bounds.lower, cc::CcTheta::names)},
                     {"upper", named(c.bounds.upper, cc::CcTheta::names)}}},
                   {"active_bounds", json::array()},
                   {"metrics", metrics_json(m)},
                   {"config", to_json(cfg)}};
    for (std::size_t i = 0; i < cc::kThetaSize; ++i)
        if (fit.at_lower[i] || fit.at_upper[i]) report["active_bounds"].push_back(cc::CcTheta::names[i]);
    try {
        report["physical"] = physical_json(cc::reconstruct_physical_cc(fit.theta, problem.beta1(), *ocv));
    } catch (const NumericalError& e) {
        report["physical"] = nullptr;
        report["physical_error"] = e.what();
    }
    write_json(dir / "report.json", report);
    export_series(dir / "fit.csv", times(data.size(), data.dt),
                  {{"measured_v", data.voltage}, {"predicted_v", pred}, {"percent_error", m.percent_error}});

    std::cout << "identify cc-impedance: q_t = " << *q_t << " C, charge moved by test = " << tested
              << " C, cost = " << fit.cost_trace.back() << ", " << fit.message << "\n";
    return fit.converged ? kOk : kNumerical;
}

inline wiener::MapObjective map_objective(const RunConfig& cfg, const Dataset& data) {
    if (!cfg.map) throw ConfigError("map", "missing required section");
    return wiener::MapObjective(data.current, data.voltage, cfg.map->prior, cfg.map->solver, data.soc0,
                                cfg.map->bounds);
}

inline json solver_json(const BfgsResult& r) {
    return {{"converged", r.converged},
            {"gradient_certified", r.gradient_certified},
            {"iterations", r.iterations()},
            {"restarts", r.restarts},
            {"message", r.message},
            {"cost_trace", r.cost_trace}};
}

inline int identify_map(const RunConfig& cfg, const Dataset& data, const fs::path& dir) {
    const auto objective = map_objective(cfg, data);
    const auto res = wiener::quasi_newton_solve(cfg.map->initial, objective);
    const auto pred = wiener::predict_voltage_wiener(res.theta, data.current, data.soc0, cfg.map->bounds);
    const auto m = metrics(pred, data.voltage);

    json report = {{"mode", "map"},
                   {"theta", named(res.theta.values, wiener::WienerTheta::names)},
                   {"gradient", named(res.gradient, wiener::WienerTheta::names)},
                   {"cost", res.cost},
                   {"phases", res.phases},
                   {"solver", solver_json(res.solver)},
                   {"prior", to_json(cfg)["map"]},
                   {"metrics", metrics_json(m)},
                   {"config", to_json(cfg)}};
    report["prior"] = {{"mean", report["prior"]["prior_mean"]}, {"std", report["prior"]["prior_std"]}};
    try {
        report["physical"] = physical_json(wiener::reconstruct_physical_wiener(res.theta, data.dt, cfg.map->bounds));
    } catch (const NumericalError& e) {
        report["physical"] = nullptr;
        report["physical_error"] = e.what();
    }
    write_json(dir / "report.json", report);
    export_series(dir / "fit.csv", times(data.size(), data.dt),
                  {{"measured_v", data.voltage}, {"predicted_v", pred}, {"percent_error", m.percent_error}});

    std::cout << "identify map: cost = " << res.cost << ", " << res.solver.iterations() << " iterations, "
              << res.solver.message << "\n";
    return res.solver.converged ? kOk : kNumerical;
}

}  // namespace detail

/// Parameter identification; writes report.json and a fit series.
inline int cmd_identify(const Options& o) {
    const auto cfg = detail::load(o);
    const auto data = detail::load_data(o);
    if (o.mode == "cc-ocv") return detail::identify_cc_ocv(cfg, data, detail::out_dir(o));
    if (o.mode == "cc-impedance") return detail::identify_cc_impedance(cfg, data, detail::out_dir(o));
    if (o.mode == "map") return detail::identify_map(cfg, data, detail::out_dir(o));
    throw ConfigError("", "unknown identify mode '" + o.mode + "' (cc-ocv, cc-impedance, map)");
}

/// Identifies every configured model on the training data and scores each
/// on the training and validation datasets.
inline int cmd_compare(const Options& o) {
    const auto cfg = detail::load(o);
    const auto train = detail::load_data(o);
    std::vector<std::pair<std::string, Dataset>> sets = {{"train", train}};
    json paths = {{"train", o.data}};
    for (std::size_t i = 0; i < o.validate.size(); ++i) {
        const auto label = "validate_" + std::to_string(i + 1);
        sets.emplace_back(label, read_dataset(o.validate[i]));
        paths[label] = o.validate[i];
    }
    const auto objective = detail::map_objective(cfg, train);
    const auto dir = detail::out_dir(o);

    std::vector<std::future<wiener::ComparisonFit>> jobs;
    for (auto kind : cfg.compare_models)
        jobs.push_back(std::async(std::launch::async, [&, kind] {
            return wiener::identify_model(kind, cfg.map->initial, objective, train.dt);
        }));
    std::vector<wiener::ComparisonFit> fits;
    for (auto& j : jobs) fits.push_back(j.get());

    std::ostringstream table;
    table << "dataset,model,rmse_v,max_abs_v,max_abs_percent_error\n";
    json models = json::array();
    bool all_converged = true;
    for (const auto& [name, data] : sets) {
        std::vector<NamedSeries> errors;
        for (const auto& fit : fits) {
            const auto pred = predict(fit.model, data.current, data.dt, data.soc0);
            const auto m = metrics(pred, data.voltage);
            const auto label = std::string(wiener::to_string(fit.kind));
            table << name << ',' << label << ',' << ndc::detail::format_double(m.rmse) << ','
                  << ndc::detail::format_double(m.max_abs) << ',' << ndc::detail::format_double(m.max_abs_percent())
                  << '\n';
            errors.push_back({label, m.percent_error});
        }
        export_series(dir / ("errors_" + name + ".csv"), detail::times(data.size(), data.dt), errors);
    }
    std::vector<double> grid(101);
    std::vector<NamedSeries> curves;
    for (std::size_t i = 0; i <= 100; ++i) grid[i] = static_cast<double>(i) / 100.0;
    for (const auto& fit : fits) {
        NamedSeries c{std::string(wiener::to_string(fit.kind)), {}};
        for (double soc : grid) c.values.push_back(fit.model.ocv()(soc));
        curves.push_back(std::move(c));
        all_converged = all_converged && fit.map.solver.converged;
        models.push_back({{"model", wiener::to_string(fit.kind)},
                          {"theta", detail::named(fit.map.theta.values, wiener::WienerTheta::names)},
                          {"cost", fit.map.cost},
                          {"solver", detail::solver_json(fit.map.solver)},
                          {"parameters", config_detail::to_json(fit.model)}});
    }
    ndc::detail::write_atomically(dir / "comparison.csv", table.str());
    export_series(dir / "ocv_curves.csv", grid, curves);
    json report = {{"datasets", paths}, {"models", models}, {"config", to_json(cfg)}};
    detail::write_json(dir / "report.json", report);

    std::cout << table.str();
    return all_converged ? kOk : kNumerical;
}

namespace detail {

inline void add_common(CLI::App& sub, Options& o, bool data, bool strict) {
    sub.add_option("--config", o.config, "Run configuration (JSON)")->required();
    if (data) sub.add_option("--data", o.data, "Dataset CSV")->required();
    sub.add_option("--out", o.out, "Output directory")->capture_default_str();
    sub.add_option("--seed", o.seed, "Overrides the configured seed");
    if (strict) sub.add_flag("--strict", o.strict, "Exit 1 if the simulation hits a cutoff");
}

inline std::string flag_summary(const CLI::App& app) {
    std::string s = "Flags per command:\n";
    for (const auto* sub : app.get_subcommands({})) {
        s += "  " + sub->get_name() + ":";
        for (const auto* opt : sub->get_options())
            if (opt->get_name() != "--help" && opt->get_name() != "-h") s += " " + opt->get_name();
        s += "\n";
    }
    s += "Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.";
    return s;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Nonlinear double-capacitor battery model: simulation and identification"};
    app.require_subcommand(1);
    Options o;

    auto* sim = app.add_subcommand("simulate", "Noiseless model response");
    detail::add_common(*sim, o, false, true);
    auto* gen = app.add_subcommand("generate", "Synthetic noisy dataset");
    detail::add_common(*gen, o, false, true);
    auto* ident = app.add_subcommand("identify", "Parameter identification");
    ident->add_option("mode", o.mode, "cc-ocv | cc-impedance | map")
        ->required()
        ->check(CLI::IsMember({"cc-ocv", "cc-impedance", "map"}));
    detail::add_common(*ident, o, true, false);
    auto* cmp = app.add_subcommand("compare", "Identify and score rint, thevenin, basic_ndc and ndc");
    detail::add_common(*cmp, o, true, false);
    cmp->add_option("--validate", o.validate, "Validation dataset CSV (repeatable)");
    app.footer(detail::flag_summary(app));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*sim) return cmd_simulate(o);
        if (*gen) return cmd_generate(o);
        if (*ident) return cmd_identify(o);
        return cmd_compare(o);
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
}

}  // namespace ndc::cli
