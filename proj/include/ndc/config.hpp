#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ndc/errors.hpp"
#include "ndc/ident_cc.hpp"
#include "ndc/map_ident.hpp"
#include "ndc/profile.hpp"
#include "ndc/simulate.hpp"

namespace ndc {

/// Schema violation in a run configuration. `key()` is the dotted path of
/// the offending entry.
class ConfigError : public InvalidArgument {
public:
    ConfigError(const std::string& key, const std::string& what)
        : InvalidArgument(key.empty() ? what : key + ": " + what), key_(key) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

struct CcRunConfig {
    std::optional<double> q_t;           // C; falls back to the model's capacity
    std::optional<OcvPolynomial> ocv;    // falls back to the model's OCV
    cc::CcTheta initial;
    cc::BoxBounds bounds;
    double noise_cov_scale = 1.0;        // V^2
    cc::CcFitOptions options;
};

struct MapRunConfig {
    wiener::WienerTheta initial;
    wiener::GaussianPrior prior;
    wiener::MapConfig solver;
    wiener::VoltageBounds bounds{3.2, 4.2};
};

struct RunConfig {
    std::uint64_t seed = 0;
    double dt = 1.0;
    double soc0 = 1.0;
    double noise_std = 0.0;  // V
    std::optional<ComparisonModel> model;
    std::vector<ProfileSpec> profile;
    std::optional<CcRunConfig> cc;
    std::optional<MapRunConfig> map;
    std::vector<wiener::ModelKind> compare_models = {wiener::ModelKind::rint, wiener::ModelKind::thevenin,
                                                     wiener::ModelKind::basic_ndc, wiener::ModelKind::ndc};
};

namespace config_detail {

using nlohmann::json;

// Object reader that remembers which keys were consumed so leftovers can be
// reported as unknown.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) throw ConfigError(child(key), "missing required key");
        return j_.at(key);
    }

    double number(const std::string& key) { return as_number(raw(key), child(key)); }

    double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

    std::string text(const std::string& key) {
        const auto& v = raw(key);
        if (!v.is_string()) throw ConfigError(child(key), "expected a string");
        return v.get<std::string>();
    }

    std::int64_t integer(const std::string& key, std::int64_t fallback) {
        if (!has(key)) return fallback;
        const auto& v = raw(key);
        if (!v.is_number_integer()) throw ConfigError(child(key), "expected an integer");
        return v.get<std::int64_t>();
    }

    Section section(const std::string& key) { return Section(raw(key), child(key)); }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(child(it.key()), "unknown key");
    }

    static double as_number(const json& v, const std::string& path) {
        if (!v.is_number()) throw ConfigError(path, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(path, "must be finite");
        return d;
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <std::size_t N>
std::array<double, N> named_vector(Section s, const std::array<const char*, N>& names) {
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = s.number(names[i]);
    s.finish();
    return out;
}

// Like named_vector, but null stands for an infinite standard deviation.
template <std::size_t N>
std::array<double, N> named_std_vector(Section s, const std::array<const char*, N>& names) {
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
        const auto& v = s.raw(names[i]);
        out[i] = v.is_null() ? std::numeric_limits<double>::infinity() : Section::as_number(v, s.child(names[i]));
    }
    s.finish();
    return out;
}

inline OcvPolynomial parse_ocv(Section s) {
    const auto& a = s.raw("alpha");
    if (!a.is_array() || a.size() != 4) throw ConfigError(s.child("alpha"), "expected 4 interior coefficients a1..a4");
    std::array<double, 4> interior{};
    for (std::size_t i = 0; i < 4; ++i) interior[i] = Section::as_number(a[i], s.child("alpha"));
    const double v_min = s.number("v_min");
    const double v_max = s.number("v_max");
    s.finish();
    try {
        return OcvPolynomial(v_min, interior, v_max);
    } catch (const InvalidArgument& e) {
        throw ConfigError(s.child("v_min"), e.what());
    }
}

inline SocR0Law parse_r0(Section& parent) {
    const auto& v = parent.raw("r0");
    if (v.is_number()) return SocR0Law::constant(Section::as_number(v, parent.child("r0")));
    Section s(v, parent.child("r0"));
    const auto& g = s.raw("gamma");
    if (!g.is_array() || g.size() != 5) throw ConfigError(s.child("gamma"), "expected 5 coefficients");
    std::array<double, 5> gamma{};
    for (std::size_t i = 0; i < 5; ++i) gamma[i] = Section::as_number(g[i], s.child("gamma"));
    s.finish();
    return SocR0Law::soc_dependent(gamma);
}

inline ComparisonModel parse_model(Section s) {
    const std::string type = s.text("type");
    try {
        if (type == "rint") {
            RintModel m{s.number("r0"), parse_ocv(s.section("ocv")), s.number("q_t")};
            s.finish();
            return m;
        }
        if (type == "thevenin") {
            TheveninModel m{s.number("r0"), s.number("r_1"), s.number("c_1"), parse_ocv(s.section("ocv")),
                            s.number("q_t")};
            s.finish();
            return m;
        }
        if (type == "ndc" || type == "basic_ndc") {
            NdcParams p;
            p.c_b = s.number("c_b");
            p.c_s = s.number("c_s");
            p.r_b = s.number("r_b");
            p.r_s = s.number("r_s", 0.0);
            p.r_1 = type == "ndc" ? s.number("r_1") : 0.0;
            p.c_1 = type == "ndc" ? s.number("c_1") : 1.0;
            p.r0 = parse_r0(s);
            p.ocv = parse_ocv(s.section("ocv"));
            s.finish();
            if (type == "ndc") return FullNdcModel{p};
            return BasicNdcModel{p};
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidArgument& e) {
        throw ConfigError(s.child("type"), e.what());
    }
    throw ConfigError(s.child("type"), "unknown model type '" + type + "' (rint, thevenin, basic_ndc, ndc)");
}

inline ProfileSpec parse_profile_segment(Section s) {
    const std::string type = s.text("type");
    ProfileSpec out;
    if (type == "constant") {
        out = ConstantProfile{s.number("current"), s.number("duration")};
    } else if (type == "pulse") {
        out = PulseProfile{s.number("current"), s.number("on_s"), s.number("off_s"),
                           static_cast<int>(s.integer("cycles", 1))};
    } else if (type == "drive_cycle") {
        const auto seed = s.integer("seed", 0);
        if (seed < 0) throw ConfigError(s.child("seed"), "must be >= 0");
        out = DriveCycleProfile{static_cast<std::uint64_t>(seed), s.number("i_min"), s.number("i_max"),
                                s.number("duration"), s.number("segment_s", 10.0)};
    } else {
        throw ConfigError(s.child("type"), "unknown profile type '" + type + "' (constant, pulse, drive_cycle)");
    }
    s.finish();
    return out;
}

inline std::vector<ProfileSpec> parse_profile(const json& j, const std::string& path) {
    std::vector<ProfileSpec> out;
    if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i)
            out.push_back(parse_profile_segment(Section(j[i], path + "[" + std::to_string(i) + "]")));
    } else {
        out.push_back(parse_profile_segment(Section(j, path)));
    }
    if (out.empty()) throw ConfigError(path, "profile has no segments");
    return out;
}

inline CcRunConfig parse_cc(Section s) {
    CcRunConfig c;
    if (s.has("q_t")) c.q_t = s.number("q_t");
    if (s.has("ocv")) c.ocv = parse_ocv(s.section("ocv"));
    c.initial.values = named_vector(s.section("initial"), cc::CcTheta::names);
    c.bounds.lower = named_vector(s.section("lower"), cc::CcTheta::names);
    c.bounds.upper = named_vector(s.section("upper"), cc::CcTheta::names);
    c.noise_cov_scale = s.number("noise_cov_scale", 1.0);
    c.options.max_iter = static_cast<int>(s.integer("max_iter", c.options.max_iter));
    c.options.gradient_tol = s.number("gradient_tol", c.options.gradient_tol);
    s.finish();
    try {
        c.bounds.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(s.child("lower"), e.what());
    }
    if (!c.bounds.strictly_contains(c.initial)) throw ConfigError(s.child("initial"), "must lie strictly inside the bounds");
    return c;
}

inline MapRunConfig parse_map(Section s) {
    MapRunConfig m;
    m.initial.values = named_vector(s.section("initial"), wiener::WienerTheta::names);
    m.prior.mean = named_vector(s.section("prior_mean"), wiener::WienerTheta::names);
    m.prior.std_dev = named_std_vector(s.section("prior_std"), wiener::WienerTheta::names);
    m.solver.c1 = s.number("c1", m.solver.c1);
    m.solver.c2 = s.number("c2", m.solver.c2);
    m.solver.tol = s.number("tol", m.solver.tol);
    m.solver.grad_tol = s.number("grad_tol", m.solver.grad_tol);
    m.solver.max_iter = static_cast<int>(s.integer("max_iter", m.solver.max_iter));
    m.solver.noise_var = s.number("noise_var", m.solver.noise_var);
    const auto warmup = s.integer("warmup", static_cast<std::int64_t>(m.solver.warmup));
    if (warmup < 0) throw ConfigError(s.child("warmup"), "must be >= 0");
    m.solver.warmup = static_cast<std::size_t>(warmup);
    m.bounds.v_min = s.number("v_min", m.bounds.v_min);
    m.bounds.v_max = s.number("v_max", m.bounds.v_max);
    s.finish();
    auto wrap = [&](const char* key, auto&& check) {
        try {
            check();
        } catch (const InvalidArgument& e) {
            throw ConfigError(s.child(key), e.what());
        }
    };
    wrap("initial", [&] { m.initial.validate(); });
    wrap("prior_std", [&] { m.prior.validate(); });
    wrap("c1", [&] { m.solver.validate(); });
    if (!(m.bounds.v_min < m.bounds.v_max)) throw ConfigError(s.child("v_min"), "must be below v_max");
    return m;
}

inline wiener::ModelKind parse_kind(const json& v, const std::string& path) {
    if (v.is_string()) {
        const auto name = v.get<std::string>();
        for (auto k : {wiener::ModelKind::rint, wiener::ModelKind::thevenin, wiener::ModelKind::basic_ndc,
                       wiener::ModelKind::ndc})
            if (name == wiener::to_string(k)) return k;
    }
    throw ConfigError(path, "expected one of rint, thevenin, basic_ndc, ndc");
}

}  // namespace config_detail

/// Parses and validates a run configuration.
inline RunConfig parse_run_config(const nlohmann::json& j) {
    using config_detail::Section;
    Section root(j, "");
    RunConfig cfg;
    const auto seed = root.integer("seed", 0);
    if (seed < 0) throw ConfigError("seed", "must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.dt = root.number("dt", cfg.dt);
    if (!(cfg.dt > 0.0)) throw ConfigError("dt", "must be > 0");
    cfg.soc0 = root.number("soc0", cfg.soc0);
    if (!(cfg.soc0 >= 0.0 && cfg.soc0 <= 1.0)) throw ConfigError("soc0", "must lie in [0, 1]");
    cfg.noise_std = root.number("noise_std", cfg.noise_std);
    if (!(cfg.noise_std >= 0.0)) throw ConfigError("noise_std", "must be >= 0");
    if (root.has("model")) cfg.model = config_detail::parse_model(root.section("model"));
    if (root.has("profile")) cfg.profile = config_detail::parse_profile(root.raw("profile"), "profile");
    if (root.has("cc")) cfg.cc = config_detail::parse_cc(root.section("cc"));
    if (root.has("map")) cfg.map = config_detail::parse_map(root.section("map"));
    if (root.has("compare")) {
        auto s = root.section("compare");
        const auto& models = s.raw("models");
        if (!models.is_array() || models.empty()) throw ConfigError(s.child("models"), "expected a non-empty array");
        cfg.compare_models.clear();
        for (std::size_t i = 0; i < models.size(); ++i)
            cfg.compare_models.push_back(
                config_detail::parse_kind(models[i], s.child("models") + "[" + std::to_string(i) + "]"));
        s.finish();
    }
    root.finish();
    return cfg;
}

inline RunConfig parse_run_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("", std::string("malformed JSON: ") + e.what());
    }
    return parse_run_config(j);
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("", "cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

// ---------------------------------------------------------------------------
// Serialisation of the resolved configuration

namespace config_detail {

template <std::size_t N>
json named_json(const std::array<double, N>& v, const std::array<const char*, N>& names, bool null_for_inf = false) {
    json o = json::object();
    for (std::size_t i = 0; i < N; ++i) o[names[i]] = null_for_inf && std::isinf(v[i]) ? json(nullptr) : json(v[i]);
    return o;
}

inline json to_json(const OcvPolynomial& ocv) {
    const auto& a = ocv.interior();
    return {{"v_min", ocv.v_min()}, {"v_max", ocv.v_max()}, {"alpha", {a[0], a[1], a[2], a[3]}}};
}

inline json to_json(const SocR0Law& r0) {
    if (const auto* c = std::get_if<SocR0Law::Constant>(&r0.variant())) return c->r0;
    const auto& g = std::get<SocR0Law::SocDependent>(r0.variant()).gamma;
    return {{"gamma", {g[0], g[1], g[2], g[3], g[4]}}};
}

inline json to_json(const ComparisonModel& model) {
    return std::visit(
        [](const auto& m) -> json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, RintModel>) {
                return {{"type", "rint"}, {"r0", m.r0}, {"q_t", m.q_t}, {"ocv", to_json(m.ocv)}};
            } else if constexpr (std::is_same_v<T, TheveninModel>) {
                return {{"type", "thevenin"}, {"r0", m.r0},   {"r_1", m.r1},
                        {"c_1", m.c1},        {"q_t", m.q_t}, {"ocv", to_json(m.ocv)}};
            } else {
                const auto& p = m.params;
                json o = {{"type", std::is_same_v<T, FullNdcModel> ? "ndc" : "basic_ndc"},
                          {"c_b", p.c_b},
                          {"c_s", p.c_s},
                          {"r_b", p.r_b},
                          {"r_s", p.r_s},
                          {"r0", to_json(p.r0)},
                          {"ocv", to_json(p.ocv)}};
                if constexpr (std::is_same_v<T, FullNdcModel>) {
                    o["r_1"] = p.r_1;
                    o["c_1"] = p.c_1;
                }
                return o;
            }
        },
        model.variant());
}

inline json to_json(const ProfileSpec& spec) {
    return std::visit(
        [](const auto& s) -> json {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ConstantProfile>)
                return {{"type", "constant"}, {"current", s.current}, {"duration", s.duration}};
            else if constexpr (std::is_same_v<T, PulseProfile>)
                return {{"type", "pulse"}, {"current", s.current}, {"on_s", s.on_s}, {"off_s", s.off_s},
                        {"cycles", s.cycles}};
            else
                return {{"type", "drive_cycle"}, {"seed", s.seed},         {"i_min", s.i_min},
                        {"i_max", s.i_max},      {"duration", s.duration}, {"segment_s", s.segment_s}};
        },
        spec);
}

}  // namespace config_detail

/// Fully resolved configuration, defaults included.
inline nlohmann::json to_json(const RunConfig& cfg) {
    using namespace config_detail;
    json j = {{"seed", cfg.seed}, {"dt", cfg.dt}, {"soc0", cfg.soc0}, {"noise_std", cfg.noise_std}};
    if (cfg.model) j["model"] = config_detail::to_json(*cfg.model);
    if (!cfg.profile.empty()) {
        json arr = json::array();
        for (const auto& p : cfg.profile) arr.push_back(config_detail::to_json(p));
        j["profile"] = arr;
    }
    if (cfg.cc) {
        const auto& c = *cfg.cc;
        json o = {{"initial", named_json(c.initial.values, cc::CcTheta::names)},
                  {"lower", named_json(c.bounds.lower, cc::CcTheta::names)},
                  {"upper", named_json(c.bounds.upper, cc::CcTheta::names)},
                  {"noise_cov_scale", c.noise_cov_scale},
                  {"max_iter", c.options.max_iter},
                  {"gradient_tol", c.options.gradient_tol}};
        if (c.q_t) o["q_t"] = *c.q_t;
        if (c.ocv) o["ocv"] = config_detail::to_json(*c.ocv);
        j["cc"] = o;
    }
    if (cfg.map) {
        const auto& m = *cfg.map;
        j["map"] = {{"initial", named_json(m.initial.values, wiener::WienerTheta::names)},
                    {"prior_mean", named_json(m.prior.mean, wiener::WienerTheta::names)},
                    {"prior_std", named_json(m.prior.std_dev, wiener::WienerTheta::names, true)},
                    {"c1", m.solver.c1},
                    {"c2", m.solver.c2},
                    {"tol", m.solver.tol},
                    {"grad_tol", m.solver.grad_tol},
                    {"max_iter", m.solver.max_iter},
                    {"noise_var", m.solver.noise_var},
                    {"warmup", m.solver.warmup},
                    {"v_min", m.bounds.v_min},
                    {"v_max", m.bounds.v_max}};
    }
    json models = json::array();
    for (auto k : cfg.compare_models) models.push_back(std::string(wiener::to_string(k)));
    j["compare"] = {{"models", models}};
    return j;
}

/// Concatenated current profile of all configured segments.
inline std::vector<double> build_profile(const RunConfig& cfg) {
    std::vector<double> out;
    for (const auto& seg : cfg.profile) {
        const auto part = generate_profile(seg, cfg.dt);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

}  // namespace ndc
