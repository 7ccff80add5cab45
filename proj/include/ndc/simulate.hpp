#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ndc/errors.hpp"
#include "ndc/model.hpp"
#include "ndc/ocv.hpp"

namespace ndc {

/// OCV(soc) + R0 I with coulomb-counted SoC.
struct RintModel {
    double r0 = 0.0;
    OcvPolynomial ocv;
    double q_t = 0.0;  // C
};

/// OCV(soc) - V1 + R0 I with a single R1-C1 pair and coulomb-counted SoC.
struct TheveninModel {
    double r0 = 0.0;
    double r1 = 0.0;
    double c1 = 1.0;
    OcvPolynomial ocv;
    double q_t = 0.0;
};

/// Double-capacitor model without the R1-C1 pair and with constant R0.
/// Any r_1 in the parameter set is ignored.
struct BasicNdcModel {
    NdcParams params;
};

struct FullNdcModel {
    NdcParams params;
};

/// One of the four battery models sharing the simulate/predict interface.
class ComparisonModel {
public:
    using Variant = std::variant<RintModel, TheveninModel, BasicNdcModel, FullNdcModel>;

    ComparisonModel(RintModel m) : model_(std::move(m)) { validate(); }
    ComparisonModel(TheveninModel m) : model_(std::move(m)) { validate(); }
    ComparisonModel(BasicNdcModel m) : model_(std::move(m)) { validate(); }
    ComparisonModel(FullNdcModel m) : model_(std::move(m)) { validate(); }

    const Variant& variant() const noexcept { return model_; }

    std::string_view name() const noexcept {
        constexpr std::string_view names[] = {"rint", "thevenin", "basic_ndc", "ndc"};
        return names[model_.index()];
    }

    const OcvPolynomial& ocv() const noexcept {
        return std::visit(
            [](const auto& m) -> const OcvPolynomial& {
                if constexpr (requires { m.params; })
                    return m.params.ocv;
                else
                    return m.ocv;
            },
            model_);
    }

    double total_capacity() const noexcept {
        return std::visit(
            [](const auto& m) {
                if constexpr (requires { m.params; })
                    return m.params.total_capacity();
                else
                    return m.q_t;
            },
            model_);
    }

private:
    void validate() const {
        std::visit(
            [](const auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, RintModel>) {
                    detail::require(m.r0 >= 0.0 && m.q_t > 0.0, "RintModel: need r0 >= 0 and q_t > 0");
                } else if constexpr (std::is_same_v<T, TheveninModel>) {
                    detail::require(m.r0 >= 0.0 && m.r1 >= 0.0 && m.c1 > 0.0 && m.q_t > 0.0,
                                    "TheveninModel: need r0, r1 >= 0 and c1, q_t > 0");
                } else if constexpr (std::is_same_v<T, BasicNdcModel>) {
                    m.params.validate();
                    detail::require(m.params.r0.is_constant(), "BasicNdcModel: r0 must be constant");
                } else {
                    m.params.validate();
                }
            },
            model_);
    }

    Variant model_;
};

enum class Truncation { none, voltage_below_min, voltage_above_max, soc_out_of_range };

inline std::string_view to_string(Truncation t) noexcept {
    switch (t) {
        case Truncation::none: return "none";
        case Truncation::voltage_below_min: return "terminal voltage below v_min";
        case Truncation::voltage_above_max: return "terminal voltage above v_max";
        case Truncation::soc_out_of_range: return "soc outside [0, 1]";
    }
    return "unknown";
}

struct SimulationResult {
    std::vector<double> voltage;
    std::vector<CircuitState> states;
    std::vector<double> soc;
    Truncation truncation = Truncation::none;
    /// Index of the first violating sample when truncated (== voltage.size()).
    std::size_t truncated_at = 0;

    bool truncated() const noexcept { return truncation != Truncation::none; }
};

namespace detail {

// Common discrete-time plant for all four variants. Models without a
// diffusion block carry v_b = v_s = coulomb-counted SoC.
struct Plant {
    bool diffusion = false;
    DiscreteModel zoh;
    double q_t = 0.0;
    double c_b = 0.0;
    double c_s = 0.0;
    double rc_pole = 0.0;
    double rc_gain = 0.0;
    SocR0Law r0 = SocR0Law::constant(0.0);
    OcvPolynomial ocv;
};

inline void set_rc(Plant& p, double r1, double c1, double dt) {
    if (r1 > 0.0) {
        p.rc_pole = std::exp(-dt / (r1 * c1));
        p.rc_gain = r1 * std::expm1(-dt / (r1 * c1));
    }
}

inline Plant make_plant(const ComparisonModel& model, double dt) {
    return std::visit(
        [dt](const auto& m) -> Plant {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, RintModel>) {
                return Plant{false, {}, m.q_t, 0.0, 0.0, 0.0, 0.0, SocR0Law::constant(m.r0), m.ocv};
            } else if constexpr (std::is_same_v<T, TheveninModel>) {
                Plant p{false, {}, m.q_t, 0.0, 0.0, 0.0, 0.0, SocR0Law::constant(m.r0), m.ocv};
                set_rc(p, m.r1, m.c1, dt);
                return p;
            } else {
                NdcParams params = m.params;
                if constexpr (std::is_same_v<T, BasicNdcModel>) params.r_1 = 0.0;
                Plant p{true, zoh_discretize(params, dt), params.total_capacity(), params.c_b, params.c_s,
                        0.0, 0.0, params.r0, params.ocv};
                // The closed-form ZOH already covers the RC row; mirror it for the scalar path.
                p.rc_pole = p.zoh.a(2, 2);
                p.rc_gain = p.zoh.b(2);
                return p;
            }
        },
        model.variant());
}

inline SimulationResult run_plant(const Plant& plant, std::span<const double> current, double dt, double soc0,
                                  bool enforce_limits) {
    constexpr double soc_tol = 1e-9;
    constexpr double v_tol = 1e-9;
    SimulationResult out;
    out.voltage.reserve(current.size());
    out.states.reserve(current.size());
    out.soc.reserve(current.size());

    CircuitState s = CircuitState::equilibrium(soc0);
    const double v_min = plant.ocv.v_min();
    const double v_max = plant.ocv.v_max();
    for (std::size_t k = 0; k < current.size(); ++k) {
        const double i = current[k];
        const double soc = plant.diffusion ? (plant.c_b * s.v_b + plant.c_s * s.v_s) / plant.q_t : s.v_s;
        if (enforce_limits && !(soc >= -soc_tol && soc <= 1.0 + soc_tol)) {
            out.truncation = Truncation::soc_out_of_range;
            break;
        }
        // R0 uses the SoC at the start of the interval.
        const double v = plant.ocv(s.v_s) - s.v_1 + plant.r0.unchecked(soc) * i;
        if (enforce_limits && v < v_min - v_tol) {
            out.truncation = Truncation::voltage_below_min;
            break;
        }
        if (enforce_limits && v > v_max + v_tol) {
            out.truncation = Truncation::voltage_above_max;
            break;
        }
        out.voltage.push_back(v);
        out.states.push_back(s);
        out.soc.push_back(soc);

        if (plant.diffusion) {
            s = step(plant.zoh, s, i);
        } else {
            const double next = s.v_s + dt * i / plant.q_t;
            s = {next, next, plant.rc_pole * s.v_1 + plant.rc_gain * i};
        }
    }
    out.truncated_at = out.voltage.size();
    return out;
}

}  // namespace detail

/// Simulates the terminal voltage from a rested start (v_b = v_s = soc0,
/// v_1 = 0). Stops at the first sample whose SoC leaves [0, 1] or whose
/// voltage leaves [v_min, v_max]; the violating sample is not included.
inline SimulationResult simulate(const ComparisonModel& model, std::span<const double> current, double dt,
                                 double soc0) {
    detail::require(std::isfinite(dt) && dt > 0.0, "simulate: dt must be > 0");
    detail::require(soc0 >= 0.0 && soc0 <= 1.0, "simulate: soc0 must lie in [0, 1]");
    return detail::run_plant(detail::make_plant(model, dt), current, dt, soc0, true);
}

/// Same recursion as simulate() without cutoff checks; always returns one
/// voltage per input sample. Used to score models on measured data.
inline std::vector<double> predict(const ComparisonModel& model, std::span<const double> current, double dt,
                                   double soc0) {
    detail::require(std::isfinite(dt) && dt > 0.0, "predict: dt must be > 0");
    detail::require(soc0 >= 0.0 && soc0 <= 1.0, "predict: soc0 must lie in [0, 1]");
    return detail::run_plant(detail::make_plant(model, dt), current, dt, soc0, false).voltage;
}

}  // namespace ndc
