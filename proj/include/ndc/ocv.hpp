#pragma once

#include <array>
#include <cmath>
#include <string>
#include <variant>

#include "ndc/errors.hpp"

namespace ndc {

/// Fifth-order open-circuit-voltage map h(v_s) pinned to the voltage window.
///
/// Only the four interior coefficients are free. The constant term is the
/// lower cutoff voltage and the leading coefficient is derived so that the
/// polynomial passes through (0, v_min) and (1, v_max):
///
///     a0 = v_min,   a5 = v_max - v_min - (a1 + a2 + a3 + a4).
class OcvPolynomial {
public:
    /// Identity map h(v) = v on [0, 1].
    OcvPolynomial() : OcvPolynomial(0.0, {1.0, 0.0, 0.0, 0.0}, 1.0) {}

    OcvPolynomial(double v_min, std::array<double, 4> interior, double v_max)
        : v_min_(v_min), v_max_(v_max), interior_(interior) {
        detail::require(std::isfinite(v_min) && std::isfinite(v_max),
                        "OcvPolynomial: voltage bounds must be finite");
        detail::require(v_min < v_max, "OcvPolynomial: v_min must be below v_max");
        for (double a : interior)
            detail::require(std::isfinite(a), "OcvPolynomial: coefficients must be finite");
    }

    /// Builds the polynomial whose bounds are implied by six raw coefficients
    /// (v_min = a0, v_max = sum of all). Useful for rounded coefficient sets
    /// that were rounded independently.
    static OcvPolynomial from_coefficients(const std::array<double, 6>& a) {
        double sum = 0.0;
        for (double c : a) sum += c;
        return OcvPolynomial(a[0], {a[1], a[2], a[3], a[4]}, sum);
    }

    double v_min() const noexcept { return v_min_; }
    double v_max() const noexcept { return v_max_; }
    const std::array<double, 4>& interior() const noexcept { return interior_; }

    double leading() const noexcept {
        return v_max_ - v_min_ - (interior_[0] + interior_[1] + interior_[2] + interior_[3]);
    }

    /// All six coefficients a0..a5.
    std::array<double, 6> coefficients() const noexcept {
        return {v_min_, interior_[0], interior_[1], interior_[2], interior_[3], leading()};
    }

    double operator()(double v_s) const noexcept {
        const auto a = coefficients();
        double acc = a[5];
        for (int i = 4; i >= 0; --i) acc = acc * v_s + a[static_cast<std::size_t>(i)];
        return acc;
    }

    /// dh/dv_s.
    double derivative(double v_s) const noexcept {
        const auto a = coefficients();
        double acc = 5.0 * a[5];
        for (int i = 4; i >= 1; --i) acc = acc * v_s + i * a[static_cast<std::size_t>(i)];
        return acc;
    }

private:
    double v_min_;
    double v_max_;
    std::array<double, 4> interior_;
};

inline double ocv_eval(const OcvPolynomial& ocv, double v_s) noexcept { return ocv(v_s); }

/// Series resistance R0, either constant or the SoC-dependent law
///
///     R0(soc) = g1 + g2 exp(-g3 soc) + g4 exp(-g5 (1 - soc)).
class SocR0Law {
public:
    struct Constant {
        double r0;
    };
    struct SocDependent {
        std::array<double, 5> gamma;
    };

    SocR0Law(Constant c) : law_(c) {
        detail::require(std::isfinite(c.r0) && c.r0 >= 0.0, "SocR0Law: r0 must be >= 0");
    }
    SocR0Law(SocDependent s) : law_(s) {
        for (double g : s.gamma)
            detail::require(std::isfinite(g) && g >= 0.0, "SocR0Law: gamma entries must be >= 0");
    }

    static SocR0Law constant(double r0) { return SocR0Law(Constant{r0}); }
    static SocR0Law soc_dependent(std::array<double, 5> gamma) { return SocR0Law(SocDependent{gamma}); }

    bool is_constant() const noexcept { return std::holds_alternative<Constant>(law_); }
    const std::variant<Constant, SocDependent>& variant() const noexcept { return law_; }

    /// Evaluation without the domain check, for callers that already validated soc.
    double unchecked(double soc) const noexcept {
        if (const auto* c = std::get_if<Constant>(&law_)) return c->r0;
        const auto& g = std::get<SocDependent>(law_).gamma;
        return g[0] + g[1] * std::exp(-g[2] * soc) + g[3] * std::exp(-g[4] * (1.0 - soc));
    }

    double operator()(double soc) const {
        constexpr double tol = 1e-9;
        if (!(soc >= -tol && soc <= 1.0 + tol))
            throw InvalidArgument("r0_eval: soc " + std::to_string(soc) + " outside [0, 1]");
        return unchecked(soc);
    }

private:
    std::variant<Constant, SocDependent> law_;
};

inline double r0_eval(const SocR0Law& law, double soc) { return law(soc); }

}  // namespace ndc
