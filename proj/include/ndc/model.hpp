#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ndc/errors.hpp"
#include "ndc/ocv.hpp"

namespace ndc {

/// Physical parameters of the nonlinear double-capacitor circuit.
///
/// Bulk and surface capacitors (c_b, c_s) hold the charge; with the state
/// voltages normalised to [0, 1] V their sum is the cell capacity in coulombs.
/// r_1 == 0 shorts the R1-C1 branch, which is how the basic variant without
/// the RC pair is represented.
struct NdcParams {
    double c_b = 0.0;  // F
    double c_s = 0.0;  // F
    double r_b = 0.0;  // ohm
    double r_s = 0.0;  // ohm
    double r_1 = 0.0;  // ohm
    double c_1 = 1.0;  // F
    SocR0Law r0 = SocR0Law::constant(0.0);
    OcvPolynomial ocv;

    double total_capacity() const noexcept { return c_b + c_s; }
    bool has_rc_branch() const noexcept { return r_1 > 0.0; }

    void validate() const {
        auto finite = [](double v) { return std::isfinite(v); };
        detail::require(finite(c_b) && finite(c_s) && finite(r_b) && finite(r_s) && finite(r_1) && finite(c_1),
                        "NdcParams: all fields must be finite");
        detail::require(c_s > 0.0, "NdcParams: c_s must be > 0");
        detail::require(c_b > c_s, "NdcParams: c_b must exceed c_s");
        detail::require(r_s >= 0.0, "NdcParams: r_s must be >= 0");
        detail::require(r_b >= r_s, "NdcParams: r_b must be >= r_s");
        detail::require(r_b + r_s > 0.0, "NdcParams: r_b + r_s must be > 0");
        detail::require(r_1 >= 0.0, "NdcParams: r_1 must be >= 0");
        detail::require(c_1 > 0.0, "NdcParams: c_1 must be > 0");
    }
};

/// Bulk, surface and RC-branch voltages.
struct CircuitState {
    double v_b = 0.0;
    double v_s = 0.0;
    double v_1 = 0.0;

    static CircuitState equilibrium(double soc) noexcept { return {soc, soc, 0.0}; }
};

inline double soc_of_state(const NdcParams& p, const CircuitState& s) noexcept {
    return (p.c_b * s.v_b + p.c_s * s.v_s) / (p.c_b + p.c_s);
}

struct ContinuousModel {
    Eigen::Matrix3d a;  // 1/s
    Eigen::Vector3d b;  // 1/(s A) in normalised volts
};

struct DiscreteModel {
    Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    double dt = 0.0;
};

inline ContinuousModel build_continuous_matrices(const NdcParams& p) {
    p.validate();
    detail::require(p.r_1 > 0.0, "build_continuous_matrices: r_1 = 0 gives an unbounded RC pole");
    const double r = p.r_b + p.r_s;
    ContinuousModel m;
    m.a.setZero();
    m.a(0, 0) = -1.0 / (p.c_b * r);
    m.a(0, 1) = 1.0 / (p.c_b * r);
    m.a(1, 0) = 1.0 / (p.c_s * r);
    m.a(1, 1) = -1.0 / (p.c_s * r);
    m.a(2, 2) = -1.0 / (p.r_1 * p.c_1);
    m.b << p.r_s / (p.c_b * r), p.r_b / (p.c_s * r), -1.0 / p.c_1;
    return m;
}

/// Exact zero-order-hold discretisation using the block structure.
///
/// The 2x2 diffusion block [[-a, a], [b, -b]] has eigenvalues {0, -(a+b)} and
/// spectral projectors P0 = [[b, a], [b, a]]/(a+b), P1 = I - P0, so
///
///     exp(M dt)              = P0 + exp(-(a+b) dt) P1
///     int_0^dt exp(M t) dt   = dt P0 + (1 - exp(-(a+b) dt))/(a+b) P1.
///
/// The RC row is a scalar first-order system; a shorted branch (r_1 = 0)
/// discretises to the zero limit.
inline DiscreteModel zoh_discretize(const NdcParams& p, double dt) {
    p.validate();
    detail::require(std::isfinite(dt) && dt > 0.0, "zoh_discretize: dt must be > 0");
    const double r = p.r_b + p.r_s;
    const double a = 1.0 / (p.c_b * r);  // A12
    const double b = 1.0 / (p.c_s * r);  // A21
    const double s = a + b;
    const double b1 = p.r_s / (p.c_b * r);
    const double b2 = p.r_b / (p.c_s * r);

    const double decay = std::exp(-s * dt);
    const double integral = -std::expm1(-s * dt) / s;  // (1 - e^{-s dt}) / s

    Eigen::Matrix2d p0;
    p0 << b, a, b, a;
    p0 /= s;
    const Eigen::Matrix2d p1 = Eigen::Matrix2d::Identity() - p0;

    DiscreteModel d;
    d.dt = dt;
    d.a.setZero();
    d.b.setZero();
    d.a.topLeftCorner<2, 2>() = p0 + decay * p1;
    d.b.head<2>() = (dt * p0 + integral * p1) * Eigen::Vector2d(b1, b2);

    if (p.has_rc_branch()) {
        const double tau = p.r_1 * p.c_1;
        d.a(2, 2) = std::exp(-dt / tau);
        d.b(2) = p.r_1 * std::expm1(-dt / tau);  // -R1 (1 - e^{-dt/tau})
    }
    return d;
}

inline CircuitState step(const DiscreteModel& d, const CircuitState& s, double current) noexcept {
    const Eigen::Vector3d x(s.v_b, s.v_s, s.v_1);
    const Eigen::Vector3d next = d.a * x + d.b * current;
    return {next(0), next(1), next(2)};
}

/// Coulomb-counted SoC with rectangular (ZOH-consistent) integration:
/// soc[k] = soc0 + dt/q_t * sum_{j<k} current[j].
inline std::vector<double> soc_trajectory(double q_t, std::span<const double> current, double dt, double soc0) {
    detail::require(std::isfinite(q_t) && q_t > 0.0, "soc_trajectory: q_t must be > 0");
    detail::require(dt > 0.0, "soc_trajectory: dt must be > 0");
    std::vector<double> soc(current.size());
    double charge = 0.0;
    for (std::size_t k = 0; k < current.size(); ++k) {
        soc[k] = soc0 + dt * charge / q_t;
        charge += current[k];
    }
    return soc;
}

}  // namespace ndc
