#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ndc/dataset.hpp"
#include "ndc/errors.hpp"
#include "ndc/model.hpp"
#include "ndc/ocv.hpp"

// Constant-current identification: SoC-OCV polynomial from a trickle
// discharge, then impedance and capacitance from a single constant-current
// discharge by box-constrained weighted least squares on the closed-form
// voltage response.

namespace ndc::cc {

inline constexpr std::size_t kThetaSize = 9;
using Vector9 = std::array<double, kThetaSize>;

/// [beta2, beta3, R1, 1/(R1 C1), gamma1..gamma5]. beta1 = 1/(C_b + C_s) is
/// known from coulomb counting and passed separately.
struct CcTheta {
    enum Index : std::size_t { beta2, beta3, r1, rc_rate, gamma1, gamma2, gamma3, gamma4, gamma5 };
    static constexpr std::array<const char*, kThetaSize> names = {"beta2",  "beta3",  "beta4",  "beta5", "gamma1",
                                                                   "gamma2", "gamma3", "gamma4", "gamma5"};

    Vector9 values{};

    double operator[](std::size_t i) const noexcept { return values[i]; }
    double& operator[](std::size_t i) noexcept { return values[i]; }
};

struct BoxBounds {
    Vector9 lower{};
    Vector9 upper{};

    void validate() const {
        for (std::size_t i = 0; i < kThetaSize; ++i)
            detail::require(lower[i] < upper[i], std::string("BoxBounds: lower >= upper for ") + CcTheta::names[i]);
    }
    bool contains(const CcTheta& t) const noexcept {
        for (std::size_t i = 0; i < kThetaSize; ++i)
            if (!(t[i] >= lower[i] && t[i] <= upper[i])) return false;
        return true;
    }
    bool strictly_contains(const CcTheta& t) const noexcept {
        for (std::size_t i = 0; i < kThetaSize; ++i)
            if (!(t[i] > lower[i] && t[i] < upper[i])) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// SoC-OCV

struct SocOcvFit {
    OcvPolynomial ocv;
    double q_t = 0.0;  // C
};

/// Fits h(.) to a slow full discharge (or charge) whose terminal voltage is
/// taken as OCV. Capacity comes from coulomb counting across the record; the
/// end points are pinned to the observed minimum and maximum voltage so only
/// a1..a4 enter the linear least-squares problem.
inline SocOcvFit fit_soc_ocv(const Dataset& trickle) {
    trickle.validate();
    const std::size_t n = trickle.size();
    double charge = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) charge += trickle.current[k];
    charge *= trickle.dt;
    if (!(std::abs(charge) > 0.0)) throw NumericalError("fit_soc_ocv: no net charge moved, capacity undefined");
    const double q_t = std::abs(charge);
    const double soc_start = charge < 0.0 ? 1.0 : 0.0;

    const auto [vmin_it, vmax_it] = std::minmax_element(trickle.voltage.begin(), trickle.voltage.end());
    const double v_min = *vmin_it;
    const double v_max = *vmax_it;
    if (!(v_max > v_min)) throw NumericalError("fit_soc_ocv: constant voltage data, regression is rank deficient");

    Eigen::MatrixXd phi(static_cast<Eigen::Index>(n), 4);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    double running = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double soc = soc_start + trickle.dt * running / q_t;
        running += trickle.current[k];
        const double s5 = std::pow(soc, 5);
        double p = 1.0;
        for (Eigen::Index i = 0; i < 4; ++i) {
            p *= soc;
            phi(static_cast<Eigen::Index>(k), i) = p - s5;
        }
        y(static_cast<Eigen::Index>(k)) = trickle.voltage[k] - v_min - (v_max - v_min) * s5;
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(phi);
    qr.setThreshold(1e-12);
    if (qr.rank() < 4) throw NumericalError("fit_soc_ocv: SoC regression matrix is rank deficient");
    const Eigen::Vector4d a = qr.solve(y);
    return {OcvPolynomial(v_min, {a(0), a(1), a(2), a(3)}, v_max), q_t};
}

// ---------------------------------------------------------------------------
// Closed-form constant-current response (R_s = 0, rested start)

/// v_s(t) = v_s0 + beta1 I t + beta2 I (1 - exp(-beta3 t)).
inline double vs_closed_form(const CcTheta& theta, double beta1, double v_s0, double current, double t) noexcept {
    return v_s0 + beta1 * current * t - theta[CcTheta::beta2] * current * std::expm1(-theta[CcTheta::beta3] * t);
}

namespace impl {

struct CcTerms {
    double v_s;
    double soc;
    double diffusion;  // 1 - exp(-beta3 t)
    double rc;         // 1 - exp(-beta5 t)
    double low_soc;    // exp(-gamma3 soc)
    double high_soc;   // exp(-gamma5 (1 - soc))
};

inline CcTerms cc_terms(const CcTheta& th, double beta1, double v_s0, double soc0, double current, double t) {
    CcTerms c{};
    c.diffusion = -std::expm1(-th[CcTheta::beta3] * t);
    c.rc = -std::expm1(-th[CcTheta::rc_rate] * t);
    c.v_s = v_s0 + beta1 * current * t + th[CcTheta::beta2] * current * c.diffusion;
    c.soc = soc0 + beta1 * current * t;
    c.low_soc = std::exp(-th[CcTheta::gamma3] * c.soc);
    c.high_soc = std::exp(-th[CcTheta::gamma5] * (1.0 - c.soc));
    return c;
}

inline double cc_voltage(const CcTheta& th, const OcvPolynomial& ocv, double current, const CcTerms& c) {
    return ocv(c.v_s) + current * th[CcTheta::r1] * c.rc + current * th[CcTheta::gamma1] +
           current * th[CcTheta::gamma2] * c.low_soc + current * th[CcTheta::gamma4] * c.high_soc;
}

}  // namespace impl

/// Terminal voltage under constant current from a rested start:
///
///   V = h(v_s(t)) + I R1 (1 - e^{-beta5 t}) + I R0(soc(t)),   soc(t) = soc0 + beta1 I t.
inline double predict_voltage_cc(const CcTheta& theta, double beta1, double v_s0, double soc0,
                                  const OcvPolynomial& ocv, double current, double t) {
    const auto c = impl::cc_terms(theta, beta1, v_s0, soc0, current, t);
    constexpr double tol = 1e-9;
    if (!(c.soc >= -tol && c.soc <= 1.0 + tol))
        throw InvalidArgument("predict_voltage_cc: soc(t) = " + std::to_string(c.soc) + " outside [0, 1]");
    return impl::cc_voltage(theta, ocv, current, c);
}

/// Voltage and analytic Jacobian dV/dtheta at time t.
inline double predict_voltage_cc_with_jacobian(const CcTheta& th, double beta1, double v_s0, double soc0,
                                               const OcvPolynomial& ocv, double current, double t, Vector9& jac) {
    const auto c = impl::cc_terms(th, beta1, v_s0, soc0, current, t);
    const double slope = ocv.derivative(c.v_s);
    const double i = current;
    jac[CcTheta::beta2] = slope * i * c.diffusion;
    jac[CcTheta::beta3] = slope * th[CcTheta::beta2] * i * t * (1.0 - c.diffusion);
    jac[CcTheta::r1] = i * c.rc;
    jac[CcTheta::rc_rate] = i * th[CcTheta::r1] * t * (1.0 - c.rc);
    jac[CcTheta::gamma1] = i;
    jac[CcTheta::gamma2] = i * c.low_soc;
    jac[CcTheta::gamma3] = -i * th[CcTheta::gamma2] * c.soc * c.low_soc;
    jac[CcTheta::gamma4] = i * c.high_soc;
    jac[CcTheta::gamma5] = -i * th[CcTheta::gamma4] * (1.0 - c.soc) * c.high_soc;
    return impl::cc_voltage(th, ocv, current, c);
}

// ---------------------------------------------------------------------------
// Parameter maps

/// beta1 and theta for a physical parameter set. The general (R_s != 0)
/// diffusion coefficients are used; with R_s = 0 they reduce to the
/// identified parameterisation.
struct CcBetas {
    double beta1;
    CcTheta theta;
};

inline CcBetas beta_from_physical_cc(const NdcParams& p) {
    p.validate();
    detail::require(p.has_rc_branch(), "beta_from_physical_cc: RC branch required");
    const double c = p.c_b + p.c_s;
    CcBetas out{};
    out.beta1 = 1.0 / c;
    out.theta[CcTheta::beta2] = p.c_b * (p.r_b * p.c_b - p.r_s * p.c_s) / (c * c);
    out.theta[CcTheta::beta3] = c / (p.c_b * p.c_s * (p.r_b + p.r_s));
    out.theta[CcTheta::r1] = p.r_1;
    out.theta[CcTheta::rc_rate] = 1.0 / (p.r_1 * p.c_1);
    if (const auto* k = std::get_if<SocR0Law::Constant>(&p.r0.variant())) {
        out.theta[CcTheta::gamma1] = k->r0;
        out.theta[CcTheta::gamma3] = 1.0;
        out.theta[CcTheta::gamma5] = 1.0;
    } else {
        const auto& g = std::get<SocR0Law::SocDependent>(p.r0.variant()).gamma;
        for (std::size_t i = 0; i < 5; ++i) out.theta[CcTheta::gamma1 + i] = g[i];
    }
    return out;
}

/// Inverts the constant-current parameterisation (R_s = 0):
///   C_b = b2 b3 / (b1 (b1 + b2 b3)),  C_s = 1 / (b1 + b2 b3),  R_b = 1 / (b1 b3 C_b C_s),
///   R1 = theta3,  C1 = 1 / (theta3 theta4).
inline NdcParams reconstruct_physical_cc(const CcTheta& th, double beta1, const OcvPolynomial& ocv = {}) {
    const double b2 = th[CcTheta::beta2];
    const double b3 = th[CcTheta::beta3];
    if (!(beta1 > 0.0)) throw NumericalError("reconstruct_physical_cc: beta1 must be > 0");
    if (!(b3 > 0.0)) throw NumericalError("reconstruct_physical_cc: beta3 must be > 0");
    if (!(b2 > 0.0)) throw NumericalError("reconstruct_physical_cc: beta2 must be > 0");
    if (!(th[CcTheta::r1] > 0.0 && th[CcTheta::rc_rate] > 0.0))
        throw NumericalError("reconstruct_physical_cc: R1 and 1/(R1 C1) must be > 0");

    NdcParams p;
    p.c_b = b2 * b3 / (beta1 * (beta1 + b2 * b3));
    p.c_s = 1.0 / (beta1 + b2 * b3);
    p.r_b = 1.0 / (beta1 * b3 * p.c_b * p.c_s);
    p.r_s = 0.0;
    p.r_1 = th[CcTheta::r1];
    p.c_1 = 1.0 / (th[CcTheta::r1] * th[CcTheta::rc_rate]);
    p.r0 = SocR0Law::soc_dependent({th[CcTheta::gamma1], th[CcTheta::gamma2], th[CcTheta::gamma3],
                                    th[CcTheta::gamma4], th[CcTheta::gamma5]});
    p.ocv = ocv;
    return p;
}

// ---------------------------------------------------------------------------
// Box-constrained fit

struct CcFitOptions {
    int max_iter = 500;
    /// Stop when the infinity norm of the projected gradient (in variables
    /// scaled by the initial guess) falls below this.
    double gradient_tol = 1e-6;
    /// Also stop after three consecutive accepted steps whose relative cost
    /// decrease is below this.
    double stall_tol = 1e-14;
    double armijo_c1 = 1e-4;
};

struct CcFitResult {
    CcTheta theta;
    std::vector<double> cost_trace;  // one entry per accepted iterate, starting at theta0
    bool converged = false;
    int iterations = 0;
    double projected_gradient_norm = 0.0;
    std::array<bool, kThetaSize> at_lower{};
    std::array<bool, kThetaSize> at_upper{};
    std::string message;

    bool any_active() const noexcept {
        for (std::size_t i = 0; i < kThetaSize; ++i)
            if (at_lower[i] || at_upper[i]) return true;
        return false;
    }
};

/// Weighted least-squares problem for one constant-current segment.
class CcProblem {
public:
    CcProblem(const Dataset& data, OcvPolynomial ocv, double q_t, double noise_cov_scale)
        : ocv_(std::move(ocv)), beta1_(1.0 / q_t), weight_(1.0 / noise_cov_scale), soc0_(data.soc0) {
        data.validate();
        detail::require(q_t > 0.0 && std::isfinite(q_t), "fit_cc: q_t must be > 0");
        detail::require(noise_cov_scale > 0.0 && std::isfinite(noise_cov_scale),
                        "fit_cc: noise_cov_scale must be > 0");
        double sum = 0.0;
        for (double i : data.current) sum += i;
        current_ = sum / static_cast<double>(data.size());
        detail::require(current_ != 0.0, "fit_cc: data carries no current");
        for (double i : data.current)
            detail::require(std::abs(i - current_) <= 0.01 * std::abs(current_),
                            "fit_cc: current is not constant (ripple above 1%)");
        t_.resize(data.size());
        for (std::size_t k = 0; k < data.size(); ++k) t_[k] = data.time(k);
        y_ = data.voltage;
    }

    double beta1() const noexcept { return beta1_; }
    double current() const noexcept { return current_; }
    std::size_t size() const noexcept { return y_.size(); }

    std::vector<double> predict(const CcTheta& th) const {
        std::vector<double> v(t_.size());
        for (std::size_t k = 0; k < t_.size(); ++k)
            v[k] = impl::cc_voltage(th, ocv_, current_, impl::cc_terms(th, beta1_, soc0_, soc0_, current_, t_[k]));
        return v;
    }

    /// 0.5 r' Q^-1 r with Q = scale * I.
    double cost(const CcTheta& th) const {
        double acc = 0.0;
        for (std::size_t k = 0; k < t_.size(); ++k) {
            const double r = y_[k] -
                impl::cc_voltage(th, ocv_, current_, impl::cc_terms(th, beta1_, soc0_, soc0_, current_, t_[k]));
            acc += r * r;
        }
        return 0.5 * weight_ * acc;
    }

    /// Cost, gradient and Gauss-Newton matrix J' Q^-1 J.
    double linearize(const CcTheta& th, Eigen::Matrix<double, 9, 1>& grad, Eigen::Matrix<double, 9, 9>& gn) const {
        grad.setZero();
        gn.setZero();
        double acc = 0.0;
        Vector9 row{};
        for (std::size_t k = 0; k < t_.size(); ++k) {
            const double v = predict_voltage_cc_with_jacobian(th, beta1_, soc0_, soc0_, ocv_, current_, t_[k], row);
            const double r = y_[k] - v;
            acc += r * r;
            const Eigen::Map<const Eigen::Matrix<double, 9, 1>> j(row.data());
            grad.noalias() -= r * j;
            gn.noalias() += j * j.transpose();
        }
        grad *= weight_;
        gn *= weight_;
        return 0.5 * weight_ * acc;
    }

private:
    OcvPolynomial ocv_;
    double beta1_;
    double weight_;
    double soc0_;
    double current_ = 0.0;
    std::vector<double> t_;
    std::vector<double> y_;
};

/// Projected Gauss-Newton (Levenberg-Marquardt damped) with an Armijo
/// backtracking search along the projection arc. Optimises x = theta/theta0
/// so all variables are O(1). Every accepted step strictly lowers the cost.
inline CcFitResult fit_cc(const Dataset& data, const OcvPolynomial& ocv, double q_t, const BoxBounds& bounds,
                          const CcTheta& theta0, double noise_cov_scale = 1.0, const CcFitOptions& opt = {}) {
    using Vec = Eigen::Matrix<double, 9, 1>;
    using Mat = Eigen::Matrix<double, 9, 9>;
    bounds.validate();
    for (std::size_t i = 0; i < kThetaSize; ++i)
        detail::require(theta0[i] > 0.0, std::string("fit_cc: initial ") + CcTheta::names[i] + " must be > 0");
    if (!bounds.strictly_contains(theta0)) throw InvalidArgument("fit_cc: initial guess is not strictly inside the bounds");

    const CcProblem problem(data, ocv, q_t, noise_cov_scale);

    Vec scale, lo, hi;
    for (std::size_t i = 0; i < kThetaSize; ++i) {
        const auto e = static_cast<Eigen::Index>(i);
        scale(e) = theta0[i];
        lo(e) = bounds.lower[i] / theta0[i];
        hi(e) = bounds.upper[i] / theta0[i];
    }
    auto to_theta = [&](const Vec& x) {
        CcTheta th;
        for (std::size_t i = 0; i < kThetaSize; ++i) th[i] = x(static_cast<Eigen::Index>(i)) * scale(static_cast<Eigen::Index>(i));
        return th;
    };
    auto project = [&](const Vec& x) -> Vec { return x.cwiseMax(lo).cwiseMin(hi); };

    CcFitResult result;
    Vec x = Vec::Ones();
    Vec grad_theta, g;
    Mat gn_theta, h;
    double mu = 1e-3;
    int stalls = 0;

    auto linearize = [&](const Vec& at) {
        const double f = problem.linearize(to_theta(at), grad_theta, gn_theta);
        g = grad_theta.cwiseProduct(scale);
        h = scale.asDiagonal() * gn_theta * scale.asDiagonal();
        return f;
    };

    double f = linearize(x);
    result.cost_trace.push_back(f);

    for (int iter = 0; iter < opt.max_iter; ++iter) {
        result.iterations = iter;
        const Vec pg = project(x - g) - x;
        result.projected_gradient_norm = pg.cwiseAbs().maxCoeff();
        if (result.projected_gradient_norm < opt.gradient_tol) {
            result.converged = true;
            result.message = "projected gradient below tolerance";
            break;
        }

        // Variables held at a bound by an outward-pointing gradient stay fixed.
        std::array<bool, kThetaSize> free{};
        for (Eigen::Index i = 0; i < 9; ++i) {
            const double span = hi(i) - lo(i);
            const bool at_lo = x(i) <= lo(i) + 1e-12 * span && g(i) > 0.0;
            const bool at_hi = x(i) >= hi(i) - 1e-12 * span && g(i) < 0.0;
            free[static_cast<std::size_t>(i)] = !(at_lo || at_hi);
        }

        bool accepted = false;
        while (!accepted && mu < 1e12) {
            Mat a = h;
            for (Eigen::Index i = 0; i < 9; ++i) {
                a(i, i) += mu * std::max(h(i, i), 1e-12);
                if (!free[static_cast<std::size_t>(i)]) {
                    a.row(i).setZero();
                    a.col(i).setZero();
                    a(i, i) = 1.0;
                }
            }
            Vec rhs = -g;
            for (Eigen::Index i = 0; i < 9; ++i)
                if (!free[static_cast<std::size_t>(i)]) rhs(i) = 0.0;
            const Vec d = a.ldlt().solve(rhs);

            double alpha = 1.0;
            for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
                const Vec trial = project(x + alpha * d);
                const Vec step = trial - x;
                if (step.cwiseAbs().maxCoeff() == 0.0) break;
                const double ft = problem.cost(to_theta(trial));
                if (std::isfinite(ft) && ft <= f + opt.armijo_c1 * g.dot(step) && ft < f) {
                    const double rel = (f - ft) / std::max(f, std::numeric_limits<double>::min());
                    x = trial;
                    f = linearize(x);
                    result.cost_trace.push_back(f);
                    accepted = true;
                    stalls = rel < opt.stall_tol ? stalls + 1 : 0;
                    mu = alpha == 1.0 ? std::max(mu / 3.0, 1e-12) : mu * 2.0;
                    break;
                }
            }
            if (!accepted) mu *= 10.0;
        }

        if (!accepted) {
            result.message = "no decrease possible along the damped Gauss-Newton direction";
            result.converged = result.projected_gradient_norm < std::sqrt(opt.gradient_tol);
            break;
        }
        if (stalls >= 3) {
            result.iterations = iter + 1;
            result.converged = true;
            result.message = "relative cost change below stall tolerance";
            break;
        }
        result.iterations = iter + 1;
    }
    if (result.message.empty()) result.message = "maximum iterations reached";

    const Vec pg = project(x - g) - x;
    result.projected_gradient_norm = pg.cwiseAbs().maxCoeff();
    result.theta = to_theta(x);
    for (Eigen::Index i = 0; i < 9; ++i) {
        const auto u = static_cast<std::size_t>(i);
        result.at_lower[u] = x(i) <= lo(i);
        result.at_upper[u] = x(i) >= hi(i);
    }
    return result;
}

}  // namespace ndc::cc
