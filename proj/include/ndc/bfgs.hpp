#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ndc/errors.hpp"

namespace ndc {

struct BfgsOptions {
    double c1 = 1e-6;  // sufficient decrease
    double c2 = 0.9;   // curvature
    /// Converged once |J_k - J_{k-1}| <= tol * max(1, |J_k|) and the
    /// gradient certificate ||g||_inf <= grad_tol * max(1, |J_k|) holds.
    double tol = 1e-10;
    double grad_tol = 1e-6;
    int max_iter = 2000;
    int max_line_search = 60;
    /// B_0 = b0_scale / ||g_0|| * I.
    double b0_scale = 1e-3;

    void validate() const {
        detail::require(0.0 < c1 && c1 < c2 && c2 < 1.0, "BfgsOptions: need 0 < c1 < c2 < 1");
        detail::require(tol >= 0.0 && grad_tol >= 0.0, "BfgsOptions: tolerances must be >= 0");
        detail::require(max_iter > 0 && max_line_search > 0, "BfgsOptions: iteration limits must be > 0");
    }
};

/// Record of one accepted iteration.
struct BfgsIteration {
    int k = 0;
    double cost = 0.0;         // J(x_k)
    double step_length = 0.0;  // lambda_k
    double slope = 0.0;        // g_k' s_k
    double new_cost = 0.0;     // J(x_k + lambda_k s_k)
    double new_slope = 0.0;    // g(x_k + lambda_k s_k)' s_k
    bool sufficient_decrease = false;
    bool curvature = false;
    /// Whether the inverse-Hessian update was applied after this step, and
    /// whether the updated matrix passed a Cholesky factorisation.
    bool update_applied = false;
    bool cholesky_ok = false;
    int line_search_trials = 0;
};

struct BfgsResult {
    Eigen::VectorXd x;
    double cost = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd inverse_hessian;
    std::vector<BfgsIteration> trace;
    std::vector<double> cost_trace;  // J(x_0), J(x_1), ...
    bool converged = false;
    bool gradient_certified = false;
    int restarts = 0;  // resets of B to B_0 after a stall
    std::string message;

    int iterations() const noexcept { return static_cast<int>(trace.size()); }
};

namespace detail {

// Minimiser of the cubic matching f and f' at both ends of [a, b].
inline double cubic_minimizer(double a, double fa, double da, double b, double fb, double db) {
    const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - da * db;
    if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    return b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
}

}  // namespace detail

/// Quasi-Newton minimisation with the BFGS inverse-Hessian update and a
/// bracketing line search that returns a step satisfying both (weak) Wolfe
/// conditions:
///
///   J(x + l s) <= J(x) + c1 l g's,     g(x + l s)'s >= c2 g's.
///
/// `fg(x, grad)` returns J(x) and writes its gradient. Non-finite values are
/// treated as failed sufficient decrease. The update is skipped when the
/// curvature pair has d'y <= 0 or the result fails a Cholesky check.
template <class Objective>
BfgsResult minimize_bfgs(Objective&& fg, Eigen::VectorXd x0, const BfgsOptions& opt = {}) {
    opt.validate();
    const Eigen::Index n = x0.size();
    BfgsResult res;
    Eigen::VectorXd x = std::move(x0);
    Eigen::VectorXd g(n);
    double f = fg(x, g);
    if (!std::isfinite(f) || !g.allFinite()) throw NumericalError("minimize_bfgs: objective not finite at start");
    res.cost_trace.push_back(f);

    auto initial_inverse = [&](const Eigen::VectorXd& grad) -> Eigen::MatrixXd {
        const double norm = grad.norm();
        return Eigen::MatrixXd::Identity(n, n) * (opt.b0_scale / (norm > 0.0 ? norm : 1.0));
    };
    Eigen::MatrixXd b = initial_inverse(g);

    auto certified = [&](const Eigen::VectorXd& grad, double cost) {
        return grad.lpNorm<Eigen::Infinity>() <= opt.grad_tol * std::max(1.0, std::abs(cost));
    };
    bool fresh = true;  // b is B_0 and no step has been taken with it yet

    Eigen::VectorXd x_new(n), g_new(n);
    for (int k = 0; k < opt.max_iter; ++k) {
        if (g.lpNorm<Eigen::Infinity>() == 0.0) {
            res.converged = true;
            res.message = "zero gradient";
            break;
        }
        Eigen::VectorXd s = -b * g;
        double slope = g.dot(s);
        if (!(slope < 0.0)) {
            b = initial_inverse(g);
            s = -b * g;
            slope = g.dot(s);
        }

        // Bracketing search on lambda.
        double lo = 0.0, f_lo = f, d_lo = slope;
        double hi = std::numeric_limits<double>::infinity(), f_hi = 0.0, d_hi = 0.0;
        bool hi_finite = false;
        double lambda = 1.0;
        bool found = false;
        double f_trial = 0.0, d_trial = 0.0;
        int trials = 0;
        for (; trials < opt.max_line_search; ++trials) {
            x_new = x + lambda * s;
            f_trial = fg(x_new, g_new);
            const bool finite = std::isfinite(f_trial) && g_new.allFinite();
            d_trial = finite ? g_new.dot(s) : 0.0;
            if (!finite || f_trial > f + opt.c1 * lambda * slope) {
                hi = lambda;
                hi_finite = finite;
                f_hi = f_trial;
                d_hi = d_trial;
            } else if (d_trial < opt.c2 * slope) {
                lo = lambda;
                f_lo = f_trial;
                d_lo = d_trial;
            } else {
                found = true;
                break;
            }
            if (!std::isfinite(hi)) {
                lambda *= 4.0;
            } else {
                const double width = hi - lo;
                double next = hi_finite ? detail::cubic_minimizer(lo, f_lo, d_lo, hi, f_hi, d_hi)
                                        : std::numeric_limits<double>::quiet_NaN();
                if (!std::isfinite(next) || next < lo + 0.1 * width || next > hi - 0.1 * width)
                    next = lo + 0.5 * width;
                lambda = next;
                if (width <= 1e-16 * std::max(1.0, hi)) break;
            }
        }
        if (!found) {
            res.message = "line search failed to find a Wolfe step";
            break;
        }

        BfgsIteration it;
        it.k = k;
        it.cost = f;
        it.step_length = lambda;
        it.slope = slope;
        it.new_cost = f_trial;
        it.new_slope = d_trial;
        it.sufficient_decrease = f_trial <= f + opt.c1 * lambda * slope;
        it.curvature = d_trial >= opt.c2 * slope;
        it.line_search_trials = trials + 1;

        const Eigen::VectorXd delta = x_new - x;
        const Eigen::VectorXd gamma = g_new - g;
        const double dg = delta.dot(gamma);
        if (dg > 0.0) {
            const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(n, n) - delta * gamma.transpose() / dg;
            Eigen::MatrixXd updated = left * b * left.transpose() + delta * delta.transpose() / dg;
            updated = 0.5 * (updated + updated.transpose());
            Eigen::LLT<Eigen::MatrixXd> llt(updated);
            if (llt.info() == Eigen::Success) {
                b = std::move(updated);
                it.update_applied = true;
                it.cholesky_ok = true;
            }
        }

        const double f_prev = f;
        x = x_new;
        g = g_new;
        f = f_trial;
        res.trace.push_back(it);
        res.cost_trace.push_back(f);

        if (std::abs(f - f_prev) <= opt.tol * std::max(1.0, std::abs(f))) {
            if (certified(g, f)) {
                res.converged = true;
                res.message = "cost change below tolerance";
                break;
            }
            // Small step far from stationarity: the secant model has gone
            // stale. Restart from B_0 once before giving up.
            if (fresh) {
                res.message = "stalled: cost change below tolerance but gradient not small";
                break;
            }
            b = initial_inverse(g);
            fresh = true;
            ++res.restarts;
            continue;
        }
        fresh = false;
    }
    if (res.message.empty()) res.message = "maximum iterations reached";

    res.x = x;
    res.cost = f;
    res.gradient = g;
    res.inverse_hessian = b;
    res.gradient_certified = certified(g, f);
    return res;
}

}  // namespace ndc
