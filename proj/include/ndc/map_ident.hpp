#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ndc/bfgs.hpp"
#include "ndc/errors.hpp"
#include "ndc/model.hpp"
#include "ndc/simulate.hpp"
#include "ndc/wiener.hpp"

namespace ndc::wiener {

// ---------------------------------------------------------------------------
// Physical <-> discrete parameter maps

struct DiscreteBetas {
    double beta1 = 0.0;
    double beta2 = 0.0;
    double beta3 = 0.0;
    double beta4 = 0.0;
    double beta5 = 0.0;
};

/// Discrete-time coefficients of G1 and G3 from the continuous A, B entries:
///
///   b1 = (A21 B1 + A12 B2)/(A12 + A21) dt,   b3 = exp(-(A12 + A21) dt),
///   b2 = A21 (B2 - B1)/(A12 + A21)^2 (1 - b3),
///   b5 = -exp(A33 dt),   b4 = -(b5 + 1) B3 / A33.
///
/// With R_s = 0 this is b1 = dt/(C_b + C_s). A shorted RC branch gives b4 = b5 = 0.
inline DiscreteBetas beta_from_physical(const NdcParams& p, double dt) {
    p.validate();
    detail::require(std::isfinite(dt) && dt > 0.0, "beta_from_physical: dt must be > 0");
    const double r = p.r_b + p.r_s;
    const double a12 = 1.0 / (p.c_b * r);
    const double a21 = 1.0 / (p.c_s * r);
    const double b1c = p.r_s / (p.c_b * r);
    const double b2c = p.r_b / (p.c_s * r);
    const double s = a12 + a21;

    DiscreteBetas out;
    out.beta3 = std::exp(-s * dt);
    out.beta1 = (a21 * b1c + a12 * b2c) / s * dt;
    out.beta2 = a21 * (b2c - b1c) / (s * s) * (-std::expm1(-s * dt));
    if (p.has_rc_branch()) {
        const double tau = p.r_1 * p.c_1;
        out.beta5 = -std::exp(-dt / tau);
        // -(b5 + 1) B3 / A33 = -(1 - e^{-dt/tau}) R1
        out.beta4 = p.r_1 * std::expm1(-dt / tau);
    }
    return out;
}

/// Full parameter vector for a model with constant R0.
inline WienerTheta theta_from_physical(const NdcParams& p, double dt) {
    const auto* r0 = std::get_if<SocR0Law::Constant>(&p.r0.variant());
    detail::require(r0 != nullptr, "theta_from_physical: R0 must be constant");
    const auto b = beta_from_physical(p, dt);
    WienerTheta th;
    const auto& a = p.ocv.interior();
    for (std::size_t i = 0; i < 4; ++i) th[i] = a[i];
    th[WienerTheta::beta1] = b.beta1;
    th[WienerTheta::beta2] = b.beta2;
    th[WienerTheta::beta3] = b.beta3;
    th[WienerTheta::beta4] = b.beta4;
    th[WienerTheta::beta5] = b.beta5;
    th[WienerTheta::r0] = r0->r0;
    return th;
}

/// Physical parameters (R_s = 0, constant R0) from a discrete estimate:
///
///   C_s = (1 - b3) dt / (b1 - b1 b3 - b2 log b3),   C_b = dt/b1 - C_s,
///   R_b = -dt^2 / (C_b C_s b1 log b3),   R1 = -b4/(b5 + 1),   C1 = -dt/(log(-b5) R1).
inline NdcParams reconstruct_physical_wiener(const WienerTheta& th, double dt, const VoltageBounds& vb = {}) {
    detail::require(std::isfinite(dt) && dt > 0.0, "reconstruct_physical_wiener: dt must be > 0");
    const double b1 = th[WienerTheta::beta1], b2 = th[WienerTheta::beta2], b3 = th[WienerTheta::beta3];
    const double b4 = th[WienerTheta::beta4], b5 = th[WienerTheta::beta5];
    if (!(b1 > 0.0)) throw NumericalError("reconstruct_physical_wiener: beta1 must be > 0");
    if (!(b3 > 0.0 && b3 < 1.0)) throw NumericalError("reconstruct_physical_wiener: log(beta3) needs beta3 in (0, 1)");
    if (!(b5 > -1.0 && b5 < 0.0)) throw NumericalError("reconstruct_physical_wiener: log(-beta5) needs beta5 in (-1, 0)");
    const double log_b3 = std::log(b3);
    const double den_s = b1 - b1 * b3 - b2 * log_b3;
    if (den_s == 0.0) throw NumericalError("reconstruct_physical_wiener: zero denominator in C_s");

    NdcParams p;
    p.c_s = (1.0 - b3) * dt / den_s;
    p.c_b = dt / b1 - p.c_s;
    p.r_b = -(dt * dt) / (p.c_b * p.c_s * b1 * log_b3);
    p.r_s = 0.0;
    p.r_1 = -b4 / (b5 + 1.0);
    if (!(p.r_1 > 0.0)) throw NumericalError("reconstruct_physical_wiener: R1 = -beta4/(beta5 + 1) is not positive");
    const double log_b5 = std::log(-b5);
    if (log_b5 == 0.0) throw NumericalError("reconstruct_physical_wiener: zero denominator in C1");
    p.c_1 = -dt / (log_b5 * p.r_1);
    p.r0 = SocR0Law::constant(th[WienerTheta::r0]);
    p.ocv = ocv_of(th, vb);
    return p;
}

// ---------------------------------------------------------------------------
// MAP solver

/// Which components are estimated; the rest stay at their initial values.
using FreeMask = std::array<bool, kThetaSize>;

inline constexpr FreeMask kAllFree = {true, true, true, true, true, true, true, true, true, true};

struct MapResult {
    WienerTheta theta;
    double cost = 0.0;
    Vector10 gradient{};  // in the original theta coordinates
    /// Concatenated solver record. Each phase runs in its own internal
    /// coordinates; x, gradient and inverse_hessian belong to the last one.
    BfgsResult solver;
    int phases = 0;
    FreeMask free = kAllFree;
};

namespace impl {

// Internal coordinates. beta3 and -beta5 go through a logistic map onto
// (0, 1), beta1 and R0 through a log map onto (0, inf). The warped vector t
// is then shifted to the phase's starting point and mapped linearly,
// t = offset + map z.
enum class Warp { linear, log, logit, neg_logit };

inline constexpr std::array<Warp, kThetaSize> kWarp = {Warp::linear, Warp::linear, Warp::linear, Warp::linear,
                                                      Warp::log,    Warp::linear, Warp::logit,  Warp::linear,
                                                      Warp::neg_logit, Warp::log};

inline double warp(Warp w, double v) {
    switch (w) {
        case Warp::linear: return v;
        case Warp::log: return std::log(v);
        case Warp::logit: return std::log(v / (1.0 - v));
        case Warp::neg_logit: return std::log(-v / (1.0 + v));
    }
    return v;
}

inline double unwarp(Warp w, double t) {
    switch (w) {
        case Warp::linear: return t;
        case Warp::log: return std::exp(t);
        case Warp::logit: return 1.0 / (1.0 + std::exp(-t));
        case Warp::neg_logit: return -1.0 / (1.0 + std::exp(-t));
    }
    return t;
}

// d theta / d t at theta.
inline double unwarp_slope(Warp w, double v) {
    switch (w) {
        case Warp::linear: return 1.0;
        case Warp::log: return v;
        case Warp::logit: return v * (1.0 - v);
        case Warp::neg_logit: return v * (1.0 + v);
    }
    return 1.0;
}

struct Coordinates {
    std::vector<std::size_t> index;  // internal slot -> theta component
    WienerTheta origin;
    Eigen::VectorXd offset;
    Eigen::MatrixXd map;

    Coordinates(const WienerTheta& start, const FreeMask& mask) : origin(start) {
        for (std::size_t i = 0; i < kThetaSize; ++i)
            if (mask[i]) index.push_back(i);
        offset.resize(size());
        for (Eigen::Index a = 0; a < size(); ++a) offset(a) = warp(kWarp[slot(a)], start[slot(a)]);
        map = Eigen::MatrixXd::Identity(size(), size());
    }

    /// One unit of z is one prior standard deviation (carried through the
    /// warp at the prior mean), or the size of the start value when there is
    /// no prior.
    static Coordinates prior_scaled(const WienerTheta& start, const GaussianPrior& prior, const FreeMask& mask) {
        Coordinates c(start, mask);
        for (Eigen::Index a = 0; a < c.size(); ++a) {
            const std::size_t i = c.slot(a);
            double s = 1.0;
            if (!std::isinf(prior.std_dev[i]))
                s = prior.std_dev[i] / std::abs(unwarp_slope(kWarp[i], prior.mean[i]));
            else if (kWarp[i] == Warp::linear)
                s = std::abs(start[i]);
            c.map(a, a) = s > 0.0 && std::isfinite(s) ? s : 1.0;
        }
        return c;
    }

    /// Whitened by the Cholesky factor of the Gauss-Newton Hessian at the
    /// start, so the local quadratic model has unit curvature.
    static Coordinates whitened(const WienerTheta& start, const Eigen::Matrix<double, 10, 10>& hessian,
                                const GaussianPrior& prior, const FreeMask& mask) {
        Coordinates c(start, mask);
        const Eigen::Index n = c.size();
        Eigen::MatrixXd h(n, n);
        for (Eigen::Index a = 0; a < n; ++a)
            for (Eigen::Index b = 0; b < n; ++b)
                h(a, b) = unwarp_slope(kWarp[c.slot(a)], start[c.slot(a)]) *
                          hessian(static_cast<Eigen::Index>(c.slot(a)), static_cast<Eigen::Index>(c.slot(b))) *
                          unwarp_slope(kWarp[c.slot(b)], start[c.slot(b)]);
        const Eigen::LLT<Eigen::MatrixXd> llt(h);
        if (!h.allFinite() || llt.info() != Eigen::Success) return prior_scaled(start, prior, mask);
        c.map = llt.matrixU().solve(Eigen::MatrixXd::Identity(n, n));
        return c;
    }

    Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(index.size()); }
    std::size_t slot(Eigen::Index a) const { return index[static_cast<std::size_t>(a)]; }

    WienerTheta to_theta(const Eigen::VectorXd& z) const {
        const Eigen::VectorXd t = offset + map * z;
        WienerTheta th = origin;
        for (Eigen::Index a = 0; a < size(); ++a) th[slot(a)] = unwarp(kWarp[slot(a)], t(a));
        return th;
    }

    void chain(const WienerTheta& th, const Vector10& g_theta, Eigen::VectorXd& g_z) const {
        Eigen::VectorXd g_t(size());
        for (Eigen::Index a = 0; a < size(); ++a) g_t(a) = g_theta[slot(a)] * unwarp_slope(kWarp[slot(a)], th[slot(a)]);
        g_z.noalias() = map.transpose() * g_t;
    }
};

inline bool admissible(const WienerTheta& th) {
    for (double v : th.values)
        if (!std::isfinite(v)) return false;
    // Saturated warps collapse onto the boundary of the stable region.
    return th[WienerTheta::beta1] > 0.0 && th[WienerTheta::r0] > 0.0 && th[WienerTheta::beta3] > 0.0 &&
           th[WienerTheta::beta3] < 1.0 && th[WienerTheta::beta5] > -1.0 && th[WienerTheta::beta5] < 0.0;
}

inline BfgsResult run_phase(const Coordinates& coords, const MapObjective& objective, const BfgsOptions& opt) {
    auto fg = [&](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
        const WienerTheta th = coords.to_theta(z);
        if (!admissible(th)) {
            g.setZero();
            return std::numeric_limits<double>::infinity();
        }
        Vector10 g_theta{};
        const double f = objective.evaluate(th, g_theta);
        coords.chain(th, g_theta, g);
        return f;
    };
    return minimize_bfgs(fg, Eigen::VectorXd::Zero(coords.size()), opt);
}

inline void append_phase(BfgsResult& all, BfgsResult phase) {
    const int k0 = all.iterations();
    for (auto& it : phase.trace) {
        it.k += k0;
        all.trace.push_back(it);
    }
    all.cost_trace.insert(all.cost_trace.end(), phase.cost_trace.begin() + (all.cost_trace.empty() ? 0 : 1),
                          phase.cost_trace.end());
    all.restarts += phase.restarts;
    all.x = std::move(phase.x);
    all.cost = phase.cost;
    all.gradient = std::move(phase.gradient);
    all.inverse_hessian = std::move(phase.inverse_hessian);
    all.converged = phase.converged;
    all.gradient_certified = phase.gradient_certified;
    all.message = std::move(phase.message);
}

}  // namespace impl

/// MAP estimate by quasi-Newton iteration with a Wolfe line search. The
/// stability constraints on beta3, beta5 and the positivity of beta1, R0 are
/// enforced by reparameterisation, so every iterate is a stable filter.
///
/// The first phase runs in prior-scaled coordinates. If it ends without a
/// gradient certificate, the search continues from where it stopped in
/// coordinates whitened by the Gauss-Newton Hessian there, until a phase
/// converges, stops making progress, or the iteration budget is spent.
inline MapResult quasi_newton_solve(const WienerTheta& theta0, const MapObjective& objective,
                                    const FreeMask& mask = kAllFree) {
    theta0.validate();
    constexpr int kMaxPhases = 6;
    const auto& cfg = objective.config();
    BfgsOptions opt;
    opt.c1 = cfg.c1;
    opt.c2 = cfg.c2;
    opt.tol = cfg.tol;
    opt.grad_tol = cfg.grad_tol;
    opt.max_iter = cfg.max_iter;

    MapResult out;
    out.free = mask;
    WienerTheta theta = theta0;
    auto coords = impl::Coordinates::prior_scaled(theta, objective.prior(), mask);
    detail::require(coords.size() > 0, "quasi_newton_solve: no free parameters");
    while (true) {
        auto phase = impl::run_phase(coords, objective, opt);
        const double start_cost = phase.cost_trace.front();
        theta = coords.to_theta(phase.x);
        impl::append_phase(out.solver, std::move(phase));
        ++out.phases;
        opt.max_iter = cfg.max_iter - out.solver.iterations();
        const bool progress = start_cost - out.solver.cost > cfg.tol * std::max(1.0, std::abs(out.solver.cost));
        if (out.solver.gradient_certified || !progress || opt.max_iter <= 0 || out.phases == kMaxPhases) break;
        coords = impl::Coordinates::whitened(theta, objective.gauss_newton(theta), objective.prior(), mask);
    }
    if (out.solver.gradient_certified && !out.solver.converged) {
        out.solver.converged = true;
        out.solver.message = "gradient certificate met";
    }
    out.theta = theta;
    out.cost = objective.evaluate(out.theta, out.gradient);
    return out;
}

inline MapResult quasi_newton_solve(const WienerTheta& theta0, std::span<const double> u, std::span<const double> z,
                                    const GaussianPrior& prior, const MapConfig& cfg, double v_s0,
                                    const VoltageBounds& vb, const FreeMask& mask = kAllFree) {
    return quasi_newton_solve(theta0, MapObjective(u, z, prior, cfg, v_s0, vb), mask);
}

// ---------------------------------------------------------------------------
// Comparison-model adapters
//
// Rint, Thevenin and the basic NDC model are Wiener systems obtained by
// pinning parts of the NDC parameter vector: no diffusion branch means
// beta2 = 0 (x reduces to coulomb counting), no RC pair means beta4 = 0.

enum class ModelKind { rint, thevenin, basic_ndc, ndc };

inline std::string_view to_string(ModelKind k) noexcept {
    switch (k) {
        case ModelKind::rint: return "rint";
        case ModelKind::thevenin: return "thevenin";
        case ModelKind::basic_ndc: return "basic_ndc";
        case ModelKind::ndc: return "ndc";
    }
    return "unknown";
}

inline FreeMask free_mask(ModelKind kind) {
    FreeMask m = kAllFree;
    if (kind == ModelKind::rint || kind == ModelKind::thevenin) m[WienerTheta::beta2] = m[WienerTheta::beta3] = false;
    if (kind == ModelKind::rint || kind == ModelKind::basic_ndc) m[WienerTheta::beta4] = m[WienerTheta::beta5] = false;
    return m;
}

/// Initial guess restricted to the structure of `kind`; pinned components
/// get values that switch their block off.
inline WienerTheta restrict_theta(WienerTheta th, ModelKind kind) {
    const auto m = free_mask(kind);
    if (!m[WienerTheta::beta2]) {
        th[WienerTheta::beta2] = 0.0;
        th[WienerTheta::beta3] = 0.5;
    }
    if (!m[WienerTheta::beta4]) {
        th[WienerTheta::beta4] = 0.0;
        th[WienerTheta::beta5] = -0.5;
    }
    return th;
}

inline ComparisonModel to_comparison_model(const WienerTheta& th, ModelKind kind, double dt, const VoltageBounds& vb) {
    const auto ocv = ocv_of(th, vb);
    const double q_t = dt / th[WienerTheta::beta1];
    const double r0 = th[WienerTheta::r0];
    auto rc = [&] {
        const double r1 = -th[WienerTheta::beta4] / (th[WienerTheta::beta5] + 1.0);
        if (!(r1 > 0.0)) throw NumericalError("identified RC branch has non-positive resistance");
        return std::pair{r1, -dt / (std::log(-th[WienerTheta::beta5]) * r1)};
    };
    switch (kind) {
        case ModelKind::rint: return RintModel{r0, ocv, q_t};
        case ModelKind::thevenin: {
            const auto [r1, c1] = rc();
            return TheveninModel{r0, r1, c1, ocv, q_t};
        }
        case ModelKind::basic_ndc: {
            WienerTheta full = th;
            full[WienerTheta::beta4] = -1.0;  // placeholder RC, dropped below
            full[WienerTheta::beta5] = -0.5;
            NdcParams p = reconstruct_physical_wiener(full, dt, vb);
            p.r_1 = 0.0;
            return BasicNdcModel{p};
        }
        case ModelKind::ndc: return FullNdcModel{reconstruct_physical_wiener(th, dt, vb)};
    }
    throw InvalidArgument("to_comparison_model: unknown model kind");
}

struct ComparisonFit {
    ModelKind kind;
    MapResult map;
    ComparisonModel model;
};

inline ComparisonFit identify_model(ModelKind kind, const WienerTheta& theta0, const MapObjective& objective,
                                    double dt) {
    auto map = quasi_newton_solve(restrict_theta(theta0, kind), objective, free_mask(kind));
    auto model = to_comparison_model(map.theta, kind, dt, objective.bounds());
    return {kind, std::move(map), std::move(model)};
}

}  // namespace ndc::wiener
