#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ndc/errors.hpp"
#include "ndc/ocv.hpp"

// Wiener-form view of the NDC model: a linear discrete-time block driving
// the static OCV nonlinearity,
//
//   V[k] = h(x[k]) - v1[k] + R0 u[k],
//   x  = G1(q) u + G2(q) v_s(0),    v1 = G3(q) u,
//
//   G1 = ((b1 + b2) q^-1 - (b1 b3 + b2) q^-2) / (1 - (1 + b3) q^-1 + b3 q^-2)
//   G3 = b4 q^-1 / (1 + b5 q^-1).
//
// Sample 0 is the rested initial condition; u[k] first affects x[k+1] and
// v1[k+1] but enters V[k] through R0.

namespace ndc::wiener {

inline constexpr std::size_t kThetaSize = 10;
using Vector10 = std::array<double, kThetaSize>;

/// [a1, a2, a3, a4, b1, b2, b3, b4, b5, R0] with discrete-time b's.
struct WienerTheta {
    enum Index : std::size_t { alpha1, alpha2, alpha3, alpha4, beta1, beta2, beta3, beta4, beta5, r0 };
    static constexpr std::array<const char*, kThetaSize> names = {"alpha1", "alpha2", "alpha3", "alpha4", "beta1",
                                                                   "beta2",  "beta3",  "beta4",  "beta5",  "r0"};

    Vector10 values{};

    double operator[](std::size_t i) const noexcept { return values[i]; }
    double& operator[](std::size_t i) noexcept { return values[i]; }

    /// Stability and sign invariants of the NDC parameterisation.
    void validate() const {
        detail::require(values[beta1] > 0.0, "WienerTheta: beta1 must be > 0");
        detail::require(values[beta3] > 0.0 && values[beta3] < 1.0, "WienerTheta: beta3 must lie in (0, 1)");
        detail::require(values[beta5] > -1.0 && values[beta5] < 0.0, "WienerTheta: beta5 must lie in (-1, 0)");
        detail::require(values[r0] > 0.0, "WienerTheta: r0 must be > 0");
    }
};

struct VoltageBounds {
    double v_min = 0.0;
    double v_max = 1.0;
};

inline OcvPolynomial ocv_of(const WienerTheta& th, const VoltageBounds& vb) {
    return OcvPolynomial(vb.v_min, {th[0], th[1], th[2], th[3]}, vb.v_max);
}

/// Gaussian prior N(m, diag(std^2)). An infinite standard deviation means no
/// prior information on that component.
struct GaussianPrior {
    Vector10 mean{};
    Vector10 std_dev{};

    static GaussianPrior flat() {
        GaussianPrior p;
        p.std_dev.fill(std::numeric_limits<double>::infinity());
        return p;
    }

    void validate() const {
        for (std::size_t i = 0; i < kThetaSize; ++i) {
            detail::require(std_dev[i] > 0.0, std::string("GaussianPrior: std of ") + WienerTheta::names[i] + " must be > 0");
            detail::require(std::isinf(std_dev[i]) || std::isfinite(mean[i]),
                            std::string("GaussianPrior: mean of ") + WienerTheta::names[i] + " must be finite");
        }
    }
};

struct MapConfig {
    double c1 = 1e-6;
    double c2 = 0.9;
    double tol = 1e-10;
    double grad_tol = 1e-6;
    int max_iter = 2000;
    double noise_var = 1.0;  // sigma^2, V^2
    /// Leading residuals excluded from the data term (filter start-up).
    std::size_t warmup = 2;

    void validate() const {
        detail::require(0.0 < c1 && c1 < c2 && c2 < 1.0, "MapConfig: need 0 < c1 < c2 < 1");
        detail::require(noise_var > 0.0 && std::isfinite(noise_var), "MapConfig: noise_var must be > 0");
        detail::require(max_iter > 0, "MapConfig: max_iter must be > 0");
        detail::require(tol >= 0.0 && grad_tol >= 0.0, "MapConfig: tolerances must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// Linear blocks

/// v_s[k] = (1 + b3) v_s[k-1] - b3 v_s[k-2] + (b1 + b2) u[k-1] - (b1 b3 + b2) u[k-2],
/// started from v_s[-1] = v_s[0] = v_s0 and u[k] = 0 for k < 0.
inline std::vector<double> filter_vs(const WienerTheta& th, std::span<const double> u, double v_s0) {
    const double b1 = th[WienerTheta::beta1], b2 = th[WienerTheta::beta2], b3 = th[WienerTheta::beta3];
    const double a1 = 1.0 + b3, a2 = -b3, n1 = b1 + b2, n2 = -(b1 * b3 + b2);
    std::vector<double> vs(u.size());
    // Deviation from v_s0 keeps the recursion well scaled; the constant is an
    // exact fixed point because 1 - (1 + b3) + b3 = 0.
    double d1 = 0.0, d2 = 0.0, u1 = 0.0, u2 = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        const double d = a1 * d1 + a2 * d2 + n1 * u1 + n2 * u2;
        vs[k] = v_s0 + d;
        d2 = d1;
        d1 = d;
        u2 = u1;
        u1 = u[k];
    }
    return vs;
}

/// v1[k] = -b5 v1[k-1] + b4 u[k-1], v1[0] = 0.
inline std::vector<double> filter_v1(const WienerTheta& th, std::span<const double> u) {
    const double b4 = th[WienerTheta::beta4], b5 = th[WienerTheta::beta5];
    std::vector<double> v1(u.size());
    double prev = 0.0, u1 = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        prev = -b5 * prev + b4 * u1;
        v1[k] = prev;
        u1 = u[k];
    }
    return v1;
}

inline std::vector<double> predict_voltage_wiener(const WienerTheta& th, std::span<const double> u, double v_s0,
                                                  const VoltageBounds& vb) {
    const auto h = ocv_of(th, vb);
    const auto x = filter_vs(th, u, v_s0);
    const auto v1 = filter_v1(th, u);
    std::vector<double> v(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) v[k] = h(x[k]) - v1[k] + th[WienerTheta::r0] * u[k];
    return v;
}

// ---------------------------------------------------------------------------
// Sensitivities

namespace impl {

// Columns of dV/dtheta, one row per sample, computed with the pole-zero
// cancelled forms of the derivative filters:
//   dx/db1 = q^-1/(1 - q^-1) u            dx/db2 = q^-1/(1 - b3 q^-1) u
//   dx/db3 = b2 q^-2/(1 - b3 q^-1)^2 u    dv1/db4 = q^-1/(1 + b5 q^-1) u
//   dv1/db5 = -b4 q^-2/(1 + b5 q^-1)^2 u
template <class RowSink>
void for_each_sensitivity(const WienerTheta& th, std::span<const double> u, double v_s0, const VoltageBounds& vb,
                          RowSink&& sink) {
    const auto h = ocv_of(th, vb);
    const auto x = filter_vs(th, u, v_s0);
    const auto v1 = filter_v1(th, u);
    const double b2 = th[WienerTheta::beta2], b3 = th[WienerTheta::beta3];
    const double b4 = th[WienerTheta::beta4], b5 = th[WienerTheta::beta5];

    double cum = 0.0;    // sum_{j<k} u[j]
    double fast = 0.0;   // q^-1/(1 - b3 q^-1) u
    double fast2 = 0.0;  // q^-2/(1 - b3 q^-1)^2 u
    double rc = 0.0;     // q^-1/(1 + b5 q^-1) u
    double rc2 = 0.0;    // q^-2/(1 + b5 q^-1)^2 u
    double u_prev = 0.0;
    Vector10 row{};
    for (std::size_t k = 0; k < u.size(); ++k) {
        if (k > 0) {
            fast2 = b3 * fast2 + fast;
            rc2 = -b5 * rc2 + rc;
            cum += u_prev;
            fast = b3 * fast + u_prev;
            rc = -b5 * rc + u_prev;
        }
        const double xk = x[k];
        const double x5 = std::pow(xk, 5);
        double p = 1.0;
        for (std::size_t i = 0; i < 4; ++i) {
            p *= xk;
            row[i] = p - x5;
        }
        const double sigma = h.derivative(xk);
        row[WienerTheta::beta1] = sigma * cum;
        row[WienerTheta::beta2] = sigma * fast;
        row[WienerTheta::beta3] = sigma * b2 * fast2;
        row[WienerTheta::beta4] = -rc;
        row[WienerTheta::beta5] = b4 * rc2;
        row[WienerTheta::r0] = u[k];
        const double v = h(xk) - v1[k] + th[WienerTheta::r0] * u[k];
        sink(k, v, row);
        u_prev = u[k];
    }
}

}  // namespace impl

/// N x 10 sensitivity matrix dV/dtheta.
inline Eigen::MatrixXd sensitivity_matrix(const WienerTheta& th, std::span<const double> u, double v_s0,
                                          const VoltageBounds& vb) {
    Eigen::MatrixXd s(static_cast<Eigen::Index>(u.size()), static_cast<Eigen::Index>(kThetaSize));
    impl::for_each_sensitivity(th, u, v_s0, vb, [&](std::size_t k, double, const Vector10& row) {
        for (std::size_t i = 0; i < kThetaSize; ++i)
            s(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = row[i];
    });
    return s;
}

/// Singular values of the sensitivity matrix after scaling every column to
/// unit 2-norm (all-zero columns stay zero). Full numerical rank is a local
/// identifiability certificate.
inline Eigen::VectorXd scaled_singular_values(Eigen::MatrixXd s) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
        const double n = s.col(j).norm();
        if (n > 0.0) s.col(j) /= n;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(s);
    return svd.singularValues();
}

// ---------------------------------------------------------------------------
// MAP cost

/// Data misfit plus Gaussian prior:
///
///   J = 1/2 sum_{k >= warmup} (z[k] - V[k])^2 / sigma^2 + 1/2 sum_i ((theta_i - m_i)/s_i)^2,
///
/// with infinite s_i contributing nothing.
class MapObjective {
public:
    MapObjective(std::span<const double> u, std::span<const double> z, GaussianPrior prior, MapConfig cfg,
                 double v_s0, VoltageBounds vb)
        : u_(u.begin(), u.end()), z_(z.begin(), z.end()), prior_(prior), cfg_(cfg), v_s0_(v_s0), vb_(vb) {
        detail::require(u.size() == z.size(), "MapObjective: u and z lengths differ");
        detail::require(u.size() > cfg.warmup, "MapObjective: not enough samples beyond the warm-up");
        prior_.validate();
        cfg_.validate();
    }

    const std::vector<double>& input() const noexcept { return u_; }
    const std::vector<double>& measured() const noexcept { return z_; }
    const GaussianPrior& prior() const noexcept { return prior_; }
    const MapConfig& config() const noexcept { return cfg_; }
    double v_s0() const noexcept { return v_s0_; }
    const VoltageBounds& bounds() const noexcept { return vb_; }

    double data_term(const WienerTheta& th) const {
        const auto v = predict_voltage_wiener(th, u_, v_s0_, vb_);
        double acc = 0.0;
        for (std::size_t k = cfg_.warmup; k < v.size(); ++k) {
            const double r = z_[k] - v[k];
            acc += r * r;
        }
        return 0.5 * acc / cfg_.noise_var;
    }

    double prior_term(const WienerTheta& th) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < kThetaSize; ++i) {
            if (std::isinf(prior_.std_dev[i])) continue;
            const double d = (th[i] - prior_.mean[i]) / prior_.std_dev[i];
            acc += d * d;
        }
        return 0.5 * acc;
    }

    double cost(const WienerTheta& th) const { return data_term(th) + prior_term(th); }

    /// Cost and gradient in one pass.
    double evaluate(const WienerTheta& th, Vector10& grad) const {
        grad.fill(0.0);
        double acc = 0.0;
        impl::for_each_sensitivity(th, u_, v_s0_, vb_, [&](std::size_t k, double v, const Vector10& row) {
            if (k < cfg_.warmup) return;
            const double r = z_[k] - v;
            acc += r * r;
            for (std::size_t i = 0; i < kThetaSize; ++i) grad[i] -= r * row[i];
        });
        for (double& g : grad) g /= cfg_.noise_var;
        for (std::size_t i = 0; i < kThetaSize; ++i) {
            if (std::isinf(prior_.std_dev[i])) continue;
            grad[i] += (th[i] - prior_.mean[i]) / (prior_.std_dev[i] * prior_.std_dev[i]);
        }
        return 0.5 * acc / cfg_.noise_var + prior_term(th);
    }

    /// Gauss-Newton approximation S'S/sigma^2 + P^-1 of the Hessian.
    Eigen::Matrix<double, 10, 10> gauss_newton(const WienerTheta& th) const {
        Eigen::Matrix<double, 10, 10> h = Eigen::Matrix<double, 10, 10>::Zero();
        impl::for_each_sensitivity(th, u_, v_s0_, vb_, [&](std::size_t k, double, const Vector10& row) {
            if (k < cfg_.warmup) return;
            const Eigen::Map<const Eigen::Matrix<double, 10, 1>> j(row.data());
            h.selfadjointView<Eigen::Lower>().rankUpdate(j);
        });
        Eigen::Matrix<double, 10, 10> full = h.selfadjointView<Eigen::Lower>();
        full /= cfg_.noise_var;
        for (std::size_t i = 0; i < kThetaSize; ++i)
            if (!std::isinf(prior_.std_dev[i]))
                full(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) +=
                    1.0 / (prior_.std_dev[i] * prior_.std_dev[i]);
        return full;
    }

private:
    std::vector<double> u_;
    std::vector<double> z_;
    GaussianPrior prior_;
    MapConfig cfg_;
    double v_s0_;
    VoltageBounds vb_;
};

inline double map_cost(const WienerTheta& th, std::span<const double> u, std::span<const double> z,
                       const GaussianPrior& prior, const MapConfig& cfg, double v_s0, const VoltageBounds& vb) {
    return MapObjective(u, z, prior, cfg, v_s0, vb).cost(th);
}

/// g = -(dV/dtheta)' R^-1 (z - V) + P^-1 (theta - m).
inline Vector10 map_gradient(const WienerTheta& th, std::span<const double> u, std::span<const double> z,
                             const GaussianPrior& prior, const MapConfig& cfg, double v_s0, const VoltageBounds& vb) {
    Vector10 g{};
    MapObjective(u, z, prior, cfg, v_s0, vb).evaluate(th, g);
    return g;
}

}  // namespace ndc::wiener
