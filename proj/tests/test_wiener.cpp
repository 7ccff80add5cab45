#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "ndc/filters.hpp"
#include "ndc/map_ident.hpp"
#include "ndc/profile.hpp"
#include "ndc/wiener.hpp"
#include "reference_values.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using ndc::wiener::WienerTheta;

namespace {

constexpr ndc::wiener::VoltageBounds kBounds{ref::kVMin, ref::kVMax};

WienerTheta truth() { return ndc::wiener::theta_from_physical(ref::cell_map(), 1.0); }

std::vector<double> drive(std::uint64_t seed, double amps, double seconds) {
    return ndc::generate_profile(ndc::DriveCycleProfile{seed, 0.0, -amps, seconds, 10.0}, 1.0);
}

ndc::wiener::MapConfig quiet_config() {
    ndc::wiener::MapConfig cfg;
    cfg.noise_var = 4e-6;
    return cfg;
}

}  // namespace

TEST_CASE("linear blocks equal the uncancelled transfer functions", "[wiener]") {
    const auto th = ref::map_estimate();
    const auto u = drive(3, 3.0, 500.0);
    const double b1 = th[WienerTheta::beta1], b2 = th[WienerTheta::beta2], b3 = th[WienerTheta::beta3];
    const double b4 = th[WienerTheta::beta4], b5 = th[WienerTheta::beta5];

    // G1 = b1 q^-1/(1 - q^-1) + b2 q^-1/(1 - b3 q^-1) over a common denominator.
    const std::vector<double> num = {0.0, b1 + b2, -(b1 * b3 + b2)};
    const std::vector<double> den = {1.0, -(1.0 + b3), b3};
    const auto ref_vs = ndc::lfilter(num, den, u);
    const auto vs = ndc::wiener::filter_vs(th, u, 0.9);
    for (std::size_t k = 0; k < u.size(); ++k) CHECK_THAT(vs[k] - 0.9, WithinAbs(ref_vs[k], 1e-12));

    const std::vector<double> num3 = {0.0, b4};
    const std::vector<double> den3 = {1.0, b5};
    const auto ref_v1 = ndc::lfilter(num3, den3, u);
    const auto v1 = ndc::wiener::filter_v1(th, u);
    for (std::size_t k = 0; k < u.size(); ++k) CHECK_THAT(v1[k], WithinAbs(ref_v1[k], 1e-15));

    SECTION("the common denominator factors into the two poles") {
        const std::vector<double> integrator = {1.0, -1.0}, fast = {1.0, -b3};
        const auto prod = ndc::poly_multiply(integrator, fast);
        for (std::size_t i = 0; i < den.size(); ++i) CHECK_THAT(prod[i], WithinAbs(den[i], 1e-15));
    }
}

TEST_CASE("impulse response splits into integrator and diffusion terms", "[wiener]") {
    const auto th = ref::map_estimate();
    std::vector<double> u(4000, 0.0);
    u[0] = 1.0;
    const auto vs = ndc::wiener::filter_vs(th, u, 0.0);
    CHECK(vs[0] == 0.0);
    CHECK_THAT(vs[1], WithinRel(th[WienerTheta::beta1] + th[WienerTheta::beta2], 1e-12));
    CHECK_THAT(vs[2], WithinRel(th[WienerTheta::beta1] + th[WienerTheta::beta2] * th[WienerTheta::beta3], 1e-12));
    CHECK_THAT(vs.back(), WithinRel(th[WienerTheta::beta1], 1e-9));
}

TEST_CASE("RC branch settles at b4 u/(1 + b5) = -R1 u", "[wiener]") {
    const auto th = truth();
    const std::vector<double> u(2000, -3.0);
    const auto v1 = ndc::wiener::filter_v1(th, u);
    CHECK_THAT(v1.back(), WithinRel(th[WienerTheta::beta4] * -3.0 / (1.0 + th[WienerTheta::beta5]), 1e-12));
    CHECK_THAT(v1.back(), WithinRel(-0.003 * -3.0, 1e-12));
}

TEST_CASE("current step produces an instantaneous ohmic drop", "[wiener]") {
    std::vector<double> u(100, 0.0);
    std::fill(u.begin() + 50, u.end(), -3.0);
    const auto v = ndc::wiener::predict_voltage_wiener(ref::map_estimate(), u, 1.0, kBounds);
    CHECK_THAT(v[50] - v[49], WithinAbs(-0.207, 1e-12));
    CHECK_THAT(v[0], WithinAbs(ref::kVMax, 1e-12));
}

TEST_CASE("MAP cost", "[wiener][map]") {
    const auto th = truth();
    const auto u = drive(7, 3.0, 300.0);
    auto z = ndc::wiener::predict_voltage_wiener(th, u, 1.0, kBounds);
    ndc::wiener::GaussianPrior prior = ndc::wiener::GaussianPrior::flat();
    prior.mean = th.values;
    ndc::wiener::MapConfig cfg;

    SECTION("zero at the generating parameters") { CHECK(ndc::wiener::map_cost(th, u, z, prior, cfg, 1.0, kBounds) == 0.0); }
    SECTION("single residual") {
        z[100] += 0.01;
        CHECK_THAT(ndc::wiener::map_cost(th, u, z, prior, cfg, 1.0, kBounds), WithinRel(0.5 * 1e-4, 1e-9));
        cfg.noise_var = 1e-4;
        CHECK_THAT(ndc::wiener::map_cost(th, u, z, prior, cfg, 1.0, kBounds), WithinRel(0.5, 1e-9));
    }
    SECTION("warm-up samples are ignored") {
        z[1] += 1.0;
        CHECK(ndc::wiener::map_cost(th, u, z, prior, cfg, 1.0, kBounds) == 0.0);
        cfg.warmup = 0;
        CHECK(ndc::wiener::map_cost(th, u, z, prior, cfg, 1.0, kBounds) > 0.0);
    }
    SECTION("prior term") {
        prior.std_dev[WienerTheta::r0] = 0.01;
        auto off = th;
        off[WienerTheta::r0] += 0.02;
        const ndc::wiener::MapObjective obj(u, z, prior, cfg, 1.0, kBounds);
        CHECK_THAT(obj.prior_term(off), WithinRel(2.0, 1e-12));
    }
    SECTION("flat prior leaves the pure data misfit") {
        const ndc::wiener::MapObjective obj(u, z, prior, cfg, 1.0, kBounds);
        auto off = th;
        for (auto& v : off.values) v *= 1.01;
        CHECK(obj.prior_term(off) == 0.0);
        CHECK(obj.cost(off) == obj.data_term(off));
    }
}

TEST_CASE("MAP gradient matches finite differences", "[wiener][map]") {
    const auto u = drive(9, 3.0, 1500.0);
    const auto z = ndc::wiener::predict_voltage_wiener(truth(), u, 1.0, kBounds);
    const ndc::wiener::MapObjective obj(u, z, ref::map_prior(), quiet_config(), 1.0, kBounds);
    const auto th = ref::map_prior_mean();
    ndc::wiener::Vector10 g{};
    obj.evaluate(th, g);
    for (std::size_t i = 0; i < ndc::wiener::kThetaSize; ++i) {
        auto up = th, down = th;
        const double h = 1e-6 * std::abs(th[i]);
        up[i] += h;
        down[i] -= h;
        const double fd = (obj.cost(up) - obj.cost(down)) / (2 * h);
        CHECK_THAT(g[i], WithinRel(fd, 1e-4));
    }
}

TEST_CASE("sensitivity of the voltage to R0 is the current", "[wiener]") {
    const auto u = drive(4, 6.0, 400.0);
    const auto s = ndc::wiener::sensitivity_matrix(truth(), u, 1.0, kBounds);
    for (std::size_t k = 0; k < u.size(); ++k) CHECK(s(static_cast<Eigen::Index>(k), WienerTheta::r0) == u[k]);
}

TEST_CASE("local identifiability", "[wiener]") {
    SECTION("full rank on a varied load") {
        const auto u = drive(5, 3.0, 7000.0);
        const auto sv = ndc::wiener::scaled_singular_values(ndc::wiener::sensitivity_matrix(truth(), u, 1.0, kBounds));
        CHECK(sv(9) > 1e-8 * sv(0));
    }
    SECTION("rank deficient at rest") {
        const std::vector<double> u(500, 0.0);
        const auto sv = ndc::wiener::scaled_singular_values(ndc::wiener::sensitivity_matrix(truth(), u, 0.8, kBounds));
        CHECK(sv(0) > 0.0);
        CHECK(sv(9) <= 1e-12 * sv(0));
    }
}

TEST_CASE("MAP solver limits", "[wiener][map]") {
    const auto u = drive(5, 3.0, 3000.0);

    SECTION("a very tight prior pins the estimate to its mean") {
        const auto z = ndc::wiener::predict_voltage_wiener(truth(), u, 1.0, kBounds);
        auto prior = ref::map_prior();
        for (std::size_t i = 0; i < ndc::wiener::kThetaSize; ++i) prior.std_dev[i] = 1e-9 * std::abs(prior.mean[i]);
        const auto res = ndc::wiener::quasi_newton_solve(ref::map_prior_mean(), u, z, prior, quiet_config(), 1.0, kBounds);
        for (std::size_t i = 0; i < ndc::wiener::kThetaSize; ++i)
            CHECK_THAT(res.theta[i], WithinRel(prior.mean[i], 1e-6));
    }
    SECTION("starting at the optimum stays there") {
        const auto z = ndc::wiener::predict_voltage_wiener(truth(), u, 1.0, kBounds);
        auto prior = ref::map_prior();
        prior.mean = truth().values;
        const auto res = ndc::wiener::quasi_newton_solve(truth(), u, z, prior, quiet_config(), 1.0, kBounds);
        CHECK(res.solver.converged);
        CHECK(res.cost <= 1e-12);
        for (std::size_t i = 0; i < ndc::wiener::kThetaSize; ++i) CHECK_THAT(res.theta[i], WithinRel(truth()[i], 1e-12));
    }
    SECTION("iterates stay stable filters") {
        const auto z = ndc::wiener::predict_voltage_wiener(truth(), u, 1.0, kBounds);
        const auto res =
            ndc::wiener::quasi_newton_solve(ref::map_prior_mean(), u, z, ref::map_prior(), quiet_config(), 1.0, kBounds);
        CHECK_NOTHROW(res.theta.validate());
        for (std::size_t k = 1; k < res.solver.cost_trace.size(); ++k)
            CHECK(res.solver.cost_trace[k] <= res.solver.cost_trace[k - 1]);
    }
}

TEST_CASE("physical reconstruction", "[wiener]") {
    SECTION("reference estimate") {
        const auto p = ndc::wiener::reconstruct_physical_wiener(ref::map_estimate(), 1.0, kBounds);
        CHECK_THAT(p.c_b + p.c_s, WithinRel(11011.0, 1e-4));
        CHECK_THAT(p.c_b + p.c_s, WithinRel(1.0 / 9.082e-5, 1e-12));
        CHECK(p.r0.is_constant());
    }
    SECTION("round trip from physical parameters") {
        for (double dt : {0.5, 1.0, 5.0}) {
            const auto p = ref::cell_map();
            const auto back = ndc::wiener::reconstruct_physical_wiener(ndc::wiener::theta_from_physical(p, dt), dt, kBounds);
            CHECK_THAT(back.c_b, WithinRel(p.c_b, 1e-9));
            CHECK_THAT(back.c_s, WithinRel(p.c_s, 1e-9));
            CHECK_THAT(back.r_b, WithinRel(p.r_b, 1e-9));
            CHECK_THAT(back.r_1, WithinRel(p.r_1, 1e-9));
            CHECK_THAT(back.c_1, WithinRel(p.c_1, 1e-9));
        }
    }
    SECTION("out-of-domain coefficients") {
        auto th = ref::map_estimate();
        th[WienerTheta::beta3] = 1.0;
        CHECK_THROWS_AS(ndc::wiener::reconstruct_physical_wiener(th, 1.0), ndc::NumericalError);
        th = ref::map_estimate();
        th[WienerTheta::beta4] = 1e-4;
        CHECK_THROWS_AS(ndc::wiener::reconstruct_physical_wiener(th, 1.0), ndc::NumericalError);
    }
    SECTION("shorted RC branch and SoC-dependent R0") {
        auto p = ref::cell_map();
        p.r_1 = 0.0;
        const auto b = ndc::wiener::beta_from_physical(p, 1.0);
        CHECK(b.beta4 == 0.0);
        CHECK(b.beta5 == 0.0);
        CHECK_THROWS_AS(ndc::wiener::theta_from_physical(ref::cell_cc(), 1.0), ndc::InvalidArgument);
    }
}

TEST_CASE("comparison adapters pin their switched-off blocks", "[wiener]") {
    using ndc::wiener::ModelKind;
    const auto rint = ndc::wiener::restrict_theta(ref::map_prior_mean(), ModelKind::rint);
    CHECK(rint[WienerTheta::beta2] == 0.0);
    CHECK(rint[WienerTheta::beta4] == 0.0);
    const auto mask = ndc::wiener::free_mask(ModelKind::thevenin);
    CHECK_FALSE(mask[WienerTheta::beta2]);
    CHECK(mask[WienerTheta::beta4]);
    CHECK(ndc::wiener::free_mask(ModelKind::ndc) == ndc::wiener::kAllFree);

    const auto m = ndc::wiener::to_comparison_model(rint, ModelKind::rint, 1.0, kBounds);
    CHECK(m.name() == "rint");
    CHECK_THAT(m.total_capacity(), WithinRel(1.0 / 9.078e-5, 1e-12));

    // A rint-restricted Wiener model and the rint simulator agree.
    const auto u = drive(2, 3.0, 600.0);
    const auto w = ndc::wiener::predict_voltage_wiener(rint, u, 1.0, kBounds);
    const auto s = ndc::predict(m, u, 1.0, 1.0);
    for (std::size_t k = 0; k < u.size(); ++k) CHECK_THAT(w[k], WithinAbs(s[k], 1e-12));
}
