#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "ndc/ident_cc.hpp"
#include "ndc/profile.hpp"
#include "reference_values.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using ndc::cc::CcTheta;

namespace {

constexpr double kBeta1 = 1.0 / ref::kCapacity;

ndc::NdcParams truth() { return ndc::cc::reconstruct_physical_cc(ref::cc_estimate(), kBeta1, ref::ocv_cc()); }

ndc::Dataset discharge(double dt, double noise, std::uint64_t seed) {
    const auto u = ndc::generate_profile(ndc::ConstantProfile{-3.0, 4000.0}, dt);
    return ndc::synthesize(ndc::FullNdcModel{truth()}, u, dt, 1.0, noise, seed);
}

ndc::Dataset trickle(const ndc::OcvPolynomial& h, double amps) {
    ndc::Dataset d;
    d.dt = 10.0;
    const double q = 5000.0;
    const auto n = static_cast<std::size_t>(q / (amps * d.dt)) + 1;
    d.current.assign(n, -amps);
    for (std::size_t k = 0; k < n; ++k) d.voltage.push_back(h(1.0 - static_cast<double>(k) * amps * d.dt / q));
    return d;
}

}  // namespace

TEST_CASE("SoC-OCV fit from a slow discharge", "[ident_cc][ocv]") {
    SECTION("recovers the generating polynomial") {
        const auto h = ref::ocv_cc();
        const auto fit = ndc::cc::fit_soc_ocv(trickle(h, 0.1));
        CHECK_THAT(fit.q_t, WithinRel(5000.0, 1e-12));
        for (std::size_t i = 0; i < 4; ++i) CHECK_THAT(fit.ocv.interior()[i], WithinAbs(h.interior()[i], 1e-7));
        CHECK(fit.ocv.v_min() == ref::kVMin);
        CHECK_THAT(fit.ocv.v_max(), WithinAbs(ref::kVMax, 1e-12));
    }
    SECTION("linear OCV gives a1 = span and nothing else") {
        const ndc::OcvPolynomial h(3.0, {1.2, 0.0, 0.0, 0.0}, 4.2);
        const auto fit = ndc::cc::fit_soc_ocv(trickle(h, 0.2));
        CHECK_THAT(fit.ocv.interior()[0], WithinAbs(1.2, 1e-9));
        for (std::size_t i = 1; i < 4; ++i) CHECK_THAT(fit.ocv.interior()[i], WithinAbs(0.0, 1e-8));
        CHECK_THAT(fit.ocv.leading(), WithinAbs(0.0, 1e-8));
    }
    SECTION("constant voltage is rank deficient") {
        ndc::Dataset d;
        d.current.assign(100, -0.1);
        d.voltage.assign(100, 3.7);
        CHECK_THROWS_AS(ndc::cc::fit_soc_ocv(d), ndc::NumericalError);
    }
    SECTION("no charge moved") {
        ndc::Dataset d;
        d.current.assign(100, 0.0);
        d.voltage.assign(100, 3.7);
        d.voltage[3] = 3.8;
        CHECK_THROWS_AS(ndc::cc::fit_soc_ocv(d), ndc::NumericalError);
    }
}

TEST_CASE("closed-form constant-current response matches the simulator", "[ident_cc]") {
    const auto p = truth();
    const auto data = discharge(1.0, 0.0, 0);
    const auto betas = ndc::cc::beta_from_physical_cc(p);
    CHECK_THAT(betas.beta1, WithinRel(kBeta1, 1e-12));
    for (std::size_t k = 0; k < data.size(); k += 97) {
        const double v = ndc::cc::predict_voltage_cc(betas.theta, betas.beta1, 1.0, 1.0, p.ocv, -3.0, data.time(k));
        CHECK_THAT(v, WithinAbs(data.voltage[k], 1e-10));
    }
    const double vs = ndc::cc::vs_closed_form(betas.theta, betas.beta1, 1.0, -3.0, 100.0);
    CHECK_THAT(vs, WithinAbs(1.0 - 300.0 * kBeta1 - 3.0 * betas.theta[CcTheta::beta2] *
                                                         (1.0 - std::exp(-100.0 * betas.theta[CcTheta::beta3])),
                             1e-15));
}

TEST_CASE("physical parameter maps invert each other", "[ident_cc]") {
    const auto p = truth();
    const auto b = ndc::cc::beta_from_physical_cc(p);
    for (std::size_t i = 0; i < ndc::cc::kThetaSize; ++i) CHECK_THAT(b.theta[i], WithinRel(ref::cc_estimate()[i], 1e-12));
    CHECK_THAT(p.c_b + p.c_s, WithinRel(ref::kCapacity, 1e-12));
    auto bad = ref::cc_estimate();
    bad[CcTheta::beta3] = 0.0;
    CHECK_THROWS_AS(ndc::cc::reconstruct_physical_cc(bad, kBeta1), ndc::NumericalError);
}

TEST_CASE("analytic Jacobian matches finite differences", "[ident_cc]") {
    const auto th = ref::cc_estimate();
    ndc::cc::Vector9 jac{};
    for (double t : {1.0, 250.0, 1700.0}) {
        ndc::cc::predict_voltage_cc_with_jacobian(th, kBeta1, 0.95, 0.95, ref::ocv_cc(), -3.0, t, jac);
        for (std::size_t i = 0; i < ndc::cc::kThetaSize; ++i) {
            auto up = th, down = th;
            const double h = 1e-6 * th[i];
            up[i] += h;
            down[i] -= h;
            const double fd = (ndc::cc::predict_voltage_cc(up, kBeta1, 0.95, 0.95, ref::ocv_cc(), -3.0, t) -
                               ndc::cc::predict_voltage_cc(down, kBeta1, 0.95, 0.95, ref::ocv_cc(), -3.0, t)) /
                (2 * h);
            CHECK_THAT(jac[i], WithinAbs(fd, 1e-6 * std::max(1.0, std::abs(fd))));
        }
    }
}

TEST_CASE("noiseless round trip", "[ident_cc]") {
    const auto data = discharge(1.0, 0.0, 0);
    const auto fit = ndc::cc::fit_cc(data, ref::ocv_cc(), ref::kCapacity, ref::cc_bounds(), ref::cc_initial());
    CHECK(fit.converged);
    for (std::size_t i = 0; i < ndc::cc::kThetaSize; ++i) CHECK_THAT(fit.theta[i], WithinRel(ref::cc_estimate()[i], 0.01));
    for (std::size_t k = 1; k < fit.cost_trace.size(); ++k) CHECK(fit.cost_trace[k] < fit.cost_trace[k - 1]);
    CHECK_FALSE(fit.any_active());
}

TEST_CASE("bound-active solution is reported", "[ident_cc]") {
    const auto data = discharge(1.0, 0.0, 0);
    auto bounds = ref::cc_bounds();
    bounds.upper[CcTheta::beta2] = 0.012;
    auto start = ref::cc_initial();
    start[CcTheta::beta2] = 0.01;
    const auto fit = ndc::cc::fit_cc(data, ref::ocv_cc(), ref::kCapacity, bounds, start);
    CHECK(fit.at_upper[CcTheta::beta2]);
    CHECK(fit.any_active());
    CHECK(fit.theta[CcTheta::beta2] == 0.012);
    CHECK(fit.projected_gradient_norm < 1e-3);
}

TEST_CASE("estimate is robust to measurement noise", "[ident_cc]") {
    // Mean absolute relative deviation over 20 seeded trials of ~10k samples.
    double dev2 = 0.0, dev3 = 0.0;
    constexpr int trials = 20;
    for (int seed = 1; seed <= trials; ++seed) {
        const auto data = discharge(0.25, 0.002, static_cast<std::uint64_t>(seed));
        REQUIRE(data.size() > 10000);
        const auto fit =
            ndc::cc::fit_cc(data, ref::ocv_cc(), ref::kCapacity, ref::cc_bounds(), ref::cc_initial(), 4e-6);
        dev2 += std::abs(fit.theta[CcTheta::beta2] / ref::cc_estimate()[CcTheta::beta2] - 1.0);
        dev3 += std::abs(fit.theta[CcTheta::beta3] / ref::cc_estimate()[CcTheta::beta3] - 1.0);
    }
    CHECK(dev2 / trials < 0.05);
    CHECK(dev3 / trials < 0.05);
}

TEST_CASE("constant-current assumptions are enforced", "[ident_cc]") {
    auto data = discharge(1.0, 0.0, 0);
    SECTION("ripple above one percent is refused") {
        for (std::size_t k = 0; k < data.size(); k += 2) data.current[k] *= 1.05;
        CHECK_THROWS_WITH(
            ndc::cc::fit_cc(data, ref::ocv_cc(), ref::kCapacity, ref::cc_bounds(), ref::cc_initial()),
            Catch::Matchers::ContainsSubstring("ripple"));
    }
    SECTION("initial guess outside the box is refused") {
        auto start = ref::cc_initial();
        start[CcTheta::gamma3] = 20.0;
        CHECK_THROWS_AS(ndc::cc::fit_cc(data, ref::ocv_cc(), ref::kCapacity, ref::cc_bounds(), start),
                        ndc::InvalidArgument);
    }
    SECTION("inverted bounds are refused") {
        auto bounds = ref::cc_bounds();
        std::swap(bounds.lower[0], bounds.upper[0]);
        CHECK_THROWS_AS(ndc::cc::fit_cc(data, ref::ocv_cc(), ref::kCapacity, bounds, ref::cc_initial()),
                        ndc::InvalidArgument);
    }
}
