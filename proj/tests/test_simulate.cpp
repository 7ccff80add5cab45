#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ndc/profile.hpp"
#include "ndc/simulate.hpp"
#include "reference_values.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ndc::ComparisonModel cell() { return ndc::FullNdcModel{ref::cell_cc()}; }

}  // namespace

TEST_CASE("zero current holds the open-circuit voltage", "[simulate]") {
    const std::vector<double> u(500, 0.0);
    const auto sim = ndc::simulate(cell(), u, 1.0, 0.8);
    REQUIRE_FALSE(sim.truncated());
    REQUIRE(sim.voltage.size() == u.size());
    const double ocv = ref::ocv_cc()(0.8);
    for (double v : sim.voltage) CHECK_THAT(v, WithinAbs(ocv, 1e-12));
}

TEST_CASE("cutoff crossing truncates the run", "[simulate]") {
    const auto u = ndc::generate_profile(ndc::ConstantProfile{-3.0, 20000.0}, 1.0);
    const auto sim = ndc::simulate(cell(), u, 1.0, 1.0);
    REQUIRE(sim.truncated());
    CHECK(sim.truncation == ndc::Truncation::voltage_below_min);
    CHECK(sim.truncated_at == sim.voltage.size());
    CHECK(sim.voltage.size() < u.size());
    CHECK(sim.voltage.back() >= ref::kVMin);

    SECTION("predict keeps going past the cutoff") {
        const auto v = ndc::predict(cell(), u, 1.0, 1.0);
        REQUIRE(v.size() == u.size());
        for (std::size_t k = 0; k < sim.voltage.size(); ++k) CHECK(v[k] == sim.voltage[k]);
        CHECK(v[sim.voltage.size()] < ref::kVMin);
    }
}

TEST_CASE("charging beyond full is flagged", "[simulate]") {
    const std::vector<double> u(100, 3.0);
    const auto sim = ndc::simulate(cell(), u, 1.0, 1.0);
    CHECK(sim.truncation == ndc::Truncation::voltage_above_max);
    CHECK(sim.voltage.empty());
}

TEST_CASE("higher rate delivers less charge before cutoff", "[simulate]") {
    auto delivered = [](double amps) {
        const auto u = ndc::generate_profile(ndc::ConstantProfile{-amps, 20000.0}, 1.0);
        return amps * static_cast<double>(ndc::simulate(cell(), u, 1.0, 1.0).voltage.size());
    };
    const double q15 = delivered(1.5), q25 = delivered(2.5), q35 = delivered(3.5);
    CHECK(q15 > q25);
    CHECK(q25 > q35);
    CHECK(q15 < ref::kCapacity);
}

TEST_CASE("voltage recovers during rest", "[simulate]") {
    std::vector<double> u(1800, -3.0);
    u.resize(2400, 0.0);
    const auto sim = ndc::simulate(cell(), u, 1.0, 1.0);
    REQUIRE_FALSE(sim.truncated());
    for (std::size_t k = 1800; k + 1 < sim.voltage.size(); ++k) CHECK(sim.voltage[k + 1] > sim.voltage[k]);
    // Bulk and surface voltages converge once the load is removed.
    const auto& last = sim.states.back();
    CHECK(std::abs(last.v_b - last.v_s) < std::abs(sim.states[1800].v_b - sim.states[1800].v_s));
}

TEST_CASE("positive current charges", "[simulate]") {
    const std::vector<double> u(100, 2.0);
    const auto sim = ndc::simulate(cell(), u, 1.0, 0.5);
    REQUIRE_FALSE(sim.truncated());
    CHECK(sim.soc.back() > sim.soc.front());
    CHECK(sim.voltage[0] > ref::ocv_cc()(0.5));
}

TEST_CASE("comparison adapters", "[simulate]") {
    const auto ocv = ref::ocv_map();
    const double q_t = 11000.0;
    const std::vector<double> u = {-2.0, -2.0, -2.0, 0.0, 1.0};

    SECTION("rint is OCV plus an ohmic drop") {
        const auto v = ndc::predict(ndc::RintModel{0.05, ocv, q_t}, u, 1.0, 0.9);
        const auto soc = ndc::soc_trajectory(q_t, u, 1.0, 0.9);
        for (std::size_t k = 0; k < u.size(); ++k) CHECK_THAT(v[k], WithinAbs(ocv(soc[k]) + 0.05 * u[k], 1e-14));
    }
    SECTION("thevenin RC branch follows the exponential step response") {
        const double r1 = 0.01, c1 = 500.0, tau = r1 * c1;
        const std::vector<double> steady(50, -2.0);
        const auto v = ndc::predict(ndc::TheveninModel{0.05, r1, c1, ocv, q_t}, steady, 1.0, 0.9);
        const auto soc = ndc::soc_trajectory(q_t, steady, 1.0, 0.9);
        for (std::size_t k = 0; k < steady.size(); ++k) {
            const double drop = r1 * -2.0 * (1.0 - std::exp(-static_cast<double>(k) / tau));
            CHECK_THAT(v[k], WithinAbs(ocv(soc[k]) + drop + 0.05 * -2.0, 1e-12));
        }
    }
    SECTION("basic NDC equals the full model with the RC branch shorted") {
        auto p = ref::cell_map();
        const auto basic = ndc::predict(ndc::BasicNdcModel{p}, u, 1.0, 0.9);
        p.r_1 = 0.0;
        const auto shorted = ndc::predict(ndc::FullNdcModel{p}, u, 1.0, 0.9);
        for (std::size_t k = 0; k < u.size(); ++k) CHECK(basic[k] == shorted[k]);
    }
    SECTION("basic NDC needs a constant R0") {
        CHECK_THROWS_AS(ndc::ComparisonModel(ndc::BasicNdcModel{ref::cell_cc()}), ndc::InvalidArgument);
    }
    SECTION("names and capacities") {
        const ndc::ComparisonModel m = ndc::FullNdcModel{ref::cell_map()};
        CHECK(m.name() == "ndc");
        CHECK(m.total_capacity() == 10031.0 + 979.0);
        CHECK(ndc::ComparisonModel(ndc::RintModel{0.05, ocv, q_t}).total_capacity() == q_t);
    }
}

TEST_CASE("simulation arguments are checked", "[simulate]") {
    const std::vector<double> u(3, 0.0);
    CHECK_THROWS_AS(ndc::simulate(cell(), u, 0.0, 0.5), ndc::InvalidArgument);
    CHECK_THROWS_AS(ndc::simulate(cell(), u, 1.0, 1.5), ndc::InvalidArgument);
    CHECK_THROWS_AS(ndc::ComparisonModel(ndc::RintModel{0.05, ref::ocv_map(), 0.0}), ndc::InvalidArgument);
}
