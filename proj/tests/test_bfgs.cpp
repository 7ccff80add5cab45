#include <catch_amalgamated.hpp>

#include <cmath>

#include "ndc/bfgs.hpp"

using Catch::Matchers::WithinAbs;

namespace {

double rosenbrock(const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double a = 1.0 - x(0), b = x(1) - x(0) * x(0);
    g.resize(2);
    g(0) = -2.0 * a - 400.0 * x(0) * b;
    g(1) = 200.0 * b;
    return a * a + 100.0 * b * b;
}

// Re-checks every recorded step against the line-search contract.
void check_discipline(const ndc::BfgsResult& r, const ndc::BfgsOptions& opt) {
    REQUIRE(r.cost_trace.size() == r.trace.size() + 1);
    for (std::size_t k = 0; k < r.trace.size(); ++k) {
        const auto& it = r.trace[k];
        CHECK(it.slope < 0.0);
        CHECK(it.new_cost <= it.cost + opt.c1 * it.step_length * it.slope);
        CHECK(it.new_slope >= opt.c2 * it.slope);
        CHECK(r.cost_trace[k + 1] <= r.cost_trace[k]);
        if (it.update_applied) CHECK(it.cholesky_ok);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(r.inverse_hessian);
    CHECK(llt.info() == Eigen::Success);
}

}  // namespace

TEST_CASE("Rosenbrock valley", "[bfgs]") {
    ndc::BfgsOptions opt;
    opt.tol = 1e-14;
    opt.grad_tol = 1e-8;
    Eigen::VectorXd x0(2);
    x0 << -1.2, 1.0;
    const auto r = ndc::minimize_bfgs(rosenbrock, x0, opt);
    CHECK(r.converged);
    CHECK(r.gradient_certified);
    CHECK_THAT(r.x(0), WithinAbs(1.0, 1e-6));
    CHECK_THAT(r.x(1), WithinAbs(1.0, 1e-6));
    check_discipline(r, opt);
}

TEST_CASE("convex quadratic", "[bfgs]") {
    Eigen::Matrix3d a;
    a << 4, 1, 0, 1, 3, 1, 0, 1, 2;
    const Eigen::Vector3d b(1, -2, 3);
    auto f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g = a * x - b;
        return 0.5 * x.dot(a * x) - b.dot(x);
    };
    ndc::BfgsOptions opt;
    opt.tol = 1e-15;
    opt.grad_tol = 1e-10;
    const auto r = ndc::minimize_bfgs(f, Eigen::VectorXd::Zero(3), opt);
    const Eigen::Vector3d exact = a.ldlt().solve(b);
    CHECK((r.x - exact).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(r.iterations() < 30);
    check_discipline(r, opt);
}

TEST_CASE("starting at a stationary point", "[bfgs]") {
    auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g = 2.0 * x;
        return x.squaredNorm();
    };
    const auto r = ndc::minimize_bfgs(f, Eigen::VectorXd::Zero(4));
    CHECK(r.converged);
    CHECK(r.iterations() == 0);
    CHECK(r.message == "zero gradient");
}

TEST_CASE("invalid settings and objectives", "[bfgs]") {
    auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g = x;
        return std::log(-1.0);
    };
    CHECK_THROWS_AS(ndc::minimize_bfgs(f, Eigen::VectorXd::Ones(2)), ndc::NumericalError);
    ndc::BfgsOptions opt;
    opt.c1 = 0.95;
    CHECK_THROWS_AS(ndc::minimize_bfgs(rosenbrock, Eigen::VectorXd::Zero(2), opt), ndc::InvalidArgument);
}

TEST_CASE("infinite values trigger backtracking", "[bfgs]") {
    // Barrier at x = 2 to the right of a minimum at 1.
    auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g.resize(1);
        if (x(0) >= 2.0) {
            g(0) = 0.0;
            return std::numeric_limits<double>::infinity();
        }
        g(0) = 2.0 * (x(0) - 1.0) + 1.0 / (2.0 - x(0));
        return (x(0) - 1.0) * (x(0) - 1.0) - std::log(2.0 - x(0));
    };
    ndc::BfgsOptions opt;
    opt.b0_scale = 100.0;  // first trial step lands beyond the barrier
    const auto r = ndc::minimize_bfgs(f, Eigen::VectorXd::Constant(1, -3.0), opt);
    CHECK(r.converged);
    CHECK(r.x(0) < 2.0);
    CHECK_THAT(r.gradient(0), WithinAbs(0.0, 1e-5));
    check_discipline(r, opt);
}
