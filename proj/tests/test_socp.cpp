#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "p2pflow/socp.hpp"
#include "test_util.hpp"

using namespace p2pflow;
using namespace testutil;

namespace {

ConicProgram box_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& a,
                    const Eigen::VectorXd& b, const Eigen::VectorXd& lo,
                    const Eigen::VectorXd& hi) {
    ConicProgram p;
    p.n = static_cast<int>(c.size());
    p.c = c;
    p.a_in = a;
    p.b_in = b;
    p.lo = lo;
    p.hi = hi;
    return p;
}

} // namespace

TEST_CASE("one-variable LP: maximize x subject to x <= 1") {
    ConicProgram p;
    p.n = 1;
    p.c = Eigen::VectorXd::Ones(1);
    p.a_in = Eigen::MatrixXd::Ones(1, 1);
    p.b_in = Eigen::VectorXd::Ones(1);
    const ConicSolution sol = solve_conic(p);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.x[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(sol.duality_gap <= 1e-8);
}

TEST_CASE("analytic cone optimum: maximize x+y s.t. ||(x,y)|| <= 1") {
    ConicProgram p;
    p.n = 2;
    p.c = Eigen::VectorXd::Ones(2);
    SocConstraint soc;
    soc.G = Eigen::MatrixXd::Identity(2, 2);
    soc.h = Eigen::VectorXd::Zero(2);
    soc.e = 1.0;
    p.socs.push_back(soc);
    const ConicSolution sol = solve_conic(p);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.objective == doctest::Approx(std::sqrt(2.0)).epsilon(1e-8));
    CHECK(sol.x[0] == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-7));
    CHECK(sol.x[1] == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-7));
    CHECK(sol.duality_gap <= 1e-8);
}

TEST_CASE("50 random LPs match vertex enumeration to 1e-6") {
    std::mt19937 rng(20240817);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    std::uniform_int_distribution<int> ndist(1, 6);
    std::uniform_int_distribution<int> rowdist(0, 4);
    int solved = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = ndist(rng);
        const int rows = rowdist(rng);
        Eigen::VectorXd c(n), lo(n), hi(n);
        for (int i = 0; i < n; ++i) {
            c[i] = coef(rng);
            lo[i] = -1.0 - std::abs(coef(rng));
            hi[i] = 1.0 + std::abs(coef(rng));
        }
        Eigen::MatrixXd a(rows, n);
        Eigen::VectorXd b(rows);
        for (int r = 0; r < rows; ++r) {
            for (int i = 0; i < n; ++i) a(r, i) = coef(rng);
            b[r] = 0.5 + std::abs(coef(rng)); // keeps origin feasible
        }
        const ConicProgram p = box_lp(c, a, b, lo, hi);
        const ConicSolution sol = solve_conic(p);
        REQUIRE(sol.status == SolveStatus::optimal);
        const double brute = vertex_enumeration_max(c, a, b, lo, hi);
        CHECK(std::abs(sol.objective - brute) < 1e-6);
        ++solved;
    }
    CHECK(solved == 50);
}

TEST_CASE("feasibility at optimal status: violations at most tol") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 4;
        Eigen::VectorXd c(n);
        for (int i = 0; i < n; ++i) c[i] = coef(rng);
        ConicProgram p;
        p.n = n;
        p.c = c;
        p.lo = Eigen::VectorXd::Constant(n, -2.0);
        p.hi = Eigen::VectorXd::Constant(n, 2.0);
        SocConstraint soc;
        soc.G = Eigen::MatrixXd::Random(3, n);
        soc.h = Eigen::VectorXd::Zero(3);
        soc.e = 1.5;
        p.socs.push_back(soc);
        const ConicSolution sol = solve_conic(p);
        REQUIRE(sol.status == SolveStatus::optimal);
        for (int i = 0; i < n; ++i) {
            CHECK(sol.x[i] >= -2.0 - 1e-8);
            CHECK(sol.x[i] <= 2.0 + 1e-8);
        }
        CHECK((soc.G * sol.x).norm() <= soc.e + 1e-8);
    }
}

TEST_CASE("complementary slackness on cones") {
    // One active cone, one slack cone.
    ConicProgram p;
    p.n = 2;
    p.c = (Eigen::VectorXd(2) << 1.0, 0.0).finished();
    p.lo = Eigen::VectorXd::Constant(2, -10.0);
    p.hi = Eigen::VectorXd::Constant(2, 10.0);
    SocConstraint tight;
    tight.G = Eigen::MatrixXd::Identity(2, 2);
    tight.h = Eigen::VectorXd::Zero(2);
    tight.e = 1.0;
    SocConstraint loose = tight;
    loose.e = 5.0;
    p.socs = {tight, loose};
    const ConicSolution sol = solve_conic(p);
    REQUIRE(sol.status == SolveStatus::optimal);
    for (size_t k = 0; k < p.socs.size(); ++k) {
        const bool active = sol.soc_slack[k] <= 1e-6;
        const bool dual_zero = sol.soc_dual[k] <= 1e-6;
        CHECK((active || dual_zero));
    }
    CHECK(sol.soc_slack[0] <= 1e-6);  // the unit cone binds
    CHECK(sol.soc_dual[1] <= 1e-6);   // the radius-5 cone is slack
}

TEST_CASE("scaling the objective leaves the argmax unchanged") {
    ConicProgram p;
    p.n = 3;
    p.c = (Eigen::VectorXd(3) << 0.3, 1.0, -0.2).finished();
    p.lo = Eigen::VectorXd::Constant(3, 0.0);
    p.hi = Eigen::VectorXd::Constant(3, 4.0);
    p.a_in = (Eigen::MatrixXd(1, 3) << 1.0, 1.0, 1.0).finished();
    p.b_in = Eigen::VectorXd::Constant(1, 5.0);
    SolveOptions opts;
    opts.tol = 1e-10;
    const ConicSolution s1 = solve_conic(p, opts);
    ConicProgram scaled = p;
    scaled.c *= 7.5;
    const ConicSolution s2 = solve_conic(scaled, opts);
    REQUIRE(s1.status == SolveStatus::optimal);
    REQUIRE(s2.status == SolveStatus::optimal);
    CHECK((s1.x - s2.x).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("determinism: identical inputs give identical outputs") {
    ConicProgram p;
    p.n = 2;
    p.c = (Eigen::VectorXd(2) << 1.0, 0.7).finished();
    p.lo = Eigen::VectorXd::Zero(2);
    p.hi = Eigen::VectorXd::Constant(2, 3.0);
    SocConstraint soc;
    soc.G = (Eigen::MatrixXd(2, 2) << 1.0, 0.2, -0.1, 1.0).finished();
    soc.h = (Eigen::VectorXd(2) << 0.05, -0.02).finished();
    soc.e = 2.0;
    p.socs.push_back(soc);
    const ConicSolution s1 = solve_conic(p);
    const ConicSolution s2 = solve_conic(p);
    CHECK(std::memcmp(s1.x.data(), s2.x.data(), sizeof(double) * 2) == 0);
    CHECK(s1.objective == s2.objective);
    CHECK(s1.iterations == s2.iterations);
}

TEST_CASE("infeasible program is certified") {
    ConicProgram p;
    p.n = 1;
    p.c = Eigen::VectorXd::Ones(1);
    p.a_in = (Eigen::MatrixXd(2, 1) << 1.0, -1.0).finished();
    p.b_in = (Eigen::VectorXd(2) << -2.0, 1.0).finished(); // x <= -2 and x >= -1
    const ConicSolution sol = solve_conic(p);
    CHECK(sol.status == SolveStatus::infeasible);
    CHECK(sol.certificate_residual <= 1e-8);
}

TEST_CASE("unbounded program is detected") {
    ConicProgram p;
    p.n = 1;
    p.c = Eigen::VectorXd::Ones(1);
    p.lo = Eigen::VectorXd::Zero(1); // x >= 0, maximize x
    const ConicSolution sol = solve_conic(p);
    CHECK(sol.status == SolveStatus::unbounded);
}

TEST_CASE("dimension mismatches are rejected") {
    ConicProgram p;
    p.n = 2;
    p.c = Eigen::VectorXd::Ones(3);
    CHECK_THROWS_AS(solve_conic(p), Error);
    p.c = Eigen::VectorXd::Ones(2);
    p.a_in = Eigen::MatrixXd::Ones(1, 3);
    p.b_in = Eigen::VectorXd::Ones(1);
    CHECK_THROWS_AS(solve_conic(p), Error);
}

TEST_CASE("equality constraints are honored") {
    // maximize x + y s.t. x + y + z = 1, ||(x,y)|| <= z
    ConicProgram p;
    p.n = 3;
    p.c = (Eigen::VectorXd(3) << 1.0, 1.0, 0.0).finished();
    p.a_eq = (Eigen::MatrixXd(1, 3) << 1.0, 1.0, 1.0).finished();
    p.b_eq = Eigen::VectorXd::Ones(1);
    SocConstraint soc;
    soc.G = (Eigen::MatrixXd(2, 3) << 1, 0, 0, 0, 1, 0).finished();
    soc.h = Eigen::VectorXd::Zero(2);
    soc.d = (Eigen::VectorXd(3) << 0, 0, 1).finished();
    soc.e = 0.0;
    p.socs.push_back(soc);
    const ConicSolution sol = solve_conic(p);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.x[0] + sol.x[1] + sol.x[2] == doctest::Approx(1.0).epsilon(1e-7));
    // optimum: x = y = t/sqrt2 with 2t/sqrt2 + t = 1 -> t = 1/(1+sqrt2)
    const double t = 1.0 / (1.0 + std::sqrt(2.0));
    CHECK(sol.objective == doctest::Approx(std::sqrt(2.0) * t).epsilon(1e-6));
}

TEST_CASE("program dump has the documented shape") {
    ConicProgram p;
    p.n = 1;
    p.c = Eigen::VectorXd::Ones(1);
    p.a_in = Eigen::MatrixXd::Ones(1, 1);
    p.b_in = Eigen::VectorXd::Ones(1);
    const std::string dump = dump_program(p);
    CHECK(dump.find("n 1") != std::string::npos);
    CHECK(dump.find("G 1 | 1") != std::string::npos);
}
