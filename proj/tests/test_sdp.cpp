#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "compsys/rng.hpp"
#include "compsys/sdp.hpp"

using namespace compsys;

namespace {

// min x s.t. [[x,1],[1,x]] PSD, via a free scalar tied to the diagonal.
SdpProblem min_x_problem() {
    SdpProblem p;
    p.block_dims = {2};
    p.num_free = 1;
    SdpConstraint c0;  // X00 - x = 0
    c0.lhs.entries.push_back({0, 0, 0, 1.0});
    c0.lhs.free_entries.push_back({0, -1.0});
    SdpConstraint c1;  // X11 - x = 0
    c1.lhs.entries.push_back({0, 1, 1, 1.0});
    c1.lhs.free_entries.push_back({0, -1.0});
    SdpConstraint c2;  // X01 = 1
    c2.lhs.entries.push_back({0, 0, 1, 1.0});
    c2.rhs = 1.0;
    p.constraints = {c0, c1, c2};
    p.objective.free_entries.push_back({0, 1.0});
    return p;
}

}  // namespace

TEST_CASE("analytic optimum: min x with [[x,1],[1,x]] PSD is 1") {
    auto sol = solve_sdp(min_x_problem());
    REQUIRE(sol.status == SdpStatus::Optimal);
    CHECK(std::abs(sol.free_values[0] - 1.0) <= 1e-6);
    CHECK(std::abs(sol.objective - 1.0) <= 1e-6);
    CHECK(sol.max_residual <= 1e-7);
    CHECK(sol.relative_gap <= 1e-6);
}

TEST_CASE("infeasible: 1x1 PSD block pinned to -1") {
    SdpProblem p;
    p.block_dims = {1};
    SdpConstraint c;
    c.lhs.entries.push_back({0, 0, 0, 1.0});
    c.rhs = -1.0;
    p.constraints = {c};
    auto sol = solve_sdp(p);
    CHECK(sol.status == SdpStatus::Infeasible);
}

TEST_CASE("planted feasibility problems solve to tight residuals") {
    Rng rng(101);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 4 + static_cast<int>(rng.uniform_index(3));
        const int m = 6 + static_cast<int>(rng.uniform_index(5));
        DenseMatrix B(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) B.at(i, j) = rng.uniform(-1.0, 1.0);
        DenseMatrix Xstar = B * B.transpose();
        for (int i = 0; i < n; ++i) Xstar.at(i, i) += 0.5;

        SdpProblem p;
        p.block_dims = {n};
        for (int k = 0; k < m; ++k) {
            SdpConstraint c;
            double rhs = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j) {
                    double coef = std::round(rng.uniform(-2.0, 2.0) * 4.0) / 4.0;
                    if (coef == 0.0) continue;
                    c.lhs.entries.push_back({0, i, j, coef});
                    rhs += coef * Xstar.at(i, j);
                }
            c.rhs = rhs;
            p.constraints.push_back(c);
        }
        auto sol = solve_sdp(p);
        REQUIRE(sol.status == SdpStatus::Optimal);
        CHECK(sol.max_residual <= 1e-7);
        CHECK(sol.min_block_eigenvalue >= -1e-7);
        CHECK(sol.relative_gap <= 1e-6);
    }
}

TEST_CASE("duality gap stays within contract on optimal returns") {
    auto sol = solve_sdp(min_x_problem());
    REQUIRE(sol.status == SdpStatus::Optimal);
    CHECK(sol.relative_gap <= 1e-6);
}

TEST_CASE("json debug dump covers the schema fields") {
    auto p = min_x_problem();
    auto s = sdp_problem_to_json(p);
    CHECK(s.find("\"blocks\"") != std::string::npos);
    CHECK(s.find("\"free_vars\"") != std::string::npos);
    CHECK(s.find("\"constraints\"") != std::string::npos);
    CHECK(s.find("\"objective\"") != std::string::npos);
}
