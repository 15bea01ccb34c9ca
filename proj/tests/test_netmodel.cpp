#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "compsys/errors.hpp"
#include "compsys/linalg.hpp"
#include "compsys/netmodel.hpp"
#include "compsys/rng.hpp"

using namespace compsys;

namespace {

std::string data_path(const std::string& name) {
    const char* dir = std::getenv("COMPSYS_DATA_DIR");
    return std::string(dir ? dir : "data") + "/" + name;
}

}  // namespace

TEST_CASE("bundled sample round-trips to identical canonical JSON") {
    std::ifstream in(data_path("two_node_linear.json"));
    REQUIRE(in.good());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    NetworkModel m = load_model(text);
    CHECK(m.num_subsystems() == 2);
    CHECK(m.total_dim() == 2);
    CHECK(m.to_json() == text);
}

TEST_CASE("constant term in f is rejected") {
    std::string doc = R"({
      "subsystems": [{"id": 0, "dim": 1, "f": ["-1 * x0 + 0.5"]}],
      "couplings": []
    })";
    try {
        load_model(doc);
        FAIL("expected InvariantViolation");
    } catch (const InvariantViolation& e) {
        CHECK(e.kind() == "FNotZeroAtOrigin");
    }
}

TEST_CASE("pure-target term in a coupling is rejected") {
    std::string doc = R"({
      "subsystems": [
        {"id": 0, "dim": 1, "f": ["-1 * x0"]},
        {"id": 1, "dim": 1, "f": ["-1 * x1"]}
      ],
      "couplings": [{"target": 0, "source": 1, "g": ["0.1 * x1 + 0.2 * x0"]}]
    })";
    try {
        load_model(doc);
        FAIL("expected InvariantViolation");
    } catch (const InvariantViolation& e) {
        CHECK(e.kind() == "GNotZeroAtSourceZero");
    }
}

TEST_CASE("shift by zero leaves the model unchanged") {
    NetworkModel m = load_model_file(data_path("two_node_linear.json"));
    std::vector<double> zero(2, 0.0);
    NetworkModel s = shift_equilibrium(m, zero);
    CHECK(s.to_json() == m.to_json());
}

TEST_CASE("logistic node shifts to z' = -z - z^2") {
    // x' = x(1 - x) = x - x^2, equilibrium at 1
    Polynomial f(1);
    f.add_term(Monomial::var(0), 1.0);
    f.add_term(Monomial::var(0, 2), -1.0);
    // single-node network needs no couplings
    NetworkModel m({{0, 1, {f}}}, {});
    NetworkModel s = shift_equilibrium(m, std::vector<double>{1.0});
    const Polynomial& g = s.subsystems()[0].f[0];
    CHECK(g.coefficient(Monomial::var(0)) == doctest::Approx(-1.0));
    CHECK(g.coefficient(Monomial::var(0, 2)) == doctest::Approx(-1.0));
    CHECK(g.constant_term() == 0.0);
}

TEST_CASE("not-an-equilibrium points are rejected") {
    NetworkModel m = load_model_file(data_path("two_node_linear.json"));
    CHECK_THROWS_AS(shift_equilibrium(m, std::vector<double>{1.0, 1.0}), NotAnEquilibrium);
}

TEST_CASE("uncoupled Lotka-Volterra equilibrium is b") {
    std::vector<double> b{1.7, 2.2};
    NetworkModel raw = lv_from_coefficients(b, {});
    auto xstar = find_equilibrium(raw, b);
    CHECK(xstar[0] == doctest::Approx(1.7).epsilon(1e-10));
    CHECK(xstar[1] == doctest::Approx(2.2).epsilon(1e-10));
}

TEST_CASE("lv16 generator: positive equilibrium, tiny residual, shifted to origin") {
    NetworkModel m = build_lotka_volterra(16, 1);
    CHECK(m.num_subsystems() == 16);
    REQUIRE(m.meta().equilibrium.size() == 16);
    for (double v : m.meta().equilibrium) CHECK(v > 0.0);
    std::vector<double> zero(16, 0.0);
    CHECK(norm_inf(m.eval_field(zero)) <= 1e-10);
}

TEST_CASE("generators are pure functions of (size, seed)") {
    CHECK(build_lotka_volterra(16, 1).to_json() == build_lotka_volterra(16, 1).to_json());
    CHECK(build_vdp_network(9, 7).to_json() == build_vdp_network(9, 7).to_json());
    CHECK(build_lotka_volterra(16, 1).to_json() != build_lotka_volterra(16, 2).to_json());
}

TEST_CASE("vdp coefficient formulas") {
    CHECK(vdp_c1(0.4) == doctest::Approx(0.96));  // 1 - (0.5*0.4)^2
    std::vector<double> b1{0.02}, b2{0.05};
    CHECK(vdp_c3(b1, b2, 0.4) == doctest::Approx(1.0 - (0.5 * 0.05 * 0.4 - 0.02)));
}

TEST_CASE("vdp9 field vanishes at the origin") {
    NetworkModel m = build_vdp_network(9, 7);
    CHECK(m.total_dim() == 18);
    std::vector<double> zero(18, 0.0);
    CHECK(norm_inf(m.eval_field(zero)) <= 1e-12);
}

TEST_CASE("couplings vanish whenever the source is at rest") {
    Rng rng(83);
    for (const auto& m : {build_lotka_volterra(16, 1), build_vdp_network(9, 7)}) {
        for (const auto& c : m.couplings()) {
            int src_lo = m.var_offset(c.source);
            int src_hi = src_lo + m.subsystems()[static_cast<size_t>(c.source)].dim;
            for (int rep = 0; rep < 20; ++rep) {
                std::vector<double> x(static_cast<size_t>(m.total_dim()));
                for (auto& v : x) v = rng.uniform(-2.0, 2.0);
                for (int v = src_lo; v < src_hi; ++v) x[static_cast<size_t>(v)] = 0.0;
                for (const auto& g : c.g) CHECK(g.eval(x) == 0.0);
            }
        }
    }
}

TEST_CASE("global variable index map is a bijection onto 0..n-1") {
    NetworkModel m = build_vdp_network(9, 7);
    std::vector<bool> seen(static_cast<size_t>(m.total_dim()), false);
    for (int i = 0; i < m.num_subsystems(); ++i)
        for (int v : m.subsystem_vars(i)) {
            CHECK(!seen[static_cast<size_t>(v)]);
            seen[static_cast<size_t>(v)] = true;
        }
    for (bool b : seen) CHECK(b);
}

TEST_CASE("overwhelming interaction drag leaves no reachable equilibrium") {
    // drag far beyond the logistic capacity: the positive branch folds away
    std::vector<double> b{2.0, 2.0};
    std::map<std::pair<int, int>, std::pair<double, double>> cd;
    cd[{0, 1}] = {2.0, 2.0};
    cd[{1, 0}] = {2.0, 2.0};
    NetworkModel raw = lv_from_coefficients(b, cd);
    CHECK_THROWS_AS(find_equilibrium(raw, b), EquilibriumNotFound);
}

TEST_CASE("neighbor sets contain the node itself and its sources") {
    NetworkModel m = build_lotka_volterra(16, 1);
    for (int i = 0; i < 16; ++i) CHECK(m.neighbors(i).count(i) == 1);
    for (const auto& c : m.couplings()) CHECK(m.neighbors(c.target).count(c.source) == 1);
}
