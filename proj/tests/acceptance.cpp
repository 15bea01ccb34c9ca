// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line. Heavy scenario work (certification + validation of the benchmark
// networks) is shared through a lazily built fixture.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>

#include "compsys/errors.hpp"
#include "compsys/pipeline.hpp"
#include "compsys/rng.hpp"
#include "compsys/sos.hpp"

using namespace compsys;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void report_line(const char* tag, const char* name, bool pass) {
    std::printf("ACCEPTANCE %s %s: %s\n", tag, name, pass ? "PASS" : "FAIL");
    std::fflush(stdout);
}

Polynomial random_cubic(Rng& rng, int nvars) {
    Polynomial h(nvars);
    for (int t = 0; t < 6; ++t) {
        Monomial m;
        int budget = static_cast<int>(rng.uniform_index(4));
        for (int d = 0; d < budget; ++d)
            m = m * Monomial::var(static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(nvars))));
        h.add_term(m, rng.uniform(-1.0, 1.0));
    }
    return h;
}

struct Scenario {
    std::string name;
    CertifiedSystem sys;
    ValidationReport report;
    double certify_seconds = 0.0;
    double validate_seconds = 0.0;
};

// lv16(seed 1) at 0.01 and 0.6, vdp9(seed 7) at 0.6 - computed once.
const std::vector<Scenario>& benchmark_scenarios() {
    static std::vector<Scenario> cache = [] {
        std::vector<Scenario> out;
        struct Bench {
            const char* name;
            bool lv;
            std::uint64_t seed;
            double gamma;
        };
        for (Bench bench : {Bench{"lv16 gamma=0.01", true, 1, 0.01},
                          Bench{"lv16 gamma=0.6", true, 1, 0.6},
                          Bench{"vdp9 gamma=0.6", false, 7, 0.6}}) {
            auto t0 = Clock::now();
            NetworkModel model = bench.lv ? build_lotka_volterra(16, bench.seed)
                                         : build_vdp_network(9, bench.seed);
            CertifiedSystem sys = certify_system(model, {bench.gamma});
            double certify_seconds = seconds_since(t0);
            auto t1 = Clock::now();
            ValidationReport report =
                validate(sys.model, sys.lfs, sys.cm, sys.bounds, 50, 20.0, 1e-3, bench.seed);
            out.push_back(Scenario{bench.name, std::move(sys), report, certify_seconds,
                                   seconds_since(t1)});
        }
        return out;
    }();
    return cache;
}

NetworkModel two_node(double eps) {
    Polynomial f0(2), f1(2), g01(2), g10(2);
    f0.add_term(Monomial::var(0), -1.0);
    f1.add_term(Monomial::var(1), -1.0);
    g01.add_term(Monomial::var(1), eps);
    g10.add_term(Monomial::var(0), eps);
    return NetworkModel({{0, 1, {f0}}, {1, 1, {f1}}}, {{0, 1, {g01}}, {1, 0, {g10}}});
}

std::vector<LyapunovCertificate> unit_lfs(const NetworkModel& model) {
    std::vector<LyapunovCertificate> lfs;
    for (int i = 0; i < model.num_subsystems(); ++i) {
        LyapunovCertificate c;
        c.subsystem = i;
        c.P = DenseMatrix::from_rows({{1.0}});
        Polynomial V(model.total_dim());
        V.add_term(Monomial::var(model.var_offset(i), 2), 1.0);
        c.V = V;
        c.gamma_max = 1.0;
        lfs.push_back(std::move(c));
    }
    return lfs;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("C1 SOS soundness") {
    auto t0 = Clock::now();
    Rng rng(2024);
    int proven = 0;
    for (int rep = 0; rep < 100; ++rep) {
        int nvars = 2 + static_cast<int>(rng.uniform_index(2));
        Polynomial p(nvars);
        for (int k = 0; k < 3; ++k) {
            Polynomial h = random_cubic(rng, nvars);
            p += h * h;
        }
        auto proof = prove_sos(p);
        if (proof.status == SosStatus::Proven &&
            proof.certificate->residual.max_abs_coefficient() <=
                1e-7 * (1.0 + p.max_abs_coefficient()))
            ++proven;
    }

    Rng gen(4711);
    int refuted = 0, found = 0;
    while (found < 50) {
        int nvars = 2 + static_cast<int>(gen.uniform_index(2));
        Polynomial p(nvars);
        for (int t = 0; t < 10; ++t) {
            Monomial m;
            int budget = static_cast<int>(gen.uniform_index(5));
            for (int d = 0; d < budget; ++d)
                m = m * Monomial::var(static_cast<int>(gen.uniform_index(static_cast<std::uint64_t>(nvars))));
            p.add_term(m, gen.uniform(-1.0, 1.0));
        }
        if (p.degree() % 2 != 0 || p.degree() == 0) continue;
        double worst = 0.0;
        Rng sampler(static_cast<std::uint64_t>(found) + 1);
        for (int s = 0; s < 200; ++s) {
            std::vector<double> x(static_cast<size_t>(nvars));
            for (auto& v : x) v = sampler.uniform(-2.0, 2.0);
            worst = std::min(worst, p.eval(x));
        }
        if (worst > -0.05 * (1.0 + p.max_abs_coefficient())) continue;
        ++found;
        if (prove_sos(p).status == SosStatus::Infeasible) ++refuted;
    }

    double elapsed = seconds_since(t0);
    bool pass = proven == 100 && refuted == 50 && elapsed < 120.0;
    report_line("C1", "sos-soundness", pass);
    CHECK(proven == 100);
    CHECK(refuted == 50);
    CHECK(elapsed < 120.0);
}

TEST_CASE("C2 SDP analytic oracle and planted suite") {
    SdpProblem analytic;
    analytic.block_dims = {2};
    analytic.num_free = 1;
    SdpConstraint c0;
    c0.lhs.entries.push_back({0, 0, 0, 1.0});
    c0.lhs.free_entries.push_back({0, -1.0});
    SdpConstraint c1;
    c1.lhs.entries.push_back({0, 1, 1, 1.0});
    c1.lhs.free_entries.push_back({0, -1.0});
    SdpConstraint c2;
    c2.lhs.entries.push_back({0, 0, 1, 1.0});
    c2.rhs = 1.0;
    analytic.constraints = {c0, c1, c2};
    analytic.objective.free_entries.push_back({0, 1.0});
    auto sol = solve_sdp(analytic);
    bool analytic_ok =
        sol.status == SdpStatus::Optimal && std::abs(sol.free_values[0] - 1.0) <= 1e-6;

    Rng rng(101);
    int planted_ok = 0;
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
        auto ps = solve_sdp(p);
        if (ps.status == SdpStatus::Optimal && ps.max_residual <= 1e-7) ++planted_ok;
    }

    bool pass = analytic_ok && planted_ok == 20;
    report_line("C2", "sdp-analytic-and-planted", pass);
    CHECK(analytic_ok);
    CHECK(planted_ok == 20);
}

TEST_CASE("C3 comparison-row analytic oracle") {
    auto t0 = Clock::now();
    const double eps = 0.1;
    NetworkModel m = two_node(eps);
    auto lfs = unit_lfs(m);
    std::vector<double> gamma{1.0, 1.0};
    auto row0 = cm_row(m, 0, lfs, gamma);
    auto row1 = cm_row(m, 1, lfs, gamma);
    auto cm = assemble_cm({row0, row1}, gamma);
    double elapsed = seconds_since(t0);

    bool rows_ok = std::abs(row0.objective - (-1.8)) <= 1e-3 &&
                   std::abs(row1.objective - (-1.8)) <= 1e-3 &&
                   row0.coefficients.at(0) <= -1.9 + 1e-3 &&
                   row0.coefficients.at(1) <= 0.1 + 1e-3;
    bool pass = rows_ok && cm.verdict == HurwitzVerdict::HurwitzByDominance && elapsed < 10.0;
    report_line("C3", "comparison-row-oracle", pass);
    CHECK(rows_ok);
    CHECK(cm.verdict == HurwitzVerdict::HurwitzByDominance);
    CHECK(elapsed < 10.0);
}

TEST_CASE("C4 comparison principle on the benchmarks") {
    const auto& scenarios = benchmark_scenarios();
    double total = 0.0;
    bool all_ok = true;
    for (const auto& sc : scenarios) {
        total += sc.certify_seconds + sc.validate_seconds;
        bool ok = sc.report.blowups == 0 &&
                  sc.report.worst_comparison_margin <= sc.report.tolerance;
        if (!ok) all_ok = false;
        CHECK_MESSAGE(ok, sc.name);
    }
    bool pass = all_ok && total < 300.0;
    report_line("C4", "comparison-principle", pass);
    CHECK(total < 300.0);
    CHECK(all_ok);
}

TEST_CASE("C5 energy-bound domination on the benchmarks") {
    bool all_ok = true;
    for (const auto& sc : benchmark_scenarios()) {
        // measured psi <= bound (1 + 1e-6) + 1e-6 on every edge of every sample
        bool ok = sc.report.worst_energy_margin <= 1e-6 && sc.report.blowups == 0;
        if (!ok) all_ok = false;
        CHECK_MESSAGE(ok, sc.name);
    }
    report_line("C5", "energy-bound-domination", all_ok);
    CHECK(all_ok);
}

TEST_CASE("C6 Laplacian spectra and planted bipartitions") {
    Rng rng(555);
    bool spectra_ok = true;
    for (int rep = 0; rep < 50; ++rep) {
        const int m = 4 + static_cast<int>(rng.uniform_index(9));
        DenseMatrix W(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                double w = (rng.uniform() < 0.6) ? rng.uniform(0.05, 2.0) : 0.0;
                W.at(i, j) = w;
                W.at(j, i) = w;
            }
        DenseMatrix L = normalized_laplacian(W);
        auto ed = sym_eigen(L);
        if (ed.values.front() < -1e-9) spectra_ok = false;
        std::vector<double> v(static_cast<size_t>(m), 0.0);
        for (int i = 0; i < m; ++i) {
            double deg = 0.0;
            for (int j = 0; j < m; ++j) deg += W.at(i, j);
            v[static_cast<size_t>(i)] = std::sqrt(deg);
        }
        if (norm2(v) > 0.0 && norm_inf(L.mul_vec(v)) > 1e-8 * std::max(1.0, norm2(v)))
            spectra_ok = false;
    }

    const int half = 8;
    DenseMatrix W(2 * half, 2 * half);
    for (int i = 0; i < 2 * half; ++i)
        for (int j = i + 1; j < 2 * half; ++j) {
            bool same = (i < half) == (j < half);
            W.at(i, j) = W.at(j, i) = same ? 1.0 : 0.01;
        }
    bool planted_ok = true;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto part = spectral_partition(W, 2, seed);
        for (int i = 1; i < half; ++i)
            if (part.assignment[static_cast<size_t>(i)] != part.assignment[0]) planted_ok = false;
        for (int i = half + 1; i < 2 * half; ++i)
            if (part.assignment[static_cast<size_t>(i)] != part.assignment[static_cast<size_t>(half)])
                planted_ok = false;
        if (part.assignment[0] == part.assignment[static_cast<size_t>(half)]) planted_ok = false;
    }

    bool pass = spectra_ok && planted_ok;
    report_line("C6", "laplacian-and-clustering", pass);
    CHECK(spectra_ok);
    CHECK(planted_ok);
}

TEST_CASE("C7 decomposition quality on lv16") {
    const auto& scenarios = benchmark_scenarios();
    const Scenario& sc = scenarios[1];  // lv16 gamma=0.6
    auto t0 = Clock::now();

    EnergyGraph graph{sc.sys.model.num_subsystems(), sc.sys.bounds, sc.sys.cm.A, sc.sys.gamma};
    DenseMatrix W = build_adjacency(graph, AdjacencyMode::WorstCase);
    Partition part = spectral_partition(W, 2, 1);

    double total = 0.0;
    for (int i = 0; i < W.rows(); ++i)
        for (int j = i + 1; j < W.cols(); ++j) total += W.at(i, j);

    // 200 seeded random balanced bipartitions
    Rng rng(777);
    double best_random = std::numeric_limits<double>::infinity();
    const int m = W.rows();
    std::vector<int> assign(static_cast<size_t>(m));
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<int> nodes(static_cast<size_t>(m));
        for (int i = 0; i < m; ++i) nodes[static_cast<size_t>(i)] = i;
        for (int i = m - 1; i > 0; --i)
            std::swap(nodes[static_cast<size_t>(i)],
                      nodes[static_cast<size_t>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)))]);
        for (int i = 0; i < m; ++i) assign[static_cast<size_t>(nodes[static_cast<size_t>(i)])] = i < m / 2 ? 0 : 1;
        best_random = std::min(best_random, cut_weight(W, assign));
    }

    double ratio = total > 0.0 ? part.cut_weight / total : 0.0;
    double elapsed = seconds_since(t0);
    bool pass = part.cut_weight <= best_random + 1e-12 && ratio <= 0.25 && elapsed < 60.0;
    report_line("C7", "decomposition-quality", pass);
    CHECK(part.cut_weight <= best_random + 1e-12);
    CHECK(ratio <= 0.25);
    CHECK(elapsed < 60.0);
}

TEST_CASE("C8 falsification probe") {
    const double eps = 0.1;
    NetworkModel m = two_node(eps);
    auto lfs = unit_lfs(m);
    std::vector<double> gamma{1.0, 1.0};
    auto cm = assemble_cm({cm_row(m, 0, lfs, gamma), cm_row(m, 1, lfs, gamma)}, gamma);
    auto clean = validate(m, lfs, cm, {}, 50, 20.0, 1e-3, 11);

    auto corrupted = cm;
    corrupted.A.at(0, 1) = -corrupted.A.at(0, 1);
    auto report = validate(m, lfs, corrupted, {}, 50, 20.0, 1e-3, 11);

    bool pass = clean.pass && !report.pass &&
                report.worst_comparison_margin > report.tolerance;
    report_line("C8", "falsification-probe", pass);
    CHECK(clean.pass);
    CHECK(!report.pass);
    CHECK(report.worst_comparison_margin > report.tolerance);
}

TEST_CASE("C9 determinism of the CLI pipeline") {
    namespace fs = std::filesystem;
    const std::string base = "/tmp/compsys_acceptance_det";
    fs::remove_all(base);
    fs::create_directories(base);

    const char* binary = std::getenv("DECOMPOSE_BIN");
    bool pass = true;
    std::vector<std::string> artifacts{"certificates.json", "adjacency.csv", "partition.json",
                                       "graph.dot", "validation.json", "trajectory.csv"};
    if (binary) {
        for (const char* out : {"a", "b"}) {
            std::string cmd = std::string(binary) +
                              " --model builtin:lv16 --seed 1 --gamma 0.6 --k 2 --out " + base +
                              "/" + out + " >/dev/null 2>&1";
            int rc = std::system(cmd.c_str());
            if (rc != 0) pass = false;
        }
    } else {
        // fallback: exercise the pipeline in-process
        std::printf("ACCEPTANCE C9 note: DECOMPOSE_BIN not set, running in-process\n");
        for (const char* out : {"a", "b"}) {
            ScenarioConfig config;
            config.source = ModelSource::BuiltinLv16;
            config.seed = 1;
            config.gamma = {0.6};
            config.k = 2;
            config.out_dir = base + "/" + out;
            if (run(config) != 0) pass = false;
        }
    }
    for (const auto& name : artifacts) {
        std::string a = slurp(base + "/a/" + name);
        std::string b = slurp(base + "/b/" + name);
        if (a.empty() || a != b) pass = false;
        CHECK_MESSAGE(!a.empty(), name);
        CHECK_MESSAGE(a == b, name);
    }
    report_line("C9", "cli-determinism", pass);
    CHECK(pass);
}
