#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "compsys/errors.hpp"
#include "compsys/flowgraph.hpp"
#include "compsys/rng.hpp"

using namespace compsys;

namespace {

DenseMatrix random_metzler_hurwitz(Rng& rng, int n) {
    DenseMatrix A(n, n);
    for (int i = 0; i < n; ++i) {
        double off = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i) {
                A.at(i, j) = rng.uniform(0.0, 0.4);
                off += A.at(i, j);
            }
        A.at(i, i) = -(off + rng.uniform(0.2, 1.0));
    }
    return A;
}

FlowBound mk_bound(int target, int source, int m, double ut, double us) {
    FlowBound fb;
    fb.target = target;
    fb.source = source;
    fb.u.assign(static_cast<size_t>(m), 0.0);
    fb.u[static_cast<size_t>(target)] = ut;
    fb.u[static_cast<size_t>(source)] = us;
    return fb;
}

DenseMatrix random_symmetric_weights(Rng& rng, int m, double density = 0.5) {
    DenseMatrix W(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            double w = (rng.uniform() < density) ? rng.uniform(0.1, 2.0) : 0.0;
            W.at(i, j) = w;
            W.at(j, i) = w;
        }
    return W;
}

}  // namespace

TEST_CASE("edge_energy_bound basics") {
    // A = -I: bound of u = alpha e_j is alpha v0_j
    DenseMatrix A = DenseMatrix::identity(3).scaled(-1.0);
    std::vector<double> u{0.0, 2.5, 0.0}, v0{0.3, 0.7, 0.9};
    CHECK(edge_energy_bound(u, A, v0) == doctest::Approx(2.5 * 0.7));

    DenseMatrix B = DenseMatrix::from_rows({{-2, 1}, {1, -2}});
    std::vector<double> e1{1.0, 0.0}, ones{1.0, 1.0};
    CHECK(edge_energy_bound(e1, B, ones) == doctest::Approx(1.0));
}

TEST_CASE("edge_energy_bound is monotone in the initial levels") {
    Rng rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        DenseMatrix A = random_metzler_hurwitz(rng, 5);
        std::vector<double> u(5), v0(5), v1(5);
        for (int i = 0; i < 5; ++i) {
            u[static_cast<size_t>(i)] = rng.uniform(0.0, 1.0);
            v0[static_cast<size_t>(i)] = rng.uniform(0.0, 1.0);
            v1[static_cast<size_t>(i)] = v0[static_cast<size_t>(i)] + rng.uniform(0.0, 0.5);
        }
        CHECK(edge_energy_bound(u, A, v1) >= edge_energy_bound(u, A, v0) - 1e-12);
        CHECK(edge_energy_bound(u, A, v0) >= -1e-10);
    }
}

TEST_CASE("total_energy_bound is additive over edges") {
    Rng rng(11);
    DenseMatrix A = random_metzler_hurwitz(rng, 4);
    EnergyGraph g{4, {}, A, {0.5, 0.5, 0.5, 0.5}};
    std::vector<double> v0{0.2, 0.4, 0.1, 0.3};
    CHECK(total_energy_bound(g, v0) == 0.0);

    g.edges.push_back(mk_bound(0, 1, 4, 0.1, 0.3));
    double single = edge_energy_bound(g.edges[0].u, A, v0);
    CHECK(total_energy_bound(g, v0) == doctest::Approx(single));

    g.edges.push_back(mk_bound(1, 2, 4, 0.2, 0.0));
    g.edges.push_back(mk_bound(3, 0, 4, 0.05, 0.15));
    double sum = 0.0;
    std::vector<double> u_total(4, 0.0);
    for (const auto& e : g.edges) {
        sum += edge_energy_bound(e.u, A, v0);
        for (int i = 0; i < 4; ++i) u_total[static_cast<size_t>(i)] += e.u[static_cast<size_t>(i)];
    }
    CHECK(total_energy_bound(g, v0) == doctest::Approx(sum).epsilon(1e-12));
    CHECK(total_energy_bound(g, v0) == doctest::Approx(edge_energy_bound(u_total, A, v0)).epsilon(1e-10));
}

TEST_CASE("build_adjacency takes the directional max and zero diagonal") {
    Rng rng(13);
    DenseMatrix A = random_metzler_hurwitz(rng, 2);
    EnergyGraph g{2, {}, A, {1.0, 1.0}};
    // two directions with different u
    g.edges.push_back(mk_bound(0, 1, 2, 0.0, 0.3));
    g.edges.push_back(mk_bound(1, 0, 2, 0.0, 0.7));
    DenseMatrix W = build_adjacency(g, AdjacencyMode::WorstCase);
    double b01 = edge_energy_bound(g.edges[0].u, A, g.gamma);
    double b10 = edge_energy_bound(g.edges[1].u, A, g.gamma);
    CHECK(W.at(0, 1) == doctest::Approx(std::max(b01, b10)));
    CHECK(W.at(0, 1) == W.at(1, 0));
    CHECK(W.at(0, 0) == 0.0);
    CHECK(W.at(1, 1) == 0.0);
}

TEST_CASE("normalized_laplacian basics") {
    DenseMatrix W(2, 2);
    W.at(0, 1) = W.at(1, 0) = 1.0;
    DenseMatrix L = normalized_laplacian(W);
    CHECK(L.at(0, 0) == doctest::Approx(1.0));
    CHECK(L.at(0, 1) == doctest::Approx(-1.0));

    // scaling W leaves L unchanged
    Rng rng(17);
    DenseMatrix R = random_symmetric_weights(rng, 5);
    DenseMatrix L1 = normalized_laplacian(R);
    DenseMatrix L2 = normalized_laplacian(R.scaled(3.7));
    CHECK((L1 - L2).max_abs() <= 1e-12);
}

TEST_CASE("normalized_laplacian is PSD with the degree null vector") {
    Rng rng(19);
    for (int rep = 0; rep < 10; ++rep) {
        DenseMatrix W = random_symmetric_weights(rng, 6, 0.8);
        DenseMatrix L = normalized_laplacian(W);
        auto ed = sym_eigen(L);
        CHECK(ed.values.front() >= -1e-9);
        // null vector D^{1/2} 1 (restricted to non-isolated nodes)
        std::vector<double> v(6, 0.0);
        for (int i = 0; i < 6; ++i) {
            double deg = 0.0;
            for (int j = 0; j < 6; ++j) deg += W.at(i, j);
            v[static_cast<size_t>(i)] = std::sqrt(deg);
        }
        auto Lv = L.mul_vec(v);
        CHECK(norm_inf(Lv) <= 1e-8 * std::max(1.0, norm2(v)));
    }
}

TEST_CASE("spectral_partition separates disconnected cliques") {
    const int m = 6;
    DenseMatrix W(m, m);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j) {
                W.at(i, j) = 1.0;
                W.at(i + 3, j + 3) = 1.0;
            }
    auto part = spectral_partition(W, 2, 5);
    CHECK(part.assignment[0] == part.assignment[1]);
    CHECK(part.assignment[1] == part.assignment[2]);
    CHECK(part.assignment[3] == part.assignment[4]);
    CHECK(part.assignment[4] == part.assignment[5]);
    CHECK(part.assignment[0] != part.assignment[3]);
    CHECK(part.cut_weight == doctest::Approx(0.0));
}

TEST_CASE("spectral_partition with K=1 returns a single cluster") {
    Rng rng(23);
    DenseMatrix W = random_symmetric_weights(rng, 5);
    auto part = spectral_partition(W, 1, 5);
    for (int v : part.assignment) CHECK(v == 0);
}

TEST_CASE("planted bipartition is recovered for ten seeds") {
    const int half = 8, m = 2 * half;
    DenseMatrix W(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            bool same = (i < half) == (j < half);
            W.at(i, j) = W.at(j, i) = same ? 1.0 : 0.01;
        }
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto part = spectral_partition(W, 2, seed);
        for (int i = 1; i < half; ++i) CHECK(part.assignment[static_cast<size_t>(i)] == part.assignment[0]);
        for (int i = half + 1; i < m; ++i)
            CHECK(part.assignment[static_cast<size_t>(i)] == part.assignment[static_cast<size_t>(half)]);
        CHECK(part.assignment[0] != part.assignment[static_cast<size_t>(half)]);
    }
}

TEST_CASE("spectral_partition is deterministic for a fixed seed") {
    Rng rng(29);
    DenseMatrix W = random_symmetric_weights(rng, 9, 0.6);
    auto a = spectral_partition(W, 3, 42);
    auto b = spectral_partition(W, 3, 42);
    CHECK(a.assignment == b.assignment);
    CHECK(a.cut_weight == b.cut_weight);
}

TEST_CASE("tied spectra flag a degenerate embedding but still cluster") {
    // complete graph with equal weights: all nonzero Laplacian eigenvalues tie
    const int m = 6;
    DenseMatrix W(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            if (i != j) W.at(i, j) = 1.0;
    auto part = spectral_partition(W, 2, 3);
    CHECK(part.assignment.size() == 6);
    std::set<int> used(part.assignment.begin(), part.assignment.end());
    CHECK(used.size() == 2);  // both clusters populated
    CHECK(part.eigengap <= 1e-9);
}

TEST_CASE("cut_weight basics and brute-force agreement") {
    DenseMatrix W(2, 2);
    W.at(0, 1) = W.at(1, 0) = 0.7;
    CHECK(cut_weight(W, {0, 0}) == 0.0);
    CHECK(cut_weight(W, {0, 1}) == doctest::Approx(0.7));

    Rng rng(31);
    for (int rep = 0; rep < 10; ++rep) {
        DenseMatrix R = random_symmetric_weights(rng, 7);
        std::vector<int> assign(7);
        for (auto& a : assign) a = static_cast<int>(rng.uniform_index(3));
        double expect = 0.0;
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 7; ++j)
                if (i < j && assign[static_cast<size_t>(i)] != assign[static_cast<size_t>(j)])
                    expect += R.at(i, j);
        CHECK(cut_weight(R, assign) == doctest::Approx(expect));
    }
}

TEST_CASE("dot export carries clusters and edge widths") {
    DenseMatrix W(3, 3);
    W.at(0, 1) = W.at(1, 0) = 1.0;
    W.at(1, 2) = W.at(2, 1) = 0.25;
    Partition part;
    part.k = 2;
    part.assignment = {0, 0, 1};
    std::string dot = energy_graph_to_dot(W, part);
    CHECK(dot.find("n0 -- n1 [penwidth=4.5]") != std::string::npos);
    CHECK(dot.find("fillcolor=") != std::string::npos);
    std::string csv = matrix_to_csv(W);
    CHECK(csv.find("0,1,0") == 0);
}
