#include "compsys/flowgraph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "compsys/errors.hpp"
#include "compsys/rng.hpp"

namespace compsys {

double edge_energy_bound(std::span<const double> u, const DenseMatrix& A,
                         std::span<const double> v0) {
    if (static_cast<int>(u.size()) != A.rows() || static_cast<int>(v0.size()) != A.rows())
        throw DimensionMismatch("edge_energy_bound shapes");
    std::vector<double> neg_v0(v0.size());
    for (size_t i = 0; i < v0.size(); ++i) neg_v0[i] = -v0[i];
    std::vector<double> b = solve_linear(A, neg_v0);  // b = -A^{-1} v0
    double r = dot(u, b);
    if (r < -1e-10)
        throw Error("energy bound came out negative (" + format_double(r) +
                    "); comparison matrix is not the certified one");
    return r;
}

double total_energy_bound(const EnergyGraph& graph, std::span<const double> v0) {
    double total = 0.0;
    for (const auto& e : graph.edges) total += edge_energy_bound(e.u, graph.A, v0);
    return total;
}

DenseMatrix build_adjacency(const EnergyGraph& graph, AdjacencyMode mode,
                            std::span<const double> v0) {
    if (metzler_hurwitz(graph.A) == HurwitzVerdict::NotHurwitz)
        throw Error("build_adjacency requires a Hurwitz comparison matrix");
    std::vector<double> level;
    if (mode == AdjacencyMode::WorstCase)
        level = graph.gamma;
    else {
        if (static_cast<int>(v0.size()) != graph.nodes)
            throw DimensionMismatch("initial mode needs v(0) per node");
        level.assign(v0.begin(), v0.end());
    }

    const int m = graph.nodes;
    DenseMatrix W(m, m);
    for (const auto& e : graph.edges) {
        double b = edge_energy_bound(e.u, graph.A, level);
        int i = e.target, j = e.source;
        double w = std::max({W.at(i, j), W.at(j, i), b});
        W.at(i, j) = w;
        W.at(j, i) = w;
    }
    for (int i = 0; i < m; ++i) W.at(i, i) = 0.0;
    return W;
}

DenseMatrix normalized_laplacian(const DenseMatrix& W) {
    const int m = W.rows();
    if (W.cols() != m) throw DimensionMismatch("normalized_laplacian needs square W");
    std::vector<double> dinv_sqrt(static_cast<size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        double deg = 0.0;
        for (int j = 0; j < m; ++j) deg += W.at(i, j);
        if (deg > 0.0) dinv_sqrt[static_cast<size_t>(i)] = 1.0 / std::sqrt(deg);
    }
    DenseMatrix L(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j)
            L.at(i, j) = (i == j ? 1.0 : 0.0) -
                         dinv_sqrt[static_cast<size_t>(i)] * W.at(i, j) * dinv_sqrt[static_cast<size_t>(j)];
    }
    return L.symmetrized();
}

namespace {

struct KmeansResult {
    std::vector<int> assignment;
    double wcss = std::numeric_limits<double>::infinity();
};

KmeansResult kmeans_once(const DenseMatrix& points, int k, Rng& rng) {
    const int n = points.rows(), d = points.cols();
    // k-means++ seeding
    std::vector<std::vector<double>> centers;
    std::vector<double> dist2(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
    int first = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    auto point_at = [&](int i) {
        std::vector<double> p(static_cast<size_t>(d));
        for (int c = 0; c < d; ++c) p[static_cast<size_t>(c)] = points.at(i, c);
        return p;
    };
    centers.push_back(point_at(first));
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double dd = 0.0;
            for (int c = 0; c < d; ++c) {
                double diff = points.at(i, c) - centers.back()[static_cast<size_t>(c)];
                dd += diff * diff;
            }
            dist2[static_cast<size_t>(i)] = std::min(dist2[static_cast<size_t>(i)], dd);
            total += dist2[static_cast<size_t>(i)];
        }
        int pick = 0;
        if (total > 0.0) {
            double target = rng.uniform() * total, run = 0.0;
            for (int i = 0; i < n; ++i) {
                run += dist2[static_cast<size_t>(i)];
                if (run >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
        }
        centers.push_back(point_at(pick));
    }

    std::vector<int> assign(static_cast<size_t>(n), 0);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                double dd = 0.0;
                for (int q = 0; q < d; ++q) {
                    double diff = points.at(i, q) - centers[static_cast<size_t>(c)][static_cast<size_t>(q)];
                    dd += diff * diff;
                }
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            if (assign[static_cast<size_t>(i)] != best) {
                assign[static_cast<size_t>(i)] = best;
                changed = true;
            }
        }
        // recompute centers; re-seat empty clusters on the farthest point
        std::vector<std::vector<double>> sums(static_cast<size_t>(k),
                                              std::vector<double>(static_cast<size_t>(d), 0.0));
        std::vector<int> counts(static_cast<size_t>(k), 0);
        for (int i = 0; i < n; ++i) {
            ++counts[static_cast<size_t>(assign[static_cast<size_t>(i)])];
            for (int q = 0; q < d; ++q)
                sums[static_cast<size_t>(assign[static_cast<size_t>(i)])][static_cast<size_t>(q)] += points.at(i, q);
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] == 0) {
                double far_d = -1.0;
                int far_i = 0;
                for (int i = 0; i < n; ++i) {
                    double dd = 0.0;
                    int a = assign[static_cast<size_t>(i)];
                    for (int q = 0; q < d; ++q) {
                        double diff = points.at(i, q) - centers[static_cast<size_t>(a)][static_cast<size_t>(q)];
                        dd += diff * diff;
                    }
                    if (dd > far_d) {
                        far_d = dd;
                        far_i = i;
                    }
                }
                assign[static_cast<size_t>(far_i)] = c;
                centers[static_cast<size_t>(c)] = point_at(far_i);
                changed = true;
            } else {
                for (int q = 0; q < d; ++q)
                    centers[static_cast<size_t>(c)][static_cast<size_t>(q)] =
                        sums[static_cast<size_t>(c)][static_cast<size_t>(q)] / counts[static_cast<size_t>(c)];
            }
        }
        if (!changed) break;
    }

    KmeansResult res;
    res.assignment = assign;
    res.wcss = 0.0;
    for (int i = 0; i < n; ++i) {
        int c = assign[static_cast<size_t>(i)];
        for (int q = 0; q < d; ++q) {
            double diff = points.at(i, q) - centers[static_cast<size_t>(c)][static_cast<size_t>(q)];
            res.wcss += diff * diff;
        }
    }
    return res;
}

}  // namespace

Partition spectral_partition(const DenseMatrix& W, int k, std::uint64_t seed) {
    const int m = W.rows();
    if (k < 1 || k > m) throw ConfigError("spectral_partition: K must be in [1, m]");

    Partition part;
    part.k = k;
    if (k == 1) {
        part.assignment.assign(static_cast<size_t>(m), 0);
        part.internal_weight.resize(1);
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) part.internal_weight[0] += W.at(i, j);
        return part;
    }

    DenseMatrix L = normalized_laplacian(W);
    EigenDecomposition ed = sym_eigen(L);
    part.eigengap = (k < m) ? ed.values[static_cast<size_t>(k)] - ed.values[static_cast<size_t>(k - 1)] : 0.0;

    // spectral embedding: first K eigenvectors as columns, rows normalized
    DenseMatrix U(m, k);
    for (int i = 0; i < m; ++i) {
        double norm = 0.0;
        for (int c = 0; c < k; ++c) norm += ed.vectors.at(i, c) * ed.vectors.at(i, c);
        norm = std::sqrt(norm);
        for (int c = 0; c < k; ++c) U.at(i, c) = (norm > 0.0) ? ed.vectors.at(i, c) / norm : 0.0;
    }
    // rank estimate of the embedding via the Gram of U
    {
        DenseMatrix G = U.transpose() * U;
        auto ge = sym_eigen(G);
        if (ge.values.front() < 1e-12 * std::max(1.0, ge.values.back()))
            part.degenerate_embedding = true;
    }

    Rng rng(seed);
    KmeansResult best;
    for (int restart = 0; restart < 20; ++restart) {
        KmeansResult res = kmeans_once(U, k, rng);
        if (res.wcss < best.wcss) best = std::move(res);  // ties keep the earlier restart
    }
    part.assignment = best.assignment;

    part.internal_weight.assign(static_cast<size_t>(k), 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            if (part.assignment[static_cast<size_t>(i)] == part.assignment[static_cast<size_t>(j)])
                part.internal_weight[static_cast<size_t>(part.assignment[static_cast<size_t>(i)])] += W.at(i, j);
            else
                part.cut_weight += W.at(i, j);
        }
    return part;
}

double cut_weight(const DenseMatrix& W, const std::vector<int>& assignment) {
    if (static_cast<int>(assignment.size()) != W.rows())
        throw DimensionMismatch("cut_weight assignment length");
    double cut = 0.0;
    for (int i = 0; i < W.rows(); ++i)
        for (int j = i + 1; j < W.cols(); ++j)
            if (assignment[static_cast<size_t>(i)] != assignment[static_cast<size_t>(j)]) cut += W.at(i, j);
    return cut;
}

std::string matrix_to_csv(const DenseMatrix& W) {
    std::string out;
    for (int i = 0; i < W.rows(); ++i) {
        for (int j = 0; j < W.cols(); ++j) {
            if (j) out += ",";
            out += format_double(W.at(i, j));
        }
        out += "\n";
    }
    return out;
}

std::string energy_graph_to_dot(const DenseMatrix& W, const Partition& partition) {
    static const char* palette[] = {"lightblue", "lightsalmon", "palegreen", "plum",
                                    "khaki",     "lightcyan",   "mistyrose", "lavender"};
    double wmax = W.max_abs();
    std::string out = "graph energy_flow {\n  node [style=filled];\n";
    for (int i = 0; i < W.rows(); ++i) {
        int c = partition.assignment.empty() ? 0 : partition.assignment[static_cast<size_t>(i)];
        out += "  n" + std::to_string(i) + " [fillcolor=" + palette[c % 8] + "];\n";
    }
    for (int i = 0; i < W.rows(); ++i)
        for (int j = i + 1; j < W.cols(); ++j) {
            if (W.at(i, j) <= 0.0) continue;
            double pen = 0.5 + 4.0 * (wmax > 0.0 ? W.at(i, j) / wmax : 0.0);
            out += "  n" + std::to_string(i) + " -- n" + std::to_string(j) +
                   " [penwidth=" + format_double(pen) + "];\n";
        }
    out += "}\n";
    return out;
}

}  // namespace compsys
