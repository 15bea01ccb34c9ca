#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "compsys/certify.hpp"
#include "compsys/linalg.hpp"

namespace compsys {

/// The comparison system viewed as a weighted interaction graph: per-edge
/// worst-case energy bounds over a domain, ready for spectral partitioning.
struct EnergyGraph {
    int nodes = 0;
    std::vector<FlowBound> edges;  // directed, target <- source
    DenseMatrix A;                 // comparison matrix (Metzler, Hurwitz for finite bounds)
    std::vector<double> gamma;
};

/// -u^T A^{-1} v0, evaluated through a linear solve (A b = -v0). Requires a
/// Metzler-Hurwitz A; the result is nonnegative up to round-off.
double edge_energy_bound(std::span<const double> u, const DenseMatrix& A,
                         std::span<const double> v0);

/// Sum of edge bounds; equals the bound of the summed u vectors.
double total_energy_bound(const EnergyGraph& graph, std::span<const double> v0);

enum class AdjacencyMode { WorstCase, Initial };

/// Symmetric weighted adjacency: w_ij = max of the two directed bounds,
/// evaluated at Gamma (worst case) or at a given v(0) (initial mode).
DenseMatrix build_adjacency(const EnergyGraph& graph, AdjacencyMode mode,
                            std::span<const double> v0 = {});

/// L_sym = I - D^{-1/2} W D^{-1/2}; zero-degree nodes keep a zero scaling row
/// (and end up isolated with unit diagonal).
DenseMatrix normalized_laplacian(const DenseMatrix& W);

struct Partition {
    int k = 0;
    std::vector<int> assignment;  // node -> cluster
    double cut_weight = 0.0;
    std::vector<double> internal_weight;  // per cluster
    double eigengap = 0.0;                // lambda_{K+1} - lambda_K, advisory
    bool degenerate_embedding = false;    // near rank-deficient spectral embedding
};

/// Spectral partitioning: rows of the first K eigenvectors of L_sym,
/// normalized, clustered by seeded k-means++ with restarts. Deterministic for
/// a fixed seed.
Partition spectral_partition(const DenseMatrix& W, int k, std::uint64_t seed);

/// Total weight crossing the partition.
double cut_weight(const DenseMatrix& W, const std::vector<int>& assignment);

/// Dense matrix as CSV (one row per line, comma separated, stable decimals).
std::string matrix_to_csv(const DenseMatrix& W);

/// Graphviz export: cluster-colored nodes, undirected edges with pen width
/// 0.5 + 4 w/max(w).
std::string energy_graph_to_dot(const DenseMatrix& W, const Partition& partition);

}  // namespace compsys
