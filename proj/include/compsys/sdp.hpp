#pragma once

#include <string>
#include <utility>
#include <vector>

#include "compsys/linalg.hpp"

namespace compsys {

/// Reference to one entry of a PSD variable block, upper triangle (i <= j).
/// The functional contribution is coef * X[i][j], where X[i][j] = X[j][i] is
/// the single symmetric value (referenced once, not twice).
struct SdpEntry {
    int block;
    int i;
    int j;
    double coef;
};

/// Linear functional over the block entries and the free scalars.
struct SdpFunctional {
    std::vector<SdpEntry> entries;
    std::vector<std::pair<int, double>> free_entries;  // (free index, coef)
};

struct SdpConstraint {
    SdpFunctional lhs;
    double rhs = 0.0;
};

/// Equality-constrained SDP in primal form:
///   minimize   objective(X, u)
///   subject to constraint_k(X, u) = rhs_k,   X_b >= 0 (PSD),  u free.
struct SdpProblem {
    std::vector<int> block_dims;
    int num_free = 0;
    std::vector<SdpConstraint> constraints;
    SdpFunctional objective;
};

enum class SdpStatus { Optimal, Infeasible, MaxIter };

const char* to_string(SdpStatus s);

struct SdpSolution {
    SdpStatus status = SdpStatus::MaxIter;
    std::vector<DenseMatrix> blocks;
    std::vector<double> free_values;
    double objective = 0.0;
    /// max_k |constraint_k(X,u) - rhs_k|, unscaled
    double max_residual = 0.0;
    double min_block_eigenvalue = 0.0;
    /// |primal - dual| / (1 + |primal| + |dual|)
    double relative_gap = 0.0;
    int iterations = 0;
};

/// Primal-dual interior-point solver (Nesterov-Todd scaling, Mehrotra-style
/// adaptive centering) for small dense problems. Infeasibility is reported
/// when the dual objective diverges past 1e8 while staying dual-feasible;
/// anything else that fails to converge comes back as MaxIter.
SdpSolution solve_sdp(const SdpProblem& prob, double feas_tol = 1e-7, int max_iter = 200);

/// Debug dump (documented JSON schema, see README) for cross-checking a
/// problem against external solvers.
std::string sdp_problem_to_json(const SdpProblem& prob);

}  // namespace compsys
