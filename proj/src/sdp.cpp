#include "compsys/sdp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>

#include <json.hpp>

#include "compsys/errors.hpp"

namespace compsys {

const char* to_string(SdpStatus s) {
    switch (s) {
        case SdpStatus::Optimal: return "Optimal";
        case SdpStatus::Infeasible: return "Infeasible";
        case SdpStatus::MaxIter: return "MaxIter";
    }
    return "?";
}

namespace {

constexpr double kDivergence = 1e8;

// Symmetric coefficient data of one constraint (or the objective) within one
// block: entry (i, j, a) means A[i][j] = A[j][i] = a.
struct BlockCoeffs {
    std::vector<std::array<int, 2>> idx;
    std::vector<double> val;
};

double inner(const BlockCoeffs& A, const DenseMatrix& X) {
    double s = 0.0;
    for (size_t t = 0; t < A.idx.size(); ++t) {
        int i = A.idx[t][0], j = A.idx[t][1];
        s += A.val[t] * X.at(i, j) * (i == j ? 1.0 : 2.0);
    }
    return s;
}

void axpy_into(double alpha, const BlockCoeffs& A, DenseMatrix& M) {
    for (size_t t = 0; t < A.idx.size(); ++t) {
        int i = A.idx[t][0], j = A.idx[t][1];
        M.at(i, j) += alpha * A.val[t];
        if (i != j) M.at(j, i) += alpha * A.val[t];
    }
}

// Lower-triangular inverse by forward substitution.
DenseMatrix invert_lower(const DenseMatrix& L) {
    const int n = L.rows();
    DenseMatrix inv(n, n);
    for (int j = 0; j < n; ++j) {
        inv.at(j, j) = 1.0 / L.at(j, j);
        for (int i = j + 1; i < n; ++i) {
            double s = 0.0;
            for (int k = j; k < i; ++k) s += L.at(i, k) * inv.at(k, j);
            inv.at(i, j) = -s / L.at(i, i);
        }
    }
    return inv;
}

// Cholesky that tolerates a whisker of lost definiteness by jittering the
// diagonal; interior-point iterates are PD by construction, this only absorbs
// rounding at tiny mu.
DenseMatrix chol_pd(DenseMatrix S) {
    double jitter = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
        try {
            return cholesky(S);
        } catch (const NotPositiveSemidefinite&) {
            double base = std::max(1e-300, S.max_abs());
            jitter = (jitter == 0.0) ? 1e-14 * base : jitter * 1000.0;
            for (int i = 0; i < S.rows(); ++i) S.at(i, i) += jitter;
        }
    }
    return cholesky(S);  // let it throw
}

struct ScalePoint {
    DenseMatrix Lx, Lxinv;  // X = Lx Lx^T
    DenseMatrix Lz, Lzinv;  // Z = Lz Lz^T
    DenseMatrix W;          // Nesterov-Todd scaling: W Z W = X
    DenseMatrix Zinv;
};

ScalePoint make_scaling(const DenseMatrix& X, const DenseMatrix& Z) {
    ScalePoint sp;
    sp.Lx = chol_pd(X);
    sp.Lz = chol_pd(Z);
    sp.Lxinv = invert_lower(sp.Lx);
    sp.Lzinv = invert_lower(sp.Lz);
    sp.Zinv = (sp.Lzinv.transpose() * sp.Lzinv).symmetrized();
    // W = Lx T^{-1/2} Lx^T with T = Lx^T Z Lx.
    DenseMatrix T = (sp.Lx.transpose() * Z * sp.Lx).symmetrized();
    EigenDecomposition ed = sym_eigen(T);
    const int n = T.rows();
    DenseMatrix Tinvhalf(n, n);
    for (int k = 0; k < n; ++k) {
        double lam = std::max(ed.values[static_cast<size_t>(k)], 1e-300);
        double s = 1.0 / std::sqrt(lam);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                Tinvhalf.at(i, j) += s * ed.vectors.at(i, k) * ed.vectors.at(j, k);
    }
    sp.W = (sp.Lx * Tinvhalf * sp.Lx.transpose()).symmetrized();
    return sp;
}

// Largest alpha with X + alpha*D PSD, given Linv from X = L L^T.
double step_to_boundary(const DenseMatrix& Linv, const DenseMatrix& D) {
    DenseMatrix S = (Linv * D * Linv.transpose()).symmetrized();
    EigenDecomposition ed = sym_eigen(S);
    double lam_min = ed.values.front();
    if (lam_min >= -1e-14) return std::numeric_limits<double>::infinity();
    return -1.0 / lam_min;
}

struct Presolved {
    SdpProblem prob;                // with empty blocks / null rows removed
    std::vector<int> block_map;     // original block -> new index or -1
    std::vector<double> row_scale;  // applied 1/scale per kept constraint
    bool trivially_infeasible = false;
};

Presolved presolve(const SdpProblem& in) {
    Presolved out;
    const int nb = static_cast<int>(in.block_dims.size());
    std::vector<bool> touched(static_cast<size_t>(nb), false);
    for (const auto& c : in.constraints)
        for (const auto& e : c.lhs.entries) touched[static_cast<size_t>(e.block)] = true;
    for (const auto& e : in.objective.entries) touched[static_cast<size_t>(e.block)] = true;

    out.block_map.assign(static_cast<size_t>(nb), -1);
    for (int b = 0; b < nb; ++b)
        if (touched[static_cast<size_t>(b)]) {
            out.block_map[static_cast<size_t>(b)] = static_cast<int>(out.prob.block_dims.size());
            out.prob.block_dims.push_back(in.block_dims[static_cast<size_t>(b)]);
        }
    out.prob.num_free = in.num_free;

    auto remap = [&](const SdpFunctional& f) {
        SdpFunctional g;
        g.free_entries = f.free_entries;
        for (auto e : f.entries) {
            e.block = out.block_map[static_cast<size_t>(e.block)];
            if (e.i > e.j) std::swap(e.i, e.j);
            g.entries.push_back(e);
        }
        return g;
    };
    out.prob.objective = remap(in.objective);

    for (const auto& c : in.constraints) {
        double scale = 0.0;
        for (const auto& e : c.lhs.entries) scale += e.coef * e.coef;
        for (const auto& [k, v] : c.lhs.free_entries) scale += v * v;
        scale = std::sqrt(scale);
        if (scale < 1e-14) {
            if (std::abs(c.rhs) > 1e-12) out.trivially_infeasible = true;
            continue;  // 0 = 0 row
        }
        SdpConstraint kept;
        kept.lhs = remap(c.lhs);
        double inv = 1.0 / scale;
        for (auto& e : kept.lhs.entries) e.coef *= inv;
        for (auto& [k, v] : kept.lhs.free_entries) v *= inv;
        kept.rhs = c.rhs * inv;
        out.prob.constraints.push_back(std::move(kept));
        out.row_scale.push_back(scale);
    }
    return out;
}

}  // namespace

SdpSolution solve_sdp(const SdpProblem& input, double feas_tol, int max_iter) {
    Presolved pre = presolve(input);
    const SdpProblem& prob = pre.prob;
    const int nb = static_cast<int>(prob.block_dims.size());
    const int m = static_cast<int>(prob.constraints.size());
    const int nf = prob.num_free;

    auto finish = [&](SdpStatus status, const std::vector<DenseMatrix>& X,
                      const std::vector<double>& u, int iters, double relgap = 0.0) {
        SdpSolution sol;
        sol.status = status;
        sol.iterations = iters;
        sol.relative_gap = relgap;
        // Re-expand to the original block list (dropped blocks come back as 0).
        sol.blocks.reserve(input.block_dims.size());
        for (size_t b = 0; b < input.block_dims.size(); ++b) {
            int nbk = pre.block_map[b];
            if (nbk >= 0)
                sol.blocks.push_back(X[static_cast<size_t>(nbk)].symmetrized());
            else
                sol.blocks.emplace_back(input.block_dims[b], input.block_dims[b]);
        }
        sol.free_values = u;
        auto eval_fn = [&](const SdpFunctional& f) {
            double s = 0.0;
            for (const auto& e : f.entries)
                s += e.coef * sol.blocks[static_cast<size_t>(e.block)].at(e.i, e.j);
            for (const auto& [k, v] : f.free_entries) s += v * u[static_cast<size_t>(k)];
            return s;
        };
        sol.objective = eval_fn(input.objective);
        for (const auto& c : input.constraints)
            sol.max_residual = std::max(sol.max_residual, std::abs(eval_fn(c.lhs) - c.rhs));
        sol.min_block_eigenvalue = 0.0;
        for (const auto& Xb : sol.blocks)
            if (Xb.rows() > 0)
                sol.min_block_eigenvalue =
                    std::min(sol.min_block_eigenvalue, sym_eigen(Xb).values.front());
        return sol;
    };

    if (pre.trivially_infeasible)
        return finish(SdpStatus::Infeasible,
                      [&] {
                          std::vector<DenseMatrix> X;
                          for (int d : prob.block_dims) X.emplace_back(d, d);
                          return X;
                      }(),
                      std::vector<double>(static_cast<size_t>(nf), 0.0), 0);
    if (m == 0 && nf == 0) {
        std::vector<DenseMatrix> X;
        for (int d : prob.block_dims) X.emplace_back(d, d);
        return finish(SdpStatus::Optimal, X, {}, 0);
    }

    // Pure feasibility problems get a minimum-trace objective so the dual has
    // a strict interior (C = 0 has none); the reported objective is still the
    // caller's.
    bool zero_objective = prob.objective.entries.empty() && prob.objective.free_entries.empty();
    SdpFunctional work_obj = prob.objective;
    if (zero_objective) {
        for (int b = 0; b < nb; ++b)
            for (int i = 0; i < prob.block_dims[static_cast<size_t>(b)]; ++i)
                work_obj.entries.push_back({b, i, i, 1.0});
    }

    // Per-block symmetric coefficient tables.
    std::vector<std::vector<BlockCoeffs>> A(static_cast<size_t>(m));     // [k][b]
    std::vector<BlockCoeffs> C(static_cast<size_t>(nb));
    std::vector<std::vector<double>> Bf(static_cast<size_t>(m));         // [k][free]
    std::vector<double> cf(static_cast<size_t>(nf), 0.0);
    std::vector<double> rhs(static_cast<size_t>(m), 0.0);

    auto to_coeffs = [&](const SdpFunctional& f, std::vector<BlockCoeffs>& per_block,
                         std::vector<double>& free_out) {
        per_block.assign(static_cast<size_t>(nb), {});
        free_out.assign(static_cast<size_t>(nf), 0.0);
        for (const auto& e : f.entries) {
            double a = (e.i == e.j) ? e.coef : 0.5 * e.coef;
            per_block[static_cast<size_t>(e.block)].idx.push_back({e.i, e.j});
            per_block[static_cast<size_t>(e.block)].val.push_back(a);
        }
        for (const auto& [k, v] : f.free_entries) free_out[static_cast<size_t>(k)] += v;
    };

    to_coeffs(work_obj, C, cf);
    for (int k = 0; k < m; ++k) {
        std::vector<BlockCoeffs> per_block;
        to_coeffs(prob.constraints[static_cast<size_t>(k)].lhs, per_block, Bf[static_cast<size_t>(k)]);
        A[static_cast<size_t>(k)] = std::move(per_block);
        rhs[static_cast<size_t>(k)] = prob.constraints[static_cast<size_t>(k)].rhs;
    }
    // For each block, the constraints touching it (sparsity of the Schur loop).
    std::vector<std::vector<int>> block_rows(static_cast<size_t>(nb));
    for (int k = 0; k < m; ++k)
        for (int b = 0; b < nb; ++b)
            if (!A[static_cast<size_t>(k)][static_cast<size_t>(b)].idx.empty())
                block_rows[static_cast<size_t>(b)].push_back(k);

    // Initial point.
    double bmax = 1.0, anorm = 1.0, cnorm = 1.0;
    for (int k = 0; k < m; ++k) bmax = std::max(bmax, std::abs(rhs[static_cast<size_t>(k)]));
    for (int b = 0; b < nb; ++b) {
        double cb = 0.0;
        for (double v : C[static_cast<size_t>(b)].val) cb += v * v;
        cnorm = std::max(cnorm, std::sqrt(cb));
    }
    (void)anorm;
    std::vector<DenseMatrix> X, Z;
    for (int b = 0; b < nb; ++b) {
        int d = prob.block_dims[static_cast<size_t>(b)];
        double xi = std::max({10.0, std::sqrt(static_cast<double>(d)), bmax});
        double eta = std::max({10.0, std::sqrt(static_cast<double>(d)), cnorm});
        DenseMatrix Xb(d, d), Zb(d, d);
        for (int i = 0; i < d; ++i) {
            Xb.at(i, i) = xi;
            Zb.at(i, i) = eta;
        }
        X.push_back(Xb);
        Z.push_back(Zb);
    }
    std::vector<double> y(static_cast<size_t>(m), 0.0), u(static_cast<size_t>(nf), 0.0);

    double total_dim = 0.0;
    for (int d : prob.block_dims) total_dim += d;

    const double gap_tol = std::max(1e-9, std::min(1e-7, feas_tol));
    const double gap_accept = 1e-6;  // contract ceiling

    double mu_prev = std::numeric_limits<double>::infinity();
    double mu_first = 0.0;
    int stall_count = 0;
    bool diverged = false;

    // Best iterate that already satisfies the acceptance contract; returned
    // if the tighter in-loop target is never reached (degenerate problems can
    // lose primal accuracy again as mu collapses).
    struct Snapshot {
        std::vector<DenseMatrix> X;
        std::vector<double> u;
        double gap = std::numeric_limits<double>::infinity();
        int iter = 0;
    };
    std::optional<Snapshot> best;

    // Unweighted constraint-Gram KKT, factored on demand; shared by the
    // in-loop feasibility restoration and the exit cleanup.
    DenseMatrix gramG;
    std::optional<LuFactors> gram_lu;
    auto gram_factor = [&]() -> LuFactors* {
        if (!gram_lu) {
            const int dim = m + nf;
            gramG = DenseMatrix(dim, dim);
            for (int b = 0; b < nb; ++b) {
                int d = prob.block_dims[static_cast<size_t>(b)];
                const auto& rows_b = block_rows[static_cast<size_t>(b)];
                for (int l : rows_b) {
                    DenseMatrix Al(d, d);
                    axpy_into(1.0, A[static_cast<size_t>(l)][static_cast<size_t>(b)], Al);
                    for (int k : rows_b) {
                        if (k > l) continue;
                        double v = inner(A[static_cast<size_t>(k)][static_cast<size_t>(b)], Al);
                        gramG.at(k, l) += v;
                        if (k != l) gramG.at(l, k) += v;
                    }
                }
            }
            for (int k = 0; k < m; ++k)
                for (int j = 0; j < nf; ++j) {
                    gramG.at(k, m + j) = Bf[static_cast<size_t>(k)][static_cast<size_t>(j)];
                    gramG.at(m + j, k) = Bf[static_cast<size_t>(k)][static_cast<size_t>(j)];
                }
            try {
                gram_lu.emplace(gramG);
            } catch (const SingularMatrix&) {
                return nullptr;
            }
        }
        return &*gram_lu;
    };
    // Minimum-norm shift of (X, u) onto the constraint affine space.
    auto restore_primal = [&](std::vector<DenseMatrix>& Xs, std::vector<double>& us) {
        LuFactors* lu = gram_factor();
        if (!lu) return false;
        std::vector<double> r(static_cast<size_t>(m + nf), 0.0);
        for (int k = 0; k < m; ++k) {
            double ax = 0.0;
            for (int b = 0; b < nb; ++b)
                ax += inner(A[static_cast<size_t>(k)][static_cast<size_t>(b)], Xs[static_cast<size_t>(b)]);
            for (int j = 0; j < nf; ++j) ax += Bf[static_cast<size_t>(k)][static_cast<size_t>(j)] * us[static_cast<size_t>(j)];
            r[static_cast<size_t>(k)] = rhs[static_cast<size_t>(k)] - ax;
        }
        std::vector<double> w = lu->solve(r);
        for (double v : w)
            if (!std::isfinite(v)) return false;
        for (int b = 0; b < nb; ++b)
            for (int k : block_rows[static_cast<size_t>(b)])
                axpy_into(w[static_cast<size_t>(k)], A[static_cast<size_t>(k)][static_cast<size_t>(b)],
                          Xs[static_cast<size_t>(b)]);
        for (int j = 0; j < nf; ++j) us[static_cast<size_t>(j)] += w[static_cast<size_t>(m + j)];
        return true;
    };
    bool restoration_on = true;

    // Cone-adapted fallback: the correction X A*(w) X distributes along X's
    // own geometry, so it stays PSD where the flat projection would cross the
    // boundary. The X-weighted Gram must be rebuilt per call.
    auto restore_primal_weighted = [&](std::vector<DenseMatrix>& Xs, std::vector<double>& us) {
        const int dim = m + nf;
        DenseMatrix M(dim, dim);
        std::vector<std::vector<DenseMatrix>> XAX(static_cast<size_t>(m));
        for (int k = 0; k < m; ++k) XAX[static_cast<size_t>(k)].resize(static_cast<size_t>(nb));
        for (int b = 0; b < nb; ++b) {
            int d = prob.block_dims[static_cast<size_t>(b)];
            const auto& rows_b = block_rows[static_cast<size_t>(b)];
            for (int l : rows_b) {
                DenseMatrix Al(d, d);
                axpy_into(1.0, A[static_cast<size_t>(l)][static_cast<size_t>(b)], Al);
                DenseMatrix S = (Xs[static_cast<size_t>(b)] * Al * Xs[static_cast<size_t>(b)]).symmetrized();
                XAX[static_cast<size_t>(l)][static_cast<size_t>(b)] = S;
                for (int k : rows_b) {
                    if (k > l) continue;
                    double v = inner(A[static_cast<size_t>(k)][static_cast<size_t>(b)], S);
                    M.at(k, l) += v;
                    if (k != l) M.at(l, k) += v;
                }
            }
        }
        for (int k = 0; k < m; ++k)
            for (int j = 0; j < nf; ++j) {
                M.at(k, m + j) = Bf[static_cast<size_t>(k)][static_cast<size_t>(j)];
                M.at(m + j, k) = Bf[static_cast<size_t>(k)][static_cast<size_t>(j)];
            }
        std::vector<double> r(static_cast<size_t>(dim), 0.0);
        for (int k = 0; k < m; ++k) {
            double ax = 0.0;
            for (int b = 0; b < nb; ++b)
                ax += inner(A[static_cast<size_t>(k)][static_cast<size_t>(b)], Xs[static_cast<size_t>(b)]);
            for (int j = 0; j < nf; ++j) ax += Bf[static_cast<size_t>(k)][static_cast<size_t>(j)] * us[static_cast<size_t>(j)];
            r[static_cast<size_t>(k)] = rhs[static_cast<size_t>(k)] - ax;
        }
        std::vector<double> w;
        try {
            w = LuFactors(M).solve(r);
        } catch (const SingularMatrix&) {
            return false;
        }
        for (double v : w)
            if (!std::isfinite(v)) return false;
        for (double scale : {1.0, 0.5, 0.25}) {
            std::vector<DenseMatrix> Xn = Xs;
            std::vector<double> un = us;
            for (int b = 0; b < nb; ++b)
                for (int k : block_rows[static_cast<size_t>(b)]) {
                    const DenseMatrix& S = XAX[static_cast<size_t>(k)][static_cast<size_t>(b)];
                    if (S.rows() == 0) continue;
                    Xn[static_cast<size_t>(b)] =
                        Xn[static_cast<size_t>(b)] + S.scaled(scale * w[static_cast<size_t>(k)]);
                }
            for (int j = 0; j < nf; ++j) un[static_cast<size_t>(j)] += scale * w[static_cast<size_t>(m + j)];
            try {
                for (const auto& Xb : Xn) cholesky(Xb);
            } catch (const NotPositiveSemidefinite&) {
                continue;
            }
            Xs = std::move(Xn);
            us = std::move(un);
            return true;
        }
        return false;
    };

    int iter = 0;
    for (; iter < max_iter; ++iter) {
        // Residuals.
        std::vector<double> rp(static_cast<size_t>(m));
        double rp_inf_orig = 0.0;
        auto compute_rp = [&]() {
            rp_inf_orig = 0.0;
            for (int k = 0; k < m; ++k) {
                double ax = 0.0;
                for (int b = 0; b < nb; ++b) ax += inner(A[static_cast<size_t>(k)][static_cast<size_t>(b)], X[static_cast<size_t>(b)]);
                for (int j = 0; j < nf; ++j) ax += Bf[static_cast<size_t>(k)][static_cast<size_t>(j)] * u[static_cast<size_t>(j)];
                rp[static_cast<size_t>(k)] = rhs[static_cast<size_t>(k)] - ax;
                rp_inf_orig = std::max(rp_inf_orig, std::abs(rp[static_cast<size_t>(k)]) * pre.row_scale[static_cast<size_t>(k)]);
            }
        };
        compute_rp();

        // Rounding through the scaling makes the primal residual floor well
        // above tolerance on degenerate problems. Once the residual is small
        // enough that the correction cannot push X out of the cone, shift the
        // iterate back onto the affine space; this also keeps weak duality
        // honest for the gap measure. Tried every iteration (a failed
        // positive-definiteness check just skips the shift this time).
        if (restoration_on && rp_inf_orig <= 1e-4 && rp_inf_orig > 0.01 * feas_tol) {
            std::vector<DenseMatrix> Xr = X;
            std::vector<double> ur = u;
            bool applied = false;
            if (restore_primal(Xr, ur)) {
                bool still_pd = true;
                try {
                    for (const auto& Xb : Xr) cholesky(Xb);
                } catch (const NotPositiveSemidefinite&) {
                    still_pd = false;
                }
                if (still_pd) {
                    X = std::move(Xr);
                    u = std::move(ur);
                    compute_rp();
                    applied = true;
                }
            } else {
                restoration_on = false;  // constraint Gram is singular, give up
            }
            if (!applied && restoration_on) {
                Xr = X;
                ur = u;
                double before = rp_inf_orig;
                if (restore_primal_weighted(Xr, ur)) {
                    std::vector<DenseMatrix> keepX = X;
                    std::vector<double> keepU = u;
                    X = std::move(Xr);
                    u = std::move(ur);
                    compute_rp();
                    if (rp_inf_orig > 0.7 * before) {  // no real progress, undo
                        X = std::move(keepX);
                        u = std::move(keepU);
                        compute_rp();
                    }
                }
            }
        }
        std::vector<DenseMatrix> Rd;
        double rd_norm = 0.0;
        for (int b = 0; b < nb; ++b) {
            int d = prob.block_dims[static_cast<size_t>(b)];
            DenseMatrix R(d, d);
            axpy_into(1.0, C[static_cast<size_t>(b)], R);
            for (int k : block_rows[static_cast<size_t>(b)])
                axpy_into(-y[static_cast<size_t>(k)], A[static_cast<size_t>(k)][static_cast<size_t>(b)], R);
            R = R - Z[static_cast<size_t>(b)];
            rd_norm = std::max(rd_norm, R.max_abs());
            Rd.push_back(std::move(R));
        }
        std::vector<double> rf(static_cast<size_t>(nf), 0.0);
        double rf_norm = 0.0;
        for (int j = 0; j < nf; ++j) {
            double s = cf[static_cast<size_t>(j)];
            for (int k = 0; k < m; ++k) s -= Bf[static_cast<size_t>(k)][static_cast<size_t>(j)] * y[static_cast<size_t>(k)];
            rf[static_cast<size_t>(j)] = s;
            rf_norm = std::max(rf_norm, std::abs(s));
        }

        double mu = 0.0;
        for (int b = 0; b < nb; ++b) {
            for (int i = 0; i < prob.block_dims[static_cast<size_t>(b)]; ++i)
                for (int j = 0; j < prob.block_dims[static_cast<size_t>(b)]; ++j)
                    mu += X[static_cast<size_t>(b)].at(i, j) * Z[static_cast<size_t>(b)].at(i, j);
        }
        mu /= total_dim;

        double pobj = 0.0;
        for (int b = 0; b < nb; ++b) pobj += inner(C[static_cast<size_t>(b)], X[static_cast<size_t>(b)]);
        for (int j = 0; j < nf; ++j) pobj += cf[static_cast<size_t>(j)] * u[static_cast<size_t>(j)];
        double dobj = dot(y, rhs);
        double relgap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));

        double rd_rel = rd_norm / (1.0 + cnorm);
        bool feas = rp_inf_orig <= feas_tol && rd_rel <= feas_tol && rf_norm <= feas_tol * (1.0 + norm_inf(cf));
        if (feas && relgap <= gap_tol) return finish(SdpStatus::Optimal, X, u, iter, relgap);
        if (feas && relgap <= gap_accept && (!best || relgap < best->gap))
            best = Snapshot{X, u, relgap, iter};
#ifdef COMPSYS_SDP_TRACE
        std::fprintf(stderr, "it %3d mu=%9.3e rp=%9.3e rd=%9.3e rf=%9.3e gap=%9.3e po=%12.6f do=%12.6f\n",
                     iter, mu, rp_inf_orig, rd_rel, rf_norm, relgap, pobj, dobj);
#endif

        if (iter == 0) mu_first = mu;
        if (!std::isfinite(mu) || !std::isfinite(pobj) || !std::isfinite(dobj)) break;
        if (mu <= 1e-13 * std::max(1.0, mu_first)) break;  // complementarity exhausted
        if (mu > mu_prev * 0.995)
            ++stall_count;
        else
            stall_count = 0;
        mu_prev = mu;
        if (stall_count >= 15) break;

        if (dobj > kDivergence && rd_rel <= 1e-6 && rf_norm <= 1e-6 * (1.0 + norm_inf(cf))) {
            diverged = true;
            break;
        }
        if (std::abs(pobj) > 1e12 || std::abs(dobj) > 1e12) break;

        // Numerical breakdown below (scaling or factorization at tiny mu)
        // ends the iteration loop; classification happens after it.
        try {
        // Scaling and Schur complement.
        std::vector<ScalePoint> sp;
        sp.reserve(static_cast<size_t>(nb));
        for (int b = 0; b < nb; ++b) sp.push_back(make_scaling(X[static_cast<size_t>(b)], Z[static_cast<size_t>(b)]));

        const int dim = m + nf;
        DenseMatrix KKT(dim, dim);
        for (int b = 0; b < nb; ++b) {
            const auto& rows_b = block_rows[static_cast<size_t>(b)];
            const DenseMatrix& W = sp[static_cast<size_t>(b)].W;
            const int d = prob.block_dims[static_cast<size_t>(b)];
            for (int lidx = 0; lidx < static_cast<int>(rows_b.size()); ++lidx) {
                int l = rows_b[static_cast<size_t>(lidx)];
                // S = W A_l W via rank-structured accumulation.
                DenseMatrix S(d, d);
                const auto& Al = A[static_cast<size_t>(l)][static_cast<size_t>(b)];
                for (size_t t = 0; t < Al.idx.size(); ++t) {
                    int p = Al.idx[t][0], q = Al.idx[t][1];
                    double a = Al.val[t];
                    if (p == q) {
                        for (int i = 0; i < d; ++i) {
                            double wip = W.at(i, p);
                            for (int j = 0; j < d; ++j) S.at(i, j) += a * wip * W.at(p, j);
                        }
                    } else {
                        for (int i = 0; i < d; ++i) {
                            double wip = W.at(i, p), wiq = W.at(i, q);
                            for (int j = 0; j < d; ++j)
                                S.at(i, j) += a * (wip * W.at(q, j) + wiq * W.at(p, j));
                        }
                    }
                }
                for (int k : rows_b) {
                    if (k > l) continue;  // symmetric fill
                    double v = inner(A[static_cast<size_t>(k)][static_cast<size_t>(b)], S);
                    KKT.at(k, l) += v;
                    if (k != l) KKT.at(l, k) += v;
                }
            }
        }
        for (int k = 0; k < m; ++k)
            for (int j = 0; j < nf; ++j) {
                KKT.at(k, m + j) = Bf[static_cast<size_t>(k)][static_cast<size_t>(j)];
                KKT.at(m + j, k) = Bf[static_cast<size_t>(k)][static_cast<size_t>(j)];
            }

        // Factor with escalating regularization on failure.
        std::unique_ptr<LuFactors> lu;
        double ridge = 0.0;
        for (int attempt = 0; attempt < 6 && !lu; ++attempt) {
            try {
                lu = std::make_unique<LuFactors>(KKT);
            } catch (const SingularMatrix&) {
                double base = std::max(1e-300, KKT.trace() / std::max(1, dim));
                ridge = (ridge == 0.0) ? 1e-12 * base : ridge * 100.0;
                for (int i = 0; i < m; ++i) KKT.at(i, i) += ridge;
                for (int i = m; i < dim; ++i) KKT.at(i, i) -= ridge;
            }
        }
        if (!lu) break;

        // Direction for a given complementarity target Rc_b (per block):
        //   dZ = Rd - A*(dy),  dX = Rc - W dZ W,  A(dX) + B du = rp,
        //   B^T dy = rf.
        auto solve_direction = [&](const std::vector<DenseMatrix>& Rc,
                                   std::vector<DenseMatrix>& dX, std::vector<double>& dy,
                                   std::vector<double>& du, std::vector<DenseMatrix>& dZ) {
            std::vector<double> rhs_kkt(static_cast<size_t>(dim), 0.0);
            std::vector<DenseMatrix> E;  // Rc - W Rd W
            E.reserve(static_cast<size_t>(nb));
            for (int b = 0; b < nb; ++b) {
                const DenseMatrix& W = sp[static_cast<size_t>(b)].W;
                E.push_back(Rc[static_cast<size_t>(b)] - (W * Rd[static_cast<size_t>(b)] * W).symmetrized());
            }
            for (int k = 0; k < m; ++k) {
                double s = rp[static_cast<size_t>(k)];
                for (int b = 0; b < nb; ++b)
                    s -= inner(A[static_cast<size_t>(k)][static_cast<size_t>(b)], E[static_cast<size_t>(b)]);
                rhs_kkt[static_cast<size_t>(k)] = s;
            }
            for (int j = 0; j < nf; ++j) rhs_kkt[static_cast<size_t>(m + j)] = rf[static_cast<size_t>(j)];

            std::vector<double> sol = lu->solve(rhs_kkt);
            // One round of iterative refinement; the KKT system gets stiff
            // near the boundary.
            {
                std::vector<double> resid(static_cast<size_t>(dim), 0.0);
                for (int i = 0; i < dim; ++i) {
                    double s = rhs_kkt[static_cast<size_t>(i)];
                    for (int j = 0; j < dim; ++j) s -= KKT.at(i, j) * sol[static_cast<size_t>(j)];
                    resid[static_cast<size_t>(i)] = s;
                }
                std::vector<double> corr = lu->solve(resid);
                for (int i = 0; i < dim; ++i) sol[static_cast<size_t>(i)] += corr[static_cast<size_t>(i)];
            }

            dy.assign(sol.begin(), sol.begin() + m);
            du.assign(sol.begin() + m, sol.end());
            dZ.clear();
            dX.clear();
            for (int b = 0; b < nb; ++b) {
                int d = prob.block_dims[static_cast<size_t>(b)];
                DenseMatrix dZb(d, d);
                dZb = Rd[static_cast<size_t>(b)];
                for (int k : block_rows[static_cast<size_t>(b)])
                    axpy_into(-dy[static_cast<size_t>(k)], A[static_cast<size_t>(k)][static_cast<size_t>(b)], dZb);
                const DenseMatrix& W = sp[static_cast<size_t>(b)].W;
                DenseMatrix dXb = Rc[static_cast<size_t>(b)] - (W * dZb * W).symmetrized();
                dX.push_back(dXb.symmetrized());
                dZ.push_back(dZb.symmetrized());
            }
        };

        auto boundary_steps = [&](const std::vector<DenseMatrix>& dX,
                                  const std::vector<DenseMatrix>& dZ) {
            double ap = std::numeric_limits<double>::infinity();
            double ad = std::numeric_limits<double>::infinity();
            for (int b = 0; b < nb; ++b) {
                ap = std::min(ap, step_to_boundary(sp[static_cast<size_t>(b)].Lxinv, dX[static_cast<size_t>(b)]));
                ad = std::min(ad, step_to_boundary(sp[static_cast<size_t>(b)].Lzinv, dZ[static_cast<size_t>(b)]));
            }
            return std::pair{ap, ad};
        };

        // Predictor (affine) probe for the centering weight.
        std::vector<DenseMatrix> Rc_aff;
        for (int b = 0; b < nb; ++b) Rc_aff.push_back(X[static_cast<size_t>(b)].scaled(-1.0));
        std::vector<DenseMatrix> dXa, dZa;
        std::vector<double> dya, dua;
        solve_direction(Rc_aff, dXa, dya, dua, dZa);
        auto [apa, ada] = boundary_steps(dXa, dZa);
        double aff_p = std::min(1.0, 0.995 * apa);
        double aff_d = std::min(1.0, 0.995 * ada);
        double mu_aff = 0.0;
        for (int b = 0; b < nb; ++b) {
            int d = prob.block_dims[static_cast<size_t>(b)];
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    mu_aff += (X[static_cast<size_t>(b)].at(i, j) + aff_p * dXa[static_cast<size_t>(b)].at(i, j)) *
                              (Z[static_cast<size_t>(b)].at(i, j) + aff_d * dZa[static_cast<size_t>(b)].at(i, j));
        }
        mu_aff = std::max(0.0, mu_aff / total_dim);
        double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3.0);
        sigma = std::clamp(sigma, 1e-4, 0.8);

        // Centered direction (adaptive sigma from the affine probe; no
        // second-order term, which is delicate under NT scaling).
        std::vector<DenseMatrix> Rc;
        for (int b = 0; b < nb; ++b)
            Rc.push_back(sp[static_cast<size_t>(b)].Zinv.scaled(sigma * mu) - X[static_cast<size_t>(b)]);
        std::vector<DenseMatrix> dX, dZ;
        std::vector<double> dy, du;
        solve_direction(Rc, dX, dy, du, dZ);
        auto [ap, ad] = boundary_steps(dX, dZ);
        double tau = (mu < 1e-6) ? 0.99 : 0.97;
        double alpha_p = std::min(1.0, tau * ap);
        double alpha_d = std::min(1.0, tau * ad);
        if (!std::isfinite(alpha_p) || !std::isfinite(alpha_d)) break;
        bool finite_dir = true;
        for (int b = 0; b < nb && finite_dir; ++b)
            for (double v : dX[static_cast<size_t>(b)].data())
                if (!std::isfinite(v)) {
                    finite_dir = false;
                    break;
                }
        for (int b = 0; b < nb && finite_dir; ++b)
            for (double v : dZ[static_cast<size_t>(b)].data())
                if (!std::isfinite(v)) {
                    finite_dir = false;
                    break;
                }
        if (!finite_dir) break;  // keep the pre-step iterate

        // The eigenvalue step bound is computed through an increasingly
        // ill-conditioned triangular inverse; confirm definiteness of the
        // actual update and back off if the bound overshot.
        auto pd_after = [&](const std::vector<DenseMatrix>& base,
                            const std::vector<DenseMatrix>& dir, double alpha) {
            try {
                for (int b = 0; b < nb; ++b)
                    cholesky(base[static_cast<size_t>(b)] + dir[static_cast<size_t>(b)].scaled(alpha));
            } catch (const NotPositiveSemidefinite&) {
                return false;
            }
            return true;
        };
        int backoff = 0;
        while (backoff < 60 && !pd_after(X, dX, alpha_p)) {
            alpha_p *= 0.7;
            ++backoff;
        }
        while (backoff < 60 && !pd_after(Z, dZ, alpha_d)) {
            alpha_d *= 0.7;
            ++backoff;
        }
        if (backoff >= 60) break;

        for (int b = 0; b < nb; ++b) {
            X[static_cast<size_t>(b)] = (X[static_cast<size_t>(b)] + dX[static_cast<size_t>(b)].scaled(alpha_p)).symmetrized();
            Z[static_cast<size_t>(b)] = (Z[static_cast<size_t>(b)] + dZ[static_cast<size_t>(b)].scaled(alpha_d)).symmetrized();
        }
        for (int j = 0; j < nf; ++j) u[static_cast<size_t>(j)] += alpha_p * du[static_cast<size_t>(j)];
        for (int k = 0; k < m; ++k) y[static_cast<size_t>(k)] += alpha_d * dy[static_cast<size_t>(k)];
        } catch (const Error&) {
            break;
        }
    }

    // Final classification per the divergence rule.
    double dobj_end = dot(y, rhs);
    double rd_end = 0.0;
    for (int b = 0; b < nb; ++b) {
        int d = prob.block_dims[static_cast<size_t>(b)];
        DenseMatrix R(d, d);
        axpy_into(1.0, C[static_cast<size_t>(b)], R);
        for (int k : block_rows[static_cast<size_t>(b)])
            axpy_into(-y[static_cast<size_t>(k)], A[static_cast<size_t>(k)][static_cast<size_t>(b)], R);
        R = R - Z[static_cast<size_t>(b)];
        rd_end = std::max(rd_end, R.max_abs());
    }
    double rf_end = 0.0;
    for (int j = 0; j < nf; ++j) {
        double s = cf[static_cast<size_t>(j)];
        for (int k = 0; k < m; ++k) s -= Bf[static_cast<size_t>(k)][static_cast<size_t>(j)] * y[static_cast<size_t>(k)];
        rf_end = std::max(rf_end, std::abs(s));
    }
    if (best) return finish(SdpStatus::Optimal, best->X, best->u, best->iter, best->gap);
    if (diverged ||
        (dobj_end > kDivergence && rd_end / (1.0 + cnorm) <= 1e-6 &&
         rf_end <= 1e-6 * (1.0 + norm_inf(cf))))
        return finish(SdpStatus::Infeasible, X, u, iter);

    // Exit cleanup: a few alternating projections between the constraint
    // affine space and the PSD cone, ending affine-exact. Mostly a no-op when
    // the in-loop restoration was active.
    try {
        for (int round = 0; round < 50; ++round) {
            if (!restore_primal(X, u)) break;
            double worst_clip = 0.0;
            std::vector<DenseMatrix> clipped;
            clipped.reserve(static_cast<size_t>(nb));
            for (int b = 0; b < nb; ++b) {
                EigenDecomposition ed = sym_eigen(X[static_cast<size_t>(b)]);
                worst_clip = std::min(worst_clip, ed.values.front());
                int d = prob.block_dims[static_cast<size_t>(b)];
                DenseMatrix Xc(d, d);
                for (int k = 0; k < d; ++k) {
                    double lam = std::max(0.0, ed.values[static_cast<size_t>(k)]);
                    if (lam == 0.0) continue;
                    for (int i = 0; i < d; ++i)
                        for (int j = 0; j < d; ++j)
                            Xc.at(i, j) += lam * ed.vectors.at(i, k) * ed.vectors.at(j, k);
                }
                clipped.push_back(std::move(Xc));
            }
            if (worst_clip >= -1e-10) break;  // affine-exact, PSD to 1e-10
            X = std::move(clipped);
        }
    } catch (const Error&) {
        // cleanup is best-effort
    }

    // Re-evaluate the polished point.
    {
        double rp_inf = 0.0;
        for (int k = 0; k < m; ++k) {
            double ax = 0.0;
            for (int b = 0; b < nb; ++b)
                ax += inner(A[static_cast<size_t>(k)][static_cast<size_t>(b)], X[static_cast<size_t>(b)]);
            for (int j = 0; j < nf; ++j) ax += Bf[static_cast<size_t>(k)][static_cast<size_t>(j)] * u[static_cast<size_t>(j)];
            rp_inf = std::max(rp_inf, std::abs(rhs[static_cast<size_t>(k)] - ax) * pre.row_scale[static_cast<size_t>(k)]);
        }
        double pobj = 0.0;
        for (int b = 0; b < nb; ++b) pobj += inner(C[static_cast<size_t>(b)], X[static_cast<size_t>(b)]);
        for (int j = 0; j < nf; ++j) pobj += cf[static_cast<size_t>(j)] * u[static_cast<size_t>(j)];
        double relgap = std::abs(pobj - dobj_end) / (1.0 + std::abs(pobj) + std::abs(dobj_end));
        double min_eig = 0.0;
        for (int b = 0; b < nb; ++b)
            min_eig = std::min(min_eig, sym_eigen(X[static_cast<size_t>(b)]).values.front());
#ifdef COMPSYS_SDP_TRACE
        std::fprintf(stderr, "post-polish: rp=%.3e relgap=%.3e mineig=%.3e rd=%.3e\n", rp_inf, relgap, min_eig, rd_end/(1.0+cnorm));
#endif
        bool ok = rp_inf <= feas_tol && rd_end / (1.0 + cnorm) <= feas_tol &&
                  rf_end <= feas_tol * (1.0 + norm_inf(cf)) && relgap <= gap_accept &&
                  min_eig >= -feas_tol;
        if (ok) return finish(SdpStatus::Optimal, X, u, iter, relgap);
    }
    return finish(SdpStatus::MaxIter, X, u, iter);
}

std::string sdp_problem_to_json(const SdpProblem& prob) {
    nlohmann::json j;
    j["blocks"] = prob.block_dims;
    j["free_vars"] = prob.num_free;
    auto fn_to_json = [](const SdpFunctional& f) {
        nlohmann::json o;
        o["entries"] = nlohmann::json::array();
        for (const auto& e : f.entries) o["entries"].push_back({e.block, e.i, e.j, e.coef});
        o["free"] = nlohmann::json::array();
        for (const auto& [k, v] : f.free_entries) o["free"].push_back({k, v});
        return o;
    };
    j["objective"] = fn_to_json(prob.objective);
    j["constraints"] = nlohmann::json::array();
    for (const auto& c : prob.constraints) {
        nlohmann::json o = fn_to_json(c.lhs);
        o["rhs"] = c.rhs;
        j["constraints"].push_back(o);
    }
    return j.dump(2);
}

}  // namespace compsys
