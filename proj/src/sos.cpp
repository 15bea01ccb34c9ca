#include "compsys/sos.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>

#include "compsys/errors.hpp"

namespace compsys {

const char* to_string(SosStatus s) {
    switch (s) {
        case SosStatus::Proven: return "Proven";
        case SosStatus::Infeasible: return "Infeasible";
        case SosStatus::NotProven: return "NotProven";
    }
    return "?";
}

namespace {

void enumerate_monomials(const std::vector<int>& vars, size_t pos, int budget, Monomial current,
                         std::vector<Monomial>& out) {
    if (pos == vars.size()) {
        out.push_back(current);
        return;
    }
    for (int e = 0; e <= budget; ++e) {
        Monomial next = (e == 0) ? current : current * Monomial::var(vars[pos], e);
        enumerate_monomials(vars, pos + 1, budget - e, next, out);
    }
}

}  // namespace

std::vector<Monomial> gram_basis(int nvars, int degree, std::span<const int> support) {
    if (degree < 0 || degree % 2 != 0) throw ConfigError("gram_basis degree must be even and >= 0");
    std::vector<int> vars(support.begin(), support.end());
    if (vars.empty())
        for (int v = 0; v < nvars; ++v) vars.push_back(v);
    for (int v : vars)
        if (v < 0 || v >= nvars) throw DimensionMismatch("gram_basis support index out of range");
    std::vector<Monomial> out;
    enumerate_monomials(vars, 0, degree / 2, Monomial{}, out);
    std::sort(out.begin(), out.end(), Monomial::graded_lex_less);
    return out;
}

Polynomial gram_reconstruct(const std::vector<Monomial>& basis, const DenseMatrix& Q, int nvars) {
    const int n = static_cast<int>(basis.size());
    if (Q.rows() != n || Q.cols() != n) throw DimensionMismatch("gram_reconstruct shape mismatch");
    Polynomial p(nvars);
    for (int a = 0; a < n; ++a) {
        p.add_term(basis[static_cast<size_t>(a)] * basis[static_cast<size_t>(a)], Q.at(a, a));
        for (int b = a + 1; b < n; ++b)
            p.add_term(basis[static_cast<size_t>(a)] * basis[static_cast<size_t>(b)], 2.0 * Q.at(a, b));
    }
    return p;
}

bool verify_gram(const GramCertificate& cert, double coef_tol) {
    Polynomial recon = gram_reconstruct(cert.basis, cert.Q, cert.target.nvars());
    Polynomial resid = cert.target - recon;
    double bound = coef_tol * (1.0 + cert.target.max_abs_coefficient());
    if (resid.max_abs_coefficient() > bound) return false;
    DenseMatrix shifted = cert.Q;
    for (int i = 0; i < shifted.rows(); ++i) shifted.at(i, i) += 1e-9;
    try {
        cholesky(shifted);
    } catch (const NotPositiveSemidefinite&) {
        return false;
    }
    return true;
}

int default_multiplier_degree(int main_degree, int domain_degree) {
    int even_main = main_degree + (main_degree % 2);
    int d = even_main - domain_degree;
    if (d <= 0) return 0;
    return d - (d % 2);
}

namespace {

// Feasibility rescue for boundary-of-cone certificates. Membership problems
// whose only Grams are rank-deficient break Slater's condition and the plain
// solve can stall short of tolerance. Re-solving with penalized coefficient
// slacks, min sum(s+t) s.t. A(Q) + eta(s - t) = b, is strictly feasible on
// both sides (the dual is compact: |y| <= 1/eta), so it converges cleanly;
// an objective below `accept` leaves the residual far inside the certificate
// bound. A confidently positive optimum proves there is no Gram within the
// slack budget.
struct SlackRetry {
    std::optional<std::vector<DenseMatrix>> blocks;
    std::vector<double> free_values;
    bool proven_infeasible = false;
};

SlackRetry slack_feasibility_retry(const SdpProblem& prob, double eta, double feas_tol,
                                   int max_iter) {
    SlackRetry out;
    SdpProblem aug = prob;
    aug.objective = {};  // penalty only; the caller's program must be feasibility-shaped
    const int m = static_cast<int>(prob.constraints.size());
    for (int k = 0; k < m; ++k) {
        int s_block = static_cast<int>(aug.block_dims.size());
        aug.block_dims.push_back(1);
        int t_block = static_cast<int>(aug.block_dims.size());
        aug.block_dims.push_back(1);
        aug.constraints[static_cast<size_t>(k)].lhs.entries.push_back({s_block, 0, 0, eta});
        aug.constraints[static_cast<size_t>(k)].lhs.entries.push_back({t_block, 0, 0, -eta});
        aug.objective.entries.push_back({s_block, 0, 0, 1.0});
        aug.objective.entries.push_back({t_block, 0, 0, 1.0});
    }
    SdpSolution sol = solve_sdp(aug, feas_tol, max_iter);
    if (sol.status == SdpStatus::Infeasible) return out;
    const double accept = 0.05;
    if (sol.objective <= accept) {
        std::vector<DenseMatrix> blocks(sol.blocks.begin(),
                                        sol.blocks.begin() + static_cast<long>(prob.block_dims.size()));
        out.blocks = std::move(blocks);
        out.free_values = sol.free_values;
    } else if (sol.status == SdpStatus::Optimal && sol.objective >= 1.0) {
        out.proven_infeasible = true;
    }
    return out;
}

struct Compiled {
    SdpProblem sdp;
    // Block layout: per constraint [main, mult_0, mult_1, ...], then one 1x1
    // block per sign-constrained scalar.
    std::vector<int> constraint_block_start;
    std::vector<std::vector<Monomial>> main_basis;
    std::vector<std::vector<std::vector<Monomial>>> mult_basis;
    std::vector<int> scalar_block;  // 1x1 block index, or -1
    std::vector<int> scalar_free;   // free-var index, or -1
};

Compiled compile(const SosProgram& prog) {
    Compiled out;
    const int nvars = prog.nvars;

    for (const auto& con : prog.constraints) {
        std::set<int> sup(con.support.begin(), con.support.end());
        if (sup.empty()) {
            for (int v : con.constant_part.support()) sup.insert(v);
            for (const auto& [idx, poly] : con.scalar_parts)
                for (int v : poly.support()) sup.insert(v);
            for (const auto& m : con.multipliers)
                for (int v : m.domain.support()) sup.insert(v);
        }
        std::vector<int> support(sup.begin(), sup.end());

        int deg = std::max(0, con.constant_part.degree());
        for (const auto& [idx, poly] : con.scalar_parts) deg = std::max(deg, poly.degree());
        for (const auto& m : con.multipliers) deg = std::max(deg, m.degree + m.domain.degree());
        int deg_even = deg + (deg % 2);

        out.constraint_block_start.push_back(static_cast<int>(out.sdp.block_dims.size()));
        auto zmain = gram_basis(nvars, deg_even, support);
        out.sdp.block_dims.push_back(static_cast<int>(zmain.size()));
        out.main_basis.push_back(zmain);

        std::vector<std::vector<Monomial>> mbases;
        for (const auto& m : con.multipliers) {
            if (m.degree % 2 != 0) throw ConfigError("multiplier degree must be even");
            auto zb = gram_basis(nvars, m.degree, support);
            out.sdp.block_dims.push_back(static_cast<int>(zb.size()));
            mbases.push_back(std::move(zb));
        }
        out.mult_basis.push_back(std::move(mbases));
    }

    // 1x1 blocks for nonnegative scalars, free vars for the rest.
    int free_seen = 0;
    for (const auto& sc : prog.scalars) {
        if (sc.nonnegative) {
            out.scalar_block.push_back(static_cast<int>(out.sdp.block_dims.size()));
            out.scalar_free.push_back(-1);
            out.sdp.block_dims.push_back(1);
        } else {
            out.scalar_block.push_back(-1);
            out.scalar_free.push_back(free_seen);
            ++free_seen;
        }
    }
    out.sdp.num_free = free_seen;

    // Coefficient-matching equalities, one row per monomial per constraint:
    //   [z^T Q0 z]_mu + sum_k [sigma_k dom_k]_mu - sum_s theta_s [t_s]_mu = [t0]_mu
    for (size_t ci = 0; ci < prog.constraints.size(); ++ci) {
        const auto& con = prog.constraints[ci];
        const auto& zmain = out.main_basis[ci];
        const int main_block = out.constraint_block_start[ci];

        std::map<Monomial, SdpConstraint, MonomialGradedLexLess> rows;

        for (int a = 0; a < static_cast<int>(zmain.size()); ++a)
            for (int b = a; b < static_cast<int>(zmain.size()); ++b)
                rows[zmain[static_cast<size_t>(a)] * zmain[static_cast<size_t>(b)]]
                    .lhs.entries.push_back({main_block, a, b, a == b ? 1.0 : 2.0});

        for (size_t k = 0; k < con.multipliers.size(); ++k) {
            const auto& zb = out.mult_basis[ci][k];
            const int blk = main_block + 1 + static_cast<int>(k);
            for (const auto& [dm, dc] : con.multipliers[k].domain.terms())
                for (int a = 0; a < static_cast<int>(zb.size()); ++a)
                    for (int b = a; b < static_cast<int>(zb.size()); ++b)
                        rows[zb[static_cast<size_t>(a)] * zb[static_cast<size_t>(b)] * dm]
                            .lhs.entries.push_back({blk, a, b, (a == b ? 1.0 : 2.0) * dc});
        }

        for (const auto& [sidx, poly] : con.scalar_parts) {
            for (const auto& [m, c] : poly.terms()) {
                auto& r = rows[m];
                if (out.scalar_block[static_cast<size_t>(sidx)] >= 0)
                    r.lhs.entries.push_back({out.scalar_block[static_cast<size_t>(sidx)], 0, 0, -c});
                else
                    r.lhs.free_entries.push_back({out.scalar_free[static_cast<size_t>(sidx)], -c});
            }
        }

        for (const auto& [m, c] : con.constant_part.terms()) rows[m].rhs = c;

        for (auto& [m, r] : rows) out.sdp.constraints.push_back(std::move(r));
    }

    for (size_t s = 0; s < prog.scalars.size(); ++s) {
        double c = prog.scalars[s].objective_coef;
        if (c == 0.0) continue;
        if (out.scalar_block[s] >= 0)
            out.sdp.objective.entries.push_back({out.scalar_block[s], 0, 0, c});
        else
            out.sdp.objective.free_entries.push_back({out.scalar_free[s], c});
    }
    return out;
}

}  // namespace

SdpProblem compile_sos_program(const SosProgram& prog) { return compile(prog).sdp; }

SosProgramSolution solve_sos_program(const SosProgram& prog, double feas_tol, int max_iter) {
    Compiled comp = compile(prog);
    SdpSolution sdp = solve_sdp(comp.sdp, feas_tol, max_iter);

    SosProgramSolution out;
    out.sdp_iterations = sdp.iterations;
    if (sdp.status == SdpStatus::Infeasible) {
        out.status = SosStatus::Infeasible;
        return out;
    }
    bool pure_feasibility = true;
    for (const auto& sc : prog.scalars)
        if (sc.objective_coef != 0.0) pure_feasibility = false;
    // MaxIter iterates are still worth extracting in every case: the
    // independent verification below decides, not the solver status. For
    // objective programs a stalled solve additionally gets the two-phase
    // treatment further down.

    // Grams come back PSD only to the solver's feasibility tolerance; clip
    // the raw eigenvalue dust so boundary certificates pass the shifted
    // Cholesky. The coefficient residual this introduces is still subject to
    // the verification bound below.
    auto clip_psd = [](const DenseMatrix& Q) {
        EigenDecomposition ed = sym_eigen(Q);
        if (ed.values.front() >= 0.0) return Q;
        const int d = Q.rows();
        DenseMatrix out(d, d);
        for (int k = 0; k < d; ++k) {
            double lam = std::max(0.0, ed.values[static_cast<size_t>(k)]);
            if (lam == 0.0) continue;
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) out.at(i, j) += lam * ed.vectors.at(i, k) * ed.vectors.at(j, k);
        }
        return out;
    };

    auto extract = [&](const std::vector<DenseMatrix>& blocks, const std::vector<double>& free_values,
                       SosProgramSolution& res) {
        res.scalar_values.assign(prog.scalars.size(), 0.0);
        res.objective = 0.0;
        res.constraints.clear();
        for (size_t s = 0; s < prog.scalars.size(); ++s) {
            double v = comp.scalar_block[s] >= 0
                           ? blocks[static_cast<size_t>(comp.scalar_block[s])].at(0, 0)
                           : free_values[static_cast<size_t>(comp.scalar_free[s])];
            res.scalar_values[s] = v;
            res.objective += prog.scalars[s].objective_coef * v;
        }
        bool all_verified = true;
        for (size_t ci = 0; ci < prog.constraints.size(); ++ci) {
            const auto& con = prog.constraints[ci];
            CertifiedConstraint cc;

            // Realized main target: t0 + sum theta_s t_s - sum sigma_k dom_k.
            Polynomial target = con.constant_part;
            for (const auto& [sidx, poly] : con.scalar_parts)
                target += poly * res.scalar_values[static_cast<size_t>(sidx)];
            for (size_t k = 0; k < con.multipliers.size(); ++k) {
                const auto& zb = comp.mult_basis[ci][k];
                const DenseMatrix Qk = clip_psd(blocks[static_cast<size_t>(
                    comp.constraint_block_start[ci] + 1 + static_cast<int>(k))]);
                Polynomial sigma = gram_reconstruct(zb, Qk, prog.nvars);
                GramCertificate mc{zb, Qk, sigma, Polynomial(prog.nvars)};
                if (!verify_gram(mc, feas_tol)) all_verified = false;
                target -= sigma * con.multipliers[k].domain;
                cc.multipliers.push_back(std::move(mc));
            }

            const auto& z0 = comp.main_basis[ci];
            const DenseMatrix Q0 = clip_psd(blocks[static_cast<size_t>(comp.constraint_block_start[ci])]);
            GramCertificate main{z0, Q0, target, target - gram_reconstruct(z0, Q0, prog.nvars)};
            if (!verify_gram(main, feas_tol)) all_verified = false;
            cc.main = std::move(main);
            res.constraints.push_back(std::move(cc));
        }
        return all_verified;
    };

    double coef_scale = 0.0;
    for (const auto& con : prog.constraints)
        coef_scale = std::max(coef_scale, con.constant_part.max_abs_coefficient());

    // Optimality may only be claimed off a converged solve; feasibility
    // programs can also harvest a stalled iterate since verification rules.
    bool verified = false;
    if (sdp.status == SdpStatus::Optimal || pure_feasibility)
        verified = extract(sdp.blocks, sdp.free_values, out);

    if (!verified && pure_feasibility) {
        // Coarse probe: an optimum >= 1 at this slack scale means the best
        // Gram misses by over 1% of the coefficient scale - decisively not a
        // sum of squares (the fine slack could never absorb it).
        SlackRetry coarse =
            slack_feasibility_retry(comp.sdp, 0.01 * (1.0 + coef_scale), feas_tol, max_iter);
        if (coarse.proven_infeasible) {
            out.status = SosStatus::Infeasible;
            out.constraints.clear();
            return out;
        }

        SlackRetry fine = slack_feasibility_retry(comp.sdp, 0.3 * feas_tol * (1.0 + coef_scale),
                                                  feas_tol, max_iter);
        if (fine.blocks) {
            SosProgramSolution alt;
            alt.sdp_iterations = out.sdp_iterations;
            if (extract(*fine.blocks, fine.free_values, alt)) {
                alt.status = SosStatus::Proven;
                return alt;
            }
        }
    }

    if (!verified && !pure_feasibility && sdp.status != SdpStatus::Infeasible) {
        // Two-phase rescue for stalled optimality solves: pin the objective
        // just above the incumbent value, then solve the (strictly feasible)
        // feasibility problem. The result is sound; the objective is within
        // delta of the incumbent, which a stalled-but-centered phase one
        // leaves near the optimum.
        SosProgramSolution probe;
        extract(sdp.blocks, sdp.free_values, probe);
        double incumbent = probe.objective;
        for (double delta_scale : {1e-5, 1e-3}) {
            SdpProblem pinned = comp.sdp;
            SdpConstraint pin;
            pin.lhs = pinned.objective;
            pin.rhs = incumbent + delta_scale * (1.0 + std::abs(incumbent));
            int slack_block = static_cast<int>(pinned.block_dims.size());
            pinned.block_dims.push_back(1);
            pin.lhs.entries.push_back({slack_block, 0, 0, 1.0});
            pinned.constraints.push_back(std::move(pin));
            pinned.objective = {};

            SdpSolution s2 = solve_sdp(pinned, feas_tol, max_iter);
            if (s2.status != SdpStatus::Infeasible) {
                SosProgramSolution alt;
                alt.sdp_iterations = out.sdp_iterations + s2.iterations;
                if (extract(s2.blocks, s2.free_values, alt)) {
                    alt.status = SosStatus::Proven;
                    return alt;
                }
            }
            SlackRetry fine = slack_feasibility_retry(pinned, 0.3 * feas_tol * (1.0 + coef_scale),
                                                      feas_tol, max_iter);
            if (fine.blocks) {
                SosProgramSolution alt;
                alt.sdp_iterations = out.sdp_iterations;
                if (extract(*fine.blocks, fine.free_values, alt)) {
                    alt.status = SosStatus::Proven;
                    return alt;
                }
            }
        }
    }

    out.status = verified ? SosStatus::Proven : SosStatus::NotProven;
    return out;
}

SosProof prove_sos(const Polynomial& p, std::span<const int> support) {
    if (p.degree() > 0 && p.degree() % 2 != 0)
        throw ConfigError("prove_sos needs an even-degree polynomial");
    SosProgram prog;
    prog.nvars = p.nvars();
    SosConstraint con;
    con.constant_part = p;
    con.support.assign(support.begin(), support.end());
    prog.constraints.push_back(std::move(con));

    SosProgramSolution sol = solve_sos_program(prog);
    SosProof proof;
    proof.status = sol.status;
    proof.sdp_iterations = sol.sdp_iterations;
    if (sol.status == SosStatus::Proven) proof.certificate = std::move(sol.constraints[0].main);
    return proof;
}

}  // namespace compsys
