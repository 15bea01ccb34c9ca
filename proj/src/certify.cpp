#include "compsys/certify.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "compsys/errors.hpp"

namespace compsys {

namespace {

// Linearization of the isolated dynamics at the origin, local coordinates.
DenseMatrix isolated_jacobian(const NetworkModel& model, int subsystem) {
    const auto& sub = model.subsystems()[static_cast<size_t>(subsystem)];
    const int off = model.var_offset(subsystem);
    const int d = sub.dim;
    std::vector<double> zero(static_cast<size_t>(model.total_dim()), 0.0);
    DenseMatrix J(d, d);
    for (int k = 0; k < d; ++k) {
        for (int l = 0; l < d; ++l)
            J.at(k, l) = sub.f[static_cast<size_t>(k)].derivative(off + l).eval(zero);
    }
    return J;
}

Polynomial quadratic_form(const NetworkModel& model, int subsystem, const DenseMatrix& P) {
    const int off = model.var_offset(subsystem);
    const int n = model.total_dim();
    Polynomial V(n);
    for (int a = 0; a < P.rows(); ++a) {
        V.add_term(Monomial::var(off + a, 2), P.at(a, a));
        for (int b = a + 1; b < P.cols(); ++b)
            V.add_term(Monomial::var(off + a) * Monomial::var(off + b), 2.0 * P.at(a, b));
    }
    return V;
}

// -grad(V)^T rhs over the full variable space (only the subsystem's own
// partials of V are nonzero).
Polynomial neg_lie_derivative(const NetworkModel& model, int subsystem, const Polynomial& V,
                              const std::vector<Polynomial>& rhs) {
    const int off = model.var_offset(subsystem);
    const int d = model.subsystems()[static_cast<size_t>(subsystem)].dim;
    Polynomial out(model.total_dim());
    for (int k = 0; k < d; ++k) out -= V.derivative(off + k) * rhs[static_cast<size_t>(k)];
    return out;
}

}  // namespace

LyapunovCertificate isolated_lf(const NetworkModel& model, int subsystem) {
    DenseMatrix A = isolated_jacobian(model, subsystem);
    const int d = A.rows();

    // Vectorize A^T P + P A = -I over the upper triangle of P.
    const int s = d * (d + 1) / 2;
    auto idx = [&](int a, int b) {  // a <= b
        return a * d - a * (a - 1) / 2 + (b - a);
    };
    DenseMatrix M(s, s);
    std::vector<double> rhs(static_cast<size_t>(s), 0.0);
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
            int row = idx(a, b);
            rhs[static_cast<size_t>(row)] = (a == b) ? -1.0 : 0.0;
            // (A^T P + P A)_{ab} = sum_k A_{ka} P_{kb} + P_{ak} A_{kb}
            for (int k = 0; k < d; ++k) {
                int c1 = (k <= b) ? idx(k, b) : idx(b, k);
                M.at(row, c1) += A.at(k, a);
                int c2 = (a <= k) ? idx(a, k) : idx(k, a);
                M.at(row, c2) += A.at(k, b);
            }
        }

    std::vector<double> pvec;
    try {
        pvec = solve_linear(M, rhs);
    } catch (const SingularMatrix&) {
        throw LinearizationNotStable("Lyapunov equation singular for subsystem " +
                                     std::to_string(subsystem));
    }
    DenseMatrix P(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
            P.at(a, b) = pvec[static_cast<size_t>(idx(a, b))];
            P.at(b, a) = P.at(a, b);
        }
    if (sym_eigen(P).values.front() < 1e-8)
        throw LinearizationNotStable("subsystem " + std::to_string(subsystem) +
                                     " is not locally asymptotically stable at the origin");

    LyapunovCertificate cert;
    cert.subsystem = subsystem;
    cert.P = P;
    cert.V = quadratic_form(model, subsystem, P);
    cert.gamma_max = 0.0;
    return cert;
}

namespace {

bool level_certifiable(const NetworkModel& model, const LyapunovCertificate& cert, double gamma,
                       double margin) {
    const int i = cert.subsystem;
    const auto& sub = model.subsystems()[static_cast<size_t>(i)];
    Polynomial target = neg_lie_derivative(model, i, cert.V, sub.f);
    const int off = model.var_offset(i);
    for (int k = 0; k < sub.dim; ++k) target.add_term(Monomial::var(off + k, 2), -margin);

    SosProgram prog;
    prog.nvars = model.total_dim();
    SosConstraint con;
    con.constant_part = target;
    Polynomial dom = Polynomial::constant(model.total_dim(), gamma) - cert.V;
    con.multipliers.push_back({default_multiplier_degree(target.degree(), 2), dom});
    con.support = model.subsystem_vars(i);
    prog.constraints.push_back(std::move(con));
    return solve_sos_program(prog).status == SosStatus::Proven;
}

}  // namespace

LyapunovCertificate roa_scale(const NetworkModel& model, const LyapunovCertificate& cert,
                              const RoaOptions& opts) {
    const double initial = 1.0;
    double lo = 0.0, hi = 0.0;
    if (level_certifiable(model, cert, initial, opts.margin)) {
        lo = initial;
        while (lo < opts.gamma_cap) {
            double next = std::min(2.0 * lo, opts.gamma_cap);
            if (!level_certifiable(model, cert, next, opts.margin)) {
                hi = next;
                break;
            }
            lo = next;
        }
    } else {
        hi = initial;
        lo = initial;
        for (;;) {
            lo *= 0.5;
            if (lo < 1e-4 * initial)
                throw NoCertifiableLevel("no SOS-certifiable level above " + format_double(lo) +
                                         " for subsystem " + std::to_string(cert.subsystem));
            if (level_certifiable(model, cert, lo, opts.margin)) break;
            hi = lo;
        }
    }
    if (hi > 0.0) {
        while (hi - lo > opts.rel_resolution * lo) {
            double mid = 0.5 * (lo + hi);
            if (level_certifiable(model, cert, mid, opts.margin))
                lo = mid;
            else
                hi = mid;
        }
    }
    // hi == 0 means the cap certified: globally certifiable as far as we care.

    LyapunovCertificate out = cert;
    out.gamma_max = lo;
    out.P = cert.P.scaled(1.0 / lo);
    out.V = cert.V * (1.0 / lo);
    return out;
}

CmRow cm_row(const NetworkModel& model, int node, const std::vector<LyapunovCertificate>& lfs,
             const std::vector<double>& gamma) {
    const int n = model.total_dim();
    for (int j : model.neighbors(node)) {
        double g = gamma[static_cast<size_t>(j)];
        if (g <= 0.0 || g > 1.0)
            throw ConfigError("cm_row: gamma_" + std::to_string(j) + " must lie in (0, 1]");
    }

    Polynomial target = neg_lie_derivative(model, node, lfs[static_cast<size_t>(node)].V,
                                           model.subsystem_rhs(node));
    SosProgram prog;
    prog.nvars = n;
    SosConstraint con;
    con.constant_part = target;
    con.support = model.neighborhood_vars(node);

    std::vector<int> neighbor_order(model.neighbors(node).begin(), model.neighbors(node).end());
    int sigma_deg = default_multiplier_degree(std::max(target.degree(), 2), 2);
    for (int j : neighbor_order) {
        SosScalar sc;
        sc.name = "a_" + std::to_string(node) + "_" + std::to_string(j);
        sc.nonnegative = (j != node);
        sc.objective_coef = 1.0;
        int sidx = static_cast<int>(prog.scalars.size());
        prog.scalars.push_back(sc);
        con.scalar_parts.push_back({sidx, lfs[static_cast<size_t>(j)].V});
        Polynomial dom = Polynomial::constant(n, gamma[static_cast<size_t>(j)]) -
                         lfs[static_cast<size_t>(j)].V;
        con.multipliers.push_back({sigma_deg, dom});
    }
    prog.constraints.push_back(std::move(con));

    SosProgramSolution sol = solve_sos_program(prog);
    if (sol.status == SosStatus::Infeasible)
        throw SosInfeasible("comparison row " + std::to_string(node) +
                            " infeasible at the requested domain");
    if (sol.status == SosStatus::NotProven)
        throw SosNotProven("comparison row " + std::to_string(node) + " not proven");

    CmRow row;
    row.node = node;
    for (size_t s = 0; s < neighbor_order.size(); ++s) {
        int j = neighbor_order[s];
        double v = sol.scalar_values[s];
        if (j != node) v = std::max(v, 0.0);  // clip 1x1-block dust
        row.coefficients[j] = v;
        row.objective += v;
    }
    row.evidence.push_back(sol.constraints[0].main);
    for (auto& mc : sol.constraints[0].multipliers) row.evidence.push_back(std::move(mc));
    return row;
}

ComparisonCertificate assemble_cm(std::vector<CmRow> rows, std::vector<double> gamma) {
    const int m = static_cast<int>(rows.size());
    ComparisonCertificate cert;
    cert.A = DenseMatrix(m, m);
    std::sort(rows.begin(), rows.end(),
              [](const CmRow& a, const CmRow& b) { return a.node < b.node; });
    for (const auto& row : rows)
        for (const auto& [j, a] : row.coefficients) cert.A.at(row.node, j) = a;
    cert.gamma = std::move(gamma);
    cert.verdict = metzler_hurwitz(cert.A);
    cert.rows = std::move(rows);
    return cert;
}

Polynomial edge_power(const NetworkModel& model, int target, int source,
                      const std::vector<LyapunovCertificate>& lfs) {
    Polynomial phi(model.total_dim());
    const int off = model.var_offset(target);
    for (const auto* c : model.couplings_into(target)) {
        if (c->source != source) continue;
        for (size_t k = 0; k < c->g.size(); ++k)
            phi += lfs[static_cast<size_t>(target)].V.derivative(off + static_cast<int>(k)) * c->g[k];
    }
    return phi;
}

FlowBound flow_bound(const NetworkModel& model, int target, int source,
                     const std::vector<LyapunovCertificate>& lfs,
                     const std::vector<double>& gamma) {
    const int m = model.num_subsystems();
    const int n = model.total_dim();
    FlowBound out;
    out.target = target;
    out.source = source;
    out.u.assign(static_cast<size_t>(m), 0.0);

    Polynomial phi = edge_power(model, target, source, lfs);
    if (phi.is_zero()) return out;  // nothing flows, no certificate needed

    SosProgram prog;
    prog.nvars = n;
    prog.scalars.push_back({"u_target", true, 1.0});
    prog.scalars.push_back({"u_source", true, 1.0});

    std::vector<int> support = model.subsystem_vars(target);
    for (int v : model.subsystem_vars(source)) support.push_back(v);
    std::sort(support.begin(), support.end());

    int sigma_deg = default_multiplier_degree(std::max(phi.degree(), 2), 2);
    for (double sign : {-1.0, 1.0}) {
        SosConstraint con;
        con.constant_part = phi * sign;
        con.scalar_parts.push_back({0, lfs[static_cast<size_t>(target)].V});
        con.scalar_parts.push_back({1, lfs[static_cast<size_t>(source)].V});
        for (int j : {target, source}) {
            Polynomial dom = Polynomial::constant(n, gamma[static_cast<size_t>(j)]) -
                             lfs[static_cast<size_t>(j)].V;
            con.multipliers.push_back({sigma_deg, dom});
        }
        con.support = support;
        prog.constraints.push_back(std::move(con));
    }

    SosProgramSolution sol = solve_sos_program(prog);
    if (sol.status == SosStatus::Infeasible)
        throw SosInfeasible("flow bound " + std::to_string(target) + "<-" + std::to_string(source) +
                            " infeasible at the requested domain");
    if (sol.status == SosStatus::NotProven)
        throw SosNotProven("flow bound " + std::to_string(target) + "<-" + std::to_string(source) +
                           " not proven");

    out.u[static_cast<size_t>(target)] = std::max(sol.scalar_values[0], 0.0);
    out.u[static_cast<size_t>(source)] = std::max(sol.scalar_values[1], 0.0);
    for (auto& cc : sol.constraints) {
        out.evidence.push_back(std::move(cc.main));
        for (auto& mc : cc.multipliers) out.evidence.push_back(std::move(mc));
    }
    return out;
}

}  // namespace compsys
