#include "compsys/simkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "compsys/errors.hpp"
#include "compsys/flowgraph.hpp"
#include "compsys/parallel.hpp"

namespace compsys {

namespace {

// Polynomials flattened into coefficient/factor arrays; the map-based
// representation is too slow for the integration inner loop.
struct CompiledPoly {
    std::vector<double> coefs;
    std::vector<int> offsets;  // coefs.size()+1 entries into factors
    std::vector<std::pair<int, int>> factors;  // (variable, power)

    static CompiledPoly from(const Polynomial& p) {
        CompiledPoly out;
        out.offsets.push_back(0);
        for (const auto& [mono, coef] : p.terms()) {
            out.coefs.push_back(coef);
            for (const auto& [v, e] : mono.exponents()) out.factors.push_back({v, e});
            out.offsets.push_back(static_cast<int>(out.factors.size()));
        }
        return out;
    }

    double eval(std::span<const double> x) const {
        double sum = 0.0;
        for (size_t t = 0; t < coefs.size(); ++t) {
            double term = coefs[t];
            for (int f = offsets[t]; f < offsets[t + 1]; ++f) {
                double base = x[static_cast<size_t>(factors[static_cast<size_t>(f)].first)];
                int e = factors[static_cast<size_t>(f)].second;
                double pw = base;
                for (int k = 1; k < e; ++k) pw *= base;
                term *= pw;
            }
            sum += term;
        }
        return sum;
    }
};

struct CompiledField {
    std::vector<CompiledPoly> rhs;     // full vector field, n components
    std::vector<CompiledPoly> levels;  // V_i
    std::vector<CompiledPoly> power;   // phi per coupling

    static CompiledField from(const NetworkModel& model,
                              const std::vector<LyapunovCertificate>& lfs) {
        CompiledField out;
        const int n = model.total_dim();
        std::vector<Polynomial> field(static_cast<size_t>(n), Polynomial(n));
        for (const auto& s : model.subsystems()) {
            auto rhs = model.subsystem_rhs(s.id);
            for (int k = 0; k < s.dim; ++k)
                field[static_cast<size_t>(model.var_offset(s.id) + k)] = rhs[static_cast<size_t>(k)];
        }
        for (const auto& p : field) out.rhs.push_back(CompiledPoly::from(p));
        for (const auto& lf : lfs) out.levels.push_back(CompiledPoly::from(lf.V));
        for (const auto& c : model.couplings()) {
            Polynomial phi(n);
            const int off = model.var_offset(c.target);
            for (size_t k = 0; k < c.g.size(); ++k)
                phi += lfs[static_cast<size_t>(c.target)].V.derivative(off + static_cast<int>(k)) * c.g[k];
            out.power.push_back(CompiledPoly::from(phi));
        }
        return out;
    }
};

std::vector<double> rk4_run(const CompiledField& field, std::span<const double> x0, double dt,
                            int steps, Trajectory* record) {
    const int n = static_cast<int>(x0.size());
    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> k1(x.size()), k2(x.size()), k3(x.size()), k4(x.size()), tmp(x.size());

    auto eval_rhs = [&](const std::vector<double>& pt, std::vector<double>& out) {
        for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = field.rhs[static_cast<size_t>(i)].eval(pt);
    };
    auto record_row = [&](int row, const std::vector<double>& pt) {
        if (!record) return;
        for (int i = 0; i < n; ++i) record->states.at(row, i) = pt[static_cast<size_t>(i)];
        for (size_t i = 0; i < field.levels.size(); ++i)
            record->levels.at(row, static_cast<int>(i)) = field.levels[i].eval(pt);
        for (size_t e = 0; e < field.power.size(); ++e)
            record->power.at(row, static_cast<int>(e)) = field.power[e].eval(pt);
    };

    record_row(0, x);
    for (int s = 0; s < steps; ++s) {
        eval_rhs(x, k1);
        for (int i = 0; i < n; ++i) tmp[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] + 0.5 * dt * k1[static_cast<size_t>(i)];
        eval_rhs(tmp, k2);
        for (int i = 0; i < n; ++i) tmp[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] + 0.5 * dt * k2[static_cast<size_t>(i)];
        eval_rhs(tmp, k3);
        for (int i = 0; i < n; ++i) tmp[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] + dt * k3[static_cast<size_t>(i)];
        eval_rhs(tmp, k4);
        for (int i = 0; i < n; ++i)
            x[static_cast<size_t>(i)] += dt / 6.0 *
                                         (k1[static_cast<size_t>(i)] + 2.0 * k2[static_cast<size_t>(i)] +
                                          2.0 * k3[static_cast<size_t>(i)] + k4[static_cast<size_t>(i)]);
        if (norm_inf(x) > 1e6)
            throw Blowup("state norm exceeded 1e6 at t=" + format_double((s + 1) * dt));
        record_row(s + 1, x);
    }
    return x;
}

}  // namespace

Trajectory integrate(const NetworkModel& model, const std::vector<LyapunovCertificate>& lfs,
                     std::span<const double> x0, double horizon, double dt,
                     bool refinement_check) {
    if (dt <= 0.0 || horizon < dt) throw ConfigError("integrate needs dt > 0 and horizon >= dt");
    if (static_cast<int>(x0.size()) != model.total_dim())
        throw DimensionMismatch("integrate: x0 length");

    CompiledField field = CompiledField::from(model, lfs);
    const int steps = static_cast<int>(std::llround(horizon / dt));

    Trajectory traj;
    traj.time.resize(static_cast<size_t>(steps + 1));
    for (int s = 0; s <= steps; ++s) traj.time[static_cast<size_t>(s)] = s * dt;
    traj.states = DenseMatrix(steps + 1, model.total_dim());
    traj.levels = DenseMatrix(steps + 1, model.num_subsystems());
    traj.power = DenseMatrix(steps + 1, static_cast<int>(model.couplings().size()));

    std::vector<double> xT = rk4_run(field, x0, dt, steps, &traj);

    if (refinement_check) {
        std::vector<double> xT_half = rk4_run(field, x0, 0.5 * dt, 2 * steps, nullptr);
        std::vector<double> diff(xT.size());
        for (size_t i = 0; i < xT.size(); ++i) diff[i] = xT[i] - xT_half[i];
        traj.refinement_error = norm2(diff) / (1.0 + norm2(xT_half));
    }
    return traj;
}

DenseMatrix simulate_cs(const DenseMatrix& A, std::span<const double> r0, double horizon,
                        double dt) {
    if (dt <= 0.0 || horizon < dt) throw ConfigError("simulate_cs needs dt > 0 and horizon >= dt");
    const int m = A.rows();
    if (static_cast<int>(r0.size()) != m) throw DimensionMismatch("simulate_cs: r0 length");
    const int steps = static_cast<int>(std::llround(horizon / dt));

    DenseMatrix out(steps + 1, m);
    std::vector<double> r(r0.begin(), r0.end());
    for (int i = 0; i < m; ++i) out.at(0, i) = r[static_cast<size_t>(i)];
    std::vector<double> k1, k2, k3, k4, tmp(r.size());
    for (int s = 0; s < steps; ++s) {
        k1 = A.mul_vec(r);
        for (int i = 0; i < m; ++i) tmp[static_cast<size_t>(i)] = r[static_cast<size_t>(i)] + 0.5 * dt * k1[static_cast<size_t>(i)];
        k2 = A.mul_vec(tmp);
        for (int i = 0; i < m; ++i) tmp[static_cast<size_t>(i)] = r[static_cast<size_t>(i)] + 0.5 * dt * k2[static_cast<size_t>(i)];
        k3 = A.mul_vec(tmp);
        for (int i = 0; i < m; ++i) tmp[static_cast<size_t>(i)] = r[static_cast<size_t>(i)] + dt * k3[static_cast<size_t>(i)];
        k4 = A.mul_vec(tmp);
        for (int i = 0; i < m; ++i)
            r[static_cast<size_t>(i)] += dt / 6.0 *
                                         (k1[static_cast<size_t>(i)] + 2.0 * k2[static_cast<size_t>(i)] +
                                          2.0 * k3[static_cast<size_t>(i)] + k4[static_cast<size_t>(i)]);
        for (int i = 0; i < m; ++i) out.at(s + 1, i) = r[static_cast<size_t>(i)];
    }
    return out;
}

std::vector<double> sample_level_set(const LyapunovCertificate& cert, double level, Rng& rng) {
    if (level <= 0.0) throw ConfigError("sample_level_set: level must be positive");
    const int d = cert.P.rows();
    std::vector<double> u(static_cast<size_t>(d));
    double norm = 0.0;
    do {
        for (auto& v : u) v = rng.gaussian();
        norm = norm2(u);
    } while (norm < 1e-12);
    for (auto& v : u) v *= std::sqrt(level) / norm;

    // x = P^{-1/2} u so that x^T P x = level
    EigenDecomposition ed = sym_eigen(cert.P);
    std::vector<double> x(static_cast<size_t>(d), 0.0);
    for (int k = 0; k < d; ++k) {
        double coef = 0.0;
        for (int i = 0; i < d; ++i) coef += ed.vectors.at(i, k) * u[static_cast<size_t>(i)];
        coef /= std::sqrt(std::max(ed.values[static_cast<size_t>(k)], 1e-300));
        for (int i = 0; i < d; ++i) x[static_cast<size_t>(i)] += coef * ed.vectors.at(i, k);
    }
    return x;
}

std::vector<double> measure_flows(const Trajectory& traj, std::size_t upto) {
    const size_t rows = traj.time.size();
    const size_t last = (upto == 0 || upto > rows) ? rows : upto;
    std::vector<double> psi(static_cast<size_t>(traj.power.cols()), 0.0);
    for (size_t e = 0; e < psi.size(); ++e) {
        double acc = 0.0;
        for (size_t s = 0; s + 1 < last; ++s) {
            double h = traj.time[s + 1] - traj.time[s];
            acc += 0.5 * h *
                   (std::abs(traj.power.at(static_cast<int>(s), static_cast<int>(e))) +
                    std::abs(traj.power.at(static_cast<int>(s + 1), static_cast<int>(e))));
        }
        psi[e] = acc;
    }
    return psi;
}

ValidationReport validate(const NetworkModel& model, const std::vector<LyapunovCertificate>& lfs,
                          const ComparisonCertificate& cm, const std::vector<FlowBound>& bounds,
                          int n_samples, double horizon, double dt, std::uint64_t seed) {
    const int m = model.num_subsystems();
    ValidationReport report;
    report.samples = n_samples;
    report.seed = seed;
    report.tolerance = 1e-6 + 10.0 * dt * dt;
    report.per_node_worst.assign(static_cast<size_t>(m), -std::numeric_limits<double>::infinity());
    report.per_edge_worst.assign(bounds.size(), -std::numeric_limits<double>::infinity());
    if (n_samples == 0) {
        report.pass = true;
        return report;
    }

    // map flow bounds onto the trajectory's coupling columns
    std::vector<int> bound_col(bounds.size(), -1);
    for (size_t b = 0; b < bounds.size(); ++b)
        for (size_t c = 0; c < model.couplings().size(); ++c)
            if (model.couplings()[c].target == bounds[b].target &&
                model.couplings()[c].source == bounds[b].source)
                bound_col[b] = static_cast<int>(c);

    struct SampleResult {
        std::vector<double> node_margin;
        std::vector<double> edge_margin;
        double tail = 0.0;
        bool exited = false;
        bool blowup = false;
        double refinement = -1.0;
    };
    std::vector<SampleResult> results(static_cast<size_t>(n_samples));

    parallel_for(static_cast<size_t>(n_samples), [&](size_t s) {
        SampleResult res;
        res.node_margin.assign(static_cast<size_t>(m), -std::numeric_limits<double>::infinity());
        res.edge_margin.assign(bounds.size(), -std::numeric_limits<double>::infinity());
        Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * (s + 1)));

        // first sample stresses the domain boundary exactly
        std::vector<double> x0(static_cast<size_t>(model.total_dim()), 0.0);
        std::vector<double> v0(static_cast<size_t>(m), 0.0);
        for (int i = 0; i < m; ++i) {
            double level = (s == 0) ? cm.gamma[static_cast<size_t>(i)]
                                    : rng.uniform(1e-6, cm.gamma[static_cast<size_t>(i)]);
            auto xi = sample_level_set(lfs[static_cast<size_t>(i)], level, rng);
            for (size_t k = 0; k < xi.size(); ++k)
                x0[static_cast<size_t>(model.var_offset(i)) + k] = xi[k];
        }

        Trajectory traj;
        try {
            traj = integrate(model, lfs, x0, horizon, dt, s == 0);
        } catch (const Blowup&) {
            res.blowup = true;
            results[s] = std::move(res);
            return;
        }
        res.refinement = traj.refinement_error;
        for (int i = 0; i < m; ++i) v0[static_cast<size_t>(i)] = traj.levels.at(0, i);

        DenseMatrix r = simulate_cs(cm.A, v0, horizon, dt);

        // comparison margins until the first domain exit
        size_t exit_row = traj.time.size();
        for (size_t t = 0; t < traj.time.size(); ++t) {
            bool inside = true;
            for (int i = 0; i < m; ++i)
                if (traj.levels.at(static_cast<int>(t), i) >
                    cm.gamma[static_cast<size_t>(i)] * (1.0 + 1e-12) + 1e-12)
                    inside = false;
            if (!inside) {
                exit_row = t;
                res.exited = true;
                break;
            }
            for (int i = 0; i < m; ++i)
                res.node_margin[static_cast<size_t>(i)] =
                    std::max(res.node_margin[static_cast<size_t>(i)],
                             traj.levels.at(static_cast<int>(t), i) - r.at(static_cast<int>(t), i));
        }

        // measured energy flows vs the per-sample certified bounds
        auto psi = measure_flows(traj, exit_row);
        for (size_t b = 0; b < bounds.size(); ++b) {
            if (bound_col[b] < 0) continue;
            double bound = edge_energy_bound(bounds[b].u, cm.A, v0);
            res.edge_margin[b] = psi[static_cast<size_t>(bound_col[b])] - bound * (1.0 + 1e-6);
            // bound on the uncovered tail past the horizon
            std::vector<double> vT(static_cast<size_t>(m));
            for (int i = 0; i < m; ++i)
                vT[static_cast<size_t>(i)] = traj.levels.at(static_cast<int>(traj.time.size() - 1), i);
            res.tail = std::max(res.tail, edge_energy_bound(bounds[b].u, cm.A, vT));
        }
        results[s] = std::move(res);
    });

    report.worst_comparison_margin = -std::numeric_limits<double>::infinity();
    report.worst_energy_margin = -std::numeric_limits<double>::infinity();
    for (const auto& res : results) {
        if (res.blowup) {
            ++report.blowups;
            continue;
        }
        if (res.exited) ++report.domain_exits;
        for (size_t i = 0; i < res.node_margin.size(); ++i)
            report.per_node_worst[i] = std::max(report.per_node_worst[i], res.node_margin[i]);
        for (size_t b = 0; b < res.edge_margin.size(); ++b)
            report.per_edge_worst[b] = std::max(report.per_edge_worst[b], res.edge_margin[b]);
        report.max_tail_bound = std::max(report.max_tail_bound, res.tail);
        if (res.refinement >= 0.0) report.refinement_error = res.refinement;
    }
    for (double v : report.per_node_worst)
        report.worst_comparison_margin = std::max(report.worst_comparison_margin, v);
    for (double v : report.per_edge_worst)
        report.worst_energy_margin = std::max(report.worst_energy_margin, v);
    // no finite contribution (e.g. no edges, or every sample blew up): report
    // zero margins rather than infinities
    auto definite = [](double& v) {
        if (!std::isfinite(v)) v = 0.0;
    };
    definite(report.worst_comparison_margin);
    definite(report.worst_energy_margin);
    for (auto& v : report.per_node_worst) definite(v);
    for (auto& v : report.per_edge_worst) definite(v);

    report.pass = report.blowups == 0 &&
                  report.worst_comparison_margin <= report.tolerance &&
                  report.worst_energy_margin <= report.tolerance;
    return report;
}

std::string trajectory_to_csv(const NetworkModel& model, const Trajectory& traj) {
    std::string out = "t";
    for (int i = 0; i < traj.states.cols(); ++i) out += ",x" + std::to_string(i);
    for (int i = 0; i < traj.levels.cols(); ++i) out += ",v" + std::to_string(i);
    for (size_t c = 0; c < model.couplings().size(); ++c)
        out += ",phi_" + std::to_string(model.couplings()[c].target) + "_" +
               std::to_string(model.couplings()[c].source);
    out += "\n";
    for (size_t t = 0; t < traj.time.size(); ++t) {
        out += format_double(traj.time[t]);
        for (int i = 0; i < traj.states.cols(); ++i)
            out += "," + format_double(traj.states.at(static_cast<int>(t), i));
        for (int i = 0; i < traj.levels.cols(); ++i)
            out += "," + format_double(traj.levels.at(static_cast<int>(t), i));
        for (int e = 0; e < traj.power.cols(); ++e)
            out += "," + format_double(traj.power.at(static_cast<int>(t), e));
        out += "\n";
    }
    return out;
}

std::string validation_report_to_json(const ValidationReport& r) {
    nlohmann::json j;
    j["samples"] = r.samples;
    j["seed"] = r.seed;
    j["tolerance"] = r.tolerance;
    j["worst_comparison_margin"] = r.worst_comparison_margin;
    j["worst_energy_margin"] = r.worst_energy_margin;
    j["per_node_worst"] = r.per_node_worst;
    j["per_edge_worst"] = r.per_edge_worst;
    j["domain_exits"] = r.domain_exits;
    j["blowups"] = r.blowups;
    j["max_tail_bound"] = r.max_tail_bound;
    j["refinement_error"] = r.refinement_error;
    j["pass"] = r.pass;
    return j.dump(2) + "\n";
}

}  // namespace compsys
