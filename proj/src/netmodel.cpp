#include "compsys/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "compsys/errors.hpp"
#include "compsys/linalg.hpp"
#include "compsys/rng.hpp"

namespace compsys {

NetworkModel::NetworkModel(std::vector<SubsystemDef> subsystems, std::vector<CouplingDef> couplings,
                           ModelMeta meta)
    : subsystems_(std::move(subsystems)), couplings_(std::move(couplings)), meta_(std::move(meta)) {
    const int m = static_cast<int>(subsystems_.size());
    if (m == 0) throw SchemaError("model needs at least one subsystem");
    offsets_.resize(static_cast<size_t>(m));
    total_dim_ = 0;
    for (int i = 0; i < m; ++i) {
        const auto& s = subsystems_[static_cast<size_t>(i)];
        if (s.id != i) throw SchemaError("subsystem ids must be 0..m-1 in order");
        if (s.dim < 1) throw SchemaError("subsystem dim must be >= 1");
        offsets_[static_cast<size_t>(i)] = total_dim_;
        total_dim_ += s.dim;
    }

    auto owner_of = [&](int var) {
        for (int i = m - 1; i >= 0; --i)
            if (var >= offsets_[static_cast<size_t>(i)]) return i;
        return 0;
    };

    for (int i = 0; i < m; ++i) {
        const auto& s = subsystems_[static_cast<size_t>(i)];
        if (static_cast<int>(s.f.size()) != s.dim)
            throw InvariantViolation("DimensionMismatch", "subsystem " + std::to_string(i) +
                                                              ": f has " + std::to_string(s.f.size()) +
                                                              " components, dim is " + std::to_string(s.dim));
        for (const auto& p : s.f) {
            if (p.nvars() != total_dim_)
                throw InvariantViolation("DimensionMismatch",
                                         "subsystem " + std::to_string(i) + ": f arity != total dim");
            if (p.constant_term() != 0.0)
                throw InvariantViolation("FNotZeroAtOrigin",
                                         "subsystem " + std::to_string(i) + " has constant term " +
                                             format_double(p.constant_term()));
            for (int v : p.support())
                if (owner_of(v) != i)
                    throw InvariantViolation("DimensionMismatch",
                                             "subsystem " + std::to_string(i) +
                                                 ": f uses foreign variable x" + std::to_string(v));
        }
    }

    neighbors_.assign(static_cast<size_t>(m), {});
    for (int i = 0; i < m; ++i) neighbors_[static_cast<size_t>(i)].insert(i);
    for (const auto& c : couplings_) {
        if (c.target < 0 || c.target >= m || c.source < 0 || c.source >= m || c.target == c.source)
            throw SchemaError("coupling endpoints out of range or self-coupling");
        const auto& tgt = subsystems_[static_cast<size_t>(c.target)];
        if (static_cast<int>(c.g.size()) != tgt.dim)
            throw InvariantViolation("DimensionMismatch", "coupling g length != target dim");
        int src_lo = offsets_[static_cast<size_t>(c.source)];
        int src_hi = src_lo + subsystems_[static_cast<size_t>(c.source)].dim;
        for (const auto& p : c.g) {
            if (p.nvars() != total_dim_)
                throw InvariantViolation("DimensionMismatch", "coupling arity != total dim");
            for (int v : p.support()) {
                int o = owner_of(v);
                if (o != c.target && o != c.source)
                    throw InvariantViolation("DimensionMismatch",
                                             "coupling uses variable of a third subsystem");
            }
            for (const auto& [mono, coef] : p.terms()) {
                bool has_source = false;
                for (const auto& [v, e] : mono.exponents())
                    if (v >= src_lo && v < src_hi) has_source = true;
                if (!has_source)
                    throw InvariantViolation(
                        "GNotZeroAtSourceZero",
                        "coupling " + std::to_string(c.target) + "<-" + std::to_string(c.source) +
                            " has a term without source variables");
            }
        }
        neighbors_[static_cast<size_t>(c.target)].insert(c.source);
    }
}

std::vector<int> NetworkModel::subsystem_vars(int i) const {
    std::vector<int> v;
    for (int k = 0; k < subsystems_[static_cast<size_t>(i)].dim; ++k)
        v.push_back(offsets_[static_cast<size_t>(i)] + k);
    return v;
}

std::vector<int> NetworkModel::neighborhood_vars(int i) const {
    std::vector<int> v;
    for (int j : neighbors_[static_cast<size_t>(i)])
        for (int k = 0; k < subsystems_[static_cast<size_t>(j)].dim; ++k)
            v.push_back(offsets_[static_cast<size_t>(j)] + k);
    std::sort(v.begin(), v.end());
    return v;
}

std::vector<const CouplingDef*> NetworkModel::couplings_into(int i) const {
    std::vector<const CouplingDef*> out;
    for (const auto& c : couplings_)
        if (c.target == i) out.push_back(&c);
    return out;
}

std::vector<double> NetworkModel::eval_field(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != total_dim_) throw DimensionMismatch("eval_field state length");
    std::vector<double> dx(static_cast<size_t>(total_dim_), 0.0);
    for (const auto& s : subsystems_)
        for (int k = 0; k < s.dim; ++k)
            dx[static_cast<size_t>(offsets_[static_cast<size_t>(s.id)] + k)] =
                s.f[static_cast<size_t>(k)].eval(x);
    for (const auto& c : couplings_)
        for (int k = 0; k < static_cast<int>(c.g.size()); ++k)
            dx[static_cast<size_t>(offsets_[static_cast<size_t>(c.target)] + k)] +=
                c.g[static_cast<size_t>(k)].eval(x);
    return dx;
}

std::vector<Polynomial> NetworkModel::subsystem_rhs(int i) const {
    std::vector<Polynomial> rhs = subsystems_[static_cast<size_t>(i)].f;
    for (const auto* c : couplings_into(i))
        for (size_t k = 0; k < c->g.size(); ++k) rhs[k] += c->g[k];
    return rhs;
}

std::string NetworkModel::to_json() const {
    nlohmann::json j;
    j["subsystems"] = nlohmann::json::array();
    for (const auto& s : subsystems_) {
        nlohmann::json js;
        js["id"] = s.id;
        js["dim"] = s.dim;
        js["f"] = nlohmann::json::array();
        for (const auto& p : s.f) js["f"].push_back(p.str());
        j["subsystems"].push_back(js);
    }
    j["couplings"] = nlohmann::json::array();
    for (const auto& c : couplings_) {
        nlohmann::json jc;
        jc["target"] = c.target;
        jc["source"] = c.source;
        jc["g"] = nlohmann::json::array();
        for (const auto& p : c.g) jc["g"].push_back(p.str());
        j["couplings"].push_back(jc);
    }
    nlohmann::json meta;
    meta["generator"] = meta_.generator;
    meta["seed"] = meta_.seed;
    meta["equilibrium"] = meta_.equilibrium;
    j["meta"] = meta;
    return j.dump(2) + "\n";
}

NetworkModel load_model(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("model JSON does not parse: ") + e.what());
    }
    if (!j.is_object() || !j.contains("subsystems") || !j["subsystems"].is_array())
        throw SchemaError("model document needs a 'subsystems' array");

    int total = 0;
    for (const auto& js : j["subsystems"]) {
        if (!js.contains("dim") || !js["dim"].is_number_integer())
            throw SchemaError("subsystem needs an integer 'dim'");
        total += js["dim"].get<int>();
    }

    std::vector<SubsystemDef> subs;
    for (const auto& js : j["subsystems"]) {
        SubsystemDef s;
        s.id = js.value("id", -1);
        s.dim = js["dim"].get<int>();
        if (!js.contains("f") || !js["f"].is_array()) throw SchemaError("subsystem needs an 'f' array");
        for (const auto& fs : js["f"]) {
            if (!fs.is_string()) throw SchemaError("f entries must be polynomial strings");
            try {
                s.f.push_back(Polynomial::parse(fs.get<std::string>(), total));
            } catch (const ParseError& e) {
                throw SchemaError(e.what());
            }
        }
        subs.push_back(std::move(s));
    }
    std::vector<CouplingDef> coups;
    for (const auto& jc : j.value("couplings", nlohmann::json::array())) {
        CouplingDef c;
        if (!jc.contains("target") || !jc.contains("source"))
            throw SchemaError("coupling needs 'target' and 'source'");
        c.target = jc["target"].get<int>();
        c.source = jc["source"].get<int>();
        for (const auto& gs : jc.value("g", nlohmann::json::array())) {
            if (!gs.is_string()) throw SchemaError("g entries must be polynomial strings");
            try {
                c.g.push_back(Polynomial::parse(gs.get<std::string>(), total));
            } catch (const ParseError& e) {
                throw SchemaError(e.what());
            }
        }
        coups.push_back(std::move(c));
    }
    ModelMeta meta;
    if (j.contains("meta") && j["meta"].is_object()) {
        const auto& jm = j["meta"];
        meta.generator = jm.value("generator", std::string{});
        meta.seed = jm.value("seed", static_cast<std::uint64_t>(0));
        if (jm.contains("equilibrium")) meta.equilibrium = jm["equilibrium"].get<std::vector<double>>();
    }
    return NetworkModel(std::move(subs), std::move(coups), std::move(meta));
}

NetworkModel load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open model file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_model(ss.str());
}

NetworkModel shift_equilibrium(const NetworkModel& model, std::span<const double> xstar) {
    if (static_cast<int>(xstar.size()) != model.total_dim())
        throw DimensionMismatch("shift_equilibrium: xstar length");
    auto field = model.eval_field(xstar);
    if (norm_inf(field) > 1e-8)
        throw NotAnEquilibrium("field at xstar has norm " + format_double(norm_inf(field)));
    if (norm_inf(xstar) == 0.0) return model;

    const int n = model.total_dim();
    std::vector<SubsystemDef> subs;
    for (const auto& s : model.subsystems()) {
        SubsystemDef ns{s.id, s.dim, {}};
        for (const auto& p : s.f) ns.f.push_back(p.shifted(xstar));
        subs.push_back(std::move(ns));
    }
    std::vector<CouplingDef> coups;
    for (const auto& c : model.couplings()) {
        int src_lo = model.var_offset(c.source);
        int src_hi = src_lo + model.subsystems()[static_cast<size_t>(c.source)].dim;
        CouplingDef nc{c.target, c.source, {}};
        for (size_t k = 0; k < c.g.size(); ++k) {
            Polynomial shifted = c.g[k].shifted(xstar);
            Polynomial keep(n), migrate(n);
            for (const auto& [mono, coef] : shifted.terms()) {
                bool has_source = false;
                for (const auto& [v, e] : mono.exponents())
                    if (v >= src_lo && v < src_hi) has_source = true;
                (has_source ? keep : migrate).add_term(mono, coef);
            }
            nc.g.push_back(std::move(keep));
            // Terms the shift stripped of source variables belong to the
            // isolated dynamics now (Eq-style re-split).
            subs[static_cast<size_t>(c.target)].f[k] += migrate;
        }
        coups.push_back(std::move(nc));
    }
    // The leftover constants are the equilibrium residual (<= 1e-8); zero
    // them so the shifted field vanishes at the origin exactly.
    for (auto& s : subs)
        for (auto& p : s.f) p.add_term(Monomial{}, -p.constant_term());

    ModelMeta meta = model.meta();
    if (meta.equilibrium.empty()) meta.equilibrium.assign(xstar.begin(), xstar.end());
    return NetworkModel(std::move(subs), std::move(coups), std::move(meta));
}

std::vector<double> find_equilibrium(const NetworkModel& model, std::span<const double> x0) {
    const int n = model.total_dim();
    if (static_cast<int>(x0.size()) != n) throw DimensionMismatch("find_equilibrium: x0 length");

    // gradient polynomials of the full field, built once
    std::vector<std::vector<Polynomial>> jac;  // [component][var]
    std::vector<Polynomial> field(static_cast<size_t>(n), Polynomial(n));
    for (const auto& s : model.subsystems()) {
        auto rhs = model.subsystem_rhs(s.id);
        for (int k = 0; k < s.dim; ++k)
            field[static_cast<size_t>(model.var_offset(s.id) + k)] = rhs[static_cast<size_t>(k)];
    }
    for (const auto& p : field) jac.push_back(p.gradient());

    std::vector<double> x(x0.begin(), x0.end());
    auto fnorm2 = [&](const std::vector<double>& pt) { return norm2(model.eval_field(pt)); };
    double err = fnorm2(x);
    for (int it = 0; it < 100; ++it) {
        if (norm_inf(model.eval_field(x)) <= 1e-12) return x;
        DenseMatrix J(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) J.at(i, j) = jac[static_cast<size_t>(i)][static_cast<size_t>(j)].eval(x);
        auto F = model.eval_field(x);
        for (auto& v : F) v = -v;
        std::vector<double> step;
        try {
            step = solve_linear(J, F);
        } catch (const SingularMatrix&) {
            throw EquilibriumNotFound("Newton Jacobian singular at iteration " + std::to_string(it));
        }
        double alpha = 1.0;
        bool moved = false;
        for (int h = 0; h < 40 && !moved; ++h) {
            std::vector<double> xn = x;
            for (int i = 0; i < n; ++i) xn[static_cast<size_t>(i)] += alpha * step[static_cast<size_t>(i)];
            double en = fnorm2(xn);
            if (en <= err * (1.0 - 1e-4 * alpha)) {
                x = std::move(xn);
                err = en;
                moved = true;
            } else {
                alpha *= 0.5;
            }
        }
        if (!moved) throw EquilibriumNotFound("Newton stalled, residual " + format_double(err));
    }
    if (norm_inf(model.eval_field(x)) <= 1e-10) return x;
    throw EquilibriumNotFound("Newton did not reach tolerance, residual " + format_double(err));
}

namespace {

// Ring plus seeded short chords (ring distance 2-4); returns sorted
// undirected edges {i < j}.
std::vector<std::pair<int, int>> ring_chord_topology(int n, int chords, Rng& rng) {
    std::set<std::pair<int, int>> edges;
    auto norm_edge = [](int a, int b) { return a < b ? std::pair{a, b} : std::pair{b, a}; };
    for (int i = 0; i < n; ++i) edges.insert(norm_edge(i, (i + 1) % n));
    for (int c = 0; c < chords; ++c) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            int i = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
            int d = 2 + static_cast<int>(rng.uniform_index(3));
            int j = (i + d) % n;
            if (i == j) continue;
            if (edges.insert(norm_edge(i, j)).second) break;
        }
    }
    return {edges.begin(), edges.end()};
}

}  // namespace

NetworkModel lv_from_coefficients(
    std::span<const double> b,
    const std::map<std::pair<int, int>, std::pair<double, double>>& cd) {
    const int n = static_cast<int>(b.size());
    std::vector<SubsystemDef> subs;
    for (int i = 0; i < n; ++i) {
        // (b_i - x_i) x_i = b_i x_i - x_i^2
        Polynomial f(n);
        f.add_term(Monomial::var(i), b[static_cast<size_t>(i)]);
        f.add_term(Monomial::var(i, 2), -1.0);
        subs.push_back({i, 1, {f}});
    }
    std::vector<CouplingDef> coups;
    for (const auto& [edge, coef] : cd) {
        auto [i, j] = edge;
        auto [c, d] = coef;
        // -x_j (c + d x_i)
        Polynomial g(n);
        g.add_term(Monomial::var(j), -c);
        g.add_term(Monomial::var(i) * Monomial::var(j), -d);
        coups.push_back({i, j, {g}});
    }
    return NetworkModel(std::move(subs), std::move(coups), {});
}

NetworkModel build_lotka_volterra(int n, std::uint64_t seed) {
    if (n < 2) throw ConfigError("build_lotka_volterra needs n >= 2");
    Rng rng(seed);

    std::vector<double> b(static_cast<size_t>(n));
    for (auto& v : b) v = rng.uniform(1.5, 2.5);

    auto edges = ring_chord_topology(n, n / 2, rng);  // mean degree ~ 3
    // Interaction coefficients from the low end of the admissible band, then
    // scaled by 0.3: at mean degree 3 the aggregate drag must stay below the
    // logistic capacity or the positive equilibrium branch folds away.
    std::map<std::pair<int, int>, std::pair<double, double>> cd;
    const double scale = 0.3;
    for (const auto& [i, j] : edges) {
        cd[{i, j}] = {scale * rng.uniform(0.05, 0.15), scale * rng.uniform(0.05, 0.15)};
        cd[{j, i}] = {scale * rng.uniform(0.05, 0.15), scale * rng.uniform(0.05, 0.15)};
    }

    NetworkModel raw = lv_from_coefficients(b, cd);
    // Newton straight from x = b can stall on a fold between the uncoupled
    // fixed point and the coupled one; ramping the interaction strength keeps
    // every stage a small, well-conditioned correction.
    std::vector<double> xstar(b.begin(), b.end());
    double theta = 0.0, step = 0.25;
    while (theta < 1.0) {
        double next = std::min(1.0, theta + step);
        auto scaled = cd;
        for (auto& [edge, coef] : scaled) {
            coef.first *= next;
            coef.second *= next;
        }
        try {
            xstar = find_equilibrium(lv_from_coefficients(b, scaled), xstar);
            theta = next;
        } catch (const EquilibriumNotFound&) {
            step *= 0.5;
            if (step < 1e-3)
                throw EquilibriumNotFound("coupling continuation stalled at theta=" +
                                          format_double(theta) + "; reseed");
        }
    }
    for (double v : xstar)
        if (v <= 0.0)
            throw EquilibriumNotFound("Lotka-Volterra equilibrium not positive; reseed");

    NetworkModel shifted = shift_equilibrium(raw, xstar);
    ModelMeta meta;
    meta.generator = "lotka_volterra";
    meta.seed = seed;
    meta.equilibrium = xstar;
    return NetworkModel(shifted.subsystems(), shifted.couplings(), std::move(meta));
}

NetworkModel build_vdp_network(int m, std::uint64_t seed) {
    if (m < 2) throw ConfigError("build_vdp_network needs m >= 2");
    Rng rng(seed);
    const int n = 2 * m;

    // Damping from the upper part of the admissible band: the working domain
    // reaches deep into the region of attraction, where the certified decay
    // rate of a quadratic Lyapunov function scales with mu.
    std::vector<double> mu(static_cast<size_t>(m)), c2(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        mu[static_cast<size_t>(i)] = rng.uniform(0.5, 0.8);
        c2[static_cast<size_t>(i)] = rng.uniform(0.2, 0.6);
    }

    auto edges = ring_chord_topology(m, 1, rng);
    // Directed coefficients (target, source) -> (beta1, beta2), drawn from
    // the low part of the admissible band: each edge's certified interaction
    // cost scales linearly with beta, against self rates of only ~0.15.
    std::map<std::pair<int, int>, std::pair<double, double>> beta;
    for (const auto& [i, j] : edges) {
        beta[{i, j}] = {rng.uniform(0.01, 0.02), rng.uniform(0.01, 0.02)};
        beta[{j, i}] = {rng.uniform(0.01, 0.02), rng.uniform(0.01, 0.02)};
    }

    // c3 couples to the inbound betas of the node
    std::vector<double> c3(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        std::vector<double> b1, b2;
        for (const auto& [edge, bb] : beta)
            if (edge.first == i) {
                b1.push_back(bb.first);
                b2.push_back(bb.second);
            }
        c3[static_cast<size_t>(i)] = vdp_c3(b1, b2, c2[static_cast<size_t>(i)]);
    }

    // Reverse-time Van der Pol node (stable origin):
    //   p' = -q
    //   q' = -mu q (c1 - c2 p - p^2) + c3 p
    std::vector<SubsystemDef> subs;
    for (int i = 0; i < m; ++i) {
        int p = 2 * i, q = 2 * i + 1;
        double c1 = vdp_c1(c2[static_cast<size_t>(i)]);
        double mui = mu[static_cast<size_t>(i)];
        Polynomial f0(n);
        f0.add_term(Monomial::var(q), -1.0);
        Polynomial f1(n);
        f1.add_term(Monomial::var(q), -mui * c1);
        f1.add_term(Monomial::var(p) * Monomial::var(q), mui * c2[static_cast<size_t>(i)]);
        f1.add_term(Monomial::var(p, 2) * Monomial::var(q), mui);
        f1.add_term(Monomial::var(p), c3[static_cast<size_t>(i)]);
        subs.push_back({i, 2, {f0, f1}});
    }
    std::vector<CouplingDef> coups;
    for (const auto& [edge, bb] : beta) {
        auto [i, j] = edge;
        auto [b1, b2] = bb;
        int pi = 2 * i, qj = 2 * j + 1;
        Polynomial g0(n);  // no interaction on the position equation
        Polynomial g1(n);  // -(b1 x_{j,2} + b2 x_{j,2} x_{i,1})
        g1.add_term(Monomial::var(qj), -b1);
        g1.add_term(Monomial::var(pi) * Monomial::var(qj), -b2);
        coups.push_back({i, j, {g0, g1}});
    }
    ModelMeta meta;
    meta.generator = "vdp";
    meta.seed = seed;
    meta.equilibrium.assign(static_cast<size_t>(n), 0.0);
    return NetworkModel(std::move(subs), std::move(coups), std::move(meta));
}

double vdp_c1(double c2) { return 1.0 - (0.5 * c2) * (0.5 * c2); }

double vdp_c3(std::span<const double> beta1, std::span<const double> beta2, double c2) {
    double s = 0.0;
    for (size_t k = 0; k < beta1.size(); ++k) s += 0.5 * beta2[k] * c2 - beta1[k];
    return 1.0 - s;
}

}  // namespace compsys
