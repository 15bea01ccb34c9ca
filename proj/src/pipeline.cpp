#include "compsys/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <fstream>

#include <json.hpp>

#include "compsys/errors.hpp"
#include "compsys/parallel.hpp"

namespace compsys {

namespace {

nlohmann::json matrix_json(const DenseMatrix& M) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < M.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < M.cols(); ++j) row.push_back(M.at(i, j));
        rows.push_back(row);
    }
    return rows;
}

nlohmann::json gram_json(const GramCertificate& cert) {
    nlohmann::json j;
    nlohmann::json basis = nlohmann::json::array();
    for (const auto& mono : cert.basis) {
        Polynomial p(cert.target.nvars());
        p.add_term(mono, 1.0);
        basis.push_back(p.str());
    }
    j["basis"] = basis;
    j["Q"] = matrix_json(cert.Q);
    j["residual_max_coefficient"] = cert.residual.max_abs_coefficient();
    return j;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write artifact: " + path);
    out << content;
}

}  // namespace

NetworkModel resolve_model(const ScenarioConfig& config) {
    switch (config.source) {
        case ModelSource::File: return load_model_file(config.model_path);
        case ModelSource::BuiltinLv16:
            return build_lotka_volterra(config.size > 0 ? config.size : 16, config.seed);
        case ModelSource::BuiltinVdp9:
            return build_vdp_network(config.size > 0 ? config.size : 9, config.seed);
    }
    throw ConfigError("unknown model source");
}

CertifiedSystem certify_system(const NetworkModel& model, std::vector<double> gamma,
                               int max_gamma_retries) {
    const int m = model.num_subsystems();
    if (static_cast<int>(gamma.size()) == 1) gamma.assign(static_cast<size_t>(m), gamma[0]);
    if (static_cast<int>(gamma.size()) != m)
        throw ConfigError("gamma must have one entry or one per subsystem");
    for (double g : gamma)
        if (!(g > 0.0 && g <= 1.0)) throw ConfigError("InvalidGamma: entries must lie in (0, 1]");

    CertifiedSystem sys{model, {}, {}, {}, gamma, 0};

    sys.lfs.resize(static_cast<size_t>(m));
    parallel_for(static_cast<size_t>(m), [&](size_t i) {
        sys.lfs[i] = roa_scale(model, isolated_lf(model, static_cast<int>(i)));
    });

    // row synthesis with domain halving on infeasibility
    for (int attempt = 0;; ++attempt) {
        std::vector<CmRow> rows(static_cast<size_t>(m));
        try {
            parallel_for(static_cast<size_t>(m), [&](size_t i) {
                rows[i] = cm_row(model, static_cast<int>(i), sys.lfs, sys.gamma);
            });
        } catch (const Error& e) {
            bool retryable = dynamic_cast<const SosInfeasible*>(&e) != nullptr ||
                             dynamic_cast<const SosNotProven*>(&e) != nullptr;
            if (!retryable || attempt >= max_gamma_retries) throw;
            for (auto& g : sys.gamma) g *= 0.5;
            ++sys.gamma_retries;
            continue;
        }
        sys.cm = assemble_cm(std::move(rows), sys.gamma);
        break;
    }

    if (sys.cm.verdict != HurwitzVerdict::NotHurwitz) {
        const auto& coups = model.couplings();
        sys.bounds.resize(coups.size());
        parallel_for(coups.size(), [&](size_t c) {
            sys.bounds[c] =
                flow_bound(model, coups[c].target, coups[c].source, sys.lfs, sys.gamma);
        });
    }
    return sys;
}

std::string certificates_to_json(const CertifiedSystem& sys) {
    nlohmann::json j;
    j["gamma"] = sys.gamma;
    j["gamma_retries"] = sys.gamma_retries;

    nlohmann::json lfs = nlohmann::json::array();
    for (const auto& lf : sys.lfs) {
        nlohmann::json e;
        e["subsystem"] = lf.subsystem;
        e["gamma_max"] = lf.gamma_max;
        e["P"] = matrix_json(lf.P);
        e["V"] = lf.V.str();
        lfs.push_back(e);
    }
    j["lyapunov"] = lfs;

    nlohmann::json cm;
    cm["A"] = matrix_json(sys.cm.A);
    cm["verdict"] = to_string(sys.cm.verdict);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : sys.cm.rows) {
        nlohmann::json r;
        r["node"] = row.node;
        r["objective"] = row.objective;
        nlohmann::json coef;
        for (const auto& [jdx, v] : row.coefficients) coef[std::to_string(jdx)] = v;
        r["coefficients"] = coef;
        nlohmann::json ev = nlohmann::json::array();
        for (const auto& cert : row.evidence) ev.push_back(gram_json(cert));
        r["evidence"] = ev;
        rows.push_back(r);
    }
    cm["rows"] = rows;
    j["comparison"] = cm;

    nlohmann::json bounds = nlohmann::json::array();
    for (const auto& fb : sys.bounds) {
        nlohmann::json e;
        e["target"] = fb.target;
        e["source"] = fb.source;
        e["u"] = fb.u;
        nlohmann::json ev = nlohmann::json::array();
        for (const auto& cert : fb.evidence) ev.push_back(gram_json(cert));
        e["evidence"] = ev;
        bounds.push_back(e);
    }
    j["flow_bounds"] = bounds;
    return j.dump(2) + "\n";
}

std::string partition_to_json(const Partition& partition, double total_weight) {
    nlohmann::json j;
    j["k"] = partition.k;
    j["assignment"] = partition.assignment;
    j["cut_weight"] = partition.cut_weight;
    j["internal_weight"] = partition.internal_weight;
    j["total_weight"] = total_weight;
    j["cut_ratio"] = total_weight > 0.0 ? partition.cut_weight / total_weight : 0.0;
    j["eigengap"] = partition.eigengap;
    j["degenerate_embedding"] = partition.degenerate_embedding;
    return j.dump(2) + "\n";
}

std::string compare_report_to_json(const CompareReport& report) {
    nlohmann::json j;
    j["base_assignment"] = report.base_assignment;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : report.rows) {
        nlohmann::json r;
        r["name"] = row.name;
        r["cut_weight"] = row.cut_weight;
        r["total_weight"] = row.total_weight;
        r["cut_ratio"] = row.cut_ratio;
        rows.push_back(r);
    }
    j["variants"] = rows;
    return j.dump(2) + "\n";
}

CompareReport compare_scenarios(const CertifiedSystem& sys, const ScenarioConfig& base,
                                const std::vector<CompareVariant>& variants) {
    EnergyGraph graph{sys.model.num_subsystems(), sys.bounds, sys.cm.A, sys.gamma};

    DenseMatrix W_base =
        base.mode == AdjacencyMode::Initial
            ? build_adjacency(graph, AdjacencyMode::Initial, base.initial_levels)
            : build_adjacency(graph, AdjacencyMode::WorstCase);
    Partition part = spectral_partition(W_base, base.k, base.seed);

    CompareReport report;
    report.base_assignment = part.assignment;
    auto add_row = [&](const std::string& name, const DenseMatrix& W) {
        CompareRow row;
        row.name = name;
        row.cut_weight = cut_weight(W, part.assignment);
        for (int i = 0; i < W.rows(); ++i)
            for (int j = i + 1; j < W.cols(); ++j) row.total_weight += W.at(i, j);
        row.cut_ratio = row.total_weight > 0.0 ? row.cut_weight / row.total_weight : 0.0;
        report.rows.push_back(row);
    };
    add_row("base", W_base);

    for (const auto& variant : variants) {
        if (static_cast<int>(variant.levels.size()) != sys.model.num_subsystems())
            throw ConfigError("variant '" + variant.name + "' needs one level per node");
        for (size_t i = 0; i < variant.levels.size(); ++i)
            if (variant.levels[i] < 0.0 || variant.levels[i] > sys.gamma[i])
                throw ConfigError("variant '" + variant.name +
                                  "' has levels outside [0, gamma]");
        add_row(variant.name, build_adjacency(graph, AdjacencyMode::Initial, variant.levels));
    }
    return report;
}

int run(const ScenarioConfig& config) {
    namespace fs = std::filesystem;
    if (config.out_dir.empty()) throw ConfigError("output directory required");
    fs::create_directories(config.out_dir);
    auto artifact = [&](const std::string& name) { return config.out_dir + "/" + name; };

    NetworkModel model = resolve_model(config);

    std::optional<CertifiedSystem> certified;
    try {
        certified.emplace(certify_system(model, config.gamma));
    } catch (const SosInfeasible& e) {
        write_file(artifact("certificates.json"),
                   std::string("{\n  \"error\": \"") + e.what() + "\"\n}\n");
        return 2;
    } catch (const SosNotProven& e) {
        write_file(artifact("certificates.json"),
                   std::string("{\n  \"error\": \"") + e.what() + "\"\n}\n");
        return 2;
    }
    CertifiedSystem& sys = *certified;
    write_file(artifact("certificates.json"), certificates_to_json(sys));

    if (sys.cm.verdict == HurwitzVerdict::NotHurwitz) return 2;  // bounds skipped

    if (config.mode == AdjacencyMode::Initial) {
        if (static_cast<int>(config.initial_levels.size()) != model.num_subsystems())
            throw ConfigError("initial mode needs one level per node");
        for (size_t i = 0; i < config.initial_levels.size(); ++i)
            if (config.initial_levels[i] < 0.0 || config.initial_levels[i] > sys.gamma[i])
                throw ConfigError("InvalidGamma: initial levels must lie in [0, gamma]");
    }

    EnergyGraph graph{model.num_subsystems(), sys.bounds, sys.cm.A, sys.gamma};
    DenseMatrix W = config.mode == AdjacencyMode::Initial
                        ? build_adjacency(graph, AdjacencyMode::Initial, config.initial_levels)
                        : build_adjacency(graph, AdjacencyMode::WorstCase);
    Partition part = spectral_partition(W, config.k, config.seed);
    double total = 0.0;
    for (int i = 0; i < W.rows(); ++i)
        for (int j = i + 1; j < W.cols(); ++j) total += W.at(i, j);

    write_file(artifact("adjacency.csv"), matrix_to_csv(W));
    write_file(artifact("partition.json"), partition_to_json(part, total));
    write_file(artifact("graph.dot"), energy_graph_to_dot(W, part));

    ValidationReport report = validate(model, sys.lfs, sys.cm, sys.bounds, config.samples,
                                       config.horizon, config.dt, config.seed);
    write_file(artifact("validation.json"), validation_report_to_json(report));

    // one representative trajectory from the domain boundary, for plotting
    {
        Rng rng(config.seed);
        std::vector<double> x0(static_cast<size_t>(model.total_dim()), 0.0);
        for (int i = 0; i < model.num_subsystems(); ++i) {
            auto xi = sample_level_set(sys.lfs[static_cast<size_t>(i)], sys.gamma[static_cast<size_t>(i)], rng);
            for (size_t k = 0; k < xi.size(); ++k)
                x0[static_cast<size_t>(model.var_offset(i)) + k] = xi[k];
        }
        try {
            Trajectory traj = integrate(model, sys.lfs, x0, config.horizon, config.dt);
            write_file(artifact("trajectory.csv"), trajectory_to_csv(model, traj));
        } catch (const Blowup&) {
            write_file(artifact("trajectory.csv"), "t\n");
        }
    }

    if (!config.variants.empty())
        write_file(artifact("compare.json"),
                   compare_report_to_json(compare_scenarios(sys, config, config.variants)));

    return report.pass ? 0 : 3;
}

}  // namespace compsys
