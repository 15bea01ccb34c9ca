#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "compsys/certify.hpp"
#include "compsys/flowgraph.hpp"
#include "compsys/netmodel.hpp"
#include "compsys/simkit.hpp"

namespace compsys {

enum class ModelSource { File, BuiltinLv16, BuiltinVdp9 };

struct CompareVariant {
    std::string name;
    std::vector<double> levels;  // per-node v(0)
};

struct ScenarioConfig {
    ModelSource source = ModelSource::BuiltinLv16;
    std::string model_path;
    int size = 0;  // builtin node count; 0 picks the benchmark default
    std::uint64_t seed = 1;
    std::vector<double> gamma;  // one entry broadcasts to every node
    int k = 2;
    AdjacencyMode mode = AdjacencyMode::WorstCase;
    std::vector<double> initial_levels;  // per-node v(0) for Initial mode
    int samples = 50;
    double horizon = 20.0;
    double dt = 1e-3;
    std::string out_dir;
    std::vector<CompareVariant> variants;  // extra rows for compare.json
};

/// Everything the certification stage produces for one model and domain.
struct CertifiedSystem {
    NetworkModel model;
    std::vector<LyapunovCertificate> lfs;
    ComparisonCertificate cm;
    std::vector<FlowBound> bounds;  // one per directed coupling (when Hurwitz)
    std::vector<double> gamma;      // final domain, after any halving
    int gamma_retries = 0;
};

/// Lyapunov functions, comparison matrix (with up to `max_gamma_retries`
/// domain halvings on infeasible rows) and, when the CM is Hurwitz, the
/// per-edge flow bounds.
CertifiedSystem certify_system(const NetworkModel& model, std::vector<double> gamma,
                               int max_gamma_retries = 3);

/// Exit codes: 0 full success; 1 configuration/schema error; 2 certification
/// failed or CM not Hurwitz (bounds skipped); 3 validation failure.
int run(const ScenarioConfig& config);

struct CompareRow {
    std::string name;
    double cut_weight = 0.0;
    double total_weight = 0.0;
    double cut_ratio = 0.0;
};

struct CompareReport {
    std::vector<int> base_assignment;
    std::vector<CompareRow> rows;  // first row is the base scenario
};

/// Re-evaluates the adjacency with each variant's v(0) in place of the
/// domain levels and reports cut weights under the base partition.
CompareReport compare_scenarios(const CertifiedSystem& sys, const ScenarioConfig& base,
                                const std::vector<CompareVariant>& variants);

std::string certificates_to_json(const CertifiedSystem& sys);
std::string partition_to_json(const Partition& partition, double total_weight);
std::string compare_report_to_json(const CompareReport& report);

/// Model resolution shared by the CLI and the tests.
NetworkModel resolve_model(const ScenarioConfig& config);

}  // namespace compsys
