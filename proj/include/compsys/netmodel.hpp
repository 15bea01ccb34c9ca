#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "compsys/poly.hpp"

namespace compsys {

/// One node of the network: its state slice and isolated dynamics. All
/// polynomials live in the global variable space; f may only touch this
/// subsystem's own variables and has no constant term (f(0) = 0).
struct SubsystemDef {
    int id = 0;
    int dim = 1;
    std::vector<Polynomial> f;  // length dim, global variables
};

/// Interaction term g_ij pushed from `source` j into `target` i. Every term
/// contains at least one source variable, so g(x_i, 0) = 0 identically.
struct CouplingDef {
    int target = 0;
    int source = 0;
    std::vector<Polynomial> g;  // length target dim, global variables
};

struct ModelMeta {
    std::string generator;
    std::uint64_t seed = 0;
    std::vector<double> equilibrium;  // shift applied to reach the origin
};

/// Polynomial network in decomposed form: x_i' = f_i(x_i) + sum_j g_ij.
class NetworkModel {
public:
    NetworkModel(std::vector<SubsystemDef> subsystems, std::vector<CouplingDef> couplings,
                 ModelMeta meta = {});

    int num_subsystems() const { return static_cast<int>(subsystems_.size()); }
    int total_dim() const { return total_dim_; }
    const std::vector<SubsystemDef>& subsystems() const { return subsystems_; }
    const std::vector<CouplingDef>& couplings() const { return couplings_; }
    const ModelMeta& meta() const { return meta_; }

    /// First global variable index of subsystem i.
    int var_offset(int i) const { return offsets_[static_cast<size_t>(i)]; }
    /// Global variable indices of subsystem i.
    std::vector<int> subsystem_vars(int i) const;
    /// Neighbor set N_i (contains i itself).
    const std::set<int>& neighbors(int i) const { return neighbors_[static_cast<size_t>(i)]; }
    /// Union of subsystem variable sets over N_i, sorted.
    std::vector<int> neighborhood_vars(int i) const;
    /// Couplings targeting subsystem i.
    std::vector<const CouplingDef*> couplings_into(int i) const;

    /// Full vector field component for global state x (length total_dim).
    std::vector<double> eval_field(std::span<const double> x) const;
    /// Right-hand side of subsystem i (isolated + interactions), as polynomials.
    std::vector<Polynomial> subsystem_rhs(int i) const;

    std::string to_json() const;  // canonical: sorted keys, stable float form

private:
    std::vector<SubsystemDef> subsystems_;
    std::vector<CouplingDef> couplings_;
    ModelMeta meta_;
    std::vector<int> offsets_;
    std::vector<std::set<int>> neighbors_;
    int total_dim_ = 0;
};

/// Parse and validate a model document (see README for the schema).
/// Throws SchemaError on malformed documents, InvariantViolation with kind
/// FNotZeroAtOrigin / GNotZeroAtSourceZero / DimensionMismatch otherwise.
NetworkModel load_model(const std::string& json_text);
NetworkModel load_model_file(const std::string& path);

/// Move the equilibrium `xstar` to the origin. Shifted interaction terms that
/// lost all source variables migrate into f of the target subsystem; the
/// residual constant (at most the equilibrium tolerance) is dropped so the
/// shifted field is exactly zero at zero.
NetworkModel shift_equilibrium(const NetworkModel& model, std::span<const double> xstar);

/// Lotka-Volterra network from explicit coefficients, original coordinates:
///   x_i' = (b_i - x_i) x_i - sum_j x_j (c_ij + d_ij x_i);
/// `cd` maps a directed edge (target, source) to its (c, d) pair.
NetworkModel lv_from_coefficients(std::span<const double> b,
                                  const std::map<std::pair<int, int>, std::pair<double, double>>& cd);

/// Damped Newton for F(x) = 0 on the full vector field, Jacobian from the
/// polynomial gradients. Throws EquilibriumNotFound after 100 iterations.
std::vector<double> find_equilibrium(const NetworkModel& model, std::span<const double> x0);

/// Seeded Lotka-Volterra community network (n nodes, 1 state each) on a
/// ring-plus-short-chords topology, interaction coefficients scaled by 0.3,
/// returned shifted to its positive equilibrium.
NetworkModel build_lotka_volterra(int n, std::uint64_t seed);

/// Seeded network of Van der Pol nodes (2 states each) in reverse time, so
/// the origin is locally asymptotically stable and the limit cycle bounds its
/// region of attraction.
NetworkModel build_vdp_network(int m, std::uint64_t seed);

/// Coefficient relations of the Van der Pol node.
double vdp_c1(double c2);
double vdp_c3(std::span<const double> beta1, std::span<const double> beta2, double c2);

}  // namespace compsys
