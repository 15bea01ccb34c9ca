#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "compsys/certify.hpp"
#include "compsys/netmodel.hpp"
#include "compsys/rng.hpp"

namespace compsys {

/// Sampled trajectory of the full nonlinear network: states, per-node energy
/// levels v(t) = V_i(x_i(t)), and per-edge power flows. The edge order
/// follows model.couplings().
struct Trajectory {
    std::vector<double> time;
    DenseMatrix states;  // (steps+1) x n
    DenseMatrix levels;  // (steps+1) x m
    DenseMatrix power;   // (steps+1) x couplings
    /// |x(T) - x_half(T)| / (1 + |x_half(T)|) from a dt/2 re-run, or -1 when
    /// the check was not requested.
    double refinement_error = -1.0;
};

/// Classical fixed-step 4th-order integration. Throws Blowup past |x| = 1e6.
Trajectory integrate(const NetworkModel& model, const std::vector<LyapunovCertificate>& lfs,
                     std::span<const double> x0, double horizon, double dt,
                     bool refinement_check = false);

/// Integrate the linear comparison system r' = A r on the same grid; returns
/// (steps+1) x m.
DenseMatrix simulate_cs(const DenseMatrix& A, std::span<const double> r0, double horizon,
                        double dt);

/// Point on the level-set surface {V = level} of one subsystem, local
/// coordinates: a unit-sphere sample pushed through P^{-1/2}.
std::vector<double> sample_level_set(const LyapunovCertificate& cert, double level, Rng& rng);

/// Accumulated energy flow per edge: trapezoidal integral of |phi| over the
/// grid (optionally truncated to the first `upto` points).
std::vector<double> measure_flows(const Trajectory& traj, std::size_t upto = 0);

struct ValidationReport {
    int samples = 0;
    std::uint64_t seed = 0;
    double tolerance = 0.0;  // 1e-6 + 10 dt^2
    /// max over samples, nodes and grid points (before domain exit) of
    /// V_i(x_i(t)) - r_i(t)
    double worst_comparison_margin = 0.0;
    /// max over samples and edges of psi(0,T) - bound (1 + 1e-6)
    double worst_energy_margin = 0.0;
    std::vector<double> per_node_worst;
    std::vector<double> per_edge_worst;
    int domain_exits = 0;
    int blowups = 0;
    double max_tail_bound = 0.0;      // -u^T A^{-1} v(T), worst edge/sample
    double refinement_error = -1.0;   // step-halving check on the first sample
    bool pass = false;
};

/// Trajectory-level check of the comparison principle and the energy bounds:
/// every sample starts on or below the domain levels, the comparison check
/// runs until the first domain exit, and measured energy flows are compared
/// against the per-sample certified bounds.
ValidationReport validate(const NetworkModel& model, const std::vector<LyapunovCertificate>& lfs,
                          const ComparisonCertificate& cm, const std::vector<FlowBound>& bounds,
                          int n_samples, double horizon, double dt, std::uint64_t seed);

std::string trajectory_to_csv(const NetworkModel& model, const Trajectory& traj);
std::string validation_report_to_json(const ValidationReport& report);

}  // namespace compsys
