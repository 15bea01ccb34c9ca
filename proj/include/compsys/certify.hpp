#pragma once

#include <map>
#include <vector>

#include "compsys/linalg.hpp"
#include "compsys/netmodel.hpp"
#include "compsys/sos.hpp"

namespace compsys {

/// Quadratic Lyapunov function of one subsystem. V lives in the global
/// variable space; P is over the subsystem's local coordinates. After
/// roa_scale the certified region is exactly {V <= 1} and gamma_max records
/// the level at which negativity was certified for the unscaled form.
struct LyapunovCertificate {
    int subsystem = 0;
    DenseMatrix P;
    Polynomial V;
    double gamma_max = 0.0;  // 0 while unscaled
};

/// Quadratic LF from the Lyapunov equation A^T P + P A = -I on the
/// linearized isolated dynamics. Throws LinearizationNotStable when the
/// subsystem is not locally asymptotically stable at the origin.
LyapunovCertificate isolated_lf(const NetworkModel& model, int subsystem);

struct RoaOptions {
    double rel_resolution = 1e-2;
    double gamma_cap = 10.0;
    double margin = 1e-6;  // strict-negativity margin epsilon |x|^2
};

/// Level-set scaling: bisect for the largest gamma at which
/// -grad(V)^T f - sigma (gamma - V) - eps|x|^2 admits an SOS certificate,
/// then rescale V so the certified region is the unit level set.
/// Throws NoCertifiableLevel when no level down to 1e-4 works.
LyapunovCertificate roa_scale(const NetworkModel& model, const LyapunovCertificate& cert,
                              const RoaOptions& opts = {});

/// One row of the comparison matrix with its SOS evidence.
struct CmRow {
    int node = 0;
    std::map<int, double> coefficients;  // j in N_i -> a_ij
    double objective = 0.0;              // sum over the row
    std::vector<GramCertificate> evidence;
};

/// Row-wise comparison-matrix synthesis: minimize sum_j a_ij subject to
///   -grad(V_i)^T (f_i + sum_j g_ij) + sum_j (a_ij V_j - sigma_ij (gamma_j - V_j))
/// being SOS over the neighborhood variables, a_ij >= 0 off-diagonal.
/// Throws SosInfeasible (domain too large) or SosNotProven (solver gave up).
CmRow cm_row(const NetworkModel& model, int node, const std::vector<LyapunovCertificate>& lfs,
             const std::vector<double>& gamma);

struct ComparisonCertificate {
    DenseMatrix A;
    std::vector<double> gamma;
    HurwitzVerdict verdict = HurwitzVerdict::NotHurwitz;
    std::vector<CmRow> rows;
};

/// Assemble rows into the comparison matrix and record the Hurwitz verdict
/// (a NotHurwitz outcome is data, not an error).
ComparisonCertificate assemble_cm(std::vector<CmRow> rows, std::vector<double> gamma);

/// Worst-case interaction-energy rate bound for one directed edge:
/// |grad(V_i)^T g_ij| <= sum_k u_k V_k on the domain, u >= 0 supported on
/// {target, source}; both signs certified separately.
struct FlowBound {
    int target = 0;
    int source = 0;
    std::vector<double> u;  // length m
    std::vector<GramCertificate> evidence;
};

FlowBound flow_bound(const NetworkModel& model, int target, int source,
                     const std::vector<LyapunovCertificate>& lfs,
                     const std::vector<double>& gamma);

/// grad(V_i)^T g_ij as a polynomial (the instantaneous energy-flow rate
/// pushed into `target` by `source`).
Polynomial edge_power(const NetworkModel& model, int target, int source,
                      const std::vector<LyapunovCertificate>& lfs);

}  // namespace compsys
