#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "compsys/poly.hpp"
#include "compsys/sdp.hpp"

namespace compsys {

/// Monomial basis for a Gram parametrization: all monomials in the support
/// variables of total degree <= degree/2, graded-lex ordered. An empty
/// support means all of x0..x_{nvars-1}. `degree` must be even.
std::vector<Monomial> gram_basis(int nvars, int degree, std::span<const int> support = {});

/// Evidence that a polynomial is a sum of squares: p = z^T Q z with Q PSD.
struct GramCertificate {
    std::vector<Monomial> basis;
    DenseMatrix Q;
    Polynomial target;    // the polynomial being certified
    Polynomial residual;  // target - z^T Q z (should be ~0)
};

/// z^T Q z expanded back into a polynomial; the independent reconstruction
/// used by every re-verification path.
Polynomial gram_reconstruct(const std::vector<Monomial>& basis, const DenseMatrix& Q, int nvars);

/// Re-checks a certificate without the solver: residual max-coefficient
/// <= coef_tol * (1 + max|coef target|) and Q + 1e-9 I passes Cholesky.
bool verify_gram(const GramCertificate& cert, double coef_tol = 1e-7);

enum class SosStatus { Proven, Infeasible, NotProven };

const char* to_string(SosStatus s);

struct SosProof {
    SosStatus status = SosStatus::NotProven;
    std::optional<GramCertificate> certificate;
    int sdp_iterations = 0;
};

/// Decide whether p is a sum of squares (degree must be even). MaxIter from
/// the SDP comes back as NotProven, never as a refutation.
SosProof prove_sos(const Polynomial& p, std::span<const int> support = {});

// -- SOS programs -------------------------------------------------------------

/// A scalar decision variable of an SOS program.
struct SosScalar {
    std::string name;
    bool nonnegative = false;
    double objective_coef = 0.0;  // program minimizes the weighted sum
};

/// One SOS multiplier sigma (of the given even degree) attached to a domain
/// polynomial: the constraint subtracts sigma * domain.
struct SosMultiplier {
    int degree = 0;
    Polynomial domain;
};

/// Constraint: constant_part + sum_s theta_s * scalar_parts[s]
///             - sum_k sigma_k * domain_k  is a sum of squares,
/// with sigma_k a free SOS polynomial of the stated degree.
struct SosConstraint {
    Polynomial constant_part;
    std::vector<std::pair<int, Polynomial>> scalar_parts;  // (scalar index, coefficient poly)
    std::vector<SosMultiplier> multipliers;
    std::vector<int> support;  // Gram-basis variables; empty = derive from the polys
};

struct SosProgram {
    int nvars = 0;
    std::vector<SosScalar> scalars;
    std::vector<SosConstraint> constraints;
};

struct CertifiedConstraint {
    GramCertificate main;                      // for target - sum sigma_k * domain_k
    std::vector<GramCertificate> multipliers;  // one per sigma_k (target = its own reconstruction)
};

struct SosProgramSolution {
    SosStatus status = SosStatus::NotProven;
    std::vector<double> scalar_values;
    double objective = 0.0;
    std::vector<CertifiedConstraint> constraints;
    int sdp_iterations = 0;
};

/// Compile to an SDP, solve, extract values, and re-verify every certificate
/// independently. A solution whose certificates fail re-verification is
/// downgraded to NotProven.
SosProgramSolution solve_sos_program(const SosProgram& prog, double feas_tol = 1e-7,
                                     int max_iter = 200);

/// The compiled SDP without solving (for the JSON debug dump).
SdpProblem compile_sos_program(const SosProgram& prog);

/// Default multiplier degree: deg(sigma * domain) matches the main part's
/// degree rounded up to even, floored at zero.
int default_multiplier_degree(int main_degree, int domain_degree);

}  // namespace compsys
