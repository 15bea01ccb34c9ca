#pragma once

#include <span>
#include <vector>

namespace compsys {

/// Dense real matrix, row-major. Small sizes only (n up to ~a few hundred);
/// everything here is plain O(n^3) with no blocking.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), a_(static_cast<size_t>(rows) * cols, fill) {}

    static DenseMatrix identity(int n);
    static DenseMatrix from_rows(const std::vector<std::vector<double>>& rows);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double& at(int i, int j) { return a_[static_cast<size_t>(i) * cols_ + j]; }
    double at(int i, int j) const { return a_[static_cast<size_t>(i) * cols_ + j]; }
    const std::vector<double>& data() const { return a_; }
    std::vector<double>& data() { return a_; }

    DenseMatrix transpose() const;
    DenseMatrix operator*(const DenseMatrix& rhs) const;
    DenseMatrix operator+(const DenseMatrix& rhs) const;
    DenseMatrix operator-(const DenseMatrix& rhs) const;
    DenseMatrix scaled(double s) const;
    std::vector<double> mul_vec(std::span<const double> x) const;

    double frobenius_norm() const;
    double max_abs() const;
    /// max |A - A^T|; 0 for non-square is not meaningful (throws).
    double asymmetry() const;
    bool is_symmetric(double tol = 1e-12) const;
    /// (A + A^T) / 2
    DenseMatrix symmetrized() const;
    double trace() const;

private:
    int rows_ = 0, cols_ = 0;
    std::vector<double> a_;
};

// -- vector helpers ----------------------------------------------------------

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double norm_inf(std::span<const double> a);

// -- factorizations ----------------------------------------------------------

/// Lower-triangular L with L L^T = S. Throws NotPositiveSemidefinite when a
/// pivot falls below -1e-10 (relative to the diagonal scale); pivots in the
/// tolerance band are clamped to zero so exactly-PSD inputs pass.
DenseMatrix cholesky(const DenseMatrix& S);

struct EigenDecomposition {
    std::vector<double> values;  // ascending
    DenseMatrix vectors;         // columns are orthonormal eigenvectors
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
/// Throws NonConvergence after the sweep cap (numerical pathology).
EigenDecomposition sym_eigen(const DenseMatrix& S);

/// Solve A x = b by LU with partial pivoting. Throws SingularMatrix.
std::vector<double> solve_linear(const DenseMatrix& A, std::span<const double> b);

/// LU with partial pivoting, reusable for several right-hand sides.
class LuFactors {
public:
    explicit LuFactors(const DenseMatrix& A);
    std::vector<double> solve(std::span<const double> b) const;
    double determinant() const;

private:
    int n_;
    DenseMatrix lu_;
    std::vector<int> perm_;
    int sign_;
};

// -- Metzler / Hurwitz -------------------------------------------------------

enum class HurwitzVerdict {
    HurwitzByDominance,  // strictly diagonally dominant rows, negative diagonal
    HurwitzByMinors,     // all leading principal minors of -A positive
    NotHurwitz,
};

const char* to_string(HurwitzVerdict v);

/// Hurwitz test specialized to Metzler matrices (-A is a nonsingular M-matrix
/// iff A is Hurwitz). Off-diagonal entries in [-1e-12, 0) are treated as zero;
/// anything below that throws NotMetzler.
HurwitzVerdict metzler_hurwitz(const DenseMatrix& A);

}  // namespace compsys
