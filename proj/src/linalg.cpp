#include "compsys/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "compsys/errors.hpp"

namespace compsys {

DenseMatrix DenseMatrix::identity(int n) {
    DenseMatrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    DenseMatrix m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int i = 0; i < m.rows(); ++i) {
        if (static_cast<int>(rows[static_cast<size_t>(i)].size()) != m.cols())
            throw DimensionMismatch("from_rows: ragged row lengths");
        for (int j = 0; j < m.cols(); ++j) m.at(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    return m;
}

DenseMatrix DenseMatrix::transpose() const {
    DenseMatrix t(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
        for (int j = 0; j < cols_; ++j) t.at(j, i) = at(i, j);
    return t;
}

DenseMatrix DenseMatrix::operator*(const DenseMatrix& rhs) const {
    if (cols_ != rhs.rows_) throw DimensionMismatch("matrix product shape mismatch");
    DenseMatrix out(rows_, rhs.cols_);
    for (int i = 0; i < rows_; ++i)
        for (int k = 0; k < cols_; ++k) {
            double aik = at(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < rhs.cols_; ++j) out.at(i, j) += aik * rhs.at(k, j);
        }
    return out;
}

DenseMatrix DenseMatrix::operator+(const DenseMatrix& rhs) const {
    if (rows_ != rhs.rows_ || cols_ != rhs.cols_) throw DimensionMismatch("matrix sum shape mismatch");
    DenseMatrix out = *this;
    for (size_t k = 0; k < a_.size(); ++k) out.a_[k] += rhs.a_[k];
    return out;
}

DenseMatrix DenseMatrix::operator-(const DenseMatrix& rhs) const {
    if (rows_ != rhs.rows_ || cols_ != rhs.cols_) throw DimensionMismatch("matrix diff shape mismatch");
    DenseMatrix out = *this;
    for (size_t k = 0; k < a_.size(); ++k) out.a_[k] -= rhs.a_[k];
    return out;
}

DenseMatrix DenseMatrix::scaled(double s) const {
    DenseMatrix out = *this;
    for (double& v : out.a_) v *= s;
    return out;
}

std::vector<double> DenseMatrix::mul_vec(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != cols_) throw DimensionMismatch("mul_vec shape mismatch");
    std::vector<double> y(static_cast<size_t>(rows_), 0.0);
    for (int i = 0; i < rows_; ++i) {
        double s = 0.0;
        for (int j = 0; j < cols_; ++j) s += at(i, j) * x[static_cast<size_t>(j)];
        y[static_cast<size_t>(i)] = s;
    }
    return y;
}

double DenseMatrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : a_) s += v * v;
    return std::sqrt(s);
}

double DenseMatrix::max_abs() const {
    double m = 0.0;
    for (double v : a_) m = std::max(m, std::abs(v));
    return m;
}

double DenseMatrix::asymmetry() const {
    if (rows_ != cols_) throw DimensionMismatch("asymmetry needs a square matrix");
    double m = 0.0;
    for (int i = 0; i < rows_; ++i)
        for (int j = i + 1; j < cols_; ++j) m = std::max(m, std::abs(at(i, j) - at(j, i)));
    return m;
}

bool DenseMatrix::is_symmetric(double tol) const {
    return rows_ == cols_ && asymmetry() <= tol;
}

DenseMatrix DenseMatrix::symmetrized() const {
    if (rows_ != cols_) throw DimensionMismatch("symmetrized needs a square matrix");
    DenseMatrix out(rows_, cols_);
    for (int i = 0; i < rows_; ++i)
        for (int j = 0; j < cols_; ++j) out.at(i, j) = 0.5 * (at(i, j) + at(j, i));
    return out;
}

double DenseMatrix::trace() const {
    double t = 0.0;
    for (int i = 0; i < std::min(rows_, cols_); ++i) t += at(i, i);
    return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionMismatch("dot length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double norm_inf(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

DenseMatrix cholesky(const DenseMatrix& S) {
    if (S.rows() != S.cols()) throw DimensionMismatch("cholesky needs a square matrix");
    const int n = S.rows();
    double scale = 1.0;
    for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(S.at(i, i)));
    const double pivot_floor = -1e-10 * scale;

    DenseMatrix L(n, n);
    for (int j = 0; j < n; ++j) {
        double d = S.at(j, j);
        for (int k = 0; k < j; ++k) d -= L.at(j, k) * L.at(j, k);
        if (d < pivot_floor)
            throw NotPositiveSemidefinite("cholesky pivot " + std::to_string(d) + " at index " +
                                          std::to_string(j));
        d = std::max(d, 0.0);
        L.at(j, j) = std::sqrt(d);
        for (int i = j + 1; i < n; ++i) {
            double s = S.at(i, j);
            for (int k = 0; k < j; ++k) s -= L.at(i, k) * L.at(j, k);
            // Zero pivot on an exactly-PSD matrix forces a zero column.
            L.at(i, j) = (L.at(j, j) > 0.0) ? s / L.at(j, j) : 0.0;
        }
    }
    return L;
}

EigenDecomposition sym_eigen(const DenseMatrix& S) {
    if (S.rows() != S.cols()) throw DimensionMismatch("sym_eigen needs a square matrix");
    const int n = S.rows();
    DenseMatrix A = S.symmetrized();
    DenseMatrix V = DenseMatrix::identity(n);

    auto off_norm = [&]() {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) s += A.at(i, j) * A.at(i, j);
        return std::sqrt(2.0 * s);
    };

    const double target = 1e-14 * std::max(1e-300, A.frobenius_norm());
    const int max_sweeps = 60;
    int sweep = 0;
    while (off_norm() > target) {
        if (++sweep > max_sweeps)
            throw NonConvergence("Jacobi eigensolver did not converge in " +
                                 std::to_string(max_sweeps) + " sweeps");
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = A.at(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                double theta = (A.at(q, q) - A.at(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = A.at(k, p), akq = A.at(k, q);
                    A.at(k, p) = c * akp - s * akq;
                    A.at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = A.at(p, k), aqk = A.at(q, k);
                    A.at(p, k) = c * apk - s * aqk;
                    A.at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = V.at(k, p), vkq = V.at(k, q);
                    V.at(k, p) = c * vkp - s * vkq;
                    V.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return A.at(a, a) < A.at(b, b); });

    EigenDecomposition out;
    out.values.resize(static_cast<size_t>(n));
    out.vectors = DenseMatrix(n, n);
    for (int j = 0; j < n; ++j) {
        out.values[static_cast<size_t>(j)] = A.at(order[static_cast<size_t>(j)], order[static_cast<size_t>(j)]);
        for (int i = 0; i < n; ++i) out.vectors.at(i, j) = V.at(i, order[static_cast<size_t>(j)]);
    }
    return out;
}

LuFactors::LuFactors(const DenseMatrix& A) : n_(A.rows()), lu_(A), perm_(static_cast<size_t>(A.rows())), sign_(1) {
    if (A.rows() != A.cols()) throw DimensionMismatch("LU needs a square matrix");
    std::iota(perm_.begin(), perm_.end(), 0);
    double scale = std::max(1e-300, lu_.max_abs());
    for (int k = 0; k < n_; ++k) {
        int piv = k;
        double best = std::abs(lu_.at(k, k));
        for (int i = k + 1; i < n_; ++i) {
            double v = std::abs(lu_.at(i, k));
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (best <= 1e-14 * scale)
            throw SingularMatrix("LU pivot ~0 at column " + std::to_string(k));
        if (piv != k) {
            for (int j = 0; j < n_; ++j) std::swap(lu_.at(k, j), lu_.at(piv, j));
            std::swap(perm_[static_cast<size_t>(k)], perm_[static_cast<size_t>(piv)]);
            sign_ = -sign_;
        }
        for (int i = k + 1; i < n_; ++i) {
            double m = lu_.at(i, k) / lu_.at(k, k);
            lu_.at(i, k) = m;
            for (int j = k + 1; j < n_; ++j) lu_.at(i, j) -= m * lu_.at(k, j);
        }
    }
}

std::vector<double> LuFactors::solve(std::span<const double> b) const {
    if (static_cast<int>(b.size()) != n_) throw DimensionMismatch("LU solve rhs length mismatch");
    std::vector<double> x(static_cast<size_t>(n_));
    for (int i = 0; i < n_; ++i) x[static_cast<size_t>(i)] = b[static_cast<size_t>(perm_[static_cast<size_t>(i)])];
    for (int i = 0; i < n_; ++i)
        for (int j = 0; j < i; ++j) x[static_cast<size_t>(i)] -= lu_.at(i, j) * x[static_cast<size_t>(j)];
    for (int i = n_ - 1; i >= 0; --i) {
        for (int j = i + 1; j < n_; ++j) x[static_cast<size_t>(i)] -= lu_.at(i, j) * x[static_cast<size_t>(j)];
        x[static_cast<size_t>(i)] /= lu_.at(i, i);
    }
    return x;
}

double LuFactors::determinant() const {
    double d = sign_;
    for (int i = 0; i < n_; ++i) d *= lu_.at(i, i);
    return d;
}

std::vector<double> solve_linear(const DenseMatrix& A, std::span<const double> b) {
    return LuFactors(A).solve(b);
}

const char* to_string(HurwitzVerdict v) {
    switch (v) {
        case HurwitzVerdict::HurwitzByDominance: return "HurwitzByDominance";
        case HurwitzVerdict::HurwitzByMinors: return "HurwitzByMinors";
        case HurwitzVerdict::NotHurwitz: return "NotHurwitz";
    }
    return "?";
}

HurwitzVerdict metzler_hurwitz(const DenseMatrix& A) {
    if (A.rows() != A.cols()) throw DimensionMismatch("metzler_hurwitz needs a square matrix");
    const int n = A.rows();
    DenseMatrix M = A;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (M.at(i, j) < -1e-12)
                throw NotMetzler("off-diagonal entry (" + std::to_string(i) + "," +
                                 std::to_string(j) + ") = " + std::to_string(M.at(i, j)));
            M.at(i, j) = std::max(M.at(i, j), 0.0);
        }

    bool dominant = true;
    for (int i = 0; i < n && dominant; ++i) {
        if (M.at(i, i) >= 0.0) {
            dominant = false;
            break;
        }
        double off = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i) off += M.at(i, j);
        if (off >= -M.at(i, i)) dominant = false;
    }
    if (dominant) return HurwitzVerdict::HurwitzByDominance;

    // -A is a Z-matrix; A Hurwitz iff all leading principal minors of -A are
    // positive (nonsingular M-matrix characterization). Each minor comes from
    // a pivoted LU determinant of the leading block.
    for (int k = 1; k <= n; ++k) {
        DenseMatrix B(k, k);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) B.at(i, j) = -M.at(i, j);
        double det;
        try {
            det = LuFactors(B).determinant();
        } catch (const SingularMatrix&) {
            return HurwitzVerdict::NotHurwitz;
        }
        if (det <= 0.0) return HurwitzVerdict::NotHurwitz;
    }
    return HurwitzVerdict::HurwitzByMinors;
}

}  // namespace compsys
