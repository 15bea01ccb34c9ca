#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace compsys {

/// Coefficients with magnitude below this are dropped after arithmetic, so
/// cancellation noise cannot blow up term counts.
inline constexpr double kCoefEpsilon = 1e-14;

/// A power product over variables x0, x1, ... stored as a sparse map from
/// variable index to (strictly positive) exponent.
class Monomial {
public:
    using ExpMap = std::map<int, int>;

    Monomial() = default;

    static Monomial var(int index, int power = 1);
    static Monomial from_exponents(ExpMap exps);

    bool is_constant() const { return exps_.empty(); }
    int degree() const;
    int power(int var) const;
    const ExpMap& exponents() const { return exps_; }
    /// Largest variable index used, or -1 for the constant monomial.
    int max_var() const { return exps_.empty() ? -1 : exps_.rbegin()->first; }

    Monomial operator*(const Monomial& rhs) const;
    double eval(std::span<const double> x) const;
    /// Derivative along `var`: returns (integer factor, reduced monomial);
    /// the factor is 0 when `var` does not appear.
    std::pair<int, Monomial> differentiate(int var) const;

    bool operator==(const Monomial& rhs) const { return exps_ == rhs.exps_; }

    /// Graded lexicographic order: lower total degree first; ties broken by
    /// comparing exponents from the lowest variable index, larger power wins.
    static bool graded_lex_less(const Monomial& a, const Monomial& b);

private:
    ExpMap exps_;
};

struct MonomialGradedLexLess {
    bool operator()(const Monomial& a, const Monomial& b) const {
        return Monomial::graded_lex_less(a, b);
    }
};

/// Sparse multivariate polynomial with double coefficients over a fixed
/// ambient variable count. Canonical form: no zero coefficients stored, terms
/// kept in graded-lex order, so equal polynomials have identical term maps.
/// Immutable in spirit: all operations return new values.
class Polynomial {
public:
    using TermMap = std::map<Monomial, double, MonomialGradedLexLess>;

    explicit Polynomial(int nvars = 0) : nvars_(nvars) {}

    static Polynomial constant(int nvars, double c);
    static Polynomial variable(int nvars, int index);
    static Polynomial from_terms(int nvars, const std::vector<std::pair<Monomial, double>>& terms);

    int nvars() const { return nvars_; }
    bool is_zero() const { return terms_.empty(); }
    /// Total degree; -1 for the zero polynomial.
    int degree() const;
    const TermMap& terms() const { return terms_; }
    double coefficient(const Monomial& m) const;
    double constant_term() const { return coefficient(Monomial{}); }
    double max_abs_coefficient() const;
    /// Sorted distinct variable indices that actually appear.
    std::vector<int> support() const;

    double eval(std::span<const double> x) const;
    Polynomial derivative(int var) const;
    /// All partial derivatives, component k is d/dx_k; length nvars().
    std::vector<Polynomial> gradient() const;
    /// q with q(x) = p(x + shift).
    Polynomial shifted(std::span<const double> shift) const;

    Polynomial operator+(const Polynomial& rhs) const;
    Polynomial operator-(const Polynomial& rhs) const;
    Polynomial operator*(const Polynomial& rhs) const;
    Polynomial operator*(double s) const;
    Polynomial operator-() const { return *this * -1.0; }
    Polynomial& operator+=(const Polynomial& rhs) { return *this = *this + rhs; }
    Polynomial& operator-=(const Polynomial& rhs) { return *this = *this - rhs; }

    /// Accumulate c * m, pruning the term if the sum falls under kCoefEpsilon.
    void add_term(const Monomial& m, double c);

    /// Canonical text form, e.g. "2 * x0^2 x1 + -1 * x1 + 0.5", terms in
    /// descending graded-lex order. Round-trips bytewise through parse().
    std::string str() const;
    static Polynomial parse(const std::string& text, int nvars);

    bool operator==(const Polynomial& rhs) const {
        return nvars_ == rhs.nvars_ && terms_ == rhs.terms_;
    }

private:
    void check_same_space(const Polynomial& rhs) const;

    int nvars_ = 0;
    TermMap terms_;
};

inline Polynomial operator*(double s, const Polynomial& p) { return p * s; }

/// Shortest round-trip decimal form of a double ("17 significant digits only
/// when needed"); shared by the polynomial text form and the CSV writers.
std::string format_double(double v);

}  // namespace compsys
