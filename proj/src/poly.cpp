#include "compsys/poly.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <set>

#include "compsys/errors.hpp"

namespace compsys {

namespace {

// Exact small-integer power; avoids libm's platform-dependent pow().
double ipow(double base, int exp) {
    double r = 1.0;
    double b = base;
    int e = exp;
    while (e > 0) {
        if (e & 1) r *= b;
        b *= b;
        e >>= 1;
    }
    return r;
}

}  // namespace

Monomial Monomial::var(int index, int power) {
    Monomial m;
    if (power > 0) m.exps_[index] = power;
    return m;
}

Monomial Monomial::from_exponents(ExpMap exps) {
    Monomial m;
    for (auto& [v, e] : exps)
        if (e > 0) m.exps_[v] = e;
    return m;
}

int Monomial::degree() const {
    int d = 0;
    for (const auto& [v, e] : exps_) d += e;
    return d;
}

int Monomial::power(int var) const {
    auto it = exps_.find(var);
    return it == exps_.end() ? 0 : it->second;
}

Monomial Monomial::operator*(const Monomial& rhs) const {
    Monomial out = *this;
    for (const auto& [v, e] : rhs.exps_) out.exps_[v] += e;
    return out;
}

double Monomial::eval(std::span<const double> x) const {
    double r = 1.0;
    for (const auto& [v, e] : exps_) r *= ipow(x[static_cast<size_t>(v)], e);
    return r;
}

std::pair<int, Monomial> Monomial::differentiate(int var) const {
    auto it = exps_.find(var);
    if (it == exps_.end()) return {0, Monomial{}};
    Monomial m = *this;
    int e = it->second;
    if (e == 1)
        m.exps_.erase(var);
    else
        m.exps_[var] = e - 1;
    return {e, m};
}

bool Monomial::graded_lex_less(const Monomial& a, const Monomial& b) {
    int da = a.degree(), db = b.degree();
    if (da != db) return da < db;
    // Same degree: walk ascending variable index; at the first index where
    // the powers differ, the larger power sorts later ("x0^2 > x0 x1").
    auto ia = a.exps_.begin(), ib = b.exps_.begin();
    while (ia != a.exps_.end() && ib != b.exps_.end()) {
        if (ia->first != ib->first) {
            // The monomial owning the lower index has a positive power there.
            return ia->first > ib->first;
        }
        if (ia->second != ib->second) return ia->second < ib->second;
        ++ia;
        ++ib;
    }
    return false;  // identical
}

Polynomial Polynomial::constant(int nvars, double c) {
    Polynomial p(nvars);
    p.add_term(Monomial{}, c);
    return p;
}

Polynomial Polynomial::variable(int nvars, int index) {
    if (index < 0 || index >= nvars)
        throw DimensionMismatch("variable index " + std::to_string(index) +
                                " out of range for nvars=" + std::to_string(nvars));
    Polynomial p(nvars);
    p.add_term(Monomial::var(index), 1.0);
    return p;
}

Polynomial Polynomial::from_terms(int nvars,
                                  const std::vector<std::pair<Monomial, double>>& terms) {
    Polynomial p(nvars);
    for (const auto& [m, c] : terms) {
        if (m.max_var() >= nvars)
            throw DimensionMismatch("monomial uses variable index beyond nvars");
        p.add_term(m, c);
    }
    return p;
}

int Polynomial::degree() const {
    if (terms_.empty()) return -1;
    return terms_.rbegin()->first.degree();
}

double Polynomial::coefficient(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? 0.0 : it->second;
}

double Polynomial::max_abs_coefficient() const {
    double r = 0.0;
    for (const auto& [m, c] : terms_) r = std::max(r, std::abs(c));
    return r;
}

std::vector<int> Polynomial::support() const {
    std::set<int> vars;
    for (const auto& [m, c] : terms_)
        for (const auto& [v, e] : m.exponents()) vars.insert(v);
    return {vars.begin(), vars.end()};
}

double Polynomial::eval(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != nvars_)
        throw DimensionMismatch("eval: point dimension " + std::to_string(x.size()) +
                                " != nvars " + std::to_string(nvars_));
    double sum = 0.0;
    for (const auto& [m, c] : terms_) sum += c * m.eval(x);
    return sum;
}

Polynomial Polynomial::derivative(int var) const {
    Polynomial out(nvars_);
    for (const auto& [m, c] : terms_) {
        auto [factor, reduced] = m.differentiate(var);
        if (factor != 0) out.add_term(reduced, c * factor);
    }
    return out;
}

std::vector<Polynomial> Polynomial::gradient() const {
    std::vector<Polynomial> g;
    g.reserve(static_cast<size_t>(nvars_));
    for (int v = 0; v < nvars_; ++v) g.push_back(derivative(v));
    return g;
}

Polynomial Polynomial::shifted(std::span<const double> shift) const {
    if (static_cast<int>(shift.size()) != nvars_)
        throw DimensionMismatch("shifted: shift dimension != nvars");
    Polynomial out(nvars_);
    for (const auto& [m, c] : terms_) {
        // Expand c * prod (x_v + s_v)^e by repeated multiplication.
        Polynomial term = Polynomial::constant(nvars_, c);
        for (const auto& [v, e] : m.exponents()) {
            if (shift[static_cast<size_t>(v)] == 0.0) {
                term = term * Polynomial::from_terms(nvars_, {{Monomial::var(v, e), 1.0}});
                continue;
            }
            Polynomial factor(nvars_);
            factor.add_term(Monomial::var(v), 1.0);
            factor.add_term(Monomial{}, shift[static_cast<size_t>(v)]);
            for (int k = 0; k < e; ++k) term = term * factor;
        }
        out = out + term;
    }
    return out;
}

void Polynomial::check_same_space(const Polynomial& rhs) const {
    if (nvars_ != rhs.nvars_)
        throw DimensionMismatch("polynomial arity mismatch: " + std::to_string(nvars_) +
                                " vs " + std::to_string(rhs.nvars_));
}

Polynomial Polynomial::operator+(const Polynomial& rhs) const {
    check_same_space(rhs);
    Polynomial out = *this;
    for (const auto& [m, c] : rhs.terms_) out.add_term(m, c);
    return out;
}

Polynomial Polynomial::operator-(const Polynomial& rhs) const {
    check_same_space(rhs);
    Polynomial out = *this;
    for (const auto& [m, c] : rhs.terms_) out.add_term(m, -c);
    return out;
}

Polynomial Polynomial::operator*(const Polynomial& rhs) const {
    check_same_space(rhs);
    Polynomial out(nvars_);
    for (const auto& [ma, ca] : terms_)
        for (const auto& [mb, cb] : rhs.terms_) out.add_term(ma * mb, ca * cb);
    return out;
}

Polynomial Polynomial::operator*(double s) const {
    Polynomial out(nvars_);
    for (const auto& [m, c] : terms_) out.add_term(m, c * s);
    return out;
}

void Polynomial::add_term(const Monomial& m, double c) {
    if (m.max_var() >= nvars_)
        throw DimensionMismatch("monomial uses variable index beyond nvars");
    auto it = terms_.find(m);
    if (it == terms_.end()) {
        if (std::abs(c) >= kCoefEpsilon) terms_.emplace(m, c);
        return;
    }
    it->second += c;
    if (std::abs(it->second) < kCoefEpsilon) terms_.erase(it);
}

std::string format_double(double v) {
    if (v == 0.0) v = 0.0;  // normalize -0
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string Polynomial::str() const {
    if (terms_.empty()) return "0";
    std::string out;
    // Descending graded-lex: highest-degree terms first.
    for (auto it = terms_.rbegin(); it != terms_.rend(); ++it) {
        if (!out.empty()) out += " + ";
        out += format_double(it->second);
        bool first_var = true;
        for (const auto& [v, e] : it->first.exponents()) {
            out += first_var ? " * x" : " x";
            first_var = false;
            out += std::to_string(v);
            if (e > 1) out += "^" + std::to_string(e);
        }
    }
    return out;
}

namespace {

struct Scanner {
    const std::string& s;
    size_t i = 0;

    void skip_ws() {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    }
    bool done() {
        skip_ws();
        return i >= s.size();
    }
    char peek() {
        skip_ws();
        return i < s.size() ? s[i] : '\0';
    }
    [[noreturn]] void fail(const std::string& msg) {
        throw ParseError("polynomial parse error at offset " + std::to_string(i) + ": " + msg);
    }
    double number() {
        skip_ws();
        const char* begin = s.c_str() + i;
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (end == begin) fail("expected number");
        i += static_cast<size_t>(end - begin);
        return v;
    }
    long integer() {
        skip_ws();
        const char* begin = s.c_str() + i;
        char* end = nullptr;
        long v = std::strtol(begin, &end, 10);
        if (end == begin) fail("expected integer");
        i += static_cast<size_t>(end - begin);
        return v;
    }
};

}  // namespace

Polynomial Polynomial::parse(const std::string& text, int nvars) {
    Polynomial out(nvars);
    Scanner sc{text};
    if (sc.done()) throw ParseError("empty polynomial text");
    bool first = true;
    while (!sc.done()) {
        double sign = 1.0;
        if (!first) {
            char op = sc.peek();
            if (op == '+')
                ++sc.i;
            else if (op == '-') {
                // binary minus between terms; unary minus is part of the number
                ++sc.i;
                sign = -1.0;
            } else
                sc.fail("expected '+' or '-' between terms");
        }
        first = false;

        double coef = 1.0;
        bool have_coef = false;
        char c = sc.peek();
        if (c != 'x') {
            coef = sc.number();
            have_coef = true;
        }
        Monomial::ExpMap exps;
        while (true) {
            char n = sc.peek();
            if (n == '*') {
                ++sc.i;
                n = sc.peek();
            }
            if (n != 'x') break;
            ++sc.i;
            long var = sc.integer();
            if (var < 0 || var >= nvars)
                throw ParseError("variable index x" + std::to_string(var) +
                                 " out of range (nvars=" + std::to_string(nvars) + ")");
            long e = 1;
            if (sc.peek() == '^') {
                ++sc.i;
                e = sc.integer();
                if (e < 1) sc.fail("exponent must be >= 1");
            }
            exps[static_cast<int>(var)] += static_cast<int>(e);
        }
        if (!have_coef && exps.empty()) sc.fail("expected term");
        out.add_term(Monomial::from_exponents(std::move(exps)), sign * coef);
    }
    return out;
}

}  // namespace compsys
