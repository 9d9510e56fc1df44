#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace dlnn {

using Complex = std::complex<double>;

// Coefficients with modulus below this are treated as zero and pruned.
inline constexpr double kCoeffEps = 1e-14;

// Exponent vector of a single monomial. All monomials of a polynomial share
// the same length (the variable count); exponents are non-negative.
struct Monomial {
    std::vector<int> exponents;

    Monomial() = default;
    explicit Monomial(std::size_t nvars) : exponents(nvars, 0) {}
    explicit Monomial(std::vector<int> e) : exponents(std::move(e)) {}

    int degree() const {
        int d = 0;
        for (int e : exponents) d += e;
        return d;
    }
    bool operator==(const Monomial& o) const { return exponents == o.exponents; }
};

// Graded lexicographic order: lower total degree first, ties broken
// lexicographically on the exponent vector. Total order on monomials of a
// fixed variable count; gives every polynomial a canonical term sequence.
struct GrlexLess {
    bool operator()(const Monomial& a, const Monomial& b) const {
        int da = a.degree(), db = b.degree();
        if (da != db) return da < db;
        return a.exponents < b.exponents;
    }
};

// Sparse multivariate polynomial over the complex numbers.
// Terms map monomial -> coefficient; zero coefficients are never stored.
class Polynomial {
public:
    using TermMap = std::map<Monomial, Complex, GrlexLess>;

    Polynomial() = default;
    explicit Polynomial(std::size_t nvars) : nvars_(nvars) {}

    static Polynomial constant(std::size_t nvars, Complex c);
    static Polynomial variable(std::size_t nvars, std::size_t index, Complex coeff = 1.0);

    std::size_t nvars() const { return nvars_; }
    const TermMap& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }
    std::size_t term_count() const { return terms_.size(); }

    // Accumulates coeff onto the monomial's entry, pruning if the result is
    // negligible. The monomial length must equal nvars().
    void add_term(const Monomial& m, Complex coeff);

    // Total degree; -1 for the zero polynomial.
    int degree() const;

    Complex evaluate(const std::vector<Complex>& point) const;

    Polynomial differentiate(std::size_t var) const;

    // Exponent vectors of all stored terms, in grlex order.
    std::vector<std::vector<int>> support() const;

    Polynomial& operator+=(const Polynomial& o);
    Polynomial& operator-=(const Polynomial& o);
    Polynomial operator+(const Polynomial& o) const;
    Polynomial operator-(const Polynomial& o) const;
    Polynomial operator*(const Polynomial& o) const;
    Polynomial operator*(Complex scalar) const;
    Polynomial operator-() const;
    bool operator==(const Polynomial& o) const;

    // Max-norm distance between coefficient vectors (union of supports).
    double coeff_distance(const Polynomial& o) const;

private:
    std::size_t nvars_ = 0;
    TermMap terms_;
};

// Square or rectangular system of polynomials in shared variables.
struct PolySystem {
    std::size_t nvars = 0;
    std::vector<std::string> var_names;   // size nvars
    std::vector<Polynomial> polys;

    bool is_square() const { return polys.size() == nvars; }

    // Total degree of each polynomial.
    std::vector<int> degrees() const;

    std::vector<Complex> evaluate(const std::vector<Complex>& point) const;

    // Jacobian matrix entry polynomials, row-major: d poly_i / d x_j.
    std::vector<std::vector<Polynomial>> jacobian() const;
};

// Text round-trip. Format (one header line, one vars line, one line per
// polynomial; see README for the grammar):
//   dlnn-system 1
//   vars x y
//   1,0:2,0 -3.5,0:0,1
//   0
// Coefficients print with %.17g so parse(serialize(s)) is bit exact.
void serialize_system(const PolySystem& sys, std::ostream& out);
PolySystem parse_system(std::istream& in);
std::string system_to_string(const PolySystem& sys);
PolySystem system_from_string(const std::string& text);

// Human-oriented rendering, e.g. "(2+3i)*x^2*y + 1". Not parsed back.
std::string to_pretty_string(const Polynomial& p, const std::vector<std::string>& names);

} // namespace dlnn
