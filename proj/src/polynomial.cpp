#include "dlnn/polynomial.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dlnn {

Polynomial Polynomial::constant(std::size_t nvars, Complex c) {
    Polynomial p(nvars);
    p.add_term(Monomial(nvars), c);
    return p;
}

Polynomial Polynomial::variable(std::size_t nvars, std::size_t index, Complex coeff) {
    if (index >= nvars) throw std::invalid_argument("variable index out of range");
    Monomial m(nvars);
    m.exponents[index] = 1;
    Polynomial p(nvars);
    p.add_term(m, coeff);
    return p;
}

void Polynomial::add_term(const Monomial& m, Complex coeff) {
    if (m.exponents.size() != nvars_)
        throw std::invalid_argument("monomial length does not match variable count");
    for (int e : m.exponents)
        if (e < 0) throw std::invalid_argument("negative exponent");
    auto it = terms_.find(m);
    if (it == terms_.end()) {
        if (std::abs(coeff) >= kCoeffEps) terms_.emplace(m, coeff);
    } else {
        it->second += coeff;
        if (std::abs(it->second) < kCoeffEps) terms_.erase(it);
    }
}

int Polynomial::degree() const {
    if (terms_.empty()) return -1;
    // grlex order: the last term has maximal total degree.
    return terms_.rbegin()->first.degree();
}

Complex Polynomial::evaluate(const std::vector<Complex>& point) const {
    if (point.size() != nvars_)
        throw std::invalid_argument("point dimension does not match variable count");
    // Per-variable power tables up to the max exponent seen.
    std::vector<int> maxe(nvars_, 0);
    for (const auto& [m, c] : terms_)
        for (std::size_t j = 0; j < nvars_; ++j)
            if (m.exponents[j] > maxe[j]) maxe[j] = m.exponents[j];
    std::vector<std::vector<Complex>> pow(nvars_);
    for (std::size_t j = 0; j < nvars_; ++j) {
        pow[j].resize(maxe[j] + 1);
        pow[j][0] = 1.0;
        for (int e = 1; e <= maxe[j]; ++e) pow[j][e] = pow[j][e - 1] * point[j];
    }
    Complex acc = 0.0;
    for (const auto& [m, c] : terms_) {
        Complex t = c;
        for (std::size_t j = 0; j < nvars_; ++j)
            if (m.exponents[j] > 0) t *= pow[j][m.exponents[j]];
        acc += t;
    }
    return acc;
}

Polynomial Polynomial::differentiate(std::size_t var) const {
    if (var >= nvars_) throw std::invalid_argument("variable index out of range");
    Polynomial out(nvars_);
    for (const auto& [m, c] : terms_) {
        int e = m.exponents[var];
        if (e == 0) continue;
        Monomial d = m;
        d.exponents[var] = e - 1;
        out.add_term(d, c * static_cast<double>(e));
    }
    return out;
}

std::vector<std::vector<int>> Polynomial::support() const {
    std::vector<std::vector<int>> s;
    s.reserve(terms_.size());
    for (const auto& [m, c] : terms_) s.push_back(m.exponents);
    return s;
}

Polynomial& Polynomial::operator+=(const Polynomial& o) {
    if (nvars_ != o.nvars_) throw std::invalid_argument("variable count mismatch");
    for (const auto& [m, c] : o.terms_) add_term(m, c);
    return *this;
}

Polynomial& Polynomial::operator-=(const Polynomial& o) {
    if (nvars_ != o.nvars_) throw std::invalid_argument("variable count mismatch");
    for (const auto& [m, c] : o.terms_) add_term(m, -c);
    return *this;
}

Polynomial Polynomial::operator+(const Polynomial& o) const {
    Polynomial r = *this;
    r += o;
    return r;
}

Polynomial Polynomial::operator-(const Polynomial& o) const {
    Polynomial r = *this;
    r -= o;
    return r;
}

Polynomial Polynomial::operator*(const Polynomial& o) const {
    if (nvars_ != o.nvars_) throw std::invalid_argument("variable count mismatch");
    Polynomial r(nvars_);
    Monomial prod(nvars_);
    for (const auto& [ma, ca] : terms_) {
        for (const auto& [mb, cb] : o.terms_) {
            for (std::size_t j = 0; j < nvars_; ++j)
                prod.exponents[j] = ma.exponents[j] + mb.exponents[j];
            r.add_term(prod, ca * cb);
        }
    }
    return r;
}

Polynomial Polynomial::operator*(Complex scalar) const {
    Polynomial r(nvars_);
    for (const auto& [m, c] : terms_) r.add_term(m, c * scalar);
    return r;
}

Polynomial Polynomial::operator-() const { return *this * Complex(-1.0, 0.0); }

bool Polynomial::operator==(const Polynomial& o) const {
    return nvars_ == o.nvars_ && terms_ == o.terms_;
}

double Polynomial::coeff_distance(const Polynomial& o) const {
    if (nvars_ != o.nvars_) throw std::invalid_argument("variable count mismatch");
    double d = 0.0;
    for (const auto& [m, c] : terms_) {
        auto it = o.terms_.find(m);
        Complex oc = (it == o.terms_.end()) ? Complex(0.0) : it->second;
        d = std::max(d, std::abs(c - oc));
    }
    for (const auto& [m, c] : o.terms_)
        if (terms_.find(m) == terms_.end()) d = std::max(d, std::abs(c));
    return d;
}

std::vector<int> PolySystem::degrees() const {
    std::vector<int> d;
    d.reserve(polys.size());
    for (const auto& p : polys) d.push_back(p.degree());
    return d;
}

std::vector<Complex> PolySystem::evaluate(const std::vector<Complex>& point) const {
    std::vector<Complex> v;
    v.reserve(polys.size());
    for (const auto& p : polys) v.push_back(p.evaluate(point));
    return v;
}

std::vector<std::vector<Polynomial>> PolySystem::jacobian() const {
    std::vector<std::vector<Polynomial>> J(polys.size());
    for (std::size_t i = 0; i < polys.size(); ++i) {
        J[i].reserve(nvars);
        for (std::size_t j = 0; j < nvars; ++j) J[i].push_back(polys[i].differentiate(j));
    }
    return J;
}

namespace {

void print_double(std::ostream& out, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
}

} // namespace

void serialize_system(const PolySystem& sys, std::ostream& out) {
    out << "dlnn-system 1\n";
    out << "vars";
    for (const auto& n : sys.var_names) out << ' ' << n;
    out << '\n';
    for (const auto& p : sys.polys) {
        if (p.is_zero()) {
            out << "0\n";
            continue;
        }
        bool first = true;
        for (const auto& [m, c] : p.terms()) {
            if (!first) out << ' ';
            first = false;
            print_double(out, c.real());
            out << ',';
            print_double(out, c.imag());
            out << ':';
            for (std::size_t j = 0; j < m.exponents.size(); ++j) {
                if (j) out << ',';
                out << m.exponents[j];
            }
        }
        out << '\n';
    }
}

std::string system_to_string(const PolySystem& sys) {
    std::ostringstream os;
    serialize_system(sys, os);
    return os.str();
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t next = s.find(sep, pos);
        if (next == std::string::npos) {
            parts.push_back(s.substr(pos));
            break;
        }
        parts.push_back(s.substr(pos, next - pos));
        pos = next + 1;
    }
    return parts;
}

double parse_double(const std::string& s) {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::runtime_error("bad numeric literal: " + s);
    return v;
}

} // namespace

PolySystem parse_system(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "dlnn-system 1")
        throw std::runtime_error("bad system header");
    if (!std::getline(in, line) || line.rfind("vars", 0) != 0)
        throw std::runtime_error("missing vars line");
    PolySystem sys;
    {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok; // "vars"
        while (ls >> tok) sys.var_names.push_back(tok);
    }
    sys.nvars = sys.var_names.size();
    if (sys.nvars == 0) throw std::runtime_error("system has no variables");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Polynomial p(sys.nvars);
        if (line == "0") {
            sys.polys.push_back(std::move(p));
            continue;
        }
        std::istringstream ls(line);
        std::string term;
        while (ls >> term) {
            auto colon = term.find(':');
            if (colon == std::string::npos) throw std::runtime_error("bad term: " + term);
            auto coeff_parts = split(term.substr(0, colon), ',');
            if (coeff_parts.size() != 2) throw std::runtime_error("bad coefficient: " + term);
            Complex c(parse_double(coeff_parts[0]), parse_double(coeff_parts[1]));
            auto exps = split(term.substr(colon + 1), ',');
            if (exps.size() != sys.nvars)
                throw std::runtime_error("exponent count mismatch in term: " + term);
            Monomial m(sys.nvars);
            for (std::size_t j = 0; j < sys.nvars; ++j) {
                int e = std::stoi(exps[j]);
                if (e < 0) throw std::runtime_error("negative exponent in term: " + term);
                m.exponents[j] = e;
            }
            p.add_term(m, c);
        }
        sys.polys.push_back(std::move(p));
    }
    return sys;
}

PolySystem system_from_string(const std::string& text) {
    std::istringstream is(text);
    return parse_system(is);
}

std::string to_pretty_string(const Polynomial& p, const std::vector<std::string>& names) {
    if (p.is_zero()) return "0";
    std::ostringstream os;
    bool first = true;
    // Print highest degree first for readability.
    const auto& t = p.terms();
    for (auto it = t.rbegin(); it != t.rend(); ++it) {
        const auto& [m, c] = *it;
        if (!first) os << " + ";
        first = false;
        if (c.imag() == 0.0) {
            os << c.real();
        } else {
            os << '(' << c.real() << (c.imag() < 0 ? "" : "+") << c.imag() << "i)";
        }
        for (std::size_t j = 0; j < m.exponents.size(); ++j) {
            if (m.exponents[j] == 0) continue;
            os << '*' << (j < names.size() ? names[j] : "x" + std::to_string(j));
            if (m.exponents[j] > 1) os << '^' << m.exponents[j];
        }
    }
    return os.str();
}

} // namespace dlnn
