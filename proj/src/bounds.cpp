#include "dlnn/bounds.hpp"

#include <cmath>
#include <stdexcept>

#include "dlnn/rng.hpp"

namespace dlnn {

mpz_class bezout_bound(const std::vector<int>& degrees) {
    mpz_class b = 1;
    for (int d : degrees) {
        if (d < 0) return 0; // zero polynomial factor
        b *= d;
    }
    return b;
}

mpz_class bezout_bound(const Architecture& arch) {
    arch.validate();
    mpz_class b;
    mpz_ui_pow_ui(b.get_mpz_t(), 2 * arch.hidden_layers + 1, arch.weight_count());
    return b;
}

BkkBounds bkk_bounds(const PolySystem& sys, const MixedVolumeOptions& opts) {
    if (!sys.is_square()) throw std::invalid_argument("BKK bounds need a square system");
    std::vector<std::vector<std::vector<int>>> supports;
    supports.reserve(sys.polys.size());
    for (const auto& p : sys.polys) supports.push_back(p.support());
    BkkBounds b;
    b.torus = mixed_volume(supports, opts);
    for (auto& s : supports) {
        std::vector<int> origin(sys.nvars, 0);
        s.push_back(origin); // mixed_volume dedupes
    }
    b.affine = mixed_volume(supports, opts);
    return b;
}

ClosedFormBounds closed_form_bounds_h1m1(int d, int p) {
    if (d < 1 || p < 1) throw std::invalid_argument("dimensions must be positive");
    ClosedFormBounds b;
    mpz_ui_pow_ui(b.torus.get_mpz_t(), 4 * static_cast<unsigned long>(p),
                  static_cast<unsigned long>(d));
    mpz_ui_pow_ui(b.affine.get_mpz_t(), 1 + 4 * static_cast<unsigned long>(p),
                  static_cast<unsigned long>(d));
    return b;
}

namespace {

// Shared constants of the elimination: K_i = sum_j x_j^2 / lambda_{ij} and
// the scale c_i with S_i = c_i * a_i, where a_i is the i-th reduced variable
// (the (i,1) entry of W_1).
struct ReducedData {
    int d = 0, p = 0, n = 0;
    std::vector<double> k;     // K_i
    std::vector<double> c;     // S_i = c_i a_i
    std::vector<double> y;     // output vector
    Matrix sigma;              // second-layer regularization
};

ReducedData reduced_data(const Architecture& arch, const TrainingInstance& inst) {
    arch.validate();
    if (arch.hidden_layers != 1 || arch.sample_count != 1)
        throw std::invalid_argument("reduction needs one hidden layer and one data point");
    ReducedData rd;
    rd.d = arch.hidden[0];
    rd.p = arch.output_dim;
    rd.n = arch.input_dim;
    const Matrix& lam = inst.lambdas[0];
    rd.sigma = inst.lambdas[1];
    double x1 = inst.x.at(0, 0);
    if (x1 == 0.0) throw std::invalid_argument("first input coordinate must be nonzero");
    for (int i = 0; i < rd.d; ++i) {
        double k = 0.0;
        for (int j = 0; j < rd.n; ++j) {
            double l = lam.at(i, j);
            if (l == 0.0) throw std::invalid_argument("regularization entries must be nonzero");
            double xj = inst.x.at(j, 0);
            k += xj * xj / l;
        }
        rd.k.push_back(k);
        rd.c.push_back(k * lam.at(i, 0) / x1);
    }
    for (int kk = 0; kk < rd.p; ++kk) rd.y.push_back(inst.y.at(kk, 0));
    return rd;
}

} // namespace

PolySystem build_reduced_system(const Architecture& arch, const TrainingInstance& inst,
                                const std::vector<double>& mu) {
    ReducedData rd = reduced_data(arch, inst);
    std::size_t d = rd.d;
    if (mu.size() != d) throw std::invalid_argument("need one regularization constant per equation");

    // q_k = (1 + T_k)^2 with T_k = sum_i (c_i^2 / sigma_{ki}) a_i^2.
    std::vector<Polynomial> q;
    for (int k = 0; k < rd.p; ++k) {
        Polynomial t = Polynomial::constant(d, 1.0);
        for (std::size_t i = 0; i < d; ++i) {
            Monomial m(d);
            m.exponents[i] = 2;
            double s = rd.sigma.at(k, i);
            if (s == 0.0) throw std::invalid_argument("regularization entries must be nonzero");
            t.add_term(m, rd.c[i] * rd.c[i] / s);
        }
        q.push_back(t * t);
    }

    PolySystem sys;
    sys.nvars = d;
    for (std::size_t i = 0; i < d; ++i) sys.var_names.push_back("a" + std::to_string(i + 1));
    for (std::size_t i = 0; i < d; ++i) {
        Polynomial all = Polynomial::constant(d, 1.0 / rd.k[i]);
        for (int k = 0; k < rd.p; ++k) all = all * q[k];
        for (int k = 0; k < rd.p; ++k) {
            Polynomial rest = Polynomial::constant(d, rd.y[k] * rd.y[k] / rd.sigma.at(k, i));
            for (int l = 0; l < rd.p; ++l)
                if (l != k) rest = rest * q[l];
            all -= rest;
        }
        all += Polynomial::variable(d, i, mu[i]);
        sys.polys.push_back(std::move(all));
    }
    return sys;
}

std::vector<double> sample_mu(std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> mu(d);
    for (auto& v : mu) v = rng.uniform01() * 1e-3;
    return mu;
}

std::vector<Complex> lift_reduced_solution(const Architecture& arch,
                                           const TrainingInstance& inst,
                                           const std::vector<Complex>& reduced_point) {
    ReducedData rd = reduced_data(arch, inst);
    if (reduced_point.size() != static_cast<std::size_t>(rd.d))
        throw std::invalid_argument("reduced point dimension mismatch");

    std::vector<Complex> s(rd.d), t(rd.p, Complex(1.0, 0.0));
    for (int i = 0; i < rd.d; ++i) {
        if (reduced_point[i] == Complex(0.0))
            throw std::invalid_argument("reduced point must be toric");
        s[i] = rd.c[i] * reduced_point[i];
    }
    for (int k = 0; k < rd.p; ++k)
        for (int i = 0; i < rd.d; ++i) t[k] += s[i] * s[i] / rd.sigma.at(k, i);
    for (int k = 0; k < rd.p; ++k)
        if (std::abs(t[k]) < 1e-9)
            throw std::invalid_argument("reduced point lies on a junk component (1 + T_k = 0)");

    const Matrix& lam = inst.lambdas[0];
    double x1 = inst.x.at(0, 0);
    std::vector<Complex> w(arch.weight_count());
    for (int i = 0; i < rd.d; ++i)
        for (int j = 0; j < rd.n; ++j) {
            double scale = (inst.x.at(j, 0) / lam.at(i, j)) * (lam.at(i, 0) / x1);
            w[flat_index(arch, 1, i, j)] = scale * reduced_point[i];
        }
    for (int k = 0; k < rd.p; ++k)
        for (int i = 0; i < rd.d; ++i)
            w[flat_index(arch, 2, k, i)] = rd.y[k] * s[i] / (rd.sigma.at(k, i) * t[k]);
    return w;
}

BoundsReport compute_bounds_report(const Architecture& arch, std::uint64_t seed,
                                   const MixedVolumeOptions& opts) {
    arch.validate();
    BoundsReport rep;
    rep.arch = arch;
    rep.n = arch.weight_count();
    rep.cbb = bezout_bound(arch);
    if (static_cast<std::size_t>(rep.n) <= opts.dimension_cap || opts.ignore_cap) {
        PolySystem sys = build_gradient_system(arch, sample_instance(arch, seed));
        BkkBounds bkk = bkk_bounds(sys, opts);
        rep.bkk_computed = true;
        rep.bkk_torus = bkk.torus;
        rep.bkk_affine = bkk.affine;
    }
    if (arch.hidden_layers == 1 && arch.sample_count == 1) {
        ClosedFormBounds cf = closed_form_bounds_h1m1(arch.hidden[0], arch.output_dim);
        rep.has_closed_form = true;
        rep.b_cstar = cf.torus;
        rep.b_c = cf.affine;
    }
    return rep;
}

} // namespace dlnn
