#include "dlnn/compiled_system.hpp"

#include <stdexcept>

namespace dlnn {

CompiledSystem::CompiledSystem(const PolySystem& sys, const std::vector<int>& extra_power_floor) {
    if (!sys.is_square()) throw std::invalid_argument("compiled system must be square");
    n_ = sys.nvars;
    degrees_ = sys.degrees();

    int maxexp = 1;
    for (const auto& p : sys.polys)
        for (const auto& [m, c] : p.terms())
            for (int e : m.exponents) maxexp = std::max(maxexp, e);
    for (int e : extra_power_floor) maxexp = std::max(maxexp, e);
    stride_ = maxexp + 1;

    value_entries_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) compile_poly(sys.polys[i], value_entries_[i]);
    jac_entries_.resize(n_ * n_);
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = 0; j < n_; ++j)
            compile_poly(sys.polys[i].differentiate(j), jac_entries_[i * n_ + j]);
}

void CompiledSystem::compile_poly(const Polynomial& p, Entry& e) {
    e.term_off = static_cast<std::uint32_t>(terms_.size());
    for (const auto& [m, c] : p.terms()) {
        Term t;
        t.cre = c.real();
        t.cim = c.imag();
        t.factor_off = static_cast<std::uint32_t>(factor_var_.size());
        std::uint32_t nf = 0;
        for (std::size_t v = 0; v < m.exponents.size(); ++v) {
            if (m.exponents[v] == 0) continue;
            factor_var_.push_back(static_cast<std::uint16_t>(v));
            factor_exp_.push_back(static_cast<std::uint16_t>(m.exponents[v]));
            ++nf;
        }
        t.factor_count = nf;
        terms_.push_back(t);
    }
    e.term_count = static_cast<std::uint32_t>(terms_.size()) - e.term_off;
}

EvalWorkspace CompiledSystem::make_workspace() const {
    EvalWorkspace ws;
    ws.pow_re.assign(n_ * stride_, 0.0);
    ws.pow_im.assign(n_ * stride_, 0.0);
    return ws;
}

void CompiledSystem::load_point(const double* xre, const double* xim, EvalWorkspace& ws) const {
    double* pre = ws.pow_re.data();
    double* pim = ws.pow_im.data();
    for (std::size_t v = 0; v < n_; ++v) {
        double* rre = pre + v * stride_;
        double* rim = pim + v * stride_;
        rre[0] = 1.0;
        rim[0] = 0.0;
        double xr = xre[v], xi = xim[v];
        for (int e = 1; e < stride_; ++e) {
            double ar = rre[e - 1], ai = rim[e - 1];
            rre[e] = ar * xr - ai * xi;
            rim[e] = ar * xi + ai * xr;
        }
    }
}

void CompiledSystem::eval_entry(const EvalWorkspace& ws, const Entry& e,
                                double& out_re, double& out_im) const {
    const double* pre = ws.pow_re.data();
    const double* pim = ws.pow_im.data();
    const std::uint16_t* fvar = factor_var_.data();
    const std::uint16_t* fexp = factor_exp_.data();
    const Term* terms = terms_.data();
    const int stride = stride_;
    double acc_re = 0.0, acc_im = 0.0;
    for (std::uint32_t t = e.term_off; t < e.term_off + e.term_count; ++t) {
        const Term& tv = terms[t];
        double vre = tv.cre, vim = tv.cim;
        const std::uint16_t* fv = fvar + tv.factor_off;
        const std::uint16_t* fe = fexp + tv.factor_off;
        for (std::uint32_t f = 0; f < tv.factor_count; ++f) {
            const double prf = pre[fv[f] * stride + fe[f]];
            const double pif = pim[fv[f] * stride + fe[f]];
            double nr = vre * prf - vim * pif;
            vim = vre * pif + vim * prf;
            vre = nr;
        }
        acc_re += vre;
        acc_im += vim;
    }
    out_re = acc_re;
    out_im = acc_im;
}

void CompiledSystem::eval_values(const EvalWorkspace& ws, double* fre, double* fim) const {
    for (std::size_t i = 0; i < n_; ++i)
        eval_entry(ws, value_entries_[i], fre[i], fim[i]);
}

void CompiledSystem::eval_jacobian(const EvalWorkspace& ws, double* jre, double* jim) const {
    for (std::size_t k = 0; k < n_ * n_; ++k)
        eval_entry(ws, jac_entries_[k], jre[k], jim[k]);
}

std::vector<Complex> CompiledSystem::eval(const std::vector<Complex>& x, EvalWorkspace& ws) const {
    if (x.size() != n_) throw std::invalid_argument("point dimension mismatch");
    std::vector<double> xre(n_), xim(n_), fre(n_), fim(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        xre[i] = x[i].real();
        xim[i] = x[i].imag();
    }
    load_point(xre.data(), xim.data(), ws);
    eval_values(ws, fre.data(), fim.data());
    std::vector<Complex> out(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = Complex(fre[i], fim[i]);
    return out;
}

} // namespace dlnn
