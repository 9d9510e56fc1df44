#pragma once

#include <cstdint>
#include <vector>

#include "dlnn/polynomial.hpp"

namespace dlnn {

// Per-thread scratch for CompiledSystem evaluation (power tables, split into
// real and imaginary planes).
struct EvalWorkspace {
    std::vector<double> pow_re, pow_im;
};

// Flattened form of a square polynomial system for fast repeated evaluation:
// terms laid out in contiguous arrays, Jacobian entries differentiated once
// at construction. Evaluation works on split real/imaginary data to keep the
// inner loops free of library complex arithmetic.
class CompiledSystem {
public:
    // extra_power_floor (optional, per variable) forces the power tables to
    // cover at least that exponent; the homotopy needs x_i^{d_i} for the
    // start system even when the target never reaches it.
    explicit CompiledSystem(const PolySystem& sys, const std::vector<int>& extra_power_floor = {});

    std::size_t size() const { return n_; }
    const std::vector<int>& degrees() const { return degrees_; }
    int power_stride() const { return stride_; }

    EvalWorkspace make_workspace() const;

    // Fills the power tables in ws for the point x; all eval calls below
    // require this to run first for the same point.
    void load_point(const double* xre, const double* xim, EvalWorkspace& ws) const;

    void eval_values(const EvalWorkspace& ws, double* fre, double* fim) const;
    // Row-major n x n Jacobian.
    void eval_jacobian(const EvalWorkspace& ws, double* jre, double* jim) const;

    // Convenience for non-hot-path callers.
    std::vector<Complex> eval(const std::vector<Complex>& x, EvalWorkspace& ws) const;

private:
    struct Term {
        double cre, cim;
        std::uint32_t factor_off;
        std::uint32_t factor_count;
    };
    struct Entry { // one polynomial (or one Jacobian cell)
        std::uint32_t term_off;
        std::uint32_t term_count;
    };

    void compile_poly(const Polynomial& p, Entry& e);
    void eval_entry(const EvalWorkspace& ws, const Entry& e, double& out_re, double& out_im) const;

    std::size_t n_ = 0;
    int stride_ = 1; // power table row length per variable
    std::vector<int> degrees_;
    std::vector<Entry> value_entries_;           // n
    std::vector<Entry> jac_entries_;             // n*n, row-major
    std::vector<Term> terms_;
    std::vector<std::uint16_t> factor_var_;
    std::vector<std::uint16_t> factor_exp_;
};

} // namespace dlnn
