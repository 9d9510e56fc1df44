#include "dlnn/mixed_volume.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <stdexcept>

#include "dlnn/rng.hpp"
#include "dlnn/simplex_lp.hpp"

namespace dlnn {

namespace {

using Int = __int128;
using Point = std::vector<int>;

struct LiftedSupport {
    std::vector<Point> pts;
    std::vector<long long> lift;
};

// Signals an exact tie in the lifted lower hull; the caller retries with a
// fresh lifting.
struct TieError {};

// Exact determinant by fraction-free (Bareiss) elimination. Entries stay
// bounded by minors of the input, which fits __int128 for the sizes and
// magnitudes this module accepts.
Int exact_det(std::vector<std::vector<Int>> m) {
    std::size_t n = m.size();
    Int det_sign = 1;
    Int prev = 1;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        while (piv < n && m[piv][k] == 0) ++piv;
        if (piv == n) return 0;
        if (piv != k) {
            std::swap(m[piv], m[k]);
            det_sign = -det_sign;
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            for (std::size_t j = k + 1; j < n; ++j)
                m[i][j] = (m[k][k] * m[i][j] - m[i][k] * m[k][j]) / prev;
            m[i][k] = 0;
        }
        prev = m[k][k];
    }
    return det_sign * m[n - 1][n - 1];
}

// Solves M g = r exactly by Cramer's rule; returns numerators and the
// (positive) common denominator, or false if M is singular.
bool exact_solve(const std::vector<std::vector<Int>>& m, const std::vector<Int>& r,
                 std::vector<Int>& num, Int& den) {
    std::size_t n = m.size();
    Int d = exact_det(m);
    if (d == 0) return false;
    num.assign(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
        auto mj = m;
        for (std::size_t i = 0; i < n; ++i) mj[i][j] = r[i];
        num[j] = exact_det(mj);
    }
    den = d;
    if (den < 0) {
        den = -den;
        for (auto& v : num) v = -v;
    }
    return true;
}

mpz_class int128_to_mpz(Int v) {
    bool neg = v < 0;
    unsigned __int128 u = neg ? static_cast<unsigned __int128>(-v) : static_cast<unsigned __int128>(v);
    mpz_class hi(static_cast<unsigned long>(u >> 64));
    mpz_class lo(static_cast<unsigned long>(u & 0xffffffffffffffffULL));
    mpz_class r = (hi << 64) + lo;
    return neg ? mpz_class(-r) : r;
}

class CellEnumerator {
public:
    CellEnumerator(std::vector<LiftedSupport> sup, std::size_t n)
        : sup_(std::move(sup)), n_(n) {
        order_.resize(sup_.size());
        std::iota(order_.begin(), order_.end(), 0);
        std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
            return sup_[a].pts.size() < sup_[b].pts.size();
        });
        chosen_.resize(n_);
    }

    mpz_class run() {
        total_ = 0;
        descend(0);
        return total_;
    }

private:
    // One LP per internal node: is there a lifted hyperplane touching all
    // chosen edges from below, strictly below the rest of their supports?
    // The check is float-based and deliberately lenient; only the exact leaf
    // test decides whether a full tuple is a mixed cell.
    bool partial_feasible(std::size_t nchosen) const {
        std::vector<std::vector<double>> a;
        std::vector<double> b;
        std::size_t nv = n_ + 1; // gamma, delta
        for (std::size_t k = 0; k < nchosen; ++k) {
            const auto& s = sup_[order_[k]];
            auto [pi, qi] = chosen_[k];
            const Point& p = s.pts[pi];
            const Point& q = s.pts[qi];
            // equality <g, p - q> = lift(q) - lift(p), as two inequalities
            std::vector<double> row(nv, 0.0);
            for (std::size_t j = 0; j < n_; ++j) row[j] = static_cast<double>(p[j] - q[j]);
            double rhs = static_cast<double>(s.lift[qi] - s.lift[pi]);
            a.push_back(row);
            b.push_back(rhs);
            for (auto& v : row) v = -v;
            a.push_back(row);
            b.push_back(-rhs);
            // strict rows: <g, p - c> + delta <= lift(c) - lift(p)
            for (std::size_t ci = 0; ci < s.pts.size(); ++ci) {
                if (ci == pi || ci == qi) continue;
                std::vector<double> srow(nv, 0.0);
                for (std::size_t j = 0; j < n_; ++j)
                    srow[j] = static_cast<double>(p[j] - s.pts[ci][j]);
                srow[n_] = 1.0;
                a.push_back(std::move(srow));
                b.push_back(static_cast<double>(s.lift[ci] - s.lift[pi]));
            }
        }
        // cap delta to keep the LP bounded
        std::vector<double> cap(nv, 0.0);
        cap[n_] = 1.0;
        a.push_back(std::move(cap));
        b.push_back(1.0);
        std::vector<double> c(nv, 0.0);
        c[n_] = 1.0;
        LpResult res = solve_lp_max(a, b, c);
        if (res.status == LpStatus::Infeasible) return false;
        if (res.status == LpStatus::Unbounded) return true;
        return res.value > -1e-2;
    }

    // Exact certificate for a full edge tuple.
    void check_leaf() {
        std::vector<std::vector<Int>> m(n_, std::vector<Int>(n_));
        std::vector<Int> r(n_);
        for (std::size_t k = 0; k < n_; ++k) {
            const auto& s = sup_[order_[k]];
            auto [pi, qi] = chosen_[k];
            for (std::size_t j = 0; j < n_; ++j)
                m[k][j] = static_cast<Int>(s.pts[pi][j]) - static_cast<Int>(s.pts[qi][j]);
            r[k] = static_cast<Int>(s.lift[qi]) - static_cast<Int>(s.lift[pi]);
        }
        std::vector<Int> num;
        Int den = 0;
        if (!exact_solve(m, r, num, den)) return; // degenerate tuple, not a cell
        for (std::size_t k = 0; k < n_; ++k) {
            const auto& s = sup_[order_[k]];
            auto [pi, qi] = chosen_[k];
            const Point& p = s.pts[pi];
            for (std::size_t ci = 0; ci < s.pts.size(); ++ci) {
                if (ci == pi || ci == qi) continue;
                // require <g, c - p> + lift(c) - lift(p) > 0, scaled by den
                Int margin = den * (static_cast<Int>(s.lift[ci]) - static_cast<Int>(s.lift[pi]));
                for (std::size_t j = 0; j < n_; ++j)
                    margin += num[j] * (static_cast<Int>(s.pts[ci][j]) - static_cast<Int>(p[j]));
                if (margin == 0) throw TieError{};
                if (margin < 0) return;
            }
        }
        total_ += int128_to_mpz(den < 0 ? -den : den);
    }

    void descend(std::size_t depth) {
        if (depth == n_) {
            check_leaf();
            return;
        }
        const auto& s = sup_[order_[depth]];
        std::size_t npts = s.pts.size();
        for (std::size_t pi = 0; pi + 1 < npts; ++pi) {
            for (std::size_t qi = pi + 1; qi < npts; ++qi) {
                chosen_[depth] = {pi, qi};
                // The last support needs no LP: the leaf check is exact.
                if (depth + 1 == n_ || partial_feasible(depth + 1)) descend(depth + 1);
            }
        }
    }

    std::vector<LiftedSupport> sup_;
    std::size_t n_;
    std::vector<std::size_t> order_;
    std::vector<std::pair<std::size_t, std::size_t>> chosen_;
    mpz_class total_;
};

} // namespace

mpz_class mixed_volume(const std::vector<std::vector<std::vector<int>>>& supports,
                       const MixedVolumeOptions& opts) {
    std::size_t n = supports.size();
    if (n == 0) throw std::invalid_argument("mixed volume of zero supports");
    if (n > opts.dimension_cap && !opts.ignore_cap)
        throw std::invalid_argument("mixed volume dimension above cap; set ignore_cap to force");
    for (const auto& s : supports) {
        for (const auto& p : s) {
            if (p.size() != n)
                throw std::invalid_argument("support point dimension mismatch");
            for (int e : p)
                if (e < 0 || e > 64) throw std::invalid_argument("exponent out of range");
        }
    }

    // Deduplicate and sort each support for a deterministic traversal.
    std::vector<std::vector<Point>> pts(n);
    for (std::size_t i = 0; i < n; ++i) {
        pts[i] = supports[i];
        std::sort(pts[i].begin(), pts[i].end());
        pts[i].erase(std::unique(pts[i].begin(), pts[i].end()), pts[i].end());
        if (pts[i].size() < 2) return 0; // no edge to pick: mixed volume 0
        if (pts[i].size() > 64)
            throw std::invalid_argument("support too large for mixed-cell enumeration");
    }

    for (int attempt = 0; attempt < opts.max_retries; ++attempt) {
        Rng rng(opts.lifting_seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(attempt));
        std::vector<LiftedSupport> lifted(n);
        for (std::size_t i = 0; i < n; ++i) {
            lifted[i].pts = pts[i];
            lifted[i].lift.resize(pts[i].size());
            for (auto& w : lifted[i].lift)
                w = static_cast<long long>(rng.uniform_int(0, 4095));
        }
        try {
            CellEnumerator en(std::move(lifted), n);
            return en.run();
        } catch (const TieError&) {
            continue;
        }
    }
    throw std::runtime_error("mixed volume: degenerate liftings in every attempt");
}

} // namespace dlnn
