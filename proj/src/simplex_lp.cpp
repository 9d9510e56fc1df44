#include "dlnn/simplex_lp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dlnn {

namespace {

constexpr double kTol = 1e-9;

// Tableau rows: one per constraint plus the objective row at the end.
// Columns: structural variables, then slacks/artificials, then the rhs.
struct Tableau {
    std::size_t rows = 0, cols = 0;
    std::vector<double> t;
    std::vector<int> basis; // basic variable of each constraint row

    double& at(std::size_t r, std::size_t c) { return t[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return t[r * cols + c]; }

    void pivot(std::size_t pr, std::size_t pc) {
        double pv = at(pr, pc);
        for (std::size_t c = 0; c < cols; ++c) at(pr, c) /= pv;
        for (std::size_t r = 0; r < rows; ++r) {
            if (r == pr) continue;
            double f = at(r, pc);
            if (f == 0.0) continue;
            for (std::size_t c = 0; c < cols; ++c) at(r, c) -= f * at(pr, c);
        }
        basis[pr] = static_cast<int>(pc);
    }

    // Bland's rule; returns false when optimal, throws on unbounded.
    bool step(std::size_t ncols_active) {
        std::size_t obj = rows - 1;
        std::size_t pc = ncols_active;
        for (std::size_t c = 0; c < ncols_active; ++c) {
            if (at(obj, c) > kTol) {
                pc = c;
                break;
            }
        }
        if (pc == ncols_active) return false;
        std::size_t pr = obj;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r + 1 < rows; ++r) {
            double a = at(r, pc);
            if (a > kTol) {
                double ratio = at(r, cols - 1) / a;
                if (ratio < best - kTol ||
                    (ratio < best + kTol && (pr == obj || basis[r] < basis[pr]))) {
                    best = ratio;
                    pr = r;
                }
            }
        }
        if (pr == obj) throw LpStatus::Unbounded;
        pivot(pr, pc);
        return true;
    }
};

} // namespace

LpResult solve_lp_max(const std::vector<std::vector<double>>& a,
                      const std::vector<double>& b,
                      const std::vector<double>& c) {
    std::size_t m = a.size();
    std::size_t n = c.size();
    for (const auto& row : a)
        if (row.size() != n) throw std::invalid_argument("lp row length mismatch");
    if (b.size() != m) throw std::invalid_argument("lp rhs length mismatch");

    // x = u - v with u, v >= 0; slack per row; artificial for rows whose
    // (sign-normalized) rhs starts the slack at an infeasible value.
    std::size_t nsplit = 2 * n;
    std::size_t nslack = m;
    std::vector<int> art_col(m, -1);
    std::size_t nart = 0;
    for (std::size_t r = 0; r < m; ++r)
        if (b[r] < 0.0) art_col[r] = static_cast<int>(nart++);

    Tableau tb;
    tb.rows = m + 1;
    tb.cols = nsplit + nslack + nart + 1;
    tb.t.assign(tb.rows * tb.cols, 0.0);
    tb.basis.assign(m, -1);
    std::size_t rhs = tb.cols - 1;

    for (std::size_t r = 0; r < m; ++r) {
        double sign = (b[r] < 0.0) ? -1.0 : 1.0;
        for (std::size_t j = 0; j < n; ++j) {
            tb.at(r, j) = sign * a[r][j];
            tb.at(r, n + j) = -sign * a[r][j];
        }
        tb.at(r, nsplit + r) = sign; // slack
        tb.at(r, rhs) = sign * b[r];
        if (art_col[r] >= 0) {
            std::size_t ac = nsplit + nslack + art_col[r];
            tb.at(r, ac) = 1.0;
            tb.basis[r] = static_cast<int>(ac);
        } else {
            tb.basis[r] = static_cast<int>(nsplit + r);
        }
    }

    std::size_t obj = m;

    if (nart > 0) {
        // Phase 1: maximize -(sum of artificials).
        for (std::size_t r = 0; r < m; ++r) {
            if (art_col[r] < 0) continue;
            for (std::size_t col = 0; col < tb.cols; ++col) tb.at(obj, col) += tb.at(r, col);
        }
        for (std::size_t k = 0; k < nart; ++k) tb.at(obj, nsplit + nslack + k) = 0.0;
        try {
            // Artificials may leave the basis but never re-enter.
            while (tb.step(nsplit + nslack)) {
            }
        } catch (LpStatus) {
            throw std::runtime_error("phase 1 unbounded");
        }
        if (tb.at(obj, rhs) > 1e-7) return {LpStatus::Infeasible, 0.0, {}};
        // Pivot any artificial still in the basis out on a structural column.
        for (std::size_t r = 0; r < m; ++r) {
            if (tb.basis[r] < static_cast<int>(nsplit + nslack)) continue;
            for (std::size_t col = 0; col < nsplit + nslack; ++col) {
                if (std::abs(tb.at(r, col)) > 1e-7) {
                    tb.pivot(r, col);
                    break;
                }
            }
        }
        // Clear the objective row for phase 2.
        for (std::size_t col = 0; col < tb.cols; ++col) tb.at(obj, col) = 0.0;
    }

    // Phase 2 objective: maximize c.(u - v), expressed in reduced costs.
    for (std::size_t j = 0; j < n; ++j) {
        tb.at(obj, j) = c[j];
        tb.at(obj, n + j) = -c[j];
    }
    for (std::size_t r = 0; r < m; ++r) {
        int bc = tb.basis[r];
        if (bc >= static_cast<int>(nsplit + nslack)) continue; // leftover artificial, value 0
        double coeff = tb.at(obj, bc);
        if (coeff == 0.0) continue;
        for (std::size_t col = 0; col < tb.cols; ++col) tb.at(obj, col) -= coeff * tb.at(r, col);
    }

    LpResult res;
    try {
        while (tb.step(nsplit + nslack)) {
        }
    } catch (LpStatus) {
        res.status = LpStatus::Unbounded;
        return res;
    }

    res.status = LpStatus::Optimal;
    res.value = -tb.at(obj, rhs);
    res.point.assign(n, 0.0);
    std::vector<double> raw(nsplit, 0.0);
    for (std::size_t r = 0; r < m; ++r)
        if (tb.basis[r] >= 0 && tb.basis[r] < static_cast<int>(nsplit))
            raw[tb.basis[r]] = tb.at(r, rhs);
    for (std::size_t j = 0; j < n; ++j) res.point[j] = raw[j] - raw[n + j];
    return res;
}

} // namespace dlnn
