#pragma once

#include <vector>

namespace dlnn {

enum class LpStatus { Optimal, Unbounded, Infeasible };

struct LpResult {
    LpStatus status = LpStatus::Infeasible;
    double value = 0.0;
    std::vector<double> point;
};

// Maximize c.x subject to a[r].x <= b[r] with x unrestricted in sign.
// Dense two-phase simplex with Bland's rule; intended for the small
// feasibility problems of the mixed-cell search (hundreds of rows).
LpResult solve_lp_max(const std::vector<std::vector<double>>& a,
                      const std::vector<double>& b,
                      const std::vector<double>& c);

} // namespace dlnn
