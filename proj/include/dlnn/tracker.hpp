#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dlnn/compiled_system.hpp"
#include "dlnn/polynomial.hpp"

namespace dlnn {

struct SolverOptions {
    double residual_tol = 1e-10; // acceptance: residual < residual_tol * (1 + |x|)
    double dedupe_tol = 1e-8;
    double zero_tol = 1e-8;
    double real_tol = 1e-8;
    std::uint64_t seed = 0;      // drives gamma
    int threads = 0;             // 0: DLNN_THREADS env var, else hardware
    std::uint64_t max_paths = 2'000'000;

    // Path-tracking internals. Steps are taken in tau = -log t so that the
    // approach to the endgame boundary costs a bounded number of steps per
    // decade of t. Tracking runs in projective coordinates and stops at
    // |t| = endgame_radius, where a Cauchy loop around the circle decides
    // between a finite limit (polished against the target system) and a
    // limit on the hyperplane at infinity.
    double endgame_radius = 0.1;
    double step_init = 0.05;
    double step_min = 1e-9;
    double step_max = 0.6931471805599453; // one halving of t per step
    double corrector_tol = 1e-7;
    double divergence_norm = 1e8;
    int polish_iters = 30;
    double condition_quarantine = 1e10;
};

struct Solution {
    std::vector<Complex> point;
    double residual = 0.0;
    int newton_iters = 0;
    bool is_real = false;
    bool is_toric = false;
    std::vector<std::uint8_t> zero_mask;
    double condition_estimate = 0.0;
};

struct TrackStats {
    std::uint64_t paths_tracked = 0;
    std::uint64_t paths_converged = 0;
    std::uint64_t paths_diverged = 0;
    std::uint64_t paths_failed = 0;
    double wall_time = 0.0;     // seconds
    bool failure_warning = false; // failed fraction above 10%
};

struct SolveResult {
    std::vector<Solution> solutions;
    TrackStats stats;
};

// Tracks all product-of-degrees paths of the total-degree homotopy
// H(x,t) = gamma * t * G(x) + (1-t) * F(x), G_i = x_i^{d_i} - 1, from t=1
// to t=0, then refines, deduplicates, classifies and canonically orders the
// finite solutions. Deterministic for fixed system and options, independent
// of the worker count.
SolveResult solve_total_degree(const PolySystem& sys, const SolverOptions& opts = {});

// Same pipeline driven by a multihomogeneous start system: variables are
// partitioned into groups, each equation gets a product of generic linear
// forms matching its per-group degrees, and one path starts at every
// solution of that product system. The path count is the multihomogeneous
// Bezout number of the partition -- often far below the total degree for
// layered systems. groups must partition {0, ..., nvars-1}.
SolveResult solve_multihomogeneous(const PolySystem& sys,
                                   const std::vector<std::vector<std::size_t>>& groups,
                                   const SolverOptions& opts = {});

// Path count of the multihomogeneous homotopy for this partition (the
// permanent-style expansion of the per-group degree matrix), saturating at
// cap.
std::uint64_t multihomogeneous_path_count(const PolySystem& sys,
                                          const std::vector<std::vector<std::size_t>>& groups,
                                          std::uint64_t cap = 1ull << 62);

// Newton polish against the exact system; stops at residual below
// 1e-12 * (1 + |x|), at max_iters, or when progress stalls at the round-off
// floor. A numerically singular Jacobian yields condition_estimate = +inf.
Solution refine(const PolySystem& sys, const std::vector<Complex>& point, int max_iters = 30);
Solution refine(const CompiledSystem& cs, const std::vector<Complex>& point, int max_iters = 30);

// Clusters points closer than tol * (1 + |x|) in max norm; keeps the
// lowest-residual representative per cluster. Order-independent.
std::vector<Solution> dedupe(std::vector<Solution> solutions, double tol);

// Fills zero_mask (|x_j| < zero_tol * (1 + |x|)), is_toric and is_real.
void classify(Solution& s, double zero_tol, double real_tol);

// Effective worker count: explicit request, else DLNN_THREADS, else hardware.
int effective_thread_count(int requested);

// JSON-lines round trip for solution sets.
std::string solution_to_json(const Solution& s);
void write_solutions_jsonl(const std::vector<Solution>& sols, std::ostream& out);
std::vector<Solution> read_solutions_jsonl(std::istream& in);

} // namespace dlnn
