#pragma once

#include <cstdint>
#include <vector>

#include <gmpxx.h>

#include "dlnn/mixed_volume.hpp"
#include "dlnn/netmodel.hpp"
#include "dlnn/polynomial.hpp"

namespace dlnn {

// Product of the equation degrees; for a gradient system this is (2H+1)^N.
mpz_class bezout_bound(const std::vector<int>& degrees);
mpz_class bezout_bound(const Architecture& arch);

struct BkkBounds {
    mpz_class torus;  // bound on solutions with all coordinates nonzero
    mpz_class affine; // bound on all isolated solutions in C^N
};

// Torus bound = mixed volume of the equation supports; affine bound = the
// same after adjoining the origin to every support.
BkkBounds bkk_bounds(const PolySystem& sys, const MixedVolumeOptions& opts = {});

struct ClosedFormBounds {
    mpz_class torus;  // (4p)^d
    mpz_class affine; // (1+4p)^d
};

// Closed-form bounds for one hidden layer and one data point, d neurons and
// p outputs. Derived from the reduced system below.
ClosedFormBounds closed_form_bounds_h1m1(int d, int p);

// Elimination of the second-layer weights for H=1, m=1 turns the gradient
// system into d equations in the first column of W_1 (one variable per
// neuron), each of degree 4p with Newton polytope (4p) times the standard
// simplex. mu holds small per-equation regularization constants; pass zeros
// for the raw eliminated system with its positive-dimensional junk
// components at 1 + T_k = 0.
PolySystem build_reduced_system(const Architecture& arch, const TrainingInstance& inst,
                                const std::vector<double>& mu);

// Regularization constants for the reduced system: uniform(0,1) * 1e-3.
std::vector<double> sample_mu(std::size_t d, std::uint64_t seed);

// Reconstructs the full weight vector from a toric solution of the reduced
// system. Throws if the point hits a junk component (some 1 + T_k = 0) or a
// zero coordinate.
std::vector<Complex> lift_reduced_solution(const Architecture& arch,
                                           const TrainingInstance& inst,
                                           const std::vector<Complex>& reduced_point);

struct BoundsReport {
    Architecture arch;
    int n = 0;
    mpz_class cbb;
    bool bkk_computed = false;
    mpz_class bkk_torus;
    mpz_class bkk_affine;
    bool has_closed_form = false;
    mpz_class b_cstar;
    mpz_class b_c;
};

// All bounds for one architecture at generic data. BKK is skipped (with
// bkk_computed = false) when N exceeds the mixed-volume dimension cap.
BoundsReport compute_bounds_report(const Architecture& arch, std::uint64_t seed,
                                   const MixedVolumeOptions& opts = {});

} // namespace dlnn
