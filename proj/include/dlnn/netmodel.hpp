#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlnn/polynomial.hpp"

namespace dlnn {

// Dense real matrix, row-major. Just enough linear algebra for building
// training instances and evaluating losses; nothing here is performance
// critical.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    Matrix transpose() const;
    static Matrix product(const Matrix& a, const Matrix& b);
};

// Shape of a linear network: layer widths and training set size.
// Layer matrices W_1 .. W_{H+1} have W_i of shape dims[i] x dims[i-1],
// where dims = [input_dim, hidden..., output_dim].
struct Architecture {
    int hidden_layers = 1;        // H
    int sample_count = 1;         // m
    int input_dim = 1;            // d_x
    int output_dim = 1;           // d_y
    std::vector<int> hidden;      // d_1 .. d_H

    void validate() const;

    // [d_x, d_1, ..., d_H, d_y]; size hidden_layers + 2.
    std::vector<int> dims() const;

    int layer_count() const { return hidden_layers + 1; }
    // Shape of W_i for i in 1..H+1.
    int layer_rows(int layer) const;
    int layer_cols(int layer) const;

    // Total number of weight variables.
    int weight_count() const;

    // "H=1,m=2,dx=3,dy=2,d=1"; hidden widths joined by ':'. In parsing, a
    // single width is broadcast to all hidden layers.
    static Architecture parse(const std::string& text);
    std::string to_string() const;

    bool operator==(const Architecture& o) const = default;
};

// Position of one weight variable; layer is 1-based, row/col 0-based,
// flat is the index into the system's variable vector (layers in order,
// row-major inside a layer).
struct WeightIndex {
    int layer = 1;
    int row = 0;
    int col = 0;
    int flat = 0;
};

int flat_index(const Architecture& arch, int layer, int row, int col);
WeightIndex unflatten(const Architecture& arch, int flat);
std::vector<std::string> weight_variable_names(const Architecture& arch);

// One training problem: data X (d_x x m), targets Y (d_y x m) and per-layer
// positive regularization weights Lambda_i (shaped like W_i).
struct TrainingInstance {
    Matrix x;
    Matrix y;
    std::vector<Matrix> lambdas;
    std::uint64_t seed = 0;
};

// Deterministic sampling: X then Y entrywise standard normal (row-major),
// then each Lambda_i entrywise uniform on (0,1) redrawn while below 1e-6,
// all from one generator seeded with `seed`.
TrainingInstance sample_instance(const Architecture& arch, std::uint64_t seed);

// Regularized squared loss at real weight matrices.
double loss_value(const Architecture& arch, const TrainingInstance& inst,
                  const std::vector<Matrix>& weights);

// The gradient of the regularized loss as a square polynomial system: one
// equation per weight variable, equations ordered like the variables.
PolySystem build_gradient_system(const Architecture& arch, const TrainingInstance& inst);

// True if the equation supports of the gradient system are identical for
// sample counts m1 and m2 (same architecture otherwise, generic data).
bool compare_supports(const Architecture& arch, int m1, int m2, std::uint64_t seed);

} // namespace dlnn
