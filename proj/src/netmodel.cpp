#include "dlnn/netmodel.hpp"

#include <sstream>
#include <stdexcept>

#include "dlnn/rng.hpp"

namespace dlnn {

Matrix Matrix::transpose() const {
    Matrix t(cols, rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) t.at(c, r) = at(r, c);
    return t;
}

Matrix Matrix::product(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matrix shape mismatch");
    Matrix p(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            double v = a.at(i, k);
            if (v == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) p.at(i, j) += v * b.at(k, j);
        }
    return p;
}

void Architecture::validate() const {
    if (hidden_layers < 1) throw std::invalid_argument("need at least one hidden layer");
    if (static_cast<int>(hidden.size()) != hidden_layers)
        throw std::invalid_argument("hidden width list does not match layer count");
    if (sample_count < 1) throw std::invalid_argument("sample count must be positive");
    if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("dimensions must be positive");
    for (int d : hidden)
        if (d < 1) throw std::invalid_argument("hidden widths must be positive");
}

std::vector<int> Architecture::dims() const {
    std::vector<int> d;
    d.reserve(hidden_layers + 2);
    d.push_back(input_dim);
    for (int h : hidden) d.push_back(h);
    d.push_back(output_dim);
    return d;
}

int Architecture::layer_rows(int layer) const {
    if (layer < 1 || layer > layer_count()) throw std::invalid_argument("layer out of range");
    return dims()[layer];
}

int Architecture::layer_cols(int layer) const {
    if (layer < 1 || layer > layer_count()) throw std::invalid_argument("layer out of range");
    return dims()[layer - 1];
}

int Architecture::weight_count() const {
    auto d = dims();
    int n = 0;
    for (std::size_t i = 1; i < d.size(); ++i) n += d[i] * d[i - 1];
    return n;
}

Architecture Architecture::parse(const std::string& text) {
    Architecture a;
    a.hidden.clear();
    bool have_h = false, have_m = false, have_dx = false, have_dy = false, have_d = false;
    std::istringstream is(text);
    std::string field;
    while (std::getline(is, field, ',')) {
        auto eq = field.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("bad architecture field: " + field);
        std::string key = field.substr(0, eq);
        std::string val = field.substr(eq + 1);
        if (key == "H") {
            a.hidden_layers = std::stoi(val);
            have_h = true;
        } else if (key == "m") {
            a.sample_count = std::stoi(val);
            have_m = true;
        } else if (key == "dx") {
            a.input_dim = std::stoi(val);
            have_dx = true;
        } else if (key == "dy") {
            a.output_dim = std::stoi(val);
            have_dy = true;
        } else if (key == "d") {
            std::istringstream vs(val);
            std::string part;
            while (std::getline(vs, part, ':')) a.hidden.push_back(std::stoi(part));
            have_d = true;
        } else {
            throw std::invalid_argument("unknown architecture field: " + key);
        }
    }
    if (!have_h || !have_m || !have_dx || !have_dy || !have_d)
        throw std::invalid_argument("architecture string must set H, m, dx, dy, d");
    if (a.hidden.size() == 1 && a.hidden_layers > 1)
        a.hidden.assign(a.hidden_layers, a.hidden[0]);
    a.validate();
    return a;
}

std::string Architecture::to_string() const {
    std::ostringstream os;
    os << "H=" << hidden_layers << ",m=" << sample_count << ",dx=" << input_dim
       << ",dy=" << output_dim << ",d=";
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        if (i) os << ':';
        os << hidden[i];
    }
    return os.str();
}

int flat_index(const Architecture& arch, int layer, int row, int col) {
    auto d = arch.dims();
    if (layer < 1 || layer > arch.layer_count()) throw std::invalid_argument("layer out of range");
    int rows = d[layer], cols = d[layer - 1];
    if (row < 0 || row >= rows || col < 0 || col >= cols)
        throw std::invalid_argument("weight position out of range");
    int off = 0;
    for (int l = 1; l < layer; ++l) off += d[l] * d[l - 1];
    return off + row * cols + col;
}

WeightIndex unflatten(const Architecture& arch, int flat) {
    auto d = arch.dims();
    if (flat < 0) throw std::invalid_argument("flat index out of range");
    int off = 0;
    for (int l = 1; l <= arch.layer_count(); ++l) {
        int sz = d[l] * d[l - 1];
        if (flat < off + sz) {
            int local = flat - off;
            return WeightIndex{l, local / d[l - 1], local % d[l - 1], flat};
        }
        off += sz;
    }
    throw std::invalid_argument("flat index out of range");
}

std::vector<std::string> weight_variable_names(const Architecture& arch) {
    std::vector<std::string> names;
    names.reserve(arch.weight_count());
    auto d = arch.dims();
    for (int l = 1; l <= arch.layer_count(); ++l)
        for (int r = 0; r < d[l]; ++r)
            for (int c = 0; c < d[l - 1]; ++c)
                names.push_back("w" + std::to_string(l) + "_" + std::to_string(r + 1) + "_" +
                                std::to_string(c + 1));
    return names;
}

TrainingInstance sample_instance(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(seed);
    TrainingInstance inst;
    inst.seed = seed;
    inst.x = Matrix(arch.input_dim, arch.sample_count);
    for (auto& v : inst.x.data) v = rng.normal();
    inst.y = Matrix(arch.output_dim, arch.sample_count);
    for (auto& v : inst.y.data) v = rng.normal();
    auto d = arch.dims();
    for (int l = 1; l <= arch.layer_count(); ++l) {
        Matrix lam(d[l], d[l - 1]);
        for (auto& v : lam.data) v = rng.positive_uniform(1e-6);
        inst.lambdas.push_back(std::move(lam));
    }
    return inst;
}

double loss_value(const Architecture& arch, const TrainingInstance& inst,
                  const std::vector<Matrix>& weights) {
    if (static_cast<int>(weights.size()) != arch.layer_count())
        throw std::invalid_argument("need one weight matrix per layer");
    auto d = arch.dims();
    for (int l = 1; l <= arch.layer_count(); ++l)
        if (static_cast<int>(weights[l - 1].rows) != d[l] ||
            static_cast<int>(weights[l - 1].cols) != d[l - 1])
            throw std::invalid_argument("weight matrix shape mismatch");
    Matrix w = weights[0];
    for (int l = 2; l <= arch.layer_count(); ++l) w = Matrix::product(weights[l - 1], w);
    Matrix pred = Matrix::product(w, inst.x);
    double fit = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        double r = pred.data[i] - inst.y.data[i];
        fit += r * r;
    }
    // The regularizer matching the gradient equations' linear term
    // Lambda .* W is the weighted Tikhonov form below.
    double reg = 0.0;
    for (int l = 1; l <= arch.layer_count(); ++l)
        for (std::size_t i = 0; i < weights[l - 1].data.size(); ++i) {
            double v = weights[l - 1].data[i];
            reg += inst.lambdas[l - 1].data[i] * v * v;
        }
    return 0.5 * fit + 0.5 * reg;
}

namespace {

using PolyMatrix = std::vector<std::vector<Polynomial>>;

PolyMatrix poly_identity(std::size_t n, std::size_t nvars) {
    PolyMatrix m(n, std::vector<Polynomial>(n, Polynomial(nvars)));
    for (std::size_t i = 0; i < n; ++i) m[i][i] = Polynomial::constant(nvars, 1.0);
    return m;
}

PolyMatrix poly_product(const PolyMatrix& a, const PolyMatrix& b) {
    std::size_t n = a.size(), k = b.size(), p = b[0].size();
    PolyMatrix r(n, std::vector<Polynomial>(p, Polynomial(a[0][0].nvars())));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < k; ++t) {
            if (a[i][t].is_zero()) continue;
            for (std::size_t j = 0; j < p; ++j) {
                if (b[t][j].is_zero()) continue;
                r[i][j] += a[i][t] * b[t][j];
            }
        }
    return r;
}

PolyMatrix poly_from_real(const Matrix& m, std::size_t nvars) {
    PolyMatrix r(m.rows, std::vector<Polynomial>(m.cols, Polynomial(nvars)));
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j)
            r[i][j] = Polynomial::constant(nvars, m.at(i, j));
    return r;
}

PolyMatrix poly_transpose(const PolyMatrix& m) {
    std::size_t rows = m.size(), cols = m[0].size();
    PolyMatrix t(cols, std::vector<Polynomial>(rows, Polynomial(m[0][0].nvars())));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) t[j][i] = m[i][j];
    return t;
}

} // namespace

PolySystem build_gradient_system(const Architecture& arch, const TrainingInstance& inst) {
    arch.validate();
    auto d = arch.dims();
    std::size_t nvars = arch.weight_count();
    int layers = arch.layer_count();

    // Symbolic weight matrices.
    std::vector<PolyMatrix> w(layers);
    for (int l = 1; l <= layers; ++l) {
        w[l - 1].assign(d[l], std::vector<Polynomial>(d[l - 1], Polynomial(nvars)));
        for (int r = 0; r < d[l]; ++r)
            for (int c = 0; c < d[l - 1]; ++c)
                w[l - 1][r][c] = Polynomial::variable(nvars, flat_index(arch, l, r, c));
    }

    // Data Gram matrices.
    Matrix xxt = Matrix::product(inst.x, inst.x.transpose());
    Matrix yxt = Matrix::product(inst.y, inst.x.transpose());
    PolyMatrix xxt_p = poly_from_real(xxt, nvars);
    PolyMatrix yxt_p = poly_from_real(yxt, nvars);

    // Full product W = W_{H+1} ... W_1 and the residual map E = W XX^T - YX^T.
    PolyMatrix full = w[0];
    for (int l = 2; l <= layers; ++l) full = poly_product(w[l - 1], full);
    PolyMatrix e = poly_product(full, xxt_p);
    for (std::size_t i = 0; i < e.size(); ++i)
        for (std::size_t j = 0; j < e[i].size(); ++j) e[i][j] -= yxt_p[i][j];

    PolySystem sys;
    sys.nvars = nvars;
    sys.var_names = weight_variable_names(arch);
    sys.polys.resize(nvars, Polynomial(nvars));

    // Gradient w.r.t. W_i: U^T E V^T + Lambda_i .* W_i with
    // U = W_{H+1}...W_{i+1} and V = W_{i-1}...W_1.
    for (int l = 1; l <= layers; ++l) {
        PolyMatrix u = poly_identity(d[layers], nvars);
        for (int k = layers; k > l; --k) u = poly_product(u, w[k - 1]);
        PolyMatrix v = poly_identity(d[l - 1], nvars);
        for (int k = l - 1; k >= 1; --k) v = poly_product(v, w[k - 1]);
        PolyMatrix g = poly_product(poly_transpose(u), poly_product(e, poly_transpose(v)));
        for (int r = 0; r < d[l]; ++r)
            for (int c = 0; c < d[l - 1]; ++c) {
                Polynomial eq = g[r][c];
                eq += w[l - 1][r][c] * Complex(inst.lambdas[l - 1].at(r, c), 0.0);
                sys.polys[flat_index(arch, l, r, c)] = std::move(eq);
            }
    }
    return sys;
}

bool compare_supports(const Architecture& arch, int m1, int m2, std::uint64_t seed) {
    Architecture a1 = arch, a2 = arch;
    a1.sample_count = m1;
    a2.sample_count = m2;
    PolySystem s1 = build_gradient_system(a1, sample_instance(a1, seed));
    PolySystem s2 = build_gradient_system(a2, sample_instance(a2, seed + 1));
    if (s1.polys.size() != s2.polys.size()) return false;
    for (std::size_t i = 0; i < s1.polys.size(); ++i)
        if (s1.polys[i].support() != s2.polys[i].support()) return false;
    return true;
}

} // namespace dlnn
