#include "dlnn/tracker.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <iterator>
#include <limits>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "dlnn/rng.hpp"

namespace dlnn {

namespace {

constexpr double kPi2 = 6.283185307179586476925286766559;

double max_modulus(const double* re, const double* im, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        m = std::max(m, std::sqrt(re[i] * re[i] + im[i] * im[i]));
    return m;
}

// In-place complex LU with partial pivoting on split real/imaginary planes.
struct LinearSolver {
    int n = 0;
    std::vector<double> re, im;
    std::vector<int> piv;

    void init(int n_) {
        n = n_;
        re.resize(n * n);
        im.resize(n * n);
        piv.resize(n);
    }

    // Copies the matrix and factors it; false on (near-)singularity.
    bool factor(const double* jre, const double* jim) {
        std::copy(jre, jre + n * n, re.begin());
        std::copy(jim, jim + n * n, im.begin());
        for (int k = 0; k < n; ++k) {
            int p = k;
            double best = re[k * n + k] * re[k * n + k] + im[k * n + k] * im[k * n + k];
            for (int i = k + 1; i < n; ++i) {
                double v = re[i * n + k] * re[i * n + k] + im[i * n + k] * im[i * n + k];
                if (v > best) {
                    best = v;
                    p = i;
                }
            }
            if (!(best > 1e-280)) return false;
            piv[k] = p;
            if (p != k) {
                for (int j = 0; j < n; ++j) {
                    std::swap(re[k * n + j], re[p * n + j]);
                    std::swap(im[k * n + j], im[p * n + j]);
                }
            }
            double dr = re[k * n + k], di = im[k * n + k];
            double inv = 1.0 / (dr * dr + di * di);
            for (int i = k + 1; i < n; ++i) {
                double ar = re[i * n + k], ai = im[i * n + k];
                double mr = (ar * dr + ai * di) * inv;
                double mi = (ai * dr - ar * di) * inv;
                re[i * n + k] = mr;
                im[i * n + k] = mi;
                for (int j = k + 1; j < n; ++j) {
                    double br = re[k * n + j], bi = im[k * n + j];
                    re[i * n + j] -= mr * br - mi * bi;
                    im[i * n + j] -= mr * bi + mi * br;
                }
            }
        }
        return true;
    }

    // Solves in place using the stored factorization.
    void solve(double* br, double* bi) const {
        for (int k = 0; k < n; ++k) {
            if (piv[k] != k) {
                std::swap(br[k], br[piv[k]]);
                std::swap(bi[k], bi[piv[k]]);
            }
            for (int i = k + 1; i < n; ++i) {
                double mr = re[i * n + k], mi = im[i * n + k];
                br[i] -= mr * br[k] - mi * bi[k];
                bi[i] -= mr * bi[k] + mi * br[k];
            }
        }
        for (int k = n - 1; k >= 0; --k) {
            for (int j = k + 1; j < n; ++j) {
                double ur = re[k * n + j], ui = im[k * n + j];
                br[k] -= ur * br[j] - ui * bi[j];
                bi[k] -= ur * bi[j] + ui * br[j];
            }
            double dr = re[k * n + k], di = im[k * n + k];
            double inv = 1.0 / (dr * dr + di * di);
            double xr = (br[k] * dr + bi[k] * di) * inv;
            double xi = (bi[k] * dr - br[k] * di) * inv;
            br[k] = xr;
            bi[k] = xi;
        }
    }
};

enum class PathStatus { Converged, Diverged, Failed };

struct PathEndpoint {
    std::uint64_t index = 0;
    std::vector<Complex> point;
    double residual = 0.0;
    int iters = 0;
};

// A start system G with one regular zero per path. Implementations must be
// safe for concurrent const use.
class StartProvider {
public:
    virtual ~StartProvider() = default;
    virtual std::uint64_t path_count() const = 0;
    // The affine start system, one row per equation, same variables as the
    // target.
    virtual const PolySystem& system() const = 0;
    // Affine coordinates of the start point for one path.
    virtual void start_point(std::uint64_t index, double* xre, double* xim) const = 0;
};

// G_i = x_i^{d_i} - 1 with the roots-of-unity grid as start points.
class TotalDegreeStart : public StartProvider {
public:
    TotalDegreeStart(const std::vector<int>& degrees, std::uint64_t count)
        : deg_(degrees), count_(count) {
        const std::size_t n = deg_.size();
        g_.nvars = n;
        for (std::size_t i = 0; i < n; ++i) g_.var_names.push_back("x" + std::to_string(i));
        for (std::size_t i = 0; i < n; ++i) {
            Polynomial p(n);
            std::vector<int> e(n, 0);
            e[i] = deg_[i];
            p.add_term(Monomial(std::move(e)), Complex(1.0, 0.0));
            p.add_term(Monomial(std::vector<int>(n, 0)), Complex(-1.0, 0.0));
            g_.polys.push_back(std::move(p));
        }
    }

    std::uint64_t path_count() const override { return count_; }
    const PolySystem& system() const override { return g_; }

    void start_point(std::uint64_t index, double* xre, double* xim) const override {
        for (std::size_t i = 0; i < deg_.size(); ++i) {
            std::uint64_t k = index % static_cast<std::uint64_t>(deg_[i]);
            index /= static_cast<std::uint64_t>(deg_[i]);
            double ang = kPi2 * static_cast<double>(k) / static_cast<double>(deg_[i]);
            xre[i] = std::cos(ang);
            xim[i] = std::sin(ang);
        }
    }

private:
    std::vector<int> deg_;
    std::uint64_t count_;
    PolySystem g_;
};

// Per-group degrees of each equation: entry (i,g) is the largest total
// exponent equation i carries on the variables of group g.
std::vector<std::vector<int>> group_degree_matrix(
    const PolySystem& sys, const std::vector<std::vector<std::size_t>>& groups) {
    std::vector<std::vector<int>> md(sys.polys.size(), std::vector<int>(groups.size(), 0));
    for (std::size_t i = 0; i < sys.polys.size(); ++i)
        for (const auto& [mono, coeff] : sys.polys[i].terms()) {
            (void)coeff;
            for (std::size_t g = 0; g < groups.size(); ++g) {
                int d = 0;
                for (std::size_t j : groups[g]) d += mono.exponents[j];
                md[i][g] = std::max(md[i][g], d);
            }
        }
    return md;
}

void validate_partition(std::size_t nvars, const std::vector<std::vector<std::size_t>>& groups) {
    std::vector<int> seen(nvars, 0);
    for (const auto& g : groups) {
        if (g.empty()) throw std::invalid_argument("empty variable group");
        for (std::size_t j : g) {
            if (j >= nvars) throw std::invalid_argument("group variable out of range");
            if (seen[j]++) throw std::invalid_argument("variable in more than one group");
        }
    }
    for (int s : seen)
        if (!s) throw std::invalid_argument("groups must cover every variable");
}

// Walks all ways of assigning one group to each equation so that group g is
// chosen exactly |g| times, weighting each assignment by the product of the
// equations' degrees in their chosen groups. Calls leaf(assignment) for each
// assignment with nonzero weight if leaf is given; returns the total weight
// (the multihomogeneous Bezout number), saturating at cap.
template <typename Leaf>
std::uint64_t enumerate_assignments(const std::vector<std::vector<int>>& md,
                                    const std::vector<std::size_t>& quota_init,
                                    std::uint64_t cap, Leaf&& leaf) {
    const std::size_t n = md.size(), ng = quota_init.size();
    std::vector<std::size_t> quota = quota_init;
    std::vector<std::size_t> choice(n, 0);
    std::uint64_t total = 0;
    // Explicit stack recursion over equations.
    std::size_t i = 0;
    std::vector<std::size_t> g_at(n, 0);
    for (;;) {
        if (i == n) {
            std::uint64_t w = 1;
            for (std::size_t k = 0; k < n; ++k)
                w *= static_cast<std::uint64_t>(md[k][g_at[k]]);
            if (w > 0) {
                if (total > cap - std::min<std::uint64_t>(w, cap)) total = cap;
                else total += w;
                leaf(g_at);
            }
            // backtrack
            for (;;) {
                if (i == 0) return total;
                --i;
                ++quota[g_at[i]];
                std::size_t g = g_at[i] + 1;
                while (g < ng && (quota[g] == 0 || md[i][g] == 0)) ++g;
                if (g < ng) {
                    g_at[i] = g;
                    --quota[g];
                    ++i;
                    break;
                }
            }
            continue;
        }
        std::size_t g = 0;
        while (g < ng && (quota[g] == 0 || md[i][g] == 0)) ++g;
        if (g < ng) {
            g_at[i] = g;
            --quota[g];
            ++i;
        } else {
            // dead end: backtrack
            for (;;) {
                if (i == 0) return total;
                --i;
                ++quota[g_at[i]];
                std::size_t g2 = g_at[i] + 1;
                while (g2 < ng && (quota[g2] == 0 || md[i][g2] == 0)) ++g2;
                if (g2 < ng) {
                    g_at[i] = g2;
                    --quota[g2];
                    ++i;
                    break;
                }
            }
        }
    }
}

// Start system for a variable-group partition: equation i becomes a product
// of generic linear forms, one factor per unit of its degree in each group,
// each factor supported on that group's variables plus a constant. Its zeros
// are found by solving small per-group linear systems, one per way of
// distributing the equations over the groups.
class MultiHomStart : public StartProvider {
public:
    MultiHomStart(const PolySystem& sys, const std::vector<std::vector<std::size_t>>& groups,
                  Rng& rng, std::uint64_t max_paths)
        : groups_(groups) {
        const std::size_t n = sys.nvars, ng = groups.size();
        md_ = group_degree_matrix(sys, groups);

        // factors_[i][g][k]: coefficients aligned with groups_[g], last entry
        // is the constant term.
        factors_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            factors_[i].resize(ng);
            for (std::size_t g = 0; g < ng; ++g)
                for (int k = 0; k < md_[i][g]; ++k) {
                    std::vector<Complex> c(groups[g].size() + 1);
                    for (auto& cc : c) {
                        double mod = 0.5 + rng.uniform01();
                        double ph = kPi2 * rng.uniform01();
                        cc = Complex(mod * std::cos(ph), mod * std::sin(ph));
                    }
                    factors_[i][g].push_back(std::move(c));
                }
        }

        g_.nvars = n;
        g_.var_names = sys.var_names;
        for (std::size_t i = 0; i < n; ++i) {
            Polynomial p(n);
            p.add_term(Monomial(std::vector<int>(n, 0)), Complex(1.0, 0.0));
            for (std::size_t g = 0; g < ng; ++g)
                for (const auto& c : factors_[i][g]) {
                    Polynomial lin(n);
                    for (std::size_t a = 0; a < groups[g].size(); ++a) {
                        std::vector<int> e(n, 0);
                        e[groups[g][a]] = 1;
                        lin.add_term(Monomial(std::move(e)), c[a]);
                    }
                    lin.add_term(Monomial(std::vector<int>(n, 0)), c.back());
                    p = p * lin;
                }
            g_.polys.push_back(std::move(p));
        }

        // One start point per assignment and per choice of factor indices.
        std::vector<std::size_t> quota(ng);
        for (std::size_t g = 0; g < ng; ++g) quota[g] = groups[g].size();
        std::vector<std::vector<std::size_t>> assignments;
        std::uint64_t count = enumerate_assignments(
            md_, quota, max_paths + 1,
            [&](const std::vector<std::size_t>& g_at) { assignments.push_back(g_at); });
        if (count > max_paths)
            throw std::invalid_argument("multihomogeneous path count exceeds max_paths");

        LinearSolver lin;
        std::vector<double> br, bi;
        std::vector<int> kidx(n, 0);
        points_re_.reserve(count * n);
        points_im_.reserve(count * n);
        for (const auto& g_at : assignments) {
            // Iterate the mixed-radix factor choices for this assignment.
            std::fill(kidx.begin(), kidx.end(), 0);
            for (;;) {
                std::vector<double> xre(n, 0.0), xim(n, 0.0);
                for (std::size_t g = 0; g < ng; ++g) {
                    const std::size_t q = groups[g].size();
                    lin.init(static_cast<int>(q));
                    std::vector<double> are(q * q), aim(q * q);
                    br.assign(q, 0.0);
                    bi.assign(q, 0.0);
                    std::size_t row = 0;
                    for (std::size_t i = 0; i < n; ++i) {
                        if (g_at[i] != g) continue;
                        const auto& c = factors_[i][g][kidx[i]];
                        for (std::size_t a = 0; a < q; ++a) {
                            are[row * q + a] = c[a].real();
                            aim[row * q + a] = c[a].imag();
                        }
                        br[row] = -c.back().real();
                        bi[row] = -c.back().imag();
                        ++row;
                    }
                    if (!lin.factor(are.data(), aim.data()))
                        throw std::runtime_error("degenerate multihomogeneous start block");
                    lin.solve(br.data(), bi.data());
                    for (std::size_t a = 0; a < q; ++a) {
                        xre[groups[g][a]] = br[a];
                        xim[groups[g][a]] = bi[a];
                    }
                }
                points_re_.insert(points_re_.end(), xre.begin(), xre.end());
                points_im_.insert(points_im_.end(), xim.begin(), xim.end());
                // next factor-index combination
                std::size_t i = 0;
                while (i < n) {
                    if (++kidx[i] < static_cast<int>(factors_[i][g_at[i]].size())) break;
                    kidx[i] = 0;
                    ++i;
                }
                if (i == n) break;
            }
        }
        nvars_ = n;
    }

    std::uint64_t path_count() const override { return points_re_.size() / nvars_; }
    const PolySystem& system() const override { return g_; }

    void start_point(std::uint64_t index, double* xre, double* xim) const override {
        const double* pr = points_re_.data() + index * nvars_;
        const double* pi = points_im_.data() + index * nvars_;
        std::copy(pr, pr + nvars_, xre);
        std::copy(pi, pi + nvars_, xim);
    }

private:
    std::vector<std::vector<std::size_t>> groups_;
    std::vector<std::vector<int>> md_;
    std::vector<std::vector<std::vector<std::vector<Complex>>>> factors_;
    PolySystem g_;
    std::size_t nvars_ = 0;
    std::vector<double> points_re_, points_im_;
};

// Homogenizes row i of sys to total degree target[i] with an extra last
// variable, then appends the affine patch row a.z - 1 = 0, giving a square
// system in n+1 variables. The patch row is a placeholder: the tracker
// recomputes it from live coefficients so retries can perturb the patch
// without recompiling.
PolySystem homogenize_with_patch(const PolySystem& sys, const std::vector<int>& target,
                                 const std::vector<Complex>& patch) {
    const std::size_t n = sys.nvars;
    PolySystem out;
    out.nvars = n + 1;
    out.var_names = sys.var_names;
    out.var_names.push_back("_z0");
    out.polys.reserve(n + 1);
    for (std::size_t i = 0; i < sys.polys.size(); ++i) {
        Polynomial p(n + 1);
        for (const auto& [mono, coeff] : sys.polys[i].terms()) {
            if (mono.degree() > target[i])
                throw std::invalid_argument("homogenization target below row degree");
            std::vector<int> e = mono.exponents;
            e.push_back(target[i] - mono.degree());
            p.add_term(Monomial(std::move(e)), coeff);
        }
        out.polys.push_back(std::move(p));
    }
    Polynomial cut(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
        std::vector<int> e(n + 1, 0);
        e[j] = 1;
        cut.add_term(Monomial(std::move(e)), patch[j]);
    }
    cut.add_term(Monomial(std::vector<int>(n + 1, 0)), Complex(-1.0, 0.0));
    out.polys.push_back(std::move(cut));
    return out;
}

// One worker's tracking machinery. The homotopy is
//   H(x, t) = gamma t G(x) + (1 - t) F(x)
// tracked in tau = -log t with an RK4 predictor and a Newton corrector, in
// plain affine coordinates, down to |t| = endgame_radius. There the homotopy
// switches to projective coordinates on a generic affine patch a.z = 1
// (target and start system homogenized with an extra coordinate z0) and a
// Cauchy loop around the circle t = r e^{i theta} recovers the t -> 0 limit
// as the loop average: the limit is read off even when the affine path
// diverges or the endpoint is singular, without tracking into the
// ill-conditioned region near t = 0. The average is re-checked on
// geometrically shrinking circles, with the legs between them tracked
// affinely again. Finite limits are polished against the affine target;
// limits with z0 = 0 are divergent paths.
class PathTracker {
public:
    PathTracker(const CompiledSystem& affine, const CompiledSystem& gaffine,
                const CompiledSystem& fhat, const CompiledSystem& ghat,
                std::vector<Complex> patch, const SolverOptions& opts, Complex gamma,
                const StartProvider& start)
        : fa_(affine), ga_(gaffine), fp_(fhat), gp_(ghat), start_(start), opts_(opts),
          patch_(std::move(patch)), circle_patch_(patch_), gamma_(gamma),
          n_(static_cast<int>(affine.size())), m_(n_ + 1),
          wsa_(affine.make_workspace()), wsga_(gaffine.make_workspace()),
          wsf_(fhat.make_workspace()), wsg_(ghat.make_workspace()) {
        patch_base_ = patch_;
        lin_.init(m_);
        lina_.init(n_);
        const std::size_t mm = static_cast<std::size_t>(m_) * m_;
        fre_.resize(m_); fim_.resize(m_);
        gre_.resize(m_); gim_.resize(m_);
        hre_.resize(m_); him_.resize(m_);
        jre_.resize(mm); jim_.resize(mm);
        jgre_.resize(mm); jgim_.resize(mm);
        xre_.resize(m_); xim_.resize(m_);
        xsre_.resize(m_); xsim_.resize(m_);
        axre_.resize(n_); axim_.resize(n_);
        k1re_.resize(m_); k1im_.resize(m_);
        k2re_.resize(m_); k2im_.resize(m_);
        k3re_.resize(m_); k3im_.resize(m_);
        k4re_.resize(m_); k4im_.resize(m_);
        sumre_.resize(m_); sumim_.resize(m_);
        cstart_re_.resize(m_); cstart_im_.resize(m_);
        meanre_.resize(m_); meanim_.resize(m_);
        prevre_.resize(m_); previm_.resize(m_);
        candre_.resize(m_); candim_.resize(m_);
    }

    // Tracking failures concentrate on a measure-zero set of gamma values
    // (the path runs through or within working precision of a singular
    // point, or a branch point sits too close to the endgame circles).
    // Rotating gamma by a small angle moves those encounters away while
    // barely deforming the path, so the retried path still reaches the same
    // endpoint. Deterministic per path index.
    PathStatus track_with_retry(std::uint64_t index, PathEndpoint& out) {
        static constexpr double kRetryAngle[] = {0.0, 0.03, -0.03, 0.1, -0.1};
        // Branch points of the homotopy concentrate on specific |t| shells;
        // rescaling the whole circle ladder moves every circle off a shell
        // that the default radii happen to graze.
        static constexpr double kRetryRscale[] = {1.0, 0.8, 1.25, 0.65, 0.9};
        const Complex gbase = gamma_;
        PathStatus st = PathStatus::Failed;
        for (std::size_t a = 0; a < std::size(kRetryAngle); ++a) {
            const double ang = kRetryAngle[a];
            gamma_ = gbase * Complex(std::cos(ang), std::sin(ang));
            rscale_ = kRetryRscale[a];
            // The circle chart rotates along with gamma so a patch pole
            // sitting on an endgame circle moves on retry too.
            for (int j = 0; j < m_; ++j)
                circle_patch_[j] = patch_base_[j] *
                                   std::polar(1.0, 0.6 * ang * static_cast<double>(2 * j + 1) /
                                                       static_cast<double>(m_));
            st = track(index, out);
            if (st != PathStatus::Failed) break;
        }
        gamma_ = gbase;
        rscale_ = 1.0;
        return st;
    }

    PathStatus track(std::uint64_t index, PathEndpoint& out) {
        cur_index_ = index;
        steps_ = 0;
        start_.start_point(index, axre_.data(), axim_.data());
        Phase ph = forward(0.0, -std::log(opts_.endgame_radius * rscale_));
        PathStatus st;
        if (ph == Phase::Diverged) st = PathStatus::Diverged;
        else if (ph == Phase::Failed) st = PathStatus::Failed;
        else st = endgame(index, out);
#ifdef DLNN_TRACE
        std::fprintf(stderr, "path %llu %s steps=%d", (unsigned long long)index,
                     st == PathStatus::Converged
                         ? "CONV"
                         : (st == PathStatus::Diverged ? "DIV" : "ENDFAIL"),
                     steps_);
        if (st == PathStatus::Converged)
            std::fprintf(stderr, " x0=(%+.6f,%+.6f)", out.point[0].real(), out.point[0].imag());
        std::fprintf(stderr, "\n");
#endif
        return st;
    }

private:
    enum class Phase { Ok, Diverged, Failed };

    // Affine tracking of axre_/axim_ from tau to tau_stop (t real).
    Phase forward(double tau, double tau_stop) {
        double dtau = opts_.step_init;
        int streak = 0;
        int budget = 20000;
        while (tau < tau_stop) {
            if (--budget < 0) {
#ifdef DLNN_TRACE
                std::fprintf(stderr, "  fwd %llu budget tau=%.4f\n",
                             (unsigned long long)cur_index_, tau);
#endif
                return Phase::Failed;
            }
            double step = std::min(dtau, tau_stop - tau);
            double t1 = std::exp(-(tau + step));
            bool ok = predict_affine(tau, step) && correct_affine(t1);
            ++steps_;
            if (ok) {
                std::copy(xsre_.begin(), xsre_.begin() + n_, axre_.begin());
                std::copy(xsim_.begin(), xsim_.begin() + n_, axim_.begin());
                tau += step;
                const double xn = max_modulus(axre_.data(), axim_.data(), n_);
                if (!std::isfinite(xn)) return Phase::Failed;
                if (xn > opts_.divergence_norm) return Phase::Diverged;
                if (++streak >= 5) {
                    dtau = std::min(dtau * 2.0, opts_.step_max);
                    streak = 0;
                }
            } else {
                dtau *= 0.5;
                streak = 0;
                if (dtau < opts_.step_min) {
#ifdef DLNN_TRACE
                    std::fprintf(stderr, "  fwd %llu starve tau=%.4f\n",
                                 (unsigned long long)cur_index_, tau);
#endif
                    return Phase::Failed;
                }
            }
        }
        return Phase::Ok;
    }

    // dx/dtau for the affine homotopy: Hx dx = t (gamma G - F), evaluated at
    // the point p, solved with the n x n affine Jacobian.
    bool derivative_affine(const double* pre, const double* pim, double tau, double* kre,
                           double* kim) {
        const double t = std::exp(-tau);
        fa_.load_point(pre, pim, wsa_);
        ga_.load_point(pre, pim, wsga_);
        fa_.eval_values(wsa_, fre_.data(), fim_.data());
        ga_.eval_values(wsga_, gre_.data(), gim_.data());
        fa_.eval_jacobian(wsa_, jre_.data(), jim_.data());
        ga_.eval_jacobian(wsga_, jgre_.data(), jgim_.data());
        const double gtr = gamma_.real() * t, gti = gamma_.imag() * t;
        const double s = 1.0 - t;
        const std::size_t nn = static_cast<std::size_t>(n_) * n_;
        for (std::size_t ij = 0; ij < nn; ++ij) {
            const double gr = jgre_[ij], gi = jgim_[ij];
            const double orr = jre_[ij], oii = jim_[ij];
            jre_[ij] = s * orr + gtr * gr - gti * gi;
            jim_[ij] = s * oii + gtr * gi + gti * gr;
        }
        if (!lina_.factor(jre_.data(), jim_.data())) return false;
        for (int i = 0; i < n_; ++i) {
            kre[i] = t * (gamma_.real() * gre_[i] - gamma_.imag() * gim_[i] - fre_[i]);
            kim[i] = t * (gamma_.real() * gim_[i] + gamma_.imag() * gre_[i] - fim_[i]);
        }
        lina_.solve(kre, kim);
        for (int i = 0; i < n_; ++i)
            if (!std::isfinite(kre[i]) || !std::isfinite(kim[i])) return false;
        return true;
    }

    bool predict_affine(double tau, double dtau) {
        if (!derivative_affine(axre_.data(), axim_.data(), tau, k1re_.data(), k1im_.data()))
            return false;
        const double h2 = dtau * 0.5;
        for (int i = 0; i < n_; ++i) {
            xsre_[i] = axre_[i] + h2 * k1re_[i];
            xsim_[i] = axim_[i] + h2 * k1im_[i];
        }
        if (!derivative_affine(xsre_.data(), xsim_.data(), tau + h2, k2re_.data(), k2im_.data()))
            return false;
        for (int i = 0; i < n_; ++i) {
            xsre_[i] = axre_[i] + h2 * k2re_[i];
            xsim_[i] = axim_[i] + h2 * k2im_[i];
        }
        if (!derivative_affine(xsre_.data(), xsim_.data(), tau + h2, k3re_.data(), k3im_.data()))
            return false;
        for (int i = 0; i < n_; ++i) {
            xsre_[i] = axre_[i] + dtau * k3re_[i];
            xsim_[i] = axim_[i] + dtau * k3im_[i];
        }
        if (!derivative_affine(xsre_.data(), xsim_.data(), tau + dtau, k4re_.data(),
                               k4im_.data()))
            return false;
        const double h6 = dtau / 6.0;
        for (int i = 0; i < n_; ++i) {
            xsre_[i] = axre_[i] + h6 * (k1re_[i] + 2.0 * (k2re_[i] + k3re_[i]) + k4re_[i]);
            xsim_[i] = axim_[i] + h6 * (k1im_[i] + 2.0 * (k2im_[i] + k3im_[i]) + k4im_[i]);
        }
        return true;
    }

    bool correct_affine(double t) {
        double prev_dn = std::numeric_limits<double>::infinity();
        const double gtr = gamma_.real() * t, gti = gamma_.imag() * t;
        const double s = 1.0 - t;
        const std::size_t nn = static_cast<std::size_t>(n_) * n_;
        for (int iter = 0; iter < 3; ++iter) {
            fa_.load_point(xsre_.data(), xsim_.data(), wsa_);
            ga_.load_point(xsre_.data(), xsim_.data(), wsga_);
            fa_.eval_values(wsa_, fre_.data(), fim_.data());
            ga_.eval_values(wsga_, gre_.data(), gim_.data());
            fa_.eval_jacobian(wsa_, jre_.data(), jim_.data());
            ga_.eval_jacobian(wsga_, jgre_.data(), jgim_.data());
            for (std::size_t ij = 0; ij < nn; ++ij) {
                const double gr = jgre_[ij], gi = jgim_[ij];
                const double orr = jre_[ij], oii = jim_[ij];
                jre_[ij] = s * orr + gtr * gr - gti * gi;
                jim_[ij] = s * oii + gtr * gi + gti * gr;
            }
            if (!lina_.factor(jre_.data(), jim_.data())) return false;
            for (int i = 0; i < n_; ++i) {
                hre_[i] = s * fre_[i] + gtr * gre_[i] - gti * gim_[i];
                him_[i] = s * fim_[i] + gtr * gim_[i] + gti * gre_[i];
            }
            lina_.solve(hre_.data(), him_.data());
            double dn = 0.0, xn = 0.0;
            for (int i = 0; i < n_; ++i) {
                xsre_[i] -= hre_[i];
                xsim_[i] -= him_[i];
                dn = std::max(dn, std::sqrt(hre_[i] * hre_[i] + him_[i] * him_[i]));
                xn = std::max(xn, std::sqrt(xsre_[i] * xsre_[i] + xsim_[i] * xsim_[i]));
            }
            if (!std::isfinite(dn) || !std::isfinite(xn)) return false;
            if (xn > opts_.divergence_norm * 10.0) return false;
            if (dn <= opts_.corrector_tol * (1.0 + xn)) return true;
            if (iter >= 1 && dn >= 0.25 * prev_dn && dn <= 1.05 * prev_dn &&
                dn <= 1e-4 * (1.0 + xn))
                return true;
            prev_dn = dn;
        }
        return false;
    }

    // Assembles H (and optionally its z-Jacobian) at complex t for the point
    // currently loaded into both workspaces. Rows i < n combine the two
    // homogenized systems; row n is the patch, written from the live
    // coefficients.
    void assemble(double tr, double ti, bool with_jacobian) {
        fp_.eval_values(wsf_, fre_.data(), fim_.data());
        gp_.eval_values(wsg_, gre_.data(), gim_.data());
        const double gtr = gamma_.real() * tr - gamma_.imag() * ti;
        const double gti = gamma_.real() * ti + gamma_.imag() * tr;
        const double sr = 1.0 - tr, si = -ti;
        for (int i = 0; i < n_; ++i) {
            hre_[i] = gtr * gre_[i] - gti * gim_[i] + sr * fre_[i] - si * fim_[i];
            him_[i] = gtr * gim_[i] + gti * gre_[i] + sr * fim_[i] + si * fre_[i];
        }
        {
            const int stride = fp_.power_stride();
            double pr = -1.0, pi = 0.0;
            for (int j = 0; j < m_; ++j) {
                const double zr = wsf_.pow_re[j * stride + 1];
                const double zi = wsf_.pow_im[j * stride + 1];
                pr += patch_[j].real() * zr - patch_[j].imag() * zi;
                pi += patch_[j].real() * zi + patch_[j].imag() * zr;
            }
            hre_[n_] = pr;
            him_[n_] = pi;
        }
        if (!with_jacobian) return;
        fp_.eval_jacobian(wsf_, jre_.data(), jim_.data());
        gp_.eval_jacobian(wsg_, jgre_.data(), jgim_.data());
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < m_; ++j) {
                const std::size_t ij = static_cast<std::size_t>(i) * m_ + j;
                const double fr = jre_[ij], fi = jim_[ij];
                const double gr = jgre_[ij], gi = jgim_[ij];
                jre_[ij] = sr * fr - si * fi + gtr * gr - gti * gi;
                jim_[ij] = sr * fi + si * fr + gtr * gi + gti * gr;
            }
        for (int j = 0; j < m_; ++j) {
            jre_[static_cast<std::size_t>(n_) * m_ + j] = patch_[j].real();
            jim_[static_cast<std::size_t>(n_) * m_ + j] = patch_[j].imag();
        }
    }

    // dz/dparam = Hz^{-1} * (-(gamma Ghat - Fhat) * dt/dparam) on the
    // homogenized rows, 0 on the patch row, at the given complex t.
    bool derivative(const double* pre, const double* pim, double tr, double ti,
                    double wr, double wi, double* kre, double* kim) {
        fp_.load_point(pre, pim, wsf_);
        gp_.load_point(pre, pim, wsg_);
        assemble(tr, ti, true);
        if (!lin_.factor(jre_.data(), jim_.data())) return false;
        for (int i = 0; i < n_; ++i) {
            const double vr = gamma_.real() * gre_[i] - gamma_.imag() * gim_[i] - fre_[i];
            const double vi = gamma_.real() * gim_[i] + gamma_.imag() * gre_[i] - fim_[i];
            kre[i] = -(vr * wr - vi * wi);
            kim[i] = -(vr * wi + vi * wr);
        }
        kre[n_] = 0.0;
        kim[n_] = 0.0;
        lin_.solve(kre, kim);
        for (int i = 0; i < m_; ++i)
            if (!std::isfinite(kre[i]) || !std::isfinite(kim[i])) return false;
        return true;
    }

    bool derivative_theta(const double* pre, const double* pim, double theta, double radius,
                          double* kre, double* kim) {
        const double tr = radius * std::cos(theta), ti = radius * std::sin(theta);
        return derivative(pre, pim, tr, ti, -ti, tr, kre, kim); // dt/dtheta = i t
    }

    bool predict_theta(double theta, double dtheta, double radius) {
        if (!derivative_theta(xre_.data(), xim_.data(), theta, radius, k1re_.data(),
                              k1im_.data()))
            return false;
        const double h2 = dtheta * 0.5;
        for (int i = 0; i < m_; ++i) {
            xsre_[i] = xre_[i] + h2 * k1re_[i];
            xsim_[i] = xim_[i] + h2 * k1im_[i];
        }
        if (!derivative_theta(xsre_.data(), xsim_.data(), theta + h2, radius, k2re_.data(),
                              k2im_.data()))
            return false;
        for (int i = 0; i < m_; ++i) {
            xsre_[i] = xre_[i] + h2 * k2re_[i];
            xsim_[i] = xim_[i] + h2 * k2im_[i];
        }
        if (!derivative_theta(xsre_.data(), xsim_.data(), theta + h2, radius, k3re_.data(),
                              k3im_.data()))
            return false;
        for (int i = 0; i < m_; ++i) {
            xsre_[i] = xre_[i] + dtheta * k3re_[i];
            xsim_[i] = xim_[i] + dtheta * k3im_[i];
        }
        if (!derivative_theta(xsre_.data(), xsim_.data(), theta + dtheta, radius, k4re_.data(),
                              k4im_.data()))
            return false;
        const double h6 = dtheta / 6.0;
        for (int i = 0; i < m_; ++i) {
            xsre_[i] = xre_[i] + h6 * (k1re_[i] + 2.0 * (k2re_[i] + k3re_[i]) + k4re_[i]);
            xsim_[i] = xim_[i] + h6 * (k1im_[i] + 2.0 * (k2im_[i] + k3im_[i]) + k4im_[i]);
        }
        return true;
    }

    // Up to 3 Newton steps on H(., t) applied to the predicted point.
    // Success means the requested relative accuracy was reached, or Newton
    // stalled at a round-off floor that is still small relative to the
    // iterate. The floor case must be non-increasing: a growing correction
    // sequence is a basin escape near a singular transit and is rejected so
    // the step size shrinks instead. Circle tracking runs near singular
    // t = 0 limits where Newton slows down; the loop average only feeds the
    // classification test and the polish start point, so the endgame gets
    // looser tolerances than the forward phase instead of stalling.
    bool correct(double tr, double ti) {
        const double tol = opts_.corrector_tol * 10.0;
        double prev_dn = std::numeric_limits<double>::infinity();
#ifdef DLNN_TRACE
        static const long trace_path = [] {
            const char* e = std::getenv("DLNN_TRACE_PATH");
            return e ? std::atol(e) : -1L;
        }();
        const bool trace = trace_path >= 0 && static_cast<long>(cur_index_) == trace_path;
#endif
        // Newton converges only linearly near the high-multiplicity limit
        // points that divergent paths approach (rate (mu-1)/mu for a mu-fold
        // point). Once the contraction ratio q = dn/prev_dn stabilizes,
        // Schroeder's correction — amplifying the step by 1/(1-q), the
        // geometric tail of the remaining distance — restores fast
        // convergence there while leaving the quadratic regime untouched.
        double prev_q = 0.0;
        for (int iter = 0; iter < 8; ++iter) {
            fp_.load_point(xsre_.data(), xsim_.data(), wsf_);
            gp_.load_point(xsre_.data(), xsim_.data(), wsg_);
            assemble(tr, ti, true);
            if (!lin_.factor(jre_.data(), jim_.data())) return false;
            lin_.solve(hre_.data(), him_.data());
            double dn = 0.0, xn = 0.0;
            for (int i = 0; i < m_; ++i) {
                dn = std::max(dn, std::sqrt(hre_[i] * hre_[i] + him_[i] * him_[i]));
            }
            double amp = 1.0;
            if (std::isfinite(dn) && prev_dn < std::numeric_limits<double>::infinity()) {
                const double q = dn / prev_dn;
                if (iter >= 2 && q >= 0.3 && q <= 0.98 && prev_q >= 0.3 && prev_q <= 0.98 &&
                    std::abs(q - prev_q) <= 0.2 * q)
                    amp = std::min(1.0 / (1.0 - q), 12.0);
                prev_q = q;
            }
            for (int i = 0; i < m_; ++i) {
                xsre_[i] -= amp * hre_[i];
                xsim_[i] -= amp * him_[i];
                xn = std::max(xn, std::sqrt(xsre_[i] * xsre_[i] + xsim_[i] * xsim_[i]));
            }
#ifdef DLNN_TRACE
            if (trace)
                std::fprintf(stderr, "  corr t=(%.6f,%.6f) iter=%d dn=%.6e xn=%.6e\n", tr, ti,
                             iter, dn, xn);
#endif
            if (!std::isfinite(dn) || !std::isfinite(xn)) return false;
            if (xn > opts_.divergence_norm * 10.0) return false;
            if (dn <= tol * (1.0 + xn)) return true;
            if (iter >= 1 && dn >= 0.25 * prev_dn && dn <= 1.05 * prev_dn &&
                dn <= 1e-3 * (1.0 + xn))
                return true;
            prev_dn = dn;
        }
        return false;
    }

    // Tracks the circle t = radius e^{i theta} through `cycles` candidate
    // loops of `nsamp` uniform samples each (nsamp even). Returns 0 if the
    // circle could not be tracked or never closed up after a whole number of
    // loops. On closure the sample average (the 0th Fourier coefficient of
    // the Puiseux series on the circle) approximates the t -> 0 limit with
    // aliasing error of order (radius / R)^nsamp, R being the distance to
    // the nearest branch point in t; the average over every second sample
    // carries the (much larger) (radius / R)^(nsamp/2) error, so comparing
    // the two bounds the error of the full average. Returns 2 and the full
    // average in meanre_/meanim_ when the two agree (trusted limit), else 1.
    int run_circle(double radius, int nsamp) {
        constexpr int kMaxCycles = 8;
        const double dgrid = kPi2 / nsamp;
        // The whole loop runs in one fixed generic chart: the moving
        // Hermitian patch of the forward phase is pinned to the current
        // point, and other sheets of the loop can pass near its pole. The
        // circle average also only makes sense with all samples in a single
        // chart. Re-scale the entry point into the solver's random patch.
        {
            double wr = 0.0, wi = 0.0;
            double zn2 = 0.0;
            for (int i = 0; i < m_; ++i) {
                wr += circle_patch_[i].real() * xre_[i] - circle_patch_[i].imag() * xim_[i];
                wi += circle_patch_[i].real() * xim_[i] + circle_patch_[i].imag() * xre_[i];
                zn2 += xre_[i] * xre_[i] + xim_[i] * xim_[i];
            }
            const double wm2 = wr * wr + wi * wi;
            if (wm2 < 1e-12 * zn2) {
#ifdef DLNN_TRACE
                std::fprintf(stderr, "  circ %llu r=%.4f pole\n",
                             (unsigned long long)cur_index_, radius);
#endif
                return 0; // entry point on the chart's pole
            }
            const double inv = 1.0 / wm2;
            for (int i = 0; i < m_; ++i) {
                const double zr = (xre_[i] * wr + xim_[i] * wi) * inv;
                const double zi = (xim_[i] * wr - xre_[i] * wi) * inv;
                xre_[i] = zr;
                xim_[i] = zi;
            }
            patch_ = circle_patch_;
        }
        std::copy(xre_.begin(), xre_.end(), cstart_re_.begin());
        std::copy(xim_.begin(), xim_.end(), cstart_im_.begin());
        std::fill(sumre_.begin(), sumre_.end(), 0.0);
        std::fill(sumim_.begin(), sumim_.end(), 0.0);
        std::fill(prevre_.begin(), prevre_.end(), 0.0); // half-grid sample sum
        std::fill(previm_.begin(), previm_.end(), 0.0);
        const double start_norm = max_modulus(cstart_re_.data(), cstart_im_.data(), m_);
        // A failed circle must put the entry point back: the caller resumes
        // real-t tracking, and a point stranded at complex t (possibly on
        // another sheet of the path) would corrupt it.
        auto bail = [&]() {
            std::copy(cstart_re_.begin(), cstart_re_.end(), xre_.begin());
            std::copy(cstart_im_.begin(), cstart_im_.end(), xim_.begin());
            return 0;
        };
        double theta = 0.0;
        double dtheta = dgrid;
        int budget = 0;
        for (int loop = 1; loop <= kMaxCycles; ++loop) {
            budget += 40 * nsamp; // per-loop allowance; unused slack carries over
            for (int j = 1; j <= nsamp; ++j) {
                const double target = (static_cast<double>(loop - 1) * nsamp + j) * dgrid;
                int streak = 0;
                while (theta < target - 1e-13) {
                    if (--budget < 0) {
#ifdef DLNN_TRACE
                        std::fprintf(stderr, "  circ %llu r=%.4f budget th=%.3f\n",
                                     (unsigned long long)cur_index_, radius, theta);
#endif
                        return bail();
                    }
                    const double step = std::min(dtheta, target - theta);
                    const double t1 = theta + step;
                    bool ok = predict_theta(theta, step, radius) &&
                              correct(radius * std::cos(t1), radius * std::sin(t1));
                    ++steps_;
                    if (ok) {
                        std::copy(xsre_.begin(), xsre_.end(), xre_.begin());
                        std::copy(xsim_.begin(), xsim_.end(), xim_.begin());
                        theta = t1;
                        if (max_modulus(xre_.data(), xim_.data(), m_) >
                            1e6 * (1.0 + start_norm)) {
#ifdef DLNN_TRACE
                            std::fprintf(stderr, "  circ %llu r=%.4f blowup th=%.3f\n",
                                         (unsigned long long)cur_index_, radius, theta);
#endif
                            return bail();
                        }
                        if (++streak >= 3) {
                            dtheta = std::min(dtheta * 2.0, dgrid);
                            streak = 0;
                        }
                    } else {
                        dtheta *= 0.5;
                        streak = 0;
                        if (dtheta < 1e-5) {
#ifdef DLNN_TRACE
                            std::fprintf(stderr, "  circ %llu r=%.4f starve th=%.3f\n",
                                         (unsigned long long)cur_index_, radius, theta);
#endif
                            return bail();
                        }
                    }
                }
                theta = target; // squash accumulated round-off
                for (int i = 0; i < m_; ++i) {
                    sumre_[i] += xre_[i];
                    sumim_[i] += xim_[i];
                }
                if (j % 2 == 0)
                    for (int i = 0; i < m_; ++i) {
                        prevre_[i] += xre_[i];
                        previm_[i] += xim_[i];
                    }
            }
            double dist = 0.0;
            for (int i = 0; i < m_; ++i) {
                const double dr = xre_[i] - cstart_re_[i];
                const double di = xim_[i] - cstart_im_[i];
                dist = std::max(dist, std::sqrt(dr * dr + di * di));
            }
#ifdef DLNN_TRACE
            std::fprintf(stderr, "  circ %llu r=%.4f loop=%d closedist=%.3e\n",
                         (unsigned long long)cur_index_, radius, loop, dist);
#endif
            if (dist <= 1e-3 * (1.0 + start_norm)) {
                last_cycles_ = loop;
                const double inv = 1.0 / (loop * nsamp);
                const double invh = 2.0 / (loop * nsamp);
                for (int i = 0; i < m_; ++i) {
                    meanre_[i] = sumre_[i] * inv;
                    meanim_[i] = sumim_[i] * inv;
                    prevre_[i] *= invh;
                    previm_[i] *= invh;
                }
                const double pd = projective_distance(prevre_.data(), previm_.data(),
                                                      meanre_.data(), meanim_.data());
#ifdef DLNN_TRACE
                std::fprintf(stderr,
                             "  circle %llu r=%.4f n=%d cycles=%d z0=%.3e scale=%.3e pd=%.3e\n",
                             (unsigned long long)cur_index_, radius, nsamp, loop,
                             std::sqrt(meanre_[n_] * meanre_[n_] + meanim_[n_] * meanim_[n_]),
                             max_modulus(meanre_.data(), meanim_.data(), m_), pd);
#endif
                return pd <= 1e-4 ? 2 : 1;
            }
        }
        return bail();
    }

    // Distance between the projective points spanned by u and v: both are
    // unit-normalized and v is aligned to u by the least-squares complex
    // scale before the coordinatewise comparison, so the result does not
    // depend on the charts the two representatives were computed in.
    double projective_distance(const double* ure, const double* uim, const double* vre,
                               const double* vim) const {
        double un = 0.0, vn = 0.0;
        for (int i = 0; i < m_; ++i) {
            un += ure[i] * ure[i] + uim[i] * uim[i];
            vn += vre[i] * vre[i] + vim[i] * vim[i];
        }
        if (!(un > 0.0) || !(vn > 0.0)) return std::numeric_limits<double>::infinity();
        const double ui = 1.0 / std::sqrt(un), vi = 1.0 / std::sqrt(vn);
        // lambda = <u, v> on the normalized vectors.
        double lr = 0.0, li = 0.0;
        for (int i = 0; i < m_; ++i) {
            const double ar = ure[i] * ui, ai = uim[i] * ui;
            const double br = vre[i] * vi, bi = vim[i] * vi;
            lr += ar * br + ai * bi;
            li += ai * br - ar * bi;
        }
        double dist = 0.0;
        for (int i = 0; i < m_; ++i) {
            const double ar = ure[i] * ui, ai = uim[i] * ui;
            const double br = vre[i] * vi, bi = vim[i] * vi;
            const double dr = ar - (lr * br - li * bi);
            const double di = ai - (lr * bi + li * br);
            dist = std::max(dist, std::sqrt(dr * dr + di * di));
        }
        return dist;
    }

    bool mean_at_infinity() const {
        const double zn = max_modulus(meanre_.data(), meanim_.data(), n_);
        const double z0m = std::sqrt(meanre_[n_] * meanre_[n_] + meanim_[n_] * meanim_[n_]);
        // Treats affine limits beyond norm ~1/kInfinityRatio as divergent;
        // finer resolution is below the loop average's accuracy for high
        // winding numbers.
        constexpr double kInfinityRatio = 1e-3;
        return z0m < kInfinityRatio * std::max(zn, z0m);
    }

    PathStatus endgame(std::uint64_t index, PathEndpoint& out) {
        // The loop average estimates the limit with an aliasing error of
        // order (r / R)^nsamp, R being the distance to the nearest branch
        // point in t. R is unknown, so run_circle certifies its own average
        // by comparing full- and half-grid sums, and an uncertified average
        // is retried with more samples per loop: the error is then squared
        // and cubed while the circle stays at a radius where the path is
        // still comfortably far from its (possibly singular) limit.
        // Shrinking the radius is the last resort, for branch points sitting
        // on or near the circle itself; the legs between radii are tracked
        // affinely, and the circles never touch the affine state.
        // One certified average is still not enough: the corrector can hop
        // between sheets of DIFFERENT paths that pass close together over
        // the circle (typically a conjugate cluster of large roots). Such a
        // tour closes after visiting the whole cluster and its average — the
        // cluster centroid — is certified by the sample test, but it is no
        // path limit at all. Distinct limits separate as t -> 0 though, so
        // hops die out with the radius: a certified average is only accepted
        // once the average at the next radius down agrees with it. A
        // single-loop circle whose average is decisively finite or decisively
        // at infinity skips the confirmation: a tour needs winding > 1, and
        // the borderline z0 band is exactly where cluster centroids land.
        // The polish of a finite-looking average is the last line of defense:
        // a centroid stable enough to pass confirmation still fails it, and
        // the descent then simply continues below the hop-infested radii.
        static constexpr int kSampleLadder[] = {16, 48, 144};
        constexpr int kRadiusLevels = 6;
        double r = opts_.endgame_radius * rscale_;
        bool have_cand = false;
#ifdef DLNN_TRACE
        std::fprintf(stderr, "  endgame %llu entrynorm=%.3e\n", (unsigned long long)index,
                     max_modulus(axre_.data(), axim_.data(), n_));
#endif
        for (int rlevel = 0; rlevel < kRadiusLevels; ++rlevel) {
            int rc = 1;
            for (int nsamp : kSampleLadder) {
                std::copy(axre_.begin(), axre_.begin() + n_, xre_.begin());
                std::copy(axim_.begin(), axim_.begin() + n_, xim_.begin());
                xre_[n_] = 1.0;
                xim_[n_] = 0.0;
                rc = run_circle(r, nsamp);
                if (rc != 1) break; // 0: untrackable here; 2: certified
            }
            if (rc == 2) {
                const double zn = max_modulus(meanre_.data(), meanim_.data(), n_);
                const double z0m =
                    std::sqrt(meanre_[n_] * meanre_[n_] + meanim_[n_] * meanim_[n_]);
                const double z0rel = z0m / std::max(zn, z0m);
                // z0rel <= 1e-6 is decisive for any winding: a hop-glued
                // tour cannot cancel the finite z0 components of its arcs to
                // that depth, only a phase-coherent genuine branch can.
                bool settled = (last_cycles_ == 1 && z0rel >= 1e-2) || z0rel <= 1e-6;
                if (!settled && have_cand &&
                    projective_distance(candre_.data(), candim_.data(), meanre_.data(),
                                        meanim_.data()) <= 1e-4)
                    settled = true;
                if (settled) {
                    if (mean_at_infinity()) return PathStatus::Diverged;
                    PathStatus ps = polish_mean(index, out);
                    if (ps == PathStatus::Converged) return ps;
                    // A stable hop-tour centroid: looks finite, agrees with
                    // itself across radii, but is no root. Hunt below it.
                    have_cand = false;
                } else {
                    std::copy(meanre_.begin(), meanre_.end(), candre_.begin());
                    std::copy(meanim_.begin(), meanim_.end(), candim_.begin());
                    have_cand = true;
                }
            }
            if (rlevel + 1 == kRadiusLevels) break;
            Phase ph = forward(-std::log(r), -std::log(r * 0.5));
            if (ph == Phase::Diverged) return PathStatus::Diverged;
            if (ph == Phase::Failed) return PathStatus::Failed;
            r *= 0.5;
        }
        return PathStatus::Failed;
    }

    // De-patches the loop average in meanre_/meanim_ and polishes it against
    // the affine target system. Runs on scratch buffers: the affine tracking
    // state stays valid for a further descent if the polish refuses the
    // point.
    PathStatus polish_mean(std::uint64_t index, PathEndpoint& out) {
        std::vector<double>& pre = k1re_;
        std::vector<double>& pim = k1im_;
        {
            const double ir = meanre_[n_], ii = meanim_[n_];
            const double inv = 1.0 / (ir * ir + ii * ii);
            for (int i = 0; i < n_; ++i) {
                pre[i] = (meanre_[i] * ir + meanim_[i] * ii) * inv;
                pim[i] = (meanim_[i] * ir - meanre_[i] * ii) * inv;
            }
        }
        double prev_res = std::numeric_limits<double>::infinity();
        int stall = 0;
        int iters = 0;
        for (int iter = 0; iter < opts_.polish_iters; ++iter) {
            fa_.load_point(pre.data(), pim.data(), wsa_);
            fa_.eval_values(wsa_, fre_.data(), fim_.data());
            const double res = max_modulus(fre_.data(), fim_.data(), n_);
            const double nm = max_modulus(pre.data(), pim.data(), n_);
#ifdef DLNN_TRACE
            std::fprintf(stderr, "  polish %llu iter=%d res=%.3e nm=%.3e\n",
                         (unsigned long long)index, iter, res, nm);
#endif
            if (!std::isfinite(res) || nm > opts_.divergence_norm) return PathStatus::Failed;
            if (res < 1e-12 * (1.0 + nm)) return accept(index, res, iters, out);
            if (res >= prev_res * 0.5) {
                // Round-off floor or stagnation. Accept if already below the
                // solver's acceptance threshold, otherwise give up.
                if (++stall >= 2) {
                    if (res < opts_.residual_tol * (1.0 + nm))
                        return accept(index, res, iters, out);
                    return PathStatus::Failed;
                }
            } else {
                stall = 0;
            }
            prev_res = res;
            fa_.eval_jacobian(wsa_, jre_.data(), jim_.data());
            if (!lina_.factor(jre_.data(), jim_.data())) {
                if (res < opts_.residual_tol * (1.0 + nm)) return accept(index, res, iters, out);
                return PathStatus::Failed;
            }
            std::copy(fre_.begin(), fre_.begin() + n_, hre_.begin());
            std::copy(fim_.begin(), fim_.begin() + n_, him_.begin());
            lina_.solve(hre_.data(), him_.data());
            for (int i = 0; i < n_; ++i) {
                pre[i] -= hre_[i];
                pim[i] -= him_[i];
            }
            ++iters;
        }
        fa_.load_point(pre.data(), pim.data(), wsa_);
        fa_.eval_values(wsa_, fre_.data(), fim_.data());
        const double res = max_modulus(fre_.data(), fim_.data(), n_);
        const double nm = max_modulus(pre.data(), pim.data(), n_);
        if (std::isfinite(res) && res < opts_.residual_tol * (1.0 + nm))
            return accept(index, res, opts_.polish_iters, out);
        return PathStatus::Failed;
    }

    PathStatus accept(std::uint64_t index, double res, int iters, PathEndpoint& out) {
        out.index = index;
        out.point.resize(n_);
        for (int i = 0; i < n_; ++i) out.point[i] = Complex(k1re_[i], k1im_[i]);
        out.residual = res;
        out.iters = iters;
        return PathStatus::Converged;
    }

    const CompiledSystem& fa_; // affine target
    const CompiledSystem& ga_; // affine start system
    const CompiledSystem& fp_; // homogenized target (+ patch row)
    const CompiledSystem& gp_; // homogenized start system (+ patch row)
    const StartProvider& start_;
    SolverOptions opts_;
    std::vector<Complex> patch_;
    std::vector<Complex> circle_patch_;
    std::vector<Complex> patch_base_;
    Complex gamma_;
    int n_; // affine dimension
    int m_; // tracked dimension n_ + 1
    EvalWorkspace wsa_, wsga_, wsf_, wsg_;
    LinearSolver lin_, lina_;
    double rscale_ = 1.0;
    std::uint64_t cur_index_ = 0;
    int steps_ = 0;
    std::vector<double> fre_, fim_, gre_, gim_, hre_, him_;
    std::vector<double> jre_, jim_, jgre_, jgim_;
    std::vector<double> xre_, xim_, xsre_, xsim_, axre_, axim_;
    std::vector<double> k1re_, k1im_, k2re_, k2im_, k3re_, k3im_, k4re_, k4im_;
    std::vector<double> sumre_, sumim_, cstart_re_, cstart_im_, meanre_, meanim_;
    std::vector<double> prevre_, previm_, candre_, candim_;
    int last_cycles_ = 0;
};

double solution_norm(const Solution& s) {
    double m = 0.0;
    for (const auto& c : s.point) m = std::max(m, std::abs(c));
    return m;
}

double point_distance(const std::vector<Complex>& a, const std::vector<Complex>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Infinity-norm condition number via explicit inverse from the LU factors.
double condition_estimate(const CompiledSystem& cs, EvalWorkspace& ws,
                          const std::vector<Complex>& point) {
    int n = static_cast<int>(cs.size());
    std::vector<double> xre(n), xim(n), jre(n * n), jim(n * n);
    for (int i = 0; i < n; ++i) {
        xre[i] = point[i].real();
        xim[i] = point[i].imag();
    }
    cs.load_point(xre.data(), xim.data(), ws);
    cs.eval_jacobian(ws, jre.data(), jim.data());
    LinearSolver lin;
    lin.init(n);
    if (!lin.factor(jre.data(), jim.data()))
        return std::numeric_limits<double>::infinity();
    double jnorm = 0.0;
    for (int i = 0; i < n; ++i) {
        double row = 0.0;
        for (int j = 0; j < n; ++j)
            row += std::sqrt(jre[i * n + j] * jre[i * n + j] + jim[i * n + j] * jim[i * n + j]);
        jnorm = std::max(jnorm, row);
    }
    // Columns of the inverse, accumulated into row sums.
    std::vector<double> rowsum(n, 0.0), br(n), bi(n);
    for (int col = 0; col < n; ++col) {
        std::fill(br.begin(), br.end(), 0.0);
        std::fill(bi.begin(), bi.end(), 0.0);
        br[col] = 1.0;
        lin.solve(br.data(), bi.data());
        for (int i = 0; i < n; ++i) rowsum[i] += std::sqrt(br[i] * br[i] + bi[i] * bi[i]);
    }
    double invnorm = *std::max_element(rowsum.begin(), rowsum.end());
    return jnorm * invnorm;
}

SolveResult solve_with_provider(const PolySystem& sys, const StartProvider& provider,
                                const SolverOptions& opts, Complex gamma,
                                const std::vector<Complex>& patch) {
    auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = sys.nvars;
    const std::uint64_t total = provider.path_count();

    // Row-wise homogenization degree covering both the target and the start
    // system, so every homotopy row is homogeneous of one degree.
    std::vector<int> fdeg = sys.degrees();
    std::vector<int> gdeg = provider.system().degrees();
    std::vector<int> target(n);
    for (std::size_t i = 0; i < n; ++i) target[i] = std::max(fdeg[i], gdeg[i]);

    CompiledSystem cs(sys);
    CompiledSystem csga(provider.system());
    PolySystem fhat = homogenize_with_patch(sys, target, patch);
    PolySystem ghat = homogenize_with_patch(provider.system(), target, patch);
    CompiledSystem csf(fhat);
    CompiledSystem csg(ghat);

    int nthreads = effective_thread_count(opts.threads);
    nthreads = static_cast<int>(
        std::min<std::uint64_t>(nthreads, std::max<std::uint64_t>(total, 1)));

    std::atomic<std::uint64_t> next{0};
    std::mutex merge_mutex;
    std::vector<PathEndpoint> endpoints;
    std::atomic<std::uint64_t> converged{0}, diverged{0}, failed{0};

    auto worker = [&]() {
        PathTracker tracker(cs, csga, csf, csg, patch, opts, gamma, provider);
        std::vector<PathEndpoint> local;
        std::uint64_t c = 0, d = 0, f = 0;
        for (;;) {
            std::uint64_t begin = next.fetch_add(16);
            if (begin >= total) break;
            std::uint64_t end = std::min(begin + 16, total);
            for (std::uint64_t idx = begin; idx < end; ++idx) {
                PathEndpoint ep;
                switch (tracker.track_with_retry(idx, ep)) {
                    case PathStatus::Converged:
                        local.push_back(std::move(ep));
                        ++c;
                        break;
                    case PathStatus::Diverged: ++d; break;
                    case PathStatus::Failed: ++f; break;
                }
            }
        }
        converged += c;
        diverged += d;
        failed += f;
        std::lock_guard<std::mutex> lock(merge_mutex);
        for (auto& ep : local) endpoints.push_back(std::move(ep));
    };

    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nthreads);
        for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::sort(endpoints.begin(), endpoints.end(),
              [](const PathEndpoint& a, const PathEndpoint& b) { return a.index < b.index; });

    std::vector<Solution> candidates;
    candidates.reserve(endpoints.size());
    for (auto& ep : endpoints) {
        Solution s;
        s.point = std::move(ep.point);
        s.residual = ep.residual;
        s.newton_iters = ep.iters;
        candidates.push_back(std::move(s));
    }

    std::vector<Solution> unique_sols = dedupe(std::move(candidates), opts.dedupe_tol);

    EvalWorkspace ws = cs.make_workspace();
    std::vector<Solution> accepted;
    for (auto& s : unique_sols) {
        double nm = solution_norm(s);
        if (!(s.residual < opts.residual_tol * (1.0 + nm))) continue;
        s.condition_estimate = condition_estimate(cs, ws, s.point);
        classify(s, opts.zero_tol, opts.real_tol);
        accepted.push_back(std::move(s));
    }

    std::sort(accepted.begin(), accepted.end(), [](const Solution& a, const Solution& b) {
        for (std::size_t i = 0; i < a.point.size(); ++i) {
            if (a.point[i].real() != b.point[i].real()) return a.point[i].real() < b.point[i].real();
            if (a.point[i].imag() != b.point[i].imag()) return a.point[i].imag() < b.point[i].imag();
        }
        return false;
    });

    SolveResult res;
    res.solutions = std::move(accepted);
    res.stats.paths_tracked = total;
    res.stats.paths_converged = converged.load();
    res.stats.paths_diverged = diverged.load();
    res.stats.paths_failed = failed.load();
    res.stats.failure_warning = res.stats.paths_failed * 10 > res.stats.paths_tracked;
    res.stats.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// Unit gamma with argument kept away from the real axis: the systems of
// interest have real coefficients, so near-real gamma would drag paths close
// to the real discriminant. The random affine patch comes from the same
// deterministic stream.
void draw_gamma_and_patch(std::uint64_t seed, std::size_t n, Complex& gamma,
                          std::vector<Complex>& patch) {
    Rng rng(seed ^ 0x67616d6d61ULL);
    double ang = (kPi2 / 2.0) * (0.15 + 0.7 * rng.uniform01());
    gamma = Complex(std::cos(ang), std::sin(ang));
    patch.resize(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
        double mod = 0.5 + rng.uniform01();
        double ph = kPi2 * rng.uniform01();
        patch[j] = Complex(mod * std::cos(ph), mod * std::sin(ph));
    }
}

void validate_target(const PolySystem& sys) {
    if (!sys.is_square()) throw std::invalid_argument("solver needs a square system");
    for (int d : sys.degrees())
        if (d < 1) throw std::invalid_argument("every equation must have degree at least 1");
}

} // namespace

int effective_thread_count(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("DLNN_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

void classify(Solution& s, double zero_tol, double real_tol) {
    double nm = solution_norm(s);
    s.zero_mask.assign(s.point.size(), 0);
    bool any_zero = false;
    for (std::size_t i = 0; i < s.point.size(); ++i) {
        if (std::abs(s.point[i]) < zero_tol * (1.0 + nm)) {
            s.zero_mask[i] = 1;
            any_zero = true;
        }
    }
    s.is_toric = !any_zero;
    double imax = 0.0;
    for (const auto& c : s.point) imax = std::max(imax, std::abs(c.imag()));
    s.is_real = imax < real_tol * (1.0 + nm);
}

Solution refine(const CompiledSystem& cs, const std::vector<Complex>& point, int max_iters) {
    int n = static_cast<int>(cs.size());
    if (point.size() != cs.size()) throw std::invalid_argument("point dimension mismatch");
    EvalWorkspace ws = cs.make_workspace();
    std::vector<double> xre(n), xim(n), fre(n), fim(n), jre(n * n), jim(n * n);
    for (int i = 0; i < n; ++i) {
        xre[i] = point[i].real();
        xim[i] = point[i].imag();
    }
    LinearSolver lin;
    lin.init(n);
    Solution s;
    s.newton_iters = 0;
    bool singular = false;
    double prev_res = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter <= max_iters; ++iter) {
        cs.load_point(xre.data(), xim.data(), ws);
        cs.eval_values(ws, fre.data(), fim.data());
        double res = max_modulus(fre.data(), fim.data(), n);
        double nm = max_modulus(xre.data(), xim.data(), n);
        if (res < 1e-12 * (1.0 + nm) || iter == max_iters || res >= prev_res) break;
        prev_res = res;
        cs.eval_jacobian(ws, jre.data(), jim.data());
        if (!lin.factor(jre.data(), jim.data())) {
            singular = true;
            break;
        }
        lin.solve(fre.data(), fim.data());
        for (int i = 0; i < n; ++i) {
            xre[i] -= fre[i];
            xim[i] -= fim[i];
        }
        ++s.newton_iters;
    }
    s.point.resize(n);
    for (int i = 0; i < n; ++i) s.point[i] = Complex(xre[i], xim[i]);
    cs.load_point(xre.data(), xim.data(), ws);
    cs.eval_values(ws, fre.data(), fim.data());
    s.residual = max_modulus(fre.data(), fim.data(), n);
    s.condition_estimate =
        singular ? std::numeric_limits<double>::infinity() : condition_estimate(cs, ws, s.point);
    return s;
}

Solution refine(const PolySystem& sys, const std::vector<Complex>& point, int max_iters) {
    CompiledSystem cs(sys);
    return refine(cs, point, max_iters);
}

std::vector<Solution> dedupe(std::vector<Solution> solutions, double tol) {
    std::size_t k = solutions.size();
    std::vector<std::size_t> parent(k);
    for (std::size_t i = 0; i < k; ++i) parent[i] = i;
    auto find = [&](std::size_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) {
            double scale = 1.0 + std::max(solution_norm(solutions[i]), solution_norm(solutions[j]));
            if (point_distance(solutions[i].point, solutions[j].point) < tol * scale) {
                std::size_t ri = find(i), rj = find(j);
                if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
            }
        }
    // Lowest residual wins within a cluster; ties resolved lexicographically
    // so the result does not depend on input order.
    std::vector<int> best(k, -1);
    auto lex_less = [](const Solution& a, const Solution& b) {
        for (std::size_t i = 0; i < a.point.size(); ++i) {
            if (a.point[i].real() != b.point[i].real()) return a.point[i].real() < b.point[i].real();
            if (a.point[i].imag() != b.point[i].imag()) return a.point[i].imag() < b.point[i].imag();
        }
        return false;
    };
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t r = find(i);
        if (best[r] < 0 || solutions[i].residual < solutions[best[r]].residual ||
            (solutions[i].residual == solutions[best[r]].residual &&
             lex_less(solutions[i], solutions[best[r]])))
            best[r] = static_cast<int>(i);
    }
    std::vector<Solution> out;
    for (std::size_t i = 0; i < k; ++i)
        if (best[i] >= 0 && find(i) == i) out.push_back(std::move(solutions[best[i]]));
    return out;
}

SolveResult solve_total_degree(const PolySystem& sys, const SolverOptions& opts) {
    validate_target(sys);
    std::vector<int> deg = sys.degrees();

    std::uint64_t total = 1;
    for (int d : deg) {
        if (total > opts.max_paths / static_cast<std::uint64_t>(d) + 1)
            total = opts.max_paths + 1; // saturate
        else
            total *= static_cast<std::uint64_t>(d);
    }
    if (total > opts.max_paths)
        throw std::invalid_argument("total degree exceeds max_paths");

    Complex gamma;
    std::vector<Complex> patch;
    draw_gamma_and_patch(opts.seed, sys.nvars, gamma, patch);
    TotalDegreeStart start(deg, total);
    return solve_with_provider(sys, start, opts, gamma, patch);
}

SolveResult solve_multihomogeneous(const PolySystem& sys,
                                   const std::vector<std::vector<std::size_t>>& groups,
                                   const SolverOptions& opts) {
    validate_target(sys);
    validate_partition(sys.nvars, groups);

    Complex gamma;
    std::vector<Complex> patch;
    draw_gamma_and_patch(opts.seed, sys.nvars, gamma, patch);
    Rng factor_rng(opts.seed ^ 0x6d686f6d32ULL);
    MultiHomStart start(sys, groups, factor_rng, opts.max_paths);
    if (start.path_count() == 0) {
        SolveResult res;
        res.stats.wall_time = 0.0;
        return res;
    }
    return solve_with_provider(sys, start, opts, gamma, patch);
}

std::uint64_t multihomogeneous_path_count(const PolySystem& sys,
                                          const std::vector<std::vector<std::size_t>>& groups,
                                          std::uint64_t cap) {
    validate_target(sys);
    validate_partition(sys.nvars, groups);
    auto md = group_degree_matrix(sys, groups);
    std::vector<std::size_t> quota(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) quota[g] = groups[g].size();
    return enumerate_assignments(md, quota, cap, [](const std::vector<std::size_t>&) {});
}

std::string solution_to_json(const Solution& s) {
    nlohmann::json j;
    auto pts = nlohmann::json::array();
    for (const auto& c : s.point) pts.push_back({c.real(), c.imag()});
    j["point"] = std::move(pts);
    j["residual"] = s.residual;
    j["newton_iters"] = s.newton_iters;
    j["is_real"] = s.is_real;
    j["is_toric"] = s.is_toric;
    j["zero_mask"] = s.zero_mask;
    j["condition"] = std::isfinite(s.condition_estimate) ? s.condition_estimate : -1.0;
    return j.dump();
}

void write_solutions_jsonl(const std::vector<Solution>& sols, std::ostream& out) {
    for (const auto& s : sols) out << solution_to_json(s) << '\n';
}

std::vector<Solution> read_solutions_jsonl(std::istream& in) {
    std::vector<Solution> sols;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        Solution s;
        for (const auto& p : j.at("point"))
            s.point.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
        s.residual = j.at("residual").get<double>();
        s.newton_iters = j.value("newton_iters", 0);
        s.is_real = j.at("is_real").get<bool>();
        s.is_toric = j.at("is_toric").get<bool>();
        s.zero_mask = j.at("zero_mask").get<std::vector<std::uint8_t>>();
        double cond = j.value("condition", 0.0);
        s.condition_estimate = cond < 0 ? std::numeric_limits<double>::infinity() : cond;
        sols.push_back(std::move(s));
    }
    return sols;
}

} // namespace dlnn
