#include "kinfrac/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>

namespace kinfrac {

namespace {

// splitmix64; used to decorrelate (master, stream) pairs before seeding.
std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    // Expand the seed into a full initialization sequence.
    std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(s)),
                      static_cast<std::uint32_t>(splitmix64(s)),
                      static_cast<std::uint32_t>(splitmix64(s)),
                      static_cast<std::uint32_t>(splitmix64(s)),
                      static_cast<std::uint32_t>(splitmix64(s)),
                      static_cast<std::uint32_t>(splitmix64(s)),
                      static_cast<std::uint32_t>(splitmix64(s)),
                      static_cast<std::uint32_t>(splitmix64(s))};
    gen_.seed(seq);
}

Rng Rng::stream(std::uint64_t master_seed, std::uint64_t stream_id) {
    std::uint64_t s = master_seed;
    std::uint64_t a = splitmix64(s);
    s = stream_id ^ 0xd1b54a32d192ed03ULL;
    std::uint64_t b = splitmix64(s);
    s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return Rng(splitmix64(s));
}

std::uint64_t Rng::next_u64() { return gen_(); }

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw NumericalError("Rng::below: n must be positive");
    // Rejection sampling on the top bits to avoid modulo bias.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    // Marsaglia polar method.
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    cached_normal_ = v * factor;
    has_cached_ = true;
    return u * factor;
}

Eigen::VectorXd Rng::normal_vector(int n) {
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i) out[i] = normal();
    return out;
}

std::vector<int> Rng::permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
        std::swap(p[i], p[j]);
    }
    return p;
}

// ---------------------------------------------------------------------------

PsdFactor logdet_psd(const Eigen::MatrixXd& S) {
    if (S.rows() != S.cols())
        throw NumericalError("logdet_psd: matrix is not square");
    PsdFactor out;
    out.llt.compute(S);
    if (out.llt.info() != Eigen::Success) {
        // Re-run an unblocked Cholesky to locate the failing pivot for the
        // error message; the fast path above stays fast.
        const int n = static_cast<int>(S.rows());
        Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
        for (int j = 0; j < n; ++j) {
            double d = S(j, j) - L.row(j).head(j).squaredNorm();
            if (!(d > 0.0))
                throw NotPositiveDefiniteError(
                    "matrix is not positive definite", j);
            L(j, j) = std::sqrt(d);
            for (int i = j + 1; i < n; ++i) {
                L(i, j) = (S(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) /
                          L(j, j);
            }
        }
        throw NotPositiveDefiniteError("matrix is not positive definite",
                                       static_cast<int>(S.rows()) - 1);
    }
    out.logdet =
        2.0 * out.llt.matrixLLT().diagonal().array().log().sum();
    if (!std::isfinite(out.logdet))
        throw NotPositiveDefiniteError(
            "non-finite log-determinant (singular or invalid input)", 0);
    return out;
}

double log_multivariate_gamma(int p, double a) {
    if (p < 1)
        throw NumericalError("log_multivariate_gamma: p must be >= 1");
    if (!(a > 0.5 * (p - 1)))
        throw NumericalError(
            "log_multivariate_gamma: domain violation, need a > (p-1)/2, got a=" +
            std::to_string(a) + ", p=" + std::to_string(p));
    double sum = 0.25 * p * (p - 1) * std::log(std::numbers::pi);
    for (int j = 1; j <= p; ++j) sum += std::lgamma(a + 0.5 * (1 - j));
    return sum;
}

double digamma(double x) {
    if (!(x > 0.0)) throw NumericalError("digamma: requires x > 0");
    double result = 0.0;
    // Shift into the asymptotic region.
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    // Asymptotic expansion with Bernoulli coefficients through x^-12.
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 -
                      inv2 * (1.0 / 120.0 -
                              inv2 * (1.0 / 252.0 -
                                      inv2 * (1.0 / 240.0 -
                                              inv2 * (1.0 / 132.0)))));
    return result;
}

double digamma_sum_multivariate_gamma(int p, double a) {
    if (!(a > 0.5 * (p - 1)))
        throw NumericalError(
            "digamma_sum_multivariate_gamma: need a > (p-1)/2");
    double sum = 0.0;
    for (int j = 1; j <= p; ++j) sum += digamma(a + 0.5 * (1 - j));
    return sum;
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw NumericalError("normal_quantile: p must be in (0, 1)");
    // Wichura's AS241 (double-precision variant).
    const double q = p - 0.5;
    double r;
    if (std::abs(q) <= 0.425) {
        r = 0.180625 - q * q;
        return q *
               (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
                     67265.770927008700853) * r + 45921.953931549871457) * r +
                   13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((5226.495278852545703 * r + 28729.085735721942674) * r +
                     39307.89580009271061) * r + 21213.794301586595867) * r +
                   5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double value;
    if (r <= 5.0) {
        r -= 1.6;
        value = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) *
                          r + 0.24178072517745061177) * r +
                     1.27045825245236838258) * r + 3.64784832476320460504) * r +
                   5.7694972214606914055) * r + 4.6303378461565452959) * r +
                 1.42343711074968357734) /
                (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) *
                          r + 0.0151986665636164571966) * r +
                     0.14810397642748007459) * r + 0.68976733498510000455) * r +
                   1.6763848301838038494) * r + 2.05319162663775882187) * r +
                 1.0);
    } else {
        r -= 5.0;
        value = (((((((2.01033439929228813265e-7 * r +
                       2.71155556874348757815e-5) * r +
                      0.0012426609473880784386) * r + 0.026532189526576123093) *
                        r + 0.29656057182850489123) * r +
                   1.7848265399172913358) * r + 5.4637849111641143699) * r +
                 6.6579046435011037772) /
                (((((((2.04426310338993978564e-15 * r +
                       1.4215117583164458887e-7) * r +
                      1.8463183175100546818e-5) * r +
                     7.868691311456132591e-4) * r + 0.0148753612908506148525) *
                       r + 0.13692988092273580531) * r +
                  0.59983220655588793769) * r + 1.0);
    }
    return (q < 0.0) ? -value : value;
}

// ---------------------------------------------------------------------------
// L-BFGS
// ---------------------------------------------------------------------------

namespace {

struct Evaluator {
    const Objective& f;
    int count = 0;
    double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        ++count;
        return f(x, g);
    }
};

// Strong-Wolfe line search (Nocedal & Wright alg. 3.5/3.6). Returns the
// accepted step, or a best-effort step with `ok=false` when bracketing fails.
struct LineSearchResult {
    double alpha = 0.0;
    double value = 0.0;
    bool ok = false;
};

LineSearchResult line_search(Evaluator& eval, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& dir, double f0,
                             const Eigen::VectorXd& g0, Eigen::VectorXd& x_new,
                             Eigen::VectorXd& g_new,
                             const OptimConfig& cfg) {
    const double d0 = g0.dot(dir);
    LineSearchResult res;
    if (d0 >= 0.0) return res;  // not a descent direction

    auto phi = [&](double alpha, double& dphi) {
        x_new = x + alpha * dir;
        const double v = eval(x_new, g_new);
        dphi = std::isfinite(v) ? g_new.dot(dir)
                                : std::numeric_limits<double>::quiet_NaN();
        return v;
    };

    double alpha_prev = 0.0, f_prev = f0, d_prev = d0;
    double alpha = 1.0;
    double alpha_max = 1e10;

    auto zoom = [&](double lo, double f_lo, double d_lo, double hi,
                    double f_hi) -> LineSearchResult {
        LineSearchResult z;
        for (int it = 0; it < cfg.max_line_search; ++it) {
            // Quadratic interpolation, safeguarded toward the midpoint.
            double a = lo + 0.5 * (hi - lo);
            if (std::isfinite(f_hi) && std::abs(d_lo) > 0) {
                const double denom = 2.0 * (f_hi - f_lo - d_lo * (hi - lo));
                if (denom != 0.0) {
                    const double cand = lo - d_lo * (hi - lo) * (hi - lo) / denom;
                    const double lb = std::min(lo, hi), ub = std::max(lo, hi);
                    if (cand > lb + 0.1 * (ub - lb) && cand < ub - 0.1 * (ub - lb))
                        a = cand;
                }
            }
            double dphi;
            const double v = phi(a, dphi);
            if (!std::isfinite(v) || v > f0 + cfg.wolfe_c1 * a * d0 || v >= f_lo) {
                hi = a;
                f_hi = v;
            } else {
                if (std::abs(dphi) <= -cfg.wolfe_c2 * d0) {
                    z.alpha = a;
                    z.value = v;
                    z.ok = true;
                    return z;
                }
                if (dphi * (hi - lo) >= 0.0) {
                    hi = lo;
                    f_hi = f_lo;
                }
                lo = a;
                f_lo = v;
                d_lo = dphi;
            }
            if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
        }
        // Fall back to the best admissible point seen.
        double dphi;
        const double v = phi(lo, dphi);
        z.alpha = lo;
        z.value = v;
        z.ok = std::isfinite(v) && v < f0;
        return z;
    };

    for (int it = 0; it < cfg.max_line_search; ++it) {
        double dphi;
        const double v = phi(alpha, dphi);
        if (!std::isfinite(v)) {
            // Inadmissible step (overflow region): shrink hard.
            alpha_max = alpha;
            alpha = 0.5 * (alpha_prev + alpha);
            if (alpha < 1e-20) return res;
            continue;
        }
        if (v > f0 + cfg.wolfe_c1 * alpha * d0 || (it > 0 && v >= f_prev)) {
            return zoom(alpha_prev, f_prev, d_prev, alpha, v);
        }
        if (std::abs(dphi) <= -cfg.wolfe_c2 * d0) {
            res.alpha = alpha;
            res.value = v;
            res.ok = true;
            return res;
        }
        if (dphi >= 0.0) {
            return zoom(alpha, v, dphi, alpha_prev, f_prev);
        }
        alpha_prev = alpha;
        f_prev = v;
        d_prev = dphi;
        alpha = std::min(2.0 * alpha, alpha_max);
        if (alpha >= alpha_max * (1.0 - 1e-12))
            alpha = 0.5 * (alpha_prev + alpha_max);
    }
    return res;
}

}  // namespace

OptimResult minimize(const Objective& f, const Eigen::VectorXd& x0,
                     const OptimConfig& config) {
    const int n = static_cast<int>(x0.size());
    Evaluator eval{f};

    Eigen::VectorXd x = x0, g(n);
    double fx = eval(x, g);
    if (!std::isfinite(fx))
        throw NumericalError(
            "minimize: objective is non-finite at the starting point");

    OptimResult result;
    result.argmin = x;
    result.value = fx;

    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;

    Eigen::VectorXd x_new(n), g_new(n), q(n), dir(n);
    bool restarted_once = false;

    auto done = [&](const Eigen::VectorXd& xx, const Eigen::VectorXd& gg) {
        return gg.norm() <= config.grad_tol * std::max(1.0, xx.norm());
    };

    int iter = 0;
    for (; iter < config.max_iters; ++iter) {
        if (done(x, g)) {
            result.converged = true;
            break;
        }

        // Two-loop recursion.
        q = g;
        std::vector<double> alpha_coef(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
            alpha_coef[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha_coef[i] * y_hist[i];
        }
        if (!s_hist.empty()) {
            const double gamma =
                s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            q *= gamma;
        }
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha_coef[i] - beta) * s_hist[i];
        }
        dir = -q;

        LineSearchResult ls =
            line_search(eval, x, dir, fx, g, x_new, g_new, config);
        if (!ls.ok) {
            if (!s_hist.empty() && !restarted_once) {
                // Memory may be stale; retry once as steepest descent.
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
                restarted_once = true;
                continue;
            }
            break;
        }
        restarted_once = false;

        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            s_hist.push_back(s);
            y_hist.push_back(yv);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > config.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        x = x_new;
        g = g_new;
        fx = ls.value;
    }

    result.argmin = x;
    result.value = fx;
    result.iterations = iter;
    result.evaluations = eval.count;
    result.grad_norm = g.norm();
    if (done(x, g)) result.converged = true;
    return result;
}

OptimResult minimize_multistart(const Objective& f,
                                const std::vector<Eigen::VectorXd>& starts,
                                const OptimConfig& config) {
    if (starts.empty())
        throw NumericalError("minimize_multistart: no starting points");
    OptimResult best;
    bool have = false;
    for (const auto& x0 : starts) {
        OptimResult r = minimize(f, x0, config);
        if (!have || r.value < best.value) {
            best = r;
            have = true;
        }
    }
    return best;
}

double fd_gradient_check(const Objective& f, const Eigen::VectorXd& x,
                         double h) {
    if (!(h > 0.0)) throw NumericalError("fd_gradient_check: h must be > 0");
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd g(n), scratch(n);
    f(x, g);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        const double step = h * std::max(1.0, std::abs(x[i]));
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        const double fp = f(xp, scratch);
        const double fm = f(xm, scratch);
        const double fd = (fp - fm) / (2.0 * step);
        const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-8});
        worst = std::max(worst, std::abs(fd - g[i]) / denom);
    }
    return worst;
}

}  // namespace kinfrac
