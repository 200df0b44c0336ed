#ifndef KINFRAC_NUMERICS_HPP
#define KINFRAC_NUMERICS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "kinfrac/errors.hpp"

namespace kinfrac {

// ---------------------------------------------------------------------------
// Seeded, stream-splittable RNG.
//
// All randomized procedures take an explicit Rng. Streams derived from the
// same (master, id) pair replay the same sequence regardless of thread
// schedule, which keeps permutation/bootstrap/simulation rounds reproducible
// under any parallel execution. mt19937_64 output is fully specified by the
// standard; uniforms/normals are generated from raw 64-bit draws here instead
// of std::*_distribution (whose sequences are implementation-defined).
// ---------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    /// Independent deterministic substream for (master seed, stream id).
    static Rng stream(std::uint64_t master_seed, std::uint64_t stream_id);

    std::uint64_t next_u64();

    /// Uniform on [0, 1) with 53-bit resolution.
    double uniform();

    /// Unbiased integer in [0, n); n must be > 0.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal (Marsaglia polar, pairwise cached).
    double normal();

    Eigen::VectorXd normal_vector(int n);

    /// Fisher-Yates permutation of {0, ..., n-1}.
    std::vector<int> permutation(int n);

private:
    std::mt19937_64 gen_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

// ---------------------------------------------------------------------------
// PSD factorizations / special functions
// ---------------------------------------------------------------------------

/// Log-determinant of a symmetric positive definite matrix together with its
/// Cholesky factor, for reuse in subsequent solves.
struct PsdFactor {
    double logdet;
    Eigen::LLT<Eigen::MatrixXd> llt;
};

/// Throws NotPositiveDefiniteError with the failing pivot index when S is not
/// numerically positive definite.
PsdFactor logdet_psd(const Eigen::MatrixXd& S);

/// ln Gamma_p(a) = p(p-1)/4 ln(pi) + sum_{j=1..p} ln Gamma(a + (1-j)/2).
/// Requires a > (p-1)/2.
double log_multivariate_gamma(int p, double a);

/// d/da ln Gamma_p(a) = sum_{j=1..p} psi(a + (1-j)/2).
double digamma_sum_multivariate_gamma(int p, double a);

/// Digamma psi(x) for x > 0 (recurrence + asymptotic series).
double digamma(double x);

/// Standard normal quantile (Wichura AS241-style rational approximation).
double normal_quantile(double p);

// ---------------------------------------------------------------------------
// Quasi-Newton minimization (L-BFGS, strong-Wolfe line search)
// ---------------------------------------------------------------------------

/// Objective callback: fill `grad` and return the value at `x`.
/// Returning a non-finite value signals "step not admissible" to the line
/// search, which then backtracks.
using Objective =
    std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct OptimConfig {
    int max_iters = 500;
    double grad_tol = 1e-6;  // converged when ||g|| <= grad_tol * max(1, ||x||)
    int memory = 10;
    int max_line_search = 40;
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
};

struct OptimResult {
    Eigen::VectorXd argmin;
    double value = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    double grad_norm = 0.0;
};

/// Local minimizer from a single start. Throws NumericalError if the
/// objective is non-finite at x0.
OptimResult minimize(const Objective& f, const Eigen::VectorXd& x0,
                     const OptimConfig& config = {});

/// Runs `minimize` from every start and keeps the best final value.
OptimResult minimize_multistart(const Objective& f,
                                const std::vector<Eigen::VectorXd>& starts,
                                const OptimConfig& config = {});

/// Max relative error between the analytic gradient of f and central
/// differences with per-coordinate step h * max(1, |x_i|). Throws on h <= 0.
double fd_gradient_check(const Objective& f, const Eigen::VectorXd& x,
                         double h = 1e-5);

}  // namespace kinfrac

#endif
