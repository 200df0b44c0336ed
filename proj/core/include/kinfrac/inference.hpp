#ifndef KINFRAC_INFERENCE_HPP
#define KINFRAC_INFERENCE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace kinfrac {

// ---------------------------------------------------------------------------
// Permutation test of H0: h = 0.
//
// Each round permutes the rows and columns of the GRM A (and only A; the
// response, C and Z stay fixed) and refits. The fitting closure receives the
// permuted matrix plus the permutation itself, so variants that also permute
// C can be built by the caller without changing this driver.
// ---------------------------------------------------------------------------
using GrmFit = std::function<double(const Eigen::MatrixXd& A_perm,
                                    const std::vector<int>& perm)>;

struct PermutationResult {
    double h_hat = 0.0;
    std::vector<double> h_perm;  // completed rounds, in round order
    double p_value = 1.0;        // |{i : h_perm[i] > h_hat}| / completed
    int n_perm = 0;
    int n_failed = 0;
    bool add_one = false;  // (1+count)/(1+completed) convention when set
    std::vector<std::string> warnings;
};

/// Runs n_perm rounds with per-round RNG streams derived from (seed, round).
/// The fit must be deterministic given its inputs; h_hat is computed by
/// applying it to the identity permutation. Failed rounds are dropped with a
/// warning when they exceed 1% of the total.
PermutationResult permutation_test(const GrmFit& fit, const Eigen::MatrixXd& A,
                                   int n_perm, std::uint64_t seed,
                                   int threads = 1, bool add_one = false);

// ---------------------------------------------------------------------------
// Family bootstrap confidence interval.
//
// Rounds resample family indices with replacement (total count preserved) and
// hand the draw to a closure that rebuilds A*, C*, the dissimilarity pipeline
// and the fit. A closure throw counts as a failed attempt; the round retries
// with fresh draws up to 10 times before being marked failed.
// ---------------------------------------------------------------------------
using FamilyFit = std::function<double(const std::vector<int>& family_draw)>;

struct BootstrapResult {
    double h_hat = 0.0;
    std::vector<double> h_boot;
    double se = 0.0;
    std::pair<double, double> ci_raw{0.0, 0.0};      // h_hat + z * se form
    std::pair<double, double> ci_clipped{0.0, 0.0};  // intersected with [0,1]
    bool clipped = false;
    double alpha = 0.05;
    int n_boot = 0;
    int n_failed = 0;
    std::vector<std::string> warnings;
};

BootstrapResult bootstrap_ci(const FamilyFit& fit, double h_hat,
                             int n_families, int n_boot, double alpha,
                             std::uint64_t seed, int threads = 1);

}  // namespace kinfrac

#endif
