#ifndef KINFRAC_MODELS_HPP
#define KINFRAC_MODELS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kinfrac/diversity.hpp"
#include "kinfrac/errors.hpp"
#include "kinfrac/numerics.hpp"

namespace kinfrac {

enum class Zygosity { MZ, DZ, Unknown };

// ---------------------------------------------------------------------------
// Twin/family cohort design: covariates plus the A/C/E covariance structure.
// E is the identity and is never stored. beta is eliminated by the REML
// projector and never estimated.
// ---------------------------------------------------------------------------
struct CohortStructure {
    std::vector<std::string> sample_ids;
    std::vector<std::string> family_ids;  // per sample
    Eigen::MatrixXd X;                    // n x m, first column intercept
    Eigen::MatrixXd A;                    // GRM: MZ pairs 1, DZ pairs 1/2
    Eigen::MatrixXd C;                    // 1 within a household, else 0

    int n() const { return static_cast<int>(sample_ids.size()); }
    int m() const { return static_cast<int>(X.cols()); }
};

/// Builds A and C from per-sample family ids and per-family zygosity.
/// Members of a family get pairwise A = 1 (MZ), 1/2 (DZ) or 0 (Unknown),
/// and pairwise C = 1.
CohortStructure build_cohort(
    const std::vector<std::string>& sample_ids,
    const std::vector<std::string>& family_ids,
    const std::map<std::string, Zygosity>& family_zygosity,
    const Eigen::MatrixXd& X);

/// Throws InputError when the cohort violates its invariants.
void validate_cohort(const CohortStructure& cohort);

/// n x 1 all-ones covariate matrix.
Eigen::MatrixXd intercept_only(int n);

// ---------------------------------------------------------------------------
// Variance components and fits
// ---------------------------------------------------------------------------

struct AceComponents {
    double sigma2_A = 0.0;
    double sigma2_C = 0.0;
    double sigma2_E = 0.0;
};

/// h = sigma2_A / (sigma2_A + sigma2_C + sigma2_E); throws on zero total.
double heritability(const AceComponents& components);

struct FitConfig {
    OptimConfig optim{.max_iters = 500, .grad_tol = 1e-6, .memory = 10};
    int restarts = 5;          // 1 moment-matched start + randomized extras
    double sigma_floor = 1e-8; // lower bound encoding "boundary" estimates
    std::uint64_t restart_seed = 0x5eedf17u;  // stream for randomized starts
};

struct NormalFit {
    AceComponents components;
    double loglik = 0.0;
    double h = 0.0;
    bool converged = false;
    double grad_norm = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool degenerate = false;
    std::vector<std::string> warnings;
};

struct WishartFit {
    AceComponents components;
    double q = 0.0;  // degrees of freedom, > n - m - 1
    double loglik = 0.0;
    double h = 0.0;
    bool converged = false;
    double grad_norm = 0.0;
    int iterations = 0;
    int evaluations = 0;
    std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Reusable fit workspaces. Permutation and bootstrap inference refit with a
// modified A many times; the workspaces hold everything that does not depend
// on A.
//
// The Wishart likelihood is evaluated through the congruence by Z's Cholesky
// factor R (Z = R R'): with Ghat = R^-1 (L V L') R^-T and Shat = sum of
// sigma2_V Ghat_V,
//   log|L Sigma L'|          = log|Z| + log|Shat|
//   tr((L Sigma L')^-1 Z)    = tr(Shat^-1)
//   tr(S^-1 (L V L') S^-1 Z) = <Shat^-1 Ghat_V Shat^-1 R' R^-T> = <Ghat_V, What^2>
// which cuts each objective evaluation to two p^3-level kernels.
// ---------------------------------------------------------------------------
struct WishartWorkspace {
    Eigen::MatrixXd T;        // R^-1 L, maps A -> Ghat_A = T A T'
    Eigen::MatrixXd Ghat_C;
    Eigen::MatrixXd Ghat_E;   // R^-1 R^-T
    Eigen::MatrixXd LtL;      // L' L, for tr(L A L') = <A, L'L>
    double logdet_Z = 0.0;
    double tr_Z = 0.0;
    double tr_GC = 0.0;
    double tr_GE = 0.0;
    int p = 0;
};

/// Factors Z (throws NotPositiveDefiniteError when Z is not PD) and prepares
/// the A-independent pieces.
WishartWorkspace make_wishart_workspace(const ProjectedOuter& Z,
                                        const Projector& L,
                                        const Eigen::MatrixXd& C);

/// Fit with a caller-supplied (possibly permuted) GRM.
WishartFit wishart_fit_with_grm(const WishartWorkspace& ws,
                                const Eigen::MatrixXd& A,
                                const FitConfig& config = {});

/// Maximizes the Wishart REML likelihood over (q, sigma2). Z must be positive
/// definite; q is parameterized as (n-m-1) + exp(t_q).
WishartFit wishart_fit(const ProjectedOuter& Z, const Projector& L,
                       const CohortStructure& cohort,
                       const FitConfig& config = {});

struct NormalWorkspace {
    Eigen::VectorXd w;    // L y
    Eigen::MatrixXd G_C;  // L C L'
    Eigen::MatrixXd LtL;
    Eigen::MatrixXd L;    // kept to form G_A = L A L'
    double tr_GC = 0.0;
    double y_scale = 0.0;
    int p = 0;
};

NormalWorkspace make_normal_workspace(const Eigen::VectorXd& y,
                                      const Projector& L,
                                      const Eigen::MatrixXd& C);

NormalFit normal_reml_fit_with_grm(const NormalWorkspace& ws,
                                   const Eigen::MatrixXd& A,
                                   const FitConfig& config = {});

/// Maximizes the projected normal REML likelihood over sigma2 >= 0.
NormalFit normal_reml_fit(const Eigen::VectorXd& y,
                          const CohortStructure& cohort,
                          const FitConfig& config = {});

// Negated log-likelihoods with analytic gradients, in the unconstrained
// parameterization the fitters optimize: sigma2_V = max(exp(t_V), floor) and,
// for the Wishart case, q = (n-m-1) + exp(t_q). Exposed so the gradients can
// be checked against finite differences; the returned callable owns copies of
// its inputs.
Objective wishart_objective(const WishartWorkspace& ws,
                            const Eigen::MatrixXd& Ghat_A,
                            double sigma_floor = 1e-8);
Objective normal_objective(const NormalWorkspace& ws,
                           const Eigen::MatrixXd& G_A,
                           double sigma_floor = 1e-8);

// ---------------------------------------------------------------------------
// Univariate responses for the comparison estimators
// ---------------------------------------------------------------------------

/// Componentwise log(x / (1-x)); every entry must lie strictly in (0, 1).
Eigen::VectorXd logit_response(const Eigen::VectorXd& theta_node);

struct BoxCoxResponse {
    Eigen::VectorXd y;
    double lambda = 1.0;
    bool degenerate = false;  // flat profile; lambda = 1 by tie-break
};

/// Box-Cox transform with lambda maximizing the profile log-likelihood over
/// the grid [-2, 2] in steps of 0.05 (ties broken toward lambda = 1).
BoxCoxResponse boxcox_response(const Eigen::VectorXd& theta_node);

}  // namespace kinfrac

#endif
