#ifndef KINFRAC_DIVERSITY_HPP
#define KINFRAC_DIVERSITY_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "kinfrac/abundance.hpp"
#include "kinfrac/errors.hpp"
#include "kinfrac/phylo.hpp"

namespace kinfrac {

/// Pairwise dissimilarities u(i,j): symmetric, zero diagonal, non-negative,
/// and a metric (triangle inequality) for the root-UniFrac construction.
struct DissimilarityMatrix {
    std::vector<std::string> sample_ids;
    Eigen::MatrixXd U;

    int n() const { return static_cast<int>(U.rows()); }
};

/// Gower-centered matrix M = J D J with D_ij = -u(i,j)^2/2, J = I - 11'/n.
/// Row sums are zero; under the distinct-branch condition M is PSD with
/// rank n-1.
struct GowerMatrix {
    Eigen::MatrixXd M;
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
    int numerical_rank = 0;
};

/// Orthonormal-row basis L of ker(X'): L X = 0 and L L' = I.
struct Projector {
    Eigen::MatrixXd L;  // (n-m) x n
    int m = 0;          // covariate count

    int n() const { return static_cast<int>(L.cols()); }
    int p() const { return static_cast<int>(L.rows()); }  // n - m
};

/// Z = L M L', the outer-product response of the Wishart model.
struct ProjectedOuter {
    Eigen::MatrixXd Z;
};

/// Root-UniFrac u(i,j) = sqrt(sum_k b_k |p_ik - p_jk|), optionally restricted
/// to a branch subset (absent subset = all branches).
DissimilarityMatrix root_unifrac(const BranchProportions& P,
                                 const PhyloTree& tree,
                                 const std::optional<BranchSet>& subset = {});

/// Gower centering with an eigenvalue summary (min/max and numerical rank at
/// relative tolerance rank_tol * max |eigenvalue|).
GowerMatrix gower_center(const DissimilarityMatrix& U, double rank_tol = 1e-8);

/// Builds the REML projector from an n x m covariate matrix of full column
/// rank; throws InputError when X is rank deficient.
Projector kernel_projector(const Eigen::MatrixXd& X);

/// Z = L M L', symmetrized to suppress round-off asymmetry.
ProjectedOuter project(const GowerMatrix& M, const Projector& L);

/// Some branch k where all n values p_{.,k} are pairwise separated by more
/// than tol_rel * max|p|; nullopt when no branch qualifies. Ties are broken
/// toward the branch with the widest minimal separation.
std::optional<int> check_distinct_branch(const BranchProportions& P,
                                         double tol_rel = 1e-12);

}  // namespace kinfrac

#endif
