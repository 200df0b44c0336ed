#ifndef KINFRAC_ORDINATION_HPP
#define KINFRAC_ORDINATION_HPP

#include <Eigen/Dense>
#include <vector>

#include "kinfrac/diversity.hpp"
#include "kinfrac/numerics.hpp"

namespace kinfrac {

struct Embedding {
    Eigen::MatrixXd coords;       // n x d
    Eigen::VectorXd eigenvalues;  // PCoA only: the d retained eigenvalues
    double stress = 0.0;          // MDS only
    std::vector<double> stress_history;  // per-iteration stress (MDS only)
    int iterations = 0;
    bool converged = true;
};

/// Classical scaling: column j of coords is sqrt(lambda_j) v_j for the j-th
/// largest eigenpair, sign fixed so each eigenvector's first non-negligible
/// entry is positive. Throws when d exceeds the numerical rank of M.
Embedding pcoa(const GowerMatrix& M, int d);

struct MdsConfig {
    int max_iters = 300;
    double rel_tol = 1e-8;  // relative stress improvement
    int restarts = 3;       // nMDS random restarts (plus the PCoA start)
    std::uint64_t seed = 0x0dd5eedu;
};

/// Metric MDS minimizing raw stress sum_{i<j} (||x_i-x_j|| - u_ij)^2 by
/// SMACOF majorization from a PCoA start; stress is non-increasing across
/// iterations.
Embedding metric_mds(const DissimilarityMatrix& U, int d,
                     const MdsConfig& config = {});

/// Non-metric MDS: alternates monotone (pool-adjacent-violators) regression
/// of configuration distances onto dissimilarity ranks with majorization
/// steps; reports Kruskal stress-1. Kruskal's primary approach to ties.
Embedding nonmetric_mds(const DissimilarityMatrix& U, int d,
                        const MdsConfig& config = {});

/// Least-squares monotone regression (PAV) with equal weights.
Eigen::VectorXd isotonic_fit(const Eigen::VectorXd& values, bool increasing);

}  // namespace kinfrac

#endif
