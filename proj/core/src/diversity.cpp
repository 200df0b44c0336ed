#include "kinfrac/diversity.hpp"

#include <algorithm>
#include <cmath>

namespace kinfrac {

DissimilarityMatrix root_unifrac(const BranchProportions& P,
                                 const PhyloTree& tree,
                                 const std::optional<BranchSet>& subset) {
    const int n = P.n_samples();
    const int K = tree.branch_count();
    if (P.n_branches() != K)
        throw InputError("branch proportions have " +
                         std::to_string(P.n_branches()) +
                         " branches but the tree has " + std::to_string(K));

    std::vector<int> branches;
    if (subset) {
        branches = subset->branch_ids;
        for (int k : branches)
            if (k < 0 || k >= K)
                throw InputError("branch id " + std::to_string(k) +
                                 " out of range");
    } else {
        branches.resize(K);
        for (int k = 0; k < K; ++k) branches[k] = k;
    }

    Eigen::VectorXd lengths(branches.size());
    Eigen::MatrixXd sub(n, branches.size());
    for (std::size_t c = 0; c < branches.size(); ++c) {
        lengths[static_cast<int>(c)] = tree.branch_length(branches[c]);
        sub.col(static_cast<int>(c)) = P.P.col(branches[c]);
    }

    DissimilarityMatrix out;
    out.sample_ids = P.sample_ids;
    out.U.setZero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double s =
                ((sub.row(i) - sub.row(j)).array().abs() *
                 lengths.transpose().array())
                    .sum();
            const double u = std::sqrt(std::max(0.0, s));
            out.U(i, j) = u;
            out.U(j, i) = u;
        }
    }
    return out;
}

GowerMatrix gower_center(const DissimilarityMatrix& U, double rank_tol) {
    const int n = U.n();
    if (U.U.cols() != n) throw InputError("dissimilarity matrix is not square");

    const Eigen::MatrixXd D = -0.5 * U.U.array().square().matrix();
    // M = J D J expanded: M_ij = D_ij - rowmean_i - colmean_j + grandmean.
    const Eigen::VectorXd row_mean = D.rowwise().mean();
    const double grand_mean = row_mean.mean();
    GowerMatrix out;
    out.M = D;
    out.M.colwise() -= row_mean;
    out.M.rowwise() -= row_mean.transpose();
    out.M.array() += grand_mean;
    out.M = 0.5 * (out.M + out.M.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.M,
                                                       Eigen::EigenvaluesOnly);
    const Eigen::VectorXd& ev = eig.eigenvalues();
    out.min_eigenvalue = ev.minCoeff();
    out.max_eigenvalue = ev.maxCoeff();
    const double scale = ev.array().abs().maxCoeff();
    out.numerical_rank =
        (ev.array().abs() > rank_tol * std::max(scale, 1e-300)).count();
    return out;
}

Projector kernel_projector(const Eigen::MatrixXd& X) {
    const int n = static_cast<int>(X.rows());
    const int m = static_cast<int>(X.cols());
    if (m <= 0 || m >= n)
        throw InputError("covariate matrix must satisfy 0 < m < n, got m=" +
                         std::to_string(m) + ", n=" + std::to_string(n));

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < m)
        throw InputError(
            "covariate matrix is rank deficient (collinear columns): rank " +
            std::to_string(qr.rank()) + " < m = " + std::to_string(m));

    // Columns of Q beyond the first m form an orthonormal basis of the
    // orthogonal complement of col(X).
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
    Projector proj;
    proj.L = Q.rightCols(n - m).transpose();
    proj.m = m;
    return proj;
}

ProjectedOuter project(const GowerMatrix& M, const Projector& L) {
    if (M.M.rows() != L.n())
        throw InputError("projector has " + std::to_string(L.n()) +
                         " columns but M is " + std::to_string(M.M.rows()) +
                         "-dimensional");
    ProjectedOuter out;
    out.Z = L.L * M.M * L.L.transpose();
    out.Z = 0.5 * (out.Z + out.Z.transpose()).eval();
    return out;
}

std::optional<int> check_distinct_branch(const BranchProportions& P,
                                         double tol_rel) {
    const int n = P.n_samples();
    const int K = P.n_branches();
    if (n < 2 || K == 0) return std::nullopt;

    const double scale = P.P.array().abs().maxCoeff();
    const double tol = tol_rel * std::max(scale, 1e-300);

    int best = -1;
    double best_gap = tol;
    std::vector<double> vals(n);
    for (int k = 0; k < K; ++k) {
        for (int i = 0; i < n; ++i) vals[i] = P.P(i, k);
        std::sort(vals.begin(), vals.end());
        double min_gap = vals[n - 1] - vals[0];
        for (int i = 0; i + 1 < n; ++i)
            min_gap = std::min(min_gap, vals[i + 1] - vals[i]);
        if (min_gap > best_gap) {
            best_gap = min_gap;
            best = k;
        }
    }
    if (best < 0) return std::nullopt;
    return best;
}

}  // namespace kinfrac
