#ifndef KINFRAC_TEST_UTIL_HPP
#define KINFRAC_TEST_UTIL_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "kinfrac/abundance.hpp"
#include "kinfrac/models.hpp"
#include "kinfrac/numerics.hpp"
#include "kinfrac/phylo.hpp"

namespace kinfrac::testutil {

// Random rooted binary tree grown by leaf attachment; lengths uniform(0, 2].
inline PhyloTree random_tree(Rng& rng, int n_leaves) {
    std::string newick;
    std::vector<std::string> leaves;
    for (int i = 0; i < n_leaves; ++i)
        leaves.push_back("L" + std::to_string(i + 1));

    auto len = [&]() {
        return std::to_string(0.05 + 1.95 * rng.uniform());
    };
    // Maintain a forest of newick fragments, repeatedly joining two.
    std::vector<std::string> frags;
    for (const auto& l : leaves) frags.push_back(l + ":" + len());
    while (frags.size() > 1) {
        const int a = static_cast<int>(rng.below(frags.size()));
        std::string fa = frags[a];
        frags.erase(frags.begin() + a);
        const int b = static_cast<int>(rng.below(frags.size()));
        std::string fb = frags[b];
        frags.erase(frags.begin() + b);
        if (frags.empty() || rng.uniform() < 0.8) {
            frags.push_back("(" + fa + "," + fb + "):" + len());
        } else {
            // occasional multifurcation
            const int c = static_cast<int>(rng.below(frags.size()));
            std::string fc = frags[c];
            frags.erase(frags.begin() + c);
            frags.push_back("(" + fa + "," + fb + "," + fc + "):" + len());
        }
    }
    return parse_newick(frags[0] + ";");
}

// Strictly positive rows on the simplex.
inline RelAbundance random_abundance(Rng& rng, int n, const PhyloTree& tree) {
    RelAbundance rel;
    rel.otu_ids = tree.leaf_labels();
    const int R = static_cast<int>(rel.otu_ids.size());
    for (int i = 0; i < n; ++i)
        rel.sample_ids.push_back("s" + std::to_string(i + 1));
    rel.theta.resize(n, R);
    for (int i = 0; i < n; ++i) {
        for (int r = 0; r < R; ++r)
            rel.theta(i, r) = 0.05 + rng.uniform();
        rel.theta.row(i) /= rel.theta.row(i).sum();
    }
    return rel;
}

// Cofactor-expansion determinant; the independent oracle for small matrices.
inline double determinant_cofactor(const Eigen::MatrixXd& A) {
    const int n = static_cast<int>(A.rows());
    if (n == 1) return A(0, 0);
    double det = 0.0;
    for (int j = 0; j < n; ++j) {
        Eigen::MatrixXd minor(n - 1, n - 1);
        for (int r = 1; r < n; ++r) {
            int cc = 0;
            for (int c = 0; c < n; ++c) {
                if (c == j) continue;
                minor(r - 1, cc++) = A(r, c);
            }
        }
        const double sign = (j % 2 == 0) ? 1.0 : -1.0;
        det += sign * A(0, j) * determinant_cofactor(minor);
    }
    return det;
}

// Canonical newick (children sorted by smallest descendant label) for
// isomorphism comparisons.
inline std::string canonical_newick(const PhyloTree& tree) {
    const int n = tree.node_count();
    std::vector<std::vector<int>> children(n);
    for (int i = 0; i < n - 1; ++i)
        children[tree.node(i).parent].push_back(i);

    std::vector<std::string> min_label(n);
    std::vector<std::string> repr(n);
    for (int i = 0; i < n; ++i) {
        const auto& nd = tree.node(i);
        if (nd.is_leaf) {
            min_label[i] = nd.label;
            repr[i] = nd.label;
        } else {
            std::sort(children[i].begin(), children[i].end(),
                      [&](int a, int b) { return min_label[a] < min_label[b]; });
            min_label[i] = min_label[children[i].front()];
            std::string s = "(";
            for (std::size_t c = 0; c < children[i].size(); ++c) {
                if (c) s += ",";
                s += repr[children[i][c]];
            }
            s += ")";
            repr[i] = s;
        }
        if (i != tree.root()) {
            char buf[40];
            std::snprintf(buf, sizeof(buf), ":%.12g", nd.branch_length);
            repr[i] += buf;
        }
    }
    return repr[tree.root()] + ";";
}

// Twin cohort (pairs adjacent, MZ first) without any abundance data.
inline CohortStructure twin_cohort(int n_mz, int n_dz) {
    std::vector<std::string> samples, families;
    std::map<std::string, Zygosity> zyg;
    for (int p = 0; p < n_mz + n_dz; ++p) {
        const bool mz = p < n_mz;
        const std::string fam =
            (mz ? "MZ" : "DZ") + std::to_string(mz ? p + 1 : p - n_mz + 1);
        zyg[fam] = mz ? Zygosity::MZ : Zygosity::DZ;
        families.push_back(fam);
        families.push_back(fam);
        samples.push_back(fam + "a");
        samples.push_back(fam + "b");
    }
    const int n = static_cast<int>(samples.size());
    return build_cohort(samples, families, zyg, intercept_only(n));
}

// Draws y from the ACE model y = g + c + e with the cohort's A/C/E.
inline Eigen::VectorXd draw_ace_response(const CohortStructure& cohort,
                                         const AceComponents& sigma2,
                                         Rng& rng) {
    const int n = cohort.n();
    Eigen::MatrixXd Sigma = sigma2.sigma2_A * cohort.A +
                            sigma2.sigma2_C * cohort.C +
                            sigma2.sigma2_E * Eigen::MatrixXd::Identity(n, n);
    Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
    return llt.matrixL() * rng.normal_vector(n);
}

}  // namespace kinfrac::testutil

#endif
