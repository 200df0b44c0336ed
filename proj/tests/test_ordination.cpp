#include <doctest.h>

#include <cmath>

#include "kinfrac/analysis.hpp"
#include "kinfrac/ordination.hpp"
#include "test_util.hpp"

using namespace kinfrac;

namespace {

DissimilarityMatrix euclidean_line(const std::vector<double>& xs) {
    DissimilarityMatrix U;
    const int n = static_cast<int>(xs.size());
    for (int i = 0; i < n; ++i) U.sample_ids.push_back("s" + std::to_string(i));
    U.U.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) U.U(i, j) = std::abs(xs[i] - xs[j]);
    return U;
}

DissimilarityMatrix random_unifrac(Rng& rng, int n_leaves, int n) {
    PhyloTree tree = testutil::random_tree(rng, n_leaves);
    RelAbundance rel = testutil::random_abundance(rng, n, tree);
    return root_unifrac(branch_proportions(rel, tree), tree);
}

}  // namespace

TEST_CASE("pcoa on a two-point configuration") {
    DissimilarityMatrix U = euclidean_line({0.0, 1.3});
    GowerMatrix M = gower_center(U);
    Embedding e = pcoa(M, 1);
    CHECK(std::abs(e.coords(0, 0) - e.coords(1, 0)) == doctest::Approx(1.3));
    CHECK(std::abs(e.coords(0, 0)) == doctest::Approx(0.65));

    GowerMatrix zero;
    zero.M = Eigen::MatrixXd::Zero(3, 3);
    zero.numerical_rank = 0;
    CHECK_THROWS_AS(pcoa(zero, 1), InputError);
    CHECK_THROWS_AS(pcoa(M, 0), InputError);
    CHECK_THROWS_AS(pcoa(M, 2), InputError);  // beyond rank
}

TEST_CASE("full-rank pcoa reconstructs the dissimilarities") {
    Rng rng(31);
    for (int rep = 0; rep < 10; ++rep) {
        const int n = 4 + static_cast<int>(rng.below(10));
        DissimilarityMatrix U =
            random_unifrac(rng, 4 + static_cast<int>(rng.below(8)), n);
        GowerMatrix M = gower_center(U);
        REQUIRE(M.numerical_rank == n - 1);
        Embedding e = pcoa(M, n - 1);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double d = (e.coords.row(i) - e.coords.row(j)).norm();
                CHECK(d == doctest::Approx(U.U(i, j)).epsilon(1e-8));
            }
    }
}

TEST_CASE("pcoa energy and sign conventions") {
    Rng rng(32);
    DissimilarityMatrix U = random_unifrac(rng, 6, 9);
    GowerMatrix M = gower_center(U);
    Embedding e = pcoa(M, M.numerical_rank);
    CHECK(e.eigenvalues.sum() ==
          doctest::Approx(M.M.trace()).epsilon(1e-10));
    // eigenvalues non-increasing; proportions of variance well-defined
    for (int j = 1; j < e.eigenvalues.size(); ++j)
        CHECK(e.eigenvalues[j] <= e.eigenvalues[j - 1] + 1e-12);
    // sign convention: the first non-negligible coordinate of each
    // eigenvector (coords column / sqrt(lambda)) is positive
    for (int j = 0; j < e.coords.cols(); ++j) {
        const double scale = e.coords.col(j).cwiseAbs().maxCoeff();
        for (int i = 0; i < e.coords.rows(); ++i) {
            if (std::abs(e.coords(i, j)) > 1e-12 * scale) {
                CHECK(e.coords(i, j) > 0.0);
                break;
            }
        }
    }
    // orthogonal columns
    for (int a = 0; a < e.coords.cols(); ++a)
        for (int b = a + 1; b < e.coords.cols(); ++b)
            CHECK(std::abs(e.coords.col(a).dot(e.coords.col(b))) <
                  1e-8 * e.coords.col(a).norm() * e.coords.col(b).norm());
}

TEST_CASE("metric MDS: exact one-dimensional fit") {
    DissimilarityMatrix U = euclidean_line({0.0, 0.7, 1.9, 3.1, 4.0});
    Embedding e = metric_mds(U, 1);
    CHECK(e.stress <= 1e-8);
    CHECK(e.converged);
    CHECK_THROWS_AS(metric_mds(U, 0), InputError);
}

TEST_CASE("metric MDS stress is non-increasing") {
    Rng rng(33);
    DissimilarityMatrix U = random_unifrac(rng, 7, 12);
    MdsConfig cfg;
    cfg.max_iters = 100;
    Embedding e = metric_mds(U, 1, cfg);
    REQUIRE(e.stress_history.size() >= 2);
    for (std::size_t i = 1; i < e.stress_history.size(); ++i)
        CHECK(e.stress_history[i] <=
              e.stress_history[i - 1] * (1.0 + 1e-12) + 1e-300);
}

TEST_CASE("isotonic regression by pool-adjacent-violators") {
    Eigen::Vector3d v(3.0, 1.0, 2.0);
    const Eigen::VectorXd dec = isotonic_fit(v, false);
    CHECK(dec[0] == doctest::Approx(3.0));
    CHECK(dec[1] == doctest::Approx(1.5));
    CHECK(dec[2] == doctest::Approx(1.5));

    const Eigen::VectorXd inc = isotonic_fit(v, true);
    CHECK(inc[0] == doctest::Approx(2.0));
    CHECK(inc[1] == doctest::Approx(2.0));
    CHECK(inc[2] == doctest::Approx(2.0));

    // already monotone input is untouched
    Eigen::Vector4d mono(0.1, 0.4, 0.5, 2.0);
    CHECK((isotonic_fit(mono, true) - mono).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("non-metric MDS: monotone-compatible input fits exactly") {
    DissimilarityMatrix U = euclidean_line({0.0, 1.0, 2.5, 4.5});
    Embedding e = nonmetric_mds(U, 1);
    CHECK(e.stress <= 1e-6);

    // determinism for a fixed seed, including under dissimilarity ties
    DissimilarityMatrix T = euclidean_line({0.0, 1.0, 2.0, 3.0});
    MdsConfig cfg;
    Embedding e1 = nonmetric_mds(T, 1, cfg);
    Embedding e2 = nonmetric_mds(T, 1, cfg);
    CHECK(e1.stress == e2.stress);
    CHECK((e1.coords - e2.coords).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("MDS stress is invariant to sample reordering") {
    Rng rng(34);
    DissimilarityMatrix U = random_unifrac(rng, 6, 10);
    const int n = U.n();
    std::vector<int> perm = Rng(77).permutation(n);
    DissimilarityMatrix V;
    V.sample_ids = U.sample_ids;
    V.U.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) V.U(i, j) = U.U(perm[i], perm[j]);

    MdsConfig cfg;
    cfg.max_iters = 2000;
    cfg.rel_tol = 1e-12;
    Embedding a = metric_mds(U, 1, cfg);
    Embedding b = metric_mds(V, 1, cfg);
    CHECK(a.stress == doctest::Approx(b.stress).epsilon(1e-9));

    Embedding na = nonmetric_mds(U, 1, cfg);
    Embedding nb = nonmetric_mds(V, 1, cfg);
    CHECK(na.stress == doctest::Approx(nb.stress).epsilon(1e-9));
}

TEST_CASE("embedding coordinates feed the normal REML fit directly") {
    Rng rng(35);
    CohortStructure cohort = testutil::twin_cohort(4, 4);
    PhyloTree tree = testutil::random_tree(rng, 6);
    RelAbundance rel = testutil::random_abundance(rng, cohort.n(), tree);
    DissimilarityMatrix U = root_unifrac(branch_proportions(rel, tree), tree);
    Embedding e = pcoa(gower_center(U), 1);
    NormalFit fit = normal_reml_fit(e.coords.col(0), cohort);
    CHECK(std::isfinite(fit.loglik));
    CHECK(fit.h >= 0.0);
    CHECK(fit.h <= 1.0);
}

TEST_CASE("pc1 analysis equals the pcoa + normal REML composition") {
    Rng rng(36);
    CohortStructure cohort = testutil::twin_cohort(5, 5);
    PhyloTree tree = testutil::random_tree(rng, 7);
    RelAbundance rel = testutil::random_abundance(rng, cohort.n(), tree);

    MethodAnalysis via_analysis =
        analyze_method(tree, rel, std::nullopt, cohort, Method::pc1);

    DissimilarityMatrix U = root_unifrac(branch_proportions(rel, tree), tree);
    Embedding e = pcoa(gower_center(U), 1);
    NormalFit direct = normal_reml_fit(e.coords.col(0), cohort);

    CHECK(via_analysis.h == direct.h);
    CHECK(via_analysis.normal->loglik == direct.loglik);
}
