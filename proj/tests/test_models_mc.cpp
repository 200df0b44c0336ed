// Monte Carlo recovery checks for the REML fitters. Slower than the other
// unit suites (hundreds of full fits); kept in a separate binary.
#include <doctest.h>

#include <atomic>

#include "kinfrac/models.hpp"
#include "kinfrac/threading.hpp"
#include "test_util.hpp"

using namespace kinfrac;

TEST_CASE("normal REML recovers h = 0.5 on a 400-twin cohort") {
    const int n_reps = 200;
    const CohortStructure cohort = testutil::twin_cohort(100, 100);  // n = 400
    const Projector L = kernel_projector(cohort.X);
    const AceComponents truth{2.0, 1.0, 1.0};

    FitConfig cfg;
    cfg.restarts = 1;

    std::vector<double> h(n_reps);
    parallel_for(n_reps, resolve_threads(0), [&](int rep) {
        Rng rng = Rng::stream(9001, rep);
        const Eigen::VectorXd y = testutil::draw_ace_response(cohort, truth, rng);
        NormalWorkspace ws = make_normal_workspace(y, L, cohort.C);
        h[rep] = normal_reml_fit_with_grm(ws, cohort.A, cfg).h;
    });

    double mean = 0.0;
    for (double v : h) mean += v;
    mean /= n_reps;
    CHECK(mean == doctest::Approx(0.5).epsilon(0.1));  // 0.5 +- 0.05 absolute
    CHECK(std::abs(mean - 0.5) <= 0.05);
}

TEST_CASE("sigma2_A = 0 data pins the A component to the boundary") {
    const int n_reps = 200;
    const CohortStructure cohort = testutil::twin_cohort(50, 50);  // n = 200
    const Projector L = kernel_projector(cohort.X);
    const AceComponents truth{0.0, 1.0, 1.0};

    FitConfig cfg;
    cfg.restarts = 1;

    std::atomic<int> at_floor{0};
    std::vector<double> h(n_reps);
    parallel_for(n_reps, resolve_threads(0), [&](int rep) {
        Rng rng = Rng::stream(9002, rep);
        const Eigen::VectorXd y = testutil::draw_ace_response(cohort, truth, rng);
        NormalWorkspace ws = make_normal_workspace(y, L, cohort.C);
        NormalFit fit = normal_reml_fit_with_grm(ws, cohort.A, cfg);
        h[rep] = fit.h;
        if (fit.components.sigma2_A <= 1.01 * cfg.sigma_floor) ++at_floor;
    });

    double mean = 0.0;
    for (double v : h) mean += v;
    mean /= n_reps;
    CHECK(at_floor.load() > n_reps / 2);
    CHECK(mean <= 0.05);
}
