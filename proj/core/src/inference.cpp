#include "kinfrac/inference.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "kinfrac/errors.hpp"
#include "kinfrac/numerics.hpp"
#include "kinfrac/threading.hpp"

namespace kinfrac {

namespace {

Eigen::MatrixXd permute_symmetric(const Eigen::MatrixXd& A,
                                  const std::vector<int>& perm) {
    const int n = static_cast<int>(A.rows());
    Eigen::MatrixXd out(n, n);
    for (int r = 0; r < n; ++r)
        for (int s = 0; s < n; ++s) out(r, s) = A(perm[r], perm[s]);
    return out;
}

}  // namespace

PermutationResult permutation_test(const GrmFit& fit, const Eigen::MatrixXd& A,
                                   int n_perm, std::uint64_t seed, int threads,
                                   bool add_one) {
    if (n_perm < 1) throw InputError("permutation_test: n_perm must be >= 1");
    const int n = static_cast<int>(A.rows());

    PermutationResult result;
    result.n_perm = n_perm;
    result.add_one = add_one;

    std::vector<int> identity(n);
    for (int i = 0; i < n; ++i) identity[i] = i;
    result.h_hat = fit(A, identity);

    std::vector<std::optional<double>> rounds(n_perm);
    parallel_for(n_perm, resolve_threads(threads), [&](int r) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(r));
        const std::vector<int> perm = rng.permutation(n);
        const Eigen::MatrixXd A_perm = permute_symmetric(A, perm);
        try {
            rounds[r] = fit(A_perm, perm);
        } catch (const std::exception&) {
            rounds[r] = std::nullopt;
        }
    });

    int count_greater = 0;
    for (const auto& h : rounds) {
        if (!h) {
            ++result.n_failed;
            continue;
        }
        result.h_perm.push_back(*h);
        if (*h > result.h_hat) ++count_greater;
    }
    const int completed = static_cast<int>(result.h_perm.size());
    if (completed == 0)
        throw NumericalError("permutation_test: every round failed");
    if (result.n_failed > 0.01 * n_perm)
        result.warnings.push_back(
            std::to_string(result.n_failed) + " of " + std::to_string(n_perm) +
            " permutation rounds failed; p-value computed over completed "
            "rounds");

    result.p_value = add_one
                         ? (1.0 + count_greater) / (1.0 + completed)
                         : static_cast<double>(count_greater) / completed;
    return result;
}

BootstrapResult bootstrap_ci(const FamilyFit& fit, double h_hat,
                             int n_families, int n_boot, double alpha,
                             std::uint64_t seed, int threads) {
    if (n_families < 2)
        throw InputError("bootstrap_ci: need at least two families");
    if (n_boot < 2) throw InputError("bootstrap_ci: n_boot must be >= 2");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw InputError("bootstrap_ci: alpha must be in (0, 1)");

    BootstrapResult result;
    result.h_hat = h_hat;
    result.alpha = alpha;
    result.n_boot = n_boot;

    constexpr int k_max_retries = 10;
    std::vector<std::optional<double>> rounds(n_boot);
    parallel_for(n_boot, resolve_threads(threads), [&](int r) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(r));
        for (int attempt = 0; attempt <= k_max_retries; ++attempt) {
            std::vector<int> draw(n_families);
            for (int f = 0; f < n_families; ++f)
                draw[f] = static_cast<int>(
                    rng.below(static_cast<std::uint64_t>(n_families)));
            try {
                rounds[r] = fit(draw);
                return;
            } catch (const std::exception&) {
                // fresh draw on the next attempt
            }
        }
    });

    for (const auto& h : rounds) {
        if (h)
            result.h_boot.push_back(*h);
        else
            ++result.n_failed;
    }
    const int completed = static_cast<int>(result.h_boot.size());
    if (completed < 2)
        throw NumericalError(
            "bootstrap_ci: fewer than two bootstrap rounds completed");
    if (result.n_failed > 0)
        result.warnings.push_back(std::to_string(result.n_failed) + " of " +
                                  std::to_string(n_boot) +
                                  " bootstrap rounds failed after retries");

    double mean = 0.0;
    for (double h : result.h_boot) mean += h;
    mean /= completed;
    double ss = 0.0;
    for (double h : result.h_boot) ss += (h - mean) * (h - mean);
    result.se = std::sqrt(ss / (completed - 1));
    if (result.se == 0.0)
        result.warnings.push_back(
            "bootstrap estimates are all identical; degenerate interval");

    const double z_lo = normal_quantile(alpha / 2.0);
    const double z_hi = normal_quantile(1.0 - alpha / 2.0);
    result.ci_raw = {h_hat + z_lo * result.se, h_hat + z_hi * result.se};
    result.ci_clipped = {std::clamp(result.ci_raw.first, 0.0, 1.0),
                         std::clamp(result.ci_raw.second, 0.0, 1.0)};
    result.clipped = result.ci_clipped != result.ci_raw;
    return result;
}

}  // namespace kinfrac
