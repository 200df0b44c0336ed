#include "kinfrac/ordination.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace kinfrac {

namespace {

constexpr double k_rank_tol = 1e-8;

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
    const double scale = v.cwiseAbs().maxCoeff();
    if (scale <= 0.0) return;
    for (int i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > 1e-12 * scale) {
            if (v[i] < 0.0) v = -v;
            return;
        }
    }
}

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& X) {
    const int n = static_cast<int>(X.rows());
    Eigen::MatrixXd D(n, n);
    D.setZero();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double d = (X.row(i) - X.row(j)).norm();
            D(i, j) = d;
            D(j, i) = d;
        }
    return D;
}

double raw_stress(const Eigen::MatrixXd& D, const Eigen::MatrixXd& U) {
    double s = 0.0;
    for (int i = 0; i < D.rows(); ++i)
        for (int j = i + 1; j < D.cols(); ++j) {
            const double r = D(i, j) - U(i, j);
            s += r * r;
        }
    return s;
}

// Guttman transform with target dissimilarities `target` (equal weights).
Eigen::MatrixXd guttman_step(const Eigen::MatrixXd& X,
                             const Eigen::MatrixXd& D,
                             const Eigen::MatrixXd& target) {
    const int n = static_cast<int>(X.rows());
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double d = D(i, j);
            B(i, j) = d > 1e-300 ? -target(i, j) / d : 0.0;
        }
    }
    for (int i = 0; i < n; ++i) B(i, i) = -B.row(i).sum();
    return (B * X) / static_cast<double>(n);
}

Eigen::MatrixXd mds_init(const GowerMatrix& M, int d) {
    const int n = static_cast<int>(M.M.rows());
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, d);
    const int usable = std::min(d, M.numerical_rank);
    if (usable > 0) {
        Embedding e = pcoa(M, usable);
        X.leftCols(usable) = e.coords;
    }
    return X;
}

}  // namespace

Embedding pcoa(const GowerMatrix& M, int d) {
    const int n = static_cast<int>(M.M.rows());
    if (d < 1) throw InputError("pcoa: dimension must be >= 1");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M.M);
    if (eig.info() != Eigen::Success)
        throw NumericalError("pcoa: eigendecomposition failed");
    const Eigen::VectorXd& ev = eig.eigenvalues();  // ascending
    const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    const int rank = (ev.array() > k_rank_tol * scale).count();
    if (d > rank)
        throw InputError("pcoa: requested " + std::to_string(d) +
                         " coordinates but the numerical rank is " +
                         std::to_string(rank));

    Embedding out;
    out.coords.resize(n, d);
    out.eigenvalues.resize(d);
    for (int j = 0; j < d; ++j) {
        const int idx = n - 1 - j;  // descending order
        Eigen::VectorXd v = eig.eigenvectors().col(idx);
        fix_sign(v);
        const double lambda = std::max(ev[idx], 0.0);
        out.eigenvalues[j] = ev[idx];
        out.coords.col(j) = std::sqrt(lambda) * v;
    }
    return out;
}

Embedding metric_mds(const DissimilarityMatrix& U, int d,
                     const MdsConfig& config) {
    if (d < 1) throw InputError("metric_mds: dimension must be >= 1");
    const int n = U.n();

    GowerMatrix M = gower_center(U);
    Eigen::MatrixXd X = mds_init(M, d);

    Eigen::MatrixXd D = pairwise_distances(X);
    double stress = raw_stress(D, U.U);

    Embedding out;
    out.converged = false;
    out.stress_history.push_back(stress);
    int it = 0;
    for (; it < config.max_iters; ++it) {
        if (stress <= 1e-30) {
            out.converged = true;
            break;
        }
        const Eigen::MatrixXd X_new = guttman_step(X, D, U.U);
        const Eigen::MatrixXd D_new = pairwise_distances(X_new);
        const double stress_new = raw_stress(D_new, U.U);
        const bool small_step =
            (stress - stress_new) <= config.rel_tol * std::max(stress, 1e-300);
        X = X_new;
        D = D_new;
        stress = stress_new;
        out.stress_history.push_back(stress);
        if (small_step) {
            out.converged = true;
            ++it;
            break;
        }
    }
    out.coords = X;
    out.stress = stress;
    out.iterations = it;
    return out;
}

Eigen::VectorXd isotonic_fit(const Eigen::VectorXd& values, bool increasing) {
    const int n = static_cast<int>(values.size());
    if (!increasing) {
        Eigen::VectorXd neg = -values;
        return -isotonic_fit(neg, true);
    }
    // Pool adjacent violators with equal weights.
    std::vector<double> mean;
    std::vector<int> count;
    mean.reserve(n);
    count.reserve(n);
    for (int i = 0; i < n; ++i) {
        double m = values[i];
        int c = 1;
        while (!mean.empty() && mean.back() >= m) {
            m = (m * c + mean.back() * count.back()) / (c + count.back());
            c += count.back();
            mean.pop_back();
            count.pop_back();
        }
        mean.push_back(m);
        count.push_back(c);
    }
    Eigen::VectorXd out(n);
    int pos = 0;
    for (std::size_t b = 0; b < mean.size(); ++b)
        for (int k = 0; k < count[b]; ++k) out[pos++] = mean[b];
    return out;
}

namespace {

struct NmdsRun {
    Eigen::MatrixXd X;
    double stress1 = 0.0;
    std::vector<double> history;
    int iterations = 0;
    bool converged = false;
};

NmdsRun nmds_from(const Eigen::MatrixXd& X0, const Eigen::MatrixXd& U,
                  const MdsConfig& config) {
    const int n = static_cast<int>(U.rows());
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    const int np = static_cast<int>(pairs.size());

    NmdsRun run;
    run.X = X0;
    Eigen::MatrixXd D = pairwise_distances(run.X);
    Eigen::MatrixXd target(n, n);
    std::vector<int> order(np);
    Eigen::VectorXd dvec(np);

    double prev = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < config.max_iters; ++it) {
        // Primary approach to ties: within equal dissimilarities the fitted
        // values are unconstrained, realized by ordering ties by the current
        // configuration distance before isotonic regression.
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            const double ua = U(pairs[a].first, pairs[a].second);
            const double ub = U(pairs[b].first, pairs[b].second);
            if (ua != ub) return ua < ub;
            return D(pairs[a].first, pairs[a].second) <
                   D(pairs[b].first, pairs[b].second);
        });
        for (int k = 0; k < np; ++k)
            dvec[k] = D(pairs[order[k]].first, pairs[order[k]].second);
        const Eigen::VectorXd dhat = isotonic_fit(dvec, true);

        target.setZero();
        double num = 0.0, den = 0.0;
        for (int k = 0; k < np; ++k) {
            const auto [i, j] = pairs[order[k]];
            target(i, j) = dhat[k];
            target(j, i) = dhat[k];
            num += (dvec[k] - dhat[k]) * (dvec[k] - dhat[k]);
            den += dvec[k] * dvec[k];
        }
        const double stress1 = den > 1e-300 ? std::sqrt(num / den) : 0.0;
        run.stress1 = stress1;
        run.history.push_back(stress1);
        if (stress1 <= 1e-30 ||
            (std::isfinite(prev) &&
             (prev - stress1) <= config.rel_tol * std::max(prev, 1e-300))) {
            run.converged = true;
            ++it;
            break;
        }
        prev = stress1;

        run.X = guttman_step(run.X, D, target);
        D = pairwise_distances(run.X);
    }
    run.iterations = it;
    return run;
}

}  // namespace

Embedding nonmetric_mds(const DissimilarityMatrix& U, int d,
                        const MdsConfig& config) {
    if (d < 1) throw InputError("nonmetric_mds: dimension must be >= 1");
    const int n = U.n();

    GowerMatrix M = gower_center(U);
    std::vector<Eigen::MatrixXd> inits;
    inits.push_back(mds_init(M, d));
    for (int r = 0; r < config.restarts; ++r) {
        Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(r));
        Eigen::MatrixXd X(n, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) X(i, j) = rng.normal();
        inits.push_back(X);
    }

    NmdsRun best;
    bool have = false;
    for (const auto& X0 : inits) {
        NmdsRun run = nmds_from(X0, U.U, config);
        if (!have || run.stress1 < best.stress1) {
            best = run;
            have = true;
        }
    }

    Embedding out;
    out.coords = best.X;
    out.stress = best.stress1;
    out.stress_history = best.history;
    out.iterations = best.iterations;
    out.converged = best.converged;
    return out;
}

}  // namespace kinfrac
