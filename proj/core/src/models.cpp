#include "kinfrac/models.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

namespace kinfrac {

namespace {

constexpr double k_t_clamp = 25.0;  // starting points stay in exp-safe range

double floored_sigma(double t, double floor) {
    const double e = std::exp(t);
    return e > floor ? e : floor;
}

double floored_sigma_dt(double t, double floor) {
    const double e = std::exp(t);
    return e > floor ? e : 0.0;
}

Eigen::VectorXd clamp_start(Eigen::VectorXd t) {
    for (int i = 0; i < t.size(); ++i)
        t[i] = std::clamp(t[i], -k_t_clamp, k_t_clamp);
    return t;
}

double frobenius_dot(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a.array() * b.array()).sum();
}

// Components that cannot be told apart make h unidentifiable; flag it.
void append_alias_warnings(const Eigen::MatrixXd& GA, const Eigen::MatrixXd& GC,
                           const Eigen::MatrixXd& GE,
                           std::vector<std::string>& warnings) {
    const double scale = std::max({GA.cwiseAbs().maxCoeff(),
                                   GC.cwiseAbs().maxCoeff(),
                                   GE.cwiseAbs().maxCoeff(), 1e-300});
    auto same = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        return (a - b).cwiseAbs().maxCoeff() <= 1e-10 * scale;
    };
    if (same(GA, GC) || same(GA, GE))
        warnings.push_back(
            "variance components are aliased (A matches C or E after "
            "projection); only their sum is identified and h is not "
            "meaningful");
}

struct StartSet {
    std::vector<Eigen::VectorXd> starts;
};

StartSet make_starts(const Eigen::VectorXd& moment_start, int restarts,
                     std::uint64_t seed) {
    StartSet s;
    s.starts.push_back(clamp_start(moment_start));
    for (int r = 1; r < restarts; ++r) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(r));
        Eigen::VectorXd t = moment_start;
        for (int i = 0; i < t.size(); ++i) t[i] += 1.5 * rng.normal();
        s.starts.push_back(clamp_start(t));
    }
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Cohort
// ---------------------------------------------------------------------------

CohortStructure build_cohort(
    const std::vector<std::string>& sample_ids,
    const std::vector<std::string>& family_ids,
    const std::map<std::string, Zygosity>& family_zygosity,
    const Eigen::MatrixXd& X) {
    const int n = static_cast<int>(sample_ids.size());
    if (static_cast<int>(family_ids.size()) != n)
        throw InputError("family ids and sample ids differ in length");
    if (X.rows() != n)
        throw InputError("covariate matrix has " + std::to_string(X.rows()) +
                         " rows for " + std::to_string(n) + " samples");

    CohortStructure cohort;
    cohort.sample_ids = sample_ids;
    cohort.family_ids = family_ids;
    cohort.X = X;
    cohort.A = Eigen::MatrixXd::Identity(n, n);
    cohort.C = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (family_ids[i] != family_ids[j]) continue;
            cohort.C(i, j) = cohort.C(j, i) = 1.0;
            auto it = family_zygosity.find(family_ids[i]);
            const Zygosity z =
                it == family_zygosity.end() ? Zygosity::Unknown : it->second;
            double a = 0.0;
            if (z == Zygosity::MZ) a = 1.0;
            else if (z == Zygosity::DZ) a = 0.5;
            cohort.A(i, j) = cohort.A(j, i) = a;
        }
    }
    return cohort;
}

void validate_cohort(const CohortStructure& cohort) {
    const int n = cohort.n();
    if (cohort.A.rows() != n || cohort.A.cols() != n ||
        cohort.C.rows() != n || cohort.C.cols() != n)
        throw InputError("A/C dimensions do not match the sample count");
    if ((cohort.A - cohort.A.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
        (cohort.C - cohort.C.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw InputError("A and C must be symmetric");
    for (int i = 0; i < n; ++i) {
        if (std::abs(cohort.A(i, i) - 1.0) > 1e-12 ||
            std::abs(cohort.C(i, i) - 1.0) > 1e-12)
            throw InputError("A and C must have unit diagonals");
    }
    if (cohort.A.minCoeff() < -1e-12 || cohort.A.maxCoeff() > 1.0 + 1e-12)
        throw InputError("A entries must lie in [0, 1]");
}

Eigen::MatrixXd intercept_only(int n) { return Eigen::MatrixXd::Ones(n, 1); }

double heritability(const AceComponents& c) {
    const double total = c.sigma2_A + c.sigma2_C + c.sigma2_E;
    if (!(total > 0.0))
        throw NumericalError("heritability: total variance is not positive");
    return c.sigma2_A / total;
}

// ---------------------------------------------------------------------------
// Wishart REML
// ---------------------------------------------------------------------------

WishartWorkspace make_wishart_workspace(const ProjectedOuter& Z,
                                        const Projector& L,
                                        const Eigen::MatrixXd& C) {
    const int p = L.p();
    const int n = L.n();
    if (Z.Z.rows() != p || Z.Z.cols() != p)
        throw InputError("Z dimensions do not match the projector");
    if (C.rows() != n || C.cols() != n)
        throw InputError("C dimensions do not match the projector");

    const double ortho_err =
        (L.L * L.L.transpose() - Eigen::MatrixXd::Identity(p, p))
            .cwiseAbs()
            .maxCoeff();
    if (ortho_err > 1e-8)
        throw InputError("projector rows are not orthonormal (residual " +
                         std::to_string(ortho_err) + ")");

    // Throws NotPositiveDefiniteError when Z is singular or indefinite,
    // e.g. a rank-deficient outer product from univariate data.
    PsdFactor zf = logdet_psd(Z.Z);

    WishartWorkspace ws;
    ws.p = p;
    ws.logdet_Z = zf.logdet;
    ws.tr_Z = Z.Z.trace();

    const Eigen::MatrixXd R = zf.llt.matrixL();
    ws.T = R.triangularView<Eigen::Lower>().solve(L.L);
    const Eigen::MatrixXd Rinv = R.triangularView<Eigen::Lower>().solve(
        Eigen::MatrixXd::Identity(p, p));
    ws.Ghat_E = Rinv * Rinv.transpose();
    ws.Ghat_E = 0.5 * (ws.Ghat_E + ws.Ghat_E.transpose()).eval();
    ws.Ghat_C = ws.T * C * ws.T.transpose();
    ws.Ghat_C = 0.5 * (ws.Ghat_C + ws.Ghat_C.transpose()).eval();
    ws.LtL = L.L.transpose() * L.L;
    ws.tr_GC = frobenius_dot(C, ws.LtL);
    ws.tr_GE = static_cast<double>(p);
    return ws;
}

namespace {

// Negated Wishart log-likelihood and gradient in t = (tA, tC, tE, tq).
struct WishartObjective {
    const WishartWorkspace& ws;
    const Eigen::MatrixXd& Ghat_A;
    double floor;

    mutable Eigen::MatrixXd Shat, What, What2;

    double operator()(const Eigen::VectorXd& t, Eigen::VectorXd& grad) const {
        const int p = ws.p;
        for (int i = 0; i < 4; ++i)
            if (!std::isfinite(t[i]) || t[i] > 690.0)
                return std::numeric_limits<double>::infinity();
        // q - (p-1) = exp(t_q) must stay representable above the Gamma_p
        // domain edge; the likelihood diverges to -inf there anyway.
        if (t[3] < -30.0) return std::numeric_limits<double>::infinity();

        const double sA = floored_sigma(t[0], floor);
        const double sC = floored_sigma(t[1], floor);
        const double sE = floored_sigma(t[2], floor);
        const double q = (p - 1) + std::exp(t[3]);
        if (!std::isfinite(q))
            return std::numeric_limits<double>::infinity();

        Shat = sA * Ghat_A + sC * ws.Ghat_C + sE * ws.Ghat_E;
        Eigen::LLT<Eigen::MatrixXd> llt(Shat);
        if (llt.info() != Eigen::Success)
            return std::numeric_limits<double>::infinity();

        const double logdet_Shat =
            2.0 * llt.matrixLLT().diagonal().array().log().sum();
        const double logdet_S = ws.logdet_Z + logdet_Shat;
        What = llt.solve(Eigen::MatrixXd::Identity(p, p));
        const double tr_SinvZ = What.trace();

        const double loglik = -0.5 * q * logdet_S - 0.5 * tr_SinvZ +
                              0.5 * (q - p - 1) * ws.logdet_Z -
                              0.5 * q * p * std::numbers::ln2 -
                              log_multivariate_gamma(p, 0.5 * q);
        if (!std::isfinite(loglik))
            return std::numeric_limits<double>::infinity();

        What2.noalias() = What * What;
        const double trA = frobenius_dot(What, Ghat_A);
        const double trC = frobenius_dot(What, ws.Ghat_C);
        const double trE = frobenius_dot(What, ws.Ghat_E);
        const double trAZ = frobenius_dot(What2, Ghat_A);
        const double trCZ = frobenius_dot(What2, ws.Ghat_C);
        const double trEZ = frobenius_dot(What2, ws.Ghat_E);

        const double dA = -0.5 * q * trA + 0.5 * trAZ;
        const double dC = -0.5 * q * trC + 0.5 * trCZ;
        const double dE = -0.5 * q * trE + 0.5 * trEZ;
        const double dq =
            -0.5 * logdet_S + 0.5 * ws.logdet_Z -
            0.5 * p * std::numbers::ln2 -
            0.5 * digamma_sum_multivariate_gamma(p, 0.5 * q);

        grad[0] = -dA * floored_sigma_dt(t[0], floor);
        grad[1] = -dC * floored_sigma_dt(t[1], floor);
        grad[2] = -dE * floored_sigma_dt(t[2], floor);
        grad[3] = -dq * std::exp(t[3]);
        return -loglik;
    }
};

}  // namespace

WishartFit wishart_fit_with_grm(const WishartWorkspace& ws,
                                const Eigen::MatrixXd& A,
                                const FitConfig& config) {
    Eigen::MatrixXd Ghat_A = ws.T * A * ws.T.transpose();
    Ghat_A = 0.5 * (Ghat_A + Ghat_A.transpose()).eval();
    const double tr_GA = frobenius_dot(A, ws.LtL);

    const int p = ws.p;
    WishartObjective obj{ws, Ghat_A, config.sigma_floor};
    Objective f = [&obj](const Eigen::VectorXd& t, Eigen::VectorXd& g) {
        return obj(t, g);
    };

    // Moment-matched start: even split scaled so that E tr(Z) = q0 tr(S)
    // holds at q0 = p + 1.
    const double tr_sum = tr_GA + ws.tr_GC + ws.tr_GE;
    double s0 = ws.tr_Z / (static_cast<double>(p + 1) * std::max(tr_sum, 1e-300));
    if (!(s0 > 0.0) || !std::isfinite(s0)) s0 = 1.0;
    Eigen::VectorXd t0(4);
    t0[0] = t0[1] = t0[2] = std::log(std::max(s0, 2.0 * config.sigma_floor));
    t0[3] = std::numbers::ln2;  // q0 = (p-1) + 2 = p + 1

    StartSet starts =
        make_starts(t0, std::max(1, config.restarts), config.restart_seed);

    OptimResult best;
    double best_q = 0.0;
    bool have = false;
    int total_evals = 0;
    for (const auto& start : starts.starts) {
        OptimResult r = minimize(f, start, config.optim);
        total_evals += r.evaluations;
        const double rq = (p - 1) + std::exp(r.argmin[3]);
        const double tie = 1e-12 * std::max(1.0, std::abs(r.value));
        if (!have || r.value < best.value - tie ||
            (std::abs(r.value - best.value) <= tie && rq < best_q)) {
            best = r;
            best_q = rq;
            have = true;
        }
    }
    if (!have || !std::isfinite(best.value))
        throw NumericalError(
            "wishart_fit: optimizer failed from every starting point");

    WishartFit fit;
    fit.components.sigma2_A = floored_sigma(best.argmin[0], config.sigma_floor);
    fit.components.sigma2_C = floored_sigma(best.argmin[1], config.sigma_floor);
    fit.components.sigma2_E = floored_sigma(best.argmin[2], config.sigma_floor);
    fit.q = best_q;
    fit.loglik = -best.value;
    fit.h = heritability(fit.components);
    fit.converged = best.converged;
    fit.grad_norm = best.grad_norm;
    fit.iterations = best.iterations;
    fit.evaluations = total_evals;

    append_alias_warnings(Ghat_A, ws.Ghat_C, ws.Ghat_E, fit.warnings);
    if (!fit.converged)
        fit.warnings.push_back("optimizer did not reach the gradient tolerance");
    for (const auto& [name, value] :
         {std::pair<const char*, double>{"sigma2_A", fit.components.sigma2_A},
          {"sigma2_C", fit.components.sigma2_C},
          {"sigma2_E", fit.components.sigma2_E}})
        if (value <= config.sigma_floor)
            fit.warnings.push_back(std::string(name) + " at the lower bound");
    return fit;
}

WishartFit wishart_fit(const ProjectedOuter& Z, const Projector& L,
                       const CohortStructure& cohort,
                       const FitConfig& config) {
    if (cohort.n() != L.n())
        throw InputError("cohort size does not match the projector");
    WishartWorkspace ws = make_wishart_workspace(Z, L, cohort.C);
    return wishart_fit_with_grm(ws, cohort.A, config);
}

// ---------------------------------------------------------------------------
// Normal REML
// ---------------------------------------------------------------------------

NormalWorkspace make_normal_workspace(const Eigen::VectorXd& y,
                                      const Projector& L,
                                      const Eigen::MatrixXd& C) {
    if (y.size() != L.n())
        throw InputError("response length does not match the projector");
    if (!y.allFinite()) throw InputError("response contains non-finite values");
    NormalWorkspace ws;
    ws.p = L.p();
    ws.L = L.L;
    ws.w = L.L * y;
    ws.G_C = L.L * C * L.L.transpose();
    ws.G_C = 0.5 * (ws.G_C + ws.G_C.transpose()).eval();
    ws.LtL = L.L.transpose() * L.L;
    ws.tr_GC = frobenius_dot(C, ws.LtL);
    ws.y_scale = std::max(1.0, y.cwiseAbs().maxCoeff());
    return ws;
}

namespace {

struct NormalObjective {
    const NormalWorkspace& ws;
    const Eigen::MatrixXd& G_A;
    double floor;

    mutable Eigen::MatrixXd S, W;

    double operator()(const Eigen::VectorXd& t, Eigen::VectorXd& grad) const {
        const int p = ws.p;
        for (int i = 0; i < 3; ++i)
            if (!std::isfinite(t[i]) || t[i] > 690.0)
                return std::numeric_limits<double>::infinity();

        const double sA = floored_sigma(t[0], floor);
        const double sC = floored_sigma(t[1], floor);
        const double sE = floored_sigma(t[2], floor);

        S = sA * G_A + sC * ws.G_C;
        S.diagonal().array() += sE;
        Eigen::LLT<Eigen::MatrixXd> llt(S);
        if (llt.info() != Eigen::Success)
            return std::numeric_limits<double>::infinity();

        const double logdet_S =
            2.0 * llt.matrixLLT().diagonal().array().log().sum();
        const Eigen::VectorXd v = llt.solve(ws.w);
        const double quad = ws.w.dot(v);
        const double loglik =
            -0.5 * (p * std::log(2.0 * std::numbers::pi) + logdet_S + quad);
        if (!std::isfinite(loglik))
            return std::numeric_limits<double>::infinity();

        W = llt.solve(Eigen::MatrixXd::Identity(p, p));
        const double dA =
            -0.5 * frobenius_dot(W, G_A) + 0.5 * v.dot(G_A * v);
        const double dC =
            -0.5 * frobenius_dot(W, ws.G_C) + 0.5 * v.dot(ws.G_C * v);
        const double dE = -0.5 * W.trace() + 0.5 * v.squaredNorm();

        grad[0] = -dA * floored_sigma_dt(t[0], floor);
        grad[1] = -dC * floored_sigma_dt(t[1], floor);
        grad[2] = -dE * floored_sigma_dt(t[2], floor);
        return -loglik;
    }
};

}  // namespace

NormalFit normal_reml_fit_with_grm(const NormalWorkspace& ws,
                                   const Eigen::MatrixXd& A,
                                   const FitConfig& config) {
    Eigen::MatrixXd G_A = ws.L * A * ws.L.transpose();
    G_A = 0.5 * (G_A + G_A.transpose()).eval();
    const double tr_GA = frobenius_dot(A, ws.LtL);
    const int p = ws.p;

    NormalObjective obj{ws, G_A, config.sigma_floor};
    Objective f = [&obj](const Eigen::VectorXd& t, Eigen::VectorXd& g) {
        return obj(t, g);
    };

    const double tr_sum = tr_GA + ws.tr_GC + p;
    double s0 = ws.w.squaredNorm() / std::max(tr_sum, 1e-300);
    if (!(s0 > 0.0) || !std::isfinite(s0)) s0 = 1.0;
    Eigen::VectorXd t0(3);
    t0.setConstant(std::log(std::max(s0, 2.0 * config.sigma_floor)));

    StartSet starts =
        make_starts(t0, std::max(1, config.restarts), config.restart_seed);

    OptimResult best;
    bool have = false;
    int total_evals = 0;
    for (const auto& start : starts.starts) {
        OptimResult r = minimize(f, start, config.optim);
        total_evals += r.evaluations;
        if (!have || r.value < best.value) {
            best = r;
            have = true;
        }
    }
    if (!have || !std::isfinite(best.value))
        throw NumericalError(
            "normal_reml_fit: optimizer failed from every starting point");

    NormalFit fit;
    fit.components.sigma2_A = floored_sigma(best.argmin[0], config.sigma_floor);
    fit.components.sigma2_C = floored_sigma(best.argmin[1], config.sigma_floor);
    fit.components.sigma2_E = floored_sigma(best.argmin[2], config.sigma_floor);
    fit.loglik = -best.value;
    fit.h = heritability(fit.components);
    fit.converged = best.converged;
    fit.grad_norm = best.grad_norm;
    fit.iterations = best.iterations;
    fit.evaluations = total_evals;

    if (ws.w.norm() <= 1e-12 * std::sqrt(static_cast<double>(p)) * ws.y_scale) {
        fit.degenerate = true;
        fit.warnings.push_back(
            "projected response is numerically zero; variance components sit "
            "at the lower bound and h is not meaningful");
    }
    Eigen::MatrixXd G_E = Eigen::MatrixXd::Identity(p, p);
    append_alias_warnings(G_A, ws.G_C, G_E, fit.warnings);
    if (!fit.converged)
        fit.warnings.push_back("optimizer did not reach the gradient tolerance");
    return fit;
}

NormalFit normal_reml_fit(const Eigen::VectorXd& y,
                          const CohortStructure& cohort,
                          const FitConfig& config) {
    if (y.size() != cohort.n())
        throw InputError("response length does not match the cohort");
    Projector L = kernel_projector(cohort.X);
    NormalWorkspace ws = make_normal_workspace(y, L, cohort.C);
    return normal_reml_fit_with_grm(ws, cohort.A, config);
}

// ---------------------------------------------------------------------------
// Univariate responses
// ---------------------------------------------------------------------------

Objective wishart_objective(const WishartWorkspace& ws,
                            const Eigen::MatrixXd& Ghat_A,
                            double sigma_floor) {
    auto ws_copy = std::make_shared<WishartWorkspace>(ws);
    auto ga_copy = std::make_shared<Eigen::MatrixXd>(Ghat_A);
    return [ws_copy, ga_copy, sigma_floor](const Eigen::VectorXd& t,
                                           Eigen::VectorXd& g) {
        WishartObjective obj{*ws_copy, *ga_copy, sigma_floor};
        return obj(t, g);
    };
}

Objective normal_objective(const NormalWorkspace& ws,
                           const Eigen::MatrixXd& G_A, double sigma_floor) {
    auto ws_copy = std::make_shared<NormalWorkspace>(ws);
    auto ga_copy = std::make_shared<Eigen::MatrixXd>(G_A);
    return [ws_copy, ga_copy, sigma_floor](const Eigen::VectorXd& t,
                                           Eigen::VectorXd& g) {
        NormalObjective obj{*ws_copy, *ga_copy, sigma_floor};
        return obj(t, g);
    };
}

Eigen::VectorXd logit_response(const Eigen::VectorXd& theta_node) {
    Eigen::VectorXd out(theta_node.size());
    for (int i = 0; i < theta_node.size(); ++i) {
        const double x = theta_node[i];
        if (!(x > 0.0 && x < 1.0))
            throw InputError(
                "logit requires values strictly inside (0, 1); entry " +
                std::to_string(i) + " is " + std::to_string(x) +
                " (apply a pseudo count first)");
        out[i] = std::log(x / (1.0 - x));
    }
    return out;
}

BoxCoxResponse boxcox_response(const Eigen::VectorXd& theta_node) {
    const int n = static_cast<int>(theta_node.size());
    if (n < 2) throw InputError("Box-Cox needs at least two observations");
    for (int i = 0; i < n; ++i)
        if (!(theta_node[i] > 0.0))
            throw InputError("Box-Cox requires strictly positive input; entry " +
                             std::to_string(i) + " is " +
                             std::to_string(theta_node[i]));

    const double log_sum = theta_node.array().log().sum();

    auto transform = [&](double lambda) -> Eigen::VectorXd {
        if (lambda == 0.0) return theta_node.array().log();
        return ((theta_node.array().pow(lambda)) - 1.0) / lambda;
    };

    // Profile log-likelihood of the transform-to-normal model with a free
    // location: ll(lambda) = -(n/2) log sigma2(lambda) + (lambda-1) sum log x.
    auto profile = [&](double lambda) -> double {
        const Eigen::VectorXd y = transform(lambda);
        const double mean = y.mean();
        const double sse = (y.array() - mean).square().sum();
        const double s2 = sse / n;
        if (s2 <= 0.0) return std::numeric_limits<double>::infinity();
        return -0.5 * n * std::log(s2) + (lambda - 1.0) * log_sum;
    };

    double best_lambda = 1.0;
    double best_ll = -std::numeric_limits<double>::infinity();
    bool any_degenerate = false;
    for (int step = -40; step <= 40; ++step) {
        const double lambda = step * 0.05;
        const double ll = profile(lambda);
        if (std::isinf(ll) && ll > 0) {
            any_degenerate = true;
            continue;  // zero variance: flat profile, handled below
        }
        if (ll > best_ll ||
            (ll == best_ll &&
             std::abs(lambda - 1.0) < std::abs(best_lambda - 1.0))) {
            best_ll = ll;
            best_lambda = lambda;
        }
    }

    BoxCoxResponse out;
    if (!std::isfinite(best_ll)) {
        // Constant input: every lambda is equally good.
        out.lambda = 1.0;
        out.degenerate = true;
    } else {
        out.lambda = best_lambda;
        out.degenerate = any_degenerate;
    }
    out.y = transform(out.lambda);
    return out;
}

}  // namespace kinfrac
