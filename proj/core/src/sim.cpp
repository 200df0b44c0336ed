#include "kinfrac/sim.hpp"

#include <algorithm>
#include <cmath>

#include "kinfrac/analysis.hpp"
#include "kinfrac/inference.hpp"
#include "kinfrac/io.hpp"
#include "kinfrac/threading.hpp"

namespace kinfrac {

void validate_sim_config(const SimConfig& config) {
    if (config.n_mz < 0 || config.n_dz < 0 || config.n_mz + config.n_dz < 1)
        throw InputError("simulation needs at least one twin pair");
    if (config.R < 2) throw InputError("simulation needs R >= 2 OTUs");
    if (config.mu0.size() != 0 && config.mu0.size() != config.R)
        throw InputError("mu0 length must be R (or empty for zeros)");
    if (!(config.sigma0_sq > 0.0))
        throw InputError("sigma0_sq must be positive");
    if (!(config.rho0 >= 0.0 && config.rho0 < 1.0))
        throw InputError("rho0 must lie in [0, 1)");
    if (!(config.gamma0 >= 0.0 && config.gamma0 <= 1.0))
        throw InputError("gamma0 must lie in [0, 1]");
    for (int r : config.shrunk)
        if (r < 0 || r >= config.R)
            throw InputError("shrunk OTU index " + std::to_string(r) +
                             " out of range");
}

TwinData gen_twin_abundances(const SimConfig& config,
                             const std::vector<std::string>& otu_ids,
                             Rng& rng) {
    validate_sim_config(config);
    const int R = config.R;
    if (static_cast<int>(otu_ids.size()) != R)
        throw InputError("otu_ids length must equal R");

    const int n_pairs = config.n_mz + config.n_dz;
    const int n = 2 * n_pairs;

    // Sigma0 = sigma0^2 ((1-rho0) I + rho0 11'); one Cholesky serves all draws.
    Eigen::MatrixXd Sigma0 =
        config.sigma0_sq *
        ((1.0 - config.rho0) * Eigen::MatrixXd::Identity(R, R).array() +
         config.rho0)
            .matrix();
    Eigen::LLT<Eigen::MatrixXd> llt(Sigma0);
    if (llt.info() != Eigen::Success)
        throw NumericalError("Sigma0 is not positive definite");
    const Eigen::MatrixXd S_half = llt.matrixL();
    const Eigen::VectorXd mu =
        config.mu0.size() == R ? config.mu0 : Eigen::VectorXd::Zero(R);

    TwinData out;
    out.rel.otu_ids = otu_ids;
    out.rel.theta.resize(n, R);

    std::vector<std::string> family_ids;
    std::map<std::string, Zygosity> zygosity;
    for (int i = 0; i < n; ++i) {
        const int pair = i / 2;
        const bool mz = pair < config.n_mz;
        const std::string fam =
            (mz ? "MZ" : "DZ") + std::to_string(mz ? pair + 1
                                                   : pair - config.n_mz + 1);
        family_ids.push_back(fam);
        zygosity[fam] = mz ? Zygosity::MZ : Zygosity::DZ;
        out.rel.sample_ids.push_back(fam + (i % 2 == 0 ? "a" : "b"));
    }

    // log a_i ~ N(mu0, Sigma0), theta_i = a_i / sum_r a_ir.
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd z = rng.normal_vector(R);
        const Eigen::VectorXd log_a = mu + S_half * z;
        Eigen::VectorXd a = log_a.array().exp();
        out.rel.theta.row(i) = a / a.sum();
    }

    // Pairwise shrinkage towards the geometric family mean on the designated
    // OTUs, then renormalization to the simplex.
    for (int pair = 0; pair < n_pairs; ++pair) {
        const int i = 2 * pair, j = 2 * pair + 1;
        const double gamma =
            pair < config.n_mz ? config.gamma0 : 0.5 * config.gamma0;
        if (gamma == 0.0 || config.shrunk.empty()) continue;
        for (int r : config.shrunk) {
            const double ti = out.rel.theta(i, r);
            const double tj = out.rel.theta(j, r);
            const double g = std::sqrt(ti * tj);
            out.rel.theta(i, r) = std::pow(g, gamma) * std::pow(ti, 1.0 - gamma);
            out.rel.theta(j, r) = std::pow(g, gamma) * std::pow(tj, 1.0 - gamma);
        }
    }
    for (int i = 0; i < n; ++i) out.rel.theta.row(i) /= out.rel.theta.row(i).sum();

    out.cohort = build_cohort(out.rel.sample_ids, family_ids, zygosity,
                              intercept_only(n));
    return out;
}

OtuTable subsample_depth(const RelAbundance& theta, long long xi, Rng& rng) {
    if (xi < 1) throw InputError("sequencing depth must be >= 1");
    const int n = theta.n_samples();
    const int R = theta.n_otus();

    OtuTable out;
    out.sample_ids = theta.sample_ids;
    out.otu_ids = theta.otu_ids;
    out.counts.setZero(n, R);

    std::vector<double> cdf(R);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int r = 0; r < R; ++r) {
            acc += theta.theta(i, r);
            cdf[r] = acc;
        }
        cdf[R - 1] = std::max(cdf[R - 1], 1.0);  // guard the last bucket
        for (long long draw = 0; draw < xi; ++draw) {
            const double u = rng.uniform() * acc;
            const int r = static_cast<int>(
                std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
            out.counts(i, std::min(r, R - 1)) += 1.0;
        }
    }
    out.depths = out.counts.rowwise().sum();
    return out;
}

std::string default_simulation_tree() {
    // Ten leaves; T4 holds the six-OTU clade the generator shrinks, T9 sits
    // outside it. Lengths are fixed plausible values (results only depend on
    // their ratios).
    return "((((((OTU_1:0.08,OTU_2:0.11)T6:0.05,((OTU_3:0.07,OTU_4:0.09)T8:0.04,"
           "OTU_5:0.12)T7:0.06)T5:0.07,OTU_6:0.15)T4:0.09,OTU_7:0.21)T3:0.06,"
           "(OTU_8:0.10,OTU_9:0.13)T9:0.08)T2:0.05,OTU_10:0.25)T1;";
}

std::string power_cell_key(double gamma0, double rho0, const std::string& node,
                           Method method) {
    return "g" + format_double(gamma0) + "_r" + format_double(rho0) + "_n" +
           node + "_m" + method_name(method);
}

namespace {

struct RoundOutcome {
    enum class State { rejected, accepted, not_applicable, failed };
    State state = State::failed;
};

std::pair<double, double> wilson_interval(int successes, int trials) {
    if (trials == 0) return {0.0, 1.0};
    const double z = 1.959963984540054;  // 97.5% normal quantile
    const double phat = static_cast<double>(successes) / trials;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / trials;
    const double center = (phat + z2 / (2.0 * trials)) / denom;
    const double half =
        z * std::sqrt(phat * (1.0 - phat) / trials + z2 / (4.0 * trials * trials)) /
        denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

}  // namespace

PowerTable power_study(
    const PhyloTree& tree, const PowerStudyConfig& config,
    const std::function<std::optional<PowerCell>(const std::string& key)>&
        cache,
    const std::function<void(const std::string& key, const PowerCell&)>&
        hook) {
    if (config.n_sim < 1) throw InputError("n_sim must be >= 1");
    if (config.n_perm < 1) throw InputError("n_perm must be >= 1");
    if (config.nodes.empty()) throw InputError("no nodes requested");
    if (config.methods.empty()) throw InputError("no methods requested");
    if (static_cast<int>(tree.leaf_count()) != config.base.R)
        throw InputError("tree has " + std::to_string(tree.leaf_count()) +
                         " leaves but the simulation uses R = " +
                         std::to_string(config.base.R));

    const std::vector<std::string> otu_ids = tree.leaf_labels();
    const std::set<std::string> all_leaves(otu_ids.begin(), otu_ids.end());

    PowerTable table;
    for (double gamma0 : config.gamma0_grid) {
        for (double rho0 : config.rho0_grid) {
            for (const std::string& node_key : config.nodes) {
                const int node = tree.resolve_internal_node(node_key);
                std::set<std::string> node_otus;
                if (node == tree.root()) {
                    node_otus = all_leaves;
                } else {
                    node_otus = descendant_leaves(tree, node);
                }
                // Whole-tree analyses pass no subset so that Eq.-7-style
                // restriction reduces to the plain dissimilarity.
                std::optional<std::set<std::string>> otus;
                if (node != tree.root()) otus = node_otus;

                for (Method method : config.methods) {
                    const std::string key =
                        power_cell_key(gamma0, rho0, node_key, method);
                    if (cache) {
                        if (auto hit = cache(key)) {
                            table.cells.push_back(*hit);
                            continue;
                        }
                    }

                    SimConfig sim = config.base;
                    sim.gamma0 = gamma0;
                    sim.rho0 = rho0;

                    AnalysisOptions opts;
                    opts.fit = config.fit;
                    opts.mds = config.mds;

                    std::vector<RoundOutcome> outcomes(config.n_sim);
                    parallel_for(
                        config.n_sim, resolve_threads(config.threads),
                        [&](int round) {
                            const std::uint64_t base = fnv1a64(
                                key + "#" + std::to_string(round));
                            Rng rng = Rng::stream(config.seed, base);
                            RoundOutcome& oc = outcomes[round];
                            try {
                                TwinData data =
                                    gen_twin_abundances(sim, otu_ids, rng);
                                MethodAnalysis fit = analyze_method(
                                    tree, data.rel, otus, data.cohort, method,
                                    opts);
                                PermutationResult perm = permutation_test(
                                    fit.refit, data.cohort.A, config.n_perm,
                                    config.seed ^ (base * 0x9e3779b97f4a7c15ULL),
                                    /*threads=*/1);
                                oc.state = perm.p_value < config.alpha
                                               ? RoundOutcome::State::rejected
                                               : RoundOutcome::State::accepted;
                            } catch (const NotApplicableError&) {
                                oc.state = RoundOutcome::State::not_applicable;
                            } catch (const std::exception&) {
                                oc.state = RoundOutcome::State::failed;
                            }
                        });

                    PowerCell cell;
                    cell.gamma0 = gamma0;
                    cell.rho0 = rho0;
                    cell.node = node_key;
                    cell.method = method;
                    cell.n_sim = config.n_sim;
                    int n_na = 0;
                    for (const auto& oc : outcomes) {
                        switch (oc.state) {
                            case RoundOutcome::State::rejected:
                                ++cell.n_reject;
                                ++cell.n_done;
                                break;
                            case RoundOutcome::State::accepted:
                                ++cell.n_done;
                                break;
                            case RoundOutcome::State::not_applicable:
                                ++n_na;
                                break;
                            case RoundOutcome::State::failed:
                                ++cell.n_failed;
                                break;
                        }
                    }
                    cell.applicable = n_na == 0;
                    if (cell.applicable && cell.n_done > 0) {
                        cell.rate =
                            static_cast<double>(cell.n_reject) / cell.n_done;
                        const auto [lo, hi] =
                            wilson_interval(cell.n_reject, cell.n_done);
                        cell.wilson_lo = lo;
                        cell.wilson_hi = hi;
                    }
                    if (hook) hook(key, cell);
                    table.cells.push_back(cell);
                }
            }
        }
    }
    return table;
}

}  // namespace kinfrac
