#include "kinfrac/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace kinfrac {

const char* method_name(Method m) {
    switch (m) {
        case Method::wishart: return "wishart";
        case Method::logit: return "logit";
        case Method::boxcox: return "boxcox";
        case Method::pc1: return "pc1";
        case Method::pc2: return "pc2";
        case Method::pc3: return "pc3";
        case Method::mmds: return "mmds";
        case Method::nmds: return "nmds";
    }
    return "?";
}

std::optional<Method> parse_method(const std::string& name) {
    for (Method m : {Method::wishart, Method::logit, Method::boxcox,
                     Method::pc1, Method::pc2, Method::pc3, Method::mmds,
                     Method::nmds})
        if (name == method_name(m)) return m;
    return std::nullopt;
}

namespace {

Eigen::VectorXd node_abundance(const RelAbundance& rel,
                               const std::optional<std::set<std::string>>& otus) {
    if (!otus)
        throw NotApplicableError(
            "node abundance over the whole tree is identically 1; univariate "
            "methods are undefined here");
    std::vector<int> cols;
    for (int r = 0; r < rel.n_otus(); ++r)
        if (otus->count(rel.otu_ids[r])) cols.push_back(r);
    if (cols.empty())
        throw InputError("no OTU column matches the requested subset");
    if (static_cast<int>(cols.size()) == rel.n_otus())
        throw NotApplicableError(
            "subset covers every OTU, so the node abundance is identically 1; "
            "univariate methods are undefined here");
    Eigen::VectorXd theta_e = Eigen::VectorXd::Zero(rel.n_samples());
    for (int c : cols) theta_e += rel.theta.col(c);
    return theta_e;
}

void finish_normal(MethodAnalysis& out, const Eigen::VectorXd& y,
                   const CohortStructure& cohort,
                   const AnalysisOptions& options) {
    const Projector L = kernel_projector(cohort.X);
    auto ws = std::make_shared<NormalWorkspace>(
        make_normal_workspace(y, L, cohort.C));
    const FitConfig fit_cfg = options.fit;
    NormalFit fit = normal_reml_fit_with_grm(*ws, cohort.A, fit_cfg);
    out.h = fit.h;
    for (const auto& w : fit.warnings) out.warnings.push_back(w);
    out.normal = std::move(fit);

    if (options.permute_c) {
        const Eigen::MatrixXd C = cohort.C;
        const Eigen::VectorXd ycopy = y;
        const Projector Lcopy = L;
        out.refit = [ws, C, ycopy, Lcopy, fit_cfg](
                        const Eigen::MatrixXd& A_perm,
                        const std::vector<int>& perm) {
            const int n = static_cast<int>(C.rows());
            Eigen::MatrixXd C_perm(n, n);
            for (int r = 0; r < n; ++r)
                for (int s = 0; s < n; ++s) C_perm(r, s) = C(perm[r], perm[s]);
            NormalWorkspace ws2 = make_normal_workspace(ycopy, Lcopy, C_perm);
            return normal_reml_fit_with_grm(ws2, A_perm, fit_cfg).h;
        };
    } else {
        out.refit = [ws, fit_cfg](const Eigen::MatrixXd& A_perm,
                                  const std::vector<int>&) {
            return normal_reml_fit_with_grm(*ws, A_perm, fit_cfg).h;
        };
    }
}

void analyze_from_dissimilarity(MethodAnalysis& out,
                                const DissimilarityMatrix& U,
                                const CohortStructure& cohort, Method method,
                                const AnalysisOptions& options) {
    if (U.n() != cohort.n())
        throw InputError("dissimilarity matrix and cohort sample counts differ");

    if (method == Method::wishart) {
        const Projector L = kernel_projector(cohort.X);
        const GowerMatrix M = gower_center(U);
        const ProjectedOuter Z = project(M, L);
        auto ws = std::make_shared<WishartWorkspace>(
            make_wishart_workspace(Z, L, cohort.C));
        const FitConfig fit_cfg = options.fit;
        WishartFit fit = wishart_fit_with_grm(*ws, cohort.A, fit_cfg);
        out.h = fit.h;
        for (const auto& w : fit.warnings) out.warnings.push_back(w);
        out.wishart = std::move(fit);

        if (options.permute_c) {
            const Eigen::MatrixXd C = cohort.C;
            const Projector Lcopy = L;
            const ProjectedOuter Zcopy = Z;
            out.refit = [ws, C, Lcopy, Zcopy, fit_cfg](
                            const Eigen::MatrixXd& A_perm,
                            const std::vector<int>& perm) {
                const int n = static_cast<int>(C.rows());
                Eigen::MatrixXd C_perm(n, n);
                for (int r = 0; r < n; ++r)
                    for (int s = 0; s < n; ++s)
                        C_perm(r, s) = C(perm[r], perm[s]);
                WishartWorkspace ws2 =
                    make_wishart_workspace(Zcopy, Lcopy, C_perm);
                return wishart_fit_with_grm(ws2, A_perm, fit_cfg).h;
            };
        } else {
            out.refit = [ws, fit_cfg](const Eigen::MatrixXd& A_perm,
                                      const std::vector<int>&) {
                return wishart_fit_with_grm(*ws, A_perm, fit_cfg).h;
            };
        }
        return;
    }

    Eigen::VectorXd y;
    switch (method) {
        case Method::pc1:
        case Method::pc2:
        case Method::pc3: {
            const int j = method == Method::pc1 ? 1
                          : method == Method::pc2 ? 2 : 3;
            const GowerMatrix M = gower_center(U);
            const Embedding e = pcoa(M, j);
            y = e.coords.col(j - 1);
            break;
        }
        case Method::mmds: {
            const Embedding e = metric_mds(U, 1, options.mds);
            out.mds_stress = e.stress;
            if (!e.converged)
                out.warnings.push_back("metric MDS hit the iteration cap");
            y = e.coords.col(0);
            break;
        }
        case Method::nmds: {
            const Embedding e = nonmetric_mds(U, 1, options.mds);
            out.mds_stress = e.stress;
            if (!e.converged)
                out.warnings.push_back("non-metric MDS hit the iteration cap");
            y = e.coords.col(0);
            break;
        }
        default:
            throw InputError(
                "this method needs raw abundances, not a dissimilarity matrix");
    }
    finish_normal(out, y, cohort, options);
}

}  // namespace

MethodAnalysis analyze_method(const PhyloTree& tree, const RelAbundance& rel,
                              const std::optional<std::set<std::string>>& otus,
                              const CohortStructure& cohort, Method method,
                              const AnalysisOptions& options) {
    if (rel.n_samples() != cohort.n())
        throw InputError("abundance table and cohort sample counts differ");

    MethodAnalysis out;
    out.method = method;

    if (method == Method::logit || method == Method::boxcox) {
        Eigen::VectorXd y;
        if (method == Method::logit) {
            y = logit_response(node_abundance(rel, otus));
        } else {
            BoxCoxResponse bc = boxcox_response(node_abundance(rel, otus));
            out.boxcox_lambda = bc.lambda;
            if (bc.degenerate)
                out.warnings.push_back(
                    "Box-Cox profile is flat; lambda = 1 by tie-break");
            y = bc.y;
        }
        finish_normal(out, y, cohort, options);
        return out;
    }

    std::optional<BranchSet> subset;
    if (otus) subset = branch_subset(tree, *otus);
    const BranchProportions P = branch_proportions(rel, tree);
    if (method == Method::wishart) {
        out.distinct_branch = check_distinct_branch(P);
        if (!out.distinct_branch)
            out.warnings.push_back(
                "no branch has all-distinct proportions; positive "
                "definiteness of Z is not guaranteed");
    }
    const DissimilarityMatrix U = root_unifrac(P, tree, subset);
    analyze_from_dissimilarity(out, U, cohort, method, options);
    return out;
}

MethodAnalysis analyze_method_from_dissimilarity(const DissimilarityMatrix& U,
                                                 const CohortStructure& cohort,
                                                 Method method,
                                                 const AnalysisOptions& options) {
    MethodAnalysis out;
    out.method = method;
    if (method == Method::logit || method == Method::boxcox)
        throw InputError(
            "logit/boxcox need raw abundances, not a dissimilarity matrix");
    analyze_from_dissimilarity(out, U, cohort, method, options);
    return out;
}

std::vector<std::vector<int>> family_members(const CohortStructure& cohort) {
    std::vector<std::vector<int>> families;
    std::vector<std::string> order;
    for (int i = 0; i < cohort.n(); ++i) {
        const std::string& fid = cohort.family_ids[i];
        auto it = std::find(order.begin(), order.end(), fid);
        if (it == order.end()) {
            order.push_back(fid);
            families.push_back({i});
        } else {
            families[static_cast<std::size_t>(it - order.begin())].push_back(i);
        }
    }
    return families;
}

double bootstrap_refit(const PhyloTree& tree, const RelAbundance& rel,
                       const std::optional<std::set<std::string>>& otus,
                       const CohortStructure& cohort, Method method,
                       const AnalysisOptions& options,
                       const std::vector<int>& draw) {
    const std::vector<std::vector<int>> families = family_members(cohort);

    // Resampled sample list: each drawn family contributes its members, in
    // original order, as a fresh independent family carrying its covariates.
    std::vector<int> rows;
    std::vector<std::string> family_ids;
    for (std::size_t copy = 0; copy < draw.size(); ++copy) {
        const auto& members = families.at(draw[copy]);
        for (int s : members) {
            rows.push_back(s);
            family_ids.push_back("boot" + std::to_string(copy));
        }
    }
    const int n = static_cast<int>(rows.size());

    RelAbundance rel_star;
    rel_star.otu_ids = rel.otu_ids;
    rel_star.theta.resize(n, rel.n_otus());
    CohortStructure cohort_star;
    cohort_star.family_ids = family_ids;
    cohort_star.X.resize(n, cohort.X.cols());
    cohort_star.A = Eigen::MatrixXd::Identity(n, n);
    cohort_star.C = Eigen::MatrixXd::Identity(n, n);

    for (int i = 0; i < n; ++i) {
        rel_star.sample_ids.push_back(cohort.sample_ids[rows[i]] + "@" +
                                      std::to_string(i));
        rel_star.theta.row(i) = rel.theta.row(rows[i]);
        cohort_star.X.row(i) = cohort.X.row(rows[i]);
    }
    cohort_star.sample_ids = rel_star.sample_ids;

    // Intra-family covariances copied from the source family; copies of the
    // same family stay mutually independent.
    int offset = 0;
    for (std::size_t copy = 0; copy < draw.size(); ++copy) {
        const auto& members = families.at(draw[copy]);
        const int f = static_cast<int>(members.size());
        for (int a = 0; a < f; ++a) {
            for (int b = 0; b < f; ++b) {
                cohort_star.A(offset + a, offset + b) =
                    cohort.A(members[a], members[b]);
                cohort_star.C(offset + a, offset + b) =
                    cohort.C(members[a], members[b]);
            }
        }
        offset += f;
    }

    MethodAnalysis fit =
        analyze_method(tree, rel_star, otus, cohort_star, method, options);
    return fit.h;
}

}  // namespace kinfrac
