#ifndef KINFRAC_ANALYSIS_HPP
#define KINFRAC_ANALYSIS_HPP

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kinfrac/diversity.hpp"
#include "kinfrac/inference.hpp"
#include "kinfrac/models.hpp"
#include "kinfrac/ordination.hpp"

namespace kinfrac {

/// Heritability estimators compared in the simulation studies.
enum class Method { wishart, logit, boxcox, pc1, pc2, pc3, mmds, nmds };

const char* method_name(Method m);
std::optional<Method> parse_method(const std::string& name);

struct AnalysisOptions {
    FitConfig fit{};
    MdsConfig mds{};
    bool permute_c = false;  // permutation rounds also permute C
};

// ---------------------------------------------------------------------------
// One heritability analysis: build the method's response from (tree, theta,
// OTU subset), fit the matching model, and expose a deterministic refit
// closure for permutation inference. `otus` restricts the analysis to a taxon
// (nullopt = whole tree); for the univariate methods it defines the node
// abundance theta^(e), for the dissimilarity methods the branch set k(R).
// ---------------------------------------------------------------------------
struct MethodAnalysis {
    Method method;
    double h = 0.0;
    std::optional<WishartFit> wishart;
    std::optional<NormalFit> normal;
    std::optional<double> boxcox_lambda;
    std::optional<double> mds_stress;
    std::optional<int> distinct_branch;  // witness branch, when one exists
    std::vector<std::string> warnings;
    GrmFit refit;  // h under a replacement GRM (same data otherwise)
};

MethodAnalysis analyze_method(const PhyloTree& tree, const RelAbundance& rel,
                              const std::optional<std::set<std::string>>& otus,
                              const CohortStructure& cohort, Method method,
                              const AnalysisOptions& options = {});

/// Same, starting from a precomputed dissimilarity matrix. Only the
/// dissimilarity-based methods apply; logit/boxcox need raw abundances.
MethodAnalysis analyze_method_from_dissimilarity(
    const DissimilarityMatrix& U, const CohortStructure& cohort, Method method,
    const AnalysisOptions& options = {});

/// Family-bootstrap closure: resamples families per `draw`, rebuilds the
/// cohort and the whole dissimilarity pipeline, refits, returns h.
double bootstrap_refit(const PhyloTree& tree, const RelAbundance& rel,
                       const std::optional<std::set<std::string>>& otus,
                       const CohortStructure& cohort, Method method,
                       const AnalysisOptions& options,
                       const std::vector<int>& draw);

/// Families in first-appearance order with their member sample indices.
std::vector<std::vector<int>> family_members(const CohortStructure& cohort);

}  // namespace kinfrac

#endif
