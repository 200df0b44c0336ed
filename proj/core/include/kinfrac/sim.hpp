#ifndef KINFRAC_SIM_HPP
#define KINFRAC_SIM_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kinfrac/abundance.hpp"
#include "kinfrac/analysis.hpp"
#include "kinfrac/models.hpp"
#include "kinfrac/numerics.hpp"
#include "kinfrac/ordination.hpp"
#include "kinfrac/phylo.hpp"

namespace kinfrac {

// ---------------------------------------------------------------------------
// Twin-cohort abundance simulation: log-normal absolute abundances with
// equicorrelation rho0, normalized to the simplex, then pairwise shrinkage of
// the designated OTUs towards the geometric family mean (strength gamma0 for
// MZ pairs, gamma0/2 for DZ pairs), and a final renormalization.
// ---------------------------------------------------------------------------
struct SimConfig {
    int n_mz = 50;
    int n_dz = 50;
    int R = 10;
    Eigen::VectorXd mu0;       // empty = zero vector of length R
    double sigma0_sq = 2.0;
    double rho0 = 0.0;         // equicorrelation, in [0, 1)
    double gamma0 = 0.0;       // MZ shrinkage strength, in [0, 1]
    std::vector<int> shrunk;   // 0-based OTU column indices to shrink
};

void validate_sim_config(const SimConfig& config);

struct TwinData {
    RelAbundance rel;
    CohortStructure cohort;  // intercept-only X; twin pairs adjacent
};

/// otu_ids names the R simulated columns (normally tree leaf labels).
TwinData gen_twin_abundances(const SimConfig& config,
                             const std::vector<std::string>& otu_ids,
                             Rng& rng);

/// Multinomial read counts at fixed sequencing depth xi per sample.
OtuTable subsample_depth(const RelAbundance& theta, long long xi, Rng& rng);

/// Ten-leaf tree with the internal-node layout used by the power studies
/// (labels T1..T9; leaf OTU_1..OTU_6 form the shrunk clade under T4).
std::string default_simulation_tree();

// ---------------------------------------------------------------------------
// Power / type-I-error study over a (gamma0, rho0) grid, tree nodes and
// estimation methods. Each (cell, round) draws its own data with an RNG
// stream derived from (seed, cell key, round), so the grid is parallelizable
// and resumable cell by cell.
// ---------------------------------------------------------------------------
struct PowerStudyConfig {
    SimConfig base;                   // gamma0/rho0 overridden by the grid
    std::vector<double> gamma0_grid{0.0};
    std::vector<double> rho0_grid{0.0};
    std::vector<std::string> nodes;   // internal-node labels or indices
    std::vector<Method> methods{Method::wishart};
    int n_sim = 200;
    int n_perm = 100;
    double alpha = 0.05;
    double pseudo = 1.0;              // unused by the generator (continuous
                                      // theta); kept for config round-trips
    FitConfig fit{.restarts = 1};
    MdsConfig mds{};
    std::uint64_t seed = 0;
    int threads = 1;
};

struct PowerCell {
    double gamma0 = 0.0;
    double rho0 = 0.0;
    std::string node;
    Method method = Method::wishart;
    bool applicable = true;  // false: method undefined at this node ("---")
    int n_sim = 0;
    int n_done = 0;
    int n_reject = 0;
    int n_failed = 0;
    double rate = 0.0;
    double wilson_lo = 0.0;  // 95% Wilson score interval for the rate
    double wilson_hi = 0.0;
};

struct PowerTable {
    std::vector<PowerCell> cells;
};

/// Stable identifier used for per-cell RNG stream derivation and resume files.
std::string power_cell_key(double gamma0, double rho0, const std::string& node,
                           Method method);

/// `cache` may return a previously computed cell (resume); `hook` is invoked
/// after each freshly computed cell.
PowerTable power_study(
    const PhyloTree& tree, const PowerStudyConfig& config,
    const std::function<std::optional<PowerCell>(const std::string& key)>&
        cache = {},
    const std::function<void(const std::string& key, const PowerCell&)>& hook =
        {});

}  // namespace kinfrac

#endif
