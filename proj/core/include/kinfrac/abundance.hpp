#ifndef KINFRAC_ABUNDANCE_HPP
#define KINFRAC_ABUNDANCE_HPP

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "kinfrac/errors.hpp"
#include "kinfrac/phylo.hpp"

namespace kinfrac {

// ---------------------------------------------------------------------------
// OTU count table, sample-major in memory (n samples x R OTUs). On disk the
// dominant convention is transposed (rows = OTUs, columns = samples) and is
// what load_otu_table expects.
// ---------------------------------------------------------------------------
struct OtuTable {
    std::vector<std::string> sample_ids;  // n
    std::vector<std::string> otu_ids;     // R
    Eigen::MatrixXd counts;               // n x R, non-negative integers
    Eigen::VectorXd depths;               // row sums N_i

    int n_samples() const { return static_cast<int>(sample_ids.size()); }
    int n_otus() const { return static_cast<int>(otu_ids.size()); }
};

/// Relative abundances theta, rows on the simplex.
struct RelAbundance {
    std::vector<std::string> sample_ids;
    std::vector<std::string> otu_ids;
    Eigen::MatrixXd theta;  // n x R, rows sum to 1

    int n_samples() const { return static_cast<int>(sample_ids.size()); }
    int n_otus() const { return static_cast<int>(otu_ids.size()); }
};

/// Per-sample abundance mass under each branch of a tree (p_{i,k}).
struct BranchProportions {
    std::vector<std::string> sample_ids;
    Eigen::MatrixXd P;  // n x K, branch k = post-order node id k

    int n_samples() const { return static_cast<int>(sample_ids.size()); }
    int n_branches() const { return static_cast<int>(P.cols()); }
};

/// Reads a tab-separated table: header row of sample ids, first column OTU
/// ids, integer cells; lines starting with '#' are comments. Throws
/// InputError on non-integer cells, negative counts, duplicate ids or ragged
/// rows.
OtuTable load_otu_table(std::istream& in);
OtuTable parse_otu_table(const std::string& text);

/// theta_ir = (x_ir + pseudo) / (N_i + R*pseudo). pseudo must be >= 0 and
/// every sample must satisfy N_i + R*pseudo > 0.
RelAbundance to_relative(const OtuTable& table, double pseudo);

/// Drops OTUs present (count > 0) in fewer than min_fraction of samples.
OtuTable filter_by_prevalence(const OtuTable& table, double min_fraction);

/// p_{i,k} = sum of theta_ir over OTUs under branch k. OTUs in the table must
/// all exist as tree leaves; tree leaves absent from the table contribute 0.
BranchProportions branch_proportions(const RelAbundance& rel,
                                     const PhyloTree& tree);

}  // namespace kinfrac

#endif
