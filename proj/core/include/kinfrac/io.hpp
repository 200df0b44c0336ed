#ifndef KINFRAC_IO_HPP
#define KINFRAC_IO_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "kinfrac/diversity.hpp"
#include "kinfrac/models.hpp"

namespace kinfrac {

/// FNV-1a 64-bit digest (non-cryptographic; used for manifests, cache keys
/// and RNG stream derivation).
std::uint64_t fnv1a64(std::string_view data);

/// Shortest decimal that round-trips the double exactly ("%.17g").
std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

/// Square matrix with a sample-id header row and column, tab-separated.
void write_matrix_tsv(const std::string& path,
                      const std::vector<std::string>& sample_ids,
                      const Eigen::MatrixXd& M);
DissimilarityMatrix read_matrix_tsv(const std::string& path);

/// CSV with header; first column sample id, remaining columns numeric.
struct CovariateTable {
    std::vector<std::string> sample_ids;
    std::vector<std::string> names;
    Eigen::MatrixXd values;  // n x m
};
CovariateTable read_covariates_csv(const std::string& path);

/// CSV: sample_id, family_id, zygosity in {MZ, DZ, NA}; header required.
struct FamilyTable {
    std::vector<std::string> sample_ids;
    std::vector<std::string> family_ids;
    std::map<std::string, Zygosity> zygosity;  // per family
};
FamilyTable read_family_csv(const std::string& path);

/// Embedding output: sample id plus coord_1..coord_d per row.
void write_embedding_tsv(const std::string& path,
                         const std::vector<std::string>& sample_ids,
                         const Eigen::MatrixXd& coords);

}  // namespace kinfrac

#endif
