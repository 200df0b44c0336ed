#include "kinfrac/abundance.hpp"

#include <algorithm>
#include <cstdlib>
#include <istream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace kinfrac {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

double parse_count_cell(const std::string& cell, int line_no) {
    if (cell.empty())
        throw InputError("empty count cell on line " + std::to_string(line_no));
    char* end = nullptr;
    const long long v = std::strtoll(cell.c_str(), &end, 10);
    if (end != cell.c_str() + cell.size())
        throw InputError("non-integer count '" + cell + "' on line " +
                         std::to_string(line_no));
    if (v < 0)
        throw InputError("negative count '" + cell + "' on line " +
                         std::to_string(line_no));
    return static_cast<double>(v);
}

}  // namespace

OtuTable load_otu_table(std::istream& in) {
    std::string line;
    int line_no = 0;

    auto next_data_line = [&](std::string& out) -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            out = line;
            return true;
        }
        return false;
    };

    std::string header;
    if (!next_data_line(header)) throw InputError("OTU table is empty");
    std::vector<std::string> head = split_tabs(header);
    if (head.size() < 2)
        throw InputError("OTU table header needs at least one sample column");

    OtuTable table;
    table.sample_ids.assign(head.begin() + 1, head.end());
    const int n = table.n_samples();
    {
        std::unordered_set<std::string> seen;
        for (const auto& id : table.sample_ids) {
            if (id.empty()) throw InputError("empty sample id in header");
            if (!seen.insert(id).second)
                throw InputError("duplicate sample id '" + id + "'");
        }
    }

    std::vector<std::vector<double>> rows;  // one row per OTU (disk layout)
    std::unordered_set<std::string> otu_seen;
    std::string data;
    while (next_data_line(data)) {
        std::vector<std::string> cells = split_tabs(data);
        if (static_cast<int>(cells.size()) != n + 1)
            throw InputError("ragged row on line " + std::to_string(line_no) +
                             ": expected " + std::to_string(n + 1) +
                             " columns, got " + std::to_string(cells.size()));
        if (cells[0].empty())
            throw InputError("empty OTU id on line " + std::to_string(line_no));
        if (!otu_seen.insert(cells[0]).second)
            throw InputError("duplicate OTU id '" + cells[0] + "'");
        table.otu_ids.push_back(cells[0]);
        std::vector<double> row(n);
        for (int j = 0; j < n; ++j) row[j] = parse_count_cell(cells[j + 1], line_no);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw InputError("OTU table has no data rows");

    const int R = static_cast<int>(rows.size());
    table.counts.resize(n, R);
    for (int r = 0; r < R; ++r)
        for (int i = 0; i < n; ++i) table.counts(i, r) = rows[r][i];
    table.depths = table.counts.rowwise().sum();
    return table;
}

OtuTable parse_otu_table(const std::string& text) {
    std::istringstream in(text);
    return load_otu_table(in);
}

RelAbundance to_relative(const OtuTable& table, double pseudo) {
    if (pseudo < 0.0) throw InputError("pseudo count must be non-negative");
    const int n = table.n_samples();
    const int R = table.n_otus();

    RelAbundance rel;
    rel.sample_ids = table.sample_ids;
    rel.otu_ids = table.otu_ids;
    rel.theta.resize(n, R);
    for (int i = 0; i < n; ++i) {
        // Denominator as the actual sum of adjusted counts, so rows sum to 1
        // to rounding regardless of the depth bookkeeping.
        const double denom = (table.counts.row(i).array() + pseudo).sum();
        if (!(denom > 0.0))
            throw InputError("sample '" + table.sample_ids[i] +
                             "' has zero depth and pseudo count 0");
        rel.theta.row(i) = (table.counts.row(i).array() + pseudo) / denom;
    }
    return rel;
}

OtuTable filter_by_prevalence(const OtuTable& table, double min_fraction) {
    if (min_fraction < 0.0 || min_fraction > 1.0)
        throw InputError("prevalence threshold must be in [0, 1]");
    const int n = table.n_samples();
    std::vector<int> keep;
    for (int r = 0; r < table.n_otus(); ++r) {
        const int present = (table.counts.col(r).array() > 0.0).count();
        if (present >= min_fraction * n) keep.push_back(r);
    }
    if (keep.empty())
        throw InputError("prevalence filter removed every OTU");

    OtuTable out;
    out.sample_ids = table.sample_ids;
    out.counts.resize(n, static_cast<int>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
        out.otu_ids.push_back(table.otu_ids[keep[j]]);
        out.counts.col(static_cast<int>(j)) = table.counts.col(keep[j]);
    }
    out.depths = out.counts.rowwise().sum();
    return out;
}

BranchProportions branch_proportions(const RelAbundance& rel,
                                     const PhyloTree& tree) {
    const int n = rel.n_samples();
    const int R = rel.n_otus();
    const int K = tree.branch_count();

    // Map table columns onto leaf node ids; unknown OTUs are an error, tree
    // leaves missing from the table are implicitly zero.
    std::vector<int> leaf_node(R);
    for (int r = 0; r < R; ++r) {
        if (!tree.has_leaf(rel.otu_ids[r]))
            throw InputError("OTU '" + rel.otu_ids[r] +
                             "' is not a leaf of the tree");
        leaf_node[r] = tree.leaf_id(rel.otu_ids[r]);
    }

    BranchProportions bp;
    bp.sample_ids = rel.sample_ids;
    bp.P.setZero(n, K);

    // Post-order accumulation: seed leaves, then fold each branch into its
    // parent. The root (id K) has no branch and is skipped.
    Eigen::VectorXd acc(tree.node_count());
    for (int i = 0; i < n; ++i) {
        acc.setZero();
        for (int r = 0; r < R; ++r) acc[leaf_node[r]] = rel.theta(i, r);
        for (int k = 0; k < K; ++k) {
            bp.P(i, k) = acc[k];
            acc[tree.node(k).parent] += acc[k];
        }
    }
    return bp;
}

}  // namespace kinfrac
