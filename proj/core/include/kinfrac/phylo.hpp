#ifndef KINFRAC_PHYLO_HPP
#define KINFRAC_PHYLO_HPP

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kinfrac/errors.hpp"

namespace kinfrac {

// ---------------------------------------------------------------------------
// Rooted phylogenetic tree in stable post-order numbering.
//
// Nodes are stored in post-order, root last; every non-root node carries the
// branch to its parent, so branch k is identified with node k and the K
// branches are exactly the node ids 0..K-1 (K = node_count - 1). Post-order
// makes each subtree a contiguous id interval [first_descendant(v), v], which
// is what the branch/leaf subset queries below rely on. Immutable after
// construction; safe to share across threads.
// ---------------------------------------------------------------------------
class PhyloTree {
public:
    struct Node {
        int parent = -1;             // -1 for the root
        double branch_length = 0.0;  // length of the branch to the parent
        std::string label;           // empty for unlabeled internal nodes
        bool is_leaf = false;
        int first_descendant = 0;    // smallest id in this node's subtree
    };

    PhyloTree(std::vector<Node> nodes, std::vector<std::string> warnings);

    int node_count() const { return static_cast<int>(nodes_.size()); }
    int branch_count() const { return node_count() - 1; }  // K
    int leaf_count() const { return static_cast<int>(leaf_index_.size()); }
    int root() const { return node_count() - 1; }

    const Node& node(int id) const { return nodes_.at(id); }
    double branch_length(int branch_id) const;

    /// Node id for a leaf label; throws InputError on unknown labels.
    int leaf_id(const std::string& label) const;
    bool has_leaf(const std::string& label) const {
        return leaf_index_.count(label) > 0;
    }

    /// Leaf labels in post-order (the canonical OTU order for this tree).
    std::vector<std::string> leaf_labels() const;

    /// Internal node ids in post-order.
    std::vector<int> internal_nodes() const;

    /// Internal node lookup by label, or by 1-based post-order index when no
    /// label matches and `key` parses as an integer.
    int resolve_internal_node(const std::string& key) const;

    /// Non-fatal notes collected while parsing (e.g. defaulted branch lengths).
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    std::vector<Node> nodes_;
    std::unordered_map<std::string, int> leaf_index_;
    std::vector<std::string> warnings_;
};

/// Sorted set of branch ids; a subset of {0..K-1}.
struct BranchSet {
    std::vector<int> branch_ids;  // strictly increasing

    bool contains(int id) const;
    std::size_t size() const { return branch_ids.size(); }
};

/// Parses a single Newick tree. Accepts quoted labels, internal-node labels,
/// multifurcations and scientific-notation lengths; rejects NHX/bracket
/// comments. Missing branch lengths default to 0 with a warning.
PhyloTree parse_newick(std::string_view text);

/// Serializes back to Newick (labels quoted when needed, lengths via %.17g).
std::string to_newick(const PhyloTree& tree);

/// Branches whose full descendant-leaf set is contained in `otus`
/// (the set k(R) behind taxon-restricted dissimilarities).
BranchSet branch_subset(const PhyloTree& tree, const std::set<std::string>& otus);

/// Leaf labels below a branch; a leaf branch yields that single leaf.
std::set<std::string> descendant_leaves(const PhyloTree& tree, int branch_id);

}  // namespace kinfrac

#endif
