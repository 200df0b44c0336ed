#include "kinfrac/phylo.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace kinfrac {

PhyloTree::PhyloTree(std::vector<Node> nodes, std::vector<std::string> warnings)
    : nodes_(std::move(nodes)), warnings_(std::move(warnings)) {
    if (nodes_.empty()) throw InputError("tree has no nodes");
    for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
        const Node& nd = nodes_[i];
        if (nd.parent == -1 && i != root())
            throw InputError("tree has more than one root");
        if (nd.parent != -1 && nd.parent <= i)
            throw InputError("node ids are not in post-order");
        if (nd.branch_length < 0.0)
            throw InputError("negative branch length on node " +
                             std::to_string(i));
        if (nd.is_leaf) {
            if (nd.label.empty()) throw InputError("leaf without a label");
            if (!leaf_index_.emplace(nd.label, i).second)
                throw InputError("duplicate leaf label '" + nd.label + "'");
        }
    }
}

double PhyloTree::branch_length(int branch_id) const {
    if (branch_id < 0 || branch_id >= branch_count())
        throw InputError("branch id " + std::to_string(branch_id) +
                         " out of range [0, " + std::to_string(branch_count()) +
                         ")");
    return nodes_[branch_id].branch_length;
}

int PhyloTree::leaf_id(const std::string& label) const {
    auto it = leaf_index_.find(label);
    if (it == leaf_index_.end())
        throw InputError("unknown leaf label '" + label + "'");
    return it->second;
}

std::vector<std::string> PhyloTree::leaf_labels() const {
    std::vector<std::string> out;
    out.reserve(leaf_index_.size());
    for (const auto& nd : nodes_)
        if (nd.is_leaf) out.push_back(nd.label);
    return out;
}

std::vector<int> PhyloTree::internal_nodes() const {
    std::vector<int> out;
    for (int i = 0; i < node_count(); ++i)
        if (!nodes_[i].is_leaf) out.push_back(i);
    return out;
}

int PhyloTree::resolve_internal_node(const std::string& key) const {
    for (int i = 0; i < node_count(); ++i)
        if (!nodes_[i].is_leaf && nodes_[i].label == key) return i;
    // Fall back to a 1-based post-order index among internal nodes.
    char* end = nullptr;
    const long idx = std::strtol(key.c_str(), &end, 10);
    if (end && *end == '\0' && idx >= 1) {
        const std::vector<int> internals = internal_nodes();
        if (idx <= static_cast<long>(internals.size()))
            return internals[idx - 1];
    }
    throw InputError("no internal node matches '" + key +
                     "' (not a label, not a valid post-order index)");
}

bool BranchSet::contains(int id) const {
    return std::binary_search(branch_ids.begin(), branch_ids.end(), id);
}

// ---------------------------------------------------------------------------
// Newick parsing
// ---------------------------------------------------------------------------

namespace {

struct NewickParser {
    std::string_view text;
    std::size_t pos = 0;
    std::vector<PhyloTree::Node> nodes;
    std::vector<std::string> warnings;

    char peek() const { return pos < text.size() ? text[pos] : '\0'; }
    char take() { return pos < text.size() ? text[pos++] : '\0'; }

    void skip_space() {
        while (pos < text.size() &&
               std::isspace(static_cast<unsigned char>(text[pos])))
            ++pos;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(msg, pos);
    }

    std::string parse_label() {
        skip_space();
        if (peek() == '\'') {
            ++pos;
            std::string out;
            while (true) {
                if (pos >= text.size()) fail("unterminated quoted label");
                char c = take();
                if (c == '\'') {
                    if (peek() == '\'') {  // doubled quote escapes a quote
                        out.push_back('\'');
                        ++pos;
                    } else {
                        return out;
                    }
                } else {
                    out.push_back(c);
                }
            }
        }
        std::string out;
        while (pos < text.size()) {
            char c = text[pos];
            if (c == '(' || c == ')' || c == ',' || c == ':' || c == ';' ||
                std::isspace(static_cast<unsigned char>(c)))
                break;
            if (c == '[' || c == ']')
                fail("bracket comments / NHX annotations are not supported");
            out.push_back(c);
            ++pos;
        }
        return out;
    }

    double parse_length(bool& present) {
        skip_space();
        present = false;
        if (peek() != ':') return 0.0;
        ++pos;
        skip_space();
        const char* start = text.data() + pos;
        char* end = nullptr;
        const double v = std::strtod(start, &end);
        if (end == start) fail("expected a branch length after ':'");
        pos += static_cast<std::size_t>(end - start);
        if (!std::isfinite(v)) fail("non-finite branch length");
        if (v < 0.0) fail("negative branch length " + std::to_string(v));
        present = true;
        return v;
    }

    // Builds the subtree and returns its node id. Children are emitted before
    // their parent, which yields post-order ids directly.
    int parse_subtree() {
        skip_space();
        if (peek() == '(') {
            ++pos;
            std::vector<int> children;
            while (true) {
                children.push_back(parse_subtree());
                skip_space();
                const char c = take();
                if (c == ',') continue;
                if (c == ')') break;
                fail("expected ',' or ')' in subtree list");
            }
            std::string label = parse_label();
            bool has_len = false;
            const double len = parse_length(has_len);
            PhyloTree::Node nd;
            nd.label = std::move(label);
            nd.branch_length = len;
            nd.is_leaf = false;
            const int id = static_cast<int>(nodes.size());
            nd.first_descendant = nodes[children.front()].first_descendant;
            nodes.push_back(nd);
            for (int c : children) nodes[c].parent = id;
            if (!has_len) pending_missing.push_back(id);
            return id;
        }
        std::string label = parse_label();
        if (label.empty()) fail("leaf without a label");
        bool has_len = false;
        const double len = parse_length(has_len);
        PhyloTree::Node nd;
        nd.label = std::move(label);
        nd.branch_length = len;
        nd.is_leaf = true;
        const int id = static_cast<int>(nodes.size());
        nd.first_descendant = id;
        nodes.push_back(nd);
        if (!has_len) pending_missing.push_back(id);
        return id;
    }

    std::vector<int> pending_missing;  // nodes whose ':length' was absent

    PhyloTree run() {
        skip_space();
        if (pos >= text.size()) fail("empty input");
        const int root_id = parse_subtree();
        skip_space();
        if (take() != ';') fail("expected ';' terminating the tree");
        skip_space();
        if (pos < text.size()) fail("trailing content after ';'");

        if (nodes[root_id].branch_length != 0.0)
            warnings.push_back("branch length on the root is ignored");
        nodes[root_id].branch_length = 0.0;

        for (int id : pending_missing) {
            if (id == root_id) continue;  // root needs no branch
            warnings.push_back("missing branch length on node " +
                               std::to_string(id) + " defaulted to 0");
        }
        return PhyloTree(std::move(nodes), std::move(warnings));
    }
};

bool label_needs_quoting(const std::string& label) {
    for (char c : label) {
        if (c == '(' || c == ')' || c == ',' || c == ':' || c == ';' ||
            c == '[' || c == ']' || c == '\'' ||
            std::isspace(static_cast<unsigned char>(c)))
            return true;
    }
    return false;
}

std::string format_label(const std::string& label) {
    if (!label_needs_quoting(label)) return label;
    std::string out = "'";
    for (char c : label) {
        out.push_back(c);
        if (c == '\'') out.push_back('\'');
    }
    out.push_back('\'');
    return out;
}

std::string format_length(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

PhyloTree parse_newick(std::string_view text) {
    NewickParser p;
    p.text = text;
    return p.run();
}

std::string to_newick(const PhyloTree& tree) {
    const int n = tree.node_count();
    // Collect children per node; post-order ids make parents larger than
    // children so one forward pass suffices.
    std::vector<std::vector<int>> children(n);
    for (int i = 0; i < n - 1; ++i)
        children[tree.node(i).parent].push_back(i);

    std::string out;
    auto emit = [&](auto&& self, int id) -> void {
        const auto& nd = tree.node(id);
        if (!nd.is_leaf) {
            out.push_back('(');
            bool first = true;
            for (int c : children[id]) {
                if (!first) out.push_back(',');
                first = false;
                self(self, c);
            }
            out.push_back(')');
        }
        out += format_label(nd.label);
        if (id != tree.root()) {
            out.push_back(':');
            out += format_length(nd.branch_length);
        }
    };
    emit(emit, tree.root());
    out.push_back(';');
    return out;
}

BranchSet branch_subset(const PhyloTree& tree,
                        const std::set<std::string>& otus) {
    const int n = tree.node_count();
    for (const auto& label : otus) tree.leaf_id(label);  // validate labels

    // Prefix counts over post-order ids: total leaves and matching leaves.
    std::vector<int> leaf_prefix(n + 1, 0), hit_prefix(n + 1, 0);
    for (int i = 0; i < n; ++i) {
        const auto& nd = tree.node(i);
        const int is_leaf = nd.is_leaf ? 1 : 0;
        const int is_hit = (nd.is_leaf && otus.count(nd.label)) ? 1 : 0;
        leaf_prefix[i + 1] = leaf_prefix[i] + is_leaf;
        hit_prefix[i + 1] = hit_prefix[i] + is_hit;
    }

    BranchSet out;
    for (int k = 0; k < tree.branch_count(); ++k) {
        const int lo = tree.node(k).first_descendant;
        const int leaves = leaf_prefix[k + 1] - leaf_prefix[lo];
        const int hits = hit_prefix[k + 1] - hit_prefix[lo];
        if (leaves > 0 && leaves == hits) out.branch_ids.push_back(k);
    }
    return out;
}

std::set<std::string> descendant_leaves(const PhyloTree& tree, int branch_id) {
    if (branch_id < 0 || branch_id >= tree.branch_count())
        throw InputError("branch id " + std::to_string(branch_id) +
                         " out of range [0, " +
                         std::to_string(tree.branch_count()) + ")");
    std::set<std::string> out;
    for (int i = tree.node(branch_id).first_descendant; i <= branch_id; ++i)
        if (tree.node(i).is_leaf) out.insert(tree.node(i).label);
    return out;
}

}  // namespace kinfrac
