// kinfrac command-line interface: root-UniFrac dissimilarities, Wishart/normal
// ACE fits, permutation tests, family-bootstrap intervals and the simulation
// studies. Exit codes: 0 success, 1 numerical failure, 2 input error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kinfrac/abundance.hpp"
#include "kinfrac/analysis.hpp"
#include "kinfrac/diversity.hpp"
#include "kinfrac/errors.hpp"
#include "kinfrac/inference.hpp"
#include "kinfrac/io.hpp"
#include "kinfrac/models.hpp"
#include "kinfrac/phylo.hpp"
#include "kinfrac/sim.hpp"
#include "kinfrac/threading.hpp"
#include "kinfrac/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace kinfrac;

std::string iso_timestamp() {
    const std::time_t now =
        std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(v));
    return buf;
}

// ---------------------------------------------------------------------------
// Shared input options and loading
// ---------------------------------------------------------------------------

struct CommonInputs {
    std::string tree_path;
    std::string otu_path;
    std::string unifrac_path;
    std::string covariates_path;
    std::string families_path;
    std::string subset_csv;
    std::string node_key;
    double pseudo = 1.0;
    double min_prevalence = 0.0;
    bool no_intercept = false;
};

void add_data_options(CLI::App* cmd, CommonInputs& in, bool with_unifrac) {
    cmd->add_option("--tree", in.tree_path, "Newick tree file");
    cmd->add_option("--otu-table", in.otu_path,
                    "Tab-separated OTU count table (rows = OTUs)");
    if (with_unifrac)
        cmd->add_option("--unifrac", in.unifrac_path,
                        "Precomputed dissimilarity matrix (TSV)");
    cmd->add_option("--subset", in.subset_csv,
                    "Comma-separated OTU labels restricting the analysis");
    cmd->add_option("--node", in.node_key,
                    "Internal node (label or 1-based post-order index) whose "
                    "descendant OTUs restrict the analysis");
    cmd->add_option("--pseudo", in.pseudo,
                    "Pseudo count added to every OTU count")
        ->capture_default_str();
    cmd->add_option("--min-prevalence", in.min_prevalence,
                    "Drop OTUs present in fewer than this fraction of samples")
        ->capture_default_str();
}

void add_cohort_options(CLI::App* cmd, CommonInputs& in) {
    cmd->add_option("--covariates", in.covariates_path,
                    "Covariate CSV (first column sample id); intercept is "
                    "prepended unless --no-intercept");
    cmd->add_flag("--no-intercept", in.no_intercept,
                  "Do not prepend an intercept column");
    cmd->add_option("--families", in.families_path,
                    "Family CSV: sample_id,family_id,zygosity (MZ|DZ|NA)")
        ->required();
}

struct LoadedData {
    std::optional<PhyloTree> tree;
    std::optional<RelAbundance> rel;
    std::optional<DissimilarityMatrix> unifrac;
    std::optional<std::set<std::string>> otus;  // analysis restriction
    std::vector<std::string> sample_ids;
    std::map<std::string, std::uint64_t> digests;
};

LoadedData load_data(const CommonInputs& in) {
    LoadedData data;
    if (!in.tree_path.empty()) {
        const std::string text = read_text_file(in.tree_path);
        data.digests[in.tree_path] = fnv1a64(text);
        data.tree = parse_newick(text);
        for (const auto& w : data.tree->warnings())
            std::cerr << "warning: " << in.tree_path << ": " << w << "\n";
    }
    if (!in.otu_path.empty()) {
        if (!data.tree)
            throw InputError("--otu-table requires --tree");
        const std::string text = read_text_file(in.otu_path);
        data.digests[in.otu_path] = fnv1a64(text);
        OtuTable table = parse_otu_table(text);
        if (in.min_prevalence > 0.0)
            table = filter_by_prevalence(table, in.min_prevalence);
        data.rel = to_relative(table, in.pseudo);
        data.sample_ids = data.rel->sample_ids;
    }
    if (!in.unifrac_path.empty()) {
        const std::string text = read_text_file(in.unifrac_path);
        data.digests[in.unifrac_path] = fnv1a64(text);
        data.unifrac = read_matrix_tsv(in.unifrac_path);
        data.sample_ids = data.unifrac->sample_ids;
    }
    if (!in.subset_csv.empty() && !in.node_key.empty())
        throw InputError("--subset and --node are mutually exclusive");
    if (!in.subset_csv.empty()) {
        std::set<std::string> otus;
        std::stringstream ss(in.subset_csv);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) otus.insert(item);
        if (otus.empty()) throw InputError("--subset lists no OTUs");
        data.otus = otus;
    } else if (!in.node_key.empty()) {
        if (!data.tree) throw InputError("--node requires --tree");
        const int node = data.tree->resolve_internal_node(in.node_key);
        if (node != data.tree->root())
            data.otus = descendant_leaves(*data.tree, node);
    }
    return data;
}

// Reorders covariate/family rows into the canonical sample order.
CohortStructure load_cohort(const CommonInputs& in,
                            const std::vector<std::string>& sample_ids,
                            LoadedData& data) {
    if (in.families_path.empty())
        throw InputError("a family file is required");
    const std::string fam_text = read_text_file(in.families_path);
    data.digests[in.families_path] = fnv1a64(fam_text);
    FamilyTable fam = read_family_csv(in.families_path);

    std::map<std::string, std::string> family_of;
    for (std::size_t i = 0; i < fam.sample_ids.size(); ++i)
        family_of[fam.sample_ids[i]] = fam.family_ids[i];

    const int n = static_cast<int>(sample_ids.size());
    std::vector<std::string> family_ids(n);
    for (int i = 0; i < n; ++i) {
        auto it = family_of.find(sample_ids[i]);
        if (it == family_of.end())
            throw InputError("sample '" + sample_ids[i] +
                             "' is missing from the family file");
        family_ids[i] = it->second;
    }

    Eigen::MatrixXd X;
    if (!in.covariates_path.empty()) {
        const std::string cov_text = read_text_file(in.covariates_path);
        data.digests[in.covariates_path] = fnv1a64(cov_text);
        CovariateTable cov = read_covariates_csv(in.covariates_path);
        std::map<std::string, int> row_of;
        for (std::size_t i = 0; i < cov.sample_ids.size(); ++i)
            row_of[cov.sample_ids[i]] = static_cast<int>(i);
        const int m = static_cast<int>(cov.names.size());
        const int extra = in.no_intercept ? 0 : 1;
        X.resize(n, m + extra);
        for (int i = 0; i < n; ++i) {
            auto it = row_of.find(sample_ids[i]);
            if (it == row_of.end())
                throw InputError("sample '" + sample_ids[i] +
                                 "' is missing from the covariate file");
            if (!in.no_intercept) X(i, 0) = 1.0;
            X.row(i).tail(m) = cov.values.row(it->second);
        }
    } else {
        if (in.no_intercept)
            throw InputError("--no-intercept requires a covariate file");
        X = intercept_only(n);
    }

    CohortStructure cohort =
        build_cohort(sample_ids, family_ids, fam.zygosity, X);
    validate_cohort(cohort);
    return cohort;
}

// ---------------------------------------------------------------------------
// Manifests and JSON output
// ---------------------------------------------------------------------------

json manifest_json(const std::string& command, const json& config,
                   const std::map<std::string, std::uint64_t>& digests,
                   std::optional<std::uint64_t> seed, int threads) {
    json inputs = json::object();
    for (const auto& [path, digest] : digests)
        inputs[path] = {{"fnv1a64", hex64(digest)}};
    json m = {{"command", command},
              {"version", version_string},
              {"timestamp_utc", iso_timestamp()},
              {"threads", threads},
              {"inputs", inputs},
              {"config", config}};
    if (seed)
        m["seed"] = *seed;
    else
        m["seed"] = nullptr;
    return m;
}

void write_json_file(const std::string& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

void emit_result(const std::string& out_path, const json& result) {
    if (out_path.empty())
        std::cout << result.dump(2) << "\n";
    else
        write_json_file(out_path, result);
}

json fit_to_json(const MethodAnalysis& fit) {
    json j;
    j["method"] = method_name(fit.method);
    j["h"] = fit.h;
    if (fit.wishart) {
        const WishartFit& w = *fit.wishart;
        j["components"] = {{"sigma2_A", w.components.sigma2_A},
                           {"sigma2_C", w.components.sigma2_C},
                           {"sigma2_E", w.components.sigma2_E}};
        j["q"] = w.q;
        j["loglik"] = w.loglik;
        j["converged"] = w.converged;
        j["grad_norm"] = w.grad_norm;
        j["iterations"] = w.iterations;
        j["evaluations"] = w.evaluations;
    }
    if (fit.normal) {
        const NormalFit& nf = *fit.normal;
        j["components"] = {{"sigma2_A", nf.components.sigma2_A},
                           {"sigma2_C", nf.components.sigma2_C},
                           {"sigma2_E", nf.components.sigma2_E}};
        j["loglik"] = nf.loglik;
        j["converged"] = nf.converged;
        j["grad_norm"] = nf.grad_norm;
        j["iterations"] = nf.iterations;
        j["evaluations"] = nf.evaluations;
        j["degenerate"] = nf.degenerate;
    }
    if (fit.boxcox_lambda) j["boxcox_lambda"] = *fit.boxcox_lambda;
    if (fit.mds_stress) j["mds_stress"] = *fit.mds_stress;
    if (fit.distinct_branch)
        j["distinct_branch"] = *fit.distinct_branch;
    else if (fit.method == Method::wishart)
        j["distinct_branch"] = nullptr;
    j["warnings"] = fit.warnings;
    return j;
}

// Seed namespaces keep fit restarts, permutation and bootstrap streams apart.
std::uint64_t derive_seed(std::uint64_t seed, const char* purpose) {
    return seed ^ fnv1a64(purpose);
}

MethodAnalysis run_analysis(const LoadedData& data,
                            const CohortStructure& cohort, Method method,
                            const AnalysisOptions& opts) {
    if (data.rel) {
        return analyze_method(*data.tree, *data.rel, data.otus, cohort, method,
                              opts);
    }
    if (data.unifrac) {
        if (data.otus)
            throw InputError(
                "--subset/--node need raw inputs; the precomputed matrix "
                "already fixes the branch set");
        return analyze_method_from_dissimilarity(*data.unifrac, cohort, method,
                                                 opts);
    }
    throw InputError("provide either --tree with --otu-table or --unifrac");
}

// ---------------------------------------------------------------------------
// simulate: config file parsing and outputs
// ---------------------------------------------------------------------------

std::map<std::string, std::string> parse_config_file(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t");
            return s.substr(b, e - b + 1);
        };
        if (strip(line).empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("config line " + std::to_string(line_no) +
                             " is not 'key = value'");
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        if (key.empty())
            throw InputError("config line " + std::to_string(line_no) +
                             " has an empty key");
        if (!kv.emplace(key, value).second)
            throw InputError("duplicate config key '" + key + "'");
    }
    return kv;
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = item.find_last_not_of(" \t");
        out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

double to_double(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw InputError("config value for '" + key + "' is not numeric: '" +
                         v + "'");
    }
}

int to_int(const std::string& v, const std::string& key) {
    const double x = to_double(v, key);
    const int i = static_cast<int>(x);
    if (x != i)
        throw InputError("config value for '" + key + "' is not an integer");
    return i;
}

PowerStudyConfig build_study_config(
    const std::map<std::string, std::string>& kv, const PhyloTree& tree) {
    PowerStudyConfig cfg;
    cfg.base.R = tree.leaf_count();
    const std::vector<std::string> leaves = tree.leaf_labels();

    const std::set<std::string> known{
        "n_mz", "n_dz", "sigma0_sq", "mu0", "rho0", "gamma0", "shrunk",
        "nodes", "methods", "n_sim", "n_perm", "alpha", "fit_restarts",
        "pseudo"};
    for (const auto& [key, value] : kv)
        if (!known.count(key))
            throw InputError("unknown config key '" + key + "'");

    auto get = [&](const char* key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        return it->second;
    };

    if (auto v = get("n_mz")) cfg.base.n_mz = to_int(*v, "n_mz");
    if (auto v = get("n_dz")) cfg.base.n_dz = to_int(*v, "n_dz");
    if (auto v = get("sigma0_sq")) cfg.base.sigma0_sq = to_double(*v, "sigma0_sq");
    if (auto v = get("mu0")) {
        const std::vector<std::string> items = split_list(*v);
        if (items.size() == 1) {
            cfg.base.mu0 = Eigen::VectorXd::Constant(cfg.base.R,
                                                     to_double(items[0], "mu0"));
        } else {
            if (static_cast<int>(items.size()) != cfg.base.R)
                throw InputError("mu0 must be a scalar or R values");
            cfg.base.mu0.resize(cfg.base.R);
            for (int i = 0; i < cfg.base.R; ++i)
                cfg.base.mu0[i] = to_double(items[i], "mu0");
        }
    }
    if (auto v = get("gamma0")) {
        cfg.gamma0_grid.clear();
        for (const auto& item : split_list(*v))
            cfg.gamma0_grid.push_back(to_double(item, "gamma0"));
    }
    if (auto v = get("rho0")) {
        cfg.rho0_grid.clear();
        for (const auto& item : split_list(*v))
            cfg.rho0_grid.push_back(to_double(item, "rho0"));
    }
    if (auto v = get("shrunk")) {
        cfg.base.shrunk.clear();
        for (const auto& item : split_list(*v)) {
            auto at = std::find(leaves.begin(), leaves.end(), item);
            if (at != leaves.end()) {
                cfg.base.shrunk.push_back(
                    static_cast<int>(at - leaves.begin()));
                continue;
            }
            char* end = nullptr;
            const long idx = std::strtol(item.c_str(), &end, 10);
            if (end && *end == '\0' && idx >= 1 &&
                idx <= static_cast<long>(leaves.size()))
                cfg.base.shrunk.push_back(static_cast<int>(idx - 1));
            else
                throw InputError("shrunk entry '" + item +
                                 "' is neither a leaf label nor a 1-based "
                                 "index");
        }
    }
    if (auto v = get("nodes")) cfg.nodes = split_list(*v);
    if (auto v = get("methods")) {
        cfg.methods.clear();
        for (const auto& item : split_list(*v)) {
            auto m = parse_method(item);
            if (!m) throw InputError("unknown method '" + item + "'");
            cfg.methods.push_back(*m);
        }
    }
    if (auto v = get("n_sim")) cfg.n_sim = to_int(*v, "n_sim");
    if (auto v = get("n_perm")) cfg.n_perm = to_int(*v, "n_perm");
    if (auto v = get("alpha")) cfg.alpha = to_double(*v, "alpha");
    if (auto v = get("fit_restarts"))
        cfg.fit.restarts = to_int(*v, "fit_restarts");
    if (auto v = get("pseudo")) cfg.pseudo = to_double(*v, "pseudo");

    if (cfg.nodes.empty())
        throw InputError("config must list at least one node");
    for (const auto& node : cfg.nodes) tree.resolve_internal_node(node);
    return cfg;
}

json cell_to_json(const std::string& key, const PowerCell& cell) {
    json j = {{"key", key},
              {"gamma0", cell.gamma0},
              {"rho0", cell.rho0},
              {"node", cell.node},
              {"method", method_name(cell.method)},
              {"applicable", cell.applicable},
              {"n_sim", cell.n_sim},
              {"n_done", cell.n_done},
              {"n_reject", cell.n_reject},
              {"n_failed", cell.n_failed}};
    if (cell.applicable) {
        j["rate"] = cell.rate;
        j["wilson_95"] = {cell.wilson_lo, cell.wilson_hi};
    } else {
        j["rate"] = nullptr;
    }
    return j;
}

PowerCell cell_from_json(const json& j) {
    PowerCell cell;
    cell.gamma0 = j.at("gamma0").get<double>();
    cell.rho0 = j.at("rho0").get<double>();
    cell.node = j.at("node").get<std::string>();
    cell.method = *parse_method(j.at("method").get<std::string>());
    cell.applicable = j.at("applicable").get<bool>();
    cell.n_sim = j.at("n_sim").get<int>();
    cell.n_done = j.at("n_done").get<int>();
    cell.n_reject = j.at("n_reject").get<int>();
    cell.n_failed = j.at("n_failed").get<int>();
    if (cell.applicable && !j.at("rate").is_null()) {
        cell.rate = j.at("rate").get<double>();
        cell.wilson_lo = j.at("wilson_95").at(0).get<double>();
        cell.wilson_hi = j.at("wilson_95").at(1).get<double>();
    }
    return cell;
}

std::string power_table_tsv(const PowerTable& table) {
    std::string out =
        "gamma0\trho0\tnode\tmethod\tn_sim\tn_done\tn_reject\tn_failed\trate\t"
        "wilson_lo\twilson_hi\n";
    for (const auto& cell : table.cells) {
        out += format_double(cell.gamma0);
        out += '\t';
        out += format_double(cell.rho0);
        out += '\t';
        out += cell.node;
        out += '\t';
        out += method_name(cell.method);
        out += '\t';
        out += std::to_string(cell.n_sim);
        out += '\t';
        out += std::to_string(cell.n_done);
        out += '\t';
        out += std::to_string(cell.n_reject);
        out += '\t';
        out += std::to_string(cell.n_failed);
        out += '\t';
        if (cell.applicable) {
            out += format_double(cell.rate);
            out += '\t';
            out += format_double(cell.wilson_lo);
            out += '\t';
            out += format_double(cell.wilson_hi);
        } else {
            out += "NA\tNA\tNA";
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

int cmd_unifrac(const CommonInputs& in, const std::string& out_path,
                int threads) {
    if (in.tree_path.empty() || in.otu_path.empty())
        throw InputError("unifrac needs --tree and --otu-table");
    LoadedData data = load_data(in);
    std::optional<BranchSet> subset;
    if (data.otus) subset = branch_subset(*data.tree, *data.otus);
    const BranchProportions P = branch_proportions(*data.rel, *data.tree);
    const DissimilarityMatrix U = root_unifrac(P, *data.tree, subset);
    write_matrix_tsv(out_path, U.sample_ids, U.U);

    json config = {{"tree", in.tree_path},
                   {"otu_table", in.otu_path},
                   {"pseudo", in.pseudo},
                   {"min_prevalence", in.min_prevalence},
                   {"subset", in.subset_csv},
                   {"node", in.node_key},
                   {"out", out_path}};
    write_json_file(out_path + ".manifest.json",
                    manifest_json("unifrac", config, data.digests, std::nullopt,
                                  threads));
    std::cerr << "wrote " << out_path << " (" << U.n() << " samples)\n";
    return 0;
}

json common_config_json(const CommonInputs& in, const std::string& method) {
    return {{"tree", in.tree_path},
            {"otu_table", in.otu_path},
            {"unifrac", in.unifrac_path},
            {"covariates", in.covariates_path},
            {"families", in.families_path},
            {"pseudo", in.pseudo},
            {"min_prevalence", in.min_prevalence},
            {"subset", in.subset_csv},
            {"node", in.node_key},
            {"no_intercept", in.no_intercept},
            {"method", method}};
}

int cmd_fit(const CommonInputs& in, const std::string& method_name_arg,
            std::uint64_t seed, int restarts, const std::string& out_path,
            int threads) {
    const auto method = parse_method(method_name_arg);
    if (!method) throw InputError("unknown method '" + method_name_arg + "'");

    LoadedData data = load_data(in);
    CohortStructure cohort = load_cohort(in, data.sample_ids, data);

    AnalysisOptions opts;
    opts.fit.restarts = restarts;
    opts.fit.restart_seed = derive_seed(seed, "restart");
    opts.mds.seed = derive_seed(seed, "mds");

    MethodAnalysis fit = run_analysis(data, cohort, *method, opts);

    json result = fit_to_json(fit);
    result["n_samples"] = cohort.n();
    result["n_covariates"] = cohort.m();
    emit_result(out_path, result);
    if (!out_path.empty()) {
        json config = common_config_json(in, method_name_arg);
        config["restarts"] = restarts;
        config["out"] = out_path;
        write_json_file(out_path + ".manifest.json",
                        manifest_json("fit", config, data.digests, seed,
                                      threads));
    }
    for (const auto& w : fit.warnings) std::cerr << "warning: " << w << "\n";
    return 0;
}

int cmd_test(const CommonInputs& in, const std::string& method_name_arg,
             std::uint64_t seed, int restarts, int n_perm, bool permute_c,
             bool add_one, const std::string& dump_rounds,
             const std::string& out_path, int threads) {
    const auto method = parse_method(method_name_arg);
    if (!method) throw InputError("unknown method '" + method_name_arg + "'");

    LoadedData data = load_data(in);
    CohortStructure cohort = load_cohort(in, data.sample_ids, data);

    AnalysisOptions opts;
    opts.fit.restarts = restarts;
    opts.fit.restart_seed = derive_seed(seed, "restart");
    opts.mds.seed = derive_seed(seed, "mds");
    opts.permute_c = permute_c;

    MethodAnalysis fit = run_analysis(data, cohort, *method, opts);
    PermutationResult perm =
        permutation_test(fit.refit, cohort.A, n_perm,
                         derive_seed(seed, "perm"), threads, add_one);

    json result = {{"method", method_name_arg},
                   {"h_hat", perm.h_hat},
                   {"p_value", perm.p_value},
                   {"n_perm", perm.n_perm},
                   {"n_completed", static_cast<int>(perm.h_perm.size())},
                   {"n_failed", perm.n_failed},
                   {"add_one", perm.add_one},
                   {"permute_c", permute_c},
                   {"warnings", perm.warnings}};
    result["fit"] = fit_to_json(fit);
    emit_result(out_path, result);

    if (!dump_rounds.empty()) {
        std::string tsv = "round\th_perm\n";
        for (std::size_t i = 0; i < perm.h_perm.size(); ++i)
            tsv += std::to_string(i) + "\t" + format_double(perm.h_perm[i]) +
                   "\n";
        write_text_file(dump_rounds, tsv);
    }
    if (!out_path.empty()) {
        json config = common_config_json(in, method_name_arg);
        config["restarts"] = restarts;
        config["n_perm"] = n_perm;
        config["permute_c"] = permute_c;
        config["add_one"] = add_one;
        config["out"] = out_path;
        write_json_file(out_path + ".manifest.json",
                        manifest_json("test", config, data.digests, seed,
                                      threads));
    }
    for (const auto& w : perm.warnings) std::cerr << "warning: " << w << "\n";
    return 0;
}

int cmd_ci(const CommonInputs& in, const std::string& method_name_arg,
           std::uint64_t seed, int restarts, int n_boot, double alpha,
           const std::string& out_path, int threads) {
    const auto method = parse_method(method_name_arg);
    if (!method) throw InputError("unknown method '" + method_name_arg + "'");
    if (in.otu_path.empty() || in.tree_path.empty())
        throw InputError(
            "ci needs raw inputs (--tree and --otu-table); the bootstrap "
            "recomputes the dissimilarity pipeline per resample");

    LoadedData data = load_data(in);
    CohortStructure cohort = load_cohort(in, data.sample_ids, data);

    AnalysisOptions opts;
    opts.fit.restarts = restarts;
    opts.fit.restart_seed = derive_seed(seed, "restart");
    opts.mds.seed = derive_seed(seed, "mds");

    MethodAnalysis fit = run_analysis(data, cohort, *method, opts);

    const PhyloTree& tree = *data.tree;
    const RelAbundance& rel = *data.rel;
    const auto otus = data.otus;
    FamilyFit family_fit = [&](const std::vector<int>& draw) {
        return bootstrap_refit(tree, rel, otus, cohort, *method, opts, draw);
    };
    const int n_families = static_cast<int>(family_members(cohort).size());
    BootstrapResult boot =
        bootstrap_ci(family_fit, fit.h, n_families, n_boot, alpha,
                     derive_seed(seed, "boot"), threads);

    json result = {{"method", method_name_arg},
                   {"h_hat", boot.h_hat},
                   {"se", boot.se},
                   {"alpha", boot.alpha},
                   {"ci_raw", {boot.ci_raw.first, boot.ci_raw.second}},
                   {"ci_clipped",
                    {boot.ci_clipped.first, boot.ci_clipped.second}},
                   {"clipped", boot.clipped},
                   {"n_boot", boot.n_boot},
                   {"n_completed", static_cast<int>(boot.h_boot.size())},
                   {"n_failed", boot.n_failed},
                   {"n_families", n_families},
                   {"warnings", boot.warnings}};
    result["fit"] = fit_to_json(fit);
    emit_result(out_path, result);
    if (!out_path.empty()) {
        json config = common_config_json(in, method_name_arg);
        config["restarts"] = restarts;
        config["n_boot"] = n_boot;
        config["alpha"] = alpha;
        config["out"] = out_path;
        write_json_file(out_path + ".manifest.json",
                        manifest_json("ci", config, data.digests, seed,
                                      threads));
    }
    for (const auto& w : boot.warnings) std::cerr << "warning: " << w << "\n";
    return 0;
}

int cmd_simulate(const std::string& tree_path, const std::string& config_path,
                 const std::string& out_dir, std::uint64_t seed, int threads,
                 bool resume) {
    const std::string tree_text = read_text_file(tree_path);
    const PhyloTree tree = parse_newick(tree_text);
    const std::string config_text = read_text_file(config_path);
    PowerStudyConfig cfg =
        build_study_config(parse_config_file(config_text), tree);
    cfg.seed = seed;
    cfg.threads = threads;

    fs::create_directories(fs::path(out_dir) / "cells");
    const auto cell_path = [&](const std::string& key) {
        return (fs::path(out_dir) / "cells" / (key + ".json")).string();
    };

    auto cache = [&](const std::string& key) -> std::optional<PowerCell> {
        if (!resume) return std::nullopt;
        const std::string path = cell_path(key);
        if (!fs::exists(path)) return std::nullopt;
        try {
            const json j = json::parse(read_text_file(path));
            std::cerr << "resume: skipping finished cell " << key << "\n";
            return cell_from_json(j);
        } catch (const std::exception&) {
            std::cerr << "resume: ignoring unreadable cell file " << path
                      << "\n";
            return std::nullopt;
        }
    };
    auto hook = [&](const std::string& key, const PowerCell& cell) {
        write_json_file(cell_path(key), cell_to_json(key, cell));
        std::cerr << "cell " << key << ": "
                  << (cell.applicable ? format_double(cell.rate) : "NA") << " ("
                  << cell.n_reject << "/" << cell.n_done << ")\n";
    };

    PowerTable table = power_study(tree, cfg, cache, hook);

    write_text_file((fs::path(out_dir) / "power_table.tsv").string(),
                    power_table_tsv(table));
    json cells = json::array();
    for (const auto& cell : table.cells)
        cells.push_back(cell_to_json(
            power_cell_key(cell.gamma0, cell.rho0, cell.node, cell.method),
            cell));
    json sidecar = {{"config_text", config_text},
                    {"n_sim", cfg.n_sim},
                    {"n_perm", cfg.n_perm},
                    {"alpha", cfg.alpha},
                    {"cells", cells}};
    write_json_file((fs::path(out_dir) / "power_table.json").string(), sidecar);

    std::map<std::string, std::uint64_t> digests{
        {tree_path, fnv1a64(tree_text)}, {config_path, fnv1a64(config_text)}};
    json config = {{"tree", tree_path},
                   {"config", config_path},
                   {"out_dir", out_dir},
                   {"resume", resume}};
    write_json_file((fs::path(out_dir) / "manifest.json").string(),
                    manifest_json("simulate", config, digests, seed, threads));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Community heritability of microbiome dissimilarities "
                 "(root-UniFrac + Wishart ACE variance components)"};
    app.set_version_flag("--version", kinfrac::version_string);
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads,
                   "Worker threads (default: KINFRAC_THREADS or hardware)")
        ->envname("KINFRAC_THREADS");

    CommonInputs in;
    std::string out_path, method = "wishart", dump_rounds;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int restarts = 5, n_perm = 1000, n_boot = 200;
    double alpha = 0.05;
    bool permute_c = false, add_one = false, resume = false;
    std::string sim_tree, sim_config, sim_out_dir;

    auto* unifrac = app.add_subcommand(
        "unifrac", "Compute a root-UniFrac dissimilarity matrix");
    add_data_options(unifrac, in, false);
    unifrac->add_option("--out", out_path, "Output TSV path")->required();

    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option_function<std::uint64_t>(
               "--seed",
               [&](const std::uint64_t& v) {
                   seed = v;
                   seed_set = true;
               },
               "Master seed (required; no wall-clock default)")
            ->required();
    };

    auto* fit = app.add_subcommand("fit", "Fit one heritability model");
    add_data_options(fit, in, true);
    add_cohort_options(fit, in);
    fit->add_option("--method", method,
                    "wishart|logit|boxcox|pc1|pc2|pc3|mmds|nmds")
        ->capture_default_str();
    fit->add_option("--restarts", restarts, "Optimizer restarts")
        ->capture_default_str();
    add_seed(fit);
    fit->add_option("--out", out_path, "Output JSON path (default: stdout)");

    auto* test = app.add_subcommand(
        "test", "Permutation test of zero community heritability");
    add_data_options(test, in, true);
    add_cohort_options(test, in);
    test->add_option("--method", method,
                     "wishart|logit|boxcox|pc1|pc2|pc3|mmds|nmds")
        ->capture_default_str();
    test->add_option("--restarts", restarts, "Optimizer restarts")
        ->capture_default_str();
    test->add_option("--n-perm", n_perm, "Permutation rounds")
        ->capture_default_str();
    test->add_flag("--permute-c", permute_c,
                   "Also permute the shared-environment matrix");
    test->add_flag("--add-one", add_one,
                   "Use the (1+count)/(1+n) p-value convention");
    test->add_option("--dump-rounds", dump_rounds,
                     "Write per-round heritability estimates to this TSV");
    add_seed(test);
    test->add_option("--out", out_path, "Output JSON path (default: stdout)");

    auto* ci = app.add_subcommand(
        "ci", "Family-bootstrap confidence interval for heritability");
    add_data_options(ci, in, false);
    add_cohort_options(ci, in);
    ci->add_option("--method", method,
                   "wishart|logit|boxcox|pc1|pc2|pc3|mmds|nmds")
        ->capture_default_str();
    ci->add_option("--restarts", restarts, "Optimizer restarts")
        ->capture_default_str();
    ci->add_option("--n-boot", n_boot, "Bootstrap rounds")
        ->capture_default_str();
    ci->add_option("--alpha", alpha, "Interval level is 1 - alpha")
        ->capture_default_str();
    add_seed(ci);
    ci->add_option("--out", out_path, "Output JSON path (default: stdout)");

    auto* simulate = app.add_subcommand(
        "simulate", "Run a power / type-I-error study over a config grid");
    simulate->add_option("--tree", sim_tree, "Newick tree for the study")
        ->required();
    simulate->add_option("--config", sim_config, "key = value study config")
        ->required();
    simulate->add_option("--out-dir", sim_out_dir, "Output directory")
        ->required();
    simulate->add_flag("--resume", resume,
                       "Skip cells with finished result files");
    add_seed(simulate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    }

    const int n_threads = kinfrac::resolve_threads(threads);
    try {
        if (app.got_subcommand(unifrac))
            return cmd_unifrac(in, out_path, n_threads);
        if (app.got_subcommand(fit))
            return cmd_fit(in, method, seed, restarts, out_path, n_threads);
        if (app.got_subcommand(test))
            return cmd_test(in, method, seed, restarts, n_perm, permute_c,
                            add_one, dump_rounds, out_path, n_threads);
        if (app.got_subcommand(ci))
            return cmd_ci(in, method, seed, restarts, n_boot, alpha, out_path,
                          n_threads);
        if (app.got_subcommand(simulate))
            return cmd_simulate(sim_tree, sim_config, sim_out_dir, seed,
                                n_threads, resume);
        throw kinfrac::InputError("no subcommand selected");
    } catch (const kinfrac::NotPositiveDefiniteError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 1;
    } catch (const kinfrac::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 1;
    } catch (const kinfrac::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const kinfrac::NotApplicableError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
