#include <benchmark/benchmark.h>

#include "kinfrac/abundance.hpp"
#include "kinfrac/diversity.hpp"
#include "kinfrac/models.hpp"
#include "kinfrac/ordination.hpp"
#include "kinfrac/phylo.hpp"
#include "kinfrac/sim.hpp"

using namespace kinfrac;

namespace {

struct PipelineFixture {
    PhyloTree tree;
    TwinData data;
    Projector L;
    ProjectedOuter Z;
    WishartWorkspace ws;

    explicit PipelineFixture(int n_pairs)
        : tree(parse_newick(default_simulation_tree())) {
        SimConfig cfg;
        cfg.n_mz = n_pairs / 2;
        cfg.n_dz = n_pairs - n_pairs / 2;
        cfg.R = 10;
        cfg.gamma0 = 0.2;
        cfg.shrunk = {0, 1, 2, 3, 4, 5};
        Rng rng(1);
        data = gen_twin_abundances(cfg, tree.leaf_labels(), rng);
        BranchProportions P = branch_proportions(data.rel, tree);
        DissimilarityMatrix U = root_unifrac(P, tree);
        L = kernel_projector(data.cohort.X);
        Z = project(gower_center(U), L);
        ws = make_wishart_workspace(Z, L, data.cohort.C);
    }
};

void BM_parse_newick(benchmark::State& state) {
    const std::string text = default_simulation_tree();
    for (auto _ : state) benchmark::DoNotOptimize(parse_newick(text));
}
BENCHMARK(BM_parse_newick);

void BM_root_unifrac(benchmark::State& state) {
    PipelineFixture fx(static_cast<int>(state.range(0)));
    BranchProportions P = branch_proportions(fx.data.rel, fx.tree);
    for (auto _ : state)
        benchmark::DoNotOptimize(root_unifrac(P, fx.tree));
}
BENCHMARK(BM_root_unifrac)->Arg(50)->Arg(100);

void BM_wishart_objective_eval(benchmark::State& state) {
    PipelineFixture fx(static_cast<int>(state.range(0)));
    Eigen::MatrixXd Ghat_A =
        fx.ws.T * fx.data.cohort.A * fx.ws.T.transpose();
    Objective f = wishart_objective(fx.ws, Ghat_A);
    Eigen::VectorXd t(4), g(4);
    t << -4.0, -4.0, -4.0, 0.7;
    for (auto _ : state) benchmark::DoNotOptimize(f(t, g));
}
BENCHMARK(BM_wishart_objective_eval)->Arg(30)->Arg(50)->Arg(100);

void BM_wishart_fit(benchmark::State& state) {
    PipelineFixture fx(static_cast<int>(state.range(0)));
    FitConfig cfg;
    cfg.restarts = 1;
    for (auto _ : state)
        benchmark::DoNotOptimize(
            wishart_fit_with_grm(fx.ws, fx.data.cohort.A, cfg));
}
BENCHMARK(BM_wishart_fit)->Arg(30)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_normal_fit(benchmark::State& state) {
    PipelineFixture fx(static_cast<int>(state.range(0)));
    Eigen::VectorXd theta_e =
        fx.data.rel.theta.leftCols(6).rowwise().sum();
    NormalWorkspace ws =
        make_normal_workspace(logit_response(theta_e), fx.L, fx.data.cohort.C);
    FitConfig cfg;
    cfg.restarts = 1;
    for (auto _ : state)
        benchmark::DoNotOptimize(
            normal_reml_fit_with_grm(ws, fx.data.cohort.A, cfg));
}
BENCHMARK(BM_normal_fit)->Arg(30)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_pcoa(benchmark::State& state) {
    PipelineFixture fx(static_cast<int>(state.range(0)));
    BranchProportions P = branch_proportions(fx.data.rel, fx.tree);
    GowerMatrix M = gower_center(root_unifrac(P, fx.tree));
    for (auto _ : state) benchmark::DoNotOptimize(pcoa(M, 3));
}
BENCHMARK(BM_pcoa)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
