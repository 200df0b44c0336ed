// End-to-end checks of the kinfrac binary (path supplied via KINFRAC_BIN).
#include <doctest.h>

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

const fs::path& workdir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() /
                     ("kinfrac_cli_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

RunResult run(const std::string& args) {
    const char* bin = std::getenv("KINFRAC_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "KINFRAC_BIN must point at the CLI");
    const fs::path out = workdir() / "stdout.txt";
    const fs::path err = workdir() / "stderr.txt";
    const std::string cmd = std::string(bin) + " " + args + " > " +
                            out.string() + " 2> " + err.string();
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.code = WEXITSTATUS(raw);
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

// Small twin dataset reused across cases: 12 samples, 4-leaf tree.
struct Fixture {
    fs::path tree, otu, fam;
    Fixture() {
        tree = workdir() / "tree.nwk";
        otu = workdir() / "otu.tsv";
        fam = workdir() / "fam.csv";
        spit(tree, "((A:0.4,B:0.7):0.3,(C:0.5,D:0.9):0.2);\n");
        std::string t = "otu";
        for (int i = 1; i <= 12; ++i) t += "\ts" + std::to_string(i);
        t += "\n";
        const int counts[4][12] = {
            {12, 14, 33, 31, 8, 9, 41, 44, 21, 20, 5, 7},
            {25, 23, 11, 13, 37, 35, 8, 6, 14, 17, 29, 31},
            {9, 11, 25, 27, 14, 12, 19, 17, 33, 30, 21, 18},
            {31, 29, 7, 9, 22, 25, 13, 15, 8, 10, 27, 24}};
        const char* names[4] = {"A", "B", "C", "D"};
        for (int r = 0; r < 4; ++r) {
            t += names[r];
            for (int i = 0; i < 12; ++i)
                t += "\t" + std::to_string(counts[r][i]);
            t += "\n";
        }
        spit(otu, t);
        std::string f = "sample_id,family_id,zygosity\n";
        const char* zyg[6] = {"MZ", "MZ", "MZ", "DZ", "DZ", "DZ"};
        for (int p = 0; p < 6; ++p) {
            f += "s" + std::to_string(2 * p + 1) + ",f" + std::to_string(p) +
                 "," + zyg[p] + "\n";
            f += "s" + std::to_string(2 * p + 2) + ",f" + std::to_string(p) +
                 "," + zyg[p] + "\n";
        }
        spit(fam, f);
    }
    std::string data_args() const {
        return "--tree " + tree.string() + " --otu-table " + otu.string();
    }
    std::string cohort_args() const {
        return data_args() + " --families " + fam.string();
    }
};

}  // namespace

TEST_CASE("unifrac: toy matrix, determinism, manifest") {
    const fs::path tree = workdir() / "toy_tree.nwk";
    const fs::path otu = workdir() / "toy_otu.tsv";
    spit(tree, "(A:1,B:1);\n");
    spit(otu, "otu\ts1\ts2\nA\t10\t0\nB\t0\t10\n");
    const fs::path u1 = workdir() / "U1.tsv";
    const fs::path u2 = workdir() / "U2.tsv";

    RunResult r1 = run("unifrac --tree " + tree.string() + " --otu-table " +
                       otu.string() + " --pseudo 0 --out " + u1.string());
    CHECK(r1.code == 0);
    const std::string m = slurp(u1);
    CHECK(m.find("1.4142135623730951") != std::string::npos);
    CHECK(fs::exists(u1.string() + ".manifest.json"));

    RunResult r2 = run("unifrac --tree " + tree.string() + " --otu-table " +
                       otu.string() + " --pseudo 0 --out " + u2.string());
    CHECK(r2.code == 0);
    CHECK(slurp(u1) == slurp(u2));  // byte-identical rerun
}

TEST_CASE("unifrac: unknown subset OTU exits 2 and names it") {
    Fixture fx;
    RunResult r = run("unifrac " + fx.data_args() + " --subset A,ZZZ --out " +
                      (workdir() / "bad.tsv").string());
    CHECK(r.code == 2);
    CHECK(r.err.find("ZZZ") != std::string::npos);
}

TEST_CASE("fit: wishart returns a valid converged fit") {
    Fixture fx;
    RunResult r = run("fit " + fx.cohort_args() +
                      " --method wishart --seed 5");
    CHECK(r.code == 0);
    const json j = json::parse(r.out);
    CHECK(j.at("method") == "wishart");
    const double h = j.at("h").get<double>();
    CHECK(h >= 0.0);
    CHECK(h <= 1.0);
    CHECK(j.at("converged").get<bool>());
    CHECK(j.at("q").get<double>() > 12 - 1 - 1);
}

TEST_CASE("fit: every method runs on a restricted node") {
    Fixture fx;
    for (const char* m :
         {"logit", "boxcox", "pc1", "pc2", "pc3", "mmds", "nmds"}) {
        RunResult r = run("fit " + fx.cohort_args() + " --method " +
                          std::string(m) + " --subset A,B --seed 5");
        CHECK_MESSAGE(r.code == 0, m, ": ", r.err);
        const json j = json::parse(r.out);
        CHECK(j.at("h").get<double>() >= 0.0);
    }
}

TEST_CASE("fit: logit over the whole tree is rejected with guidance") {
    Fixture fx;
    RunResult r = run("fit " + fx.cohort_args() + " --method logit --seed 5");
    CHECK(r.code == 2);
    CHECK(r.err.find("undefined") != std::string::npos);
}

TEST_CASE("fit: missing --seed is an input error") {
    Fixture fx;
    RunResult r = run("fit " + fx.cohort_args() + " --method wishart");
    CHECK(r.code == 2);
}

TEST_CASE("test: permutation p-values reproduce for a fixed seed") {
    Fixture fx;
    const std::string cmd = "test " + fx.cohort_args() +
                            " --method wishart --restarts 1 --n-perm 100 "
                            "--seed 17";
    RunResult r1 = run(cmd);
    RunResult r2 = run(cmd);
    CHECK(r1.code == 0);
    const json j1 = json::parse(r1.out);
    const json j2 = json::parse(r2.out);
    CHECK(j1.at("p_value") == j2.at("p_value"));
    CHECK(j1.at("h_hat") == j2.at("h_hat"));
    CHECK(j1.at("n_perm") == 100);
}

TEST_CASE("ci: interval uses the 1.96 se normal form") {
    Fixture fx;
    RunResult r = run("ci " + fx.cohort_args() +
                      " --method pc1 --restarts 1 --n-boot 60 --alpha 0.05 "
                      "--seed 23");
    CHECK(r.code == 0);
    const json j = json::parse(r.out);
    const double h = j.at("h_hat").get<double>();
    const double se = j.at("se").get<double>();
    const double hi = j.at("ci_raw").at(1).get<double>();
    const double lo = j.at("ci_raw").at(0).get<double>();
    CHECK(hi - h == doctest::Approx(1.959964 * se).epsilon(1e-6));
    CHECK(h - lo == doctest::Approx(1.959964 * se).epsilon(1e-6));
    CHECK(lo <= hi);
    const json cc = j.at("ci_clipped");
    CHECK(cc.at(0).get<double>() >= 0.0);
    CHECK(cc.at(1).get<double>() <= 1.0);
}

TEST_CASE("simulate: deterministic tables and resumable cells") {
    const fs::path tree = workdir() / "sim_tree.nwk";
    RunResult vr = run("--version");
    CHECK(vr.code == 0);

    // reuse the bundled 10-leaf layout through the fit of a tiny study
    spit(tree,
         "((((((OTU_1:0.08,OTU_2:0.11)T6:0.05,((OTU_3:0.07,OTU_4:0.09)T8:0.04,"
         "OTU_5:0.12)T7:0.06)T5:0.07,OTU_6:0.15)T4:0.09,OTU_7:0.21)T3:0.06,"
         "(OTU_8:0.10,OTU_9:0.13)T9:0.08)T2:0.05,OTU_10:0.25)T1;\n");
    const fs::path cfg = workdir() / "study.cfg";
    spit(cfg,
         "n_mz = 4\nn_dz = 4\nsigma0_sq = 2\ngamma0 = 0.5\nrho0 = 0\n"
         "shrunk = OTU_1,OTU_2,OTU_3,OTU_4,OTU_5,OTU_6\nnodes = T4\n"
         "methods = wishart\nn_sim = 4\nn_perm = 6\nfit_restarts = 1\n");

    const fs::path d1 = workdir() / "study1";
    const fs::path d2 = workdir() / "study2";
    RunResult r1 = run("simulate --tree " + tree.string() + " --config " +
                       cfg.string() + " --out-dir " + d1.string() +
                       " --seed 31");
    CHECK(r1.code == 0);
    RunResult r2 = run("simulate --tree " + tree.string() + " --config " +
                       cfg.string() + " --out-dir " + d2.string() +
                       " --seed 31");
    CHECK(r2.code == 0);
    CHECK(slurp(d1 / "power_table.tsv") == slurp(d2 / "power_table.tsv"));

    RunResult r3 = run("simulate --tree " + tree.string() + " --config " +
                       cfg.string() + " --out-dir " + d1.string() +
                       " --seed 31 --resume");
    CHECK(r3.code == 0);
    CHECK(r3.err.find("resume: skipping") != std::string::npos);
    CHECK(slurp(d1 / "power_table.tsv") == slurp(d2 / "power_table.tsv"));
}

TEST_CASE("simulate: bad config keys are input errors") {
    const fs::path cfg = workdir() / "bad.cfg";
    const fs::path tree = workdir() / "sim_tree.nwk";
    spit(cfg, "nonsense_key = 3\nnodes = T4\n");
    RunResult r = run("simulate --tree " + tree.string() + " --config " +
                      cfg.string() + " --out-dir " +
                      (workdir() / "x").string() + " --seed 1");
    CHECK(r.code == 2);
    CHECK(r.err.find("nonsense_key") != std::string::npos);
}
