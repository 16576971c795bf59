#include "dyadflow/commands.hpp"
#include "dyadflow/error.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cstdlib>
#include <string>
#include <sys/wait.h>

using namespace dyadflow;
using testing::scratch;
using testing::slurp;

namespace {

int cli(const std::string &args) {
    const std::string cmd = std::string(DYADFLOW_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

FitSettings quick_fit(const fs::path &sim, const fs::path &out) {
    FitSettings f;
    f.nodes = sim / "nodes.csv";
    f.pathways = sim / "pathways.json";
    f.responses = sim / "responses.csv";
    f.out = out;
    f.iterations = 40;
    f.Q = 2;
    f.chains = 2;
    f.seed = 3;
    return f;
}

}  // namespace

TEST_SUITE("commands") {

TEST_CASE("simulate, fit, score and map") {
    const auto dir = scratch("pipeline");
    SimulateSettings s;
    s.out = dir / "sim";
    s.seed = 2;
    s.sim.n = 10;
    run_simulate(s);
    CHECK(fs::exists(s.out / "truth.json"));
    CHECK(fs::exists(s.out / "manifest.json"));

    run_fit(quick_fit(s.out, dir / "fit"));
    CHECK(fs::exists(dir / "fit" / "chain_1" / "meta.json"));
    CHECK(fs::exists(dir / "fit" / "chain_2" / "W.csv"));
    const auto chains = load_fit_chains(dir / "fit");
    REQUIRE(chains.size() == 2);
    CHECK(chains[1].meta.seed == 4);

    ScoreSettings sc;
    sc.fit = dir / "fit";
    sc.truth = s.out / "truth.json";
    sc.out = dir / "score";
    run_score(sc);
    CHECK(fs::exists(dir / "score" / "score.json"));
    CHECK(fs::exists(dir / "score" / "coverage.csv"));

    const NodeSet nodes = read_nodes(s.out / "nodes.csv");
    const GridSpec grid = build_grid(Domain{0.0, 1.0, 0.0, 1.0}, 4, 4);
    NodeSet gn;
    gn.coords = grid.coords;
    gn.covariate_names = nodes.covariate_names;
    Rng rng(1);
    gn.covariates.resize(grid.size(), nodes.covariates.cols());
    for (Index g = 0; g < grid.size(); ++g) {
        gn.ids.push_back("g" + std::to_string(g + 1));
        for (Index k = 0; k < gn.covariates.cols(); ++k) gn.covariates(g, k) = rng.normal();
    }
    write_nodes(dir / "grid.csv", gn);

    MapSettings m;
    m.fit = dir / "fit";
    m.out = dir / "map";
    m.nx = 4;
    m.ny = 4;
    m.box = Domain{0.0, 1.0, 0.0, 1.0};
    CHECK_THROWS_AS(run_map(m), ConfigError);
    m.grid_nodes = dir / "grid.csv";
    run_map(m);
    const CsvTable v = read_csv(dir / "map" / "vectors.csv");
    // central differences exist only at the 2 x 2 interior
    CHECK(v.rows.size() == 4);
    CHECK(fs::exists(dir / "map" / "zbar.csv"));
    CHECK(fs::exists(dir / "map" / "theta_barrier.csv"));
    CHECK(fs::exists(dir / "map" / "mu.csv"));
}

TEST_CASE("same seed gives identical fit outputs") {
    const auto dir = scratch("repeat");
    SimulateSettings s;
    s.out = dir / "sim";
    s.sim.n = 8;
    run_simulate(s);
    run_fit(quick_fit(s.out, dir / "a"));
    run_fit(quick_fit(s.out, dir / "b"));
    CHECK(slurp(dir / "a" / "manifest.json") == slurp(dir / "b" / "manifest.json"));
    for (const char *f : {"meta.json", "scalars.csv", "beta.csv", "eta.csv", "W.csv", "C_load.csv",
                          "delta_summary.csv"}) {
        CAPTURE(f);
        CHECK(slurp(dir / "a" / "chain_2" / f) == slurp(dir / "b" / "chain_2" / f));
    }
}

TEST_CASE("exit codes") {
    const auto dir = scratch("exit");
    CHECK(cli("fit --nodes " + (dir / "nope.csv").string() + " --responses " + (dir / "r.csv").string() + " --out " + (dir / "out").string()) == 2);
    CHECK_FALSE(fs::exists(dir / "out"));
    CHECK(cli("fit --out " + (dir / "out").string()) == 2);
    CHECK(cli("simulate --out " + (dir / "sim").string() + " --n 6") == 0);
    CHECK(cli("score --fit " + (dir / "missing").string() + " --out " + (dir / "s").string()) != 0);
    CHECK(exit_code(ConfigError("x")) == 2);
    CHECK(exit_code(InvalidInput("x")) == 2);
    CHECK(exit_code(IoError("x")) == 3);
    CHECK(exit_code(InvalidState("x")) == 4);

    FitSettings f;
    f.nodes = dir / "sim" / "nodes.csv";
    f.out = dir / "fit";
    CHECK_THROWS_AS(run_fit(f), ConfigError);
    CHECK_FALSE(fs::exists(dir / "fit"));
}

}
