#include "dyadflow/error.hpp"
#include "dyadflow/io.hpp"

#include "support.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>

using namespace dyadflow;
using testing::scratch;

TEST_SUITE("io") {

TEST_CASE("doubles round trip through text") {
    Rng rng(1);
    for (int k = 0; k < 2000; ++k) {
        const double v = std::ldexp(rng.normal(), static_cast<int>(rng.below(200)) - 100);
        CHECK(parse_double(format_double(v), "x", 1) == v);
    }
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "NA");
    CHECK(std::isnan(parse_double("NA", "x", 1)));
    CHECK(parse_double("-Inf", "x", 1) == -std::numeric_limits<double>::infinity());
    CHECK(parse_double(format_double(0.1), "x", 1) == 0.1);
    CHECK_THROWS_AS(parse_double("1.5abc", "x", 3), ParseError);
    CHECK_THROWS_AS(parse_double("", "x", 3), ParseError);
}

TEST_CASE("csv rows with the wrong field count name the row") {
    const auto dir = scratch("csv");
    std::ofstream(dir / "t.csv") << "a,b\n1,2\n3\n";
    try {
        read_csv(dir / "t.csv");
        FAIL("expected a parse error");
    } catch (const ParseError &e) {
        CHECK(e.row() == 3);
        CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }
    CHECK_THROWS_AS(read_csv(dir / "missing.csv"), IoError);
}

TEST_CASE("node, matrix and response files round trip") {
    const auto dir = scratch("nodes");
    SimConfig cfg;
    cfg.n = 12;
    const SimTruth t = simulate_dataset(cfg, 3);
    write_nodes(dir / "nodes.csv", t.nodes);
    const NodeSet n = read_nodes(dir / "nodes.csv");
    CHECK(n.ids == t.nodes.ids);
    CHECK(n.coords == t.nodes.coords);
    CHECK(n.covariates == t.nodes.covariates);
    CHECK(n.covariate_names == t.nodes.covariate_names);

    DyadicResponse r = t.response;
    r.observed[3] = 0.0;
    r.values[3] = 0.0;
    write_responses(dir / "resp.csv", t.nodes.ids, r);
    const DyadicResponse back = read_responses(dir / "resp.csv", t.nodes.ids);
    CHECK(back.observed == r.observed);
    for (Index a = 0; a < r.values.size(); ++a)
        if (r.observed[a] > 0.0) CHECK(back.values[a] == r.values[a]);

    Eigen::MatrixXi m = Eigen::MatrixXi::Zero(12, 12);
    for (Index i = 0; i < 12; ++i)
        for (Index j = i + 1; j < 12; ++j) m(i, j) = m(j, i) = static_cast<int>(i * 7 + j);
    write_node_matrix(dir / "m.csv", t.nodes.ids, m);
    CHECK(read_node_matrix(dir / "m.csv", t.nodes.ids) == m);
    m(0, 1) = 99;
    write_node_matrix(dir / "bad.csv", t.nodes.ids, m);
    CHECK_THROWS(read_node_matrix(dir / "bad.csv", t.nodes.ids));

    write_pathways(dir / "p.json", t.pathways);
    const auto p = read_pathways(dir / "p.json");
    REQUIRE(p.size() == 2);
    CHECK(p[0].name == "barrier");
    CHECK(p[1].tau == t.pathways[1].tau);
    CHECK(p[1].features[0] == t.pathways[1].features[0]);
}

TEST_CASE("chain round trip is lossless") {
    const auto dir = scratch("chain");
    const auto data = testing::small_problem(9, 2, 4, ModelVariant::full, true);
    const ChainOutput c = run_chain(data, make_prior(data.distances, 2), Schedule{30, 20, 1, 9, 3});
    REQUIRE(c.draws() == 10);
    save_chain(dir / "c", c);
    const ChainOutput back = load_chain(dir / "c");
    CHECK(testing::same_chain(c, back));

    const auto sdata = testing::small_problem(9, 2, 4, ModelVariant::standard);
    const ChainOutput s = run_chain(sdata, make_prior(sdata.distances, 2), Schedule{15, 5, 1, 2, 1});
    save_chain(dir / "s", s);
    CHECK(testing::same_chain(s, load_chain(dir / "s")));
}

TEST_CASE("truncated chain file reports its row") {
    const auto dir = scratch("trunc");
    const auto data = testing::small_problem(6, 1, 5, ModelVariant::dsvc_only);
    save_chain(dir, run_chain(data, make_prior(data.distances, 1), Schedule{12, 2, 1, 3, 1}));
    std::string text = testing::slurp(dir / "beta.csv");
    text = text.substr(0, text.find_last_of(','));
    std::ofstream(dir / "beta.csv", std::ios::binary | std::ios::trunc) << text;
    try {
        load_chain(dir);
        FAIL("expected a parse error");
    } catch (const ParseError &e) {
        CHECK(e.row() == 11);
    }
}

TEST_CASE("schema version mismatch is named") {
    const auto dir = scratch("schema");
    const auto data = testing::small_problem(6, 1, 6, ModelVariant::standard);
    save_chain(dir, run_chain(data, make_prior(data.distances, 0), Schedule{6, 2, 1, 3, 1}));
    CHECK_NOTHROW(load_chain(dir));
    auto meta = nlohmann::json::parse(testing::slurp(dir / "meta.json"));
    meta["schema_version"] = 7;
    std::ofstream(dir / "meta.json", std::ios::trunc) << meta.dump();
    try {
        load_chain(dir);
        FAIL("expected a schema mismatch");
    } catch (const SchemaMismatch &e) {
        CHECK(e.found() == 7);
        CHECK(e.expected() == kChainSchemaVersion);
        CHECK(std::string(e.what()).find("7") != std::string::npos);
    }
}

TEST_CASE("manifests hash inputs deterministically") {
    const auto dir = scratch("manifest");
    std::ofstream(dir / "a.txt") << "abc";
    // FIPS 180-2 test vector
    CHECK(sha256_file(dir / "a.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    Manifest m;
    m.subcommand = "fit";
    m.inputs = {{"a.txt", sha256_file(dir / "a.txt")}};
    m.seed = 4;
    write_manifest(dir, m);
    const std::string first = testing::slurp(dir / "manifest.json");
    write_manifest(dir, m);
    CHECK(testing::slurp(dir / "manifest.json") == first);
    CHECK(first.find("\"seed\"") != std::string::npos);
}

TEST_CASE("truth file lists scalar parameters") {
    const auto dir = scratch("truth");
    SimConfig cfg;
    cfg.n = 10;
    const SimTruth t = simulate_dataset(cfg, 2);
    write_truth(dir, t);
    const auto truth = read_truth(dir / "truth.json");
    bool alpha = false, b6 = false;
    for (const auto &[k, v] : truth) {
        if (k == "alpha") alpha = v == t.alpha;
        if (k == "beta_6") b6 = v == t.beta[5];
    }
    CHECK(alpha);
    CHECK(b6);
}

}
