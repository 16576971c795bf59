#include "dyadflow/commands.hpp"

#include "dyadflow/error.hpp"
#include "dyadflow/evaluation.hpp"
#include "dyadflow/mapping.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dyadflow {

using json = nlohmann::json;

namespace {

void require_file(const fs::path &p, const std::string &what) {
    if (!fs::is_regular_file(p)) throw ConfigError(what + " not found: " + p.string());
}

std::map<std::string, std::string> hash_outputs(const fs::path &dir) {
    std::map<std::string, std::string> out;
    for (const auto &e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
        out[fs::relative(e.path(), dir).generic_string()] = sha256_file(e.path());
    }
    return out;
}

void finish_manifest(const fs::path &dir, Manifest m) {
    m.outputs = hash_outputs(dir);
    write_manifest(dir, m);
}

std::string fmt(double v) { return format_double(v); }

json design_json(const DesignConfig &d) {
    return {{"standardize_connectivity", d.standardize_connectivity},
            {"use_rbf", d.use_rbf},
            {"rbf_centers", d.rbf_centers},
            {"rbf_seed", d.rbf_seed}};
}

Domain node_box(const NodeSet &nodes) {
    Domain b{nodes.coords.col(0).minCoeff(), nodes.coords.col(0).maxCoeff(), nodes.coords.col(1).minCoeff(),
             nodes.coords.col(1).maxCoeff()};
    b.validate();
    return b;
}

}  // namespace

int exit_code(const Error &e) {
    switch (e.kind()) {
        case Error::Kind::config:
        case Error::Kind::invalid_input: return 2;
        case Error::Kind::io: return 3;
        case Error::Kind::numerics: return 4;
    }
    return 1;
}

void FitSettings::validate() const {
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (!(burnin_fraction >= 0.0 && burnin_fraction < 1.0)) throw ConfigError("burnin fraction must be in [0, 1)");
    if (thin < 1) throw ConfigError("thin must be >= 1");
    if (chains < 1) throw ConfigError("chains must be >= 1");
    if (Q < 0) throw ConfigError("Q must be >= 0");
    if (factor_draws < 1) throw ConfigError("factor_draws must be >= 1");
    if (out.empty()) throw ConfigError("an output directory is required");
    if (!responses && !gdm) throw ConfigError("either responses or gdm is required");
    if (responses && gdm) throw ConfigError("give responses or gdm, not both");
    if (gdm && !comparable && !loci) throw ConfigError("gdm needs comparable counts or a constant loci count");
    if (static_cast<long>(std::floor(static_cast<double>(iterations) * burnin_fraction)) >= iterations)
        throw ConfigError("burn-in leaves no retained draws");
}

FitInputs load_fit_inputs(const FitSettings &s) {
    s.validate();
    require_file(s.nodes, "nodes file");
    if (s.pathways) require_file(*s.pathways, "pathways file");
    if (s.responses) require_file(*s.responses, "responses file");
    if (s.gdm) require_file(*s.gdm, "gdm file");
    if (s.comparable) require_file(*s.comparable, "comparable-count file");

    FitInputs in;
    in.nodes = read_nodes(s.nodes);
    if (s.pathways) in.pathways = read_pathways(*s.pathways);
    if (uses_connectivity(s.variant) && in.pathways.empty())
        throw ConfigError("variant " + to_string(s.variant) + " needs a pathways file with at least one class");
    const DyadIndex idx(in.nodes.size());
    if (s.responses) {
        in.response = read_responses(*s.responses, in.nodes.ids);
    } else {
        const Eigen::MatrixXi D = read_node_matrix(*s.gdm, in.nodes.ids);
        Eigen::MatrixXi M;
        if (s.comparable) {
            M = read_node_matrix(*s.comparable, in.nodes.ids);
        } else {
            if (*s.loci < 1) throw ConfigError("loci must be >= 1");
            M = Eigen::MatrixXi::Constant(D.rows(), D.cols(), static_cast<int>(*s.loci));
            M.diagonal().setZero();
        }
        in.response = response_from_counts(idx, D, M);
    }
    in.design = build_design(in.nodes, in.pathways, idx, s.design);
    in.data = make_model_data(in.nodes.coords, in.response, in.design.design, s.variant);
    return in;
}

void run_simulate(const SimulateSettings &s) {
    if (s.out.empty()) throw ConfigError("an output directory is required");
    const SimTruth t = simulate_dataset(s.sim, s.seed);
    fs::create_directories(s.out);
    write_nodes(s.out / "nodes.csv", t.nodes);
    write_pathways(s.out / "pathways.json", t.pathways);
    write_responses(s.out / "responses.csv", t.nodes.ids, t.response);
    write_truth(s.out, t);
    Manifest m;
    m.subcommand = "simulate";
    m.seed = s.seed;
    m.settings = {{"n", std::to_string(s.sim.n)},
                  {"p", std::to_string(s.sim.p)},
                  {"Q", std::to_string(s.sim.Q)},
                  {"tau", fmt(s.sim.tau)},
                  {"sigma2", fmt(s.sim.sigma2)},
                  {"sigma2_eta", fmt(s.sim.sigma2_eta)},
                  {"alpha", fmt(s.sim.alpha)}};
    finish_manifest(s.out, m);
}

void run_ingest(const IngestSettings &s) {
    require_file(s.genotypes, "genotype file");
    if (s.out.empty()) throw ConfigError("an output directory is required");
    const GenotypeTable table = read_genotypes(s.genotypes);
    const IngestResult r = ingest_genotypes(table, s.per_chrom, s.seed, s.mode);
    fs::create_directories(s.out);
    write_node_matrix(s.out / "gdm.csv", r.ids, r.mismatches);
    write_node_matrix(s.out / "comparable.csv", r.ids, r.comparable);
    std::vector<std::vector<std::string>> rows;
    for (const auto k : r.retained) {
        const auto &l = table.loci[k];
        rows.push_back({l.chromosome, std::to_string(l.position), l.id});
    }
    write_csv(s.out / "retained_loci.csv", {"chrom", "pos", "locus"}, rows);
    Manifest m;
    m.subcommand = "ingest";
    m.seed = s.seed;
    m.inputs = {{s.genotypes.filename().string(), sha256_file(s.genotypes)}};
    m.settings = {{"per_chrom", std::to_string(s.per_chrom)},
                  {"mode", s.mode == MismatchMode::discordant ? "discordant" : "allele"},
                  {"retained_loci", std::to_string(r.retained.size())},
                  {"warnings", std::to_string(r.warnings.size())}};
    finish_manifest(s.out, m);
}

void run_fit(const FitSettings &s) {
    // everything is validated and parsed before the output directory exists
    FitInputs in = load_fit_inputs(s);
    PriorConfig prior = make_prior(in.data.distances, s.Q, s.var_logphi.value_or(2.25));
    prior.eta_kernel = s.eta_kernel;
    if (s.node_nugget) prior.node_nugget = *s.node_nugget;
    prior.validate();

    Schedule sched;
    sched.iterations = s.iterations;
    sched.burnin = static_cast<long>(std::floor(static_cast<double>(s.iterations) * s.burnin_fraction));
    sched.thin = s.thin;
    const long draws = (sched.iterations - sched.burnin) / sched.thin;
    sched.factor_every = std::max<long>(1, (draws + s.factor_draws - 1) / s.factor_draws);

    fs::create_directories(s.out / "data");
    write_nodes(s.out / "data" / "nodes.csv", in.nodes);
    write_pathways(s.out / "data" / "pathways.json", in.pathways);
    write_responses(s.out / "data" / "responses.csv", in.nodes.ids, in.response);
    json fit{{"variant", to_string(s.variant)},
             {"design", design_json(s.design)},
             {"chains", s.chains},
             {"seed", s.seed},
             {"iterations", sched.iterations},
             {"burnin", sched.burnin},
             {"thin", sched.thin},
             {"factor_every", sched.factor_every},
             {"Q", s.Q},
             {"eta_kernel", to_string(prior.eta_kernel)},
             {"mu_logphi", prior.mu_logphi},
             {"var_logphi", prior.var_logphi},
             {"phi_min", prior.phi_min},
             {"phi_max", prior.phi_max},
             {"node_nugget", prior.node_nugget}};
    {
        std::ofstream os(s.out / "fit.json");
        if (!os) throw IoError("cannot write " + (s.out / "fit.json").string());
        os << fit.dump(2) << '\n';
    }
    for (int c = 1; c <= s.chains; ++c) {
        Schedule sc = sched;
        sc.seed = s.seed + static_cast<std::uint64_t>(c - 1);
        const ChainOutput chain = run_chain(in.data, prior, sc);
        save_chain(s.out / ("chain_" + std::to_string(c)), chain);
    }
    Manifest m;
    m.subcommand = "fit";
    m.seed = s.seed;
    m.inputs[s.nodes.filename().string()] = sha256_file(s.nodes);
    if (s.pathways) m.inputs[s.pathways->filename().string()] = sha256_file(*s.pathways);
    if (s.responses) m.inputs[s.responses->filename().string()] = sha256_file(*s.responses);
    if (s.gdm) m.inputs[s.gdm->filename().string()] = sha256_file(*s.gdm);
    if (s.comparable) m.inputs[s.comparable->filename().string()] = sha256_file(*s.comparable);
    m.settings = {{"variant", to_string(s.variant)},
                  {"iterations", std::to_string(s.iterations)},
                  {"burnin_fraction", fmt(s.burnin_fraction)},
                  {"thin", std::to_string(s.thin)},
                  {"chains", std::to_string(s.chains)},
                  {"Q", std::to_string(s.Q)}};
    finish_manifest(s.out, m);
}

FitInputs load_fit_directory(const fs::path &dir) {
    const fs::path fj = dir / "fit.json";
    require_file(fj, "fit description");
    std::ifstream is(fj);
    json fit;
    try {
        fit = json::parse(is);
    } catch (const json::exception &e) {
        throw ParseError(fj.string(), 0, e.what());
    }
    FitSettings s;
    s.nodes = dir / "data" / "nodes.csv";
    s.pathways = dir / "data" / "pathways.json";
    s.responses = dir / "data" / "responses.csv";
    s.out = dir;
    try {
        s.variant = model_variant_from_string(fit.at("variant").get<std::string>());
        const auto &d = fit.at("design");
        s.design.standardize_connectivity = d.at("standardize_connectivity").get<bool>();
        s.design.use_rbf = d.at("use_rbf").get<bool>();
        s.design.rbf_centers = d.at("rbf_centers").get<Index>();
        s.design.rbf_seed = d.at("rbf_seed").get<std::uint64_t>();
        s.chains = fit.at("chains").get<int>();
    } catch (const json::exception &e) {
        throw ParseError(fj.string(), 0, e.what());
    }
    return load_fit_inputs(s);
}

std::vector<ChainOutput> load_fit_chains(const fs::path &dir) {
    std::vector<ChainOutput> out;
    for (int c = 1;; ++c) {
        const fs::path p = dir / ("chain_" + std::to_string(c));
        if (!fs::is_directory(p)) break;
        out.push_back(load_chain(p));
    }
    if (out.empty()) throw ConfigError("no chain directories in " + dir.string());
    return out;
}

void run_score(const ScoreSettings &s) {
    if (s.out.empty()) throw ConfigError("an output directory is required");
    if (s.truth) require_file(*s.truth, "truth file");
    const FitInputs in = load_fit_directory(s.fit);
    const auto chains = load_fit_chains(s.fit);
    std::vector<std::pair<std::string, double>> truth;
    if (s.truth) {
        truth = read_truth(*s.truth);
        if (!uses_connectivity(in.data.variant)) {
            // connectivity coefficients are not part of this model
            const Index p_env = in.data.p_env;
            std::erase_if(truth, [&](const auto &kv) {
                if (kv.first.rfind("beta_", 0) != 0) return false;
                return std::stol(kv.first.substr(5)) > p_env;
            });
        }
    }
    ScoreOptions opt;
    opt.seed = s.seed;
    opt.near_clonal_threshold = s.near_clonal_threshold;
    const ScoreReport rep = score_chains(chains, in.data, in.response.mismatches, truth, opt);
    write_score(s.out, rep, in.data, in.nodes.ids);
    Manifest m;
    m.subcommand = "score";
    m.seed = s.seed;
    for (const auto &e : fs::recursive_directory_iterator(s.fit))
        if (e.is_regular_file() && e.path().filename() != "manifest.json")
            m.inputs["fit/" + fs::relative(e.path(), s.fit).generic_string()] = sha256_file(e.path());
    if (s.truth) m.inputs[s.truth->filename().string()] = sha256_file(*s.truth);
    m.settings = {{"near_clonal_threshold", std::to_string(s.near_clonal_threshold)}};
    finish_manifest(s.out, m);
}

void run_map(const MapSettings &s) {
    if (s.out.empty()) throw ConfigError("an output directory is required");
    if (s.grid_nodes) require_file(*s.grid_nodes, "grid node file");
    const FitInputs in = load_fit_directory(s.fit);
    const auto chains = load_fit_chains(s.fit);
    const Domain box = s.box ? *s.box : node_box(in.nodes);
    GridSpec grid = build_grid(box, s.nx, s.ny);
    if (grid.size() > s.options.max_grid_nodes)
        throw SizeLimit("grid has " + std::to_string(grid.size()) + " nodes; the cap is " +
                        std::to_string(s.options.max_grid_nodes));
    const Index p_raw = in.nodes.covariates.cols();
    if (p_raw > 0) {
        if (!s.grid_nodes) throw ConfigError("grid node covariates are required when the model has environmental terms");
        grid.covariates = read_grid_covariates(*s.grid_nodes, grid, p_raw);
    }
    const Eigen::MatrixXd Zg = grid_design(in.design.recipe, grid, in.data.variant);

    LatentFields all;
    all.dyads = grid_dyads(grid);
    std::vector<double> alpha;
    std::vector<Eigen::VectorXd> beta;
    for (const auto &c : chains) {
        LatentFields f = predict_latent_fields(c, in.nodes.coords, grid, s.options);
        for (std::size_t r = 0; r < f.draws.size(); ++r) {
            alpha.push_back(c.alpha[f.draws[r]]);
            beta.emplace_back(c.beta.row(f.draws[r]).transpose());
            all.eta.push_back(f.eta[r]);
            if (!f.delta.empty()) all.delta.push_back(f.delta[r]);
            all.draws.push_back(f.draws[r]);
        }
    }
    const auto D = static_cast<Index>(alpha.size());
    Eigen::VectorXd a = Eigen::Map<Eigen::VectorXd>(alpha.data(), D);
    Eigen::MatrixXd B(D, in.data.P());
    for (Index r = 0; r < D; ++r) B.row(r) = beta[static_cast<std::size_t>(r)].transpose();

    fs::create_directories(s.out);
    const MeanSurface mu = dyadic_mean_surface(a, B, all, grid, Zg);
    std::vector<std::vector<std::string>> rows;
    for (Index g = 0; g < grid.size(); ++g)
        rows.push_back({fmt(grid.coords(g, 0)), fmt(grid.coords(g, 1)), fmt(mu.mean(g, east)), fmt(mu.mean(g, west)),
                        fmt(mu.mean(g, north)), fmt(mu.mean(g, south))});
    write_csv(s.out / "mu.csv", {"x", "y", "mu_east", "mu_west", "mu_north", "mu_south"}, rows);

    const VectorField vf = vector_field(mu.mean_without_alpha, grid);
    rows.clear();
    for (std::size_t k = 0; k < vf.nodes.size(); ++k) {
        const Index g = vf.nodes[k];
        const auto kk = static_cast<Index>(k);
        rows.push_back({fmt(grid.coords(g, 0)), fmt(grid.coords(g, 1)), fmt(vf.u[kk]), fmt(vf.v[kk]),
                        fmt(vf.log_grad[kk])});
    }
    write_csv(s.out / "vectors.csv", {"x", "y", "u", "v", "log_grad"}, rows);

    if (!all.delta.empty()) {
        const Eigen::VectorXd z = dsvc_zscore_map(summarize_delta(all.delta), all.dyads, grid);
        rows.clear();
        for (Index g = 0; g < grid.size(); ++g)
            rows.push_back({fmt(grid.coords(g, 0)), fmt(grid.coords(g, 1)), fmt(z[g])});
        write_csv(s.out / "zbar.csv", {"x", "y", "zbar"}, rows);
    }
    if (uses_connectivity(in.data.variant)) {
        json summary = json::object();
        for (std::size_t c = 0; c < in.pathways.size(); ++c) {
            const Index col = in.data.p_env + static_cast<Index>(c);
            const SlopeMap sm = node_level_slope_map(B, all.delta, all.dyads, grid, col);
            rows.clear();
            for (Index g = 0; g < grid.size(); ++g)
                rows.push_back({fmt(grid.coords(g, 0)), fmt(grid.coords(g, 1)), fmt(sm.mean[g]), fmt(sm.lower[g]),
                                fmt(sm.upper[g])});
            write_csv(s.out / ("theta_" + in.pathways[c].name + ".csv"), {"x", "y", "mean", "lower", "upper"}, rows);
            summary[in.pathways[c].name] = {{"global_mean", sm.global_mean},
                                            {"global_lower", sm.global_lower},
                                            {"global_upper", sm.global_upper},
                                            {"global_prob_positive", sm.global_prob_positive}};
        }
        std::ofstream os(s.out / "theta_summary.json");
        os << summary.dump(2) << '\n';
    }
    Manifest m;
    m.subcommand = "map";
    for (const auto &e : fs::recursive_directory_iterator(s.fit))
        if (e.is_regular_file() && e.path().filename() != "manifest.json")
            m.inputs["fit/" + fs::relative(e.path(), s.fit).generic_string()] = sha256_file(e.path());
    if (s.grid_nodes) m.inputs[s.grid_nodes->filename().string()] = sha256_file(*s.grid_nodes);
    m.settings = {{"nx", std::to_string(s.nx)},
                  {"ny", std::to_string(s.ny)},
                  {"max_draws", std::to_string(s.options.max_draws)},
                  {"max_grid_nodes", std::to_string(s.options.max_grid_nodes)}};
    finish_manifest(s.out, m);
}

}  // namespace dyadflow
