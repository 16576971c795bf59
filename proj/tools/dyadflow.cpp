#include "dyadflow/commands.hpp"
#include "dyadflow/error.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

using namespace dyadflow;

int main(int argc, char **argv) {
    CLI::App app{"Nonstationary dyadic flow models for landscape genomics"};
    app.set_version_flag("--version", std::string(DYADFLOW_VERSION));
    app.set_config("--config", "", "TOML/INI file; sections are named after subcommands");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);

    const std::map<std::string, ModelVariant> variants{{"standard", ModelVariant::standard},
                                                       {"conn_only", ModelVariant::conn_only},
                                                       {"dsvc_only", ModelVariant::dsvc_only},
                                                       {"full", ModelVariant::full}};
    const std::map<std::string, KernelFamily> kernels{{"exponential", KernelFamily::exponential},
                                                      {"matern32", KernelFamily::matern32}};

    SimulateSettings sim;
    auto *cs = app.add_subcommand("simulate", "generate a synthetic dataset with known truth");
    cs->add_option("--out", sim.out, "output directory")->required();
    cs->add_option("--seed", sim.seed);
    cs->add_option("--n", sim.sim.n, "number of nodes")->check(CLI::Range(4, 100000));
    cs->add_option("--q", sim.sim.Q, "latent factors")->check(CLI::Range(1, 100));
    cs->add_option("--tau", sim.sim.tau, "pathway kernel length")->check(CLI::PositiveNumber);
    cs->add_option("--sigma2", sim.sim.sigma2)->check(CLI::NonNegativeNumber);
    cs->add_option("--sigma2-eta", sim.sim.sigma2_eta)->check(CLI::NonNegativeNumber);
    cs->add_option("--alpha", sim.sim.alpha);

    IngestSettings ing;
    std::string mode = "discordant";
    auto *ci = app.add_subcommand("ingest", "genotype dosages to mismatch and comparable-count matrices");
    ci->add_option("--genotypes", ing.genotypes, "chrom,pos,locus,<ids> CSV")->required();
    ci->add_option("--out", ing.out)->required();
    ci->add_option("--per-chrom", ing.per_chrom)->check(CLI::PositiveNumber);
    ci->add_option("--seed", ing.seed);
    ci->add_option("--mode", mode)->check(CLI::IsMember({"discordant", "allele"}));

    FitSettings fit;
    std::string nodes, pathways, responses, gdm, comparable;
    long loci = 0;
    double var_logphi = 0.0, nugget = -1.0;
    auto *cf = app.add_subcommand("fit", "run MCMC chains");
    cf->add_option("--nodes", nodes, "id,x,y,covariates CSV")->required();
    cf->add_option("--pathways", pathways, "pathway classes JSON");
    cf->add_option("--responses", responses, "id_i,id_j,y CSV");
    cf->add_option("--gdm", gdm, "mismatch-count matrix CSV");
    cf->add_option("--comparable", comparable, "comparable-count matrix CSV");
    cf->add_option("--loci", loci, "constant comparable count when no matrix is given");
    cf->add_option("--out", fit.out)->required();
    cf->add_option("--variant", fit.variant)->transform(CLI::CheckedTransformer(variants, CLI::ignore_case));
    cf->add_option("--iterations", fit.iterations)->check(CLI::PositiveNumber);
    cf->add_option("--burnin-fraction", fit.burnin_fraction);
    cf->add_option("--thin", fit.thin)->check(CLI::PositiveNumber);
    cf->add_option("--chains", fit.chains)->check(CLI::PositiveNumber);
    cf->add_option("--seed", fit.seed);
    cf->add_option("--q", fit.Q)->check(CLI::NonNegativeNumber);
    cf->add_option("--factor-draws", fit.factor_draws, "retained W/C snapshots per chain")->check(CLI::PositiveNumber);
    cf->add_option("--standardize-connectivity", fit.design.standardize_connectivity);
    cf->add_option("--rbf", fit.design.use_rbf, "RBF-expand covariate differences");
    cf->add_option("--rbf-centers", fit.design.rbf_centers)->check(CLI::PositiveNumber);
    cf->add_option("--rbf-seed", fit.design.rbf_seed);
    cf->add_option("--eta-kernel", fit.eta_kernel)->transform(CLI::CheckedTransformer(kernels, CLI::ignore_case));
    cf->add_option("--var-logphi", var_logphi, "prior variance of log ranges")->check(CLI::PositiveNumber);
    cf->add_option("--node-nugget", nugget)->check(CLI::NonNegativeNumber);

    ScoreSettings score;
    std::string truth;
    auto *cc = app.add_subcommand("score", "CRPS, convergence, coverage and kinship residuals");
    cc->add_option("--fit", score.fit, "fit directory")->required();
    cc->add_option("--truth", truth, "truth.json from simulate");
    cc->add_option("--out", score.out)->required();
    cc->add_option("--seed", score.seed);
    cc->add_option("--near-clonal", score.near_clonal_threshold)->check(CLI::NonNegativeNumber);

    MapSettings map;
    std::string grid_nodes;
    std::vector<double> box;
    auto *cm = app.add_subcommand("map", "grid vector field, DSVC z-scores and pathway slopes");
    cm->add_option("--fit", map.fit)->required();
    cm->add_option("--grid-nodes", grid_nodes, "id,x,y,covariates at grid nodes, x fastest");
    cm->add_option("--out", map.out)->required();
    cm->add_option("--nx", map.nx)->check(CLI::Range(3, 100000));
    cm->add_option("--ny", map.ny)->check(CLI::Range(3, 100000));
    cm->add_option("--box", box, "xmin xmax ymin ymax")->expected(4);
    cm->add_option("--max-grid-nodes", map.options.max_grid_nodes)->check(CLI::PositiveNumber);
    cm->add_option("--max-draws", map.options.max_draws)->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*cs) {
            run_simulate(sim);
        } else if (*ci) {
            ing.mode = mode == "allele" ? MismatchMode::allele : MismatchMode::discordant;
            run_ingest(ing);
        } else if (*cf) {
            fit.nodes = nodes;
            if (!pathways.empty()) fit.pathways = pathways;
            if (!responses.empty()) fit.responses = responses;
            if (!gdm.empty()) fit.gdm = gdm;
            if (!comparable.empty()) fit.comparable = comparable;
            if (loci > 0) fit.loci = loci;
            if (var_logphi > 0.0) fit.var_logphi = var_logphi;
            if (nugget >= 0.0) fit.node_nugget = nugget;
            run_fit(fit);
        } else if (*cc) {
            if (!truth.empty()) score.truth = truth;
            run_score(score);
        } else if (*cm) {
            if (!grid_nodes.empty()) map.grid_nodes = grid_nodes;
            if (!box.empty()) map.box = Domain{box[0], box[1], box[2], box[3]};
            run_map(map);
        }
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
