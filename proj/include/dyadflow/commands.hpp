#pragma once

#include "dyadflow/genotypes.hpp"
#include "dyadflow/io.hpp"
#include "dyadflow/sampler.hpp"
#include "dyadflow/simulator.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace dyadflow {

/// Process exit status for an error kind.
int exit_code(const Error &e);

struct SimulateSettings {
    fs::path out;
    std::uint64_t seed = 1;
    SimConfig sim;
};

struct IngestSettings {
    fs::path genotypes;
    fs::path out;
    long per_chrom = 300;
    std::uint64_t seed = 1;
    MismatchMode mode = MismatchMode::discordant;
};

struct FitSettings {
    fs::path nodes;
    std::optional<fs::path> pathways;
    std::optional<fs::path> responses;
    std::optional<fs::path> gdm;
    std::optional<fs::path> comparable;
    std::optional<long> loci;
    fs::path out;
    ModelVariant variant = ModelVariant::full;
    long iterations = 1000;
    double burnin_fraction = 0.2;
    long thin = 1;
    std::uint64_t seed = 1;
    int chains = 1;
    Index Q = 6;
    /// Upper bound on retained factor snapshots per chain.
    long factor_draws = 250;
    DesignConfig design;
    KernelFamily eta_kernel = KernelFamily::exponential;
    std::optional<double> var_logphi;
    std::optional<double> node_nugget;

    void validate() const;
};

struct ScoreSettings {
    fs::path fit;
    std::optional<fs::path> truth;
    fs::path out;
    std::uint64_t seed = 1;
    long near_clonal_threshold = 50;
};

struct MapSettings {
    fs::path fit;
    std::optional<fs::path> grid_nodes;
    fs::path out;
    Index nx = 30;
    Index ny = 30;
    /// Defaults to the bounding box of the nodes.
    std::optional<Domain> box;
    MapOptions options;
};

/// Everything rebuilt from a fit directory.
struct FitInputs {
    NodeSet nodes;
    std::vector<PathwayClass> pathways;
    DyadicResponse response;
    BuiltDesign design;
    ModelData data;
};

/// Reads nodes, pathways and responses and builds the model data; no files are written.
FitInputs load_fit_inputs(const FitSettings &settings);
FitInputs load_fit_directory(const fs::path &fit_dir);
std::vector<ChainOutput> load_fit_chains(const fs::path &fit_dir);

void run_simulate(const SimulateSettings &s);
void run_ingest(const IngestSettings &s);
void run_fit(const FitSettings &s);
void run_score(const ScoreSettings &s);
void run_map(const MapSettings &s);

}  // namespace dyadflow
