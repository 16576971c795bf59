#pragma once

#include "dyadflow/design.hpp"
#include "dyadflow/dyadic.hpp"
#include "dyadflow/evaluation.hpp"
#include "dyadflow/mapping.hpp"
#include "dyadflow/sampler.hpp"
#include "dyadflow/simulator.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dyadflow {

namespace fs = std::filesystem;

inline constexpr int kChainSchemaVersion = 1;

struct CsvTable {
    std::string file;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column position by name; throws a parse error naming the file when absent.
    [[nodiscard]] std::size_t column(const std::string &name) const;
    [[nodiscard]] double number(std::size_t row, std::size_t col) const;
};

/// Comma-separated text with a header row. Rows with a different field count fail with
/// the offending row number (1-based, header = row 1).
CsvTable read_csv(const fs::path &path);
void write_csv(const fs::path &path, const std::vector<std::string> &header,
               const std::vector<std::vector<std::string>> &rows);

/// Shortest text that reads back to the same double (at most 17 significant digits).
std::string format_double(double v);
double parse_double(const std::string &text, const std::string &file, long row);

/// id,x,y[,covariates...]
NodeSet read_nodes(const fs::path &path);
void write_nodes(const fs::path &path, const NodeSet &nodes);

/// Square matrix keyed by node id: header "id,<ids>", one row per id.
Eigen::MatrixXi read_node_matrix(const fs::path &path, const std::vector<std::string> &ids);
void write_node_matrix(const fs::path &path, const std::vector<std::string> &ids, const Eigen::MatrixXi &m);

/// id_i,id_j,y with optional d,M columns; absent pairs and "NA" values are missing.
DyadicResponse read_responses(const fs::path &path, const std::vector<std::string> &ids);
void write_responses(const fs::path &path, const std::vector<std::string> &ids, const DyadicResponse &response);

std::vector<PathwayClass> read_pathways(const fs::path &path);
void write_pathways(const fs::path &path, const std::vector<PathwayClass> &pathways);

/// Grid covariates in lattice order from id,x,y[,covariates...]; coordinates must match.
Eigen::MatrixXd read_grid_covariates(const fs::path &path, const GridSpec &grid, Index expected_covariates);

void save_chain(const fs::path &dir, const ChainOutput &chain);
ChainOutput load_chain(const fs::path &dir);

void write_truth(const fs::path &dir, const SimTruth &truth);
/// Scalar parameter values by name, as in scalar_parameters().
std::vector<std::pair<std::string, double>> read_truth(const fs::path &path);

void write_score(const fs::path &dir, const ScoreReport &report, const ModelData &data,
                 const std::vector<std::string> &ids);

std::string sha256_file(const fs::path &path);

struct Manifest {
    std::string subcommand;
    std::map<std::string, std::string> inputs;   // name -> sha256
    std::map<std::string, std::string> outputs;  // name -> sha256
    std::map<std::string, std::string> settings;
    std::optional<std::uint64_t> seed;
};
void write_manifest(const fs::path &dir, const Manifest &manifest);

}  // namespace dyadflow
