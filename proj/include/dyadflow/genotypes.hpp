#pragma once

#include "dyadflow/dyadic.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dyadflow {

struct Locus {
    std::string chromosome;
    long position = 0;
    std::string id;
};

/// Diploid dosages (0, 1, 2) with -1 for missing; one row per locus, one column per individual.
struct GenotypeTable {
    std::vector<Locus> loci;
    std::vector<std::string> individuals;
    Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic> dosage;

    void validate() const;
};

/// chrom,pos,locus,<individual ids...>; missing as NA, "." or -1.
GenotypeTable read_genotypes(const std::filesystem::path &path);

enum class MismatchMode {
    /// d counts loci whose dosages differ.
    discordant,
    /// d sums |a - b| allele differences and M counts alleles (2 per comparable locus).
    allele
};

struct IngestResult {
    std::vector<std::string> ids;
    Eigen::MatrixXi mismatches;
    Eigen::MatrixXi comparable;
    std::vector<std::size_t> retained;
    std::vector<std::string> warnings;
};

/// Seeded stratified subsample of `per_chrom` loci per chromosome, then pairwise-deletion
/// mismatch and comparable counts.
IngestResult ingest_genotypes(const GenotypeTable &table, long per_chrom, std::uint64_t seed,
                              MismatchMode mode = MismatchMode::discordant);

/// Indices chosen by the stratified sampler, sorted; chromosomes are visited in label order.
std::vector<std::size_t> stratified_loci(const std::vector<Locus> &loci, long per_chrom, std::uint64_t seed,
                                         std::vector<std::string> *warnings = nullptr);

}  // namespace dyadflow
