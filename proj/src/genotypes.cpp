#include "dyadflow/genotypes.hpp"

#include "dyadflow/error.hpp"
#include "dyadflow/io.hpp"
#include "dyadflow/random.hpp"

#include <algorithm>
#include <map>

namespace dyadflow {

void GenotypeTable::validate() const {
    if (dosage.rows() != static_cast<Index>(loci.size()) || dosage.cols() != static_cast<Index>(individuals.size()))
        throw InvalidInput("genotype matrix must be loci x individuals");
    for (const auto &l : loci)
        if (l.chromosome.empty()) throw InvalidInput("locus " + l.id + " has an empty chromosome label");
    if (((dosage.array() < -1) || (dosage.array() > 2)).any())
        throw InvalidInput("dosages must be 0, 1, 2 or missing");
}

GenotypeTable read_genotypes(const std::filesystem::path &path) {
    const auto t = read_csv(path);
    if (t.header.size() < 4 || t.header[0] != "chrom" || t.header[1] != "pos" || t.header[2] != "locus")
        throw ParseError(t.file, 1, "header must be chrom,pos,locus followed by individual ids");
    GenotypeTable g;
    g.individuals.assign(t.header.begin() + 3, t.header.end());
    g.dosage.resize(static_cast<Index>(t.rows.size()), static_cast<Index>(g.individuals.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const long row = static_cast<long>(r) + 2;
        const auto &f = t.rows[r];
        g.loci.push_back({f[0], static_cast<long>(parse_double(f[1], t.file, row)), f[2]});
        for (std::size_t k = 3; k < f.size(); ++k) {
            const std::string &v = f[k];
            std::int8_t d;
            if (v == "NA" || v == "." || v == "-1" || v.empty())
                d = -1;
            else if (v == "0" || v == "1" || v == "2")
                d = static_cast<std::int8_t>(v[0] - '0');
            else
                throw ParseError(t.file, row, "invalid dosage '" + v + "'");
            g.dosage(static_cast<Index>(r), static_cast<Index>(k - 3)) = d;
        }
    }
    try {
        g.validate();
    } catch (const InvalidInput &e) {
        throw ParseError(t.file, 0, e.what());
    }
    return g;
}

std::vector<std::size_t> stratified_loci(const std::vector<Locus> &loci, long per_chrom, std::uint64_t seed,
                                         std::vector<std::string> *warnings) {
    if (per_chrom < 1) throw InvalidInput("per-chromosome locus count must be >= 1");
    std::map<std::string, std::vector<std::size_t>> by_chrom;
    for (std::size_t k = 0; k < loci.size(); ++k) by_chrom[loci[k].chromosome].push_back(k);
    Rng rng(seed);
    std::vector<std::size_t> out;
    for (auto &[chrom, members] : by_chrom) {
        const auto want = static_cast<std::size_t>(per_chrom);
        if (members.size() <= want) {
            if (members.size() < want && warnings)
                warnings->push_back("chromosome " + chrom + " has " + std::to_string(members.size()) +
                                    " loci; all retained");
            out.insert(out.end(), members.begin(), members.end());
            continue;
        }
        // partial Fisher-Yates with integer draws only
        for (std::size_t k = 0; k < want; ++k) {
            const auto j = k + static_cast<std::size_t>(rng.below(members.size() - k));
            std::swap(members[k], members[j]);
        }
        out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(want));
    }
    std::sort(out.begin(), out.end());
    return out;
}

IngestResult ingest_genotypes(const GenotypeTable &table, long per_chrom, std::uint64_t seed, MismatchMode mode) {
    table.validate();
    IngestResult res;
    res.ids = table.individuals;
    res.retained = stratified_loci(table.loci, per_chrom, seed, &res.warnings);
    const Index n = table.dosage.cols();
    res.mismatches = Eigen::MatrixXi::Zero(n, n);
    res.comparable = Eigen::MatrixXi::Zero(n, n);
    for (const std::size_t l : res.retained) {
        const auto row = table.dosage.row(static_cast<Index>(l));
        for (Index j = 1; j < n; ++j) {
            const int b = row[j];
            if (b < 0) continue;
            for (Index i = 0; i < j; ++i) {
                const int a = row[i];
                if (a < 0) continue;
                if (mode == MismatchMode::discordant) {
                    res.comparable(i, j) += 1;
                    res.mismatches(i, j) += a != b;
                } else {
                    res.comparable(i, j) += 2;
                    res.mismatches(i, j) += std::abs(a - b);
                }
            }
        }
    }
    res.mismatches = res.mismatches.selfadjointView<Eigen::Upper>();
    res.comparable = res.comparable.selfadjointView<Eigen::Upper>();
    res.mismatches.diagonal().setZero();
    res.comparable.diagonal().setZero();
    for (Index j = 1; j < n; ++j)
        for (Index i = 0; i < j; ++i)
            if (res.comparable(i, j) == 0)
                res.warnings.push_back("pair " + res.ids[static_cast<std::size_t>(i)] + ", " +
                                       res.ids[static_cast<std::size_t>(j)] + " has no comparable loci");
    return res;
}

}  // namespace dyadflow
