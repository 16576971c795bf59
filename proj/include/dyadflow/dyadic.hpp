#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dyadflow {

using Index = Eigen::Index;

/// Spatially referenced nodes. Covariates are one row per node.
struct NodeSet {
    std::vector<std::string> ids;
    Eigen::MatrixX2d coords;
    Eigen::MatrixXd covariates;
    std::vector<std::string> covariate_names;

    [[nodiscard]] Index size() const { return coords.rows(); }
    void validate() const;
};

/// Dyad (i, j) with i < j, 0-based.
struct Dyad {
    Index i;
    Index j;
    friend bool operator==(const Dyad &, const Dyad &) = default;
};

/// Lexicographic enumeration of all unordered node pairs. The order is the canonical
/// layout of every length-N vector in the library.
class DyadIndex {
public:
    DyadIndex() = default;
    explicit DyadIndex(Index n);

    [[nodiscard]] Index nodes() const { return n_; }
    [[nodiscard]] Index size() const { return static_cast<Index>(pairs_.size()); }
    [[nodiscard]] const std::vector<Dyad> &pairs() const { return pairs_; }
    [[nodiscard]] const Dyad &operator[](Index k) const { return pairs_[static_cast<std::size_t>(k)]; }

    /// Position of dyad (i, j) in the enumeration; the pair may be given in either order.
    [[nodiscard]] Index position(Index i, Index j) const;

    /// Dense N x n signed incidence matrix: -1 at the source, +1 at the destination.
    [[nodiscard]] Eigen::MatrixXd incidence() const;

    /// incidence() * v without forming the matrix.
    [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd &v) const;
    /// incidence()' * r without forming the matrix.
    [[nodiscard]] Eigen::VectorXd apply_transpose(const Eigen::VectorXd &r) const;

private:
    Index n_ = 0;
    std::vector<Dyad> pairs_;
};

DyadIndex build_dyad_index(Index n);

/// Logit of the continuity-corrected mismatch proportion (d + 0.5) / (M + 1).
double dyadic_response(long mismatches, long comparable);

struct DyadicResponse {
    Eigen::VectorXd values;
    std::optional<Eigen::VectorXi> mismatches;
    std::optional<Eigen::VectorXi> comparable;
    /// 1 where the dyad enters the likelihood, 0 where its response is missing.
    Eigen::VectorXd observed;

    void validate() const;
};

/// Builds responses from symmetric mismatch / comparable-count matrices. Pairs with
/// zero comparable loci are marked missing.
DyadicResponse response_from_counts(const DyadIndex &idx, const Eigen::MatrixXi &mismatches,
                                    const Eigen::MatrixXi &comparable);

/// value_j - value_i for every dyad (i, j).
Eigen::VectorXd pairwise_difference(const Eigen::VectorXd &node_values, const DyadIndex &idx);
/// Column-wise pairwise_difference of an n x p matrix.
Eigen::MatrixXd pairwise_difference(const Eigen::MatrixXd &node_values, const DyadIndex &idx);

/// Euclidean distance matrix of the rows of `coords`.
Eigen::MatrixXd pairwise_distances(const Eigen::MatrixX2d &coords);
Eigen::MatrixXd cross_distances(const Eigen::MatrixX2d &a, const Eigen::MatrixX2d &b);

/// Upper-triangle (i < j) distances in dyad order.
Eigen::VectorXd dyad_distances(const Eigen::MatrixX2d &coords);

double median(std::vector<double> values);

}  // namespace dyadflow
