#include "dyadflow/dyadic.hpp"

#include "dyadflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace dyadflow {

void NodeSet::validate() const {
    const Index n = coords.rows();
    if (static_cast<Index>(ids.size()) != n)
        throw InvalidInput("node id count does not match coordinate rows");
    if (covariates.size() > 0 && covariates.rows() != n)
        throw InvalidInput("covariate matrix must have one row per node");
    std::set<std::string> seen(ids.begin(), ids.end());
    if (static_cast<Index>(seen.size()) != n) throw InvalidInput("node ids must be unique");
    if (!coords.allFinite()) throw InvalidInput("node coordinates must be finite");
    if (covariates.size() > 0 && !covariates.allFinite())
        throw InvalidInput("node covariates must be finite");
}

DyadIndex::DyadIndex(Index n) : n_(n) {
    if (n < 2) throw InvalidInput("dyad index needs at least two nodes, got " + std::to_string(n));
    pairs_.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) pairs_.push_back({i, j});
}

Index DyadIndex::position(Index i, Index j) const {
    if (i > j) std::swap(i, j);
    if (i == j || i < 0 || j >= n_) throw InvalidInput("not a dyad of this index");
    // rows 0..i-1 contribute (n-1) + (n-2) + ... + (n-i) pairs
    return i * (2 * n_ - i - 1) / 2 + (j - i - 1);
}

Eigen::MatrixXd DyadIndex::incidence() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(size(), n_);
    for (Index k = 0; k < size(); ++k) {
        m(k, pairs_[k].i) = -1.0;
        m(k, pairs_[k].j) = 1.0;
    }
    return m;
}

Eigen::VectorXd DyadIndex::apply(const Eigen::VectorXd &v) const {
    if (v.size() != n_) throw InvalidInput("vector length must equal the node count");
    Eigen::VectorXd out(size());
    for (Index k = 0; k < size(); ++k) out[k] = v[pairs_[k].j] - v[pairs_[k].i];
    return out;
}

Eigen::VectorXd DyadIndex::apply_transpose(const Eigen::VectorXd &r) const {
    if (r.size() != size()) throw InvalidInput("vector length must equal the dyad count");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
    for (Index k = 0; k < size(); ++k) {
        out[pairs_[k].i] -= r[k];
        out[pairs_[k].j] += r[k];
    }
    return out;
}

DyadIndex build_dyad_index(Index n) { return DyadIndex(n); }

double dyadic_response(long mismatches, long comparable) {
    if (comparable < 1) throw InvalidInput("comparable locus count must be at least 1");
    if (mismatches < 0 || mismatches > comparable)
        throw InvalidInput("mismatch count must lie in [0, comparable]");
    // log(p / (1 - p)) with p = (d + 0.5) / (M + 1), written without the cancellation
    const double num = static_cast<double>(mismatches) + 0.5;
    const double den = static_cast<double>(comparable - mismatches) + 0.5;
    return std::log(num / den);
}

void DyadicResponse::validate() const {
    if (observed.size() != values.size()) throw InvalidInput("observation mask length mismatch");
    for (Index k = 0; k < values.size(); ++k)
        if (observed[k] != 0.0 && !std::isfinite(values[k]))
            throw InvalidInput("observed dyadic responses must be finite");
    if (mismatches && comparable) {
        for (Index k = 0; k < values.size(); ++k) {
            if ((*comparable)[k] == 0) continue;
            if ((*mismatches)[k] < 0 || (*mismatches)[k] > (*comparable)[k])
                throw InvalidInput("mismatch count outside [0, comparable]");
        }
    }
}

DyadicResponse response_from_counts(const DyadIndex &idx, const Eigen::MatrixXi &mismatches,
                                    const Eigen::MatrixXi &comparable) {
    const Index n = idx.nodes();
    if (mismatches.rows() != n || mismatches.cols() != n || comparable.rows() != n ||
        comparable.cols() != n)
        throw InvalidInput("count matrices must be n x n");
    DyadicResponse r;
    r.values = Eigen::VectorXd::Zero(idx.size());
    r.observed = Eigen::VectorXd::Zero(idx.size());
    Eigen::VectorXi d(idx.size()), m(idx.size());
    for (Index k = 0; k < idx.size(); ++k) {
        const auto [i, j] = idx[k];
        d[k] = mismatches(i, j);
        m[k] = comparable(i, j);
        if (m[k] > 0) {
            r.values[k] = dyadic_response(d[k], m[k]);
            r.observed[k] = 1.0;
        }
    }
    r.mismatches = d;
    r.comparable = m;
    return r;
}

Eigen::VectorXd pairwise_difference(const Eigen::VectorXd &node_values, const DyadIndex &idx) {
    return idx.apply(node_values);
}

Eigen::MatrixXd pairwise_difference(const Eigen::MatrixXd &node_values, const DyadIndex &idx) {
    if (node_values.rows() != idx.nodes())
        throw InvalidInput("node matrix must have one row per node");
    Eigen::MatrixXd out(idx.size(), node_values.cols());
    for (Index k = 0; k < idx.size(); ++k)
        out.row(k) = node_values.row(idx[k].j) - node_values.row(idx[k].i);
    return out;
}

Eigen::MatrixXd cross_distances(const Eigen::MatrixX2d &a, const Eigen::MatrixX2d &b) {
    Eigen::MatrixXd d(a.rows(), b.rows());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).norm();
    return d;
}

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixX2d &coords) {
    const Index n = coords.rows();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (coords.row(i) - coords.row(j)).norm();
    return d;
}

Eigen::VectorXd dyad_distances(const Eigen::MatrixX2d &coords) {
    const DyadIndex idx(coords.rows());
    Eigen::VectorXd d(idx.size());
    for (Index k = 0; k < idx.size(); ++k) d[k] = (coords.row(idx[k].i) - coords.row(idx[k].j)).norm();
    return d;
}

double median(std::vector<double> values) {
    if (values.empty()) throw InvalidInput("median of an empty set");
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    if (values.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(values.begin(), mid);
    return 0.5 * (lo + hi);
}

}  // namespace dyadflow
