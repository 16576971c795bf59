#include "dyadflow/design.hpp"

#include "dyadflow/error.hpp"
#include "dyadflow/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dyadflow {

Eigen::MatrixXd Standardization::apply(const Eigen::MatrixXd &X) const {
    if (X.cols() != means.size()) throw InvalidInput("standardization column count mismatch");
    Eigen::MatrixXd out = X;
    for (Index c = 0; c < X.cols(); ++c) out.col(c) = (X.col(c).array() - means[c]) / scales[c];
    return out;
}

StandardizedColumns standardize_columns(const Eigen::MatrixXd &X) {
    StandardizedColumns out;
    out.values = X;
    out.stats.means = Eigen::VectorXd::Zero(X.cols());
    out.stats.scales = Eigen::VectorXd::Ones(X.cols());
    const double rows = static_cast<double>(X.rows());
    for (Index c = 0; c < X.cols(); ++c) {
        const double mean = X.col(c).mean();
        const double ss = (X.col(c).array() - mean).square().sum();
        const double sd = X.rows() > 1 ? std::sqrt(ss / (rows - 1.0)) : 0.0;
        out.stats.means[c] = mean;
        if (sd > 0.0 && std::isfinite(sd)) {
            out.stats.scales[c] = sd;
            out.values.col(c) = (X.col(c).array() - mean) / sd;
        } else {
            out.values.col(c).setZero();
            out.constant_columns.push_back(c);
        }
    }
    return out;
}

void PathwayClass::validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidInput("pathway '" + name + "': tau must be > 0");
    if (features.empty()) throw InvalidInput("pathway '" + name + "' has no features");
    for (const auto &f : features) {
        if (f.rows() < 1) throw InvalidInput("pathway '" + name + "' has an empty feature");
        if (!f.allFinite()) throw InvalidInput("pathway '" + name + "' has non-finite vertices");
    }
}

double point_segment_distance(const Eigen::Vector2d &p, const Eigen::Vector2d &a, const Eigen::Vector2d &b) {
    const Eigen::Vector2d ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 == 0.0) return (p - a).norm();
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

double point_polyline_distance(const Eigen::Vector2d &p, const Eigen::MatrixX2d &polyline) {
    if (polyline.rows() == 1) return (p - polyline.row(0).transpose()).norm();
    double best = std::numeric_limits<double>::infinity();
    for (Index k = 0; k + 1 < polyline.rows(); ++k)
        best = std::min(best, point_segment_distance(p, polyline.row(k).transpose(),
                                                     polyline.row(k + 1).transpose()));
    return best;
}

Eigen::MatrixXd closeness_scores(const Eigen::MatrixX2d &coords, const PathwayClass &pathway) {
    pathway.validate();
    Eigen::MatrixXd V(coords.rows(), pathway.n_features());
    for (Index i = 0; i < coords.rows(); ++i) {
        const Eigen::Vector2d p = coords.row(i).transpose();
        for (Index f = 0; f < pathway.n_features(); ++f)
            V(i, f) = std::exp(-point_polyline_distance(p, pathway.features[f]) / pathway.tau);
    }
    return V;
}

Eigen::VectorXd shared_segment_covariates(const Eigen::MatrixXd &V, const DyadIndex &idx) {
    if (V.rows() != idx.nodes()) throw InvalidInput("closeness matrix must have one row per node");
    return shared_segment_covariates(V, idx.pairs());
}

Eigen::VectorXd shared_segment_covariates(const Eigen::MatrixXd &V, const std::vector<Dyad> &dyads) {
    if (V.cols() == 0) throw InvalidInput("closeness matrix has no features");
    const double nc = static_cast<double>(V.cols());
    Eigen::VectorXd kappa(static_cast<Index>(dyads.size()));
    for (std::size_t k = 0; k < dyads.size(); ++k)
        kappa[static_cast<Index>(k)] = V.row(dyads[k].i).dot(V.row(dyads[k].j)) / nc;
    return kappa;
}

void RbfSpec::validate() const {
    if (centers.rows() < 1) throw InvalidInput("RBF spec needs at least one center");
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw InvalidInput("RBF bandwidth must be > 0");
}

Eigen::MatrixXd rbf_basis(const Eigen::MatrixXd &diffs, const RbfSpec &spec) {
    spec.validate();
    if (diffs.cols() != spec.centers.cols()) throw InvalidInput("RBF center dimension mismatch");
    const double denom = 2.0 * spec.bandwidth * spec.bandwidth;
    Eigen::MatrixXd out(diffs.rows(), spec.size());
    for (Index r = 0; r < diffs.rows(); ++r)
        for (Index m = 0; m < spec.size(); ++m)
            out(r, m) = std::exp(-(diffs.row(r) - spec.centers.row(m)).squaredNorm() / denom);
    return out;
}

namespace {

Eigen::MatrixXd sorted_rows(const Eigen::MatrixXd &X) {
    std::vector<Index> order(static_cast<std::size_t>(X.rows()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        for (Index c = 0; c < X.cols(); ++c) {
            if (X(a, c) < X(b, c)) return true;
            if (X(a, c) > X(b, c)) return false;
        }
        return false;
    });
    Eigen::MatrixXd out(X.rows(), X.cols());
    for (Index r = 0; r < X.rows(); ++r) out.row(r) = X.row(order[static_cast<std::size_t>(r)]);
    return out;
}

Eigen::MatrixXd kmeans_plus_plus(const Eigen::MatrixXd &X, Index k, Rng &rng) {
    const Index n = X.rows();
    Eigen::MatrixXd centers(k, X.cols());
    centers.row(0) = X.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
    Eigen::VectorXd d2 = (X.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (Index c = 1; c < k; ++c) {
        const double total = d2.sum();
        Index pick = 0;
        if (total > 0.0) {
            double u = rng.uniform() * total;
            for (pick = 0; pick < n - 1; ++pick) {
                u -= d2[pick];
                if (u < 0.0) break;
            }
        } else {
            pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
        }
        centers.row(c) = X.row(pick);
        d2 = d2.cwiseMin((X.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }
    return centers;
}

}  // namespace

RbfSpec fit_rbf_spec(const Eigen::MatrixXd &diffs, Index k, std::uint64_t seed) {
    const Index n = diffs.rows();
    if (k < 1) throw InvalidInput("RBF center count must be at least 1");
    if (k > n) throw InvalidInput("RBF center count exceeds the number of rows");
    const Eigen::RowVectorXd first = diffs.row(0);
    if (((diffs.rowwise() - first).rowwise().squaredNorm().array() == 0.0).all())
        throw InvalidInput("degenerate RBF centers: all difference rows are identical");

    RbfSpec spec;
    if (k == 1) {
        spec.centers = diffs.colwise().mean();
        std::vector<double> dist(static_cast<std::size_t>(n));
        for (Index r = 0; r < n; ++r) dist[static_cast<std::size_t>(r)] = (diffs.row(r) - spec.centers.row(0)).norm();
        const double mean = std::accumulate(dist.begin(), dist.end(), 0.0) / static_cast<double>(n);
        double ss = 0.0;
        for (double d : dist) ss += (d - mean) * (d - mean);
        spec.bandwidth = std::sqrt(ss / static_cast<double>(std::max<Index>(n - 1, 1)));
        if (!(spec.bandwidth > 0.0)) throw InvalidInput("degenerate RBF bandwidth for a single center");
        return spec;
    }

    const Eigen::MatrixXd X = sorted_rows(diffs);
    Rng rng(seed);
    Eigen::MatrixXd centers = kmeans_plus_plus(X, k, rng);
    std::vector<Index> label(static_cast<std::size_t>(n), 0);
    double inertia_prev = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 100; ++iter) {
        double inertia = 0.0;
        for (Index r = 0; r < n; ++r) {
            Index best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (Index c = 0; c < k; ++c) {
                const double d = (X.row(r) - centers.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            label[static_cast<std::size_t>(r)] = best;
            inertia += best_d;
        }
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, X.cols());
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
        for (Index r = 0; r < n; ++r) {
            sums.row(label[static_cast<std::size_t>(r)]) += X.row(r);
            counts[label[static_cast<std::size_t>(r)]] += 1.0;
        }
        for (Index c = 0; c < k; ++c)
            if (counts[c] > 0.0) centers.row(c) = sums.row(c) / counts[c];
        const bool converged = std::isfinite(inertia_prev) &&
                               std::abs(inertia_prev - inertia) <= 1e-6 * std::max(inertia_prev, 1e-300);
        inertia_prev = inertia;
        if (converged) break;
    }

    spec.centers = sorted_rows(centers);
    std::vector<double> between;
    for (Index a = 0; a < k; ++a)
        for (Index b = a + 1; b < k; ++b) between.push_back((spec.centers.row(a) - spec.centers.row(b)).norm());
    spec.bandwidth = median(between);
    if (!(spec.bandwidth > 0.0)) throw InvalidInput("degenerate RBF centers: median inter-center distance is 0");
    return spec;
}

DesignMatrix assemble_design(const Eigen::MatrixXd &env, const Eigen::MatrixXd &conn,
                             bool standardize_connectivity) {
    const Index rows = std::max(env.rows(), conn.rows());
    if ((env.cols() > 0 && env.rows() != rows) || (conn.cols() > 0 && conn.rows() != rows))
        throw InvalidInput("environmental and connectivity blocks have different row counts");
    DesignMatrix d;
    d.env_block = env.cols() > 0 ? env : Eigen::MatrixXd(rows, 0);
    if (conn.cols() > 0 && standardize_connectivity) {
        auto s = standardize_columns(conn);
        d.conn_block = std::move(s.values);
        d.conn_standardization = std::move(s.stats);
    } else {
        d.conn_block = conn.cols() > 0 ? conn : Eigen::MatrixXd(rows, 0);
    }
    d.combined.resize(rows, d.env_block.cols() + d.conn_block.cols());
    d.combined << d.env_block, d.conn_block;
    if (!d.combined.allFinite()) throw InvalidInput("design contains non-finite entries");
    return d;
}

BuiltDesign build_design(const NodeSet &nodes, const std::vector<PathwayClass> &pathways,
                         const DyadIndex &idx, const DesignConfig &config) {
    nodes.validate();
    if (nodes.size() != idx.nodes()) throw InvalidInput("node set and dyad index sizes differ");
    BuiltDesign out;
    auto &recipe = out.recipe;

    Eigen::MatrixXd env(idx.size(), 0);
    if (nodes.covariates.cols() > 0) {
        auto stdz = standardize_columns(nodes.covariates);
        recipe.node_standardization = stdz.stats;
        Eigen::MatrixXd diffs = pairwise_difference(stdz.values, idx);
        if (config.use_rbf) {
            recipe.rbf = fit_rbf_spec(diffs, config.rbf_centers, config.rbf_seed);
            env = rbf_basis(diffs, *recipe.rbf);
            for (Index m = 0; m < recipe.rbf->size(); ++m) recipe.env_names.push_back("rbf" + std::to_string(m + 1));
        } else {
            env = std::move(diffs);
            recipe.env_names = nodes.covariate_names;
            if (static_cast<Index>(recipe.env_names.size()) != env.cols()) {
                recipe.env_names.clear();
                for (Index c = 0; c < env.cols(); ++c) recipe.env_names.push_back("x" + std::to_string(c + 1));
            }
        }
    } else {
        recipe.node_standardization.means.resize(0);
        recipe.node_standardization.scales.resize(0);
    }

    Eigen::MatrixXd conn(idx.size(), static_cast<Index>(pathways.size()));
    for (std::size_t c = 0; c < pathways.size(); ++c) {
        conn.col(static_cast<Index>(c)) = shared_segment_covariates(closeness_scores(nodes.coords, pathways[c]), idx);
        recipe.conn_names.push_back(pathways[c].name);
    }
    recipe.pathways = pathways;

    out.design = assemble_design(env, conn, config.standardize_connectivity);
    out.design.env_names = recipe.env_names;
    out.design.conn_names = recipe.conn_names;
    recipe.conn_standardization = out.design.conn_standardization;
    return out;
}

Eigen::MatrixXd design_rows(const DesignRecipe &recipe, const Eigen::MatrixX2d &coords,
                            const Eigen::MatrixXd &covariates, const std::vector<Dyad> &pairs) {
    const Index rows = static_cast<Index>(pairs.size());
    Eigen::MatrixXd env(rows, 0);
    const Index p_raw = recipe.node_standardization.means.size();
    if (p_raw > 0) {
        if (covariates.rows() != coords.rows() || covariates.cols() != p_raw)
            throw InvalidInput("covariates are required at every point for the environmental terms");
        const Eigen::MatrixXd x = recipe.node_standardization.apply(covariates);
        Eigen::MatrixXd diffs(rows, p_raw);
        for (Index k = 0; k < rows; ++k) diffs.row(k) = x.row(pairs[k].j) - x.row(pairs[k].i);
        env = recipe.rbf ? rbf_basis(diffs, *recipe.rbf) : diffs;
    }
    const Index C = static_cast<Index>(recipe.pathways.size());
    Eigen::MatrixXd conn(rows, C);
    for (Index c = 0; c < C; ++c)
        conn.col(c) = shared_segment_covariates(closeness_scores(coords, recipe.pathways[c]), pairs);
    if (recipe.conn_standardization && C > 0) conn = recipe.conn_standardization->apply(conn);
    Eigen::MatrixXd out(rows, env.cols() + C);
    out << env, conn;
    return out;
}

}  // namespace dyadflow
