#include "dyadflow/covariance.hpp"

#include "dyadflow/error.hpp"

#include <cmath>
#include <numbers>

namespace dyadflow {

KernelFamily kernel_family_from_string(const std::string &name) {
    if (name == "matern32") return KernelFamily::matern32;
    if (name == "exponential") return KernelFamily::exponential;
    throw InvalidInput("unknown kernel family '" + name + "' (expected matern32 or exponential)");
}

std::string to_string(KernelFamily family) {
    return family == KernelFamily::matern32 ? "matern32" : "exponential";
}

void KernelSpec::validate() const {
    if (!(range > 0.0) || !std::isfinite(range))
        throw InvalidInput("kernel range must be positive and finite");
}

double kernel_value(double distance, const KernelSpec &spec) {
    if (distance < 0.0 || std::isnan(distance)) throw InvalidInput("distance must be non-negative");
    switch (spec.family) {
    case KernelFamily::matern32: {
        const double a = std::numbers::sqrt3 * distance / spec.range;
        return (1.0 + a) * std::exp(-a);
    }
    case KernelFamily::exponential:
        return std::exp(-distance / spec.range);
    }
    return 0.0;
}

Eigen::MatrixXd correlation_from_distances(const Eigen::MatrixXd &distances, const KernelSpec &spec) {
    spec.validate();
    Eigen::MatrixXd K(distances.rows(), distances.cols());
    for (Index j = 0; j < distances.cols(); ++j)
        for (Index i = 0; i < distances.rows(); ++i) K(i, j) = kernel_value(distances(i, j), spec);
    return K;
}

Eigen::MatrixXd node_correlation_matrix(const Eigen::MatrixX2d &coords, const KernelSpec &spec) {
    if (coords.rows() < 1) throw InvalidInput("at least one coordinate is required");
    spec.validate();
    const Index n = coords.rows();
    Eigen::MatrixXd K(n, n);
    for (Index i = 0; i < n; ++i) {
        K(i, i) = 1.0;
        for (Index j = i + 1; j < n; ++j)
            K(i, j) = K(j, i) = kernel_value((coords.row(i) - coords.row(j)).norm(), spec);
    }
    return K;
}

Eigen::MatrixXd cross_correlation_matrix(const Eigen::MatrixX2d &a, const Eigen::MatrixX2d &b,
                                         const KernelSpec &spec) {
    return correlation_from_distances(cross_distances(a, b), spec);
}

DyadicCovariance dyadic_covariance(const Eigen::MatrixXd &K, const DyadIndex &idx) {
    if (K.rows() != idx.nodes() || K.cols() != idx.nodes())
        throw InvalidInput("node correlation must be n x n for the dyad index");
    const Index N = idx.size();
    DyadicCovariance out;
    out.nodes = idx.nodes();
    out.matrix.resize(N, N);
    const auto &pairs = idx.pairs();
    for (Index b = 0; b < N; ++b) {
        const Index i2 = pairs[b].i, j2 = pairs[b].j;
        for (Index a = b; a < N; ++a) {
            const Index i = pairs[a].i, j = pairs[a].j;
            const double v = K(i, i2) * K(j, j2) + K(i, j2) * K(j, i2);
            out.matrix(a, b) = v;
            out.matrix(b, a) = v;
        }
    }
    return out;
}

DyadicCovariance dyadic_covariance(const Eigen::MatrixX2d &coords, const KernelSpec &spec,
                                   const DyadIndex &idx) {
    auto out = dyadic_covariance(node_correlation_matrix(coords, spec), idx);
    out.source_kernel = spec;
    return out;
}

Eigen::MatrixXd dyadic_cross_covariance(const Eigen::MatrixXd &K_new_obs,
                                        const std::vector<Dyad> &new_dyads, const DyadIndex &idx) {
    if (K_new_obs.cols() != idx.nodes()) throw InvalidInput("cross-correlation column count mismatch");
    const Index M = static_cast<Index>(new_dyads.size());
    const Index N = idx.size();
    Eigen::MatrixXd S(M, N);
    const auto &pairs = idx.pairs();
    for (Index b = 0; b < N; ++b) {
        const Index i = pairs[b].i, j = pairs[b].j;
        for (Index a = 0; a < M; ++a) {
            const Index g = new_dyads[a].i, h = new_dyads[a].j;
            S(a, b) = K_new_obs(g, i) * K_new_obs(h, j) + K_new_obs(g, j) * K_new_obs(h, i);
        }
    }
    return S;
}

Eigen::MatrixXd dyadic_covariance(const Eigen::MatrixXd &K, const std::vector<Dyad> &dyads) {
    const Index M = static_cast<Index>(dyads.size());
    Eigen::MatrixXd S(M, M);
    for (Index b = 0; b < M; ++b) {
        const Index i2 = dyads[b].i, j2 = dyads[b].j;
        for (Index a = b; a < M; ++a) {
            const Index i = dyads[a].i, j = dyads[a].j;
            S(a, b) = S(b, a) = K(i, i2) * K(j, j2) + K(i, j2) * K(j, i2);
        }
    }
    return S;
}

CholeskyResult cholesky_psd(const Eigen::MatrixXd &S, double jitter_start) {
    if (S.rows() != S.cols()) throw InvalidInput("cholesky_psd needs a square matrix");
    const Index n = S.rows();
    if (n == 0) return {Eigen::MatrixXd(0, 0), 0.0};
    double scale = S.diagonal().mean();
    if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
    const double base = jitter_start * scale;
    Eigen::MatrixXd work = S;
    for (int level = -1; level <= 6; ++level) {
        const double j = level < 0 ? 0.0 : base * std::pow(10.0, level);
        if (level >= 0) work.diagonal() = S.diagonal().array() + j;
        Eigen::LLT<Eigen::MatrixXd> llt(work);
        if (llt.info() == Eigen::Success) {
            Eigen::MatrixXd L = llt.matrixL();
            if (L.diagonal().allFinite() && (L.diagonal().array() > 0.0).all()) return {std::move(L), j};
        }
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    throw NotPositiveDefinite("matrix is not positive definite at any jitter level",
                              ldlt.vectorD().minCoeff());
}

GaussianConditional gp_conditional(const Eigen::MatrixXd &S_oo, const Eigen::MatrixXd &S_po,
                                   const Eigen::MatrixXd &S_pp, const Eigen::VectorXd &observed) {
    if (S_po.cols() != S_oo.rows() || observed.size() != S_oo.rows() || S_pp.rows() != S_po.rows() ||
        S_pp.cols() != S_po.rows())
        throw InvalidInput("gp_conditional: non-conformable blocks");
    const auto chol = cholesky_psd(S_oo);
    const auto L = chol.L.triangularView<Eigen::Lower>();
    const Eigen::MatrixXd A = L.solve(S_po.transpose());
    const Eigen::VectorXd z = L.solve(observed);
    GaussianConditional out;
    out.mean = A.transpose() * z;
    out.cov = S_pp - A.transpose() * A;
    out.jitter = chol.jitter;
    return out;
}

Eigen::VectorXd gp_conditional_mean(const Eigen::MatrixXd &S_oo, const Eigen::MatrixXd &S_po,
                                    const Eigen::VectorXd &observed) {
    if (S_po.cols() != S_oo.rows() || observed.size() != S_oo.rows())
        throw InvalidInput("gp_conditional_mean: non-conformable blocks");
    const auto chol = cholesky_psd(S_oo);
    const Eigen::VectorXd alpha = chol.L.transpose().triangularView<Eigen::Upper>().solve(
        chol.L.triangularView<Eigen::Lower>().solve(observed));
    return S_po * alpha;
}

DyadicFactorKernel::DyadicFactorKernel(const Eigen::MatrixXd &distances, const KernelSpec &spec,
                                       double nugget)
    : K_(correlation_from_distances(distances, spec)) {
    K_.diagonal().array() += nugget;
    Eigen::LLT<Eigen::MatrixXd> llt(K_);
    if (llt.info() != Eigen::Success) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(K_);
        throw NotPositiveDefinite("node kernel is singular at range " + std::to_string(spec.range) +
                                      "; increase the node nugget",
                                  ldlt.vectorD().minCoeff());
    }
    L_ = llt.matrixL();
    const double n = static_cast<double>(nodes());
    const double log_det_K = 2.0 * L_.diagonal().array().log().sum();
    log_det_full_ = (n + 1.0) * log_det_K + n * std::numbers::ln2;
}

Eigen::MatrixXd DyadicFactorKernel::whiten(const Eigen::MatrixXd &W) const {
    const auto L = L_.triangularView<Eigen::Lower>();
    Eigen::MatrixXd B = L.solve(W);                          // L^{-1} W
    Eigen::MatrixXd A = L.solve(B.transpose()).transpose();  // L^{-1} W L^{-T}
    return 0.5 * (A + A.transpose());
}

Eigen::MatrixXd DyadicFactorKernel::unwhiten(const Eigen::MatrixXd &A) const {
    const auto L = L_.triangularView<Eigen::Lower>();
    Eigen::MatrixXd B = L * A;
    Eigen::MatrixXd W = (L * B.transpose()).transpose();
    return 0.5 * (W + W.transpose());
}

double DyadicFactorKernel::log_density_full(const Eigen::MatrixXd &W) const {
    const double n = static_cast<double>(nodes());
    const double m = n * (n + 1.0) / 2.0;
    const double quad = 0.5 * whiten(W).squaredNorm();
    return -0.5 * (m * std::log(2.0 * std::numbers::pi) + log_det_full_ + quad);
}

Eigen::MatrixXd DyadicFactorKernel::sample_full(Rng &rng) const {
    const Index n = nodes();
    Eigen::MatrixXd A(n, n);
    for (Index j = 0; j < n; ++j) {
        A(j, j) = std::numbers::sqrt2 * rng.normal();
        for (Index i = j + 1; i < n; ++i) A(i, j) = A(j, i) = rng.normal();
    }
    return unwhiten(A);
}

Eigen::MatrixXd DyadicFactorKernel::apply_full(const Eigen::VectorXd &x, const DyadIndex &idx) const {
    const Eigen::MatrixXd X = symmetric_from_dyads(x, Eigen::VectorXd::Zero(nodes()), idx);
    return K_ * X * K_;
}

Eigen::VectorXd DyadicFactorKernel::apply(const Eigen::VectorXd &x, const DyadIndex &idx) const {
    return dyads_from_symmetric(apply_full(x, idx), idx);
}

Eigen::MatrixXd DyadicFactorKernel::dense(const DyadIndex &idx) const {
    return dyadic_covariance(K_, idx).matrix;
}

Eigen::MatrixXd symmetric_from_dyads(const Eigen::VectorXd &dyads, const Eigen::VectorXd &diagonal,
                                     const DyadIndex &idx) {
    if (dyads.size() != idx.size() || diagonal.size() != idx.nodes())
        throw InvalidInput("symmetric_from_dyads: length mismatch");
    Eigen::MatrixXd W(idx.nodes(), idx.nodes());
    W.diagonal() = diagonal;
    for (Index k = 0; k < idx.size(); ++k) W(idx[k].i, idx[k].j) = W(idx[k].j, idx[k].i) = dyads[k];
    return W;
}

Eigen::VectorXd dyads_from_symmetric(const Eigen::MatrixXd &W, const DyadIndex &idx) {
    Eigen::VectorXd out(idx.size());
    for (Index k = 0; k < idx.size(); ++k) out[k] = W(idx[k].i, idx[k].j);
    return out;
}

}  // namespace dyadflow
