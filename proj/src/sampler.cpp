#include "dyadflow/sampler.hpp"

#include "dyadflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace dyadflow {

namespace {

constexpr double kScaleFloor = 1e-12;
constexpr double kScaleCeiling = 1e12;
constexpr double kSigmaFloor = 1e-8;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

Eigen::MatrixXd signals(const ModelState &state, const ModelData &data) {
    if (state.Q() == 0) return Eigen::MatrixXd(data.dyads(), 0);
    return data.Z * state.C_load;
}

Eigen::VectorXd dsvc_term(const ModelState &state, const Eigen::MatrixXd &S) {
    if (state.Q() == 0) return Eigen::VectorXd::Zero(state.W.rows());
    return (state.W.array() * S.array()).rowwise().sum();
}

// x' v for x = [1 Z]
Eigen::VectorXd design_cross(const ModelData &data, const Eigen::VectorXd &v) {
    Eigen::VectorXd out(data.P() + 1);
    out[0] = v.sum();
    if (data.P() > 0) out.tail(data.P()) = data.Z.transpose() * v;
    return out;
}

Eigen::LLT<Eigen::MatrixXd> precision_factor(const Eigen::MatrixXd &prec, const char *what) {
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(prec);
        throw NotPositiveDefinite(std::string(what) + " precision is not positive definite", ldlt.vectorD().minCoeff());
    }
    return llt;
}

Eigen::VectorXd draw_from_precision(const Eigen::LLT<Eigen::MatrixXd> &llt, const Eigen::VectorXd &mean, Rng &rng) {
    const Eigen::VectorXd z = rng.normal_vector(mean.size());
    return mean + llt.matrixU().solve(z);
}

Eigen::MatrixXd inverse_from_llt(const Eigen::LLT<Eigen::MatrixXd> &llt, Index n) {
    return llt.solve(Eigen::MatrixXd::Identity(n, n));
}

int stepout_budget(const PriorConfig &prior, long iteration) {
    return iteration <= prior.slice_full_budget_after ? prior.slice_burnin_stepout : prior.slice_max_stepout;
}

double sample_variance(const Eigen::VectorXd &v) {
    if (v.size() < 2) return 0.0;
    return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

Eigen::MatrixXd full_factor(const ModelState &state, const ModelData &data, Index q) {
    return symmetric_from_dyads(state.W.col(q), state.W_diag.col(q), data.index);
}

void store_full_factor(ModelState &state, const ModelData &data, Index q, const Eigen::MatrixXd &Wf) {
    state.W.col(q) = dyads_from_symmetric(Wf, data.index);
    state.W_diag.col(q) = Wf.diagonal();
}

DyadicFactorKernel factor_kernel(const ModelData &data, const PriorConfig &prior, double phi) {
    return DyadicFactorKernel(data.distances, KernelSpec{prior.factor_kernel, phi}, prior.node_nugget);
}

// Gaussian log-likelihood of r = s o w + noise over observed dyads, up to a constant.
double factor_loglik(const Eigen::VectorXd &r, const Eigen::VectorXd &s, const Eigen::VectorXd &w,
                     const Eigen::VectorXd &observed, double sigma2) {
    return -0.5 * ((r - s.cwiseProduct(w)).array().square() * observed.array()).sum() / sigma2;
}

}  // namespace

ModelVariant model_variant_from_string(const std::string &name) {
    if (name == "standard") return ModelVariant::standard;
    if (name == "conn_only") return ModelVariant::conn_only;
    if (name == "dsvc_only") return ModelVariant::dsvc_only;
    if (name == "full") return ModelVariant::full;
    throw InvalidInput("unknown model variant '" + name + "'");
}

std::string to_string(ModelVariant variant) {
    switch (variant) {
        case ModelVariant::standard: return "standard";
        case ModelVariant::conn_only: return "conn_only";
        case ModelVariant::dsvc_only: return "dsvc_only";
        case ModelVariant::full: return "full";
    }
    return "full";
}

double PriorConfig::log_phi_min() const { return std::log(phi_min); }
double PriorConfig::log_phi_max() const { return std::log(phi_max); }

double PriorConfig::log_prior_logphi(double logphi) const {
    const double d = logphi - mu_logphi;
    return -0.5 * d * d / var_logphi;
}

void PriorConfig::validate() const {
    auto positive = [](double v, const char *name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw InvalidInput(std::string("prior: ") + name + " must be positive");
    };
    positive(var_alpha, "var_alpha");
    positive(var_beta, "var_beta");
    positive(ig_shape_sigma2, "ig_shape_sigma2");
    positive(ig_rate_sigma2, "ig_rate_sigma2");
    positive(ig_shape_eta, "ig_shape_eta");
    positive(ig_rate_eta, "ig_rate_eta");
    positive(var_logphi, "var_logphi");
    positive(slice_w0, "slice_w0");
    positive(rw_frac, "rw_frac");
    positive(phi_min, "phi_min");
    positive(phi_max, "phi_max");
    if (!std::isfinite(mu_logphi)) throw InvalidInput("prior: mu_logphi must be finite");
    if (!(phi_max > phi_min)) throw InvalidInput("prior: phi_max must exceed phi_min");
    if (Q < 0) throw InvalidInput("prior: Q must be non-negative");
    if (slice_max_stepout < 1 || slice_burnin_stepout < 1) throw InvalidInput("prior: slice step-out budget must be >= 1");
    if (slice_full_budget_after < 0) throw InvalidInput("prior: slice_full_budget_after must be >= 0");
    if (!(node_nugget >= 0.0) || !std::isfinite(node_nugget)) throw InvalidInput("prior: node_nugget must be >= 0");
    if (!(loading_norm_threshold >= 0.0) || !(signal_var_threshold >= 0.0))
        throw InvalidInput("prior: factor thresholds must be >= 0");
}

PriorConfig make_prior(const Eigen::MatrixXd &distances, Index Q, double var_logphi) {
    const Index n = distances.rows();
    if (n < 2 || distances.cols() != n) throw InvalidInput("make_prior: need a square distance matrix with n >= 2");
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    double dmin = std::numeric_limits<double>::infinity();
    double dmax = 0.0;
    for (Index j = 1; j < n; ++j)
        for (Index i = 0; i < j; ++i) {
            const double v = distances(i, j);
            if (!std::isfinite(v) || v < 0.0) throw InvalidInput("make_prior: invalid distance");
            d.push_back(v);
            if (v > 0.0) dmin = std::min(dmin, v);
            dmax = std::max(dmax, v);
        }
    if (!(dmax > 0.0)) throw InvalidInput("make_prior: all nodes coincide");
    PriorConfig prior;
    prior.Q = Q;
    if (!(var_logphi > 0.0)) throw InvalidInput("make_prior: var_logphi must be positive");
    prior.var_logphi = var_logphi;
    const double med = median(d);
    prior.mu_logphi = std::log(med > 0.0 ? med : dmin);
    const double sd = std::sqrt(prior.var_logphi);
    prior.phi_min = std::max(dmin, std::exp(prior.mu_logphi - 3.0 * sd));
    prior.phi_max = std::min(dmax, std::exp(prior.mu_logphi + 3.0 * sd));
    if (!(prior.phi_max > prior.phi_min)) {
        prior.phi_min = dmin;
        prior.phi_max = dmax;
    }
    if (!(prior.phi_max > prior.phi_min)) throw InvalidInput("make_prior: degenerate distance range");
    return prior;
}

Eigen::MatrixXd contrast_basis(Index n) {
    if (n < 2) throw InvalidInput("contrast_basis: n must be >= 2");
    Eigen::MatrixXd U = Eigen::MatrixXd::Zero(n, n - 1);
    for (Index k = 1; k < n; ++k) {
        const double kk = static_cast<double>(k);
        const double norm = std::sqrt(kk * (kk + 1.0));
        U.col(k - 1).head(k).setConstant(1.0 / norm);
        U(k, k - 1) = -kk / norm;
    }
    return U;
}

ModelData make_model_data(const Eigen::MatrixX2d &coords, const DyadicResponse &response,
                          const DesignMatrix &design, ModelVariant variant) {
    response.validate();
    ModelData data;
    data.variant = variant;
    const Index n = coords.rows();
    data.index = DyadIndex(n);
    const Index N = data.index.size();
    if (response.values.size() != N) throw InvalidInput("response length does not match the number of dyads");
    if (!coords.allFinite()) throw InvalidInput("coordinates must be finite");
    data.coords = coords;
    data.distances = pairwise_distances(coords);
    data.observed = response.observed;
    data.y = response.values.cwiseProduct(data.observed);
    data.n_observed = static_cast<Index>(data.observed.sum());

    const bool conn = uses_connectivity(variant);
    if (design.env_block.rows() != N && design.p() > 0)
        throw InvalidInput("design rows do not match the number of dyads");
    if (conn && design.n_classes() > 0 && design.conn_block.rows() != N)
        throw InvalidInput("connectivity rows do not match the number of dyads");
    data.p_env = design.p();
    data.n_conn = conn ? design.n_classes() : 0;
    data.Z.resize(N, data.p_env + data.n_conn);
    if (data.p_env > 0) data.Z.leftCols(data.p_env) = design.env_block;
    if (data.n_conn > 0) data.Z.rightCols(data.n_conn) = design.conn_block;
    if (!data.Z.allFinite()) throw InvalidInput("design contains non-finite values");
    if (data.n_observed < data.P() + 2)
        throw InvalidInput("need at least P + 2 observed dyads, have " + std::to_string(data.n_observed));
    for (Index k = 0; k < data.P(); ++k) {
        double s = 0.0, ss = 0.0;
        for (Index a = 0; a < N; ++a)
            if (data.observed[a] > 0.0) {
                s += data.Z(a, k);
                ss += data.Z(a, k) * data.Z(a, k);
            }
        const double m = s / static_cast<double>(data.n_observed);
        if (ss / static_cast<double>(data.n_observed) - m * m <= 1e-14 * std::max(1.0, ss))
            throw InvalidInput("design column " + std::to_string(k) + " has zero variance over observed dyads");
    }

    data.U = contrast_basis(n);
    Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
    for (Index a = 0; a < N; ++a) {
        if (data.observed[a] <= 0.0) continue;
        const auto [i, j] = data.index[a];
        lap(i, i) += 1.0;
        lap(j, j) += 1.0;
        lap(i, j) -= 1.0;
        lap(j, i) -= 1.0;
    }
    data.UtLU = data.U.transpose() * lap * data.U;

    Eigen::MatrixXd X(N, data.P() + 1);
    X.col(0).setOnes();
    if (data.P() > 0) X.rightCols(data.P()) = data.Z;
    data.XtX = X.transpose() * data.observed.asDiagonal() * X;
    return data;
}

Eigen::MatrixXd ModelState::delta() const { return W * C_load.transpose(); }

void ModelState::validate() const {
    const Index Qn = W.cols();
    if (C_load.cols() != Qn || phi_q.size() != Qn || xi.size() != Qn || W_diag.cols() != Qn ||
        lambda.cols() != Qn || lambda_aux.cols() != Qn || xi_aux.size() != Qn)
        throw InvalidState("model state: factor dimensions disagree");
    if (C_load.rows() != beta.size()) throw InvalidState("model state: loadings rows must equal P");
    if (!std::isfinite(alpha) || !beta.allFinite() || !(sigma2 > 0.0) || !std::isfinite(sigma2) ||
        !eta.allFinite() || !(sigma2_eta > 0.0) || !(phi_eta > 0.0) || !W.allFinite() || !C_load.allFinite())
        throw InvalidState("model state contains non-finite or non-positive values");
}

Eigen::VectorXd fitted_mean(const ModelState &state, const ModelData &data) {
    Eigen::VectorXd mu = Eigen::VectorXd::Constant(data.dyads(), state.alpha);
    if (data.P() > 0) mu += data.Z * state.beta;
    mu += data.index.apply(state.eta);
    mu += dsvc_term(state, signals(state, data));
    return mu;
}

double log_likelihood(const ModelState &state, const ModelData &data) {
    const Eigen::VectorXd e = (data.y - fitted_mean(state, data)).cwiseProduct(data.observed);
    return -0.5 * (static_cast<double>(data.n_observed) * std::log(2.0 * std::numbers::pi * state.sigma2) +
                   e.squaredNorm() / state.sigma2);
}

void SamplerDiagnostics::note_jitter(const std::string &where, double jitter) {
    if (jitter <= 0.0) return;
    ++jitter_events;
    if (jitter_log.size() < 100) {
        std::ostringstream os;
        os << where << ": jitter " << jitter;
        jitter_log.push_back(os.str());
    }
}

ModelState init_state(const ModelData &data, const PriorConfig &prior, std::uint64_t seed) {
    prior.validate();
    const Index N = data.dyads();
    const Index n = data.nodes();
    const Index P = data.P();
    const Index Q = uses_dsvc(data.variant) ? prior.Q : 0;
    ModelState s;
    const double nobs = static_cast<double>(data.n_observed);
    s.alpha = data.y.sum() / nobs;
    const Eigen::VectorXd yc = (data.y.array() - s.alpha).matrix().cwiseProduct(data.observed);
    s.beta = Eigen::VectorXd::Zero(P);
    if (P > 0) {
        Eigen::MatrixXd G = data.Z.transpose() * data.observed.asDiagonal() * data.Z;
        const double ridge = 1e-6 * std::max(G.trace() / static_cast<double>(P), 1e-12);
        G.diagonal().array() += ridge;
        s.beta = G.ldlt().solve(data.Z.transpose() * yc);
    }
    Eigen::VectorXd e = yc;
    if (P > 0) e -= (data.Z * s.beta).cwiseProduct(data.observed);
    s.sigma2 = std::max(e.squaredNorm() / nobs, kSigmaFloor);
    s.gamma = Eigen::VectorXd::Zero(n - 1);
    s.eta = Eigen::VectorXd::Zero(n);
    s.sigma2_eta = 1.0;
    const double phi0 = std::clamp(std::exp(prior.mu_logphi), prior.phi_min, prior.phi_max);
    s.phi_eta = phi0;
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    s.W = Eigen::MatrixXd::Zero(N, Q);
    s.W_diag = Eigen::MatrixXd::Zero(n, Q);
    s.C_load.resize(P, Q);
    for (Index q = 0; q < Q; ++q)
        for (Index l = 0; l < P; ++l) s.C_load(l, q) = 0.01 * rng.normal();
    s.phi_q = Eigen::VectorXd::Constant(Q, phi0);
    s.lambda = Eigen::MatrixXd::Ones(P, Q);
    s.lambda_aux = Eigen::MatrixXd::Ones(P, Q);
    s.xi = Eigen::VectorXd::Ones(Q);
    s.xi_aux = Eigen::VectorXd::Ones(Q);
    return s;
}

// ---- regression block ----

Eigen::VectorXd regression_residual(const ModelState &state, const ModelData &data) {
    Eigen::VectorXd r = data.y - data.index.apply(state.eta) - dsvc_term(state, signals(state, data));
    return r.cwiseProduct(data.observed);
}

namespace {

struct PrecisionForm {
    Eigen::MatrixXd precision;
    Eigen::VectorXd linear;
};

PrecisionForm regression_precision(const ModelState &state, const ModelData &data, const PriorConfig &prior) {
    PrecisionForm f;
    f.precision = data.XtX / state.sigma2;
    f.precision(0, 0) += 1.0 / prior.var_alpha;
    for (Index k = 1; k < f.precision.rows(); ++k) f.precision(k, k) += 1.0 / prior.var_beta;
    f.linear = design_cross(data, regression_residual(state, data)) / state.sigma2;
    return f;
}

}  // namespace

GaussianMoments regression_conditional(const ModelState &state, const ModelData &data, const PriorConfig &prior) {
    const auto f = regression_precision(state, data, prior);
    const auto llt = precision_factor(f.precision, "regression");
    return {llt.solve(f.linear), inverse_from_llt(llt, f.precision.rows())};
}

void draw_coefficients(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx) {
    const auto f = regression_precision(state, data, prior);
    const auto llt = precision_factor(f.precision, "regression");
    const Eigen::VectorXd theta = draw_from_precision(llt, llt.solve(f.linear), ctx.rng);
    state.alpha = theta[0];
    state.beta = theta.tail(data.P());
}

void draw_sigma2(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx) {
    Eigen::VectorXd e = regression_residual(state, data).array() - state.alpha;
    if (data.P() > 0) e -= data.Z * state.beta;
    const double sse = e.cwiseProduct(data.observed).squaredNorm();
    const double shape = prior.ig_shape_sigma2 + 0.5 * static_cast<double>(data.n_observed);
    const double rate = prior.ig_rate_sigma2 + 0.5 * sse;
    state.sigma2 = std::max(ctx.rng.inv_gamma(shape, rate), kSigmaFloor);
}

void update_regression_block(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx) {
    draw_coefficients(state, data, prior, ctx);
    draw_sigma2(state, data, prior, ctx);
}

// ---- node random effect ----

namespace {

// U' R(phi) U
Eigen::MatrixXd eta_prior_cov(const ModelData &data, const PriorConfig &prior, double phi) {
    const Eigen::MatrixXd R = correlation_from_distances(data.distances, KernelSpec{prior.eta_kernel, phi});
    return data.U.transpose() * R * data.U;
}

PrecisionForm eta_precision(const ModelState &state, const ModelData &data, const PriorConfig &prior,
                            SamplerDiagnostics *diag) {
    const auto chol = cholesky_psd(eta_prior_cov(data, prior, state.phi_eta));
    if (diag) diag->note_jitter("eta prior", chol.jitter);
    const Index m = chol.L.rows();
    const auto L = chol.L.triangularView<Eigen::Lower>();
    Eigen::MatrixXd Linv = L.solve(Eigen::MatrixXd::Identity(m, m));
    PrecisionForm f;
    f.precision = data.UtLU / state.sigma2 + Linv.transpose() * Linv / state.sigma2_eta;
    Eigen::VectorXd r = data.y - Eigen::VectorXd::Constant(data.dyads(), state.alpha) -
                        dsvc_term(state, signals(state, data));
    if (data.P() > 0) r -= data.Z * state.beta;
    f.linear = data.U.transpose() * data.index.apply_transpose(r.cwiseProduct(data.observed)) / state.sigma2;
    return f;
}

// log N(gamma; 0, sigma2_eta U'R(phi)U) up to a constant.
double eta_range_log_density(const ModelState &state, const ModelData &data, const PriorConfig &prior, double phi) {
    Eigen::MatrixXd S = eta_prior_cov(data, prior, phi);
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const Eigen::MatrixXd L = llt.matrixL();
    const Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(state.gamma);
    const double logdet = 2.0 * L.diagonal().array().log().sum();
    const double m = static_cast<double>(state.gamma.size());
    return -0.5 * (m * std::log(state.sigma2_eta) + logdet + z.squaredNorm() / state.sigma2_eta);
}

}  // namespace

GaussianMoments eta_conditional(const ModelState &state, const ModelData &data, const PriorConfig &prior) {
    const auto f = eta_precision(state, data, prior, nullptr);
    const auto llt = precision_factor(f.precision, "eta");
    return {llt.solve(f.linear), inverse_from_llt(llt, f.precision.rows())};
}

void draw_gamma(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx) {
    const auto f = eta_precision(state, data, prior, ctx.diagnostics);
    const auto llt = precision_factor(f.precision, "eta");
    state.gamma = draw_from_precision(llt, llt.solve(f.linear), ctx.rng);
    state.eta = data.U * state.gamma;
}

void draw_sigma2_eta(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx) {
    const auto chol = cholesky_psd(eta_prior_cov(data, prior, state.phi_eta));
    if (ctx.diagnostics) ctx.diagnostics->note_jitter("eta prior", chol.jitter);
    const Eigen::VectorXd z = chol.L.triangularView<Eigen::Lower>().solve(state.gamma);
    const double shape = prior.ig_shape_eta + 0.5 * static_cast<double>(state.gamma.size());
    const double rate = prior.ig_rate_eta + 0.5 * z.squaredNorm();
    state.sigma2_eta = std::max(ctx.rng.inv_gamma(shape, rate), kSigmaFloor);
}

void draw_phi_eta(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx) {
    auto target = [&](double x) {
        return eta_range_log_density(state, data, prior, std::exp(x)) + prior.log_prior_logphi(x);
    };
    SliceSettings settings{prior.slice_w0, stepout_budget(prior, ctx.iteration), prior.log_phi_min(),
                           prior.log_phi_max()};
    const double x0 = std::clamp(std::log(state.phi_eta), prior.log_phi_min(), prior.log_phi_max());
    const auto res = slice_sample(x0, target, settings, ctx.rng);
    state.phi_eta = std::exp(res.value);
    if (ctx.diagnostics) {
        ++ctx.diagnostics->slice_updates;
        ctx.diagnostics->slice_evaluations += res.evaluations;
    }
}

void update_eta_block(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx) {
    draw_gamma(state, data, prior, ctx);
    draw_sigma2_eta(state, data, prior, ctx);
    draw_phi_eta(state, data, prior, ctx);
}

// ---- slice sampling ----

SliceResult slice_sample(double x0, const std::function<double(double)> &log_target, const SliceSettings &settings,
                         Rng &rng) {
    if (!(settings.width > 0.0)) throw InvalidInput("slice_sample: width must be positive");
    if (settings.max_stepout < 1) throw InvalidInput("slice_sample: step-out budget must be >= 1");
    if (!(x0 >= settings.lower && x0 <= settings.upper)) throw InvalidState("slice_sample: start outside bounds");
    long evals = 0;
    auto f = [&](double x) {
        if (x < settings.lower || x > settings.upper) return -std::numeric_limits<double>::infinity();
        ++evals;
        const double v = log_target(x);
        return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
    };
    const double f0 = f(x0);
    if (!std::isfinite(f0)) throw InvalidState("slice_sample: target is not finite at the current point");
    const double level = f0 - rng.gamma(1.0, 1.0);
    const double w = settings.width;
    double lo = x0 - w * rng.uniform();
    double hi = lo + w;
    int j = static_cast<int>(std::floor(settings.max_stepout * rng.uniform()));
    int k = settings.max_stepout - 1 - j;
    while (j > 0 && lo > settings.lower && f(lo) > level) {
        lo -= w;
        --j;
    }
    while (k > 0 && hi < settings.upper && f(hi) > level) {
        hi += w;
        --k;
    }
    lo = std::max(lo, settings.lower);
    hi = std::min(hi, settings.upper);
    for (int guard = 0; guard < 200; ++guard) {
        const double x1 = lo + rng.uniform() * (hi - lo);
        if (f(x1) > level) return {x1, evals};
        if (x1 < x0)
            lo = x1;
        else
            hi = x1;
    }
    return {x0, evals};
}

double slice_sample_log_range(double logphi, const std::function<double(double)> &log_target,
                              const PriorConfig &prior, Rng &rng, int max_stepout) {
    SliceSettings settings{prior.slice_w0, max_stepout, prior.log_phi_min(), prior.log_phi_max()};
    return slice_sample(logphi, log_target, settings, rng).value;
}

// ---- latent factors ----

Eigen::VectorXd factor_partial_residual(const ModelState &state, const ModelData &data, Index q) {
    const Eigen::MatrixXd S = signals(state, data);
    Eigen::VectorXd r = data.y - Eigen::VectorXd::Constant(data.dyads(), state.alpha) - data.index.apply(state.eta) -
                        dsvc_term(state, S) + state.W.col(q).cwiseProduct(S.col(q));
    if (data.P() > 0) r -= data.Z * state.beta;
    return r.cwiseProduct(data.observed);
}

GaussianMoments factor_conditional(const ModelState &state, const ModelData &data, const PriorConfig &prior, Index q) {
    const auto ker = factor_kernel(data, prior, state.phi_q[q]);
    const Eigen::MatrixXd Sigma = ker.dense(data.index);
    const Eigen::VectorXd s = (data.Z * state.C_load.col(q)).cwiseProduct(data.observed);
    const Eigen::VectorXd r = factor_partial_residual(state, data, q);
    // Sigma S (S Sigma S + sigma^2 I)^{-1}
    Eigen::MatrixXd G = s.asDiagonal() * Sigma * s.asDiagonal();
    G.diagonal().array() += state.sigma2;
    const auto llt = precision_factor(G, "factor");
    const Eigen::MatrixXd B = Sigma * s.asDiagonal();
    GaussianMoments out;
    out.mean = B * llt.solve(r);
    out.cov = Sigma - B * llt.solve(B.transpose());
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    return out;
}

void draw_factor(ModelState &state, const ModelData &data, const PriorConfig &prior, Index q, SweepContext &ctx) {
    const auto ker = factor_kernel(data, prior, state.phi_q[q]);
    Eigen::MatrixXd Wf = ker.sample_full(ctx.rng);
    const Eigen::VectorXd s = (data.Z * state.C_load.col(q)).cwiseProduct(data.observed);
    std::vector<Index> active;
    if (ctx.likelihood_weight > 0.0)
        for (Index a = 0; a < data.dyads(); ++a)
            if (s[a] != 0.0) active.push_back(a);
    if (!active.empty()) {
        // Conditional draw by prior-sample correction: w = w0 + Sigma S x with
        // x = (S Sigma S + tau I)^{-1} (r - S w0 - e), e ~ N(0, tau I).
        const double tau = state.sigma2 / ctx.likelihood_weight;
        const Eigen::VectorXd r = factor_partial_residual(state, data, q);
        const Eigen::VectorXd w0 = dyads_from_symmetric(Wf, data.index);
        const Eigen::MatrixXd &K = ker.node_kernel();
        const Index m = static_cast<Index>(active.size());
        Eigen::VectorXd rhs(m);
        const double sd = std::sqrt(tau);
        for (Index a = 0; a < m; ++a) {
            const Index da = active[static_cast<std::size_t>(a)];
            rhs[a] = r[da] - s[da] * w0[da] - sd * ctx.rng.normal();
        }
        Eigen::VectorXd x;
        bool solved = false;
        if (prior.factor_solver == FactorSolver::conjugate_gradient) {
            // (S Sigma S + tau I) x = rhs with Sigma applied through K X K, Jacobi preconditioned
            Eigen::VectorXd precond(m);
            for (Index a = 0; a < m; ++a) {
                const Index da = active[static_cast<std::size_t>(a)];
                const auto [i, j] = data.index[da];
                precond[a] = 1.0 / (s[da] * s[da] * (K(i, i) * K(j, j) + K(i, j) * K(j, i)) + tau);
            }
            Eigen::VectorXd v = Eigen::VectorXd::Zero(data.dyads());
            auto apply = [&](const Eigen::VectorXd &p) {
                for (Index a = 0; a < m; ++a) {
                    const Index da = active[static_cast<std::size_t>(a)];
                    v[da] = s[da] * p[a];
                }
                const Eigen::VectorXd sv = ker.apply(v, data.index);
                Eigen::VectorXd out(m);
                for (Index a = 0; a < m; ++a) {
                    const Index da = active[static_cast<std::size_t>(a)];
                    out[a] = s[da] * sv[da] + tau * p[a];
                }
                return out;
            };
            x = Eigen::VectorXd::Zero(m);
            Eigen::VectorXd res = rhs;
            Eigen::VectorXd z = precond.cwiseProduct(res);
            Eigen::VectorXd p = z;
            double rz = res.dot(z);
            const double target = prior.cg_tolerance * rhs.norm();
            int it = 0;
            for (; it < prior.cg_max_iterations && res.norm() > target; ++it) {
                const Eigen::VectorXd Ap = apply(p);
                const double step = rz / p.dot(Ap);
                x += step * p;
                res -= step * Ap;
                z = precond.cwiseProduct(res);
                const double rz_next = res.dot(z);
                p = z + (rz_next / rz) * p;
                rz = rz_next;
            }
            solved = res.norm() <= target && x.allFinite();
            if (ctx.diagnostics) {
                ctx.diagnostics->cg_iterations += it;
                ++ctx.diagnostics->cg_solves;
                if (!solved) ++ctx.diagnostics->cg_fallbacks;
            }
        }
        if (!solved) {
            Eigen::MatrixXd G(m, m);
            for (Index a = 0; a < m; ++a) {
                const Index da = active[static_cast<std::size_t>(a)];
                const auto [i, j] = data.index[da];
                const double sa = s[da];
                for (Index b = a; b < m; ++b) {  // lower triangle; LLT reads only this half
                    const Index db = active[static_cast<std::size_t>(b)];
                    const auto [k, l] = data.index[db];
                    G(b, a) = sa * s[db] * (K(i, k) * K(j, l) + K(i, l) * K(j, k));
                }
                G(a, a) += tau;
            }
            Eigen::LLT<Eigen::MatrixXd> llt(G);
            if (llt.info() != Eigen::Success) {
                G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
                const auto chol = cholesky_psd(G);
                if (ctx.diagnostics) ctx.diagnostics->note_jitter("factor " + std::to_string(q), chol.jitter);
                llt.compute(chol.L * chol.L.transpose());
            }
            x = llt.solve(rhs);
        }
        Eigen::VectorXd sx = Eigen::VectorXd::Zero(data.dyads());
        for (Index a = 0; a < m; ++a) {
            const Index da = active[static_cast<std::size_t>(a)];
            sx[da] = s[da] * x[a];
        }
        Wf += ker.apply_full(sx, data.index);
    }
    store_full_factor(state, data, q, Wf);
}

bool factor_joint_move(ModelState &state, const ModelData &data, const PriorConfig &prior, Index q,
                       SweepContext &ctx) {
    const Eigen::VectorXd zc = data.Z * state.C_load.col(q);
    if (!(state.C_load.col(q).norm() > prior.loading_norm_threshold) ||
        !(sample_variance(zc) > prior.signal_var_threshold))
        return false;
    const double lo = prior.log_phi_min();
    const double hi = prior.log_phi_max();
    const double sd = prior.rw_sd();
    const double x = std::clamp(std::log(state.phi_q[q]), lo, hi);
    double xp = x;
    bool inside = false;
    for (int tries = 0; tries < 1000 && !inside; ++tries) {
        xp = x + sd * ctx.rng.normal();
        inside = xp >= lo && xp <= hi;
    }
    if (!inside) return false;
    if (ctx.diagnostics) ++ctx.diagnostics->joint_attempts[static_cast<std::size_t>(q)];

    const auto ker = factor_kernel(data, prior, std::exp(x));
    const auto kerp = factor_kernel(data, prior, std::exp(xp));
    const Eigen::MatrixXd A = ker.whiten(full_factor(state, data, q));
    const Eigen::MatrixXd Wp = kerp.unwhiten(A);
    const Eigen::VectorXd wp = dyads_from_symmetric(Wp, data.index);

    double log_ratio = prior.log_prior_logphi(xp) - prior.log_prior_logphi(x);
    if (ctx.likelihood_weight > 0.0) {
        const Eigen::VectorXd r = factor_partial_residual(state, data, q);
        const Eigen::VectorXd s = zc.cwiseProduct(data.observed);
        log_ratio += ctx.likelihood_weight * (factor_loglik(r, s, wp, data.observed, state.sigma2) -
                                              factor_loglik(r, s, state.W.col(q), data.observed, state.sigma2));
    }
    auto log_mass = [&](double c) { return std::log(normal_cdf((hi - c) / sd) - normal_cdf((lo - c) / sd)); };
    log_ratio += log_mass(x) - log_mass(xp);
    if (std::log(ctx.rng.uniform()) < log_ratio) {
        store_full_factor(state, data, q, Wp);
        state.phi_q[q] = std::exp(xp);
        if (ctx.diagnostics) ++ctx.diagnostics->joint_accepts[static_cast<std::size_t>(q)];
        return true;
    }
    return false;
}

void draw_factor_range(ModelState &state, const ModelData &data, const PriorConfig &prior, Index q,
                       SweepContext &ctx) {
    const Eigen::MatrixXd Wf = full_factor(state, data, q);
    auto target = [&](double x) {
        try {
            return factor_kernel(data, prior, std::exp(x)).log_density_full(Wf) + prior.log_prior_logphi(x);
        } catch (const NotPositiveDefinite &) {
            return -std::numeric_limits<double>::infinity();
        }
    };
    SliceSettings settings{prior.slice_w0, stepout_budget(prior, ctx.iteration), prior.log_phi_min(),
                           prior.log_phi_max()};
    const double x0 = std::clamp(std::log(state.phi_q[q]), prior.log_phi_min(), prior.log_phi_max());
    const auto res = slice_sample(x0, target, settings, ctx.rng);
    state.phi_q[q] = std::exp(res.value);
    if (ctx.diagnostics) {
        ++ctx.diagnostics->slice_updates;
        ctx.diagnostics->slice_evaluations += res.evaluations;
    }
}

void update_factor_block(ModelState &state, const ModelData &data, const PriorConfig &prior, Index q,
                         SweepContext &ctx, const FactorOptions &options) {
    if (q < 0 || q >= state.Q()) throw InvalidInput("update_factor_block: factor index out of range");
    draw_factor(state, data, prior, q, ctx);
    if (options.update_range) {
        if (options.joint_move && ctx.iteration % 2 == 1) factor_joint_move(state, data, prior, q, ctx);
        draw_factor_range(state, data, prior, q, ctx);
    }
}

// ---- loadings ----

GaussianMoments loading_conditional(const ModelState &state, const ModelData &data, Index q) {
    const Eigen::VectorXd r = factor_partial_residual(state, data, q);
    const Eigen::VectorXd wm = state.W.col(q).cwiseProduct(data.observed);
    const Eigen::MatrixXd X = data.Z.array().colwise() * wm.array();
    Eigen::MatrixXd prec = X.transpose() * X / state.sigma2;
    const double xi2 = state.xi[q] * state.xi[q];
    for (Index l = 0; l < data.P(); ++l) prec(l, l) += 1.0 / (state.lambda(l, q) * state.lambda(l, q) * xi2);
    const auto llt = precision_factor(prec, "loadings");
    return {llt.solve(X.transpose() * r / state.sigma2), inverse_from_llt(llt, data.P())};
}

void draw_loadings(ModelState &state, const ModelData &data, const PriorConfig &, SweepContext &ctx) {
    for (Index q = 0; q < state.Q(); ++q) {
        const Eigen::VectorXd r = factor_partial_residual(state, data, q);
        const Eigen::VectorXd wm = state.W.col(q).cwiseProduct(data.observed);
        const Eigen::MatrixXd X = data.Z.array().colwise() * wm.array();
        const double weight = ctx.likelihood_weight / state.sigma2;
        Eigen::MatrixXd prec = weight * X.transpose() * X;
        const double xi2 = state.xi[q] * state.xi[q];
        for (Index l = 0; l < data.P(); ++l) prec(l, l) += 1.0 / (state.lambda(l, q) * state.lambda(l, q) * xi2);
        const auto llt = precision_factor(prec, "loadings");
        state.C_load.col(q) = draw_from_precision(llt, llt.solve(weight * X.transpose() * r), ctx.rng);
    }
}

void draw_shrinkage_scales(ModelState &state, SweepContext &ctx) {
    const Index P = state.C_load.rows();
    auto clamp_scale = [&](double v) {
        if (v < kScaleFloor || v > kScaleCeiling || !std::isfinite(v)) {
            if (ctx.diagnostics) ++ctx.diagnostics->scale_clamps;
            return std::isnan(v) ? kScaleFloor : std::clamp(v, kScaleFloor, kScaleCeiling);
        }
        return v;
    };
    for (Index q = 0; q < state.Q(); ++q) {
        double xi2 = state.xi[q] * state.xi[q];
        double ratio_sum = 0.0;
        for (Index l = 0; l < P; ++l) {
            const double c2 = state.C_load(l, q) * state.C_load(l, q);
            const double lam2 =
                clamp_scale(ctx.rng.inv_gamma(1.0, 1.0 / state.lambda_aux(l, q) + c2 / (2.0 * xi2)));
            state.lambda(l, q) = std::sqrt(lam2);
            state.lambda_aux(l, q) = clamp_scale(ctx.rng.inv_gamma(1.0, 1.0 + 1.0 / lam2));
            ratio_sum += c2 / lam2;
        }
        xi2 = clamp_scale(ctx.rng.inv_gamma(0.5 * (static_cast<double>(P) + 1.0), 1.0 / state.xi_aux[q] + 0.5 * ratio_sum));
        state.xi[q] = std::sqrt(xi2);
        state.xi_aux[q] = clamp_scale(ctx.rng.inv_gamma(1.0, 1.0 + 1.0 / xi2));
    }
}

void update_loadings_block(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx) {
    draw_loadings(state, data, prior, ctx);
    draw_shrinkage_scales(state, ctx);
}

void recenter_rescale(ModelState &state) {
    for (Index q = 0; q < state.Q(); ++q) {
        const double wbar = state.W.col(q).mean();
        state.W.col(q).array() -= wbar;
        if (state.beta.size() > 0) state.beta += state.C_load.col(q) * wbar;
        const double sd = std::sqrt(sample_variance(state.W.col(q)));
        if (sd > 0.0 && (sd < 0.1 || sd > 10.0)) {
            state.W.col(q) /= sd;
            state.W_diag.col(q) /= sd;
            state.C_load.col(q) *= sd;
        }
    }
}

// ---- chain ----

bool ChainOutput::has_snapshot(long k) const {
    if (meta.Q == 0) return true;
    return std::binary_search(factor_draw.begin(), factor_draw.end(), k);
}

ModelState ChainOutput::state_at(long k) const {
    if (k < 0 || k >= draws()) throw InvalidInput("state_at: draw index out of range");
    ModelState s;
    s.alpha = alpha[k];
    s.beta = beta.row(k).transpose();
    s.sigma2 = sigma2[k];
    s.sigma2_eta = sigma2_eta[k];
    s.phi_eta = phi_eta[k];
    s.eta = eta.row(k).transpose();
    s.gamma = Eigen::VectorXd::Zero(std::max<Index>(meta.nodes - 1, 0));
    const auto it = std::lower_bound(factor_draw.begin(), factor_draw.end(), k);
    const bool snap = meta.Q > 0 && it != factor_draw.end() && *it == k;
    const Index Q = snap ? meta.Q : 0;
    s.phi_q = snap ? Eigen::VectorXd(phi_q.row(k).transpose()) : Eigen::VectorXd(0);
    s.xi = snap ? Eigen::VectorXd(xi.row(k).transpose()) : Eigen::VectorXd(0);
    if (snap) {
        const auto pos = static_cast<std::size_t>(it - factor_draw.begin());
        s.W = W[pos];
        s.W_diag = W_diag[pos];
        s.C_load = C_load[pos];
    } else {
        s.W = Eigen::MatrixXd(meta.dyads, 0);
        s.C_load = Eigen::MatrixXd(meta.P, 0);
        s.W_diag = Eigen::MatrixXd(meta.nodes, 0);
    }
    s.lambda = Eigen::MatrixXd::Ones(meta.P, Q);
    s.lambda_aux = Eigen::MatrixXd::Ones(meta.P, Q);
    s.xi_aux = Eigen::VectorXd::Ones(Q);
    return s;
}

ChainOutput run_chain(const ModelData &data, const PriorConfig &prior, const Schedule &schedule) {
    prior.validate();
    if (schedule.iterations < 1 || schedule.burnin < 0 || schedule.thin < 1 || schedule.factor_every < 1)
        throw InvalidInput("schedule: iterations >= 1, burnin >= 0, thin >= 1 and factor_every >= 1 required");
    if (schedule.burnin > schedule.iterations) throw InvalidInput("schedule: burnin exceeds iterations");
    PriorConfig pr = prior;
    if (!uses_dsvc(data.variant)) pr.Q = 0;
    const Index Q = pr.Q;
    const Index N = data.dyads();
    const Index n = data.nodes();
    const Index P = data.P();

    ModelState state = init_state(data, pr, schedule.seed);
    Rng rng(schedule.seed);
    SamplerDiagnostics diag;
    diag.joint_attempts.assign(static_cast<std::size_t>(Q), 0);
    diag.joint_accepts.assign(static_cast<std::size_t>(Q), 0);
    SweepContext ctx{rng, 1, &diag, 1.0};

    const long D = (schedule.iterations - schedule.burnin) / schedule.thin;
    ChainOutput out;
    out.meta.software_version = DYADFLOW_VERSION;
    out.meta.variant = data.variant;
    out.meta.seed = schedule.seed;
    out.meta.iterations = schedule.iterations;
    out.meta.burnin = schedule.burnin;
    out.meta.thin = schedule.thin;
    out.meta.factor_every = schedule.factor_every;
    out.meta.nodes = n;
    out.meta.dyads = N;
    out.meta.P = P;
    out.meta.Q = Q;
    out.meta.eta_kernel = pr.eta_kernel;
    out.meta.factor_kernel = pr.factor_kernel;
    out.meta.node_nugget = pr.node_nugget;
    out.iteration.reserve(static_cast<std::size_t>(D));
    out.alpha.resize(D);
    out.beta.resize(D, P);
    out.sigma2.resize(D);
    out.sigma2_eta.resize(D);
    out.phi_eta.resize(D);
    out.eta.resize(D, n);
    out.phi_q.resize(D, Q);
    out.xi.resize(D, Q);
    Eigen::MatrixXd d_mean = Eigen::MatrixXd::Zero(N, Q > 0 ? P : 0);
    Eigen::MatrixXd d_m2 = Eigen::MatrixXd::Zero(N, Q > 0 ? P : 0);

    auto run_block = [&](const std::string &name, auto &&fn) {
        try {
            fn();
        } catch (const SamplerFailure &) {
            throw;
        } catch (const Error &e) {
            throw SamplerFailure(e, ctx.iteration, name);
        }
    };

    for (long t = 1; t <= schedule.iterations; ++t) {
        ctx.iteration = t;
        run_block("regression", [&] { update_regression_block(state, data, pr, ctx); });
        run_block("eta", [&] { update_eta_block(state, data, pr, ctx); });
        for (Index q = 0; q < Q; ++q)
            run_block("factor " + std::to_string(q), [&] { update_factor_block(state, data, pr, q, ctx); });
        if (Q > 0) {
            run_block("loadings", [&] { update_loadings_block(state, data, pr, ctx); });
            recenter_rescale(state);
        }
        run_block("state check", [&] { state.validate(); });

        if (t <= schedule.burnin || (t - schedule.burnin) % schedule.thin != 0) continue;
        const long k = static_cast<long>(out.iteration.size());
        out.iteration.push_back(t);
        out.alpha[k] = state.alpha;
        out.beta.row(k) = state.beta.transpose();
        out.sigma2[k] = state.sigma2;
        out.sigma2_eta[k] = state.sigma2_eta;
        out.phi_eta[k] = state.phi_eta;
        out.eta.row(k) = state.eta.transpose();
        if (Q > 0) {
            out.phi_q.row(k) = state.phi_q.transpose();
            out.xi.row(k) = state.xi.transpose();
            if (k % schedule.factor_every == 0) {
                out.factor_draw.push_back(k);
                out.W.push_back(state.W);
                out.W_diag.push_back(state.W_diag);
                out.C_load.push_back(state.C_load);
            }
            const Eigen::MatrixXd delta = state.delta();
            const double cnt = static_cast<double>(k + 1);
            const Eigen::MatrixXd dev = delta - d_mean;
            d_mean += dev / cnt;
            d_m2.array() += dev.array() * (delta - d_mean).array();
        }
    }
    out.delta_mean = d_mean;
    out.delta_sd = D > 1 ? Eigen::MatrixXd((d_m2 / static_cast<double>(D - 1)).cwiseSqrt())
                         : Eigen::MatrixXd::Zero(d_m2.rows(), d_m2.cols());
    for (Index q = 0; q < Q; ++q) {
        const auto a = static_cast<double>(diag.joint_attempts[static_cast<std::size_t>(q)]);
        out.meta.joint_acceptance.push_back(
            a > 0 ? static_cast<double>(diag.joint_accepts[static_cast<std::size_t>(q)]) / a : 0.0);
    }
    out.meta.slice_updates = diag.slice_updates;
    out.meta.slice_evaluations = diag.slice_evaluations;
    out.meta.jitter_events = diag.jitter_events;
    out.meta.scale_clamps = diag.scale_clamps;
    out.meta.cg_solves = diag.cg_solves;
    out.meta.cg_iterations = diag.cg_iterations;
    out.meta.cg_fallbacks = diag.cg_fallbacks;
    out.meta.jitter_log = diag.jitter_log;
    return out;
}

}  // namespace dyadflow
