#include "dyadflow/evaluation.hpp"

#include "dyadflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace dyadflow {

double crps_empirical(const Eigen::VectorXd &samples, double y) {
    const Index m = samples.size();
    if (m == 0) throw InvalidInput("crps_empirical: no samples");
    if (!samples.allFinite() || !std::isfinite(y)) throw InvalidInput("crps_empirical: non-finite input");
    std::vector<double> x(samples.data(), samples.data() + m);
    std::sort(x.begin(), x.end());
    const double md = static_cast<double>(m);
    double abs_err = 0.0;
    double spread = 0.0;
    for (Index k = 0; k < m; ++k) {
        const double v = x[static_cast<std::size_t>(k)];
        abs_err += std::abs(v - y);
        spread += (2.0 * static_cast<double>(k + 1) - md - 1.0) * v;
    }
    return abs_err / md - spread / (md * md);
}

double crps_gaussian(double mu, double sigma, double y) {
    if (!(sigma > 0.0)) throw InvalidInput("crps_gaussian: sigma must be positive");
    const double z = (y - mu) / sigma;
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
    return sigma * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - 1.0 / std::sqrt(std::numbers::pi));
}

double quantile(Eigen::VectorXd values, double prob) {
    const Index m = values.size();
    if (m == 0) throw InvalidInput("quantile: no values");
    if (!(prob >= 0.0 && prob <= 1.0)) throw InvalidInput("quantile: probability outside [0, 1]");
    std::sort(values.data(), values.data() + m);
    const double h = (static_cast<double>(m) - 1.0) * prob;
    const auto lo = static_cast<Index>(std::floor(h));
    const Index hi = std::min(lo + 1, m - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ConvergenceResult convergence_diagnostics(const std::vector<Eigen::VectorXd> &chains) {
    if (chains.empty()) throw InvalidInput("convergence_diagnostics: no chains");
    const Index len = chains.front().size();
    for (const auto &c : chains) {
        if (c.size() != len) throw InvalidInput("convergence_diagnostics: chains differ in length");
        if (!c.allFinite()) throw InvalidInput("convergence_diagnostics: non-finite draws");
    }
    if (len < 4) throw InvalidInput("convergence_diagnostics: chains need at least 4 draws");
    const Index half = len / 2;
    std::vector<Eigen::VectorXd> split;
    for (const auto &c : chains) {
        split.emplace_back(c.head(half));
        split.emplace_back(c.tail(half));
    }
    const auto m = static_cast<double>(split.size());
    const auto n = static_cast<double>(half);
    Eigen::VectorXd means(static_cast<Index>(split.size()));
    Eigen::VectorXd vars(static_cast<Index>(split.size()));
    for (std::size_t j = 0; j < split.size(); ++j) {
        means[static_cast<Index>(j)] = split[j].mean();
        vars[static_cast<Index>(j)] = (split[j].array() - split[j].mean()).square().sum() / (n - 1.0);
    }
    ConvergenceResult out;
    const double W = vars.mean();
    const double B = n * (means.array() - means.mean()).square().sum() / (m - 1.0);
    if ((vars.array() <= 0.0).any() || !(W > 0.0)) {
        out.degenerate = true;
        out.rhat = std::numeric_limits<double>::quiet_NaN();
        out.ess = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    const double var_plus = (n - 1.0) / n * W + B / n;
    out.rhat = std::sqrt(var_plus / W);

    // rho_t = 1 - V_t / (2 var+), V_t the mean squared lag-t difference
    auto rho = [&](Index t) {
        double acc = 0.0;
        for (const auto &c : split)
            acc += (c.segment(t, half - t) - c.head(half - t)).squaredNorm() / static_cast<double>(half - t);
        return 1.0 - (acc / m) / (2.0 * var_plus);
    };
    double tau = -1.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (Index t = 0; t + 1 < half; t += 2) {
        double pair = (t == 0 ? 1.0 : rho(t)) + rho(t + 1);
        if (pair <= 0.0) break;
        pair = std::min(pair, prev_pair);  // initial monotone sequence
        prev_pair = pair;
        tau += 2.0 * pair;
    }
    out.ess = m * n / std::max(tau, 1.0 / std::log10(m * n + 10.0));
    return out;
}

IntervalRow interval_coverage(const std::string &parameter, const Eigen::VectorXd &draws, double truth,
                              double level) {
    if (draws.size() == 0) throw InvalidInput("interval_coverage: no draws for " + parameter);
    if (!(level > 0.0 && level < 1.0)) throw InvalidInput("interval_coverage: level must be in (0, 1)");
    IntervalRow row;
    row.parameter = parameter;
    row.truth = truth;
    row.mean = draws.mean();
    row.lower = quantile(draws, 0.5 * (1.0 - level));
    row.upper = quantile(draws, 1.0 - 0.5 * (1.0 - level));
    row.covered = truth >= row.lower && truth <= row.upper;
    return row;
}

ParameterTable scalar_parameters(const ChainOutput &chain) {
    ParameterTable t;
    const long D = chain.draws();
    const Index P = chain.beta.cols();
    t.draws.resize(D, P + 4);
    t.names.emplace_back("alpha");
    t.draws.col(0) = chain.alpha;
    for (Index k = 0; k < P; ++k) {
        t.names.push_back("beta_" + std::to_string(k + 1));
        t.draws.col(1 + k) = chain.beta.col(k);
    }
    t.names.emplace_back("sigma2");
    t.draws.col(P + 1) = chain.sigma2;
    t.names.emplace_back("sigma2_eta");
    t.draws.col(P + 2) = chain.sigma2_eta;
    t.names.emplace_back("phi_eta");
    t.draws.col(P + 3) = chain.phi_eta;
    return t;
}

Eigen::MatrixXd posterior_means(const ChainOutput &chain, const ModelData &data, std::vector<long> *used) {
    if (chain.meta.dyads != data.dyads() || chain.meta.P != data.P())
        throw InvalidInput("chain dimensions do not match the data");
    std::vector<long> keep;
    for (long k = 0; k < chain.draws(); ++k)
        if (chain.has_snapshot(k)) keep.push_back(k);
    Eigen::MatrixXd mu(static_cast<Index>(keep.size()), data.dyads());
    for (std::size_t r = 0; r < keep.size(); ++r)
        mu.row(static_cast<Index>(r)) = fitted_mean(chain.state_at(keep[r]), data).transpose();
    if (used) *used = keep;
    return mu;
}

Eigen::MatrixXd posterior_predictive(const ChainOutput &chain, const ModelData &data, Rng &rng) {
    std::vector<long> used;
    Eigen::MatrixXd y = posterior_means(chain, data, &used);
    for (Index r = 0; r < y.rows(); ++r) {
        const double sd = std::sqrt(chain.sigma2[used[static_cast<std::size_t>(r)]]);
        for (Index a = 0; a < y.cols(); ++a) y(r, a) += sd * rng.normal();
    }
    return y;
}

Eigen::VectorXd crps_per_dyad(const Eigen::MatrixXd &predictive, const ModelData &data) {
    if (predictive.cols() != data.dyads()) throw InvalidInput("crps_per_dyad: predictive columns must equal N");
    Eigen::VectorXd out = Eigen::VectorXd::Constant(data.dyads(), std::numeric_limits<double>::quiet_NaN());
    for (Index a = 0; a < data.dyads(); ++a)
        if (data.observed[a] > 0.0) out[a] = crps_empirical(predictive.col(a), data.y[a]);
    return out;
}

double kinship(double y) { return 1.0 - 1.0 / (1.0 + std::exp(-y)); }

KinshipResiduals kinship_residuals(const Eigen::MatrixXd &predictive, const Eigen::VectorXd &y,
                                   const Eigen::VectorXd &observed,
                                   const std::optional<Eigen::VectorXi> &mismatches, long near_clonal_threshold) {
    const Index N = y.size();
    if (predictive.cols() != N || observed.size() != N) throw InvalidInput("kinship_residuals: size mismatch");
    if (predictive.rows() == 0) throw InvalidInput("kinship_residuals: no predictive draws");
    KinshipResiduals out;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.mean_residual = Eigen::VectorXd::Constant(N, nan);
    out.mean_log1p = Eigen::VectorXd::Constant(N, nan);
    out.sd_log1p = Eigen::VectorXd::Constant(N, nan);
    const auto D = static_cast<double>(predictive.rows());
    double abs_all = 0.0, abs_nc = 0.0;
    Index n_all = 0;
    if (!mismatches) out.warnings.emplace_back("no mismatch counts; near-clonal subset omitted");
    else if (mismatches->size() != N) throw InvalidInput("kinship_residuals: mismatch count length must equal N");
    for (Index a = 0; a < N; ++a) {
        if (observed[a] <= 0.0) continue;
        const double k = kinship(y[a]);
        double res = 0.0;
        Eigen::VectorXd l(predictive.rows());
        for (Index r = 0; r < predictive.rows(); ++r) {
            res += k - kinship(predictive(r, a));
            l[r] = std::log1p(std::abs(y[a] - predictive(r, a)));
        }
        out.mean_residual[a] = res / D;
        out.mean_log1p[a] = l.mean();
        out.sd_log1p[a] = D > 1 ? std::sqrt((l.array() - l.mean()).square().sum() / (D - 1.0)) : 0.0;
        abs_all += std::abs(out.mean_residual[a]);
        ++n_all;
        if (mismatches && (*mismatches)[a] < near_clonal_threshold) {
            abs_nc += std::abs(out.mean_residual[a]);
            ++out.near_clonal_count;
        }
    }
    out.mean_abs_residual = n_all > 0 ? abs_all / static_cast<double>(n_all) : nan;
    if (mismatches && out.near_clonal_count > 0)
        out.mean_abs_residual_near_clonal = abs_nc / static_cast<double>(out.near_clonal_count);
    return out;
}

ScoreReport score_chains(const std::vector<ChainOutput> &chains, const ModelData &data,
                         const std::optional<Eigen::VectorXi> &mismatches,
                         const std::vector<std::pair<std::string, double>> &truth, const ScoreOptions &options) {
    if (chains.empty()) throw InvalidInput("score_chains: no chains");
    ScoreReport rep;
    Rng rng(options.seed);
    std::vector<Eigen::MatrixXd> preds;
    Index rows = 0;
    for (const auto &c : chains) {
        preds.push_back(posterior_predictive(c, data, rng));
        rows += preds.back().rows();
    }
    if (rows == 0) throw InvalidInput("score_chains: no retained draws carry the factor state");
    Eigen::MatrixXd pred(rows, data.dyads());
    Index r0 = 0;
    for (const auto &p : preds) {
        pred.middleRows(r0, p.rows()) = p;
        r0 += p.rows();
    }
    rep.predictive_draws = rows;
    rep.crps = crps_per_dyad(pred, data);
    double s = 0.0;
    for (Index a = 0; a < rep.crps.size(); ++a)
        if (std::isfinite(rep.crps[a])) s += rep.crps[a];
    rep.mean_crps = s / static_cast<double>(data.n_observed);

    std::vector<ParameterTable> tables;
    for (const auto &c : chains) tables.push_back(scalar_parameters(c));
    const auto &names = tables.front().names;
    const Index len = tables.front().draws.rows();
    bool equal_length = len >= 4;
    for (const auto &t : tables) equal_length = equal_length && t.draws.rows() == len;
    if (!equal_length) rep.warnings.emplace_back("chains shorter than 4 draws or of unequal length; diagnostics skipped");
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (!equal_length) break;
        std::vector<Eigen::VectorXd> seqs;
        for (const auto &t : tables) seqs.emplace_back(t.draws.col(static_cast<Index>(k)));
        ParameterDiagnostics d{names[k], convergence_diagnostics(seqs)};
        if (d.result.degenerate) rep.warnings.push_back(names[k] + ": zero-variance chain, R-hat undefined");
        rep.diagnostics.push_back(d);
    }
    for (const auto &[name, value] : truth) {
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) {
            rep.warnings.push_back("truth for unknown parameter '" + name + "' ignored");
            continue;
        }
        const auto col = static_cast<Index>(it - names.begin());
        Index total = 0;
        for (const auto &t : tables) total += t.draws.rows();
        Eigen::VectorXd pooled(total);
        Index o = 0;
        for (const auto &t : tables) {
            pooled.segment(o, t.draws.rows()) = t.draws.col(col);
            o += t.draws.rows();
        }
        rep.coverage.push_back(interval_coverage(name, pooled, value, options.level));
    }
    rep.kinship = kinship_residuals(pred, data.y, data.observed, mismatches, options.near_clonal_threshold);
    for (const auto &w : rep.kinship.warnings) rep.warnings.push_back(w);
    return rep;
}

}  // namespace dyadflow
