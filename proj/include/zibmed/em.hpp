#ifndef ZIBMED_EM_HPP
#define ZIBMED_EM_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "zibmed/core.hpp"
#include "zibmed/lbfgs.hpp"
#include "zibmed/likelihood.hpp"
#include "zibmed/math.hpp"
#include "zibmed/reparam.hpp"
#include "zibmed/rng.hpp"

namespace zibmed {

class EstimationError : public std::runtime_error {
public:
    EstimationError(std::string msg, std::size_t subject = static_cast<std::size_t>(-1))
        : std::runtime_error(std::move(msg)), subject_index(subject) {}
    std::size_t subject_index;
};

// Posterior component-membership probabilities; n rows, K+2 columns
// (column 0 = true-zero component, fixed at 0 for observed-positive rows).
struct Responsibilities {
    std::size_t n = 0;
    std::size_t cols = 0;
    std::vector<double> tau;

    double at(std::size_t i, std::size_t k) const { return tau[i * cols + k]; }
    double& at(std::size_t i, std::size_t k) { return tau[i * cols + k]; }
};

struct EmOptions {
    double tolerance = 1e-8;
    std::size_t max_iterations = 2000;
    std::size_t n_restarts = 5;
    std::uint64_t seed = 0;
    std::size_t quadrature_nodes = 32;
    std::size_t m_step_max_iterations = 40;
    bool compute_information = true;
};

struct FitResult {
    ParameterVector params_hat;
    MixtureConfig config;
    double loglik = kNegInf;
    Eigen::MatrixXd info_matrix;  // free-parameter scale
    Eigen::MatrixXd cov_free;     // (pseudo-)inverse information when defined
    Eigen::MatrixXd null_projector;  // projector onto flat directions; empty if none
    std::size_t info_nullity = 0;
    std::vector<double> std_errors;  // raw scale; layout of raw_param_names()
    bool se_defined = false;
    std::string se_diagnostics;
    std::size_t n_iterations = 0;
    bool converged = false;
    std::vector<std::pair<std::size_t, double>> trajectory;  // (iteration, loglik)
    bool zero_model_dropped = false;
    std::size_t restart_index = 0;
    bool monotone_violation = false;
    std::size_t quadrature_nodes = 32;
};

// Raw reporting layout: beta0..beta5, delta, gamma0, gamma1, phi,
// alpha0_k, alpha1_k (k = 1..K+1), psi_k (k = 1..K+1, tilde weights).
inline std::vector<std::string> raw_param_names(const MixtureConfig& config) {
    std::vector<std::string> names = {"beta0", "beta1", "beta2", "beta3",
                                      "beta4", "beta5", "delta", "gamma0", "gamma1", "phi"};
    const std::size_t kc = config.n_components();
    for (std::size_t k = 0; k < kc; ++k) names.push_back("alpha0_" + std::to_string(k + 1));
    for (std::size_t k = 0; k < kc; ++k) names.push_back("alpha1_" + std::to_string(k + 1));
    for (std::size_t k = 0; k < kc; ++k) names.push_back("psi_" + std::to_string(k + 1));
    return names;
}

inline std::vector<double> raw_param_values(const ParameterVector& p, const MixtureConfig& config) {
    std::vector<double> v(p.beta.begin(), p.beta.end());
    v.push_back(p.delta_sd);
    v.push_back(p.gamma[0]);
    v.push_back(p.gamma[1]);
    v.push_back(p.phi);
    const std::size_t kc = config.n_components();
    for (std::size_t k = 0; k < kc; ++k) v.push_back(p.alpha0[k]);
    for (std::size_t k = 0; k < kc; ++k) v.push_back(p.alpha1[k]);
    for (std::size_t k = 0; k < kc; ++k) v.push_back(p.psi_tilde(k));
    return v;
}

namespace detail {

// E-step pass that also yields the observed log-likelihood (both come from
// the same per-subject component terms).
inline double e_step_terms(const LikelihoodEvaluator& ev, const ParameterVector& p,
                           Responsibilities& resp) {
    thread_local LikelihoodEvaluator::ComponentTerms terms;
    ev.evaluate_terms(p, terms);
    const std::size_t n = ev.data().n();
    const std::size_t cols = ev.n_columns();
    resp.n = n;
    resp.cols = cols;
    resp.tau.assign(n * cols, 0.0);
    std::vector<double> per_subject(n);
    std::vector<double> row(cols);
    for (std::size_t i = 0; i < n; ++i) {
        double m = kNegInf;
        for (std::size_t c = 0; c < cols; ++c) {
            row[c] = terms.log_prior[i * cols + c] + terms.log_lik[i * cols + c];
            m = std::max(m, row[c]);
        }
        if (!std::isfinite(m))
            throw EstimationError("e_step: all components underflowed for subject " +
                                      std::to_string(i), i);
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double e = row[c] == kNegInf ? 0.0 : std::exp(row[c] - m);
            resp.tau[i * cols + c] = e;
            s += e;
        }
        for (std::size_t c = 0; c < cols; ++c) resp.tau[i * cols + c] /= s;
        per_subject[i] = m + std::log(s);
    }
    return pairwise_sum(per_subject);
}

}  // namespace detail

inline Responsibilities e_step(const Dataset& data, const ParameterVector& p,
                               const MixtureConfig& config, const QuadratureRule& rule) {
    LikelihoodEvaluator ev(data, config, rule);
    Responsibilities resp;
    detail::e_step_terms(ev, p, resp);
    return resp;
}

// Q(theta | tau) in the unconstrained coordinates.
inline double q_function(const Dataset& data, const std::vector<double>& params_free,
                         const Responsibilities& resp, const MixtureConfig& config,
                         const QuadratureRule& rule, bool has_zero_model = true) {
    LikelihoodEvaluator ev(data, config, rule);
    Reparam rep{config, has_zero_model};
    return ev.q_and_raw_gradient(rep.from_free(params_free), resp.tau, nullptr);
}

inline std::vector<double> q_gradient(const Dataset& data, const std::vector<double>& params_free,
                                      const Responsibilities& resp, const MixtureConfig& config,
                                      const QuadratureRule& rule, bool has_zero_model = true) {
    LikelihoodEvaluator ev(data, config, rule);
    Reparam rep{config, has_zero_model};
    const ParameterVector p = rep.from_free(params_free);
    std::vector<double> raw;
    ev.q_and_raw_gradient(p, resp.tau, &raw);
    return rep.chain_to_free(raw, p);
}

struct MStepResult {
    ParameterVector params;
    bool stalled = false;
    double q_value = kNegInf;
};

namespace detail {

inline MStepResult m_step_impl(const LikelihoodEvaluator& ev, const Responsibilities& resp,
                               const ParameterVector& init, const Reparam& rep,
                               const EmOptions& options) {
    auto objective = [&](const std::vector<double>& v, std::vector<double>& grad) -> double {
        grad.assign(rep.dim(), 0.0);
        // any numeric failure (invalid parameters, special-function overflow
        // at extreme probes) rejects the step
        if (!rep.in_bounds(v)) return std::numeric_limits<double>::infinity();
        try {
            const ParameterVector p = rep.from_free(v);
            validate(p, rep.config);
            std::vector<double> raw;
            const double q = ev.q_and_raw_gradient(p, resp.tau, &raw);
            if (!std::isfinite(q)) return std::numeric_limits<double>::infinity();
            grad = rep.chain_to_free(raw, p);
            for (double& gj : grad) gj = -gj;
            return -q;
        } catch (const std::exception&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    std::vector<double> lower(rep.dim()), upper(rep.dim());
    for (std::size_t j = 0; j < rep.dim(); ++j) rep.bounds(j, lower[j], upper[j]);

    const std::vector<double> x0 = rep.clamp_to_bounds(rep.to_free(init));
    std::vector<double> g0(rep.dim());
    const double q0 = -objective(x0, g0);

    LbfgsOptions lopts;
    lopts.max_iterations = options.m_step_max_iterations;
    lopts.grad_tolerance = 1e-9;
    const LbfgsResult lres = lbfgs_minimize(objective, x0, lopts, &lower, &upper);

    MStepResult out;
    if (!std::isfinite(lres.f) || -lres.f < q0 - 1e-10) {
        out.params = init;
        out.stalled = true;
        out.q_value = q0;
        return out;
    }
    out.params = rep.from_free(lres.x);
    out.q_value = -lres.f;
    out.stalled = false;
    return out;
}

}  // namespace detail

inline MStepResult m_step(const Dataset& data, const Responsibilities& resp,
                          const ParameterVector& params_init, const MixtureConfig& config,
                          const QuadratureRule& rule, const EmOptions& options) {
    LikelihoodEvaluator ev(data, config, rule);
    Reparam rep{config, !params_init.zero_model_dropped()};
    return detail::m_step_impl(ev, resp, params_init, rep, options);
}

namespace detail {

// OLS of the outcome equation treating observed zeros as true zeros.
inline void init_outcome_block(const Dataset& data, ParameterVector& p) {
    const std::size_t n = data.n();
    Eigen::MatrixXd X(n, 6);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = data.records[i];
        const double ind = r.observed_positive() ? 1.0 : 0.0;
        X(i, 0) = 1.0;
        X(i, 1) = r.m_obs;
        X(i, 2) = ind;
        X(i, 3) = r.x;
        X(i, 4) = r.x * ind;
        X(i, 5) = r.x * r.m_obs;
        y(i) = r.y;
    }
    // ridge-stabilized normal equations: the design is exactly collinear
    // when, say, every exposed subject is observed-positive
    Eigen::MatrixXd xtx = X.transpose() * X;
    const double ridge = 1e-8 * xtx.trace() / 6.0 + 1e-10;
    xtx.diagonal().array() += ridge;
    Eigen::VectorXd b = xtx.ldlt().solve(X.transpose() * y);
    for (std::size_t j = 0; j < 6; ++j) p.beta[j] = std::isfinite(b(j)) ? b(j) : 0.0;
    const double ssr = (y - X * b).squaredNorm();
    p.delta_sd = std::max(std::sqrt(ssr / static_cast<double>(std::max<std::size_t>(n > 6 ? n - 6 : 1, 1))), 1e-3);
}

// two-parameter logistic regression of the zero indicator on x via Newton
inline void init_zero_block(const Dataset& data, ParameterVector& p) {
    const std::size_t n = data.n();
    double zbar = 0.0;
    for (const auto& r : data.records) zbar += r.observed_positive() ? 0.0 : 1.0;
    zbar /= static_cast<double>(n);
    zbar = std::clamp(zbar, 1e-6, 1.0 - 1e-6);
    double g0 = logit(zbar), g1 = 0.0;
    for (int iter = 0; iter < 30; ++iter) {
        double s0 = 0.0, s1 = 0.0, h00 = 0.0, h01 = 0.0, h11 = 0.0;
        for (const auto& r : data.records) {
            const double z = r.observed_positive() ? 0.0 : 1.0;
            const double mu = expit(g0 + g1 * r.x);
            const double w = std::max(mu * (1.0 - mu), 1e-10);
            s0 += z - mu;
            s1 += (z - mu) * r.x;
            h00 += w;
            h01 += w * r.x;
            h11 += w * r.x * r.x;
        }
        const double det = h00 * h11 - h01 * h01;
        if (std::abs(det) < 1e-12) break;
        const double d0 = (h11 * s0 - h01 * s1) / det;
        const double d1 = (h00 * s1 - h01 * s0) / det;
        g0 += d0;
        g1 += d1;
        if (std::abs(d0) + std::abs(d1) < 1e-10) break;
    }
    p.gamma[0] = std::clamp(g0, -8.0, 8.0);
    p.gamma[1] = std::clamp(g1, -8.0, 8.0);
}

inline ParameterVector default_init(const Dataset& data, const MixtureConfig& config,
                                    bool has_zero_model) {
    const std::size_t kc = config.n_components();
    ParameterVector p;
    p.alpha0.assign(kc, 0.0);
    p.alpha1.assign(kc, 0.0);
    p.psi.assign(config.K, 1.0 / static_cast<double>(kc));
    p.phi = 10.0;

    init_outcome_block(data, p);
    if (has_zero_model) {
        init_zero_block(data, p);
    } else {
        p.gamma = {kNegInf, 0.0};
        // the indicator is identically 1: beta2/beta4 fold into beta0/beta3
        p.beta[0] += p.beta[2];
        p.beta[3] += p.beta[4];
        p.beta[2] = 0.0;
        p.beta[4] = 0.0;
    }

    // equal-frequency bins of logit(m) in descending order seed the
    // component means; bin frequencies seed the weights
    std::vector<double> vals;
    for (const auto& r : data.records)
        if (r.observed_positive()) vals.push_back(logit(r.m_obs));
    std::sort(vals.begin(), vals.end(), std::greater<>());
    const std::size_t np = vals.size();
    std::vector<double> weights(kc, 0.0);
    std::vector<std::vector<double>> bin_m(kc);
    for (std::size_t k = 0; k < kc; ++k) {
        const std::size_t lo = k * np / kc;
        const std::size_t hi = (k + 1) * np / kc;
        double mean = 0.0;
        for (std::size_t j = lo; j < hi; ++j) {
            mean += vals[j];
            bin_m[k].push_back(expit(vals[j]));
        }
        const std::size_t cnt = hi - lo;
        p.alpha0[k] = cnt > 0 ? mean / static_cast<double>(cnt) : -2.0 * static_cast<double>(k);
        weights[k] = static_cast<double>(cnt);
    }
    // keep weights interior
    double wsum = 0.0;
    for (double& w : weights) {
        w = w + 0.05 * static_cast<double>(np) / static_cast<double>(kc);
        wsum += w;
    }
    for (std::size_t k = 0; k < config.K; ++k) p.psi[k] = weights[k] / wsum;

    // pooled within-bin moment estimate of phi
    std::vector<double> phis;
    for (std::size_t k = 0; k < kc; ++k) {
        if (bin_m[k].size() < 3) continue;
        double mean = 0.0;
        for (double m : bin_m[k]) mean += m;
        mean /= static_cast<double>(bin_m[k].size());
        double var = 0.0;
        for (double m : bin_m[k]) var += (m - mean) * (m - mean);
        var /= static_cast<double>(bin_m[k].size() - 1);
        if (var > 0.0 && mean > 0.0 && mean < 1.0)
            phis.push_back(std::clamp(mean * (1.0 - mean) / var - 1.0, 0.5, 500.0));
    }
    if (!phis.empty()) {
        std::sort(phis.begin(), phis.end());
        p.phi = phis[phis.size() / 2];
    }
    return p;
}

inline ParameterVector jitter_init(ParameterVector p, const MixtureConfig& config, Rng& rng) {
    for (double& a : p.alpha0) a += 0.75 * rng.normal();
    // jitter weights on the log-ratio scale
    const std::size_t kc = config.n_components();
    std::vector<double> rho(kc);
    const double last = std::max(p.psi_tilde(config.K), 1e-8);
    for (std::size_t k = 0; k < kc; ++k)
        rho[k] = std::log(std::max(p.psi_tilde(k), 1e-8) / last) + 0.5 * rng.normal();
    double mx = *std::max_element(rho.begin(), rho.end());
    double denom = 0.0;
    for (double r : rho) denom += std::exp(r - mx);
    for (std::size_t k = 0; k < config.K; ++k) p.psi[k] = std::exp(rho[k] - mx) / denom;
    return p;
}

struct RestartOutcome {
    ParameterVector params;
    double loglik = kNegInf;
    std::size_t n_iterations = 0;
    bool converged = false;
    bool monotone_violation = false;
    std::vector<std::pair<std::size_t, double>> trajectory;
};

inline RestartOutcome run_em(const LikelihoodEvaluator& ev, const Reparam& rep,
                             const ParameterVector& init, const EmOptions& options) {
    RestartOutcome out;
    std::vector<double> free = rep.clamp_to_bounds(rep.to_free(init));
    ParameterVector params = rep.from_free(free);
    Responsibilities resp;
    double ll = e_step_terms(ev, params, resp);
    out.trajectory.emplace_back(0, ll);

    std::size_t stall_count = 0;
    for (std::size_t iter = 1; iter <= options.max_iterations; ++iter) {
        const MStepResult ms = m_step_impl(ev, resp, params, rep, options);
        if (ms.stalled) break;
        const std::vector<double> free_new = rep.to_free(ms.params);
        double dist2 = 0.0;
        for (std::size_t j = 0; j < free.size(); ++j)
            dist2 += (free_new[j] - free[j]) * (free_new[j] - free[j]);

        Responsibilities resp_new;
        const double ll_new = e_step_terms(ev, ms.params, resp_new);
        if (ll_new < ll - 1e-10) {
            out.monotone_violation = true;
            break;
        }
        params = ms.params;
        free = free_new;
        resp = std::move(resp_new);
        out.n_iterations = iter;
        out.trajectory.emplace_back(iter, ll_new);

        const double dll = std::abs(ll_new - ll);
        ll = ll_new;
        if (std::sqrt(dist2) < options.tolerance) {
            out.converged = true;
            break;
        }
        stall_count = dll < 1e-10 ? stall_count + 1 : 0;
        if (stall_count >= 5) {
            out.converged = true;
            break;
        }
    }
    out.params = params;
    out.loglik = ll;
    return out;
}

}  // namespace detail

// Oakes-identity observed information at theta (free scale): the Hessian of
// Q with responsibilities frozen plus the cross block obtained by refreshing
// the E-step at the perturbation point. Both blocks by central differences
// of the analytic Q gradient.
inline Eigen::MatrixXd information_matrix(const LikelihoodEvaluator& ev, const Reparam& rep,
                                          const ParameterVector& params) {
    const std::vector<double> theta = rep.to_free(params);
    const std::size_t d = theta.size();

    Responsibilities resp_star;
    detail::e_step_terms(ev, params, resp_star);

    auto grad_at = [&](const std::vector<double>& v, const Responsibilities& resp) {
        const ParameterVector p = rep.from_free(v);
        std::vector<double> raw;
        ev.q_and_raw_gradient(p, resp.tau, &raw);
        return rep.chain_to_free(raw, p);
    };

    Eigen::MatrixXd h1(d, d), h2(d, d);
    std::vector<double> v = theta;
    for (std::size_t j = 0; j < d; ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(theta[j]));

        v[j] = theta[j] + h;
        const std::vector<double> gp = grad_at(v, resp_star);
        Responsibilities rp;
        detail::e_step_terms(ev, rep.from_free(v), rp);
        const std::vector<double> cp = grad_at(theta, rp);

        v[j] = theta[j] - h;
        const std::vector<double> gm = grad_at(v, resp_star);
        Responsibilities rm;
        detail::e_step_terms(ev, rep.from_free(v), rm);
        const std::vector<double> cm = grad_at(theta, rm);

        v[j] = theta[j];
        for (std::size_t l = 0; l < d; ++l) {
            h1(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) = (gp[l] - gm[l]) / (2.0 * h);
            h2(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) = (cp[l] - cm[l]) / (2.0 * h);
        }
    }
    Eigen::MatrixXd info = -(h1 + h2);
    return 0.5 * (info + info.transpose());
}

inline Eigen::MatrixXd information_matrix(const Dataset& data, const FitResult& fit,
                                          const MixtureConfig& config, const QuadratureRule& rule) {
    LikelihoodEvaluator ev(data, config, rule);
    Reparam rep{config, !fit.params_hat.zero_model_dropped()};
    return information_matrix(ev, rep, fit.params_hat);
}

namespace detail {

// Raw-scale standard errors through the reparameterization Jacobian.
// Boundary fits can leave exactly flat directions in the information
// matrix (for example a zero-model pinned at its box with no true zeros to
// see); the covariance is then the pseudo-inverse over the identified
// subspace and any coordinate leaning into a flat direction reports an
// undefined standard error. A genuinely indefinite matrix (negative
// curvature beyond rounding) still disables all standard errors.
inline void fill_standard_errors(FitResult& fit, const Reparam& rep) {
    const std::size_t d = rep.dim();
    const std::size_t kc = fit.config.n_components();
    const auto& p = fit.params_hat;
    const std::size_t nraw = 10 + 3 * kc;
    fit.std_errors.assign(nraw, std::numeric_limits<double>::quiet_NaN());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.info_matrix);
    if (es.info() != Eigen::Success) {
        fit.se_defined = false;
        fit.se_diagnostics = "information matrix eigendecomposition failed";
        return;
    }
    const Eigen::VectorXd& lam = es.eigenvalues();
    const double lam_max = lam.maxCoeff();
    if (!(lam_max > 0.0) || lam.minCoeff() < -1e-6 * lam_max) {
        fit.se_defined = false;
        fit.se_diagnostics = "information matrix not positive semidefinite; min eigenvalue " +
                             std::to_string(lam.minCoeff());
        return;
    }
    const double cut = 1e-9 * lam_max;
    Eigen::VectorXd inv_lam = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    Eigen::VectorXd null_mask = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    std::size_t nullity = 0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam(i) > cut) {
            inv_lam(i) = 1.0 / lam(i);
        } else {
            null_mask(i) = 1.0;
            ++nullity;
        }
    }
    fit.cov_free = es.eigenvectors() * inv_lam.asDiagonal() * es.eigenvectors().transpose();
    fit.info_nullity = nullity;
    if (nullity > 0) {
        fit.null_projector =
            es.eigenvectors() * null_mask.asDiagonal() * es.eigenvectors().transpose();
        fit.se_diagnostics = "information matrix singular along " + std::to_string(nullity) +
                             " direction(s); standard errors restricted to the identified "
                             "subspace (boundary or flat likelihood)";
    } else {
        fit.null_projector = Eigen::MatrixXd();
        fit.se_diagnostics.clear();
    }
    fit.se_defined = true;

    auto var_of = [&](const Eigen::VectorXd& jac) -> double {
        if (nullity > 0) {
            const double g2 = jac.squaredNorm();
            if (g2 > 0.0 && (fit.null_projector * jac).squaredNorm() > 1e-12 * g2)
                return std::numeric_limits<double>::quiet_NaN();
        }
        return std::max(0.0, jac.dot(fit.cov_free * jac));
    };
    auto unit = [&](std::size_t j) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
        e(static_cast<Eigen::Index>(j)) = 1.0;
        return e;
    };

    for (std::size_t j = 0; j < rep.n_beta(); ++j)
        fit.std_errors[rep.beta_raw_index(j)] = std::sqrt(var_of(unit(j)));
    fit.std_errors[6] = p.delta_sd * std::sqrt(var_of(unit(rep.delta_offset())));
    if (rep.has_zero_model) {
        fit.std_errors[7] = std::sqrt(var_of(unit(rep.gamma_offset())));
        fit.std_errors[8] = std::sqrt(var_of(unit(rep.gamma_offset() + 1)));
    }
    fit.std_errors[9] = p.phi * std::sqrt(var_of(unit(rep.phi_offset())));
    for (std::size_t k = 0; k < kc; ++k) {
        fit.std_errors[10 + k] = std::sqrt(var_of(unit(rep.alpha0_offset() + k)));
        fit.std_errors[10 + kc + k] = std::sqrt(var_of(unit(rep.alpha1_offset() + k)));
    }
    for (std::size_t k = 0; k < kc; ++k) {
        Eigen::VectorXd jac = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
        for (std::size_t j = 0; j < rep.config.K; ++j) {
            const double dkj = k == j ? 1.0 : 0.0;
            jac(static_cast<Eigen::Index>(rep.rho_offset() + j)) =
                p.psi_tilde(k) * (dkj - p.psi_tilde(j));
        }
        fit.std_errors[10 + 2 * kc + k] = std::sqrt(var_of(jac));
    }
}

}  // namespace detail

// EM fit from an explicit start (used by warm-started refits).
inline FitResult em_fit_from(const Dataset& data, const MixtureConfig& config,
                             const EmOptions& options, const ParameterVector& start) {
    validate(data);
    const QuadratureRule rule = QuadratureRule::gauss_legendre(options.quadrature_nodes);
    LikelihoodEvaluator ev(data, config, rule);
    Reparam rep{config, !start.zero_model_dropped()};

    const detail::RestartOutcome ro = detail::run_em(ev, rep, start, options);
    FitResult fit;
    fit.params_hat = ro.params;
    fit.config = config;
    fit.loglik = ro.loglik;
    fit.n_iterations = ro.n_iterations;
    fit.converged = ro.converged;
    fit.trajectory = ro.trajectory;
    fit.monotone_violation = ro.monotone_violation;
    fit.zero_model_dropped = ro.params.zero_model_dropped();
    fit.quadrature_nodes = options.quadrature_nodes;
    if (options.compute_information) {
        fit.info_matrix = information_matrix(ev, rep, fit.params_hat);
        detail::fill_standard_errors(fit, rep);
    }
    return fit;
}

// Maximum-likelihood fit: multi-restart EM with the distance stopping rule.
inline FitResult em_fit(const Dataset& data, const MixtureConfig& config,
                        const EmOptions& options = {}) {
    validate(data);
    const std::size_t n_pos = data.n_positive();
    const std::size_t n_zero = data.n() - n_pos;
    if (n_pos == 0) throw EstimationError("em_fit: all-zero mediator is unidentifiable");

    std::set<double> distinct;
    for (const auto& r : data.records)
        if (r.observed_positive()) distinct.insert(r.m_obs);
    if (distinct.size() < config.K + 2)
        throw EstimationError("em_fit: need at least K+2 distinct positive abundances");

    const bool has_zero_model = n_zero > 0;
    const QuadratureRule rule = QuadratureRule::gauss_legendre(options.quadrature_nodes);
    LikelihoodEvaluator ev(data, config, rule);
    Reparam rep{config, has_zero_model};

    const ParameterVector base = detail::default_init(data, config, has_zero_model);
    detail::RestartOutcome best;
    std::size_t best_index = 0;
    bool have_best = false;
    for (std::size_t r = 0; r < std::max<std::size_t>(options.n_restarts, 1); ++r) {
        ParameterVector start = base;
        if (r > 0) {
            Rng rng(derive_seed(options.seed, 1000 + r));
            start = detail::jitter_init(base, config, rng);
        }
        detail::RestartOutcome ro;
        try {
            ro = detail::run_em(ev, rep, start, options);
        } catch (const EstimationError&) {
            continue;  // restart collapsed; others may succeed
        }
        const bool better =
            !have_best || ro.loglik > best.loglik + 1e-12 ||
            (std::abs(ro.loglik - best.loglik) <= 1e-12 && ro.n_iterations < best.n_iterations);
        if (better) {
            best = std::move(ro);
            best_index = r;
            have_best = true;
        }
    }
    if (!have_best) throw EstimationError("em_fit: every restart failed");

    FitResult fit;
    fit.params_hat = best.params;
    fit.config = config;
    fit.loglik = best.loglik;
    fit.n_iterations = best.n_iterations;
    fit.converged = best.converged;
    fit.trajectory = best.trajectory;
    fit.monotone_violation = best.monotone_violation;
    fit.zero_model_dropped = !has_zero_model;
    fit.restart_index = best_index;
    fit.quadrature_nodes = options.quadrature_nodes;
    if (options.compute_information) {
        fit.info_matrix = information_matrix(ev, rep, fit.params_hat);
        detail::fill_standard_errors(fit, rep);
    }
    return fit;
}

// Reporting-order fit: components sorted by descending alpha0, with raw
// standard errors permuted to match.
inline FitResult canonicalize_fit(const FitResult& fit) {
    const std::size_t kc = fit.config.n_components();
    std::vector<std::size_t> order(kc);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return fit.params_hat.alpha0[a] > fit.params_hat.alpha0[b];
    });
    FitResult out = fit;
    out.params_hat = canonicalize(fit.params_hat, fit.config);
    if (!fit.std_errors.empty()) {
        for (std::size_t k = 0; k < kc; ++k) {
            out.std_errors[10 + k] = fit.std_errors[10 + order[k]];
            out.std_errors[10 + kc + k] = fit.std_errors[10 + kc + order[k]];
            out.std_errors[10 + 2 * kc + k] = fit.std_errors[10 + 2 * kc + order[k]];
        }
    }
    return out;
}

}  // namespace zibmed

#endif  // ZIBMED_EM_HPP
