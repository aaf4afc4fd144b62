#ifndef ZIBMED_LIKELIHOOD_HPP
#define ZIBMED_LIKELIHOOD_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "zibmed/core.hpp"
#include "zibmed/math.hpp"

namespace zibmed {

// Reference Gauss-Legendre rule on (0,1). Its order sets the order of the
// Gauss-Jacobi rules used for the censored-interval integrals.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    static QuadratureRule gauss_legendre(std::size_t n) {
        QuadratureRule r;
        gauss_legendre_01(n, r.nodes, r.weights);
        return r;
    }
};

struct ComponentLogLik {
    double value = 0.0;
    std::size_t subject_index = 0;
    std::size_t component_index = 0;  // 0 = zero component, 1..K+1 = beta components
};

namespace detail {

constexpr double kUpperClamp = 1.0 - 1e-12;

inline double truncation_limit(std::uint64_t lib_size) {
    return std::min(1.0 / static_cast<double>(lib_size), kUpperClamp);
}

inline double normal_logpdf_term(double resid, double delta) {
    return -0.5 * kLnTwoPi - std::log(delta) - resid * resid / (2.0 * delta * delta);
}

inline double group1_residual(const std::array<double, 6>& b, double y, double m, double x) {
    return y - b[0] - b[1] * m - b[2] - (b[3] + b[4]) * x - b[5] * x * m;
}

// Gauss-Jacobi rule for the weight v^(a-1) on [0,1] (Golub-Welsch on the
// symmetric tridiagonal of the shifted Jacobi recurrence). Weights sum to
// 1/a, the total mass of the weight function.
inline void gauss_jacobi01(std::size_t n, double a, std::vector<double>& nodes,
                           std::vector<double>& weights) {
    const double be = a - 1.0;
    Eigen::VectorXd diag(static_cast<Eigen::Index>(n)), sub(static_cast<Eigen::Index>(n) - 1);
    diag(0) = be / (be + 2.0);
    for (std::size_t k = 1; k < n; ++k) {
        const double s = 2.0 * static_cast<double>(k) + be;
        diag(static_cast<Eigen::Index>(k)) = be * be / (s * (s + 2.0));
    }
    for (std::size_t k = 1; k < n; ++k) {
        const double kk = static_cast<double>(k);
        const double s = 2.0 * kk + be;
        const double B = 4.0 * kk * kk * (kk + be) * (kk + be) / (s * s * (s + 1.0) * (s - 1.0));
        sub(static_cast<Eigen::Index>(k) - 1) = std::sqrt(B);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("gauss_jacobi01: eigensolve failed");
    nodes.resize(n);
    weights.resize(n);
    for (std::size_t q = 0; q < n; ++q) {
        nodes[q] = 0.5 * (es.eigenvalues()(static_cast<Eigen::Index>(q)) + 1.0);
        const double v0 = es.eigenvectors()(0, static_cast<Eigen::Index>(q));
        weights[q] = v0 * v0 / a;
    }
}

// Moments of the censored integrand needed by the Q gradient; expectations
// are taken under the integral's own weight.
struct FalseZeroMoments {
    double e_log_m = 0.0;
    double e_log_1m = 0.0;
    double e_resid = 0.0;
    double e_resid_m = 0.0;
    double e_resid_sq = 0.0;
};

// ln of  integral_0^c h(y|x,m) Beta(m|mu,phi) dm  with h the exponentiated
// negative squared outcome residual. Two exact evaluation paths share the
// split  J*B(a,b) = g(0) * integral_0^c m^(a-1) exp(psi(m)) dm  with
// psi(m) = q1 m + q2 m^2 + q3 m^3 + q4 m^4 + O(m^5):
//   - when |psi| stays small on [0,c] (every real library size), the
//     exponential series gives J in closed form to ~1e-9 relative;
//   - otherwise an n-node Gauss-Jacobi rule with weight m^(a-1) integrates
//     the analytic remainder to machine precision.
// Returns -inf when the integral underflows even against its peak.
inline double log_false_zero_integral(double y, double x, double c, double log_c, double a,
                                      double b, double log_beta_ab,
                                      const std::array<double, 6>& beta, double delta,
                                      std::size_t n_nodes, FalseZeroMoments* moments = nullptr) {
    const double r0 = y - beta[0] - beta[2] - (beta[3] + beta[4]) * x;
    const double slope = beta[1] + beta[5] * x;
    const double inv_d2 = 1.0 / (delta * delta);

    const double q1 = slope * r0 * inv_d2 - (b - 1.0);
    const double q2 = -0.5 * slope * slope * inv_d2 - 0.5 * (b - 1.0);
    const double q3 = -(b - 1.0) / 3.0;
    const double q4 = -(b - 1.0) / 4.0;
    const double rho = c * std::max({std::abs(q1), std::sqrt(std::abs(2.0 * q2)),
                                     std::abs(b - 1.0) + 1.0});

    if (rho < 0.02) {
        const double e1 = q1;
        const double e2 = q2 + 0.5 * q1 * q1;
        const double e3 = q3 + q1 * q2 + q1 * q1 * q1 / 6.0;
        const double e4 = q4 + q1 * q3 + 0.5 * q2 * q2 + 0.5 * q1 * q1 * q2 +
                          q1 * q1 * q1 * q1 / 24.0;
        const double t1 = c * e1, t2 = c * c * e2, t3 = c * c * c * e3, t4 = c * c * c * c * e4;
        auto series = [&](double shift) {
            return 1.0 / (a + shift) + t1 / (a + 1.0 + shift) + t2 / (a + 2.0 + shift) +
                   t3 / (a + 3.0 + shift) + t4 / (a + 4.0 + shift);
        };
        const double s0 = series(0.0);
        const double log_g0 = -0.5 * r0 * r0 * inv_d2;
        if (moments) {
            const double em = c * series(1.0) / s0;
            const double em2 = c * c * series(2.0) / s0;
            const double em3 = c * c * c * series(3.0) / s0;
            const double sq = 1.0 / (a * a) + t1 / ((a + 1.0) * (a + 1.0)) +
                              t2 / ((a + 2.0) * (a + 2.0)) + t3 / ((a + 3.0) * (a + 3.0)) +
                              t4 / ((a + 4.0) * (a + 4.0));
            moments->e_log_m = log_c - sq / s0;
            moments->e_log_1m = -(em + 0.5 * em2 + em3 / 3.0);
            moments->e_resid = r0 - slope * em;
            moments->e_resid_m = r0 * em - slope * em2;
            moments->e_resid_sq = r0 * r0 - 2.0 * r0 * slope * em + slope * slope * em2;
        }
        return log_g0 + a * log_c + std::log(s0) - log_beta_ab;
    }

    thread_local std::vector<double> nodes, weights;
    gauss_jacobi01(n_nodes, a, nodes, weights);
    thread_local std::vector<double> g, lnm, ln1m, resid, mq;
    g.resize(n_nodes); lnm.resize(n_nodes); ln1m.resize(n_nodes);
    resid.resize(n_nodes); mq.resize(n_nodes);

    double gmax = kNegInf;
    for (std::size_t q = 0; q < n_nodes; ++q) {
        const double m = c * nodes[q];
        const double l1m = std::log1p(-m);
        const double r = r0 - slope * m;
        const double gq = (b - 1.0) * l1m - 0.5 * r * r * inv_d2;
        mq[q] = m; ln1m[q] = l1m; resid[q] = r; g[q] = gq;
        if (gq > gmax) gmax = gq;
    }
    if (!std::isfinite(gmax)) return kNegInf;
    double s = 0.0;
    for (std::size_t q = 0; q < n_nodes; ++q) {
        const double e = weights[q] * std::exp(g[q] - gmax);
        g[q] = e;
        s += e;
    }
    if (!(s > 0.0)) return kNegInf;
    if (moments) {
        FalseZeroMoments mo;
        const double inv_s = 1.0 / s;
        for (std::size_t q = 0; q < n_nodes; ++q) {
            const double w = g[q] * inv_s;
            mo.e_log_m += w * (log_c + std::log(nodes[q]));
            mo.e_log_1m += w * ln1m[q];
            mo.e_resid += w * resid[q];
            mo.e_resid_m += w * resid[q] * mq[q];
            mo.e_resid_sq += w * resid[q] * resid[q];
        }
        *moments = mo;
    }
    return a * log_c + gmax + std::log(s) - log_beta_ab;
}

}  // namespace detail

// ell^1_ik: subject with observed positive abundance, beta component k (0-based).
inline double loglik_group1(const SubjectRecord& rec, std::size_t k,
                            const ParameterVector& p, const MixtureConfig& config) {
    if (!(rec.m_obs > 0.0 && rec.m_obs < 1.0))
        throw std::domain_error("loglik_group1: m_obs outside (0,1)");
    if (k >= config.n_components()) throw std::invalid_argument("loglik_group1: bad component");
    const double resid = detail::group1_residual(p.beta, rec.y, rec.m_obs, rec.x);
    return detail::normal_logpdf_term(resid, p.delta_sd) +
           beta_log_pdf(rec.m_obs, component_mean(p, k, rec.x), p.phi);
}

// ell^2_i0: observed zero attributed to a true structural zero.
inline double loglik_group2_zero_component(const SubjectRecord& rec, const ParameterVector& p) {
    if (rec.m_obs != 0.0)
        throw std::domain_error("loglik_group2_zero_component: m_obs must be 0");
    const double resid = rec.y - p.beta[0] - p.beta[3] * rec.x;
    return detail::normal_logpdf_term(resid, p.delta_sd);
}

// ell^2_ik: observed zero attributed to a positive abundance censored by the
// LOD; integrates the outcome density against the beta kernel over [0, 1/L].
inline double loglik_group2_false_zero(const SubjectRecord& rec, std::size_t k,
                                       const ParameterVector& p, const MixtureConfig& config,
                                       const QuadratureRule& rule) {
    if (rec.m_obs != 0.0)
        throw std::domain_error("loglik_group2_false_zero: m_obs must be 0");
    if (k >= config.n_components())
        throw std::invalid_argument("loglik_group2_false_zero: bad component");
    const double c = detail::truncation_limit(rec.lib_size);
    const double mu = component_mean(p, k, rec.x);
    const double a = mu * p.phi, b = (1.0 - mu) * p.phi;
    const double lnJ =
        detail::log_false_zero_integral(rec.y, rec.x, c, std::log(c), a, b, log_beta(a, b),
                                        p.beta, p.delta_sd, rule.nodes.size());
    if (lnJ == kNegInf) return kNegInf;
    return -0.5 * kLnTwoPi - std::log(p.delta_sd) + lnJ;
}

namespace detail {

// Per-theta link quantities shared by all subjects at the same exposure value.
struct LinkCache {
    double delta = 0.0, log_delta = kNegInf, log_1m_delta = 0.0;
    std::vector<double> mu, shape_a, shape_b, log_beta_ab;
    std::vector<double> digamma_a, digamma_b;  // filled only for gradient passes

    void build(const ParameterVector& p, const MixtureConfig& config, double x, bool need_digamma) {
        const std::size_t kc = config.n_components();
        delta = zero_probability(p, x);
        log_delta = delta > 0.0 ? std::log(delta) : kNegInf;
        log_1m_delta = std::log1p(-delta);
        mu.resize(kc); shape_a.resize(kc); shape_b.resize(kc); log_beta_ab.resize(kc);
        if (need_digamma) { digamma_a.resize(kc); digamma_b.resize(kc); }
        for (std::size_t k = 0; k < kc; ++k) {
            // keep the shapes away from the gamma-function poles when the
            // optimizer probes extreme link values
            mu[k] = std::clamp(component_mean(p, k, x), 1e-12, 1.0 - 1e-12);
            shape_a[k] = std::clamp(mu[k] * p.phi, 1e-12, 1e12);
            shape_b[k] = std::clamp((1.0 - mu[k]) * p.phi, 1e-12, 1e12);
            log_beta_ab[k] = log_beta(shape_a[k], shape_b[k]);
            if (need_digamma) {
                digamma_a[k] = digamma(shape_a[k]);
                digamma_b[k] = digamma(shape_b[k]);
            }
        }
    }
};

}  // namespace detail

// Precomputed per-dataset constants plus the evaluation passes used by the
// EM machinery. Columns of all flattened buffers: 0 = zero component,
// 1..K+1 = beta components.
class LikelihoodEvaluator {
public:
    LikelihoodEvaluator(const Dataset& data, MixtureConfig config, QuadratureRule rule)
        : data_(&data), config_(config), rule_(std::move(rule)) {
        validate(data);
        const std::size_t n = data.n();
        log_m_.resize(n);
        log_1m_m_.resize(n);
        trunc_.resize(n);
        log_trunc_.resize(n);
        xid_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& r = data.records[i];
            if (r.observed_positive()) {
                log_m_[i] = std::log(r.m_obs);
                log_1m_m_[i] = std::log1p(-r.m_obs);
            } else {
                trunc_[i] = detail::truncation_limit(r.lib_size);
                log_trunc_[i] = std::log(trunc_[i]);
            }
            double x = r.x;
            std::size_t j = 0;
            for (; j < distinct_x_.size(); ++j)
                if (distinct_x_[j] == x) break;
            if (j == distinct_x_.size()) distinct_x_.push_back(x);
            xid_[i] = j;
        }
    }

    std::size_t n_columns() const { return config_.n_components() + 1; }
    const Dataset& data() const { return *data_; }
    const MixtureConfig& config() const { return config_; }
    const QuadratureRule& rule() const { return rule_; }

    struct ComponentTerms {
        std::vector<double> log_prior;  // n x (K+2), ln Psi_ik; -inf where invalid
        std::vector<double> log_lik;    // n x (K+2), ell_ik; -inf where invalid
    };

    // One pass over the data: ln Psi_ik and ell_ik for every subject/component.
    void evaluate_terms(const ParameterVector& p, ComponentTerms& out) const {
        validate(p, config_);
        const std::size_t n = data_->n();
        const std::size_t cols = n_columns();
        const std::size_t kc = config_.n_components();
        out.log_prior.assign(n * cols, kNegInf);
        out.log_lik.assign(n * cols, kNegInf);

        thread_local std::vector<detail::LinkCache> caches;
        build_caches(p, false, caches);
        std::vector<double> log_psi(kc);
        for (std::size_t k = 0; k < kc; ++k) log_psi[k] = std::log(p.psi_tilde(k));

        for (std::size_t i = 0; i < n; ++i) {
            const auto& rec = data_->records[i];
            const auto& lc = caches[xid_[i]];
            double* prior = &out.log_prior[i * cols];
            double* lik = &out.log_lik[i * cols];
            if (rec.observed_positive()) {
                const double resid = detail::group1_residual(p.beta, rec.y, rec.m_obs, rec.x);
                const double normal_part = detail::normal_logpdf_term(resid, p.delta_sd);
                for (std::size_t k = 0; k < kc; ++k) {
                    prior[k + 1] = lc.log_1m_delta + log_psi[k];
                    lik[k + 1] = normal_part +
                                 (lc.shape_a[k] - 1.0) * log_m_[i] +
                                 (lc.shape_b[k] - 1.0) * log_1m_m_[i] - lc.log_beta_ab[k];
                }
            } else {
                prior[0] = lc.log_delta;
                const double resid0 = rec.y - p.beta[0] - p.beta[3] * rec.x;
                lik[0] = detail::normal_logpdf_term(resid0, p.delta_sd);
                const double pref = -0.5 * kLnTwoPi - std::log(p.delta_sd);
                for (std::size_t k = 0; k < kc; ++k) {
                    prior[k + 1] = lc.log_1m_delta + log_psi[k];
                    const double lnJ = detail::log_false_zero_integral(
                        rec.y, rec.x, trunc_[i], log_trunc_[i], lc.shape_a[k], lc.shape_b[k],
                        lc.log_beta_ab[k], p.beta, p.delta_sd, rule_.nodes.size());
                    lik[k + 1] = lnJ == kNegInf ? kNegInf : pref + lnJ;
                }
            }
        }
    }

    // Observed-data log-likelihood: per-subject lse over components, then a
    // fixed pairwise summation so the value is independent of evaluation order.
    double observed_loglik(const ParameterVector& p) const {
        thread_local ComponentTerms terms;
        evaluate_terms(p, terms);
        const std::size_t n = data_->n();
        const std::size_t cols = n_columns();
        std::vector<double> per_subject(n);
        std::vector<double> row(cols);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < cols; ++c)
                row[c] = terms.log_prior[i * cols + c] + terms.log_lik[i * cols + c];
            per_subject[i] = log_sum_exp(row);
        }
        return pairwise_sum(per_subject);
    }

    // Q(theta | responsibilities) and, optionally, its gradient w.r.t. the raw
    // parameters (layout matching Reparam::chain_to_free). tau is n x (K+2).
    double q_and_raw_gradient(const ParameterVector& p, std::span<const double> tau,
                              std::vector<double>* raw_grad) const {
        validate(p, config_);
        const std::size_t n = data_->n();
        const std::size_t cols = n_columns();
        const std::size_t kc = config_.n_components();
        if (tau.size() != n * cols)
            throw std::invalid_argument("q_and_raw_gradient: responsibilities shape mismatch");

        thread_local std::vector<detail::LinkCache> caches;
        build_caches(p, raw_grad != nullptr, caches);
        std::vector<double> log_psi(kc);
        for (std::size_t k = 0; k < kc; ++k) log_psi[k] = std::log(p.psi_tilde(k));

        const double delta_sd = p.delta_sd;
        const double inv_d2 = 1.0 / (delta_sd * delta_sd);
        const double digamma_phi = raw_grad ? digamma(p.phi) : 0.0;

        // raw layout: beta6, delta, gamma2, phi, alpha0[kc], alpha1[kc], psi_tilde[kc]
        std::vector<double> g;
        if (raw_grad) g.assign(10 + 3 * kc, 0.0);

        std::vector<double> per_subject(n, 0.0);
        detail::FalseZeroMoments mo;

        for (std::size_t i = 0; i < n; ++i) {
            const auto& rec = data_->records[i];
            const auto& lc = caches[xid_[i]];
            const double x = rec.x;
            const double* trow = &tau[i * cols];
            double qi = 0.0;

            if (rec.observed_positive()) {
                const double resid = detail::group1_residual(p.beta, rec.y, rec.m_obs, x);
                const double normal_part = detail::normal_logpdf_term(resid, delta_sd);
                double tsum = 0.0;
                for (std::size_t k = 0; k < kc; ++k) {
                    const double w = trow[k + 1];
                    if (w <= 0.0) continue;
                    tsum += w;
                    qi += w * (lc.log_1m_delta + log_psi[k] + normal_part +
                               (lc.shape_a[k] - 1.0) * log_m_[i] +
                               (lc.shape_b[k] - 1.0) * log_1m_m_[i] - lc.log_beta_ab[k]);
                    if (raw_grad) {
                        kernel_gradient(g, lc, k, w, log_m_[i], log_1m_m_[i], x, p.phi, digamma_phi);
                        g[10 + 2 * kc + k] += w / p.psi_tilde(k);
                    }
                }
                if (raw_grad && tsum > 0.0) {
                    const double s = resid * inv_d2;
                    g[0] += tsum * s;
                    g[1] += tsum * s * rec.m_obs;
                    g[2] += tsum * s;
                    g[3] += tsum * s * x;
                    g[4] += tsum * s * x;
                    g[5] += tsum * s * x * rec.m_obs;
                    g[6] += tsum * (-1.0 / delta_sd + resid * resid * inv_d2 / delta_sd);
                    g[7] += tsum * (-lc.delta);
                    g[8] += tsum * (-lc.delta) * x;
                }
            } else {
                const double w0 = trow[0];
                if (w0 > 0.0) {
                    const double resid0 = rec.y - p.beta[0] - p.beta[3] * x;
                    qi += w0 * (lc.log_delta + detail::normal_logpdf_term(resid0, delta_sd));
                    if (raw_grad) {
                        const double s = resid0 * inv_d2;
                        g[0] += w0 * s;
                        g[3] += w0 * s * x;
                        g[6] += w0 * (-1.0 / delta_sd + resid0 * resid0 * inv_d2 / delta_sd);
                        g[7] += w0 * (1.0 - lc.delta);
                        g[8] += w0 * (1.0 - lc.delta) * x;
                    }
                }
                const double pref = -0.5 * kLnTwoPi - std::log(delta_sd);
                for (std::size_t k = 0; k < kc; ++k) {
                    const double w = trow[k + 1];
                    if (w <= 0.0) continue;
                    const double lnJ = detail::log_false_zero_integral(
                        rec.y, x, trunc_[i], log_trunc_[i], lc.shape_a[k], lc.shape_b[k],
                        lc.log_beta_ab[k], p.beta, delta_sd, rule_.nodes.size(),
                        raw_grad ? &mo : nullptr);
                    qi += w * (lc.log_1m_delta + log_psi[k] + pref + lnJ);
                    if (raw_grad && lnJ != kNegInf) {
                        const double s = mo.e_resid * inv_d2;
                        g[0] += w * s;
                        g[1] += w * mo.e_resid_m * inv_d2;
                        g[2] += w * s;
                        g[3] += w * s * x;
                        g[4] += w * s * x;
                        g[5] += w * mo.e_resid_m * inv_d2 * x;
                        g[6] += w * (-1.0 / delta_sd + mo.e_resid_sq * inv_d2 / delta_sd);
                        g[7] += w * (-lc.delta);
                        g[8] += w * (-lc.delta) * x;
                        kernel_gradient(g, lc, k, w, mo.e_log_m, mo.e_log_1m, x, p.phi, digamma_phi);
                        g[10 + 2 * kc + k] += w / p.psi_tilde(k);
                    }
                }
            }
            per_subject[i] = qi;
        }
        if (raw_grad) *raw_grad = std::move(g);
        return pairwise_sum(per_subject);
    }

private:
    void build_caches(const ParameterVector& p, bool need_digamma,
                      std::vector<detail::LinkCache>& caches) const {
        caches.resize(distinct_x_.size());
        for (std::size_t j = 0; j < distinct_x_.size(); ++j)
            caches[j].build(p, config_, distinct_x_[j], need_digamma);
    }

    // d/d(alpha, phi) of the beta-kernel terms; e_log_m/e_log_1m are exact
    // logs for group 1 and node expectations for group 2.
    void kernel_gradient(std::vector<double>& g, const detail::LinkCache& lc, std::size_t k,
                         double w, double e_log_m, double e_log_1m, double x, double phi,
                         double digamma_phi) const {
        const std::size_t kc = config_.n_components();
        const double mu = lc.mu[k];
        const double dmu = phi * (e_log_m - e_log_1m - lc.digamma_a[k] + lc.digamma_b[k]);
        const double link = mu * (1.0 - mu);
        g[10 + k] += w * dmu * link;
        g[10 + kc + k] += w * dmu * link * x;
        g[9] += w * (mu * e_log_m + (1.0 - mu) * e_log_1m - mu * lc.digamma_a[k] -
                     (1.0 - mu) * lc.digamma_b[k] + digamma_phi);
    }

    const Dataset* data_;
    MixtureConfig config_;
    QuadratureRule rule_;
    std::vector<double> log_m_, log_1m_m_, trunc_, log_trunc_;
    std::vector<std::size_t> xid_;
    std::vector<double> distinct_x_;
};

// Convenience wrapper matching the one-shot call signature.
inline double observed_loglik(const Dataset& data, const ParameterVector& p,
                              const MixtureConfig& config, const QuadratureRule& rule) {
    return LikelihoodEvaluator(data, config, rule).observed_loglik(p);
}

}  // namespace zibmed

#endif  // ZIBMED_LIKELIHOOD_HPP
