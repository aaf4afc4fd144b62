#ifndef ZIBMED_CORE_HPP
#define ZIBMED_CORE_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "zibmed/math.hpp"

namespace zibmed {

// One subject: outcome y, observed relative abundance m_obs in [0,1),
// exposure x, and sequencing library size.
struct SubjectRecord {
    double y = 0.0;
    double m_obs = 0.0;
    double x = 0.0;
    std::uint64_t lib_size = 1;

    bool observed_positive() const { return m_obs > 0.0; }
};

struct Dataset {
    std::vector<SubjectRecord> records;

    std::size_t n() const { return records.size(); }

    std::size_t n_positive() const {
        std::size_t c = 0;
        for (const auto& r : records) c += r.observed_positive() ? 1 : 0;
        return c;
    }
    std::size_t n_zero() const { return n() - n_positive(); }
};

inline void validate(const SubjectRecord& r) {
    if (!std::isfinite(r.y)) throw std::invalid_argument("SubjectRecord: non-finite outcome");
    if (!std::isfinite(r.x)) throw std::invalid_argument("SubjectRecord: non-finite exposure");
    if (!(r.m_obs >= 0.0) || r.m_obs >= 1.0)
        throw std::invalid_argument("SubjectRecord: relative abundance must lie in [0,1)");
    if (r.lib_size < 1) throw std::invalid_argument("SubjectRecord: lib_size must be >= 1");
}

inline void validate(const Dataset& data) {
    if (data.records.empty()) throw std::invalid_argument("Dataset: empty");
    for (const auto& r : data.records) validate(r);
}

// K = number of free mixture weights; the model has K+1 beta components.
struct MixtureConfig {
    std::size_t K = 0;

    std::size_t n_components() const { return K + 1; }
};

struct EffectContrast {
    double x1 = 0.0;
    double x2 = 1.0;
};

inline void validate(const EffectContrast& c) {
    if (!(std::isfinite(c.x1) && std::isfinite(c.x2)) || c.x1 == c.x2)
        throw std::invalid_argument("EffectContrast: x1 and x2 must be distinct finite values");
}

// Full parameter vector. delta_sd is the standard deviation of the outcome
// error. gamma[0] == -inf encodes a dropped zero-model (Delta == 0), used
// when the data contain no observed zeros.
struct ParameterVector {
    std::array<double, 6> beta{};
    double delta_sd = 1.0;
    std::array<double, 2> gamma{};
    double phi = 1.0;
    std::vector<double> alpha0;  // K+1
    std::vector<double> alpha1;  // K+1
    std::vector<double> psi;     // K free weights

    bool zero_model_dropped() const { return gamma[0] == kNegInf; }

    double psi_tilde(std::size_t k) const {
        if (k < psi.size()) return psi[k];
        return 1.0 - std::accumulate(psi.begin(), psi.end(), 0.0);
    }
};

inline void validate(const ParameterVector& p, const MixtureConfig& config) {
    const std::size_t kc = config.n_components();
    if (p.alpha0.size() != kc || p.alpha1.size() != kc)
        throw std::invalid_argument("ParameterVector: alpha vectors must have K+1 entries");
    if (p.psi.size() != config.K)
        throw std::invalid_argument("ParameterVector: psi must have K entries");
    if (!(p.phi > 0.0)) throw std::invalid_argument("ParameterVector: phi must be positive");
    if (!(p.delta_sd > 0.0)) throw std::invalid_argument("ParameterVector: delta_sd must be positive");
    double sum = 0.0;
    for (double w : p.psi) {
        if (!(w > 0.0)) throw std::invalid_argument("ParameterVector: psi entries must be positive");
        sum += w;
    }
    if (!(sum < 1.0)) throw std::invalid_argument("ParameterVector: psi must sum to less than 1");
    for (double a : p.beta)
        if (!std::isfinite(a)) throw std::invalid_argument("ParameterVector: non-finite beta");
    // gamma0 = -inf encodes a dropped zero-model, +inf a degenerate
    // always-zero mediator (useful for simulation edge cases)
    if (std::isnan(p.gamma[0]) || !std::isfinite(p.gamma[1]))
        throw std::invalid_argument("ParameterVector: bad gamma");
    for (std::size_t k = 0; k < kc; ++k)
        if (!std::isfinite(p.alpha0[k]) || !std::isfinite(p.alpha1[k]))
            throw std::invalid_argument("ParameterVector: non-finite alpha");
}

// inverse logit, stable for |t| well past 700
inline double expit(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

inline double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("logit: argument outside (0,1)");
    return std::log(p) - std::log1p(-p);
}

// component mean and zero probability under the logit links
inline double component_mean(const ParameterVector& p, std::size_t k, double x) {
    return expit(p.alpha0[k] + p.alpha1[k] * x);
}

inline double zero_probability(const ParameterVector& p, double x) {
    if (p.zero_model_dropped()) return 0.0;
    return expit(p.gamma[0] + p.gamma[1] * x);
}

// log Beta(m | mu, phi) with shapes (mu*phi, (1-mu)*phi)
inline double beta_log_pdf(double m, double mu, double phi) {
    if (!(m > 0.0 && m < 1.0)) throw std::domain_error("beta_log_pdf: m outside (0,1)");
    if (!(mu > 0.0 && mu < 1.0)) throw std::domain_error("beta_log_pdf: mu outside (0,1)");
    if (!(phi > 0.0)) throw std::domain_error("beta_log_pdf: phi must be positive");
    const double a = mu * phi;
    const double b = (1.0 - mu) * phi;
    return (a - 1.0) * std::log(m) + (b - 1.0) * std::log1p(-m) - log_beta(a, b);
}

// Two-part ZIBM density: point mass Delta at zero, (1-Delta) times the
// beta mixture on (0,1).
inline double zibm_density(double m, const ParameterVector& p, const MixtureConfig& config, double x) {
    validate(p, config);
    if (!(m >= 0.0 && m < 1.0)) throw std::domain_error("zibm_density: m outside [0,1)");
    const double delta = zero_probability(p, x);
    if (m == 0.0) return delta;
    double mix = 0.0;
    for (std::size_t k = 0; k < config.n_components(); ++k)
        mix += p.psi_tilde(k) * std::exp(beta_log_pdf(m, component_mean(p, k, x), p.phi));
    return (1.0 - delta) * mix;
}

// LOD mechanism: sample absolute abundance below one read is recorded as zero.
inline double lod_observed(double m_true, std::uint64_t lib_size) {
    if (!(m_true >= 0.0 && m_true < 1.0)) throw std::domain_error("lod_observed: m outside [0,1)");
    if (lib_size < 1) throw std::invalid_argument("lod_observed: lib_size must be >= 1");
    return m_true * static_cast<double>(lib_size) < 1.0 ? 0.0 : m_true;
}

// Reorder components so alpha0 is non-increasing (applied at reporting time;
// mixture likelihood is label-invariant).
inline ParameterVector canonicalize(const ParameterVector& p, const MixtureConfig& config) {
    const std::size_t kc = config.n_components();
    std::vector<std::size_t> order(kc);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p.alpha0[a] > p.alpha0[b]; });
    ParameterVector out = p;
    for (std::size_t k = 0; k < kc; ++k) {
        out.alpha0[k] = p.alpha0[order[k]];
        out.alpha1[k] = p.alpha1[order[k]];
    }
    out.psi.resize(config.K);
    for (std::size_t k = 0; k < config.K; ++k) out.psi[k] = p.psi_tilde(order[k]);
    return out;
}

}  // namespace zibmed

#endif  // ZIBMED_CORE_HPP
