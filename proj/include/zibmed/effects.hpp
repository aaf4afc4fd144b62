#ifndef ZIBMED_EFFECTS_HPP
#define ZIBMED_EFFECTS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "zibmed/core.hpp"
#include "zibmed/em.hpp"
#include "zibmed/math.hpp"
#include "zibmed/parallel.hpp"
#include "zibmed/rng.hpp"

namespace zibmed {

// E[M_x] = (1 - Delta_x) * sum_k psi_k * mu_k(x)
inline double mean_abundance(const ParameterVector& p, const MixtureConfig& config, double x) {
    double mix = 0.0;
    for (std::size_t k = 0; k < config.n_components(); ++k)
        mix += p.psi_tilde(k) * component_mean(p, k, x);
    return (1.0 - zero_probability(p, x)) * mix;
}

struct EffectPoints {
    double nie1 = 0.0;
    double nie2 = 0.0;
    double nie = 0.0;
    double nde = 0.0;
    bool nie2_structural_zero = false;  // zero-model dropped: presence path undefined
};

// NIE1: abundance-scale path. NIE2: presence/absence path. NDE expands
// E[Y_{x2 M_{x1}} - Y_{x1 M_{x1}}] under the outcome model to
// (x2 - x1) * (beta3 + beta4 * (1 - Delta_{x1}) + beta5 * E[M_{x1}]):
// the beta3 term is the bare exposure path, beta4 rides on the probability
// that the mediator is present at x1, and beta5 on its mean at x1.
inline EffectPoints compute_effects(const ParameterVector& p, const MixtureConfig& config,
                                    const EffectContrast& contrast) {
    validate(p, config);
    validate(contrast);
    EffectPoints e;
    const double em1 = mean_abundance(p, config, contrast.x1);
    const double em2 = mean_abundance(p, config, contrast.x2);
    const double d1 = zero_probability(p, contrast.x1);
    const double d2 = zero_probability(p, contrast.x2);
    e.nie1 = (p.beta[1] + p.beta[5] * contrast.x2) * (em2 - em1);
    e.nie2 = (p.beta[2] + p.beta[4] * contrast.x2) * (d1 - d2);
    e.nie = e.nie1 + e.nie2;
    e.nde = (contrast.x2 - contrast.x1) * (p.beta[3] + p.beta[4] * (1.0 - d1) + p.beta[5] * em1);
    e.nie2_structural_zero = p.zero_model_dropped();
    return e;
}

struct EffectInterval {
    double estimate = 0.0;
    double std_error = std::numeric_limits<double>::quiet_NaN();
    double ci_lo = std::numeric_limits<double>::quiet_NaN();
    double ci_hi = std::numeric_limits<double>::quiet_NaN();
    double p_value = std::numeric_limits<double>::quiet_NaN();
    bool se_defined = false;
};

enum class CiMethod { delta, bootstrap };

struct EffectEstimates {
    EffectInterval nie1, nie2, nie, nde;
    EffectContrast contrast;
    double ci_level = 0.95;
    CiMethod method = CiMethod::delta;
    bool nie2_structural_zero = false;
    std::string diagnostics;
    // bootstrap bookkeeping
    std::size_t n_boot = 0;
    std::size_t n_boot_failures = 0;
    bool bootstrap_valid = true;
};

namespace detail {

inline double wald_p(double estimate, double se) {
    if (!(se > 0.0)) return estimate == 0.0 ? 1.0 : std::numeric_limits<double>::quiet_NaN();
    const double z = std::abs(estimate / se);
    return 2.0 * (1.0 - normal_cdf(z));
}

}  // namespace detail

// Delta-method intervals: effect gradients by central differences on the
// free scale against the fit's information matrix.
inline EffectEstimates delta_method_ci(const FitResult& fit, const MixtureConfig& config,
                                       const EffectContrast& contrast, double level = 0.95) {
    validate(contrast);
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("delta_method_ci: bad level");
    EffectEstimates out;
    out.contrast = contrast;
    out.ci_level = level;
    out.method = CiMethod::delta;

    const EffectPoints pt = compute_effects(fit.params_hat, config, contrast);
    out.nie2_structural_zero = pt.nie2_structural_zero;
    out.nie1.estimate = pt.nie1;
    out.nie2.estimate = pt.nie2;
    out.nie.estimate = pt.nie;
    out.nde.estimate = pt.nde;

    if (!fit.se_defined) {
        out.diagnostics = fit.se_diagnostics.empty()
                              ? "no information matrix available"
                              : fit.se_diagnostics;
        return out;
    }

    Reparam rep{config, !fit.params_hat.zero_model_dropped()};
    const std::vector<double> theta = rep.to_free(fit.params_hat);
    const std::size_t d = theta.size();

    auto effects_at = [&](const std::vector<double>& v) {
        return compute_effects(rep.from_free(v), config, contrast);
    };
    Eigen::MatrixXd grads(static_cast<Eigen::Index>(d), 4);
    std::vector<double> v = theta;
    for (std::size_t j = 0; j < d; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
        v[j] = theta[j] + h;
        const EffectPoints ep = effects_at(v);
        v[j] = theta[j] - h;
        const EffectPoints em = effects_at(v);
        v[j] = theta[j];
        grads(static_cast<Eigen::Index>(j), 0) = (ep.nie1 - em.nie1) / (2.0 * h);
        grads(static_cast<Eigen::Index>(j), 1) = (ep.nie2 - em.nie2) / (2.0 * h);
        grads(static_cast<Eigen::Index>(j), 2) = (ep.nie - em.nie) / (2.0 * h);
        grads(static_cast<Eigen::Index>(j), 3) = (ep.nde - em.nde) / (2.0 * h);
    }

    const double z = normal_quantile(0.5 + level / 2.0);
    EffectInterval* slots[4] = {&out.nie1, &out.nie2, &out.nie, &out.nde};
    for (int c = 0; c < 4; ++c) {
        const Eigen::VectorXd g = grads.col(c);
        EffectInterval& ei = *slots[c];
        // an effect whose gradient leans into a flat information direction
        // is not an estimable functional; its interval stays undefined
        if (fit.info_nullity > 0 && g.squaredNorm() > 0.0 &&
            (fit.null_projector * g).squaredNorm() > 1e-12 * g.squaredNorm()) {
            out.diagnostics = fit.se_diagnostics;
            continue;
        }
        const double var = std::max(0.0, g.dot(fit.cov_free * g));
        ei.std_error = std::sqrt(var);
        ei.se_defined = true;
        ei.ci_lo = ei.estimate - z * ei.std_error;
        ei.ci_hi = ei.estimate + z * ei.std_error;
        if (c < 3) ei.p_value = detail::wald_p(ei.estimate, ei.std_error);
    }
    return out;
}

namespace detail {

inline double percentile(std::vector<double> sorted, double q) {
    // already sorted; linear interpolation between order statistics
    const std::size_t n = sorted.size();
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    const double pos = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace detail

// Nonparametric case-resampling bootstrap; replicates refit with a single
// restart warm-started at the full-data MLE. Replicates whose refit fails
// or does not converge are dropped and counted.
inline EffectEstimates bootstrap_ci(const Dataset& data, const MixtureConfig& config,
                                    const EmOptions& options, const EffectContrast& contrast,
                                    double level, std::size_t n_boot,
                                    std::size_t n_threads = 1,
                                    const FitResult* full_fit = nullptr) {
    if (n_boot < 100) throw std::invalid_argument("bootstrap_ci: n_boot must be >= 100");
    validate(contrast);

    FitResult base;
    if (full_fit) {
        base = *full_fit;
    } else {
        EmOptions full_opts = options;
        base = em_fit(data, config, full_opts);
    }

    EffectEstimates out;
    out.contrast = contrast;
    out.ci_level = level;
    out.method = CiMethod::bootstrap;
    out.n_boot = n_boot;

    const EffectPoints pt = compute_effects(base.params_hat, config, contrast);
    out.nie2_structural_zero = pt.nie2_structural_zero;
    out.nie1.estimate = pt.nie1;
    out.nie2.estimate = pt.nie2;
    out.nie.estimate = pt.nie;
    out.nde.estimate = pt.nde;

    EmOptions boot_opts = options;
    boot_opts.n_restarts = 1;
    boot_opts.compute_information = false;

    const std::size_t n = data.n();
    std::vector<EffectPoints> draws(n_boot);
    std::vector<char> ok(n_boot, 0);

    parallel_for(n_boot, n_threads, [&](std::size_t b) {
        Rng rng(derive_seed(options.seed, 0x626f6f74ULL + b));
        Dataset resample;
        resample.records.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            resample.records.push_back(data.records[rng.uniform_int(0, n - 1)]);
        if (resample.n_positive() == 0) return;  // unidentifiable draw
        if (base.params_hat.zero_model_dropped() != (resample.n_zero() == 0)) return;
        try {
            const FitResult fit = em_fit_from(resample, config, boot_opts, base.params_hat);
            if (!fit.converged) return;
            draws[b] = compute_effects(fit.params_hat, config, contrast);
            ok[b] = 1;
        } catch (const std::exception&) {
            // dropped and counted below
        }
    });

    std::vector<double> v1, v2, vn, vd;
    for (std::size_t b = 0; b < n_boot; ++b) {
        if (!ok[b]) continue;
        v1.push_back(draws[b].nie1);
        v2.push_back(draws[b].nie2);
        vn.push_back(draws[b].nie);
        vd.push_back(draws[b].nde);
    }
    out.n_boot_failures = n_boot - v1.size();
    out.bootstrap_valid =
        static_cast<double>(out.n_boot_failures) <= 0.2 * static_cast<double>(n_boot);
    if (v1.empty()) {
        out.bootstrap_valid = false;
        out.diagnostics = "every bootstrap replicate failed";
        return out;
    }

    auto fill = [&](EffectInterval& ei, std::vector<double>& vals, bool with_p) {
        double mean = 0.0;
        for (double x : vals) mean += x;
        mean /= static_cast<double>(vals.size());
        double var = 0.0;
        for (double x : vals) var += (x - mean) * (x - mean);
        var = vals.size() > 1 ? var / static_cast<double>(vals.size() - 1) : 0.0;
        ei.std_error = std::sqrt(var);
        ei.se_defined = true;
        std::sort(vals.begin(), vals.end());
        ei.ci_lo = detail::percentile(vals, (1.0 - level) / 2.0);
        ei.ci_hi = detail::percentile(vals, 1.0 - (1.0 - level) / 2.0);
        if (with_p) ei.p_value = detail::wald_p(ei.estimate, ei.std_error);
    };
    fill(out.nie1, v1, true);
    fill(out.nie2, v2, true);
    fill(out.nie, vn, true);
    fill(out.nde, vd, false);
    if (!out.bootstrap_valid)
        out.diagnostics = "more than 20% of bootstrap replicates failed; intervals unreliable";
    return out;
}

}  // namespace zibmed

#endif  // ZIBMED_EFFECTS_HPP
