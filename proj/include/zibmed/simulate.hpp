#ifndef ZIBMED_SIMULATE_HPP
#define ZIBMED_SIMULATE_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "zibmed/core.hpp"
#include "zibmed/effects.hpp"
#include "zibmed/rng.hpp"

namespace zibmed {

// log-uniform integer library sizes on [range_lo, range_hi]
inline std::vector<std::uint64_t> sample_library_sizes(std::size_t n, std::uint64_t range_lo,
                                                       std::uint64_t range_hi, std::uint64_t seed) {
    if (range_lo < 1 || range_lo > range_hi)
        throw std::invalid_argument("sample_library_sizes: need 1 <= lo <= hi");
    Rng rng(seed);
    const double llo = std::log(static_cast<double>(range_lo));
    const double lhi = std::log(static_cast<double>(range_hi));
    std::vector<std::uint64_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = std::exp(rng.uniform(llo, lhi));
        auto l = static_cast<std::uint64_t>(std::llround(v));
        out[i] = std::min(std::max(l, range_lo), range_hi);
    }
    return out;
}

inline constexpr std::uint64_t kDefaultLibLo = 31607;
inline constexpr std::uint64_t kDefaultLibHi = 911652;

struct SettingISpec {
    std::size_t n = 300;
    MixtureConfig config;
    ParameterVector truth;
    std::vector<std::uint64_t> library_sizes;  // sampled from uniformly per subject
    std::uint64_t seed = 0;
    EffectContrast contrast{0.0, 1.0};
};

struct SimulatedDataset {
    Dataset dataset;
    EffectPoints truth_effects;
    std::vector<char> true_zero_mask;   // biologically absent
    std::vector<char> false_zero_mask;  // positive latent abundance censored by the LOD
    std::vector<double> latent_m;       // true mediator values

    double zero_fraction() const {
        double z = 0.0;
        for (const auto& r : dataset.records) z += r.observed_positive() ? 0.0 : 1.0;
        return z / static_cast<double>(dataset.n());
    }
    double false_zero_share() const {
        double z = 0.0, f = 0.0;
        for (std::size_t i = 0; i < dataset.n(); ++i) {
            if (dataset.records[i].observed_positive()) continue;
            z += 1.0;
            f += false_zero_mask[i] ? 1.0 : 0.0;
        }
        return z > 0.0 ? f / z : 0.0;
    }
};

// Draw order per subject: x, true-zero flag, [component, beta draw],
// library size, outcome noise. The outcome uses the latent mediator and its
// indicator: the structural model is in the true abundance, and the fitted
// likelihood accounts for the observation process through the LOD integral.
inline SimulatedDataset generate_setting1(const SettingISpec& spec) {
    validate(spec.truth, spec.config);
    if (spec.n == 0) throw std::invalid_argument("generate_setting1: n must be >= 1");
    if (spec.library_sizes.empty())
        throw std::invalid_argument("generate_setting1: library_sizes must be non-empty");
    Rng rng(spec.seed);
    const auto& p = spec.truth;
    const std::size_t kc = spec.config.n_components();

    std::vector<double> weights(kc);
    for (std::size_t k = 0; k < kc; ++k) weights[k] = p.psi_tilde(k);

    SimulatedDataset out;
    out.dataset.records.resize(spec.n);
    out.true_zero_mask.assign(spec.n, 0);
    out.false_zero_mask.assign(spec.n, 0);
    out.latent_m.assign(spec.n, 0.0);

    for (std::size_t i = 0; i < spec.n; ++i) {
        auto& rec = out.dataset.records[i];
        rec.x = rng.bernoulli(0.5) ? 1.0 : 0.0;
        double m = 0.0;
        if (rng.bernoulli(zero_probability(p, rec.x))) {
            out.true_zero_mask[i] = 1;
        } else {
            const std::size_t k = rng.categorical(weights);
            const double mu = component_mean(p, k, rec.x);
            m = rng.beta(mu * p.phi, (1.0 - mu) * p.phi);
            m = std::min(m, 1.0 - 1e-12);
        }
        rec.lib_size = spec.library_sizes[rng.uniform_int(0, spec.library_sizes.size() - 1)];
        rec.m_obs = m > 0.0 ? lod_observed(m, rec.lib_size) : 0.0;
        if (m > 0.0 && rec.m_obs == 0.0) out.false_zero_mask[i] = 1;
        out.latent_m[i] = m;
        const double ind = m > 0.0 ? 1.0 : 0.0;
        rec.y = p.beta[0] + p.beta[1] * m + p.beta[2] * ind + p.beta[3] * rec.x +
                p.beta[4] * rec.x * ind + p.beta[5] * rec.x * m + p.delta_sd * rng.normal();
    }
    out.truth_effects = compute_effects(p, spec.config, spec.contrast);
    return out;
}

// Zero-probability recipe for the background taxa of Setting II.
enum class OtherTaxaZeroMode {
    unif_1_2,   // gamma0 ~ Unif(1,2) per replicate (appendix recipe)
    fifty_pct,  // gamma0 = 0, targeting ~50% zeros
};

struct SettingIISpec {
    std::size_t n = 200;
    std::size_t n_taxa = 10;  // Q+1 taxa in total
    std::array<double, 2> mixture_weights{0.3, 0.7};
    std::array<double, 6> outcome_beta{4.0, 100.0, 2.0, 1.0, 1.0, 1.0};
    double outcome_delta = 1.0;
    // zero-model link of the X-associated zero-inflated taxon (taxon 2),
    // one (gamma0, gamma1) branch per mixture component
    std::array<std::array<double, 2>, 2> taxon2_gamma{{{0.0, -3.0}, {0.0, -3.0}}};
    std::array<double, 2> alpha_link{-2.0, 5.0};  // splits the taxon-1/2 budget by exposure
    double phi = 10.0;
    std::vector<std::uint64_t> library_sizes;
    std::uint64_t seed = 0;
    OtherTaxaZeroMode other_zero_mode = OtherTaxaZeroMode::unif_1_2;
    double false_zero_target = 0.20;  // taxon-2 false-zero rate the alpha0_1 search aims for
    double false_zero_tolerance = 0.01;
    EffectContrast contrast{0.0, 1.0};
};

struct SimulatedTaxaData {
    std::vector<double> y, x;
    std::vector<std::uint64_t> lib_size;
    std::vector<std::vector<double>> abundance;      // n x T observed relative abundances
    std::vector<std::vector<char>> true_zero_mask;   // n x T
    std::vector<std::vector<char>> false_zero_mask;  // n x T
    std::vector<std::vector<double>> latent_ra;      // n x T true relative abundances
    // Truth effects project the structural outcome coefficients through each
    // taxon's exposure links; magnitudes for taxa other than the outcome
    // taxon are labeling quantities (zero iff the taxon has no X-dependence).
    std::vector<EffectPoints> truth_effects;
    double calibrated_alpha01 = 0.0;
    double achieved_false_zero_rate = 0.0;
    bool calibration_ok = true;
    std::vector<double> gamma0_other;  // per-replicate background zero intercepts

    std::size_t n() const { return y.size(); }
    std::size_t n_taxa() const { return abundance.empty() ? 0 : abundance[0].size(); }
};

namespace detail {

struct SettingIIParams {
    std::vector<double> alpha0_pot;  // taxon potentials; index 0 = taxon 1
    std::vector<double> gamma0_other;
};

// mixture-averaged zero probability of taxon 2 at exposure x
inline double taxon2_delta_bar(const SettingIISpec& spec, double x) {
    double d = 0.0;
    for (std::size_t c = 0; c < 2; ++c)
        d += spec.mixture_weights[c] * expit(spec.taxon2_gamma[c][0] + spec.taxon2_gamma[c][1] * x);
    return d;
}

// Taxon-2 false-zero rate under candidate alpha0_1, by analytic censoring
// probability E[(1 - RA)^L] over a pilot sample; the Dirichlet marginal of
// taxon 2 is Beta(phi*mu2, phi*(1-mu2)).
inline double pilot_false_zero_rate(const SettingIISpec& spec, const SettingIIParams& pars,
                                    double alpha01, std::size_t pilot_n, std::uint64_t seed) {
    Rng rng(seed);
    double pot_sum = std::exp(alpha01);
    for (std::size_t q = 1; q < pars.alpha0_pot.size(); ++q) pot_sum += std::exp(pars.alpha0_pot[q]);
    const double w = std::exp(alpha01) / pot_sum;

    double acc = 0.0;
    std::size_t present = 0;
    for (std::size_t i = 0; i < pilot_n; ++i) {
        const double x = rng.bernoulli(0.5) ? 1.0 : 0.0;
        const std::size_t comp = rng.bernoulli(spec.mixture_weights[0]) ? 0 : 1;
        const double delta2 = expit(spec.taxon2_gamma[comp][0] + spec.taxon2_gamma[comp][1] * x);
        if (rng.bernoulli(delta2)) continue;
        ++present;
        const double s = expit(spec.alpha_link[0] + spec.alpha_link[1] * x);
        const double mu2 = std::clamp(w * s, 1e-12, 1.0 - 1e-12);
        const double ra = rng.beta(spec.phi * mu2, spec.phi * (1.0 - mu2));
        const auto L = static_cast<double>(
            spec.library_sizes[rng.uniform_int(0, spec.library_sizes.size() - 1)]);
        acc += std::exp(L * std::log1p(-std::min(ra, 1.0 - 1e-12)));
    }
    return present > 0 ? acc / static_cast<double>(present) : 1.0;
}

}  // namespace detail

// Appendix-style microbiome generator. Per subject: pick the mixture
// component, draw true zeros, allocate Dirichlet means over the present
// taxa (taxa 1 and 2 share a budget split by expit(alpha0 + alpha1 x)),
// draw relative abundances, then counts from a multinomial at the drawn
// library size; count zero for a present taxon is a false zero.
//
// The outcome follows the structural model in TAXON 2's latent abundance:
// taxon 2 is the mediating taxon - the one whose presence (gamma = (0,-3))
// and abundance (the budget split) both respond to the exposure, so its
// zeros are ~35% false, matching the described design. Taxon 1 is its
// never-absent budget partner; background taxa carry no exposure link.
inline SimulatedTaxaData generate_setting2(const SettingIISpec& spec) {
    if (spec.n_taxa < 3) throw std::invalid_argument("generate_setting2: need at least 3 taxa");
    if (spec.n == 0) throw std::invalid_argument("generate_setting2: n must be >= 1");
    if (spec.library_sizes.empty())
        throw std::invalid_argument("generate_setting2: library_sizes must be non-empty");
    if (!(spec.mixture_weights[0] > 0.0 && spec.mixture_weights[1] > 0.0) ||
        std::abs(spec.mixture_weights[0] + spec.mixture_weights[1] - 1.0) > 1e-9)
        throw std::invalid_argument("generate_setting2: mixture weights must be positive and sum to 1");

    const std::size_t T = spec.n_taxa;
    Rng rng(derive_seed(spec.seed, 0x7365743200ULL));

    // replicate-level parameters
    detail::SettingIIParams pars;
    pars.alpha0_pot.assign(T, 0.0);
    for (std::size_t q = 1; q < T; ++q) pars.alpha0_pot[q] = rng.uniform(0.0, 1.0);
    pars.gamma0_other.assign(T, 0.0);
    for (std::size_t q = 2; q < T; ++q)
        pars.gamma0_other[q] =
            spec.other_zero_mode == OtherTaxaZeroMode::unif_1_2 ? rng.uniform(1.0, 2.0) : 0.0;

    // bisection for alpha0_1 against the taxon-2 false-zero target, with
    // common random numbers across candidates
    const std::uint64_t pilot_seed = derive_seed(spec.seed, 0x70696c6f74ULL);
    double lo = -12.0, hi = 12.0;
    auto rate_at = [&](double a) {
        return detail::pilot_false_zero_rate(spec, pars, a, 2000, pilot_seed);
    };
    double alpha01 = 0.0, achieved = rate_at(0.0);
    if (std::abs(achieved - spec.false_zero_target) > spec.false_zero_tolerance) {
        // rate decreases in alpha0_1
        for (int iter = 0; iter < 60; ++iter) {
            alpha01 = 0.5 * (lo + hi);
            achieved = rate_at(alpha01);
            if (std::abs(achieved - spec.false_zero_target) <= spec.false_zero_tolerance) break;
            (achieved > spec.false_zero_target ? lo : hi) = alpha01;
            if (hi - lo < 1e-9) break;
        }
    }

    SimulatedTaxaData out;
    out.calibrated_alpha01 = alpha01;
    out.achieved_false_zero_rate = achieved;
    out.calibration_ok = std::abs(achieved - spec.false_zero_target) <= spec.false_zero_tolerance;
    out.gamma0_other = pars.gamma0_other;

    double pot_sum = std::exp(alpha01);
    for (std::size_t q = 1; q < T; ++q) pot_sum += std::exp(pars.alpha0_pot[q]);
    const double budget = std::exp(alpha01) / pot_sum;  // taxon-1/2 share of the composition

    out.y.resize(spec.n);
    out.x.resize(spec.n);
    out.lib_size.resize(spec.n);
    out.abundance.assign(spec.n, std::vector<double>(T, 0.0));
    out.true_zero_mask.assign(spec.n, std::vector<char>(T, 0));
    out.false_zero_mask.assign(spec.n, std::vector<char>(T, 0));
    out.latent_ra.assign(spec.n, std::vector<double>(T, 0.0));

    std::vector<std::size_t> present;
    std::vector<double> mu, ra;
    std::vector<double> counts;
    for (std::size_t i = 0; i < spec.n; ++i) {
        const double x = rng.bernoulli(0.5) ? 1.0 : 0.0;
        out.x[i] = x;
        const std::size_t comp = rng.bernoulli(spec.mixture_weights[0]) ? 0 : 1;

        // Step 2: true zeros; taxon 1 never absent
        present.clear();
        present.push_back(0);
        const double delta2 = expit(spec.taxon2_gamma[comp][0] + spec.taxon2_gamma[comp][1] * x);
        const bool t2_present = !rng.bernoulli(delta2);
        if (t2_present) present.push_back(1);
        out.true_zero_mask[i][1] = t2_present ? 0 : 1;
        for (std::size_t q = 2; q < T; ++q) {
            if (rng.bernoulli(expit(pars.gamma0_other[q])))
                out.true_zero_mask[i][q] = 1;
            else
                present.push_back(q);
        }

        // Step 3: Dirichlet means; taxa 1 and 2 split `budget` by exposure
        const double s = expit(spec.alpha_link[0] + spec.alpha_link[1] * x);
        mu.assign(present.size(), 0.0);
        double other_pot = 0.0;
        for (std::size_t j = 0; j < present.size(); ++j)
            if (present[j] >= 2) other_pot += std::exp(pars.alpha0_pot[present[j]]);
        for (std::size_t j = 0; j < present.size(); ++j) {
            const std::size_t q = present[j];
            if (q == 0)
                mu[j] = t2_present ? budget * (1.0 - s) : budget;
            else if (q == 1)
                mu[j] = budget * s;
            else
                mu[j] = (1.0 - budget) * std::exp(pars.alpha0_pot[q]) / other_pot;
        }
        // compositional closure: when no background taxon is present the
        // branch formulas leave the (1 - budget) mass unallocated
        {
            double mu_sum = 0.0;
            for (double v : mu) mu_sum += v;
            for (double& v : mu) v /= mu_sum;
            mu_sum = 0.0;
            for (double v : mu) mu_sum += v;
            if (std::abs(mu_sum - 1.0) > 1e-12)
                throw std::logic_error("generate_setting2: Dirichlet means do not sum to 1");
        }

        // Dirichlet via normalized gammas
        ra.assign(present.size(), 0.0);
        double gsum = 0.0;
        for (std::size_t j = 0; j < present.size(); ++j) {
            ra[j] = rng.gamma(std::max(spec.phi * mu[j], 1e-12));
            gsum += ra[j];
        }
        for (double& v : ra) v /= gsum;

        // Steps 4-5: multinomial counts at the drawn library size
        const std::uint64_t L =
            spec.library_sizes[rng.uniform_int(0, spec.library_sizes.size() - 1)];
        out.lib_size[i] = L;
        counts.assign(present.size(), 0.0);
        {
            AliasTable alias(ra);
            for (std::uint64_t r = 0; r < L; ++r) counts[alias.draw(rng)] += 1.0;
        }
        for (std::size_t j = 0; j < present.size(); ++j) {
            const std::size_t q = present[j];
            out.latent_ra[i][q] = ra[j];
            // a taxon capturing every read is indistinguishable from RA just
            // below 1 with the rest censored; cap one read off to keep the
            // observed composition inside [0,1)
            const double cnt = std::min(counts[j], static_cast<double>(L) - 1.0);
            out.abundance[i][q] = cnt / static_cast<double>(L);
            if (counts[j] == 0.0) out.false_zero_mask[i][q] = 1;
        }

        // outcome from the mediating taxon's latent abundance and presence
        const double m2 = out.latent_ra[i][1];
        const double ind = m2 > 0.0 ? 1.0 : 0.0;
        const auto& b = spec.outcome_beta;
        out.y[i] = b[0] + b[1] * m2 + b[2] * ind + b[3] * x + b[4] * x * ind + b[5] * x * m2 +
                   spec.outcome_delta * rng.normal();
    }

    // truth effects per taxon via the generator's exposure links
    out.truth_effects.assign(T, EffectPoints{});
    const double x1 = spec.contrast.x1, x2 = spec.contrast.x2;
    const double d2_x1 = detail::taxon2_delta_bar(spec, x1);
    const double d2_x2 = detail::taxon2_delta_bar(spec, x2);
    auto mean_t1 = [&](double x) {
        const double s = expit(spec.alpha_link[0] + spec.alpha_link[1] * x);
        const double d2 = detail::taxon2_delta_bar(spec, x);
        return budget * (d2 + (1.0 - d2) * (1.0 - s));
    };
    auto mean_t2 = [&](double x) {
        const double s = expit(spec.alpha_link[0] + spec.alpha_link[1] * x);
        return budget * (1.0 - detail::taxon2_delta_bar(spec, x)) * s;
    };
    const auto& b = spec.outcome_beta;
    {
        // taxon 2 carries the structural mediation: both its abundance and
        // its presence respond to the exposure
        EffectPoints& e = out.truth_effects[1];
        e.nie1 = (b[1] + b[5] * x2) * (mean_t2(x2) - mean_t2(x1));
        e.nie2 = (b[2] + b[4] * x2) * (d2_x1 - d2_x2);
        e.nie = e.nie1 + e.nie2;
        e.nde = (x2 - x1) * (b[3] + b[4] * (1.0 - d2_x1) + b[5] * mean_t2(x1));
    }
    {
        // taxon 1's abundance co-moves with the exposure through the shared
        // budget, so its marginal abundance-path effect is nonzero; it is
        // never structurally absent, so the presence path is exactly zero.
        // The magnitude projects the structural slopes for labeling.
        EffectPoints& e = out.truth_effects[0];
        e.nie1 = (b[1] + b[5] * x2) * (mean_t1(x2) - mean_t1(x1));
        e.nie2 = 0.0;
        e.nie = e.nie1;
        e.nde = (x2 - x1) * (b[3] + b[4] + b[5] * mean_t1(x1));
    }
    // background taxa have no exposure dependence: all effects zero
    return out;
}

}  // namespace zibmed

#endif  // ZIBMED_SIMULATE_HPP
