#ifndef ZIBMED_REPARAM_HPP
#define ZIBMED_REPARAM_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "zibmed/core.hpp"

namespace zibmed {

// Unconstrained coordinates used by the M-step and all derivative code:
// (beta*, ln delta, [gamma0, gamma1,] ln phi, alpha0*, alpha1*, rho*) with
// rho_k = ln(psi_k / psi_{K+1}). When the zero-model is dropped (zero-free
// data) the gamma block is absent and beta2/beta4 are pinned at 0: with the
// presence indicator identically 1 they are not separately identifiable.
//
// Optimization runs inside a box (see bounds): probability-scale intercepts
// past expit(+-8) and mixture weights below e^-8 are indistinguishable from
// the boundary at realistic n, and letting them run off the ridge leaves a
// singular information matrix.
struct Reparam {
    MixtureConfig config;
    bool has_zero_model = true;

    std::size_t n_beta() const { return has_zero_model ? 6 : 4; }
    std::size_t beta_raw_index(std::size_t slot) const {
        static constexpr std::array<std::size_t, 6> full{0, 1, 2, 3, 4, 5};
        static constexpr std::array<std::size_t, 4> reduced{0, 1, 3, 5};
        return has_zero_model ? full[slot] : reduced[slot];
    }

    std::size_t dim() const {
        return n_beta() + 1 + (has_zero_model ? 2 : 0) + 1 + 2 * config.n_components() + config.K;
    }

    std::size_t delta_offset() const { return n_beta(); }
    std::size_t gamma_offset() const { return n_beta() + 1; }
    std::size_t phi_offset() const { return n_beta() + 1 + (has_zero_model ? 2 : 0); }
    std::size_t alpha0_offset() const { return phi_offset() + 1; }
    std::size_t alpha1_offset() const { return alpha0_offset() + config.n_components(); }
    std::size_t rho_offset() const { return alpha1_offset() + config.n_components(); }

    std::vector<double> to_free(const ParameterVector& p) const {
        validate(p, config);
        std::vector<double> v(dim());
        for (std::size_t j = 0; j < n_beta(); ++j) v[j] = p.beta[beta_raw_index(j)];
        v[delta_offset()] = std::log(p.delta_sd);
        if (has_zero_model) {
            v[gamma_offset()] = p.gamma[0];
            v[gamma_offset() + 1] = p.gamma[1];
        }
        v[phi_offset()] = std::log(p.phi);
        const std::size_t kc = config.n_components();
        for (std::size_t k = 0; k < kc; ++k) {
            v[alpha0_offset() + k] = p.alpha0[k];
            v[alpha1_offset() + k] = p.alpha1[k];
        }
        const double last = p.psi_tilde(config.K);
        for (std::size_t k = 0; k < config.K; ++k)
            v[rho_offset() + k] = std::log(p.psi[k]) - std::log(last);
        return v;
    }

    ParameterVector from_free(const std::vector<double>& v) const {
        if (v.size() != dim()) throw std::invalid_argument("Reparam::from_free: wrong length");
        ParameterVector p;
        p.beta = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
        for (std::size_t j = 0; j < n_beta(); ++j) p.beta[beta_raw_index(j)] = v[j];
        p.delta_sd = std::exp(v[delta_offset()]);
        if (has_zero_model) {
            p.gamma[0] = v[gamma_offset()];
            p.gamma[1] = v[gamma_offset() + 1];
        } else {
            p.gamma = {kNegInf, 0.0};
        }
        p.phi = std::exp(v[phi_offset()]);
        const std::size_t kc = config.n_components();
        p.alpha0.assign(v.begin() + static_cast<std::ptrdiff_t>(alpha0_offset()),
                        v.begin() + static_cast<std::ptrdiff_t>(alpha0_offset() + kc));
        p.alpha1.assign(v.begin() + static_cast<std::ptrdiff_t>(alpha1_offset()),
                        v.begin() + static_cast<std::ptrdiff_t>(alpha1_offset() + kc));
        // softmax against the implicit rho_{K+1} = 0 reference
        p.psi.resize(config.K);
        double mx = 0.0;
        for (std::size_t k = 0; k < config.K; ++k) mx = std::max(mx, v[rho_offset() + k]);
        double denom = std::exp(-mx);
        for (std::size_t k = 0; k < config.K; ++k) denom += std::exp(v[rho_offset() + k] - mx);
        for (std::size_t k = 0; k < config.K; ++k)
            p.psi[k] = std::exp(v[rho_offset() + k] - mx) / denom;
        return p;
    }

    // Optimization box. Link-scale coordinates are kept inside +-15: past
    // that the likelihood is flat to double precision and boundary fits
    // would otherwise drift along exact ridges, leaving the information
    // matrix singular.
    void bounds(std::size_t j, double& lo, double& hi) const {
        if (j < n_beta()) {
            lo = -1e4;
            hi = 1e4;
        } else if (j == delta_offset()) {
            lo = -12.0;
            hi = 12.0;
        } else if (j == phi_offset()) {
            lo = std::log(1e-4);
            hi = std::log(1e6);
        } else if (j >= alpha0_offset() && j < rho_offset()) {
            lo = -12.0;  // abundance links reach rare-taxon scales
            hi = 12.0;
        } else {
            lo = -8.0;  // probability-scale coordinates: zero-model and weights
            hi = 8.0;
        }
    }

    bool in_bounds(const std::vector<double>& v) const {
        for (std::size_t j = 0; j < v.size(); ++j) {
            double lo = 0.0, hi = 0.0;
            bounds(j, lo, hi);
            if (!(v[j] >= lo && v[j] <= hi)) return false;
        }
        return true;
    }

    std::vector<double> clamp_to_bounds(std::vector<double> v) const {
        for (std::size_t j = 0; j < v.size(); ++j) {
            double lo = 0.0, hi = 0.0;
            bounds(j, lo, hi);
            v[j] = std::clamp(v[j], lo, hi);
        }
        return v;
    }

    // Chain a gradient taken w.r.t. raw parameters (psi given as the full
    // K+1 tilde-weight gradient) into free coordinates. raw layout: beta6,
    // d/d delta, d/d gamma0, d/d gamma1, d/d phi, alpha0*, alpha1*,
    // d/d psi_tilde (K+1).
    std::vector<double> chain_to_free(const std::vector<double>& raw, const ParameterVector& p) const {
        const std::size_t kc = config.n_components();
        if (raw.size() != 10 + 3 * kc)
            throw std::invalid_argument("Reparam::chain_to_free: wrong raw length");
        std::vector<double> g(dim(), 0.0);
        for (std::size_t j = 0; j < n_beta(); ++j) g[j] = raw[beta_raw_index(j)];
        g[delta_offset()] = raw[6] * p.delta_sd;
        if (has_zero_model) {
            g[gamma_offset()] = raw[7];
            g[gamma_offset() + 1] = raw[8];
        }
        g[phi_offset()] = raw[9] * p.phi;
        for (std::size_t k = 0; k < kc; ++k) {
            g[alpha0_offset() + k] = raw[10 + k];
            g[alpha1_offset() + k] = raw[10 + kc + k];
        }
        // d psi_tilde_k / d rho_j = psi_k (1(k==j) - psi_j)
        double dot = 0.0;
        for (std::size_t k = 0; k < kc; ++k) dot += raw[10 + 2 * kc + k] * p.psi_tilde(k);
        for (std::size_t j = 0; j < config.K; ++j)
            g[rho_offset() + j] = p.psi_tilde(j) * (raw[10 + 2 * kc + j] - dot);
        return g;
    }
};

}  // namespace zibmed

#endif  // ZIBMED_REPARAM_HPP
