#ifndef ZIBMED_SCREEN_HPP
#define ZIBMED_SCREEN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "zibmed/core.hpp"
#include "zibmed/effects.hpp"
#include "zibmed/em.hpp"
#include "zibmed/parallel.hpp"
#include "zibmed/simulate.hpp"

namespace zibmed {

struct TaxaTable {
    std::vector<double> y, x;
    std::vector<std::uint64_t> lib_size;
    std::vector<std::string> taxa_names;
    std::vector<std::vector<double>> abundance;  // n rows, T columns

    std::size_t n() const { return y.size(); }
    std::size_t n_taxa() const { return taxa_names.size(); }
};

inline void validate(const TaxaTable& t) {
    const std::size_t n = t.n();
    if (n == 0) throw std::invalid_argument("TaxaTable: empty");
    if (t.x.size() != n || t.lib_size.size() != n || t.abundance.size() != n)
        throw std::invalid_argument("TaxaTable: column length mismatch");
    const std::size_t T = t.n_taxa();
    for (std::size_t a = 0; a < T; ++a)
        for (std::size_t b = a + 1; b < T; ++b)
            if (t.taxa_names[a] == t.taxa_names[b])
                throw std::invalid_argument("TaxaTable: duplicate taxon name " + t.taxa_names[a]);
    for (std::size_t i = 0; i < n; ++i) {
        if (t.abundance[i].size() != T) throw std::invalid_argument("TaxaTable: ragged abundance row");
        if (t.lib_size[i] < 1) throw std::invalid_argument("TaxaTable: lib_size must be >= 1");
        double sum = 0.0;
        for (double v : t.abundance[i]) {
            if (!(v >= 0.0) || v >= 1.0)
                throw std::invalid_argument("TaxaTable: abundance outside [0,1)");
            sum += v;
        }
        if (sum > 1.0 + 1e-9)
            throw std::invalid_argument("TaxaTable: row abundances sum above 1");
    }
}

inline Dataset taxon_dataset(const TaxaTable& t, std::size_t taxon) {
    Dataset d;
    d.records.resize(t.n());
    for (std::size_t i = 0; i < t.n(); ++i)
        d.records[i] = SubjectRecord{t.y[i], t.abundance[i][taxon], t.x[i], t.lib_size[i]};
    return d;
}

// Benjamini-Hochberg step-up adjustment; NaN entries are left out of the
// family and stay NaN.
inline std::vector<double> bh_adjust(const std::vector<double>& p) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (std::isnan(p[i])) continue;
        if (!(p[i] >= 0.0 && p[i] <= 1.0))
            throw std::invalid_argument("bh_adjust: p-values must lie in [0,1]");
        idx.push_back(i);
    }
    std::vector<double> q(p.size(), std::numeric_limits<double>::quiet_NaN());
    const std::size_t m = idx.size();
    if (m == 0) return q;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    double running = 1.0;
    for (std::size_t r = m; r-- > 0;) {
        const double val = std::min(running, static_cast<double>(m) * p[idx[r]] /
                                                 static_cast<double>(r + 1));
        running = val;
        q[idx[r]] = std::min(val, 1.0);
    }
    return q;
}

struct TaxonScreenRow {
    std::size_t index = 0;
    std::string taxon;
    bool fitted = false;
    std::string skip_reason;
    FitResult fit;
    EffectEstimates effects;
    double q_nie1 = std::numeric_limits<double>::quiet_NaN();
    double q_nie2 = std::numeric_limits<double>::quiet_NaN();
    double q_nie = std::numeric_limits<double>::quiet_NaN();
    bool sig_nie1 = false, sig_nie2 = false, sig_nie = false;
};

struct ScreenResult {
    std::vector<TaxonScreenRow> rows;
    double fdr = 0.2;
    std::size_t n_fitted = 0;
};

struct ScreenOptions {
    std::size_t min_positive = 10;  // below these the full model is unidentifiable
    std::size_t min_zero = 2;
    std::size_t n_threads = 1;
    double ci_level = 0.95;
};

// Marginal per-taxon fits with BH control applied separately within each
// effect family. Individual taxon failures are recorded, never fatal.
inline ScreenResult screen_taxa(const TaxaTable& table, const MixtureConfig& config,
                                const EmOptions& options, const EffectContrast& contrast,
                                double fdr, const ScreenOptions& sopts = {}) {
    validate(table);
    if (!(fdr > 0.0 && fdr < 1.0)) throw std::invalid_argument("screen_taxa: fdr outside (0,1)");
    const std::size_t T = table.n_taxa();
    ScreenResult res;
    res.fdr = fdr;
    res.rows.resize(T);

    parallel_for(T, sopts.n_threads, [&](std::size_t t) {
        TaxonScreenRow& row = res.rows[t];
        row.index = t;
        row.taxon = table.taxa_names[t];
        const Dataset d = taxon_dataset(table, t);
        const std::size_t n_pos = d.n_positive();
        const std::size_t n_zero = d.n() - n_pos;
        if (n_pos < sopts.min_positive) {
            row.skip_reason = "fewer than " + std::to_string(sopts.min_positive) +
                              " positive observations (" + std::to_string(n_pos) + ")";
            return;
        }
        if (n_zero < sopts.min_zero) {
            row.skip_reason = "fewer than " + std::to_string(sopts.min_zero) +
                              " zero observations (" + std::to_string(n_zero) + ")";
            return;
        }
        try {
            row.fit = em_fit(d, config, options);
            row.effects = delta_method_ci(row.fit, config, contrast, sopts.ci_level);
            row.fitted = true;
        } catch (const std::exception& e) {
            row.skip_reason = e.what();
        }
    });

    std::vector<double> p1(T, std::numeric_limits<double>::quiet_NaN()), p2 = p1, pn = p1;
    for (std::size_t t = 0; t < T; ++t) {
        if (!res.rows[t].fitted) continue;
        ++res.n_fitted;
        p1[t] = res.rows[t].effects.nie1.p_value;
        p2[t] = res.rows[t].effects.nie2.p_value;
        pn[t] = res.rows[t].effects.nie.p_value;
    }
    const std::vector<double> q1 = bh_adjust(p1), q2 = bh_adjust(p2), qn = bh_adjust(pn);
    for (std::size_t t = 0; t < T; ++t) {
        auto& row = res.rows[t];
        row.q_nie1 = q1[t];
        row.q_nie2 = q2[t];
        row.q_nie = qn[t];
        row.sig_nie1 = !std::isnan(q1[t]) && q1[t] <= fdr;
        row.sig_nie2 = !std::isnan(q2[t]) && q2[t] <= fdr;
        row.sig_nie = !std::isnan(qn[t]) && qn[t] <= fdr;
    }
    return res;
}

// ---- Setting I benchmark (Table-1-style parameter and effect recovery) ----

struct BenchmarkRow {
    std::string name;
    double truth = 0.0;
    double mean_estimate = 0.0;
    double bias = 0.0;
    double bias_pct = std::numeric_limits<double>::quiet_NaN();  // undefined when truth == 0
    double mean_se = 0.0;
    double coverage = 0.0;  // of 95% CIs, in [0,1]
    std::size_t n_used = 0;
};

struct Setting1Benchmark {
    std::vector<BenchmarkRow> rows;  // effects first, then parameters
    std::size_t n_replicates = 0;
    std::size_t n_failed = 0;
    double mean_zero_fraction = 0.0;
    double mean_false_zero_share = 0.0;
};

inline Setting1Benchmark benchmark(const SettingISpec& spec, std::size_t n_replicates,
                                   const EmOptions& options, std::size_t n_threads = 1) {
    if (n_replicates < 2) throw std::invalid_argument("benchmark: need at least 2 replicates");
    const ParameterVector truth_canon = canonicalize(spec.truth, spec.config);
    const EffectPoints truth_eff = compute_effects(spec.truth, spec.config, spec.contrast);
    const std::size_t kc = spec.config.n_components();
    const std::size_t n_raw = 10 + 3 * kc;

    struct RepOut {
        bool ok = false;
        std::vector<double> est, se;
        EffectPoints eff;
        std::array<double, 4> eff_se{};
        double zero_frac = 0.0, false_share = 0.0;
    };
    std::vector<RepOut> reps(n_replicates);

    parallel_for(n_replicates, n_threads, [&](std::size_t r) {
        SettingISpec rspec = spec;
        rspec.seed = derive_seed(spec.seed, r);
        const SimulatedDataset sim = generate_setting1(rspec);
        RepOut& out = reps[r];
        out.zero_frac = sim.zero_fraction();
        out.false_share = sim.false_zero_share();
        EmOptions ropts = options;
        ropts.seed = derive_seed(options.seed, r);
        try {
            // effect intervals come from the fit's own chart; only the raw
            // parameter report needs canonical component order
            const FitResult fit = em_fit(sim.dataset, spec.config, ropts);
            if (!fit.converged || !fit.se_defined) return;
            const EffectEstimates ee =
                delta_method_ci(fit, spec.config, spec.contrast, 0.95);
            const FitResult canon = canonicalize_fit(fit);
            out.est = raw_param_values(canon.params_hat, spec.config);
            out.se = canon.std_errors;
            out.eff = compute_effects(canon.params_hat, spec.config, spec.contrast);
            out.eff_se = {ee.nie1.std_error, ee.nie2.std_error, ee.nie.std_error,
                          ee.nde.std_error};
            out.ok = true;
        } catch (const std::exception&) {
            // counted as a failed replicate
        }
    });

    Setting1Benchmark bench;
    bench.n_replicates = n_replicates;
    const double z = normal_quantile(0.975);

    const std::vector<double> truth_raw = raw_param_values(truth_canon, spec.config);
    const std::vector<std::string> names = raw_param_names(spec.config);
    const std::array<double, 4> truth_effects = {truth_eff.nie1, truth_eff.nie2, truth_eff.nie,
                                                 truth_eff.nde};
    const std::array<const char*, 4> eff_names = {"NIE1", "NIE2", "NIE", "NDE"};

    double zsum = 0.0, fsum = 0.0;
    std::size_t n_ok = 0;
    for (const auto& rep : reps) {
        zsum += rep.zero_frac;
        fsum += rep.false_share;
        if (rep.ok) ++n_ok;
    }
    bench.n_failed = n_replicates - n_ok;
    bench.mean_zero_fraction = zsum / static_cast<double>(n_replicates);
    bench.mean_false_zero_share = fsum / static_cast<double>(n_replicates);

    auto aggregate = [&](const std::string& name, double truth, auto&& est_of, auto&& se_of) {
        BenchmarkRow row;
        row.name = name;
        row.truth = truth;
        double sum_est = 0.0, sum_se = 0.0, covered = 0.0;
        std::size_t used = 0;
        for (const auto& rep : reps) {
            if (!rep.ok) continue;
            const double est = est_of(rep);
            const double se = se_of(rep);
            if (std::isnan(est) || std::isnan(se)) continue;
            sum_est += est;
            sum_se += se;
            covered += (std::abs(est - truth) <= z * se) ? 1.0 : 0.0;
            ++used;
        }
        if (used > 0) {
            row.mean_estimate = sum_est / static_cast<double>(used);
            row.bias = row.mean_estimate - truth;
            if (truth != 0.0) row.bias_pct = 100.0 * row.bias / truth;
            row.mean_se = sum_se / static_cast<double>(used);
            row.coverage = covered / static_cast<double>(used);
        }
        row.n_used = used;
        bench.rows.push_back(row);
    };

    for (std::size_t e = 0; e < 4; ++e) {
        aggregate(
            eff_names[e], truth_effects[e],
            [&](const RepOut& rep) {
                const std::array<double, 4> v = {rep.eff.nie1, rep.eff.nie2, rep.eff.nie,
                                                 rep.eff.nde};
                return v[e];
            },
            [&](const RepOut& rep) { return rep.eff_se[e]; });
    }
    for (std::size_t j = 0; j < n_raw; ++j) {
        aggregate(
            names[j], truth_raw[j], [&](const RepOut& rep) { return rep.est[j]; },
            [&](const RepOut& rep) { return rep.se[j]; });
    }
    return bench;
}

// ---- Setting II benchmark (Table-2-style recall/precision/F1) ----

struct FamilyMetrics {
    std::string family;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double recall = std::numeric_limits<double>::quiet_NaN();
    double precision = std::numeric_limits<double>::quiet_NaN();
    double f1 = std::numeric_limits<double>::quiet_NaN();

    void finalize() {
        if (tp + fn > 0) recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
        if (tp + fp > 0) precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        if (!std::isnan(recall) && !std::isnan(precision) && recall + precision > 0.0)
            f1 = 2.0 * recall * precision / (recall + precision);
    }
};

struct Setting2Benchmark {
    FamilyMetrics nie1{"NIE1"};
    FamilyMetrics nie2{"NIE2"};
    FamilyMetrics nie{"NIE"};
    std::size_t n_replicates = 0;
    std::size_t n_failed_replicates = 0;
    double fdr = 0.2;
};

inline TaxaTable to_taxa_table(const SimulatedTaxaData& sim) {
    TaxaTable t;
    t.y = sim.y;
    t.x = sim.x;
    t.lib_size = sim.lib_size;
    t.abundance = sim.abundance;
    const std::size_t T = sim.abundance.empty() ? 0 : sim.abundance[0].size();
    for (std::size_t q = 0; q < T; ++q) t.taxa_names.push_back("taxon" + std::to_string(q + 1));
    return t;
}

inline Setting2Benchmark benchmark(const SettingIISpec& spec, std::size_t n_replicates,
                                   const MixtureConfig& config, const EmOptions& options,
                                   double fdr, std::size_t n_threads = 1) {
    if (n_replicates < 2) throw std::invalid_argument("benchmark: need at least 2 replicates");
    Setting2Benchmark bench;
    bench.n_replicates = n_replicates;
    bench.fdr = fdr;

    struct RepOut {
        bool ok = false;
        std::vector<char> truth1, truth2, truthn;  // per-taxon truth labels
        std::vector<char> call1, call2, calln;     // significance calls (fitted taxa only)
        std::vector<char> tested;
    };
    std::vector<RepOut> reps(n_replicates);

    parallel_for(n_replicates, n_threads, [&](std::size_t r) {
        SettingIISpec rspec = spec;
        rspec.seed = derive_seed(spec.seed, r);
        RepOut& out = reps[r];
        try {
            const SimulatedTaxaData sim = generate_setting2(rspec);
            const TaxaTable table = to_taxa_table(sim);
            EmOptions ropts = options;
            ropts.seed = derive_seed(options.seed, r);
            ScreenOptions sopts;
            sopts.n_threads = 1;  // replicates already run in parallel
            const ScreenResult sr = screen_taxa(table, config, ropts, spec.contrast, fdr, sopts);
            const std::size_t T = table.n_taxa();
            out.truth1.resize(T);
            out.truth2.resize(T);
            out.truthn.resize(T);
            out.call1.resize(T);
            out.call2.resize(T);
            out.calln.resize(T);
            out.tested.resize(T);
            for (std::size_t t = 0; t < T; ++t) {
                out.truth1[t] = std::abs(sim.truth_effects[t].nie1) > 1e-12 ? 1 : 0;
                out.truth2[t] = std::abs(sim.truth_effects[t].nie2) > 1e-12 ? 1 : 0;
                out.truthn[t] = std::abs(sim.truth_effects[t].nie) > 1e-12 ? 1 : 0;
                out.tested[t] = sr.rows[t].fitted ? 1 : 0;
                out.call1[t] = sr.rows[t].sig_nie1 ? 1 : 0;
                out.call2[t] = sr.rows[t].sig_nie2 ? 1 : 0;
                out.calln[t] = sr.rows[t].sig_nie ? 1 : 0;
            }
            out.ok = true;
        } catch (const std::exception&) {
            // replicate counted as failed
        }
    });

    for (const auto& rep : reps) {
        if (!rep.ok) {
            ++bench.n_failed_replicates;
            continue;
        }
        for (std::size_t t = 0; t < rep.truth1.size(); ++t) {
            auto tally = [&](FamilyMetrics& fm, bool truth, bool call) {
                // an untested positive taxon is a miss; an untested negative is a
                // correct non-discovery
                if (truth && call) ++fm.tp;
                else if (truth && !call) ++fm.fn;
                else if (!truth && call) ++fm.fp;
                else ++fm.tn;
            };
            tally(bench.nie1, rep.truth1[t] != 0, rep.call1[t] != 0);
            tally(bench.nie2, rep.truth2[t] != 0, rep.call2[t] != 0);
            tally(bench.nie, rep.truthn[t] != 0, rep.calln[t] != 0);
        }
    }
    bench.nie1.finalize();
    bench.nie2.finalize();
    bench.nie.finalize();
    return bench;
}

}  // namespace zibmed

#endif  // ZIBMED_SCREEN_HPP
