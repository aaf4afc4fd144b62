#ifndef ZIBMED_DRIVER_HPP
#define ZIBMED_DRIVER_HPP

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <json.hpp>

#include "zibmed/effects.hpp"
#include "zibmed/em.hpp"
#include "zibmed/io.hpp"
#include "zibmed/screen.hpp"
#include "zibmed/simulate.hpp"

namespace zibmed {

inline constexpr int kSchemaVersion = 1;

enum class Command { fit, effects, simulate, benchmark, screen };

struct RunConfig {
    Command command = Command::fit;
    std::string input_path;
    std::string output_dir = ".";
    MixtureConfig config{0};
    EffectContrast contrast{0.0, 1.0};
    CiMethod ci_method = CiMethod::delta;
    double ci_level = 0.95;
    double fdr = 0.2;
    std::uint64_t seed = 0;
    std::size_t n_boot = 200;
    std::size_t n_replicates = 100;
    std::size_t quadrature_nodes = 32;
    std::size_t threads = 1;
    int setting = 1;
    SettingISpec setting1;
    SettingIISpec setting2;
    std::uint64_t lib_lo = kDefaultLibLo;
    std::uint64_t lib_hi = kDefaultLibHi;
    std::size_t library_pool = 1000;  // size of the sampled library-size pool

    EmOptions em_options() const {
        EmOptions o;
        o.seed = seed;
        o.quadrature_nodes = quadrature_nodes;
        return o;
    }
};

namespace detail {

inline nlohmann::json to_json(const EffectInterval& e, bool with_p) {
    nlohmann::json j{{"estimate", e.estimate},
                     {"std_error", e.std_error},
                     {"ci_lo", e.ci_lo},
                     {"ci_hi", e.ci_hi},
                     {"se_defined", e.se_defined}};
    if (with_p) j["p_value"] = e.p_value;
    return j;
}

inline nlohmann::json to_json(const EffectEstimates& ee) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["nie1"] = to_json(ee.nie1, true);
    j["nie2"] = to_json(ee.nie2, true);
    j["nie"] = to_json(ee.nie, true);
    j["nde"] = to_json(ee.nde, false);
    j["contrast"] = {{"x1", ee.contrast.x1}, {"x2", ee.contrast.x2}};
    j["ci_level"] = ee.ci_level;
    j["ci_method"] = ee.method == CiMethod::delta ? "delta" : "bootstrap";
    j["nie2_structural_zero"] = ee.nie2_structural_zero;
    if (!ee.diagnostics.empty()) j["diagnostics"] = ee.diagnostics;
    if (ee.method == CiMethod::bootstrap) {
        j["n_boot"] = ee.n_boot;
        j["n_boot_failures"] = ee.n_boot_failures;
        j["bootstrap_valid"] = ee.bootstrap_valid;
    }
    return j;
}

inline nlohmann::json to_json(const FitResult& fit_in) {
    const FitResult fit = canonicalize_fit(fit_in);
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["k"] = fit.config.K;
    j["loglik"] = fit.loglik;
    j["converged"] = fit.converged;
    j["n_iterations"] = fit.n_iterations;
    j["zero_model_dropped"] = fit.zero_model_dropped;
    j["restart_index"] = fit.restart_index;
    j["quadrature_nodes"] = fit.quadrature_nodes;
    j["se_defined"] = fit.se_defined;
    if (!fit.se_diagnostics.empty()) j["se_diagnostics"] = fit.se_diagnostics;
    const auto names = raw_param_names(fit.config);
    const auto values = raw_param_values(fit.params_hat, fit.config);
    nlohmann::json est = nlohmann::json::object();
    nlohmann::json ses = nlohmann::json::object();
    for (std::size_t i = 0; i < names.size(); ++i) {
        est[names[i]] = values[i];
        if (!fit.std_errors.empty()) ses[names[i]] = fit.std_errors[i];
    }
    j["estimates"] = est;
    j["std_errors"] = ses;
    nlohmann::json traj = nlohmann::json::array();
    for (const auto& [it, ll] : fit.trajectory) traj.push_back({it, ll});
    j["trajectory"] = traj;
    return j;
}

inline nlohmann::json to_json(const EffectPoints& e) {
    return {{"nie1", e.nie1}, {"nie2", e.nie2}, {"nie", e.nie}, {"nde", e.nde}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
    f << text;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    write_text(path, j.dump(2) + "\n");
}

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline nlohmann::json config_echo(const RunConfig& cfg) {
    static const char* names[] = {"fit", "effects", "simulate", "benchmark", "screen"};
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = names[static_cast<int>(cfg.command)];
    j["input"] = cfg.input_path;
    j["output_dir"] = cfg.output_dir;
    j["k"] = cfg.config.K;
    j["x1"] = cfg.contrast.x1;
    j["x2"] = cfg.contrast.x2;
    j["ci"] = cfg.ci_method == CiMethod::delta ? "delta" : "bootstrap";
    j["level"] = cfg.ci_level;
    j["fdr"] = cfg.fdr;
    j["seed"] = cfg.seed;
    j["boot"] = cfg.n_boot;
    j["replicates"] = cfg.n_replicates;
    j["nodes"] = cfg.quadrature_nodes;
    j["threads"] = cfg.threads;
    j["setting"] = cfg.setting;
    if (cfg.command == Command::simulate || cfg.command == Command::benchmark) {
        if (cfg.setting == 1) {
            const auto& s = cfg.setting1;
            nlohmann::json t;
            t["n"] = s.n;
            t["k"] = s.config.K;
            const auto names = raw_param_names(s.config);
            const auto values = raw_param_values(s.truth, s.config);
            for (std::size_t i = 0; i < names.size(); ++i) t["truth"][names[i]] = values[i];
            j["setting1"] = t;
        } else {
            const auto& s = cfg.setting2;
            nlohmann::json t;
            t["n"] = s.n;
            t["n_taxa"] = s.n_taxa;
            t["mixture_weights"] = s.mixture_weights;
            t["outcome_beta"] = s.outcome_beta;
            t["outcome_delta"] = s.outcome_delta;
            t["taxon2_gamma"] = s.taxon2_gamma;
            t["alpha_link"] = s.alpha_link;
            t["phi"] = s.phi;
            t["other_zero_mode"] =
                s.other_zero_mode == OtherTaxaZeroMode::unif_1_2 ? "unif_1_2" : "fifty_pct";
            t["false_zero_target"] = s.false_zero_target;
            j["setting2"] = t;
        }
    }
    return j;
}

}  // namespace detail

// Figure-2-style export: one row per taxon flagged significant for NIE1 at
// the configured FDR; cell = sign(NIE1) * (1 - unadjusted p) where the sample
// carries the taxon, empty where it is absent.
inline void export_heatmap(const ScreenResult& sr, const TaxaTable& table,
                           const std::string& path) {
    std::string out = "taxon";
    for (std::size_t i = 0; i < table.n(); ++i) out += ",sample" + std::to_string(i + 1);
    out += '\n';
    for (const auto& row : sr.rows) {
        if (!row.fitted || !row.sig_nie1) continue;
        const double strength =
            (row.effects.nie1.estimate < 0.0 ? -1.0 : 1.0) * (1.0 - row.effects.nie1.p_value);
        out += row.taxon;
        for (std::size_t i = 0; i < table.n(); ++i) {
            out += ',';
            if (table.abundance[i][row.index] > 0.0) out += detail::fmt17(strength);
        }
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << out;
}

namespace detail {

inline void write_screen_outputs(const ScreenResult& sr, const TaxaTable& table,
                                 const std::filesystem::path& dir) {
    std::string csv =
        "taxon,fitted,skip_reason,converged,loglik,nie1,se_nie1,p_nie1,q_nie1,sig_nie1,"
        "nie2,se_nie2,p_nie2,q_nie2,sig_nie2,nie,se_nie,p_nie,q_nie,sig_nie,nde,se_nde\n";
    nlohmann::json jrows = nlohmann::json::array();
    for (const auto& row : sr.rows) {
        nlohmann::json jr;
        jr["taxon"] = row.taxon;
        jr["fitted"] = row.fitted;
        if (!row.fitted) {
            jr["skip_reason"] = row.skip_reason;
            csv += row.taxon + ",0," + row.skip_reason + ",,,,,,,,,,,,,,,,,,,\n";
            jrows.push_back(jr);
            continue;
        }
        jr["fit"] = to_json(row.fit);
        jr["effects"] = to_json(row.effects);
        jr["q_nie1"] = row.q_nie1;
        jr["q_nie2"] = row.q_nie2;
        jr["q_nie"] = row.q_nie;
        jr["sig_nie1"] = row.sig_nie1;
        jr["sig_nie2"] = row.sig_nie2;
        jr["sig_nie"] = row.sig_nie;
        jrows.push_back(jr);
        const auto& e = row.effects;
        csv += row.taxon + ",1,," + (row.fit.converged ? "1" : "0") + ',' + fmt17(row.fit.loglik);
        auto add = [&](const EffectInterval& ei, double q, bool sig, bool with_p) {
            csv += ',' + fmt17(ei.estimate) + ',' + fmt17(ei.std_error);
            if (with_p) {
                csv += ',' + fmt17(ei.p_value) + ',' + fmt17(q);
                csv += sig ? ",1" : ",0";
            }
        };
        add(e.nie1, row.q_nie1, row.sig_nie1, true);
        add(e.nie2, row.q_nie2, row.sig_nie2, true);
        add(e.nie, row.q_nie, row.sig_nie, true);
        add(e.nde, 0.0, false, false);
        csv += '\n';
    }
    write_text(dir / "screen.csv", csv);
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["fdr"] = sr.fdr;
    j["n_fitted"] = sr.n_fitted;
    j["taxa"] = jrows;
    write_json(dir / "screen.json", j);
    export_heatmap(sr, table, (dir / "heatmap.csv").string());
}

inline int run_fit_like(const RunConfig& cfg, const std::filesystem::path& dir) {
    const IngestResult ingested = ingest_csv(cfg.input_path);
    Dataset data;
    if (std::holds_alternative<Dataset>(ingested)) {
        data = std::get<Dataset>(ingested);
    } else {
        const auto& table = std::get<TaxaTable>(ingested);
        if (table.n_taxa() != 1)
            throw std::runtime_error(
                "input has multiple taxa columns; use the screen command or a single `m` column");
        data = taxon_dataset(table, 0);
    }
    const EmOptions opts = cfg.em_options();
    const FitResult fit = em_fit(data, cfg.config, opts);
    write_json(dir / "fit.json", to_json(fit));
    if (cfg.command == Command::effects) {
        EffectEstimates ee;
        if (cfg.ci_method == CiMethod::delta)
            ee = delta_method_ci(fit, cfg.config, cfg.contrast, cfg.ci_level);
        else
            ee = bootstrap_ci(data, cfg.config, opts, cfg.contrast, cfg.ci_level, cfg.n_boot,
                              cfg.threads, &fit);
        write_json(dir / "effects.json", to_json(ee));
    }
    return 0;
}

inline int run_simulate(const RunConfig& cfg, const std::filesystem::path& dir) {
    nlohmann::json truth;
    truth["schema_version"] = kSchemaVersion;
    if (cfg.setting == 1) {
        SettingISpec spec = cfg.setting1;
        spec.seed = cfg.seed;
        if (spec.library_sizes.empty())
            spec.library_sizes = sample_library_sizes(cfg.library_pool, cfg.lib_lo, cfg.lib_hi,
                                                      derive_seed(cfg.seed, 0x6c696273ULL));
        const SimulatedDataset sim = generate_setting1(spec);
        write_dataset_csv(sim.dataset, (dir / "dataset.csv").string());
        truth["setting"] = 1;
        const auto names = raw_param_names(spec.config);
        const auto values = raw_param_values(spec.truth, spec.config);
        nlohmann::json params = nlohmann::json::object();
        for (std::size_t i = 0; i < names.size(); ++i) params[names[i]] = values[i];
        truth["truth_params"] = params;
        truth["truth_effects"] = to_json(sim.truth_effects);
        truth["true_zero_mask"] = sim.true_zero_mask;
        truth["false_zero_mask"] = sim.false_zero_mask;
        truth["zero_fraction"] = sim.zero_fraction();
        truth["false_zero_share"] = sim.false_zero_share();
    } else {
        SettingIISpec spec = cfg.setting2;
        spec.seed = cfg.seed;
        if (spec.library_sizes.empty())
            spec.library_sizes = sample_library_sizes(cfg.library_pool, cfg.lib_lo, cfg.lib_hi,
                                                      derive_seed(cfg.seed, 0x6c696273ULL));
        const SimulatedTaxaData sim = generate_setting2(spec);
        write_taxa_csv(to_taxa_table(sim), (dir / "taxa.csv").string());
        truth["setting"] = 2;
        nlohmann::json eff = nlohmann::json::array();
        for (const auto& e : sim.truth_effects) eff.push_back(to_json(e));
        truth["truth_effects"] = eff;
        truth["true_zero_mask"] = sim.true_zero_mask;
        truth["false_zero_mask"] = sim.false_zero_mask;
        truth["calibrated_alpha01"] = sim.calibrated_alpha01;
        truth["achieved_false_zero_rate"] = sim.achieved_false_zero_rate;
        truth["calibration_ok"] = sim.calibration_ok;
        truth["gamma0_other"] = sim.gamma0_other;
    }
    write_json(dir / "truth.json", truth);
    return 0;
}

inline int run_benchmark(const RunConfig& cfg, const std::filesystem::path& dir) {
    if (cfg.setting == 1) {
        SettingISpec spec = cfg.setting1;
        spec.seed = cfg.seed;
        if (spec.library_sizes.empty())
            spec.library_sizes = sample_library_sizes(cfg.library_pool, cfg.lib_lo, cfg.lib_hi,
                                                      derive_seed(cfg.seed, 0x6c696273ULL));
        const Setting1Benchmark bench =
            benchmark(spec, cfg.n_replicates, cfg.em_options(), cfg.threads);
        std::string csv = "parameter,true,mean_estimate,bias,bias_pct,mean_se,cp_pct,n_used\n";
        for (const auto& row : bench.rows) {
            csv += row.name + ',' + fmt17(row.truth) + ',' + fmt17(row.mean_estimate) + ',' +
                   fmt17(row.bias) + ',';
            if (!std::isnan(row.bias_pct)) csv += fmt17(row.bias_pct);
            csv += ',' + fmt17(row.mean_se) + ',' + fmt17(100.0 * row.coverage) + ',' +
                   std::to_string(row.n_used) + '\n';
        }
        write_text(dir / "benchmark_setting1.csv", csv);
        nlohmann::json j;
        j["schema_version"] = kSchemaVersion;
        j["n_replicates"] = bench.n_replicates;
        j["n_failed"] = bench.n_failed;
        j["mean_zero_fraction"] = bench.mean_zero_fraction;
        j["mean_false_zero_share"] = bench.mean_false_zero_share;
        write_json(dir / "benchmark_setting1.json", j);
    } else {
        SettingIISpec spec = cfg.setting2;
        spec.seed = cfg.seed;
        if (spec.library_sizes.empty())
            spec.library_sizes = sample_library_sizes(cfg.library_pool, cfg.lib_lo, cfg.lib_hi,
                                                      derive_seed(cfg.seed, 0x6c696273ULL));
        const Setting2Benchmark bench = benchmark(spec, cfg.n_replicates, cfg.config,
                                                  cfg.em_options(), cfg.fdr, cfg.threads);
        std::string csv = "family,recall_pct,precision_pct,f1_pct,tp,fp,fn,tn\n";
        for (const FamilyMetrics* fm : {&bench.nie1, &bench.nie2, &bench.nie}) {
            csv += fm->family + ',' + fmt17(100.0 * fm->recall) + ',' +
                   fmt17(100.0 * fm->precision) + ',' + fmt17(100.0 * fm->f1) + ',' +
                   std::to_string(fm->tp) + ',' + std::to_string(fm->fp) + ',' +
                   std::to_string(fm->fn) + ',' + std::to_string(fm->tn) + '\n';
        }
        write_text(dir / "benchmark_setting2.csv", csv);
        nlohmann::json j;
        j["schema_version"] = kSchemaVersion;
        j["n_replicates"] = bench.n_replicates;
        j["n_failed_replicates"] = bench.n_failed_replicates;
        j["fdr"] = bench.fdr;
        write_json(dir / "benchmark_setting2.json", j);
    }
    return 0;
}

inline int run_screen(const RunConfig& cfg, const std::filesystem::path& dir) {
    const IngestResult ingested = ingest_csv(cfg.input_path);
    TaxaTable table;
    if (std::holds_alternative<TaxaTable>(ingested)) {
        table = std::get<TaxaTable>(ingested);
    } else {
        const Dataset& d = std::get<Dataset>(ingested);
        table.taxa_names = {"m"};
        for (const auto& r : d.records) {
            table.y.push_back(r.y);
            table.x.push_back(r.x);
            table.lib_size.push_back(r.lib_size);
            table.abundance.push_back({r.m_obs});
        }
    }
    ScreenOptions sopts;
    sopts.n_threads = cfg.threads;
    sopts.ci_level = cfg.ci_level;
    const ScreenResult sr =
        screen_taxa(table, cfg.config, cfg.em_options(), cfg.contrast, cfg.fdr, sopts);
    write_screen_outputs(sr, table, dir);
    return 0;
}

}  // namespace detail

// Executes one command; artifacts land in the output directory, along with
// an echo of the resolved configuration for reproducibility.
inline int run(const RunConfig& cfg) {
    const std::filesystem::path dir(cfg.output_dir);
    std::filesystem::create_directories(dir);
    const nlohmann::json echo = detail::config_echo(cfg);
    detail::write_json(dir / "run_config.json", echo);
    std::cout << echo.dump() << "\n";
    switch (cfg.command) {
        case Command::fit:
        case Command::effects:
            return detail::run_fit_like(cfg, dir);
        case Command::simulate:
            return detail::run_simulate(cfg, dir);
        case Command::benchmark:
            return detail::run_benchmark(cfg, dir);
        case Command::screen:
            return detail::run_screen(cfg, dir);
    }
    return 1;
}

}  // namespace zibmed

#endif  // ZIBMED_DRIVER_HPP
