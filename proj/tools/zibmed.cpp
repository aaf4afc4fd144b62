// Command-line front end for ZIBM mediation analysis: fitting, effect
// estimation, simulation, benchmarks and per-taxon screening.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "zibmed/driver.hpp"

namespace {

zibmed::ParameterVector three_component_truth() {
    zibmed::ParameterVector p;
    p.beta = {-5.0, 10.0, 8.0, 1.0, 1.0, 1.0};
    p.delta_sd = 1.0;
    p.gamma = {-1.5, -0.5};
    p.phi = 10.0;
    p.alpha0 = {0.0, -2.0, -5.0};
    p.alpha1 = {-0.5, -0.5, -0.5};
    p.psi = {0.2, 0.3};
    return p;
}

zibmed::ParameterVector two_component_truth() {
    zibmed::ParameterVector p;
    p.beta = {-5.0, 10.0, 8.0, 1.0, 1.0, 1.0};
    p.delta_sd = 1.0;
    p.gamma = {-1.5, -0.5};
    p.phi = 10.0;
    p.alpha0 = {1.0, -5.0};
    p.alpha1 = {-0.5, -0.5};
    p.psi = {0.3};
    return p;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace zibmed;
    CLI::App app{"zibmed - zero-inflated beta mixture mediation analysis"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string ci_name = "delta";
    std::string scenario = "three-component";
    std::string other_zero = "unif";
    std::size_t sim_n = 0;
    std::size_t n_taxa = 10;
    std::vector<double> beta_flag, gamma_flag, alpha0_flag, alpha1_flag, psi_flag;
    double phi_flag = 10.0, delta_flag = 1.0;
    bool have_phi = false, have_delta = false;

    auto add_common = [&](CLI::App* sub, bool needs_input) {
        auto* in = sub->add_option("--input", cfg.input_path, "input CSV file")
                       ->envname("ZIBMED_INPUT");
        if (needs_input) in->required();
        sub->add_option("--output-dir", cfg.output_dir, "artifact directory")
            ->envname("ZIBMED_OUTPUT_DIR");
        sub->add_option("--k", cfg.config.K, "number of free mixture weights (K+1 components)")
            ->envname("ZIBMED_K");
        sub->add_option("--x1", cfg.contrast.x1, "reference exposure level")->envname("ZIBMED_X1");
        sub->add_option("--x2", cfg.contrast.x2, "comparison exposure level")->envname("ZIBMED_X2");
        sub->add_option("--ci", ci_name, "confidence interval method")
            ->check(CLI::IsMember({"delta", "bootstrap"}))
            ->envname("ZIBMED_CI");
        sub->add_option("--level", cfg.ci_level, "confidence level")->envname("ZIBMED_LEVEL");
        sub->add_option("--fdr", cfg.fdr, "false discovery rate for screening")
            ->envname("ZIBMED_FDR");
        sub->add_option("--seed", cfg.seed, "RNG seed")->envname("ZIBMED_SEED");
        sub->add_option("--boot", cfg.n_boot, "bootstrap replicates")->envname("ZIBMED_BOOT");
        sub->add_option("--replicates", cfg.n_replicates, "simulation replicates")
            ->envname("ZIBMED_REPLICATES");
        sub->add_option("--nodes", cfg.quadrature_nodes, "Gauss-Legendre nodes")
            ->envname("ZIBMED_NODES");
        sub->add_option("--threads", cfg.threads, "worker threads")->envname("ZIBMED_THREADS");
    };

    auto add_truth_flags = [&](CLI::App* sub) {
        sub->add_option("--setting", cfg.setting, "simulation setting")
            ->check(CLI::IsMember({1, 2}))
            ->envname("ZIBMED_SETTING");
        sub->add_option("--n", sim_n, "subjects per dataset")->envname("ZIBMED_N");
        sub->add_option("--scenario", scenario,
                        "setting-1 preset: three-component or two-component")
            ->check(CLI::IsMember({"three-component", "two-component"}));
        sub->add_option("--beta", beta_flag, "outcome coefficients beta0..beta5")->expected(6);
        sub->add_option("--gamma", gamma_flag, "zero-model coefficients gamma0 gamma1")
            ->expected(2);
        sub->add_option("--alpha0", alpha0_flag, "component intercepts (K+1 values)");
        sub->add_option("--alpha1", alpha1_flag, "component slopes (K+1 values)");
        sub->add_option("--psi", psi_flag, "free mixture weights (K values)");
        sub->add_option("--phi", phi_flag, "beta dispersion")->each([&](const std::string&) {
            have_phi = true;
        });
        sub->add_option("--delta", delta_flag, "outcome error SD")->each([&](const std::string&) {
            have_delta = true;
        });
        sub->add_option("--taxa", n_taxa, "setting-2 taxon count (Q+1)")->envname("ZIBMED_TAXA");
        sub->add_option("--lib-lo", cfg.lib_lo, "library size range low");
        sub->add_option("--lib-hi", cfg.lib_hi, "library size range high");
        sub->add_option("--other-zero-mode", other_zero,
                        "setting-2 background zero recipe: unif (gamma0~U(1,2)) or fifty")
            ->check(CLI::IsMember({"unif", "fifty"}));
    };

    CLI::App* fit = app.add_subcommand("fit", "maximum-likelihood ZIBM fit");
    add_common(fit, true);
    CLI::App* effects = app.add_subcommand("effects", "fit plus NIE/NDE confidence intervals");
    add_common(effects, true);
    CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
    add_common(simulate, false);
    add_truth_flags(simulate);
    CLI::App* bench = app.add_subcommand("benchmark", "replicate simulation benchmarks");
    add_common(bench, false);
    add_truth_flags(bench);
    CLI::App* screen = app.add_subcommand("screen", "marginal per-taxon screening with BH control");
    add_common(screen, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit->parsed()) cfg.command = Command::fit;
        if (effects->parsed()) cfg.command = Command::effects;
        if (simulate->parsed()) cfg.command = Command::simulate;
        if (bench->parsed()) cfg.command = Command::benchmark;
        if (screen->parsed()) cfg.command = Command::screen;
        cfg.ci_method = ci_name == "delta" ? CiMethod::delta : CiMethod::bootstrap;

        if (cfg.command == Command::simulate || cfg.command == Command::benchmark) {
            ParameterVector truth =
                scenario == "two-component" ? two_component_truth() : three_component_truth();
            MixtureConfig truth_cfg{truth.psi.size()};
            if (!alpha0_flag.empty()) truth.alpha0 = alpha0_flag;
            if (!alpha1_flag.empty()) truth.alpha1 = alpha1_flag;
            if (!psi_flag.empty()) truth.psi = psi_flag;
            if (!beta_flag.empty()) std::copy_n(beta_flag.begin(), 6, truth.beta.begin());
            if (!gamma_flag.empty()) std::copy_n(gamma_flag.begin(), 2, truth.gamma.begin());
            if (have_phi) truth.phi = phi_flag;
            if (have_delta) truth.delta_sd = delta_flag;
            truth_cfg.K = truth.psi.size();
            if (truth.alpha0.size() != truth_cfg.K + 1 || truth.alpha1.size() != truth_cfg.K + 1)
                throw std::runtime_error("alpha0/alpha1 must have K+1 entries matching psi");

            cfg.setting1.truth = truth;
            cfg.setting1.config = truth_cfg;
            cfg.setting1.n = sim_n > 0 ? sim_n : 300;
            cfg.setting1.contrast = cfg.contrast;

            cfg.setting2.n = sim_n > 0 ? sim_n : 200;
            cfg.setting2.n_taxa = n_taxa;
            cfg.setting2.contrast = cfg.contrast;
            cfg.setting2.other_zero_mode = other_zero == "fifty"
                                               ? OtherTaxaZeroMode::fifty_pct
                                               : OtherTaxaZeroMode::unif_1_2;
            if (cfg.command == Command::benchmark && cfg.setting == 1)
                cfg.config = truth_cfg;  // fit the generating component count
        }
        return run(cfg);
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
}
