// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Run with no arguments for every criterion, or pass criterion
// numbers to run a subset, e.g.  ./acceptance 1 5 8
// ZIBMED_ACCEPT_FULL=1 switches criterion 2 from the 30-replicate gating
// tier to the 100-replicate nightly tier.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "zibmed/driver.hpp"
#include "zibmed/effects.hpp"
#include "zibmed/em.hpp"
#include "zibmed/screen.hpp"
#include "zibmed/simulate.hpp"

using namespace zibmed;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::vector<std::string> g_lines;

void report(int criterion, bool pass, const std::string& detail) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "[%s] criterion %d: %s", pass ? "PASS" : "FAIL", criterion,
                  detail.c_str());
    std::puts(buf);
    std::fflush(stdout);
    g_lines.push_back(buf);
    if (!pass) ++g_failures;
}

bool within(double value, double lo, double hi) { return value >= lo && value <= hi; }

ParameterVector three_component_truth() {
    ParameterVector p;
    p.beta = {-5, 10, 8, 1, 1, 1};
    p.delta_sd = 1.0;
    p.gamma = {-1.5, -0.5};
    p.phi = 10.0;
    p.alpha0 = {0.0, -2.0, -5.0};
    p.alpha1 = {-0.5, -0.5, -0.5};
    p.psi = {0.2, 0.3};
    return p;
}

ParameterVector two_component_truth() {
    ParameterVector p = three_component_truth();
    p.alpha0 = {1.0, -5.0};
    p.alpha1 = {-0.5, -0.5};
    p.psi = {0.3};
    return p;
}

SettingISpec setting1_spec(const ParameterVector& truth, std::size_t n, std::uint64_t seed) {
    SettingISpec spec;
    spec.n = n;
    spec.config = MixtureConfig{truth.psi.size()};
    spec.truth = truth;
    spec.library_sizes = sample_library_sizes(1000, kDefaultLibLo, kDefaultLibHi, seed + 99);
    spec.seed = seed;
    return spec;
}

std::size_t hardware_threads() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 2 : hc;
}

// ---- criterion 1: effect formula golden values --------------------------

void criterion1() {
    const EffectContrast c01{0.0, 1.0};
    const EffectPoints e3 = compute_effects(three_component_truth(), MixtureConfig{2}, c01);
    const EffectPoints e2 = compute_effects(two_component_truth(), MixtureConfig{1}, c01);
    const bool ok = std::abs(e3.nie1 - (-0.28)) <= 0.005 && std::abs(e3.nie2 - 0.57) <= 0.005 &&
                    std::abs(e3.nie - 0.29) <= 0.005 && std::abs(e2.nie1 - (-0.18)) <= 0.005 &&
                    std::abs(e2.nie2 - 0.57) <= 0.005 && std::abs(e2.nie - 0.39) <= 0.005;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "effect goldens: 3-comp NIE1=%.4f NIE2=%.4f NIE=%.4f, 2-comp NIE1=%.4f "
                  "NIE2=%.4f NIE=%.4f (tol 0.005)",
                  e3.nie1, e3.nie2, e3.nie, e2.nie1, e2.nie2, e2.nie);
    report(1, ok, buf);
}

// ---- criterion 2: Setting I estimation replication ----------------------

void criterion2() {
    // the 100-replicate tier gates by default; ZIBMED_ACCEPT_FULL=0 selects
    // the 30-replicate smoke tier for constrained machines
    const char* full_env = std::getenv("ZIBMED_ACCEPT_FULL");
    const bool full = !(full_env && std::strcmp(full_env, "0") == 0);
    const std::size_t n_rep = full ? 100 : 30;
    const double cp_lo = full ? 0.88 : 0.83;
    const double cp_hi = full ? 0.99 : 1.00;

    SettingISpec spec = setting1_spec(three_component_truth(), 300, 20260801);
    EmOptions opts;
    opts.seed = 1234;
    opts.n_restarts = 2;
    const auto t0 = std::chrono::steady_clock::now();
    const Setting1Benchmark bench = benchmark(spec, n_rep, opts, hardware_threads());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // 2x the Table-1 reported bias magnitudes
    const double bias_bound[6] = {0.02, 0.12, 0.06, 0.32, 0.40, 0.16};
    bool ok = bench.n_failed <= n_rep / 10;
    std::string detail = full ? "full tier (100 replicates): " : "smoke tier (30 replicates): ";
    for (int j = 0; j < 6; ++j) {
        const BenchmarkRow* row = nullptr;
        for (const auto& r : bench.rows)
            if (r.name == "beta" + std::to_string(j)) row = &r;
        const bool bok = row && std::abs(row->bias) <= bias_bound[j];
        char buf[96];
        std::snprintf(buf, sizeof buf, "bias(b%d)=%+.3f(<=%.2f)%s ", j, row ? row->bias : 1e9,
                      bias_bound[j], bok ? "" : "!");
        detail += buf;
        ok = ok && bok;
    }
    const BenchmarkRow* nie = nullptr;
    for (const auto& r : bench.rows)
        if (r.name == "NIE") nie = &r;
    const bool cp_ok = nie && within(nie->coverage, cp_lo, cp_hi);
    const bool se_ok = nie && within(nie->mean_se, 0.45 * 0.7, 0.45 * 1.3);
    char buf[160];
    std::snprintf(buf, sizeof buf, "CP(NIE)=%.0f%% (band [%.0f,%.0f])%s meanSE(NIE)=%.3f "
                  "(band [0.315,0.585])%s failed=%zu/%zu %.0fs",
                  100.0 * (nie ? nie->coverage : -1), 100.0 * cp_lo, 100.0 * cp_hi,
                  cp_ok ? "" : "!", nie ? nie->mean_se : -1.0, se_ok ? "" : "!",
                  bench.n_failed, n_rep, secs);
    detail += buf;
    report(2, ok && cp_ok && se_ok, detail);
}

// ---- criterion 3: Setting I zero diagnostics -----------------------------

void criterion3() {
    bool all_ok = true;
    std::string detail;
    struct Case {
        const char* name;
        ParameterVector truth;
        std::size_t n;
        std::size_t n_rep;  // enough replication to resolve the band edges
        double zero_target, share_target;
    };
    const Case cases[2] = {{"three-component", three_component_truth(), 300, 1000, 0.413, 0.446},
                           {"two-component", two_component_truth(), 200, 5000, 0.512, 0.756}};
    for (const auto& c : cases) {
        std::vector<double> zf_r(c.n_rep), fs_r(c.n_rep);
        parallel_for(c.n_rep, hardware_threads(), [&](std::size_t r) {
            SettingISpec spec = setting1_spec(c.truth, c.n, derive_seed(555, r));
            const SimulatedDataset sim = generate_setting1(spec);
            zf_r[r] = sim.zero_fraction();
            fs_r[r] = sim.false_zero_share();
        });
        double zsum = 0.0, ssum = 0.0;
        for (std::size_t r = 0; r < c.n_rep; ++r) {
            zsum += zf_r[r];
            ssum += fs_r[r];
        }
        const double zf = zsum / static_cast<double>(c.n_rep);
        const double fs = ssum / static_cast<double>(c.n_rep);
        const bool z_ok = std::abs(zf - c.zero_target) <= 0.03;
        const bool s_ok = std::abs(fs - c.share_target) <= 0.05;
        char buf[192];
        std::snprintf(buf, sizeof buf, "%s (%zu reps): zeros=%.2f%% (target %.1f+-3)%s "
                      "false-share=%.2f%% (target %.1f+-5)%s  ",
                      c.name, c.n_rep, 100.0 * zf, 100.0 * c.zero_target, z_ok ? "" : "!",
                      100.0 * fs, 100.0 * c.share_target, s_ok ? "" : "!");
        detail += buf;
        all_ok = all_ok && z_ok && s_ok;
    }
    if (!all_ok)
        detail += "[the three-component false-zero share is analytically ~63% under the "
                  "Table-1 parameters for any library-size distribution in the stated range; "
                  "the paper's 44.6% is not attainable from its own truth values]";
    report(3, all_ok, detail);
}

// ---- criterion 4: Setting II screening replication -----------------------

void criterion4() {
    SettingIISpec spec;
    spec.n = 200;
    spec.n_taxa = 10;
    spec.library_sizes = sample_library_sizes(1000, kDefaultLibLo, kDefaultLibHi, 404);
    spec.seed = 77001;
    EmOptions opts;
    opts.seed = 42;
    opts.n_restarts = 1;
    const auto t0 = std::chrono::steady_clock::now();
    const Setting2Benchmark bench =
        benchmark(spec, 100, MixtureConfig{1}, opts, 0.2, hardware_threads());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const double r1 = 100.0 * bench.nie1.recall;
    const double p1 = 100.0 * bench.nie1.precision;
    const double r2 = 100.0 * bench.nie2.recall;
    const bool ok = within(r1, 70.0, 90.0) && p1 >= 87.7 && within(r2, 74.8, 94.8) &&
                    bench.n_failed_replicates <= 10;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "Setting II (10 taxa, n=200, FDR 20%%): NIE1 recall=%.1f%% (80+-10) "
                  "precision=%.1f%% (>=87.7) NIE2 recall=%.1f%% (84.8+-10) failed=%zu %.0fs",
                  r1, p1, r2, bench.n_failed_replicates, secs);
    report(4, ok, buf);
}

// ---- criterion 5: likelihood oracle equivalence --------------------------

long double naive_observed_loglik(const Dataset& data, const ParameterVector& p,
                                  const MixtureConfig& cfg) {
    const std::size_t kc = cfg.n_components();
    const QuadratureRule rule = QuadratureRule::gauss_legendre(32);
    long double total = 0.0L;
    for (const auto& rec : data.records) {
        const long double delta = zero_probability(p, rec.x);
        long double sum = 0.0L;
        if (rec.observed_positive()) {
            for (std::size_t k = 0; k < kc; ++k)
                sum += (1.0L - delta) * (long double)p.psi_tilde(k) *
                       std::exp((long double)loglik_group1(rec, k, p, cfg));
        } else {
            sum += delta * std::exp((long double)loglik_group2_zero_component(rec, p));
            for (std::size_t k = 0; k < kc; ++k) {
                const double mu = component_mean(p, k, rec.x);
                const double a = mu * p.phi, b = (1.0 - mu) * p.phi;
                const long double lnB = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
                const long double c = 1.0L / (long double)rec.lib_size;
                const int n = 40000;
                const long double h = c / n;
                long double I = 0.0L;
                for (int j = 1; j <= n; ++j) {
                    const long double m = j * h;
                    const long double resid = rec.y - p.beta[0] - p.beta[1] * m - p.beta[2] -
                                              (p.beta[3] + p.beta[4]) * rec.x -
                                              p.beta[5] * rec.x * m;
                    const long double f =
                        std::exp(-resid * resid / (2.0L * p.delta_sd * p.delta_sd) +
                                 (a - 1.0L) * std::log(m) +
                                 (b - 1.0L) * std::log1p(-(double)m) - lnB);
                    I += ((j == n) ? 1.0L : (j % 2 ? 4.0L : 2.0L)) * f;
                }
                I *= h / 3.0L;
                sum += (1.0L - delta) * (long double)p.psi_tilde(k) *
                       std::exp(-0.5L * (long double)kLnTwoPi) / p.delta_sd * I;
            }
        }
        total += std::log(sum);
    }
    return total;
}

void criterion5() {
    // 20-subject synthetic with shapes above one so the Simpson oracle is clean
    ParameterVector p;
    p.beta = {0.5, 2.0, -1.0, 1.0, 0.5, -0.5};
    p.delta_sd = 1.3;
    p.gamma = {-0.4, 0.6};
    p.phi = 8.0;
    p.alpha0 = {0.8, 0.0};
    p.alpha1 = {-0.3, 0.4};
    p.psi = {0.35};
    MixtureConfig cfg{1};
    Dataset d;
    Rng rng(99);
    for (int i = 0; i < 20; ++i) {
        SubjectRecord r;
        r.x = i % 2 ? 1.0 : 0.0;
        r.lib_size = 3 + rng.uniform_int(0, 37);
        r.m_obs = i % 3 == 0 ? 0.0 : 0.05 + 0.85 * rng.uniform();
        r.y = 1.0 + rng.normal();
        d.records.push_back(r);
    }
    const double mine = observed_loglik(d, p, cfg, QuadratureRule::gauss_legendre(32));
    const long double naive = naive_observed_loglik(d, p, cfg);
    const double diff = std::abs(mine - (double)naive);

    // Monte Carlo vs quadrature for the censored integral at the truth, L=1e5
    const ParameterVector t3 = three_component_truth();
    double worst_rel = 0.0;
    std::mt19937_64 eng(2024);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double c = 1e-5;
    for (std::size_t k = 0; k < 3; ++k) {
        const double mu = component_mean(t3, k, 1.0);
        const double a = mu * t3.phi, b = (1.0 - mu) * t3.phi;
        long double acc = 0.0L;
        const std::size_t N = 1000000;
        for (std::size_t i = 0; i < N; ++i) {
            const double u = (static_cast<double>(i) + unif(eng)) / static_cast<double>(N);
            const double m = c * std::pow(u, 1.0 / a);
            const double resid = -3.0 - t3.beta[0] - t3.beta[1] * m - t3.beta[2] -
                                 (t3.beta[3] + t3.beta[4]) - t3.beta[5] * m;
            acc += std::exp(-0.5L * resid * resid) * std::pow(1.0L - (long double)m, b - 1.0L);
        }
        const long double lnJ_mc = a * std::log((long double)c) - std::log((long double)a) -
                                   (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b)) +
                                   std::log(acc / N);
        const double lnJ_quad = detail::log_false_zero_integral(
            -3.0, 1.0, c, std::log(c), a, b, log_beta(a, b), t3.beta, t3.delta_sd, 32);
        worst_rel = std::max(worst_rel, std::abs(std::exp(lnJ_quad - (double)lnJ_mc) - 1.0));
    }
    char buf[192];
    std::snprintf(buf, sizeof buf,
                  "naive oracle |diff|=%.2e (tol 1e-9); quadrature vs 1e6-draw MC worst "
                  "rel=%.2e (tol 1e-4)",
                  diff, worst_rel);
    report(5, diff <= 1e-9 && worst_rel <= 1e-4, buf);
}

// ---- criterion 6: EM properties ------------------------------------------

void criterion6() {
    MixtureConfig cfg{2};
    SettingISpec spec = setting1_spec(three_component_truth(), 300, 606);
    const SimulatedDataset sim = generate_setting1(spec);
    EmOptions opts;
    opts.seed = 6;
    opts.n_restarts = 2;
    const FitResult fit = em_fit(sim.dataset, cfg, opts);

    bool monotone = !fit.monotone_violation;
    double prev = -1e300;
    for (const auto& [it, ll] : fit.trajectory) {
        if (ll < prev - 1e-10) monotone = false;
        prev = ll;
    }

    const QuadratureRule rule = QuadratureRule::gauss_legendre(32);
    const Responsibilities resp = e_step(sim.dataset, fit.params_hat, cfg, rule);
    double row_err = 0.0;
    for (std::size_t i = 0; i < resp.n; ++i) {
        double s = 0.0;
        for (std::size_t col = 0; col < resp.cols; ++col) s += resp.at(i, col);
        row_err = std::max(row_err, std::abs(s - 1.0));
    }

    Reparam rep{cfg, true};
    const std::vector<double> grad =
        q_gradient(sim.dataset, rep.to_free(fit.params_hat), resp, cfg, rule);
    double gmax = 0.0;
    for (double gj : grad) gmax = std::max(gmax, std::abs(gj));

    // finite-difference agreement at random feasible points
    double fd_err = 0.0;
    for (std::uint64_t seed : {15ULL, 16ULL}) {
        Rng rng(seed);
        ParameterVector pr = three_component_truth();
        for (double& b : pr.beta) b += 0.5 * rng.normal();
        pr.delta_sd = 1.2;
        pr.phi = 8.0;
        for (double& a : pr.alpha0) a += 0.4 * rng.normal();
        const Responsibilities r0 = e_step(sim.dataset, pr, cfg, rule);
        ParameterVector pg = pr;
        for (double& a : pg.alpha0) a += 0.2 * rng.normal();
        pg.beta[1] += 0.3;
        const std::vector<double> theta = rep.to_free(pg);
        const std::vector<double> g = q_gradient(sim.dataset, theta, r0, cfg, rule);
        std::vector<double> v = theta;
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
            v[j] = theta[j] + h;
            const double qp = q_function(sim.dataset, v, r0, cfg, rule);
            v[j] = theta[j] - h;
            const double qm = q_function(sim.dataset, v, r0, cfg, rule);
            v[j] = theta[j];
            fd_err = std::max(fd_err, std::abs((qp - qm) / (2.0 * h) - g[j]));
        }
    }
    char buf[224];
    std::snprintf(buf, sizeof buf,
                  "monotone=%s rowsum_err=%.1e (tol 1e-12) stationarity=%.1e (tol 1e-4) "
                  "grad-vs-FD=%.1e (tol 1e-5) converged=%s",
                  monotone ? "yes" : "NO", row_err, gmax, fd_err, fit.converged ? "yes" : "NO");
    report(6, monotone && row_err <= 1e-12 && gmax < 1e-4 && fd_err < 1e-5 && fit.converged, buf);
}

// ---- criterion 7: information matrix cross-checks ------------------------

void criterion7() {
    MixtureConfig cfg{1};
    SettingISpec spec = setting1_spec(two_component_truth(), 50, 707);
    const SimulatedDataset sim = generate_setting1(spec);
    EmOptions opts;
    opts.seed = 7;
    opts.n_restarts = 2;
    const FitResult fit = em_fit(sim.dataset, cfg, opts);

    const QuadratureRule rule = QuadratureRule::gauss_legendre(32);
    LikelihoodEvaluator ev(sim.dataset, cfg, rule);
    Reparam rep{cfg, true};
    const Eigen::MatrixXd oakes = information_matrix(ev, rep, fit.params_hat);
    const std::vector<double> theta = rep.to_free(fit.params_hat);
    const std::size_t d = theta.size();
    Eigen::MatrixXd direct(d, d);
    auto ll_at = [&](std::vector<double> v) { return ev.observed_loglik(rep.from_free(v)); };
    for (std::size_t i = 0; i < d; ++i) {
        const double hi = 1e-4 * std::max(1.0, std::abs(theta[i]));
        for (std::size_t j = i; j < d; ++j) {
            const double hj = 1e-4 * std::max(1.0, std::abs(theta[j]));
            std::vector<double> v = theta;
            v[i] += hi; v[j] += hj;
            const double fpp = ll_at(v);
            v = theta; v[i] += hi; v[j] -= hj;
            const double fpm = ll_at(v);
            v = theta; v[i] -= hi; v[j] += hj;
            const double fmp = ll_at(v);
            v = theta; v[i] -= hi; v[j] -= hj;
            const double fmm = ll_at(v);
            direct(i, j) = direct(j, i) = -(fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
        }
    }
    const double rel = (oakes - direct).norm() / direct.norm();

    // delta-method SE(NIE) vs a 200-replicate bootstrap on a fresh n=300 set
    SettingISpec spec300 = setting1_spec(two_component_truth(), 300, 717);
    const SimulatedDataset sim300 = generate_setting1(spec300);
    EmOptions bopts;
    bopts.seed = 17;
    bopts.n_restarts = 2;
    const FitResult fit300 = em_fit(sim300.dataset, cfg, bopts);
    const EffectEstimates del = delta_method_ci(fit300, cfg, {0.0, 1.0}, 0.95);
    const EffectEstimates boot = bootstrap_ci(sim300.dataset, cfg, bopts, {0.0, 1.0}, 0.95, 200,
                                              hardware_threads(), &fit300);
    const double se_rel = std::abs(del.nie.std_error - boot.nie.std_error) / boot.nie.std_error;
    char buf[224];
    std::snprintf(buf, sizeof buf,
                  "Oakes-vs-direct rel=%.2e (tol 1e-3); SE(NIE) delta=%.3f boot=%.3f rel "
                  "diff=%.0f%% (tol 25%%; %zu/%zu boot failures)",
                  rel, del.nie.std_error, boot.nie.std_error, 100.0 * se_rel,
                  boot.n_boot_failures, boot.n_boot);
    report(7, rel <= 1e-3 && se_rel <= 0.25 && boot.bootstrap_valid, buf);
}

// ---- criterion 8: BH oracle ----------------------------------------------

void criterion8() {
    Rng rng(88);
    bool ok = true;
    for (int rep = 0; rep < 1000 && ok; ++rep) {
        const std::size_t m = 1 + rng.uniform_int(0, 29);
        std::vector<double> p(m);
        for (double& v : p) {
            v = rng.uniform();
            if (rng.uniform() < 0.15) v = std::round(v * 8.0) / 8.0;
        }
        const std::vector<double> mine = bh_adjust(p);
        // brute force: q_i = min over j >= rank(i) of m p_(j) / j
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
        for (std::size_t i = 0; i < m && ok; ++i) {
            double best = 1.0;
            for (std::size_t j = i; j < m; ++j)
                best = std::min(best, static_cast<double>(m) * p[order[j]] /
                                          static_cast<double>(j + 1));
            if (mine[order[i]] != std::min(best, 1.0)) ok = false;
        }
        const double fdr = rng.uniform(0.01, 0.99);
        std::size_t k = 0;
        for (std::size_t i = 0; i < m; ++i)
            if (p[order[i]] <= static_cast<double>(i + 1) * fdr / static_cast<double>(m))
                k = i + 1;
        for (std::size_t i = 0; i < m && ok; ++i)
            if ((mine[order[i]] <= fdr) != (i < k)) ok = false;
    }
    report(8, ok, "bh_adjust matches the brute-force step-up on 1000 random p-vectors");
}

// ---- criterion 9: determinism --------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void criterion9() {
    const fs::path base = fs::temp_directory_path() / "zibmed_acceptance_det";
    fs::remove_all(base);
    fs::create_directories(base);

    bool ok = true;
    std::string detail = "byte-identical artifacts on repeat runs:";

    // simulate + fit + effects + screen, each run twice into the same dir
    RunConfig sim;
    sim.command = Command::simulate;
    sim.setting = 2;
    sim.seed = 909;
    sim.setting2.n = 100;
    sim.setting2.n_taxa = 5;
    sim.output_dir = (base / "sim").string();

    RunConfig scr;
    scr.command = Command::screen;
    scr.config = MixtureConfig{0};
    scr.seed = 11;
    scr.threads = hardware_threads();
    scr.input_path = (base / "sim" / "taxa.csv").string();
    scr.output_dir = (base / "screen").string();

    RunConfig sim1;
    sim1.command = Command::simulate;
    sim1.setting = 1;
    sim1.seed = 31;
    sim1.setting1.n = 60;
    sim1.setting1.config = MixtureConfig{1};
    sim1.setting1.truth = two_component_truth();
    sim1.output_dir = (base / "sim1").string();

    RunConfig eff;
    eff.command = Command::effects;
    eff.config = MixtureConfig{1};
    eff.seed = 5;
    eff.input_path = (base / "sim1" / "dataset.csv").string();
    eff.output_dir = (base / "eff").string();

    struct Step {
        RunConfig* cfg;
        std::vector<const char*> files;
    };
    std::vector<Step> steps = {{&sim, {"taxa.csv", "truth.json"}},
                               {&sim1, {"dataset.csv", "truth.json"}},
                               {&eff, {"fit.json", "effects.json"}},
                               {&scr, {"screen.csv", "screen.json", "heatmap.csv"}}};
    for (auto& step : steps) {
        if (run(*step.cfg) != 0) {
            ok = false;
            detail += " run-failure";
            break;
        }
        std::vector<std::string> first;
        for (const char* f : step.files)
            first.push_back(slurp(fs::path(step.cfg->output_dir) / f));
        if (run(*step.cfg) != 0) {
            ok = false;
            detail += " rerun-failure";
            break;
        }
        for (std::size_t i = 0; i < step.files.size(); ++i) {
            const std::string second = slurp(fs::path(step.cfg->output_dir) / step.files[i]);
            if (second != first[i] || second.empty()) {
                ok = false;
                detail += std::string(" mismatch:") + step.files[i];
            }
        }
    }
    report(9, ok, ok ? detail + " all matched (simulate/fit/effects/screen)" : detail);
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> which;
    for (int a = 1; a < argc; ++a) which.push_back(std::atoi(argv[a]));
    if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8, 9};

    for (int k : which) {
        switch (k) {
            case 1: criterion1(); break;
            case 2: criterion2(); break;
            case 3: criterion3(); break;
            case 4: criterion4(); break;
            case 5: criterion5(); break;
            case 6: criterion6(); break;
            case 7: criterion7(); break;
            case 8: criterion8(); break;
            case 9: criterion9(); break;
            default:
                std::fprintf(stderr, "unknown criterion %d\n", k);
                return 2;
        }
    }
    std::printf("\n%zu criteria run, %d failed\n", g_lines.size(), g_failures);
    return g_failures == 0 ? 0 : 1;
}
