#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "zibmed/simulate.hpp"

using namespace zibmed;

namespace {

ParameterVector table1_three_component() {
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

SettingISpec spec_three(std::size_t n, std::uint64_t seed) {
    SettingISpec spec;
    spec.n = n;
    spec.config = MixtureConfig{2};
    spec.truth = table1_three_component();
    spec.library_sizes = sample_library_sizes(512, kDefaultLibLo, kDefaultLibHi, seed + 1);
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST_CASE("library size sampler") {
    const auto v = sample_library_sizes(1000, kDefaultLibLo, kDefaultLibHi, 42);
    for (auto l : v) {
        CHECK(l >= kDefaultLibLo);
        CHECK(l <= kDefaultLibHi);
    }
    const auto w = sample_library_sizes(1000, kDefaultLibLo, kDefaultLibHi, 42);
    CHECK(v == w);
    const auto c = sample_library_sizes(10, 5000, 5000, 1);
    for (auto l : c) CHECK(l == 5000);
}

TEST_CASE("setting 1 masks and outcome construction") {
    const SettingISpec spec = spec_three(400, 7);
    const SimulatedDataset sim = generate_setting1(spec);
    REQUIRE(sim.dataset.n() == 400);
    std::size_t n_false = 0;
    for (std::size_t i = 0; i < sim.dataset.n(); ++i) {
        const auto& r = sim.dataset.records[i];
        CHECK(!(sim.true_zero_mask[i] && sim.false_zero_mask[i]));
        if (sim.true_zero_mask[i]) CHECK(sim.latent_m[i] == 0.0);
        if (sim.false_zero_mask[i]) {
            ++n_false;
            CHECK(sim.latent_m[i] > 0.0);
            CHECK(sim.latent_m[i] * static_cast<double>(r.lib_size) < 1.0);
            CHECK(r.m_obs == 0.0);
        }
        if (r.m_obs > 0.0) CHECK(r.m_obs == sim.latent_m[i]);
        CHECK((r.x == 0.0 || r.x == 1.0));
    }
    CHECK(n_false > 0);
    // determinism
    const SimulatedDataset again = generate_setting1(spec);
    CHECK(again.dataset.records[13].y == sim.dataset.records[13].y);
    CHECK(again.dataset.records[13].m_obs == sim.dataset.records[13].m_obs);
}

TEST_CASE("setting 1 latent mean matches the model mean") {
    // law of large numbers against mean_abundance / (1 - Delta)
    SettingISpec spec = spec_three(1000000, 19);
    const SimulatedDataset sim = generate_setting1(spec);
    const MixtureConfig cfg{2};
    for (double x : {0.0, 1.0}) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < sim.dataset.n(); ++i) {
            if (sim.dataset.records[i].x != x || sim.latent_m[i] == 0.0) continue;
            sum += sim.latent_m[i];
            ++count;
        }
        const double expected =
            mean_abundance(spec.truth, cfg, x) / (1.0 - zero_probability(spec.truth, x));
        CHECK_THAT(sum / static_cast<double>(count),
                   Catch::Matchers::WithinRel(expected, 0.01));
    }
}

TEST_CASE("setting 1 degenerate all-zero mediator") {
    SettingISpec spec = spec_three(200, 3);
    spec.truth.gamma[0] = std::numeric_limits<double>::infinity();  // Delta == 1
    const SimulatedDataset sim = generate_setting1(spec);
    for (std::size_t i = 0; i < sim.dataset.n(); ++i) {
        CHECK(sim.dataset.records[i].m_obs == 0.0);
        CHECK(sim.true_zero_mask[i] == 1);
        CHECK(sim.false_zero_mask[i] == 0);
    }
}

TEST_CASE("setting 2 construction invariants") {
    SettingIISpec spec;
    spec.n = 150;
    spec.n_taxa = 10;
    spec.library_sizes = sample_library_sizes(512, kDefaultLibLo, kDefaultLibHi, 9);
    spec.seed = 31;
    const SimulatedTaxaData sim = generate_setting2(spec);
    REQUIRE(sim.n() == 150);
    REQUIRE(sim.n_taxa() == 10);
    CHECK(sim.calibration_ok);
    CHECK_THAT(sim.achieved_false_zero_rate, Catch::Matchers::WithinAbs(0.20, 0.011));

    std::size_t zeros = 0, cells = 0;
    for (std::size_t i = 0; i < sim.n(); ++i) {
        double obs_sum = 0.0, latent_sum = 0.0;
        for (std::size_t t = 0; t < sim.n_taxa(); ++t) {
            const double ra = sim.abundance[i][t];
            obs_sum += ra;
            latent_sum += sim.latent_ra[i][t];
            ++cells;
            if (ra == 0.0) ++zeros;
            // observed RA is an integer count divided by the library size
            const double count = ra * static_cast<double>(sim.lib_size[i]);
            CHECK_THAT(count, Catch::Matchers::WithinAbs(std::round(count), 1e-6));
            CHECK(!(sim.true_zero_mask[i][t] && sim.false_zero_mask[i][t]));
            if (sim.true_zero_mask[i][t]) CHECK(sim.latent_ra[i][t] == 0.0);
            if (sim.false_zero_mask[i][t]) {
                CHECK(sim.latent_ra[i][t] > 0.0);
                CHECK(ra == 0.0);
            }
        }
        CHECK(obs_sum <= 1.0 + 1e-9);
        // present-taxon latent abundances form a composition
        CHECK_THAT(latent_sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
        // taxon 1 is never truly zero
        CHECK(sim.true_zero_mask[i][0] == 0);
        CHECK(sim.latent_ra[i][0] > 0.0);
    }
    // appendix recipe: overall zero share lands in the reported band
    const double zero_share = static_cast<double>(zeros) / static_cast<double>(cells);
    CHECK(zero_share > 0.688 - 0.05);
    CHECK(zero_share < 0.816 + 0.05);
}

TEST_CASE("setting 2 truth labels: only the first two taxa carry effects") {
    SettingIISpec spec;
    spec.n = 60;
    spec.n_taxa = 12;
    spec.library_sizes = sample_library_sizes(256, kDefaultLibLo, kDefaultLibHi, 2);
    spec.seed = 17;
    const SimulatedTaxaData sim = generate_setting2(spec);
    CHECK(std::abs(sim.truth_effects[0].nie1) > 1e-6);
    CHECK(sim.truth_effects[0].nie2 == 0.0);
    CHECK(std::abs(sim.truth_effects[1].nie1) > 1e-6);
    CHECK(std::abs(sim.truth_effects[1].nie2) > 1e-6);
    for (std::size_t t = 2; t < sim.n_taxa(); ++t) {
        CHECK(sim.truth_effects[t].nie1 == 0.0);
        CHECK(sim.truth_effects[t].nie2 == 0.0);
        CHECK(sim.truth_effects[t].nie == 0.0);
    }
    // determinism
    const SimulatedTaxaData again = generate_setting2(spec);
    CHECK(again.abundance[5] == sim.abundance[5]);
    CHECK(again.y[5] == sim.y[5]);
}

TEST_CASE("setting 2 background-zero recipe switch") {
    SettingIISpec spec;
    spec.n = 400;
    spec.n_taxa = 8;
    spec.library_sizes = sample_library_sizes(256, kDefaultLibLo, kDefaultLibHi, 4);
    spec.seed = 5;
    spec.other_zero_mode = OtherTaxaZeroMode::fifty_pct;
    const SimulatedTaxaData sim = generate_setting2(spec);
    for (std::size_t q = 2; q < 8; ++q) {
        CHECK(sim.gamma0_other[q] == 0.0);
        double zeros = 0.0;
        for (std::size_t i = 0; i < sim.n(); ++i)
            zeros += sim.abundance[i][q] == 0.0 ? 1.0 : 0.0;
        // ~50% true zeros plus a modest false-zero excess
        CHECK(zeros / static_cast<double>(sim.n()) > 0.40);
        CHECK(zeros / static_cast<double>(sim.n()) < 0.75);
    }
}
