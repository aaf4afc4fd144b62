#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "zibmed/driver.hpp"

using namespace zibmed;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("zibmed_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("ingest_csv single-mediator smoke") {
    const fs::path dir = temp_dir("ingest1");
    write_file(dir / "d.csv", "y,x,lib_size,m\n1.5,0,1000,0.25\n-0.5,1,2000,0\n2.25,1,1500,0.5\n");
    const IngestResult r = ingest_csv((dir / "d.csv").string());
    REQUIRE(std::holds_alternative<Dataset>(r));
    const Dataset& d = std::get<Dataset>(r);
    REQUIRE(d.n() == 3);
    CHECK(d.records[0].y == 1.5);
    CHECK(d.records[1].m_obs == 0.0);
    CHECK(d.records[2].lib_size == 1500);
}

TEST_CASE("ingest_csv taxa table smoke") {
    const fs::path dir = temp_dir("ingest2");
    std::string text = "y,x,lib_size";
    for (int t = 1; t <= 10; ++t) text += ",taxon" + std::to_string(t);
    text += "\n";
    for (int i = 0; i < 4; ++i) {
        text += "1.0," + std::to_string(i % 2) + ",1000";
        for (int t = 0; t < 10; ++t) text += ",0.01";
        text += "\n";
    }
    write_file(dir / "t.csv", text);
    const IngestResult r = ingest_csv((dir / "t.csv").string());
    REQUIRE(std::holds_alternative<TaxaTable>(r));
    CHECK(std::get<TaxaTable>(r).n_taxa() == 10);
    CHECK(std::get<TaxaTable>(r).n() == 4);
}

TEST_CASE("ingest_csv hard errors carry locations") {
    const fs::path dir = temp_dir("ingest3");
    write_file(dir / "bad.csv", "y,x,lib_size,m\n1.0,0,1000,0.5.1\n");
    try {
        ingest_csv((dir / "bad.csv").string());
        FAIL("expected CsvError");
    } catch (const CsvError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("'m'") != std::string::npos);
    }

    write_file(dir / "miss.csv", "y,x,lib_size,m\n1.0,0,,0.5\n");
    try {
        ingest_csv((dir / "miss.csv").string());
        FAIL("expected CsvError");
    } catch (const CsvError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    write_file(dir / "ra.csv", "y,x,lib_size,m\n1.0,0,1000,1.0\n");
    CHECK_THROWS_AS(ingest_csv((dir / "ra.csv").string()), CsvError);

    write_file(dir / "lib.csv", "y,x,lib_size,m\n1.0,0,12.5,0.4\n");
    CHECK_THROWS_AS(ingest_csv((dir / "lib.csv").string()), CsvError);

    write_file(dir / "nohdr.csv", "a,b,c\n1,2,3\n");
    CHECK_THROWS_AS(ingest_csv((dir / "nohdr.csv").string()), CsvError);
}

TEST_CASE("simulate then ingest round-trips bit-exactly") {
    const fs::path dir = temp_dir("roundtrip");
    RunConfig cfg;
    cfg.command = Command::simulate;
    cfg.setting = 1;
    cfg.seed = 21;
    cfg.output_dir = (dir / "out").string();
    cfg.setting1.n = 50;
    cfg.setting1.config = MixtureConfig{1};
    ParameterVector truth;
    truth.beta = {-5, 10, 8, 1, 1, 1};
    truth.delta_sd = 1.0;
    truth.gamma = {-1.5, -0.5};
    truth.phi = 10.0;
    truth.alpha0 = {1.0, -5.0};
    truth.alpha1 = {-0.5, -0.5};
    truth.psi = {0.3};
    cfg.setting1.truth = truth;
    REQUIRE(run(cfg) == 0);

    const IngestResult r = ingest_csv((dir / "out" / "dataset.csv").string());
    REQUIRE(std::holds_alternative<Dataset>(r));
    const Dataset& d = std::get<Dataset>(r);

    SettingISpec spec = cfg.setting1;
    spec.seed = cfg.seed;
    spec.library_sizes = sample_library_sizes(cfg.library_pool, cfg.lib_lo, cfg.lib_hi,
                                              derive_seed(cfg.seed, 0x6c696273ULL));
    const SimulatedDataset sim = generate_setting1(spec);
    REQUIRE(d.n() == sim.dataset.n());
    for (std::size_t i = 0; i < d.n(); ++i) {
        CHECK(d.records[i].y == sim.dataset.records[i].y);
        CHECK(d.records[i].m_obs == sim.dataset.records[i].m_obs);
        CHECK(d.records[i].x == sim.dataset.records[i].x);
        CHECK(d.records[i].lib_size == sim.dataset.records[i].lib_size);
    }
}

TEST_CASE("fit and effects commands produce deterministic artifacts") {
    const fs::path dir = temp_dir("determinism");

    RunConfig sim;
    sim.command = Command::simulate;
    sim.setting = 1;
    sim.seed = 33;
    sim.output_dir = (dir / "sim").string();
    sim.setting1.n = 80;
    sim.setting1.config = MixtureConfig{0};
    ParameterVector truth;
    truth.beta = {0.5, 4.0, 1.0, 0.8, 0.3, 0.5};
    truth.delta_sd = 1.0;
    truth.gamma = {-0.8, -0.5};
    truth.phi = 9.0;
    truth.alpha0 = {-1.2};
    truth.alpha1 = {-0.4};
    sim.setting1.truth = truth;
    REQUIRE(run(sim) == 0);

    RunConfig eff;
    eff.command = Command::effects;
    eff.input_path = (dir / "sim" / "dataset.csv").string();
    eff.config = MixtureConfig{0};
    eff.seed = 1;
    for (const char* tag : {"a", "b"}) {
        RunConfig c = eff;
        c.output_dir = (dir / tag).string();
        REQUIRE(run(c) == 0);
    }
    for (const char* name : {"fit.json", "effects.json", "run_config.json"}) {
        INFO(name);
        std::string a = read_file(dir / "a" / name);
        std::string b = read_file(dir / "b" / name);
        // the echoed output_dir differs by construction; strip it
        const std::string ka = "\"output_dir\"";
        auto strip = [&](std::string s) {
            const auto pos = s.find(ka);
            if (pos == std::string::npos) return s;
            const auto end = s.find('\n', pos);
            return s.erase(pos, end - pos);
        };
        CHECK(strip(a) == strip(b));
        CHECK(!a.empty());
    }
}

TEST_CASE("screen command writes result tables and heatmap") {
    const fs::path dir = temp_dir("screen");
    RunConfig sim;
    sim.command = Command::simulate;
    sim.setting = 2;
    sim.seed = 11;
    sim.output_dir = (dir / "sim").string();
    sim.setting2.n = 120;
    sim.setting2.n_taxa = 4;
    REQUIRE(run(sim) == 0);

    RunConfig sc;
    sc.command = Command::screen;
    sc.input_path = (dir / "sim" / "taxa.csv").string();
    sc.config = MixtureConfig{0};
    sc.seed = 3;
    sc.threads = 2;
    sc.output_dir = (dir / "out").string();
    REQUIRE(run(sc) == 0);
    CHECK(fs::exists(dir / "out" / "screen.csv"));
    CHECK(fs::exists(dir / "out" / "screen.json"));
    CHECK(fs::exists(dir / "out" / "heatmap.csv"));
    const std::string csv = read_file(dir / "out" / "screen.csv");
    CHECK(csv.find("taxon1") != std::string::npos);
}

TEST_CASE("heatmap export formats cells by presence and sign") {
    TaxaTable table;
    table.y = {1.0, 2.0, 3.0};
    table.x = {0.0, 1.0, 0.0};
    table.lib_size = {1000, 1000, 1000};
    table.taxa_names = {"t1", "t2"};
    table.abundance = {{0.1, 0.0}, {0.0, 0.2}, {0.3, 0.4}};

    ScreenResult sr;
    sr.fdr = 0.2;
    sr.rows.resize(2);
    sr.rows[0].index = 0;
    sr.rows[0].taxon = "t1";
    sr.rows[0].fitted = true;
    sr.rows[0].sig_nie1 = true;
    sr.rows[0].effects.nie1.estimate = -0.5;
    sr.rows[0].effects.nie1.p_value = 0.04;
    sr.rows[1].index = 1;
    sr.rows[1].taxon = "t2";
    sr.rows[1].fitted = true;
    sr.rows[1].sig_nie1 = false;  // not significant: excluded entirely

    const fs::path dir = temp_dir("heatmap");
    export_heatmap(sr, table, (dir / "h.csv").string());
    const std::string text = read_file(dir / "h.csv");
    // row structure: present cells carry sign(NIE1)*(1-p), absent cells stay empty
    std::stringstream ss(text);
    std::string header, row;
    std::getline(ss, header);
    std::getline(ss, row);
    CHECK(header == "taxon,sample1,sample2,sample3");
    std::stringstream rs(row);
    std::string cell;
    std::getline(rs, cell, ',');
    CHECK(cell == "t1");
    std::getline(rs, cell, ',');
    CHECK_THAT(std::stod(cell), Catch::Matchers::WithinAbs(-0.96, 1e-12));
    std::getline(rs, cell, ',');
    CHECK(cell.empty());
    std::getline(rs, cell, ',');
    CHECK_THAT(std::stod(cell), Catch::Matchers::WithinAbs(-0.96, 1e-12));

    // no significant taxa: header only
    sr.rows[0].sig_nie1 = false;
    export_heatmap(sr, table, (dir / "h2.csv").string());
    CHECK(read_file(dir / "h2.csv") == "taxon,sample1,sample2,sample3\n");
}

TEST_CASE("run reports hard failures with nonzero status") {
    RunConfig bad;
    bad.command = Command::fit;
    bad.input_path = "/nonexistent/file.csv";
    bad.output_dir = (temp_dir("fail")).string();
    CHECK_THROWS_AS(run(bad), CsvError);
}
