#include <doctest.h>

#include <cmath>
#include <random>

#include "scm/panel.hpp"
#include "support/temp_dir.hpp"

using namespace scm;
using scm::testing::TempDir;
using scm::testing::spit;

namespace {

StudyConfig small_config() {
    StudyConfig cfg;
    cfg.name = "test";
    cfg.outcome = {"y", OutcomeKind::Level, "y", std::nullopt};
    cfg.treated = "SWE";
    cfg.donors = {"DNK", "NOR", "FIN"};
    cfg.fit_years = {1880, 1885};
    cfg.eval_years = {1886, 1888};
    return cfg;
}

// fully observed 4-unit panel over 1880..1888
PanelDataset full_panel() {
    PanelBuilder b;
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(3.0, 9.0);
    for (const auto& unit : {"SWE", "DNK", "NOR", "FIN"}) {
        const double base = u(rng);
        for (int y = 1880; y <= 1888; ++y) {
            b.set(unit, y, "y", base + 0.07 * (y - 1880) + 0.01 * ((y * 7) % 5));
        }
    }
    return b.build();
}

}  // namespace

TEST_CASE("load_panel ingests a small long-format file") {
    TempDir dir;
    spit(dir.file("p.csv"),
         "iso,year,rgdppc\n"
         "SWE,1870,5.92\n"
         "SWE,1871,6.07\n"
         "DNK,1870,\n");
    auto data = load_panel(dir.file("p.csv"), CsvSchema{});
    CHECK(data.units() == std::vector<std::string>{"SWE", "DNK"});
    CHECK(data.years() == std::vector<int>{1870, 1871});
    CHECK(data.missing_count() == 1);
    CHECK(data.cell("SWE", 1870, "rgdppc") == 5.92);
    CHECK_FALSE(data.cell("DNK", 1870, "rgdppc").has_value());
    CHECK(data.has_row("DNK", 1870));
    CHECK_FALSE(data.has_row("DNK", 1871));
}

TEST_CASE("load_panel validation failures") {
    TempDir dir;
    SUBCASE("duplicate key") {
        spit(dir.file("p.csv"), "iso,year,y\nSWE,1870,1\nSWE,1870,2\n");
        CHECK_THROWS_AS(load_panel(dir.file("p.csv"), CsvSchema{}), DataError);
    }
    SUBCASE("non-numeric value") {
        spit(dir.file("p.csv"), "iso,year,y\nSWE,1870,abc\n");
        CHECK_THROWS_AS(load_panel(dir.file("p.csv"), CsvSchema{}), DataError);
    }
    SUBCASE("non-integer year") {
        spit(dir.file("p.csv"), "iso,year,y\nSWE,187O,1\n");
        CHECK_THROWS_AS(load_panel(dir.file("p.csv"), CsvSchema{}), DataError);
    }
    SUBCASE("missing schema column") {
        spit(dir.file("p.csv"), "country,year,y\nSWE,1870,1\n");
        CHECK_THROWS_AS(load_panel(dir.file("p.csv"), CsvSchema{}), DataError);
    }
    SUBCASE("no outcome columns") {
        spit(dir.file("p.csv"), "iso,year\nSWE,1870\n");
        CHECK_THROWS_AS(load_panel(dir.file("p.csv"), CsvSchema{}), DataError);
    }
}

TEST_CASE("schema can rename columns") {
    TempDir dir;
    spit(dir.file("p.csv"), "country,yr,gdp_col\nSweden,1870,5.92\n");
    CsvSchema schema;
    schema.unit_column = "country";
    schema.year_column = "yr";
    schema.series = {{"gdp_col", "rgdppc"}};
    auto data = load_panel(dir.file("p.csv"), schema);
    CHECK(data.cell("SWE", 1870, "rgdppc") == 5.92);  // alias applied too
}

TEST_CASE("round-trip: write then load preserves cells and missing exactly") {
    TempDir dir;
    PanelBuilder b;
    std::mt19937 rng(12345);
    std::uniform_real_distribution<double> u(0.001, 5000.0);
    for (const auto& unit : {"SWE", "DNK", "USA"}) {
        for (int y = 1870; y <= 1880; ++y) {
            b.touch(unit, y);
            if ((rng() % 5) != 0) b.set(unit, y, "a", u(rng) * std::exp(u(rng) * 1e-3));
            if ((rng() % 7) != 0) b.set(unit, y, "b", -u(rng));
        }
    }
    b.declare_series("a").declare_series("b");
    auto original = b.build();
    write_panel_csv(original, dir.file("out.csv"), CsvSchema{});
    auto reloaded = load_panel(dir.file("out.csv"), CsvSchema{});
    REQUIRE(reloaded.units() == original.units());
    REQUIRE(reloaded.years() == original.years());
    REQUIRE(reloaded.series() == original.series());
    CHECK(reloaded.missing_count() == original.missing_count());
    for (const auto& unit : original.units()) {
        for (int y : original.years()) {
            CHECK(reloaded.has_row(unit, y) == original.has_row(unit, y));
            for (const auto& s : original.series()) {
                CHECK(reloaded.cell(unit, y, s) == original.cell(unit, y, s));
            }
        }
    }
}

TEST_CASE("resolve_outcome") {
    PanelBuilder b;
    b.set("SWE", 1870, "imports", 10.0).set("SWE", 1870, "gdp", 100.0);
    b.set("SWE", 1871, "imports", 12.0);
    b.touch("SWE", 1872);
    b.set("SWE", 1873, "imports", 1.0).set("SWE", 1873, "gdp", 0.0);
    b.declare_series("gdp");
    auto data = b.build();

    OutcomeSpec level{"imports", OutcomeKind::Level, "imports", std::nullopt};
    OutcomeSpec share{"share", OutcomeKind::ShareOfGdp, "imports", "gdp"};

    CHECK(resolve_outcome(data, level, "SWE", 1870) == 10.0);  // identity on raw cells
    CHECK(resolve_outcome(data, share, "SWE", 1870) == 10.0);  // 100 * 10 / 100
    CHECK_FALSE(resolve_outcome(data, share, "SWE", 1871).has_value());  // gdp missing
    CHECK_FALSE(resolve_outcome(data, level, "SWE", 1872).has_value());
    CHECK_THROWS_AS(resolve_outcome(data, share, "SWE", 1873), DataError);  // zero gdp
    OutcomeSpec unknown{"x", OutcomeKind::Level, "nope", std::nullopt};
    CHECK_THROWS_AS(resolve_outcome(data, unknown, "SWE", 1870), DataError);
    OutcomeSpec bad_spec{"x", OutcomeKind::ShareOfGdp, "imports", std::nullopt};
    CHECK_THROWS_AS(resolve_outcome(data, bad_spec, "SWE", 1870), ConfigError);
}

TEST_CASE("share-of-gdp is invariant under common rescaling") {
    std::mt19937 rng(77);
    std::uniform_real_distribution<double> u(0.5, 300.0);
    for (double c : {2.0, 0.125, 1e4}) {
        PanelBuilder b1, b2;
        for (int y = 1870; y <= 1875; ++y) {
            const double num = u(rng), den = u(rng);
            b1.set("SWE", y, "num", num).set("SWE", y, "den", den);
            b2.set("SWE", y, "num", c * num).set("SWE", y, "den", c * den);
        }
        auto d1 = b1.build(), d2 = b2.build();
        OutcomeSpec share{"s", OutcomeKind::ShareOfGdp, "num", "den"};
        for (int y = 1870; y <= 1875; ++y) {
            const double a = *resolve_outcome(d1, share, "SWE", y);
            const double b = *resolve_outcome(d2, share, "SWE", y);
            CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));
        }
    }
}

TEST_CASE("study config validation") {
    StudyConfig cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    SUBCASE("treated in donors") {
        cfg.donors.push_back("SWE");
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SUBCASE("duplicate donor") {
        cfg.donors.push_back("DNK");
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SUBCASE("empty donors") {
        cfg.donors.clear();
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SUBCASE("eval window must touch the treatment year") {
        cfg.eval_years = {1887, 1888};
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SUBCASE("cutoff must be positive") {
        cfg.mspe_cutoff = 0.0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SUBCASE("single-year fit window refused") {
        cfg.fit_years = {1885, 1885};
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
}

TEST_CASE("build_matrices on a fully observed panel is a no-op policy") {
    auto data = full_panel();
    auto cfg = small_config();
    for (auto policy : {MissingPolicy::DropUnit, MissingPolicy::ShrinkWindow}) {
        cfg.missing_policy = policy;
        auto m = build_matrices(data, cfg);
        CHECK(m.donors == cfg.donors);
        CHECK(m.fit_years.front() == 1880);
        CHECK(m.fit_years.back() == 1885);
        CHECK(m.eval_years == std::vector<int>{1886, 1887, 1888});
        CHECK(m.dropped.empty());
        CHECK(m.donor_fit.allFinite());
        CHECK(m.donor_eval.allFinite());
        CHECK(m.treated_fit.allFinite());
        CHECK(m.treated_eval.allFinite());
    }
}

TEST_CASE("drop-unit removes donors with any missing outcome") {
    PanelBuilder b;
    for (const auto& unit : {"SWE", "DNK", "NOR"}) {
        for (int y = 1880; y <= 1888; ++y) b.set(unit, y, "y", 1.0 + 0.1 * (y - 1880));
    }
    // FIN has no series at all (rows exist, no values)
    for (int y = 1880; y <= 1888; ++y) b.touch("FIN", y);
    auto data = b.build();
    auto cfg = small_config();
    cfg.missing_policy = MissingPolicy::DropUnit;
    auto m = build_matrices(data, cfg);
    CHECK(m.donors == std::vector<std::string>{"DNK", "NOR"});
    REQUIRE(m.dropped.size() == 1);
    CHECK(m.dropped[0].unit == "FIN");
    CHECK(m.fit_years.front() == 1880);  // drop-unit never shrinks the window
}

TEST_CASE("shrink-window advances the fit start over a leading gap") {
    PanelBuilder b;
    for (const auto& unit : {"SWE", "DNK", "FIN"}) {
        for (int y = 1880; y <= 1888; ++y) b.set(unit, y, "y", 2.0 + 0.1 * (y - 1880));
    }
    for (int y = 1881; y <= 1888; ++y) b.set("NOR", y, "y", 1.5 + 0.1 * (y - 1880));
    b.touch("NOR", 1880);  // NOR missing 1880 only
    auto data = b.build();
    auto cfg = small_config();
    cfg.missing_policy = MissingPolicy::ShrinkWindow;
    auto m = build_matrices(data, cfg);
    CHECK(m.fit_years.front() == 1881);
    CHECK(m.fit_years.back() == 1885);
    CHECK(m.donors == cfg.donors);  // NOR retained
    CHECK(m.dropped.empty());
}

TEST_CASE("shrink-window still drops donors with no data or eval gaps") {
    PanelBuilder b;
    for (const auto& unit : {"SWE", "DNK"}) {
        for (int y = 1880; y <= 1888; ++y) b.set(unit, y, "y", 2.0 + 0.1 * (y - 1880));
    }
    for (int y = 1880; y <= 1888; ++y) b.touch("FIN", y);  // no series at all
    for (int y = 1880; y <= 1887; ++y) b.set("NOR", y, "y", 1.0);  // missing eval 1888
    b.touch("NOR", 1888);
    auto data = b.build();
    auto cfg = small_config();
    cfg.missing_policy = MissingPolicy::ShrinkWindow;
    auto m = build_matrices(data, cfg);
    CHECK(m.donors == std::vector<std::string>{"DNK"});
    CHECK(m.dropped.size() == 2);
    CHECK(m.fit_years.front() == 1880);
}

TEST_CASE("build_matrices errors") {
    auto cfg = small_config();
    SUBCASE("treated with missing fit cells") {
        PanelBuilder b;
        for (const auto& unit : {"DNK", "NOR", "FIN"}) {
            for (int y = 1880; y <= 1888; ++y) b.set(unit, y, "y", 1.0);
        }
        for (int y = 1880; y <= 1888; ++y) {
            if (y != 1883) b.set("SWE", y, "y", 1.0);
        }
        b.touch("SWE", 1883);
        CHECK_THROWS_AS(build_matrices(b.build(), cfg), DataError);
    }
    SUBCASE("all donors dropped") {
        PanelBuilder b;
        for (int y = 1880; y <= 1888; ++y) b.set("SWE", y, "y", 1.0);
        for (const auto& unit : {"DNK", "NOR", "FIN"}) {
            for (int y = 1880; y <= 1888; ++y) b.touch(unit, y);
        }
        cfg.missing_policy = MissingPolicy::DropUnit;
        CHECK_THROWS_AS(build_matrices(b.build(), cfg), DataError);
    }
    SUBCASE("unknown donor") {
        cfg.donors.push_back("XXX");
        CHECK_THROWS_AS(build_matrices(full_panel(), cfg), ConfigError);
    }
    SUBCASE("window outside dataset years") {
        cfg.eval_years = {1886, 1900};
        CHECK_THROWS_AS(build_matrices(full_panel(), cfg), ConfigError);
    }
}

TEST_CASE("growth_table basics") {
    PanelBuilder b;
    b.set("A", 1880, "x", 100.0).set("A", 1881, "x", 50.0).set("A", 1882, "x", 75.0);
    b.set("B", 1880, "x", 10.0).set("B", 1881, "x", 10.0).set("B", 1882, "x", 10.0);
    auto data = b.build();

    auto t = growth_table(data, "x", {"A", "B"}, {1880, 1882});
    REQUIRE(t.rows == std::vector<std::string>{"A", "B", "Total"});
    REQUIRE(t.years == std::vector<int>{1881, 1882});
    CHECK(*t.cells[0][0].value == doctest::Approx(-50.0));
    CHECK(*t.cells[0][1].value == doctest::Approx(50.0));
    CHECK(*t.cells[1][0].value == doctest::Approx(0.0));  // constant series
    // Total: 110 -> 60 -> 85
    CHECK(*t.cells[2][0].value == doctest::Approx(100.0 * (60.0 - 110.0) / 110.0));
    CHECK(*t.cells[2][1].value == doctest::Approx(100.0 * (85.0 - 60.0) / 60.0));
}

TEST_CASE("growth_table total row matches aggregate import growth") {
    // two trade partners whose 1887->1888 totals move 297.41M -> 324.709M
    PanelBuilder b;
    b.set("A", 1887, "imports", 197410000.0).set("A", 1888, "imports", 214709000.0);
    b.set("B", 1887, "imports", 100000000.0).set("B", 1888, "imports", 110000000.0);
    auto t = growth_table(b.build(), "imports", {"A", "B"}, {1887, 1888});
    const double total = *t.cells[2][0].value;
    CHECK(std::abs(total - 9.18) <= 0.01);
    CHECK(std::lround(total) == 9);
}

TEST_CASE("growth_table flags zero bases and propagates missing") {
    PanelBuilder b;
    b.set("A", 1880, "x", 0.0).set("A", 1881, "x", 5.0).set("A", 1882, "x", 6.0);
    b.touch("B", 1880);
    b.set("B", 1881, "x", 5.0).set("B", 1882, "x", 10.0);
    auto t = growth_table(b.build(), "x", {"A", "B"}, {1880, 1882});
    CHECK(t.cells[0][0].undefined);  // 0 -> 5 has no defined growth
    CHECK_FALSE(t.cells[0][0].value.has_value());
    CHECK_FALSE(t.cells[1][0].value.has_value());  // B missing 1880
    CHECK(*t.cells[1][1].value == doctest::Approx(100.0));
    // Total at 1881 needs both units at 1880; B is missing there
    CHECK_FALSE(t.cells[2][0].value.has_value());
    CHECK(*t.cells[2][1].value == doctest::Approx(100.0 * (16.0 - 10.0) / 10.0));
}

TEST_CASE("growth_table input validation") {
    PanelBuilder b;
    b.set("A", 1880, "x", 1.0).set("A", 1881, "x", 2.0);
    auto data = b.build();
    CHECK_THROWS_AS(growth_table(data, "nope", {"A"}, {1880, 1881}), DataError);
    CHECK_THROWS_AS(growth_table(data, "x", {"ZZZ"}, {1880, 1881}), DataError);
    CHECK_THROWS_AS(growth_table(data, "x", {"A"}, {1880, 1885}), DataError);
    CHECK_THROWS_AS(growth_table(data, "x", {"A"}, {1880, 1880}), DataError);
    CHECK_THROWS_AS(growth_table(data, "x", {}, {1880, 1881}), DataError);
}

TEST_CASE("growth composed over consecutive years matches endpoint ratio") {
    PanelBuilder b;
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> u(5.0, 50.0);
    std::vector<double> values;
    for (int y = 1870; y <= 1890; ++y) {
        values.push_back(u(rng));
        b.set("A", y, "x", values.back());
    }
    auto t = growth_table(b.build(), "x", {"A"}, {1870, 1890});
    double product = 1.0;
    for (const auto& cell : t.cells[0]) product *= 1.0 + *cell.value / 100.0;
    const double endpoint = values.back() / values.front();
    CHECK(std::abs(product - endpoint) <= 1e-10 * std::abs(endpoint));
}

TEST_CASE("the bundled extract loads as 10 units x 21 years") {
    const std::filesystem::path path =
        std::filesystem::path(SCM_REPO_DIR) / "data" / "jst_extract_1870_1890.csv";
    REQUIRE(std::filesystem::exists(path));
    auto data = load_panel(path, CsvSchema{});
    CHECK(data.units().size() == 10);
    CHECK(data.years().size() == 21);
    CHECK(data.years().front() == 1870);
    CHECK(data.years().back() == 1890);
    CHECK(data.has_series("rgdpbarro"));
    CHECK(data.has_series("gdp"));
    // documented gaps: no Swiss imports, no Finnish fiscal series,
    // no Swiss expenditure in 1870
    CHECK_FALSE(data.cell("CHE", 1880, "imports").has_value());
    CHECK_FALSE(data.cell("FIN", 1880, "revenue").has_value());
    CHECK_FALSE(data.cell("CHE", 1870, "expenditure").has_value());
    CHECK(data.cell("CHE", 1871, "expenditure").has_value());
}

TEST_CASE("unit aliases normalize JST country labels") {
    CHECK(canonical_unit_id("Sweden") == "SWE");
    CHECK(canonical_unit_id("UK") == "GBR");
    CHECK(canonical_unit_id("United States") == "USA");
    CHECK(canonical_unit_id("SWE") == "SWE");
    CHECK(canonical_unit_id("Atlantis") == "Atlantis");  // unknown passes through
}
