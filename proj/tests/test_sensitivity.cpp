#include <doctest.h>

#include <cmath>
#include <random>

#include "scm/sensitivity.hpp"

using namespace scm;

namespace {

StudyConfig base_config() {
    StudyConfig cfg;
    cfg.name = "sens";
    cfg.outcome = {"y", OutcomeKind::Level, "y", std::nullopt};
    cfg.treated = "TRT";
    cfg.donors = {"AAA", "BBB", "CCC", "DDD"};
    cfg.fit_years = {1875, 1885};
    cfg.eval_years = {1886, 1889};
    return cfg;
}

// The treated unit follows a donor mix until break_year and jumps afterwards.
// Donors share a common trend with small idiosyncrasies, so placebo fits are
// comparable to the treated unit's and survive the MSPE filter.
PanelDataset break_panel(int break_year, unsigned seed = 9) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> eps(0.0, 0.05);
    PanelBuilder b;
    std::vector<std::vector<double>> series;
    const std::vector<std::string> donors = {"AAA", "BBB", "CCC", "DDD"};
    for (std::size_t j = 0; j < donors.size(); ++j) {
        std::vector<double> s;
        for (int y = 1875; y <= 1889; ++y) {
            const double t = static_cast<double>(y - 1875);
            s.push_back(5.0 + 0.12 * t + 0.35 * std::sin(0.5 * t) +
                        0.2 * static_cast<double>(j) +
                        0.12 * std::cos(0.9 * t + 1.7 * static_cast<double>(j)) +
                        eps(rng));
            b.set(donors[j], y, "y", s.back());
        }
        series.push_back(std::move(s));
    }
    for (int y = 1875; y <= 1889; ++y) {
        const std::size_t t = static_cast<std::size_t>(y - 1875);
        // idiosyncratic noise at donor scale keeps the treated pre-fit
        // comparable to the placebo fits
        double v = 0.45 * series[0][t] + 0.3 * series[1][t] + 0.25 * series[3][t] +
                   1.8 * eps(rng);
        if (y > break_year) v += 2.5;
        b.set("TRT", y, "y", v);
    }
    return b.build();
}

}  // namespace

TEST_CASE("backtest validation") {
    BacktestConfig bt(base_config(), 1880);
    CHECK(bt.post_window_end == 1885);  // defaults to the true treatment year
    CHECK_NOTHROW(bt.validate());
    CHECK(bt.backdated_config().fit_years == YearRange{1875, 1880});
    CHECK(bt.backdated_config().eval_years == YearRange{1881, 1885});

    SUBCASE("too few fit years") {
        BacktestConfig early(base_config(), 1875);
        CHECK_THROWS_AS(early.validate(), ConfigError);
    }
    SUBCASE("placebo year after the true treatment year") {
        BacktestConfig late(base_config(), 1887);
        CHECK_THROWS_AS(late.validate(), ConfigError);
    }
    SUBCASE("post window beyond the study horizon") {
        BacktestConfig bad(base_config(), 1880);
        bad.post_window_end = 1895;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
}

TEST_CASE("backdating to the true treatment year reproduces the main study") {
    auto data = break_panel(1885);
    auto cfg = base_config();
    auto main_report = run_inference(data, cfg);

    BacktestConfig bt(cfg, 1885);
    bt.post_window_end = 1889;  // full original evaluation window
    auto backdated = in_time_placebo(data, bt);

    CHECK_FALSE(backdated.backdated);
    CHECK(backdated.p_value == main_report.p_value);
    CHECK(weights_to_csv(backdated.weights) == weights_to_csv(main_report.weights));
    CHECK(gaps_to_csv(backdated.treated_gaps) == gaps_to_csv(main_report.treated_gaps));
    CHECK(ratios_to_csv(backdated.ratios) == ratios_to_csv(main_report.ratios));
    CHECK(placebo_gaps_to_csv(backdated.placebos) ==
          placebo_gaps_to_csv(main_report.placebos));
}

TEST_CASE("a break after the true treatment year leaves the backdated ratio at placebo level") {
    auto data = break_panel(1885);  // break only in the true post period
    auto cfg = base_config();

    BacktestConfig bt(cfg, 1881);  // eval window 1882..1885 is still clean
    auto report = in_time_placebo(data, bt);
    CHECK(report.backdated);

    const auto treated_ratio = report.treated_gaps.rmspe_ratio();
    REQUIRE(treated_ratio.has_value());
    double max_retained_placebo = 0.0;
    int retained = 0;
    for (const auto& r : report.ratios) {
        if (!r.is_treated && r.retained && r.ratio.has_value()) {
            max_retained_placebo = std::max(max_retained_placebo, *r.ratio);
            ++retained;
        }
    }
    REQUIRE(retained > 0);
    CHECK(*treated_ratio < max_retained_placebo);
    CHECK(report.p_value.num > 1);  // no longer the extreme unit

    // the true-period study does flag the break
    auto main_report = run_inference(data, cfg);
    const auto main_ratio = main_report.treated_gaps.rmspe_ratio();
    REQUIRE(main_ratio.has_value());
    CHECK(*main_ratio > *treated_ratio);
}

TEST_CASE("leave_one_out re-estimates once per positive-weight donor") {
    auto data = break_panel(1885);
    auto cfg = base_config();
    auto report = run_inference(data, cfg);
    auto base = report.weights;
    auto results = leave_one_out(data, cfg, base);

    const auto support = base.support();
    REQUIRE(results.size() == support.size());
    for (const auto& r : results) {
        REQUIRE_FALSE(r.skipped);
        // the excluded donor is gone from the reduced pool
        for (const auto& id : r.weights.donor_ids) CHECK(id != r.excluded);
        // reduced pool is the original minus one
        CHECK(r.weights.donor_ids.size() == cfg.donors.size() - 1);
        // simplex invariants still hold
        CHECK(r.weights.weights.minCoeff() >= 0.0);
        CHECK(std::abs(r.weights.weights.sum() - 1.0) <= 1e-9);
        // restricting the pool can never improve the fit
        CHECK(r.weights.objective >= base.objective - 1e-9);
    }
    // ordered by excluded unit id
    for (std::size_t i = 1; i < results.size(); ++i) {
        CHECK(results[i - 1].excluded < results[i].excluded);
    }
}

TEST_CASE("leave_one_out with vertex base weights runs exactly once") {
    auto cfg = base_config();
    cfg.donors = {"AAA", "BBB"};
    PanelBuilder b;
    for (int y = 1875; y <= 1889; ++y) {
        b.set("AAA", y, "y", 3.0 + 0.1 * (y - 1875));
        b.set("BBB", y, "y", 8.0 - 0.05 * (y - 1875));
        b.set("TRT", y, "y", 3.0 + 0.1 * (y - 1875) + (y > 1885 ? 0.8 : 0.0));
    }
    auto data = b.build();
    const StudyMatrices m = build_matrices(data, cfg);
    auto base = fit_weights(m.treated_fit, m.donor_fit, m.donors);
    CHECK(base.support() == std::vector<std::string>{"AAA"});
    auto results = leave_one_out(data, cfg, base);
    REQUIRE(results.size() == 1);
    CHECK(results[0].excluded == "AAA");
    CHECK_FALSE(results[0].skipped);
    CHECK(results[0].weights.donor_ids == std::vector<std::string>{"BBB"});
}

TEST_CASE("leave_one_out skips an exclusion that empties the pool") {
    auto cfg = base_config();
    cfg.donors = {"AAA"};
    PanelBuilder b;
    for (int y = 1875; y <= 1889; ++y) {
        b.set("AAA", y, "y", 3.0 + 0.1 * (y - 1875));
        b.set("TRT", y, "y", 3.1 + 0.1 * (y - 1875));
    }
    auto data = b.build();
    const StudyMatrices m = build_matrices(data, cfg);
    auto base = fit_weights(m.treated_fit, m.donor_fit, m.donors);
    auto results = leave_one_out(data, cfg, base);
    REQUIRE(results.size() == 1);
    CHECK(results[0].skipped);
}
