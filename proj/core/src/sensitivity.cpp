#include "scm/sensitivity.hpp"

#include <algorithm>
#include <sstream>

#include "scm/csv.hpp"

namespace scm {

BacktestConfig::BacktestConfig(StudyConfig base_config, int year)
    : base(std::move(base_config)), placebo_year(year),
      post_window_end(base.treatment_year()) {}

StudyConfig BacktestConfig::backdated_config() const {
    StudyConfig derived = base;
    derived.fit_years = {base.fit_years.first, placebo_year};
    const int post_end = post_window_end != 0 ? post_window_end : base.treatment_year();
    derived.eval_years = {placebo_year + 1, post_end};
    derived.backdate_year.reset();
    return derived;
}

void BacktestConfig::validate() const {
    base.validate();
    if (placebo_year > base.treatment_year()) {
        throw ConfigError("placebo treatment year cannot follow the true one");
    }
    if (placebo_year - base.fit_years.first + 1 < 2) {
        throw ConfigError("backdated fit window needs at least 2 years");
    }
    const int post_end = post_window_end != 0 ? post_window_end : base.treatment_year();
    if (post_end <= placebo_year) {
        throw ConfigError("backdated evaluation window is empty");
    }
    if (post_end > base.eval_years.last) {
        throw ConfigError("backdated evaluation window extends past the study horizon");
    }
}

InferenceReport in_time_placebo(const PanelDataset& data, const BacktestConfig& backtest) {
    backtest.validate();
    InferenceReport report = run_inference(data, backtest.backdated_config());
    report.backdated = backtest.placebo_year < backtest.base.treatment_year();
    return report;
}

std::vector<LeaveOneOutResult> leave_one_out(const PanelDataset& data,
                                             const StudyConfig& config,
                                             const WeightVector& base_weights) {
    config.validate();
    std::vector<std::string> positive = base_weights.support(kSupportThreshold);
    std::sort(positive.begin(), positive.end());

    std::vector<LeaveOneOutResult> results;
    for (const auto& excluded : positive) {
        LeaveOneOutResult res;
        res.excluded = excluded;
        StudyConfig reduced = config;
        reduced.donors.clear();
        for (const auto& d : config.donors) {
            if (d != excluded) reduced.donors.push_back(d);
        }
        if (reduced.donors.empty()) {
            res.skipped = true;
            res.skip_reason = "no donors remain after exclusion";
            results.push_back(std::move(res));
            continue;
        }
        try {
            const StudyMatrices m = build_matrices(data, reduced);
            res.weights = fit_weights(m.treated_fit, m.donor_fit, m.donors);
            res.gaps = synthesize(res.weights, m.donor_all(), m.treated_all(),
                                  m.all_years(), m.fit_years.size(), m.donors);
        } catch (const Error& e) {
            res.skipped = true;
            res.skip_reason = e.what();
        }
        results.push_back(std::move(res));
    }
    return results;
}

std::string loo_gaps_to_csv(const std::vector<LeaveOneOutResult>& results) {
    std::ostringstream out;
    out << "excluded_donor,year,synthetic\n";
    for (const auto& r : results) {
        if (r.skipped) continue;
        for (std::size_t i = 0; i < r.gaps.years.size(); ++i) {
            out << r.excluded << ',' << r.gaps.years[i] << ','
                << csv::format_sig6(r.gaps.synthetic[static_cast<Eigen::Index>(i)])
                << '\n';
        }
    }
    return out.str();
}

}  // namespace scm
