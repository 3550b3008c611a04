#pragma once

#include <string>
#include <vector>

#include "scm/inference.hpp"
#include "scm/panel.hpp"
#include "scm/solver.hpp"

namespace scm {

// In-time placebo: pretend treatment happened at placebo_year and run the
// full inference pipeline on the shortened windows. post_window_end
// defaults to the true treatment year so genuinely treated periods never
// leak into the placebo evaluation window; it may be raised explicitly
// (placebo_year == T0 with post_window_end == t_end reproduces the main
// study exactly).
struct BacktestConfig {
    StudyConfig base;
    int placebo_year = 0;
    int post_window_end = 0;  // 0 = default to base treatment year

    BacktestConfig() = default;
    BacktestConfig(StudyConfig base_config, int year);

    // The derived study the backtest actually runs.
    StudyConfig backdated_config() const;
    void validate() const;
};

InferenceReport in_time_placebo(const PanelDataset& data, const BacktestConfig& backtest);

struct LeaveOneOutResult {
    std::string excluded;
    WeightVector weights;  // on the reduced pool
    GapSeries gaps;
    bool skipped = false;
    std::string skip_reason;
};

// One re-estimation per donor with base weight above kSupportThreshold,
// each on the pool minus that donor; ordered by excluded unit id. An
// exclusion that leaves no pool is skipped and flagged.
std::vector<LeaveOneOutResult> leave_one_out(const PanelDataset& data,
                                             const StudyConfig& config,
                                             const WeightVector& base_weights);

// `excluded_donor,year,synthetic`
std::string loo_gaps_to_csv(const std::vector<LeaveOneOutResult>& results);

}  // namespace scm
