#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scm/panel.hpp"
#include "scm/solver.hpp"

namespace scm {

// Exact permutation p-value k/N.
struct Rational {
    long long num = 0;
    long long den = 1;

    double decimal() const { return static_cast<double>(num) / static_cast<double>(den); }
    bool operator==(const Rational&) const = default;
};

struct PlaceboRun {
    std::string unit;
    WeightVector weights;
    GapSeries gaps;
};

struct SkippedUnit {
    std::string unit;
    std::string reason;
};

// Per-unit RMSPE-ratio table entry; `retained` carries the MSPE-filter
// decision, `pre_mspe_multiple` the unit's pre-MSPE as a multiple of the
// treated unit's.
struct RatioRow {
    std::string unit;
    bool is_treated = false;
    double pre_mspe = 0.0;
    double pre_rmspe = 0.0;
    double post_rmspe = 0.0;
    std::optional<double> ratio;
    bool retained = true;
    double pre_mspe_multiple = 0.0;
};

struct FilterDecision {
    std::string unit;
    bool retained = true;
    double pre_mspe_multiple = 0.0;
};

// Placebo-in-space permutation inference for one study.
struct InferenceReport {
    WeightVector weights;    // treated unit's fit
    GapSeries treated_gaps;
    std::vector<PlaceboRun> placebos;  // unit-id order
    std::vector<SkippedUnit> skipped;
    std::vector<RatioRow> ratios;      // treated + placebos, unit-id order
    Rational p_value;                  // over all units with a defined ratio
    std::optional<Rational> filtered_p_value;  // over MSPE-retained units
    bool degenerate_perfect_fit = false;  // treated pre-MSPE was exactly zero
    bool backdated = false;
    bool placebo_pool_includes_treated = false;
    double mspe_cutoff = 10.0;
    std::vector<int> fit_years;   // effective windows of the treated fit
    std::vector<int> eval_years;
    std::vector<std::string> retained_donors;
    std::vector<DroppedDonor> dropped_donors;
};

// Re-fits the study once per donor, with that donor as the fake treated
// unit and the remaining donors as its pool (the truly treated unit stays
// out unless config.include_treated_in_placebo_pools). Units that fail the
// missing-data requirements are reported in `skipped`, never fatal.
// Results are ordered by unit id.
std::vector<PlaceboRun> run_placebos(const PanelDataset& data, const StudyConfig& config,
                                     std::vector<SkippedUnit>* skipped = nullptr);

// "At least cutoff times larger" excludes: retained iff
// pre_mspe < cutoff * treated_pre_mspe. A treated pre-MSPE of exactly zero
// makes the comparison impossible; the degenerate flag is set and only
// perfect-fit placebos are retained.
std::vector<FilterDecision> mspe_filter(const std::vector<PlaceboRun>& placebos,
                                        double treated_pre_mspe, double cutoff,
                                        bool* degenerate_perfect_fit = nullptr);

// Ratio table for the treated unit and every placebo, sorted by unit id.
// Units with a zero pre-RMSPE get an undefined ratio.
std::vector<RatioRow> rmspe_ratios(const GapSeries& treated_gaps,
                                   const std::string& treated_id,
                                   const std::vector<PlaceboRun>& placebos);

// p = #{u : ratio_u >= ratio_treated} / #{u : ratio defined}; the treated
// unit counts in both. Throws SolverError when the treated ratio is
// undefined. Rows without a defined ratio are excluded from N.
Rational permutation_pvalue(const std::vector<RatioRow>& rows);

// Full pipeline: fit, placebos, filter, ratios, p-value.
InferenceReport run_inference(const PanelDataset& data, const StudyConfig& config);

// `unit,pre_rmspe,post_rmspe,ratio,retained_flag`
std::string ratios_to_csv(const std::vector<RatioRow>& rows);
// `unit,year,gap` over every placebo run
std::string placebo_gaps_to_csv(const std::vector<PlaceboRun>& placebos);

}  // namespace scm
