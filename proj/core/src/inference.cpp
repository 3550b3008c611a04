#include "scm/inference.hpp"

#include <algorithm>
#include <sstream>

#include "scm/csv.hpp"

namespace scm {

namespace {

GapSeries fit_and_synthesize(const PanelDataset& data, const StudyConfig& config,
                             WeightVector* weights_out) {
    const StudyMatrices m = build_matrices(data, config);
    WeightVector w = fit_weights(m.treated_fit, m.donor_fit, m.donors);
    GapSeries g = synthesize(w, m.donor_all(), m.treated_all(), m.all_years(),
                             m.fit_years.size(), m.donors);
    if (weights_out != nullptr) *weights_out = std::move(w);
    return g;
}

}  // namespace

std::vector<PlaceboRun> run_placebos(const PanelDataset& data, const StudyConfig& config,
                                     std::vector<SkippedUnit>* skipped) {
    config.validate();
    std::vector<std::string> pool = config.donors;
    std::sort(pool.begin(), pool.end());

    std::vector<PlaceboRun> runs;
    for (const auto& unit : pool) {
        StudyConfig placebo = config;
        placebo.treated = unit;
        placebo.donors.clear();
        for (const auto& d : config.donors) {
            if (d != unit) placebo.donors.push_back(d);
        }
        if (config.include_treated_in_placebo_pools) {
            placebo.donors.push_back(config.treated);
        }
        if (placebo.donors.empty()) {
            if (skipped != nullptr) {
                skipped->push_back({unit, "no control units remain"});
            }
            continue;
        }
        try {
            PlaceboRun run;
            run.unit = unit;
            run.gaps = fit_and_synthesize(data, placebo, &run.weights);
            runs.push_back(std::move(run));
        } catch (const Error& e) {
            if (skipped != nullptr) skipped->push_back({unit, e.what()});
        }
    }
    return runs;
}

std::vector<FilterDecision> mspe_filter(const std::vector<PlaceboRun>& placebos,
                                        double treated_pre_mspe, double cutoff,
                                        bool* degenerate_perfect_fit) {
    if (!(cutoff > 0.0)) {
        throw ConfigError("mspe cutoff must be positive");
    }
    if (treated_pre_mspe < 0.0) {
        throw SolverError("negative treated pre-MSPE");
    }
    const bool degenerate = treated_pre_mspe == 0.0;
    if (degenerate_perfect_fit != nullptr) *degenerate_perfect_fit = degenerate;

    std::vector<FilterDecision> decisions;
    for (const auto& p : placebos) {
        FilterDecision d;
        d.unit = p.unit;
        if (degenerate) {
            // cannot scale a zero baseline; only perfect placebo fits stay
            d.retained = p.gaps.pre_mspe == 0.0;
            d.pre_mspe_multiple = std::numeric_limits<double>::infinity();
        } else {
            d.pre_mspe_multiple = p.gaps.pre_mspe / treated_pre_mspe;
            // "at least cutoff times larger" is excluded: boundary is out
            d.retained = p.gaps.pre_mspe < cutoff * treated_pre_mspe;
        }
        decisions.push_back(d);
    }
    return decisions;
}

std::vector<RatioRow> rmspe_ratios(const GapSeries& treated_gaps,
                                   const std::string& treated_id,
                                   const std::vector<PlaceboRun>& placebos) {
    std::vector<RatioRow> rows;
    RatioRow treated;
    treated.unit = treated_id;
    treated.is_treated = true;
    treated.pre_mspe = treated_gaps.pre_mspe;
    treated.pre_rmspe = treated_gaps.pre_rmspe;
    treated.post_rmspe = treated_gaps.post_rmspe;
    treated.ratio = treated_gaps.rmspe_ratio();
    treated.pre_mspe_multiple = 1.0;
    rows.push_back(treated);
    for (const auto& p : placebos) {
        RatioRow row;
        row.unit = p.unit;
        row.pre_mspe = p.gaps.pre_mspe;
        row.pre_rmspe = p.gaps.pre_rmspe;
        row.post_rmspe = p.gaps.post_rmspe;
        row.ratio = p.gaps.rmspe_ratio();
        rows.push_back(row);
    }
    std::sort(rows.begin(), rows.end(),
              [](const RatioRow& a, const RatioRow& b) { return a.unit < b.unit; });
    return rows;
}

Rational permutation_pvalue(const std::vector<RatioRow>& rows) {
    const RatioRow* treated = nullptr;
    for (const auto& r : rows) {
        if (r.is_treated) treated = &r;
    }
    if (treated == nullptr) {
        throw SolverError("ratio table has no treated unit");
    }
    if (!treated->ratio.has_value()) {
        throw SolverError("treated unit's RMSPE ratio is undefined (perfect pre fit)");
    }
    long long count = 0;
    long long total = 0;
    for (const auto& r : rows) {
        if (!r.ratio.has_value()) continue;  // undefined ratios leave N
        ++total;
        if (*r.ratio >= *treated->ratio) ++count;
    }
    return Rational{count, total};
}

InferenceReport run_inference(const PanelDataset& data, const StudyConfig& config) {
    InferenceReport report;
    const StudyMatrices m = build_matrices(data, config);
    report.weights = fit_weights(m.treated_fit, m.donor_fit, m.donors);
    report.treated_gaps = synthesize(report.weights, m.donor_all(), m.treated_all(),
                                     m.all_years(), m.fit_years.size(), m.donors);
    report.fit_years = m.fit_years;
    report.eval_years = m.eval_years;
    report.retained_donors = m.donors;
    report.dropped_donors = m.dropped;
    report.mspe_cutoff = config.mspe_cutoff;
    report.placebo_pool_includes_treated = config.include_treated_in_placebo_pools;

    report.placebos = run_placebos(data, config, &report.skipped);
    report.ratios = rmspe_ratios(report.treated_gaps, config.treated, report.placebos);

    const auto decisions = mspe_filter(report.placebos, report.weights.pre_mspe,
                                       config.mspe_cutoff,
                                       &report.degenerate_perfect_fit);
    for (auto& row : report.ratios) {
        if (row.is_treated) continue;
        for (const auto& d : decisions) {
            if (d.unit == row.unit) {
                row.retained = d.retained;
                row.pre_mspe_multiple = d.pre_mspe_multiple;
            }
        }
    }

    report.p_value = permutation_pvalue(report.ratios);
    if (config.filtered_pvalue) {
        std::vector<RatioRow> retained_rows;
        for (const auto& r : report.ratios) {
            if (r.retained) retained_rows.push_back(r);
        }
        report.filtered_p_value = permutation_pvalue(retained_rows);
    }
    return report;
}

std::string ratios_to_csv(const std::vector<RatioRow>& rows) {
    std::ostringstream out;
    out << "unit,pre_rmspe,post_rmspe,ratio,retained_flag\n";
    for (const auto& r : rows) {
        out << r.unit << ',' << csv::format_sig6(r.pre_rmspe) << ','
            << csv::format_sig6(r.post_rmspe) << ',';
        if (r.ratio.has_value()) out << csv::format_sig6(*r.ratio);
        out << ',' << (r.retained ? 1 : 0) << '\n';
    }
    return out.str();
}

std::string placebo_gaps_to_csv(const std::vector<PlaceboRun>& placebos) {
    std::ostringstream out;
    out << "unit,year,gap\n";
    for (const auto& p : placebos) {
        for (std::size_t i = 0; i < p.gaps.years.size(); ++i) {
            out << p.unit << ',' << p.gaps.years[i] << ','
                << csv::format_sig6(p.gaps.gap[static_cast<Eigen::Index>(i)]) << '\n';
        }
    }
    return out.str();
}

}  // namespace scm
