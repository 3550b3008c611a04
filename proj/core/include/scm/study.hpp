#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scm/inference.hpp"
#include "scm/panel.hpp"
#include "scm/sensitivity.hpp"
#include "scm/solver.hpp"

namespace scm {

struct Provenance {
    std::string input_digest;
    std::string tool_version;
    std::string timestamp;  // ISO-8601 UTC; excluded from idempotence hashing
};

// Resolved outcome values for every study unit over the effective years;
// feeds the spaghetti plot emission.
struct OutcomePanel {
    std::vector<std::string> units;  // treated first, then donors in config order
    std::vector<int> years;
    std::vector<std::vector<std::optional<double>>> values;  // units x years
};

struct SensitivityResults {
    std::optional<InferenceReport> backtest;
    std::vector<LeaveOneOutResult> leave_one_out;
};

// Everything one study produces.
struct StudyBundle {
    StudyConfig config;
    OutcomePanel outcome_panel;
    InferenceReport inference;
    SensitivityResults sensitivity;
    Provenance provenance;

    const WeightVector& weights() const { return inference.weights; }
    const GapSeries& gaps() const { return inference.treated_gaps; }
};

struct RunOptions {
    bool with_sensitivity = true;
    std::optional<double> mspe_cutoff_override;
    std::optional<int> backdate_year_override;
};

// Orchestrates the full pipeline for one study. Throws ConfigError when the
// config references units absent from the dataset.
StudyBundle run_study(const PanelDataset& data, const StudyConfig& config,
                      const Provenance& provenance, const RunOptions& options = {});

// Emits weights.csv, gaps.csv, ratios.csv, placebo_gaps.csv and report.json
// (plus loo_gaps.csv and backtest/ when sensitivity ran) into out_dir.
// All files are staged as temporaries and renamed on success, so a failure
// never leaves partial outputs behind.
void write_bundle(const StudyBundle& bundle, const std::filesystem::path& out_dir);

// Plot-ready series: spaghetti.csv, paths.csv, gaps_fan.csv, ratio_bars.csv.
void emit_plot_data(const StudyBundle& bundle, const std::filesystem::path& out_dir);

// report.json content; config echo is sufficient to re-run the study.
std::string bundle_report_json(const StudyBundle& bundle);

// Compact machine-readable summary for `--json` output.
std::string bundle_summary_json(const StudyBundle& bundle);

// --- study config JSON ---------------------------------------------------

StudyConfig load_study_config(const std::filesystem::path& path);
StudyConfig study_config_from_json_text(const std::string& text);
std::string study_config_to_json_text(const StudyConfig& config);

// --- replication harness --------------------------------------------------

// One verified target; `warned_only` marks failures downgraded to warnings
// because the dataset's digest differs from the frozen vintage.
struct TargetCheck {
    std::string study;
    std::string name;
    std::string computed;
    std::string target;
    bool pass = false;
    bool warned_only = false;
    std::string note;
};

struct ReplicationSummary {
    std::vector<TargetCheck> checks;
    bool vintage_match = false;
    std::string data_digest;
    std::string expected_digest;
    std::string vintage;
    std::vector<std::string> failed_studies;  // studies that could not run at all

    int hard_failures() const;
    std::string to_text() const;
    std::string to_json() const;
};

// Runs the four bundled study configs (gdp, imports, revenue, expenditure)
// from configs_dir against the dataset, writes each bundle under
// out_dir/<study>/, and checks the results against the frozen targets in
// configs_dir/expectations.json. A study whose required series are absent
// fails alone; the others still run.
ReplicationSummary replicate(const std::filesystem::path& data_path,
                             const std::filesystem::path& out_dir,
                             const std::filesystem::path& configs_dir,
                             const Provenance& provenance);

}  // namespace scm
