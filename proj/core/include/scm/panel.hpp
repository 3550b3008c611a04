#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scm/errors.hpp"

namespace scm {

// Inclusive calendar-year range.
struct YearRange {
    int first = 0;
    int last = 0;

    int count() const { return last - first + 1; }
    bool contains(int y) const { return y >= first && y <= last; }
    bool operator==(const YearRange&) const = default;
};

enum class OutcomeKind { Level, ShareOfGdp };

// How a study outcome is derived from raw panel series.
struct OutcomeSpec {
    std::string name;
    OutcomeKind kind = OutcomeKind::Level;
    std::string numerator;                   // raw series name
    std::optional<std::string> denominator;  // required iff kind == ShareOfGdp

    void validate() const;
};

enum class MissingPolicy { DropUnit, ShrinkWindow };

// Column mapping for long-format CSV ingestion. `series` maps CSV column
// name -> panel series name; when empty, every column other than the unit
// and year columns becomes a series named by its header.
struct CsvSchema {
    std::string unit_column = "iso";
    std::string year_column = "year";
    std::vector<std::pair<std::string, std::string>> series;
};

// Declarative description of one synthetic-control study.
struct StudyConfig {
    std::string name;
    OutcomeSpec outcome;
    std::string treated;
    std::vector<std::string> donors;
    YearRange fit_years;   // [t_start, T0]; T0 = last pre-treatment year
    YearRange eval_years;  // [T0+1, t_end]
    MissingPolicy missing_policy = MissingPolicy::DropUnit;
    double mspe_cutoff = 10.0;
    bool include_treated_in_placebo_pools = false;
    bool filtered_pvalue = false;
    std::optional<int> backdate_year;  // in-time placebo year, if configured
    CsvSchema schema;

    int treatment_year() const { return fit_years.last; }

    // Structural invariants that need no dataset (treated not a donor,
    // window ordering, cutoff positivity, ...). Throws ConfigError.
    void validate() const;
};

// Rectangular unit x year x series store with explicit missing cells.
// Immutable after construction; safe to share across concurrent readers.
class PanelDataset {
public:
    PanelDataset(std::vector<std::string> units, std::vector<int> years,
                 std::vector<std::string> series);

    const std::vector<std::string>& units() const { return units_; }
    const std::vector<int>& years() const { return years_; }
    const std::vector<std::string>& series() const { return series_; }

    bool has_unit(const std::string& unit) const { return unit_index_.count(unit) > 0; }
    bool has_year(int year) const { return year_index_.count(year) > 0; }
    bool has_series(const std::string& name) const { return series_index_.count(name) > 0; }

    // nullopt when the cell is missing. Throws DataError for unknown
    // unit/year/series.
    std::optional<double> cell(const std::string& unit, int year,
                               const std::string& series) const;

    // True when the input carried a row for (unit, year), even one with all
    // outcome fields empty. Cells on absent rows read as missing; only
    // present rows are re-emitted by write_panel_csv.
    bool has_row(const std::string& unit, int year) const;

    // Explicitly-missing cells: empty outcome fields on present rows.
    std::size_t missing_count() const;

private:
    friend class PanelBuilder;

    std::size_t unit_idx(const std::string& unit) const;
    std::size_t year_idx(int year) const;
    std::size_t series_idx(const std::string& name) const;

    std::vector<std::string> units_;
    std::vector<int> years_;
    std::vector<std::string> series_;
    std::unordered_map<std::string, std::size_t> unit_index_;
    std::unordered_map<int, std::size_t> year_index_;
    std::unordered_map<std::string, std::size_t> series_index_;
    std::vector<Eigen::MatrixXd> cells_;  // per series: units x years, NaN = missing
    std::vector<std::uint8_t> row_present_;  // units x years
};

// Incremental construction helper for loaders and tests. Units keep first-
// appearance order, years are sorted ascending, duplicate (unit, year,
// series) assignments are an error.
class PanelBuilder {
public:
    // Registers a (unit, year) row without setting any value; rows created
    // by set() are registered automatically.
    PanelBuilder& touch(const std::string& unit, int year);
    // Pre-registers a series so an all-empty column still exists.
    PanelBuilder& declare_series(const std::string& series);
    PanelBuilder& set(const std::string& unit, int year, const std::string& series,
                      double value);
    PanelDataset build() const;

private:
    struct Key {
        std::string unit;
        int year;
        std::string series;
        bool operator<(const Key& o) const {
            return std::tie(unit, year, series) < std::tie(o.unit, o.year, o.series);
        }
    };
    std::vector<std::string> unit_order_;
    std::vector<std::string> series_order_;
    std::vector<std::pair<std::string, int>> touched_;
    std::map<Key, double> values_;
};

// Canonical ISO-3166 alpha-3 id for a unit label; JST country names and a
// few common aliases map onto codes, anything unrecognized passes through.
std::string canonical_unit_id(const std::string& name);

// Loads a long-format CSV (one row per unit-year) into a validated panel.
// Empty outcome fields become missing cells; duplicate (unit, year) rows,
// non-numeric values, and non-integer years are errors.
PanelDataset load_panel(const std::filesystem::path& path, const CsvSchema& schema);

// Re-emits a panel in the same long format with shortest round-trip number
// rendering, so load_panel(write_panel_csv(p)) == p cell for cell.
void write_panel_csv(const PanelDataset& data, const std::filesystem::path& path,
                     const CsvSchema& schema);

// Derives the study outcome for one cell. Level outcomes echo the raw cell;
// share-of-gdp returns 100 * numerator / denominator (percent). Missing
// inputs propagate; a zero denominator signals corrupt data and throws.
std::optional<double> resolve_outcome(const PanelDataset& data, const OutcomeSpec& spec,
                                      const std::string& unit, int year);

struct DroppedDonor {
    std::string unit;
    std::string reason;
};

// Study-ready matrices: rows are years, columns are retained donors.
struct StudyMatrices {
    Eigen::VectorXd treated_fit;
    Eigen::MatrixXd donor_fit;
    Eigen::VectorXd treated_eval;
    Eigen::MatrixXd donor_eval;
    std::vector<int> fit_years;   // effective fit window
    std::vector<int> eval_years;  // effective eval window
    std::vector<std::string> donors;  // retained, in config order
    std::vector<DroppedDonor> dropped;

    std::vector<int> all_years() const;
    Eigen::VectorXd treated_all() const;
    Eigen::MatrixXd donor_all() const;
};

// Applies the study's missing-data policy and extracts dense matrices.
//
// drop-unit: donors with any missing resolved outcome in fit or eval years
// are removed. shrink-window: donors with no observed outcome at all are
// removed first, then the fit start advances to the earliest year from
// which the treated unit and all remaining donors are continuously
// observed through T0; donors that would force the window below two fit
// years (or that are missing in eval years) are dropped instead. The
// treated unit must be fully observed on the effective windows.
StudyMatrices build_matrices(const PanelDataset& data, const StudyConfig& config);

// Year-over-year percent growth per unit plus a "Total" row computed from
// the cross-unit sum. Missing inputs propagate; a zero base flags the cell
// as undefined rather than throwing.
struct GrowthTable {
    struct Cell {
        std::optional<double> value;
        bool undefined = false;  // previous-year value was zero
    };
    std::vector<std::string> rows;  // units, then "Total"
    std::vector<int> years;         // range.first + 1 .. range.last
    std::vector<std::vector<Cell>> cells;  // rows x years
};

GrowthTable growth_table(const PanelDataset& data, const std::string& series,
                         const std::vector<std::string>& units, YearRange years);

std::string growth_table_to_csv(const GrowthTable& table);

}  // namespace scm
