#include "scm/panel.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "scm/csv.hpp"

namespace scm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::unordered_map<std::string, std::string>& unit_aliases() {
    // JST country labels and a few informal spellings -> ISO-3166 alpha-3.
    static const std::unordered_map<std::string, std::string> aliases = {
        {"Australia", "AUS"},      {"Belgium", "BEL"},
        {"Canada", "CAN"},         {"Denmark", "DNK"},
        {"Finland", "FIN"},        {"France", "FRA"},
        {"Germany", "DEU"},        {"Italy", "ITA"},
        {"Japan", "JPN"},          {"Netherlands", "NLD"},
        {"The Netherlands", "NLD"},{"Norway", "NOR"},
        {"Portugal", "PRT"},       {"Spain", "ESP"},
        {"Sweden", "SWE"},         {"Switzerland", "CHE"},
        {"United Kingdom", "GBR"}, {"UK", "GBR"},
        {"United States", "USA"},  {"USA", "USA"},
        {"U.S.", "USA"},           {"US", "USA"},
    };
    return aliases;
}

}  // namespace

std::string canonical_unit_id(const std::string& name) {
    auto it = unit_aliases().find(name);
    return it == unit_aliases().end() ? name : it->second;
}

// --- OutcomeSpec / StudyConfig ---------------------------------------------

void OutcomeSpec::validate() const {
    if (numerator.empty()) {
        throw ConfigError("outcome '" + name + "': numerator series is required");
    }
    if (kind == OutcomeKind::ShareOfGdp && !denominator.has_value()) {
        throw ConfigError("outcome '" + name +
                          "': share-of-gdp requires a denominator series");
    }
    if (kind == OutcomeKind::Level && denominator.has_value()) {
        throw ConfigError("outcome '" + name +
                          "': level outcomes take no denominator");
    }
}

void StudyConfig::validate() const {
    outcome.validate();
    if (treated.empty()) throw ConfigError("treated unit is required");
    if (donors.empty()) throw ConfigError("donor pool is empty");
    std::set<std::string> seen;
    for (const auto& d : donors) {
        if (d == treated) {
            throw ConfigError("treated unit '" + treated + "' cannot be a donor");
        }
        if (!seen.insert(d).second) {
            throw ConfigError("duplicate donor '" + d + "'");
        }
    }
    if (fit_years.first > fit_years.last) {
        throw ConfigError("fit window start exceeds its end");
    }
    if (fit_years.count() < 2) {
        throw ConfigError("fit window must span at least 2 years");
    }
    if (eval_years.first != fit_years.last + 1) {
        throw ConfigError("evaluation window must start the year after the "
                          "treatment year");
    }
    if (eval_years.first > eval_years.last) {
        throw ConfigError("evaluation window start exceeds its end");
    }
    if (!(mspe_cutoff > 0.0)) {
        throw ConfigError("mspe cutoff must be positive");
    }
    if (backdate_year.has_value() &&
        (*backdate_year <= fit_years.first || *backdate_year > fit_years.last)) {
        throw ConfigError("backdate year must fall inside the fit window");
    }
}

// --- PanelDataset -----------------------------------------------------------

PanelDataset::PanelDataset(std::vector<std::string> units, std::vector<int> years,
                           std::vector<std::string> series)
    : units_(std::move(units)), years_(std::move(years)), series_(std::move(series)) {
    for (std::size_t i = 0; i < units_.size(); ++i) {
        if (!unit_index_.emplace(units_[i], i).second) {
            throw DataError("duplicate unit id '" + units_[i] + "'");
        }
    }
    for (std::size_t i = 0; i < years_.size(); ++i) {
        if (i > 0 && years_[i] <= years_[i - 1]) {
            throw DataError("years must be strictly increasing");
        }
        year_index_.emplace(years_[i], i);
    }
    for (std::size_t i = 0; i < series_.size(); ++i) {
        if (!series_index_.emplace(series_[i], i).second) {
            throw DataError("duplicate series name '" + series_[i] + "'");
        }
    }
    cells_.assign(series_.size(),
                  Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(units_.size()),
                                            static_cast<Eigen::Index>(years_.size()),
                                            kNaN));
    row_present_.assign(units_.size() * years_.size(), 0);
}

std::size_t PanelDataset::unit_idx(const std::string& unit) const {
    auto it = unit_index_.find(unit);
    if (it == unit_index_.end()) throw DataError("unknown unit '" + unit + "'");
    return it->second;
}

std::size_t PanelDataset::year_idx(int year) const {
    auto it = year_index_.find(year);
    if (it == year_index_.end()) {
        throw DataError("year " + std::to_string(year) + " not in dataset");
    }
    return it->second;
}

std::size_t PanelDataset::series_idx(const std::string& name) const {
    auto it = series_index_.find(name);
    if (it == series_index_.end()) throw DataError("unknown series '" + name + "'");
    return it->second;
}

std::optional<double> PanelDataset::cell(const std::string& unit, int year,
                                         const std::string& series) const {
    const double v = cells_[series_idx(series)](static_cast<Eigen::Index>(unit_idx(unit)),
                                                static_cast<Eigen::Index>(year_idx(year)));
    if (std::isnan(v)) return std::nullopt;
    return v;
}

bool PanelDataset::has_row(const std::string& unit, int year) const {
    return row_present_[unit_idx(unit) * years_.size() + year_idx(year)] != 0;
}

std::size_t PanelDataset::missing_count() const {
    std::size_t n = 0;
    for (std::size_t u = 0; u < units_.size(); ++u) {
        for (std::size_t y = 0; y < years_.size(); ++y) {
            if (!row_present_[u * years_.size() + y]) continue;
            for (const auto& m : cells_) {
                if (std::isnan(m(static_cast<Eigen::Index>(u),
                                 static_cast<Eigen::Index>(y)))) {
                    ++n;
                }
            }
        }
    }
    return n;
}

// --- PanelBuilder -----------------------------------------------------------

PanelBuilder& PanelBuilder::touch(const std::string& unit, int year) {
    if (std::find(unit_order_.begin(), unit_order_.end(), unit) == unit_order_.end()) {
        unit_order_.push_back(unit);
    }
    touched_.emplace_back(unit, year);
    return *this;
}

PanelBuilder& PanelBuilder::declare_series(const std::string& series) {
    if (std::find(series_order_.begin(), series_order_.end(), series) ==
        series_order_.end()) {
        series_order_.push_back(series);
    }
    return *this;
}

PanelBuilder& PanelBuilder::set(const std::string& unit, int year,
                                const std::string& series, double value) {
    if (!std::isfinite(value)) {
        throw DataError("non-finite value for (" + unit + ", " + std::to_string(year) +
                        ", " + series + ")");
    }
    touch(unit, year);
    declare_series(series);
    if (!values_.emplace(Key{unit, year, series}, value).second) {
        throw DataError("duplicate cell (" + unit + ", " + std::to_string(year) + ", " +
                        series + ")");
    }
    return *this;
}

PanelDataset PanelBuilder::build() const {
    std::set<int> year_set;
    for (const auto& [unit, year] : touched_) year_set.insert(year);
    PanelDataset data(unit_order_, std::vector<int>(year_set.begin(), year_set.end()),
                      series_order_);
    for (const auto& [unit, year] : touched_) {
        data.row_present_[data.unit_idx(unit) * data.years_.size() +
                          data.year_idx(year)] = 1;
    }
    for (const auto& [key, value] : values_) {
        data.cells_[data.series_idx(key.series)](
            static_cast<Eigen::Index>(data.unit_idx(key.unit)),
            static_cast<Eigen::Index>(data.year_idx(key.year))) = value;
    }
    return data;
}

// --- load / write ------------------------------------------------------------

PanelDataset load_panel(const std::filesystem::path& path, const CsvSchema& schema) {
    const csv::Table table = csv::read_table(path);

    auto column_of = [&](const std::string& name) -> std::size_t {
        auto it = std::find(table.header.begin(), table.header.end(), name);
        if (it == table.header.end()) {
            throw DataError("column '" + name + "' not found in " + path.string());
        }
        return static_cast<std::size_t>(it - table.header.begin());
    };

    const std::size_t unit_col = column_of(schema.unit_column);
    const std::size_t year_col = column_of(schema.year_column);

    // csv column index -> panel series name
    std::vector<std::pair<std::size_t, std::string>> series_cols;
    if (schema.series.empty()) {
        for (std::size_t c = 0; c < table.header.size(); ++c) {
            if (c == unit_col || c == year_col) continue;
            series_cols.emplace_back(c, table.header[c]);
        }
        if (series_cols.empty()) {
            throw DataError("schema names no outcome columns and " + path.string() +
                            " has none besides unit and year");
        }
    } else {
        for (const auto& [csv_name, series_name] : schema.series) {
            series_cols.emplace_back(column_of(csv_name), series_name);
        }
    }

    PanelBuilder builder;
    for (const auto& [col, series_name] : series_cols) {
        builder.declare_series(series_name);
    }
    std::set<std::pair<std::string, int>> keys;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string unit = canonical_unit_id(row[unit_col]);
        if (unit.empty()) {
            throw DataError("empty unit id on data row " + std::to_string(r + 1));
        }
        const auto year = csv::parse_int(row[year_col]);
        if (!year.has_value()) {
            throw DataError("year '" + row[year_col] + "' on data row " +
                            std::to_string(r + 1) + " is not an integer");
        }
        if (!keys.emplace(unit, *year).second) {
            throw DataError("duplicate (unit, year) row: " + unit + ", " +
                            std::to_string(*year));
        }
        builder.touch(unit, *year);
        for (const auto& [col, series_name] : series_cols) {
            const std::string& field = row[col];
            const bool blank = field.empty() ||
                               field.find_first_not_of(" \t") == std::string::npos;
            if (blank) continue;  // missing cell
            const auto value = csv::parse_double(field);
            if (!value.has_value()) {
                throw DataError("non-numeric value '" + field + "' in column '" +
                                series_name + "' on data row " + std::to_string(r + 1));
            }
            builder.set(unit, *year, series_name, *value);
        }
    }
    if (keys.empty()) {
        throw DataError("no data rows in " + path.string());
    }
    return builder.build();
}

void write_panel_csv(const PanelDataset& data, const std::filesystem::path& path,
                     const CsvSchema& schema) {
    std::ostringstream out;
    out << schema.unit_column << ',' << schema.year_column;
    for (const auto& s : data.series()) out << ',' << s;
    out << '\n';
    for (const auto& unit : data.units()) {
        for (int year : data.years()) {
            if (!data.has_row(unit, year)) continue;
            out << unit << ',' << year;
            for (const auto& s : data.series()) {
                out << ',';
                if (auto v = data.cell(unit, year, s)) out << csv::format_exact(*v);
            }
            out << '\n';
        }
    }
    csv::write_file(path, out.str());
}

// --- outcome resolution -------------------------------------------------------

std::optional<double> resolve_outcome(const PanelDataset& data, const OutcomeSpec& spec,
                                      const std::string& unit, int year) {
    spec.validate();
    const auto num = data.cell(unit, year, spec.numerator);
    if (spec.kind == OutcomeKind::Level) {
        return num;
    }
    const auto den = data.cell(unit, year, *spec.denominator);
    if (!num.has_value() || !den.has_value()) return std::nullopt;
    if (*den == 0.0) {
        throw DataError("zero denominator for (" + unit + ", " + std::to_string(year) +
                        ", " + *spec.denominator + ")");
    }
    return 100.0 * *num / *den;
}

// --- study matrices -------------------------------------------------------------

namespace {

// Resolved outcome per year for one unit; NaN marks missing.
Eigen::VectorXd resolve_series(const PanelDataset& data, const OutcomeSpec& spec,
                               const std::string& unit, const std::vector<int>& years) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(years.size()));
    for (std::size_t i = 0; i < years.size(); ++i) {
        const auto v = resolve_outcome(data, spec, unit, years[i]);
        out[static_cast<Eigen::Index>(i)] = v.value_or(kNaN);
    }
    return out;
}

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

std::vector<int> range_years(YearRange r) {
    std::vector<int> years;
    for (int y = r.first; y <= r.last; ++y) years.push_back(y);
    return years;
}

}  // namespace

std::vector<int> StudyMatrices::all_years() const {
    std::vector<int> years = fit_years;
    years.insert(years.end(), eval_years.begin(), eval_years.end());
    return years;
}

Eigen::VectorXd StudyMatrices::treated_all() const {
    Eigen::VectorXd v(treated_fit.size() + treated_eval.size());
    v << treated_fit, treated_eval;
    return v;
}

Eigen::MatrixXd StudyMatrices::donor_all() const {
    Eigen::MatrixXd m(donor_fit.rows() + donor_eval.rows(), donor_fit.cols());
    m << donor_fit, donor_eval;
    return m;
}

StudyMatrices build_matrices(const PanelDataset& data, const StudyConfig& config) {
    config.validate();
    for (int y = config.fit_years.first; y <= config.eval_years.last; ++y) {
        if (!data.has_year(y)) {
            throw ConfigError("study window year " + std::to_string(y) +
                              " not present in dataset");
        }
    }
    if (!data.has_unit(config.treated)) {
        throw ConfigError("treated unit '" + config.treated + "' not in dataset");
    }
    for (const auto& d : config.donors) {
        if (!data.has_unit(d)) {
            throw ConfigError("donor '" + d + "' not in dataset");
        }
    }

    const std::vector<int> full_fit = range_years(config.fit_years);
    const std::vector<int> eval = range_years(config.eval_years);
    const int t0 = config.treatment_year();

    struct Candidate {
        std::string id;
        Eigen::VectorXd fit;   // over full fit window
        Eigen::VectorXd eval;
    };
    std::vector<Candidate> candidates;
    for (const auto& d : config.donors) {
        candidates.push_back({d, resolve_series(data, config.outcome, d, full_fit),
                              resolve_series(data, config.outcome, d, eval)});
    }
    Eigen::VectorXd treated_fit_full =
        resolve_series(data, config.outcome, config.treated, full_fit);
    Eigen::VectorXd treated_eval =
        resolve_series(data, config.outcome, config.treated, eval);

    std::vector<DroppedDonor> dropped;
    std::vector<Candidate> retained;
    int effective_start = config.fit_years.first;

    if (config.missing_policy == MissingPolicy::DropUnit) {
        for (auto& c : candidates) {
            if (all_finite(c.fit) && all_finite(c.eval)) {
                retained.push_back(std::move(c));
            } else {
                dropped.push_back({c.id, "missing outcome in fit or eval window"});
            }
        }
    } else {
        // shrink-window, stage 1: units with no observed outcome at all
        for (auto& c : candidates) {
            if (c.fit.array().isNaN().all() && c.eval.array().isNaN().all()) {
                dropped.push_back({c.id, "no observed outcome in study window"});
            } else if (!all_finite(c.eval)) {
                dropped.push_back({c.id, "missing outcome in eval window"});
            } else {
                retained.push_back(std::move(c));
            }
        }
        // stage 2: earliest start from which a unit is continuously observed
        // through T0; the window shrinks to the worst retained unit, capped
        // so at least two fit years remain.
        auto clean_start = [&](const Eigen::VectorXd& fit) -> std::optional<int> {
            int start = -1;
            for (int i = static_cast<int>(full_fit.size()) - 1; i >= 0; --i) {
                if (std::isnan(fit[i])) break;
                start = full_fit[static_cast<std::size_t>(i)];
            }
            if (start < 0) return std::nullopt;  // missing at T0 itself
            return start;
        };
        const auto treated_start = clean_start(treated_fit_full);
        if (!treated_start.has_value() || *treated_start > t0 - 1) {
            throw DataError("treated unit '" + config.treated +
                            "' lacks two consecutive observed fit years ending at " +
                            std::to_string(t0));
        }
        effective_start = *treated_start;
        std::vector<Candidate> survivors;
        for (auto& c : retained) {
            const auto start = clean_start(c.fit);
            if (!start.has_value() || *start > t0 - 1) {
                dropped.push_back(
                    {c.id, "missing outcome too close to the treatment year"});
            } else {
                effective_start = std::max(effective_start, *start);
                survivors.push_back(std::move(c));
            }
        }
        retained = std::move(survivors);
    }

    if (retained.empty()) {
        throw DataError("no donors retained after applying the missing-data policy");
    }

    const std::vector<int> fit = range_years({effective_start, t0});
    const std::size_t offset = full_fit.size() - fit.size();

    Eigen::VectorXd treated_fit =
        treated_fit_full.tail(static_cast<Eigen::Index>(fit.size()));
    if (!all_finite(treated_fit) || !all_finite(treated_eval)) {
        throw DataError("treated unit '" + config.treated +
                        "' has missing outcomes on the effective windows");
    }

    StudyMatrices m;
    m.fit_years = fit;
    m.eval_years = eval;
    m.treated_fit = treated_fit;
    m.treated_eval = treated_eval;
    m.donor_fit.resize(static_cast<Eigen::Index>(fit.size()),
                       static_cast<Eigen::Index>(retained.size()));
    m.donor_eval.resize(static_cast<Eigen::Index>(eval.size()),
                        static_cast<Eigen::Index>(retained.size()));
    for (std::size_t j = 0; j < retained.size(); ++j) {
        Eigen::VectorXd fit_part =
            retained[j].fit.segment(static_cast<Eigen::Index>(offset),
                                    static_cast<Eigen::Index>(fit.size()));
        if (!all_finite(fit_part)) {
            // interior gap inside the shrunk window
            throw DataError("donor '" + retained[j].id +
                            "' has an interior gap on the effective fit window");
        }
        m.donor_fit.col(static_cast<Eigen::Index>(j)) = fit_part;
        m.donor_eval.col(static_cast<Eigen::Index>(j)) = retained[j].eval;
        m.donors.push_back(retained[j].id);
    }
    m.dropped = std::move(dropped);
    return m;
}

// --- growth table ---------------------------------------------------------------

GrowthTable growth_table(const PanelDataset& data, const std::string& series,
                         const std::vector<std::string>& units, YearRange years) {
    if (units.empty()) throw DataError("growth table needs at least one unit");
    if (years.count() < 2) throw DataError("growth table needs at least two years");
    if (!data.has_series(series)) throw DataError("unknown series '" + series + "'");
    for (const auto& u : units) {
        if (!data.has_unit(u)) throw DataError("unknown unit '" + u + "'");
    }
    for (int y = years.first; y <= years.last; ++y) {
        if (!data.has_year(y)) {
            throw DataError("year " + std::to_string(y) + " not in dataset");
        }
    }

    GrowthTable table;
    table.rows = units;
    table.rows.push_back("Total");
    for (int y = years.first + 1; y <= years.last; ++y) table.years.push_back(y);

    auto value_at = [&](const std::string& unit, int year) {
        return data.cell(unit, year, series);
    };
    auto total_at = [&](int year) -> std::optional<double> {
        double sum = 0.0;
        for (const auto& u : units) {
            const auto v = value_at(u, year);
            if (!v.has_value()) return std::nullopt;  // missing propagates
            sum += *v;
        }
        return sum;
    };
    auto growth_cell = [](std::optional<double> prev,
                          std::optional<double> cur) -> GrowthTable::Cell {
        if (!prev.has_value() || !cur.has_value()) return {std::nullopt, false};
        if (*prev == 0.0) return {std::nullopt, true};  // undefined, flagged
        return {100.0 * (*cur - *prev) / *prev, false};
    };

    for (const auto& u : units) {
        std::vector<GrowthTable::Cell> row;
        for (int y : table.years) row.push_back(growth_cell(value_at(u, y - 1), value_at(u, y)));
        table.cells.push_back(std::move(row));
    }
    std::vector<GrowthTable::Cell> total_row;
    for (int y : table.years) total_row.push_back(growth_cell(total_at(y - 1), total_at(y)));
    table.cells.push_back(std::move(total_row));
    return table;
}

std::string growth_table_to_csv(const GrowthTable& table) {
    std::ostringstream out;
    out << "unit";
    for (int y : table.years) out << ',' << y;
    out << '\n';
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        out << table.rows[r];
        for (const auto& cell : table.cells[r]) {
            out << ',';
            if (cell.value.has_value()) out << csv::format_sig6(*cell.value);
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace scm
