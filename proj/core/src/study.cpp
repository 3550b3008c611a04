#include "scm/study.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "scm/csv.hpp"
#include "scm/version.hpp"

namespace scm {

using nlohmann::json;

// --- config JSON -----------------------------------------------------------

namespace {

OutcomeKind kind_from_string(const std::string& s) {
    if (s == "level") return OutcomeKind::Level;
    if (s == "share-of-gdp") return OutcomeKind::ShareOfGdp;
    throw ConfigError("unknown outcome kind '" + s + "'");
}

std::string kind_to_string(OutcomeKind k) {
    return k == OutcomeKind::Level ? "level" : "share-of-gdp";
}

MissingPolicy policy_from_string(const std::string& s) {
    if (s == "drop-unit") return MissingPolicy::DropUnit;
    if (s == "shrink-window") return MissingPolicy::ShrinkWindow;
    throw ConfigError("unknown missing policy '" + s + "'");
}

std::string policy_to_string(MissingPolicy p) {
    return p == MissingPolicy::DropUnit ? "drop-unit" : "shrink-window";
}

YearRange year_range_from_json(const json& j, const char* field) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() ||
        !j[1].is_number_integer()) {
        throw ConfigError(std::string(field) + " must be a [first, last] year pair");
    }
    return {j[0].get<int>(), j[1].get<int>()};
}

StudyConfig config_from_json(const json& j) {
    StudyConfig cfg;
    try {
        cfg.name = j.at("name").get<std::string>();
        const json& out = j.at("outcome");
        cfg.outcome.name = out.at("name").get<std::string>();
        cfg.outcome.kind = kind_from_string(out.at("kind").get<std::string>());
        cfg.outcome.numerator = out.at("numerator").get<std::string>();
        if (out.contains("denominator") && !out["denominator"].is_null()) {
            cfg.outcome.denominator = out["denominator"].get<std::string>();
        }
        cfg.treated = canonical_unit_id(j.at("treated").get<std::string>());
        for (const auto& d : j.at("donors")) {
            cfg.donors.push_back(canonical_unit_id(d.get<std::string>()));
        }
        cfg.fit_years = year_range_from_json(j.at("fit_years"), "fit_years");
        cfg.eval_years = year_range_from_json(j.at("eval_years"), "eval_years");
        cfg.missing_policy =
            policy_from_string(j.value("missing_policy", std::string("drop-unit")));
        cfg.mspe_cutoff = j.value("mspe_cutoff", 10.0);
        cfg.include_treated_in_placebo_pools =
            j.value("include_treated_in_placebo_pools", false);
        cfg.filtered_pvalue = j.value("filtered_pvalue", false);
        if (j.contains("sensitivity") && !j["sensitivity"].is_null()) {
            const json& s = j["sensitivity"];
            if (s.contains("placebo_year") && !s["placebo_year"].is_null()) {
                cfg.backdate_year = s["placebo_year"].get<int>();
            }
        }
        if (j.contains("data_schema") && !j["data_schema"].is_null()) {
            const json& ds = j["data_schema"];
            cfg.schema.unit_column = ds.value("unit_column", std::string("iso"));
            cfg.schema.year_column = ds.value("year_column", std::string("year"));
            if (ds.contains("series") && !ds["series"].is_null()) {
                for (auto it = ds["series"].begin(); it != ds["series"].end(); ++it) {
                    cfg.schema.series.emplace_back(it.key(),
                                                   it.value().get<std::string>());
                }
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid study config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

json config_to_json(const StudyConfig& cfg) {
    json out;
    out["name"] = cfg.name;
    out["outcome"] = {{"name", cfg.outcome.name},
                      {"kind", kind_to_string(cfg.outcome.kind)},
                      {"numerator", cfg.outcome.numerator},
                      {"denominator", cfg.outcome.denominator.has_value()
                                          ? json(*cfg.outcome.denominator)
                                          : json(nullptr)}};
    out["treated"] = cfg.treated;
    out["donors"] = cfg.donors;
    out["fit_years"] = {cfg.fit_years.first, cfg.fit_years.last};
    out["eval_years"] = {cfg.eval_years.first, cfg.eval_years.last};
    out["missing_policy"] = policy_to_string(cfg.missing_policy);
    out["mspe_cutoff"] = cfg.mspe_cutoff;
    out["include_treated_in_placebo_pools"] = cfg.include_treated_in_placebo_pools;
    out["filtered_pvalue"] = cfg.filtered_pvalue;
    if (cfg.backdate_year.has_value()) {
        out["sensitivity"] = {{"placebo_year", *cfg.backdate_year}};
    } else {
        out["sensitivity"] = nullptr;
    }
    json series = json::object();
    for (const auto& [col, name] : cfg.schema.series) series[col] = name;
    out["data_schema"] = {{"unit_column", cfg.schema.unit_column},
                          {"year_column", cfg.schema.year_column},
                          {"series", series}};
    return out;
}

json rational_to_json(const Rational& r) {
    return {{"numerator", r.num}, {"denominator", r.den}, {"decimal", r.decimal()}};
}

json weights_to_json(const WeightVector& w) {
    json out = json::object();
    for (std::size_t i = 0; i < w.donor_ids.size(); ++i) {
        out[w.donor_ids[i]] = w.weights[static_cast<Eigen::Index>(i)];
    }
    return out;
}

json inference_to_json(const InferenceReport& rep) {
    json out;
    out["p_value"] = rational_to_json(rep.p_value);
    out["filtered_p_value"] = rep.filtered_p_value.has_value()
                                  ? rational_to_json(*rep.filtered_p_value)
                                  : json(nullptr);
    json ratios = json::array();
    for (const auto& r : rep.ratios) {
        ratios.push_back({{"unit", r.unit},
                          {"treated", r.is_treated},
                          {"pre_rmspe", r.pre_rmspe},
                          {"post_rmspe", r.post_rmspe},
                          {"ratio", r.ratio.has_value() ? json(*r.ratio) : json(nullptr)},
                          {"retained", r.retained},
                          {"pre_mspe_multiple", r.pre_mspe_multiple}});
    }
    out["ratios"] = ratios;
    json skipped = json::array();
    for (const auto& s : rep.skipped) {
        skipped.push_back({{"unit", s.unit}, {"reason", s.reason}});
    }
    out["skipped"] = skipped;
    out["placebo_pool_includes_treated"] = rep.placebo_pool_includes_treated;
    out["degenerate_perfect_fit"] = rep.degenerate_perfect_fit;
    out["mspe_cutoff"] = rep.mspe_cutoff;
    return out;
}

json effective_to_json(const InferenceReport& rep) {
    json dropped = json::array();
    for (const auto& d : rep.dropped_donors) {
        dropped.push_back({{"unit", d.unit}, {"reason", d.reason}});
    }
    return {{"fit_years", {rep.fit_years.front(), rep.fit_years.back()}},
            {"eval_years", {rep.eval_years.front(), rep.eval_years.back()}},
            {"retained_donors", rep.retained_donors},
            {"dropped_donors", dropped}};
}

}  // namespace

StudyConfig study_config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("cannot parse study config JSON: ") + e.what());
    }
    return config_from_json(j);
}

StudyConfig load_study_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return study_config_from_json_text(ss.str());
}

std::string study_config_to_json_text(const StudyConfig& config) {
    return config_to_json(config).dump(2) + "\n";
}

// --- pipeline ----------------------------------------------------------------

StudyBundle run_study(const PanelDataset& data, const StudyConfig& config,
                      const Provenance& provenance, const RunOptions& options) {
    StudyConfig cfg = config;
    if (options.mspe_cutoff_override.has_value()) {
        cfg.mspe_cutoff = *options.mspe_cutoff_override;
    }
    if (options.backdate_year_override.has_value()) {
        cfg.backdate_year = *options.backdate_year_override;
    }
    cfg.validate();
    if (!data.has_unit(cfg.treated)) {
        throw ConfigError("treated unit '" + cfg.treated + "' not in dataset");
    }
    for (const auto& d : cfg.donors) {
        if (!data.has_unit(d)) {
            throw ConfigError("donor '" + d + "' not in dataset");
        }
    }

    StudyBundle bundle;
    bundle.config = cfg;
    bundle.inference = run_inference(data, cfg);
    if (options.with_sensitivity) {
        bundle.sensitivity.leave_one_out =
            leave_one_out(data, cfg, bundle.inference.weights);
        if (cfg.backdate_year.has_value()) {
            bundle.sensitivity.backtest =
                in_time_placebo(data, BacktestConfig(cfg, *cfg.backdate_year));
        }
    }

    bundle.outcome_panel.units.push_back(cfg.treated);
    for (const auto& d : cfg.donors) bundle.outcome_panel.units.push_back(d);
    bundle.outcome_panel.years = bundle.inference.treated_gaps.years;
    for (const auto& unit : bundle.outcome_panel.units) {
        std::vector<std::optional<double>> row;
        for (int year : bundle.outcome_panel.years) {
            row.push_back(resolve_outcome(data, cfg.outcome, unit, year));
        }
        bundle.outcome_panel.values.push_back(std::move(row));
    }

    bundle.provenance = provenance;
    return bundle;
}

// --- emission -------------------------------------------------------------------

namespace {

// Stages every file as "<name>.tmp" and renames only after all writes have
// succeeded, so a failure never leaves partial outputs behind.
void write_all_atomic(const std::filesystem::path& dir,
                      const std::vector<std::pair<std::string, std::string>>& files) {
    namespace fs = std::filesystem;
    std::vector<std::pair<fs::path, fs::path>> staged;
    try {
        for (const auto& [name, content] : files) {
            const fs::path final_path = dir / name;
            if (final_path.has_parent_path()) {
                fs::create_directories(final_path.parent_path());
            }
            const fs::path tmp = final_path.string() + ".tmp";
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw DataError("cannot write " + tmp.string());
            out << content;
            if (!out.good()) throw DataError("write failed: " + tmp.string());
            out.close();
            staged.emplace_back(tmp, final_path);
        }
        for (const auto& [tmp, final_path] : staged) {
            fs::rename(tmp, final_path);
        }
    } catch (...) {
        for (const auto& [tmp, final_path] : staged) {
            std::error_code ec;
            fs::remove(tmp, ec);
        }
        throw;
    }
}

json backtest_to_json(const StudyBundle& bundle, const InferenceReport& bt) {
    json out;
    out["backdated"] = true;
    out["placebo_year"] = bundle.config.backdate_year.has_value()
                              ? json(*bundle.config.backdate_year)
                              : json(nullptr);
    out["effective"] = effective_to_json(bt);
    out["weights"] = weights_to_json(bt.weights);
    out["fit"] = {{"objective", bt.weights.objective},
                  {"pre_mspe", bt.weights.pre_mspe},
                  {"pre_rmspe", bt.weights.pre_rmspe},
                  {"ridge_epsilon", bt.weights.ridge_epsilon}};
    const auto ratio = bt.treated_gaps.rmspe_ratio();
    out["post"] = {{"post_mspe", bt.treated_gaps.post_mspe},
                   {"post_rmspe", bt.treated_gaps.post_rmspe},
                   {"rmspe_ratio", ratio.has_value() ? json(*ratio) : json(nullptr)}};
    out["inference"] = inference_to_json(bt);
    return out;
}

}  // namespace

std::string bundle_report_json(const StudyBundle& bundle) {
    const InferenceReport& rep = bundle.inference;
    json out;
    out["study"] = bundle.config.name;
    out["config"] = config_to_json(bundle.config);
    out["effective"] = effective_to_json(rep);
    out["weights"] = weights_to_json(rep.weights);
    out["fit"] = {{"objective", rep.weights.objective},
                  {"pre_mspe", rep.weights.pre_mspe},
                  {"pre_rmspe", rep.weights.pre_rmspe},
                  {"ridge_epsilon", rep.weights.ridge_epsilon}};
    const auto ratio = rep.treated_gaps.rmspe_ratio();
    out["post"] = {{"post_mspe", rep.treated_gaps.post_mspe},
                   {"post_rmspe", rep.treated_gaps.post_rmspe},
                   {"rmspe_ratio", ratio.has_value() ? json(*ratio) : json(nullptr)}};
    out["inference"] = inference_to_json(rep);
    out["backdated"] = rep.backdated;

    json sens = json(nullptr);
    if (bundle.sensitivity.backtest.has_value() ||
        !bundle.sensitivity.leave_one_out.empty()) {
        sens = json::object();
        sens["backtest"] = bundle.sensitivity.backtest.has_value()
                               ? backtest_to_json(bundle, *bundle.sensitivity.backtest)
                               : json(nullptr);
        json loo = json::array();
        for (const auto& r : bundle.sensitivity.leave_one_out) {
            json item;
            item["excluded"] = r.excluded;
            item["skipped"] = r.skipped;
            if (r.skipped) {
                item["reason"] = r.skip_reason;
            } else {
                item["weights"] = weights_to_json(r.weights);
                item["objective"] = r.weights.objective;
                item["post_rmspe"] = r.gaps.post_rmspe;
            }
            loo.push_back(item);
        }
        sens["leave_one_out"] = loo;
    }
    out["sensitivity"] = sens;
    out["provenance"] = {{"input_digest", bundle.provenance.input_digest},
                         {"tool_version", bundle.provenance.tool_version},
                         {"timestamp", bundle.provenance.timestamp}};
    return out.dump(2) + "\n";
}

std::string bundle_summary_json(const StudyBundle& bundle) {
    const InferenceReport& rep = bundle.inference;
    json out;
    out["study"] = bundle.config.name;
    out["treated"] = bundle.config.treated;
    out["weights"] = weights_to_json(rep.weights);
    out["support"] = rep.weights.support();
    out["pre_rmspe"] = rep.weights.pre_rmspe;
    out["post_rmspe"] = rep.treated_gaps.post_rmspe;
    const auto ratio = rep.treated_gaps.rmspe_ratio();
    out["rmspe_ratio"] = ratio.has_value() ? json(*ratio) : json(nullptr);
    out["p_value"] = rational_to_json(rep.p_value);
    out["effective_fit_years"] = {rep.fit_years.front(), rep.fit_years.back()};
    out["retained_donors"] = rep.retained_donors;
    if (bundle.sensitivity.backtest.has_value()) {
        const auto& bt = *bundle.sensitivity.backtest;
        const auto bt_ratio = bt.treated_gaps.rmspe_ratio();
        out["backtest"] = {
            {"placebo_year", bundle.config.backdate_year.has_value()
                                 ? json(*bundle.config.backdate_year)
                                 : json(nullptr)},
            {"p_value", rational_to_json(bt.p_value)},
            {"rmspe_ratio", bt_ratio.has_value() ? json(*bt_ratio) : json(nullptr)}};
    }
    if (!bundle.sensitivity.leave_one_out.empty()) {
        int n = 0;
        for (const auto& r : bundle.sensitivity.leave_one_out) {
            if (!r.skipped) ++n;
        }
        out["leave_one_out_count"] = n;
    }
    return out.dump(2) + "\n";
}

void write_bundle(const StudyBundle& bundle, const std::filesystem::path& out_dir) {
    std::vector<std::pair<std::string, std::string>> files;
    files.emplace_back("weights.csv", weights_to_csv(bundle.weights()));
    files.emplace_back("gaps.csv", gaps_to_csv(bundle.gaps()));
    files.emplace_back("ratios.csv", ratios_to_csv(bundle.inference.ratios));
    files.emplace_back("placebo_gaps.csv",
                       placebo_gaps_to_csv(bundle.inference.placebos));
    files.emplace_back("report.json", bundle_report_json(bundle));
    if (!bundle.sensitivity.leave_one_out.empty()) {
        files.emplace_back("loo_gaps.csv",
                           loo_gaps_to_csv(bundle.sensitivity.leave_one_out));
    }
    if (bundle.sensitivity.backtest.has_value()) {
        const InferenceReport& bt = *bundle.sensitivity.backtest;
        files.emplace_back("backtest/gaps.csv", gaps_to_csv(bt.treated_gaps));
        files.emplace_back("backtest/ratios.csv", ratios_to_csv(bt.ratios));
        files.emplace_back("backtest/placebo_gaps.csv",
                           placebo_gaps_to_csv(bt.placebos));
        files.emplace_back("backtest/report.json",
                           backtest_to_json(bundle, bt).dump(2) + "\n");
    }
    write_all_atomic(out_dir, files);
}

void emit_plot_data(const StudyBundle& bundle, const std::filesystem::path& out_dir) {
    std::ostringstream spaghetti;
    spaghetti << "unit,year,value\n";
    for (std::size_t u = 0; u < bundle.outcome_panel.units.size(); ++u) {
        for (std::size_t t = 0; t < bundle.outcome_panel.years.size(); ++t) {
            const auto& v = bundle.outcome_panel.values[u][t];
            if (!v.has_value()) continue;
            spaghetti << bundle.outcome_panel.units[u] << ','
                      << bundle.outcome_panel.years[t] << ',' << csv::format_sig6(*v)
                      << '\n';
        }
    }

    std::ostringstream paths;
    paths << "year,treated,synthetic\n";
    const GapSeries& g = bundle.gaps();
    for (std::size_t i = 0; i < g.years.size(); ++i) {
        const auto t = static_cast<Eigen::Index>(i);
        paths << g.years[i] << ',' << csv::format_sig6(g.treated[t]) << ','
              << csv::format_sig6(g.synthetic[t]) << '\n';
    }

    auto retained_flag = [&](const std::string& unit) {
        for (const auto& r : bundle.inference.ratios) {
            if (r.unit == unit) return r.retained ? 1 : 0;
        }
        return 1;
    };
    std::ostringstream fan;
    fan << "unit,year,gap,retained_flag\n";
    const std::string& treated_id = bundle.config.treated;
    for (std::size_t i = 0; i < g.years.size(); ++i) {
        fan << treated_id << ',' << g.years[i] << ','
            << csv::format_sig6(g.gap[static_cast<Eigen::Index>(i)]) << ','
            << retained_flag(treated_id) << '\n';
    }
    for (const auto& p : bundle.inference.placebos) {
        for (std::size_t i = 0; i < p.gaps.years.size(); ++i) {
            fan << p.unit << ',' << p.gaps.years[i] << ','
                << csv::format_sig6(p.gaps.gap[static_cast<Eigen::Index>(i)]) << ','
                << retained_flag(p.unit) << '\n';
        }
    }

    std::ostringstream bars;
    bars << "unit,ratio\n";
    for (const auto& r : bundle.inference.ratios) {
        if (!r.ratio.has_value()) continue;
        bars << r.unit << ',' << csv::format_sig6(*r.ratio) << '\n';
    }

    write_all_atomic(out_dir, {{"spaghetti.csv", spaghetti.str()},
                               {"paths.csv", paths.str()},
                               {"gaps_fan.csv", fan.str()},
                               {"ratio_bars.csv", bars.str()}});
}

// --- replication harness -----------------------------------------------------

namespace {

struct ValueTarget {
    std::string kind;
    std::optional<int> year;
    double target = 0.0;
    double tolerance = 0.0;
    std::string note;
};

struct StudyExpectations {
    std::vector<std::string> weight_support;
    std::map<std::string, double> weights;
    double weight_tolerance = 0.1;
    std::vector<ValueTarget> values;
    std::vector<std::string> auto_dropped;
    std::optional<Rational> p_value;
    bool treated_ratio_is_max = false;
    std::optional<int> effective_fit_start;
    std::optional<int> loo_count;
    struct Backdate {
        int year = 0;
        Rational p_value;
        bool treated_ratio_below_one = false;
    };
    std::optional<Backdate> backdate;
};

struct Expectations {
    std::string vintage;
    std::string data_digest;
    std::vector<std::pair<std::string, StudyExpectations>> studies;
};

Expectations load_expectations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open expectations file: " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid expectations JSON: ") + e.what());
    }
    Expectations exp;
    try {
        exp.vintage = j.at("vintage").get<std::string>();
        exp.data_digest = j.at("data_digest").get<std::string>();
        for (const auto& name : j.at("study_order")) {
            const std::string study = name.get<std::string>();
            const json& js = j.at("studies").at(study);
            StudyExpectations se;
            for (const auto& u : js.at("weight_support")) {
                se.weight_support.push_back(u.get<std::string>());
            }
            for (auto it = js.at("weights").begin(); it != js.at("weights").end(); ++it) {
                se.weights[it.key()] = it.value().get<double>();
            }
            se.weight_tolerance = js.value("weight_tolerance", 0.1);
            if (js.contains("values")) {
                for (const auto& v : js["values"]) {
                    ValueTarget t;
                    t.kind = v.at("kind").get<std::string>();
                    if (v.contains("year")) t.year = v["year"].get<int>();
                    t.target = v.at("target").get<double>();
                    t.tolerance = v.at("tolerance").get<double>();
                    t.note = v.value("note", std::string());
                    se.values.push_back(std::move(t));
                }
            }
            if (js.contains("auto_dropped")) {
                for (const auto& u : js["auto_dropped"]) {
                    se.auto_dropped.push_back(u.get<std::string>());
                }
            }
            if (js.contains("p_value")) {
                se.p_value = Rational{js["p_value"][0].get<long long>(),
                                      js["p_value"][1].get<long long>()};
            }
            se.treated_ratio_is_max = js.value("treated_ratio_is_max", false);
            if (js.contains("effective_fit_start")) {
                se.effective_fit_start = js["effective_fit_start"].get<int>();
            }
            if (js.contains("loo_count")) se.loo_count = js["loo_count"].get<int>();
            if (js.contains("backdate")) {
                StudyExpectations::Backdate b;
                b.year = js["backdate"].at("year").get<int>();
                b.p_value = Rational{js["backdate"].at("p_value")[0].get<long long>(),
                                     js["backdate"].at("p_value")[1].get<long long>()};
                b.treated_ratio_below_one =
                    js["backdate"].value("treated_ratio_below_one", false);
                se.backdate = b;
            }
            exp.studies.emplace_back(study, std::move(se));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid expectations file: ") + e.what());
    }
    return exp;
}

std::string render_rational(const Rational& r) {
    return std::to_string(r.num) + "/" + std::to_string(r.den);
}

std::string render_set(const std::vector<std::string>& items) {
    std::string out = "{";
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) out += ",";
        out += items[i];
    }
    return out + "}";
}

// Finds the treated/synthetic value at `year` in the gap series.
std::optional<double> series_value(const GapSeries& g, int year, bool synthetic) {
    for (std::size_t i = 0; i < g.years.size(); ++i) {
        if (g.years[i] == year) {
            const auto t = static_cast<Eigen::Index>(i);
            return synthetic ? g.synthetic[t] : g.treated[t];
        }
    }
    return std::nullopt;
}

std::optional<double> evaluate_value_target(const StudyBundle& bundle,
                                            const ValueTarget& t) {
    const GapSeries& g = bundle.gaps();
    const auto fit_n = static_cast<Eigen::Index>(g.fit_count);
    const int first_fit = g.years.front();
    const int t0 = g.years[g.fit_count - 1];
    const int last_eval = g.years.back();
    if (t.kind == "treated_value" && t.year.has_value()) {
        return series_value(g, *t.year, false);
    }
    if (t.kind == "synthetic_value" && t.year.has_value()) {
        return series_value(g, *t.year, true);
    }
    if (t.kind == "treated_aagr_fit") {
        return aagr(g.treated[0], g.treated[fit_n - 1], t0 - first_fit);
    }
    if (t.kind == "synthetic_aagr_fit") {
        return aagr(g.synthetic[0], g.synthetic[fit_n - 1], t0 - first_fit);
    }
    if (t.kind == "treated_aagr_eval") {
        return aagr(g.treated[fit_n - 1], g.treated[g.treated.size() - 1],
                    last_eval - t0);
    }
    if (t.kind == "synthetic_aagr_eval") {
        return aagr(g.synthetic[fit_n - 1], g.synthetic[g.synthetic.size() - 1],
                    last_eval - t0);
    }
    return std::nullopt;
}

}  // namespace

int ReplicationSummary::hard_failures() const {
    int n = 0;
    for (const auto& c : checks) {
        if (!c.pass && !c.warned_only) ++n;
    }
    return n;
}

std::string ReplicationSummary::to_text() const {
    std::ostringstream out;
    out << "replication vintage: " << vintage << "\n";
    out << "data digest: " << data_digest
        << (vintage_match ? " (matches frozen vintage)"
                          : " (DIFFERS from frozen vintage; failures downgraded "
                            "to warnings)")
        << "\n";
    for (const auto& c : checks) {
        const char* tag = c.pass ? "[PASS]" : (c.warned_only ? "[WARN]" : "[FAIL]");
        out << tag << " " << c.study << ": " << c.name << " = " << c.computed
            << " (target " << c.target << ")";
        if (!c.note.empty()) out << "  # " << c.note;
        out << "\n";
    }
    int passed = 0;
    for (const auto& c : checks) {
        if (c.pass) ++passed;
    }
    out << passed << "/" << checks.size() << " targets passed";
    if (hard_failures() > 0) out << ", " << hard_failures() << " hard failures";
    out << "\n";
    return out.str();
}

std::string ReplicationSummary::to_json() const {
    json out;
    out["vintage"] = vintage;
    out["data_digest"] = data_digest;
    out["expected_digest"] = expected_digest;
    out["vintage_match"] = vintage_match;
    json rows = json::array();
    for (const auto& c : checks) {
        rows.push_back({{"study", c.study},
                        {"name", c.name},
                        {"computed", c.computed},
                        {"target", c.target},
                        {"pass", c.pass},
                        {"warned_only", c.warned_only},
                        {"note", c.note}});
    }
    out["checks"] = rows;
    out["hard_failures"] = hard_failures();
    out["failed_studies"] = failed_studies;
    return out.dump(2) + "\n";
}

ReplicationSummary replicate(const std::filesystem::path& data_path,
                             const std::filesystem::path& out_dir,
                             const std::filesystem::path& configs_dir,
                             const Provenance& provenance) {
    const Expectations exp = load_expectations(configs_dir / "expectations.json");

    ReplicationSummary summary;
    summary.vintage = exp.vintage;
    summary.expected_digest = exp.data_digest;
    summary.data_digest = csv::file_digest(data_path);
    summary.vintage_match = summary.data_digest == exp.data_digest;
    const bool warn_only = !summary.vintage_match;

    auto add_check = [&](const std::string& study, const std::string& name,
                         std::string computed, std::string target, bool pass,
                         std::string note = "") {
        summary.checks.push_back({study, name, std::move(computed), std::move(target),
                                  pass, !pass && warn_only, std::move(note)});
    };

    for (const auto& [study, se] : exp.studies) {
        StudyBundle bundle;
        try {
            StudyConfig cfg = load_study_config(configs_dir / (study + ".json"));
            Provenance prov = provenance;
            prov.input_digest = summary.data_digest;
            const PanelDataset panel = load_panel(data_path, cfg.schema);
            bundle = run_study(panel, cfg, prov);
            write_bundle(bundle, out_dir / study);
            emit_plot_data(bundle, out_dir / study);
        } catch (const Error& e) {
            summary.failed_studies.push_back(study);
            add_check(study, "study_ran", std::string("error: ") + e.what(), "ok",
                      false);
            continue;
        }

        // weight support set
        std::vector<std::string> support = bundle.weights().support();
        std::vector<std::string> expected_support = se.weight_support;
        std::sort(support.begin(), support.end());
        std::sort(expected_support.begin(), expected_support.end());
        add_check(study, "weight_support", render_set(support),
                  render_set(expected_support), support == expected_support);

        // individual weights
        for (const auto& [donor, target] : se.weights) {
            double computed = 0.0;
            for (std::size_t i = 0; i < bundle.weights().donor_ids.size(); ++i) {
                if (bundle.weights().donor_ids[i] == donor) {
                    computed = bundle.weights().weights[static_cast<Eigen::Index>(i)];
                }
            }
            add_check(study, "weight[" + donor + "]", csv::format_fixed6(computed),
                      csv::format_fixed6(target) + " +/- " +
                          csv::format_sig6(se.weight_tolerance),
                      std::abs(computed - target) <= se.weight_tolerance);
        }

        // point values and growth rates
        for (const auto& t : se.values) {
            const auto computed = evaluate_value_target(bundle, t);
            std::string name = t.kind;
            if (t.year.has_value()) name += "[" + std::to_string(*t.year) + "]";
            if (!computed.has_value()) {
                add_check(study, name, "undefined",
                          csv::format_sig6(t.target), false, t.note);
                continue;
            }
            add_check(study, name, csv::format_sig6(*computed),
                      csv::format_sig6(t.target) + " +/- " +
                          csv::format_sig6(t.tolerance),
                      std::abs(*computed - t.target) <= t.tolerance, t.note);
        }

        // automatically dropped donors
        for (const auto& unit : se.auto_dropped) {
            bool dropped = false;
            for (const auto& d : bundle.inference.dropped_donors) {
                if (d.unit == unit) dropped = true;
            }
            add_check(study, "auto_dropped[" + unit + "]",
                      dropped ? "dropped" : "retained", "dropped", dropped);
        }

        if (se.p_value.has_value()) {
            add_check(study, "p_value", render_rational(bundle.inference.p_value),
                      render_rational(*se.p_value),
                      bundle.inference.p_value == *se.p_value);
        }

        if (se.treated_ratio_is_max) {
            const auto treated_ratio = bundle.gaps().rmspe_ratio();
            bool is_max = treated_ratio.has_value();
            if (is_max) {
                for (const auto& r : bundle.inference.ratios) {
                    if (r.is_treated || !r.ratio.has_value()) continue;
                    if (*r.ratio >= *treated_ratio) is_max = false;
                }
            }
            add_check(study, "treated_ratio_is_max", is_max ? "true" : "false", "true",
                      is_max);
        }

        if (se.effective_fit_start.has_value()) {
            const int start = bundle.inference.fit_years.front();
            add_check(study, "effective_fit_start", std::to_string(start),
                      std::to_string(*se.effective_fit_start),
                      start == *se.effective_fit_start);
        }

        if (se.loo_count.has_value()) {
            int n = 0;
            for (const auto& r : bundle.sensitivity.leave_one_out) {
                if (!r.skipped) ++n;
            }
            add_check(study, "leave_one_out_count", std::to_string(n),
                      std::to_string(*se.loo_count), n == *se.loo_count);
        }

        if (se.backdate.has_value()) {
            if (!bundle.sensitivity.backtest.has_value()) {
                add_check(study, "backdate", "not run",
                          render_rational(se.backdate->p_value), false);
            } else {
                const InferenceReport& bt = *bundle.sensitivity.backtest;
                add_check(study, "backdate_p_value", render_rational(bt.p_value),
                          render_rational(se.backdate->p_value),
                          bt.p_value == se.backdate->p_value);
                if (se.backdate->treated_ratio_below_one) {
                    const auto r = bt.treated_gaps.rmspe_ratio();
                    const bool below = r.has_value() && *r < 1.0;
                    add_check(study, "backdate_ratio_below_one",
                              r.has_value() ? csv::format_sig6(*r) : "undefined",
                              "< 1", below);
                }
            }
        }
    }
    return summary;
}

}  // namespace scm
