// Command-line front end: runs single studies, the bundled replication
// suite, and the two sensitivity procedures, emitting plot-ready CSV files
// and JSON reports.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "scm/csv.hpp"
#include "scm/sensitivity.hpp"
#include "scm/study.hpp"
#include "scm/version.hpp"

namespace {

// Exit codes beyond CLI11's own parse errors.
constexpr int kExitConfigError = 2;
constexpr int kExitDataError = 3;
constexpr int kExitSolverError = 4;
constexpr int kExitInternalError = 5;
constexpr int kExitTargetsFailed = 1;

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

scm::Provenance make_provenance(const std::string& data_path) {
    scm::Provenance prov;
    prov.input_digest = scm::csv::file_digest(data_path);
    prov.tool_version = std::string(scm::kToolName) + " " + scm::kToolVersion;
    prov.timestamp = utc_timestamp();
    return prov;
}

struct CommonArgs {
    std::string config_path;
    std::string data_path;
    std::string out_dir;
    bool json = false;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic control estimation, placebo inference and "
                 "replication harness"};
    app.set_version_flag("--version",
                         std::string(scm::kToolName) + " " + scm::kToolVersion);
    app.require_subcommand(1);

    // run ---------------------------------------------------------------
    CommonArgs run_args;
    double mspe_cutoff = 0.0;
    bool no_sensitivity = false;
    auto* run = app.add_subcommand("run", "run one study config end to end");
    run->add_option("--config", run_args.config_path, "study config JSON")->required();
    run->add_option("--data", run_args.data_path, "panel CSV")
        ->envname("SYNTHCTL_DATA")
        ->required();
    run->add_option("--out", run_args.out_dir, "output directory")->required();
    auto* cutoff_opt =
        run->add_option("--mspe-cutoff", mspe_cutoff,
                        "override the config's placebo pre-MSPE cutoff");
    run->add_flag("--no-sensitivity", no_sensitivity,
                  "skip leave-one-out and in-time placebo");
    run->add_flag("--json", run_args.json, "print a JSON summary to stdout");

    // replicate -----------------------------------------------------------
    CommonArgs rep_args;
    std::string configs_dir;
    auto* rep = app.add_subcommand(
        "replicate", "run the four bundled study configs and check targets");
    rep->add_option("--data", rep_args.data_path, "panel CSV")
        ->envname("SYNTHCTL_DATA")
        ->required();
    rep->add_option("--out", rep_args.out_dir, "output directory")->required();
    rep->add_option("--configs", configs_dir, "directory with study configs and "
                                              "expectations.json")
        ->envname("SYNTHCTL_CONFIGS")
        ->default_val("configs");
    rep->add_flag("--json", rep_args.json, "print the summary as JSON");

    // placebo-in-time -------------------------------------------------------
    CommonArgs pit_args;
    int placebo_year = 0;
    auto* pit = app.add_subcommand("placebo-in-time",
                                   "backdate the treatment and rerun inference");
    pit->add_option("--config", pit_args.config_path, "study config JSON")->required();
    pit->add_option("--data", pit_args.data_path, "panel CSV")
        ->envname("SYNTHCTL_DATA")
        ->required();
    pit->add_option("--year", placebo_year, "placebo treatment year")->required();
    pit->add_option("--out", pit_args.out_dir, "output directory (optional)");
    pit->add_flag("--json", pit_args.json, "print a JSON summary to stdout");

    // leave-one-out ------------------------------------------------------------
    CommonArgs loo_args;
    auto* loo = app.add_subcommand("leave-one-out",
                                   "re-estimate without each positive-weight donor");
    loo->add_option("--config", loo_args.config_path, "study config JSON")->required();
    loo->add_option("--data", loo_args.data_path, "panel CSV")
        ->envname("SYNTHCTL_DATA")
        ->required();
    loo->add_option("--out", loo_args.out_dir, "output directory (optional)");
    loo->add_flag("--json", loo_args.json, "print a JSON summary to stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            scm::StudyConfig cfg = scm::load_study_config(run_args.config_path);
            const scm::PanelDataset data =
                scm::load_panel(run_args.data_path, cfg.schema);
            scm::RunOptions opts;
            opts.with_sensitivity = !no_sensitivity;
            if (cutoff_opt->count() > 0) opts.mspe_cutoff_override = mspe_cutoff;
            const scm::StudyBundle bundle =
                scm::run_study(data, cfg, make_provenance(run_args.data_path), opts);
            scm::write_bundle(bundle, run_args.out_dir);
            scm::emit_plot_data(bundle, run_args.out_dir);
            if (run_args.json) {
                std::cout << scm::bundle_summary_json(bundle);
            } else {
                const auto ratio = bundle.gaps().rmspe_ratio();
                std::cout << "study '" << bundle.config.name << "': p-value "
                          << bundle.inference.p_value.num << "/"
                          << bundle.inference.p_value.den << ", RMSPE ratio "
                          << (ratio.has_value() ? scm::csv::format_sig6(*ratio)
                                                : "undefined")
                          << ", support of " << bundle.weights().support().size()
                          << " donor(s); outputs in " << run_args.out_dir << "\n";
            }
            return 0;
        }

        if (rep->parsed()) {
            const scm::ReplicationSummary summary =
                scm::replicate(rep_args.data_path, rep_args.out_dir, configs_dir,
                               make_provenance(rep_args.data_path));
            std::cout << (rep_args.json ? summary.to_json() : summary.to_text());
            return summary.hard_failures() > 0 || !summary.failed_studies.empty()
                       ? kExitTargetsFailed
                       : 0;
        }

        if (pit->parsed()) {
            scm::StudyConfig cfg = scm::load_study_config(pit_args.config_path);
            const scm::PanelDataset data =
                scm::load_panel(pit_args.data_path, cfg.schema);
            const scm::Provenance prov = make_provenance(pit_args.data_path);
            cfg.backdate_year = placebo_year;
            scm::RunOptions opts;
            opts.backdate_year_override = placebo_year;
            const scm::StudyBundle bundle = scm::run_study(data, cfg, prov, opts);
            if (!pit_args.out_dir.empty()) {
                scm::write_bundle(bundle, pit_args.out_dir);
                scm::emit_plot_data(bundle, pit_args.out_dir);
            }
            if (pit_args.json) {
                std::cout << scm::bundle_summary_json(bundle);
            } else {
                const auto& bt = bundle.sensitivity.backtest;
                if (bt.has_value()) {
                    const auto ratio = bt->treated_gaps.rmspe_ratio();
                    std::cout << "placebo year " << placebo_year << ": p-value "
                              << bt->p_value.num << "/" << bt->p_value.den
                              << ", treated RMSPE ratio "
                              << (ratio.has_value() ? scm::csv::format_sig6(*ratio)
                                                    : "undefined")
                              << "\n";
                }
            }
            return 0;
        }

        if (loo->parsed()) {
            scm::StudyConfig cfg = scm::load_study_config(loo_args.config_path);
            const scm::PanelDataset data =
                scm::load_panel(loo_args.data_path, cfg.schema);
            const scm::Provenance prov = make_provenance(loo_args.data_path);
            const scm::StudyBundle bundle = scm::run_study(data, cfg, prov);
            if (!loo_args.out_dir.empty()) {
                scm::write_bundle(bundle, loo_args.out_dir);
                scm::emit_plot_data(bundle, loo_args.out_dir);
            }
            if (loo_args.json) {
                std::cout << scm::bundle_summary_json(bundle);
            } else {
                for (const auto& r : bundle.sensitivity.leave_one_out) {
                    if (r.skipped) {
                        std::cout << "excluding " << r.excluded
                                  << ": skipped (" << r.skip_reason << ")\n";
                    } else {
                        std::cout << "excluding " << r.excluded << ": objective "
                                  << scm::csv::format_sig6(r.weights.objective)
                                  << ", post RMSPE "
                                  << scm::csv::format_sig6(r.gaps.post_rmspe) << "\n";
                    }
                }
            }
            return 0;
        }
    } catch (const scm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const scm::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const scm::SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kExitSolverError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternalError;
    }
    return 0;
}
