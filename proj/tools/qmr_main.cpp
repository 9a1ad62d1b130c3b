#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qmr/report.hpp"

namespace {

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    bool exact = false;
    std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--config", opt.config_path, "experiment configuration (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", opt.seed, "override the config seed");
    cmd->add_option("--out", opt.out_dir, "override the output directory");
    cmd->add_flag("--exact", opt.exact, "analytic mode: no sampling, zero error bars");
    cmd->add_option("--threads", opt.threads, "worker threads for sweep rows");
}

qmr::ExperimentConfig resolve(const CommonOptions& opt) {
    qmr::ExperimentConfig cfg = qmr::load_config(opt.config_path);
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.out_dir) cfg.out_dir = *opt.out_dir;
    if (opt.exact) cfg.exact = true;
    if (opt.threads) cfg.threads = *opt.threads;
    cfg.validate();
    return cfg;
}

void emit(const qmr::ExperimentConfig& cfg, const std::string& basename, const std::string& csv,
          const qmr::Json& json) {
    namespace fs = std::filesystem;
    for (const std::string& fmt : cfg.formats) {
        const fs::path path = fs::path(cfg.out_dir) / (basename + "." + fmt);
        qmr::write_text_file(path, fmt == "csv" ? csv : json.dump(2) + "\n");
        std::printf("wrote %s\n", path.c_str());
    }
}

int cmd_run_table(const CommonOptions& opt) {
    const qmr::ExperimentConfig cfg = resolve(opt);
    const qmr::TableReport report = qmr::run_table(cfg);
    emit(cfg, "table", qmr::table_to_csv(report), qmr::table_to_json(report));
    for (const qmr::TableRow& row : report.rows) {
        std::printf("recool %6.0f us  meas %6.0f us  Fproc %.3f(%.3f)  Frho %.3f(%.3f)  det %s\n",
                    row.recool_us, row.meas_us, row.fproc_mean.value, row.fproc_mean.sigma,
                    row.frho_mean.value, row.frho_mean.sigma, row.detection_label.c_str());
        if (!row.converged) {
            std::fprintf(stderr, "warning: reconstruction did not converge for row (%g, %g)\n",
                         row.recool_us, row.meas_us);
        }
    }
    for (const qmr::TableRow& row : report.rows) {
        if (!row.converged) throw qmr::ConvergenceError("run-table: reconstruction did not converge");
    }
    return 0;
}

int cmd_histogram(const CommonOptions& opt) {
    const qmr::ExperimentConfig cfg = resolve(opt);
    const auto reports = qmr::run_histograms(cfg);
    for (const qmr::HistogramReport& rep : reports) {
        char base[96];
        std::snprintf(base, sizeof(base), "histogram_recool%g_meas%g", rep.recool_us, rep.meas_us);
        emit(cfg, base, qmr::histogram_to_csv(rep), qmr::histogram_to_json(rep));
    }
    return 0;
}

int cmd_dump_states(const CommonOptions& opt) {
    const qmr::ExperimentConfig cfg = resolve(opt);
    for (const std::string& file : qmr::run_dump_states(cfg)) {
        std::printf("wrote %s\n", file.c_str());
    }
    return 0;
}

int cmd_info_test(const CommonOptions& opt) {
    const qmr::ExperimentConfig cfg = resolve(opt);
    const qmr::InfoTestReport rep = qmr::run_info_test(cfg);
    emit(cfg, "info_test", qmr::info_test_to_csv(rep), qmr::info_test_to_json(rep));
    for (const qmr::InfoTestRow& row : rep.rows) {
        std::printf("%-10s p(0) = %.4f +- %.4f %s\n", row.label.c_str(), row.p0, row.std_error,
                    row.within_3_sigma ? "" : " [outside 3 sigma]");
    }
    std::printf("all within 3 sigma of 0.5: %s\n", rep.all_within_3_sigma ? "yes" : "no");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"density-matrix simulator for measurement reversal via the "
                 "three-qubit phase-flip code"};
    app.require_subcommand(1);

    CommonOptions run_table_opt, histogram_opt, dump_opt, info_opt;
    add_common(app.add_subcommand("run-table", "fidelity sweep table"), run_table_opt);
    add_common(app.add_subcommand("histogram", "photon-count histogram"), histogram_opt);
    add_common(app.add_subcommand("dump-states", "pipeline density matrices"), dump_opt);
    add_common(app.add_subcommand("info-test", "outcome-probability no-information test"),
               info_opt);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("run-table")) return cmd_run_table(run_table_opt);
        if (app.got_subcommand("histogram")) return cmd_histogram(histogram_opt);
        if (app.got_subcommand("dump-states")) return cmd_dump_states(dump_opt);
        if (app.got_subcommand("info-test")) return cmd_info_test(info_opt);
    } catch (const qmr::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const qmr::ConvergenceError& e) {
        std::fprintf(stderr, "numerical non-convergence: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
