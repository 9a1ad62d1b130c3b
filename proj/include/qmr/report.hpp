#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "qmr/io.hpp"
#include "qmr/protocol.hpp"
#include "qmr/tomography.hpp"

namespace qmr {

// ---------------------------------------------------------------------------
// Helpers

inline std::string format_double(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

inline std::string format_compact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline std::string detection_label_of(double error) {
    if (error < 0.005) return "<0.5%";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * error);
    return buf;
}

// Deterministic task pool: task i always sees the same inputs no matter how
// many threads run; the first exception wins and is rethrown after join.
template <typename Fn>
inline void parallel_for(int tasks, int threads, Fn&& fn) {
    threads = std::min(threads, tasks);
    if (threads <= 1) {
        for (int i = 0; i < tasks; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < tasks; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// Embedded provenance: the full resolved config minus execution-only knobs
// (thread count cannot influence the data, so reports stay byte-identical
// across parallelism levels).
inline Json provenance_of(const char* command, const ExperimentConfig& cfg) {
    Json config = config_to_json(cfg);
    config.erase("threads");
    return Json{{"tool", "qmr"}, {"command", command}, {"config", std::move(config)}};
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

// ---------------------------------------------------------------------------
// run-table

struct FidelityEstimate {
    double value = 0.0;
    double sigma = 0.0;
};

struct TableRow {
    double recool_us = 0.0;
    double meas_us = 0.0;
    double detection_error = 0.0;
    std::string detection_label;
    double nbar_bright = 0.0;
    double nbar_dark = 0.0;
    double nbar_mean = 0.0;
    FidelityEstimate fproc_mean, fproc_1, fproc_0;
    FidelityEstimate frho_mean, frho_1, frho_0;
    bool converged = true;
};

struct TableReport {
    Json provenance;
    std::vector<TableRow> rows;
};

namespace detail {

// Conditional register/system states for the three outcome groupings
// (outcome ignored, outcome 1, outcome 0). With classify_by_threshold the
// per-outcome groups condition on the photon-count label instead, mixing the
// projection branches according to the misclassification probabilities.
struct Groupings {
    DensityMatrix mean, out1, out0;
};

inline Groupings group_states(const DensityMatrix& mean_state, const DensityMatrix& state0,
                              const DensityMatrix& state1, double p0, bool by_threshold,
                              const DetectionModel& detection) {
    Groupings g;
    g.mean = mean_state;
    if (!by_threshold) {
        g.out1 = state1;
        g.out0 = state0;
        return g;
    }
    const double lam_b = detection.bright_rate_per_us * detection.duration_us;
    const double lam_d = detection.dark_rate_per_us * detection.duration_us;
    const double miss_bright = poisson_cdf_below(detection.threshold_counts, lam_b);
    const double false_bright = 1.0 - poisson_cdf_below(detection.threshold_counts, lam_d);
    const double p1 = 1.0 - p0;
    const double w1_from1 = p1 * (1.0 - miss_bright);
    const double w1_from0 = p0 * false_bright;
    const double w0_from1 = p1 * miss_bright;
    const double w0_from0 = p0 * (1.0 - false_bright);
    const double pl1 = w1_from1 + w1_from0;
    const double pl0 = w0_from1 + w0_from0;
    g.out1 = pl1 > 0 ? DensityMatrix::unchecked(
                           (w1_from1 * state1.elements + w1_from0 * state0.elements) / pl1,
                           state1.n)
                     : state1;
    g.out0 = pl0 > 0 ? DensityMatrix::unchecked(
                           (w0_from1 * state1.elements + w0_from0 * state0.elements) / pl0,
                           state0.n)
                     : state0;
    return g;
}

} // namespace detail

inline TableRow compute_table_row(const ExperimentConfig& cfg, double recool_us, double meas_us,
                                  Rng row_rng) {
    TableRow row;
    row.recool_us = recool_us;
    row.meas_us = meas_us;

    Scenario scenario = cfg.scenario_for(recool_us, meas_us);
    ProtocolRunner runner(scenario);
    const Scenario& s = runner.scenario();

    row.detection_error = detection_error(s.detection);
    row.detection_label = detection_label_of(row.detection_error);
    row.nbar_bright = s.noise.nbar(meas_us, 1);
    row.nbar_dark = s.noise.nbar(meas_us, 0);
    row.nbar_mean = 0.5 * (row.nbar_bright + row.nbar_dark);

    const BranchSet& bs = runner.branches();
    if (!bs.branches[0] || !bs.branches[1]) {
        throw std::runtime_error("run-table: degenerate measurement branch");
    }
    const double p0 = bs.branches[0]->probability;

    // --- state-overlap fidelities F^rho against the exact encoded state
    const DensityMatrix& rho_enc = bs.rho_enc;
    const detail::Groupings rec = detail::group_states(
        bs.rho_rec_mean(), bs.branches[0]->rho_rec, bs.branches[1]->rho_rec, p0,
        s.classify_by_threshold, s.detection);

    // --- process fidelities F^proc from the four standard inputs
    std::array<detail::Groupings, 4> sys;
    const std::array<Ket, 4> inputs = standard_input_kets();
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        const BranchSet b = runner.eval(inputs[j]);
        if (!b.branches[0] || !b.branches[1]) {
            throw std::runtime_error("run-table: degenerate branch for a probe input");
        }
        sys[j] = detail::group_states(b.rho_sys_mean(), b.branches[0]->rho_sys,
                                      b.branches[1]->rho_sys, b.branches[0]->probability,
                                      s.classify_by_threshold, s.detection);
    }

    const ChiMatrix ideal = chi_identity();
    auto chi_of_exact = [&](DensityMatrix detail::Groupings::* member) {
        std::array<DensityMatrix, 4> images;
        for (std::size_t j = 0; j < 4; ++j) images[j] = sys[j].*member;
        return chi_from_outputs(images);
    };

    if (cfg.exact) {
        row.frho_mean = {uhlmann_fidelity(rho_enc, rec.mean), 0.0};
        row.frho_1 = {uhlmann_fidelity(rho_enc, rec.out1), 0.0};
        row.frho_0 = {uhlmann_fidelity(rho_enc, rec.out0), 0.0};
        row.fproc_mean = {process_fidelity(chi_of_exact(&detail::Groupings::mean), ideal), 0.0};
        row.fproc_1 = {process_fidelity(chi_of_exact(&detail::Groupings::out1), ideal), 0.0};
        row.fproc_0 = {process_fidelity(chi_of_exact(&detail::Groupings::out0), ideal), 0.0};
        return row;
    }

    const MleOptions point_options{1e-9, 4000, false};
    const MleOptions resample_options{1e-7, 400, false};
    const std::vector<std::string> settings3 = all_pauli_settings(3);
    const std::vector<std::string> settings1 = all_pauli_settings(1);

    // F^rho: 3-qubit tomography of the re-encoded register per grouping.
    const std::array<const DensityMatrix*, 3> rec_states{&rec.mean, &rec.out1, &rec.out0};
    std::array<FidelityEstimate, 3> frho;
    for (int g = 0; g < 3; ++g) {
        Rng sample_rng = row_rng.split(10 + g);
        const auto counts = simulate_counts(*rec_states[g], settings3, cfg.tomo_shots, sample_rng);
        const MleResult point = mle_reconstruct(counts, point_options);
        if (!point.converged) row.converged = false;
        frho[g].value = uhlmann_fidelity(rho_enc, point.rho);
        if (cfg.bootstrap_resamples > 0) {
            Rng boot_rng = row_rng.split(20 + g);
            const auto stat = [&](const std::vector<CountRecord>& resampled) {
                return uhlmann_fidelity(rho_enc, mle_reconstruct(resampled, resample_options).rho);
            };
            frho[g].sigma = bootstrap(counts, cfg.bootstrap_resamples, stat, boot_rng).stddev;
        }
    }
    row.frho_mean = frho[0];
    row.frho_1 = frho[1];
    row.frho_0 = frho[2];

    // F^proc: single-qubit tomography of the four conditional outputs.
    const std::array<DensityMatrix detail::Groupings::*, 3> members{
        &detail::Groupings::mean, &detail::Groupings::out1, &detail::Groupings::out0};
    std::array<FidelityEstimate, 3> fproc;
    for (int g = 0; g < 3; ++g) {
        std::vector<CountRecord> combined;  // 4 inputs x 3 settings, in order
        for (std::size_t j = 0; j < 4; ++j) {
            Rng sample_rng = row_rng.split(30 + 10 * g + j);
            const auto counts =
                simulate_counts(sys[j].*members[g], settings1, cfg.tomo_shots, sample_rng);
            combined.insert(combined.end(), counts.begin(), counts.end());
        }
        const auto chi_statistic = [&](const std::vector<CountRecord>& records) {
            std::array<DensityMatrix, 4> images;
            for (std::size_t j = 0; j < 4; ++j) {
                std::vector<CountRecord> per_input(records.begin() + 3 * j,
                                                   records.begin() + 3 * (j + 1));
                images[j] = mle_reconstruct(per_input, resample_options).rho;
            }
            return process_fidelity(chi_from_outputs(images), ideal);
        };
        {
            // Point estimate at the tighter tolerance.
            std::array<DensityMatrix, 4> images;
            for (std::size_t j = 0; j < 4; ++j) {
                std::vector<CountRecord> per_input(combined.begin() + 3 * j,
                                                   combined.begin() + 3 * (j + 1));
                const MleResult res = mle_reconstruct(per_input, point_options);
                if (!res.converged) row.converged = false;
                images[j] = res.rho;
            }
            fproc[g].value = process_fidelity(chi_from_outputs(images), ideal);
        }
        if (cfg.bootstrap_resamples > 0) {
            Rng boot_rng = row_rng.split(70 + g);
            fproc[g].sigma =
                bootstrap(combined, cfg.bootstrap_resamples, chi_statistic, boot_rng).stddev;
        }
    }
    row.fproc_mean = fproc[0];
    row.fproc_1 = fproc[1];
    row.fproc_0 = fproc[2];
    return row;
}

inline TableReport run_table(const ExperimentConfig& cfg) {
    cfg.validate();
    TableReport report;
    report.provenance = provenance_of("run-table", cfg);

    struct RowSpec {
        double recool_us, meas_us;
    };
    std::vector<RowSpec> specs;
    for (double r : cfg.recool_durations_us)
        for (double m : cfg.meas_durations_us) specs.push_back({r, m});

    report.rows.resize(specs.size());
    const Rng root(cfg.seed);
    parallel_for(static_cast<int>(specs.size()), cfg.threads, [&](int i) {
        report.rows[i] =
            compute_table_row(cfg, specs[i].recool_us, specs[i].meas_us, root.split(i));
    });
    return report;
}

inline std::string table_to_csv(const TableReport& report) {
    std::string out;
    out += "# qmr run-table\n";
    out += "# provenance: " + report.provenance.dump() + "\n";
    out +=
        "recool_us,meas_us,detection_error,detection_label,nbar_bright,nbar_dark,nbar_mean,"
        "fproc_mean,fproc_mean_sigma,fproc_1,fproc_1_sigma,fproc_0,fproc_0_sigma,"
        "frho_mean,frho_mean_sigma,frho_1,frho_1_sigma,frho_0,frho_0_sigma,converged\n";
    for (const TableRow& r : report.rows) {
        out += format_compact(r.recool_us) + "," + format_compact(r.meas_us) + ",";
        out += format_double(r.detection_error, 8) + "," + r.detection_label + ",";
        out += format_double(r.nbar_bright, 4) + "," + format_double(r.nbar_dark, 4) + "," +
               format_double(r.nbar_mean, 4) + ",";
        for (const FidelityEstimate* f :
             {&r.fproc_mean, &r.fproc_1, &r.fproc_0, &r.frho_mean, &r.frho_1, &r.frho_0}) {
            out += format_double(f->value, 6) + "," + format_double(f->sigma, 6) + ",";
        }
        out += r.converged ? "1" : "0";
        out += "\n";
    }
    return out;
}

inline Json table_to_json(const TableReport& report) {
    Json rows = Json::array();
    for (const TableRow& r : report.rows) {
        rows.push_back(Json{{"recool_us", r.recool_us},
                            {"meas_us", r.meas_us},
                            {"detection_error", r.detection_error},
                            {"detection_label", r.detection_label},
                            {"nbar_bright", r.nbar_bright},
                            {"nbar_dark", r.nbar_dark},
                            {"nbar_mean", r.nbar_mean},
                            {"fproc_mean", {{"value", r.fproc_mean.value}, {"sigma", r.fproc_mean.sigma}}},
                            {"fproc_1", {{"value", r.fproc_1.value}, {"sigma", r.fproc_1.sigma}}},
                            {"fproc_0", {{"value", r.fproc_0.value}, {"sigma", r.fproc_0.sigma}}},
                            {"frho_mean", {{"value", r.frho_mean.value}, {"sigma", r.frho_mean.sigma}}},
                            {"frho_1", {{"value", r.frho_1.value}, {"sigma", r.frho_1.sigma}}},
                            {"frho_0", {{"value", r.frho_0.value}, {"sigma", r.frho_0.sigma}}},
                            {"converged", r.converged}});
    }
    return Json{{"provenance", report.provenance}, {"rows", rows}};
}

// ---------------------------------------------------------------------------
// histogram

struct HistogramReport {
    Json provenance;
    double recool_us = 0.0;
    double meas_us = 0.0;
    int threshold_counts = 0;
    long shots = 0;
    std::vector<long> frequency;  // index = photon count
};

inline HistogramReport run_histogram_row(const ExperimentConfig& cfg, double recool_us,
                                         double meas_us, Rng rng) {
    HistogramReport rep;
    rep.provenance = provenance_of("histogram", cfg);
    rep.recool_us = recool_us;
    rep.meas_us = meas_us;
    rep.shots = cfg.shots;

    ProtocolRunner runner(cfg.scenario_for(recool_us, meas_us));
    rep.threshold_counts = runner.scenario().detection.threshold_counts;
    for (long t = 0; t < cfg.shots; ++t) {
        const RunRecord rec = runner.run_once(rng);
        if (rec.photon_counts >= static_cast<int>(rep.frequency.size())) {
            rep.frequency.resize(rec.photon_counts + 1, 0);
        }
        rep.frequency[rec.photon_counts] += 1;
    }
    return rep;
}

inline std::vector<HistogramReport> run_histograms(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<HistogramReport> reports;
    const Rng root(cfg.seed);
    int index = 0;
    for (double r : cfg.recool_durations_us) {
        for (double m : cfg.meas_durations_us) {
            reports.push_back(run_histogram_row(cfg, r, m, root.split(index)));
            ++index;
        }
    }
    return reports;
}

inline std::string histogram_to_csv(const HistogramReport& rep) {
    std::string out;
    out += "# qmr histogram\n";
    out += "# provenance: " + rep.provenance.dump() + "\n";
    out += "# threshold_counts: " + std::to_string(rep.threshold_counts) + "\n";
    out += "photon_counts,frequency,at_or_above_threshold\n";
    for (std::size_t k = 0; k < rep.frequency.size(); ++k) {
        out += std::to_string(k) + "," + std::to_string(rep.frequency[k]) + "," +
               (static_cast<int>(k) >= rep.threshold_counts ? "1" : "0") + "\n";
    }
    return out;
}

inline Json histogram_to_json(const HistogramReport& rep) {
    return Json{{"provenance", rep.provenance},
                {"recool_us", rep.recool_us},
                {"meas_us", rep.meas_us},
                {"threshold_counts", rep.threshold_counts},
                {"shots", rep.shots},
                {"frequency", rep.frequency}};
}

// ---------------------------------------------------------------------------
// dump-states

inline std::string magnitude_grid_csv(const DensityMatrix& rho, const Json& provenance) {
    std::string out;
    out += "# qmr dump-states magnitude grid\n";
    out += "# provenance: " + provenance.dump() + "\n";
    const int d = rho.dim();
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            out += format_double(std::abs(rho.elements(i, j)), 6);
            out += j + 1 < d ? "," : "\n";
        }
    }
    return out;
}

// Writes the exact pipeline states for every sweep row into out_dir.
inline std::vector<std::string> run_dump_states(const ExperimentConfig& cfg) {
    cfg.validate();
    const Json provenance = provenance_of("dump-states", cfg);
    std::vector<std::string> files;
    for (double r : cfg.recool_durations_us) {
        for (double m : cfg.meas_durations_us) {
            ProtocolRunner runner(cfg.scenario_for(r, m));
            const BranchSet& bs = runner.branches();
            char prefix[96];
            std::snprintf(prefix, sizeof(prefix), "states_recool%g_meas%g_", r, m);

            struct Item {
                const char* name;
                DensityMatrix state;
            };
            std::vector<Item> items;
            items.push_back({"rho_enc", bs.rho_enc});
            items.push_back({"rho_meas_mean", bs.rho_meas_mean()});
            for (int o = 0; o < 2; ++o) {
                if (!bs.branches[o]) continue;
                items.push_back({o == 0 ? "rho_meas_out0" : "rho_meas_out1",
                                 bs.branches[o]->rho_meas});
                items.push_back(
                    {o == 0 ? "rho_rec_out0" : "rho_rec_out1", bs.branches[o]->rho_rec});
            }
            for (const Item& item : items) {
                const std::filesystem::path base =
                    std::filesystem::path(cfg.out_dir) / (std::string(prefix) + item.name);
                Json j = density_to_json(item.state);
                j["provenance"] = provenance;
                write_text_file(base.string() + ".json", j.dump(2) + "\n");
                write_text_file(base.string() + ".csv",
                                magnitude_grid_csv(item.state, provenance));
                files.push_back(base.string() + ".json");
                files.push_back(base.string() + ".csv");
            }
        }
    }
    return files;
}

// ---------------------------------------------------------------------------
// info-test

struct InfoTestRow {
    std::string label;
    double p0 = 0.0;
    double std_error = 0.0;
    bool within_3_sigma = true;
};

struct InfoTestReport {
    Json provenance;
    std::vector<InfoTestRow> rows;
    bool all_within_3_sigma = true;
    // Measured values quoted for the same probe in the reference experiment.
    static constexpr std::array<double, 4> kReferenceP0{0.48, 0.50, 0.50, 0.50};
    static constexpr std::array<double, 4> kReferenceSigma{0.01, 0.01, 0.01, 0.01};
};

inline InfoTestReport run_info_test(const ExperimentConfig& cfg) {
    cfg.validate();
    InfoTestReport rep;
    rep.provenance = provenance_of("info-test", cfg);
    const std::array<const char*, 4> labels{"|0>", "|0>+|1>", "|0>+i|1>", "|1>"};
    const std::array<Ket, 4> kets = standard_input_kets();
    const std::vector<Ket> inputs(kets.begin(), kets.end());
    const Scenario base = cfg.scenario_for(cfg.recool_durations_us.front(),
                                           cfg.meas_durations_us.front());

    if (cfg.exact) {
        const std::vector<double> p0s = outcome_information_exact(inputs, base);
        for (std::size_t j = 0; j < p0s.size(); ++j) {
            rep.rows.push_back({labels[j], p0s[j], 0.0, std::abs(p0s[j] - 0.5) < 1e-9});
        }
    } else {
        Rng rng = Rng(cfg.seed).split(0);
        const std::vector<OutcomeProbe> probes = outcome_information_test(inputs, base, rng);
        for (std::size_t j = 0; j < probes.size(); ++j) {
            const double se = std::max(probes[j].std_error, 1e-12);
            const bool ok = std::abs(probes[j].p0_estimate - 0.5) <= 3.0 * se;
            rep.rows.push_back({labels[j], probes[j].p0_estimate, probes[j].std_error, ok});
        }
    }
    for (const InfoTestRow& row : rep.rows) rep.all_within_3_sigma &= row.within_3_sigma;
    return rep;
}

inline std::string info_test_to_csv(const InfoTestReport& rep) {
    std::string out;
    out += "# qmr info-test\n";
    out += "# provenance: " + rep.provenance.dump() + "\n";
    out += "input,p0,std_error,within_3_sigma,reference_p0,reference_sigma\n";
    for (std::size_t j = 0; j < rep.rows.size(); ++j) {
        const InfoTestRow& r = rep.rows[j];
        out += r.label + "," + format_double(r.p0, 6) + "," + format_double(r.std_error, 6) +
               "," + (r.within_3_sigma ? "1" : "0") + "," +
               format_double(InfoTestReport::kReferenceP0[j], 2) + "," +
               format_double(InfoTestReport::kReferenceSigma[j], 2) + "\n";
    }
    return out;
}

inline Json info_test_to_json(const InfoTestReport& rep) {
    Json rows = Json::array();
    for (std::size_t j = 0; j < rep.rows.size(); ++j) {
        const InfoTestRow& r = rep.rows[j];
        rows.push_back(Json{{"input", r.label},
                            {"p0", r.p0},
                            {"std_error", r.std_error},
                            {"within_3_sigma", r.within_3_sigma},
                            {"reference_p0", InfoTestReport::kReferenceP0[j]},
                            {"reference_sigma", InfoTestReport::kReferenceSigma[j]}});
    }
    return Json{{"provenance", rep.provenance},
                {"rows", rows},
                {"all_within_3_sigma", rep.all_within_3_sigma}};
}

} // namespace qmr
