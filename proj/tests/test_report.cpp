#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "qmr/report.hpp"

using namespace qmr;
using Catch::Approx;

namespace {

ExperimentConfig noise_off_config() {
    ExperimentConfig cfg;
    cfg.recool_durations_us = {800.0};
    cfg.meas_durations_us = {200.0};
    cfg.seed = 12345;
    cfg.shots = 2000;
    cfg.tomo_shots = 400;
    cfg.bootstrap_resamples = 0;
    return cfg;
}

} // namespace

TEST_CASE("exact mode with no noise reports perfect fidelities") {
    ExperimentConfig cfg = noise_off_config();
    cfg.exact = true;
    const TableReport report = run_table(cfg);
    REQUIRE(report.rows.size() == 1);
    const TableRow& row = report.rows[0];
    for (const FidelityEstimate* f : {&row.fproc_mean, &row.fproc_1, &row.fproc_0,
                                      &row.frho_mean, &row.frho_1, &row.frho_0}) {
        CHECK(f->value == Approx(1.0).margin(1e-9));
        CHECK(f->sigma == 0.0);
    }
    CHECK(row.detection_label == "<0.5%");
    CHECK(row.converged);

    const std::string csv = table_to_csv(report);
    CHECK(csv.find("# provenance:") != std::string::npos);
    CHECK(csv.find("\"seed\":12345") != std::string::npos);
    const Json j = table_to_json(report);
    CHECK(j.at("rows").size() == 1);
    CHECK(j.at("provenance").at("config").at("seed") == 12345);
}

TEST_CASE("table reports are byte-identical across thread counts") {
    ExperimentConfig cfg = noise_off_config();
    cfg.meas_durations_us = {100.0, 200.0, 300.0};
    cfg.noise.t2_us = 4000.0;
    cfg.tomo_shots = 200;

    ExperimentConfig serial = cfg;
    serial.threads = 1;
    ExperimentConfig parallel = cfg;
    parallel.threads = 8;

    const TableReport a = run_table(serial);
    const TableReport b = run_table(parallel);
    CHECK(table_to_csv(a) == table_to_csv(b));
    CHECK(table_to_json(a).dump() == table_to_json(b).dump());
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].fproc_mean.value == b.rows[i].fproc_mean.value);
        CHECK(a.rows[i].frho_mean.value == b.rows[i].frho_mean.value);
        CHECK(a.rows[i].frho_1.sigma == b.rows[i].frho_1.sigma);
    }
}

TEST_CASE("detection labels bucket like the reference table") {
    CHECK(detection_label_of(0.0001) == "<0.5%");
    CHECK(detection_label_of(0.0049) == "<0.5%");
    CHECK(detection_label_of(0.062) == "6.2%");
    CHECK(detection_label_of(0.04) == "4.0%");
}

TEST_CASE("histogram report is bimodal with the threshold marked") {
    ExperimentConfig cfg = noise_off_config();
    cfg.shots = 20000;
    const auto reports = run_histograms(cfg);
    REQUIRE(reports.size() == 1);
    const HistogramReport& rep = reports[0];
    CHECK(rep.threshold_counts == 3);

    long total = 0;
    for (long f : rep.frequency) total += f;
    CHECK(total == cfg.shots);

    REQUIRE(rep.frequency.size() > 12);
    CHECK(rep.frequency[0] > 8000);                        // dark mode
    CHECK(rep.frequency[12] > rep.frequency[4]);           // bright mode
    CHECK(rep.frequency[3] + rep.frequency[4] < rep.frequency[0] / 10);

    const std::string csv = histogram_to_csv(rep);
    CHECK(csv.find("photon_counts,frequency,at_or_above_threshold") != std::string::npos);
    CHECK(csv.find("# threshold_counts: 3") != std::string::npos);
}

TEST_CASE("info test reports the no-information flag") {
    ExperimentConfig cfg = noise_off_config();
    cfg.exact = true;
    const InfoTestReport exact = run_info_test(cfg);
    REQUIRE(exact.rows.size() == 4);
    for (const InfoTestRow& row : exact.rows) CHECK(row.p0 == Approx(0.5).margin(1e-12));
    CHECK(exact.all_within_3_sigma);

    cfg.exact = false;
    cfg.shots = 4000;
    const InfoTestReport sampled = run_info_test(cfg);
    for (const InfoTestRow& row : sampled.rows) {
        CHECK(row.std_error > 0.0);
        CHECK(row.p0 == Approx(0.5).margin(0.05));
    }
    const std::string csv = info_test_to_csv(sampled);
    CHECK(csv.find("reference_p0") != std::string::npos);
    CHECK(csv.find("0.48") != std::string::npos);
}

TEST_CASE("dump-states writes valid density matrices") {
    namespace fs = std::filesystem;
    ExperimentConfig cfg = noise_off_config();
    const fs::path dir = fs::temp_directory_path() / "qmr_dump_test";
    fs::remove_all(dir);
    cfg.out_dir = dir.string();

    const std::vector<std::string> files = run_dump_states(cfg);
    CHECK(files.size() == 12);  // 6 states x {json, csv}

    int checked = 0;
    for (const std::string& file : files) {
        REQUIRE(fs::exists(file));
        if (file.ends_with(".json")) {
            std::ifstream in(file);
            const Json j = Json::parse(in);
            density_from_json(j).validate();
            CHECK(j.contains("provenance"));
            ++checked;
        }
    }
    CHECK(checked == 6);

    // Noise off: the re-encoded register equals the encoded one.
    std::ifstream enc_in((dir / "states_recool800_meas200_rho_enc.json").string());
    std::ifstream rec_in((dir / "states_recool800_meas200_rho_rec_out0.json").string());
    const DensityMatrix enc = density_from_json(Json::parse(enc_in));
    const DensityMatrix rec = density_from_json(Json::parse(rec_in));
    CHECK((enc.elements - rec.elements).cwiseAbs().maxCoeff() < 1e-9);
    fs::remove_all(dir);
}

TEST_CASE("threshold classification mixes the outcome groups") {
    // A dim detector misses most bright projections, so the group labeled
    // dark picks up heated bright-branch states. Outcome-dependent noise is
    // needed for the branches to differ at all.
    ExperimentConfig cfg = noise_off_config();
    cfg.exact = true;
    cfg.classify_by_threshold = true;
    cfg.noise.gate_error_per_phonon = 0.1;
    cfg.noise.phonon_table = {{800.0, 200.0, 0.8, 0.0}};
    cfg.detection.bright_rate_per_us = 0.01;  // lambda = 2 at 200 us
    cfg.detection.threshold_counts = 3;
    const TableReport report = run_table(cfg);
    const TableRow& row = report.rows[0];
    // The group labeled dark inherits heated states; the outcome-ignored
    // mean is labeling-independent.
    CHECK(row.frho_0.value < 0.999);
    CHECK(row.fproc_0.value < 0.999);

    // With the flag off the dark branch is clean under the same detector.
    cfg.classify_by_threshold = false;
    const TableRow& clean = run_table(cfg).rows[0];
    CHECK(clean.frho_0.value == Approx(1.0).margin(1e-9));
    CHECK(clean.frho_mean.value == Approx(row.frho_mean.value).margin(1e-9));
    CHECK(row.frho_0.value < clean.frho_0.value);
}
