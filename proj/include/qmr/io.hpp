#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qmr/circuits.hpp"
#include "qmr/protocol.hpp"
#include "qmr/tomography.hpp"

namespace qmr {

using Json = nlohmann::ordered_json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Density matrices: {"n": int, "re": row-major, "im": row-major}

inline Json density_to_json(const DensityMatrix& rho) {
    const int d = rho.dim();
    std::vector<double> re, im;
    re.reserve(d * d);
    im.reserve(d * d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            re.push_back(rho.elements(i, j).real());
            im.push_back(rho.elements(i, j).imag());
        }
    }
    return Json{{"n", rho.n}, {"re", re}, {"im", im}};
}

inline DensityMatrix density_from_json(const Json& j,
                                       const Tolerances& tol = default_tolerances()) {
    if (!j.contains("n") || !j.contains("re") || !j.contains("im")) {
        throw ConfigError("density matrix JSON needs fields n, re, im");
    }
    const int n = j.at("n").get<int>();
    if (n < 1 || n > kMaxQubits) throw ConfigError("density matrix JSON: n out of range");
    const int d = dim_of(n);
    const auto re = j.at("re").get<std::vector<double>>();
    const auto im = j.at("im").get<std::vector<double>>();
    if (static_cast<int>(re.size()) != d * d || static_cast<int>(im.size()) != d * d) {
        throw ConfigError("density matrix JSON: wrong element count");
    }
    Matrix m(d, d);
    for (int i = 0; i < d; ++i)
        for (int jj = 0; jj < d; ++jj) m(i, jj) = Complex(re[i * d + jj], im[i * d + jj]);
    return DensityMatrix::from_matrix(std::move(m), tol);  // re-validates invariants
}

// ---------------------------------------------------------------------------
// Circuits: a list of {kind, targets, params[, axis]} records

inline std::string gate_kind_name(Gate::Kind k) {
    switch (k) {
        case Gate::Kind::CollectiveRotation: return "collective_rotation";
        case Gate::Kind::Phase: return "phase";
        case Gate::Kind::MS: return "ms";
        case Gate::Kind::Hadamard: return "hadamard";
        case Gate::Kind::Cnot: return "cnot";
        case Gate::Kind::ControlledControlledX: return "ccx";
        case Gate::Kind::Pauli: return "pauli";
        case Gate::Kind::Diagonal: return "diagonal";
    }
    throw std::invalid_argument("gate_kind_name: unknown kind");
}

inline Gate::Kind gate_kind_from_name(const std::string& s) {
    if (s == "collective_rotation") return Gate::Kind::CollectiveRotation;
    if (s == "phase") return Gate::Kind::Phase;
    if (s == "ms") return Gate::Kind::MS;
    if (s == "hadamard") return Gate::Kind::Hadamard;
    if (s == "cnot") return Gate::Kind::Cnot;
    if (s == "ccx") return Gate::Kind::ControlledControlledX;
    if (s == "pauli") return Gate::Kind::Pauli;
    if (s == "diagonal") return Gate::Kind::Diagonal;
    throw ConfigError("unknown gate kind: " + s);
}

inline Json circuit_to_json(const Circuit& c) {
    Json gates = Json::array();
    for (const Gate& g : c.gates) {
        Json rec{{"kind", gate_kind_name(g.kind)},
                 {"targets", g.targets},
                 {"params", g.params}};
        if (g.kind == Gate::Kind::CollectiveRotation || g.kind == Gate::Kind::Pauli) {
            rec["axis"] = std::string(1, axis_name(g.axis));
        }
        gates.push_back(std::move(rec));
    }
    return Json{{"register_size", c.register_size}, {"label", c.label}, {"gates", gates}};
}

inline Circuit circuit_from_json(const Json& j) {
    Circuit c;
    c.register_size = j.at("register_size").get<int>();
    c.label = j.value("label", std::string{});
    for (const Json& rec : j.at("gates")) {
        Gate g;
        g.kind = gate_kind_from_name(rec.at("kind").get<std::string>());
        g.targets = rec.value("targets", std::vector<int>{});
        g.params = rec.value("params", std::vector<double>{});
        if (rec.contains("axis")) {
            const std::string a = rec.at("axis").get<std::string>();
            if (a == "x") g.axis = Axis::X;
            else if (a == "y") g.axis = Axis::Y;
            else if (a == "z") g.axis = Axis::Z;
            else throw ConfigError("bad axis: " + a);
        }
        c.gates.push_back(std::move(g));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Count records: JSON lines, one {"setting","shots","hist"} object per line

inline Json count_record_to_json(const CountRecord& rec) {
    Json hist = Json::object();
    for (const auto& [key, count] : rec.histogram) hist[key] = count;
    return Json{{"setting", rec.setting}, {"shots", rec.shots}, {"hist", hist}};
}

inline CountRecord count_record_from_json(const Json& j) {
    CountRecord rec;
    rec.setting = j.at("setting").get<std::string>();
    rec.shots = j.at("shots").get<double>();
    for (const auto& [key, value] : j.at("hist").items()) {
        rec.histogram[key] = value.get<double>();
    }
    rec.validate();
    return rec;
}

inline void write_count_records(std::ostream& os, const std::vector<CountRecord>& records) {
    for (const CountRecord& rec : records) os << count_record_to_json(rec).dump() << '\n';
}

inline std::vector<CountRecord> read_count_records(std::istream& is) {
    std::vector<CountRecord> records;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        records.push_back(count_record_from_json(Json::parse(line)));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Experiment configuration (single JSON document, explicit units in names)

struct ExperimentConfig {
    std::vector<double> recool_durations_us;
    std::vector<double> meas_durations_us;
    double input_theta = 1.5707963267948966;  // |+>
    double input_phi = 0.0;
    DetectionModel detection{};
    NoiseParams noise{};
    long shots = 10000;
    long tomo_shots = 10000;
    int bootstrap_resamples = 100;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    std::vector<std::string> formats = {"csv", "json"};
    EncoderStyle encoder_style = EncoderStyle::Textbook;
    bool classify_by_threshold = false;
    bool exact = false;
    int threads = 1;

    void validate() const {
        if (recool_durations_us.empty() || meas_durations_us.empty()) {
            throw ConfigError("config /sweep: duration lists must be nonempty");
        }
        for (double v : recool_durations_us)
            if (!(v > 0)) throw ConfigError("config /sweep/recool_durations_us: must be > 0");
        for (double v : meas_durations_us)
            if (!(v > 0)) throw ConfigError("config /sweep/meas_durations_us: must be > 0");
        if (shots < 1) throw ConfigError("config /shots: must be >= 1");
        if (tomo_shots < 1) throw ConfigError("config /tomo_shots: must be >= 1");
        if (bootstrap_resamples < 0) throw ConfigError("config /bootstrap_resamples: must be >= 0");
        if (threads < 1) throw ConfigError("config /threads: must be >= 1");
        for (const std::string& f : formats) {
            if (f != "csv" && f != "json") throw ConfigError("config /formats: must be csv or json");
        }
        try {
            detection.validate();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config /detection: ") + e.what());
        }
        try {
            noise.validate();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config /noise: ") + e.what());
        }
    }

    Scenario scenario_for(double recool_us, double meas_us) const {
        Scenario s;
        s.input_state = ket_from_bloch(input_theta, input_phi);
        s.meas_duration_us = meas_us;
        s.recool_duration_us = recool_us;
        s.detection = detection;
        s.detection.duration_us = meas_us;
        s.noise = noise;
        s.noise.recool_duration_us = recool_us;
        s.shots = shots;
        s.seed = seed;
        s.encoder_style = encoder_style;
        s.classify_by_threshold = classify_by_threshold;
        return s;
    }
};

inline Json config_to_json(const ExperimentConfig& c) {
    Json j;
    j["sweep"] = {{"recool_durations_us", c.recool_durations_us},
                  {"meas_durations_us", c.meas_durations_us}};
    j["input_state"] = {{"theta", c.input_theta}, {"phi", c.input_phi}};
    j["detection"] = {{"bright_rate_per_us", c.detection.bright_rate_per_us},
                      {"dark_rate_per_us", c.detection.dark_rate_per_us},
                      {"threshold_counts", c.detection.threshold_counts}};
    Json noise;
    if (!std::isinf(c.noise.t2_us)) noise["t2_us"] = c.noise.t2_us;
    noise["base_gate_error"] = c.noise.base_gate_error;
    noise["gate_error_per_phonon"] = c.noise.gate_error_per_phonon;
    Json table = Json::array();
    for (const PhononEntry& e : c.noise.phonon_table) {
        table.push_back({{"recool_us", e.recool_us},
                         {"meas_us", e.meas_us},
                         {"nbar_bright", e.nbar_bright},
                         {"nbar_dark", e.nbar_dark}});
    }
    noise["phonon_table"] = std::move(table);
    j["noise"] = std::move(noise);
    j["shots"] = c.shots;
    j["tomo_shots"] = c.tomo_shots;
    j["bootstrap_resamples"] = c.bootstrap_resamples;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["formats"] = c.formats;
    j["encoder"] = c.encoder_style == EncoderStyle::Textbook ? "textbook" : "ms";
    j["classify_by_threshold"] = c.classify_by_threshold;
    j["exact"] = c.exact;
    j["threads"] = c.threads;
    return j;
}

inline ExperimentConfig config_from_json(const Json& j) {
    ExperimentConfig c;
    try {
        if (!j.contains("seed")) {
            throw ConfigError("config /seed: required (wall-clock seeding is not supported)");
        }
        c.seed = j.at("seed").get<std::uint64_t>();

        if (!j.contains("sweep")) throw ConfigError("config /sweep: required");
        const Json& sweep = j.at("sweep");
        c.recool_durations_us = sweep.at("recool_durations_us").get<std::vector<double>>();
        c.meas_durations_us = sweep.at("meas_durations_us").get<std::vector<double>>();

        if (j.contains("input_state")) {
            c.input_theta = j.at("input_state").value("theta", c.input_theta);
            c.input_phi = j.at("input_state").value("phi", c.input_phi);
        }
        if (j.contains("detection")) {
            const Json& d = j.at("detection");
            c.detection.bright_rate_per_us = d.value("bright_rate_per_us", 0.06);
            c.detection.dark_rate_per_us = d.value("dark_rate_per_us", 0.0);
            c.detection.threshold_counts = d.value("threshold_counts", 3);
        }
        if (j.contains("noise")) {
            const Json& nj = j.at("noise");
            if (nj.contains("t2_us")) c.noise.t2_us = nj.at("t2_us").get<double>();
            c.noise.base_gate_error = nj.value("base_gate_error", 0.0);
            c.noise.gate_error_per_phonon = nj.value("gate_error_per_phonon", 0.0);
            if (nj.contains("phonon_table")) {
                for (const Json& e : nj.at("phonon_table")) {
                    PhononEntry entry;
                    entry.recool_us = e.at("recool_us").get<double>();
                    entry.meas_us = e.at("meas_us").get<double>();
                    entry.nbar_bright = e.at("nbar_bright").get<double>();
                    entry.nbar_dark = e.at("nbar_dark").get<double>();
                    c.noise.phonon_table.push_back(entry);
                }
            }
        }
        c.shots = j.value("shots", c.shots);
        c.tomo_shots = j.value("tomo_shots", c.tomo_shots);
        c.bootstrap_resamples = j.value("bootstrap_resamples", c.bootstrap_resamples);
        c.out_dir = j.value("out_dir", c.out_dir);
        if (j.contains("formats")) c.formats = j.at("formats").get<std::vector<std::string>>();
        if (j.contains("encoder")) {
            const std::string e = j.at("encoder").get<std::string>();
            if (e == "textbook") c.encoder_style = EncoderStyle::Textbook;
            else if (e == "ms") c.encoder_style = EncoderStyle::EntanglingMS;
            else throw ConfigError("config /encoder: must be \"textbook\" or \"ms\"");
        }
        c.classify_by_threshold = j.value("classify_by_threshold", false);
        c.exact = j.value("exact", false);
        c.threads = j.value("threads", 1);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config parse error in ") + path + ": " + e.what());
    }
    return config_from_json(j);
}

} // namespace qmr
