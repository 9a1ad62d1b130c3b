#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "qmr/channels.hpp"
#include "qmr/circuits.hpp"
#include "qmr/core.hpp"
#include "qmr/rng.hpp"

namespace qmr {

enum class OutcomeFilter { Both, Only0, Only1 };

// Full experiment configuration for one pipeline run. The sub-records carry
// their own durations; meas_duration_us and recool_duration_us here are
// authoritative and are copied into them when the runner is built.
struct Scenario {
    Ket input_state = ket_from_bloch(1.5707963267948966, 0.0);  // |+>
    double meas_duration_us = 200.0;
    double recool_duration_us = 800.0;
    DetectionModel detection{};
    NoiseParams noise{};
    long shots = 10000;
    std::uint64_t seed = 1;
    std::optional<Unitary> d_unitary;  // commutes with phase flips; folded into the encoder
    std::optional<Unitary> u_unitary;  // applied to the system qubit after correction
    EncoderStyle encoder_style = EncoderStyle::Textbook;
    bool skip_encoding = false;       // bare single-qubit measurement (no code)
    bool skip_ancilla_reset = false;  // diagnostic: re-encode without resetting ancillas
    bool classify_by_threshold = false;  // outcome label from photon counts, not projection

    void validate() const {
        if (input_state.n != 1) throw std::invalid_argument("Scenario: input must be one qubit");
        if (shots < 1) throw std::invalid_argument("Scenario: shots must be >= 1");
        if (!(meas_duration_us > 0) || !(recool_duration_us > 0)) {
            throw std::invalid_argument("Scenario: durations must be > 0");
        }
        detection.validate();
        noise.validate();
        if (u_unitary && u_unitary->n != 1) {
            throw std::invalid_argument("Scenario: U hook must be a single-qubit unitary");
        }
    }

    bool noise_enabled() const {
        return !(std::isinf(noise.t2_us) && noise.base_gate_error == 0.0 &&
                 noise.gate_error_per_phonon == 0.0);
    }
};

// One measurement branch propagated exactly through the pipeline.
struct Branch {
    double probability = 0.0;
    DensityMatrix rho_meas;  // register after projection and recool noise
    DensityMatrix rho_sys;   // corrected system qubit
    DensityMatrix rho_rec;   // register after reset and re-encoding
};

struct BranchSet {
    DensityMatrix rho_enc;
    std::array<std::optional<Branch>, 2> branches;

    DensityMatrix rho_meas_mean() const { return mean(&Branch::rho_meas); }
    DensityMatrix rho_rec_mean() const { return mean(&Branch::rho_rec); }
    DensityMatrix rho_sys_mean() const { return mean(&Branch::rho_sys); }

private:
    DensityMatrix mean(DensityMatrix Branch::* field) const {
        const Branch& any = branches[0] ? *branches[0] : *branches[1];
        Matrix acc = Matrix::Zero((any.*field).elements.rows(), (any.*field).elements.cols());
        for (const auto& b : branches) {
            if (b) acc += b->probability * (*b.*field).elements;
        }
        return DensityMatrix::unchecked(std::move(acc), (any.*field).n);
    }
};

struct RunRecord {
    int projection = 0;     // Born-rule branch taken
    int outcome = 0;        // grouping label (threshold classification if enabled)
    int photon_counts = 0;
    double probability = 0; // probability of the projection branch
    DensityMatrix rho_enc;
    DensityMatrix rho_meas;
    DensityMatrix rho_sys;
    DensityMatrix rho_rec;
};

// Precomputes the circuit unitaries and the exact branch states for a
// scenario, then serves sampled runs (run_once) and exact conditional
// outputs. Immutable after construction; safe to share across threads.
class ProtocolRunner {
public:
    explicit ProtocolRunner(Scenario s) : s_(std::move(s)) {
        s_.validate();
        s_.detection.duration_us = s_.meas_duration_us;
        s_.noise.recool_duration_us = s_.recool_duration_us;
        if (!s_.skip_encoding) {
            encoder_ = build_encoder(s_.d_unitary, s_.encoder_style);
            u_enc_ = circuit_unitary(encoder_.circuit).elements;
            u_dec_ = circuit_unitary(build_decoder_and_correct(encoder_)).elements;
        }
        branches_ = eval(s_.input_state);
    }

    const Scenario& scenario() const { return s_; }
    const BranchSet& branches() const { return branches_; }

    double outcome0_probability() const {
        const auto& b = branches_.branches[0];
        return b ? b->probability : 0.0;
    }

    RunRecord run_once(Rng& rng) const {
        const double p0 = outcome0_probability();
        int projection = rng.uniform() < p0 ? 0 : 1;
        double prob = projection == 0 ? p0 : 1.0 - p0;
        if (prob < default_tolerances().branch_probability) {
            projection = 1 - projection;
            prob = 1.0 - prob;
        }
        const Branch& br = *branches_.branches[projection];

        RunRecord rec;
        rec.projection = projection;
        rec.probability = prob;
        rec.photon_counts = sample_photon_counts(s_.detection, projection == 1 ? 1 : 0, rng);
        const int classified = rec.photon_counts >= s_.detection.threshold_counts ? 1 : 0;
        rec.outcome = s_.classify_by_threshold ? classified : projection;
        rec.rho_enc = branches_.rho_enc;
        rec.rho_meas = br.rho_meas;
        rec.rho_sys = br.rho_sys;
        rec.rho_rec = br.rho_rec;
        return rec;
    }

    // Exact pipeline evaluation for an arbitrary input (used by process
    // tomography, which probes the channel with the standard input set).
    BranchSet eval(const Ket& input) const {
        const int n = s_.skip_encoding ? 1 : 3;

        BranchSet out;
        DensityMatrix rho = density_from_ket(input);
        if (!s_.skip_encoding) {
            rho = tensor(rho, density_from_ket(Ket::basis_state(2, 0)));
            rho = apply_unitary(rho, u_enc_);
        }
        out.rho_enc = rho;

        const bool noisy = s_.noise_enabled();
        for (int o = 0; o < 2; ++o) {
            const Matrix proj = basis_projector(n, 0, o);
            const double p = std::clamp((proj * rho.elements).trace().real(), 0.0, 1.0);
            if (p < default_tolerances().branch_probability) continue;

            Branch br;
            br.probability = p;
            DensityMatrix state =
                DensityMatrix::unchecked(proj * rho.elements * proj / p, n);
            if (noisy) {
                state = noise_after_measurement(s_.noise, s_.meas_duration_us, o, n, 0)
                            .apply(state);
            }
            br.rho_meas = state;

            if (s_.skip_encoding) {
                br.rho_sys = apply_hook(state);
                br.rho_rec = br.rho_sys;
            } else {
                const DensityMatrix decoded = apply_unitary(state, u_dec_);
                br.rho_sys = apply_hook(partial_trace(decoded, {0}));
                DensityMatrix before_reencode =
                    s_.skip_ancilla_reset
                        ? hook_on_register(decoded)
                        : tensor(br.rho_sys, density_from_ket(Ket::basis_state(2, 0)));
                br.rho_rec = apply_unitary(before_reencode, u_enc_);
            }
            out.branches[o] = std::move(br);
        }
        return out;
    }

    // Exact conditional system-qubit output for one input.
    std::optional<DensityMatrix> conditional_system_output(const Ket& input,
                                                           OutcomeFilter filter) const {
        const BranchSet bs = eval(input);
        if (filter == OutcomeFilter::Both) return bs.rho_sys_mean();
        const auto& b = bs.branches[filter == OutcomeFilter::Only0 ? 0 : 1];
        if (!b) return std::nullopt;
        return b->rho_sys;
    }

private:
    DensityMatrix apply_hook(const DensityMatrix& sys) const {
        if (!s_.u_unitary) return sys;
        return apply_unitary(sys, s_.u_unitary->elements);
    }
    DensityMatrix hook_on_register(const DensityMatrix& reg) const {
        if (!s_.u_unitary) return reg;
        return apply_unitary(reg, embed_single(s_.u_unitary->elements, 0, reg.n));
    }

    Scenario s_;
    Encoder encoder_;
    Matrix u_enc_;
    Matrix u_dec_;
    BranchSet branches_;
};

inline RunRecord run_once(const Scenario& s, Rng& rng) {
    return ProtocolRunner(s).run_once(rng);
}

// The pipeline viewed as a deterministic single-qubit channel from the input
// state to rho_sys, with measurement branches averaged or post-selected.
// Returns nullopt when a post-selected branch has zero probability for one of
// the probe inputs. Throws std::domain_error if post-selection does not give
// a completely positive linear map (input-dependent branch probabilities).
inline std::optional<QuantumChannel> run_channel_on_system(const Scenario& s,
                                                           OutcomeFilter filter) {
    ProtocolRunner runner(s);
    std::array<Matrix, 4> images;
    const std::array<Ket, 4> inputs = standard_input_kets();
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        const auto out = runner.conditional_system_output(inputs[j], filter);
        if (!out) return std::nullopt;
        images[j] = out->elements;
    }
    const char* name = filter == OutcomeFilter::Both
                           ? "pipeline/both"
                           : (filter == OutcomeFilter::Only0 ? "pipeline/only0" : "pipeline/only1");
    return channel_from_choi(choi_from_conditional_outputs(images), name);
}

// ---------------------------------------------------------------------------
// Outcome-information probe: estimated p(outcome 0) for a list of inputs.

struct OutcomeProbe {
    double p0_estimate = 0.0;
    double std_error = 0.0;
    long shots = 0;
};

inline void require_standard_inputs(const std::vector<Ket>& inputs) {
    for (const Ket& ref : standard_input_kets()) {
        bool found = false;
        for (const Ket& k : inputs) {
            if (k.n == 1 && squared_overlap(ref, k) > 1.0 - 1e-9) {
                found = true;
                break;
            }
        }
        if (!found) {
            throw std::invalid_argument(
                "outcome_information_test: the four standard inputs must be included");
        }
    }
}

inline std::vector<OutcomeProbe> outcome_information_test(const std::vector<Ket>& inputs,
                                                          const Scenario& s, Rng& rng) {
    require_standard_inputs(inputs);
    std::vector<OutcomeProbe> probes;
    probes.reserve(inputs.size());
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        Scenario sj = s;
        sj.input_state = inputs[j];
        ProtocolRunner runner(std::move(sj));
        Rng task = rng.split(j);
        long zeros = 0;
        for (long t = 0; t < s.shots; ++t) {
            if (runner.run_once(task).projection == 0) ++zeros;
        }
        OutcomeProbe p;
        p.shots = s.shots;
        p.p0_estimate = static_cast<double>(zeros) / static_cast<double>(s.shots);
        p.std_error = std::sqrt(p.p0_estimate * (1.0 - p.p0_estimate) /
                                static_cast<double>(s.shots));
        probes.push_back(p);
    }
    return probes;
}

inline std::vector<double> outcome_information_exact(const std::vector<Ket>& inputs,
                                                     const Scenario& s) {
    require_standard_inputs(inputs);
    std::vector<double> p0s;
    p0s.reserve(inputs.size());
    for (const Ket& k : inputs) {
        Scenario sj = s;
        sj.input_state = k;
        p0s.push_back(ProtocolRunner(std::move(sj)).outcome0_probability());
    }
    return p0s;
}

} // namespace qmr
