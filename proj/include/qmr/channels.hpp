#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "qmr/circuits.hpp"
#include "qmr/core.hpp"
#include "qmr/rng.hpp"

namespace qmr {

// ---------------------------------------------------------------------------
// CPTP maps as Kraus-operator lists

struct QuantumChannel {
    std::vector<Matrix> kraus;
    std::string label;
    int n = 0;

    DensityMatrix apply(const DensityMatrix& rho) const {
        if (rho.n != n) throw std::invalid_argument("QuantumChannel::apply: dimension mismatch");
        Matrix out = Matrix::Zero(rho.elements.rows(), rho.elements.cols());
        for (const Matrix& k : kraus) out += k * rho.elements * k.adjoint();
        return DensityMatrix::unchecked(std::move(out), rho.n);
    }

    Matrix completeness() const {
        Matrix s = Matrix::Zero(dim_of(n), dim_of(n));
        for (const Matrix& k : kraus) s += k.adjoint() * k;
        return s;
    }

    bool is_trace_preserving(const Tolerances& tol = default_tolerances()) const {
        const Matrix s = completeness();
        return (s - Matrix::Identity(s.rows(), s.cols())).cwiseAbs().maxCoeff() <=
               tol.kraus_completeness;
    }
};

inline QuantumChannel identity_channel(int n) {
    return {{Matrix::Identity(dim_of(n), dim_of(n))}, "identity", n};
}

// apply(compose(g, f), rho) == apply(g, apply(f, rho))
inline QuantumChannel compose(const QuantumChannel& g, const QuantumChannel& f) {
    if (g.n != f.n) throw std::invalid_argument("compose: dimension mismatch");
    QuantumChannel out;
    out.n = g.n;
    out.label = g.label + "*" + f.label;
    out.kraus.reserve(g.kraus.size() * f.kraus.size());
    for (const Matrix& kg : g.kraus)
        for (const Matrix& kf : f.kraus) out.kraus.push_back(kg * kf);
    return out;
}

inline Matrix basis_projector(int n, int target, int outcome) {
    Matrix p(2, 2);
    p << (outcome == 0 ? 1 : 0), 0, 0, (outcome == 1 ? 1 : 0);
    return embed_single(p, target, n);
}

// ---------------------------------------------------------------------------
// Projective measurement with sampled outcome

struct MeasureResult {
    int outcome = 0;
    DensityMatrix post_state;
    double probability = 0.0;
};

inline MeasureResult measure_qubit(const DensityMatrix& rho, int target, Rng& rng,
                                   const Tolerances& tol = default_tolerances()) {
    if (target < 0 || target >= rho.n) {
        throw std::invalid_argument("measure_qubit: target out of range");
    }
    const Matrix p0 = basis_projector(rho.n, target, 0);
    double prob0 = (p0 * rho.elements).trace().real();
    prob0 = std::clamp(prob0, 0.0, 1.0);

    int outcome = rng.uniform() < prob0 ? 0 : 1;
    double prob = outcome == 0 ? prob0 : 1.0 - prob0;
    if (prob < tol.branch_probability) {
        outcome = 1 - outcome;  // degenerate branch: take the other one
        prob = 1.0 - prob;
    }

    const Matrix proj = outcome == 0 ? p0 : basis_projector(rho.n, target, 1);
    MeasureResult r;
    r.outcome = outcome;
    r.probability = prob;
    r.post_state = DensityMatrix::unchecked(proj * rho.elements * proj / prob, rho.n);
    return r;
}

// Measurement with the outcome discarded: Kraus {P0, P1}; equals full
// dephasing of the target in the computational basis.
inline QuantumChannel measurement_channel_ignoring_outcome(int n, int target) {
    return {{basis_projector(n, target, 0), basis_projector(n, target, 1)},
            "measure-ignore-outcome",
            n};
}

// Kraus {sqrt(1-p) I, sqrt(p) Z_target}; off-diagonals decay by (1-2p).
inline QuantumChannel dephasing_channel(int n, int target, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("dephasing_channel: p not in [0,1]");
    const int d = dim_of(n);
    return {{std::sqrt(1.0 - p) * Matrix::Identity(d, d),
             std::sqrt(p) * embed_single(pauli_z(), target, n)},
            "dephasing",
            n};
}

// Convention: rho -> (1-p) rho + p I/2 on the target.
inline QuantumChannel depolarizing_channel(int n, int target, double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument("depolarizing_channel: p not in [0,1]");
    }
    const int d = dim_of(n);
    return {{std::sqrt(1.0 - 0.75 * p) * Matrix::Identity(d, d),
             std::sqrt(0.25 * p) * embed_single(pauli_x(), target, n),
             std::sqrt(0.25 * p) * embed_single(pauli_y(), target, n),
             std::sqrt(0.25 * p) * embed_single(pauli_z(), target, n)},
            "depolarizing",
            n};
}

// ---------------------------------------------------------------------------
// Photon-count detection (electron shelving readout)

struct DetectionModel {
    double bright_rate_per_us = 0.06;  // expected counts/us after projection onto |1>
    double dark_rate_per_us = 0.0;     // counts/us after projection onto |0>
    int threshold_counts = 3;          // classified bright iff counts >= threshold
    double duration_us = 200.0;

    void validate() const {
        if (bright_rate_per_us < 0 || dark_rate_per_us < 0) {
            throw std::invalid_argument("DetectionModel: rates must be >= 0");
        }
        if (threshold_counts < 1) throw std::invalid_argument("DetectionModel: threshold < 1");
        if (!(duration_us > 0)) throw std::invalid_argument("DetectionModel: duration <= 0");
    }
};

inline double poisson_pmf(int k, double lambda) {
    if (k < 0) return 0.0;
    if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
    return std::exp(k * std::log(lambda) - lambda - std::lgamma(k + 1.0));
}

// P(X < k) for X ~ Poisson(lambda).
inline double poisson_cdf_below(int k, double lambda) {
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += poisson_pmf(i, lambda);
    return std::min(s, 1.0);
}

// Total misclassification probability: a bright ion read below threshold
// plus a dark ion read at or above threshold.
inline double detection_error(const DetectionModel& m) {
    m.validate();
    const double lam_b = m.bright_rate_per_us * m.duration_us;
    const double lam_d = m.dark_rate_per_us * m.duration_us;
    const double miss_bright = poisson_cdf_below(m.threshold_counts, lam_b);
    const double false_bright = 1.0 - poisson_cdf_below(m.threshold_counts, lam_d);
    return miss_bright + false_bright;
}

inline int sample_photon_counts(const DetectionModel& m, int projected_bright, Rng& rng) {
    m.validate();
    const double rate = projected_bright ? m.bright_rate_per_us : m.dark_rate_per_us;
    return rng.poisson(rate * m.duration_us);
}

// ---------------------------------------------------------------------------
// Post-measurement noise: idle dephasing of the protected qubits during
// measurement plus recooling, and a depolarizing contribution to subsequent
// gates that grows with the mean phonon number left by photon recoil.

struct PhononEntry {
    double recool_us = 0.0;
    double meas_us = 0.0;
    double nbar_bright = 0.0;  // projection onto |1>: scattering heats the string
    double nbar_dark = 0.0;    // projection onto |0>: residual motional excitation
};

struct NoiseParams {
    double t2_us = std::numeric_limits<double>::infinity();
    double recool_duration_us = 0.0;
    std::vector<PhononEntry> phonon_table;
    double gate_error_per_phonon = 0.0;
    double base_gate_error = 0.0;

    void validate() const {
        if (!(t2_us > 0)) throw std::invalid_argument("NoiseParams: T2 must be > 0");
        if (recool_duration_us < 0 || gate_error_per_phonon < 0 || base_gate_error < 0) {
            throw std::invalid_argument("NoiseParams: negative parameter");
        }
        for (const auto& e : phonon_table) {
            if (e.recool_us < 0 || e.meas_us < 0 || e.nbar_bright < 0 || e.nbar_dark < 0) {
                throw std::invalid_argument("NoiseParams: negative phonon-table entry");
            }
        }
    }

    // Nearest-entry lookup in the (recool, meas) plane; 0 when no table given.
    double nbar(double meas_us, int outcome) const {
        if (phonon_table.empty()) return 0.0;
        const PhononEntry* best = nullptr;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (const auto& e : phonon_table) {
            const double dr = e.recool_us - recool_duration_us;
            const double dm = e.meas_us - meas_us;
            const double d2 = dr * dr + dm * dm;
            if (d2 < best_d2) {
                best_d2 = d2;
                best = &e;
            }
        }
        return outcome == 1 ? best->nbar_bright : best->nbar_dark;
    }

    double idle_dephasing_probability(double meas_duration_us) const {
        const double t = meas_duration_us + recool_duration_us;
        if (std::isinf(t2_us)) return 0.0;
        return (1.0 - std::exp(-t / t2_us)) / 2.0;
    }

    double depolarizing_probability(double meas_duration_us, int outcome) const {
        const double q = base_gate_error + gate_error_per_phonon * nbar(meas_duration_us, outcome);
        return std::clamp(q, 0.0, 1.0);
    }
};

// ---------------------------------------------------------------------------
// One-qubit process algebra: Choi matrix from the images of the standard
// input set {|0>, |1>, |+>, |+i>} (see standard_input_kets()), and Kraus
// extraction from a Choi matrix.

// The four standard inputs span operator space:
//   E00 = rho_0, E11 = rho_1,
//   E01 = rho_+ + i rho_{+i} - (1+i)/2 (rho_0 + rho_1),  E10 = E01^dag.
// The same combinations applied to the images give eps(E_ij), from which the
// (unnormalized) Choi matrix C = sum_ij E_ij (x) eps(E_ij) is assembled.
inline Matrix choi_from_conditional_outputs(const std::array<Matrix, 4>& images) {
    const Matrix& e0 = images[0];
    const Matrix& e1 = images[1];
    const Complex i1(0, 1);
    const Matrix e01 = images[2] + i1 * images[3] - 0.5 * (1.0 + i1) * (e0 + e1);
    const Matrix e10 = e01.adjoint();
    Matrix choi = Matrix::Zero(4, 4);
    choi.block(0, 0, 2, 2) = e0;
    choi.block(0, 2, 2, 2) = e01;
    choi.block(2, 0, 2, 2) = e10;
    choi.block(2, 2, 2, 2) = e1;
    return choi;
}

// Kraus decomposition of a (numerically) positive Choi matrix. Eigenvalues
// within `negativity_slack` of zero are clamped; anything more negative means
// the map was not completely positive and is rejected.
inline QuantumChannel channel_from_choi(const Matrix& choi, std::string label,
                                        double negativity_slack = 1e-7) {
    if (choi.rows() != 4 || choi.cols() != 4) {
        throw std::invalid_argument("channel_from_choi: expected a 4x4 Choi matrix");
    }
    const Matrix herm = 0.5 * (choi + choi.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(herm);
    if (es.eigenvalues().minCoeff() < -negativity_slack) {
        throw std::domain_error("channel_from_choi: map is not completely positive");
    }
    QuantumChannel ch;
    ch.n = 1;
    ch.label = std::move(label);
    for (int v = 0; v < 4; ++v) {
        const double lam = es.eigenvalues()(v);
        if (lam <= 0.0) continue;
        Matrix k(2, 2);
        // eigenvector component (i*2 + m) is the amplitude of |i> (x) |m>;
        // the Kraus operator maps |i> -> sum_m w_{i,m} |m>.
        for (int i = 0; i < 2; ++i)
            for (int m = 0; m < 2; ++m) k(m, i) = es.eigenvectors()(i * 2 + m, v);
        ch.kraus.push_back(std::sqrt(lam) * k);
    }
    if (ch.kraus.empty()) ch.kraus.push_back(Matrix::Zero(2, 2));
    return ch;
}

// Composite channel acting after the measurement of `measured` on an
// n-qubit register: idle dephasing on every unmeasured qubit with
// p = (1 - exp(-(tau_meas + tau_recool)/T2))/2, then depolarizing on all
// qubits with strength base + slope * nbar(outcome). Only a projection onto
// |1> heats the motion, so nbar (and hence the gate error) depends on the
// outcome, while the coherence loss affects both projections alike.
inline QuantumChannel noise_after_measurement(const NoiseParams& params, double meas_duration_us,
                                              int outcome, int n = 3, int measured = 0) {
    params.validate();
    if (!(meas_duration_us > 0)) {
        throw std::invalid_argument("noise_after_measurement: duration <= 0");
    }
    QuantumChannel ch = identity_channel(n);
    ch.label = "post-measurement-noise";

    const double p_deph = params.idle_dephasing_probability(meas_duration_us);
    if (p_deph > 0.0) {
        for (int k = 0; k < n; ++k) {
            if (k == measured) continue;
            ch = compose(dephasing_channel(n, k, p_deph), ch);
        }
    }
    const double q = params.depolarizing_probability(meas_duration_us, outcome);
    if (q > 0.0) {
        for (int k = 0; k < n; ++k) ch = compose(depolarizing_channel(n, k, q), ch);
    }
    ch.label = "post-measurement-noise";
    return ch;
}

} // namespace qmr
