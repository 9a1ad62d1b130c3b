#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "qmr/core.hpp"

namespace qmr {

enum class Axis { X, Y, Z };

inline const Matrix& axis_matrix(Axis a) {
    switch (a) {
        case Axis::X: return pauli_x();
        case Axis::Y: return pauli_y();
        case Axis::Z: return pauli_z();
    }
    throw std::invalid_argument("axis_matrix: bad axis");
}

inline char axis_name(Axis a) { return a == Axis::X ? 'x' : (a == Axis::Y ? 'y' : 'z'); }

// The gate vocabulary mirrors a trapped-ion set: collective rotations,
// addressed phase shifts and one collective entangling (MS) operation,
// plus the textbook gates used by the reference encoder/decoder.
struct Gate {
    enum class Kind {
        CollectiveRotation,  // axis, params[0] = angle; exp(-i a/2 sum_k sigma_axis)
        Phase,               // targets[0], params[0]; diag(1, e^{i a}) on target
        MS,                  // params[0] = angle, params[1] = phase; exp(-i a/4 S_phi^2)
        Hadamard,            // targets[0]
        Cnot,                // targets[0] = control, targets[1] = target
        ControlledControlledX,  // targets[0..1] = controls, targets[2] = target
        Pauli,               // targets[0], axis
        Diagonal,            // params = 2^n phases applied to the basis states
    };

    Kind kind;
    std::vector<int> targets;
    std::vector<double> params;
    Axis axis = Axis::Z;

    static Gate collective_rotation(Axis axis, double angle) {
        return Gate{Kind::CollectiveRotation, {}, {angle}, axis};
    }
    static Gate phase(int target, double angle) {
        return Gate{Kind::Phase, {target}, {angle}, Axis::Z};
    }
    static Gate ms(double angle, double phi) {
        return Gate{Kind::MS, {}, {angle, phi}, Axis::Z};
    }
    static Gate hadamard(int target) { return Gate{Kind::Hadamard, {target}, {}, Axis::Z}; }
    static Gate cnot(int control, int target) {
        return Gate{Kind::Cnot, {control, target}, {}, Axis::Z};
    }
    static Gate ccx(int c1, int c2, int target) {
        return Gate{Kind::ControlledControlledX, {c1, c2, target}, {}, Axis::Z};
    }
    static Gate pauli_gate(int target, Axis axis) {
        return Gate{Kind::Pauli, {target}, {}, axis};
    }
    static Gate diagonal(std::vector<double> phases) {
        return Gate{Kind::Diagonal, {}, std::move(phases), Axis::Z};
    }
};

struct Circuit {
    int register_size = 0;
    std::vector<Gate> gates;
    std::string label;
};

// ---------------------------------------------------------------------------
// Gate matrices

inline Matrix rotation_2x2(Axis axis, double angle) {
    const Complex mi(0, -1);
    Eigen::SelfAdjointEigenSolver<Matrix> es(axis_matrix(axis));
    Vector phases = (mi * angle / 2.0 * es.eigenvalues().cast<Complex>().array()).exp();
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

inline Matrix gate_matrix(const Gate& g, int n) {
    const int d = dim_of(n);
    for (int t : g.targets) {
        if (t < 0 || t >= n) throw std::invalid_argument("gate_matrix: target out of range");
    }
    switch (g.kind) {
        case Gate::Kind::CollectiveRotation: {
            const Matrix r = rotation_2x2(g.axis, g.params.at(0));
            Matrix out = Matrix::Identity(1, 1);
            for (int k = 0; k < n; ++k) out = kronecker(out, r);
            return out;
        }
        case Gate::Kind::Phase: {
            Matrix p(2, 2);
            p << 1, 0, 0, std::exp(Complex(0, g.params.at(0)));
            return embed_single(p, g.targets.at(0), n);
        }
        case Gate::Kind::MS: {
            const double angle = g.params.at(0);
            const double phi = g.params.at(1);
            const Matrix s2 = std::cos(phi) * pauli_x() + std::sin(phi) * pauli_y();
            Matrix s = Matrix::Zero(d, d);
            for (int k = 0; k < n; ++k) s += embed_single(s2, k, n);
            Eigen::SelfAdjointEigenSolver<Matrix> es(s * s);
            Vector phases =
                (Complex(0, -1) * angle / 4.0 * es.eigenvalues().cast<Complex>().array()).exp();
            return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
        }
        case Gate::Kind::Hadamard: {
            Matrix h(2, 2);
            h << 1, 1, 1, -1;
            h /= std::numbers::sqrt2;
            return embed_single(h, g.targets.at(0), n);
        }
        case Gate::Kind::Cnot: {
            const int c = g.targets.at(0), t = g.targets.at(1);
            if (c == t) throw std::invalid_argument("cnot: control equals target");
            Matrix m = Matrix::Zero(d, d);
            for (int i = 0; i < d; ++i) {
                const int j = bit_of(i, c, n) ? (i ^ (1 << (n - 1 - t))) : i;
                m(j, i) = 1.0;
            }
            return m;
        }
        case Gate::Kind::ControlledControlledX: {
            const int c1 = g.targets.at(0), c2 = g.targets.at(1), t = g.targets.at(2);
            if (c1 == c2 || c1 == t || c2 == t) {
                throw std::invalid_argument("ccx: indices must be distinct");
            }
            Matrix m = Matrix::Zero(d, d);
            for (int i = 0; i < d; ++i) {
                const int j =
                    (bit_of(i, c1, n) && bit_of(i, c2, n)) ? (i ^ (1 << (n - 1 - t))) : i;
                m(j, i) = 1.0;
            }
            return m;
        }
        case Gate::Kind::Pauli:
            return embed_single(axis_matrix(g.axis), g.targets.at(0), n);
        case Gate::Kind::Diagonal: {
            if (static_cast<int>(g.params.size()) != d) {
                throw std::invalid_argument("diagonal gate: need 2^n phases");
            }
            Matrix m = Matrix::Zero(d, d);
            for (int i = 0; i < d; ++i) m(i, i) = std::exp(Complex(0, g.params[i]));
            return m;
        }
    }
    throw std::invalid_argument("gate_matrix: unknown gate kind");
}

inline Unitary circuit_unitary(const Circuit& c) {
    Matrix u = Matrix::Identity(dim_of(c.register_size), dim_of(c.register_size));
    for (const Gate& g : c.gates) u = gate_matrix(g, c.register_size) * u;
    Unitary out;
    out.elements = std::move(u);
    out.n = c.register_size;
    return out;
}

inline DensityMatrix apply_unitary(const DensityMatrix& rho, const Matrix& u) {
    if (u.rows() != rho.elements.rows()) {
        throw std::invalid_argument("apply_unitary: dimension mismatch");
    }
    return DensityMatrix::unchecked(u * rho.elements * u.adjoint(), rho.n);
}

inline DensityMatrix apply_circuit(const DensityMatrix& rho, const Circuit& c) {
    if (c.register_size != rho.n) throw std::invalid_argument("apply_circuit: dimension mismatch");
    return apply_unitary(rho, circuit_unitary(c).elements);
}

// ---------------------------------------------------------------------------
// Encoder / decoder for the three-qubit phase-flip code.
//
// Qubit 0 is the system qubit; qubits 1 and 2 are ancillas. The code maps
// a|0> + b|1> (times |00> on the ancillas) to a|+++> + b|--->.

enum class EncoderStyle { Textbook, EntanglingMS };

// An encoder circuit together with the diagonal unitary D it effectively
// appends to the plain code map. D commutes with every single-qubit Z, so it
// is transparent to phase-flip errors; the matching decoder removes it.
// The textbook construction has D = identity unless a d_choice is supplied.
// The single-MS construction is intrinsically the code map followed by a CZ
// between the two ancillas.
struct Encoder {
    Circuit circuit;
    Vector d_diag;  // diagonal of the effective D
    EncoderStyle style = EncoderStyle::Textbook;

    bool d_is_identity(double tol = 1e-14) const {
        return (d_diag.array() - d_diag(0)).abs().maxCoeff() <= tol;
    }
};

// d_choice must commute with each Z_k (i.e. be diagonal); checked elementwise.
inline std::vector<double> diagonal_phases_of(const Unitary& d,
                                              const Tolerances& tol = default_tolerances()) {
    d.validate(tol);
    const int n = d.n;
    for (int k = 0; k < n; ++k) {
        const Matrix z = embed_single(pauli_z(), k, n);
        if ((d.elements * z - z * d.elements).cwiseAbs().maxCoeff() > tol.z_commutation) {
            throw std::invalid_argument("encoder D must commute with every single-qubit Z");
        }
    }
    std::vector<double> phases(dim_of(n));
    for (int i = 0; i < dim_of(n); ++i) phases[i] = std::arg(d.elements(i, i));
    return phases;
}

inline Encoder build_encoder(std::optional<Unitary> d_choice = std::nullopt,
                             EncoderStyle style = EncoderStyle::Textbook,
                             const Tolerances& tol = default_tolerances()) {
    constexpr double pi = std::numbers::pi;
    Encoder enc;
    enc.style = style;
    enc.circuit.register_size = 3;
    Vector d = Vector::Ones(8);

    if (style == EncoderStyle::Textbook) {
        enc.circuit.label = "encoder/textbook";
        enc.circuit.gates = {
            Gate::cnot(0, 1),
            Gate::cnot(0, 2),
            Gate::hadamard(0),
            Gate::hadamard(1),
            Gate::hadamard(2),
        };
    } else {
        // One collective entangling operation; realizes the code map up to
        // CZ on the ancilla pair, which becomes part of the effective D.
        enc.circuit.label = "encoder/ms";
        enc.circuit.gates = {
            Gate::collective_rotation(Axis::X, -pi / 2),
            Gate::phase(0, -pi / 2),
            Gate::ms(pi / 2, 0.0),
            Gate::collective_rotation(Axis::X, -pi / 2),
        };
        for (int i = 0; i < 8; ++i) {
            if (bit_of(i, 1, 3) && bit_of(i, 2, 3)) d(i) = -1.0;
        }
    }

    if (d_choice) {
        if (d_choice->n != 3) throw std::invalid_argument("encoder D must act on 3 qubits");
        const std::vector<double> phases = diagonal_phases_of(*d_choice, tol);
        enc.circuit.gates.push_back(Gate::diagonal(phases));
        for (int i = 0; i < 8; ++i) d(i) *= std::exp(Complex(0, phases[i]));
    }
    enc.d_diag = std::move(d);
    return enc;
}

// Decoder matched to an encoder: undo the effective D, undo the basis change
// and the redundancy circuit, then majority-vote correct the system qubit
// (doubly-controlled X). After this the system qubit carries the logical
// state and the ancillas hold the syndrome.
inline Circuit build_decoder_and_correct(const Encoder& matching) {
    Circuit dec;
    dec.register_size = 3;
    dec.label = "decoder+correct";
    if (!matching.d_is_identity()) {
        std::vector<double> inv(8);
        for (int i = 0; i < 8; ++i) inv[i] = -std::arg(matching.d_diag(i));
        dec.gates.push_back(Gate::diagonal(inv));
    }
    dec.gates.push_back(Gate::hadamard(0));
    dec.gates.push_back(Gate::hadamard(1));
    dec.gates.push_back(Gate::hadamard(2));
    dec.gates.push_back(Gate::cnot(0, 1));
    dec.gates.push_back(Gate::cnot(0, 2));
    dec.gates.push_back(Gate::ccx(1, 2, 0));
    return dec;
}

inline Circuit build_decoder_and_correct() { return build_decoder_and_correct(build_encoder()); }

// ---------------------------------------------------------------------------
// Syndrome bookkeeping. The syndrome is the ancilla pattern (q1, q2) after
// decoding; `flip_target` names the qubit whose post-decode X restores the
// register (nullopt for the trivial syndrome). The doubly-controlled gate in
// the decoder already performs the system-qubit case coherently.

struct SyndromeAction {
    int syndrome;  // 2*q1 + q2
    std::optional<int> flip_target;
};

inline std::array<SyndromeAction, 4> syndrome_table() {
    return {{
        {0b00, std::nullopt},  // no error
        {0b01, 2},             // phase flip on qubit 2
        {0b10, 1},             // phase flip on qubit 1
        {0b11, 0},             // phase flip on the system qubit
    }};
}

// Probability of each ancilla pattern (q1, q2) in a decoded 3-qubit state.
inline std::array<double, 4> syndrome_distribution(const DensityMatrix& decoded) {
    if (decoded.n != 3) throw std::invalid_argument("syndrome_distribution: need 3 qubits");
    std::array<double, 4> p{};
    for (int i = 0; i < 8; ++i) {
        const int s = 2 * bit_of(i, 1, 3) + bit_of(i, 2, 3);
        p[s] += decoded.elements(i, i).real();
    }
    return p;
}

} // namespace qmr
