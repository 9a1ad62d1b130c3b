#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <complex>
#include <stdexcept>
#include <vector>

#include "qmr/tolerances.hpp"

namespace qmr {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

constexpr int kMaxQubits = 3;

inline int dim_of(int n) { return 1 << n; }

// Register convention is big-endian: qubit 0 is the leftmost tensor factor,
// i.e. the most significant bit of a computational basis index.
inline int bit_of(std::size_t basis_index, int qubit, int n) {
    return static_cast<int>((basis_index >> (n - 1 - qubit)) & 1u);
}

inline int qubits_from_dim(Eigen::Index d) {
    int n = 0;
    while ((Eigen::Index{1} << n) < d) ++n;
    if ((Eigen::Index{1} << n) != d) {
        throw std::invalid_argument("dimension is not a power of two");
    }
    return n;
}

// ---------------------------------------------------------------------------
// Pauli / common single-qubit matrices

inline const Matrix& pauli_i() {
    static const Matrix m = Matrix::Identity(2, 2);
    return m;
}
inline const Matrix& pauli_x() {
    static const Matrix m = (Matrix(2, 2) << 0, 1, 1, 0).finished();
    return m;
}
inline const Matrix& pauli_y() {
    static const Matrix m =
        (Matrix(2, 2) << 0, Complex(0, -1), Complex(0, 1), 0).finished();
    return m;
}
inline const Matrix& pauli_z() {
    static const Matrix m = (Matrix(2, 2) << 1, 0, 0, -1).finished();
    return m;
}
inline const Matrix& pauli(int index) {
    switch (index) {
        case 0: return pauli_i();
        case 1: return pauli_x();
        case 2: return pauli_y();
        case 3: return pauli_z();
    }
    throw std::invalid_argument("pauli: index must be 0..3");
}

inline Matrix kronecker(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// Embed a single-qubit operator at `qubit` of an n-qubit register.
inline Matrix embed_single(const Matrix& g, int qubit, int n) {
    if (qubit < 0 || qubit >= n) throw std::invalid_argument("embed_single: bad qubit index");
    Matrix out = Matrix::Identity(1, 1);
    for (int k = 0; k < n; ++k) out = kronecker(out, k == qubit ? g : pauli_i());
    return out;
}

// ---------------------------------------------------------------------------
// Domain types

struct Ket {
    Vector amplitudes;
    int n = 0;

    static Ket from_amplitudes(Vector amps, const Tolerances& tol = default_tolerances()) {
        Ket psi;
        psi.n = qubits_from_dim(amps.size());
        if (psi.n < 1 || psi.n > kMaxQubits) {
            throw std::invalid_argument("Ket: qubit count must be 1..3");
        }
        const double nrm2 = amps.squaredNorm();
        if (std::abs(nrm2 - 1.0) > tol.ket_norm) {
            throw std::invalid_argument("Ket: amplitudes are not normalized");
        }
        psi.amplitudes = std::move(amps);
        return psi;
    }

    static Ket basis_state(int n, std::size_t index) {
        Vector v = Vector::Zero(dim_of(n));
        v(static_cast<Eigen::Index>(index)) = 1.0;
        Ket psi;
        psi.amplitudes = std::move(v);
        psi.n = n;
        return psi;
    }
};

struct DensityMatrix {
    Matrix elements;
    int n = 0;

    int dim() const { return dim_of(n); }

    void validate(const Tolerances& tol = default_tolerances()) const {
        if (elements.rows() != elements.cols() || elements.rows() != dim()) {
            throw std::invalid_argument("DensityMatrix: shape does not match qubit count");
        }
        if ((elements - elements.adjoint()).cwiseAbs().maxCoeff() > tol.hermiticity) {
            throw std::invalid_argument("DensityMatrix: not Hermitian");
        }
        if (std::abs(elements.trace().real() - 1.0) > tol.trace_one ||
            std::abs(elements.trace().imag()) > tol.trace_one) {
            throw std::invalid_argument("DensityMatrix: trace is not one");
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(elements, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -tol.psd_floor) {
            throw std::invalid_argument("DensityMatrix: negative eigenvalue beyond slack");
        }
    }

    static DensityMatrix from_matrix(Matrix m, const Tolerances& tol = default_tolerances()) {
        DensityMatrix rho;
        rho.n = qubits_from_dim(m.rows());
        rho.elements = std::move(m);
        rho.validate(tol);
        return rho;
    }

    // For outputs of arithmetic known to preserve the invariants; skips checks.
    static DensityMatrix unchecked(Matrix m, int n) {
        DensityMatrix rho;
        rho.elements = std::move(m);
        rho.n = n;
        return rho;
    }
};

struct Unitary {
    Matrix elements;
    int n = 0;

    void validate(const Tolerances& tol = default_tolerances()) const {
        const Matrix uu = elements * elements.adjoint();
        if ((uu - Matrix::Identity(uu.rows(), uu.cols())).cwiseAbs().maxCoeff() > tol.unitarity) {
            throw std::invalid_argument("Unitary: U U^dag deviates from identity");
        }
    }

    static Unitary from_matrix(Matrix m, const Tolerances& tol = default_tolerances()) {
        Unitary u;
        u.n = qubits_from_dim(m.rows());
        u.elements = std::move(m);
        u.validate(tol);
        return u;
    }
};

// ---------------------------------------------------------------------------
// Construction

inline Ket ket_from_bloch(double theta, double phi) {
    Vector v(2);
    v(0) = std::cos(theta / 2.0);
    v(1) = std::exp(Complex(0, phi)) * std::sin(theta / 2.0);
    Ket psi;
    psi.amplitudes = std::move(v);
    psi.n = 1;
    return psi;
}

inline DensityMatrix density_from_ket(const Ket& psi) {
    return DensityMatrix::unchecked(psi.amplitudes * psi.amplitudes.adjoint(), psi.n);
}

inline DensityMatrix maximally_mixed(int n) {
    const int d = dim_of(n);
    return DensityMatrix::unchecked(Matrix::Identity(d, d) / static_cast<double>(d), n);
}

inline Ket tensor(const Ket& a, const Ket& b) {
    if (a.n + b.n > kMaxQubits) {
        throw std::invalid_argument("tensor: combined register exceeds 3 qubits");
    }
    Vector v(a.amplitudes.size() * b.amplitudes.size());
    for (Eigen::Index i = 0; i < a.amplitudes.size(); ++i)
        v.segment(i * b.amplitudes.size(), b.amplitudes.size()) = a.amplitudes(i) * b.amplitudes;
    Ket out;
    out.amplitudes = std::move(v);
    out.n = a.n + b.n;
    return out;
}

inline DensityMatrix tensor(const DensityMatrix& a, const DensityMatrix& b) {
    if (a.n + b.n > kMaxQubits) {
        throw std::invalid_argument("tensor: combined register exceeds 3 qubits");
    }
    return DensityMatrix::unchecked(kronecker(a.elements, b.elements), a.n + b.n);
}

// Reduced state on `keep` (kept qubits stay in their original relative order).
inline DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<int>& keep) {
    if (keep.empty()) throw std::invalid_argument("partial_trace: keep set is empty");
    std::vector<int> k = keep;
    std::sort(k.begin(), k.end());
    if (std::unique(k.begin(), k.end()) != k.end()) {
        throw std::invalid_argument("partial_trace: duplicate qubit index");
    }
    for (int q : k) {
        if (q < 0 || q >= rho.n) throw std::invalid_argument("partial_trace: index out of range");
    }

    const int n = rho.n;
    const int d = rho.dim();
    const int nk = static_cast<int>(k.size());
    const int dk = dim_of(nk);

    auto kept_index = [&](int full) {
        int out = 0;
        for (int a = 0; a < nk; ++a) out |= bit_of(full, k[a], n) << (nk - 1 - a);
        return out;
    };
    auto traced_bits = [&](int full) {
        int out = 0, pos = 0;
        for (int q = 0; q < n; ++q) {
            if (!std::binary_search(k.begin(), k.end(), q)) {
                out |= bit_of(full, q, n) << pos;
                ++pos;
            }
        }
        return out;
    };

    Matrix out = Matrix::Zero(dk, dk);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (traced_bits(i) == traced_bits(j)) {
                out(kept_index(i), kept_index(j)) += rho.elements(i, j);
            }
        }
    }
    return DensityMatrix::unchecked(std::move(out), nk);
}

// ---------------------------------------------------------------------------
// Hermitian matrix functions and metrics

// Square root via eigendecomposition. Eigenvalues below a relative floor are
// clamped to zero: reconstruction noise puts rank-deficient directions at
// O(eps), and sqrt would amplify that to O(sqrt(eps)).
inline Matrix hermitian_sqrt(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    const double floor = 1e-14 * std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 0.0);
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = ev(i) > floor ? std::sqrt(ev(i)) : 0.0;
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

inline double uhlmann_fidelity(const DensityMatrix& rho1, const DensityMatrix& rho2) {
    if (rho1.n != rho2.n) throw std::invalid_argument("uhlmann_fidelity: dimension mismatch");
    const Matrix s1 = hermitian_sqrt(rho1.elements);
    const Matrix inner = hermitian_sqrt(s1 * rho2.elements * s1);
    const double f = inner.trace().real();
    return std::clamp(f * f, 0.0, 1.0);
}

inline double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
    if (a.n != b.n) throw std::invalid_argument("trace_distance: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<Matrix> es(a.elements - b.elements, Eigen::EigenvaluesOnly);
    return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

inline double squared_overlap(const Ket& a, const Ket& b) {
    const Complex ip = a.amplitudes.adjoint() * b.amplitudes;
    return std::norm(ip);
}

// The informationally complete single-qubit input set |0>, |1>, |+>, |+i>,
// in that order. Process tomography and the no-information probe use it.
inline std::array<Ket, 4> standard_input_kets() {
    const double pi = 3.14159265358979323846;
    return {Ket::basis_state(1, 0), Ket::basis_state(1, 1), ket_from_bloch(pi / 2, 0.0),
            ket_from_bloch(pi / 2, pi / 2)};
}

} // namespace qmr
