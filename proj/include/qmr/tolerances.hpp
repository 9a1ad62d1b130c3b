#pragma once

namespace qmr {

// Central numeric slack used by the invariant checks. Every validating
// routine takes one of these, defaulting to default_tolerances().
struct Tolerances {
    double ket_norm = 1e-12;           // | ||psi||^2 - 1 |
    double hermiticity = 1e-12;        // elementwise |rho - rho^dag|
    double trace_one = 1e-12;          // |tr(rho) - 1|
    double psd_floor = 1e-10;          // eigenvalues may dip to -psd_floor
    double unitarity = 1e-10;          // elementwise |U U^dag - I|
    double kraus_completeness = 1e-9;  // elementwise |sum K^dag K - I|
    double z_commutation = 1e-9;       // elementwise |[D, Z_k]|
    double fidelity_symmetry = 1e-9;
    double chi_normalization = 1e-6;   // |tr(chi) - 1| accepted by process_fidelity
    double branch_probability = 1e-12; // below this a measurement branch is degenerate
};

inline const Tolerances& default_tolerances() {
    static const Tolerances t{};
    return t;
}

} // namespace qmr
