#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qmr/channels.hpp"
#include "qmr/core.hpp"
#include "qmr/rng.hpp"

namespace qmr {

// ---------------------------------------------------------------------------
// Measurement settings and count records
//
// A setting names one Pauli basis per qubit ("XZY" = X on qubit 0, Z on
// qubit 1, Y on qubit 2). Outcome bitstrings use the same qubit order; bit 0
// marks the +1 eigenstate. Counts are stored as doubles so that exact
// (infinite-shot) frequencies can flow through the same interfaces.

struct CountRecord {
    std::string setting;
    std::map<std::string, double> histogram;
    double shots = 0.0;

    void validate() const {
        if (setting.empty()) throw std::invalid_argument("CountRecord: empty setting");
        double total = 0.0;
        for (const auto& [key, count] : histogram) {
            if (key.size() != setting.size()) {
                throw std::invalid_argument("CountRecord: outcome length mismatch");
            }
            if (count < 0) throw std::invalid_argument("CountRecord: negative count");
            total += count;
        }
        if (std::abs(total - shots) > 1e-9 * std::max(1.0, shots)) {
            throw std::invalid_argument("CountRecord: histogram does not sum to shots");
        }
    }
};

inline std::string outcome_bitstring(int index, int n) {
    std::string s(n, '0');
    for (int k = 0; k < n; ++k) s[k] = bit_of(index, k, n) ? '1' : '0';
    return s;
}

inline int outcome_index(const std::string& bits) {
    int idx = 0;
    for (char c : bits) idx = (idx << 1) | (c == '1' ? 1 : 0);
    return idx;
}

// All 3^n Pauli settings in lexicographic order (X < Y < Z).
inline std::vector<std::string> all_pauli_settings(int n) {
    std::vector<std::string> out{""};
    for (int k = 0; k < n; ++k) {
        std::vector<std::string> next;
        next.reserve(out.size() * 3);
        for (const auto& prefix : out)
            for (char c : {'X', 'Y', 'Z'}) next.push_back(prefix + c);
        out = std::move(next);
    }
    return out;
}

// Basis-change unitary mapping the +1/-1 eigenstates of the setting's Pauli
// operators onto |0>/|1>.
inline Matrix setting_unitary(const std::string& setting) {
    Matrix u = Matrix::Identity(1, 1);
    for (char c : setting) {
        Matrix g(2, 2);
        switch (c) {
            case 'X':
                g << 1, 1, 1, -1;
                g /= std::numbers::sqrt2;
                break;
            case 'Y':
                g << 1, Complex(0, -1), 1, Complex(0, 1);
                g /= std::numbers::sqrt2;
                break;
            case 'Z':
                g = Matrix::Identity(2, 2);
                break;
            default:
                throw std::invalid_argument("setting_unitary: setting chars must be X, Y or Z");
        }
        u = kronecker(u, g);
    }
    return u;
}

inline Eigen::VectorXd born_probabilities(const DensityMatrix& rho, const std::string& setting) {
    if (static_cast<int>(setting.size()) != rho.n) {
        throw std::invalid_argument("born_probabilities: setting length != qubit count");
    }
    const Matrix u = setting_unitary(setting);
    return (u * rho.elements * u.adjoint()).diagonal().real().cwiseMax(0.0);
}

// Multinomial sampling of Born statistics, one record per setting.
inline std::vector<CountRecord> simulate_counts(const DensityMatrix& rho,
                                                const std::vector<std::string>& settings,
                                                long shots_per_setting, Rng& rng) {
    if (shots_per_setting < 1) throw std::invalid_argument("simulate_counts: shots < 1");
    std::vector<CountRecord> records;
    records.reserve(settings.size());
    for (const std::string& setting : settings) {
        const Eigen::VectorXd p = born_probabilities(rho, setting);
        std::vector<double> weights(p.data(), p.data() + p.size());
        CountRecord rec;
        rec.setting = setting;
        rec.shots = static_cast<double>(shots_per_setting);
        std::vector<double> tally(weights.size(), 0.0);
        for (long t = 0; t < shots_per_setting; ++t) tally[rng.discrete(weights)] += 1.0;
        for (std::size_t i = 0; i < tally.size(); ++i) {
            if (tally[i] > 0) rec.histogram[outcome_bitstring(static_cast<int>(i), rho.n)] = tally[i];
        }
        records.push_back(std::move(rec));
    }
    return records;
}

// Infinite-shot limit: probabilities recorded directly, shots = 1.
inline std::vector<CountRecord> exact_frequencies(const DensityMatrix& rho,
                                                  const std::vector<std::string>& settings) {
    std::vector<CountRecord> records;
    records.reserve(settings.size());
    for (const std::string& setting : settings) {
        const Eigen::VectorXd p = born_probabilities(rho, setting);
        CountRecord rec;
        rec.setting = setting;
        rec.shots = 1.0;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            if (p(i) > 0) rec.histogram[outcome_bitstring(static_cast<int>(i), rho.n)] = p(i);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Maximum-likelihood state reconstruction (iterative R rho R fixed point
// with a diluted-step fallback whenever the plain step would decrease the
// multinomial log-likelihood).

struct MleOptions {
    double tol = 1e-10;   // stop when ||rho_{k+1} - rho_k||_F < tol
    int max_iter = 20000;
    bool track_loglik = false;
};

struct MleResult {
    DensityMatrix rho;
    bool converged = false;
    int iterations = 0;
    double log_likelihood = 0.0;
    std::vector<double> loglik_trace;
};

namespace detail {

struct MlePovm {
    int n = 0;
    Eigen::MatrixXcd mstack;   // row i = vec(M_i)^dagger, observed outcomes only
    Eigen::VectorXd counts;    // matching observed counts
    double total_counts = 0.0;
    Eigen::MatrixXcd mstack_all;  // every POVM element, for the completeness check
};

inline MlePovm build_mle_povm(const std::vector<CountRecord>& records) {
    if (records.empty()) throw std::invalid_argument("mle_reconstruct: no count records");
    MlePovm out;
    out.n = static_cast<int>(records.front().setting.size());
    const int d = dim_of(out.n);

    std::vector<Eigen::VectorXcd> rows_obs, rows_all;
    std::vector<double> counts;
    for (const CountRecord& rec : records) {
        rec.validate();
        if (static_cast<int>(rec.setting.size()) != out.n) {
            throw std::invalid_argument("mle_reconstruct: mixed register sizes");
        }
        const Matrix u_adj = setting_unitary(rec.setting).adjoint();
        for (int b = 0; b < d; ++b) {
            const Vector col = u_adj.col(b);
            const Matrix m = col * col.adjoint();
            Eigen::VectorXcd v(d * d);
            for (int j = 0; j < d; ++j)
                for (int i = 0; i < d; ++i) v(j * d + i) = std::conj(m(i, j));
            rows_all.push_back(v);
            const auto it = rec.histogram.find(outcome_bitstring(b, out.n));
            const double f = it == rec.histogram.end() ? 0.0 : it->second;
            if (f > 0) {
                rows_obs.push_back(v);
                counts.push_back(f);
                out.total_counts += f;
            }
        }
    }
    out.mstack.resize(static_cast<Eigen::Index>(rows_obs.size()), d * d);
    for (std::size_t i = 0; i < rows_obs.size(); ++i) out.mstack.row(i) = rows_obs[i].transpose();
    out.mstack_all.resize(static_cast<Eigen::Index>(rows_all.size()), d * d);
    for (std::size_t i = 0; i < rows_all.size(); ++i) out.mstack_all.row(i) = rows_all[i].transpose();
    out.counts = Eigen::Map<Eigen::VectorXd>(counts.data(), static_cast<Eigen::Index>(counts.size()));
    return out;
}

inline bool informationally_complete(const MlePovm& povm) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(povm.mstack_all);
    return qr.rank() == povm.mstack_all.cols();
}

} // namespace detail

inline MleResult mle_reconstruct(const std::vector<CountRecord>& records,
                                 const MleOptions& options = {}) {
    const detail::MlePovm povm = detail::build_mle_povm(records);
    if (!detail::informationally_complete(povm)) {
        throw std::invalid_argument("mle_reconstruct: settings are not informationally complete");
    }
    const int d = dim_of(povm.n);

    Matrix rho = Matrix::Identity(d, d) / static_cast<double>(d);
    auto vec_of = [d](const Matrix& m) {
        Eigen::VectorXcd v(d * d);
        for (int j = 0; j < d; ++j)
            for (int i = 0; i < d; ++i) v(j * d + i) = m(i, j);
        return v;
    };
    auto unvec = [d](const Eigen::VectorXcd& v) {
        Matrix m(d, d);
        for (int j = 0; j < d; ++j)
            for (int i = 0; i < d; ++i) m(i, j) = v(j * d + i);
        return m;
    };
    auto probabilities = [&](const Matrix& r) {
        return (povm.mstack * vec_of(r)).real().cwiseMax(1e-300).eval();
    };
    auto loglik = [&](const Eigen::VectorXd& p) {
        return povm.counts.dot(p.array().log().matrix());
    };
    auto r_operator = [&](const Eigen::VectorXd& p) {
        const Eigen::VectorXd w = povm.counts.cwiseQuotient(p) / povm.total_counts;
        Matrix r = unvec(povm.mstack.adjoint() * w.cast<Complex>());
        return ((r + r.adjoint()) / 2.0).eval();
    };

    struct Iterate {
        Matrix rho;
        Eigen::VectorXd p;
        double ll;
    };

    // One R rho R step; falls back to a diluted step (I + eps R) when the
    // plain step would decrease the likelihood. Returns false when stationary
    // within floating-point resolution.
    auto base_step = [&](const Iterate& from, Iterate& to) {
        const Matrix r = r_operator(from.p);
        Matrix cand = r * from.rho * r;
        cand /= cand.trace().real();
        Eigen::VectorXd cand_p = probabilities(cand);
        double cand_ll = loglik(cand_p);
        if (cand_ll < from.ll - 1e-12 * std::abs(from.ll)) {
            for (double eps = 0.5;; eps /= 2.0) {
                if (eps < 1e-6) return false;
                const Matrix a = Matrix::Identity(d, d) + eps * r;
                Matrix diluted = a * from.rho * a.adjoint();
                diluted /= diluted.trace().real();
                Eigen::VectorXd dil_p = probabilities(diluted);
                const double dil_ll = loglik(dil_p);
                if (dil_ll >= from.ll - 1e-12 * std::abs(from.ll)) {
                    cand = std::move(diluted);
                    cand_p = std::move(dil_p);
                    cand_ll = dil_ll;
                    break;
                }
            }
        }
        to.rho = std::move(cand);
        to.p = std::move(cand_p);
        to.ll = cand_ll;
        return true;
    };

    auto project = [&](Matrix m) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.adjoint()));
        const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(1e-14);
        return Matrix(es.eigenvectors() * (ev / ev.sum()).asDiagonal() *
                      es.eigenvectors().adjoint());
    };

    MleResult result;
    Iterate cur{rho, probabilities(rho), 0.0};
    cur.ll = loglik(cur.p);
    if (options.track_loglik) result.loglik_trace.push_back(cur.ll);

    // SQUAREM-style extrapolation over the fixed-point map: two base steps
    // give a secant direction; the extrapolated point is re-stabilized by one
    // more base step and only kept when the likelihood does not drop. This
    // removes the crawl of the plain iteration when the state has tiny
    // eigenvalues, while keeping the likelihood non-decreasing.
    while (result.iterations < options.max_iter) {
        Iterate one, two;
        if (!base_step(cur, one)) break;
        ++result.iterations;
        if (options.track_loglik) result.loglik_trace.push_back(one.ll);
        double delta = (one.rho - cur.rho).norm();
        if (delta < options.tol) {
            cur = std::move(one);
            result.converged = true;
            break;
        }
        if (result.iterations >= options.max_iter) {
            cur = std::move(one);
            break;
        }

        if (!base_step(one, two)) {
            cur = std::move(one);
            break;
        }
        ++result.iterations;
        if (options.track_loglik) result.loglik_trace.push_back(two.ll);
        delta = (two.rho - one.rho).norm();

        const Matrix dir = one.rho - cur.rho;
        const Matrix curvature = (two.rho - one.rho) - dir;
        const double curv_norm = curvature.norm();
        Iterate next = std::move(two);
        if (curv_norm > 1e-15) {
            const double alpha = -dir.norm() / curv_norm;
            Iterate extra;
            extra.rho = project(cur.rho - 2.0 * alpha * dir + (alpha * alpha) * curvature);
            Iterate stabilized;
            Iterate seed{extra.rho, probabilities(extra.rho), 0.0};
            seed.ll = loglik(seed.p);
            if (base_step(seed, stabilized) &&
                stabilized.ll >= next.ll - 1e-11 * (1.0 + std::abs(next.ll))) {
                delta = (stabilized.rho - next.rho).norm() + delta;
                next = std::move(stabilized);
            }
        }
        if (options.track_loglik) result.loglik_trace.back() = next.ll;
        const double step = (next.rho - cur.rho).norm();
        cur = std::move(next);
        if (std::min(delta, step) < options.tol) {
            result.converged = true;
            break;
        }
    }

    result.log_likelihood = cur.ll;
    result.rho = DensityMatrix::unchecked(std::move(cur.rho), povm.n);
    return result;
}

// ---------------------------------------------------------------------------
// Process matrix in the Pauli basis {I, X, Y, Z}, normalized to trace one
// (a trace-preserving channel lands exactly on trace one; the identity
// process is a single unit entry at (0,0)).

struct ChiMatrix {
    Matrix m;  // 4x4

    void validate(const Tolerances& tol = default_tolerances()) const {
        if (m.rows() != 4 || m.cols() != 4) throw std::invalid_argument("ChiMatrix: must be 4x4");
        if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-9) {
            throw std::invalid_argument("ChiMatrix: not Hermitian");
        }
        if (std::abs(m.trace().real() - 1.0) > tol.chi_normalization) {
            throw std::invalid_argument("ChiMatrix: trace differs from one");
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-9) {
            throw std::invalid_argument("ChiMatrix: negative eigenvalue");
        }
    }
};

inline ChiMatrix chi_identity() {
    Matrix m = Matrix::Zero(4, 4);
    m(0, 0) = 1.0;
    return ChiMatrix{std::move(m)};
}

// chi coefficients of a Choi matrix: chi_mn = <B_mn, C>/4 with
// B_mn = (I (x) P_m) Omega (I (x) P_n), Omega the unnormalized maximally
// entangled projector. The B_mn are mutually orthogonal with norm 2.
inline Matrix chi_from_choi(const Matrix& choi) {
    Matrix omega = Matrix::Zero(4, 4);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) omega(i * 2 + i, j * 2 + j) = 1.0;
    Matrix chi(4, 4);
    for (int m = 0; m < 4; ++m) {
        const Matrix pm = kronecker(Matrix::Identity(2, 2), pauli(m));
        for (int n = 0; n < 4; ++n) {
            const Matrix pn = kronecker(Matrix::Identity(2, 2), pauli(n));
            chi(m, n) = ((pm * omega * pn).adjoint() * choi).trace() / 4.0;
        }
    }
    return chi;
}

// Projection to the physical cone: hermitize, clamp negative eigenvalues,
// renormalize the trace.
inline ChiMatrix project_chi_to_physical(const Matrix& chi_raw) {
    const Matrix herm = 0.5 * (chi_raw + chi_raw.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(herm);
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    const double total = ev.sum();
    if (!(total > 0)) throw std::domain_error("project_chi_to_physical: zero process");
    Matrix m = es.eigenvectors() * (ev / total).asDiagonal() *
               es.eigenvectors().adjoint();
    return ChiMatrix{std::move(m)};
}

inline ChiMatrix chi_from_outputs(const std::array<DensityMatrix, 4>& images) {
    std::array<Matrix, 4> mats;
    for (std::size_t i = 0; i < 4; ++i) mats[i] = images[i].elements;
    return project_chi_to_physical(chi_from_choi(choi_from_conditional_outputs(mats)));
}

inline double process_fidelity(const ChiMatrix& chi_exp, const ChiMatrix& chi_id,
                               const Tolerances& tol = default_tolerances()) {
    if (std::abs(chi_exp.m.trace().real() - 1.0) > tol.chi_normalization ||
        std::abs(chi_id.m.trace().real() - 1.0) > tol.chi_normalization) {
        throw std::invalid_argument("process_fidelity: chi matrices must be trace-normalized");
    }
    const double f = (chi_id.m * chi_exp.m).trace().real();
    return std::clamp(f, 0.0, 1.0);
}

// Single-qubit process tomography: run the standard inputs through the
// channel, reconstruct each output (exactly when shots_per_setting == 0,
// otherwise by MLE on simulated counts), and invert to a physical chi.
inline ChiMatrix process_tomography(const std::function<DensityMatrix(const Ket&)>& channel_runner,
                                    long shots_per_setting, Rng& rng,
                                    const MleOptions& mle_options = {}) {
    const std::array<Ket, 4> inputs = standard_input_kets();
    const std::vector<std::string> settings = {"X", "Y", "Z"};
    std::array<DensityMatrix, 4> images;
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        DensityMatrix out = channel_runner(inputs[j]);
        if (shots_per_setting > 0) {
            Rng task = rng.split(j);
            const auto counts = simulate_counts(out, settings, shots_per_setting, task);
            out = mle_reconstruct(counts, mle_options).rho;
        }
        images[j] = std::move(out);
    }
    return chi_from_outputs(images);
}

// ---------------------------------------------------------------------------
// Non-parametric bootstrap: resample every histogram multinomially at its
// original shot count, recompute the statistic, report mean and 1-sigma
// spread. Failed resamples are excluded and counted.

struct BootstrapResult {
    double mean = 0.0;
    double stddev = 0.0;
    int excluded = 0;
};

inline CountRecord resample_record(const CountRecord& rec, Rng& rng) {
    const long n = static_cast<long>(std::llround(rec.shots));
    if (n < 1) throw std::invalid_argument("bootstrap: record has non-integer shots");
    std::vector<std::string> keys;
    std::vector<double> weights;
    keys.reserve(rec.histogram.size());
    for (const auto& [key, count] : rec.histogram) {
        keys.push_back(key);
        weights.push_back(count);
    }
    std::vector<double> tally(weights.size(), 0.0);
    for (long t = 0; t < n; ++t) tally[rng.discrete(weights)] += 1.0;
    CountRecord out;
    out.setting = rec.setting;
    out.shots = rec.shots;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (tally[i] > 0) out.histogram[keys[i]] = tally[i];
    }
    return out;
}

inline BootstrapResult bootstrap(
    const std::vector<CountRecord>& counts, int resamples,
    const std::function<double(const std::vector<CountRecord>&)>& statistic, Rng& rng) {
    if (resamples < 100) throw std::invalid_argument("bootstrap: need at least 100 resamples");
    std::vector<double> values;
    values.reserve(resamples);
    BootstrapResult result;
    for (int r = 0; r < resamples; ++r) {
        Rng task = rng.split(r);
        std::vector<CountRecord> resampled;
        resampled.reserve(counts.size());
        for (const CountRecord& rec : counts) resampled.push_back(resample_record(rec, task));
        try {
            values.push_back(statistic(resampled));
        } catch (const std::exception&) {
            ++result.excluded;
        }
    }
    if (values.empty()) return result;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    if (values.size() > 1) var /= static_cast<double>(values.size() - 1);
    result.mean = mean;
    result.stddev = std::sqrt(var);
    return result;
}

} // namespace qmr
