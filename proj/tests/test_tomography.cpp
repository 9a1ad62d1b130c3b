#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "qmr/protocol.hpp"
#include "qmr/tomography.hpp"
#include "support/linear_inversion.hpp"
#include "support/random_states.hpp"

using namespace qmr;
using Catch::Approx;

namespace {
constexpr double pi = std::numbers::pi;

double total_counts(const CountRecord& rec, const std::string& key) {
    const auto it = rec.histogram.find(key);
    return it == rec.histogram.end() ? 0.0 : it->second;
}
} // namespace

TEST_CASE("simulate_counts concentrates on eigenstates") {
    Rng rng(3);
    const DensityMatrix zero = density_from_ket(Ket::basis_state(1, 0));
    const auto z_counts = simulate_counts(zero, {"Z"}, 500, rng);
    REQUIRE(z_counts.size() == 1);
    CHECK(total_counts(z_counts[0], "0") == Approx(500.0));

    const DensityMatrix plus = density_from_ket(ket_from_bloch(pi / 2, 0.0));
    const auto x_counts = simulate_counts(plus, {"X"}, 500, rng);
    CHECK(total_counts(x_counts[0], "0") == Approx(500.0));

    // Maximally mixed register: every outcome uniform within 3 binomial sigma.
    const auto mixed = simulate_counts(maximally_mixed(1), {"X", "Y", "Z"}, 10000, rng);
    for (const CountRecord& rec : mixed) {
        rec.validate();
        for (const char* key : {"0", "1"}) {
            CHECK(std::abs(total_counts(rec, key) - 5000.0) < 3.0 * 50.0);
        }
    }
}

TEST_CASE("mle reconstructs a pure state from heavy sampling") {
    Rng rng(5);
    const DensityMatrix zero = density_from_ket(Ket::basis_state(1, 0));
    const auto counts = simulate_counts(zero, all_pauli_settings(1), 100000, rng);
    const MleResult res = mle_reconstruct(counts);
    CHECK(res.converged);
    CHECK(uhlmann_fidelity(res.rho, zero) >= 0.999);
}

TEST_CASE("mle equals projected linear inversion on exact frequencies") {
    MleOptions options;
    options.tol = 1e-12;
    options.max_iter = 100000;

    const DensityMatrix plus = density_from_ket(ket_from_bloch(pi / 2, 0.0));
    const auto freqs1 = exact_frequencies(plus, all_pauli_settings(1));
    const MleResult r1 = mle_reconstruct(freqs1, options);
    CHECK(trace_distance(r1.rho, testing::linear_inversion(freqs1)) < 1e-6);
    CHECK(trace_distance(r1.rho, plus) < 1e-6);

    Rng rng(7);
    const DensityMatrix rho3 = testing::random_density(3, rng);
    const auto freqs3 = exact_frequencies(rho3, all_pauli_settings(3));
    const MleResult r3 = mle_reconstruct(freqs3, options);
    CHECK(trace_distance(r3.rho, testing::linear_inversion(freqs3)) < 1e-6);
    CHECK(trace_distance(r3.rho, rho3) < 1e-6);
}

TEST_CASE("mle error envelope on the maximally mixed register") {
    Rng rng(11);
    const auto counts = simulate_counts(maximally_mixed(3), all_pauli_settings(3), 100000, rng);
    const MleResult res = mle_reconstruct(counts);
    CHECK(trace_distance(res.rho, maximally_mixed(3)) < 0.02);
}

TEST_CASE("log-likelihood never decreases along the iteration") {
    Rng rng(13);
    const DensityMatrix rho = testing::random_density(2, rng);
    const auto counts = simulate_counts(rho, all_pauli_settings(2), 2000, rng);
    MleOptions options;
    options.track_loglik = true;
    const MleResult res = mle_reconstruct(counts, options);
    REQUIRE(res.loglik_trace.size() > 1);
    for (std::size_t i = 1; i < res.loglik_trace.size(); ++i) {
        REQUIRE(res.loglik_trace[i] >=
                res.loglik_trace[i - 1] - 1e-9 * std::abs(res.loglik_trace[i - 1]));
    }
    res.rho.validate();
}

TEST_CASE("incomplete settings are rejected; iteration caps are reported") {
    Rng rng(17);
    const DensityMatrix rho = testing::random_density(1, rng);
    const auto incomplete = simulate_counts(rho, {"Z"}, 1000, rng);
    CHECK_THROWS_AS(mle_reconstruct(incomplete), std::invalid_argument);

    const auto counts = simulate_counts(rho, all_pauli_settings(1), 1000, rng);
    MleOptions tiny;
    tiny.max_iter = 1;
    tiny.tol = 1e-15;
    const MleResult res = mle_reconstruct(counts, tiny);
    CHECK_FALSE(res.converged);
    CHECK(res.iterations == 1);
    res.rho.validate();
}

TEST_CASE("chi matrices of reference processes") {
    // Identity: a single unit entry at (I, I).
    std::array<DensityMatrix, 4> ident_images;
    const std::array<Ket, 4> inputs = standard_input_kets();
    for (std::size_t j = 0; j < 4; ++j) ident_images[j] = density_from_ket(inputs[j]);
    const ChiMatrix chi_id = chi_from_outputs(ident_images);
    chi_id.validate();
    CHECK(chi_id.m(0, 0).real() == Approx(1.0).margin(1e-12));
    CHECK(chi_id.m.cwiseAbs().sum() == Approx(1.0).margin(1e-9));

    // Full dephasing: Kraus {P0, P1} expands to diag(1/2, 0, 0, 1/2).
    const QuantumChannel dephase = measurement_channel_ignoring_outcome(1, 0);
    std::array<DensityMatrix, 4> deph_images;
    for (std::size_t j = 0; j < 4; ++j) deph_images[j] = dephase.apply(density_from_ket(inputs[j]));
    const ChiMatrix chi_deph = chi_from_outputs(deph_images);
    chi_deph.validate();
    for (int m = 0; m < 4; ++m) {
        for (int n = 0; n < 4; ++n) {
            const double expected = (m == n && (m == 0 || m == 3)) ? 0.5 : 0.0;
            CHECK(std::abs(chi_deph.m(m, n) - expected) < 1e-10);
        }
    }

    CHECK(process_fidelity(chi_id, chi_identity()) == Approx(1.0).margin(1e-10));
    CHECK(process_fidelity(chi_deph, chi_identity()) == Approx(0.5).margin(1e-10));

    ChiMatrix unnormalized{2.0 * chi_identity().m};
    CHECK_THROWS_AS(process_fidelity(unnormalized, chi_identity()), std::invalid_argument);
}

TEST_CASE("self process fidelity peaks exactly on unitary processes") {
    CHECK(process_fidelity(chi_identity(), chi_identity()) == Approx(1.0));

    Rng rng(19);
    const Unitary u = testing::random_unitary(1, rng);
    std::array<DensityMatrix, 4> images;
    const std::array<Ket, 4> inputs = standard_input_kets();
    for (std::size_t j = 0; j < 4; ++j) {
        images[j] = DensityMatrix::unchecked(
            u.elements * density_from_ket(inputs[j]).elements * u.elements.adjoint(), 1);
    }
    const ChiMatrix chi_u = chi_from_outputs(images);
    CHECK(process_fidelity(chi_u, chi_u) == Approx(1.0).margin(1e-9));

    const QuantumChannel dephase = measurement_channel_ignoring_outcome(1, 0);
    std::array<DensityMatrix, 4> deph_images;
    for (std::size_t j = 0; j < 4; ++j) deph_images[j] = dephase.apply(density_from_ket(inputs[j]));
    const ChiMatrix chi_deph = chi_from_outputs(deph_images);
    CHECK(process_fidelity(chi_deph, chi_deph) < 1.0 - 1e-3);
}

TEST_CASE("process tomography of the pipeline") {
    Scenario s;
    s.input_state = ket_from_bloch(pi / 2, 0.0);
    s.shots = 100;
    s.seed = 5;
    const ProtocolRunner runner(s);
    const auto evaluator = [&](const Ket& input) {
        return *runner.conditional_system_output(input, OutcomeFilter::Both);
    };

    Rng exact_rng(23);
    const ChiMatrix exact = process_tomography(evaluator, 0, exact_rng);
    CHECK(process_fidelity(exact, chi_identity()) == Approx(1.0).margin(1e-9));

    Rng sampled_rng(29);
    const ChiMatrix sampled = process_tomography(evaluator, 10000, sampled_rng);
    CHECK(process_fidelity(sampled, chi_identity()) >= 0.99);

    // Bare measurement: dephasing channel at the classical bound.
    Scenario bare = s;
    bare.skip_encoding = true;
    const ProtocolRunner bare_runner(bare);
    const auto bare_evaluator = [&](const Ket& input) {
        return *bare_runner.conditional_system_output(input, OutcomeFilter::Both);
    };
    Rng rng2(31);
    const ChiMatrix chi_bare = process_tomography(bare_evaluator, 0, rng2);
    CHECK(process_fidelity(chi_bare, chi_identity()) == Approx(0.5).margin(1e-9));
}

TEST_CASE("bootstrap spread behaves like a statistical error bar") {
    Rng rng(37);
    const DensityMatrix zero = density_from_ket(Ket::basis_state(1, 0));

    // Constant statistic: zero spread.
    {
        const auto counts = simulate_counts(zero, all_pauli_settings(1), 1000, rng);
        Rng boot(1);
        const BootstrapResult r =
            bootstrap(counts, 100, [](const std::vector<CountRecord>&) { return 7.0; }, boot);
        CHECK(r.mean == Approx(7.0));
        CHECK(r.stddev == Approx(0.0));
        CHECK(r.excluded == 0);
    }

    const MleOptions fast{1e-8, 500, false};
    const auto fidelity_stat = [&](const std::vector<CountRecord>& records) {
        return uhlmann_fidelity(zero, mle_reconstruct(records, fast).rho);
    };

    // Reconstruction fidelity at 1e4 shots per setting fluctuates below 1e-2.
    {
        const auto counts = simulate_counts(zero, all_pauli_settings(1), 10000, rng);
        Rng boot(2);
        const BootstrapResult r = bootstrap(counts, 200, fidelity_stat, boot);
        CHECK(r.stddev < 0.01);
        CHECK(r.mean == Approx(1.0).margin(0.01));
    }

    // The spread shrinks roughly as 1/sqrt(shots). Measured away from the
    // fidelity boundary (mixed truth, fixed pure reference) so the statistic
    // is in its asymptotically normal regime.
    std::array<double, 3> spreads{};
    const std::array<long, 3> shot_grid{1000, 4000, 16000};
    const DensityMatrix pure = density_from_ket(ket_from_bloch(1.0, 0.5));
    const DensityMatrix tilted = DensityMatrix::unchecked(
        0.8 * pure.elements + 0.2 * Matrix::Identity(2, 2) / 2.0, 1);
    const DensityMatrix reference = density_from_ket(Ket::basis_state(1, 0));
    for (std::size_t i = 0; i < shot_grid.size(); ++i) {
        const auto stat = [&](const std::vector<CountRecord>& records) {
            return uhlmann_fidelity(reference, mle_reconstruct(records, fast).rho);
        };
        const auto counts = simulate_counts(tilted, all_pauli_settings(1), shot_grid[i], rng);
        Rng boot(3 + i);
        spreads[i] = bootstrap(counts, 200, stat, boot).stddev;
    }
    CHECK(spreads[0] / spreads[1] == Approx(2.0).margin(0.8));
    CHECK(spreads[1] / spreads[2] == Approx(2.0).margin(0.8));

    // Two independent 1000-resample runs agree on the spread within 15%.
    {
        const auto counts = simulate_counts(tilted, all_pauli_settings(1), 2000, rng);
        Rng boot_a(101), boot_b(202);
        const auto stat = [&](const std::vector<CountRecord>& records) {
            return uhlmann_fidelity(tilted, mle_reconstruct(records, fast).rho);
        };
        const double sa = bootstrap(counts, 1000, stat, boot_a).stddev;
        const double sb = bootstrap(counts, 1000, stat, boot_b).stddev;
        CHECK(std::abs(sa - sb) / sa < 0.15);
    }
}

TEST_CASE("bootstrap failures are excluded and counted") {
    Rng rng(41);
    const DensityMatrix zero = density_from_ket(Ket::basis_state(1, 0));
    const auto counts = simulate_counts(zero, all_pauli_settings(1), 100, rng);

    Rng boot(4);
    const BootstrapResult r = bootstrap(
        counts, 100,
        [](const std::vector<CountRecord>&) -> double { throw std::runtime_error("nope"); },
        boot);
    CHECK(r.excluded == 100);
    CHECK(r.mean == 0.0);

    CHECK_THROWS_AS(bootstrap(counts, 50, [](const auto&) { return 0.0; }, boot),
                    std::invalid_argument);
}
