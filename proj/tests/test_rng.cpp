#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <vector>

#include "qmr/rng.hpp"

using namespace qmr;
using Catch::Approx;

TEST_CASE("identical seeds give identical streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("split children are independent of the parent and each other") {
    Rng parent(7);
    const std::uint64_t before = Rng(7).next_u64();
    Rng child0 = parent.split(0);
    Rng child1 = parent.split(1);
    CHECK(parent.next_u64() == before);  // split does not advance the parent
    CHECK(child0.next_u64() != child1.next_u64());

    // Splitting twice with the same stream index reproduces the child.
    Rng again = Rng(7).split(0);
    Rng child0b = Rng(7).split(0);
    for (int i = 0; i < 100; ++i) REQUIRE(again.next_u64() == child0b.next_u64());
}

TEST_CASE("uniform stays in [0,1)") {
    Rng rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("poisson sampling matches mean and variance at lambda = 12") {
    Rng rng(2026);
    const int draws = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < draws; ++i) {
        const int k = rng.poisson(12.0);
        sum += k;
        sum2 += static_cast<double>(k) * k;
    }
    const double mean = sum / draws;
    const double var = sum2 / draws - mean * mean;
    CHECK(mean == Approx(12.0).margin(0.05));
    CHECK(var == Approx(12.0).margin(0.4));
}

TEST_CASE("poisson edge cases") {
    Rng rng(3);
    for (int i = 0; i < 100; ++i) CHECK(rng.poisson(0.0) == 0);
    CHECK_THROWS_AS(rng.poisson(-1.0), std::invalid_argument);
    CHECK_THROWS_AS(rng.poisson(1e6), std::invalid_argument);
}

TEST_CASE("discrete draw follows the weights") {
    Rng rng(5);
    const std::array<double, 3> w{0.5, 0.3, 0.2};
    std::array<long, 3> tally{};
    const long draws = 100000;
    for (long i = 0; i < draws; ++i) ++tally[rng.discrete(w)];
    for (std::size_t k = 0; k < w.size(); ++k) {
        const double frac = static_cast<double>(tally[k]) / draws;
        const double sigma = std::sqrt(w[k] * (1 - w[k]) / draws);
        CHECK(std::abs(frac - w[k]) < 4 * sigma);
    }
    const std::array<double, 2> zero{0.0, 0.0};
    CHECK_THROWS_AS(rng.discrete(zero), std::invalid_argument);
}

TEST_CASE("normal draws have unit variance") {
    Rng rng(9);
    const int draws = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < draws; ++i) {
        const double x = rng.normal();
        sum += x;
        sum2 += x * x;
    }
    CHECK(sum / draws == Approx(0.0).margin(0.02));
    CHECK(sum2 / draws == Approx(1.0).margin(0.02));
}
