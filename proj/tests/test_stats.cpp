#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "corrfair/stats.hpp"
#include "oracles.hpp"

using namespace corrfair;

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -5.0,
                                  double hi = 5.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

}  // namespace

TEST_CASE("pearson matches hand cases") {
    const std::vector<double> x{1, 2, 3};
    CHECK(stats::pearson(x, x) == Catch::Approx(1.0).margin(1e-15));
    CHECK(stats::pearson(x, {3, 2, 1}) == -1.0);

    // Frozen from the long double oracle: sqrt(27/28).
    const double r = stats::pearson(x, {1, 2, 4});
    CHECK(r == Catch::Approx(0.9819805060619655).margin(1e-13));
    CHECK(r == Catch::Approx(oracles::naive_pearson(x, {1, 2, 4})).margin(1e-15));
}

TEST_CASE("pearson rejects bad input") {
    CHECK_THROWS_AS(stats::pearson({1, 2}, {1, 2, 3}), LengthMismatch);
    CHECK_THROWS_AS(stats::pearson({1}, {1}), TooFewSamples);
    CHECK_THROWS_AS(stats::pearson({2, 2, 2}, {1, 2, 3}), DegenerateVector);
    CHECK_THROWS_AS(stats::pearson({1, 2, 3}, {7, 7, 7}), DegenerateVector);
}

TEST_CASE("pearson symmetry and affine invariance") {
    std::mt19937_64 rng(611);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 3 + trial % 20;
        auto x = random_vector(rng, n);
        auto y = random_vector(rng, n);
        const double rxy = stats::pearson(x, y);
        CHECK(rxy == stats::pearson(y, x));

        std::uniform_real_distribution<double> coeff(0.1, 4.0);
        const double a = coeff(rng) * (trial % 2 ? 1.0 : -1.0);
        const double b = coeff(rng);
        std::vector<double> ax(n);
        for (std::size_t i = 0; i < n; ++i) ax[i] = a * x[i] + b;
        const double expected = (a > 0 ? rxy : -rxy);
        CHECK(stats::pearson(ax, y) == Catch::Approx(expected).margin(1e-12));
    }
}

TEST_CASE("pearson agrees with the long double oracle on a grid") {
    std::mt19937_64 rng(505);
    int cases = 0;
    for (std::size_t n : {3, 4, 5, 8, 10, 16, 25, 40, 64, 100}) {
        for (int rep = 0; rep < 5; ++rep) {
            auto x = random_vector(rng, n);
            auto y = random_vector(rng, n);
            CHECK(stats::pearson(x, y) ==
                  Catch::Approx(oracles::naive_pearson(x, y)).margin(1e-12));
            ++cases;
        }
    }
    CHECK(cases == 50);
}

TEST_CASE("p-value exact endpoints") {
    CHECK(stats::pearson_p_value(0.0, 3) == 1.0);
    CHECK(stats::pearson_p_value(0.0, 100) == 1.0);
    CHECK(stats::pearson_p_value(1.0, 10) == 0.0);
    CHECK(stats::pearson_p_value(-1.0, 5) == 0.0);
    CHECK_THROWS_AS(stats::pearson_p_value(0.5, 2), TooFewSamples);
}

TEST_CASE("p-value matches the reference distribution") {
    // Frozen from Boost/Student's t: r = 0.9, n = 10.
    CHECK(stats::pearson_p_value(0.9, 10) == Catch::Approx(0.00038715625).margin(1e-9));

    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> rdist(-0.999, 0.999);
    for (int i = 0; i < 200; ++i) {
        const double r = rdist(rng);
        const std::size_t n = 3 + static_cast<std::size_t>(rng() % 60);
        CHECK(stats::pearson_p_value(r, n) ==
              Catch::Approx(oracles::reference_p_value(r, n)).margin(1e-9));
    }
}

TEST_CASE("p-value monotonicity") {
    for (std::size_t n : {4, 7, 12, 30}) {
        double prev = 1.0;
        for (double r = 0.0; r <= 1.0001; r += 0.05) {
            const double p = stats::pearson_p_value(std::min(r, 1.0), n);
            CHECK(p <= prev + 1e-15);
            prev = p;
        }
    }
    for (double r : {0.2, 0.5, 0.8}) {
        double prev = 1.0;
        for (std::size_t n = 3; n < 40; ++n) {
            const double p = stats::pearson_p_value(r, n);
            CHECK(p <= prev + 1e-12);
            prev = p;
        }
    }
}

TEST_CASE("incomplete beta agrees with the high-precision oracle") {
    int cases = 0;
    for (double r : {0.05, 0.15, 0.3, 0.45, 0.6, 0.7, 0.8, 0.9, 0.97, 0.999}) {
        for (std::size_t n : {3, 5, 10, 25, 80}) {
            const double nu = static_cast<double>(n - 2);
            const double t2 = nu * r * r / (1.0 - r * r);
            const double x = nu / (nu + t2);
            CHECK(stats::incomplete_beta(nu / 2.0, 0.5, x) ==
                  Catch::Approx(oracles::reference_incomplete_beta(nu / 2.0, 0.5, x)).margin(1e-9));
            ++cases;
        }
    }
    CHECK(cases == 50);
    CHECK(stats::incomplete_beta(2.0, 3.0, 0.0) == 0.0);
    CHECK(stats::incomplete_beta(2.0, 3.0, 1.0) == 1.0);
}

TEST_CASE("min-max normalize maps onto [0,1]") {
    const auto out = stats::min_max_normalize({0.2, 0.4, 0.6});
    REQUIRE(out.size() == 3);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == Catch::Approx(0.5).margin(1e-15));
    CHECK(out[2] == 1.0);

    // Fixed point: min 0 and max 1 already.
    const std::vector<double> unit{0.0, 0.25, 0.75, 1.0};
    CHECK(stats::min_max_normalize(unit) == unit);

    CHECK_THROWS_AS(stats::min_max_normalize({1.0, 1.0, 1.0}), DegenerateVector);
    CHECK_THROWS_AS(stats::min_max_normalize({1.0}), TooFewSamples);
}

TEST_CASE("min-max normalize preserves order and extreme indices") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 30; ++trial) {
        auto v = random_vector(rng, 4 + trial % 12, 0.0, 3.0);
        const auto out = stats::min_max_normalize(v);

        std::vector<std::size_t> order_in(v.size()), order_out(v.size());
        std::iota(order_in.begin(), order_in.end(), 0);
        order_out = order_in;
        std::stable_sort(order_in.begin(), order_in.end(),
                         [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::stable_sort(order_out.begin(), order_out.end(),
                         [&](std::size_t a, std::size_t b) { return out[a] < out[b]; });
        CHECK(order_in == order_out);

        const auto argmax_in = std::max_element(v.begin(), v.end()) - v.begin();
        const auto argmax_out = std::max_element(out.begin(), out.end()) - out.begin();
        const auto argmin_in = std::min_element(v.begin(), v.end()) - v.begin();
        const auto argmin_out = std::min_element(out.begin(), out.end()) - out.begin();
        CHECK(argmax_in == argmax_out);
        CHECK(argmin_in == argmin_out);
    }
}
