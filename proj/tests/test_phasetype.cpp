#include "phlife/phasetype.hpp"

#include "common.hpp"

#include <doctest.h>

#include <cmath>

using namespace phlife;

namespace {

PhaseTypeDist exponential_dist(double lambda) {
    return PhaseTypeDist((RowVector(1) << 1.0).finished(),
                         PiecewiseMatrixFunction::constant((Matrix(1, 1) << -lambda).finished()));
}

PhaseTypeDist erlang2(double lambda) {
    Matrix t(2, 2);
    t << -lambda, lambda, 0.0, -lambda;
    return PhaseTypeDist((RowVector(2) << 1.0, 0.0).finished(),
                         PiecewiseMatrixFunction::constant(t));
}

}  // namespace

TEST_CASE("survival closed forms") {
    CHECK(exponential_dist(0.5).survival(2.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(erlang2(1.0).survival(1.0) == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-12));
    CHECK(erlang2(1.0).survival(1.0) == doctest::Approx(0.7357589).epsilon(1e-7));

    std::mt19937_64 rng(5);
    PhaseTypeDist d(testutil::random_distribution(rng, 3),
                    PiecewiseMatrixFunction::constant(testutil::random_subintensity(rng, 3)));
    CHECK(d.survival(0.0) == 1.0);
    double prev = 1.0;
    for (double x = 0.25; x <= 12.0; x += 0.25) {
        const double s = d.survival(x);
        CHECK(s <= prev + 1e-12);
        prev = s;
    }
    CHECK_THROWS_AS(d.survival(-0.1), std::domain_error);
}

TEST_CASE("density and hazard closed forms") {
    auto expo = exponential_dist(0.5);
    CHECK(expo.density(2.0) == doctest::Approx(0.5 * std::exp(-1.0)).epsilon(1e-12));
    CHECK(expo.density(2.0) == doctest::Approx(0.1839397).epsilon(1e-6));
    CHECK(expo.hazard(2.0).value() == doctest::Approx(0.5).epsilon(1e-12));

    CHECK(erlang2(1.0).density(1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("density equals the negative survival derivative (finite differences)") {
    // three-phase sub-intensity with exit rates fixed to a small ladder, the
    // shape used by restricted bond fits
    Matrix t(3, 3);
    t << -0.13, 0.10, 0.0, 0.0, -0.41, 0.34, 0.14, 0.0, -0.24;
    PhaseTypeDist d((RowVector(3) << 1.0, 0.0, 0.0).finished(),
                    PiecewiseMatrixFunction::constant(t));
    const double h = 1e-5;
    for (double x : {0.5, 2.0, 7.0, 15.0}) {
        const double fd = -(d.survival(x + h) - d.survival(x - h)) / (2.0 * h);
        CHECK(d.density(x) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("hazard reports unavailable on tail underflow") {
    auto expo = exponential_dist(10.0);
    CHECK_FALSE(expo.hazard(100.0).has_value());
}

TEST_CASE("mean and renewal stationary distribution") {
    CHECK(exponential_dist(0.5).mean() == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(exponential_dist(0.5).renewalStationary()(0) == doctest::Approx(1.0));

    auto e2 = erlang2(1.0);
    CHECK(e2.mean() == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(e2.renewalStationary()(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(e2.renewalStationary()(1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("mean equals quadrature of the survival function") {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 3; ++rep) {
        PhaseTypeDist d(testutil::random_distribution(rng, 3),
                        PiecewiseMatrixFunction::constant(testutil::random_subintensity(rng, 3)));
        // trapezoid quadrature of S until it underflows 1e-12
        double h = 1e-3, x = 0.0, acc = 0.0, s = 1.0;
        while (s > 1e-12 && x < 2000.0) {
            const double s2 = d.survival(x + h);
            acc += 0.5 * (s + s2) * h;
            s = s2;
            x += h;
        }
        CHECK(d.mean() == doctest::Approx(acc).epsilon(1e-6));
    }
}

TEST_CASE("density integrates to one") {
    std::mt19937_64 rng(29);
    PhaseTypeDist d(testutil::random_distribution(rng, 3),
                    PiecewiseMatrixFunction::constant(testutil::random_subintensity(rng, 3)));
    double upper = 1.0;
    while (d.survival(upper) > 1e-7) upper *= 1.5;
    const int n = 4000;
    const double h = upper / n;
    double acc = 0.5 * (d.density(0.0) + d.density(upper));
    for (int i = 1; i < n; ++i) acc += d.density(i * h);
    acc *= h;
    CHECK(acc == doctest::Approx(1.0 - d.survival(upper)).epsilon(1e-6));
}

TEST_CASE("survival via product integral equals expm path for constant T") {
    std::mt19937_64 rng(37);
    Matrix t = testutil::random_subintensity(rng, 4);
    RowVector pi = testutil::random_distribution(rng, 4);
    PhaseTypeDist d(pi, PiecewiseMatrixFunction::constant(t));
    for (double x : {0.3, 1.7, 6.2}) {
        const double direct = pi * expm(t * x) * Vector::Ones(4);
        CHECK(d.survival(x) == doctest::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("sampling: exponential mean within the CLT band") {
    auto expo = exponential_dist(1.0);
    std::mt19937_64 rng(20240106);
    const int n = 1000000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += expo.sample(rng).absorptionTime;
    CHECK(std::abs(sum / n - 1.0) < 0.004);  // 3 sigma of the n-sample mean
}

TEST_CASE("sampling: Erlang path structure is forced") {
    auto e2 = erlang2(1.0);
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        auto s = e2.sample(rng, true);
        REQUIRE(s.states.size() == 2);
        CHECK(s.states[0] == 0);
        CHECK(s.states[1] == 1);
        CHECK(s.sojourns[0] + s.sojourns[1] == doctest::Approx(s.absorptionTime).epsilon(1e-12));
    }
}

TEST_CASE("sampling matches the analytic survival at the mean") {
    std::mt19937_64 rng(107);
    PhaseTypeDist d(testutil::random_distribution(rng, 3),
                    PiecewiseMatrixFunction::constant(testutil::random_subintensity(rng, 3)));
    const double mu = d.mean();
    const double target = d.survival(mu);
    const int n = 200000;
    std::mt19937_64 sampler(55);
    int alive = 0;
    for (int i = 0; i < n; ++i)
        if (d.sample(sampler).absorptionTime > mu) ++alive;
    const double se = std::sqrt(target * (1.0 - target) / n);
    CHECK(std::abs(static_cast<double>(alive) / n - target) < 3.0 * se);
}

TEST_CASE("sampling is deterministic in the seed") {
    auto e2 = erlang2(0.7);
    CHECK(e2.sample(991).absorptionTime == e2.sample(991).absorptionTime);
    CHECK(e2.sample(991).absorptionTime != e2.sample(992).absorptionTime);
}

TEST_CASE("empirical CDF passes a Kolmogorov-Smirnov smoke test") {
    auto e2 = erlang2(1.3);
    const int n = 100000;
    std::vector<double> taus(n);
    std::mt19937_64 rng(314159);
    for (int i = 0; i < n; ++i) taus[i] = e2.sample(rng).absorptionTime;
    std::sort(taus.begin(), taus.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
        const double f = 1.0 - e2.survival(taus[i]);
        ks = std::max(ks, std::max(std::abs(f - static_cast<double>(i) / n),
                                   std::abs(f - static_cast<double>(i + 1) / n)));
    }
    CHECK(ks < 1.63 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("piecewise sub-intensity: survival continues across breakpoints") {
    // hazard 0.5 on [0,1), 2.0 afterwards
    Matrix a = (Matrix(1, 1) << -0.5).finished();
    Matrix b = (Matrix(1, 1) << -2.0).finished();
    PhaseTypeDist d((RowVector(1) << 1.0).finished(),
                    PiecewiseMatrixFunction({0.0, 1.0, 50.0}, {a, b}));
    CHECK(d.survival(2.0) == doctest::Approx(std::exp(-0.5 - 2.0)).epsilon(1e-12));

    std::mt19937_64 rng(64);
    const int n = 200000;
    int alive = 0;
    for (int i = 0; i < n; ++i)
        if (d.sample(rng).absorptionTime > 2.0) ++alive;
    const double target = std::exp(-2.5);
    const double se = std::sqrt(target * (1.0 - target) / n);
    CHECK(std::abs(static_cast<double>(alive) / n - target) < 3.0 * se);
}

TEST_CASE("invalid inputs are rejected") {
    CHECK_THROWS_AS(PhaseTypeDist((RowVector(1) << 0.9).finished(),
                                  PiecewiseMatrixFunction::constant((Matrix(1, 1) << -1.0).finished())),
                    std::invalid_argument);
    Matrix bad(2, 2);
    bad << -1.0, 2.0, 0.0, -1.0;  // positive row sum
    CHECK_THROWS_AS(PhaseTypeDist((RowVector(2) << 0.5, 0.5).finished(),
                                  PiecewiseMatrixFunction::constant(bad)),
                    std::invalid_argument);
}
