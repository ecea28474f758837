#include "phlife/matrixcore.hpp"

#include "common.hpp"

#include <doctest.h>

#include <cmath>

using namespace phlife;
using testutil::max_abs_diff;

namespace {

// brute-force Taylor series, independent of the production expm
Matrix taylor_expm(const Matrix& a, int terms) {
    Matrix sum = Matrix::Identity(a.rows(), a.cols());
    Matrix term = sum;
    for (int k = 1; k <= terms; ++k) {
        term = term * a / k;
        sum += term;
    }
    return sum;
}

}  // namespace

TEST_CASE("prod_integral: constant generators reduce to matrix exponentials") {
    auto f = PiecewiseMatrixFunction::constant((Matrix(1, 1) << -0.5).finished());
    CHECK(prod_integral(f, 0.0, 2.0)(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

    auto zero = PiecewiseMatrixFunction::constant(Matrix::Zero(3, 3));
    CHECK(max_abs_diff(prod_integral(zero, 0.3, 7.1), Matrix::Identity(3, 3)) == 0.0);

    Matrix gen(2, 2);
    gen << -1.0, 1.0, 0.0, 0.0;
    Matrix expected(2, 2);
    expected << std::exp(-1.0), 1.0 - std::exp(-1.0), 0.0, 1.0;
    CHECK(max_abs_diff(prod_integral(PiecewiseMatrixFunction::constant(gen), 0.0, 1.0),
                       expected) < 1e-14);
}

TEST_CASE("prod_integral rejects evaluation outside a gridded domain") {
    Matrix m = Matrix::Zero(2, 2);
    PiecewiseMatrixFunction f({0.0, 1.0, 2.0}, {m, m});
    CHECK_THROWS_AS(prod_integral(f, 0.0, 3.0), std::domain_error);
}

TEST_CASE("expm: identities and Taylor oracle") {
    CHECK(max_abs_diff(expm(Matrix::Zero(3, 3)), Matrix::Identity(3, 3)) == 0.0);

    Matrix nilp(2, 2);
    nilp << 0.0, 1.0, 0.0, 0.0;
    Matrix expected(2, 2);
    expected << 1.0, 1.0, 0.0, 1.0;
    CHECK(max_abs_diff(expm(nilp), expected) < 1e-15);

    std::mt19937_64 rng(41);
    for (int rep = 0; rep < 20; ++rep) {
        Matrix a = testutil::random_matrix(rng, 4, 0.25);  // ||A|| <= 1
        CHECK(max_abs_diff(expm(a), taylor_expm(a, 50)) < 1e-10);
    }

    Matrix bad = Matrix::Zero(2, 2);
    bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(expm(bad), std::domain_error);
}

TEST_CASE("expm_multiply agrees with the full exponential") {
    std::mt19937_64 rng(99);
    for (int rep = 0; rep < 10; ++rep) {
        Matrix a = testutil::random_matrix(rng, 5, 0.8);
        Matrix w = testutil::random_matrix(rng, 5, 1.0).leftCols(2);
        CHECK(max_abs_diff(expm_multiply(a, w), expm(a) * w) < 1e-12);
    }
}

TEST_CASE("van_loan: closed forms") {
    auto zero1 = PiecewiseMatrixFunction::constant(Matrix::Zero(1, 1));
    auto one1 = PiecewiseMatrixFunction::constant(Matrix::Ones(1, 1));
    CHECK(van_loan(zero1, one1, zero1, 0.0, 1.0).upperRight(0, 0) ==
          doctest::Approx(1.0).epsilon(1e-12));

    auto decay = PiecewiseMatrixFunction::constant((Matrix(1, 1) << -0.05).finished());
    const double annuity = van_loan(decay, one1, zero1, 0.0, 1.0).upperRight(0, 0);
    CHECK(annuity == doctest::Approx((1.0 - std::exp(-0.05)) / 0.05).epsilon(1e-12));
    CHECK(annuity == doctest::Approx(0.9754115).epsilon(1e-6));
}

TEST_CASE("van_loan vs composite Simpson quadrature on piecewise-constant inputs") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> bp{0.0, 0.7, 1.5};
        std::vector<Matrix> av{testutil::random_matrix(rng, 3, 0.5),
                               testutil::random_matrix(rng, 3, 0.5)};
        std::vector<Matrix> bv{testutil::random_matrix(rng, 3, 1.0),
                               testutil::random_matrix(rng, 3, 1.0)};
        std::vector<Matrix> cv{testutil::random_matrix(rng, 3, 0.5),
                               testutil::random_matrix(rng, 3, 0.5)};
        PiecewiseMatrixFunction a(bp, av), b(bp, bv), c(bp, cv);

        auto integrand = [&](double x, int piece) -> Matrix {
            return prod_integral(a, 0.0, x) * bv[piece] * prod_integral(c, x, 1.5);
        };
        // composite Simpson per constant piece so the kinks are respected
        Matrix quad = Matrix::Zero(3, 3);
        for (int piece = 0; piece < 2; ++piece) {
            const double lo = bp[piece], hi = bp[piece + 1];
            const int n = 64;
            const double h = (hi - lo) / n;
            Matrix acc = integrand(lo, piece) + integrand(hi, piece);
            for (int i = 1; i < n; ++i)
                acc += (i % 2 == 1 ? 4.0 : 2.0) * integrand(lo + i * h, piece);
            quad += acc * h / 3.0;
        }
        CHECK(max_abs_diff(van_loan(a, b, c, 0.0, 1.5).upperRight, quad) < 1e-8);
    }
}

TEST_CASE("kron and kron_sum") {
    std::mt19937_64 rng(11);
    Matrix b = testutil::random_matrix(rng, 3);

    Matrix k = kron(Matrix::Identity(2, 2), b);
    CHECK(max_abs_diff(k.topLeftCorner(3, 3), b) == 0.0);
    CHECK(max_abs_diff(k.bottomRightCorner(3, 3), b) == 0.0);
    CHECK(k.topRightCorner(3, 3).cwiseAbs().maxCoeff() == 0.0);

    CHECK(max_abs_diff(kron_sum(Matrix::Zero(2, 2), b), kron(Matrix::Identity(2, 2), b)) == 0.0);

    for (int rep = 0; rep < 10; ++rep) {
        Matrix a2 = testutil::random_matrix(rng, 2);
        Matrix b3 = testutil::random_matrix(rng, 3);
        CHECK(max_abs_diff(expm(kron_sum(a2, b3)), kron(expm(a2), expm(b3))) < 1e-10);
    }
}

TEST_CASE("product rule, inverse and scalar shift") {
    std::mt19937_64 rng(23);
    for (int rep = 0; rep < 25; ++rep) {
        std::vector<double> bp{0.0, 0.9, 2.0, 3.0};
        std::vector<Matrix> vals{testutil::random_matrix(rng, 3, 0.6),
                                 testutil::random_matrix(rng, 3, 0.6),
                                 testutil::random_matrix(rng, 3, 0.6)};
        PiecewiseMatrixFunction f(bp, vals);

        const Matrix whole = prod_integral(f, 0.0, 3.0);
        const Matrix split = prod_integral(f, 0.0, 1.3) * prod_integral(f, 1.3, 3.0);
        CHECK(max_abs_diff(whole, split) < 1e-10);

        const Matrix fwd = prod_integral(f, 0.2, 2.7);
        const Matrix bwd = prod_integral(f, 2.7, 0.2);
        CHECK(max_abs_diff(fwd * bwd, Matrix::Identity(3, 3)) < 1e-9);

        const double r = 0.07;
        PiecewiseMatrixFunction shifted = f.map([&](const Matrix& m) -> Matrix {
            return m - r * Matrix::Identity(3, 3);
        });
        CHECK(max_abs_diff(std::exp(-r * 3.0) * whole, prod_integral(shifted, 0.0, 3.0)) < 1e-10);
    }
}

TEST_CASE("stochasticity of intensity product integrals") {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 10; ++rep) {
        Matrix gen = testutil::random_intensity(rng, 4, 1.5);
        Matrix p = prod_integral(PiecewiseMatrixFunction::constant(gen), 0.0, 2.5);
        CHECK(p.minCoeff() >= -1e-12);
        for (int i = 0; i < 4; ++i) CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-10);
    }
}

TEST_CASE("generator validation") {
    Matrix ok(2, 2);
    ok << -1.0, 1.0, 0.5, -0.5;
    CHECK_NOTHROW(validate_intensity(ok));

    Matrix badRow = ok;
    badRow(0, 0) = -0.9;
    CHECK_THROWS_AS(validate_intensity(badRow), std::invalid_argument);

    Matrix negOff = ok;
    negOff(0, 1) = -0.2;
    CHECK_THROWS_AS(validate_intensity(negOff), std::invalid_argument);

    Matrix sub(2, 2);
    sub << -1.0, 0.5, 0.0, -0.3;
    CHECK_NOTHROW(validate_subintensity(sub));
    sub(0, 1) = 1.5;
    CHECK_THROWS_AS(validate_subintensity(sub), std::invalid_argument);
}

TEST_CASE("piecewise sampling hits interval midpoints") {
    auto f = PiecewiseMatrixFunction::sample(
        [](double t) { return (Matrix(1, 1) << t).finished(); }, 0.0, 1.0, 0.25);
    CHECK(f.intervalCount() == 4);
    CHECK(f.at(0.1)(0, 0) == doctest::Approx(0.125));
    CHECK(f.at(0.9)(0, 0) == doctest::Approx(0.875));
}

TEST_CASE("Kronecker-sum factorization for time-dependent inputs") {
    std::mt19937_64 rng(53);
    std::vector<double> bp{0.0, 0.6, 1.4};
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<Matrix> av{testutil::random_matrix(rng, 2, 0.7),
                               testutil::random_matrix(rng, 2, 0.7)};
        std::vector<Matrix> bv{testutil::random_matrix(rng, 3, 0.7),
                               testutil::random_matrix(rng, 3, 0.7)};
        PiecewiseMatrixFunction a(bp, av), b(bp, bv);
        std::vector<Matrix> sums{kron_sum(av[0], bv[0]), kron_sum(av[1], bv[1])};
        PiecewiseMatrixFunction combined(bp, sums);
        const Matrix lhs = prod_integral(combined, 0.0, 1.4);
        const Matrix rhs = kron(prod_integral(a, 0.0, 1.4), prod_integral(b, 0.0, 1.4));
        CHECK(max_abs_diff(lhs, rhs) < 1e-10);
    }
}
