#pragma once

#include "phlife/matrixcore.hpp"

#include <random>

namespace testutil {

using phlife::Matrix;
using phlife::RowVector;
using phlife::Vector;

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

inline Matrix random_matrix(std::mt19937_64& rng, int n, double scale = 1.0) {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = scale * unif(rng);
    return m;
}

/// Random true intensity matrix (zero row sums).
inline Matrix random_intensity(std::mt19937_64& rng, int n, double scale = 1.0) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Matrix m = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            if (j != i) m(i, j) = scale * unif(rng);
        m(i, i) = -(m.row(i).sum() - m(i, i));
    }
    return m;
}

/// Random sub-intensity with strictly positive exit rates.
inline Matrix random_subintensity(std::mt19937_64& rng, int n, double scale = 1.0) {
    std::uniform_real_distribution<double> unif(0.1, 1.0);
    Matrix m = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        double exit = scale * unif(rng);
        for (int j = 0; j < n; ++j)
            if (j != i) m(i, j) = scale * unif(rng);
        m(i, i) = -(m.row(i).sum() - m(i, i)) - exit;
    }
    return m;
}

inline RowVector random_distribution(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> unif(0.05, 1.0);
    RowVector pi(n);
    for (int i = 0; i < n; ++i) pi(i) = unif(rng);
    pi /= pi.sum();
    return pi;
}

}  // namespace testutil
