#include "phlife/matrixcore.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>

namespace phlife {

std::vector<double> merge_breakpoints(double s, double t,
                                      const std::vector<const std::vector<double>*>& grids) {
    std::vector<double> pts{s, t};
    for (const auto* g : grids)
        for (double x : *g)
            if (x > s && x < t) pts.push_back(x);
    std::sort(pts.begin(), pts.end());
    std::vector<double> out;
    out.reserve(pts.size());
    const double eps = 1e-12 * (1.0 + std::abs(t - s));
    for (double x : pts)
        if (out.empty() || x - out.back() > eps) out.push_back(x);
    if (out.size() < 2) out = {s, t};
    out.back() = t;
    return out;
}

bool all_finite(const Matrix& a) { return a.allFinite(); }

Matrix expm(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("expm: matrix not square");
    if (!a.allFinite()) throw std::domain_error("expm: non-finite entries");
    return a.exp();
}

Matrix expm_multiply(const Matrix& a, Matrix w) {
    if (a.rows() != a.cols() || a.cols() != w.rows())
        throw std::invalid_argument("expm_multiply: dimension mismatch");
    const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
    const int steps = std::max(1, static_cast<int>(std::ceil(norm / 0.5)));
    const Matrix as = a / steps;
    for (int s = 0; s < steps; ++s) {
        Matrix term = w;
        double ref = w.cwiseAbs().maxCoeff() + 1e-300;
        for (int k = 1; k <= 40; ++k) {
            term = (as * term) / k;
            w += term;
            if (term.cwiseAbs().maxCoeff() <= 1e-18 * ref) break;
        }
    }
    return w;
}

Matrix prod_integral(const PiecewiseMatrixFunction& f, double s, double t) {
    if (f.rows() != f.cols()) throw std::invalid_argument("prod_integral: matrix not square");
    const int n = f.rows();
    Matrix y = Matrix::Identity(n, n);
    if (s == t) return y;
    if (s < t) {
        f.forEachInterval(s, t, [&](const Matrix& m, double dt) {
            if (!m.allFinite()) throw std::domain_error("prod_integral: non-finite generator");
            y = y * (m * dt).exp();
        });
    } else {
        // reversed limits: inverse-direction product, factors inverted in
        // reverse order
        std::vector<Matrix> factors;
        f.forEachInterval(t, s, [&](const Matrix& m, double dt) {
            factors.push_back((-m * dt).exp());
        });
        for (auto it = factors.rbegin(); it != factors.rend(); ++it) y = y * (*it);
    }
    return y;
}

VanLoanBlocks van_loan(const PiecewiseMatrixFunction& a, const PiecewiseMatrixFunction& b,
                       const PiecewiseMatrixFunction& c, double s, double t) {
    const int n = a.rows(), m = c.rows();
    if (a.rows() != a.cols() || c.rows() != c.cols())
        throw std::invalid_argument("van_loan: diagonal blocks must be square");
    if (b.rows() != n || b.cols() != m)
        throw std::invalid_argument("van_loan: B block has incompatible dimensions");
    if (s > t) throw std::domain_error("van_loan: requires s <= t");
    auto block = [n, m](const Matrix& am, const Matrix& bm, const Matrix& cm) {
        Matrix f = Matrix::Zero(n + m, n + m);
        f.topLeftCorner(n, n) = am;
        f.topRightCorner(n, m) = bm;
        f.bottomRightCorner(m, m) = cm;
        return f;
    };
    std::vector<double> bp =
        merge_breakpoints(s, t, {&a.breakpoints(), &b.breakpoints(), &c.breakpoints()});
    Matrix y = Matrix::Identity(n + m, n + m);
    for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
        const double mid = 0.5 * (bp[i] + bp[i + 1]);
        const double dt = bp[i + 1] - bp[i];
        y = y * (block(a.at(mid), b.at(mid), c.at(mid)) * dt).exp();
    }
    VanLoanBlocks out;
    out.upperLeft = y.topLeftCorner(n, n);
    out.upperRight = y.topRightCorner(n, m);
    out.lowerRight = y.bottomRightCorner(m, m);
    return out;
}

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

Matrix kron_sum(const Matrix& a, const Matrix& b) {
    if (a.rows() != a.cols() || b.rows() != b.cols())
        throw std::invalid_argument("kron_sum: inputs must be square");
    return kron(a, Matrix::Identity(b.rows(), b.rows())) +
           kron(Matrix::Identity(a.rows(), a.rows()), b);
}

namespace {

void check_offdiagonals(const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            if (i != j && m(i, j) < 0)
                throw std::invalid_argument("intensity: negative off-diagonal at (" +
                                            std::to_string(i) + "," + std::to_string(j) + ")");
}

}  // namespace

void validate_intensity(const Matrix& m, double tol) {
    if (m.rows() != m.cols()) throw std::invalid_argument("intensity: not square");
    if (!m.allFinite()) throw std::invalid_argument("intensity: non-finite entries");
    check_offdiagonals(m);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        if (std::abs(m.row(i).sum()) > tol)
            throw std::invalid_argument("intensity: row " + std::to_string(i) +
                                        " sums to " + std::to_string(m.row(i).sum()));
}

void validate_subintensity(const Matrix& m, double tol) {
    if (m.rows() != m.cols()) throw std::invalid_argument("sub-intensity: not square");
    if (!m.allFinite()) throw std::invalid_argument("sub-intensity: non-finite entries");
    check_offdiagonals(m);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        if (m.row(i).sum() > tol)
            throw std::invalid_argument("sub-intensity: row " + std::to_string(i) +
                                        " sums to " + std::to_string(m.row(i).sum()) + " > 0");
}

}  // namespace phlife
