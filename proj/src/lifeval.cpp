#include "phlife/lifeval.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>

namespace phlife {

PaymentSpec PaymentSpec::zero(int n) {
    PaymentSpec p{PiecewiseVectorFunction::constant(Vector::Zero(n)),
                  PiecewiseVectorFunction::constant(Vector::Zero(n)),
                  PiecewiseMatrixFunction::constant(Matrix::Zero(n, n)),
                  PiecewiseMatrixFunction::constant(Matrix::Zero(n, n)),
                  PiecewiseMatrixFunction::constant(Matrix::Zero(n, n))};
    return p;
}

ProductModel::ProductModel(PiecewiseMatrixFunction intensity, PiecewiseVectorFunction rates,
                           PaymentSpec payments, int bioStates, int rateStates)
    : intensity_(std::move(intensity)), rates_(std::move(rates)), payments_(std::move(payments)),
      bioStates_(bioStates), rateStates_(rateStates) {
    const int n = bioStates_ * rateStates_;
    if (intensity_.rows() != n || intensity_.cols() != n)
        throw std::invalid_argument("ProductModel: intensity dimension mismatch");
    if (rates_.rows() != n || payments_.dim() != n)
        throw std::invalid_argument("ProductModel: rates/payments dimension mismatch");
    for (const auto& m : intensity_.values()) validate_intensity(m);
    for (const auto& l1 : payments_.lumpIntensity.values()) {
        if (l1.rows() != n || l1.cols() != n)
            throw std::invalid_argument("ProductModel: lump intensity dimension mismatch");
        if ((l1.array() < -1e-12).any())
            throw std::invalid_argument("ProductModel: lump intensity must be nonnegative");
    }
    // the split part Lambda - Lambda^1 must stay a sub-intensity
    double probeLo = 0.0, probeHi = 1.0;
    bool haveGrid = false;
    for (const auto* g : {&intensity_.breakpoints(), &payments_.lumpIntensity.breakpoints()})
        if (!g->empty()) {
            probeLo = haveGrid ? std::max(probeLo, g->front()) : g->front();
            probeHi = haveGrid ? std::min(probeHi, g->back()) : g->back();
            haveGrid = true;
        }
    if (!(probeHi > probeLo)) probeHi = probeLo + 1.0;
    std::vector<double> probe = merge_breakpoints(
        probeLo, probeHi, {&intensity_.breakpoints(), &payments_.lumpIntensity.breakpoints()});
    for (std::size_t i = 0; i + 1 < probe.size(); ++i) {
        const double mid = 0.5 * (probe[i] + probe[i + 1]);
        const Matrix l0 = intensity_.at(mid) - payments_.lumpIntensity.at(mid);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                if (r != c && l0(r, c) < -1e-10)
                    throw std::invalid_argument(
                        "ProductModel: lump intensity exceeds the transition intensity at (" +
                        std::to_string(r) + "," + std::to_string(c) + ")");
    }
}

double ProductModel::horizonStart() const {
    return intensity_.isConstant() ? 0.0 : intensity_.breakpoints().front();
}

double ProductModel::horizonEnd() const {
    if (!intensity_.isConstant()) return intensity_.breakpoints().back();
    if (!payments_.rates.isConstant()) return payments_.rates.breakpoints().back();
    throw std::invalid_argument("ProductModel: fully constant model has no horizon");
}

Matrix ProductModel::reward(double t, double theta) const {
    Matrix b = payments_.lumps.at(t) + theta * payments_.lumpsSlope.at(t);
    Vector rate = payments_.rates.at(t) + theta * payments_.ratesSlope.at(t);
    Matrix r = payments_.lumpIntensity.at(t).cwiseProduct(b);
    r += Matrix(rate.asDiagonal());
    return r;
}

Matrix ProductModel::rewardSlope(double t) const {
    Matrix r = payments_.lumpIntensity.at(t).cwiseProduct(payments_.lumpsSlope.at(t));
    r += Matrix(payments_.ratesSlope.at(t).asDiagonal());
    return r;
}

Matrix ProductModel::momentKernelReduced(int k, double t, double theta) const {
    if (k < 2) throw std::invalid_argument("momentKernelReduced: k must be >= 2");
    Matrix b = payments_.lumps.at(t) + theta * payments_.lumpsSlope.at(t);
    Matrix pow = b;
    double kfact = 1.0;
    for (int j = 2; j <= k; ++j) {
        pow = pow.cwiseProduct(b);
        kfact *= j;
    }
    return payments_.lumpIntensity.at(t).cwiseProduct(pow) / kfact;
}

namespace {

Matrix lift_vector_diag(const Vector& v) { return Matrix(v.asDiagonal()); }

}  // namespace

ProductModel build_product_model(const PiecewiseMatrixFunction& bioIntensity,
                                 const PaymentSpec& bioPayments,
                                 const ShortRateModel& rateModel) {
    const int q = bioIntensity.rows();
    const int p = rateModel.dim();
    if (bioPayments.dim() != q)
        throw std::invalid_argument("build_product_model: payments not on the biometric space");
    const Matrix ip = Matrix::Identity(p, p);
    const Vector eq = Vector::Ones(q);
    const Vector ep = Vector::Ones(p);

    // merged grid across every time-dependent ingredient
    std::vector<const std::vector<double>*> grids{
        &bioIntensity.breakpoints(),          &rateModel.intensity().breakpoints(),
        &rateModel.rates().breakpoints(),     &bioPayments.rates.breakpoints(),
        &bioPayments.ratesSlope.breakpoints(), &bioPayments.lumps.breakpoints(),
        &bioPayments.lumpsSlope.breakpoints(), &bioPayments.lumpIntensity.breakpoints()};
    double t0 = 0.0, t1 = 0.0;
    bool gridded = false;
    for (const auto* g : grids)
        if (!g->empty()) {
            if (!gridded) {
                t0 = g->front();
                t1 = g->back();
                gridded = true;
            } else {
                t0 = std::min(t0, g->front());
                t1 = std::max(t1, g->back());
            }
        }

    auto liftAll = [&](double t) {
        struct Vals {
            Matrix lam;
            Vector r, b, bs;
            Matrix lump, lumpSlope, lumpIntensity;
        } v;
        v.lam = kron_sum(bioIntensity.at(t), rateModel.intensity().at(t));
        v.r = kron(Matrix(eq), Matrix(rateModel.rates().at(t))).col(0);
        v.b = kron(Matrix(bioPayments.rates.at(t)), Matrix(ep)).col(0);
        v.bs = kron(Matrix(bioPayments.ratesSlope.at(t)), Matrix(ep)).col(0);
        v.lump = kron(bioPayments.lumps.at(t), ip);
        v.lumpSlope = kron(bioPayments.lumpsSlope.at(t), ip);
        v.lumpIntensity = kron(bioPayments.lumpIntensity.at(t), ip);
        return v;
    };

    if (!gridded) {
        auto v = liftAll(0.0);
        PaymentSpec pay{PiecewiseVectorFunction::constant(v.b),
                        PiecewiseVectorFunction::constant(v.bs),
                        PiecewiseMatrixFunction::constant(v.lump),
                        PiecewiseMatrixFunction::constant(v.lumpSlope),
                        PiecewiseMatrixFunction::constant(v.lumpIntensity)};
        return ProductModel(PiecewiseMatrixFunction::constant(v.lam),
                            PiecewiseVectorFunction::constant(v.r), std::move(pay), q, p);
    }

    std::vector<double> bp = merge_breakpoints(t0, t1, grids);
    std::vector<Matrix> lam, lump, lumpSlope, lumpIntensity;
    std::vector<Vector> r, b, bs;
    for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
        auto v = liftAll(0.5 * (bp[i] + bp[i + 1]));
        lam.push_back(std::move(v.lam));
        r.push_back(std::move(v.r));
        b.push_back(std::move(v.b));
        bs.push_back(std::move(v.bs));
        lump.push_back(std::move(v.lump));
        lumpSlope.push_back(std::move(v.lumpSlope));
        lumpIntensity.push_back(std::move(v.lumpIntensity));
    }
    PaymentSpec pay{PiecewiseVectorFunction(bp, std::move(b)),
                    PiecewiseVectorFunction(bp, std::move(bs)),
                    PiecewiseMatrixFunction(bp, std::move(lump)),
                    PiecewiseMatrixFunction(bp, std::move(lumpSlope)),
                    PiecewiseMatrixFunction(bp, std::move(lumpIntensity))};
    return ProductModel(PiecewiseMatrixFunction(bp, std::move(lam)),
                        PiecewiseVectorFunction(bp, std::move(r)), std::move(pay), q, p);
}

namespace {

std::vector<double> model_grid(const ProductModel& m, double s, double t) {
    return merge_breakpoints(
        s, t,
        {&m.intensity().breakpoints(), &m.rates().breakpoints(),
         &m.payments().rates.breakpoints(), &m.payments().ratesSlope.breakpoints(),
         &m.payments().lumps.breakpoints(), &m.payments().lumpsSlope.breakpoints(),
         &m.payments().lumpIntensity.breakpoints()});
}

Matrix reserve_block(const ProductModel& m, double s, double t,
                     const std::function<Matrix(double)>& rewardAt) {
    const int n = m.dim();
    if (s > t) throw std::domain_error("reserve_matrix: s > t");
    if (s == t) return Matrix::Zero(n, n);
    std::vector<double> bp = model_grid(m, s, t);
    Matrix y = Matrix::Identity(2 * n, 2 * n);
    Matrix f = Matrix::Zero(2 * n, 2 * n);
    for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
        const double mid = 0.5 * (bp[i] + bp[i + 1]);
        const double dt = bp[i + 1] - bp[i];
        const Matrix& lam = m.intensity().at(mid);
        f.topLeftCorner(n, n) = lam - lift_vector_diag(m.rates().at(mid));
        f.topRightCorner(n, n) = rewardAt(mid);
        f.bottomRightCorner(n, n) = lam;
        y = y * (f * dt).exp();
    }
    return y.topRightCorner(n, n);
}

}  // namespace

Matrix reserve_matrix(const ProductModel& m, double s, double t, double theta) {
    return reserve_block(m, s, t, [&](double u) { return m.reward(u, theta); });
}

Matrix reserve_matrix_slope(const ProductModel& m, double s, double t) {
    return reserve_block(m, s, t, [&](double u) { return m.rewardSlope(u); });
}

std::vector<Vector> thiele_solve(const ProductModel& m, double T, const std::vector<double>& grid,
                                 double theta, double step) {
    const int n = m.dim();
    for (double g : grid)
        if (g < m.horizonStart() - 1e-12 || g > T + 1e-12)
            throw std::invalid_argument("thiele_solve: grid point outside [start, T]");

    // integration nodes: model breakpoints + requested points, refined to <= step
    std::vector<double> nodes = model_grid(m, grid.empty() ? 0.0 : *std::min_element(grid.begin(), grid.end()), T);
    nodes.insert(nodes.end(), grid.begin(), grid.end());
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end(),
                            [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                nodes.end());
    std::vector<double> fine;
    fine.push_back(nodes.front());
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        const int sub = std::max(1, static_cast<int>(std::ceil((nodes[i + 1] - nodes[i]) / step - 1e-12)));
        for (int j = 1; j <= sub; ++j)
            fine.push_back(nodes[i] + (nodes[i + 1] - nodes[i]) * j / sub);
    }

    auto rhs = [&](double u, const Vector& v) -> Vector {
        const Matrix& lam = m.intensity().at(u);
        return lift_vector_diag(m.rates().at(u)) * v - lam * v -
               m.reward(u, theta) * Vector::Ones(n);
    };

    Vector v = Vector::Zero(n);
    std::vector<Vector> out(grid.size());
    auto record = [&](double time) {
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (std::abs(grid[i] - time) < 1e-12) out[i] = v;
    };
    record(T);
    for (std::size_t i = fine.size(); i-- > 1;) {
        const double t1 = fine[i], t0 = fine[i - 1];
        const double h = t0 - t1;  // negative: backward step
        const double mid = 0.5 * (t0 + t1);
        const Vector k1 = rhs(mid, v);
        const Vector k2 = rhs(mid, v + 0.5 * h * k1);
        const Vector k3 = rhs(mid, v + 0.5 * h * k2);
        const Vector k4 = rhs(mid, v + h * k3);
        v += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        record(t0);
    }
    return out;
}

namespace {

// per-interval block data of the moment generator F_U^(k)
struct MomentBlocks {
    Matrix lam;
    Vector r;
    Matrix reward;
    std::vector<Matrix> kernels;  // C_r^(2..k); empty entries possible
    bool hasLumps = false;
};

MomentBlocks moment_blocks(const ProductModel& m, int k, double mid, double theta) {
    MomentBlocks mb;
    mb.lam = m.intensity().at(mid);
    mb.r = m.rates().at(mid);
    mb.reward = m.reward(mid, theta);
    mb.hasLumps = m.payments().lumpIntensity.at(mid).cwiseAbs().maxCoeff() > 0;
    if (mb.hasLumps)
        for (int j = 2; j <= k; ++j) mb.kernels.push_back(m.momentKernelReduced(j, mid, theta));
    return mb;
}

// W <- exp(F dt) W for the block upper-triangular moment generator, without
// materializing F.  W is (k+1)*n x n, stored as k+1 stacked blocks.
void block_exp_apply(const MomentBlocks& mb, int k, double dt, Matrix& w) {
    const int n = static_cast<int>(mb.lam.rows());
    std::vector<Matrix> diag(k + 1);
    for (int a = 0; a <= k; ++a)
        diag[a] = mb.lam - static_cast<double>(k - a) * Matrix(mb.r.asDiagonal());

    double norm = 0.0;
    for (int a = 0; a <= k; ++a) {
        double rowNorm = diag[a].cwiseAbs().rowwise().sum().maxCoeff();
        if (a < k) rowNorm += mb.reward.cwiseAbs().rowwise().sum().maxCoeff();
        if (mb.hasLumps)
            for (int j = 2; j <= k - a; ++j)
                rowNorm += mb.kernels[j - 2].cwiseAbs().rowwise().sum().maxCoeff();
        norm = std::max(norm, rowNorm);
    }
    const int steps = std::max(1, static_cast<int>(std::ceil(norm * dt / 0.5)));
    const double h = dt / steps;

    Matrix term(w.rows(), w.cols()), next(w.rows(), w.cols());
    for (int s = 0; s < steps; ++s) {
        term = w;
        const double ref = w.cwiseAbs().maxCoeff() + 1e-300;
        for (int j = 1; j <= 40; ++j) {
            for (int a = 0; a <= k; ++a) {
                auto dst = next.middleRows(a * n, n);
                dst.noalias() = diag[a] * term.middleRows(a * n, n);
                if (a + 1 <= k) dst.noalias() += mb.reward * term.middleRows((a + 1) * n, n);
                if (mb.hasLumps)
                    for (int c = a + 2; c <= k; ++c)
                        dst.noalias() += mb.kernels[c - a - 2] * term.middleRows(c * n, n);
            }
            term = next * (h / j);
            w += term;
            if (term.cwiseAbs().maxCoeff() <= 1e-18 * ref) break;
        }
    }
}

}  // namespace

MomentStack moment_stack(const ProductModel& m, int k, double t, double T, double theta) {
    if (k < 0) throw std::invalid_argument("moment_stack: order must be >= 0");
    if (t > T) throw std::domain_error("moment_stack: t > T");
    const int n = m.dim();
    MomentStack out;
    out.order = k;
    out.from = t;
    out.to = T;
    out.reduced.assign(k + 1, Matrix::Zero(n, n));
    out.reduced[0] = Matrix::Identity(n, n);
    if (t == T) return out;

    std::vector<double> bp = model_grid(m, t, T);

    // carry the last block column of the product integral backwards
    Matrix w = Matrix::Zero((k + 1) * n, n);
    w.bottomRows(n) = Matrix::Identity(n, n);
    for (std::size_t i = bp.size() - 1; i-- > 0;) {
        const double mid = 0.5 * (bp[i] + bp[i + 1]);
        block_exp_apply(moment_blocks(m, k, mid, theta), k, bp[i + 1] - bp[i], w);
    }
    // block row a holds V_r^(k-a); bottom block is P(t, T)
    for (int a = 0; a <= k; ++a) out.reduced[k - a] = w.middleRows(a * n, n);

    if (k >= 1) {
        const Matrix v1 = reserve_matrix(m, t, T, theta);
        const double scale = 1.0 + v1.cwiseAbs().maxCoeff();
        if ((out.reduced[1] - v1).cwiseAbs().maxCoeff() > 1e-8 * scale)
            throw std::runtime_error("moment_stack: first moment disagrees with the reserve block");
    }
    return out;
}

MomentStack moment_stack_ode(const ProductModel& m, int k, double t, double T, double theta,
                             double step) {
    if (k < 0) throw std::invalid_argument("moment_stack_ode: order must be >= 0");
    if (t > T) throw std::domain_error("moment_stack_ode: t > T");
    const int n = m.dim();

    std::vector<double> nodes = model_grid(m, t, T);
    std::vector<double> fine;
    fine.push_back(nodes.front());
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        const int sub = std::max(1, static_cast<int>(std::ceil((nodes[i + 1] - nodes[i]) / step - 1e-12)));
        for (int j = 1; j <= sub; ++j)
            fine.push_back(nodes[i] + (nodes[i + 1] - nodes[i]) * j / sub);
    }

    std::vector<Matrix> v(k + 1, Matrix::Zero(n, n));
    v[0] = Matrix::Identity(n, n);

    auto rhs = [&](double u, const std::vector<Matrix>& cur) {
        const Matrix& lam = m.intensity().at(u);
        const Matrix rdiag = lift_vector_diag(m.rates().at(u));
        const Matrix rew = m.reward(u, theta);
        const bool lumps = m.payments().lumpIntensity.at(u).cwiseAbs().maxCoeff() > 0;
        std::vector<Matrix> out(k + 1);
        for (int j = 0; j <= k; ++j) {
            out[j] = (static_cast<double>(j) * rdiag - lam) * cur[j];
            if (j >= 1) out[j] -= rew * cur[j - 1];
            if (lumps)
                for (int i = 2; i <= j; ++i)
                    out[j] -= m.momentKernelReduced(i, u, theta) * cur[j - i];
        }
        return out;
    };
    auto axpy = [&](const std::vector<Matrix>& a, double c, const std::vector<Matrix>& b) {
        std::vector<Matrix> out(k + 1);
        for (int j = 0; j <= k; ++j) out[j] = a[j] + c * b[j];
        return out;
    };

    for (std::size_t i = fine.size(); i-- > 1;) {
        const double h = fine[i - 1] - fine[i];
        const double mid = 0.5 * (fine[i - 1] + fine[i]);
        const auto k1 = rhs(mid, v);
        const auto k2 = rhs(mid, axpy(v, 0.5 * h, k1));
        const auto k3 = rhs(mid, axpy(v, 0.5 * h, k2));
        const auto k4 = rhs(mid, axpy(v, h, k3));
        for (int j = 0; j <= k; ++j)
            v[j] += h / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
    }

    MomentStack out;
    out.order = k;
    out.from = t;
    out.to = T;
    out.reduced = std::move(v);
    return out;
}

PremiumSolve equivalence_premium(const ProductModel& m, const RowVector& start) {
    if (start.size() != m.dim())
        throw std::invalid_argument("equivalence_premium: start distribution dimension mismatch");
    const double t0 = m.horizonStart();
    const double t1 = m.horizonEnd();
    const Vector ones = Vector::Ones(m.dim());

    const double slope = start * reserve_matrix_slope(m, t0, t1) * ones;
    if (std::abs(slope) < 1e-14)
        throw std::runtime_error("equivalence_premium: payments do not depend on theta");

    PremiumSolve out;
    double theta = 0.0;
    double value = start * reserve_matrix(m, t0, t1, theta) * ones;
    const double scale = 1.0 + std::abs(value);
    out.residuals.push_back(value);
    for (int it = 0; it < 50; ++it) {
        theta -= value / slope;
        ++out.iterations;
        value = start * reserve_matrix(m, t0, t1, theta) * ones;
        out.residuals.push_back(value);
        if (std::abs(value) < 1e-10 * scale) {
            out.theta = theta;
            return out;
        }
    }
    throw std::runtime_error("equivalence_premium: Newton failed to converge; |V| = " +
                             std::to_string(std::abs(value)));
}

PremiumSolve equivalence_premium(const ProductModel& m, int startState) {
    if (startState < 0 || startState >= m.dim())
        throw std::invalid_argument("equivalence_premium: start state out of range");
    return equivalence_premium(m, RowVector(RowVector::Unit(m.dim(), startState)));
}

std::vector<double> raw_moments_of_pv(const ProductModel& m, const RowVector& start, int N,
                                      double theta) {
    if (N < 0) throw std::invalid_argument("raw_moments_of_pv: N must be >= 0");
    if (start.size() != m.dim())
        throw std::invalid_argument("raw_moments_of_pv: start distribution dimension mismatch");
    MomentStack stack = moment_stack(m, N, m.horizonStart(), m.horizonEnd(), theta);
    std::vector<double> out(N + 1);
    const Vector ones = Vector::Ones(m.dim());
    double kfact = 1.0;
    for (int k = 0; k <= N; ++k) {
        if (k > 0) kfact *= k;
        const double partial = start * stack.reduced[k] * ones;
        out[k] = kfact * partial;
    }
    out[0] = 1.0;
    return out;
}

std::vector<double> raw_moments_of_pv(const ProductModel& m, int startState, int N, double theta) {
    if (startState < 0 || startState >= m.dim())
        throw std::invalid_argument("raw_moments_of_pv: start state out of range");
    return raw_moments_of_pv(m, RowVector(RowVector::Unit(m.dim(), startState)), N, theta);
}

}  // namespace phlife
