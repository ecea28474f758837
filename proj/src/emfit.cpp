#include "phlife/emfit.hpp"

#include "phlife/rng.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>

namespace phlife {

double WeightedSample::totalWeight() const {
    double s = 0.0;
    for (const auto& [y, w] : exactPoints) s += w;
    for (const auto& [c, v] : censoredPoints) s += v;
    return s;
}

double WeightedSample::weightedMean() const {
    double s = 0.0;
    for (const auto& [y, w] : exactPoints) s += w * y;
    for (const auto& [c, v] : censoredPoints) s += v * c;
    return s / totalWeight();
}

void WeightedSample::validate() const {
    if (exactPoints.empty() && censoredPoints.empty())
        throw std::invalid_argument("WeightedSample: empty");
    for (const auto& [y, w] : exactPoints)
        if (!(y > 0) || !(w > 0))
            throw std::invalid_argument("WeightedSample: exact points need y > 0, w > 0");
    for (const auto& [c, v] : censoredPoints)
        if (!(c > 0) || !(v > 0))
            throw std::invalid_argument("WeightedSample: censored points need c > 0, v > 0");
}

double log_likelihood(const PhaseTypeDist& d, const WeightedSample& sample) {
    const int p = d.order();
    const Matrix& t = d.subIntensity().values()[0];
    const Vector exit = d.exitRates(0.0);
    const Vector ones = Vector::Ones(p);
    const RowVector& pi = d.initialDistribution();
    double ll = 0.0;
    for (const auto& [y, w] : sample.exactPoints) {
        const double f = pi * (t * y).exp() * exit;
        if (!(f > 0)) return -std::numeric_limits<double>::infinity();
        ll += w * std::log(f);
    }
    for (const auto& [c, v] : sample.censoredPoints) {
        const double s = pi * (t * c).exp() * ones;
        if (!(s > 0)) return -std::numeric_limits<double>::infinity();
        ll += v * std::log(s);
    }
    return ll;
}

namespace {

// exp of [[T, K], [0, T]] * x; returns (e^{Tx}, int_0^x e^{Tu} K e^{T(x-u)} du)
std::pair<Matrix, Matrix> van_loan_kernel(const Matrix& t, const Matrix& k, double x) {
    const int p = static_cast<int>(t.rows());
    Matrix blk = Matrix::Zero(2 * p, 2 * p);
    blk.topLeftCorner(p, p) = t;
    blk.bottomRightCorner(p, p) = t;
    blk.topRightCorner(p, p) = k;
    Matrix e = (blk * x).exp();
    return {e.topLeftCorner(p, p), e.topRightCorner(p, p)};
}

}  // namespace

EMStatistics e_step(const PhaseTypeDist& d, const WeightedSample& sample) {
    if (!d.hasConstantIntensity())
        throw std::invalid_argument("e_step: requires a constant sub-intensity");
    sample.validate();
    const int p = d.order();
    const Matrix& t = d.subIntensity().values()[0];
    const Vector exit = d.exitRates(0.0);
    const Vector ones = Vector::Ones(p);
    const RowVector& pi = d.initialDistribution();

    EMStatistics st;
    st.startCounts = Vector::Zero(p);
    st.occupationTime = Vector::Zero(p);
    st.transitionCounts = Matrix::Zero(p, p);
    st.exitCounts = Vector::Zero(p);
    st.totalWeight = sample.totalWeight();

    for (const auto& [y, w] : sample.exactPoints) {
        auto [eTy, kmat] = van_loan_kernel(t, exit * pi, y);
        const double f = pi * eTy * exit;
        if (!(f > 0) || !std::isfinite(f))
            throw FitError("e_step: vanishing density at exact observation y=" +
                           std::to_string(y));
        const Vector fwd = eTy * exit;           // column: e_i' e^{Ty} t
        const RowVector occ = pi * eTy;          // row:    pi e^{Ty}
        for (int i = 0; i < p; ++i) {
            st.startCounts(i) += w * pi(i) * fwd(i) / f;
            st.occupationTime(i) += w * kmat(i, i) / f;
            st.exitCounts(i) += w * exit(i) * occ(i) / f;
            for (int j = 0; j < p; ++j)
                if (j != i) st.transitionCounts(i, j) += w * t(i, j) * kmat(j, i) / f;
        }
    }

    if (!sample.censoredPoints.empty()) {
        Eigen::PartialPivLU<Matrix> lu(Matrix((-t).transpose()));
        for (const auto& [c, v] : sample.censoredPoints) {
            auto [eTc, lmat] = van_loan_kernel(t, ones * pi, c);
            const double s = pi * eTc * ones;
            if (!(s > 0) || !std::isfinite(s))
                throw FitError("e_step: vanishing survival at censored observation c=" +
                               std::to_string(c));
            const Vector fwd = eTc * ones;
            // expected post-censoring occupation: (pi e^{Tc}) (-T)^{-1}
            const RowVector resid = lu.solve((pi * eTc).transpose()).transpose();
            for (int i = 0; i < p; ++i) {
                st.startCounts(i) += v * pi(i) * fwd(i) / s;
                st.occupationTime(i) += v * (lmat(i, i) + resid(i)) / s;
                st.exitCounts(i) += v * resid(i) * exit(i) / s;
                for (int j = 0; j < p; ++j)
                    if (j != i)
                        st.transitionCounts(i, j) += v * t(i, j) * (lmat(j, i) + resid(i)) / s;
            }
        }
    }
    return st;
}

namespace {

// Sets the diagonal so that the derived exit rate -(rowwise sum) reproduces
// `exitRate` bit-exactly; exit rates are never stored, only derived.
void set_diagonal_for_exit(Matrix& t, int i, double exitRate) {
    double offsum = 0.0;
    for (Eigen::Index j = 0; j < t.cols(); ++j)
        if (j != i) offsum += t(i, j);
    t(i, i) = -(exitRate + offsum);
    for (int polish = 0; polish < 8; ++polish) {
        const double derived = -Vector(t.rowwise().sum())(i);
        if (derived == exitRate) break;
        t(i, i) += derived - exitRate;
    }
}

}  // namespace

PhaseTypeDist m_step(const EMStatistics& stats, const FitConfig& config) {
    const int p = config.dimension;
    if (stats.startCounts.size() != p)
        throw std::invalid_argument("m_step: statistics/config dimension mismatch");
    if (config.fixedExit && config.fixedExit->size() != p)
        throw std::invalid_argument("m_step: fixed exit vector has wrong length");

    for (int i = 0; i < p; ++i)
        if (!(stats.occupationTime(i) > 0))
            throw FitError("m_step: state " + std::to_string(i) +
                           " visited with probability 0 (Z_i = 0)");

    RowVector pi(p);
    for (int i = 0; i < p; ++i) pi(i) = stats.startCounts(i) / stats.totalWeight;

    Matrix t = Matrix::Zero(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            if (j != i) t(i, j) = stats.transitionCounts(i, j) / stats.occupationTime(i);

    if (config.structure == PhStructure::Coxian) {
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j)
                if (j != i && j != i + 1) t(i, j) = 0.0;
        pi.setZero();
        pi(0) = 1.0;
    }

    for (int i = 0; i < p; ++i) {
        const double exitRate = config.fixedExit ? (*config.fixedExit)(i)
                                                 : stats.exitCounts(i) / stats.occupationTime(i);
        set_diagonal_for_exit(t, i, exitRate);
    }

    // guard against tiny negative start probabilities from roundoff
    for (int i = 0; i < p; ++i) pi(i) = std::max(0.0, pi(i));
    pi /= pi.sum();

    return PhaseTypeDist(pi, PiecewiseMatrixFunction::constant(t), config.fixedExit);
}

namespace {

PhaseTypeDist random_init(const WeightedSample& sample, const FitConfig& config,
                          std::uint64_t seed) {
    const int p = config.dimension;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.1, 1.0);

    RowVector pi(p);
    if (config.structure == PhStructure::Coxian) {
        pi.setZero();
        pi(0) = 1.0;
    } else {
        for (int i = 0; i < p; ++i) pi(i) = 0.2 + 0.8 * unif(rng);
        pi /= pi.sum();
    }

    Matrix t = Matrix::Zero(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            if (j == i) continue;
            if (config.structure == PhStructure::Coxian && j != i + 1) continue;
            t(i, j) = unif(rng);
        }
    Vector exit(p);
    if (config.fixedExit) {
        exit = *config.fixedExit;
    } else {
        for (int i = 0; i < p; ++i) exit(i) = unif(rng);
    }
    for (int i = 0; i < p; ++i) set_diagonal_for_exit(t, i, exit(i));

    PhaseTypeDist d(pi, PiecewiseMatrixFunction::constant(t), config.fixedExit);
    if (config.fixedExit) return d;  // exits pin the scale

    // rescale so the mean matches the sample mean
    const double mu = d.mean();
    const double target = sample.weightedMean();
    if (mu > 0 && target > 0) {
        t *= mu / target;
        return PhaseTypeDist(pi, PiecewiseMatrixFunction::constant(t));
    }
    return d;
}

}  // namespace

FitResult em_fit(const WeightedSample& sample, const FitConfig& config) {
    sample.validate();
    if (config.dimension < 1) throw std::invalid_argument("em_fit: dimension must be >= 1");
    if (!(config.tol > 0)) throw std::invalid_argument("em_fit: tolerance must be positive");
    if (config.fixedExit)
        for (Eigen::Index i = 0; i < config.fixedExit->size(); ++i)
            if ((*config.fixedExit)(i) < 0)
                throw std::invalid_argument("em_fit: fixed exit rates must be nonnegative");

    std::optional<FitResult> best;
    std::string lastError = "no restarts run";

    for (int r = 0; r < std::max(1, config.restarts); ++r) {
        try {
            PhaseTypeDist d = random_init(sample, config, derive_seed(config.seed, r));
            std::vector<double> trace;
            trace.reserve(config.maxIters + 1);
            double prev = -std::numeric_limits<double>::infinity();
            int iters = 0;
            EMStatistics st;
            for (int it = 0; it < config.maxIters; ++it) {
                st = e_step(d, sample);
                const double ll = log_likelihood(d, sample);
                trace.push_back(ll);
                d = m_step(st, config);
                ++iters;
                if (it > 0 && std::abs(ll - prev) < config.tol) break;
                prev = ll;
            }
            const double finalLl = log_likelihood(d, sample);
            trace.push_back(finalLl);
            if (!best || finalLl > best->loglik) {
                FitResult res{d, finalLl, std::move(trace), iters, r, {}};
                st = e_step(d, sample);
                const double zTot = st.occupationTime.sum();
                for (int i = 0; i < config.dimension; ++i)
                    if (st.occupationTime(i) < 1e-12 * zTot) res.weakStates.push_back(i);
                best = std::move(res);
            }
        } catch (const FitError& err) {
            lastError = err.what();
        }
    }
    if (!best) throw FitError("em_fit: all restarts degenerate; last error: " + lastError);
    return *best;
}

WeightedSample discretize_density(const std::function<double(double)>& density,
                                  const std::vector<double>& grid) {
    if (grid.size() < 2) throw std::invalid_argument("discretize_density: need >= 2 breakpoints");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1]))
            throw std::invalid_argument("discretize_density: grid must be increasing");

    std::vector<double> f(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        f[i] = density(grid[i]);
        if (f[i] < 0) throw std::domain_error("discretize_density: negative density at x=" +
                                              std::to_string(grid[i]));
    }
    WeightedSample out;
    double mass = 0.0;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        const double w = 0.5 * (f[i] + f[i + 1]) * (grid[i + 1] - grid[i]);
        mass += w;
        if (w > 1e-15) out.exactPoints.emplace_back(0.5 * (grid[i] + grid[i + 1]), w);
    }
    const double tail = 1.0 - mass;
    if (tail > 1e-15) out.censoredPoints.emplace_back(grid.back(), tail);
    return out;
}

}  // namespace phlife
