#include "phlife/bondmarket.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace phlife {

void BondCurve::validate() const {
    if (maturities.empty()) throw std::invalid_argument("BondCurve: empty");
    if (maturities.size() != prices.size())
        throw std::invalid_argument("BondCurve: maturity/price size mismatch");
    if (!forwards.empty() && forwards.size() != maturities.size())
        throw std::invalid_argument("BondCurve: forwards size mismatch");
    for (std::size_t i = 0; i < maturities.size(); ++i) {
        if (!(maturities[i] > 0)) throw std::invalid_argument("BondCurve: maturities must be > 0");
        if (i > 0 && !(maturities[i] > maturities[i - 1]))
            throw std::invalid_argument("BondCurve: maturities must be strictly increasing");
        if (!(prices[i] > 0)) throw std::domain_error("BondCurve: prices must be positive");
    }
}

ShortRateModel::ShortRateModel(PiecewiseMatrixFunction intensity, PiecewiseVectorFunction rates,
                               RowVector initial, double rho)
    : intensity_(std::move(intensity)), rates_(std::move(rates)), initial_(std::move(initial)),
      rho_(rho) {
    if (intensity_.rows() != intensity_.cols())
        throw std::invalid_argument("ShortRateModel: intensity not square");
    if (rates_.rows() != intensity_.rows() || initial_.size() != intensity_.rows())
        throw std::invalid_argument("ShortRateModel: dimension mismatch");
    if (rho_ < 0) throw std::invalid_argument("ShortRateModel: rho must be >= 0");
    for (const auto& m : intensity_.values()) validate_intensity(m);
    for (const auto& r : rates_.values())
        for (Eigen::Index i = 0; i < r.size(); ++i)
            if (r(i) < -rho_ - 1e-12)
                throw std::invalid_argument("ShortRateModel: rate below -rho in state " +
                                            std::to_string(i));
    for (Eigen::Index i = 0; i < initial_.size(); ++i)
        if (initial_(i) < 0)
            throw std::invalid_argument("ShortRateModel: negative initial probability");
    if (std::abs(initial_.sum() - 1.0) > 1e-12)
        throw std::invalid_argument("ShortRateModel: initial distribution must sum to 1");
}

Matrix discount_matrix(const PiecewiseMatrixFunction& intensity,
                       const PiecewiseVectorFunction& rates, double s, double t, int power) {
    if (s > t) throw std::domain_error("discount_matrix: s > t");
    if (power < 0) throw std::invalid_argument("discount_matrix: power must be >= 0");
    if (s == t) return Matrix::Identity(intensity.rows(), intensity.rows());
    PiecewiseMatrixFunction gen = combine(
        intensity, rates, s, t,
        [power](const Matrix& lam, const Vector& r) -> Matrix {
            return lam - power * Matrix(r.asDiagonal());
        });
    return prod_integral(gen, s, t);
}

Matrix discount_matrix(const ShortRateModel& m, double s, double t, int power) {
    return discount_matrix(m.intensity(), m.rates(), s, t, power);
}

double bond_price(const ShortRateModel& m, double t, double T, std::optional<int> state) {
    if (t > T) throw std::domain_error("bond_price: t > T");
    const Matrix d = discount_matrix(m, t, T, 1);
    const Vector ones = Vector::Ones(m.dim());
    if (state) {
        if (*state < 0 || *state >= m.dim())
            throw std::invalid_argument("bond_price: state out of range");
        return d.row(*state) * ones;
    }
    return m.initialDistribution() * d * ones;
}

std::optional<double> forward_rate(const ShortRateModel& m, double t, double T,
                                   std::optional<int> state) {
    if (t > T) throw std::domain_error("forward_rate: t > T");
    const int n = m.dim();
    RowVector start = state ? RowVector(RowVector::Unit(n, *state)) : m.initialDistribution();
    auto subAt = [&](double u) -> Matrix {
        return m.intensity().at(u) - Matrix(m.rates().at(u).asDiagonal()) -
               m.rho() * Matrix::Identity(n, n);
    };
    // tau(t) ~ IPH(start, Lambda(.+t) - Delta(r(.+t)) - rho I); f = hazard - rho
    RowVector occ = start;
    if (T > t) {
        PiecewiseMatrixFunction sub = combine(
            m.intensity(), m.rates(), t, T, [&](const Matrix& lam, const Vector& r) -> Matrix {
                return lam - Matrix(r.asDiagonal()) - m.rho() * Matrix::Identity(n, n);
            });
        occ = start * prod_integral(sub, t, T);
    }
    const double surv = occ * Vector::Ones(n);
    if (!(surv > 1e-300)) return std::nullopt;
    const Vector exit = -subAt(T).rowwise().sum();
    const double haz = (occ * exit)(0) / surv;
    return haz - m.rho();
}

double rho_from_prices(const BondCurve& curve) {
    curve.validate();
    double rho = 0.0;
    if (!curve.forwards.empty()) {
        for (double fd : curve.forwards) rho = std::max(rho, -std::log1p(fd));
        return rho;
    }
    for (std::size_t i = 0; i < curve.maturities.size(); ++i)
        rho = std::max(rho, std::log(curve.prices[i]) / curve.maturities[i]);
    return rho;
}

WeightedSample prices_to_survival_sample(const BondCurve& curve, double rho,
                                         PointPlacement placement) {
    curve.validate();
    const std::size_t n = curve.maturities.size();
    std::vector<double> scaled(n);
    for (std::size_t i = 0; i < n; ++i)
        scaled[i] = std::exp(-rho * curve.maturities[i]) * curve.prices[i];

    std::ostringstream bad;
    double prev = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (scaled[i] > prev + 1e-9) bad << (bad.tellp() > 0 ? ", " : "") << curve.maturities[i];
        prev = scaled[i];
    }
    if (bad.tellp() > 0)
        throw std::domain_error("prices_to_survival_sample: scaled prices increase at maturities " +
                                bad.str());

    WeightedSample out;
    prev = 1.0;
    double prevT = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = prev - scaled[i];
        if (w > 1e-15) {
            const double mid = 0.5 * (prevT + curve.maturities[i]);
            const double at =
                placement == PointPlacement::Midpoint ? mid : (prevT > 0.0 ? prevT : mid);
            out.exactPoints.emplace_back(at, w);
        }
        prev = scaled[i];
        prevT = curve.maturities[i];
    }
    if (scaled[n - 1] > 1e-15) out.censoredPoints.emplace_back(curve.maturities[n - 1], scaled[n - 1]);
    return out;
}

CalibrationResult calibrate(const BondCurve& curve, const CalibrateConfig& config) {
    curve.validate();
    const int p = config.fit.dimension;
    const double rho = rho_from_prices(curve);
    WeightedSample sample = prices_to_survival_sample(curve, rho);

    FitConfig fit = config.fit;
    if (config.mode == RateMode::Restricted) {
        if (config.rates.size() != p)
            throw std::invalid_argument("calibrate: restricted mode needs one rate per state");
        fit.fixedExit = Vector(config.rates.array() + rho);
    } else {
        fit.fixedExit.reset();
    }

    FitResult res = em_fit(sample, fit);

    const Matrix& that = res.dist.subIntensity().values()[0];
    const Vector exit = -that.rowwise().sum();
    Matrix lambda = that + Matrix(exit.asDiagonal());
    Vector rates = config.mode == RateMode::Restricted ? config.rates
                                                       : Vector(exit.array() - rho);

    ShortRateModel model(PiecewiseMatrixFunction::constant(lambda),
                         PiecewiseVectorFunction::constant(rates),
                         res.dist.initialDistribution(), rho);

    CalibrationResult out{std::move(model), res.dist,        res.loglik, rho,
                          config.mode,      res.loglikTrace, {},         0.0,
                          res.weakStates};
    out.modelPrices.reserve(curve.maturities.size());
    for (std::size_t i = 0; i < curve.maturities.size(); ++i) {
        const double price =
            std::exp(rho * curve.maturities[i]) * res.dist.survival(curve.maturities[i]);
        out.modelPrices.push_back(price);
        out.maxPriceError = std::max(out.maxPriceError, std::abs(price - curve.prices[i]));
    }
    return out;
}

BondCurve g2pp_prices(const G2ppParams& p, const std::vector<double>& maturities) {
    if (!(p.k1 > 0) || !(p.k2 > 0)) throw std::invalid_argument("g2pp_prices: k1, k2 must be > 0");
    auto bk = [](double k, double T) { return (1.0 - std::exp(-k * T)) / k; };
    BondCurve out;
    out.maturities = maturities;
    out.prices.reserve(maturities.size());
    for (double T : maturities) {
        double v2 = 0.0;
        for (auto [k, s] : {std::pair{p.k1, p.sigma1}, std::pair{p.k2, p.sigma2}}) {
            const double b = bk(k, T);
            v2 += s * s / (k * k) * (T - b - 0.5 * k * b * b);
        }
        v2 += 2.0 * p.sigma1 * p.sigma2 * p.sigma12 / (p.k1 * p.k2) *
              (T - bk(p.k1, T) - bk(p.k2, T) + bk(p.k1 + p.k2, T));
        const double psi = p.theta * T + (p.r0 - p.theta) * bk(p.k1, T);
        out.prices.push_back(std::exp(-psi + 0.5 * v2));
    }
    return out;
}

double swap_rate(const ShortRateModel& m, double T) {
    if (!m.intensity().isConstant() || !m.rates().isConstant())
        throw std::invalid_argument("swap_rate: requires a time-homogeneous model");
    if (m.rho() != 0.0) throw std::invalid_argument("swap_rate: requires rho = 0");
    const Matrix sub = m.intensity().values()[0] - Matrix(m.rates().values()[0].asDiagonal());
    const Vector ones = Vector::Ones(m.dim());
    const Vector eT = (sub * T).exp() * ones;
    // annuity = int_0^T P(tau > y) dy = pi (-sub)^{-1} (I - e^{sub T}) e
    const Vector annuity = (-sub).partialPivLu().solve(Vector(ones - eT));
    if (!annuity.allFinite()) throw std::runtime_error("swap_rate: singular generator");
    const double num = 1.0 - (m.initialDistribution() * eT)(0);
    const double den = m.initialDistribution() * annuity;
    return num / den;
}

}  // namespace phlife
