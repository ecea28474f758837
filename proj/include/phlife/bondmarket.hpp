#pragma once

#include "phlife/emfit.hpp"

namespace phlife {

/// Observed zero-coupon curve.  `forwards` (discrete annual forward rates)
/// may be empty; when present they take precedence for the rho floor.
struct BondCurve {
    std::vector<double> maturities;
    std::vector<double> prices;
    std::vector<double> forwards;

    void validate() const;
};

/// Markov-modulated short-rate model: true intensity Lambda_r, state-wise
/// rate vector r(t), initial distribution and the floor rho >= -min r.
class ShortRateModel {
  public:
    ShortRateModel(PiecewiseMatrixFunction intensity, PiecewiseVectorFunction rates,
                   RowVector initial, double rho);

    int dim() const { return static_cast<int>(initial_.size()); }
    const PiecewiseMatrixFunction& intensity() const { return intensity_; }
    const PiecewiseVectorFunction& rates() const { return rates_; }
    const RowVector& initialDistribution() const { return initial_; }
    double rho() const { return rho_; }

  private:
    PiecewiseMatrixFunction intensity_;
    PiecewiseVectorFunction rates_;
    RowVector initial_;
    double rho_;
};

/// D^(m)(s,t) = prod_s^t (I + [Lambda(u) - m Delta(r(u))] du).
Matrix discount_matrix(const PiecewiseMatrixFunction& intensity,
                       const PiecewiseVectorFunction& rates, double s, double t, int power);
Matrix discount_matrix(const ShortRateModel& m, double s, double t, int power = 1);

/// Zero-coupon price; with no state given the initial distribution is used.
double bond_price(const ShortRateModel& m, double t, double T,
                  std::optional<int> state = std::nullopt);

/// Instantaneous forward rate f(t,T) = hazard of the implied IPH at T-t,
/// less rho.  Empty when the survival has underflowed.
std::optional<double> forward_rate(const ShortRateModel& m, double t, double T,
                                   std::optional<int> state = std::nullopt);

/// Smallest nonnegative shift making scaled prices a survival function.
double rho_from_prices(const BondCurve& curve);

/// Placement of the interval mass points when discretizing a price curve.
enum class PointPlacement { Midpoint, LeftEndpoint };

/// Interval masses from successive scaled price differences, plus a censored
/// point at the last maturity carrying the remaining mass.  Midpoint
/// placement is the default; left-endpoint placement keeps the first
/// interval's midpoint so that all times stay positive.
WeightedSample prices_to_survival_sample(const BondCurve& curve, double rho,
                                         PointPlacement placement = PointPlacement::Midpoint);

enum class RateMode { Restricted, Unrestricted };

struct CalibrateConfig {
    FitConfig fit;
    RateMode mode = RateMode::Unrestricted;
    Vector rates;  // required in restricted mode (length = fit.dimension)
};

struct CalibrationResult {
    ShortRateModel model;
    PhaseTypeDist dist;
    double loglik = 0.0;
    double rho = 0.0;
    RateMode mode = RateMode::Unrestricted;
    std::vector<double> loglikTrace;
    std::vector<double> modelPrices;  // at the curve's maturities
    double maxPriceError = 0.0;
    std::vector<int> weakStates;
};

CalibrationResult calibrate(const BondCurve& curve, const CalibrateConfig& config);

struct G2ppParams {
    double r0 = 0.0;
    double k1 = 0.0;
    double k2 = 0.0;
    double sigma1 = 0.0;
    double sigma2 = 0.0;
    double theta = 0.0;
    double sigma12 = 0.0;
};

/// Time-zero prices of the two-factor Vasicek (G2++) model.
BondCurve g2pp_prices(const G2ppParams& params, const std::vector<double>& maturities);

/// Swap rate (1 - pi e^{(M - Delta(r))T} e) / (pi [-(M - Delta(r))]^{-1} e^{(M - Delta(r))T} e)
/// for a time-homogeneous model with nonnegative rates and zero floor.
double swap_rate(const ShortRateModel& m, double T);

}  // namespace phlife
