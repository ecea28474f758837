#pragma once

#include "phlife/matrixcore.hpp"

#include <cstdint>
#include <optional>
#include <random>

namespace phlife {

/// One simulated absorption of the underlying jump process.
struct AbsorptionSample {
    double absorptionTime = 0.0;
    std::vector<int> states;      // visited transient states (empty unless requested)
    std::vector<double> sojourns; // sojourn time per visited state
};

/// (Inhomogeneous) phase-type distribution: initial row vector pi over the
/// transient states and a sub-intensity function T(x).  Exit rates are always
/// derived as t(x) = -T(x) e.
class PhaseTypeDist {
  public:
    PhaseTypeDist(RowVector pi, PiecewiseMatrixFunction subIntensity,
                  std::optional<Vector> pinnedExit = std::nullopt);

    int order() const { return static_cast<int>(pi_.size()); }
    const RowVector& initialDistribution() const { return pi_; }
    const PiecewiseMatrixFunction& subIntensity() const { return T_; }
    bool hasConstantIntensity() const { return T_.isConstant(); }

    Vector exitRates(double x) const;

    /// P(tau > x) = pi prod_0^x (I + T(u) du) e, clamped to [0, 1].
    double survival(double x) const;

    /// f(x) = pi prod_0^x (I + T(u) du) t(x).
    double density(double x) const;

    /// f(x)/S(x); empty when the survival has underflowed.
    std::optional<double> hazard(double x) const;

    /// mean of tau for constant T: pi (-T)^{-1} e.
    double mean() const;

    /// Stationary distribution of the associated phase-type renewal process,
    /// pi (-T)^{-1} / mean.  Constant T only.
    RowVector renewalStationary() const;

    AbsorptionSample sample(std::mt19937_64& rng, bool withPath = false) const;
    AbsorptionSample sample(std::uint64_t seed, bool withPath = false) const;

  private:
    RowVector pi_;
    PiecewiseMatrixFunction T_;
    // exit rates fixed a priori (restricted calibration); when absent the
    // rates are derived as -T(x) e
    std::optional<Vector> pinnedExit_;
};

}  // namespace phlife
