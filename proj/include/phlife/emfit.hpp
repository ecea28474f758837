#pragma once

#include "phlife/phasetype.hpp"

#include <functional>
#include <optional>

namespace phlife {

/// Weighted, right-censorable absorption-time data.  Exact points (y, w)
/// carry density mass, censored points (c, v) carry survival mass.
struct WeightedSample {
    std::vector<std::pair<double, double>> exactPoints;
    std::vector<std::pair<double, double>> censoredPoints;

    double totalWeight() const;
    double weightedMean() const;  // censored times enter at their censoring point
    void validate() const;
};

/// Expected complete-data sufficient statistics.
struct EMStatistics {
    Vector startCounts;       // B_i
    Vector occupationTime;    // Z_i
    Matrix transitionCounts;  // N_ij, zero diagonal
    Vector exitCounts;        // N_i
    double totalWeight = 0.0;
};

enum class PhStructure { General, Coxian };

struct FitConfig {
    int dimension = 1;
    PhStructure structure = PhStructure::General;
    std::optional<Vector> fixedExit;  // t = r + rho e when calibrating restricted
    int maxIters = 5000;
    double tol = 1e-9;  // on |delta loglik| per iteration
    std::uint64_t seed = 0x5eed2003ULL;
    int restarts = 5;
};

struct FitResult {
    PhaseTypeDist dist;
    double loglik = 0.0;
    std::vector<double> loglikTrace;
    int iterations = 0;
    int bestRestart = 0;
    std::vector<int> weakStates;  // states with Z_i < 1e-12 * sum(Z) at the fit
};

double log_likelihood(const PhaseTypeDist& d, const WeightedSample& sample);

/// Conditional expectations of the complete-data statistics given the data,
/// for a time-homogeneous d.  Censored observations use the full-path
/// expectations (occupation and exits beyond the censoring point included).
EMStatistics e_step(const PhaseTypeDist& d, const WeightedSample& sample);

PhaseTypeDist m_step(const EMStatistics& stats, const FitConfig& config);

FitResult em_fit(const WeightedSample& sample, const FitConfig& config);

/// Histogram discretization of a density: midpoint atoms with trapezoid cell
/// masses, residual tail mass as a censored point at the last breakpoint.
WeightedSample discretize_density(const std::function<double(double)>& density,
                                  const std::vector<double>& grid);

}  // namespace phlife
