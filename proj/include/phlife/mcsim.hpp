#pragma once

#include "phlife/lifeval.hpp"

namespace phlife {

struct SimulationConfig {
    long paths = 1000000;
    std::uint64_t seed = 1;
    int workers = 1;
};

struct PVSample {
    std::vector<double> values;  // one discounted PV per path, in path order
    double mean = 0.0;
    double variance = 0.0;
};

/// Simulate the combined chain and payment stream; discounting and payment
/// accrual use the closed-form per-interval exponential integrals, so the
/// only error versus the analytic values is statistical.  Bit-reproducible
/// for fixed (seed, workers).
PVSample simulate_pv(const ProductModel& m, int startState, const SimulationConfig& config,
                     double theta = 0.0);

/// Start states drawn per path from an initial distribution.
PVSample simulate_pv(const ProductModel& m, const RowVector& startDist,
                     const SimulationConfig& config, double theta = 0.0);

/// Type-1 (inverse-CDF) empirical quantiles.
std::vector<double> empirical_quantiles(const PVSample& sample, const std::vector<double>& qs);

}  // namespace phlife
