#pragma once

#include "phlife/lifeval.hpp"

#include <string>

namespace phlife {

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);
double parse_double(const std::string& s);

/// Curve CSV: header `maturity,price[,forward]`, full-precision decimals.
BondCurve read_curve_csv(const std::string& path);
void write_curve_csv(const std::string& path, const BondCurve& curve);

/// Model file: {p, rho, pi, rates, intensity[, breakpoints]} with the
/// intensity stored row-major (one flat array per interval).
ShortRateModel read_model_json(const std::string& path);
void write_model_json(const std::string& path, const ShortRateModel& model);

/// Closed-form scalar expression of the time variable `t`.
class Expression {
  public:
    static Expression parse(const std::string& source);
    double operator()(double t) const { return fn_(t); }
    const std::string& source() const { return source_; }

  private:
    std::function<double(double)> fn_;
    std::string source_;
};

/// Biometric product description read from JSON: state names, horizon,
/// per-transition rate expressions sampled on the grid, payment vectors and
/// lump sums with affine premium slopes.
struct ProductSpecFile {
    std::vector<std::string> stateNames;
    double horizon = 0.0;
    double step = kDefaultStep;
    PiecewiseMatrixFunction intensity;
    PaymentSpec payments;
};

ProductSpecFile read_product_json(const std::string& path);

void write_fit_report(const std::string& path, const CalibrationResult& result,
                      const CalibrateConfig& config);

/// Every run writes one of these next to its outputs.
struct RunManifest {
    std::string tool;
    std::string version;
    std::string subcommand;
    std::vector<std::string> arguments;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::uint64_t seed = 0;
};

void write_manifest(const std::string& path, const RunManifest& manifest);

}  // namespace phlife
