#pragma once

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace phlife {

/// Shifted-beta reference density on [a, b]:
/// f*(x) = Gamma(a+b+2)/(Gamma(a+1)Gamma(b+1)) (b-a)^{-a-b-1} (b-x)^alpha (x-a)^beta.
struct JacobiReference {
    double alpha = 0.0;
    double beta = 0.0;
    double a = 0.0;
    double b = 1.0;

    void validate() const;
    double pdf(double x) const;
    double cdf(double y) const;
};

/// Jacobi polynomial q_n^{(alpha,beta)} by its Pochhammer finite sum.
double jacobi_poly(int n, double alpha, double beta, double x);

/// Orthonormal basis polynomial p_n for L^2(f*) on [a, b].
double orthonormal_jacobi(int n, const JacobiReference& ref, double x);

/// Expansion coefficients c_0..c_N from raw moments E(X^0..X^N).
std::vector<double> gc_coefficients(const std::vector<double>& moments,
                                    const JacobiReference& ref, int N);

/// Truncated Gram-Charlier approximation of a density with raw-moment input.
class GCApproximation {
  public:
    GCApproximation(JacobiReference ref, std::vector<double> moments, int N);
    GCApproximation(const GCApproximation& other)
        : ref_(other.ref_), moments_(other.moments_), N_(other.N_), c_(other.c_),
          clampEvents_(other.clampEvents_.load()) {}
    GCApproximation& operator=(const GCApproximation& other) {
        ref_ = other.ref_;
        moments_ = other.moments_;
        N_ = other.N_;
        c_ = other.c_;
        clampEvents_.store(other.clampEvents_.load());
        return *this;
    }

    const JacobiReference& reference() const { return ref_; }
    int order() const { return N_; }
    const std::vector<double>& coefficients() const { return c_; }

    /// Truncated density series; may be negative, reported as-is.
    double density(double x) const;

    /// Exact antiderivative of the truncated density series, clamped to
    /// [0, 1]; clamping events are counted.
    double cdf(double y) const;
    long clampEvents() const { return clampEvents_.load(); }

    struct Quantile {
        double value = 0.0;
        bool monotone = true;
    };
    /// Smallest crossing of the cdf with level q, bisected to 1e-8;
    /// `monotone` is false when the truncated cdf crosses q more than once.
    Quantile quantile(double q) const;

  private:
    JacobiReference ref_;
    std::vector<double> moments_;
    int N_;
    std::vector<double> c_;
    mutable std::atomic<long> clampEvents_{0};
};

/// Orthonormal polynomial table built from reference raw moments via Hankel
/// determinants; generic alternative to the closed-form Jacobi route.
struct HankelBasis {
    std::vector<double> refMoments;            // a_0..a_{2N}
    std::vector<double> hankelDets;            // A_{-1}..A_N
    std::vector<std::vector<double>> polyCoeffs;  // p_n as monomial coefficients

    double evaluate(int n, double x) const;
};

HankelBasis hankel_basis(const std::vector<double>& refMoments);

}  // namespace phlife
