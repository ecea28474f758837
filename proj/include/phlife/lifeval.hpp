#pragma once

#include "phlife/bondmarket.hpp"

namespace phlife {

/// Payment data on a state space E: continuous rates b(t), lump-sum matrix
/// B(t), the lump-triggering intensity Lambda^1(t) (Lambda^0 = Lambda -
/// Lambda^1), and affine premium slopes so that b(t; theta) = b + theta*bs,
/// B(t; theta) = B + theta*Bs.
struct PaymentSpec {
    PiecewiseVectorFunction rates;
    PiecewiseVectorFunction ratesSlope;
    PiecewiseMatrixFunction lumps;
    PiecewiseMatrixFunction lumpsSlope;
    PiecewiseMatrixFunction lumpIntensity;

    static PaymentSpec zero(int n);
    int dim() const { return rates.rows(); }
};

/// Combined biometric x rate-state model in lexicographic order
/// ((i, itilde) -> i*p + itilde), with payments lifted to the product space.
class ProductModel {
  public:
    ProductModel(PiecewiseMatrixFunction intensity, PiecewiseVectorFunction rates,
                 PaymentSpec payments, int bioStates, int rateStates);

    int dim() const { return bioStates_ * rateStates_; }
    int bioStates() const { return bioStates_; }
    int rateStates() const { return rateStates_; }
    int combinedIndex(int bio, int rate) const { return bio * rateStates_ + rate; }

    const PiecewiseMatrixFunction& intensity() const { return intensity_; }
    const PiecewiseVectorFunction& rates() const { return rates_; }
    const PaymentSpec& payments() const { return payments_; }

    double horizonStart() const;
    double horizonEnd() const;

    /// R(t; theta) = Lambda^1(t) o B(t; theta) + Delta(b(t; theta)).
    Matrix reward(double t, double theta = 0.0) const;
    Matrix rewardSlope(double t) const;

    /// C_r^(k)(t; theta) = Lambda^1(t) o B(t; theta)^{o k} / k!.
    Matrix momentKernelReduced(int k, double t, double theta = 0.0) const;

  private:
    PiecewiseMatrixFunction intensity_;
    PiecewiseVectorFunction rates_;
    PaymentSpec payments_;
    int bioStates_;
    int rateStates_;
};

/// Lift a biometric model over a Markovian rate model under independence:
/// Lambda = Lambda_b (+) Lambda_r, r = e (x) r_p, b = b_b (x) e,
/// B = B_b (x) I, Lambda^1 = Lambda_b^1 (x) I.
ProductModel build_product_model(const PiecewiseMatrixFunction& bioIntensity,
                                 const PaymentSpec& bioPayments, const ShortRateModel& rateModel);

/// Partial state-wise prospective reserve matrix V(s, t), the upper-right
/// Van Loan block with A = Lambda - Delta(r), B = R, C = Lambda.
Matrix reserve_matrix(const ProductModel& m, double s, double t, double theta = 0.0);

/// dV/dtheta: same block integral with the B block replaced by dR/dtheta.
Matrix reserve_matrix_slope(const ProductModel& m, double s, double t);

/// Backward solve of Thiele's equation for the state-wise reserve
/// V^Th(t) = V(t, T) e; returns one vector per requested grid point.
std::vector<Vector> thiele_solve(const ProductModel& m, double T, const std::vector<double>& grid,
                                 double theta = 0.0, double step = kDefaultStep);

/// Reduced partial state-wise moments V_r^(0..k)(t, T); reduced[0] = P(t, T).
struct MomentStack {
    int order = 0;
    double from = 0.0;
    double to = 0.0;
    std::vector<Matrix> reduced;
};

/// Single product integration of the (k+1)x(k+1)-block Van Loan generator;
/// the last block column yields all reduced moments at once.
MomentStack moment_stack(const ProductModel& m, int k, double t, double T, double theta = 0.0);

/// Independent cross-check path: backward RK4 on the moment ODE system.
MomentStack moment_stack_ode(const ProductModel& m, int k, double t, double T,
                             double theta = 0.0, double step = kDefaultStep);

struct PremiumSolve {
    double theta = 0.0;
    int iterations = 0;
    std::vector<double> residuals;
};

/// Equivalence premium: the theta with e_i' V(0; theta) e = 0, by Newton with
/// the exact Van Loan derivative (one effective iteration for affine
/// payments).
PremiumSolve equivalence_premium(const ProductModel& m, int startState);
PremiumSolve equivalence_premium(const ProductModel& m, const RowVector& start);

/// Raw moments E(X^0..X^N) of the discounted payment PV started in
/// startState.
std::vector<double> raw_moments_of_pv(const ProductModel& m, int startState, int N,
                                      double theta = 0.0);
std::vector<double> raw_moments_of_pv(const ProductModel& m, const RowVector& start, int N,
                                      double theta = 0.0);

}  // namespace phlife
