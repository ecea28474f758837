#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace phlife {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Row-sum tolerance used when validating (sub-)intensity matrices.
inline constexpr double kRowSumTol = 1e-10;

/// Default refinement step for sampling time-dependent generators (years).
inline constexpr double kDefaultStep = 1.0 / 252.0;

/// Thrown on malformed external input (files, CLI arguments).
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Thrown when an iterative fit cannot produce a usable result.
struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Piecewise-constant function of time with values of type T (Matrix or
/// Vector).  A constant function has an unbounded domain; a gridded one is
/// defined on [breakpoints.front(), breakpoints.back()] with value i on
/// [t_i, t_{i+1}).
template <typename T>
class Piecewise {
  public:
    static Piecewise constant(T value) {
        Piecewise f;
        f.values_.push_back(std::move(value));
        return f;
    }

    Piecewise(std::vector<double> breakpoints, std::vector<T> values)
        : breakpoints_(std::move(breakpoints)), values_(std::move(values)) {
        if (breakpoints_.size() != values_.size() + 1)
            throw std::invalid_argument("Piecewise: need one more breakpoint than values");
        if (values_.empty()) throw std::invalid_argument("Piecewise: empty");
        for (std::size_t i = 1; i < breakpoints_.size(); ++i)
            if (!(breakpoints_[i] > breakpoints_[i - 1]))
                throw std::invalid_argument("Piecewise: breakpoints must be strictly increasing");
        for (const auto& v : values_)
            if (v.rows() != values_[0].rows() || v.cols() != values_[0].cols())
                throw std::invalid_argument("Piecewise: value dimensions differ across intervals");
    }

    /// Sample a closed-form evaluator at interval midpoints of a uniform grid.
    static Piecewise sample(const std::function<T(double)>& fn, double t0, double t1,
                            double step = kDefaultStep) {
        if (!(t1 > t0) || !(step > 0)) throw std::invalid_argument("Piecewise::sample: bad grid");
        const int m = std::max(1, static_cast<int>(std::ceil((t1 - t0) / step - 1e-12)));
        std::vector<double> bp(m + 1);
        std::vector<T> vals;
        vals.reserve(m);
        const double h = (t1 - t0) / m;
        for (int i = 0; i <= m; ++i) bp[i] = t0 + i * h;
        for (int i = 0; i < m; ++i) vals.push_back(fn(t0 + (i + 0.5) * h));
        return Piecewise(std::move(bp), std::move(vals));
    }

    bool isConstant() const { return breakpoints_.empty(); }
    int rows() const { return static_cast<int>(values_[0].rows()); }
    int cols() const { return static_cast<int>(values_[0].cols()); }
    std::size_t intervalCount() const { return values_.size(); }
    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::vector<T>& values() const { return values_; }

    bool contains(double t) const {
        if (isConstant()) return true;
        const double slack = 1e-9 * (1.0 + std::abs(breakpoints_.back()));
        return t >= breakpoints_.front() - slack && t <= breakpoints_.back() + slack;
    }

    const T& at(double t) const {
        if (isConstant()) return values_[0];
        if (!contains(t)) throw std::domain_error("Piecewise: evaluation outside domain");
        auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
        std::size_t idx = (it == breakpoints_.begin()) ? 0 : (it - breakpoints_.begin() - 1);
        if (idx >= values_.size()) idx = values_.size() - 1;
        return values_[idx];
    }

    /// Visit the constant pieces of [s, t] (s < t) in increasing time order.
    void forEachInterval(double s, double t,
                         const std::function<void(const T&, double)>& f) const {
        if (!(t > s)) return;
        if (isConstant()) {
            f(values_[0], t - s);
            return;
        }
        if (!contains(s) || !contains(t))
            throw std::domain_error("Piecewise: [s,t] outside domain");
        double cur = s;
        while (cur < t - 1e-14 * (1.0 + std::abs(t))) {
            const T& v = at(cur);
            auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(),
                                       cur + 1e-14 * (1.0 + std::abs(cur)));
            double next = (it == breakpoints_.end()) ? t : std::min(*it, t);
            if (!(next > cur)) break;
            f(v, next - cur);
            cur = next;
        }
    }

    /// Apply `op` to every interval value, keeping the grid.
    template <typename F>
    auto map(F&& op) const {
        using U = std::decay_t<decltype(op(values_[0]))>;
        std::vector<U> vals;
        vals.reserve(values_.size());
        for (const auto& v : values_) vals.push_back(op(v));
        if (isConstant()) return Piecewise<U>::constant(std::move(vals[0]));
        return Piecewise<U>(breakpoints_, std::move(vals));
    }

  private:
    Piecewise() = default;
    std::vector<double> breakpoints_;  // empty for constants
    std::vector<T> values_;
};

using PiecewiseMatrixFunction = Piecewise<Matrix>;
using PiecewiseVectorFunction = Piecewise<Vector>;

/// Merged strictly increasing breakpoint grid covering [s, t] for a set of
/// piecewise functions (constants contribute nothing).
std::vector<double> merge_breakpoints(double s, double t,
                                      const std::vector<const std::vector<double>*>& grids);

/// Combine two piecewise functions on the merged grid of [s, t].
template <typename A, typename B, typename F>
auto combine(const Piecewise<A>& a, const Piecewise<B>& b, double s, double t, F&& op) {
    using U = std::decay_t<decltype(op(a.values()[0], b.values()[0]))>;
    std::vector<double> bp =
        merge_breakpoints(s, t, {&a.breakpoints(), &b.breakpoints()});
    std::vector<U> vals;
    vals.reserve(bp.size() - 1);
    for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
        const double mid = 0.5 * (bp[i] + bp[i + 1]);
        vals.push_back(op(a.at(mid), b.at(mid)));
    }
    if (a.isConstant() && b.isConstant()) return Piecewise<U>::constant(std::move(vals[0]));
    return Piecewise<U>(std::move(bp), std::move(vals));
}

bool all_finite(const Matrix& a);

/// Matrix exponential (scaling-and-squaring Pade).
Matrix expm(const Matrix& a);

/// Action e^A * w without forming e^A; exact to machine precision.
Matrix expm_multiply(const Matrix& a, Matrix w);

/// Product integral  prod_s^t (I + F(x) dx).  For s > t returns the
/// inverse-direction product, i.e. the inverse of prod_t^s (I + F dx).
Matrix prod_integral(const PiecewiseMatrixFunction& f, double s, double t);

/// Blocks of the product integral of [[A, B], [0, C]] over [s, t]:
/// UL = prod(I+A dx), LR = prod(I+C dx),
/// UR = int_s^t prod_s^x(I+A du) B(x) prod_x^t(I+C du) dx.
struct VanLoanBlocks {
    Matrix upperLeft;
    Matrix upperRight;
    Matrix lowerRight;
};
VanLoanBlocks van_loan(const PiecewiseMatrixFunction& a, const PiecewiseMatrixFunction& b,
                       const PiecewiseMatrixFunction& c, double s, double t);

Matrix kron(const Matrix& a, const Matrix& b);
Matrix kron_sum(const Matrix& a, const Matrix& b);

/// Throws std::invalid_argument unless m is a true intensity matrix
/// (nonnegative off-diagonals, row sums within tol of zero).
void validate_intensity(const Matrix& m, double tol = kRowSumTol);

/// Throws unless m is a sub-intensity matrix (row sums <= tol).
void validate_subintensity(const Matrix& m, double tol = kRowSumTol);

}  // namespace phlife
