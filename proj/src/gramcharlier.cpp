#include "phlife/gramcharlier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace phlife {

namespace {

// ---- double-double arithmetic: the coefficient sums cancel over ~10 orders
// of magnitude for N = 20 on a wide support, so plain doubles lose all
// significance.  Compensated (error-free transformation) accumulation keeps
// ~31 digits.

struct DD {
    double hi = 0.0;
    double lo = 0.0;
    DD() = default;
    DD(double h) : hi(h) {}
    DD(double h, double l) : hi(h), lo(l) {}
};

inline DD quick_two_sum(double a, double b) {
    const double s = a + b;
    return {s, b - (s - a)};
}

inline DD two_sum(double a, double b) {
    const double s = a + b;
    const double bb = s - a;
    return {s, (a - (s - bb)) + (b - bb)};
}

inline DD two_prod(double a, double b) {
    const double p = a * b;
    return {p, std::fma(a, b, -p)};
}

inline DD operator+(DD a, DD b) {
    DD s = two_sum(a.hi, b.hi);
    s.lo += a.lo + b.lo;
    return quick_two_sum(s.hi, s.lo);
}

inline DD operator-(DD a) { return {-a.hi, -a.lo}; }
inline DD operator-(DD a, DD b) { return a + (-b); }

inline DD operator*(DD a, DD b) {
    DD p = two_prod(a.hi, b.hi);
    p.lo += a.hi * b.lo + a.lo * b.hi;
    return quick_two_sum(p.hi, p.lo);
}

inline DD operator/(DD a, DD b) {
    const double q1 = a.hi / b.hi;
    DD r = a - b * DD(q1);
    const double q2 = r.hi / b.hi;
    r = r - b * DD(q2);
    const double q3 = r.hi / b.hi;
    DD q = quick_two_sum(q1, q2);
    return q + DD(q3);
}

DD dd_pochhammer(DD x, int n) {
    DD r(1.0);
    for (int i = 0; i < n; ++i) r = r * (x + DD(static_cast<double>(i)));
    return r;
}

DD dd_factorial(int n) {
    DD r(1.0);
    for (int i = 2; i <= n; ++i) r = r * DD(static_cast<double>(i));
    return r;
}

// q_n^{(alpha,beta)}(x) in double-double
DD dd_jacobi(int n, DD alpha, DD beta, DD x) {
    DD u = (DD(1.0) - x) * DD(0.5);
    DD term(1.0), sum(1.0);
    for (int k = 1; k <= n; ++k) {
        // ratio of consecutive summands
        DD num = (alpha + beta + DD(1.0 + n) + DD(k - 1.0)) * (DD(-n) + DD(k - 1.0));
        DD den = (alpha + DD(static_cast<double>(k))) * DD(static_cast<double>(k));
        term = term * (num / den) * u;
        sum = sum + term;
    }
    return dd_pochhammer(alpha + DD(1.0), n) / dd_factorial(n) * sum;
}

// orthonormalization constant N_n for the (alpha, beta) family
DD dd_norm_const(int n, DD alpha, DD beta) {
    DD num = dd_factorial(n) * (DD(2.0 * n + 1.0) + alpha + beta) *
             dd_pochhammer(alpha + beta + DD(1.0), n);
    DD den = dd_pochhammer(alpha + DD(1.0), n) * dd_pochhammer(beta + DD(1.0), n) *
             (alpha + beta + DD(1.0));
    DD r = num / den;
    return DD(std::sqrt(r.hi));
}

// regularized incomplete beta I_x(a, b) by Lentz continued fraction
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                               a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

void JacobiReference::validate() const {
    if (!(alpha > -1.0) || !(beta > -1.0))
        throw std::invalid_argument("JacobiReference: alpha, beta must exceed -1");
    if (!(a < b)) throw std::invalid_argument("JacobiReference: requires a < b");
}

double JacobiReference::pdf(double x) const {
    if (x < a || x > b) return 0.0;
    const double logc = std::lgamma(alpha + beta + 2.0) - std::lgamma(alpha + 1.0) -
                        std::lgamma(beta + 1.0) - (alpha + beta + 1.0) * std::log(b - a);
    double core;
    if (x == a) {
        core = beta == 0.0 ? alpha * std::log(b - x) : -std::numeric_limits<double>::infinity();
        core = beta < 0.0 ? std::numeric_limits<double>::infinity() : core;
    } else if (x == b) {
        core = alpha == 0.0 ? beta * std::log(x - a) : -std::numeric_limits<double>::infinity();
        core = alpha < 0.0 ? std::numeric_limits<double>::infinity() : core;
    } else {
        core = alpha * std::log(b - x) + beta * std::log(x - a);
    }
    return std::exp(logc + core);
}

double JacobiReference::cdf(double y) const {
    // (X - a)/(b - a) ~ Beta(beta + 1, alpha + 1)
    return reg_inc_beta(beta + 1.0, alpha + 1.0, (y - a) / (b - a));
}

double jacobi_poly(int n, double alpha, double beta, double x) {
    if (n < 0) throw std::invalid_argument("jacobi_poly: n must be >= 0");
    return dd_jacobi(n, DD(alpha), DD(beta), DD(x)).hi;
}

double orthonormal_jacobi(int n, const JacobiReference& ref, double x) {
    ref.validate();
    const DD z = (DD(2.0) * DD(x) - DD(ref.a) - DD(ref.b)) / (DD(ref.b) - DD(ref.a));
    const DD v = dd_norm_const(n, DD(ref.alpha), DD(ref.beta)) *
                 dd_jacobi(n, DD(ref.alpha), DD(ref.beta), z);
    return v.hi;
}

std::vector<double> gc_coefficients(const std::vector<double>& moments,
                                    const JacobiReference& ref, int N) {
    ref.validate();
    if (N < 0) throw std::invalid_argument("gc_coefficients: N must be >= 0");
    if (static_cast<int>(moments.size()) < N + 1)
        throw std::domain_error("gc_coefficients: moments up to order N required");
    if (std::abs(moments[0] - 1.0) > 1e-9)
        throw std::invalid_argument("gc_coefficients: E(X^0) must be 1");

    const DD alpha(ref.alpha), beta(ref.beta), bdd(ref.b);
    const DD width = DD(ref.b) - DD(ref.a);

    // inner_k = (1/k!) E[((b - X)/(b - a))^k]
    //         = (b-a)^{-k} sum_i (-1)^i b^{k-i}/(k-i)! E(X^i)/i!
    std::vector<DD> inner(N + 1);
    std::vector<DD> bpow(N + 1), invfact(N + 1);
    bpow[0] = DD(1.0);
    invfact[0] = DD(1.0);
    for (int j = 1; j <= N; ++j) {
        bpow[j] = bpow[j - 1] * bdd;
        invfact[j] = invfact[j - 1] / DD(static_cast<double>(j));
    }
    std::vector<DD> widthPow(N + 1);
    widthPow[0] = DD(1.0);
    for (int j = 1; j <= N; ++j) widthPow[j] = widthPow[j - 1] * width;
    for (int k = 0; k <= N; ++k) {
        DD s(0.0);
        for (int i = 0; i <= k; ++i) {
            DD term = bpow[k - i] * invfact[k - i] * DD(moments[i]) * invfact[i];
            s = (i % 2 == 0) ? s + term : s - term;
        }
        inner[k] = s / widthPow[k];
    }

    std::vector<double> out(N + 1);
    for (int n = 0; n <= N; ++n) {
        DD sum(0.0);
        DD ratio(1.0);  // (alpha+beta+1+n)_k (-n)_k / (alpha+1)_k, built incrementally
        sum = sum + inner[0];
        for (int k = 1; k <= n; ++k) {
            DD num = (alpha + beta + DD(1.0 + n) + DD(k - 1.0)) * (DD(static_cast<double>(-n)) + DD(k - 1.0));
            DD den = alpha + DD(static_cast<double>(k));
            ratio = ratio * (num / den);
            sum = sum + ratio * inner[k];
        }
        DD cn = dd_norm_const(n, alpha, beta) *
                (dd_pochhammer(alpha + DD(1.0), n) / dd_factorial(n)) * sum;
        out[n] = cn.hi;
    }
    return out;
}

GCApproximation::GCApproximation(JacobiReference ref, std::vector<double> moments, int N)
    : ref_(ref), moments_(std::move(moments)), N_(N),
      c_(gc_coefficients(moments_, ref_, N_)) {}

double GCApproximation::density(double x) const {
    if (x < ref_.a || x > ref_.b) throw std::domain_error("gc density: x outside [a, b]");
    const DD z = (DD(2.0) * DD(x) - DD(ref_.a) - DD(ref_.b)) / (DD(ref_.b) - DD(ref_.a));
    DD sum(0.0);
    for (int n = 0; n <= N_; ++n) {
        DD pn = dd_norm_const(n, DD(ref_.alpha), DD(ref_.beta)) *
                dd_jacobi(n, DD(ref_.alpha), DD(ref_.beta), z);
        sum = sum + DD(c_[n]) * pn;
    }
    return ref_.pdf(x) * sum.hi;
}

double GCApproximation::cdf(double y) const {
    if (y < ref_.a || y > ref_.b) throw std::domain_error("gc cdf: y outside [a, b]");
    const DD alpha(ref_.alpha), beta(ref_.beta);
    const DD z = (DD(2.0) * DD(y) - DD(ref_.a) - DD(ref_.b)) / (DD(ref_.b) - DD(ref_.a));
    // antiderivative of f* p_n is -(b-a)/4 (1-z^2) f*(y) (N_n/n) q_{n-1}^{(alpha+1,beta+1)}(z)
    DD sum(0.0);
    for (int n = 1; n <= N_; ++n) {
        DD w = dd_norm_const(n, alpha, beta) / DD(static_cast<double>(n));
        sum = sum + DD(c_[n]) * w * dd_jacobi(n - 1, alpha + DD(1.0), beta + DD(1.0), z);
    }
    const DD oneMinusZ2 = (DD(1.0) - z) * (DD(1.0) + z);
    const double series = ((DD(ref_.b) - DD(ref_.a)) * DD(0.25) * oneMinusZ2 *
                           DD(ref_.pdf(y)) * sum).hi;
    const double raw = c_[0] * ref_.cdf(y) - series;
    if (raw < 0.0 || raw > 1.0) {
        clampEvents_.fetch_add(1, std::memory_order_relaxed);
        return std::min(1.0, std::max(0.0, raw));
    }
    return raw;
}

GCApproximation::Quantile GCApproximation::quantile(double q) const {
    if (!(q > 0.0 && q < 1.0)) throw std::domain_error("gc quantile: q must be in (0,1)");
    constexpr int kScan = 4096;
    const double a = ref_.a, b = ref_.b;
    double prev = cdf(a);
    int crossings = 0;
    double lo = a, hi = b;
    bool found = false;
    for (int i = 1; i <= kScan; ++i) {
        const double x = a + (b - a) * i / kScan;
        const double f = cdf(x);
        if (prev < q && f >= q) {
            ++crossings;
            if (!found) {
                lo = a + (b - a) * (i - 1) / kScan;
                hi = x;
                found = true;
            }
        }
        prev = f;
    }
    if (!found) {
        // level never reached on the scan grid (fully clamped region)
        return {b, false};
    }
    while (hi - lo > 1e-8) {
        const double mid = 0.5 * (lo + hi);
        (cdf(mid) >= q ? hi : lo) = mid;
    }
    return {0.5 * (lo + hi), crossings == 1};
}

double HankelBasis::evaluate(int n, double x) const {
    if (n < 0 || n >= static_cast<int>(polyCoeffs.size()))
        throw std::invalid_argument("HankelBasis: order out of range");
    const auto& c = polyCoeffs[n];
    double v = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * x + *it;
    return v;
}

namespace {

// determinant by Gaussian elimination with partial pivoting, in double-double
DD dd_det(std::vector<std::vector<DD>> m) {
    const std::size_t n = m.size();
    DD det(1.0);
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(m[r][col].hi) > std::abs(m[piv][col].hi)) piv = r;
        if (m[piv][col].hi == 0.0 && m[piv][col].lo == 0.0) return DD(0.0);
        if (piv != col) {
            std::swap(m[piv], m[col]);
            det = -det;
        }
        det = det * m[col][col];
        for (std::size_t r = col + 1; r < n; ++r) {
            DD f = m[r][col] / m[col][col];
            for (std::size_t k = col; k < n; ++k) m[r][k] = m[r][k] - f * m[col][k];
        }
    }
    return det;
}

}  // namespace

HankelBasis hankel_basis(const std::vector<double>& refMoments) {
    if (refMoments.empty() || refMoments.size() % 2 == 0)
        throw std::invalid_argument("hankel_basis: need moments a_0..a_{2N} (odd count)");
    const int N = static_cast<int>((refMoments.size() - 1) / 2);

    HankelBasis out;
    out.refMoments = refMoments;
    out.hankelDets.resize(N + 2);  // A_{-1}..A_N
    out.hankelDets[0] = 1.0;       // A_{-1}

    std::vector<DD> detsDD(N + 1);
    for (int n = 0; n <= N; ++n) {
        std::vector<std::vector<DD>> h(n + 1, std::vector<DD>(n + 1));
        for (int i = 0; i <= n; ++i)
            for (int j = 0; j <= n; ++j) h[i][j] = DD(refMoments[i + j]);
        detsDD[n] = dd_det(std::move(h));
        out.hankelDets[n + 1] = detsDD[n].hi;
        if (!(detsDD[n].hi > 0))
            throw std::domain_error("hankel_basis: moment sequence not positive definite (A_" +
                                    std::to_string(n) + " <= 0)");
    }

    out.polyCoeffs.resize(N + 1);
    for (int n = 0; n <= N; ++n) {
        const double norm =
            std::sqrt((n == 0 ? 1.0 : detsDD[n - 1].hi) * detsDD[n].hi);
        std::vector<double> coeff(n + 1, 0.0);
        if (n == 0) {
            coeff[0] = 1.0 / norm;  // q_0 = det([1]) = 1 convention
            // for n = 0 the determinant formula gives the bare 1x1 det = 1
        } else {
            for (int i = 0; i <= n; ++i) {
                // cofactor of entry (i, n): remove row i and the last column
                std::vector<std::vector<DD>> minor(n, std::vector<DD>(n));
                int rr = 0;
                for (int r = 0; r <= n; ++r) {
                    if (r == i) continue;
                    for (int cidx = 0; cidx < n; ++cidx)
                        minor[rr][cidx] = DD(refMoments[r + cidx]);
                    ++rr;
                }
                DD cof = dd_det(std::move(minor));
                if ((i + n) % 2 != 0) cof = -cof;
                coeff[i] = (cof / DD(norm)).hi;
            }
        }
        out.polyCoeffs[n] = std::move(coeff);
    }
    return out;
}

}  // namespace phlife
