#include "phlife/phasetype.hpp"

#include <cmath>
#include <limits>

namespace phlife {

PhaseTypeDist::PhaseTypeDist(RowVector pi, PiecewiseMatrixFunction subIntensity,
                             std::optional<Vector> pinnedExit)
    : pi_(std::move(pi)), T_(std::move(subIntensity)), pinnedExit_(std::move(pinnedExit)) {
    if (T_.rows() != T_.cols()) throw std::invalid_argument("PhaseTypeDist: T not square");
    if (pi_.size() != T_.rows())
        throw std::invalid_argument("PhaseTypeDist: pi/T dimension mismatch");
    for (Eigen::Index i = 0; i < pi_.size(); ++i)
        if (pi_(i) < 0) throw std::invalid_argument("PhaseTypeDist: negative initial probability");
    if (std::abs(pi_.sum() - 1.0) > 1e-12)
        throw std::invalid_argument("PhaseTypeDist: initial probabilities must sum to 1");
    for (const auto& m : T_.values()) {
        validate_subintensity(m);
        Vector exit = -m.rowwise().sum();
        for (Eigen::Index i = 0; i < exit.size(); ++i)
            if (exit(i) < -1e-12)
                throw std::invalid_argument("PhaseTypeDist: negative exit rate");
    }
    if (pinnedExit_) {
        if (!T_.isConstant() || pinnedExit_->size() != T_.rows())
            throw std::invalid_argument("PhaseTypeDist: pinned exit needs matching constant T");
        const Vector derived = -T_.values()[0].rowwise().sum();
        if ((derived - *pinnedExit_).cwiseAbs().maxCoeff() > 1e-10)
            throw std::invalid_argument("PhaseTypeDist: pinned exit inconsistent with T");
    }
}

Vector PhaseTypeDist::exitRates(double x) const {
    if (pinnedExit_) return *pinnedExit_;
    return -T_.at(x).rowwise().sum();
}

double PhaseTypeDist::survival(double x) const {
    if (x < 0) throw std::domain_error("survival: x < 0");
    if (x == 0) return 1.0;
    const double s = pi_ * prod_integral(T_, 0.0, x) * Vector::Ones(order());
    return std::min(1.0, std::max(0.0, s));
}

double PhaseTypeDist::density(double x) const {
    if (x < 0) throw std::domain_error("density: x < 0");
    const double f = pi_ * prod_integral(T_, 0.0, x) * exitRates(x);
    return std::max(0.0, f);
}

std::optional<double> PhaseTypeDist::hazard(double x) const {
    const RowVector occ = pi_ * prod_integral(T_, 0.0, x);
    const double s = occ * Vector::Ones(order());
    if (!(s > 1e-300)) return std::nullopt;
    const double f = occ * exitRates(x);
    return f / s;
}

double PhaseTypeDist::mean() const {
    if (!T_.isConstant()) throw std::invalid_argument("mean: requires constant T");
    const Matrix& t = T_.values()[0];
    Vector ones = Vector::Ones(order());
    Vector sol = (-t).partialPivLu().solve(ones);
    if (!sol.allFinite()) throw std::runtime_error("mean: singular sub-intensity");
    return pi_ * sol;
}

RowVector PhaseTypeDist::renewalStationary() const {
    if (!T_.isConstant()) throw std::invalid_argument("renewalStationary: requires constant T");
    const Matrix& t = T_.values()[0];
    RowVector num = (-t).transpose().partialPivLu().solve(pi_.transpose()).transpose();
    if (!num.allFinite()) throw std::runtime_error("renewalStationary: singular sub-intensity");
    return num / num.sum();
}

AbsorptionSample PhaseTypeDist::sample(std::mt19937_64& rng, bool withPath) const {
    const int p = order();
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    auto pick = [&](const double* weights, int n, double total) {
        double u = unif(rng) * total;
        for (int j = 0; j < n - 1; ++j) {
            u -= weights[j];
            if (u <= 0) return j;
        }
        return n - 1;
    };

    int state;
    {
        std::vector<double> w(pi_.data(), pi_.data() + p);
        state = pick(w.data(), p, 1.0);
    }

    const auto& bps = T_.breakpoints();
    const auto& vals = T_.values();
    double t = 0.0;
    std::size_t interval = 0;

    AbsorptionSample out;
    double sojourn = 0.0;
    if (withPath) out.states.push_back(state);

    for (long guard = 0; guard < 100000000L; ++guard) {
        const Matrix& cur = T_.isConstant() ? vals[0] : vals[std::min(interval, vals.size() - 1)];
        const double q = -cur(state, state);
        const double intervalEnd = (T_.isConstant() || interval + 1 >= bps.size())
                                       ? std::numeric_limits<double>::infinity()
                                       : bps[interval + 1];
        if (q <= 1e-300) {
            if (std::isinf(intervalEnd))
                throw std::runtime_error("sample: chain cannot be absorbed from state " +
                                         std::to_string(state));
            sojourn += intervalEnd - t;
            t = intervalEnd;
            ++interval;
            continue;
        }
        // exponential clock; re-drawn at every breakpoint (memorylessness)
        const double wait = -std::log1p(-unif(rng)) / q;
        if (t + wait >= intervalEnd) {
            sojourn += intervalEnd - t;
            t = intervalEnd;
            ++interval;
            continue;
        }
        t += wait;
        sojourn += wait;
        // destination: transient j with rate T_ij, absorption with exit rate
        std::vector<double> w(p + 1, 0.0);
        for (int j = 0; j < p; ++j)
            if (j != state) w[j] = cur(state, j);
        double exit = q;
        for (int j = 0; j < p; ++j)
            if (j != state) exit -= w[j];
        w[p] = std::max(0.0, exit);
        const int dest = pick(w.data(), p + 1, q);
        if (withPath) out.sojourns.push_back(sojourn);
        if (dest == p) {
            out.absorptionTime = t;
            return out;
        }
        state = dest;
        sojourn = 0.0;
        if (withPath) out.states.push_back(state);
    }
    throw std::runtime_error("sample: absorption did not occur (guard tripped)");
}

AbsorptionSample PhaseTypeDist::sample(std::uint64_t seed, bool withPath) const {
    std::mt19937_64 rng(seed);
    return sample(rng, withPath);
}

}  // namespace phlife
