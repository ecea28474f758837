#include "phlife/mcsim.hpp"

#include "phlife/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

namespace phlife {

namespace {

inline double ann_factor(double r, double dt) {
    // int_0^dt e^{-r u} du
    return std::abs(r) < 1e-12 ? dt * (1.0 - 0.5 * r * dt) : (1.0 - std::exp(-r * dt)) / r;
}

// Per-state prefix tables on the merged model grid.  The chain is simulated
// by inverting cumulative hazards, so path cost scales with the number of
// jumps, not the number of grid intervals.
struct SimTables {
    std::vector<double> nodes;                      // m + 1
    int states = 0;
    std::vector<std::vector<double>> exitRate;      // [s][i]
    std::vector<std::vector<double>> cumHaz;        // [s][i], size m+1
    std::vector<std::vector<double>> rate;          // [s][i]
    std::vector<std::vector<double>> cumRate;       // [s][i], size m+1 (int r)
    std::vector<std::vector<double>> payRate;       // [s][i] (b + theta bs)
    std::vector<std::vector<double>> cumPay;        // [s][i], size m+1 (int e^{-IR} b)
    std::vector<std::vector<double>> diagLumpHaz;   // [s][i] lambda^1_ss
    std::vector<std::vector<double>> cumDiagLump;   // [s][i], size m+1
    bool hasDiagLumps = false;
    bool hasTransitionLumps = false;
    std::vector<char> payRelevant;                  // fixpoint over reachability

    const ProductModel* model = nullptr;
    double theta = 0.0;

    int intervalOf(double t) const {
        auto it = std::upper_bound(nodes.begin(), nodes.end(), t);
        int i = static_cast<int>(it - nodes.begin()) - 1;
        return std::clamp(i, 0, static_cast<int>(nodes.size()) - 2);
    }
    double hazAt(int s, int i, double t) const {
        return cumHaz[s][i] + exitRate[s][i] * (t - nodes[i]);
    }
    double intRateAt(int s, int i, double t) const {
        return cumRate[s][i] + rate[s][i] * (t - nodes[i]);
    }
    double cumPayAt(int s, int i, double t) const {
        return cumPay[s][i] +
               payRate[s][i] * std::exp(-cumRate[s][i]) * ann_factor(rate[s][i], t - nodes[i]);
    }
    double diagLumpAt(int s, int i, double t) const {
        return cumDiagLump[s][i] + diagLumpHaz[s][i] * (t - nodes[i]);
    }
};

SimTables build_tables(const ProductModel& m, double theta) {
    SimTables tb;
    tb.model = &m;
    tb.theta = theta;
    const double t0 = m.horizonStart(), t1 = m.horizonEnd();
    tb.nodes = merge_breakpoints(
        t0, t1,
        {&m.intensity().breakpoints(), &m.rates().breakpoints(),
         &m.payments().rates.breakpoints(), &m.payments().ratesSlope.breakpoints(),
         &m.payments().lumps.breakpoints(), &m.payments().lumpsSlope.breakpoints(),
         &m.payments().lumpIntensity.breakpoints()});
    const int mIv = static_cast<int>(tb.nodes.size()) - 1;
    const int n = m.dim();
    tb.states = n;

    auto alloc = [&](auto& v, int len) { v.assign(n, std::vector<double>(len, 0.0)); };
    alloc(tb.exitRate, mIv);
    alloc(tb.cumHaz, mIv + 1);
    alloc(tb.rate, mIv);
    alloc(tb.cumRate, mIv + 1);
    alloc(tb.payRate, mIv);
    alloc(tb.cumPay, mIv + 1);
    alloc(tb.diagLumpHaz, mIv);
    alloc(tb.cumDiagLump, mIv + 1);

    std::vector<char> anyPay(n, 0);
    std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));

    for (int i = 0; i < mIv; ++i) {
        const double mid = 0.5 * (tb.nodes[i] + tb.nodes[i + 1]);
        const double dt = tb.nodes[i + 1] - tb.nodes[i];
        const Matrix& lam = m.intensity().at(mid);
        const Matrix& l1 = m.payments().lumpIntensity.at(mid);
        const Matrix lump = m.payments().lumps.at(mid) + theta * m.payments().lumpsSlope.at(mid);
        const Vector b = m.payments().rates.at(mid) + theta * m.payments().ratesSlope.at(mid);
        const Vector r = m.rates().at(mid);
        for (int s = 0; s < n; ++s) {
            tb.exitRate[s][i] = -lam(s, s);
            tb.rate[s][i] = r(s);
            tb.payRate[s][i] = b(s);
            tb.diagLumpHaz[s][i] = l1(s, s);
            if (l1(s, s) > 0) tb.hasDiagLumps = true;
            if (std::abs(b(s)) > 0) anyPay[s] = 1;
            if (l1(s, s) > 0 && std::abs(lump(s, s)) > 0) anyPay[s] = 1;
            for (int j = 0; j < n; ++j) {
                if (j != s && lam(s, j) > 0) {
                    reach[s][j] = 1;
                    if (l1(s, j) > 0) {
                        tb.hasTransitionLumps = true;
                        if (std::abs(lump(s, j)) > 0) anyPay[s] = 1;
                    }
                }
            }
            tb.cumHaz[s][i + 1] = tb.cumHaz[s][i] + tb.exitRate[s][i] * dt;
            tb.cumRate[s][i + 1] = tb.cumRate[s][i] + r(s) * dt;
            tb.cumPay[s][i + 1] =
                tb.cumPay[s][i] + b(s) * std::exp(-tb.cumRate[s][i]) * ann_factor(r(s), dt);
            tb.cumDiagLump[s][i + 1] = tb.cumDiagLump[s][i] + l1(s, s) * dt;
        }
    }

    // a state matters when it pays, or can reach one that pays
    tb.payRelevant.assign(n, 0);
    for (int s = 0; s < n; ++s) tb.payRelevant[s] = anyPay[s];
    for (bool changed = true; changed;) {
        changed = false;
        for (int s = 0; s < n; ++s) {
            if (tb.payRelevant[s]) continue;
            for (int j = 0; j < n; ++j)
                if (reach[s][j] && tb.payRelevant[j]) {
                    tb.payRelevant[s] = 1;
                    changed = true;
                    break;
                }
        }
    }
    return tb;
}

double simulate_one(const SimTables& tb, int startState, std::mt19937_64& rng) {
    const auto& nodes = tb.nodes;
    const int mIv = static_cast<int>(nodes.size()) - 1;
    const double tEnd = nodes.back();
    const ProductModel& model = *tb.model;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto expdraw = [&]() { return -std::log1p(-unif(rng)); };

    int s = startState;
    double t = nodes.front();
    int iv = 0;
    double logDisc = 0.0;
    double pv = 0.0;

    while (t < tEnd && tb.payRelevant[s]) {
        // invert the cumulative exit hazard for the next jump time
        const double target = tb.hazAt(s, iv, t) + expdraw();
        int j = mIv;  // interval containing the jump; mIv means "no jump"
        double tj = tEnd;
        bool jumps = false;
        if (tb.cumHaz[s][mIv] >= target) {
            auto& h = tb.cumHaz[s];
            int lo = iv, hi = mIv - 1;
            while (lo < hi) {
                const int mid = (lo + hi) / 2;
                if (h[mid + 1] >= target) hi = mid; else lo = mid + 1;
            }
            j = lo;
            while (j < mIv && tb.exitRate[s][j] <= 0) ++j;
            if (j < mIv) {
                tj = nodes[j] + (target - h[j]) / tb.exitRate[s][j];
                if (tj <= tEnd) jumps = true; else tj = tEnd;
            }
        }

        // continuous payments over [t, tj], discounted to time 0
        const int ivEnd = jumps ? j : mIv - 1;
        const double discBase = std::exp(logDisc + tb.intRateAt(s, iv, t));
        pv += discBase * (tb.cumPayAt(s, ivEnd, tj) - tb.cumPayAt(s, iv, t));

        // Poisson sojourn lumps
        if (tb.hasDiagLumps && tb.diagLumpHaz[s][iv] + tb.cumDiagLump[s][ivEnd] -
                                       tb.cumDiagLump[s][iv] >
                                   0) {
            double tl = t;
            int il = iv;
            for (;;) {
                const double lumpTarget = tb.diagLumpAt(s, il, tl) + expdraw();
                if (tb.diagLumpAt(s, ivEnd, tj) < lumpTarget) break;
                auto& hl = tb.cumDiagLump[s];
                int lo = il, hi = ivEnd;
                while (lo < hi) {
                    const int mid = (lo + hi) / 2;
                    if (hl[mid + 1] >= lumpTarget) hi = mid; else lo = mid + 1;
                }
                int jl = lo;
                while (jl <= ivEnd && tb.diagLumpHaz[s][jl] <= 0) ++jl;
                if (jl > ivEnd) break;
                tl = nodes[jl] + (lumpTarget - hl[jl]) / tb.diagLumpHaz[s][jl];
                if (tl > tj) break;
                il = jl;
                const double midT = tl;
                const Matrix lump = model.payments().lumps.at(midT) +
                                    tb.theta * model.payments().lumpsSlope.at(midT);
                pv += std::exp(logDisc - (tb.intRateAt(s, il, tl) - tb.intRateAt(s, iv, t))) *
                      lump(s, s);
            }
        }

        logDisc -= tb.intRateAt(s, ivEnd, tj) - tb.intRateAt(s, iv, t);
        if (!jumps) break;

        // destination and optional transition lump
        const double mid = tj;
        const Matrix& lam = model.intensity().at(mid);
        double u = unif(rng) * tb.exitRate[s][j];
        int dest = -1;
        for (int c = 0; c < tb.states; ++c) {
            if (c == s) continue;
            u -= lam(s, c);
            if (u <= 0) {
                dest = c;
                break;
            }
        }
        if (dest < 0) {
            for (int c = tb.states - 1; c >= 0; --c)
                if (c != s && lam(s, c) > 0) {
                    dest = c;
                    break;
                }
            if (dest < 0) break;  // numerically isolated state
        }
        if (tb.hasTransitionLumps) {
            const Matrix& l1 = model.payments().lumpIntensity.at(mid);
            if (l1(s, dest) > 0) {
                const double trigger = l1(s, dest) / lam(s, dest);
                if (unif(rng) < trigger) {
                    const Matrix lump = model.payments().lumps.at(mid) +
                                        tb.theta * model.payments().lumpsSlope.at(mid);
                    pv += std::exp(logDisc) * lump(s, dest);
                }
            }
        }
        s = dest;
        t = tj;
        iv = j;
    }
    return pv;
}

}  // namespace

namespace {

PVSample simulate_dispatch(const ProductModel& m, const RowVector* startDist, int startState,
                           const SimulationConfig& config, double theta) {
    if (config.paths < 1) throw std::invalid_argument("simulate_pv: need at least one path");
    const SimTables tb = build_tables(m, theta);

    PVSample out;
    out.values.assign(config.paths, 0.0);
    const int workers = std::max(1, config.workers);

    auto worker = [&](int w) {
        std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(w)));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const long lo = config.paths * w / workers;
        const long hi = config.paths * (w + 1) / workers;
        for (long k = lo; k < hi; ++k) {
            int s0 = startState;
            if (startDist) {
                double u = unif(rng);
                s0 = 0;
                for (int i = 0; i < m.dim(); ++i) {
                    u -= (*startDist)(i);
                    if (u <= 0) {
                        s0 = i;
                        break;
                    }
                    if (i == m.dim() - 1) s0 = i;
                }
            }
            out.values[k] = simulate_one(tb, s0, rng);
        }
    };
    if (workers == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker, w);
        for (auto& th : pool) th.join();
    }

    double sum = 0.0;
    for (double v : out.values) sum += v;
    out.mean = sum / config.paths;
    double ss = 0.0;
    for (double v : out.values) ss += (v - out.mean) * (v - out.mean);
    out.variance = config.paths > 1 ? ss / (config.paths - 1) : 0.0;
    return out;
}

}  // namespace

PVSample simulate_pv(const ProductModel& m, int startState, const SimulationConfig& config,
                     double theta) {
    if (startState < 0 || startState >= m.dim())
        throw std::invalid_argument("simulate_pv: start state out of range");
    return simulate_dispatch(m, nullptr, startState, config, theta);
}

PVSample simulate_pv(const ProductModel& m, const RowVector& startDist,
                     const SimulationConfig& config, double theta) {
    if (startDist.size() != m.dim())
        throw std::invalid_argument("simulate_pv: start distribution dimension mismatch");
    // degenerate distributions take the fast path and the same RNG stream as
    // the fixed-state variant
    for (int i = 0; i < m.dim(); ++i)
        if (startDist(i) == 1.0) return simulate_dispatch(m, nullptr, i, config, theta);
    return simulate_dispatch(m, &startDist, 0, config, theta);
}

std::vector<double> empirical_quantiles(const PVSample& sample, const std::vector<double>& qs) {
    if (sample.values.empty()) throw std::invalid_argument("empirical_quantiles: empty sample");
    std::vector<double> sorted = sample.values;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> out;
    out.reserve(qs.size());
    const auto n = static_cast<long>(sorted.size());
    for (double q : qs) {
        if (!(q > 0.0 && q < 1.0)) throw std::domain_error("empirical_quantiles: q not in (0,1)");
        long idx = static_cast<long>(std::ceil(q * n));
        idx = std::clamp(idx, 1L, n);
        out.push_back(sorted[idx - 1]);
    }
    return out;
}

}  // namespace phlife
