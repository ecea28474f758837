#include "phlife/gramcharlier.hpp"
#include "phlife/io.hpp"
#include "phlife/mcsim.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>

using namespace phlife;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitInput = 2;
constexpr int kExitComputation = 3;

std::vector<double> parse_maturities(const std::string& spec) {
    std::vector<double> out;
    const auto colon = spec.find(':');
    if (colon != std::string::npos) {
        const double lo = parse_double(spec.substr(0, colon));
        std::string rest = spec.substr(colon + 1);
        double step = 1.0;
        const auto colon2 = rest.find(':');
        if (colon2 != std::string::npos) {
            step = parse_double(rest.substr(colon2 + 1));
            rest = rest.substr(0, colon2);
        }
        const double hi = parse_double(rest);
        if (!(step > 0) || hi < lo) throw InputError("bad maturity range '" + spec + "'");
        for (double t = lo; t <= hi + 1e-12; t += step) out.push_back(t);
        return out;
    }
    std::size_t pos = 0;
    while (pos <= spec.size()) {
        const auto comma = spec.find(',', pos);
        const std::string cell =
            spec.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!cell.empty()) out.push_back(parse_double(cell));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw InputError("no maturities in '" + spec + "'");
    return out;
}

std::vector<double> split_doubles(const std::string& spec) { return parse_maturities(spec); }

RunManifest make_manifest(const std::string& subcommand, const std::vector<std::string>& args,
                          std::vector<std::string> inputs, std::vector<std::string> outputs,
                          std::uint64_t seed) {
    RunManifest m;
    m.tool = "phlife";
    m.version = kVersion;
    m.subcommand = subcommand;
    m.arguments = args;
    m.inputs = std::move(inputs);
    m.outputs = std::move(outputs);
    m.seed = seed;
    return m;
}

struct ValueOptions {
    std::string modelPath;
    std::string productPath;
    int startBio = 0;
    bool premiumSolve = false;
    double theta = 0.0;
    bool thetaGiven = false;
    int moments = 0;
    std::string gcSpec;
    std::string simulateSpec;
    std::string outPath = "results.json";
    std::string tablesPrefix;
    int gcTablePoints = 400;
};

int run_value(const ValueOptions& opt, const std::vector<std::string>& rawArgs) {
    ShortRateModel rateModel = read_model_json(opt.modelPath);
    ProductSpecFile product = read_product_json(opt.productPath);
    if (opt.startBio < 0 ||
        opt.startBio >= static_cast<int>(product.stateNames.size()))
        throw InputError("start biometric state out of range");

    ProductModel model = build_product_model(product.intensity, product.payments, rateModel);
    const int n = model.dim();
    const RowVector start =
        kron(Matrix(RowVector::Unit(product.stateNames.size(), opt.startBio).transpose()),
             Matrix(rateModel.initialDistribution().transpose()))
            .col(0)
            .transpose();

    json out;
    out["model"] = opt.modelPath;
    out["product"] = opt.productPath;
    out["states"] = n;
    out["start_bio"] = opt.startBio;

    double theta = opt.thetaGiven ? opt.theta : 0.0;
    if (opt.premiumSolve) {
        auto solve = equivalence_premium(model, start);
        theta = solve.theta;
        out["premium"] = {{"theta", theta},
                          {"iterations", solve.iterations},
                          {"residuals", solve.residuals}};
    }
    out["theta"] = theta;

    // state-wise reserve at time 0 plus a per-state table
    const double T = model.horizonEnd();
    auto thiele = thiele_solve(model, T, {0.0}, theta);
    out["reserve"] = {{"start", double(start * reserve_matrix(model, 0.0, T, theta) *
                                      Vector::Ones(n))},
                      {"statewise_t0", std::vector<double>(thiele[0].data(),
                                                           thiele[0].data() + n)}};

    if (!opt.tablesPrefix.empty()) {
        std::vector<double> grid;
        const int reservePoints = 280;
        for (int i = 0; i <= reservePoints; ++i) grid.push_back(T * i / reservePoints);
        auto curve = thiele_solve(model, T, grid, theta);
        std::ofstream csv(opt.tablesPrefix + "reserves.csv");
        if (!csv) throw InputError("cannot write reserve table");
        csv << "t";
        for (int j = 0; j < n; ++j) csv << ",state" << j;
        csv << "\n";
        for (int i = 0; i <= reservePoints; ++i) {
            csv << format_double(grid[i]);
            for (int j = 0; j < n; ++j) csv << "," << format_double(curve[i](j));
            csv << "\n";
        }
    }

    std::vector<double> moments;
    if (opt.moments > 0) {
        moments = raw_moments_of_pv(model, start, opt.moments, theta);
        out["raw_moments"] = moments;
    }

    if (!opt.gcSpec.empty()) {
        auto parts = split_doubles(opt.gcSpec);
        if (parts.size() != 5) throw InputError("--gc expects alpha,beta,a,b,N");
        JacobiReference ref{parts[0], parts[1], parts[2], parts[3]};
        const int order = static_cast<int>(parts[4]);
        if (static_cast<int>(moments.size()) < order + 1)
            moments = raw_moments_of_pv(model, start, order, theta);
        GCApproximation approx(ref, moments, order);
        json gc;
        gc["alpha"] = ref.alpha;
        gc["beta"] = ref.beta;
        gc["a"] = ref.a;
        gc["b"] = ref.b;
        gc["order"] = order;
        gc["coefficients"] = approx.coefficients();
        json quantiles = json::object();
        json flags = json::object();
        for (double q : {0.95, 0.97, 0.99, 0.995}) {
            auto res = approx.quantile(q);
            quantiles[format_double(q)] = res.value;
            flags[format_double(q)] = res.monotone;
        }
        gc["quantiles"] = quantiles;
        gc["quantile_monotone"] = flags;
        gc["cdf_clamp_events"] = approx.clampEvents();
        out["gram_charlier"] = gc;

        if (!opt.tablesPrefix.empty()) {
            std::ofstream csv(opt.tablesPrefix + "gc_density.csv");
            if (!csv) throw InputError("cannot write GC table");
            csv << "x,density,cdf\n";
            for (int i = 0; i <= opt.gcTablePoints; ++i) {
                const double x = ref.a + (ref.b - ref.a) * i / opt.gcTablePoints;
                csv << format_double(x) << "," << format_double(approx.density(x)) << ","
                    << format_double(approx.cdf(x)) << "\n";
            }
        }
    }

    if (!opt.simulateSpec.empty()) {
        auto parts = split_doubles(opt.simulateSpec);
        if (parts.empty() || parts.size() > 3)
            throw InputError("--simulate expects paths,seed[,workers]");
        SimulationConfig cfg;
        cfg.paths = static_cast<long>(parts[0]);
        cfg.seed = parts.size() > 1 ? static_cast<std::uint64_t>(parts[1]) : 1;
        cfg.workers = parts.size() > 2 ? static_cast<int>(parts[2]) : 1;
        auto sample = simulate_pv(model, start, cfg, theta);
        json sim;
        sim["paths"] = cfg.paths;
        sim["seed"] = cfg.seed;
        sim["workers"] = cfg.workers;
        sim["mean"] = sample.mean;
        sim["variance"] = sample.variance;
        const double se = std::sqrt(sample.variance / cfg.paths);
        sim["se_mean"] = se;
        json quantiles = json::object();
        for (double q : {0.95, 0.97, 0.99, 0.995})
            quantiles[format_double(q)] = empirical_quantiles(sample, {q})[0];
        sim["quantiles"] = quantiles;
        if (!moments.empty()) {
            sim["mean_vs_analytic"] = {{"analytic", moments[1]},
                                       {"difference", sample.mean - moments[1]},
                                       {"within_3se", std::abs(sample.mean - moments[1]) <= 3 * se}};
        }
        out["simulation"] = sim;
    }

    std::ofstream os(opt.outPath);
    if (!os) throw InputError("cannot write " + opt.outPath);
    os << out.dump(2) << "\n";
    std::cout << "wrote " << opt.outPath << "\n";
    if (opt.premiumSolve) std::cout << "theta = " << format_double(theta) << "\n";

    write_manifest(opt.outPath + ".manifest.json",
                   make_manifest("value", rawArgs, {opt.modelPath, opt.productPath},
                                 {opt.outPath}, 0));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Markovian interest-rate calibration and multi-state life valuation"};
    app.require_subcommand(1);
    std::vector<std::string> rawArgs(argv + 1, argv + argc);

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "fit a Markovian rate model to a bond curve");
    std::string calCurve, calRates = "auto", calStructure = "general";
    std::string calOut = "model.json", calReport;
    CalibrateConfig calCfg;
    cal->add_option("curve", calCurve, "curve CSV (maturity,price[,forward])")->required();
    cal->add_option("--p", calCfg.fit.dimension, "number of phases")->required();
    cal->add_option("--structure", calStructure, "general|coxian");
    cal->add_option("--rates", calRates, "auto (unrestricted) or comma list of state rates");
    cal->add_option("--restarts", calCfg.fit.restarts, "random restarts");
    cal->add_option("--seed", calCfg.fit.seed, "rng seed");
    cal->add_option("--max-iters", calCfg.fit.maxIters, "EM iteration cap");
    cal->add_option("--tol", calCfg.fit.tol, "EM |delta loglik| tolerance");
    cal->add_option("--out", calOut, "output model file");
    cal->add_option("--report", calReport, "fit report JSON");

    // price
    auto* price = app.add_subcommand("price", "zero-coupon prices from a model file");
    std::string priceModel, priceMats = "1:30", priceOut;
    int priceState = -1;
    price->add_option("model", priceModel)->required();
    price->add_option("--maturities", priceMats, "list 1,2,... or range a:b[:step]");
    price->add_option("--state", priceState, "conditioning rate state (default: initial law)");
    price->add_option("--out", priceOut, "write maturity,price CSV here");

    // yield
    auto* yield = app.add_subcommand("yield", "continuously compounded yields and forwards");
    std::string yieldModel, yieldMats = "1:30", yieldOut;
    yield->add_option("model", yieldModel)->required();
    yield->add_option("--maturities", yieldMats);
    yield->add_option("--out", yieldOut, "write maturity,yield,forward CSV here");

    // g2pp
    auto* g2 = app.add_subcommand("g2pp", "two-factor Vasicek curve generator");
    G2ppParams g2p;
    std::string g2Mats = "1:120", g2Out = "g2pp_curve.csv";
    g2->add_option("--r0", g2p.r0)->required();
    g2->add_option("--k1", g2p.k1)->required();
    g2->add_option("--k2", g2p.k2)->required();
    g2->add_option("--sigma1", g2p.sigma1)->required();
    g2->add_option("--sigma2", g2p.sigma2)->required();
    g2->add_option("--theta", g2p.theta)->required();
    g2->add_option("--sigma12", g2p.sigma12)->required();
    g2->add_option("--maturities", g2Mats);
    g2->add_option("--out", g2Out);

    // value
    auto* val = app.add_subcommand("value", "reserves, moments, premium, GC and simulation");
    ValueOptions vopt;
    val->add_option("model", vopt.modelPath)->required();
    val->add_option("product", vopt.productPath)->required();
    val->add_option("--start-bio", vopt.startBio, "initial biometric state index");
    val->add_flag("--premium-solve", vopt.premiumSolve, "solve the equivalence premium");
    auto* thetaOpt = val->add_option("--theta", vopt.theta, "fixed premium parameter");
    val->add_option("--moments", vopt.moments, "raw moment order");
    val->add_option("--gc", vopt.gcSpec, "alpha,beta,a,b,N");
    val->add_option("--simulate", vopt.simulateSpec, "paths,seed[,workers]");
    val->add_option("--out", vopt.outPath, "results JSON");
    val->add_option("--tables-prefix", vopt.tablesPrefix, "prefix for CSV tables");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Monte Carlo present values");
    std::string simModel, simProduct, simDump, simHist;
    long simPaths = 100000;
    std::uint64_t simSeed = 1;
    int simWorkers = 1, simBins = 60, simStartBio = 0;
    double simTheta = 0.0;
    sim->add_option("model", simModel)->required();
    sim->add_option("product", simProduct)->required();
    sim->add_option("--paths", simPaths);
    sim->add_option("--seed", simSeed);
    sim->add_option("--workers", simWorkers);
    sim->add_option("--theta", simTheta);
    sim->add_option("--start-bio", simStartBio);
    sim->add_option("--dump", simDump, "raw PV dump (length-prefixed little-endian doubles)");
    sim->add_option("--histogram", simHist, "histogram CSV");
    sim->add_option("--bins", simBins);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitInput;
    }

    try {
        if (cal->parsed()) {
            if (calStructure != "general" && calStructure != "coxian")
                throw InputError("--structure must be general or coxian");
            calCfg.fit.structure =
                calStructure == "coxian" ? PhStructure::Coxian : PhStructure::General;
            BondCurve curve = read_curve_csv(calCurve);
            if (calRates == "auto") {
                calCfg.mode = RateMode::Unrestricted;
            } else {
                calCfg.mode = RateMode::Restricted;
                auto rates = split_doubles(calRates);
                calCfg.rates = Eigen::Map<Vector>(rates.data(), rates.size());
            }
            auto result = calibrate(curve, calCfg);
            write_model_json(calOut, result.model);
            if (!calReport.empty()) write_fit_report(calReport, result, calCfg);
            std::vector<std::string> outputs{calOut};
            if (!calReport.empty()) outputs.push_back(calReport);
            write_manifest(calOut + ".manifest.json",
                           make_manifest("calibrate", rawArgs, {calCurve}, outputs,
                                         calCfg.fit.seed));
            std::cout << "rho = " << format_double(result.rho) << "\n"
                      << "loglik = " << format_double(result.loglik) << "\n"
                      << "max price error = " << format_double(result.maxPriceError) << "\n";
            for (int s : result.weakStates)
                std::cout << "note: state " << s << " carries negligible occupation mass\n";
            return 0;
        }

        if (price->parsed() || yield->parsed()) {
            const bool isPrice = price->parsed();
            const std::string modelPath = isPrice ? priceModel : yieldModel;
            ShortRateModel model = read_model_json(modelPath);
            auto mats = parse_maturities(isPrice ? priceMats : yieldMats);
            std::ostringstream csv;
            csv << (isPrice ? "maturity,price" : "maturity,yield,forward") << "\n";
            for (double T : mats) {
                if (isPrice) {
                    const double p = priceState >= 0 ? bond_price(model, 0.0, T, priceState)
                                                     : bond_price(model, 0.0, T);
                    csv << format_double(T) << "," << format_double(p) << "\n";
                } else {
                    const double p = bond_price(model, 0.0, T);
                    const double y = -std::log(p) / T;
                    auto f = forward_rate(model, 0.0, T);
                    csv << format_double(T) << "," << format_double(y) << ","
                        << (f ? format_double(*f) : std::string("nan")) << "\n";
                }
            }
            const std::string& outPath = isPrice ? priceOut : yieldOut;
            if (outPath.empty()) {
                std::cout << csv.str();
            } else {
                std::ofstream os(outPath);
                if (!os) throw InputError("cannot write " + outPath);
                os << csv.str();
                write_manifest(outPath + ".manifest.json",
                               make_manifest(isPrice ? "price" : "yield", rawArgs, {modelPath},
                                             {outPath}, 0));
            }
            return 0;
        }

        if (g2->parsed()) {
            auto curve = g2pp_prices(g2p, parse_maturities(g2Mats));
            write_curve_csv(g2Out, curve);
            write_manifest(g2Out + ".manifest.json",
                           make_manifest("g2pp", rawArgs, {}, {g2Out}, 0));
            std::cout << "rho = " << format_double(rho_from_prices(curve)) << "\n"
                      << "wrote " << g2Out << "\n";
            return 0;
        }

        if (val->parsed()) {
            vopt.thetaGiven = thetaOpt->count() > 0;
            return run_value(vopt, rawArgs);
        }

        if (sim->parsed()) {
            ShortRateModel rateModel = read_model_json(simModel);
            ProductSpecFile product = read_product_json(simProduct);
            ProductModel model = build_product_model(product.intensity, product.payments,
                                                     rateModel);
            if (simStartBio < 0 ||
                simStartBio >= static_cast<int>(product.stateNames.size()))
                throw InputError("start biometric state out of range");
            const RowVector start =
                kron(Matrix(RowVector::Unit(product.stateNames.size(), simStartBio).transpose()),
                     Matrix(rateModel.initialDistribution().transpose()))
                    .col(0)
                    .transpose();
            SimulationConfig cfg;
            cfg.paths = simPaths;
            cfg.seed = simSeed;
            cfg.workers = simWorkers;
            auto sample = simulate_pv(model, start, cfg, simTheta);
            std::cout << "mean = " << format_double(sample.mean) << "\n"
                      << "variance = " << format_double(sample.variance) << "\n";
            auto qs = empirical_quantiles(sample, {0.95, 0.97, 0.99, 0.995});
            std::cout << "quantiles 95/97/99/99.5% = " << format_double(qs[0]) << " "
                      << format_double(qs[1]) << " " << format_double(qs[2]) << " "
                      << format_double(qs[3]) << "\n";
            std::vector<std::string> outputs;
            if (!simDump.empty()) {
                std::ofstream os(simDump, std::ios::binary);
                if (!os) throw InputError("cannot write " + simDump);
                const std::uint64_t count = sample.values.size();
                os.write(reinterpret_cast<const char*>(&count), sizeof(count));
                os.write(reinterpret_cast<const char*>(sample.values.data()),
                         static_cast<std::streamsize>(count * sizeof(double)));
                outputs.push_back(simDump);
            }
            if (!simHist.empty()) {
                const auto [mn, mx] =
                    std::minmax_element(sample.values.begin(), sample.values.end());
                const double lo = *mn, hi = std::max(*mx, lo + 1e-12);
                std::vector<long> counts(simBins, 0);
                for (double v : sample.values) {
                    int b = static_cast<int>((v - lo) / (hi - lo) * simBins);
                    counts[std::min(b, simBins - 1)]++;
                }
                std::ofstream os(simHist);
                if (!os) throw InputError("cannot write " + simHist);
                os << "bin_left,bin_right,count\n";
                for (int b = 0; b < simBins; ++b)
                    os << format_double(lo + (hi - lo) * b / simBins) << ","
                       << format_double(lo + (hi - lo) * (b + 1) / simBins) << "," << counts[b]
                       << "\n";
                outputs.push_back(simHist);
            }
            const std::string manifestBase = !outputs.empty() ? outputs.front() : "simulate";
            write_manifest(manifestBase + ".manifest.json",
                           make_manifest("simulate", rawArgs, {simModel, simProduct}, outputs,
                                         simSeed));
            return 0;
        }
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::domain_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const FitError& e) {
        std::cerr << "fit failed: " << e.what() << "\n";
        return kExitComputation;
    } catch (const std::exception& e) {
        std::cerr << "computation failed: " << e.what() << "\n";
        return kExitComputation;
    }
    return 0;
}
