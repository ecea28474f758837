#include "phlife/io.hpp"

#include <json.hpp>

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace phlife {

using nlohmann::json;

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first < last && (*first == ' ' || *first == '\t')) ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{}) throw InputError("not a number: '" + s + "'");
    for (; ptr < last; ++ptr)
        if (*ptr != ' ' && *ptr != '\t' && *ptr != '\r')
            throw InputError("trailing characters in number: '" + s + "'");
    return v;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
    return j;
}

void save_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << text;
    if (!out) throw InputError("write failed for " + path);
}

}  // namespace

BondCurve read_curve_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw InputError(path + ":1: empty file");
    auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "maturity" || header[1] != "price")
        throw InputError(path + ":1: expected header maturity,price[,forward]");
    const bool hasForward = header.size() >= 3 && header[2] == "forward";

    BondCurve curve;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() < 2 || (hasForward && cells.size() < 3))
            throw InputError(path + ":" + std::to_string(lineno) + ": too few columns");
        try {
            curve.maturities.push_back(parse_double(cells[0]));
            curve.prices.push_back(parse_double(cells[1]));
            if (hasForward) curve.forwards.push_back(parse_double(cells[2]));
        } catch (const InputError& e) {
            throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    try {
        curve.validate();
    } catch (const std::exception& e) {
        throw InputError(path + ": " + e.what());
    }
    return curve;
}

void write_curve_csv(const std::string& path, const BondCurve& curve) {
    std::ostringstream out;
    out << (curve.forwards.empty() ? "maturity,price" : "maturity,price,forward") << "\n";
    for (std::size_t i = 0; i < curve.maturities.size(); ++i) {
        out << format_double(curve.maturities[i]) << "," << format_double(curve.prices[i]);
        if (!curve.forwards.empty()) out << "," << format_double(curve.forwards[i]);
        out << "\n";
    }
    save_text(path, out.str());
}

namespace {

PiecewiseVectorFunction vector_from_json(const json& j, int p, const std::string& what,
                                         const std::vector<double>& breakpoints) {
    auto toVec = [&](const json& arr) {
        if (!arr.is_array() || static_cast<int>(arr.size()) != p)
            throw InputError(what + ": expected an array of length " + std::to_string(p));
        Vector v(p);
        for (int i = 0; i < p; ++i) v(i) = arr[i].get<double>();
        return v;
    };
    if (!j.is_array() || j.empty()) throw InputError(what + ": missing");
    if (j[0].is_array()) {
        if (breakpoints.empty()) throw InputError(what + ": per-interval values need breakpoints");
        std::vector<Vector> vals;
        for (const auto& item : j) vals.push_back(toVec(item));
        return PiecewiseVectorFunction(breakpoints, std::move(vals));
    }
    return PiecewiseVectorFunction::constant(toVec(j));
}

Matrix matrix_from_flat(const json& arr, int p, const std::string& what) {
    if (!arr.is_array() || static_cast<int>(arr.size()) != p * p)
        throw InputError(what + ": expected a row-major array of length " + std::to_string(p * p));
    Matrix m(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) m(i, j) = arr[i * p + j].get<double>();
    return m;
}

}  // namespace

ShortRateModel read_model_json(const std::string& path) {
    json j = load_json(path);
    try {
        const int p = j.at("p").get<int>();
        const double rho = j.value("rho", 0.0);
        RowVector pi(p);
        {
            const auto& arr = j.at("pi");
            if (!arr.is_array() || static_cast<int>(arr.size()) != p)
                throw InputError("pi: expected length " + std::to_string(p));
            for (int i = 0; i < p; ++i) pi(i) = arr[i].get<double>();
        }
        std::vector<double> breakpoints;
        if (j.contains("breakpoints"))
            breakpoints = j.at("breakpoints").get<std::vector<double>>();

        PiecewiseMatrixFunction intensity = [&] {
            const auto& arr = j.at("intensity");
            if (!arr.is_array() || arr.empty()) throw InputError("intensity: missing");
            if (arr[0].is_array()) {
                if (breakpoints.empty())
                    throw InputError("intensity: per-interval values need breakpoints");
                std::vector<Matrix> vals;
                for (const auto& item : arr) vals.push_back(matrix_from_flat(item, p, "intensity"));
                return PiecewiseMatrixFunction(breakpoints, std::move(vals));
            }
            return PiecewiseMatrixFunction::constant(matrix_from_flat(arr, p, "intensity"));
        }();
        PiecewiseVectorFunction rates = vector_from_json(j.at("rates"), p, "rates", breakpoints);
        return ShortRateModel(std::move(intensity), std::move(rates), std::move(pi), rho);
    } catch (const json::exception& e) {
        throw InputError(path + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw InputError(path + ": " + e.what());
    }
}

void write_model_json(const std::string& path, const ShortRateModel& model) {
    json j;
    const int p = model.dim();
    j["p"] = p;
    j["rho"] = model.rho();
    j["pi"] = std::vector<double>(model.initialDistribution().data(),
                                  model.initialDistribution().data() + p);
    auto flat = [p](const Matrix& m) {
        std::vector<double> out(p * p);
        for (int i = 0; i < p; ++i)
            for (int k = 0; k < p; ++k) out[i * p + k] = m(i, k);
        return out;
    };
    if (model.intensity().isConstant() && model.rates().isConstant()) {
        j["intensity"] = flat(model.intensity().values()[0]);
        const Vector& r = model.rates().values()[0];
        j["rates"] = std::vector<double>(r.data(), r.data() + p);
    } else {
        j["breakpoints"] = model.intensity().breakpoints();
        json mats = json::array(), rts = json::array();
        for (const auto& m : model.intensity().values()) mats.push_back(flat(m));
        for (std::size_t i = 0; i + 1 < model.intensity().breakpoints().size(); ++i) {
            const double mid = 0.5 * (model.intensity().breakpoints()[i] +
                                      model.intensity().breakpoints()[i + 1]);
            const Vector& r = model.rates().at(mid);
            rts.push_back(std::vector<double>(r.data(), r.data() + p));
        }
        j["intensity"] = std::move(mats);
        j["rates"] = std::move(rts);
    }
    save_text(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// expression parser

namespace {

struct Parser {
    const std::string& src;
    std::size_t pos = 0;

    explicit Parser(const std::string& s) : src(s) {}

    void skip() {
        while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
    }
    bool eat(char c) {
        skip();
        if (pos < src.size() && src[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
    bool eat(const char* s) {
        skip();
        const std::size_t len = std::strlen(s);
        if (src.compare(pos, len, s) == 0) {
            pos += len;
            return true;
        }
        return false;
    }
    [[noreturn]] void fail(const std::string& msg) const {
        throw InputError("expression '" + src + "' at position " + std::to_string(pos) + ": " +
                         msg);
    }

    using Fn = std::function<double(double)>;

    Fn parseComparison() {
        Fn lhs = parseAdditive();
        skip();
        if (eat("<=")) {
            Fn rhs = parseAdditive();
            return [lhs, rhs](double t) { return lhs(t) <= rhs(t) ? 1.0 : 0.0; };
        }
        if (eat(">=")) {
            Fn rhs = parseAdditive();
            return [lhs, rhs](double t) { return lhs(t) >= rhs(t) ? 1.0 : 0.0; };
        }
        if (eat('<')) {
            Fn rhs = parseAdditive();
            return [lhs, rhs](double t) { return lhs(t) < rhs(t) ? 1.0 : 0.0; };
        }
        if (eat('>')) {
            Fn rhs = parseAdditive();
            return [lhs, rhs](double t) { return lhs(t) > rhs(t) ? 1.0 : 0.0; };
        }
        return lhs;
    }

    Fn parseAdditive() {
        Fn acc = parseTerm();
        for (;;) {
            skip();
            if (eat('+')) {
                Fn rhs = parseTerm();
                Fn prev = acc;
                acc = [prev, rhs](double t) { return prev(t) + rhs(t); };
            } else if (pos < src.size() && src[pos] == '-') {
                ++pos;
                Fn rhs = parseTerm();
                Fn prev = acc;
                acc = [prev, rhs](double t) { return prev(t) - rhs(t); };
            } else {
                return acc;
            }
        }
    }

    Fn parseTerm() {
        Fn acc = parseUnary();
        for (;;) {
            skip();
            if (eat('*')) {
                Fn rhs = parseUnary();
                Fn prev = acc;
                acc = [prev, rhs](double t) { return prev(t) * rhs(t); };
            } else if (eat('/')) {
                Fn rhs = parseUnary();
                Fn prev = acc;
                acc = [prev, rhs](double t) { return prev(t) / rhs(t); };
            } else {
                return acc;
            }
        }
    }

    Fn parseUnary() {
        skip();
        if (eat('-')) {
            Fn inner = parseUnary();
            return [inner](double t) { return -inner(t); };
        }
        return parsePower();
    }

    Fn parsePower() {
        Fn base = parsePrimary();
        skip();
        if (eat('^')) {
            Fn exponent = parseUnary();  // right associative
            return [base, exponent](double t) { return std::pow(base(t), exponent(t)); };
        }
        return base;
    }

    Fn parsePrimary() {
        skip();
        if (pos >= src.size()) fail("unexpected end");
        if (eat('(')) {
            Fn inner = parseComparison();
            if (!eat(')')) fail("expected ')'");
            return inner;
        }
        const char c = src[pos];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(src.data() + pos, src.data() + src.size(), v);
            if (ec != std::errc{}) fail("bad number");
            pos = ptr - src.data();
            return [v](double) { return v; };
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos;
            while (pos < src.size() &&
                   (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_'))
                ++pos;
            const std::string name = src.substr(start, pos - start);
            if (name == "t") return [](double t) { return t; };
            if (name == "pi") return [](double) { return M_PI; };
            if (name == "e") return [](double) { return M_E; };
            if (!eat('(')) fail("unknown identifier '" + name + "'");
            std::vector<Fn> args;
            if (!eat(')')) {
                args.push_back(parseComparison());
                while (eat(',')) args.push_back(parseComparison());
                if (!eat(')')) fail("expected ')'");
            }
            auto need = [&](std::size_t n) {
                if (args.size() != n)
                    fail("function '" + name + "' takes " + std::to_string(n) + " argument(s)");
            };
            if (name == "exp") { need(1); auto a = args[0]; return [a](double t) { return std::exp(a(t)); }; }
            if (name == "log") { need(1); auto a = args[0]; return [a](double t) { return std::log(a(t)); }; }
            if (name == "log10") { need(1); auto a = args[0]; return [a](double t) { return std::log10(a(t)); }; }
            if (name == "sqrt") { need(1); auto a = args[0]; return [a](double t) { return std::sqrt(a(t)); }; }
            if (name == "abs") { need(1); auto a = args[0]; return [a](double t) { return std::abs(a(t)); }; }
            if (name == "pow") { need(2); auto a = args[0], b = args[1]; return [a, b](double t) { return std::pow(a(t), b(t)); }; }
            if (name == "min") { need(2); auto a = args[0], b = args[1]; return [a, b](double t) { return std::min(a(t), b(t)); }; }
            if (name == "max") { need(2); auto a = args[0], b = args[1]; return [a, b](double t) { return std::max(a(t), b(t)); }; }
            fail("unknown function '" + name + "'");
        }
        fail("unexpected character");
    }
};

}  // namespace

Expression Expression::parse(const std::string& source) {
    Parser p(source);
    Expression e;
    e.fn_ = p.parseComparison();
    p.skip();
    if (p.pos != source.size()) p.fail("trailing input");
    e.source_ = source;
    return e;
}

namespace {

Expression expr_from_json(const json& j, const std::string& what) {
    if (j.is_number()) return Expression::parse(format_double(j.get<double>()));
    if (j.is_string()) return Expression::parse(j.get<std::string>());
    throw InputError(what + ": expected a number or an expression string");
}

}  // namespace

ProductSpecFile read_product_json(const std::string& path) {
    json j = load_json(path);
    try {
        std::vector<std::string> stateNames = j.at("states").get<std::vector<std::string>>();
        const int q = static_cast<int>(stateNames.size());
        if (q < 1) throw InputError("states: empty");
        const double horizon = j.at("horizon").get<double>();
        if (!(horizon > 0)) throw InputError("horizon must be positive");
        const double step = j.value("step", kDefaultStep);

        struct Entry {
            int from, to;
            Expression expr;
        };
        std::vector<Entry> rates;
        for (const auto& item : j.at("transition_rates")) {
            Entry e{item.at("from").get<int>(), item.at("to").get<int>(),
                    expr_from_json(item.at("rate"), "transition rate")};
            if (e.from < 0 || e.from >= q || e.to < 0 || e.to >= q || e.from == e.to)
                throw InputError("transition_rates: bad state pair");
            rates.push_back(std::move(e));
        }

        std::vector<Expression> payBase(q, Expression::parse("0"));
        std::vector<Expression> paySlope(q, Expression::parse("0"));
        if (j.contains("payment_rates"))
            for (const auto& item : j.at("payment_rates")) {
                const int s = item.at("state").get<int>();
                if (s < 0 || s >= q) throw InputError("payment_rates: bad state");
                if (item.contains("rate")) payBase[s] = expr_from_json(item.at("rate"), "payment rate");
                if (item.contains("theta_slope"))
                    paySlope[s] = expr_from_json(item.at("theta_slope"), "payment slope");
            }

        struct LumpEntry {
            int from, to;
            Expression amount, slope, trigger;
            bool triggerAll;
        };
        std::vector<LumpEntry> lumps;
        if (j.contains("lump_sums"))
            for (const auto& item : j.at("lump_sums")) {
                LumpEntry e{item.at("from").get<int>(),
                            item.at("to").get<int>(),
                            item.contains("amount") ? expr_from_json(item.at("amount"), "lump amount")
                                                    : Expression::parse("0"),
                            item.contains("theta_slope")
                                ? expr_from_json(item.at("theta_slope"), "lump slope")
                                : Expression::parse("0"),
                            Expression::parse("0"),
                            false};
                if (e.from < 0 || e.from >= q || e.to < 0 || e.to >= q)
                    throw InputError("lump_sums: bad state pair");
                if (!item.contains("trigger_intensity"))
                    throw InputError("lump_sums: trigger_intensity required");
                if (item.at("trigger_intensity").is_string() &&
                    item.at("trigger_intensity").get<std::string>() == "all") {
                    e.triggerAll = true;
                } else {
                    e.trigger = expr_from_json(item.at("trigger_intensity"), "trigger intensity");
                }
                lumps.push_back(std::move(e));
            }

        auto intensityAt = [&](double t) {
            Matrix m = Matrix::Zero(q, q);
            for (const auto& e : rates) m(e.from, e.to) = std::max(0.0, e.expr(t));
            for (int i = 0; i < q; ++i) m(i, i) = -(m.row(i).sum() - m(i, i));
            return m;
        };

        PiecewiseMatrixFunction intensity =
            PiecewiseMatrixFunction::sample(intensityAt, 0.0, horizon, step);

        PaymentSpec payments = PaymentSpec::zero(q);
        payments.rates = PiecewiseVectorFunction::sample(
            [&](double t) {
                Vector v(q);
                for (int i = 0; i < q; ++i) v(i) = payBase[i](t);
                return v;
            },
            0.0, horizon, step);
        payments.ratesSlope = PiecewiseVectorFunction::sample(
            [&](double t) {
                Vector v(q);
                for (int i = 0; i < q; ++i) v(i) = paySlope[i](t);
                return v;
            },
            0.0, horizon, step);
        if (!lumps.empty()) {
            payments.lumps = PiecewiseMatrixFunction::sample(
                [&](double t) {
                    Matrix m = Matrix::Zero(q, q);
                    for (const auto& e : lumps) m(e.from, e.to) = e.amount(t);
                    return m;
                },
                0.0, horizon, step);
            payments.lumpsSlope = PiecewiseMatrixFunction::sample(
                [&](double t) {
                    Matrix m = Matrix::Zero(q, q);
                    for (const auto& e : lumps) m(e.from, e.to) = e.slope(t);
                    return m;
                },
                0.0, horizon, step);
            payments.lumpIntensity = PiecewiseMatrixFunction::sample(
                [&](double t) {
                    Matrix lam = intensityAt(t);
                    Matrix m = Matrix::Zero(q, q);
                    for (const auto& e : lumps)
                        m(e.from, e.to) = e.triggerAll
                                              ? (e.from == e.to ? 0.0 : lam(e.from, e.to))
                                              : std::max(0.0, e.trigger(t));
                    return m;
                },
                0.0, horizon, step);
        }
        return ProductSpecFile{std::move(stateNames), horizon, step, std::move(intensity),
                               std::move(payments)};
    } catch (const json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
}

void write_fit_report(const std::string& path, const CalibrationResult& result,
                      const CalibrateConfig& config) {
    json j;
    j["rho"] = result.rho;
    j["loglik"] = result.loglik;
    j["mode"] = result.mode == RateMode::Restricted ? "restricted" : "unrestricted";
    j["max_price_error"] = result.maxPriceError;
    j["model_prices"] = result.modelPrices;
    j["loglik_trace"] = result.loglikTrace;
    j["weak_states"] = result.weakStates;
    const int p = result.dist.order();
    j["pi"] = std::vector<double>(result.dist.initialDistribution().data(),
                                  result.dist.initialDistribution().data() + p);
    const Matrix& t = result.dist.subIntensity().values()[0];
    std::vector<double> flat(p * p);
    for (int i = 0; i < p; ++i)
        for (int k = 0; k < p; ++k) flat[i * p + k] = t(i, k);
    j["sub_intensity"] = flat;
    json cfg;
    cfg["p"] = config.fit.dimension;
    cfg["structure"] = config.fit.structure == PhStructure::Coxian ? "coxian" : "general";
    cfg["max_iters"] = config.fit.maxIters;
    cfg["tol"] = config.fit.tol;
    cfg["seed"] = config.fit.seed;
    cfg["restarts"] = config.fit.restarts;
    if (config.mode == RateMode::Restricted)
        cfg["rates"] = std::vector<double>(config.rates.data(),
                                           config.rates.data() + config.rates.size());
    j["config"] = cfg;
    save_text(path, j.dump(2) + "\n");
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
    json j;
    j["tool"] = manifest.tool;
    j["version"] = manifest.version;
    j["subcommand"] = manifest.subcommand;
    j["arguments"] = manifest.arguments;
    j["inputs"] = manifest.inputs;
    j["outputs"] = manifest.outputs;
    j["seed"] = manifest.seed;
    save_text(path, j.dump(2) + "\n");
}

}  // namespace phlife
