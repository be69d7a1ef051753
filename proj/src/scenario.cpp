#include "radner/scenario.hpp"

#include "radner/error.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string_view>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

namespace radner {

namespace {

[[noreturn]] void fail(const YAML::Node& node, const std::string& field, const std::string& msg) {
    const auto mark = node.Mark();
    if (mark.is_null()) throw ConfigError(fmt::format("{}: {}", field, msg));
    throw ConfigError(fmt::format("line {}, field '{}': {}", mark.line + 1, field, msg));
}

void only_keys(const YAML::Node& node, const std::string& field, std::initializer_list<const char*> allowed) {
    if (!node.IsMap()) fail(node, field, "expected a mapping");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!ok.count(key)) fail(kv.first, field, fmt::format("unknown key '{}'", key));
    }
}

std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

template <class T>
T scalar(const YAML::Node& node, const std::string& field) {
    if (!node.IsScalar()) fail(node, field, "expected a scalar");
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        fail(node, field, fmt::format("cannot read '{}'", node.Scalar()));
    }
}

template <class T>
void optional(const YAML::Node& parent, const char* key, const std::string& field, T& out) {
    if (parent[key]) out = scalar<T>(parent[key], join(field, key));
}

std::vector<double> numbers(const YAML::Node& node, const std::string& field) {
    if (!node.IsSequence()) fail(node, field, "expected a list of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < node.size(); ++i) out.push_back(scalar<double>(node[i], fmt::format("{}[{}]", field, i)));
    return out;
}

YAML::Node required(const YAML::Node& parent, const char* key, const std::string& field) {
    const YAML::Node n = parent[key];
    if (!n) fail(parent, join(field, key), "missing");
    return n;
}

// ------------------------------------------------------------ expressions

Expr parse_expr(const YAML::Node& node, const std::string& field) {
    if (node.IsScalar()) return Expr::constant(scalar<double>(node, field));
    if (!node.IsMap()) fail(node, field, "expected a number or an expression mapping");
    auto pair_of = [&](const char* key) {
        const auto v = numbers(node[key], join(field, key));
        if (v.size() != 2) fail(node[key], join(field, key), "expected [a, b]");
        return v;
    };
    auto axis = [&]() -> std::size_t {
        return node["axis"] ? scalar<std::size_t>(node["axis"], join(field, "axis")) : 0;
    };
    auto children = [&](const char* key) {
        const YAML::Node list = node[key];
        if (!list.IsSequence() || list.size() == 0) fail(list, join(field, key), "expected a non-empty list");
        std::vector<Expr> out;
        for (std::size_t i = 0; i < list.size(); ++i)
            out.push_back(parse_expr(list[i], fmt::format("{}.{}[{}]", field, key, i)));
        return out;
    };
    try {
        if (node["affine"]) {
            only_keys(node, field, {"affine", "axis"});
            const auto v = pair_of("affine");
            return Expr::affine(v[0], v[1], axis());
        }
        if (node["exp_affine"]) {
            only_keys(node, field, {"exp_affine", "axis"});
            const auto v = pair_of("exp_affine");
            return Expr::exp_affine(v[0], v[1], axis());
        }
        if (node["poly"]) {
            only_keys(node, field, {"poly"});
            const YAML::Node rows = node["poly"];
            if (!rows.IsSequence()) fail(rows, join(field, "poly"), "expected one coefficient list per axis");
            std::vector<std::vector<double>> c;
            for (std::size_t i = 0; i < rows.size(); ++i)
                c.push_back(numbers(rows[i], fmt::format("{}.poly[{}]", field, i)));
            return Expr::polynomial(std::move(c));
        }
        if (node["time_poly"]) {
            only_keys(node, field, {"time_poly"});
            return Expr::time_poly(numbers(node["time_poly"], join(field, "time_poly")));
        }
        if (node["product"]) {
            only_keys(node, field, {"product"});
            return Expr::product(children("product"));
        }
        if (node["sum"]) {
            only_keys(node, field, {"sum"});
            return Expr::sum(children("sum"));
        }
    } catch (const Error& e) {
        if (std::string_view(e.what()).starts_with("line ")) throw;
        fail(node, field, e.what());
    }
    fail(node, field, "unknown expression; expected affine, exp_affine, poly, time_poly, product or sum");
}

void emit_expr(YAML::Emitter& out, const Expr& e) {
    switch (e.kind()) {
    case Expr::Kind::constant:
        out << e.a();
        return;
    case Expr::Kind::affine:
    case Expr::Kind::exp_affine:
        out << YAML::Flow << YAML::BeginMap;
        out << YAML::Key << (e.kind() == Expr::Kind::affine ? "affine" : "exp_affine") << YAML::Value
            << YAML::Flow << YAML::BeginSeq << e.a() << e.b() << YAML::EndSeq;
        out << YAML::Key << "axis" << YAML::Value << e.axis();
        out << YAML::EndMap;
        return;
    case Expr::Kind::polynomial:
        out << YAML::Flow << YAML::BeginMap << YAML::Key << "poly" << YAML::Value << YAML::Flow << YAML::BeginSeq;
        for (const auto& row : e.coeffs()) {
            out << YAML::Flow << YAML::BeginSeq;
            for (double c : row) out << c;
            out << YAML::EndSeq;
        }
        out << YAML::EndSeq << YAML::EndMap;
        return;
    case Expr::Kind::time_poly:
        out << YAML::Flow << YAML::BeginMap << YAML::Key << "time_poly" << YAML::Value << YAML::Flow
            << YAML::BeginSeq;
        for (double c : e.coeffs().at(0)) out << c;
        out << YAML::EndSeq << YAML::EndMap;
        return;
    case Expr::Kind::product:
    case Expr::Kind::sum:
        out << YAML::Flow << YAML::BeginMap;
        out << YAML::Key << (e.kind() == Expr::Kind::product ? "product" : "sum") << YAML::Value << YAML::Flow
            << YAML::BeginSeq;
        for (const auto& c : e.children()) emit_expr(out, c);
        out << YAML::EndSeq << YAML::EndMap;
        return;
    }
}

// --------------------------------------------------------------- utilities

SplitterConfig parse_splitter(const YAML::Node& node, const std::string& field, SplitterConfig cfg) {
    only_keys(node, field, {"tolerance", "max_iterations", "epsilon"});
    optional(node, "tolerance", field, cfg.tolerance);
    optional(node, "max_iterations", field, cfg.max_iterations);
    optional(node, "epsilon", field, cfg.epsilon);
    return cfg;
}

void emit_splitter(YAML::Emitter& out, const SplitterConfig& cfg) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "tolerance" << YAML::Value << cfg.tolerance;
    out << YAML::Key << "max_iterations" << YAML::Value << cfg.max_iterations;
    out << YAML::Key << "epsilon" << YAML::Value << cfg.epsilon;
    out << YAML::EndMap;
}

UtilityFn parse_utility(const YAML::Node& node, const std::string& field, const SplitterConfig& splitter) {
    if (node.IsScalar()) {
        if (node.Scalar() == "log") return UtilityFn::log();
        fail(node, field, "expected 'log' or a utility mapping");
    }
    if (!node.IsMap()) fail(node, field, "expected a utility mapping");
    try {
        if (node["crra"]) {
            only_keys(node, field, {"crra", "nu", "g"});
            const double a = scalar<double>(node["crra"], join(field, "crra"));
            const Expr nu = node["nu"] ? parse_expr(node["nu"], join(field, "nu")) : Expr::constant(0.0);
            const Expr g = node["g"] ? parse_expr(node["g"], join(field, "g")) : Expr::constant(1.0);
            return UtilityFn::crra(a, nu, g);
        }
        if (node["scale"]) {
            only_keys(node, field, {"scale", "of"});
            return scale(scalar<double>(node["scale"], join(field, "scale")),
                         parse_utility(required(node, "of", field), join(field, "of"), splitter));
        }
        auto both = [&](const char* key) {
            const YAML::Node list = node[key];
            if (!list.IsSequence() || list.size() != 2) fail(list, join(field, key), "expected two utilities");
            return std::make_pair(parse_utility(list[0], fmt::format("{}.{}[0]", field, key), splitter),
                                  parse_utility(list[1], fmt::format("{}.{}[1]", field, key), splitter));
        };
        if (node["sum"]) {
            only_keys(node, field, {"sum"});
            auto [u1, u2] = both("sum");
            return add(u1, u2);
        }
        if (node["sup_convolution"]) {
            only_keys(node, field, {"sup_convolution", "splitter"});
            const SplitterConfig cfg =
                node["splitter"] ? parse_splitter(node["splitter"], join(field, "splitter"), splitter) : splitter;
            auto [u1, u2] = both("sup_convolution");
            return sup_convolve(u1, u2, cfg);
        }
    } catch (const Error& e) {
        if (std::string_view(e.what()).starts_with("line ")) throw;
        fail(node, field, e.what());
    }
    fail(node, field, "unknown utility; expected crra, scale, sum or sup_convolution");
}

void emit_utility(YAML::Emitter& out, const UtilityFn& u, const SplitterConfig& splitter) {
    switch (u.kind()) {
    case UtilityFn::Kind::crra:
        out << YAML::Flow << YAML::BeginMap << YAML::Key << "crra" << YAML::Value << u.crra_a();
        if (!(u.crra_nu() == Expr::constant(0.0))) {
            out << YAML::Key << "nu" << YAML::Value;
            emit_expr(out, u.crra_nu());
        }
        if (!(u.crra_g() == Expr::constant(1.0))) {
            out << YAML::Key << "g" << YAML::Value;
            emit_expr(out, u.crra_g());
        }
        out << YAML::EndMap;
        return;
    case UtilityFn::Kind::scaled:
        out << YAML::Flow << YAML::BeginMap << YAML::Key << "scale" << YAML::Value << u.scale_factor();
        out << YAML::Key << "of" << YAML::Value;
        emit_utility(out, u.left(), splitter);
        out << YAML::EndMap;
        return;
    case UtilityFn::Kind::sum:
    case UtilityFn::Kind::sup_convolution:
        out << YAML::Flow << YAML::BeginMap;
        out << YAML::Key << (u.kind() == UtilityFn::Kind::sum ? "sum" : "sup_convolution") << YAML::Value
            << YAML::Flow << YAML::BeginSeq;
        emit_utility(out, u.left(), splitter);
        emit_utility(out, u.right(), splitter);
        out << YAML::EndSeq;
        if (u.kind() == UtilityFn::Kind::sup_convolution && !(u.splitter() == splitter)) {
            out << YAML::Key << "splitter" << YAML::Value;
            emit_splitter(out, u.splitter());
        }
        out << YAML::EndMap;
        return;
    }
}

// ---------------------------------------------------------------- sections

DiffusionSpec parse_diffusion(const YAML::Node& node) {
    const std::string field = "diffusion";
    only_keys(node, field, {"dimension", "x0", "drift", "volatility", "inverse_bound"});
    DiffusionSpec d;
    d.dimension = scalar<std::size_t>(required(node, "dimension", field), "diffusion.dimension");
    d.x0 = numbers(required(node, "x0", field), "diffusion.x0");
    const YAML::Node drift = required(node, "drift", field);
    if (!drift.IsSequence()) fail(drift, "diffusion.drift", "expected a list");
    for (std::size_t i = 0; i < drift.size(); ++i)
        d.drift.push_back(parse_expr(drift[i], fmt::format("diffusion.drift[{}]", i)));
    const YAML::Node vol = required(node, "volatility", field);
    if (!vol.IsSequence()) fail(vol, "diffusion.volatility", "expected a list of rows");
    for (std::size_t i = 0; i < vol.size(); ++i) {
        if (!vol[i].IsSequence()) fail(vol[i], fmt::format("diffusion.volatility[{}]", i), "expected a row");
        for (std::size_t j = 0; j < vol[i].size(); ++j)
            d.volatility.push_back(parse_expr(vol[i][j], fmt::format("diffusion.volatility[{}][{}]", i, j)));
    }
    optional(node, "inverse_bound", field, d.inverse_bound);
    try {
        d.check();
    } catch (const ConfigError& e) {
        fail(node, field, e.what());
    }
    return d;
}

void emit_diffusion(YAML::Emitter& out, const DiffusionSpec& d) {
    out << YAML::Key << "diffusion" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "dimension" << YAML::Value << d.dimension;
    out << YAML::Key << "x0" << YAML::Value << YAML::Flow << d.x0;
    out << YAML::Key << "drift" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const auto& e : d.drift) emit_expr(out, e);
    out << YAML::EndSeq;
    out << YAML::Key << "volatility" << YAML::Value << YAML::BeginSeq;
    for (std::size_t i = 0; i < d.dimension; ++i) {
        out << YAML::Flow << YAML::BeginSeq;
        for (std::size_t j = 0; j < d.dimension; ++j) emit_expr(out, d.volatility[i * d.dimension + j]);
        out << YAML::EndSeq;
    }
    out << YAML::EndSeq;
    out << YAML::Key << "inverse_bound" << YAML::Value << d.inverse_bound;
    out << YAML::EndMap;
}

void key_expr(YAML::Emitter& out, const char* key, const Expr& e) {
    out << YAML::Key << key << YAML::Value;
    emit_expr(out, e);
}

} // namespace

bool Scenario::operator==(const Scenario& o) const {
    const DiffusionSpec& a = economy.diffusion;
    const DiffusionSpec& b = o.economy.diffusion;
    const bool same_diffusion = a.dimension == b.dimension && a.x0 == b.x0 && a.drift == b.drift &&
                                a.volatility == b.volatility && a.inverse_bound == b.inverse_bound;
    const EconomySpec& e = economy;
    const EconomySpec& f = o.economy;
    return name == o.name && description == o.description && seed == o.seed && reference == o.reference &&
           same_diffusion && e.G == f.G && e.q == f.q && e.r == f.r && e.H == f.H && e.h1 == f.h1 &&
           e.h2 == f.h2 && e.stocks == f.stocks && e.agents == f.agents && e.splitter == f.splitter &&
           solver == o.solver && grid == o.grid && mc == o.mc && verify == o.verify &&
           completeness == o.completeness;
}

Scenario parse_scenario(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(fmt::format("line {}: {}", e.mark.line + 1, e.msg));
    }
    only_keys(root, "", {"name", "description", "seed", "reference", "diffusion", "economy", "splitter", "agents",
                         "stocks", "solver", "grid", "monte_carlo", "verify", "completeness"});
    Scenario s;
    s.name = scalar<std::string>(required(root, "name", ""), "name");
    optional(root, "description", "", s.description);
    optional(root, "seed", "", s.seed);
    optional(root, "reference", "", s.reference);
    if (!s.reference.empty() && s.reference != "gaussian")
        fail(root["reference"], "reference", "only 'gaussian' is known");

    EconomySpec& e = s.economy;
    e.diffusion = parse_diffusion(required(root, "diffusion", ""));
    if (root["splitter"]) e.splitter = parse_splitter(root["splitter"], "splitter", {});

    if (const YAML::Node eco = root["economy"]) {
        only_keys(eco, "economy", {"G", "q", "r", "H", "h1", "h2"});
        auto field = [&](const char* key, Expr& out) {
            if (eco[key]) out = parse_expr(eco[key], join("economy", key));
        };
        field("G", e.G);
        field("q", e.q);
        field("r", e.r);
        field("H", e.H);
        field("h1", e.h1);
        field("h2", e.h2);
    }

    const YAML::Node agents = required(root, "agents", "");
    if (!agents.IsSequence()) fail(agents, "agents", "expected a list");
    for (std::size_t m = 0; m < agents.size(); ++m) {
        const YAML::Node a = agents[m];
        const std::string f = fmt::format("agents[{}]", m);
        only_keys(a, f, {"name", "u", "U", "rate_share", "terminal_share"});
        AgentSpec spec;
        optional(a, "name", f, spec.name);
        spec.u = parse_utility(required(a, "u", f), join(f, "u"), e.splitter);
        spec.U = a["U"] ? parse_utility(a["U"], join(f, "U"), e.splitter) : spec.u;
        spec.rate_share = parse_expr(required(a, "rate_share", f), join(f, "rate_share"));
        spec.terminal_share = parse_expr(required(a, "terminal_share", f), join(f, "terminal_share"));
        e.agents.push_back(std::move(spec));
    }

    const YAML::Node stocks = required(root, "stocks", "");
    if (!stocks.IsSequence()) fail(stocks, "stocks", "expected a list");
    for (std::size_t j = 0; j < stocks.size(); ++j) {
        const YAML::Node st = stocks[j];
        const std::string f = fmt::format("stocks[{}]", j);
        only_keys(st, f, {"name", "F", "f", "p"});
        StockSpec spec;
        optional(st, "name", f, spec.name);
        spec.F = parse_expr(required(st, "F", f), join(f, "F"));
        if (st["f"]) spec.f = parse_expr(st["f"], join(f, "f"));
        if (st["p"]) spec.p = parse_expr(st["p"], join(f, "p"));
        e.stocks.push_back(std::move(spec));
    }
    try {
        e.check();
    } catch (const ConfigError& err) {
        throw ConfigError(fmt::format("scenario '{}': {}", s.name, err.what()));
    }

    if (const YAML::Node n = root["solver"]) {
        only_keys(n, "solver", {"abs_tol", "max_iterations", "fd_step", "min_weight", "max_clipped", "initial"});
        optional(n, "abs_tol", "solver", s.solver.abs_tol);
        optional(n, "max_iterations", "solver", s.solver.max_iterations);
        optional(n, "fd_step", "solver", s.solver.fd_step);
        optional(n, "min_weight", "solver", s.solver.min_weight);
        optional(n, "max_clipped", "solver", s.solver.max_clipped);
        if (n["initial"]) s.solver.initial = numbers(n["initial"], "solver.initial");
    }
    if (const YAML::Node n = root["grid"]) {
        only_keys(n, "grid", {"nt", "nx", "half_width"});
        optional(n, "nt", "grid", s.grid.nt);
        optional(n, "nx", "grid", s.grid.nx);
        optional(n, "half_width", "grid", s.grid.half_width);
    }
    if (const YAML::Node n = root["monte_carlo"]) {
        only_keys(n, "monte_carlo", {"paths", "times"});
        optional(n, "paths", "monte_carlo", s.mc.paths);
        optional(n, "times", "monte_carlo", s.mc.times);
    }
    if (const YAML::Node n = root["verify"]) {
        only_keys(n, "verify",
                  {"t1", "t2", "bins", "martingale_paths", "interpolation_tolerance", "normalization_floor"});
        optional(n, "t1", "verify", s.verify.t1);
        optional(n, "t2", "verify", s.verify.t2);
        optional(n, "bins", "verify", s.verify.bins);
        optional(n, "martingale_paths", "verify", s.verify.martingale_paths);
        optional(n, "interpolation_tolerance", "verify", s.verify.interpolation_tolerance);
        optional(n, "normalization_floor", "verify", s.verify.normalization_floor);
    }
    if (const YAML::Node n = root["completeness"]) {
        only_keys(n, "completeness", {"relative_threshold", "fraction_tolerance", "claims", "random_claims",
                                      "probe_paths", "substeps", "rms_bound"});
        auto& c = s.completeness;
        optional(n, "relative_threshold", "completeness", c.relative_threshold);
        optional(n, "fraction_tolerance", "completeness", c.fraction_tolerance);
        optional(n, "random_claims", "completeness", c.random_claims);
        optional(n, "probe_paths", "completeness", c.probe_paths);
        optional(n, "substeps", "completeness", c.substeps);
        optional(n, "rms_bound", "completeness", c.rms_bound);
        if (const YAML::Node list = n["claims"]) {
            if (!list.IsSequence()) fail(list, "completeness.claims", "expected a list");
            for (std::size_t i = 0; i < list.size(); ++i)
                c.claims.push_back(parse_expr(list[i], fmt::format("completeness.claims[{}]", i)));
        }
    }
    if (s.grid.nt < 3 || s.grid.nx < 4) fail(root["grid"], "grid", "needs nt >= 3 and nx >= 4");
    if (s.mc.paths < 2) fail(root["monte_carlo"], "monte_carlo.paths", "needs at least 2 paths");
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot read scenario file '{}'", path));
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_scenario(buf.str());
    } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", path, e.what()));
    }
}

std::string emit_scenario(const Scenario& s) {
    const EconomySpec& e = s.economy;
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << s.name;
    if (!s.description.empty()) out << YAML::Key << "description" << YAML::Value << s.description;
    out << YAML::Key << "seed" << YAML::Value << s.seed;
    if (!s.reference.empty()) out << YAML::Key << "reference" << YAML::Value << s.reference;
    emit_diffusion(out, e.diffusion);

    out << YAML::Key << "economy" << YAML::Value << YAML::BeginMap;
    key_expr(out, "G", e.G);
    key_expr(out, "q", e.q);
    key_expr(out, "r", e.r);
    key_expr(out, "H", e.H);
    key_expr(out, "h1", e.h1);
    key_expr(out, "h2", e.h2);
    out << YAML::EndMap;
    out << YAML::Key << "splitter" << YAML::Value;
    emit_splitter(out, e.splitter);

    out << YAML::Key << "agents" << YAML::Value << YAML::BeginSeq;
    for (const auto& a : e.agents) {
        out << YAML::BeginMap;
        out << YAML::Key << "name" << YAML::Value << a.name;
        out << YAML::Key << "u" << YAML::Value;
        emit_utility(out, a.u, e.splitter);
        out << YAML::Key << "U" << YAML::Value;
        emit_utility(out, a.U, e.splitter);
        key_expr(out, "rate_share", a.rate_share);
        key_expr(out, "terminal_share", a.terminal_share);
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    out << YAML::Key << "stocks" << YAML::Value << YAML::BeginSeq;
    for (const auto& st : e.stocks) {
        out << YAML::BeginMap;
        out << YAML::Key << "name" << YAML::Value << st.name;
        key_expr(out, "F", st.F);
        key_expr(out, "f", st.f);
        key_expr(out, "p", st.p);
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    out << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "abs_tol" << YAML::Value << s.solver.abs_tol;
    out << YAML::Key << "max_iterations" << YAML::Value << s.solver.max_iterations;
    out << YAML::Key << "fd_step" << YAML::Value << s.solver.fd_step;
    out << YAML::Key << "min_weight" << YAML::Value << s.solver.min_weight;
    out << YAML::Key << "max_clipped" << YAML::Value << s.solver.max_clipped;
    if (!s.solver.initial.empty())
        out << YAML::Key << "initial" << YAML::Value << YAML::Flow << s.solver.initial;
    out << YAML::EndMap;

    out << YAML::Key << "grid" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "nt" << YAML::Value << s.grid.nt;
    out << YAML::Key << "nx" << YAML::Value << s.grid.nx;
    out << YAML::Key << "half_width" << YAML::Value << s.grid.half_width;
    out << YAML::EndMap;

    out << YAML::Key << "monte_carlo" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "paths" << YAML::Value << s.mc.paths;
    out << YAML::Key << "times" << YAML::Value << s.mc.times;
    out << YAML::EndMap;

    const auto& v = s.verify;
    out << YAML::Key << "verify" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "t1" << YAML::Value << v.t1;
    out << YAML::Key << "t2" << YAML::Value << v.t2;
    out << YAML::Key << "bins" << YAML::Value << v.bins;
    out << YAML::Key << "martingale_paths" << YAML::Value << v.martingale_paths;
    out << YAML::Key << "interpolation_tolerance" << YAML::Value << v.interpolation_tolerance;
    out << YAML::Key << "normalization_floor" << YAML::Value << v.normalization_floor;
    out << YAML::EndMap;

    const auto& c = s.completeness;
    out << YAML::Key << "completeness" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "relative_threshold" << YAML::Value << c.relative_threshold;
    out << YAML::Key << "fraction_tolerance" << YAML::Value << c.fraction_tolerance;
    out << YAML::Key << "claims" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const auto& x : c.claims) emit_expr(out, x);
    out << YAML::EndSeq;
    out << YAML::Key << "random_claims" << YAML::Value << c.random_claims;
    out << YAML::Key << "probe_paths" << YAML::Value << c.probe_paths;
    out << YAML::Key << "substeps" << YAML::Value << c.substeps;
    out << YAML::Key << "rms_bound" << YAML::Value << c.rms_bound;
    out << YAML::EndMap;

    out << YAML::EndMap;
    if (!out.good()) throw Error(fmt::format("scenario emitter failed: {}", out.GetLastError()));
    return std::string(out.c_str()) + "\n";
}

void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigError(fmt::format("cannot write '{}'", path));
    f << emit_scenario(s);
}

} // namespace radner
