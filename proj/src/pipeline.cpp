#include "radner/pipeline.hpp"

#include "radner/error.hpp"
#include "radner/io.hpp"
#include "radner/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>

#include <fmt/format.h>

namespace radner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t martingale_seed_offset = 1000003;
constexpr std::uint64_t probe_seed_offset = 2000003;
constexpr double cone_bound = 1e3;

json coefficient_json(const CoefficientReport& r) {
    json j;
    j["max_inverse_norm"] = r.max_inverse_norm;
    j["inverse_bound"] = r.inverse_bound;
    j["max_drift_norm"] = r.max_drift_norm;
    j["max_volatility_norm"] = r.max_volatility_norm;
    j["worst_t"] = r.worst_t;
    j["worst_x"] = r.worst_x;
    j["samples"] = r.samples;
    j["violation"] = r.violation;
    j["modulus"] = json::array();
    for (const auto& m : r.modulus_table)
        j["modulus"].push_back({{"epsilon", m.epsilon},
                                {"max_difference", m.max_difference},
                                {"bound", m.bound < 0.0 ? json(nullptr) : json(m.bound)}});
    j["notes"] = r.notes;
    return j;
}

json assumption_json(const AssumptionReport& r) {
    json j;
    j["rank"] = {{"min_singular_value", r.min_singular_value},
                 {"median_abs_derivative", r.median_abs_derivative},
                 {"threshold", r.rank_threshold},
                 {"failure_fraction", r.rank_failure_fraction},
                 {"nodes", r.nodes},
                 {"pass", r.rank_pass}};
    j["G"] = {{"min", r.min_G}, {"positive", r.G_positive}};
    j["rates"] = {{"r_min", r.r_min}, {"r_max", r.r_max}, {"q_min", r.q_min},
                  {"q_max", r.q_max}, {"p_abs_max", r.p_abs_max}, {"bounded", r.rates_bounded}};
    j["shares"] = {{"max_sum_error", r.max_share_sum_error}, {"min_share", r.min_share}, {"valid", r.shares_valid}};
    j["growth"] = json::array();
    for (const auto& g : r.growth)
        j["growth"].push_back({{"field", g.field}, {"quantity", g.quantity}, {"max", g.max_value}});
    j["notes"] = r.notes;
    j["pass"] = r.ok();
    return j;
}

json cone_json(const ConeDiagnostics& c) {
    return {{"probes", c.probes},
            {"bound", c.bound},
            {"min_risk_aversion", c.min_risk_aversion},
            {"max_risk_aversion", c.max_risk_aversion},
            {"max_state_sensitivity", c.max_state_sensitivity},
            {"max_cone_statistic", c.max_cone_statistic},
            {"max_growth_ratio", c.max_growth_ratio},
            {"max_time_sensitivity", c.max_time_sensitivity},
            {"max_inverse_risk_aversion", c.max_inverse_risk_aversion},
            {"within_bound", c.within_bound},
            {"monotone_concave", c.monotone_concave},
            {"inada", c.inada},
            {"notes", c.notes}};
}

std::string weight_string(const WeightVector& w) {
    std::vector<std::string> parts;
    for (std::size_t m = 0; m < w.size(); ++m) parts.push_back(format_number(w[m]));
    return fmt::format("{}", fmt::join(parts, " "));
}

} // namespace

std::vector<ClosedFormError> gaussian_closed_form_errors(const EquilibriumSolution& sol) {
    const TimeGrid& tg = sol.v.times();
    const SpatialGrid& sg = sol.v.space();
    if (sg.dimension() != 1) throw ConfigError("the Gaussian closed forms are one-dimensional");
    ClosedFormError Y{"Y"}, S{"S"}, B{"B"};
    const std::size_t left = sol.numeraire.b_left.times().size() - 1;
    std::vector<double> x(1);
    for (std::size_t k = 0; k < tg.size(); ++k) {
        const double t = tg[k];
        for (std::size_t node = 0; node < sg.node_count(); ++node) {
            sg.node_state(node, x);
            if (!sg.in_core(x)) continue;
            const double y_exact = std::exp(-x[0] + 0.5 * (1.0 - t));
            const double s_exact = x[0] - (1.0 - t);
            const double b_num = k < left ? sol.numeraire.b_left.at(k, node) : sol.numeraire.b_left.at(left, node);
            auto track = [](ClosedFormError& e, double num, double exact, double denom) {
                const double abs = std::abs(num - exact);
                e.max_abs_error = std::max(e.max_abs_error, abs);
                e.max_relative_error = std::max(e.max_relative_error, abs / denom);
                ++e.nodes;
            };
            track(Y, sol.v.at(k, node), y_exact, std::abs(y_exact));
            track(S, sol.stocks.at(0).s.at(k, node), s_exact, std::max(std::abs(s_exact), 1.0));
            track(B, b_num, y_exact, std::abs(y_exact));
        }
    }
    return {Y, S, B};
}

Pipeline::Pipeline(Scenario scenario, RunOptions options)
    : scenario_(std::move(scenario)), options_(std::move(options)) {
    if (options_.seed) scenario_.seed = *options_.seed;
    if (options_.paths) scenario_.mc.paths = *options_.paths;
    if (options_.nt) scenario_.grid.nt = *options_.nt;
    if (options_.nx) scenario_.grid.nx = *options_.nx;
    const auto& names = stage_names();
    if (options_.command != "all" && std::find(names.begin(), names.end(), options_.command) == names.end())
        throw ConfigError(fmt::format("unknown command '{}'", options_.command));
    econ_ = std::make_shared<const EconomySpec>(scenario_.economy);
    econ_->check();
    pde_times_ = TimeGrid::uniform(scenario_.grid.nt);
    path_times_ = TimeGrid::uniform(scenario_.mc.times ? scenario_.mc.times : scenario_.grid.nt);
    space_ = SpatialGrid::around(econ_->diffusion, scenario_.grid.nx, scenario_.grid.half_width);
}

const std::vector<std::string>& Pipeline::stage_names() {
    static const std::vector<std::string> names{"validate", "solve", "price", "check", "report"};
    return names;
}

std::string Pipeline::path(const std::string& name) const { return (fs::path(options_.out_dir) / name).string(); }

StageStatus Pipeline::timed(const std::string& name, const std::function<StageStatus()>& body) {
    const auto start = std::chrono::steady_clock::now();
    StageStatus s;
    try {
        s = body();
    } catch (const std::exception& e) {
        s.pass = false;
        s.message = e.what();
    }
    s.name = name;
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    stages_.push_back(s);
    return s;
}

StageStatus Pipeline::validate() {
    return timed("validate", [this] {
        StageStatus st;
        const std::size_t nx = std::min<std::size_t>(scenario_.grid.nx, 101);
        const SpatialGrid grid = SpatialGrid::around(econ_->diffusion, nx, scenario_.grid.half_width);
        const TimeGrid tg = TimeGrid::uniform(std::min<std::size_t>(scenario_.grid.nt, 21));
        const CoefficientReport coef = validate_coefficients(econ_->diffusion, grid, tg);
        const AssumptionReport assume =
            validate_assumptions(*econ_, grid, tg, scenario_.completeness.fraction_tolerance);

        const std::size_t d = econ_->d();
        std::vector<std::vector<double>> states{econ_->diffusion.x0};
        std::vector<double> sig(d * d);
        econ_->diffusion.volatility_into(0.0, econ_->diffusion.x0, sig);
        for (std::size_t i = 0; i < d; ++i)
            for (double sgn : {-1.0, 1.0}) {
                std::vector<double> x = econ_->diffusion.x0;
                x[i] += sgn * std::max(std::abs(sig[i * d + i]), 1e-3);
                states.push_back(x);
            }
        const auto probes = default_probes(states);
        bool utilities_ok = true;
        json utilities = json::array();
        for (std::size_t m = 0; m < econ_->M(); ++m) {
            const auto& a = econ_->agents[m];
            for (const auto& [which, u] : {std::pair{"u", &a.u}, std::pair{"U", &a.U}}) {
                const ConeDiagnostics c = cone_diagnostics(*u, probes, cone_bound);
                utilities_ok = utilities_ok && c.monotone_concave && c.inada;
                json j = cone_json(c);
                j["agent"] = a.name.empty() ? fmt::format("agent{}", m) : a.name;
                j["utility"] = which;
                j["expression"] = u->to_string();
                utilities.push_back(j);
            }
        }
        validation_ = json::object();
        validation_["scenario"] = scenario_.name;
        validation_["coefficients"] = coefficient_json(coef);
        validation_["assumptions"] = assumption_json(assume);
        validation_["utilities"] = utilities;
        st.pass = !coef.violation && assume.ok() && utilities_ok;
        validation_["pass"] = st.pass;
        write_json(path("validation.json"), validation_);
        if (!st.pass) {
            std::vector<std::string> why;
            if (coef.violation) why.push_back("volatility inverse bound");
            if (!assume.rank_pass) why.push_back("F-Jacobian rank");
            if (!assume.shares_valid) why.push_back("income shares");
            if (!assume.G_positive) why.push_back("G positivity");
            if (!assume.rates_bounded) why.push_back("rate bounds");
            if (!utilities_ok) why.push_back("utility shape");
            st.message = fmt::format("validation failed: {}", fmt::join(why, ", "));
        }
        return st;
    });
}

StageStatus Pipeline::solve() {
    return timed("solve", [this] {
        StageStatus st;
        auto bundle = std::make_shared<const PathBundle>(
            simulate_paths(econ_->diffusion, path_times_, scenario_.mc.paths, scenario_.seed, options_.threads));
        prim_ = std::make_unique<PrimitivePaths>(evaluate_primitives(*econ_, bundle, options_.threads));
        const std::size_t M = econ_->M();
        std::vector<std::string> header{"iteration"};
        for (std::size_t m = 0; m < M; ++m) header.push_back(fmt::format("w{}", m));
        for (const char* h : {"phi_inf", "step", "standard_error", "phi_sum", "accumulation"}) header.push_back(h);
        auto write_trace = [&](const std::vector<TraceRow>& trace) {
            CsvTable t(header);
            for (const auto& r : trace) {
                std::vector<double> row{static_cast<double>(r.iteration)};
                row.insert(row.end(), r.w.begin(), r.w.end());
                for (double v : {r.phi_inf, r.step, r.standard_error, r.phi_sum, r.accumulation}) row.push_back(v);
                t.add_numbers(row);
            }
            t.write(path("weights_trace.csv"));
        };
        try {
            weights_ = solve_weights(*econ_, *prim_, scenario_.solver, options_.threads);
        } catch (const NonConvergence& e) {
            write_trace(e.trace);
            throw;
        }
        write_trace(weights_->trace);
        st.pass = true;
        st.message = fmt::format("w* = ({}) after {} iterations", weight_string(weights_->w), weights_->iterations);
        return st;
    });
}

StageStatus Pipeline::price() {
    return timed("price", [this] {
        StageStatus st;
        if (!weights_) throw Error("price needs solved weights");
        PdeOptions opts;
        opts.threads = options_.threads;
        solution_ = price_equilibrium(econ_, weights_->w, pde_times_, space_, opts);
        const EquilibriumSolution& sol = *solution_;
        fs::create_directories(path("surfaces"));
        write_surface_csv(path("surfaces/Y.csv"), sol.v, "v");
        write_rgrd(path("surfaces/Y.rgrd"), sol.v);
        for (std::size_t j = 0; j < econ_->J(); ++j) {
            write_surface_csv(path(fmt::format("surfaces/S{}.csv", j)), sol.stocks[j].s, "s");
            write_rgrd(path(fmt::format("surfaces/S{}.rgrd", j)), sol.stocks[j].s);
        }
        write_surface_csv(path("surfaces/B.csv"), sol.numeraire.b, "b");
        write_rgrd(path("surfaces/B.rgrd"), sol.numeraire.b);
        st.pass = sol.v.all_finite();
        if (scenario_.reference == "gaussian") {
            closed_form_ = gaussian_closed_form_errors(sol);
            CsvTable t({"surface", "max_relative_error", "max_abs_error", "nodes", "tolerance", "pass"});
            for (const auto& e : closed_form_) {
                const bool ok = e.max_relative_error < 1e-3;
                st.pass = st.pass && ok;
                t.add({e.surface, format_number(e.max_relative_error), format_number(e.max_abs_error),
                       std::to_string(e.nodes), format_number(1e-3), ok ? "1" : "0"});
            }
            t.write(path("closed_form_errors.csv"));
        }
        st.message = fmt::format("Y0 = {}", format_number(sol.Y0()));
        return st;
    });
}

StageStatus Pipeline::check() {
    return timed("check", [this] {
        StageStatus st;
        if (!solution_ || !prim_) throw Error("check needs a priced equilibrium");
        const EquilibriumSolution& sol = *solution_;
        const auto& cs = scenario_.completeness;
        dispersion_ = dispersion(sol, {cs.relative_threshold, cs.fraction_tolerance});
        write_surface_csv(path("dispersion.csv"), dispersion_->sigma_min, "sigma_min");

        probe_.reset();
        probe_note_.clear();
        if (dispersion_->pass) {
            ProbeConfig pc;
            pc.claims = cs.claims;
            pc.random_claims = cs.random_claims;
            pc.paths = cs.probe_paths;
            pc.substeps = cs.substeps;
            pc.seed = scenario_.seed + probe_seed_offset;
            pc.rms_bound = cs.rms_bound;
            pc.threads = options_.threads;
            probe_ = martingale_uniqueness_probe(sol, *dispersion_, pc);
        } else {
            probe_note_ = "skipped: dispersion report failed";
        }

        VerifyConfig vc;
        vc.ad.interpolation_tolerance = scenario_.verify.interpolation_tolerance;
        vc.ad.normalization_floor = scenario_.verify.normalization_floor;
        vc.martingale.t1 = scenario_.verify.t1;
        vc.martingale.t2 = scenario_.verify.t2;
        vc.martingale.bins = scenario_.verify.bins;
        vc.martingale.paths = scenario_.verify.martingale_paths;
        vc.martingale.seed = scenario_.seed + martingale_seed_offset;
        vc.rank_ok = dispersion_->pass;
        vc.rank_threshold = dispersion_->threshold;
        vc.threads = options_.threads;
        verification_ = verify(sol, *prim_, vc);
        write_json(path("verification.json"), to_json(*verification_));

        json comp;
        const auto& d = *dispersion_;
        comp["dispersion"] = {{"J", d.J},
                              {"d", d.d},
                              {"threshold", d.threshold},
                              {"reference_scale", d.reference_scale},
                              {"evaluated", d.evaluated},
                              {"failures", d.failures},
                              {"failure_fraction", d.failure_fraction},
                              {"min_sigma", d.min_sigma},
                              {"max_sigma", d.max_sigma},
                              {"core_min_sigma", d.core_min_sigma},
                              {"core_max_sigma", d.core_max_sigma},
                              {"pass", d.pass}};
        if (probe_) {
            json claims = json::array();
            for (const auto& c : probe_->claims)
                claims.push_back({{"claim", c.claim},
                                  {"value0", c.value0},
                                  {"rms_error", c.rms_error},
                                  {"relative_rms", c.relative_rms},
                                  {"pass", c.pass}});
            comp["probe"] = {{"claims", claims},
                             {"rebalancing_steps", probe_->rebalancing_steps},
                             {"bound", cs.rms_bound},
                             {"pass", probe_->pass}};
        } else {
            comp["probe"] = {{"pass", false}, {"detail", probe_note_}};
        }
        write_json(path("completeness.json"), comp);

        const bool complete = d.pass && probe_ && probe_->pass;
        st.pass = verification_->pass() && verification_->controls_detected() && complete;
        std::vector<std::string> why;
        if (!verification_->pass()) why.push_back("verification checks");
        if (!verification_->controls_detected()) why.push_back("negative controls");
        if (!d.pass) why.push_back(fmt::format("dispersion rank ({} of nodes fail)", d.failure_fraction));
        else if (!complete) why.push_back("replication probe");
        if (!why.empty()) st.message = fmt::format("failed: {}", fmt::join(why, ", "));
        return st;
    });
}

StageStatus Pipeline::report() {
    return timed("report", [this] {
        StageStatus st;
        CsvTable t({"key", "value"});
        auto num = [&t](const std::string& k, double v) { t.add({k, format_number(v)}); };
        t.add({"scenario", scenario_.name});
        t.add({"seed", std::to_string(scenario_.seed)});
        t.add({"paths", std::to_string(scenario_.mc.paths)});
        t.add({"path_times", std::to_string(path_times_.size())});
        t.add({"grid", fmt::format("{}x{}", scenario_.grid.nt, scenario_.grid.nx)});
        t.add({"M", std::to_string(econ_->M())});
        t.add({"J", std::to_string(econ_->J())});
        t.add({"d", std::to_string(econ_->d())});
        if (weights_) {
            for (std::size_t m = 0; m < weights_->w.size(); ++m) num(fmt::format("w{}", m), weights_->w[m]);
            num("w_min", weights_->w.min());
            t.add({"iterations", std::to_string(weights_->iterations)});
            num("phi_inf", weights_->excess.phi_inf());
            num("phi_max_standard_error", weights_->excess.max_standard_error());
            num("phi_sum", weights_->excess.phi_sum);
        }
        if (solution_) {
            num("Y0", solution_->Y0());
            const auto& x0 = econ_->diffusion.x0;
            for (std::size_t j = 0; j < econ_->J(); ++j)
                num(fmt::format("s{}_0", j), solution_->stocks[j].s.on_slice(0, x0));
            num("b_0", solution_->numeraire.at(0.0, x0));
            num("min_v", solution_->min_v);
            num("min_b", solution_->min_b);
        }
        for (const auto& e : closed_form_) num(fmt::format("closed_form_{}_max_rel_error", e.surface), e.max_relative_error);
        if (dispersion_) {
            num("dispersion_failure_fraction", dispersion_->failure_fraction);
            num("dispersion_core_min_sigma", dispersion_->core_min_sigma);
            num("dispersion_core_max_sigma", dispersion_->core_max_sigma);
        }
        if (probe_) num("probe_worst_relative_rms", probe_->claims[probe_->worst].relative_rms);
        if (verification_) {
            for (const auto& c : verification_->checks)
                t.add({fmt::format("check_{}", c.name), c.skipped ? "skipped" : (c.pass ? "pass" : "fail")});
            t.add({"controls_detected", verification_->controls_detected() ? "1" : "0"});
        }
        for (const auto& s : stages_) t.add({fmt::format("stage_{}", s.name), s.pass ? "pass" : "fail"});
        t.write(path("summary.csv"));
        json timing = json::object();
        for (const auto& s : stages_) timing[s.name] = s.seconds;
        write_json(path("timings.json"), timing);
        st.pass = true;
        return st;
    });
}

int Pipeline::run() {
    fs::create_directories(options_.out_dir);
    const auto& names = stage_names();
    const std::string last = options_.command == "all" ? "report" : options_.command;
    bool ok = true;
    for (const auto& name : names) {
        StageStatus s;
        if (name == "validate") s = validate();
        else if (name == "solve") s = solve();
        else if (name == "price") s = price();
        else if (name == "check") s = check();
        else s = report();
        ok = ok && s.pass;
        if (name == last) break;
        if (!s.pass && !options_.keep_going) {
            // Stages with missing inputs cannot continue; still leave a summary.
            if (last == "report" && name != "report") report();
            break;
        }
        if (!s.pass && ((name == "solve" && !weights_) || (name == "price" && !solution_))) {
            if (last == "report") report();
            break;
        }
    }
    return ok ? 0 : 1;
}

} // namespace radner
