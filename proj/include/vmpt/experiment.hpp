#pragma once

#include "vmpt/config.hpp"
#include "vmpt/export.hpp"
#include "vmpt/metric.hpp"
#include "vmpt/phasefield.hpp"
#include "vmpt/solver.hpp"
#include "vmpt/types.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace vmpt {

inline MetricKind parse_metric(const std::string& name) {
    if (name == "l2") return MetricKind::L2;
    if (name == "h1") return MetricKind::H1;
    if (name == "scaled_h1") return MetricKind::ScaledH1;
    if (name == "second_order") return MetricKind::SecondOrder;
    if (name == "lbfgs") return MetricKind::Lbfgs;
    throw ConfigError("unknown metric '" + name + "' (expected l2|h1|scaled_h1|second_order|lbfgs)");
}

/// Everything one run needs, with the documented config keys and defaults.
struct AppConfig {
    double h = 1.0 / 32;
    double lx = 2.0;
    double ly = 1.0;
    double epsilon = 0.04;
    double gamma = 0.5;
    Vector fractions = (Vector(2) << 0.5, 0.5).finished();
    StiffnessModel stiffness;
    Eigen::Vector2d traction = Eigen::Vector2d(0.0, -1.0);
    double load_center = 0.5;
    double load_width = 0.25;

    MetricKind metric = MetricKind::H1;
    double tol = 1e-5;
    StopRule stop_rule = StopRule::HNorm;
    int k_max = 100000;
    double sigma = 1e-4;
    double beta = 0.5;
    double lambda0 = 0.0; // 0: use 0.005 / (gamma * epsilon)
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    int max_backtracks = 60;
    unsigned seed = 1;
    std::string initial = "uniform"; // uniform | random
    bool strict_invariants = false;
    int lbfgs_depth = 10;
    double pdas_c = 1.0;

    static AppConfig from_config(const Config& cfg) {
        AppConfig a;
        a.h = cfg.get_double("mesh.h", a.h);
        a.lx = cfg.get_double("mesh.lx", a.lx);
        a.ly = cfg.get_double("mesh.ly", a.ly);
        a.epsilon = cfg.get_double("epsilon", a.epsilon);
        a.gamma = cfg.get_double("gamma", a.gamma);
        if (cfg.has("fractions")) {
            const auto f = cfg.get_list("fractions");
            a.fractions = Eigen::Map<const Vector>(f.data(), static_cast<Index>(f.size()));
        }
        a.stiffness.e_hard = cfg.get_double("stiffness.e_hard", a.stiffness.e_hard);
        a.stiffness.e_soft = cfg.get_double("stiffness.e_soft", a.stiffness.e_soft);
        a.stiffness.nu_hard = cfg.get_double("stiffness.nu", a.stiffness.nu_hard);
        a.stiffness.nu_soft = cfg.get_double("stiffness.nu", a.stiffness.nu_soft);
        a.stiffness.nu_hard = cfg.get_double("stiffness.nu_hard", a.stiffness.nu_hard);
        a.stiffness.nu_soft = cfg.get_double("stiffness.nu_soft", a.stiffness.nu_soft);
        a.traction[0] = cfg.get_double("load.gx", a.traction[0]);
        a.traction[1] = cfg.get_double("load.gy", a.traction[1]);
        a.load_center = cfg.get_double("load.center", a.load_center);
        a.load_width = cfg.get_double("load.width", a.load_width);
        a.metric = parse_metric(cfg.get_string("metric", to_string(a.metric)));
        a.tol = cfg.get_double("tol", a.tol);
        const std::string rule = cfg.get_string("stop_rule", to_string(a.stop_rule));
        if (rule == "h_norm") a.stop_rule = StopRule::HNorm;
        else if (rule == "scaled_l2_grad") a.stop_rule = StopRule::ScaledL2Grad;
        else throw ConfigError("unknown stop_rule '" + rule + "'");
        a.k_max = cfg.get_int("k_max", a.k_max);
        a.sigma = cfg.get_double("sigma", a.sigma);
        a.beta = cfg.get_double("beta", a.beta);
        a.lambda0 = cfg.get_double("lambda0", a.lambda0);
        a.lambda_min = cfg.get_double("lambda_min", a.lambda_min);
        a.lambda_max = cfg.get_double("lambda_max", a.lambda_max);
        a.max_backtracks = cfg.get_int("max_backtracks", a.max_backtracks);
        a.seed = static_cast<unsigned>(cfg.get_int("seed", static_cast<int>(a.seed)));
        a.initial = cfg.get_string("initial", a.initial);
        if (a.initial != "uniform" && a.initial != "random")
            throw ConfigError("initial must be 'uniform' or 'random'");
        a.strict_invariants = cfg.get_bool("strict_invariants", a.strict_invariants);
        a.lbfgs_depth = cfg.get_int("lbfgs_depth", a.lbfgs_depth);
        a.pdas_c = cfg.get_double("pdas_c", a.pdas_c);
        return a;
    }

    ProblemParams problem_params() const {
        ProblemParams p;
        p.epsilon = epsilon;
        p.gamma = gamma;
        p.fractions = fractions;
        p.stiffness = stiffness;
        p.traction = traction;
        p.load_center = load_center;
        p.load_width = load_width;
        return p;
    }

    SolverConfig solver_config(double auto_lambda0) const {
        SolverConfig c;
        c.beta = beta;
        c.sigma = sigma;
        c.tol = tol;
        c.k_max = k_max;
        c.lambda0 = lambda0 > 0.0 ? lambda0 : auto_lambda0;
        c.lambda_min = lambda_min;
        c.lambda_max = lambda_max;
        c.max_backtracks = max_backtracks;
        c.strict_invariants = strict_invariants;
        c.stop_rule = stop_rule;
        c.stop_scale = std::sqrt(gamma * epsilon);
        c.pdas.c_scale = pdas_c;
        return c;
    }
};

inline SolveResult solve_with_metric(ComplianceProblem& problem, MetricKind metric,
                                     const SolverConfig& cfg, const Vector& phi0,
                                     int lbfgs_depth = 10) {
    const double ge = problem.params().gamma * problem.params().epsilon;
    switch (metric) {
    case MetricKind::H1: {
        FixedMetricFactory f(make_h1_metric(problem.mesh(), 1.0, 2));
        return vmpt_solve(problem, f, cfg, phi0);
    }
    case MetricKind::ScaledH1: {
        FixedMetricFactory f(make_h1_metric(problem.mesh(), ge, 2));
        return vmpt_solve(problem, f, cfg, phi0);
    }
    case MetricKind::L2: {
        FixedMetricFactory f(make_l2_metric(problem.mesh(), 2));
        return vmpt_solve(problem, f, cfg, phi0);
    }
    case MetricKind::SecondOrder: {
        SecondOrderMetricFactory f(problem);
        return vmpt_solve(problem, f, cfg, phi0);
    }
    case MetricKind::Lbfgs: {
        LbfgsMetricFactory f(ge * problem.h_form(), ge, lbfgs_depth);
        return vmpt_solve(problem, f, cfg, phi0);
    }
    }
    throw Error("solve_with_metric: unhandled metric kind");
}

struct RunResult {
    double h = 0.0;
    std::string metric = "?";
    int iters = 0;
    double cpu_seconds = 0.0;
    double j_final = std::numeric_limits<double>::quiet_NaN();
    double compliance = std::numeric_limits<double>::quiet_NaN();
    double gl_energy = std::numeric_limits<double>::quiet_NaN();
    std::string terminate_reason = "error";
    bool ok = false;
};

struct RunOutput {
    RunResult row;
    std::optional<SolveResult> solve;
};

/// One solve from an AppConfig; when out_dir is nonempty, writes trace.csv,
/// final.vtk and final.csv there.
inline RunOutput run_single(const AppConfig& app, const std::string& out_dir = "") {
    RunOutput out;
    out.row.h = app.h;
    out.row.metric = to_string(app.metric);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        TriMesh mesh = TriMesh::rectangle_with_h(app.h, app.lx, app.ly);
        ComplianceProblem problem(mesh, app.problem_params());
        const Vector phi0 = app.initial == "uniform"
                                ? uniform_initial(mesh)
                                : random_initial(mesh, problem.feasible_region(), app.seed);
        const SolverConfig cfg = app.solver_config(problem.default_lambda0());
        SolveResult res = solve_with_metric(problem, app.metric, cfg, phi0, app.lbfgs_depth);

        out.row.iters = res.iterations();
        out.row.j_final = res.j_final;
        out.row.compliance = problem.compliance(res.phi);
        out.row.gl_energy = problem.gl_energy(res.phi);
        out.row.terminate_reason = to_string(res.trace.reason);
        out.row.ok = true;

        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            const Vector chi = problem.hard_fraction(res.phi);
            const DisplacementField& u = problem.state(res.phi);
            std::ofstream ft(out_dir + "/trace.csv");
            write_trace_csv(ft, res.trace);
            std::ofstream fv(out_dir + "/final.vtk");
            write_vtk(fv, mesh, chi, u);
            std::ofstream fc(out_dir + "/final.csv");
            write_field_csv(fc, mesh, chi, u);
        }
        out.solve = std::move(res);
    } catch (const std::exception& e) {
        out.row.terminate_reason = std::string("error: ") + e.what();
        out.row.ok = false;
    }
    const auto t1 = std::chrono::steady_clock::now();
    out.row.cpu_seconds = std::chrono::duration<double>(t1 - t0).count();
    return out;
}

struct ExperimentSpec {
    AppConfig base;
    std::vector<double> h_values;          // empty: just base.h
    std::vector<MetricKind> metric_values; // empty: just base.metric
    std::string table_kind = "mesh_sweep"; // mesh_sweep | metric_compare | bfgs_sweep
    std::string out_dir = "out";

    static ExperimentSpec from_config(const Config& cfg) {
        ExperimentSpec s;
        s.base = AppConfig::from_config(cfg);
        s.h_values = cfg.get_list("sweep.h");
        for (const auto& name : cfg.get_words("sweep.metric"))
            s.metric_values.push_back(parse_metric(name));
        s.table_kind = cfg.get_string("sweep.table", s.table_kind);
        if (s.table_kind != "mesh_sweep" && s.table_kind != "metric_compare" &&
            s.table_kind != "bfgs_sweep")
            throw ConfigError("sweep.table must be mesh_sweep|metric_compare|bfgs_sweep");
        s.out_dir = cfg.get_string("out", s.out_dir);
        validate_h(s.h_values);
        return s;
    }

    static void validate_h(const std::vector<double>& hs) {
        for (double h : hs) {
            bool ok = false;
            for (int k = 3; k <= 8; ++k)
                if (std::abs(h - std::ldexp(1.0, -k)) <= 1e-12) ok = true;
            if (!ok)
                throw ConfigError("sweep.h entries must be powers of two between 2^-3 and 2^-8");
        }
    }
};

/// Runs every (metric, h) combination in spec order; failures are recorded
/// in their row and do not stop the sweep.
inline std::vector<RunResult> run_experiment(const ExperimentSpec& spec,
                                             std::vector<RunOutput>* outputs = nullptr) {
    std::vector<double> hs = spec.h_values.empty() ? std::vector<double>{spec.base.h}
                                                   : spec.h_values;
    std::vector<MetricKind> ms =
        spec.metric_values.empty() ? std::vector<MetricKind>{spec.base.metric} : spec.metric_values;
    std::vector<RunResult> rows;
    int idx = 0;
    for (MetricKind m : ms) {
        for (double h : hs) {
            AppConfig app = spec.base;
            app.h = h;
            app.metric = m;
            std::ostringstream dir;
            if (!spec.out_dir.empty())
                dir << spec.out_dir << "/run_" << std::setfill('0') << std::setw(3) << idx << "_"
                    << to_string(m) << "_h" << h;
            RunOutput out = run_single(app, dir.str());
            rows.push_back(out.row);
            if (outputs) outputs->push_back(std::move(out));
            ++idx;
        }
    }
    return rows;
}

inline void write_results_csv(std::ostream& os, const std::vector<RunResult>& rows) {
    os << "h,metric,iters,cpu_seconds,j_final,compliance,gl_energy,terminate_reason\n";
    for (const auto& r : rows)
        os << detail::fmt17(r.h) << ',' << r.metric << ',' << r.iters << ','
           << detail::fmt17(r.cpu_seconds) << ',' << detail::fmt17(r.j_final) << ','
           << detail::fmt17(r.compliance) << ',' << detail::fmt17(r.gl_energy) << ','
           << r.terminate_reason << "\n";
}

inline std::vector<RunResult> read_results_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("h,metric,", 0) != 0)
        throw ConfigError("results csv: missing header");
    std::vector<RunResult> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        for (int f = 0; f < 7; ++f) {
            const auto comma = line.find(',', pos);
            if (comma == std::string::npos)
                throw ConfigError("results csv: malformed row '" + line + "'");
            fields.push_back(line.substr(pos, comma - pos));
            pos = comma + 1;
        }
        fields.push_back(line.substr(pos));
        RunResult r;
        r.h = std::stod(fields[0]);
        r.metric = fields[1];
        r.iters = std::stoi(fields[2]);
        r.cpu_seconds = std::stod(fields[3]);
        r.j_final = std::stod(fields[4]);
        r.compliance = std::stod(fields[5]);
        r.gl_energy = std::stod(fields[6]);
        r.terminate_reason = fields[7];
        r.ok = r.terminate_reason.rfind("error", 0) != 0;
        rows.push_back(r);
    }
    return rows;
}

/// Aligned text table of sweep results.
inline void report_table(std::ostream& os, const std::vector<RunResult>& rows) {
    const std::vector<std::string> header = {"h",       "metric",     "iters",
                                             "cpu_s",   "j_final",    "compliance",
                                             "gl_energy", "reason"};
    std::vector<std::vector<std::string>> cells;
    cells.push_back(header);
    auto num = [](double v, int prec) {
        std::ostringstream ss;
        ss << std::setprecision(prec) << v;
        return ss.str();
    };
    for (const auto& r : rows)
        cells.push_back({num(r.h, 6), r.metric, std::to_string(r.iters), num(r.cpu_seconds, 4),
                         num(r.j_final, 8), num(r.compliance, 8), num(r.gl_energy, 8),
                         r.terminate_reason});
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c)
            os << std::left << std::setw(static_cast<int>(width[c]) + 2) << row[c];
        os << "\n";
    }
}

/// Post-hoc checks of the solver invariants on a recorded trace. Returns one
/// message per violated property; an empty list means the trace is clean.
inline std::vector<std::string> verify_trace(const SolverTrace& trace) {
    std::vector<std::string> problems;
    const TraceInfo& info = trace.info;
    auto complain = [&problems](int k, const std::string& what) {
        problems.push_back("row k=" + std::to_string(k) + ": " + what);
    };
    for (std::size_t i = 0; i < trace.rows.size(); ++i) {
        const TraceRow& r = trace.rows[i];
        const bool stepped = r.alpha > 0.0;
        if (stepped && !(r.slope < 0.0)) complain(r.k, "directional derivative not negative");
        if (info.lambda_max > 0.0 && !(r.lambda >= info.lambda_min && r.lambda <= info.lambda_max))
            complain(r.k, "lambda outside [lambda_min, lambda_max]");
        if (stepped) {
            double alpha = 1.0;
            for (int m = 0; m < r.backtracks; ++m) alpha *= info.beta;
            if (std::abs(alpha - r.alpha) > 1e-15 * alpha)
                complain(r.k, "alpha != beta^backtracks");
        }
        if (info.coercivity_guaranteed && info.coercivity_in_h_norm && info.lambda_max > 0.0) {
            if (!check_descent(r.slope, r.norm_v, info.c1, info.lambda_max))
                complain(r.k, "descent inequality violated");
        }
        if (stepped && i + 1 < trace.rows.size()) {
            const TraceRow& nxt = trace.rows[i + 1];
            const double bound = r.j + r.alpha * info.sigma * r.slope;
            if (!(nxt.j <= bound + 1e-12 * (1.0 + std::abs(r.j))))
                complain(r.k, "Armijo decrease violated between rows");
            if (!(nxt.j < r.j + 1e-12 * (1.0 + std::abs(r.j))))
                complain(r.k, "objective did not decrease");
        }
    }
    if (trace.reason == TerminationReason::Converged && !trace.rows.empty()) {
        const TraceRow& last = trace.rows.back();
        const double q = info.stop_rule == StopRule::HNorm ? last.norm_v
                                                           : info.stop_scale * last.norm_v;
        if (!(q <= info.tol)) complain(last.k, "claimed convergence but stop quantity > tol");
    }
    return problems;
}

} // namespace vmpt
