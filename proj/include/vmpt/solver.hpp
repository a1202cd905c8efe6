#pragma once

#include "vmpt/metric.hpp"
#include "vmpt/pdas.hpp"
#include "vmpt/qp.hpp"
#include "vmpt/types.hpp"

#include <cmath>
#include <concepts>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <type_traits>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace vmpt {

enum class StopRule { HNorm, ScaledL2Grad };

inline std::string to_string(StopRule r) {
    return r == StopRule::HNorm ? "h_norm" : "scaled_l2_grad";
}

struct SolverConfig {
    double beta = 0.5;   // backtracking factor
    double sigma = 1e-4; // Armijo slope fraction
    double tol = 1e-5;
    int k_max = 100000;
    double lambda0 = 1.0;
    double lambda_min = 0.0; // <= 0: resolved to 1e-6 * lambda0
    double lambda_max = 0.0; // <= 0: resolved to 1e+6 * lambda0
    double lambda_up = 1.0 / 0.75;
    double lambda_down = 0.75;
    int max_backtracks = 60;
    bool strict_invariants = false;
    StopRule stop_rule = StopRule::HNorm;
    double stop_scale = 1.0; // multiplies |v|_H under ScaledL2Grad
    PdasOptions pdas;

    SolverConfig resolved() const {
        SolverConfig c = *this;
        if (c.lambda_min <= 0.0) c.lambda_min = 1e-6 * c.lambda0;
        if (c.lambda_max <= 0.0) c.lambda_max = 1e+6 * c.lambda0;
        return c;
    }

    void validate() const {
        auto fail = [](const std::string& what) { throw ConfigError("SolverConfig: " + what); };
        if (!(beta > 0.0 && beta < 1.0)) fail("beta must lie in (0,1)");
        if (!(sigma > 0.0 && sigma < 1.0)) fail("sigma must lie in (0,1)");
        if (!(tol >= 0.0) || !std::isfinite(tol)) fail("tol must be a finite nonnegative number");
        if (k_max < 1) fail("k_max must be positive");
        if (!(lambda0 > 0.0) || !std::isfinite(lambda0)) fail("lambda0 must be positive and finite");
        if (!(lambda_min > 0.0 && lambda_min <= lambda0 && lambda0 <= lambda_max))
            fail("need 0 < lambda_min <= lambda0 <= lambda_max");
        if (!std::isfinite(lambda_max)) fail("lambda_max must be finite");
        if (!(lambda_up > 0.0 && lambda_down > 0.0)) fail("lambda factors must be positive");
        if (max_backtracks < 1) fail("max_backtracks must be positive");
        if (!(stop_scale > 0.0)) fail("stop_scale must be positive");
    }
};

struct TraceRow {
    int k = 0;
    double j = 0.0;
    double slope = 0.0;
    double norm_v = 0.0;
    double alpha = 0.0;
    double lambda = 0.0;
    int backtracks = 0;
    int pdas_iters = 0;
    bool descent_ok = true;
    bool feasible_ok = true;
};

enum class TerminationReason { Converged, MaxIterations, LineSearchFailure };

inline std::string to_string(TerminationReason r) {
    switch (r) {
    case TerminationReason::Converged: return "converged";
    case TerminationReason::MaxIterations: return "k_max";
    case TerminationReason::LineSearchFailure: return "line_search_failure";
    }
    return "?";
}

/// Per-run context a trace needs to be re-checked after the fact.
struct TraceInfo {
    std::string metric = "?";
    double c1 = 1.0;
    bool coercivity_in_h_norm = true;
    bool coercivity_guaranteed = true;
    double sigma = 1e-4;
    double beta = 0.5;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double tol = 0.0;
    StopRule stop_rule = StopRule::HNorm;
    double stop_scale = 1.0;
};

struct SolverTrace {
    std::vector<TraceRow> rows;
    TerminationReason reason = TerminationReason::MaxIterations;
    TraceInfo info;

    int descent_violations() const {
        int n = 0;
        for (const auto& r : rows) n += r.descent_ok ? 0 : 1;
        return n;
    }
    int feasibility_violations() const {
        int n = 0;
        for (const auto& r : rows) n += r.feasible_ok ? 0 : 1;
        return n;
    }
};

namespace detail {
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}
} // namespace detail

inline void write_trace_csv(std::ostream& os, const SolverTrace& trace) {
    const TraceInfo& i = trace.info;
    os << "# metric=" << i.metric << " c1=" << detail::fmt17(i.c1)
       << " coercivity_in_h_norm=" << (i.coercivity_in_h_norm ? 1 : 0)
       << " coercivity_guaranteed=" << (i.coercivity_guaranteed ? 1 : 0) << "\n";
    os << "# sigma=" << detail::fmt17(i.sigma) << " beta=" << detail::fmt17(i.beta)
       << " lambda_min=" << detail::fmt17(i.lambda_min)
       << " lambda_max=" << detail::fmt17(i.lambda_max) << " tol=" << detail::fmt17(i.tol)
       << " stop_rule=" << to_string(i.stop_rule) << " stop_scale=" << detail::fmt17(i.stop_scale)
       << "\n";
    os << "# reason=" << to_string(trace.reason) << "\n";
    os << "k,j,slope,norm_v,alpha,lambda,backtracks,pdas_iters\n";
    for (const auto& r : trace.rows)
        os << r.k << ',' << detail::fmt17(r.j) << ',' << detail::fmt17(r.slope) << ','
           << detail::fmt17(r.norm_v) << ',' << detail::fmt17(r.alpha) << ','
           << detail::fmt17(r.lambda) << ',' << r.backtracks << ',' << r.pdas_iters << "\n";
}

inline SolverTrace read_trace_csv(std::istream& is) {
    SolverTrace trace;
    std::string line;
    bool header_seen = false;
    auto parse_info = [&trace](const std::string& body) {
        std::istringstream ss(body);
        std::string tok;
        while (ss >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
            TraceInfo& i = trace.info;
            if (key == "metric") i.metric = val;
            else if (key == "c1") i.c1 = std::stod(val);
            else if (key == "coercivity_in_h_norm") i.coercivity_in_h_norm = val != "0";
            else if (key == "coercivity_guaranteed") i.coercivity_guaranteed = val != "0";
            else if (key == "sigma") i.sigma = std::stod(val);
            else if (key == "beta") i.beta = std::stod(val);
            else if (key == "lambda_min") i.lambda_min = std::stod(val);
            else if (key == "lambda_max") i.lambda_max = std::stod(val);
            else if (key == "tol") i.tol = std::stod(val);
            else if (key == "stop_scale") i.stop_scale = std::stod(val);
            else if (key == "stop_rule")
                i.stop_rule = val == "scaled_l2_grad" ? StopRule::ScaledL2Grad : StopRule::HNorm;
            else if (key == "reason") {
                if (val == "converged") trace.reason = TerminationReason::Converged;
                else if (val == "line_search_failure") trace.reason = TerminationReason::LineSearchFailure;
                else trace.reason = TerminationReason::MaxIterations;
            }
        }
    };
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            parse_info(line.substr(1));
            continue;
        }
        if (!header_seen) {
            if (line.rfind("k,j,", 0) != 0)
                throw ConfigError("trace csv: missing header line");
            header_seen = true;
            continue;
        }
        TraceRow r;
        char* end = nullptr;
        const char* p = line.c_str();
        auto next_field = [&](bool last = false) {
            const double v = std::strtod(p, &end);
            if (end == p || (!last && *end != ','))
                throw ConfigError("trace csv: malformed row '" + line + "'");
            p = last ? end : end + 1;
            return v;
        };
        r.k = static_cast<int>(next_field());
        r.j = next_field();
        r.slope = next_field();
        r.norm_v = next_field();
        r.alpha = next_field();
        r.lambda = next_field();
        r.backtracks = static_cast<int>(next_field());
        r.pdas_iters = static_cast<int>(next_field(true));
        trace.rows.push_back(r);
    }
    return trace;
}

/// One backtracking line search: alpha = beta^m with the smallest m in
/// {0,...,max_backtracks} satisfying
///   j(phi + alpha v) <= j0 + alpha sigma slope.
/// Requires slope < 0; returns the accepted step and its functional value.
struct ArmijoResult {
    double alpha = 1.0;
    int backtracks = 0;
    double j_new = 0.0;
};

template <class F>
ArmijoResult armijo_backtrack(F&& j, const Vector& phi, const Vector& v, double j0, double slope,
                              const SolverConfig& cfg) {
    if (!(slope < 0.0)) throw Error("armijo_backtrack: needs a descent direction (slope < 0)");
    double alpha = 1.0;
    for (int m = 0; m <= cfg.max_backtracks; ++m) {
        const double j_new = j((phi + alpha * v).eval());
        if (j_new <= j0 + alpha * cfg.sigma * slope) return {alpha, m, j_new};
        alpha *= cfg.beta;
    }
    throw LineSearchFailure("no Armijo step within max_backtracks");
}

/// lambda_k from lambda_{k-1}: grow after a full step, shrink otherwise,
/// clamped to [lambda_min, lambda_max].
inline double update_lambda(double prev_lambda, double prev_alpha, const SolverConfig& cfg) {
    const double lam =
        prev_alpha == 1.0 ? prev_lambda * cfg.lambda_up : prev_lambda * cfg.lambda_down;
    return std::min(cfg.lambda_max, std::max(cfg.lambda_min, lam));
}

/// Descent inequality <j'(phi), v> <= -(c1/lambda_max) |v|^2 with a small
/// relative slack; every correct subproblem solution satisfies it.
inline bool check_descent(double slope, double norm_v, double c1, double lambda_max) {
    return slope <= -(c1 / lambda_max) * norm_v * norm_v + 1e-10 * (1.0 + std::abs(slope));
}

/// Current loop state handed to observers.
struct IterationState {
    int k;
    const Vector& phi;
    double lambda;
    double j_val;
    const Vector& grad;
    const Vector& v;
    double alpha; // 0 before the line search of this iteration ran
};

template <class P>
concept ReducedProblemType = requires(P& p, const Vector& x) {
    { p.value(x) } -> std::convertible_to<double>;
    { p.gradient(x) } -> std::convertible_to<Vector>;
    { p.feasible_region() } -> std::convertible_to<const FeasibleRegion&>;
    { p.h_form() } -> std::convertible_to<const SparseMatrix&>;
};

template <class F>
concept MetricFactoryType = requires(F& f, int k, const Vector& x) {
    { f.make(k, x, x) } -> std::convertible_to<MetricForm>;
};

template <class F>
concept PairAwareMetricFactory = requires(F& f, const Vector& p) { f.push_pair(p, p); };

struct SolveResult {
    Vector phi;
    double j_final = 0.0;
    SolverTrace trace;

    bool converged() const { return trace.reason == TerminationReason::Converged; }
    int iterations() const { return rows_with_step(); }
    int rows_with_step() const {
        int n = 0;
        for (const auto& r : trace.rows) n += r.alpha > 0.0 ? 1 : 0;
        return n;
    }
};

/// Variable-metric projection-type loop: per iteration pick lambda_k and a_k,
/// solve the projection subproblem for the search direction, test the
/// stopping rule on |v_k|_H, then Armijo-backtrack along v_k.
template <class Problem, class Factory, class Observer>
SolveResult vmpt_solve(Problem& problem, Factory& metric_factory, const SolverConfig& config,
                       const Vector& phi0, Observer&& observer)
    requires ReducedProblemType<Problem> && MetricFactoryType<Factory>
{
    const SolverConfig cfg = config.resolved();
    cfg.validate();
    const FeasibleRegion& region = problem.feasible_region();
    const SparseMatrix& h_form = problem.h_form();

    const double feas_tol_start = 1e-9 * (1.0 + phi0.template lpNorm<Eigen::Infinity>());
    if (!region.contains(phi0, feas_tol_start))
        throw InfeasibleStart("vmpt_solve: phi0 violates the feasible set");

    SolveResult result;
    result.trace.info.sigma = cfg.sigma;
    result.trace.info.beta = cfg.beta;
    result.trace.info.lambda_min = cfg.lambda_min;
    result.trace.info.lambda_max = cfg.lambda_max;
    result.trace.info.tol = cfg.tol;
    result.trace.info.stop_rule = cfg.stop_rule;
    result.trace.info.stop_scale = cfg.stop_scale;

    Vector phi = phi0;
    double lambda = cfg.lambda0;
    double prev_alpha = 1.0;
    Vector prev_phi, prev_grad;
    ActiveSetState warm;
    bool have_warm = false;
    result.trace.reason = TerminationReason::MaxIterations;

    for (int k = 0; k <= cfg.k_max; ++k) {
        const double j_val = problem.value(phi);
        const Vector grad = problem.gradient(phi);
        if (k > 0) {
            if constexpr (PairAwareMetricFactory<Factory>)
                metric_factory.push_pair(phi - prev_phi, grad - prev_grad);
            lambda = update_lambda(lambda, prev_alpha, cfg);
        }
        decltype(auto) metric = metric_factory.make(k, phi, grad);
        if (k == 0) {
            result.trace.info.metric = to_string(metric.kind);
            result.trace.info.c1 = metric.c1;
            result.trace.info.coercivity_in_h_norm = metric.coercivity_in_h_norm;
            result.trace.info.coercivity_guaranteed = metric.coercivity_guaranteed;
        }

        QPProblem qp = metric.make_subproblem(phi, grad, lambda, region);
        auto [y, pdas_state] = solve_projection(qp, phi, cfg.pdas, have_warm ? &warm : nullptr);
        warm = pdas_state;
        have_warm = true;

        const Vector v = y - phi;
        const double norm_v = std::sqrt(std::max(0.0, v.dot(h_form * v)));
        const double slope = grad.dot(v);

        TraceRow row;
        row.k = k;
        row.j = j_val;
        row.slope = slope;
        row.norm_v = norm_v;
        row.lambda = lambda;
        row.pdas_iters = pdas_state.iters;
        row.feasible_ok =
            region.contains(phi, 1e-10 * (1.0 + phi.template lpNorm<Eigen::Infinity>()));
        const double cnorm = std::sqrt(std::max(0.0, metric.coercivity_norm_sq(v, h_form)));
        row.descent_ok = check_descent(slope, cnorm, metric.c1, cfg.lambda_max);

        if constexpr (!std::is_same_v<std::decay_t<Observer>, std::nullptr_t>)
            observer(IterationState{k, phi, lambda, j_val, grad, v, 0.0});

        const double stop_quantity =
            cfg.stop_rule == StopRule::HNorm ? norm_v : cfg.stop_scale * norm_v;
        if (stop_quantity <= cfg.tol) {
            result.trace.rows.push_back(row);
            result.trace.reason = TerminationReason::Converged;
            break;
        }
        if (cfg.strict_invariants && metric.coercivity_guaranteed && !row.descent_ok)
            throw Error("vmpt_solve: descent inequality violated (strict mode)");
        if (cfg.strict_invariants && !row.feasible_ok)
            throw Error("vmpt_solve: iterate infeasible (strict mode)");

        if (!(slope < 0.0)) {
            // the subproblem guarantees a negative slope; hitting roundoff
            // here means the iterate is numerically stationary below tol
            result.trace.rows.push_back(row);
            result.trace.reason = TerminationReason::LineSearchFailure;
            break;
        }
        ArmijoResult ls;
        try {
            ls = armijo_backtrack([&problem](const Vector& x) { return problem.value(x); }, phi, v,
                                  j_val, slope, cfg);
        } catch (const LineSearchFailure&) {
            result.trace.rows.push_back(row);
            result.trace.reason = TerminationReason::LineSearchFailure;
            break;
        }
        row.alpha = ls.alpha;
        row.backtracks = ls.backtracks;
        result.trace.rows.push_back(row);

        prev_phi = phi;
        prev_grad = grad;
        prev_alpha = ls.alpha;
        phi += ls.alpha * v;
    }

    result.phi = std::move(phi);
    result.j_final = problem.value(result.phi);
    return result;
}

template <class Problem, class Factory>
SolveResult vmpt_solve(Problem& problem, Factory& metric_factory, const SolverConfig& config,
                       const Vector& phi0)
    requires ReducedProblemType<Problem> && MetricFactoryType<Factory>
{
    return vmpt_solve(problem, metric_factory, config, phi0, nullptr);
}

} // namespace vmpt
