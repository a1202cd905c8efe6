// Experiment harness: single solves, mesh/metric sweeps, trace verification
// and field re-export around the vmpt library.

#include "vmpt/vmpt.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::string> metric;
    std::optional<double> h;
    std::optional<double> eps;
    std::optional<double> gamma;
    std::optional<double> tol;
    std::optional<int> seed;
    std::optional<std::string> initial;
    std::optional<int> k_max;
    std::string out_dir = "out";
    bool strict = false;

    void attach(CLI::App* cmd) {
        cmd->set_help_flag("--help", "print this help message and exit");
        cmd->add_option("--config", config_path, "config file (key = value lines)");
        cmd->add_option("--metric", metric, "l2|h1|scaled_h1|second_order|lbfgs");
        cmd->add_option("--h", h, "uniform mesh size");
        cmd->add_option("--eps", eps, "interface width parameter");
        cmd->add_option("--gamma", gamma, "perimeter weight");
        cmd->add_option("--tol", tol, "stopping tolerance");
        cmd->add_option("--seed", seed, "rng seed for random initial guesses");
        cmd->add_option("--initial", initial, "uniform|random");
        cmd->add_option("--k-max", k_max, "iteration cap");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_flag("--strict-invariants", strict,
                      "abort when a per-iteration invariant fails");
    }

    vmpt::Config load() const {
        vmpt::Config cfg;
        if (!config_path.empty()) cfg = vmpt::Config::parse_file(config_path);
        auto set_num = [&cfg](const char* key, const std::optional<double>& v) {
            if (v) {
                std::ostringstream ss;
                ss.precision(17);
                ss << *v;
                cfg.set(key, ss.str());
            }
        };
        set_num("mesh.h", h);
        set_num("epsilon", eps);
        set_num("gamma", gamma);
        set_num("tol", tol);
        if (metric) cfg.set("metric", *metric);
        if (seed) cfg.set("seed", std::to_string(*seed));
        if (initial) cfg.set("initial", *initial);
        if (k_max) cfg.set("k_max", std::to_string(*k_max));
        if (strict) cfg.set("strict_invariants", "true");
        cfg.set("out", out_dir);
        return cfg;
    }
};

int cmd_solve(const CommonFlags& flags) {
    const vmpt::Config cfg = flags.load();
    const vmpt::AppConfig app = vmpt::AppConfig::from_config(cfg);
    const vmpt::RunOutput out = vmpt::run_single(app, flags.out_dir);
    std::vector<vmpt::RunResult> rows = {out.row};
    vmpt::report_table(std::cout, rows);
    std::ofstream f(flags.out_dir + "/results.csv");
    vmpt::write_results_csv(f, rows);
    if (!out.row.ok) {
        std::cerr << out.row.terminate_reason << "\n";
        return 1;
    }
    return 0;
}

int cmd_sweep(const CommonFlags& flags) {
    const vmpt::Config cfg = flags.load();
    const vmpt::ExperimentSpec spec = vmpt::ExperimentSpec::from_config(cfg);
    const auto rows = vmpt::run_experiment(spec);
    vmpt::report_table(std::cout, rows);
    std::ofstream f(spec.out_dir + "/results.csv");
    vmpt::write_results_csv(f, rows);
    bool any_ok = false;
    for (const auto& r : rows) any_ok |= r.ok;
    return rows.empty() || any_ok ? 0 : 1;
}

int cmd_verify_trace(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        std::cerr << "cannot open trace '" << path << "'\n";
        return 2;
    }
    const vmpt::SolverTrace trace = vmpt::read_trace_csv(f);
    const auto problems = vmpt::verify_trace(trace);
    if (problems.empty()) {
        std::cout << "trace ok (" << trace.rows.size() << " rows, reason "
                  << vmpt::to_string(trace.reason) << ")\n";
        return 0;
    }
    for (const auto& p : problems) std::cout << "violation: " << p << "\n";
    return 1;
}

int cmd_export_fields(const CommonFlags& flags, const std::string& phi_csv) {
    const vmpt::Config cfg = flags.load();
    const vmpt::AppConfig app = vmpt::AppConfig::from_config(cfg);
    std::ifstream f(phi_csv);
    if (!f) {
        std::cerr << "cannot open field dump '" << phi_csv << "'\n";
        return 2;
    }
    const vmpt::NodalDump dump = vmpt::read_field_csv(f);
    vmpt::TriMesh mesh = vmpt::TriMesh::rectangle_with_h(app.h, app.lx, app.ly);
    if (dump.phi.size() != mesh.n_nodes()) {
        std::cerr << "field dump has " << dump.phi.size() << " nodes, mesh has "
                  << mesh.n_nodes() << "\n";
        return 2;
    }
    vmpt::ComplianceProblem problem(mesh, app.problem_params());
    const vmpt::Vector c = dump.phi.array() - app.fractions[0]; // back to shifted coords
    const vmpt::Vector chi = problem.hard_fraction(c);
    const vmpt::DisplacementField& u = problem.state(c);
    std::filesystem::create_directories(flags.out_dir);
    std::ofstream fv(flags.out_dir + "/final.vtk");
    vmpt::write_vtk(fv, mesh, chi, u);
    std::ofstream fc(flags.out_dir + "/final.csv");
    vmpt::write_field_csv(fc, mesh, chi, u);
    std::cout << "wrote " << flags.out_dir << "/final.vtk and final.csv\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"variable-metric projection-type optimization for phase-field "
                 "compliance minimization"};
    app.require_subcommand(1);

    CommonFlags solve_flags, sweep_flags, export_flags;
    std::string trace_path, phi_csv;

    auto* solve = app.add_subcommand("solve", "run a single optimization");
    solve_flags.attach(solve);

    auto* sweep = app.add_subcommand("sweep", "run a mesh/metric study from a config");
    sweep_flags.attach(sweep);

    auto* verify = app.add_subcommand("verify-trace", "check solver invariants on a trace.csv");
    verify->add_option("trace", trace_path, "path to trace.csv")->required();

    auto* exportf = app.add_subcommand("export-fields",
                                       "recompute the state for a nodal dump and write VTK/CSV");
    export_flags.attach(exportf);
    exportf->add_option("--phi", phi_csv, "nodal dump (final.csv) with the design field")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) return cmd_solve(solve_flags);
        if (sweep->parsed()) return cmd_sweep(sweep_flags);
        if (verify->parsed()) return cmd_verify_trace(trace_path);
        if (exportf->parsed()) return cmd_export_fields(export_flags, phi_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
