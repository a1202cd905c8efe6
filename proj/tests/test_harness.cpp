#include "vmpt/config.hpp"
#include "vmpt/experiment.hpp"
#include "vmpt/export.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace vmpt;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

AppConfig tiny_app() {
    Config cfg;
    cfg.set("mesh.h", "0.125");
    cfg.set("tol", "2e-3");
    cfg.set("stop_rule", "scaled_l2_grad");
    cfg.set("k_max", "400");
    return AppConfig::from_config(cfg);
}

} // namespace

TEST(Config, ParsesKeysCommentsAndLists) {
    std::istringstream in("# comment\n"
                          "epsilon = 0.04\n"
                          "metric = h1   # trailing comment\n"
                          "fractions = 0.4 0.6\n"
                          "\n"
                          "k_max = 200\n");
    const Config cfg = Config::parse(in, "test.cfg");
    EXPECT_DOUBLE_EQ(cfg.get_double("epsilon", 0.0), 0.04);
    EXPECT_EQ(cfg.get_string("metric", ""), "h1");
    EXPECT_EQ(cfg.get_int("k_max", 0), 200);
    const auto f = cfg.get_list("fractions");
    ASSERT_EQ(f.size(), 2u);
    EXPECT_DOUBLE_EQ(f[0], 0.4);
    EXPECT_DOUBLE_EQ(f[1], 0.6);
    EXPECT_EQ(cfg.get_double("missing", 7.0), 7.0);
}

TEST(Config, ErrorsCarryFileAndLine) {
    std::istringstream bad_syntax("epsilon 0.04\n");
    try {
        Config::parse(bad_syntax, "bad.cfg");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("bad.cfg:1"), std::string::npos);
    }

    std::istringstream bad_number("epsilon = fast\n");
    const Config cfg = Config::parse(bad_number, "bad2.cfg");
    try {
        cfg.get_double("epsilon", 0.0);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("bad2.cfg:1"), std::string::npos);
        EXPECT_NE(what.find("epsilon"), std::string::npos);
    }
}

TEST(AppConfig, MetricAndRuleParsing) {
    Config cfg;
    cfg.set("metric", "second_order");
    cfg.set("stop_rule", "scaled_l2_grad");
    const AppConfig app = AppConfig::from_config(cfg);
    EXPECT_EQ(app.metric, MetricKind::SecondOrder);
    EXPECT_EQ(app.stop_rule, StopRule::ScaledL2Grad);

    Config bad;
    bad.set("metric", "newton");
    EXPECT_THROW(AppConfig::from_config(bad), ConfigError);
    Config bad2;
    bad2.set("initial", "zeros");
    EXPECT_THROW(AppConfig::from_config(bad2), ConfigError);
}

TEST(ExperimentSpec, RejectsOffGridSweepSizes) {
    Config cfg;
    cfg.set("sweep.h", "0.0625 0.03125");
    EXPECT_NO_THROW(ExperimentSpec::from_config(cfg));
    Config bad;
    bad.set("sweep.h", "0.1");
    EXPECT_THROW(ExperimentSpec::from_config(bad), ConfigError);
}

TEST(ReportTable, RendersRowsAndRoundTripsThroughCsv) {
    std::vector<RunResult> rows(2);
    rows[0].h = 0.0625;
    rows[0].metric = "h1";
    rows[0].iters = 42;
    rows[0].cpu_seconds = 1.25;
    rows[0].j_final = 15.0625;
    rows[0].compliance = 15.0;
    rows[0].gl_energy = 0.125;
    rows[0].terminate_reason = "converged";
    rows[0].ok = true;
    rows[1].h = 0.03125;
    rows[1].metric = "l2";
    rows[1].iters = 1234;
    rows[1].cpu_seconds = 9.5;
    rows[1].j_final = std::numeric_limits<double>::quiet_NaN();
    rows[1].compliance = std::numeric_limits<double>::quiet_NaN();
    rows[1].gl_energy = std::numeric_limits<double>::quiet_NaN();
    rows[1].terminate_reason = "error: it broke";
    rows[1].ok = false;

    std::ostringstream text;
    report_table(text, rows);
    EXPECT_NE(text.str().find("h1"), std::string::npos);
    EXPECT_NE(text.str().find("42"), std::string::npos);
    EXPECT_NE(text.str().find("nan"), std::string::npos);

    std::ostringstream csv;
    write_results_csv(csv, rows);
    const std::string first_line = csv.str().substr(0, csv.str().find('\n'));
    EXPECT_EQ(first_line, "h,metric,iters,cpu_seconds,j_final,compliance,gl_energy,terminate_reason");
    EXPECT_NE(csv.str().find("nan"), std::string::npos);

    std::istringstream back(csv.str());
    const auto parsed = read_results_csv(back);
    ASSERT_EQ(parsed.size(), 2u);
    EXPECT_EQ(parsed[0].h, rows[0].h);
    EXPECT_EQ(parsed[0].iters, 42);
    EXPECT_EQ(parsed[0].j_final, rows[0].j_final);
    EXPECT_EQ(parsed[0].terminate_reason, "converged");
    EXPECT_TRUE(parsed[0].ok);
    EXPECT_TRUE(std::isnan(parsed[1].j_final));
    EXPECT_FALSE(parsed[1].ok);
}

TEST(TraceCsv, RoundTripPreservesRowsInfoAndReason) {
    SolverTrace trace;
    trace.reason = TerminationReason::Converged;
    trace.info.metric = "h1";
    trace.info.c1 = 1.0;
    trace.info.sigma = 1e-4;
    trace.info.beta = 0.5;
    trace.info.lambda_min = 1e-6;
    trace.info.lambda_max = 1e6;
    trace.info.tol = 1e-5;
    trace.info.stop_rule = StopRule::ScaledL2Grad;
    trace.info.stop_scale = std::sqrt(0.02);
    for (int k = 0; k < 3; ++k) {
        TraceRow r;
        r.k = k;
        r.j = 10.0 / (k + 1);
        r.slope = -1.0 / (k + 1);
        r.norm_v = 0.5 / (k + 1);
        r.alpha = k == 2 ? 0.0 : 1.0;
        r.lambda = 0.25 * (k + 1);
        r.backtracks = 0;
        r.pdas_iters = 2;
        trace.rows.push_back(r);
    }
    std::ostringstream out;
    write_trace_csv(out, trace);
    std::istringstream in(out.str());
    const SolverTrace back = read_trace_csv(in);
    ASSERT_EQ(back.rows.size(), trace.rows.size());
    for (std::size_t i = 0; i < trace.rows.size(); ++i) {
        EXPECT_EQ(back.rows[i].k, trace.rows[i].k);
        EXPECT_EQ(back.rows[i].j, trace.rows[i].j);
        EXPECT_EQ(back.rows[i].slope, trace.rows[i].slope);
        EXPECT_EQ(back.rows[i].norm_v, trace.rows[i].norm_v);
        EXPECT_EQ(back.rows[i].alpha, trace.rows[i].alpha);
        EXPECT_EQ(back.rows[i].lambda, trace.rows[i].lambda);
        EXPECT_EQ(back.rows[i].backtracks, trace.rows[i].backtracks);
        EXPECT_EQ(back.rows[i].pdas_iters, trace.rows[i].pdas_iters);
    }
    EXPECT_EQ(back.reason, TerminationReason::Converged);
    EXPECT_EQ(back.info.metric, "h1");
    EXPECT_EQ(back.info.stop_rule, StopRule::ScaledL2Grad);
    EXPECT_EQ(back.info.stop_scale, trace.info.stop_scale);
}

TEST(VerifyTrace, FlagsCorruptedRows) {
    SolverTrace trace;
    trace.info.sigma = 1e-4;
    trace.info.beta = 0.5;
    trace.info.lambda_min = 0.1;
    trace.info.lambda_max = 10.0;
    trace.info.c1 = 1.0;
    TraceRow r0;
    r0.k = 0;
    r0.j = 1.0;
    r0.slope = -1.0;
    r0.norm_v = 0.5;
    r0.alpha = 1.0;
    r0.lambda = 1.0;
    TraceRow r1 = r0;
    r1.k = 1;
    r1.j = 2.0; // objective increased
    r1.slope = 0.5; // not a descent direction
    r1.lambda = 100.0; // outside the bracket
    trace.rows = {r0, r1};
    trace.reason = TerminationReason::MaxIterations;
    const auto problems = verify_trace(trace);
    EXPECT_GE(problems.size(), 3u);
}

TEST(FieldExports, VtkStructureAndCsvRoundTrip) {
    const TriMesh mesh(2, 1, 2.0, 1.0);
    Vector phi = Vector::LinSpaced(mesh.n_nodes(), 0.0, 1.0);
    DisplacementField u{Vector::LinSpaced(2 * mesh.n_nodes(), -1.0, 1.0)};

    std::ostringstream vtk;
    write_vtk(vtk, mesh, phi, u);
    const std::string s = vtk.str();
    EXPECT_EQ(s.rfind("# vtk DataFile Version 3.0", 0), 0u);
    EXPECT_NE(s.find("DATASET UNSTRUCTURED_GRID"), std::string::npos);
    EXPECT_NE(s.find("POINTS 6 double"), std::string::npos);
    EXPECT_NE(s.find("CELLS 4 16"), std::string::npos);
    EXPECT_NE(s.find("SCALARS phi double 1"), std::string::npos);
    EXPECT_NE(s.find("VECTORS displacement double"), std::string::npos);

    std::ostringstream csv;
    write_field_csv(csv, mesh, phi, u);
    std::istringstream back(csv.str());
    const NodalDump dump = read_field_csv(back);
    EXPECT_LE((dump.phi - phi).lpNorm<Eigen::Infinity>(), 0.0);
    EXPECT_LE((dump.x[1] - mesh.x(1)), 0.0);
    EXPECT_EQ(dump.ux.size(), mesh.n_nodes());
}

TEST(RunSingle, WritesOutputsAndIsByteReproducible) {
    const AppConfig app = tiny_app();
    const std::string dir1 = "harness_out/run_a";
    const std::string dir2 = "harness_out/run_b";
    std::filesystem::remove_all("harness_out");

    const RunOutput out1 = run_single(app, dir1);
    ASSERT_TRUE(out1.row.ok) << out1.row.terminate_reason;
    EXPECT_EQ(out1.row.terminate_reason, "converged");
    EXPECT_GT(out1.row.iters, 0);
    EXPECT_GT(out1.row.j_final, 0.0);
    ASSERT_TRUE(std::filesystem::exists(dir1 + "/trace.csv"));
    ASSERT_TRUE(std::filesystem::exists(dir1 + "/final.vtk"));
    ASSERT_TRUE(std::filesystem::exists(dir1 + "/final.csv"));

    const RunOutput out2 = run_single(app, dir2);
    EXPECT_EQ(slurp(dir1 + "/trace.csv"), slurp(dir2 + "/trace.csv"));
    EXPECT_EQ(slurp(dir1 + "/final.csv"), slurp(dir2 + "/final.csv"));
    EXPECT_EQ(slurp(dir1 + "/final.vtk"), slurp(dir2 + "/final.vtk"));
    EXPECT_EQ(out1.row.iters, out2.row.iters);
    EXPECT_EQ(out1.row.j_final, out2.row.j_final);

    // the recorded trace passes the invariant suite
    std::ifstream tf(dir1 + "/trace.csv");
    const SolverTrace trace = read_trace_csv(tf);
    const auto problems = verify_trace(trace);
    EXPECT_TRUE(problems.empty()) << (problems.empty() ? "" : problems.front());

    std::filesystem::remove_all("harness_out");
}

TEST(RunSingle, FailuresAreRecordedNotThrown) {
    AppConfig app = tiny_app();
    app.load_width = 1e-6; // no boundary edge fits under the load
    const RunOutput out = run_single(app, "");
    EXPECT_FALSE(out.row.ok);
    EXPECT_EQ(out.row.terminate_reason.rfind("error", 0), 0u);
}

TEST(RunExperiment, EmptyRunListYieldsHeaderOnlyTable) {
    const std::vector<RunResult> rows;
    std::ostringstream csv;
    write_results_csv(csv, rows);
    EXPECT_EQ(csv.str(),
              "h,metric,iters,cpu_seconds,j_final,compliance,gl_energy,terminate_reason\n");
    std::istringstream back(csv.str());
    EXPECT_TRUE(read_results_csv(back).empty());
}
