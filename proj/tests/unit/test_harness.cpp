#include "fredholm/harness/experiment.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace fredholm;
using namespace fredholm::harness;
namespace fs = std::filesystem;

namespace {

KeyValueConfig parse(const std::string& text)
{
    std::istringstream in(text);
    return KeyValueConfig::parse(in);
}

const char* kSeparable = R"(
domain.dim = 1
domain.grid = 32
domain.measure = lattice
kernel.form = separable
kernel.lambda = 0.9
free_term.form = identity
)";

ExperimentConfig resolve(const std::string& text)
{
    return ExperimentConfig::resolve(parse(text));
}

fs::path scratch(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("fredholm-test-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::string> csv_column(const std::string& csv, std::size_t column)
{
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> out;
    while (std::getline(in, line)) {
        std::istringstream row(line);
        std::string cell;
        for (std::size_t c = 0; c <= column; ++c) {
            std::getline(row, cell, ',');
        }
        out.push_back(cell);
    }
    return out;
}

} // namespace

TEST(KeyValueConfig, ParsesCommentsAndWhitespace)
{
    const auto c = parse("# comment\n  a.b = 3  # trailing\n\nname=x y\n");
    EXPECT_EQ(c.get_integer<int>("a.b", 0), 3);
    EXPECT_EQ(c.get_string("name", ""), "x y");
    EXPECT_FALSE(c.has("missing"));
}

TEST(KeyValueConfig, ReportsLineOfErrors)
{
    try {
        (void)parse("a = 1\nnot a pair\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
    }
    EXPECT_THROW((void)parse("a = 1\na = 2\n"), ConfigError);
    EXPECT_THROW((void)parse(" = 2\n"), ConfigError);
}

TEST(KeyValueConfig, TypedAccessRejectsGarbage)
{
    const auto c = parse("n = 12x\nx = 1e-3\nl = 1, 2,3\n");
    EXPECT_THROW((void)c.get_integer<int>("n", 0), ConfigError);
    EXPECT_DOUBLE_EQ(c.get_double("x", 0), 1e-3);
    EXPECT_EQ(KeyValueConfig::parse_integer_list<int>("l", c.require_string("l")), (std::vector<int>{1, 2, 3}));
    EXPECT_THROW((void)c.require_string("absent"), ConfigError);
}

TEST(FormatDouble, RoundTrips)
{
    for (double v : {0.1, 1.0 / 3.0, 2.0, 1e-300, -123.456e7, 0.95}) {
        EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
    }
    EXPECT_EQ(format_double(0.95), "0.95");
}

TEST(ExperimentConfig, DefaultsAndSeedGeneration)
{
    const auto c = resolve(kSeparable);
    EXPECT_EQ(c.method, Method::Recursive);
    EXPECT_EQ(c.scheme, AllocationScheme::RecursiveGeometric);
    ASSERT_TRUE(c.depth_eps);
    EXPECT_DOUBLE_EQ(*c.depth_eps, 1e-3);
    EXPECT_EQ(c.budget, 65536);
    EXPECT_TRUE(c.seed_generated);
    EXPECT_EQ(c.to_key_values().get_string("seed", ""), std::to_string(c.seed));
}

TEST(ExperimentConfig, ExactlyOneDepthPolicy)
{
    EXPECT_THROW((void)resolve(std::string(kSeparable) + "depth.M = 3\ndepth.eps = 0.1\n"), ConfigError);
    EXPECT_THROW((void)resolve(std::string(kSeparable) + "depth.M = 0\n"), ConfigError);
}

TEST(ExperimentConfig, RejectsUnknownValues)
{
    EXPECT_THROW((void)resolve(std::string(kSeparable) + "method = magic\n"), ConfigError);
    EXPECT_THROW((void)resolve(std::string(kSeparable) + "band = wide\n"), ConfigError);
    EXPECT_THROW((void)resolve(std::string(kSeparable) + "allocation.scheme = best\n"), ConfigError);
    EXPECT_THROW((void)resolve(std::string(kSeparable) + "band.level = 1.5\n"), ConfigError);
    EXPECT_THROW((void)resolve(std::string(kSeparable) + "band = asymptotic\nreplicates = 1\n"), ConfigError);
    EXPECT_THROW((void)resolve(std::string(kSeparable) + "allocation.scheme = manual\n"), ConfigError);
}

TEST(ExperimentConfig, OverridesWin)
{
    Overrides o;
    o.seed = 5;
    o.method = "dtm";
    o.level = 0.9;
    const auto c = ExperimentConfig::resolve(parse(std::string(kSeparable) + "seed = 1\nmethod = recursive\n"), o);
    EXPECT_EQ(c.seed, 5u);
    EXPECT_EQ(c.method, Method::Dtm);
    EXPECT_EQ(c.scheme, AllocationScheme::DtmOptimal);
    EXPECT_DOUBLE_EQ(c.level, 0.9);
    EXPECT_FALSE(c.seed_generated);
}

TEST(ExperimentConfig, CanonicalEchoRoundTrips)
{
    const auto c = resolve(std::string(kSeparable) +
                           "seed = 3\ndepth.M = 4\nband = subgaussian\nband.c3 = 0.4\nsweep = 1024,2048\n");
    const auto again = ExperimentConfig::resolve(c.to_key_values());
    EXPECT_EQ(again.to_key_values().entries(), c.to_key_values().entries());
}

TEST(BuildProblem, FormsAndErrors)
{
    const auto p = build_problem(parse(kSeparable));
    EXPECT_EQ(p.measure(), Measure::Lattice);
    EXPECT_NEAR(p.rho(), 0.45, 1e-15);
    EXPECT_THROW((void)build_problem(parse("kernel.form = constant\nkernel.lambda = 1.5\n")), ContractionError);
    EXPECT_THROW((void)build_problem(parse("kernel.form = spline\n")), ConfigError);
    EXPECT_THROW((void)build_problem(parse("kernel.form = constant\n")), ConfigError);
    EXPECT_THROW((void)build_problem(parse("kernel.form = constant\nkernel.lambda = 0.1\ndomain.measure = x\n")),
                 ConfigError);
    const auto g = build_problem(parse("kernel.form = gaussian\nkernel.lambda = 0.5\nkernel.w = 0.3\ndomain.dim = 2\n"
                                       "domain.grid = 5\n"));
    EXPECT_EQ(g.grid().size(), 25u);
}

TEST(BuildProblem, TabulatedFromFiles)
{
    const auto dir = scratch("tables");
    write_file(dir / "k.txt", "0.1 0.2\n0.3, 0.1\n");
    write_file(dir / "f.txt", "# free term\n1\n2\n");
    auto kv = parse("domain.grid = 2\nkernel.form = tabulated\nkernel.table = k.txt\nfree_term.form = tabulated\n"
                    "free_term.table = f.txt\n");
    kv.set_base_dir(dir);
    const auto p = build_problem(kv);
    EXPECT_DOUBLE_EQ(p.kernel_on_grid(1, 0), 0.3);
    EXPECT_DOUBLE_EQ(p.free_term_values()[1], 2.0);
}

TEST(RunSolve, ReferenceConstantKernel)
{
    const auto c = resolve("kernel.form = constant\nkernel.lambda = 0.5\nfree_term.form = one\ndomain.grid = 16\n"
                           "method = reference\nreference.tol = 1e-12\nseed = 1\n");
    const auto out = run_solve(c);
    ASSERT_EQ(out.files.size(), 1u);
    for (const auto& v : csv_column(out.files[0].content, 1)) {
        EXPECT_NEAR(std::stod(v), 2.0, 1e-12);
    }
    EXPECT_EQ(out.report["draws"]["counter"], 0);
}

TEST(RunSolve, RecursiveGeometricAllocationAndDraws)
{
    const auto c = resolve(std::string(kSeparable) + "depth.M = 3\nbudget = 1024\nreplicates = 4\nseed = 9\n");
    const auto out = run_solve(c);
    EXPECT_EQ(out.report["allocation"]["counts"], Json::array({128, 256, 512}));
    EXPECT_EQ(out.report["draws"]["counter"], 4 * 896);
    EXPECT_EQ(out.report["draws"]["counter"], out.report["draws"]["formula"]);
    EXPECT_EQ(out.report["schema_version"], 1);
}

TEST(RunSolve, ByteIdenticalRepeats)
{
    const auto c = resolve(std::string(kSeparable) +
                           "depth.M = 4\nbudget = 4096\nreplicates = 20\nband = asymptotic\nband.sims = 2000\nseed = 4\n");
    auto run = [&](int threads) {
        fredholm::testing::ScopedThreads t(threads);
        return run_solve(c);
    };
    const auto a = run(1);
    const auto b = run(8);
    EXPECT_EQ(a.report_text(), b.report_text());
    ASSERT_EQ(a.files.size(), 2u);
    for (std::size_t i = 0; i < a.files.size(); ++i) {
        EXPECT_EQ(a.files[i].content, b.files[i].content);
    }
}

TEST(RunSolve, ReferenceOffMarksErrorsUnavailable)
{
    const auto c = resolve(std::string(kSeparable) + "depth.M = 2\nbudget = 256\nreference = off\nseed = 2\n");
    const auto out = run_solve(c);
    EXPECT_TRUE(out.report["error"]["vs_reference"].is_null());
    EXPECT_EQ(csv_column(out.files[0].content, 2).front(), "NA");
}

TEST(RunSolve, BudgetGate)
{
    EXPECT_THROW((void)run_solve(resolve(std::string(kSeparable) + "depth.M = 6\nbudget = 200\nseed = 1\n")),
                 BudgetError);
}

TEST(RunSolve, SolutionBandIsInflated)
{
    const auto c = resolve(std::string(kSeparable) + "depth.M = 3\nbudget = 1024\nband = subgaussian\nband.c3 = 1\n"
                           "band.target = solution\nseed = 1\n");
    const auto out = run_solve(c);
    EXPECT_EQ(out.report["band"]["kind"], "subgaussian-solution");
    const double expected = std::sqrt(std::log(20.0)) / std::sqrt(512.0) + std::pow(0.45, 4) * 1.0 / 0.55;
    EXPECT_NEAR(out.report["band"]["max_half_width"].get<double>(), expected, 1e-12);
}

TEST(Compare, DepthOneRatioIsOne)
{
    const auto p = build_problem(parse(kSeparable));
    const auto rows = compare_budgets(p, 1, {256, 1024}, 10, 3);
    for (const auto& row : rows) {
        ASSERT_TRUE(row.feasible);
        EXPECT_EQ(row.draw_ratio(), 1.0);
        EXPECT_TRUE(row.matched);
        EXPECT_TRUE(row.accounting_ok());
    }
}

TEST(Compare, InfeasibleRowsAreMarked)
{
    const auto p = build_problem(parse(kSeparable));
    const auto rows = compare_budgets(p, 4, {16, 4096}, 20, 3);
    EXPECT_FALSE(rows[0].feasible);
    EXPECT_TRUE(rows[1].feasible);
    EXPECT_TRUE(rows[1].accounting_ok());
    EXPECT_NE(compare_csv(rows).find("16,infeasible"), std::string::npos);
}

TEST(Coverage, DeterministicProblemIsAlwaysCovered)
{
    const auto c = resolve("kernel.form = constant\nkernel.lambda = 0.5\ndomain.grid = 8\ndepth.M = 3\nbudget = 128\n"
                           "replicates = 3\nband = asymptotic\nband.sims = 1000\ntrials = 100\nseed = 1\n");
    const auto out = run_coverage(c);
    EXPECT_EQ(out.report["coverage"], 1.0);
}

TEST(Coverage, NeedsHundredTrialsAndBand)
{
    EXPECT_THROW((void)run_coverage(resolve(std::string(kSeparable) + "band = subgaussian\ntrials = 99\n")),
                 ConfigError);
    EXPECT_THROW((void)run_coverage(resolve(std::string(kSeparable) + "trials = 100\n")), ConfigError);
}

TEST(Calibrate, ReportsInfiniteSentinelAsNull)
{
    const auto c = resolve("kernel.form = constant\nkernel.lambda = 0.5\ndomain.grid = 8\ndepth.M = 2\nbudget = 64\n"
                           "band.pilot_trials = 100\nseed = 1\n");
    const auto out = run_calibrate(c);
    EXPECT_TRUE(out.report["calibration"]["c3"].is_null());
    EXPECT_TRUE(out.report["calibration"]["deterministic"].get<bool>());
}

TEST(Replay, ReproducesWrittenOutputs)
{
    const auto dir = scratch("replay");
    const auto c = resolve(std::string(kSeparable) + "depth.M = 3\nbudget = 2048\nreplicates = 8\nband = asymptotic\n"
                           "band.sims = 1000\nseed = 77\n");
    write_outputs(run_solve(c), dir / "run");
    const auto result = replay(dir / "run" / "report.json", dir / "again");
    EXPECT_TRUE(result.identical());
    EXPECT_EQ(result.compared.size(), 3u);

    write_file(dir / "run" / "band.csv", "tampered\n");
    const auto bad = replay(dir / "run" / "report.json", dir / "again2");
    EXPECT_FALSE(bad.identical());
    EXPECT_EQ(bad.mismatched, std::vector<std::string>{"band.csv"});
}
