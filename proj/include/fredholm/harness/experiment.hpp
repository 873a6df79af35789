#pragma once

#include "fredholm/confidence.hpp"
#include "fredholm/dtm.hpp"
#include "fredholm/fredholm.hpp"
#include "fredholm/harness/config.hpp"
#include "fredholm/harness/io.hpp"
#include "fredholm/parallel.hpp"
#include "fredholm/recursive.hpp"
#include "fredholm/reference.hpp"
#include "fredholm/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fredholm::harness {

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Problem construction
// ---------------------------------------------------------------------------

inline FredholmProblem build_problem(const KeyValueConfig& kv)
{
    const int dim = kv.get_integer<int>("domain.dim", 1);
    const int points = kv.get_integer<int>("domain.grid", 32);
    const std::string measure = kv.get_string("domain.measure", "uniform");
    Measure m;
    if (measure == "uniform") {
        m = Measure::Uniform;
    } else if (measure == "lattice") {
        m = Measure::Lattice;
    } else {
        throw ConfigError("unknown domain.measure `" + measure + "` (expected uniform or lattice)");
    }
    Domain domain(dim, points, m);

    const std::string kform = kv.require_string("kernel.form");
    Kernel kernel = ConstantKernel{};
    if (kform == "constant") {
        kernel = ConstantKernel{KeyValueConfig::parse_double("kernel.lambda", kv.require_string("kernel.lambda"))};
    } else if (kform == "separable") {
        kernel = SeparableKernel{KeyValueConfig::parse_double("kernel.lambda", kv.require_string("kernel.lambda"))};
    } else if (kform == "gaussian") {
        kernel = GaussianKernel{KeyValueConfig::parse_double("kernel.lambda", kv.require_string("kernel.lambda")),
                                kv.get_double("kernel.w", 1.0)};
    } else if (kform == "tabulated") {
        kernel = TabulatedKernel{read_table(kv.resolve_path(kv.require_string("kernel.table")))};
    } else {
        throw ConfigError("unknown kernel.form `" + kform + "`");
    }

    const std::string fform = kv.get_string("free_term.form", "one");
    FreeTerm free_term = OneFreeTerm{};
    if (fform == "one") {
        free_term = OneFreeTerm{};
    } else if (fform == "identity") {
        free_term = IdentityFreeTerm{};
    } else if (fform == "tabulated") {
        free_term = TabulatedFreeTerm{read_table(kv.resolve_path(kv.require_string("free_term.table")))};
    } else {
        throw ConfigError("unknown free_term.form `" + fform + "`");
    }
    return FredholmProblem(std::move(domain), std::move(kernel), std::move(free_term));
}

inline int resolve_depth(const ExperimentConfig& c, const FredholmProblem& p)
{
    return c.depth_fixed ? *c.depth_fixed : choose_depth(p, *c.depth_eps);
}

inline Allocation resolve_allocation(const ExperimentConfig& c, const FredholmProblem& p, int depth,
                                     std::int64_t budget)
{
    switch (c.scheme) {
    case AllocationScheme::RecursiveGeometric: return geometric_allocate(depth, budget);
    case AllocationScheme::DtmOptimal: return dtm_allocate(p, depth, budget);
    case AllocationScheme::Manual: break;
    }
    return manual_allocation(c.manual_counts);
}

inline SolutionEstimate run_estimator(Estimator method, const FredholmProblem& p, const Allocation& alloc,
                                      std::uint64_t seed, std::size_t replicates)
{
    return method == Estimator::Dtm ? dtm_solve(p, alloc, seed, replicates)
                                    : recursive_solve(p, alloc, seed, replicates);
}

inline Estimator require_monte_carlo(const ExperimentConfig& c, const char* command)
{
    if (c.method == Method::Reference) {
        throw ConfigError(std::string(command) + " needs method dtm or recursive");
    }
    return c.method == Method::Dtm ? Estimator::Dtm : Estimator::Recursive;
}

inline std::int64_t formula_draws(const SolutionEstimate& est)
{
    const auto per_run = est.method == Estimator::Dtm ? est.allocation.dtm_draws() : est.allocation.recursive_draws();
    return static_cast<std::int64_t>(est.replicate_count()) * per_run;
}

// ---------------------------------------------------------------------------
// JSON fragments
// ---------------------------------------------------------------------------

inline Json config_json(const ExperimentConfig& c)
{
    Json j = Json::object();
    const KeyValueConfig kv = c.to_key_values();
    for (const auto& [k, v] : kv.entries()) {
        // The output directory does not influence any artifact.
        if (k != "output.dir") {
            j[k] = v;
        }
    }
    return j;
}

inline Json constants_json(const FredholmProblem& p)
{
    return Json{{"rho", p.rho()}, {"rho_bar", p.rho_bar()}, {"rho2", p.rho2()}, {"beta", p.beta()}};
}

inline Json allocation_json(const Allocation& a)
{
    return Json{{"scheme", to_string(a.scheme)}, {"budget", a.budget}, {"depth", a.depth}, {"counts", a.counts}};
}

inline Json depth_json(const ExperimentConfig& c, const FredholmProblem& p, int depth)
{
    Json j{{"M", depth}, {"policy", c.depth_fixed ? "fixed" : "eps"}};
    j["eps"] = number_or_null(c.depth_eps);
    j["truncation_bound"] = truncation_bound(p, depth);
    return j;
}

inline KeyValueConfig config_from_json(const Json& j)
{
    KeyValueConfig kv;
    for (const auto& [k, v] : j.items()) {
        kv.set(k, v.get<std::string>());
    }
    return kv;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct Artifact {
    std::string name;
    std::string content;
};

/// Everything a command produces; report.json is rendered from `report`.
struct RunOutput {
    Json report;
    std::vector<Artifact> files;

    [[nodiscard]] std::string report_text() const { return report.dump(2) + "\n"; }
};

inline Json base_report(const std::string& command, const ExperimentConfig& c)
{
    Json r;
    r["schema_version"] = kSchemaVersion;
    r["library_version"] = kVersion;
    r["command"] = command;
    r["config"] = config_json(c);
    return r;
}

struct BandResult {
    ConfidenceBand band;
    std::optional<double> c3;
    std::string c3_source;
};

/// Band for the estimator target x_M, widened for z when band.target = solution.
inline BandResult make_requested_band(const ExperimentConfig& c, const FredholmProblem& p, const SolutionEstimate& est,
                                      std::optional<double> c3)
{
    auto band = c.band == BandRequest::Asymptotic
                    ? asymptotic_band(est, c.level, c.sims, Stream(c.seed, StreamTag::GaussianSup, {est.seed}))
                    : subgaussian_band(est, c.level, *c3);
    if (c.band_for_solution) {
        band = inflate_for_truncation(std::move(band), p, est.allocation.depth);
    }
    BandResult out{std::move(band), c.band == BandRequest::Subgaussian ? c3 : std::nullopt, {}};
    return out;
}

inline std::optional<double> resolve_c3(const ExperimentConfig& c, const FredholmProblem& p, const Allocation& alloc,
                                        Estimator method, std::string& source)
{
    if (c.band != BandRequest::Subgaussian) {
        return std::nullopt;
    }
    if (c.c3) {
        source = "config";
        return c.c3;
    }
    source = "calibrated";
    return calibrate_c3(p, alloc, c.pilot_trials, c.seed, method);
}

inline Json band_json(const BandResult& b, const std::string& c3_source, const std::optional<GridFunction>& target)
{
    Json j{{"kind", band_kind_label(b.band)},
           {"level", b.band.level},
           {"target", b.band.truncation_inflated ? "solution" : "estimator"},
           {"max_half_width", b.band.half_width},
           {"quantile", b.band.half_width_scale},
           {"normalization", b.band.normalization}};
    if (b.band.kind == BandKind::NonAsymptoticSubgaussian) {
        j["c3"] = number_or_null(b.c3);
        j["c3_source"] = c3_source;
    }
    j["covers_oracle"] = target ? Json(b.band.covers(*target)) : Json(nullptr);
    return j;
}

/// solve: problem -> reference -> method -> optional band -> solution.csv, band.csv, report.json.
inline RunOutput run_solve(const ExperimentConfig& c)
{
    const FredholmProblem p = build_problem(c.problem);
    RunOutput out{base_report("solve", c), {}};
    Json& r = out.report;
    r["constants"] = constants_json(p);

    std::optional<ReferenceSolution> reference;
    if (c.reference_enabled || c.method == Method::Reference) {
        reference = solve_reference(p, c.reference_tol);
    }
    std::optional<GridFunction> reference_values;
    if (reference && c.reference_enabled) {
        reference_values = reference->solution;
    }
    r["reference"] = Json{{"enabled", c.reference_enabled},
                          {"tol", c.reference_tol},
                          {"depth", reference ? Json(reference->depth) : Json(nullptr)}};

    if (c.method == Method::Reference) {
        if (c.band != BandRequest::None) {
            throw ConfigError("band requires method dtm or recursive");
        }
        r["method"] = "reference";
        r["depth"] = Json{{"M", reference->depth}, {"policy", "tol"}, {"eps", c.reference_tol},
                          {"truncation_bound", truncation_bound(p, reference->depth)}};
        r["allocation"] = nullptr;
        r["replicates"] = 0;
        r["draws"] = Json{{"counter", 0}, {"formula", 0}};
        r["error"] = Json{{"vs_reference", reference_values ? Json(0.0) : Json(nullptr)}, {"vs_truncated", nullptr}};
        r["band"] = nullptr;
        out.files.push_back({"solution.csv", solution_csv(reference->solution, reference_values)});
        r["outputs"] = {"solution.csv"};
        return out;
    }

    const Estimator method = require_monte_carlo(c, "solve");
    const int depth = resolve_depth(c, p);
    const Allocation alloc = resolve_allocation(c, p, depth, c.budget);
    const auto est = run_estimator(method, p, alloc, c.seed, c.replicates);
    const GridFunction truncated = neumann_iterate(p, depth).truncated;

    r["method"] = to_string(method);
    r["depth"] = depth_json(c, p, depth);
    r["allocation"] = allocation_json(alloc);
    r["replicates"] = c.replicates;
    r["draws"] = Json{{"counter", est.draws.draws()}, {"formula", formula_draws(est)}};
    r["error"] = Json{{"vs_reference", reference_values ? Json(sup_distance(est.mean, *reference_values)) : Json(nullptr)},
                      {"vs_truncated", sup_distance(est.mean, truncated)}};

    out.files.push_back({"solution.csv", solution_csv(est.mean, reference_values)});
    r["outputs"] = {"solution.csv"};

    if (c.band == BandRequest::None) {
        r["band"] = nullptr;
        return out;
    }
    std::string c3_source;
    const auto c3 = resolve_c3(c, p, alloc, method, c3_source);
    const auto band = make_requested_band(c, p, est, c3);
    std::optional<GridFunction> target;
    if (!c.band_for_solution) {
        target = truncated;
    } else if (reference_values) {
        target = reference_values;
    }
    r["band"] = band_json(band, c3_source, target);
    out.files.push_back({"band.csv", band_csv(band.band)});
    r["outputs"].push_back("band.csv");
    return out;
}

/// One sweep row of compare_budgets.
struct CompareRow {
    std::int64_t budget = 0;
    bool feasible = false;
    std::string note;
    std::int64_t recursive_draws = 0;
    std::int64_t recursive_formula = 0;
    double recursive_rmse = 0.0;
    std::int64_t dtm_budget = 0;
    std::int64_t dtm_draws = 0;
    std::int64_t dtm_formula = 0;
    double dtm_rmse = 0.0;
    double dtm_variance_bound = 0.0;
    int match_iterations = 0;
    bool matched = false;

    [[nodiscard]] double rmse_ratio() const { return dtm_rmse / recursive_rmse; }
    [[nodiscard]] double draw_ratio() const
    {
        return static_cast<double>(recursive_draws) / static_cast<double>(dtm_draws);
    }
    [[nodiscard]] bool accounting_ok() const
    {
        return recursive_draws == recursive_formula && dtm_draws == dtm_formula;
    }
};

inline constexpr double kMatchTolerance = 0.2;
inline constexpr double kRefineTolerance = 0.02;
inline constexpr int kMaxMatchIterations = 4;

/// Recursive run at budget N with the geometric allocation, then DTM runs whose budget is
/// rescaled by (rmse ratio)^2 until the grid-max RMSEs agree within 2%, or the last
/// attempt is kept. The row counts as matched when they agree within 20%.
inline CompareRow compare_row(const FredholmProblem& p, int depth, std::int64_t budget, std::size_t replicates,
                              std::uint64_t seed, const GridFunction& target)
{
    CompareRow row;
    row.budget = budget;
    Allocation rec_alloc;
    try {
        rec_alloc = geometric_allocate(depth, budget);
    } catch (const BudgetError& e) {
        row.note = e.what();
        return row;
    }
    const auto rec = recursive_solve(p, rec_alloc, seed, replicates);
    row.recursive_draws = rec.draws.draws();
    row.recursive_formula = formula_draws(rec);
    row.recursive_rmse = sup_rmse(rec.replicates, target);

    auto run_dtm = [&](const Allocation& a) {
        const auto est = dtm_solve(p, a, seed, replicates);
        row.dtm_budget = a.scheme == AllocationScheme::DtmOptimal ? a.budget : a.dtm_draws();
        row.dtm_draws = est.draws.draws();
        row.dtm_formula = formula_draws(est);
        row.dtm_rmse = sup_rmse(est.replicates, target);
        row.dtm_variance_bound = dtm_variance_bound(p, a);
        ++row.match_iterations;
        row.matched = std::abs(row.rmse_ratio() - 1.0) <= kMatchTolerance;
    };

    if (depth == 1) {
        // Both estimators are the same plain average at depth 1.
        run_dtm(rec_alloc);
        row.feasible = true;
        return row;
    }
    std::int64_t dtm_budget = budget;
    const std::int64_t floor_budget = dtm_minimum_budget(depth);
    for (int it = 0; it < kMaxMatchIterations; ++it) {
        if (it > 0) {
            if (!(row.recursive_rmse > 0.0) || !(row.dtm_rmse > 0.0)) {
                break;
            }
            const double ratio = row.dtm_rmse / row.recursive_rmse;
            dtm_budget = std::max(floor_budget, static_cast<std::int64_t>(std::llround(
                                                    static_cast<double>(dtm_budget) * ratio * ratio)));
        }
        try {
            run_dtm(dtm_allocate(p, depth, dtm_budget));
        } catch (const BudgetError& e) {
            row.note = e.what();
            return row;
        }
        if (std::abs(row.rmse_ratio() - 1.0) <= kRefineTolerance) {
            break;
        }
    }
    row.feasible = true;
    if (!row.matched) {
        row.note = "rmse not matched within 20%";
    }
    return row;
}

inline std::string compare_csv(const std::vector<CompareRow>& rows)
{
    std::string out = "budget,status,recursive_draws,recursive_draws_formula,recursive_rmse,dtm_budget,dtm_draws,"
                      "dtm_draws_formula,dtm_rmse,dtm_variance_bound,rmse_ratio,matched,draw_ratio,accounting_ok,"
                      "match_iterations\n";
    for (const auto& row : rows) {
        out += std::to_string(row.budget) + ",";
        if (!row.feasible) {
            out += "infeasible,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA\n";
            continue;
        }
        out += "ok," + std::to_string(row.recursive_draws) + "," + std::to_string(row.recursive_formula) + "," +
               format_double(row.recursive_rmse) + "," + std::to_string(row.dtm_budget) + "," +
               std::to_string(row.dtm_draws) + "," + std::to_string(row.dtm_formula) + "," +
               format_double(row.dtm_rmse) + "," + format_double(row.dtm_variance_bound) + "," +
               format_double(row.rmse_ratio()) + "," + (row.matched ? "true" : "false") + "," +
               format_double(row.draw_ratio()) + "," + (row.accounting_ok() ? "true" : "false") + "," +
               std::to_string(row.match_iterations) + "\n";
    }
    return out;
}

inline std::vector<CompareRow> compare_budgets(const FredholmProblem& p, int depth,
                                               const std::vector<std::int64_t>& sweep, std::size_t replicates,
                                               std::uint64_t seed)
{
    if (sweep.empty()) {
        throw ConfigError("compare needs a non-empty sweep");
    }
    if (replicates < 2) {
        throw ConfigError("compare needs compare.replicates >= 2");
    }
    const GridFunction target = neumann_iterate(p, depth).truncated;
    std::vector<CompareRow> rows(sweep.size());
    parallel_for(sweep.size(), [&](std::size_t i) {
        rows[i] = compare_row(p, depth, sweep[i], replicates, derive_seed(seed, StreamTag::Trial, i), target);
    });
    return rows;
}

inline RunOutput run_compare(const ExperimentConfig& c)
{
    const FredholmProblem p = build_problem(c.problem);
    const int depth = resolve_depth(c, p);
    const auto rows = compare_budgets(p, depth, c.sweep, c.compare_replicates, c.seed);

    RunOutput out{base_report("compare", c), {}};
    Json& r = out.report;
    r["constants"] = constants_json(p);
    r["depth"] = depth_json(c, p, depth);
    r["replicates"] = c.compare_replicates;
    Json summary = Json::array();
    bool all_cheaper = true;
    bool all_accounted = true;
    for (const auto& row : rows) {
        Json s{{"budget", row.budget}, {"feasible", row.feasible}};
        if (row.feasible) {
            s["recursive_draws"] = row.recursive_draws;
            s["dtm_draws"] = row.dtm_draws;
            s["draw_ratio"] = row.draw_ratio();
            s["matched"] = row.matched;
            all_cheaper = all_cheaper && row.matched && row.recursive_draws < row.dtm_draws;
            all_accounted = all_accounted && row.accounting_ok();
        } else {
            s["note"] = row.note;
        }
        summary.push_back(std::move(s));
    }
    r["rows"] = std::move(summary);
    r["recursive_cheaper_in_every_row"] = all_cheaper;
    r["accounting_ok"] = all_accounted;
    out.files.push_back({"compare.csv", compare_csv(rows)});
    r["outputs"] = {"compare.csv"};
    return out;
}

struct CoverageTrial {
    std::uint64_t seed = 0;
    double half_width = 0.0;
    double sup_error = 0.0;
    bool covered = false;
};

inline RunOutput run_coverage(const ExperimentConfig& c)
{
    if (c.trials < 100) {
        throw ConfigError("coverage needs trials >= 100");
    }
    if (c.band == BandRequest::None) {
        throw ConfigError("coverage needs a band (asymptotic or subgaussian)");
    }
    if (c.band_for_solution && !c.reference_enabled) {
        throw ConfigError("a solution band coverage study needs reference = on");
    }
    const Estimator method = require_monte_carlo(c, "coverage");
    const FredholmProblem p = build_problem(c.problem);
    const int depth = resolve_depth(c, p);
    const Allocation alloc = resolve_allocation(c, p, depth, c.budget);
    const GridFunction target =
        c.band_for_solution ? solve_reference(p, c.reference_tol).solution : neumann_iterate(p, depth).truncated;

    std::string c3_source;
    const auto c3 = resolve_c3(c, p, alloc, method, c3_source);

    std::vector<CoverageTrial> trials(c.trials);
    parallel_for(c.trials, [&](std::size_t t) {
        const auto seed = derive_seed(c.seed, StreamTag::Trial, t);
        const auto est = run_estimator(method, p, alloc, seed, c.replicates);
        const auto band = make_requested_band(c, p, est, c3);
        trials[t] = {seed, band.band.half_width, sup_distance(est.mean, target), band.band.covers(target)};
    });

    std::size_t covered = 0;
    std::string csv = "trial,seed,half_width,sup_error,covered\n";
    for (std::size_t t = 0; t < trials.size(); ++t) {
        covered += trials[t].covered ? 1 : 0;
        csv += std::to_string(t) + "," + std::to_string(trials[t].seed) + "," + format_double(trials[t].half_width) +
               "," + format_double(trials[t].sup_error) + "," + (trials[t].covered ? "1" : "0") + "\n";
    }

    RunOutput out{base_report("coverage", c), {}};
    Json& r = out.report;
    r["constants"] = constants_json(p);
    r["method"] = to_string(method);
    r["depth"] = depth_json(c, p, depth);
    r["allocation"] = allocation_json(alloc);
    r["replicates"] = c.replicates;
    Json band{{"kind", to_string(c.band)}, {"level", c.level}, {"target", c.band_for_solution ? "solution" : "estimator"}};
    if (c.band == BandRequest::Subgaussian) {
        band["c3"] = number_or_null(c3);
        band["c3_source"] = c3_source;
    }
    r["band"] = std::move(band);
    r["trials"] = c.trials;
    r["covered"] = covered;
    r["coverage"] = static_cast<double>(covered) / static_cast<double>(c.trials);
    out.files.push_back({"coverage.csv", std::move(csv)});
    r["outputs"] = {"coverage.csv"};
    return out;
}

inline RunOutput run_calibrate(const ExperimentConfig& c)
{
    const Estimator method = require_monte_carlo(c, "calibrate");
    const FredholmProblem p = build_problem(c.problem);
    const int depth = resolve_depth(c, p);
    const Allocation alloc = resolve_allocation(c, p, depth, c.budget);
    const double c3 = calibrate_c3(p, alloc, c.pilot_trials, c.seed, method);

    RunOutput out{base_report("calibrate", c), {}};
    Json& r = out.report;
    r["constants"] = constants_json(p);
    r["method"] = to_string(method);
    r["depth"] = depth_json(c, p, depth);
    r["allocation"] = allocation_json(alloc);
    Json cal{{"c3", number_or_null(c3)},
             {"deterministic", std::isinf(c3)},
             {"pilot_trials", c.pilot_trials},
             {"normalization", band_scale(alloc)}};
    r["calibration"] = cal;
    out.files.push_back({"calibrate.json", cal.dump(2) + "\n"});
    r["outputs"] = {"calibrate.json"};
    return out;
}

inline RunOutput run_command(const std::string& command, const ExperimentConfig& c)
{
    if (command == "solve") {
        return run_solve(c);
    }
    if (command == "compare") {
        return run_compare(c);
    }
    if (command == "coverage") {
        return run_coverage(c);
    }
    if (command == "calibrate") {
        return run_calibrate(c);
    }
    throw ConfigError("unknown command `" + command + "`");
}

inline void write_outputs(const RunOutput& out, const std::filesystem::path& dir)
{
    for (const auto& f : out.files) {
        write_file(dir / f.name, f.content);
    }
    write_file(dir / "report.json", out.report_text());
}

struct ReplayResult {
    std::string command;
    std::vector<std::string> compared;
    std::vector<std::string> mismatched;

    [[nodiscard]] bool identical() const { return mismatched.empty(); }
};

/// Re-runs the command recorded in `report_path` into `scratch` and byte-compares every
/// artifact listed in the report, plus the report itself, against the originals.
inline ReplayResult replay(const std::filesystem::path& report_path, const std::filesystem::path& scratch)
{
    Json original;
    try {
        original = Json::parse(read_file(report_path));
    } catch (const Json::exception& e) {
        throw ConfigError("cannot parse report " + report_path.string() + ": " + e.what());
    }
    if (!original.contains("schema_version") || original["schema_version"] != kSchemaVersion) {
        throw ConfigError("unsupported report schema in " + report_path.string());
    }
    ExperimentConfig c = ExperimentConfig::resolve(config_from_json(original.at("config")));
    c.out_dir = scratch.string();
    ReplayResult result;
    result.command = original.at("command").get<std::string>();
    const RunOutput rerun = run_command(result.command, c);
    write_outputs(rerun, scratch);

    const auto source_dir = report_path.parent_path();
    std::vector<std::string> names;
    for (const auto& name : original.at("outputs")) {
        names.push_back(name.get<std::string>());
    }
    names.push_back(report_path.filename().string());
    for (const auto& name : names) {
        result.compared.push_back(name);
        const auto replayed_name = name == report_path.filename().string() ? std::string("report.json") : name;
        std::string a;
        std::string b;
        try {
            a = read_file(source_dir / name);
            b = read_file(scratch / replayed_name);
        } catch (const Error&) {
            result.mismatched.push_back(name);
            continue;
        }
        if (a != b) {
            result.mismatched.push_back(name);
        }
    }
    return result;
}

} // namespace fredholm::harness
