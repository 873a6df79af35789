#pragma once

#include "fredholm/error.hpp"
#include "fredholm/estimate.hpp"
#include "fredholm/grid.hpp"

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fredholm::harness {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

/// Shortest text that reads back to exactly the same double.
inline std::string format_double(double v)
{
    char buf[32];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) {
            break;
        }
    }
    return buf;
}

/// Flat `dotted.key = value` file. `#` starts a comment.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::istream& in, const std::string& source = "<config>")
    {
        KeyValueConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) {
                line.erase(hash);
            }
            const std::string text = trim(line);
            if (text.empty()) {
                continue;
            }
            const auto eq = text.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(source + ":" + std::to_string(lineno) + ": expected `key = value`");
            }
            std::string key = trim(std::string_view(text).substr(0, eq));
            std::string value = trim(std::string_view(text).substr(eq + 1));
            if (key.empty()) {
                throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
            }
            if (cfg.entries_.contains(key)) {
                throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key `" + key + "`");
            }
            cfg.entries_.emplace(std::move(key), std::move(value));
        }
        return cfg;
    }

    static KeyValueConfig load(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in) {
            throw ConfigError("cannot open config file " + path.string());
        }
        auto cfg = parse(in, path.string());
        cfg.base_dir_ = path.parent_path();
        return cfg;
    }

    [[nodiscard]] bool has(const std::string& key) const { return entries_.contains(key); }

    [[nodiscard]] std::optional<std::string> find(const std::string& key) const
    {
        if (auto it = entries_.find(key); it != entries_.end()) {
            return it->second;
        }
        return std::nullopt;
    }

    [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const
    {
        return find(key).value_or(fallback);
    }

    [[nodiscard]] std::string require_string(const std::string& key) const
    {
        if (auto v = find(key)) {
            return *v;
        }
        throw ConfigError("missing required key `" + key + "`");
    }

    template <typename Int>
    [[nodiscard]] Int get_integer(const std::string& key, Int fallback) const
    {
        const auto v = find(key);
        return v ? parse_integer<Int>(key, *v) : fallback;
    }

    [[nodiscard]] double get_double(const std::string& key, double fallback) const
    {
        const auto v = find(key);
        return v ? parse_double(key, *v) : fallback;
    }

    void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
    void erase(const std::string& key) { entries_.erase(key); }

    [[nodiscard]] const std::map<std::string, std::string>& entries() const { return entries_; }
    [[nodiscard]] const std::filesystem::path& base_dir() const { return base_dir_; }
    void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }

    /// Resolves a path value relative to the directory of the config file.
    [[nodiscard]] std::filesystem::path resolve_path(const std::string& value) const
    {
        std::filesystem::path p(value);
        return p.is_absolute() || base_dir_.empty() ? p : base_dir_ / p;
    }

    template <typename Int>
    static Int parse_integer(const std::string& key, const std::string& text)
    {
        Int v{};
        const auto* end = text.data() + text.size();
        const auto [ptr, ec] = std::from_chars(text.data(), end, v);
        if (ec != std::errc() || ptr != end) {
            throw ConfigError("key `" + key + "`: `" + text + "` is not a valid integer");
        }
        return v;
    }

    static double parse_double(const std::string& key, const std::string& text)
    {
        char* end = nullptr;
        const double v = std::strtod(text.c_str(), &end);
        if (text.empty() || end != text.c_str() + text.size()) {
            throw ConfigError("key `" + key + "`: `" + text + "` is not a valid number");
        }
        return v;
    }

    template <typename Int>
    static std::vector<Int> parse_integer_list(const std::string& key, const std::string& text)
    {
        std::vector<Int> out;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            out.push_back(parse_integer<Int>(key, trim(item)));
        }
        if (out.empty()) {
            throw ConfigError("key `" + key + "`: empty list");
        }
        return out;
    }

private:
    std::map<std::string, std::string> entries_;
    std::filesystem::path base_dir_;
};

enum class Method { Reference, Dtm, Recursive };

inline Method parse_method(const std::string& s)
{
    if (s == "reference") {
        return Method::Reference;
    }
    if (s == "dtm") {
        return Method::Dtm;
    }
    if (s == "recursive") {
        return Method::Recursive;
    }
    throw ConfigError("unknown method `" + s + "` (expected reference, dtm or recursive)");
}

inline const char* to_string(Method m)
{
    switch (m) {
    case Method::Reference: return "reference";
    case Method::Dtm: return "dtm";
    case Method::Recursive: return "recursive";
    }
    return "?";
}

enum class BandRequest { None, Asymptotic, Subgaussian };

inline const char* to_string(BandRequest b)
{
    switch (b) {
    case BandRequest::None: return "none";
    case BandRequest::Asymptotic: return "asymptotic";
    case BandRequest::Subgaussian: return "subgaussian";
    }
    return "?";
}

/// Command-line values that take precedence over the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> method;
    std::optional<double> level;
    std::optional<std::size_t> sims;
    std::optional<std::size_t> trials;
};

/// Fully resolved experiment description. Every field is explicit after resolve(),
/// including a generated seed, so to_key_values() reproduces the run exactly.
struct ExperimentConfig {
    KeyValueConfig problem;  // domain.*, kernel.*, free_term.* keys

    Method method = Method::Recursive;
    std::optional<int> depth_fixed;
    std::optional<double> depth_eps;
    std::int64_t budget = 65536;
    AllocationScheme scheme = AllocationScheme::RecursiveGeometric;
    std::vector<std::int64_t> manual_counts;
    std::size_t replicates = 1;

    BandRequest band = BandRequest::None;
    double level = 0.95;
    std::size_t sims = 10000;
    std::optional<double> c3;  // nullopt: calibrate with pilot runs
    std::size_t pilot_trials = 200;
    bool band_for_solution = false;

    std::uint64_t seed = 0;
    bool seed_generated = false;
    std::string out_dir = "out";
    std::vector<std::int64_t> sweep;
    std::size_t trials = 100;
    std::size_t compare_replicates = 200;

    bool reference_enabled = true;
    double reference_tol = 1e-10;

    static ExperimentConfig resolve(const KeyValueConfig& file, const Overrides& over = {})
    {
        ExperimentConfig c;
        c.problem = file;
        if (auto path = file.find("problem")) {
            const auto problem_path = file.resolve_path(*path);
            c.problem = KeyValueConfig::load(problem_path);
            for (const auto& [k, v] : file.entries()) {
                if (is_problem_key(k)) {
                    c.problem.set(k, v);
                }
            }
        }
        // Inline the problem keys and make table paths absolute so the echo is self-contained.
        KeyValueConfig inlined;
        for (const auto& [k, v] : c.problem.entries()) {
            if (!is_problem_key(k)) {
                continue;
            }
            if (k == "kernel.table" || k == "free_term.table") {
                inlined.set(k, std::filesystem::absolute(c.problem.resolve_path(v)).lexically_normal().string());
            } else {
                inlined.set(k, v);
            }
        }
        c.problem = inlined;

        c.method = parse_method(over.method.value_or(file.get_string("method", "recursive")));

        if (file.has("depth.M") && file.has("depth.eps")) {
            throw ConfigError("exactly one depth policy is allowed: give depth.M or depth.eps, not both");
        }
        if (file.has("depth.M")) {
            c.depth_fixed = file.get_integer<int>("depth.M", 1);
            if (*c.depth_fixed < 1) {
                throw ConfigError("depth.M must be at least 1");
            }
        } else {
            c.depth_eps = file.get_double("depth.eps", 1e-3);
            if (!(*c.depth_eps > 0.0)) {
                throw ConfigError("depth.eps must be positive");
            }
        }

        c.budget = file.get_integer<std::int64_t>("budget", c.budget);
        const std::string default_scheme = c.method == Method::Dtm ? "dtm-optimal" : "geometric";
        const std::string scheme = file.get_string("allocation.scheme", default_scheme);
        if (scheme == "geometric") {
            c.scheme = AllocationScheme::RecursiveGeometric;
        } else if (scheme == "dtm-optimal") {
            c.scheme = AllocationScheme::DtmOptimal;
        } else if (scheme == "manual") {
            c.scheme = AllocationScheme::Manual;
            c.manual_counts =
                KeyValueConfig::parse_integer_list<std::int64_t>("allocation.counts", file.require_string("allocation.counts"));
            if (c.depth_fixed && *c.depth_fixed != static_cast<int>(c.manual_counts.size())) {
                throw ConfigError("depth.M disagrees with the number of allocation.counts");
            }
            c.depth_fixed = static_cast<int>(c.manual_counts.size());
            c.depth_eps.reset();
        } else {
            throw ConfigError("unknown allocation.scheme `" + scheme + "`");
        }

        c.replicates = file.get_integer<std::size_t>("replicates", c.replicates);
        if (c.replicates < 1) {
            throw ConfigError("replicates must be at least 1");
        }

        const std::string band = file.get_string("band", "none");
        if (band == "none") {
            c.band = BandRequest::None;
        } else if (band == "asymptotic") {
            c.band = BandRequest::Asymptotic;
        } else if (band == "subgaussian") {
            c.band = BandRequest::Subgaussian;
        } else {
            throw ConfigError("unknown band `" + band + "`");
        }
        c.level = over.level.value_or(file.get_double("band.level", c.level));
        if (!(c.level > 0.0 && c.level < 1.0)) {
            throw ConfigError("band.level must lie in (0, 1)");
        }
        c.sims = over.sims.value_or(file.get_integer<std::size_t>("band.sims", c.sims));
        const std::string c3 = file.get_string("band.c3", "calibrate");
        if (c3 != "calibrate") {
            c.c3 = KeyValueConfig::parse_double("band.c3", c3);
            if (!(*c.c3 > 0.0)) {
                throw ConfigError("band.c3 must be positive");
            }
        }
        c.pilot_trials = file.get_integer<std::size_t>("band.pilot_trials", c.pilot_trials);
        const std::string target = file.get_string("band.target", "estimator");
        if (target != "estimator" && target != "solution") {
            throw ConfigError("band.target must be `estimator` or `solution`");
        }
        c.band_for_solution = target == "solution";
        if (c.band == BandRequest::Asymptotic && c.replicates < 2 && c.method != Method::Reference) {
            throw ConfigError("an asymptotic band needs replicates >= 2");
        }

        if (over.seed) {
            c.seed = *over.seed;
        } else if (file.has("seed")) {
            c.seed = file.get_integer<std::uint64_t>("seed", 0);
        } else {
            std::random_device rd;
            c.seed = (std::uint64_t{rd()} << 32) ^ rd();
            c.seed_generated = true;
        }
        c.out_dir = over.out_dir.value_or(file.get_string("output.dir", c.out_dir));
        if (auto s = file.find("sweep")) {
            c.sweep = KeyValueConfig::parse_integer_list<std::int64_t>("sweep", *s);
        }
        c.trials = over.trials.value_or(file.get_integer<std::size_t>("trials", c.trials));
        c.compare_replicates = file.get_integer<std::size_t>("compare.replicates", c.compare_replicates);

        const std::string ref = file.get_string("reference", "on");
        if (ref != "on" && ref != "off") {
            throw ConfigError("reference must be `on` or `off`");
        }
        c.reference_enabled = ref == "on";
        c.reference_tol = file.get_double("reference.tol", c.reference_tol);
        if (!(c.reference_tol > 0.0)) {
            throw ConfigError("reference.tol must be positive");
        }
        return c;
    }

    /// Canonical key-value echo; resolve(to_key_values()) reproduces this config.
    [[nodiscard]] KeyValueConfig to_key_values() const
    {
        KeyValueConfig kv = problem;
        kv.set("method", to_string(method));
        if (depth_fixed) {
            kv.set("depth.M", std::to_string(*depth_fixed));
        } else if (depth_eps) {
            kv.set("depth.eps", format_double(*depth_eps));
        }
        kv.set("budget", std::to_string(budget));
        kv.set("allocation.scheme", fredholm::to_string(scheme));
        if (scheme == AllocationScheme::Manual) {
            kv.set("allocation.counts", join(manual_counts));
        }
        kv.set("replicates", std::to_string(replicates));
        kv.set("band", to_string(band));
        kv.set("band.level", format_double(level));
        kv.set("band.sims", std::to_string(sims));
        kv.set("band.c3", c3 ? format_double(*c3) : "calibrate");
        kv.set("band.pilot_trials", std::to_string(pilot_trials));
        kv.set("band.target", band_for_solution ? "solution" : "estimator");
        kv.set("seed", std::to_string(seed));
        kv.set("output.dir", out_dir);
        if (!sweep.empty()) {
            kv.set("sweep", join(sweep));
        }
        kv.set("trials", std::to_string(trials));
        kv.set("compare.replicates", std::to_string(compare_replicates));
        kv.set("reference", reference_enabled ? "on" : "off");
        kv.set("reference.tol", format_double(reference_tol));
        return kv;
    }

    static bool is_problem_key(const std::string& k)
    {
        return k.starts_with("domain.") || k.starts_with("kernel.") || k.starts_with("free_term.");
    }

private:
    static std::string join(const std::vector<std::int64_t>& v)
    {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            s += (i ? "," : "") + std::to_string(v[i]);
        }
        return s;
    }
};

} // namespace fredholm::harness
