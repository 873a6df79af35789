#pragma once

#include "fredholm/confidence.hpp"
#include "fredholm/error.hpp"
#include "fredholm/grid_function.hpp"
#include "fredholm/harness/config.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fredholm::harness {

using Json = nlohmann::ordered_json;

/// Reads whitespace- or comma-separated numbers.
inline std::vector<double> read_table(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open table file " + path.string());
    }
    std::vector<double> values;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        for (char& c : line) {
            if (c == ',') {
                c = ' ';
            }
        }
        std::istringstream ss(line);
        std::string token;
        while (ss >> token) {
            values.push_back(KeyValueConfig::parse_double(path.string() + ":" + std::to_string(lineno), token));
        }
    }
    return values;
}

inline Json number_or_null(double v)
{
    return std::isfinite(v) ? Json(v) : Json(nullptr);
}

inline Json number_or_null(const std::optional<double>& v)
{
    return v ? number_or_null(*v) : Json(nullptr);
}

/// Writes `content` to `path`, creating parent directories.
inline void write_file(const std::filesystem::path& path, const std::string& content)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << content;
    if (!out) {
        throw Error("failed writing " + path.string());
    }
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string coordinate_header(const Grid& grid)
{
    std::string h;
    for (int a = 0; a < grid.dim(); ++a) {
        h += "t" + std::to_string(a + 1) + ",";
    }
    return h;
}

inline std::string coordinate_cells(const Grid& grid, std::size_t i)
{
    const Point p = grid.point(i);
    std::string s;
    for (int a = 0; a < grid.dim(); ++a) {
        s += format_double(p[a]) + ",";
    }
    return s;
}

/// Grid coordinates, estimate, reference, abs_error; NA where no reference exists.
inline std::string solution_csv(const GridFunction& estimate, const std::optional<GridFunction>& reference)
{
    const Grid& grid = estimate.grid();
    std::string out = coordinate_header(grid) + "estimate,reference,abs_error\n";
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        out += coordinate_cells(grid, i) + format_double(estimate[i]) + ",";
        if (reference) {
            out += format_double((*reference)[i]) + "," + format_double(std::abs(estimate[i] - (*reference)[i]));
        } else {
            out += "NA,NA";
        }
        out += "\n";
    }
    return out;
}

inline std::string band_kind_label(const ConfidenceBand& band)
{
    std::string s = to_string(band.kind);
    return band.truncation_inflated ? s + "-solution" : s;
}

inline std::string band_csv(const ConfidenceBand& band)
{
    const Grid& grid = band.center.grid();
    const std::string kind = band_kind_label(band);
    const std::string level = format_double(band.level);
    std::string out = coordinate_header(grid) + "estimate,lower,upper,kind,level\n";
    for (std::size_t i = 0; i < band.center.size(); ++i) {
        out += coordinate_cells(grid, i) + format_double(band.center[i]) + "," + format_double(band.lower[i]) + "," +
               format_double(band.upper[i]) + "," + kind + "," + level + "\n";
    }
    return out;
}

} // namespace fredholm::harness
