#pragma once

// File formats: crystal definitions (JSON), tabular inputs (CSV with a
// header row), spectrum maps (CSV and JSON-header + float64 binary).

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "opg/dispersion.hpp"
#include "opg/error.hpp"
#include "opg/spectrum.hpp"

namespace opg::io {

using nlohmann::json;

/// Writes to a sibling temporary file and renames it into place, so a failed
/// run never leaves a partial file behind.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            out.close();
            std::filesystem::remove(tmp);
            throw ValidationError("failed writing " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Fixed-format number rendering so output files are byte-reproducible.
inline std::string fmt(double v, int digits = 10) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*e", digits, v);
    return buf;
}

// --- CSV -------------------------------------------------------------------

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    /// Index of a named column; throws a schema error naming it when absent.
    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ValidationError("schema error: missing column '" + std::string(name) + "'");
    }

    bool has_column(std::string_view name) const {
        for (const auto& h : header)
            if (h == name) return true;
        return false;
    }
};

namespace detail {

inline std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace detail

/// Comma-separated numbers under a header row. Blank lines and lines
/// starting with '#' are skipped; empty cells read as NaN.
inline Table parse_csv(const std::string& text, const std::string& source = "csv") {
    Table t;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string s = detail::trim(line);
        if (s.empty() || s.front() == '#') continue;
        auto cells = detail::split(s);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() > t.header.size())
            throw ValidationError(source + ":" + std::to_string(lineno) + ": more cells than header columns");
        std::vector<double> row(t.header.size(), std::numeric_limits<double>::quiet_NaN());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (cells[i].empty()) continue;
            try {
                std::size_t used = 0;
                row[i] = std::stod(cells[i], &used);
                if (used != cells[i].size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw ValidationError(source + ":" + std::to_string(lineno) + ": '" + cells[i] + "' is not a number");
            }
        }
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw ValidationError(source + ": no header row");
    return t;
}

inline Table read_csv(const std::filesystem::path& path) { return parse_csv(read_file(path), path.string()); }

// --- crystal definitions -------------------------------------------------------

inline Sellmeier sellmeier_from_json(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_array() || j.at(key).size() != 4)
        throw ValidationError(std::string("crystal field '") + key + "' must be an array of 4 numbers");
    const auto& a = j.at(key);
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>(), a[3].get<double>()};
}

/// { name, sellmeier_o: [A,B,C,D], sellmeier_e: [A,B,C,D],
///   transparency_um: [min,max], source? }. Geometry (length, cut angle) is
/// not part of the file; callers fill it in.
inline CrystalConfig crystal_from_json(const json& j) {
    static const char* allowed[] = {"name", "sellmeier_o", "sellmeier_e", "transparency_um", "source"};
    for (const auto& [key, _] : j.items())
        if (std::find(std::begin(allowed), std::end(allowed), key) == std::end(allowed))
            throw ValidationError("unknown crystal field '" + key + "'");
    CrystalConfig c;
    if (!j.contains("name") || !j.at("name").is_string()) throw ValidationError("crystal field 'name' is required");
    c.name = j.at("name").get<std::string>();
    c.sellmeier_o = sellmeier_from_json(j, "sellmeier_o");
    c.sellmeier_e = sellmeier_from_json(j, "sellmeier_e");
    if (!j.contains("transparency_um") || j.at("transparency_um").size() != 2)
        throw ValidationError("crystal field 'transparency_um' must be [min, max]");
    c.window = {j.at("transparency_um")[0].get<double>(), j.at("transparency_um")[1].get<double>()};
    return c;
}

inline CrystalConfig load_crystal(const std::filesystem::path& path) {
    try {
        return crystal_from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

// --- spectrum maps ------------------------------------------------------------

inline std::string spectrum_csv(const SpectrumMap& map) {
    std::string out = "lambda_um,theta_ext_deg,intensity\n";
    out.reserve(out.size() + static_cast<std::size_t>(map.rows() * map.cols()) * 52);
    for (Eigen::Index r = 0; r < map.rows(); ++r)
        for (Eigen::Index c = 0; c < map.cols(); ++c) {
            out += fmt(map.lambda_um[static_cast<std::size_t>(r)], 8);
            out += ',';
            out += fmt(map.theta_ext_deg[static_cast<std::size_t>(c)], 8);
            out += ',';
            out += fmt(map.intensity(r, c));
            out += '\n';
        }
    return out;
}

inline constexpr const char* kMapFormat = "opg-spectrum-map";

/// One JSON header line, then rows·cols little-endian float64 values in
/// row-major (wavelength-major) order.
inline std::string spectrum_binary(const SpectrumMap& map, const json& extra = json::object()) {
    json header = {{"format", kMapFormat},
                   {"version", 1},
                   {"dtype", "float64"},
                   {"byte_order", "little"},
                   {"layout", "row-major"},
                   {"rows", map.rows()},
                   {"cols", map.cols()},
                   {"row_axis", "lambda_um"},
                   {"col_axis", "theta_ext_deg"},
                   {"lambda_um", map.lambda_um},
                   {"theta_ext_deg", map.theta_ext_deg}};
    for (const auto& [k, v] : extra.items()) header["meta"][k] = v;
    std::string out = header.dump() + "\n";
    const std::size_t offset = out.size();
    out.resize(offset + static_cast<std::size_t>(map.rows() * map.cols()) * 8);
    std::size_t pos = offset;
    for (Eigen::Index r = 0; r < map.rows(); ++r)
        for (Eigen::Index c = 0; c < map.cols(); ++c) {
            auto bits = std::bit_cast<std::uint64_t>(map.intensity(r, c));
            for (int b = 0; b < 8; ++b) out[pos++] = static_cast<char>((bits >> (8 * b)) & 0xff);
        }
    return out;
}

inline SpectrumMap parse_spectrum_binary(const std::string& bytes) {
    const auto nl = bytes.find('\n');
    if (nl == std::string::npos) throw ValidationError("spectrum map: missing header line");
    json header;
    try {
        header = json::parse(bytes.substr(0, nl));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("spectrum map header: ") + e.what());
    }
    if (header.value("format", "") != kMapFormat) throw ValidationError("spectrum map: unexpected format tag");
    SpectrumMap map(header.at("lambda_um").get<std::vector<double>>(), header.at("theta_ext_deg").get<std::vector<double>>());
    const std::size_t expected = static_cast<std::size_t>(map.rows() * map.cols()) * 8;
    if (bytes.size() - nl - 1 != expected) throw ValidationError("spectrum map: payload size does not match header");
    std::size_t pos = nl + 1;
    for (Eigen::Index r = 0; r < map.rows(); ++r)
        for (Eigen::Index c = 0; c < map.cols(); ++c) {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * b);
            map.intensity(r, c) = std::bit_cast<double>(bits);
        }
    return map;
}

}  // namespace opg::io
