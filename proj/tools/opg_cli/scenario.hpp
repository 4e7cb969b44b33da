#pragma once

// Scenario files: JSON with a schema_version field. Unknown keys are
// rejected at every level so stale or misspelled settings fail loudly.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "opg/dispersion.hpp"
#include "opg/io.hpp"
#include "opg/tpa.hpp"

namespace opg::cli {

using io::json;

inline constexpr int kScenarioSchemaVersion = 1;

inline const std::set<std::string>& known_outputs() {
    static const std::set<std::string> names = {"spectrum_low", "spectrum_high", "ridge", "eigenvalues", "plots"};
    return names;
}

struct Band {
    double min = 0.0, max = 0.0;
    double step = 0.0;  ///< lambda band
    int count = 0;      ///< theta band
};

struct Analysis {
    std::optional<std::pair<double, double>> peak_band_um;
    std::optional<std::pair<double, double>> chirp_band_um;
    double region_threshold = 0.2;
    double region_link_deg = 1.0;
    std::optional<double> eigen_lambda_um;
    /// Edge columns brighter than this fraction of the map maximum trigger a
    /// truncation warning.
    double edge_warning_fraction = 1e-2;
};

struct Scenario {
    std::string name;
    std::filesystem::path crystal_file;
    CrystalConfig crystal;
    std::optional<double> phase_match_signal_um;  ///< set when θ_pm is derived
    bool phase_match_along_walkoff = true;
    PumpConfig pump;
    std::vector<double> gain_gamma;
    Band lambda_band;
    Band theta_band;
    TpaOptions tpa;
    Analysis analysis;
    std::vector<std::string> outputs;

    bool wants(const std::string& what) const {
        return std::find(outputs.begin(), outputs.end(), what) != outputs.end();
    }

    std::vector<double> lambdas() const {
        const int n = static_cast<int>(std::lround((lambda_band.max - lambda_band.min) / lambda_band.step)) + 1;
        std::vector<double> out(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(k)] = lambda_band.min + lambda_band.step * k;
        return out;
    }

    std::vector<double> thetas() const {
        const int n = theta_band.count;
        std::vector<double> out(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(j)] =
                n == 1 ? theta_band.min : theta_band.min + (theta_band.max - theta_band.min) * j / (n - 1);
        return out;
    }
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw ValidationError("unknown field '" + where + "." + key + "'");
}

inline double number(const json& j, const std::string& where, const char* key) {
    if (!j.contains(key)) throw ValidationError("missing field '" + where + "." + key + "'");
    const auto& v = j.at(key);
    if (!v.is_number()) throw ValidationError("field '" + where + "." + key + "' must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ValidationError("field '" + where + "." + key + "' must be finite");
    return x;
}

inline std::optional<double> optional_number(const json& j, const std::string& where, const char* key) {
    if (!j.contains(key)) return std::nullopt;
    return number(j, where, key);
}

inline std::optional<std::pair<double, double>> optional_range(const json& j, const std::string& where, const char* key) {
    if (!j.contains(key)) return std::nullopt;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ValidationError("field '" + where + "." + key + "' must be [min, max]");
    const double lo = v[0].get<double>(), hi = v[1].get<double>();
    if (!(hi > lo)) throw ValidationError("field '" + where + "." + key + "' needs min < max");
    return std::make_pair(lo, hi);
}

}  // namespace detail

/// Checks every numeric input before any computation starts.
inline void validate_scenario(const Scenario& s) {
    s.crystal.validate();
    s.pump.validate();
    const auto& lb = s.lambda_band;
    if (!(lb.step > 0.0) || !(lb.max >= lb.min) || !(lb.min > 0.0)) throw ValidationError("empty lambda band");
    const auto& tb = s.theta_band;
    if (tb.count < 1 || !(tb.max >= tb.min) || (tb.count > 1 && !(tb.max > tb.min)))
        throw ValidationError("empty theta band");
    if (std::abs(tb.min) >= 90.0 || std::abs(tb.max) >= 90.0) throw ValidationError("theta band must lie within (-90, 90) deg");
    for (double l : s.lambdas()) {
        if (!(l > s.pump.lambda_p_um))
            throw ValidationError("signal wavelength " + std::to_string(l) + " um is not longer than the pump");
        const double li = idler_wavelength(s.pump.lambda_p_um, l);
        if (!s.crystal.window.contains(l) || !s.crystal.window.contains(li))
            throw ValidationError("signal " + std::to_string(l) + " um or its idler " + std::to_string(li) +
                                  " um lies outside the transparency window");
    }
    for (double g : s.gain_gamma)
        if (!(g >= 0.0)) throw ValidationError("gain_gamma values must be >= 0");
    if (s.wants("spectrum_high") && s.gain_gamma.empty())
        throw ValidationError("output 'spectrum_high' needs at least one gain_gamma value");
    if (s.tpa.idler_points < 2) throw ValidationError("tpa.idler_points must be >= 2");
    if (!(s.tpa.idler_oversample >= 1.0)) throw ValidationError("tpa.idler_oversample must be >= 1");
    if (!(s.tpa.idler_margin > 0.0)) throw ValidationError("tpa.idler_margin must be > 0");
    if (!(s.analysis.region_threshold > 0.0 && s.analysis.region_threshold < 1.0))
        throw ValidationError("analysis.region_threshold must lie in (0, 1)");
    if (!(s.analysis.region_link_deg >= 0.0)) throw ValidationError("analysis.region_link_deg must be >= 0");
    if (s.analysis.eigen_lambda_um && !(*s.analysis.eigen_lambda_um > s.pump.lambda_p_um))
        throw ValidationError("analysis.eigen_lambda_um must exceed the pump wavelength");
    if (s.outputs.empty()) throw ValidationError("scenario requests no outputs");
}

/// Parses a scenario; relative crystal paths resolve against base_dir.
inline Scenario scenario_from_json(const json& j, const std::filesystem::path& base_dir) {
    using namespace detail;
    check_keys(j, "scenario",
               {"schema_version", "name", "description", "crystal", "pump", "gain_gamma", "lambda_band", "theta_band",
                "tpa", "analysis", "outputs"});
    if (!j.contains("schema_version")) throw ValidationError("missing field 'scenario.schema_version'");
    if (!j.at("schema_version").is_number_integer() || j.at("schema_version").get<int>() != kScenarioSchemaVersion)
        throw ValidationError("unsupported schema_version (expected " + std::to_string(kScenarioSchemaVersion) + ")");

    Scenario s;
    s.name = j.value("name", "scenario");

    if (!j.contains("crystal")) throw ValidationError("missing field 'scenario.crystal'");
    const auto& jc = j.at("crystal");
    check_keys(jc, "crystal", {"file", "length_mm", "effective_length_mm", "theta_pm_deg", "phase_match"});
    if (!jc.contains("file") || !jc.at("file").is_string()) throw ValidationError("missing field 'crystal.file'");
    s.crystal_file = jc.at("file").get<std::string>();
    if (s.crystal_file.is_relative()) s.crystal_file = base_dir / s.crystal_file;
    if (!std::filesystem::exists(s.crystal_file))
        throw ValidationError("crystal file " + s.crystal_file.string() + " does not exist");
    s.crystal = io::load_crystal(s.crystal_file);
    s.crystal.length_mm = number(jc, "crystal", "length_mm");
    s.crystal.effective_length_mm = optional_number(jc, "crystal", "effective_length_mm");
    const bool has_angle = jc.contains("theta_pm_deg"), has_pm = jc.contains("phase_match");
    if (has_angle == has_pm) throw ValidationError("crystal needs exactly one of 'theta_pm_deg' and 'phase_match'");
    if (has_angle) s.crystal.theta_pm_rad = radians(number(jc, "crystal", "theta_pm_deg"));
    if (has_pm) {
        const auto& pm = jc.at("phase_match");
        check_keys(pm, "crystal.phase_match", {"signal_um", "along_walkoff"});
        s.phase_match_signal_um = number(pm, "crystal.phase_match", "signal_um");
        s.phase_match_along_walkoff = pm.value("along_walkoff", true);
    }

    if (!j.contains("pump")) throw ValidationError("missing field 'scenario.pump'");
    const auto& jp = j.at("pump");
    check_keys(jp, "pump", {"lambda_um", "waist_fwhm_um", "sigma_x_um", "waist_convention", "power_mw", "pulse_ps", "rep_rate_hz"});
    s.pump.lambda_p_um = number(jp, "pump", "lambda_um");
    const std::string conv = jp.value("waist_convention", "intensity-fwhm");
    if (conv == "intensity-fwhm") s.pump.convention = WaistConvention::IntensityFwhm;
    else if (conv == "gaussian-fwhm") s.pump.convention = WaistConvention::GaussianFwhm;
    else throw ValidationError("pump.waist_convention must be 'intensity-fwhm' or 'gaussian-fwhm'");
    const bool has_fwhm = jp.contains("waist_fwhm_um"), has_sigma = jp.contains("sigma_x_um");
    if (has_fwhm == has_sigma) throw ValidationError("pump needs exactly one of 'waist_fwhm_um' and 'sigma_x_um'");
    s.pump.sigma_x_um = has_sigma ? number(jp, "pump", "sigma_x_um")
                                  : sigma_from_fwhm(number(jp, "pump", "waist_fwhm_um"), s.pump.convention);
    if (auto v = optional_number(jp, "pump", "power_mw")) s.pump.power_mw = *v;
    if (auto v = optional_number(jp, "pump", "pulse_ps")) s.pump.pulse_ps = *v;
    if (auto v = optional_number(jp, "pump", "rep_rate_hz")) s.pump.rep_rate_hz = *v;

    if (j.contains("gain_gamma")) {
        const auto& g = j.at("gain_gamma");
        if (g.is_number()) s.gain_gamma = {g.get<double>()};
        else if (g.is_array() && std::all_of(g.begin(), g.end(), [](const json& v) { return v.is_number(); }))
            s.gain_gamma = g.get<std::vector<double>>();
        else throw ValidationError("gain_gamma must be a number or an array of numbers");
    }

    if (!j.contains("lambda_band")) throw ValidationError("missing field 'scenario.lambda_band'");
    const auto& jl = j.at("lambda_band");
    check_keys(jl, "lambda_band", {"min_um", "max_um", "step_um"});
    s.lambda_band = {number(jl, "lambda_band", "min_um"), number(jl, "lambda_band", "max_um"),
                     number(jl, "lambda_band", "step_um"), 0};

    if (!j.contains("theta_band")) throw ValidationError("missing field 'scenario.theta_band'");
    const auto& jt = j.at("theta_band");
    check_keys(jt, "theta_band", {"min_deg", "max_deg", "count"});
    if (!jt.contains("count") || !jt.at("count").is_number_integer())
        throw ValidationError("field 'theta_band.count' must be an integer");
    s.theta_band = {number(jt, "theta_band", "min_deg"), number(jt, "theta_band", "max_deg"), 0.0,
                    jt.at("count").get<int>()};

    if (j.contains("tpa")) {
        const auto& jt2 = j.at("tpa");
        check_keys(jt2, "tpa", {"walkoff", "idler_points", "idler_oversample", "idler_margin"});
        s.tpa.walkoff = jt2.value("walkoff", true);
        if (auto v = optional_number(jt2, "tpa", "idler_points")) s.tpa.idler_points = static_cast<int>(*v);
        if (auto v = optional_number(jt2, "tpa", "idler_oversample")) s.tpa.idler_oversample = *v;
        if (auto v = optional_number(jt2, "tpa", "idler_margin")) s.tpa.idler_margin = *v;
    }

    if (j.contains("analysis")) {
        const auto& ja = j.at("analysis");
        check_keys(ja, "analysis",
                   {"peak_band_um", "chirp_band_um", "region_threshold", "region_link_deg", "eigen_lambda_um",
                    "edge_warning_fraction"});
        s.analysis.peak_band_um = optional_range(ja, "analysis", "peak_band_um");
        s.analysis.chirp_band_um = optional_range(ja, "analysis", "chirp_band_um");
        if (auto v = optional_number(ja, "analysis", "region_threshold")) s.analysis.region_threshold = *v;
        if (auto v = optional_number(ja, "analysis", "region_link_deg")) s.analysis.region_link_deg = *v;
        s.analysis.eigen_lambda_um = optional_number(ja, "analysis", "eigen_lambda_um");
        if (auto v = optional_number(ja, "analysis", "edge_warning_fraction")) s.analysis.edge_warning_fraction = *v;
    }

    if (!j.contains("outputs") || !j.at("outputs").is_array()) throw ValidationError("scenario.outputs must be an array");
    for (const auto& o : j.at("outputs")) {
        if (!o.is_string() || !known_outputs().count(o.get<std::string>()))
            throw ValidationError("unknown output request " + o.dump());
        s.outputs.push_back(o.get<std::string>());
    }

    if (s.phase_match_signal_um) {
        s.pump.validate();
        s.crystal.theta_pm_rad = 0.5;  // placeholder so validate() does not reject the angle
        s.crystal.validate();
        s.crystal.theta_pm_rad = s.phase_match_along_walkoff
                                     ? phase_matching_angle_along_walkoff(s.crystal, s.pump.lambda_p_um, *s.phase_match_signal_um)
                                     : phase_matching_angle(s.crystal, s.pump.lambda_p_um, *s.phase_match_signal_um, 0.0);
    }
    validate_scenario(s);
    return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    try {
        return scenario_from_json(j, path.parent_path());
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

}  // namespace opg::cli
