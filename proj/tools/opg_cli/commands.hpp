#pragma once

// Subcommands of the opg tool. run() parses arguments and maps errors to
// exit codes: 0 ok, 2 validation, 3 numerical failure, 1 anything else.
// Outputs are computed in memory first and written only when every step
// succeeded, each file through a temporary and a rename.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "opg/coherence.hpp"
#include "opg/gain.hpp"
#include "opg/io.hpp"
#include "opg/schmidt.hpp"
#include "opg/spectrum.hpp"
#include "opg/tpa.hpp"
#include "opg_cli/plot.hpp"
#include "opg_cli/scenario.hpp"

namespace opg::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kInternal = 1, kValidation = 2, kNumerical = 3 };

/// Files produced by a command, written together at the end.
class OutputSet {
public:
    void add(std::string name, std::string content) { files_.emplace_back(std::move(name), std::move(content)); }

    void commit(const fs::path& dir) const {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw ValidationError("cannot create output directory " + dir.string() + ": " + ec.message());
        for (const auto& [name, content] : files_) io::atomic_write(dir / name, content);
    }

    const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }

private:
    std::vector<std::pair<std::string, std::string>> files_;
};

struct Streams {
    std::ostream& out;
    std::ostream& err;
};

inline std::string gamma_tag(double gamma) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", gamma);
    return buf;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline Normalization parse_normalization(const std::string& name) {
    if (name == "none") return Normalization::None;
    if (name == "global") return Normalization::Global;
    if (name == "per-branch") return Normalization::PerBranch;
    if (name == "per-wavelength" || name == "per-axis") return Normalization::PerWavelength;
    throw ValidationError("unknown normalization '" + name + "'");
}

// --- spectrum --------------------------------------------------------------

struct SpectrumOptions {
    fs::path config;
    fs::path out = "out";
    std::vector<double> gamma;
    std::string normalize = "global";
    bool plots = true;
    unsigned workers = 0;
};

namespace detail {

/// Row index of the map maximum, optionally restricted to a wavelength band.
inline std::pair<Eigen::Index, Eigen::Index> peak_cell(const SpectrumMap& map,
                                                       const std::optional<std::pair<double, double>>& band) {
    Eigen::Index best_r = -1, best_c = 0;
    double best = -HUGE_VAL;
    for (Eigen::Index r = 0; r < map.rows(); ++r) {
        const double l = map.lambda_um[static_cast<std::size_t>(r)];
        if (band && (l < band->first || l > band->second)) continue;
        Eigen::Index c = 0;
        const double v = map.intensity.row(r).maxCoeff(&c);
        if (v > best) {
            best = v;
            best_r = r;
            best_c = c;
        }
    }
    if (best_r < 0) throw ValidationError("analysis.peak_band_um contains no wavelength of the band");
    return {best_r, best_c};
}

inline json row_widths(const SpectrumMap& map, Eigen::Index r) {
    const Eigen::VectorXd row = map.intensity.row(r).transpose();
    const auto [lower, upper] = branch_stats(map.theta_ext_deg, row);
    auto branch = [](const BranchStats& b) {
        return json{{"peak", b.peak}, {"theta_peak_deg", b.theta_peak_deg}, {"lobe_width_deg", b.width_deg}};
    };
    return {{"lambda_um", map.lambda_um[static_cast<std::size_t>(r)]},
            {"fwhm_deg", half_max_width(map.theta_ext_deg, row)},
            {"lobe_width_deg", peak_lobe_width(map.theta_ext_deg, row)},
            {"branch_below_zero", branch(lower)},
            {"branch_above_zero", branch(upper)}};
}

inline double edge_fraction(const SpectrumMap& map) {
    const double peak = map.intensity.maxCoeff();
    if (!(peak > 0.0) || map.cols() < 2) return 0.0;
    const double edge = std::max(map.intensity.col(0).maxCoeff(), map.intensity.col(map.cols() - 1).maxCoeff());
    return edge / peak;
}

inline std::string ridge_csv(const Ridge& ridge) {
    std::string out = "lambda_um,theta_peak_ext_deg,peak_intensity\n";
    for (const auto& p : ridge.points)
        out += io::fmt(p.lambda_um, 8) + "," + io::fmt(p.theta_peak_deg, 8) + "," + io::fmt(p.peak) + "\n";
    return out;
}

}  // namespace detail

/// Eigenvalues of one slice from the full-rank Gram route, optionally with
/// the amplified weights for gain Γ.
struct SliceEigen {
    double lambda_um;
    Eigen::VectorXd lambda_n;
    Eigen::VectorXd lambda_prime_n;
    double gamma;
};

inline SliceEigen slice_eigenvalues(const Scenario& s, double lambda_um, double gamma) {
    const auto thetas = s.thetas();
    const SliceGeometry g = slice_geometry(lambda_um, s.pump, s.crystal, s.tpa);
    const TpaGrid tpa = build_tpa_grid(slice_grid(thetas, g, s.tpa), g, Execution{1});
    check_idler_coverage(tpa);
    if (tpa.max_abs() == 0.0) throw DegenerateInputError("amplitude vanishes on the eigenvalue slice");
    const GramSpectrum gs = gram_spectrum(tpa);
    SliceEigen out{lambda_um, gs.s2 / gs.s2.sum(), {}, gamma};
    if (gamma > 0.0) {
        const Eigen::VectorXd logw = log_gain_weights(out.lambda_n, gamma);
        const double top = logw.maxCoeff();
        out.lambda_prime_n = (logw.array() - top).exp().matrix();
        out.lambda_prime_n /= out.lambda_prime_n.sum();
    } else {
        out.lambda_prime_n = out.lambda_n;
    }
    return out;
}

inline int cmd_spectrum(const SpectrumOptions& opt, Streams io_streams) {
    Scenario s = load_scenario(opt.config);
    if (!opt.gamma.empty()) {
        s.gain_gamma = opt.gamma;
        if (!s.wants("spectrum_high")) s.outputs.push_back("spectrum_high");
    }
    const Normalization norm = parse_normalization(opt.normalize);
    validate_scenario(s);

    const Execution exec{opt.workers};
    const auto lambdas = s.lambdas();
    const auto thetas = s.thetas();
    const double lp = s.pump.lambda_p_um;

    std::vector<std::pair<std::string, SpectrumMap>> maps;
    if (s.wants("spectrum_low")) maps.emplace_back("spectrum_low", low_gain_spectrum(lambdas, thetas, s.pump, s.crystal, s.tpa, exec));
    if (s.wants("spectrum_high")) {
        auto high = high_gain_spectra(lambdas, thetas, s.pump, s.crystal, s.gain_gamma, s.tpa, exec);
        for (std::size_t k = 0; k < high.size(); ++k)
            maps.emplace_back("spectrum_gamma_" + gamma_tag(s.gain_gamma[k]), std::move(high[k]));
    }

    json summary;
    summary["scenario"] = s.name;
    summary["crystal"] = {{"name", s.crystal.name},
                          {"length_mm", s.crystal.length_mm},
                          {"interaction_length_mm", s.crystal.interaction_length_mm()},
                          {"theta_pm_deg", degrees(s.crystal.theta_pm_rad)}};
    const double rho = walkoff_angle(s.crystal, lp, s.crystal.theta_pm_rad);
    summary["walkoff"] = {{"rho_deg", degrees(rho)}};
    summary["pump"] = {{"lambda_um", lp}, {"sigma_x_um", s.pump.sigma_x_um}, {"waist_fwhm_um", s.pump.waist_fwhm_um()}};
    summary["grid"] = {{"lambda_rows", lambdas.size()}, {"theta_cols", thetas.size()}};
    summary["normalization"] = opt.normalize;
    summary["maps"] = json::array();
    json warnings = json::array();

    OutputSet files;
    std::optional<Eigen::Index> top_peak_row;
    for (std::size_t m = 0; m < maps.size(); ++m) {
        const auto& [name, map] = maps[m];
        const auto [pr, pc] = detail::peak_cell(map, s.analysis.peak_band_um);
        if (m + 1 == maps.size()) top_peak_row = pr;
        json entry = {{"name", name},
                      {"peak",
                       {{"lambda_um", map.lambda_um[static_cast<std::size_t>(pr)]},
                        {"theta_ext_deg", map.theta_ext_deg[static_cast<std::size_t>(pc)]},
                        {"intensity", map.intensity(pr, pc)}}},
                      {"at_peak_wavelength", detail::row_widths(map, pr)}};
        if (name != "spectrum_low") entry["gamma"] = s.gain_gamma[m - (s.wants("spectrum_low") ? 1 : 0)];

        SpectrumMap branch_norm = map;
        normalize(branch_norm, Normalization::PerBranch, lp);
        json regions = json::array();
        for (const auto& r : bright_regions(branch_norm, s.analysis.region_threshold, s.analysis.region_link_deg))
            regions.push_back({{"lambda_min_um", r.lambda_min_um},
                               {"lambda_max_um", r.lambda_max_um},
                               {"theta_min_deg", r.theta_min_deg},
                               {"theta_max_deg", r.theta_max_deg},
                               {"cells", r.cells},
                               {"energy_fraction", r.energy_fraction}});
        entry["bright_regions"] = {{"threshold", s.analysis.region_threshold},
                                   {"link_deg", s.analysis.region_link_deg},
                                   {"normalization", "per-branch"},
                                   {"regions", regions}};

        const double edge = detail::edge_fraction(map);
        entry["edge_fraction"] = edge;
        if (edge > s.analysis.edge_warning_fraction) {
            char buf[200];
            std::snprintf(buf, sizeof buf, "%s: edge columns reach %.3g of the map maximum; the angular band may truncate the emission",
                          name.c_str(), edge);
            warnings.push_back(buf);
        }

        if (s.wants("ridge")) {
            const Ridge ridge = spectral_ridge(map, s.analysis.chirp_band_um);
            files.add("ridge_" + name + ".csv", detail::ridge_csv(ridge));
            if (ridge.chirp) entry["chirp"] = {{"band_um", {s.analysis.chirp_band_um->first, s.analysis.chirp_band_um->second}},
                                               {"slope_deg_per_um", ridge.chirp->slope},
                                               {"intercept_deg", ridge.chirp->intercept}};
        }

        SpectrumMap shown = map;
        normalize(shown, norm, lp);
        json meta = {{"map", name}, {"normalization", opt.normalize}, {"intensity_unit", "arb."}};
        if (entry.contains("gamma")) meta["gamma"] = entry["gamma"];
        files.add(name + ".csv", io::spectrum_csv(shown));
        files.add(name + ".bin", io::spectrum_binary(shown, meta));
        if (s.wants("plots") && opt.plots) {
            files.add(name + ".png", plot::heatmap_png(shown));
            files.add(name + ".svg", plot::heatmap_svg(shown, name));
        }
        summary["maps"].push_back(entry);
    }

    // Low/high comparison at the wavelength where the strongest-gain map peaks.
    if (maps.size() >= 2) {
        const auto& lo = maps.front().second;
        const auto& hi = maps.back().second;
        const Eigen::Index r = *top_peak_row;
        const Eigen::VectorXd rl = lo.intensity.row(r).transpose(), rh = hi.intensity.row(r).transpose();
        const double fl = half_max_width(lo.theta_ext_deg, rl), fh = half_max_width(hi.theta_ext_deg, rh);
        summary["narrowing"] = {{"lambda_um", lambdas[static_cast<std::size_t>(r)]},
                                {"reference_map", maps.front().first},
                                {"amplified_map", maps.back().first},
                                {"fwhm_reference_deg", fl},
                                {"fwhm_amplified_deg", fh},
                                {"ratio", fh > 0.0 ? fl / fh : HUGE_VAL}};
    }

    if (s.wants("eigenvalues")) {
        double lam = 2.0 * lp;
        if (s.analysis.eigen_lambda_um) lam = *s.analysis.eigen_lambda_um;
        else if (top_peak_row) lam = lambdas[static_cast<std::size_t>(*top_peak_row)];
        const double gamma = s.gain_gamma.empty() ? 0.0 : *std::max_element(s.gain_gamma.begin(), s.gain_gamma.end());
        const SliceEigen e = slice_eigenvalues(s, lam, gamma);
        std::string csv = "n,lambda_n,lambda_prime_n\n";
        for (Eigen::Index n = 0; n < e.lambda_n.size(); ++n)
            csv += std::to_string(n) + "," + io::fmt(e.lambda_n[n]) + "," + io::fmt(e.lambda_prime_n[n]) + "\n";
        files.add("eigenvalues.csv", csv);
        summary["eigenvalues"] = {{"lambda_um", lam},
                                  {"gamma", gamma},
                                  {"modes", e.lambda_n.size()},
                                  {"lambda_0", e.lambda_n[0]},
                                  {"lambda_prime_0", e.lambda_prime_n[0]},
                                  {"K", 1.0 / e.lambda_n.squaredNorm()},
                                  {"K_amplified", 1.0 / e.lambda_prime_n.squaredNorm()}};
    }

    summary["warnings"] = warnings;
    files.add("summary.json", dump(summary));
    files.commit(opt.out);
    for (const auto& w : warnings) io_streams.err << "warning: " << w.get<std::string>() << "\n";
    io_streams.out << dump(summary);
    return kOk;
}

// --- fit-gain ---------------------------------------------------------------

struct FitGainOptions {
    fs::path csv;
    fs::path out = "out";
    std::optional<double> max_pump_mw;
    std::vector<double> report_mw;
    std::string label;
    bool plots = true;
};

inline GainDataset gain_dataset_from_table(const io::Table& t, std::string label) {
    const std::size_t cp = t.column("pump_mw");
    const std::size_t cy = t.column("pdc_power");
    const bool with_err = t.has_column("pdc_power_err");
    const std::size_t ce = with_err ? t.column("pdc_power_err") : 0;
    GainDataset d;
    d.label = std::move(label);
    for (const auto& row : t.rows) {
        GainPoint p{row[cp], row[cy], std::nullopt};
        if (with_err) p.pdc_power_err = row[ce];
        if (std::isnan(p.pump_mw) || std::isnan(p.pdc_power) || (with_err && std::isnan(*p.pdc_power_err)))
            throw ValidationError("gain data contains an empty cell");
        d.points.push_back(p);
    }
    return d;
}

inline int cmd_fit_gain(const FitGainOptions& opt, Streams io_streams) {
    GainDataset data = gain_dataset_from_table(io::read_csv(opt.csv), opt.label.empty() ? opt.csv.stem().string() : opt.label);
    if (opt.max_pump_mw) {
        if (!(*opt.max_pump_mw > 0.0)) throw ValidationError("--max-pump-mw must be > 0");
        data = truncate_dataset(std::move(data), *opt.max_pump_mw);
    }
    for (double p : opt.report_mw)
        if (!(p > 0.0)) throw ValidationError("--report-mw values must be > 0");
    data.validate();

    GainFitOptions fo;
    fo.report_powers = opt.report_mw;
    const GainFit fit = fit_gain(data, fo);

    json report = {{"label", data.label},
                   {"points", data.points.size()},
                   {"model", "P_pdc = A sinh^2(B sqrt(P_pump))"},
                   {"A", fit.A},
                   {"B_per_sqrt_mw", fit.B},
                   {"sigma_A", fit.sigma_A()},
                   {"sigma_B", fit.sigma_B()},
                   {"covariance", {{fit.covariance(0, 0), fit.covariance(0, 1)}, {fit.covariance(1, 0), fit.covariance(1, 1)}}},
                   {"residual_rms", fit.residual_rms},
                   {"iterations", fit.iterations},
                   {"warnings", fit.warnings}};
    if (opt.max_pump_mw) report["max_pump_mw"] = *opt.max_pump_mw;
    report["G_table"] = json::array();
    for (const auto& g : fit.G_table)
        report["G_table"].push_back({{"pump_mw", g.pump_mw}, {"G", g.G}, {"sigma_G", g.sigma_G}});

    OutputSet files;
    std::string csv = "pump_mw,pdc_power,model\n";
    for (const auto& p : data.points)
        csv += io::fmt(p.pump_mw) + "," + io::fmt(p.pdc_power) + "," + io::fmt(evaluate_gain_model(fit.A, fit.B, p.pump_mw)) + "\n";
    files.add("gain_fit.csv", csv);
    files.add("gain_fit.json", dump(report));
    if (opt.plots) {
        plot::Series measured{{}, {}, "black", true, "data"};
        for (const auto& p : data.points) {
            measured.x.push_back(p.pump_mw);
            measured.y.push_back(p.pdc_power);
        }
        plot::Series curve{{}, {}, "#d62728", false, "A sinh^2(B sqrt P)"};
        const double pmax = data.points.back().pump_mw;
        for (int k = 0; k <= 200; ++k) {
            const double P = pmax * k / 200.0;
            curve.x.push_back(P);
            curve.y.push_back(evaluate_gain_model(fit.A, fit.B, P));
        }
        files.add("gain_fit.svg", plot::line_chart_svg({measured, curve}, "pump power (mW)", "PDC power", data.label));
    }
    files.commit(opt.out);
    for (const auto& w : fit.warnings) io_streams.err << "warning: " << w << "\n";
    io_streams.out << dump(report);
    return kOk;
}

// --- modes ------------------------------------------------------------------

struct ModesOptions {
    std::optional<fs::path> profile_x, visibility_x, profile_y, visibility_y;
    double slit_width_mm = 0.0;
    int n_modes = 10;
    std::string filter_label;
    fs::path out = "out";
    bool plots = true;
};

inline std::vector<ProfilePoint> profile_from_table(const io::Table& t) {
    const std::size_t cx = t.column("x_mm"), ci = t.column("intensity");
    std::vector<ProfilePoint> out;
    for (const auto& r : t.rows) {
        if (std::isnan(r[cx]) || std::isnan(r[ci])) throw ValidationError("profile data contains an empty cell");
        out.push_back({r[cx], r[ci]});
    }
    return out;
}

inline VisibilityDataset visibility_from_table(const io::Table& t, double slit_width_mm, Axis axis) {
    const std::size_t cd = t.column("spacing_mm"), cv = t.column("visibility");
    VisibilityDataset ds;
    ds.slit_width_mm = slit_width_mm;
    ds.axis = axis;
    for (const auto& r : t.rows) {
        if (std::isnan(r[cd]) || std::isnan(r[cv])) throw ValidationError("visibility data contains an empty cell");
        ds.points.push_back({r[cd], r[cv]});
    }
    return ds;
}

inline int cmd_modes(const ModesOptions& opt, Streams io_streams) {
    if (opt.n_modes < 1) throw ValidationError("--n-modes must be >= 1");
    if (!(opt.slit_width_mm >= 0.0)) throw ValidationError("--slit-width-mm must be >= 0");
    struct AxisInput {
        Axis axis;
        std::vector<ProfilePoint> profile;
        VisibilityDataset visibility;
    };
    std::vector<AxisInput> inputs;
    auto add_axis = [&](Axis axis, const std::optional<fs::path>& prof, const std::optional<fs::path>& vis) {
        if (!prof && !vis) return;
        if (!prof || !vis)
            throw ValidationError(std::string(axis_name(axis)) + " axis needs both a profile and a visibility file");
        AxisInput in{axis, profile_from_table(io::read_csv(*prof)), visibility_from_table(io::read_csv(*vis), opt.slit_width_mm, axis)};
        if (in.profile.size() < 5) throw ValidationError(std::string(axis_name(axis)) + " profile needs at least 5 points");
        if (in.visibility.points.size() < 3)
            throw ValidationError(std::string(axis_name(axis)) + " visibility needs at least 3 points");
        in.visibility.validate();
        inputs.push_back(std::move(in));
    };
    add_axis(Axis::Horizontal, opt.profile_x, opt.visibility_x);
    add_axis(Axis::Vertical, opt.profile_y, opt.visibility_y);
    if (inputs.empty()) throw ValidationError("modes needs at least one axis (--profile-x/--visibility-x)");

    json report;
    report["filter_label"] = opt.filter_label;
    report["slit_width_mm"] = opt.slit_width_mm;
    report["axes"] = json::object();
    std::vector<double> M;
    std::vector<plot::Series> profile_plot, visibility_plot;
    const char* colors[] = {"#1f77b4", "#d62728"};
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto& in = inputs[k];
        const std::string name = axis_name(in.axis);
        SchellFit fit;
        try {
            fit = fit_schell(in.profile, in.visibility, opt.filter_label);
        } catch (const FitQualityError& e) {
            throw FitQualityError(name + " axis: " + e.what(), e.r_squared());
        }
        const ModeCount mc = mercer_modes(fit.model, opt.n_modes);
        M.push_back(mc.M_axis);
        json ax = {{"a_mm", fit.model.a_mm},
                   {"b_mm", fit.model.fully_coherent() ? json(nullptr) : json(fit.model.b_mm)},
                   {"fully_coherent", fit.model.fully_coherent()},
                   {"coherence_radius_mm",
                    fit.model.fully_coherent() ? json(nullptr) : json(fit.model.coherence_radius_mm())},
                   {"profile_center_mm", fit.profile_center_mm},
                   {"r2_profile", fit.r2_profile},
                   {"r2_visibility", std::isfinite(fit.r2_visibility) ? json(fit.r2_visibility) : json(nullptr)},
                   {"q", mc.q},
                   {"eigenvalues", std::vector<double>(mc.eigenvalues.data(), mc.eigenvalues.data() + mc.eigenvalues.size())},
                   {"nystrom_max_discrepancy", mc.max_discrepancy},
                   {"M_axis", mc.M_axis}};
        report["axes"][name] = ax;

        plot::Series pd{{}, {}, colors[k], true, name + " profile"}, pf{{}, {}, colors[k], false, ""};
        double xmin = HUGE_VAL, xmax = -HUGE_VAL;
        for (const auto& p : in.profile) {
            pd.x.push_back(p.x_mm);
            pd.y.push_back(p.intensity / fit.profile_amplitude);
            xmin = std::min(xmin, p.x_mm);
            xmax = std::max(xmax, p.x_mm);
        }
        for (int i = 0; i <= 200; ++i) {
            const double x = xmin + (xmax - xmin) * i / 200.0, u = x - fit.profile_center_mm;
            pf.x.push_back(x);
            pf.y.push_back(std::exp(-u * u / (2.0 * fit.model.a_mm * fit.model.a_mm)));
        }
        plot::Series vd{{}, {}, colors[k], true, name + " visibility"}, vf{{}, {}, colors[k], false, ""};
        const double dmax = in.visibility.points.back().spacing_mm;
        for (const auto& p : in.visibility.points) {
            vd.x.push_back(p.spacing_mm);
            vd.y.push_back(p.visibility);
        }
        const double dmin = opt.slit_width_mm > 0.0 ? opt.slit_width_mm * 1.001 : 0.0;
        for (int i = 0; i <= 200; ++i) {
            const double d = dmin + (dmax - dmin) * i / 200.0;
            vf.x.push_back(d);
            vf.y.push_back(visibility_from_model(fit.model, d, opt.slit_width_mm > 0.0 ? opt.slit_width_mm : 0.0));
        }
        profile_plot.insert(profile_plot.end(), {pd, pf});
        visibility_plot.insert(visibility_plot.end(), {vd, vf});
    }
    std::optional<std::string> notice;
    if (M.size() == 2) {
        report["M_tot"] = total_modes(M[0], M[1]);
    } else {
        report["M_tot"] = nullptr;
        notice = "M_tot needs both axes; only the " + std::string(axis_name(inputs.front().axis)) +
                 " axis was given, so only M_axis is reported";
        report["notice"] = *notice;
    }

    OutputSet files;
    files.add("modes.json", dump(report));
    if (opt.plots) {
        // Two panels side by side: beam profiles and visibilities.
        plot::Frame left = plot::fit_frame(profile_plot, true), right = plot::fit_frame(visibility_plot, true);
        right.y0 = 0.0;
        right.y1 = 1.05;
        right.left = left.left + left.width + 90;
        std::string body = plot::svg_axes(left, "x (mm)", "normalized intensity", "beam profile") +
                           plot::line_chart_body(left, profile_plot) +
                           plot::svg_axes(right, "slit spacing (mm)", "visibility", "double-slit visibility") +
                           plot::line_chart_body(right, visibility_plot);
        files.add("modes.svg", plot::svg_document(right.left + right.width + 20, left.top + left.height + 50, body));
    }
    files.commit(opt.out);
    if (notice) io_streams.err << "notice: " << *notice << "\n";
    io_streams.out << dump(report);
    return kOk;
}

// --- dispersion -------------------------------------------------------------

struct DispersionOptions {
    fs::path config;
    fs::path out = "out";
    int points = 0;  ///< 0 uses the scenario lambda band
};

inline int cmd_dispersion(const DispersionOptions& opt, Streams io_streams) {
    const Scenario s = load_scenario(opt.config);
    if (opt.points < 0 || opt.points == 1) throw ValidationError("--points must be 0 or >= 2");
    std::vector<double> lambdas = s.lambdas();
    if (opt.points >= 2) {
        const double lo = s.lambda_band.min, hi = s.lambda_band.max;
        lambdas.resize(static_cast<std::size_t>(opt.points));
        for (int k = 0; k < opt.points; ++k) lambdas[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / (opt.points - 1);
    }
    const auto& c = s.crystal;
    const double lp = s.pump.lambda_p_um, th = c.theta_pm_rad;
    const Beam pump{lp, Polarization::Extraordinary, th};

    std::string csv = "lambda_um,n_o,n_e,walkoff_e_deg,group_index_o,group_index_e,delay_o_vs_pump_ps\n";
    for (double l : lambdas) {
        csv += io::fmt(l, 8) + "," + io::fmt(index_ordinary(c, l)) + "," + io::fmt(index_extraordinary(c, l, th)) + "," +
               io::fmt(degrees(walkoff_angle(c, l, th))) + "," +
               io::fmt(group_index(c, l, Polarization::Ordinary, 0.0)) + "," +
               io::fmt(group_index(c, l, Polarization::Extraordinary, th)) + "," +
               io::fmt(group_delay_ps(c, pump, {l, Polarization::Ordinary, 0.0}, c.length_mm)) + "\n";
    }
    const double rho = walkoff_angle(c, lp, th);
    json report = {{"crystal", c.name},
                   {"length_mm", c.length_mm},
                   {"theta_pm_deg", degrees(th)},
                   {"pump_lambda_um", lp},
                   {"pump_n_e", index_extraordinary(c, lp, th)},
                   {"rho_deg", degrees(rho)}};
    if (s.phase_match_signal_um) {
        const double ls = *s.phase_match_signal_um;
        report["phase_match_signal_um"] = ls;
        report["rho_ext_deg"] = degrees(external_angle(rho, index_ordinary(c, ls)));
        report["group_delay_ps"] = group_delay_ps(c, pump, {ls, Polarization::Ordinary, 0.0}, c.length_mm);
        report["effective_length_mm"] = resolve_effective_length_mm(c, lp, ls, s.pump.pulse_ps);
    }
    OutputSet files;
    files.add("dispersion.csv", csv);
    files.add("dispersion.json", dump(report));
    files.commit(opt.out);
    io_streams.out << dump(report);
    return kOk;
}

// --- entry point --------------------------------------------------------------

inline json error_json(const char* kind, const std::string& type, const std::string& message) {
    return {{"error", {{"kind", kind}, {"type", type}, {"message", message}}}};
}

inline std::string error_type(const std::exception& e) {
    if (dynamic_cast<const UnphasematchableError*>(&e)) return "UnphasematchableError";
    if (dynamic_cast<const CoverageError*>(&e)) return "CoverageError";
    if (dynamic_cast<const DegenerateInputError*>(&e)) return "DegenerateInputError";
    if (dynamic_cast<const ConvergenceError*>(&e)) return "ConvergenceError";
    if (dynamic_cast<const FitQualityError*>(&e)) return "FitQualityError";
    if (dynamic_cast<const ConsistencyError*>(&e)) return "ConsistencyError";
    if (dynamic_cast<const DomainError*>(&e)) return "DomainError";
    if (dynamic_cast<const ValidationError*>(&e)) return "ValidationError";
    if (dynamic_cast<const NumericalError*>(&e)) return "NumericalError";
    return "Error";
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    Streams streams{out, err};
    CLI::App app{"Walk-off-directed optical parametric generator: spectra, gain fits and spatial mode counts", "opg"};
    app.require_subcommand(1);
    app.fallthrough();
    unsigned workers = 0;
    bool no_plots = false;
    fs::path out_dir = "out";
    app.add_option("--workers", workers, "worker threads for data-parallel sweeps (0 = all cores)");
    app.add_flag("--no-plots", no_plots, "skip PNG/SVG output");
    app.add_option("--out", out_dir, "output directory");

    SpectrumOptions so;
    auto* spectrum = app.add_subcommand("spectrum", "low- and high-gain wavelength-angular spectra of a scenario");
    spectrum->add_option("--config", so.config, "scenario JSON")->required();
    spectrum->add_option("--gamma", so.gamma, "gain Gamma for the amplified map (repeatable; overrides the scenario)");
    spectrum->add_option("--normalize", so.normalize, "none, global, per-branch, per-wavelength (alias per-axis)")
        ->check(CLI::IsMember({"none", "global", "per-branch", "per-wavelength", "per-axis"}));

    FitGainOptions fo;
    double max_pump = 0.0;
    auto* fitg = app.add_subcommand("fit-gain", "fit P_pdc = A sinh^2(B sqrt P) to a power sweep");
    fitg->add_option("csv", fo.csv, "CSV with pump_mw, pdc_power[, pdc_power_err]")->required();
    auto* max_opt = fitg->add_option("--max-pump-mw", max_pump, "drop points above this pump power");
    fitg->add_option("--report-mw", fo.report_mw, "pump powers for the G table");
    fitg->add_option("--label", fo.label, "dataset label");

    ModesOptions mo;
    fs::path px, vx, py, vy;
    auto* modes = app.add_subcommand("modes", "Gaussian Schell fit and spatial mode count");
    auto* opx = modes->add_option("--profile-x", px, "horizontal beam profile CSV (x_mm, intensity)");
    auto* ovx = modes->add_option("--visibility-x", vx, "horizontal visibility CSV (spacing_mm, visibility)");
    auto* opy = modes->add_option("--profile-y", py, "vertical beam profile CSV");
    auto* ovy = modes->add_option("--visibility-y", vy, "vertical visibility CSV");
    modes->add_option("--slit-width-mm", mo.slit_width_mm, "slit width for the finite-aperture model (0 = point slits)");
    modes->add_option("--n-modes", mo.n_modes, "number of coherent-mode weights to report");
    modes->add_option("--filter-label", mo.filter_label, "free text, e.g. '12 nm bandpass'");

    DispersionOptions dopt;
    auto* disp = app.add_subcommand("dispersion", "index, walk-off and group-delay table of a scenario's crystal");
    disp->add_option("--config", dopt.config, "scenario JSON")->required();
    disp->add_option("--points", dopt.points, "number of wavelengths (default: the scenario band)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << error_json("validation", "UsageError", e.what()).dump() << "\n";
        return kValidation;
    }

    try {
        if (spectrum->parsed()) {
            so.out = out_dir;
            so.plots = !no_plots;
            so.workers = workers;
            return cmd_spectrum(so, streams);
        }
        if (fitg->parsed()) {
            fo.out = out_dir;
            fo.plots = !no_plots;
            if (max_opt->count()) fo.max_pump_mw = max_pump;
            return cmd_fit_gain(fo, streams);
        }
        if (modes->parsed()) {
            if (opx->count()) mo.profile_x = px;
            if (ovx->count()) mo.visibility_x = vx;
            if (opy->count()) mo.profile_y = py;
            if (ovy->count()) mo.visibility_y = vy;
            mo.out = out_dir;
            mo.plots = !no_plots;
            return cmd_modes(mo, streams);
        }
        if (disp->parsed()) {
            dopt.out = out_dir;
            return cmd_dispersion(dopt, streams);
        }
    } catch (const ConvergenceError& e) {
        json j = error_json("numerical", "ConvergenceError", e.what());
        j["error"]["final_residual"] = e.final_residual();
        j["error"]["iterations"] = e.iterations();
        err << j.dump() << "\n";
        return kNumerical;
    } catch (const FitQualityError& e) {
        json j = error_json("numerical", "FitQualityError", e.what());
        j["error"]["r_squared"] = e.r_squared();
        err << j.dump() << "\n";
        return kNumerical;
    } catch (const ValidationError& e) {
        err << error_json("validation", error_type(e), e.what()).dump() << "\n";
        return kValidation;
    } catch (const NumericalError& e) {
        err << error_json("numerical", error_type(e), e.what()).dump() << "\n";
        return kNumerical;
    } catch (const fs::filesystem_error& e) {
        err << error_json("validation", "FilesystemError", e.what()).dump() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        err << error_json("internal", "InternalError", e.what()).dump() << "\n";
        return kInternal;
    }
    return kInternal;
}

}  // namespace opg::cli
