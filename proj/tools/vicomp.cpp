// Batch front end: compensation, stimulus generation, parameter fitting and
// kernel inspection over PNG/PFM files and TOML configs.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "vicomp/compensation.hpp"
#include "vicomp/config.hpp"
#include "vicomp/data_io.hpp"
#include "vicomp/fitting.hpp"
#include "vicomp/image_io.hpp"
#include "vicomp/stimuli.hpp"

namespace {

constexpr int kExitIo = 2;
constexpr int kExitConfig = 3;
constexpr int kExitProcessing = 4;

using namespace vicomp;

struct CommonArgs {
    std::string config_path;
};

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

int cmd_compensate(const CommonArgs& common, const std::string& input, const std::string& output,
                   const std::string& src_name, const std::string& dst_name,
                   const std::string& preset_name, const std::string& format) {
    const Config cfg = resolve_config(common.config_path);
    const ScreenSpec& src = cfg.screen(src_name);
    const ScreenSpec& dst = cfg.screen(dst_name);
    const CompensationParams& params = cfg.preset(preset_name);

    TriImage image;
    int bit_depth = 16;
    bool input_pfm = has_suffix(input, ".pfm");
    if (input_pfm) {
        image = read_pfm(input).image;
    } else {
        PngImage png = read_png(input);
        image = std::move(png.image);
        bit_depth = png.bit_depth;
    }

    params.validate_at(image.width(), image.height());

    CompensationDiagnostics diag;
    const TriImage out = compensate(image, src, dst, params, &diag);

    std::string out_format = format;
    if (out_format.empty()) out_format = input_pfm ? "pfm" : (bit_depth == 16 ? "png16" : "png8");
    if (out_format == "pfm")
        write_pfm(output, out);
    else if (out_format == "png16")
        write_png(output, out, 16);
    else if (out_format == "png8")
        write_png(output, out, 8);
    else
        throw ConfigError("unknown output format '" + out_format + "'");

    std::cout << "compensated " << input << " -> " << output << "\n"
              << "  response clip fraction: " << diag.clipped_fraction << "\n"
              << "  gamut-clamped values:   " << diag.gamut_clamped << "\n"
              << "  negative cones clamped: " << diag.lms_negative_clamped << "\n";
    return 0;
}

void write_stimulus_metadata(const std::string& path, const std::string& kind,
                             const ScreenSpec& screen, double ppd,
                             const std::vector<std::pair<std::string, double>>& fields) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << "kind = \"" << kind << "\"\n";
    os << "pixels_per_degree = " << ppd << "\n";
    os << "gamma = " << screen.gamma << "\n";
    os << "scale_factor = " << screen.scale_factor << "\n";
    for (const auto& [k, v] : fields) os << k << " = " << v << "\n";
}

std::string with_stem_suffix(const std::string& path, const std::string& suffix,
                             const std::string& new_ext = "") {
    std::filesystem::path p(path);
    const std::string ext = new_ext.empty() ? p.extension().string() : new_ext;
    std::filesystem::path q = p.parent_path() / (p.stem().string() + suffix + ext);
    return q.string();
}

int cmd_stimulus(const CommonArgs& common, const std::string& kind, const std::string& spec_file,
                 const std::string& screen_name, const std::string& output, bool table1_grid) {
    Config cfg = resolve_config(common.config_path);
    if (!spec_file.empty()) {
        // the spec file is an ordinary config fragment carrying
        // [bar_pattern] / [ring_pattern] sections
        const TomlDoc doc = parse_toml_file(spec_file);
        Config overlay = load_config(doc);
        cfg.bar_pattern = overlay.bar_pattern;
        cfg.ring_pattern = overlay.ring_pattern;
    }
    const ScreenSpec& screen = cfg.screen(screen_name);

    if (kind == "bars") {
        std::vector<BarPatternSpec> specs;
        std::vector<std::string> names;
        if (table1_grid) {
            for (double w : table1_comparison_widths_deg())
                for (double lum : table1_initial_luminances_cdm2()) {
                    BarPatternSpec s = cfg.bar_pattern;
                    s.comparison_bar_width_deg = w;
                    s.gray_luminance = lum;
                    specs.push_back(s);
                    char buf[64];
                    std::snprintf(buf, sizeof buf, "_w%.2f_L%.1f", w, lum);
                    names.push_back(buf);
                }
        } else {
            specs.push_back(cfg.bar_pattern);
            names.emplace_back("");
        }
        for (size_t i = 0; i < specs.size(); ++i) {
            const BarStimulus stim = generate_bars(specs[i], screen);
            const std::string img_path = with_stem_suffix(output, names[i]);
            write_png(img_path, stim.image, 16);
            write_mask_png(with_stem_suffix(img_path, "_mask_white", ".png"), stim.white_side_mask);
            write_mask_png(with_stem_suffix(img_path, "_mask_black", ".png"), stim.black_side_mask);
            write_stimulus_metadata(
                with_stem_suffix(img_path, "_meta", ".toml"), "bars", screen, stim.ppd,
                {{"comparison_width_px", stim.comparison_width_px},
                 {"inducing_width_px", stim.inducing_width_px},
                 {"gray_luminance_cdm2", specs[i].gray_luminance},
                 {"white_luminance_cdm2", specs[i].white_luminance},
                 {"black_luminance_cdm2", specs[i].black_luminance}});
            std::cout << "wrote " << img_path << "\n";
        }
    } else if (kind == "rings") {
        const RingStimulus stim = generate_rings(cfg.ring_pattern, screen);
        write_png(output, stim.test_image, 16);
        write_png(with_stem_suffix(output, "_comparison"), stim.comparison_image, 16);
        write_mask_png(with_stem_suffix(output, "_mask_test", ".png"), stim.test_mask);
        write_stimulus_metadata(with_stem_suffix(output, "_meta", ".toml"), "rings", screen,
                                stim.ppd,
                                {{"ring_width_px", stim.ring_width_px},
                                 {"test_inner_radius_px", stim.test_inner_radius_px},
                                 {"test_outer_radius_px", stim.test_outer_radius_px}});
        std::cout << "wrote " << output << "\n";
    } else {
        throw ConfigError("stimulus kind must be 'bars' or 'rings'");
    }
    return 0;
}

int cmd_fit(const CommonArgs& common, const std::string& objective_name,
            const std::string& data_path, const std::string& out_config, unsigned seed,
            bool folds) {
    Config cfg = resolve_config(common.config_path);
    std::ifstream data_stream(data_path);
    if (!data_stream) throw IoError("cannot open " + data_path);

    const ScreenSpec& src = cfg.screen("cinema");
    const ScreenSpec& dst = cfg.screen("mobile");

    FitOptions opt;
    opt.seed = seed;
    opt.max_evals = 5000;

    std::ofstream out;
    if (!out_config.empty()) {
        out.open(out_config);
        if (!out) throw IoError("cannot write " + out_config);
    }

    auto print_trace = [](const FitResult& r) {
        std::cout << "  evaluations: " << r.evaluations << (r.converged ? " (converged)" : "")
                  << "\n  objective:   " << r.objective_value << "\n";
        if (r.trace.size() >= 2)
            std::cout << "  trace:       " << r.trace.front() << " -> " << r.trace.back() << " over "
                      << r.trace.size() << " iterations\n";
    };

    if (objective_name == "achromatic") {
        const auto data = read_achromatic_csv(data_stream);
        CompensationParams start = cfg.preset("paper-achromatic");
        auto obj = [&](const std::vector<double>& x) {
            return achromatic_objective(unpack_compensation(x, start, false, true), data,
                                        cfg.bar_pattern, src, dst);
        };
        const auto x0 = pack_compensation(start, false, true);
        std::vector<double> lo(x0.size(), -10.0), hi(x0.size(), 10.0);
        lo[0] = lo[1] = 0.05;
        hi[0] = hi[1] = 3.0;
        for (size_t i = 6 + 4; i < x0.size(); ++i) {
            lo[i] = std::log(0.5);
            hi[i] = std::log(400.0);
        }
        const FitResult r = fit(obj, x0, lo, hi, opt);
        print_trace(r);
        if (out) write_preset_toml(out, "fitted-achromatic",
                                   unpack_compensation(r.params, start, false, true));
    } else if (objective_name == "chromatic") {
        const auto data = read_chromatic_csv(data_stream);
        if (cfg.ring_sets.empty())
            throw ConfigError("chromatic fit needs [ring_sets.N] sections in the config");
        CompensationParams start = cfg.preset("paper-chromatic-set4");

        auto fit_on = [&](const std::vector<int>& train) {
            auto obj = [&](const std::vector<double>& x) {
                return chromatic_objective(unpack_compensation(x, start, true, true), data,
                                           cfg.ring_sets, src, dst, train);
            };
            const auto x0 = pack_compensation(start, true, true);
            std::vector<double> lo(x0.size(), -10.0), hi(x0.size(), 10.0);
            lo[0] = lo[1] = 0.05;
            hi[0] = hi[1] = 3.0;
            for (size_t i = 6 + 4; i < x0.size(); ++i) {
                lo[i] = std::log(0.5);
                hi[i] = std::log(400.0);
            }
            return fit(obj, x0, lo, hi, opt);
        };

        if (folds) {
            std::vector<CompensationParams> per_fold;
            for (int test_set = 1; test_set <= 4; ++test_set) {
                std::vector<int> train;
                for (int s = 1; s <= 4; ++s)
                    if (s != test_set) train.push_back(s);
                const FitResult r = fit_on(train);
                std::cout << "fold test=" << test_set << ":\n";
                print_trace(r);
                per_fold.push_back(unpack_compensation(r.params, start, true, true));
            }
            const Table3Report rep = table3_report(per_fold, data, cfg.ring_sets, src, dst);
            std::cout << rep.format();
            if (out)
                for (int f = 0; f < 4; ++f)
                    write_preset_toml(out, "fitted-chromatic-fold" + std::to_string(f + 1),
                                      per_fold[f]);
        } else {
            std::vector<int> train;
            for (const auto& [set, spec] : cfg.ring_sets) train.push_back(set);
            const FitResult r = fit_on(train);
            print_trace(r);
            if (out) write_preset_toml(out, "fitted-chromatic",
                                       unpack_compensation(r.params, start, true, true));
        }
    } else if (objective_name == "lhei") {
        const auto conditions = read_monnier_csv(data_stream, cfg.ring_pattern);
        auto obj = [&](const std::vector<double>& x) {
            return lhei_objective(unpack_lhei(x, cfg.lhei), conditions, src);
        };
        const auto x0 = pack_lhei(cfg.lhei);
        std::vector<double> lo(x0.size()), hi(x0.size());
        for (size_t i = 0; i < 3; ++i) {parallel
            lo[i] = 0.0;
            hi[i] = 10.0;
        }
        for (size_t i = 3; i < 6; ++i) {
            lo[i] = 0.05;
            hi[i] = 20.0;
        }
        for (size_t i = 6; i < x0.size(); ++i) {
            lo[i] = std::log(0.5);
            hi[i] = std::log(200.0);
        }
        opt.max_evals = 400; // evolution runs are expensive
        const FitResult r = fit(obj, x0, lo, hi, opt);
        print_trace(r);
        if (out) {
            const LheiParams p = unpack_lhei(r.params, cfg.lhei);
            TomlDoc doc;
            TomlSection& sec = doc.sections["lhei"];
            sec.values["alpha"] = TomlValue{p.alpha};
            sec.values["beta"] = TomlValue{p.beta};
            sec.values["gamma"] = TomlValue{p.gamma};
            sec.values["sigmoid_gain_pos"] = TomlValue{p.sigmoid.gain_pos};
            sec.values["sigmoid_gain_neg"] = TomlValue{p.sigmoid.gain_neg};
            sec.values["sigmoid_slope"] = TomlValue{p.sigmoid.slope};
            write_toml(out, doc);
        }
    } else {
        throw ConfigError("fit objective must be achromatic, chromatic or lhei");
    }
    return 0;
}

int cmd_inspect_kernel(const CommonArgs& common, const std::string& preset_name, int size,
                       const std::string& output, const std::string& channel_group) {
    const Config cfg = resolve_config(common.config_path);
    const CompensationParams& params = cfg.preset(preset_name);
    const RationalFilterCoeffs& coeffs =
        channel_group == "chromatic" ? params.chromatic : params.achromatic;
    if (size < 8) throw ConfigError("inspect-kernel: size must be at least 8");

    const StabilityReport rep = validate_stability(coeffs, size, size);
    if (!rep.pass)
        throw StabilityError("preset '" + preset_name + "' (" + channel_group +
                             ") unstable at size " + std::to_string(size) + ": min |denominator| " +
                             std::to_string(rep.min_abs_denominator) + " at frequency (" +
                             std::to_string(rep.at_u) + ", " + std::to_string(rep.at_v) + ")");

    const FreqFilter filter = build_compensation_filter(coeffs, size, size);
    auto [kernel, imag_residue] = filter_spatial_kernel(filter);

    write_pfm(output, fft_shift(kernel));
    Plane response(size, size);
    for (size_t i = 0; i < response.size(); ++i) response[i] = filter.response[i];
    write_pfm(with_stem_suffix(output, "_freq"), fft_shift(response));

    std::cout << "kernel '" << preset_name << "' (" << channel_group << ") at " << size << "x"
              << size << "\n  DC gain:            " << filter.dc_gain()
              << "\n  min |denominator|:  " << rep.min_abs_denominator << " at frequency ("
              << rep.at_u << ", " << rep.at_v << ")"
              << "\n  imaginary residue:  " << imag_residue << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"visual induction compensation for screens of different size"};
    app.require_subcommand(1);

    CommonArgs common;
    app.add_option("--config", common.config_path,
                   "TOML config file (default: $VICOMP_CONFIG, then builtins)");

    // compensate
    auto* comp = app.add_subcommand("compensate", "pre-process an image for a destination screen");
    std::string in_path, out_path, src_screen = "cinema", dst_screen = "mobile",
                preset = "paper-natural-peak", format;
    comp->add_option("--in,-i", in_path, "input image (PNG or PFM)")->required();
    comp->add_option("--out,-o", out_path, "output image path")->required();
    comp->add_option("--src-screen", src_screen, "source viewing condition");
    comp->add_option("--dst-screen", dst_screen, "destination viewing condition");
    comp->add_option("--preset", preset, "compensation preset name");
    comp->add_option("--format", format, "output format: png8, png16 or pfm (default: match input)");

    // stimulus
    auto* stim = app.add_subcommand("stimulus", "generate synthetic induction patterns");
    std::string stim_kind, spec_file, stim_screen = "cinema", stim_out;
    bool table1 = false;
    stim->add_option("kind", stim_kind, "bars or rings")->required();
    stim->add_option("--spec", spec_file, "pattern spec file ([bar_pattern]/[ring_pattern])");
    stim->add_option("--screen", stim_screen, "screen the pattern is sized for");
    stim->add_option("--out", stim_out, "output image path")->required();
    stim->add_flag("--table1-grid", table1, "emit the full 5x3 achromatic factor grid");

    // fit
    auto* fitc = app.add_subcommand("fit", "optimize parameters against observer data");
    std::string fit_objective, data_path, out_config;
    unsigned seed = 0;
    bool folds = false;
    fitc->add_option("objective", fit_objective, "achromatic, chromatic or lhei")->required();
    fitc->add_option("--data", data_path, "observer data CSV")->required();
    fitc->add_option("--out-config", out_config, "write fitted preset to this TOML file");
    fitc->add_option("--seed", seed, "seed for any randomized restart (search is deterministic)");
    fitc->add_flag("--folds", folds, "chromatic: run the 4-fold leave-one-set-out protocol");

    // inspect-kernel
    auto* insp = app.add_subcommand("inspect-kernel", "export a compensation kernel as float maps");
    std::string insp_preset = "paper-achromatic", insp_out, channel_group = "achromatic";
    int insp_size = 800;
    insp->add_option("--preset", insp_preset, "preset name");
    insp->add_option("--size", insp_size, "grid size in pixels");
    insp->add_option("--out", insp_out, "output PFM path (frequency response goes to *_freq.pfm)")
        ->required();
    insp->add_option("--channel", channel_group, "achromatic or chromatic");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    try {
        if (comp->parsed())
            return cmd_compensate(common, in_path, out_path, src_screen, dst_screen, preset, format);
        if (stim->parsed())
            return cmd_stimulus(common, stim_kind, spec_file, stim_screen, stim_out, table1);
        if (fitc->parsed())
            return cmd_fit(common, fit_objective, data_path, out_config, seed, folds);
        if (insp->parsed())
            return cmd_inspect_kernel(common, insp_preset, insp_size, insp_out, channel_group);
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const StabilityError& e) {
        std::cerr << "stability error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitProcessing;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitProcessing;
    }
    return 0;
}
