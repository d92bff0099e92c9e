#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "vicomp/compensation.hpp"
#include "vicomp/lhei.hpp"
#include "vicomp/stimuli.hpp"

namespace vicomp {

// ---------------------------------------------------------------------------
// Minimal TOML-style document: [section.path] headers, key = value lines,
// values being numbers, booleans, quoted strings, or single-line arrays of
// numbers/strings. That covers the whole configuration surface; no nested
// inline tables, no multi-line values.

struct TomlValue {
    std::variant<double, bool, std::string, std::vector<double>, std::vector<std::string>> v;

    double number(const std::string& where) const {
        if (auto* d = std::get_if<double>(&v)) return *d;
        throw ConfigError(where + ": expected a number");
    }
    bool boolean(const std::string& where) const {
        if (auto* b = std::get_if<bool>(&v)) return *b;
        throw ConfigError(where + ": expected true/false");
    }
    const std::string& string(const std::string& where) const {
        if (auto* s = std::get_if<std::string>(&v)) return *s;
        throw ConfigError(where + ": expected a string");
    }
    const std::vector<double>& numbers(const std::string& where) const {
        if (auto* a = std::get_if<std::vector<double>>(&v)) return *a;
        throw ConfigError(where + ": expected a number array");
    }
};

struct TomlSection {
    std::map<std::string, TomlValue> values;

    bool has(const std::string& key) const { return values.count(key) != 0; }
    const TomlValue& get(const std::string& key, const std::string& where) const {
        auto it = values.find(key);
        if (it == values.end()) throw ConfigError(where + ": missing key '" + key + "'");
        return it->second;
    }
    double number_or(const std::string& key, double fallback) const {
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second.number(key);
    }
    bool boolean_or(const std::string& key, bool fallback) const {
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second.boolean(key);
    }
    std::string string_or(const std::string& key, const std::string& fallback) const {
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second.string(key);
    }
};

struct TomlDoc {
    std::map<std::string, TomlSection> sections; // "" holds root-level keys

    bool has(const std::string& name) const { return sections.count(name) != 0; }

    // sections whose name starts with prefix + '.', mapped to the remainder
    std::vector<std::pair<std::string, const TomlSection*>> children(
        const std::string& prefix) const {
        std::vector<std::pair<std::string, const TomlSection*>> out;
        const std::string p = prefix + ".";
        for (const auto& [name, sec] : sections)
            if (name.rfind(p, 0) == 0) out.emplace_back(name.substr(p.size()), &sec);
        return out;
    }
};

namespace detail {

inline std::string toml_trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

inline TomlValue parse_toml_value(const std::string& raw, int line_no) {
    const std::string s = toml_trim(raw);
    auto fail = [&](const std::string& what) {
        throw ConfigError("config line " + std::to_string(line_no) + ": " + what);
    };
    if (s.empty()) fail("empty value");
    if (s == "true") return TomlValue{true};
    if (s == "false") return TomlValue{false};
    if (s.front() == '"') {
        if (s.size() < 2 || s.back() != '"') fail("unterminated string");
        return TomlValue{s.substr(1, s.size() - 2)};
    }
    if (s.front() == '[') {
        if (s.back() != ']') fail("unterminated array");
        std::vector<double> nums;
        std::vector<std::string> strs;
        bool is_string = false;
        std::string body = s.substr(1, s.size() - 2);
        std::istringstream is(body);
        std::string item;
        while (std::getline(is, item, ',')) {
            item = toml_trim(item);
            if (item.empty()) continue;
            if (item.front() == '"') {
                if (item.back() != '"') fail("bad string array element");
                strs.push_back(item.substr(1, item.size() - 2));
                is_string = true;
            } else {
                try {
                    size_t used = 0;
                    nums.push_back(std::stod(item, &used));
                    if (used != item.size()) fail("bad number '" + item + "'");
                } catch (const std::exception&) {
                    fail("bad number '" + item + "'");
                }
            }
        }
        if (is_string) return TomlValue{strs};
        return TomlValue{nums};
    }
    try {
        size_t used = 0;
        const double d = std::stod(s, &used);
        if (used != s.size()) fail("bad value '" + s + "'");
        return TomlValue{d};
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        fail("bad value '" + s + "'");
    }
    return {};
}

} // namespace detail

inline TomlDoc parse_toml(std::istream& is) {
    TomlDoc doc;
    std::string current;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        line = detail::toml_trim(detail::strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": unterminated section header");
            current = detail::toml_trim(line.substr(1, line.size() - 2));
            if (current.empty())
                throw ConfigError("config line " + std::to_string(line_no) + ": empty section name");
            doc.sections[current]; // create
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::toml_trim(line.substr(0, eq));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        doc.sections[current].values[key] = detail::parse_toml_value(line.substr(eq + 1), line_no);
    }
    return doc;
}

inline TomlDoc parse_toml_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file " + path);
    return parse_toml(is);
}

inline void write_toml_value(std::ostream& os, const TomlValue& v) {
    if (auto* d = std::get_if<double>(&v.v)) {
        std::ostringstream tmp;
        tmp.precision(17);
        tmp << *d;
        os << tmp.str();
    } else if (auto* b = std::get_if<bool>(&v.v)) {
        os << (*b ? "true" : "false");
    } else if (auto* s = std::get_if<std::string>(&v.v)) {
        os << '"' << *s << '"';
    } else if (auto* a = std::get_if<std::vector<double>>(&v.v)) {
        os << '[';
        for (size_t i = 0; i < a->size(); ++i) {
            std::ostringstream tmp;
            tmp.precision(17);
            tmp << (*a)[i];
            os << (i ? ", " : "") << tmp.str();
        }
        os << ']';
    } else if (auto* sa = std::get_if<std::vector<std::string>>(&v.v)) {
        os << '[';
        for (size_t i = 0; i < sa->size(); ++i) os << (i ? ", " : "") << '"' << (*sa)[i] << '"';
        os << ']';
    }
}

inline void write_toml(std::ostream& os, const TomlDoc& doc) {
    auto dump_section = [&](const TomlSection& sec) {
        for (const auto& [key, value] : sec.values) {
            os << key << " = ";
            write_toml_value(os, value);
            os << "\n";
        }
    };
    if (auto it = doc.sections.find(""); it != doc.sections.end()) dump_section(it->second);
    for (const auto& [name, sec] : doc.sections) {
        if (name.empty()) continue;
        os << "\n[" << name << "]\n";
        dump_section(sec);
    }
}

// ---------------------------------------------------------------------------
// Typed configuration: named screens, named compensation presets, evolution
// parameters, stimulus specs, chromatic color sets.

struct Config {
    std::map<std::string, ScreenSpec> screens;
    std::map<std::string, CompensationParams> presets;
    LheiParams lhei;
    BarPatternSpec bar_pattern;
    RingPatternSpec ring_pattern;
    std::map<int, RingPatternSpec> ring_sets;
    std::string input_path;
    std::string output_path;
    int working_size = 800;

    static Config defaults() {
        Config c;
        c.screens["cinema"] = ScreenSpec::cinema();
        c.screens["mobile"] = ScreenSpec::mobile();
        c.presets["identity"] = CompensationParams::identity();
        c.presets["paper-achromatic"] = CompensationParams::paper_achromatic();
        c.presets["paper-chromatic-set4"] = CompensationParams::paper_chromatic_set4();
        c.presets["paper-natural"] = CompensationParams::paper_natural();
        c.presets["paper-achromatic-peak"] =
            CompensationParams::paper_achromatic(GaussianNorm::UnitPeak);
        c.presets["paper-chromatic-set4-peak"] =
            CompensationParams::paper_chromatic_set4(GaussianNorm::UnitPeak);
        c.presets["paper-natural-peak"] = CompensationParams::paper_natural(GaussianNorm::UnitPeak);
        return c;
    }

    const ScreenSpec& screen(const std::string& name) const {
        auto it = screens.find(name);
        if (it == screens.end()) throw ConfigError("unknown screen '" + name + "'");
        return it->second;
    }
    const CompensationParams& preset(const std::string& name) const {
        auto it = presets.find(name);
        if (it == presets.end()) throw ConfigError("unknown preset '" + name + "'");
        return it->second;
    }

    // Every preset must build cleanly at the declared working size.
    void validate_stability_at_working_size() const {
        for (const auto& [name, p] : presets) {
            try {
                p.validate_at(working_size, working_size);
            } catch (const Error& e) {
                throw StabilityError("preset '" + name + "': " + e.what());
            }
        }
    }
};

namespace detail {

inline Chromaticity read_xy(const TomlSection& sec, const std::string& key,
                            const Chromaticity& fallback, const std::string& where) {
    if (!sec.has(key)) return fallback;
    const auto& a = sec.get(key, where).numbers(where + "." + key);
    if (a.size() != 2) throw ConfigError(where + "." + key + ": expected [x, y]");
    return {a[0], a[1]};
}

inline ScreenSpec read_screen(const TomlSection& sec, const std::string& where) {
    ScreenSpec s;
    s.red = read_xy(sec, "red", s.red, where);
    s.green = read_xy(sec, "green", s.green, where);
    s.blue = read_xy(sec, "blue", s.blue, where);
    s.white = read_xy(sec, "white", s.white, where);
    s.gamma = sec.number_or("gamma", s.gamma);
    s.vertical_viewing_angle_deg =
        sec.number_or("vertical_viewing_angle_deg", s.vertical_viewing_angle_deg);
    s.scale_factor = sec.number_or("scale_factor", s.scale_factor);
    s.reference_resolution = sec.number_or("reference_resolution", s.reference_resolution);
    s.validate();
    return s;
}

inline GaussianMix read_mix(const TomlSection& sec, const std::string& where,
                            const GaussianMix& fallback) {
    GaussianMix mix = fallback;
    if (sec.has("kf_weights") || sec.has("kf_sigmas_px")) {
        const auto& w = sec.get("kf_weights", where).numbers(where + ".kf_weights");
        const auto& s = sec.get("kf_sigmas_px", where).numbers(where + ".kf_sigmas_px");
        if (w.size() != s.size() || w.empty())
            throw ConfigError(where + ": kf_weights and kf_sigmas_px must match and be nonempty");
        mix.terms.clear();
        for (size_t i = 0; i < w.size(); ++i) mix.terms.push_back({w[i], s[i]});
    }
    mix.reference_resolution = sec.number_or("reference_resolution", mix.reference_resolution);
    const std::string norm = sec.string_or("gaussian_norm", "");
    if (norm == "area")
        mix.normalization = GaussianNorm::UnitArea;
    else if (norm == "peak")
        mix.normalization = GaussianNorm::UnitPeak;
    else if (!norm.empty())
        throw ConfigError(where + ".gaussian_norm: expected \"area\" or \"peak\"");
    mix.validate();
    return mix;
}

inline RationalFilterCoeffs read_coeffs(const TomlSection& sec, const std::string& where,
                                        const RationalFilterCoeffs& fallback) {
    RationalFilterCoeffs c = fallback;
    c.c1 = sec.number_or("c1", c.c1);
    c.c2 = sec.number_or("c2", c.c2);
    c.d1 = sec.number_or("d1", c.d1);
    c.d2 = sec.number_or("d2", c.d2);
    c.mix = read_mix(sec, where, c.mix);
    return c;
}

inline Lab read_lab(const TomlSection& sec, const std::string& key, const Lab& fallback,
                    const std::string& where) {
    if (!sec.has(key)) return fallback;
    const auto& a = sec.get(key, where).numbers(where + "." + key);
    if (a.size() != 3) throw ConfigError(where + "." + key + ": expected [L, a, b]");
    return {a[0], a[1], a[2]};
}

inline RingPatternSpec read_ring_spec(const TomlSection& sec, const std::string& where,
                                      RingPatternSpec spec) {
    spec.pattern_diameter_deg = sec.number_or("pattern_diameter_deg", spec.pattern_diameter_deg);
    spec.center_diameter_deg = sec.number_or("center_diameter_deg", spec.center_diameter_deg);
    spec.n_inducing_rings =
        static_cast<int>(sec.number_or("n_inducing_rings", spec.n_inducing_rings));
    spec.pattern_size = static_cast<int>(sec.number_or("pattern_size", spec.pattern_size));
    spec.pixels_per_degree = sec.number_or("pixels_per_degree", spec.pixels_per_degree);
    spec.test_color = read_lab(sec, "test_color", spec.test_color, where);
    spec.background = read_lab(sec, "background", spec.background, where);
    spec.inducer_colors[0] = read_lab(sec, "first_inducer", spec.inducer_colors[0], where);
    spec.inducer_colors[1] = read_lab(sec, "second_inducer", spec.inducer_colors[1], where);
    return spec;
}

inline GaussianMix read_named_mix(const TomlSection& sec, const std::string& prefix,
                                  GaussianMix fallback, const std::string& where) {
    if (sec.has(prefix + "_weights") || sec.has(prefix + "_sigmas_px")) {
        const auto& w = sec.get(prefix + "_weights", where).numbers(where);
        const auto& s = sec.get(prefix + "_sigmas_px", where).numbers(where);
        if (w.size() != s.size() || w.empty())
            throw ConfigError(where + ": " + prefix + " weight/sigma arrays must match");
        fallback.terms.clear();
        for (size_t i = 0; i < w.size(); ++i) fallback.terms.push_back({w[i], s[i]});
    }
    fallback.reference_resolution =
        sec.number_or(prefix + "_reference_resolution", fallback.reference_resolution);
    return fallback;
}

} // namespace detail

inline Config load_config(const TomlDoc& doc) {
    Config c = Config::defaults();

    if (auto it = doc.sections.find(""); it != doc.sections.end())
        c.working_size = static_cast<int>(it->second.number_or("working_size", c.working_size));

    for (const auto& [name, sec] : doc.children("screens"))
        c.screens[name] = detail::read_screen(*sec, "screens." + name);

    // preset sections come in up to three parts: the flat preset table and
    // optional .achromatic / .chromatic coefficient tables
    for (const auto& [name, sec] : doc.children("presets")) {
        if (name.find('.') != std::string::npos) continue; // coefficient subtable
        CompensationParams p =
            c.presets.count(name) ? c.presets[name] : CompensationParams::identity();
        const std::string where = "presets." + name;
        p.n_a = sec->number_or("n_a", p.n_a);
        p.n_b = sec->number_or("n_b", p.n_b);
        p.apply_achromatic_kernel =
            sec->boolean_or("apply_achromatic_kernel", p.apply_achromatic_kernel);
        p.replace_lstar = sec->boolean_or("replace_lstar", p.replace_lstar);
        if (auto a = doc.sections.find("presets." + name + ".achromatic"); a != doc.sections.end())
            p.achromatic = detail::read_coeffs(a->second, where + ".achromatic", p.achromatic);
        if (auto ch = doc.sections.find("presets." + name + ".chromatic"); ch != doc.sections.end())
            p.chromatic = detail::read_coeffs(ch->second, where + ".chromatic", p.chromatic);
        p.validate();
        c.presets[name] = p;
    }

    if (auto it = doc.sections.find("lhei"); it != doc.sections.end()) {
        const TomlSection& sec = it->second;
        c.lhei.alpha = sec.number_or("alpha", c.lhei.alpha);
        c.lhei.beta = sec.number_or("beta", c.lhei.beta);
        c.lhei.gamma = sec.number_or("gamma", c.lhei.gamma);
        c.lhei.dt = sec.number_or("dt", c.lhei.dt);
        c.lhei.tol = sec.number_or("tol", c.lhei.tol);
        c.lhei.max_iters = static_cast<int>(sec.number_or("max_iters", c.lhei.max_iters));
        c.lhei.contrast_levels =
            static_cast<int>(sec.number_or("contrast_levels", c.lhei.contrast_levels));
        c.lhei.sigmoid.gain_pos = sec.number_or("sigmoid_gain_pos", c.lhei.sigmoid.gain_pos);
        c.lhei.sigmoid.gain_neg = sec.number_or("sigmoid_gain_neg", c.lhei.sigmoid.gain_neg);
        c.lhei.sigmoid.slope = sec.number_or("sigmoid_slope", c.lhei.sigmoid.slope);
        c.lhei.local_mean_kernel =
            detail::read_named_mix(sec, "km", c.lhei.local_mean_kernel, "lhei");
        c.lhei.contrast_kernel = detail::read_named_mix(sec, "kc", c.lhei.contrast_kernel, "lhei");
        c.lhei.validate();
    }

    if (auto it = doc.sections.find("bar_pattern"); it != doc.sections.end()) {
        const TomlSection& sec = it->second;
        BarPatternSpec& b = c.bar_pattern;
        b.inducing_bar_width_deg = sec.number_or("inducing_bar_width_deg", b.inducing_bar_width_deg);
        b.comparison_bar_width_deg =
            sec.number_or("comparison_bar_width_deg", b.comparison_bar_width_deg);
        b.gray_luminance = sec.number_or("gray_luminance_cdm2", b.gray_luminance);
        b.white_luminance = sec.number_or("white_luminance_cdm2", b.white_luminance);
        b.black_luminance = sec.number_or("black_luminance_cdm2", b.black_luminance);
        b.background_luminance = sec.number_or("background_luminance_cdm2", b.background_luminance);
        b.pattern_size = static_cast<int>(sec.number_or("pattern_size", b.pattern_size));
        b.pixels_per_degree = sec.number_or("pixels_per_degree", b.pixels_per_degree);
        b.validate();
    }

    if (auto it = doc.sections.find("ring_pattern"); it != doc.sections.end())
        c.ring_pattern = detail::read_ring_spec(it->second, "ring_pattern", c.ring_pattern);

    for (const auto& [name, sec] : doc.children("ring_sets")) {
        int idx = 0;
        try {
            idx = std::stoi(name);
        } catch (const std::exception&) {
            throw ConfigError("ring_sets." + name + ": set name must be an integer");
        }
        c.ring_sets[idx] = detail::read_ring_spec(*sec, "ring_sets." + name, c.ring_pattern);
    }

    if (auto it = doc.sections.find("paths"); it != doc.sections.end()) {
        c.input_path = it->second.string_or("input", "");
        c.output_path = it->second.string_or("output", "");
    }

    c.validate_stability_at_working_size();
    return c;
}

inline Config load_config_file(const std::string& path) { return load_config(parse_toml_file(path)); }

// Configuration resolution used by the CLI: an explicit path wins, otherwise
// the VICOMP_CONFIG environment variable, otherwise builtin defaults.
inline Config resolve_config(const std::string& explicit_path) {
    if (!explicit_path.empty()) return load_config_file(explicit_path);
    if (const char* env = std::getenv("VICOMP_CONFIG"); env && *env)
        return load_config_file(env);
    return Config::defaults();
}

// Serializes a preset in the same schema load_config reads.
inline void write_preset_toml(std::ostream& os, const std::string& name,
                              const CompensationParams& p) {
    TomlDoc doc;
    TomlSection& root = doc.sections["presets." + name];
    root.values["n_a"] = TomlValue{p.n_a};
    root.values["n_b"] = TomlValue{p.n_b};
    root.values["apply_achromatic_kernel"] = TomlValue{p.apply_achromatic_kernel};
    root.values["replace_lstar"] = TomlValue{p.replace_lstar};
    auto dump_coeffs = [&](const std::string& sub, const RationalFilterCoeffs& cf) {
        TomlSection& sec = doc.sections["presets." + name + "." + sub];
        sec.values["c1"] = TomlValue{cf.c1};
        sec.values["c2"] = TomlValue{cf.c2};
        sec.values["d1"] = TomlValue{cf.d1};
        sec.values["d2"] = TomlValue{cf.d2};
        std::vector<double> w, s;
        for (const auto& t : cf.mix.terms) {
            w.push_back(t.weight);
            s.push_back(t.sigma);
        }
        sec.values["kf_weights"] = TomlValue{w};
        sec.values["kf_sigmas_px"] = TomlValue{s};
        sec.values["reference_resolution"] = TomlValue{cf.mix.reference_resolution};
        sec.values["gaussian_norm"] = TomlValue{
            std::string(cf.mix.normalization == GaussianNorm::UnitArea ? "area" : "peak")};
    };
    dump_coeffs("achromatic", p.achromatic);
    dump_coeffs("chromatic", p.chromatic);
    write_toml(os, doc);
}

} // namespace vicomp
