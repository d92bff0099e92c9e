#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "vicomp/colorimetry.hpp"
#include "vicomp/image.hpp"

namespace vicomp {

// Visual angle to pixel extent, small-angle linear mapping. The screen's
// scale factor shrinks the rendition (the same physical pattern occupies
// scale_factor times the pixels of the reference condition).
inline double degrees_to_pixels(double angle_deg, const ScreenSpec& screen, int image_height) {
    screen.validate();
    if (angle_deg < 0) throw ParamError("degrees_to_pixels: negative angle");
    if (angle_deg > screen.vertical_viewing_angle_deg)
        throw ParamError("degrees_to_pixels: angle exceeds the vertical viewing angle");
    return angle_deg / screen.vertical_viewing_angle_deg * image_height * screen.scale_factor;
}

inline double pixels_per_degree(const ScreenSpec& screen, int image_height) {
    screen.validate();
    return image_height * screen.scale_factor / screen.vertical_viewing_angle_deg;
}

// ---------------------------------------------------------------------------
// Achromatic bar patterns

struct BarPatternSpec {
    double inducing_bar_width_deg = 0.19;
    double comparison_bar_width_deg = 0.19;
    double gray_luminance = 8.1;  // cd/m2; the paper's middle initial value
    double white_luminance = 90.0;
    double black_luminance = 0.6;
    double background_luminance = 0.6;
    int pattern_size = 800;
    double pixels_per_degree = 0; // 0: derive from the screen

    void validate() const {
        if (inducing_bar_width_deg <= 0 || comparison_bar_width_deg <= 0)
            throw ParamError("BarPatternSpec: bar widths must be > 0");
        if (gray_luminance < 0 || white_luminance < 0 || black_luminance < 0 ||
            background_luminance < 0)
            throw ParamError("BarPatternSpec: luminances must be nonnegative");
        if (!(white_luminance > gray_luminance && gray_luminance > black_luminance))
            throw ParamError("BarPatternSpec: requires white > gray > black");
        if (pattern_size < 16) throw ParamError("BarPatternSpec: pattern size too small");
    }
};

struct BarStimulus {
    TriImage image; // DisplayRGB
    RegionMask white_side_mask; // center comparison bar, white-inducer panel
    RegionMask black_side_mask; // center comparison bar, black-inducer panel
    double ppd = 0;
    double comparison_width_px = 0;
    double inducing_width_px = 0;
};

namespace detail {

inline double encode_luminance(double cdm2, double peak_cdm2, double gamma) {
    if (cdm2 < 0 || cdm2 > peak_cdm2)
        throw ParamError("luminance outside the display range");
    return std::pow(cdm2 / peak_cdm2, 1.0 / gamma);
}

// Coverage of the pixel column [x, x+1) by the union of gray bars centered
// at cx + k*pitch with width w, restricted to [left, right).
inline double bar_coverage(double x, double cx, double pitch, double w, double left,
                           double right) {
    double cov = 0;
    const int kmin = static_cast<int>(std::floor((left - cx) / pitch)) - 1;
    const int kmax = static_cast<int>(std::ceil((right - cx) / pitch)) + 1;
    for (int k = kmin; k <= kmax; ++k) {
        double a = cx + k * pitch - w / 2;
        double b = a + w;
        if (a < left || b > right) continue; // only bars fully inside the panel
        cov += std::max(0.0, std::min(b, x + 1.0) - std::max(a, x));
    }
    return cov;
}

} // namespace detail

// Two-panel Helson-style pattern: gray comparison bars over a white inducer
// field (left) and over a black inducer field (right), everything over the
// background. Bar edges are rendered with exact area coverage so the pattern
// is resolution covariant.
inline BarStimulus generate_bars(const BarPatternSpec& spec, const ScreenSpec& screen) {
    spec.validate();
    const int S = spec.pattern_size;
    const double ppd =
        spec.pixels_per_degree > 0 ? spec.pixels_per_degree : pixels_per_degree(screen, S);

    const double w_cmp = spec.comparison_bar_width_deg * ppd;
    const double w_ind = spec.inducing_bar_width_deg * ppd;
    if (std::lround(w_cmp) < 1 || std::lround(w_ind) < 1)
        throw ParamError("generate_bars: bar width rounds below one pixel");
    const double pitch = w_cmp + w_ind;

    const double v_gray = detail::encode_luminance(spec.gray_luminance, spec.white_luminance,
                                                   screen.gamma);
    const double v_white = 1.0;
    const double v_black = detail::encode_luminance(spec.black_luminance, spec.white_luminance,
                                                    screen.gamma);
    const double v_bg = detail::encode_luminance(spec.background_luminance, spec.white_luminance,
                                                 screen.gamma);

    const int panel_h = (S * 3) / 5;
    const int y0 = (S - panel_h) / 2;
    const int panel_w = (S * 2) / 5;
    const int left_x0 = S / 20;
    const int right_x0 = S - S / 20 - panel_w;
    const double left_cx = left_x0 + panel_w / 2.0;
    const double right_cx = right_x0 + panel_w / 2.0;

    BarStimulus out;
    out.image = TriImage(S, S, ColorEncoding::DisplayRGB);
    out.white_side_mask = RegionMask(S, S);
    out.black_side_mask = RegionMask(S, S);
    out.ppd = ppd;
    out.comparison_width_px = w_cmp;
    out.inducing_width_px = w_ind;

    std::vector<double> column(S, v_bg);
    std::vector<int> mask_flag(S, 0); // 1 white-side center bar, 2 black-side

    auto fill_panel = [&](int x0, double cx, double v_inducer, int flag) {
        const double left = x0;
        const double right = x0 + panel_w;
        for (int x = x0; x < x0 + panel_w; ++x) {
            const double cov = detail::bar_coverage(x, cx, pitch, w_cmp, left, right);
            column[x] = v_inducer + cov * (v_gray - v_inducer);
        }
        // center comparison bar, full-coverage pixels only
        const double a = cx - w_cmp / 2;
        const double b = cx + w_cmp / 2;
        for (int x = x0; x < x0 + panel_w; ++x)
            if (x >= a && x + 1 <= b) mask_flag[x] = flag;
    };
    fill_panel(left_x0, left_cx, v_white, 1);
    fill_panel(right_x0, right_cx, v_black, 2);

    for (int y = 0; y < S; ++y) {
        const bool in_panel_rows = y >= y0 && y < y0 + panel_h;
        for (int x = 0; x < S; ++x) {
            const double v = in_panel_rows ? column[x] : v_bg;
            out.image.channel(0).at(x, y) = v;
            out.image.channel(1).at(x, y) = v;
            out.image.channel(2).at(x, y) = v;
            if (in_panel_rows && mask_flag[x] == 1) out.white_side_mask.set(x, y);
            if (in_panel_rows && mask_flag[x] == 2) out.black_side_mask.set(x, y);
        }
    }
    if (out.white_side_mask.count() == 0 || out.black_side_mask.count() == 0)
        throw ParamError("generate_bars: comparison-bar masks came out empty");
    return out;
}

// Table 1 factor grid of the achromatic experiment.
inline const std::array<double, 5>& table1_comparison_widths_deg() {
    static const std::array<double, 5> w{0.19, 0.38, 0.54, 0.76, 0.96};
    return w;
}
inline const std::array<double, 3>& table1_initial_luminances_cdm2() {
    static const std::array<double, 3> l{4.0, 8.1, 22.0};
    return l;
}

// Luminance readback for a display-referred image shown at peak_cdm2.
inline Plane luminance_cdm2(const TriImage& display_rgb, const ScreenSpec& screen,
                            double peak_cdm2) {
    const TriImage xyz = primary_transform(eotf(display_rgb, screen, EotfDirection::Decode),
                                           screen, PrimaryDirection::RgbToXyz);
    Plane lum = xyz.channel(1);
    for (double& v : lum) v *= peak_cdm2;
    return lum;
}

// ---------------------------------------------------------------------------
// Chromatic ring patterns

struct RingPatternSpec {
    double pattern_diameter_deg = 11.0;
    double center_diameter_deg = 4.39;
    std::array<Lab, 2> inducer_colors{Lab{55, 40, -60}, Lab{55, -40, 60}};
    Lab test_color{55, 0, 0};
    Lab background{55, 0, 0};
    int n_inducing_rings = 16;
    int pattern_size = 800;
    double pixels_per_degree = 0;

    void validate() const {
        if (pattern_diameter_deg <= 0 || center_diameter_deg <= 0)
            throw ParamError("RingPatternSpec: diameters must be > 0");
        if (center_diameter_deg >= pattern_diameter_deg)
            throw ParamError("RingPatternSpec: center diameter must be below pattern diameter");
        if (n_inducing_rings < 2 || n_inducing_rings % 2 != 0)
            throw ParamError("RingPatternSpec: inducing ring count must be even and >= 2");
        if (pattern_size < 16) throw ParamError("RingPatternSpec: pattern size too small");
    }
};

struct RingStimulus {
    TriImage test_image;       // inducers + test ring
    TriImage comparison_image; // the same test ring over the plain background
    RegionMask test_mask;
    double ppd = 0;
    double ring_width_px = 0;
    double test_inner_radius_px = 0;
    double test_outer_radius_px = 0;
};

// CIELAB color to a display-RGB triple on the given screen; out-of-gamut
// components are clipped.
inline std::array<double, 3> lab_to_display(const Lab& lab, const ScreenSpec& screen,
                                            long* gamut_clamped = nullptr) {
    const Vec3 xyz = lab_to_xyz(lab, xy_to_xyz(screen.white));
    Vec3 rgb = xyz_to_rgb_matrix(screen).apply(xyz);
    long clamped = 0;
    for (double& v : rgb) {
        if (v < 0 || v > 1) {
            v = std::clamp(v, 0.0, 1.0);
            ++clamped;
        }
    }
    if (gamut_clamped) *gamut_clamped += clamped;
    const double ig = 1.0 / screen.gamma;
    return {std::pow(rgb[0], ig), std::pow(rgb[1], ig), std::pow(rgb[2], ig)};
}

// Concentric ring pattern: a central background disk, half the inducing
// rings, the test ring, the other half, all rings sharing one radial width.
// The ring adjacent to the test (on both sides) is inducer_colors[0] — the
// first inducer; colors alternate outward from it. 4x4 supersampled edges;
// the mask keeps full-coverage test-ring pixels only.
inline RingStimulus generate_rings(const RingPatternSpec& spec, const ScreenSpec& screen) {
    spec.validate();
    const int S = spec.pattern_size;
    const double ppd =
        spec.pixels_per_degree > 0 ? spec.pixels_per_degree : pixels_per_degree(screen, S);

    const double R = 0.5 * spec.pattern_diameter_deg * ppd;
    const double r_in = 0.5 * spec.center_diameter_deg * ppd;
    const int rings = spec.n_inducing_rings + 1;
    const double t = (R - r_in) / rings;
    const int test_idx = spec.n_inducing_rings / 2;

    if (2.0 * R > S) throw ParamError("generate_rings: pattern exceeds the image");
    if (t < 1.0) throw ParamError("generate_rings: ring width falls below one pixel");

    const auto bg = lab_to_display(spec.background, screen);
    const auto test = lab_to_display(spec.test_color, screen);
    const std::array<std::array<double, 3>, 2> inducers{
        lab_to_display(spec.inducer_colors[0], screen),
        lab_to_display(spec.inducer_colors[1], screen)};

    const double cx = S / 2.0;
    const double cy = S / 2.0;

    auto ring_index = [&](double r) -> int {
        if (r < r_in || r >= R) return -1;
        const int k = static_cast<int>((r - r_in) / t);
        return std::min(k, rings - 1);
    };
    auto color_of = [&](int k, bool with_inducers) -> const std::array<double, 3>& {
        if (k < 0) return bg;
        if (k == test_idx) return test;
        if (!with_inducers) return bg;
        const int away = k < test_idx ? test_idx - 1 - k : k - test_idx - 1;
        return inducers[away % 2];
    };

    RingStimulus out;
    out.test_image = TriImage(S, S, ColorEncoding::DisplayRGB);
    out.comparison_image = TriImage(S, S, ColorEncoding::DisplayRGB);
    out.test_mask = RegionMask(S, S);
    out.ppd = ppd;
    out.ring_width_px = t;
    out.test_inner_radius_px = r_in + test_idx * t;
    out.test_outer_radius_px = r_in + (test_idx + 1) * t;

    constexpr int ss = 4;
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            std::array<double, 3> acc_test{0, 0, 0};
            std::array<double, 3> acc_comp{0, 0, 0};
            int in_test_ring = 0;
            for (int sy = 0; sy < ss; ++sy)
                for (int sx = 0; sx < ss; ++sx) {
                    const double px = x + (sx + 0.5) / ss - cx;
                    const double py = y + (sy + 0.5) / ss - cy;
                    const int k = ring_index(std::sqrt(px * px + py * py));
                    const auto& ct = color_of(k, true);
                    const auto& cc = color_of(k, false);
                    for (int ch = 0; ch < 3; ++ch) {
                        acc_test[ch] += ct[ch];
                        acc_comp[ch] += cc[ch];
                    }
                    in_test_ring += (k == test_idx);
                }
            for (int ch = 0; ch < 3; ++ch) {
                out.test_image.channel(ch).at(x, y) = acc_test[ch] / (ss * ss);
                out.comparison_image.channel(ch).at(x, y) = acc_comp[ch] / (ss * ss);
            }
            if (in_test_ring == ss * ss) out.test_mask.set(x, y);
        }
    }
    if (out.test_mask.count() == 0)
        throw ParamError("generate_rings: test-ring mask came out empty");
    return out;
}

} // namespace vicomp
