#pragma once

#include <cstdio>
#include <map>
#include <memory>
#include <mutex>

#include "vicomp/colorimetry.hpp"
#include "vicomp/kernels.hpp"
#include "vicomp/retina.hpp"

namespace vicomp {

// Everything the screen-to-screen compensation needs: the two Naka-Rushton
// exponents and one rational-filter coefficient set per channel group.
struct CompensationParams {
    double n_a = 0.75;
    double n_b = 0.75;
    RationalFilterCoeffs achromatic = RationalFilterCoeffs::identity();
    RationalFilterCoeffs chromatic = RationalFilterCoeffs::identity();
    bool apply_achromatic_kernel = true;
    bool replace_lstar = false;

    void validate() const {
        if (n_a <= 0 || n_b <= 0)
            throw ParamError("CompensationParams: exponents must be > 0");
    }

    void validate_at(int width, int height) const {
        validate();
        const double anchor = std::min(width, height);
        const auto a = validate_stability(achromatic, 2 * width, 2 * height, anchor);
        if (!a.pass)
            throw StabilityError("CompensationParams: achromatic coefficients unstable at " +
                                 std::to_string(width) + "x" + std::to_string(height));
        const auto c = validate_stability(chromatic, 2 * width, 2 * height, anchor);
        if (!c.pass)
            throw StabilityError("CompensationParams: chromatic coefficients unstable at " +
                                 std::to_string(width) + "x" + std::to_string(height));
    }

    // No-op compensation: unit filters, matched exponents.
    static CompensationParams identity() { return CompensationParams{}; }

    // Cinema-to-mobile fit from the achromatic bar experiment. The filter
    // applies to the Y channel only; no luminance replacement afterwards.
    static CompensationParams paper_achromatic(GaussianNorm norm = GaussianNorm::UnitArea) {
        CompensationParams p;
        p.n_a = 0.7861;
        p.n_b = 0.7063;
        p.achromatic = RationalFilterCoeffs{
            3.94, 2.54, 2.46, 2.72,
            GaussianMix{{{-1.14, 156}, {1.86, 29}, {0.13, 3}, {-1.76, 40}}, 800, norm}};
        p.apply_achromatic_kernel = true;
        p.replace_lstar = false;
        return p;
    }

    // Cinema-to-mobile fit from the chromatic ring experiment (trained on
    // sets 1-3, tested on set 4). The filter applies to op1/op2 only and the
    // result keeps the input's L* plane.
    static CompensationParams paper_chromatic_set4(GaussianNorm norm = GaussianNorm::UnitArea) {
        CompensationParams p;
        p.n_a = 0.5187;
        p.n_b = 0.4439;
        p.chromatic = RationalFilterCoeffs{
            2.81, 1.30, 2.27, 1.60,
            GaussianMix{{{-1.53, 103}, {-0.67, 43}, {0.67, 4}, {0.34, 26}}, 800, norm}};
        p.apply_achromatic_kernel = false;
        p.replace_lstar = true;
        return p;
    }

    // Natural-image processing: achromatic kernel on Y, chromatic kernel on
    // op1/op2, with the chromatic fit's exponents and L* kept from the input.
    static CompensationParams paper_natural(GaussianNorm norm = GaussianNorm::UnitArea) {
        CompensationParams p = paper_chromatic_set4(norm);
        p.achromatic = paper_achromatic(norm).achromatic;
        p.apply_achromatic_kernel = true;
        return p;
    }
};

// Clips a plane into [0, 1-epsilon] and reports the fraction of pixels that
// moved. The upper bound stays strictly below 1 because the inverse
// Naka-Rushton response has domain [0,1).
inline std::pair<Plane, double> clip_unit(const Plane& plane, double epsilon = 1e-6) {
    if (!(epsilon > 0 && epsilon <= 0.01))
        throw ParamError("clip_unit: epsilon must be in (0, 0.01]");
    Plane out = plane;
    const double hi = 1.0 - epsilon;
    size_t clipped = 0;
    for (double& v : out) {
        if (v < 0) {
            v = 0;
            ++clipped;
        } else if (v > hi) {
            v = hi;
            ++clipped;
        }
    }
    return {std::move(out), static_cast<double>(clipped) / static_cast<double>(out.size())};
}

// Forward invertible model: Naka-Rushton response followed by the linear
// filter. The semi-saturation is estimated from the plane itself.
inline Plane model_forward(const Plane& plane, double n, const FreqFilter& filter,
                           double* i_s_out = nullptr) {
    const double i_s = semi_saturation(plane); // rejects degenerate all-zero planes
    if (i_s_out) *i_s_out = i_s;
    return convolve_freq(nr_forward(plane, {n, i_s, 1.0}), filter);
}

// Inverse model: deconvolve, clip into the response domain, invert the
// Naka-Rushton stage with the semi-saturation of the original stimulus.
inline Plane model_inverse(const Plane& plane, double n, const FreqFilter& inverse_filter,
                           double i_s, double* clipped_fraction = nullptr) {
    if (i_s <= 0) throw ParamError("model_inverse: i_s must be > 0");
    auto [clipped, fraction] = clip_unit(convolve_freq(plane, inverse_filter));
    if (clipped_fraction) *clipped_fraction = fraction;
    return nr_inverse(clipped, {n, i_s, 1.0});
}

namespace detail {

// Compensation filters are cached by coefficients and grid geometry; sizes
// recur constantly during fitting.
inline std::shared_ptr<const FreqFilter> cached_compensation_filter(
    const RationalFilterCoeffs& coeffs, int width, int height, double anchor) {
    static std::map<std::string, std::shared_ptr<const FreqFilter>> cache;
    static std::mutex mutex;

    char key[512];
    int off = std::snprintf(key, sizeof key, "%a|%a|%a|%a|%a|%d|%d|%a|%d", coeffs.c1, coeffs.c2,
                            coeffs.d1, coeffs.d2, coeffs.mix.reference_resolution, width, height,
                            anchor, static_cast<int>(coeffs.mix.normalization));
    for (const auto& t : coeffs.mix.terms)
        off += std::snprintf(key + off, sizeof key - off, "|%a:%a", t.weight, t.sigma);

    {
        std::lock_guard<std::mutex> lock(mutex);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    auto filter = std::make_shared<const FreqFilter>(
        build_compensation_filter(coeffs, width, height, anchor));
    std::lock_guard<std::mutex> lock(mutex);
    return cache.emplace(key, std::move(filter)).first->second;
}

} // namespace detail

struct CompensationDiagnostics {
    double clipped_fraction = 0;  // response-domain clip before the inverse nonlinearity
    long lms_negative_clamped = 0; // cone values clamped to 0 before the nonlinearity
    long gamut_clamped = 0;        // linear RGB values clipped into [0,1] before encode
    long lab_xyz_clamped = 0;      // negative XYZ clamped during CIELAB conversions
};

namespace detail {

struct CompensationCore {
    TriImage xyz_original;  // after decode + primary transform
    TriImage lms_corrected; // after the inverse nonlinearity (CAT02 LMS)
    std::array<double, 3> i_s{};
};

// Steps shared by image compensation and the CIELAB objective path:
// decode, cone transform, forward nonlinearity, opponent split, per-group
// filtering, opponent merge, clip, inverse nonlinearity.
inline CompensationCore compensate_core(const TriImage& image, const ScreenSpec& src,
                                        const CompensationParams& params,
                                        CompensationDiagnostics& diag) {
    image.require_encoding(ColorEncoding::DisplayRGB, "compensate");
    params.validate();

    const int w = image.width();
    const int h = image.height();
    const double anchor = std::min(w, h);

    CompensationCore core;
    TriImage linear = eotf(image, src, EotfDirection::Decode);
    core.xyz_original = primary_transform(linear, src, PrimaryDirection::RgbToXyz);
    TriImage lms = cat02_transform(core.xyz_original, Cat02Direction::XyzToLms);

    // Display-gamut input keeps CAT02 cones nonnegative up to rounding; clamp
    // whatever is left so the power law stays defined.
    for (int ch = 0; ch < 3; ++ch)
        for (double& v : lms.channel(ch))
            if (v < 0) {
                v = 0;
                ++diag.lms_negative_clamped;
            }

    for (int ch = 0; ch < 3; ++ch) {
        core.i_s[ch] = semi_saturation(lms.channel(ch));
        lms.channel(ch) = nr_forward(lms.channel(ch), {params.n_a, core.i_s[ch], 1.0});
    }

    TriImage opp = opponent_transform(lms, OpponentDirection::LmsToOpp);

    if (params.apply_achromatic_kernel) {
        auto fy = cached_compensation_filter(params.achromatic, 2 * w, 2 * h, anchor);
        opp.channel(0) = convolve_freq(opp.channel(0), *fy);
    }
    auto fc = cached_compensation_filter(params.chromatic, 2 * w, 2 * h, anchor);
    opp.channel(1) = convolve_freq(opp.channel(1), *fc);
    opp.channel(2) = convolve_freq(opp.channel(2), *fc);

    TriImage back = opponent_transform(opp, OpponentDirection::OppToLms);

    double total_fraction = 0;
    for (int ch = 0; ch < 3; ++ch) {
        auto [clipped, fraction] = clip_unit(back.channel(ch));
        back.channel(ch) = std::move(clipped);
        total_fraction += fraction / 3.0;
        back.channel(ch) = nr_inverse(back.channel(ch), {params.n_b, core.i_s[ch], 1.0});
    }
    diag.clipped_fraction = total_fraction;

    core.lms_corrected = std::move(back);
    return core;
}

} // namespace detail

// Full screen-to-screen compensation: the image is pre-processed so that,
// displayed on dst, its induction effects match those of the original on
// src. Output is display-referred RGB in the dst encoding.
inline TriImage compensate(const TriImage& image, const ScreenSpec& src, const ScreenSpec& dst,
                           const CompensationParams& params,
                           CompensationDiagnostics* diagnostics = nullptr) {
    CompensationDiagnostics diag;
    detail::CompensationCore core = detail::compensate_core(image, src, params, diag);

    TriImage xyz = cat02_transform(core.lms_corrected, Cat02Direction::LmsToXyz);

    if (params.replace_lstar) {
        const Vec3 white = xy_to_xyz(dst.white);
        long c1 = 0, c2 = 0;
        TriImage lab = xyz_to_lab(xyz, white, &c1);
        const TriImage lab_orig = xyz_to_lab(core.xyz_original, white, &c2);
        diag.lab_xyz_clamped = c1 + c2;
        lab.channel(0) = lab_orig.channel(0);
        xyz = lab_to_xyz(lab, white);
    }

    TriImage rgb = primary_transform(xyz, dst, PrimaryDirection::XyzToRgb);

    // Out-of-gamut corrections are clipped to the destination gamut.
    for (int ch = 0; ch < 3; ++ch)
        for (double& v : rgb.channel(ch)) {
            if (v < 0) {
                v = 0;
                ++diag.gamut_clamped;
            } else if (v > 1) {
                v = 1;
                ++diag.gamut_clamped;
            }
        }

    TriImage out = eotf(rgb, dst, EotfDirection::Encode);
    for (int ch = 0; ch < 3; ++ch)
        for (double& v : out.channel(ch)) {
            if (v < 0 || v > 1) {
                v = std::clamp(v, 0.0, 1.0);
                ++diag.gamut_clamped;
            }
        }

    if (diagnostics) *diagnostics = diag;
    return out;
}

// Objective-path variant: stops after the cone-to-XYZ transform and converts
// straight to CIELAB against the monitor white (D65 at 100 cd/m2 -> Y = 1).
inline TriImage compensate_to_lab(const TriImage& image, const ScreenSpec& src,
                                  const ScreenSpec& dst, const CompensationParams& params,
                                  CompensationDiagnostics* diagnostics = nullptr) {
    CompensationDiagnostics diag;
    detail::CompensationCore core = detail::compensate_core(image, src, params, diag);

    const TriImage xyz = cat02_transform(core.lms_corrected, Cat02Direction::LmsToXyz);
    const Vec3 white = xy_to_xyz(dst.white);
    long c1 = 0, c2 = 0;
    TriImage lab = xyz_to_lab(xyz, white, &c1);
    if (params.replace_lstar) {
        const TriImage lab_orig = xyz_to_lab(core.xyz_original, white, &c2);
        lab.channel(0) = lab_orig.channel(0);
    }
    diag.lab_xyz_clamped = c1 + c2;
    if (diagnostics) *diagnostics = diag;
    return lab;
}

} // namespace vicomp
