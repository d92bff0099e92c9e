#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <string>

#include "vicomp/image.hpp"

namespace vicomp {

using Vec3 = std::array<double, 3>;

struct Mat3 {
    // row-major
    std::array<double, 9> m{};

    double& operator()(int r, int c) { return m[r * 3 + c]; }
    double operator()(int r, int c) const { return m[r * 3 + c]; }

    Vec3 apply(const Vec3& v) const {
        return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
                m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
                m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
    }

    double determinant() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    Mat3 inverse() const {
        const double det = determinant();
        if (std::abs(det) < 1e-15)
            throw ConfigError("Mat3::inverse: singular matrix");
        const double inv = 1.0 / det;
        Mat3 r;
        r.m = {(m[4] * m[8] - m[5] * m[7]) * inv, (m[2] * m[7] - m[1] * m[8]) * inv,
               (m[1] * m[5] - m[2] * m[4]) * inv, (m[5] * m[6] - m[3] * m[8]) * inv,
               (m[0] * m[8] - m[2] * m[6]) * inv, (m[2] * m[3] - m[0] * m[5]) * inv,
               (m[3] * m[7] - m[4] * m[6]) * inv, (m[1] * m[6] - m[0] * m[7]) * inv,
               (m[0] * m[4] - m[1] * m[3]) * inv};
        return r;
    }
};

struct Chromaticity {
    double x = 0;
    double y = 0;
};

// Display description: primaries, decode gamma, and the viewing geometry the
// fitted kernels refer to. scale_factor expresses the size of this viewing
// condition relative to the reference (cinema) condition.
struct ScreenSpec {
    Chromaticity red{0.64, 0.33};
    Chromaticity green{0.30, 0.60};
    Chromaticity blue{0.15, 0.06};
    Chromaticity white{0.3127, 0.3290}; // D65
    double gamma = 2.4;
    double vertical_viewing_angle_deg = 18.92;
    double scale_factor = 1.0;
    double reference_resolution = 800;

    // Three picture heights viewing distance, Rec. 709 / D65 reference monitor.
    static ScreenSpec cinema() { return ScreenSpec{}; }

    // Same monitor watched at the handheld viewing geometry: the same content
    // subtends 0.39x the visual angle of the cinema condition.
    static ScreenSpec mobile() {
        ScreenSpec s;
        s.scale_factor = 0.39;
        return s;
    }

    void validate() const {
        if (gamma <= 0) throw ConfigError("ScreenSpec: gamma must be > 0");
        if (vertical_viewing_angle_deg <= 0)
            throw ConfigError("ScreenSpec: vertical viewing angle must be > 0");
        if (scale_factor <= 0) throw ConfigError("ScreenSpec: scale factor must be > 0");
        if (reference_resolution <= 0)
            throw ConfigError("ScreenSpec: reference resolution must be > 0");
    }
};

inline Vec3 xy_to_xyz(const Chromaticity& c, double luminance = 1.0) {
    if (c.y <= 0) throw ConfigError("chromaticity with y <= 0");
    return {c.x / c.y * luminance, luminance, (1.0 - c.x - c.y) / c.y * luminance};
}

// Standard primaries-to-XYZ construction: solve the channel scales so that
// RGB = (1,1,1) lands exactly on the white point at Y = 1.
inline Mat3 rgb_to_xyz_matrix(const ScreenSpec& spec) {
    spec.validate();
    const Vec3 r = xy_to_xyz(spec.red);
    const Vec3 g = xy_to_xyz(spec.green);
    const Vec3 b = xy_to_xyz(spec.blue);
    Mat3 p;
    p.m = {r[0], g[0], b[0], r[1], g[1], b[1], r[2], g[2], b[2]};
    if (std::abs(p.determinant()) < 1e-12)
        throw ConfigError("degenerate primary chromaticities (singular primary matrix)");
    const Vec3 w = xy_to_xyz(spec.white);
    const Vec3 s = p.inverse().apply(w);
    Mat3 out;
    out.m = {r[0] * s[0], g[0] * s[1], b[0] * s[2], r[1] * s[0], g[1] * s[1],
             b[1] * s[2], r[2] * s[0], g[2] * s[1], b[2] * s[2]};
    return out;
}

inline Mat3 xyz_to_rgb_matrix(const ScreenSpec& spec) { return rgb_to_xyz_matrix(spec).inverse(); }

// CAT02 matrix from the CIECAM02 specification.
inline const Mat3& cat02_matrix() {
    static const Mat3 m{{0.7328, 0.4296, -0.1624, -0.7036, 1.6975, 0.0061, 0.0030, 0.0136, 0.9834}};
    return m;
}

inline const Mat3& cat02_matrix_inverse() {
    static const Mat3 inv = cat02_matrix().inverse();
    return inv;
}

// Y = L+M+S, op1 = L-M, op2 = 2S-(L+M)
inline const Mat3& opponent_matrix() {
    static const Mat3 m{{1, 1, 1, 1, -1, 0, -1, -1, 2}};
    return m;
}

inline const Mat3& opponent_matrix_inverse() {
    static const Mat3 inv = opponent_matrix().inverse();
    return inv;
}

namespace detail {

inline void apply_matrix_inplace(TriImage& img, const Mat3& m) {
    Plane& a = img.channel(0);
    Plane& b = img.channel(1);
    Plane& c = img.channel(2);
    for (size_t i = 0; i < a.size(); ++i) {
        const Vec3 v = m.apply({a[i], b[i], c[i]});
        a[i] = v[0];
        b[i] = v[1];
        c[i] = v[2];
    }
}

inline void check_unit_range(const TriImage& img, const char* op) {
    static const char* names[3] = {"R", "G", "B"};
    for (int ch = 0; ch < 3; ++ch) {
        const Plane& p = img.channel(ch);
        const double lo = plane_min(p);
        const double hi = plane_max(p);
        if (lo < 0.0 || hi > 1.0) {
            std::ostringstream os;
            os << op << ": channel " << names[ch] << " out of [0,1] (";
            if (lo < 0.0) os << "min " << lo;
            if (lo < 0.0 && hi > 1.0) os << ", ";
            if (hi > 1.0) os << "max " << hi;
            os << ")";
            throw RangeError(os.str());
        }
    }
}

} // namespace detail

enum class EotfDirection { Decode, Encode };

// Display transfer function, pure power law. Decode maps display values to
// linear light (v^gamma), encode is the inverse.
inline TriImage eotf(const TriImage& image, const ScreenSpec& spec, EotfDirection dir) {
    spec.validate();
    TriImage out = image;
    if (dir == EotfDirection::Decode) {
        out.require_encoding(ColorEncoding::DisplayRGB, "eotf decode");
        detail::check_unit_range(out, "eotf decode");
        for (int ch = 0; ch < 3; ++ch)
            for (double& v : out.channel(ch)) v = std::pow(v, spec.gamma);
        out.set_encoding(ColorEncoding::LinearRGB);
    } else {
        out.require_encoding(ColorEncoding::LinearRGB, "eotf encode");
        detail::check_unit_range(out, "eotf encode");
        const double inv_gamma = 1.0 / spec.gamma;
        for (int ch = 0; ch < 3; ++ch)
            for (double& v : out.channel(ch)) v = std::pow(v, inv_gamma);
        out.set_encoding(ColorEncoding::DisplayRGB);
    }
    return out;
}

enum class PrimaryDirection { RgbToXyz, XyzToRgb };

inline TriImage primary_transform(const TriImage& image, const ScreenSpec& spec, PrimaryDirection dir) {
    TriImage out = image;
    if (dir == PrimaryDirection::RgbToXyz) {
        out.require_encoding(ColorEncoding::LinearRGB, "primary_transform rgb_to_xyz");
        detail::apply_matrix_inplace(out, rgb_to_xyz_matrix(spec));
        out.set_encoding(ColorEncoding::XYZ);
    } else {
        out.require_encoding(ColorEncoding::XYZ, "primary_transform xyz_to_rgb");
        detail::apply_matrix_inplace(out, xyz_to_rgb_matrix(spec));
        out.set_encoding(ColorEncoding::LinearRGB);
    }
    return out;
}

enum class Cat02Direction { XyzToLms, LmsToXyz };

inline TriImage cat02_transform(const TriImage& image, Cat02Direction dir) {
    TriImage out = image;
    if (dir == Cat02Direction::XyzToLms) {
        out.require_encoding(ColorEncoding::XYZ, "cat02_transform xyz_to_lms");
        detail::apply_matrix_inplace(out, cat02_matrix());
        out.set_encoding(ColorEncoding::CAT02LMS);
    } else {
        out.require_encoding(ColorEncoding::CAT02LMS, "cat02_transform lms_to_xyz");
        detail::apply_matrix_inplace(out, cat02_matrix_inverse());
        out.set_encoding(ColorEncoding::XYZ);
    }
    return out;
}

enum class OpponentDirection { LmsToOpp, OppToLms };

inline TriImage opponent_transform(const TriImage& image, OpponentDirection dir) {
    TriImage out = image;
    if (dir == OpponentDirection::LmsToOpp) {
        out.require_encoding(ColorEncoding::CAT02LMS, "opponent_transform lms_to_opp");
        detail::apply_matrix_inplace(out, opponent_matrix());
        out.set_encoding(ColorEncoding::Opponent);
    } else {
        out.require_encoding(ColorEncoding::Opponent, "opponent_transform opp_to_lms");
        detail::apply_matrix_inplace(out, opponent_matrix_inverse());
        out.set_encoding(ColorEncoding::CAT02LMS);
    }
    return out;
}

// D65 at Y = 1 (the monitor white; 100 cd/m2 in absolute terms).
inline Vec3 d65_white_xyz() { return xy_to_xyz(Chromaticity{0.3127, 0.3290}); }

namespace detail {

inline double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    constexpr double delta3 = delta * delta * delta;
    if (t > delta3) return std::cbrt(t);
    return t / (3.0 * delta * delta) + 4.0 / 29.0;
}

inline double lab_f_inv(double u) {
    constexpr double delta = 6.0 / 29.0;
    if (u > delta) return u * u * u;
    return 3.0 * delta * delta * (u - 4.0 / 29.0);
}

} // namespace detail

// Standard CIELAB forward transform against the supplied reference white.
// Negative tristimulus values (possible after gamut clipping upstream) are
// clamped to zero; the clamp count is reported through the optional pointer.
inline TriImage xyz_to_lab(const TriImage& image, const Vec3& white, long* clamp_count = nullptr) {
    image.require_encoding(ColorEncoding::XYZ, "xyz_to_lab");
    if (white[0] <= 0 || white[1] <= 0 || white[2] <= 0)
        throw ParamError("xyz_to_lab: reference white components must be > 0");
    TriImage out = image;
    long clamped = 0;
    Plane& X = out.channel(0);
    Plane& Y = out.channel(1);
    Plane& Z = out.channel(2);
    for (size_t i = 0; i < X.size(); ++i) {
        double x = X[i], y = Y[i], z = Z[i];
        if (x < 0) { x = 0; ++clamped; }
        if (y < 0) { y = 0; ++clamped; }
        if (z < 0) { z = 0; ++clamped; }
        const double fx = detail::lab_f(x / white[0]);
        const double fy = detail::lab_f(y / white[1]);
        const double fz = detail::lab_f(z / white[2]);
        X[i] = 116.0 * fy - 16.0;
        Y[i] = 500.0 * (fx - fy);
        Z[i] = 200.0 * (fy - fz);
    }
    if (clamp_count) *clamp_count = clamped;
    out.set_encoding(ColorEncoding::CIELAB);
    return out;
}

inline TriImage lab_to_xyz(const TriImage& image, const Vec3& white) {
    image.require_encoding(ColorEncoding::CIELAB, "lab_to_xyz");
    TriImage out = image;
    Plane& L = out.channel(0);
    Plane& A = out.channel(1);
    Plane& B = out.channel(2);
    for (size_t i = 0; i < L.size(); ++i) {
        const double fy = (L[i] + 16.0) / 116.0;
        const double fx = fy + A[i] / 500.0;
        const double fz = fy - B[i] / 200.0;
        L[i] = white[0] * detail::lab_f_inv(fx);
        A[i] = white[1] * detail::lab_f_inv(fy);
        B[i] = white[2] * detail::lab_f_inv(fz);
    }
    out.set_encoding(ColorEncoding::XYZ);
    return out;
}

struct Lab {
    double l = 0;
    double a = 0;
    double b = 0;
};

inline Vec3 lab_to_xyz(const Lab& lab, const Vec3& white) {
    const double fy = (lab.l + 16.0) / 116.0;
    const double fx = fy + lab.a / 500.0;
    const double fz = fy - lab.b / 200.0;
    return {white[0] * detail::lab_f_inv(fx), white[1] * detail::lab_f_inv(fy),
            white[2] * detail::lab_f_inv(fz)};
}

inline Lab xyz_to_lab(const Vec3& xyz, const Vec3& white) {
    const double fx = detail::lab_f(std::max(0.0, xyz[0]) / white[0]);
    const double fy = detail::lab_f(std::max(0.0, xyz[1]) / white[1]);
    const double fz = detail::lab_f(std::max(0.0, xyz[2]) / white[2]);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

// Euclidean CIELAB difference (dE*ab).
inline double delta_e(const Lab& a, const Lab& b) {
    const double dl = a.l - b.l;
    const double da = a.a - b.a;
    const double db = a.b - b.b;
    return std::sqrt(dl * dl + da * da + db * db);
}

} // namespace vicomp
