#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <tuple>
#include <vector>

#include <fftw3.h>

#include "vicomp/plane.hpp"

namespace vicomp {

// Amplitude convention for the Gaussian terms of a mix.
//   UnitArea: each term integrates to 1, so its frequency response is
//             exp(-2*pi^2*sigma'^2*(u^2+v^2)) and the DC gain equals the
//             term weight.
//   UnitPeak: each term has spatial peak amplitude 1; the frequency response
//             gains a 2*pi*sigma'^2 factor.
enum class GaussianNorm { UnitArea, UnitPeak };

struct GaussianTerm {
    double weight = 1.0;
    double sigma = 1.0; // pixels at the reference resolution
};

// Weighted sum of isotropic Gaussians. Sigma values are expressed in pixels
// of a reference_resolution-sized image and scale linearly when the mix is
// evaluated for another image size.
struct GaussianMix {
    std::vector<GaussianTerm> terms;
    double reference_resolution = 800;
    GaussianNorm normalization = GaussianNorm::UnitArea;

    void validate() const {
        if (terms.empty()) throw ParamError("GaussianMix: at least one term required");
        for (const auto& t : terms)
            if (t.sigma <= 0) throw ParamError("GaussianMix: nonpositive sigma");
        if (reference_resolution <= 0)
            throw ParamError("GaussianMix: reference resolution must be > 0");
    }

    static GaussianMix two_term(double w1, double s1, double w2, double s2, double ref = 800) {
        return GaussianMix{{{w1, s1}, {w2, s2}}, ref, GaussianNorm::UnitArea};
    }
};

// Real-valued transfer function sampled on the discrete frequency grid of a
// given image size. Response is stored for the full grid, row-major in
// (ky, kx) with standard DFT frequency ordering.
struct FreqFilter {
    int width = 0;
    int height = 0;
    std::vector<double> response;

    FreqFilter() = default;
    FreqFilter(int w, int h, double fill = 0.0)
        : width(w), height(h), response(static_cast<size_t>(w) * h, fill) {}

    double& at(int kx, int ky) { return response[static_cast<size_t>(ky) * width + kx]; }
    double at(int kx, int ky) const { return response[static_cast<size_t>(ky) * width + kx]; }

    double dc_gain() const { return response.empty() ? 0.0 : response[0]; }

    static FreqFilter identity(int w, int h) { return FreqFilter(w, h, 1.0); }
};

// Rational frequency-domain filter (D2 + D1*F)/(C2 + C1*F) built from one
// Gaussian mix F: the parametrization of the screen-to-screen compensation
// kernel.
struct RationalFilterCoeffs {
    double c1 = 0;
    double c2 = 1;
    double d1 = 0;
    double d2 = 1;
    GaussianMix mix{{{1.0, 1.0}}, 800, GaussianNorm::UnitArea};

    static RationalFilterCoeffs identity() { return RationalFilterCoeffs{}; }

    bool operator==(const RationalFilterCoeffs& o) const {
        if (c1 != o.c1 || c2 != o.c2 || d1 != o.d1 || d2 != o.d2) return false;
        if (mix.reference_resolution != o.mix.reference_resolution) return false;
        if (mix.normalization != o.mix.normalization) return false;
        if (mix.terms.size() != o.mix.terms.size()) return false;
        for (size_t i = 0; i < mix.terms.size(); ++i)
            if (mix.terms[i].weight != o.mix.terms[i].weight ||
                mix.terms[i].sigma != o.mix.terms[i].sigma)
                return false;
        return true;
    }
};

inline constexpr double kStabilityEpsilon = 1e-6;

namespace detail {

inline double dft_frequency(int k, int n) {
    // cycles per pixel in [-1/2, 1/2)
    return (k <= n / 2 ? k : k - n) / static_cast<double>(n);
}

} // namespace detail

namespace detail {

// Core response evaluation without the public grid-size floor; lhei needs
// filters on tiny (even 2-pixel) grids for its scalar-arithmetic oracles.
inline FreqFilter mix_response_any(const GaussianMix& mix, int width, int height,
                                   double sigma_anchor) {
    mix.validate();
    if (width < 1 || height < 1)
        throw ParamError("gaussian mix response: grid dimensions must be positive");
    const double anchor =
        sigma_anchor > 0 ? sigma_anchor : static_cast<double>(std::min(width, height));
    const double scale = anchor / mix.reference_resolution;

    FreqFilter f(width, height);
    const double two_pi_sq = 2.0 * std::numbers::pi * std::numbers::pi;
    for (int ky = 0; ky < height; ++ky) {
        const double v = detail::dft_frequency(ky, height);
        for (int kx = 0; kx < width; ++kx) {
            const double u = detail::dft_frequency(kx, width);
            const double r2 = u * u + v * v;
            double acc = 0;
            for (const auto& t : mix.terms) {
                const double sp = t.sigma * scale;
                const double g = std::exp(-two_pi_sq * sp * sp * r2);
                if (mix.normalization == GaussianNorm::UnitArea)
                    acc += t.weight * g;
                else
                    acc += t.weight * 2.0 * std::numbers::pi * sp * sp * g;
            }
            f.at(kx, ky) = acc;
        }
    }
    return f;
}

} // namespace detail

// Frequency response of a Gaussian mix on a width x height grid. Sigmas are
// rescaled by sigma_anchor / reference_resolution; sigma_anchor defaults to
// min(width, height). Pass the original image's min dimension when building
// at a padded size so the kernel extent stays a fixed fraction of the
// picture, not of the padded grid.
inline FreqFilter gaussian_mix_response(const GaussianMix& mix, int width, int height,
                                        double sigma_anchor = 0) {
    if (width < 8 || height < 8)
        throw ParamError("gaussian_mix_response: grid must be at least 8x8");
    return detail::mix_response_any(mix, width, height, sigma_anchor);
}

namespace detail {

struct DenominatorScan {
    double min_abs = std::numeric_limits<double>::infinity();
    int at_kx = 0;
    int at_ky = 0;
    std::vector<std::pair<int, int>> offending; // |den| < kStabilityEpsilon
};

inline void scan_denominator(double den, int kx, int ky, DenominatorScan& scan) {
    const double a = std::abs(den);
    if (a < scan.min_abs) {
        scan.min_abs = a;
        scan.at_kx = kx;
        scan.at_ky = ky;
    }
    if (a < kStabilityEpsilon && scan.offending.size() < 8)
        scan.offending.emplace_back(kx, ky);
}

[[noreturn]] inline void throw_stability(const char* what, const DenominatorScan& scan, int w, int h) {
    std::ostringstream os;
    os << what << ": filter denominator below " << kStabilityEpsilon << " on the " << w << "x" << h
       << " grid (min |den| = " << scan.min_abs << "); offending frequency bins:";
    for (auto [kx, ky] : scan.offending)
        os << " (" << dft_frequency(kx, w) << "," << dft_frequency(ky, h) << ")";
    throw StabilityError(os.str());
}

} // namespace detail

// Linear-stage filter of the invertible model: the closed-form minimizer of
// the regularized energy. Response per bin is
//   beta / (alpha + beta - gamma - alpha*Fm + gamma*Fc).
inline FreqFilter build_model_filter(double alpha, double beta, double gamma,
                                     const GaussianMix& local_mean, const GaussianMix& contrast,
                                     int width, int height, double sigma_anchor = 0) {
    if (beta <= 0) throw ParamError("build_model_filter: beta must be > 0");
    const FreqFilter fm = gaussian_mix_response(local_mean, width, height, sigma_anchor);
    const FreqFilter fc = gaussian_mix_response(contrast, width, height, sigma_anchor);
    FreqFilter out(width, height);
    detail::DenominatorScan scan;
    for (int ky = 0; ky < height; ++ky)
        for (int kx = 0; kx < width; ++kx) {
            const double den =
                alpha + beta - gamma - alpha * fm.at(kx, ky) + gamma * fc.at(kx, ky);
            detail::scan_denominator(den, kx, ky, scan);
            out.at(kx, ky) = beta / den;
        }
    if (!scan.offending.empty())
        detail::throw_stability("build_model_filter", scan, width, height);
    return out;
}

// Reciprocal of build_model_filter per bin; the two compose to the identity.
inline FreqFilter build_model_filter_inverse(double alpha, double beta, double gamma,
                                             const GaussianMix& local_mean,
                                             const GaussianMix& contrast, int width, int height,
                                             double sigma_anchor = 0) {
    if (beta <= 0) throw ParamError("build_model_filter_inverse: beta must be > 0");
    const FreqFilter fm = gaussian_mix_response(local_mean, width, height, sigma_anchor);
    const FreqFilter fc = gaussian_mix_response(contrast, width, height, sigma_anchor);
    FreqFilter out(width, height);
    for (int ky = 0; ky < height; ++ky)
        for (int kx = 0; kx < width; ++kx) {
            const double den =
                alpha + beta - gamma - alpha * fm.at(kx, ky) + gamma * fc.at(kx, ky);
            out.at(kx, ky) = den / beta;
        }
    return out;
}

struct StabilityReport {
    double min_abs_denominator = 0;
    double at_u = 0; // cycles/pixel of the minimizing bin
    double at_v = 0;
    bool pass = false;
};

inline StabilityReport validate_stability(const RationalFilterCoeffs& coeffs, int width, int height,
                                          double sigma_anchor = 0) {
    const FreqFilter f = gaussian_mix_response(coeffs.mix, width, height, sigma_anchor);
    detail::DenominatorScan scan;
    for (int ky = 0; ky < height; ++ky)
        for (int kx = 0; kx < width; ++kx)
            detail::scan_denominator(coeffs.c2 + coeffs.c1 * f.at(kx, ky), kx, ky, scan);
    StabilityReport rep;
    rep.min_abs_denominator = scan.min_abs;
    rep.at_u = detail::dft_frequency(scan.at_kx, width);
    rep.at_v = detail::dft_frequency(scan.at_ky, height);
    rep.pass = scan.min_abs >= kStabilityEpsilon;
    return rep;
}

// Compensation filter (D2 + D1*F)/(C2 + C1*F) with F the mix response.
inline FreqFilter build_compensation_filter(const RationalFilterCoeffs& coeffs, int width,
                                            int height, double sigma_anchor = 0) {
    const FreqFilter f = gaussian_mix_response(coeffs.mix, width, height, sigma_anchor);
    FreqFilter out(width, height);
    detail::DenominatorScan scan;
    for (int ky = 0; ky < height; ++ky)
        for (int kx = 0; kx < width; ++kx) {
            const double den = coeffs.c2 + coeffs.c1 * f.at(kx, ky);
            detail::scan_denominator(den, kx, ky, scan);
            out.at(kx, ky) = (coeffs.d2 + coeffs.d1 * f.at(kx, ky)) / den;
        }
    if (!scan.offending.empty())
        detail::throw_stability("build_compensation_filter", scan, width, height);
    return out;
}

// ---------------------------------------------------------------------------
// FFT engine (FFTW-backed)

namespace detail {

struct FftwDeleter {
    void operator()(void* p) const { fftw_free(p); }
};
template <typename T>
using fftw_buffer = std::unique_ptr<T[], FftwDeleter>;

template <typename T>
fftw_buffer<T> fftw_alloc(size_t n) {
    return fftw_buffer<T>(static_cast<T*>(fftw_malloc(sizeof(T) * n)));
}

inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

enum class PlanKind { R2C, C2R, C2C_BWD };

// Plans are cached per grid size and executed through the new-array API, so
// concurrent convolutions share plans safely (the planner itself is the only
// serialized part).
inline fftw_plan get_plan(PlanKind kind, int w, int h) {
    static std::map<std::tuple<int, int, int>, fftw_plan> cache;
    std::lock_guard<std::mutex> lock(planner_mutex());
    const auto key = std::make_tuple(static_cast<int>(kind), w, h);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    fftw_plan plan = nullptr;
    if (kind == PlanKind::R2C) {
        auto in = fftw_alloc<double>(static_cast<size_t>(w) * h);
        auto out = fftw_alloc<fftw_complex>(static_cast<size_t>(h) * (w / 2 + 1));
        plan = fftw_plan_dft_r2c_2d(h, w, in.get(), out.get(), FFTW_ESTIMATE);
    } else if (kind == PlanKind::C2R) {
        auto in = fftw_alloc<fftw_complex>(static_cast<size_t>(h) * (w / 2 + 1));
        auto out = fftw_alloc<double>(static_cast<size_t>(w) * h);
        plan = fftw_plan_dft_c2r_2d(h, w, in.get(), out.get(), FFTW_ESTIMATE);
    } else {
        auto in = fftw_alloc<fftw_complex>(static_cast<size_t>(w) * h);
        auto out = fftw_alloc<fftw_complex>(static_cast<size_t>(w) * h);
        plan = fftw_plan_dft_2d(h, w, in.get(), out.get(), FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    if (!plan) throw Error("FFTW plan creation failed");
    cache[key] = plan;
    return plan;
}

} // namespace detail

// Frequency-domain convolution: mirror-pad the plane to twice each dimension,
// transform, multiply by the filter response (which must be built at the
// padded size), transform back and crop. Mirror padding plus the even
// symmetry of every filter built here makes forward/inverse filter pairs
// compose to the identity exactly (up to FFT rounding).
inline Plane convolve_freq(const Plane& plane, const FreqFilter& filter) {
    const int w = plane.width();
    const int h = plane.height();
    const int pw = 2 * w;
    const int ph = 2 * h;
    if (filter.width != pw || filter.height != ph) {
        std::ostringstream os;
        os << "convolve_freq: filter is " << filter.width << "x" << filter.height
           << " but plane pads to " << pw << "x" << ph;
        throw SizeError(os.str());
    }

    auto real = detail::fftw_alloc<double>(static_cast<size_t>(pw) * ph);
    auto spec = detail::fftw_alloc<fftw_complex>(static_cast<size_t>(ph) * (pw / 2 + 1));

    for (int y = 0; y < ph; ++y) {
        const int sy = y < h ? y : ph - 1 - y;
        double* row = real.get() + static_cast<size_t>(y) * pw;
        const double* src = plane.data() + static_cast<size_t>(sy) * w;
        for (int x = 0; x < w; ++x) row[x] = src[x];
        for (int x = w; x < pw; ++x) row[x] = src[pw - 1 - x];
    }

    fftw_execute_dft_r2c(detail::get_plan(detail::PlanKind::R2C, pw, ph), real.get(), spec.get());

    const int half = pw / 2 + 1;
    for (int ky = 0; ky < ph; ++ky) {
        fftw_complex* row = spec.get() + static_cast<size_t>(ky) * half;
        for (int kx = 0; kx < half; ++kx) {
            const double g = filter.at(kx, ky);
            row[kx][0] *= g;
            row[kx][1] *= g;
        }
    }

    fftw_execute_dft_c2r(detail::get_plan(detail::PlanKind::C2R, pw, ph), spec.get(), real.get());

    Plane out(w, h);
    const double norm = 1.0 / (static_cast<double>(pw) * ph);
    for (int y = 0; y < h; ++y) {
        const double* row = real.get() + static_cast<size_t>(y) * pw;
        for (int x = 0; x < w; ++x) out.at(x, y) = row[x] * norm;
    }
    return out;
}

// Spatial kernel of a filter: inverse transform of its (real) response.
// Returns the kernel with the origin at (0,0) (wrap-around layout) plus the
// largest imaginary residue, which should vanish for symmetric responses.
inline std::pair<Plane, double> filter_spatial_kernel(const FreqFilter& filter) {
    const int w = filter.width;
    const int h = filter.height;
    const size_t n = static_cast<size_t>(w) * h;
    auto in = detail::fftw_alloc<fftw_complex>(n);
    auto out = detail::fftw_alloc<fftw_complex>(n);
    for (size_t i = 0; i < n; ++i) {
        in[i][0] = filter.response[i];
        in[i][1] = 0.0;
    }
    fftw_execute_dft(detail::get_plan(detail::PlanKind::C2C_BWD, w, h), in.get(), out.get());
    Plane kernel(w, h);
    double max_imag = 0;
    const double norm = 1.0 / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) {
        kernel[i] = out[i][0] * norm;
        max_imag = std::max(max_imag, std::abs(out[i][1]) * norm);
    }
    return {std::move(kernel), max_imag};
}

// Rotates a wrap-around kernel so the origin sits at the grid center.
inline Plane fft_shift(const Plane& p) {
    Plane out(p.width(), p.height());
    const int hx = p.width() / 2;
    const int hy = p.height() / 2;
    for (int y = 0; y < p.height(); ++y)
        for (int x = 0; x < p.width(); ++x)
            out.at((x + hx) % p.width(), (y + hy) % p.height()) = p.at(x, y);
    return out;
}

} // namespace vicomp
