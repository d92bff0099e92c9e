#pragma once

#include <cmath>
#include <ostream>
#include <vector>

#include "vicomp/image.hpp"
#include "vicomp/kernels.hpp"
#include "vicomp/plane.hpp"

namespace vicomp {

// Two-sided saturating nonlinearity for the contrast term. sigma(0) = 0 by
// construction; unequal gains make positive and negative responses differ in
// magnitude.
struct SigmoidSpec {
    double gain_pos = 1.0;
    double gain_neg = 1.0;
    double slope = 1.0;

    bool symmetric() const { return gain_pos == gain_neg; }

    void validate() const {
        if (gain_pos <= 0 || gain_neg <= 0) throw ParamError("SigmoidSpec: gains must be > 0");
        if (slope <= 0) throw ParamError("SigmoidSpec: slope must be > 0");
    }
};

inline double sigmoid_eval(double d, const SigmoidSpec& s) {
    return (d >= 0 ? s.gain_pos : s.gain_neg) * std::tanh(s.slope * d);
}

namespace detail {

inline double log_cosh(double x) {
    const double a = std::abs(x);
    // log(cosh(a)) = a + log1p(exp(-2a)) - log(2), stable for large a
    return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

} // namespace detail

// Antiderivative of the (symmetric) sigmoid, zero at the origin. Only the
// symmetric case has a consistent potential, so the energy path is limited
// to it.
inline double sigmoid_antiderivative(double d, const SigmoidSpec& s) {
    if (!s.symmetric())
        throw ParamError("sigmoid_antiderivative: defined only for a symmetric sigmoid");
    return s.gain_pos / s.slope * detail::log_cosh(s.slope * d);
}

// Parameters of the induction-capable neural field evolution.
struct LheiParams {
    double alpha = 0.0;
    double beta = 1.0;
    double gamma = 0.0;
    GaussianMix local_mean_kernel = GaussianMix::two_term(0.5, 5.0, 0.5, 25.0);
    GaussianMix contrast_kernel = GaussianMix::two_term(0.5, 5.0, 0.5, 25.0);
    SigmoidSpec sigmoid;
    double dt = 0.1;
    double tol = 1e-5;
    int max_iters = 2000;
    int contrast_levels = 256;   // quantization of the large-image approximation
    double sigma_anchor = 0;     // 0: min(image dims)

    void validate() const {
        if (alpha < 0 || beta < 0 || gamma < 0)
            throw ParamError("LheiParams: weights must be nonnegative");
        if (dt <= 0) throw ParamError("LheiParams: dt must be > 0");
        if (tol <= 0) throw ParamError("LheiParams: tol must be > 0");
        if (max_iters <= 0) throw ParamError("LheiParams: max_iters must be > 0");
        if (contrast_levels < 2) throw ParamError("LheiParams: need at least 2 contrast levels");
        sigmoid.validate();
        local_mean_kernel.validate();
        contrast_kernel.validate();
    }
};

// Images up to this pixel count get the exact O(N^2) pairwise contrast term;
// larger ones use the intensity-quantized approximation.
inline constexpr size_t kExactContrastLimit = 64 * 64;

namespace detail {

// Shared per-size state for the evolution: the local-mean filter on the
// padded grid and, in exact mode, the periodic spatial contrast kernel.
// All operators act on the mirror-extended torus, which keeps the evolution
// the exact gradient flow of the energy below.
//
// The pairwise sums run over a kernel window that drops offsets whose kernel
// magnitude is below 1e-14 of the peak; the same window is used for the
// evolution and the energy, so the descent property is untouched.
struct LheiContext {
    int w = 0, h = 0;
    bool exact = false;
    FreqFilter mean_filter;     // padded grid
    FreqFilter contrast_filter; // padded grid (approx path)
    Plane contrast_kernel;      // padded grid, wrap-around layout (exact path)
    int rx = 0, ry = 0;         // window half-widths
    std::vector<double> kwin;   // (2ry+1) x (2rx+1) kernel window

    LheiContext(int width, int height, const LheiParams& p) : w(width), h(height) {
        const double anchor =
            p.sigma_anchor > 0 ? p.sigma_anchor : static_cast<double>(std::min(w, h));
        mean_filter = mix_response_any(p.local_mean_kernel, 2 * w, 2 * h, anchor);
        contrast_filter = mix_response_any(p.contrast_kernel, 2 * w, 2 * h, anchor);
        exact = static_cast<size_t>(w) * h <= kExactContrastLimit;
        if (exact) {
            contrast_kernel = filter_spatial_kernel(contrast_filter).first;
            build_window();
        }
    }

    void build_window() {
        const int pw = 2 * w, ph = 2 * h;
        double peak = 0;
        for (double v : contrast_kernel) peak = std::max(peak, std::abs(v));
        const double thr = peak * 1e-14;
        rx = ry = 0;
        for (int y = 0; y < ph; ++y) {
            const int dy = y <= ph / 2 ? y : y - ph;
            for (int x = 0; x < pw; ++x) {
                const int dx = x <= pw / 2 ? x : x - pw;
                if (std::abs(contrast_kernel.at(x, y)) > thr) {
                    rx = std::max(rx, std::abs(dx));
                    ry = std::max(ry, std::abs(dy));
                }
            }
        }
        rx = std::min(rx, pw / 2);
        ry = std::min(ry, ph / 2);
        kwin.assign(static_cast<size_t>(2 * ry + 1) * (2 * rx + 1), 0.0);
        for (int dy = -ry; dy <= ry; ++dy)
            for (int dx = -rx; dx <= rx; ++dx) {
                // offsets +-pw/2 alias to the same torus cell; halve them so
                // the window still sums each cell exactly once
                double scale = 1.0;
                if (2 * rx + 1 > pw && std::abs(dx) == pw / 2) scale *= 0.5;
                if (2 * ry + 1 > ph && std::abs(dy) == ph / 2) scale *= 0.5;
                kwin[static_cast<size_t>(dy + ry) * (2 * rx + 1) + (dx + rx)] =
                    scale * contrast_kernel.at((dx + pw) % pw, (dy + ph) % ph);
            }
    }

    // mirror-extended field with rows additionally wrapped by rx on both
    // sides, so the windowed inner loops never branch
    std::vector<double> extended_pad(const Plane& J) const {
        const int pw = 2 * w, ph = 2 * h;
        const int ew = pw + 2 * rx;
        std::vector<double> ext(static_cast<size_t>(ph) * ew);
        for (int y = 0; y < ph; ++y) {
            const int sy = y < h ? y : ph - 1 - y;
            double* row = ext.data() + static_cast<size_t>(y) * ew;
            for (int i = 0; i < ew; ++i) {
                int x = (i - rx) % pw;
                if (x < 0) x += pw;
                const int sx = x < w ? x : pw - 1 - x;
                row[i] = J.at(sx, sy);
            }
        }
        return ext;
    }

    // sigma(J(x) - J(y)) summed over the mirror torus against the kernel.
    Plane contrast_term_exact(const Plane& J, const SigmoidSpec& s) const {
        const int ph = 2 * h;
        const int ew = 2 * w + 2 * rx;
        const std::vector<double> ext = extended_pad(J);
        Plane r(w, h, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double jx = J.at(x, y);
                double acc = 0;
                for (int ody = -ry; ody <= ry; ++ody) {
                    int yy = y - ody;
                    if (yy < 0) yy += ph;
                    if (yy >= ph) yy -= ph;
                    const double* krow = kwin.data() + static_cast<size_t>(ody + ry) * (2 * rx + 1);
                    // source x runs over x-(-rx..rx) = (x-rx)..(x+rx); the
                    // extended row is indexed by x - odx + rx
                    const double* prow = ext.data() + static_cast<size_t>(yy) * ew + x;
                    for (int odx = -rx; odx <= rx; ++odx)
                        acc += krow[odx + rx] * sigmoid_eval(jx - prow[rx - odx], s);
                }
                r.at(x, y) = acc;
            }
        }
        return r;
    }

    // Level-set approximation: convolve sigma(c - J) for a grid of candidate
    // center values c and interpolate at c = J(x).
    Plane contrast_term_approx(const Plane& J, const SigmoidSpec& s, int levels) const {
        const double lo = plane_min(J);
        const double hi = plane_max(J);
        if (hi == lo) return Plane(w, h, 0.0);
        const double step = (hi - lo) / (levels - 1);
        std::vector<Plane> u;
        u.reserve(levels);
        Plane tmp(w, h);
        for (int l = 0; l < levels; ++l) {
            const double c = lo + step * l;
            for (size_t i = 0; i < tmp.size(); ++i) tmp[i] = sigmoid_eval(c - J[i], s);
            u.push_back(convolve_freq(tmp, contrast_filter));
        }
        Plane r(w, h);
        for (size_t i = 0; i < r.size(); ++i) {
            const double t = (J[i] - lo) / step;
            const int l0 = std::min(levels - 2, static_cast<int>(t));
            const double f = t - l0;
            r[i] = (1.0 - f) * u[l0][i] + f * u[l0 + 1][i];
        }
        return r;
    }

    Plane contrast_term(const Plane& J, const LheiParams& p) const {
        if (p.gamma == 0) return Plane(w, h, 0.0);
        return exact ? contrast_term_exact(J, p.sigmoid)
                     : contrast_term_approx(J, p.sigmoid, p.contrast_levels);
    }

    // One explicit Euler update; returns the largest absolute change.
    double step(Plane& J, const Plane& J0, const LheiParams& p) const {
        const Plane mean = convolve_freq(J, mean_filter);
        const Plane contrast = contrast_term(J, p);
        double max_update = 0;
        for (size_t i = 0; i < J.size(); ++i) {
            const double rhs =
                -p.alpha * (J[i] - mean[i]) + p.gamma * contrast[i] - p.beta * (J[i] - J0[i]);
            const double du = p.dt * rhs;
            J[i] += du;
            max_update = std::max(max_update, std::abs(du));
        }
        return max_update;
    }

    // Lyapunov functional of the evolution on the mirror torus:
    //   alpha/2 <J, J - Km*J> - gamma/2 sum_xy Kc phi(J(x)-J(y)) + beta/2 |J-J0|^2
    // Its exact gradient is the negative of the step right-hand side, so the
    // trace is non-increasing for small enough dt.
    double energy(const Plane& J, const Plane& J0, const LheiParams& p) const {
        const Plane mean = convolve_freq(J, mean_filter);
        double e_mean = 0, e_fid = 0;
        for (size_t i = 0; i < J.size(); ++i) {
            e_mean += J[i] * (J[i] - mean[i]);
            const double d = J[i] - J0[i];
            e_fid += d * d;
        }
        double e_contrast = 0;
        if (p.gamma != 0) {
            const int ph = 2 * h;
            const int ew = 2 * w + 2 * rx;
            const std::vector<double> ext = extended_pad(J);
            // per-row partials summed sequentially so the result does not
            // depend on the thread count
            std::vector<double> row_sum(h, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
            for (int y = 0; y < h; ++y) {
                double acc = 0;
                for (int x = 0; x < w; ++x) {
                    const double jx = J.at(x, y);
                    for (int ody = -ry; ody <= ry; ++ody) {
                        int yy = y - ody;
                        if (yy < 0) yy += ph;
                        if (yy >= ph) yy -= ph;
                        const double* krow =
                            kwin.data() + static_cast<size_t>(ody + ry) * (2 * rx + 1);
                        const double* prow = ext.data() + static_cast<size_t>(yy) * ew + x;
                        for (int odx = -rx; odx <= rx; ++odx)
                            acc += krow[odx + rx] *
                                   sigmoid_antiderivative(jx - prow[rx - odx], p.sigmoid);
                    }
                }
                row_sum[y] = acc;
            }
            for (double v : row_sum) e_contrast += v;
        }
        return 0.5 * p.alpha * e_mean - 0.5 * p.gamma * e_contrast + 0.5 * p.beta * e_fid;
    }
};

} // namespace detail

// One explicit Euler update of the evolution equation. Returns the updated
// plane and the largest absolute change.
inline std::pair<Plane, double> lhei_step(const Plane& J, const Plane& J0, const LheiParams& p) {
    p.validate();
    if (!J.same_size(J0)) throw ParamError("lhei_step: J and J0 dimensions differ");
    detail::LheiContext ctx(J.width(), J.height(), p);
    Plane out = J;
    const double upd = ctx.step(out, J0, p);
    return {std::move(out), upd};
}

struct LheiResult {
    Plane steady_state;
    int iterations = 0;
    std::vector<double> energy_trace; // filled only in exact symmetric mode
    bool converged = false;
};

// Runs the evolution from J = J0 until the update drops below tol or the
// iteration budget runs out (a warning status, not an error). The energy
// trace is recorded when it is defined: symmetric sigmoid and an image small
// enough for the exact pairwise evaluation.
inline LheiResult lhei_run(const Plane& J0, const LheiParams& p) {
    p.validate();
    detail::LheiContext ctx(J0.width(), J0.height(), p);
    const bool track_energy = p.sigmoid.symmetric() && ctx.exact;

    LheiResult res;
    res.steady_state = J0;
    if (track_energy) res.energy_trace.push_back(ctx.energy(res.steady_state, J0, p));
    for (int it = 0; it < p.max_iters; ++it) {
        const double upd = ctx.step(res.steady_state, J0, p);
        ++res.iterations;
        if (track_energy) res.energy_trace.push_back(ctx.energy(res.steady_state, J0, p));
        if (upd < p.tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

// Energy of a state. Only defined for symmetric sigmoids (the asymmetric
// case has no stated potential) and restricted to images small enough for
// the exact pairwise contrast sum; larger images must run energy-free.
inline double lhe_energy(const Plane& J, const Plane& J0, const LheiParams& p) {
    p.validate();
    if (!p.sigmoid.symmetric())
        throw ParamError("lhe_energy: defined only for a symmetric sigmoid");
    if (!J.same_size(J0)) throw ParamError("lhe_energy: J and J0 dimensions differ");
    if (static_cast<size_t>(J.width()) * J.height() > kExactContrastLimit)
        throw SizeError("lhe_energy: image too large for exact evaluation; run energy-free");
    detail::LheiContext ctx(J.width(), J.height(), p);
    return ctx.energy(J, J0, p);
}

namespace detail {

// Fixed affine maps taking opponent-channel ranges into [0,1] for the
// evolution (Y in [0,3), op1 in [-1,1], op2 in [-2,2)).
inline constexpr double kOppScale[3] = {3.0, 2.0, 4.0};
inline constexpr double kOppOffset[3] = {0.0, 1.0, 2.0};

} // namespace detail

// Monnier-protocol shift: runs the evolution channel-wise on two
// opponent-encoded images (each channel affinely normalized to [0,1]) and
// returns the mean op2 difference, test minus comparison, over the ring
// mask in opponent units.
inline double monnier_shift(const TriImage& test_image, const TriImage& comparison_image,
                            const RegionMask& mask, const LheiParams& p) {
    test_image.require_encoding(ColorEncoding::Opponent, "monnier_shift");
    comparison_image.require_encoding(ColorEncoding::Opponent, "monnier_shift");
    if (mask.count() == 0) throw ParamError("monnier_shift: empty test-ring mask");

    auto process_channel = [&](const Plane& src, int ch) {
        Plane j0 = src;
        for (double& v : j0) v = (v + detail::kOppOffset[ch]) / detail::kOppScale[ch];
        LheiResult r = lhei_run(j0, p);
        for (double& v : r.steady_state) v = v * detail::kOppScale[ch] - detail::kOppOffset[ch];
        return std::move(r.steady_state);
    };

    const Plane test_op2 = process_channel(test_image.channel(2), 2);
    const Plane comp_op2 = process_channel(comparison_image.channel(2), 2);
    // Y and op1 evolve too (channel-wise protocol) but only op2 enters the
    // shift; skip them — the channels are independent in this model.
    return mean_over_mask(test_op2, mask) - mean_over_mask(comp_op2, mask);
}

// Writes an energy trace as a two-column CSV (iteration, energy).
inline void write_energy_trace_csv(const std::vector<double>& trace, std::ostream& os) {
    os << "iteration,energy\n";
    for (size_t i = 0; i < trace.size(); ++i) os << i << "," << trace[i] << "\n";
}

} // namespace vicomp
