#pragma once

#include <cmath>
#include <sstream>

#include "vicomp/plane.hpp"

namespace vicomp {

// Saturating photoreceptor nonlinearity R(I) = r_max * I^n / (I^n + i_s^n).
// r_max stays at 1 here; i_s is the semi-saturation intensity.
struct NakaRushtonParams {
    double n = 0.75;
    double i_s = 0.5;
    double r_max = 1.0;

    void validate() const {
        if (n <= 0) throw ParamError("NakaRushtonParams: exponent n must be > 0");
        if (i_s <= 0) throw ParamError("NakaRushtonParams: semi-saturation i_s must be > 0");
        if (r_max <= 0) throw ParamError("NakaRushtonParams: r_max must be > 0");
    }
};

inline double nr_forward_value(double v, const NakaRushtonParams& p) {
    if (v <= 0) return 0.0;
    const double a = std::pow(v, p.n);
    const double b = std::pow(p.i_s, p.n);
    return p.r_max * a / (a + b);
}

inline double nr_inverse_value(double j, const NakaRushtonParams& p) {
    const double r = j / p.r_max;
    if (r <= 0) return 0.0;
    return p.i_s * std::pow(r / (1.0 - r), 1.0 / p.n);
}

inline Plane nr_forward(const Plane& plane, const NakaRushtonParams& p) {
    p.validate();
    const double lo = plane_min(plane);
    if (lo < 0) {
        std::ostringstream os;
        os << "nr_forward: input must be nonnegative (min " << lo << ")";
        throw RangeError(os.str());
    }
    Plane out = plane;
    for (double& v : out) v = nr_forward_value(v, p);
    return out;
}

// Inverse response i_s * (J / (1 - J))^(1/n); the domain is [0,1), so inputs
// must be clipped below 1 before calling (see clip_unit in compensation).
inline Plane nr_inverse(const Plane& plane, const NakaRushtonParams& p) {
    p.validate();
    const double lo = plane_min(plane);
    const double hi = plane_max(plane);
    if (lo < 0 || hi >= p.r_max) {
        std::ostringstream os;
        os << "nr_inverse: input outside [0," << p.r_max << ") (min " << lo << ", max " << hi
           << "); clip first";
        throw RangeError(os.str());
    }
    Plane out = plane;
    for (double& v : out) v = nr_inverse_value(v, p);
    return out;
}

// Semi-saturation estimate: the median pixel value. A zero median falls back
// to the smallest positive value present; an all-zero plane is rejected.
inline double semi_saturation(const Plane& plane) {
    if (plane.empty()) throw ParamError("semi_saturation: empty plane");
    if (plane_min(plane) < 0) throw RangeError("semi_saturation: input must be nonnegative");
    const double med = plane_median(plane);
    if (med > 0) return med;
    double smallest = std::numeric_limits<double>::infinity();
    for (double v : plane)
        if (v > 0 && v < smallest) smallest = v;
    if (!std::isfinite(smallest))
        throw ParamError("semi_saturation: degenerate all-zero plane");
    return smallest;
}

namespace detail {

// Kolmogorov-Smirnov distance between the empirical CDF of the transformed
// plane and the uniform CDF on [0,1].
inline double ks_distance_to_uniform(const Plane& plane, double n, double i_s) {
    std::vector<double> v;
    v.reserve(plane.size());
    const NakaRushtonParams p{n, i_s, 1.0};
    for (double x : plane) v.push_back(nr_forward_value(x, p));
    std::sort(v.begin(), v.end());
    const double inv_n = 1.0 / static_cast<double>(v.size());
    double d = 0;
    for (size_t i = 0; i < v.size(); ++i) {
        d = std::max(d, v[i] - static_cast<double>(i) * inv_n);
        d = std::max(d, static_cast<double>(i + 1) * inv_n - v[i]);
    }
    return d;
}

} // namespace detail

// Picks the exponent that best equalizes the histogram of the transformed
// plane: golden-section search for the minimum KS distance to the uniform
// distribution. Constant planes have a degenerate histogram where every
// exponent ties; they resolve to the range midpoint.
inline double select_exponent(const Plane& plane, double i_s, double lo = 0.05, double hi = 5.0) {
    if (plane.empty()) throw ParamError("select_exponent: empty plane");
    if (!(lo > 0 && hi <= 5.0 && lo < hi))
        throw ParamError("select_exponent: search range must satisfy 0 < lo < hi <= 5");
    if (i_s <= 0) throw ParamError("select_exponent: i_s must be > 0");
    if (plane_min(plane) < 0) throw RangeError("select_exponent: input must be nonnegative");

    if (plane_max(plane) == plane_min(plane)) return 0.5 * (lo + hi); // tie-break

    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double x1 = b - gr * (b - a);
    double x2 = a + gr * (b - a);
    double f1 = detail::ks_distance_to_uniform(plane, x1, i_s);
    double f2 = detail::ks_distance_to_uniform(plane, x2, i_s);
    while (b - a > 1e-4) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = detail::ks_distance_to_uniform(plane, x1, i_s);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = detail::ks_distance_to_uniform(plane, x2, i_s);
        }
    }
    return 0.5 * (a + b);
}

} // namespace vicomp
