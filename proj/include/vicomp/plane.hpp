#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "vicomp/errors.hpp"

namespace vicomp {

// Single-channel scalar field over a rectangular pixel domain.
// Row-major storage, double precision throughout.
class Plane {
  public:
    Plane() = default;
    Plane(int width, int height, double fill = 0.0)
        : width_(width), height_(height),
          data_(static_cast<size_t>(width) * static_cast<size_t>(height), fill) {
        if (width <= 0 || height <= 0)
            throw ParamError("Plane dimensions must be positive");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int x, int y) { return data_[static_cast<size_t>(y) * width_ + x]; }
    double at(int x, int y) const { return data_[static_cast<size_t>(y) * width_ + x]; }
    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    bool same_size(const Plane& o) const { return width_ == o.width_ && height_ == o.height_; }

  private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

inline double plane_min(const Plane& p) {
    if (p.empty()) throw ParamError("plane_min: empty plane");
    return *std::min_element(p.begin(), p.end());
}

inline double plane_max(const Plane& p) {
    if (p.empty()) throw ParamError("plane_max: empty plane");
    return *std::max_element(p.begin(), p.end());
}

inline double plane_mean(const Plane& p) {
    if (p.empty()) throw ParamError("plane_mean: empty plane");
    double s = 0;
    for (double v : p) s += v;
    return s / static_cast<double>(p.size());
}

inline double plane_median(const Plane& p) {
    if (p.empty()) throw ParamError("plane_median: empty plane");
    std::vector<double> v(p.begin(), p.end());
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + mid);
    return 0.5 * (lo + hi);
}

// Boolean pixel region used for measurement (comparison bars, test rings).
struct RegionMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> on;

    RegionMask() = default;
    RegionMask(int w, int h) : width(w), height(h), on(static_cast<size_t>(w) * h, 0) {}

    bool at(int x, int y) const { return on[static_cast<size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v = true) { on[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
    size_t count() const {
        size_t c = 0;
        for (uint8_t b : on) c += (b != 0);
        return c;
    }
};

inline double mean_over_mask(const Plane& p, const RegionMask& m) {
    if (p.width() != m.width || p.height() != m.height)
        throw ParamError("mean_over_mask: dimension mismatch");
    double s = 0;
    size_t n = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (m.on[i]) {
            s += p[i];
            ++n;
        }
    }
    if (n == 0) throw ParamError("mean_over_mask: empty mask");
    return s / static_cast<double>(n);
}

} // namespace vicomp
