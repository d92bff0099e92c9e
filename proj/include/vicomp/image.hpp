#pragma once

#include <array>
#include <string>

#include "vicomp/plane.hpp"

namespace vicomp {

// Color state a TriImage is currently in. Every operation checks the tag of
// its input and retags its output; mixing states up is a hard error.
enum class ColorEncoding {
    DisplayRGB, // display-referred, [0,1], pre-EOTF
    LinearRGB,  // scene/display-linear light, [0,1] for in-range input
    XYZ,        // CIE 1931 2-degree tristimulus, white at Y=1
    CAT02LMS,   // cone responses through the CAT02 matrix
    Opponent,   // Y / op1 / op2 (may hold post-nonlinearity responses)
    CIELAB,     // L* a* b*
};

inline const char* to_string(ColorEncoding e) {
    switch (e) {
        case ColorEncoding::DisplayRGB: return "DisplayRGB";
        case ColorEncoding::LinearRGB: return "LinearRGB";
        case ColorEncoding::XYZ: return "XYZ";
        case ColorEncoding::CAT02LMS: return "CAT02LMS";
        case ColorEncoding::Opponent: return "Opponent";
        case ColorEncoding::CIELAB: return "CIELAB";
    }
    return "?";
}

// Three equally sized planes plus the encoding tag.
class TriImage {
  public:
    TriImage() = default;
    TriImage(int width, int height, ColorEncoding enc)
        : encoding_(enc), channels_{Plane(width, height), Plane(width, height), Plane(width, height)} {}
    TriImage(Plane c0, Plane c1, Plane c2, ColorEncoding enc)
        : encoding_(enc), channels_{std::move(c0), std::move(c1), std::move(c2)} {
        if (!channels_[0].same_size(channels_[1]) || !channels_[0].same_size(channels_[2]))
            throw ParamError("TriImage: channel dimensions differ");
    }

    int width() const { return channels_[0].width(); }
    int height() const { return channels_[0].height(); }
    ColorEncoding encoding() const { return encoding_; }
    void set_encoding(ColorEncoding e) { encoding_ = e; }

    Plane& channel(int i) { return channels_[i]; }
    const Plane& channel(int i) const { return channels_[i]; }

    std::array<double, 3> pixel(int x, int y) const {
        return {channels_[0].at(x, y), channels_[1].at(x, y), channels_[2].at(x, y)};
    }
    void set_pixel(int x, int y, const std::array<double, 3>& v) {
        channels_[0].at(x, y) = v[0];
        channels_[1].at(x, y) = v[1];
        channels_[2].at(x, y) = v[2];
    }

    void require_encoding(ColorEncoding e, const char* op) const {
        if (encoding_ != e)
            throw EncodingError(std::string(op) + ": expected " + to_string(e) + " input, got " +
                                to_string(encoding_));
    }

  private:
    ColorEncoding encoding_ = ColorEncoding::DisplayRGB;
    std::array<Plane, 3> channels_;
};

} // namespace vicomp
