#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "vicomp/image.hpp"

namespace vicomp {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using unique_file = std::unique_ptr<std::FILE, FileCloser>;

inline bool host_is_little_endian() {
    const uint16_t v = 1;
    return *reinterpret_cast<const uint8_t*>(&v) == 1;
}

} // namespace detail

struct PngImage {
    TriImage image; // DisplayRGB in [0,1]
    int bit_depth = 8;
};

inline PngImage read_png(const std::string& path) {
    detail::unique_file fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw IoError(path + ": not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }

    std::vector<png_byte> data;
    std::vector<png_bytep> rows;
    int width = 0, height = 0, depth = 8;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path + ": PNG decode error");
    }

    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (depth == 16 && detail::host_is_little_endian()) png_set_swap(png);
    png_read_update_info(png, info);
    depth = png_get_bit_depth(png, info);

    const size_t rowbytes = png_get_rowbytes(png, info);
    data.resize(rowbytes * height);
    rows.resize(height);
    for (int y = 0; y < height; ++y) rows[y] = data.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    PngImage out;
    out.bit_depth = depth;
    out.image = TriImage(width, height, ColorEncoding::DisplayRGB);
    if (depth == 16) {
        const double scale = 1.0 / 65535.0;
        for (int y = 0; y < height; ++y) {
            const uint16_t* row = reinterpret_cast<const uint16_t*>(rows[y]);
            for (int x = 0; x < width; ++x)
                for (int ch = 0; ch < 3; ++ch)
                    out.image.channel(ch).at(x, y) = row[3 * x + ch] * scale;
        }
    } else {
        const double scale = 1.0 / 255.0;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                for (int ch = 0; ch < 3; ++ch)
                    out.image.channel(ch).at(x, y) = rows[y][3 * x + ch] * scale;
    }
    return out;
}

inline void write_png(const std::string& path, const TriImage& image, int bit_depth = 16) {
    if (bit_depth != 8 && bit_depth != 16)
        throw ParamError("write_png: bit depth must be 8 or 16");
    image.require_encoding(ColorEncoding::DisplayRGB, "write_png");

    detail::unique_file fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open " + path + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }

    const int w = image.width();
    const int h = image.height();
    std::vector<png_byte> data;
    std::vector<png_bytep> rows(h);
    const double peak = bit_depth == 16 ? 65535.0 : 255.0;
    const size_t rowbytes = static_cast<size_t>(w) * 3 * (bit_depth / 8);
    data.resize(rowbytes * h);
    for (int y = 0; y < h; ++y) {
        rows[y] = data.data() + rowbytes * y;
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                const double v = std::clamp(image.channel(ch).at(x, y), 0.0, 1.0);
                const auto q = static_cast<uint32_t>(std::lround(v * peak));
                if (bit_depth == 16)
                    reinterpret_cast<uint16_t*>(rows[y])[3 * x + ch] = static_cast<uint16_t>(q);
                else
                    rows[y][3 * x + ch] = static_cast<png_byte>(q);
            }
    }

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path + ": PNG encode error");
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, w, h, bit_depth, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16 && detail::host_is_little_endian()) png_set_swap(png);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Writes an 8-bit grayscale mask (255 inside, 0 outside).
inline void write_mask_png(const std::string& path, const RegionMask& mask) {
    detail::unique_file fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    std::vector<png_byte> data(static_cast<size_t>(mask.width) * mask.height);
    std::vector<png_bytep> rows(mask.height);
    for (int y = 0; y < mask.height; ++y) {
        rows[y] = data.data() + static_cast<size_t>(y) * mask.width;
        for (int x = 0; x < mask.width; ++x) rows[y][x] = mask.at(x, y) ? 255 : 0;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path + ": PNG encode error");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, mask.width, mask.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// ---------------------------------------------------------------------------
// Portable float maps (little-endian, bottom-up scanlines)

inline void write_pfm(const std::string& path, const Plane& plane) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << "Pf\n" << plane.width() << " " << plane.height() << "\n-1.0\n";
    std::vector<float> row(plane.width());
    for (int y = plane.height() - 1; y >= 0; --y) {
        for (int x = 0; x < plane.width(); ++x) row[x] = static_cast<float>(plane.at(x, y));
        os.write(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
    }
    if (!os) throw IoError("short write to " + path);
}

inline void write_pfm(const std::string& path, const TriImage& image) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << "PF\n" << image.width() << " " << image.height() << "\n-1.0\n";
    std::vector<float> row(static_cast<size_t>(image.width()) * 3);
    for (int y = image.height() - 1; y >= 0; --y) {
        for (int x = 0; x < image.width(); ++x)
            for (int ch = 0; ch < 3; ++ch)
                row[3 * x + ch] = static_cast<float>(image.channel(ch).at(x, y));
        os.write(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
    }
    if (!os) throw IoError("short write to " + path);
}

namespace detail {

inline std::string pfm_token(std::istream& is) {
    std::string t;
    is >> t;
    if (!is) throw IoError("truncated PFM header");
    return t;
}

} // namespace detail

struct PfmImage {
    TriImage image; // tagged DisplayRGB; the caller decides the real meaning
    bool grayscale = false;
};

inline PfmImage read_pfm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    const std::string magic = detail::pfm_token(is);
    if (magic != "PF" && magic != "Pf") throw IoError(path + ": not a PFM file");
    const bool gray = magic == "Pf";
    const int w = std::stoi(detail::pfm_token(is));
    const int h = std::stoi(detail::pfm_token(is));
    const double scale = std::stod(detail::pfm_token(is));
    is.get(); // single whitespace after the header
    if (w <= 0 || h <= 0) throw IoError(path + ": bad PFM dimensions");
    const bool file_little = scale < 0;
    if (file_little != detail::host_is_little_endian())
        throw IoError(path + ": PFM endianness not supported on this host");

    PfmImage out;
    out.grayscale = gray;
    out.image = TriImage(w, h, ColorEncoding::DisplayRGB);
    const int nch = gray ? 1 : 3;
    std::vector<float> row(static_cast<size_t>(w) * nch);
    for (int y = h - 1; y >= 0; --y) {
        is.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
        if (!is) throw IoError(path + ": truncated PFM data");
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                out.image.channel(ch).at(x, y) = row[nch * x + (gray ? 0 : ch)];
    }
    return out;
}

} // namespace vicomp
