#pragma once

#include <png.h>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace psrg {

namespace detail {

struct FileHandle {
    std::FILE* f = nullptr;
    explicit FileHandle(const std::string& path, const char* mode) : f(std::fopen(path.c_str(), mode)) {}
    ~FileHandle() {
        if (f) std::fclose(f);
    }
    FileHandle(const FileHandle&) = delete;
    FileHandle& operator=(const FileHandle&) = delete;
};

inline std::string lower_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext;
}

// Interleaved rows of `channels` samples at 8 or 16 bits, normalized into a
// planar [C,H,W] tensor in [0,1].
inline Tensor planar_from_rows(const std::vector<std::vector<uint8_t>>& rows, int64_t w, int64_t c,
                               int bit_depth) {
    const int64_t h = static_cast<int64_t>(rows.size());
    Tensor img({c, h, w});
    float* dst = img.data();
    const float maxv = bit_depth == 16 ? 65535.0f : 255.0f;
    for (int64_t y = 0; y < h; ++y) {
        const uint8_t* row = rows[static_cast<std::size_t>(y)].data();
        for (int64_t x = 0; x < w; ++x) {
            for (int64_t ch = 0; ch < c; ++ch) {
                uint32_t v;
                if (bit_depth == 16) {
                    const std::size_t o = static_cast<std::size_t>(2 * (x * c + ch));
                    v = (static_cast<uint32_t>(row[o]) << 8) | row[o + 1];  // big-endian samples
                } else {
                    v = row[static_cast<std::size_t>(x * c + ch)];
                }
                dst[(ch * h + y) * w + x] = static_cast<float>(v) / maxv;
            }
        }
    }
    return img;
}

inline std::vector<std::vector<uint8_t>> rows_from_planar(const Tensor& img, int bit_depth) {
    const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const float* src = img.data();
    const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
    std::vector<std::vector<uint8_t>> rows(static_cast<std::size_t>(h));
    for (int64_t y = 0; y < h; ++y) {
        auto& row = rows[static_cast<std::size_t>(y)];
        row.resize(static_cast<std::size_t>(w * c * (bit_depth == 16 ? 2 : 1)));
        for (int64_t x = 0; x < w; ++x) {
            for (int64_t ch = 0; ch < c; ++ch) {
                double v = static_cast<double>(src[(ch * h + y) * w + x]);
                v = std::min(1.0, std::max(0.0, v));
                const uint32_t q = static_cast<uint32_t>(std::lround(v * maxv));
                if (bit_depth == 16) {
                    row[static_cast<std::size_t>(2 * (x * c + ch))] = static_cast<uint8_t>(q >> 8);
                    row[static_cast<std::size_t>(2 * (x * c + ch) + 1)] = static_cast<uint8_t>(q & 0xff);
                } else {
                    row[static_cast<std::size_t>(x * c + ch)] = static_cast<uint8_t>(q);
                }
            }
        }
    }
    return rows;
}

inline Tensor load_png(const std::string& path) {
    FileHandle fh(path, "rb");
    if (!fh.f) throw DataError("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("libpng init failed");
    }
    std::vector<std::vector<uint8_t>> rows;
    int64_t width = 0, channels = 0;
    int bit_depth = 8;
    // libpng reports errors by longjmp; everything allocated below must be
    // released on that path before we throw.
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("corrupt or truncated PNG: " + path);
    }
    png_init_io(png, fh.f);
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    const int64_t height = png_get_image_height(png, info);
    bit_depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    bit_depth = png_get_bit_depth(png, info);
    channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError(path + ": unsupported channel count " + std::to_string(channels));
    }
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    rows.assign(static_cast<std::size_t>(height), std::vector<uint8_t>(rowbytes));
    std::vector<png_bytep> ptrs(static_cast<std::size_t>(height));
    for (std::size_t y = 0; y < ptrs.size(); ++y) ptrs[y] = rows[y].data();
    png_read_image(png, ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return planar_from_rows(rows, width, channels, bit_depth);
}

inline void save_png(const Tensor& img, const std::string& path, int bit_depth) {
    const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    FileHandle fh(path, "wb");
    if (!fh.f) throw DataError("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("PNG write failed: " + path);
    }
    png_init_io(png, fh.f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
                 c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    auto rows = rows_from_planar(img, bit_depth);
    std::vector<png_bytep> ptrs(rows.size());
    for (std::size_t y = 0; y < rows.size(); ++y) ptrs[y] = rows[y].data();
    png_write_image(png, ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Binary PGM (P5) and PPM (P6) with maxval 255 or 65535.
inline Tensor load_pnm(const std::string& path) {
    FileHandle fh(path, "rb");
    if (!fh.f) throw DataError("cannot open " + path);
    auto next_token = [&]() -> std::string {
        std::string tok;
        int ch;
        while ((ch = std::fgetc(fh.f)) != EOF) {
            if (ch == '#') {
                while ((ch = std::fgetc(fh.f)) != EOF && ch != '\n') {
                }
                continue;
            }
            if (std::isspace(ch)) {
                if (!tok.empty()) break;
                continue;
            }
            tok.push_back(static_cast<char>(ch));
        }
        return tok;
    };
    const std::string magic = next_token();
    if (magic != "P5" && magic != "P6") throw DataError(path + ": not a binary PGM/PPM file");
    const int64_t c = magic == "P5" ? 1 : 3;
    int64_t w, h, maxval;
    try {
        w = std::stoll(next_token());
        h = std::stoll(next_token());
        maxval = std::stoll(next_token());
    } catch (const std::exception&) {
        throw DataError(path + ": malformed header");
    }
    if (w < 1 || h < 1 || (maxval != 255 && maxval != 65535))
        throw DataError(path + ": unsupported dimensions or maxval");
    const int bit_depth = maxval == 65535 ? 16 : 8;
    const std::size_t rowbytes = static_cast<std::size_t>(w * c * (bit_depth == 16 ? 2 : 1));
    std::vector<std::vector<uint8_t>> rows(static_cast<std::size_t>(h), std::vector<uint8_t>(rowbytes));
    for (auto& row : rows) {
        if (std::fread(row.data(), 1, rowbytes, fh.f) != rowbytes)
            throw DataError(path + ": truncated pixel data");
    }
    return planar_from_rows(rows, w, c, bit_depth);
}

inline void save_pnm(const Tensor& img, const std::string& path, int bit_depth) {
    const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    FileHandle fh(path, "wb");
    if (!fh.f) throw DataError("cannot write " + path);
    const int64_t maxval = bit_depth == 16 ? 65535 : 255;
    std::fprintf(fh.f, "%s\n%lld %lld\n%lld\n", c == 1 ? "P5" : "P6", static_cast<long long>(w),
                 static_cast<long long>(h), static_cast<long long>(maxval));
    for (const auto& row : rows_from_planar(img, bit_depth)) {
        if (std::fwrite(row.data(), 1, row.size(), fh.f) != row.size())
            throw DataError(path + ": short write");
    }
}

}  // namespace detail

// Loads a PNG/PGM/PPM file as [C,H,W] floats in [0,1], C in {1,3}.
inline Tensor load_image(const std::string& path) {
    const std::string ext = detail::lower_ext(path);
    if (ext == "png") return detail::load_png(path);
    if (ext == "pgm" || ext == "ppm" || ext == "pnm") return detail::load_pnm(path);
    throw DataError(path + ": unsupported image format ." + ext);
}

// Saves [C,H,W] in [0,1] at 8 or 16 bits; the format follows the extension.
inline void save_image(const Tensor& img, const std::string& path, int bit_depth = 8) {
    if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3))
        throw ShapeError("save_image: expected [1|3,H,W], got " + shape_str(img.shape()));
    if (bit_depth != 8 && bit_depth != 16) throw ConfigError("save_image: bit depth must be 8 or 16");
    const std::string ext = detail::lower_ext(path);
    if (ext == "png") return detail::save_png(img, path, bit_depth);
    if (ext == "pgm" || ext == "ppm" || ext == "pnm") {
        if (ext == "pgm" && img.dim(0) != 1) throw ShapeError("save_image: PGM is grayscale only");
        if (ext == "ppm" && img.dim(0) != 3) throw ShapeError("save_image: PPM is color only");
        return detail::save_pnm(img, path, bit_depth);
    }
    throw DataError(path + ": unsupported image format ." + ext);
}

}  // namespace psrg
