#ifndef DEHAZE_PNG_IO_HPP
#define DEHAZE_PNG_IO_HPP

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "dehaze/error.hpp"
#include "dehaze/image.hpp"

namespace dehaze {

struct ImageInfo {
    int height = 0;
    int width = 0;
    int channels = 0;
    int bit_depth = 0;
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_png(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec))
        fail(ErrorKind::FileNotFound, path.string());
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp)
        fail(ErrorKind::FileNotFound, path.string());
    png_byte sig[8] = {};
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        fail(ErrorKind::UnsupportedFormat, path.string() + " is not a PNG file");
    return fp;
}

// Raw decode state. Everything touched between setjmp and a libpng longjmp is
// trivially destructible or owned by the caller.
struct PngDecode {
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int channels = 0;
    int bit_depth = 0;
};

inline void png_silent_warning(png_structp, png_const_charp) {}
[[noreturn]] inline void png_silent_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }

// Returns false on any libpng error. When `pixels` is null only the header is read.
inline bool png_decode(std::FILE* fp, PngDecode* out, std::vector<unsigned char>* pixels,
                       std::vector<png_bytep>* rows) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_silent_error, png_silent_warning);
    if (!png)
        return false;
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        return false;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_init_io(png, fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_strip_alpha(png);
    if (depth == 16)
        png_set_swap(png); // host little-endian 16-bit samples
    png_read_update_info(png, info);

    out->width = png_get_image_width(png, info);
    out->height = png_get_image_height(png, info);
    out->channels = png_get_channels(png, info);
    out->bit_depth = png_get_bit_depth(png, info);

    if (pixels) {
        const png_size_t stride = png_get_rowbytes(png, info);
        pixels->resize(stride * out->height);
        rows->resize(out->height);
        for (png_uint_32 y = 0; y < out->height; ++y)
            (*rows)[y] = pixels->data() + y * stride;
        png_read_image(png, rows->data());
        png_read_end(png, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

inline bool png_encode(std::FILE* fp, const unsigned char* pixels, int width, int height, int channels,
                       std::vector<png_bytep>* rows) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_silent_error, png_silent_warning);
    if (!png)
        return false;
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        return false;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    rows->resize(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y)
        (*rows)[y] = const_cast<png_bytep>(pixels + static_cast<std::size_t>(y) * width * channels);
    png_write_image(png, rows->data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

} // namespace detail

/// Reads only the header of a PNG file.
inline ImageInfo read_image_info(const std::filesystem::path& path) {
    auto fp = detail::open_png(path);
    detail::PngDecode dec;
    if (!detail::png_decode(fp.get(), &dec, nullptr, nullptr))
        fail(ErrorKind::CorruptImage, path.string());
    if (dec.channels != 1 && dec.channels != 3)
        fail(ErrorKind::UnsupportedFormat, path.string() + ": unsupported channel layout");
    return {static_cast<int>(dec.height), static_cast<int>(dec.width), dec.channels, dec.bit_depth};
}

/// Loads an 8- or 16-bit PNG as a unit-range tensor (v / 255 or v / 65535).
/// Palette images expand to RGB; alpha is dropped.
inline ImageTensor load_image(const std::filesystem::path& path) {
    auto fp = detail::open_png(path);
    detail::PngDecode dec;
    std::vector<unsigned char> pixels;
    std::vector<png_bytep> rows;
    if (!detail::png_decode(fp.get(), &dec, &pixels, &rows))
        fail(ErrorKind::CorruptImage, path.string());
    if (dec.channels != 1 && dec.channels != 3)
        fail(ErrorKind::UnsupportedFormat, path.string() + ": unsupported channel layout");

    const std::size_t n = static_cast<std::size_t>(dec.width) * dec.height * dec.channels;
    std::vector<float> data(n);
    if (dec.bit_depth == 16) {
        for (std::size_t i = 0; i < n; ++i) {
            const unsigned v = pixels[2 * i] | (static_cast<unsigned>(pixels[2 * i + 1]) << 8);
            data[i] = static_cast<float>(v / 65535.0);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i)
            data[i] = static_cast<float>(pixels[i] / 255.0);
    }
    return {static_cast<int>(dec.height), static_cast<int>(dec.width), dec.channels, RangeTag::Unit,
            std::move(data)};
}

/// 8-bit quantization: clamp to [0,1], then round(v * 255) half-up.
inline unsigned char quantize_u8(float v) {
    const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    return static_cast<unsigned char>(std::floor(c * 255.0 + 0.5));
}

/// Writes a lossless 8-bit PNG (RGB or grayscale). Parent directories must exist.
inline void save_image(const ImageTensor& t, const std::filesystem::path& path) {
    if (t.range() != RangeTag::Unit)
        fail(ErrorKind::RangeViolation, "save_image needs a unit-range tensor; convert with to_unit first");
    std::vector<unsigned char> pixels(t.size());
    auto in = t.data();
    for (std::size_t i = 0; i < pixels.size(); ++i)
        pixels[i] = quantize_u8(in[i]);

    detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp)
        fail(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    std::vector<png_bytep> rows;
    if (!detail::png_encode(fp.get(), pixels.data(), t.width(), t.height(), t.channels(), &rows))
        fail(ErrorKind::IoError, "failed to encode " + path.string());
    if (std::fflush(fp.get()) != 0)
        fail(ErrorKind::IoError, "failed to flush " + path.string());
}

/// Applies the file quantization without touching disk.
inline ImageTensor quantize_like_file(const ImageTensor& t) {
    std::vector<float> out(t.size());
    auto in = t.data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(quantize_u8(in[i]) / 255.0);
    return {t.height(), t.width(), t.channels(), RangeTag::Unit, std::move(out)};
}

} // namespace dehaze

#endif // DEHAZE_PNG_IO_HPP
