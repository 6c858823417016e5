#ifndef DEHAZE_IMAGE_HPP
#define DEHAZE_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dehaze/error.hpp"

namespace dehaze {

/// Declared value range of an image raster.
enum class RangeTag {
    Unit,   ///< [0, 1], file and metric domain
    Signed, ///< [-1, 1], network domain
};

inline float range_lo(RangeTag tag) { return tag == RangeTag::Unit ? 0.0f : -1.0f; }
inline float range_hi(RangeTag) { return 1.0f; }

/// H x W x C float raster, channel-interleaved (row-major, channels fastest).
///
/// Construction validates the shape (C in {1, 3}) and that every element lies
/// inside the declared range; the object is immutable afterwards.
class ImageTensor {
public:
    ImageTensor() = default;

    ImageTensor(int height, int width, int channels, RangeTag range, float fill = 0.0f)
        : ImageTensor(height, width, channels, range,
                      std::vector<float>(checked_size(height, width, channels), fill)) {}

    ImageTensor(int height, int width, int channels, RangeTag range, std::vector<float> data)
        : height_(height), width_(width), channels_(channels), range_(range), data_(std::move(data)) {
        if (data_.size() != checked_size(height, width, channels))
            fail(ErrorKind::ShapeMismatch, "data length does not match " + shape_string());
        const float lo = range_lo(range), hi = range_hi(range);
        for (std::size_t i = 0; i < data_.size(); ++i) {
            const float v = data_[i];
            if (!(v >= lo && v <= hi))
                fail(ErrorKind::RangeViolation,
                     "element " + std::to_string(i) + " = " + std::to_string(v) + " outside declared range");
        }
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return channels_; }
    RangeTag range() const noexcept { return range_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const float> data() const noexcept { return data_; }
    float at(int y, int x, int c) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    /// Moves the raster out; the tensor is left empty.
    std::vector<float> release() && { return std::move(data_); }

    bool same_shape(const ImageTensor& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    std::string shape_string() const {
        return std::to_string(height_) + "x" + std::to_string(width_) + "x" + std::to_string(channels_);
    }

    friend bool operator==(const ImageTensor& a, const ImageTensor& b) {
        return a.same_shape(b) && a.range_ == b.range_ && a.data_ == b.data_;
    }

private:
    static std::size_t checked_size(int h, int w, int c) {
        if (h < 1 || w < 1)
            fail(ErrorKind::ShapeMismatch, "image dimensions must be positive");
        if (c != 1 && c != 3)
            fail(ErrorKind::ChannelMismatch, "channels must be 1 or 3, got " + std::to_string(c));
        return static_cast<std::size_t>(h) * w * c;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    RangeTag range_ = RangeTag::Unit;
    std::vector<float> data_;
};

inline void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
    if (!a.same_shape(b))
        fail(ErrorKind::ShapeMismatch, std::string(what) + ": " + a.shape_string() + " vs " + b.shape_string());
}

/// Unit -> signed, v -> 2v - 1.
inline ImageTensor to_signed(const ImageTensor& t) {
    if (t.range() != RangeTag::Unit)
        fail(ErrorKind::RangeViolation, "to_signed expects a unit-range tensor");
    std::vector<float> out(t.size());
    auto in = t.data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp(2.0f * in[i] - 1.0f, -1.0f, 1.0f);
    return {t.height(), t.width(), t.channels(), RangeTag::Signed, std::move(out)};
}

/// Signed -> unit, v -> (v + 1) / 2.
inline ImageTensor to_unit(const ImageTensor& t) {
    if (t.range() != RangeTag::Signed)
        fail(ErrorKind::RangeViolation, "to_unit expects a signed-range tensor");
    std::vector<float> out(t.size());
    auto in = t.data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp((in[i] + 1.0f) * 0.5f, 0.0f, 1.0f);
    return {t.height(), t.width(), t.channels(), RangeTag::Unit, std::move(out)};
}

/// Clamps arbitrary floats into the range and wraps them.
inline ImageTensor make_clamped(int h, int w, int c, RangeTag range, std::vector<float> data) {
    const float lo = range_lo(range), hi = range_hi(range);
    for (float& v : data)
        v = std::isnan(v) ? lo : std::clamp(v, lo, hi);
    return {h, w, c, range, std::move(data)};
}

/// Y = 0.299 R + 0.587 G + 0.114 B.
inline ImageTensor luminance(const ImageTensor& t) {
    if (t.channels() != 3)
        fail(ErrorKind::ChannelMismatch, "luminance needs a 3-channel image, got " + t.shape_string());
    const std::size_t n = static_cast<std::size_t>(t.height()) * t.width();
    std::vector<float> out(n);
    auto in = t.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double y = 0.299 * in[3 * i] + 0.587 * in[3 * i + 1] + 0.114 * in[3 * i + 2];
        out[i] = static_cast<float>(y);
    }
    return make_clamped(t.height(), t.width(), 1, t.range(), std::move(out));
}

enum class ResizeMethod { Nearest, Bilinear, Bicubic };

namespace detail {

// Interpolation taps along one axis: for every output index, the source
// indices (edge-clamped) and weights.
struct AxisTaps {
    int taps = 0;
    std::vector<int> index;
    std::vector<double> weight;
};

inline double cubic_kernel(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x < 1.0)
        return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0)
        return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

inline AxisTaps make_taps(int in, int out, ResizeMethod method) {
    AxisTaps t;
    t.taps = method == ResizeMethod::Nearest ? 1 : method == ResizeMethod::Bilinear ? 2 : 4;
    t.index.resize(static_cast<std::size_t>(out) * t.taps);
    t.weight.resize(t.index.size());
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        // Cell-centre alignment.
        const double src = (o + 0.5) * scale - 0.5;
        int* idx = &t.index[static_cast<std::size_t>(o) * t.taps];
        double* wt = &t.weight[static_cast<std::size_t>(o) * t.taps];
        switch (method) {
        case ResizeMethod::Nearest: {
            // Round half toward the lower index.
            idx[0] = std::clamp(static_cast<int>(std::ceil(src - 0.5)), 0, in - 1);
            wt[0] = 1.0;
            break;
        }
        case ResizeMethod::Bilinear: {
            const double f = std::floor(src);
            const double frac = src - f;
            const int i0 = static_cast<int>(f);
            idx[0] = std::clamp(i0, 0, in - 1);
            idx[1] = std::clamp(i0 + 1, 0, in - 1);
            wt[0] = 1.0 - frac;
            wt[1] = frac;
            break;
        }
        case ResizeMethod::Bicubic: {
            const double f = std::floor(src);
            const double frac = src - f;
            const int i0 = static_cast<int>(f);
            double sum = 0.0;
            for (int k = 0; k < 4; ++k) {
                idx[k] = std::clamp(i0 - 1 + k, 0, in - 1);
                wt[k] = cubic_kernel(frac - (k - 1));
                sum += wt[k];
            }
            for (int k = 0; k < 4; ++k)
                wt[k] /= sum;
            break;
        }
        }
    }
    return t;
}

} // namespace detail

/// Resamples to h x w. Interpolation is written relative to the first tap so
/// constant images are reproduced exactly; results are clamped to the range.
inline ImageTensor resize(const ImageTensor& t, int h, int w, ResizeMethod method) {
    if (h < 1 || w < 1)
        fail(ErrorKind::InvalidArgument, "resize target must be at least 1x1");
    const int C = t.channels(), H = t.height(), W = t.width();
    const auto tx = detail::make_taps(W, w, method);
    const auto ty = detail::make_taps(H, h, method);
    auto in = t.data();

    std::vector<double> rows(static_cast<std::size_t>(H) * w * C);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < C; ++c) {
                const int* idx = &tx.index[static_cast<std::size_t>(x) * tx.taps];
                const double* wt = &tx.weight[static_cast<std::size_t>(x) * tx.taps];
                const double ref = in[(static_cast<std::size_t>(y) * W + idx[0]) * C + c];
                double acc = 0.0;
                for (int k = 1; k < tx.taps; ++k)
                    acc += wt[k] * (in[(static_cast<std::size_t>(y) * W + idx[k]) * C + c] - ref);
                rows[(static_cast<std::size_t>(y) * w + x) * C + c] = ref + acc;
            }

    std::vector<float> out(static_cast<std::size_t>(h) * w * C);
    for (int y = 0; y < h; ++y) {
        const int* idx = &ty.index[static_cast<std::size_t>(y) * ty.taps];
        const double* wt = &ty.weight[static_cast<std::size_t>(y) * ty.taps];
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < C; ++c) {
                const double ref = rows[(static_cast<std::size_t>(idx[0]) * w + x) * C + c];
                double acc = 0.0;
                for (int k = 1; k < ty.taps; ++k)
                    acc += wt[k] * (rows[(static_cast<std::size_t>(idx[k]) * w + x) * C + c] - ref);
                out[(static_cast<std::size_t>(y) * w + x) * C + c] = static_cast<float>(ref + acc);
            }
    }
    return make_clamped(h, w, C, t.range(), std::move(out));
}

/// Copies the window [y0, y0+h) x [x0, x0+w).
inline ImageTensor crop(const ImageTensor& t, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > t.height() || x0 + w > t.width())
        fail(ErrorKind::InvalidArgument, "crop window outside image " + t.shape_string());
    const int C = t.channels();
    std::vector<float> out(static_cast<std::size_t>(h) * w * C);
    auto in = t.data();
    for (int y = 0; y < h; ++y) {
        const auto src = in.begin() + (static_cast<std::ptrdiff_t>(y0 + y) * t.width() + x0) * C;
        std::copy(src, src + static_cast<std::ptrdiff_t>(w) * C, out.begin() + static_cast<std::ptrdiff_t>(y) * w * C);
    }
    return {h, w, C, t.range(), std::move(out)};
}

inline ImageTensor flip_horizontal(const ImageTensor& t) {
    const int C = t.channels(), W = t.width();
    std::vector<float> out(t.size());
    auto in = t.data();
    for (int y = 0; y < t.height(); ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c)
                out[(static_cast<std::size_t>(y) * W + x) * C + c] =
                    in[(static_cast<std::size_t>(y) * W + (W - 1 - x)) * C + c];
    return {t.height(), W, C, t.range(), std::move(out)};
}

} // namespace dehaze

#endif // DEHAZE_IMAGE_HPP
