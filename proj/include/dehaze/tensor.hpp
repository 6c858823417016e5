#ifndef DEHAZE_TENSOR_HPP
#define DEHAZE_TENSOR_HPP

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "dehaze/error.hpp"
#include "dehaze/image.hpp"

namespace dehaze {

/// Dense N x C x H x W activation tensor used inside the networks.
template <typename T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
        : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

    std::size_t size() const noexcept { return data.size(); }
    std::size_t plane_size() const noexcept { return static_cast<std::size_t>(h) * w; }
    std::size_t item_size() const noexcept { return static_cast<std::size_t>(c) * h * w; }

    T* item(int b) noexcept { return data.data() + b * item_size(); }
    const T* item(int b) const noexcept { return data.data() + b * item_size(); }
    T* plane(int b, int ch) noexcept { return item(b) + ch * plane_size(); }
    const T* plane(int b, int ch) const noexcept { return item(b) + ch * plane_size(); }

    T& at(int b, int ch, int y, int x) noexcept { return plane(b, ch)[static_cast<std::size_t>(y) * w + x]; }
    T at(int b, int ch, int y, int x) const noexcept { return plane(b, ch)[static_cast<std::size_t>(y) * w + x]; }

    bool same_shape(const Tensor& o) const noexcept { return n == o.n && c == o.c && h == o.h && w == o.w; }

    std::string shape_string() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (!a.same_shape(b))
        fail(ErrorKind::ShapeMismatch, std::string(what) + ": " + a.shape_string() + " vs " + b.shape_string());
}

/// Channel concatenation [a, b] for tensors with matching N, H, W.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        fail(ErrorKind::ShapeMismatch, "concat: " + a.shape_string() + " vs " + b.shape_string());
    Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
    for (int i = 0; i < a.n; ++i) {
        std::copy(a.item(i), a.item(i) + a.item_size(), out.item(i));
        std::copy(b.item(i), b.item(i) + b.item_size(), out.item(i) + a.item_size());
    }
    return out;
}

/// Channels [c0, c0 + count) of `t`.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& t, int c0, int count) {
    Tensor<T> out(t.n, count, t.h, t.w);
    for (int i = 0; i < t.n; ++i)
        std::copy(t.plane(i, c0), t.plane(i, c0) + count * t.plane_size(), out.item(i));
    return out;
}

/// Adds `src` into channels [c0, c0 + src.c) of `dst`.
template <typename T>
void add_into_channels(Tensor<T>& dst, const Tensor<T>& src, int c0) {
    for (int i = 0; i < src.n; ++i) {
        T* d = dst.plane(i, c0);
        const T* s = src.item(i);
        for (std::size_t k = 0; k < src.item_size(); ++k)
            d[k] += s[k];
    }
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
    for (std::size_t k = 0; k < dst.size(); ++k)
        dst.data[k] += src.data[k];
}

/// Packs HWC images into one NCHW batch.
template <typename T>
Tensor<T> to_batch(const std::vector<const ImageTensor*>& images) {
    if (images.empty())
        fail(ErrorKind::InvalidArgument, "empty batch");
    const ImageTensor& first = *images.front();
    Tensor<T> out(static_cast<int>(images.size()), first.channels(), first.height(), first.width());
    for (int b = 0; b < out.n; ++b) {
        const ImageTensor& im = *images[b];
        require_same_shape(first, im, "batch");
        auto src = im.data();
        for (int ch = 0; ch < out.c; ++ch) {
            T* dst = out.plane(b, ch);
            for (std::size_t p = 0; p < out.plane_size(); ++p)
                dst[p] = static_cast<T>(src[p * out.c + ch]);
        }
    }
    return out;
}

template <typename T>
Tensor<T> to_batch(const ImageTensor& image) {
    return to_batch<T>(std::vector<const ImageTensor*>{&image});
}

/// Item `b` of a batch as an HWC image, clamped into `range`.
template <typename T>
ImageTensor from_batch(const Tensor<T>& t, int b, RangeTag range) {
    std::vector<float> out(t.item_size());
    for (int ch = 0; ch < t.c; ++ch) {
        const T* src = t.plane(b, ch);
        for (std::size_t p = 0; p < t.plane_size(); ++p)
            out[p * t.c + ch] = static_cast<float>(src[p]);
    }
    return make_clamped(t.h, t.w, t.c, range, std::move(out));
}

} // namespace dehaze

#endif // DEHAZE_TENSOR_HPP
