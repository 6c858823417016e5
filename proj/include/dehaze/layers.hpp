#ifndef DEHAZE_LAYERS_HPP
#define DEHAZE_LAYERS_HPP

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "dehaze/error.hpp"
#include "dehaze/tensor.hpp"

namespace dehaze::nn {

/// Kernel, stride and symmetric zero padding of a 2-D convolution.
struct ConvGeometry {
    int kh = 1, kw = 1;
    int sh = 1, sw = 1;
    int ph = 0, pw = 0;

    /// floor((n + 2p - k) / s) + 1
    int out_h(int in) const { return (in + 2 * ph - kh) / sh + 1; }
    int out_w(int in) const { return (in + 2 * pw - kw) / sw + 1; }
    int taps() const { return kh * kw; }

    static ConvGeometry square(int k, int stride, int pad) { return {k, k, stride, stride, pad, pad}; }
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Upper bound on the im2col scratch buffer, in elements.
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

inline int rows_per_chunk(int k_rows, int out_w, int out_h) {
    const std::size_t per_row = static_cast<std::size_t>(k_rows) * out_w;
    return std::clamp(static_cast<int>(kColumnBudget / std::max<std::size_t>(per_row, 1)), 1, out_h);
}

// Gathers input patches for output rows [row0, row0 + rows) into a
// (C * kh * kw) x (rows * out_w) matrix.
template <typename T>
void im2col(const T* x, int C, int H, int W, const ConvGeometry& g, int out_w, int row0, int rows, T* col) {
    const std::size_t P = static_cast<std::size_t>(rows) * out_w;
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < g.kh; ++ky)
            for (int kx = 0; kx < g.kw; ++kx) {
                T* dst = col + (static_cast<std::size_t>(c * g.kh + ky) * g.kw + kx) * P;
                const T* plane = x + static_cast<std::size_t>(c) * H * W;
                for (int r = 0; r < rows; ++r) {
                    const int iy = (row0 + r) * g.sh - g.ph + ky;
                    T* d = dst + static_cast<std::size_t>(r) * out_w;
                    if (iy < 0 || iy >= H) {
                        std::fill(d, d + out_w, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(iy) * W;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * g.sw - g.pw + kx;
                        d[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
                    }
                }
            }
}

// Adjoint of im2col: scatters-adds columns back into the C x H x W image.
template <typename T>
void col2im(const T* col, int C, int H, int W, const ConvGeometry& g, int out_w, int row0, int rows, T* x) {
    const std::size_t P = static_cast<std::size_t>(rows) * out_w;
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < g.kh; ++ky)
            for (int kx = 0; kx < g.kw; ++kx) {
                const T* src = col + (static_cast<std::size_t>(c * g.kh + ky) * g.kw + kx) * P;
                T* plane = x + static_cast<std::size_t>(c) * H * W;
                for (int r = 0; r < rows; ++r) {
                    const int iy = (row0 + r) * g.sh - g.ph + ky;
                    if (iy < 0 || iy >= H)
                        continue;
                    const T* s = src + static_cast<std::size_t>(r) * out_w;
                    T* dst = plane + static_cast<std::size_t>(iy) * W;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * g.sw - g.pw + kx;
                        if (ix >= 0 && ix < W)
                            dst[ix] += s[ox];
                    }
                }
            }
}

inline bool is_pointwise(const ConvGeometry& g) {
    return g.kh == 1 && g.kw == 1 && g.sh == 1 && g.sw == 1 && g.ph == 0 && g.pw == 0;
}

} // namespace detail

/// Cross-correlation, weight layout [Cout, Cin, kh, kw].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const T* weight, const T* bias, int cout, const ConvGeometry& g) {
    using namespace detail;
    const int Ho = g.out_h(x.h), Wo = g.out_w(x.w);
    if (Ho < 1 || Wo < 1)
        fail(ErrorKind::ShapeMismatch, "convolution input " + x.shape_string() + " too small for kernel");
    Tensor<T> y(x.n, cout, Ho, Wo);
    const int K = x.c * g.taps();
    const std::ptrdiff_t HWo = static_cast<std::ptrdiff_t>(Ho) * Wo;
    ConstMatMap<T> wm(weight, cout, K, Eigen::OuterStride<>(K));

    for (int b = 0; b < x.n; ++b) {
        if (is_pointwise(g)) {
            ConstMatMap<T> xm(x.item(b), x.c, HWo, Eigen::OuterStride<>(HWo));
            MatMap<T> ym(y.item(b), cout, HWo, Eigen::OuterStride<>(HWo));
            ym.noalias() = wm * xm;
        } else {
            const int chunk = rows_per_chunk(K, Wo, Ho);
            std::vector<T> col(static_cast<std::size_t>(K) * chunk * Wo);
            for (int r0 = 0; r0 < Ho; r0 += chunk) {
                const int rows = std::min(chunk, Ho - r0);
                const std::ptrdiff_t P = static_cast<std::ptrdiff_t>(rows) * Wo;
                im2col(x.item(b), x.c, x.h, x.w, g, Wo, r0, rows, col.data());
                ConstMatMap<T> cm(col.data(), K, P, Eigen::OuterStride<>(P));
                MatMap<T> ym(y.item(b) + static_cast<std::ptrdiff_t>(r0) * Wo, cout, P, Eigen::OuterStride<>(HWo));
                ym.noalias() = wm * cm;
            }
        }
        if (bias)
            for (int o = 0; o < cout; ++o) {
                T* p = y.plane(b, o);
                for (std::ptrdiff_t i = 0; i < HWo; ++i)
                    p[i] += bias[o];
            }
    }
    return y;
}

/// Gradients of conv2d_forward. Parameter gradients accumulate into
/// `dweight` / `dbias`; `dx` (if given) is overwritten.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const T* weight, int cout, const ConvGeometry& g, const Tensor<T>& dy,
                     Tensor<T>* dx, T* dweight, T* dbias) {
    using namespace detail;
    const int Ho = dy.h, Wo = dy.w;
    const int K = x.c * g.taps();
    const std::ptrdiff_t HWo = static_cast<std::ptrdiff_t>(Ho) * Wo;
    ConstMatMap<T> wm(weight, cout, K, Eigen::OuterStride<>(K));
    if (dx)
        *dx = Tensor<T>(x.n, x.c, x.h, x.w);

    for (int b = 0; b < x.n; ++b) {
        if (dbias)
            for (int o = 0; o < cout; ++o) {
                const T* p = dy.plane(b, o);
                T s(0);
                for (std::ptrdiff_t i = 0; i < HWo; ++i)
                    s += p[i];
                dbias[o] += s;
            }
        if (is_pointwise(g)) {
            ConstMatMap<T> xm(x.item(b), x.c, HWo, Eigen::OuterStride<>(HWo));
            ConstMatMap<T> dym(dy.item(b), cout, HWo, Eigen::OuterStride<>(HWo));
            if (dweight) {
                MatMap<T> dwm(dweight, cout, K, Eigen::OuterStride<>(K));
                dwm.noalias() += dym * xm.transpose();
            }
            if (dx) {
                MatMap<T> dxm(dx->item(b), x.c, HWo, Eigen::OuterStride<>(HWo));
                dxm.noalias() = wm.transpose() * dym;
            }
            continue;
        }
        const int chunk = rows_per_chunk(K, Wo, Ho);
        std::vector<T> col(static_cast<std::size_t>(K) * chunk * Wo);
        for (int r0 = 0; r0 < Ho; r0 += chunk) {
            const int rows = std::min(chunk, Ho - r0);
            const std::ptrdiff_t P = static_cast<std::ptrdiff_t>(rows) * Wo;
            ConstMatMap<T> dym(dy.item(b) + static_cast<std::ptrdiff_t>(r0) * Wo, cout, P, Eigen::OuterStride<>(HWo));
            if (dweight) {
                im2col(x.item(b), x.c, x.h, x.w, g, Wo, r0, rows, col.data());
                ConstMatMap<T> cm(col.data(), K, P, Eigen::OuterStride<>(P));
                MatMap<T> dwm(dweight, cout, K, Eigen::OuterStride<>(K));
                dwm.noalias() += dym * cm.transpose();
            }
            if (dx) {
                MatMap<T> cm(col.data(), K, P, Eigen::OuterStride<>(P));
                cm.noalias() = wm.transpose() * dym;
                col2im(col.data(), x.c, x.h, x.w, g, Wo, r0, rows, dx->item(b));
            }
        }
    }
}

/// Transposed convolution (adjoint of conv2d), weight layout [Cin, Cout, kh, kw].
/// Output size (in - 1) * s - 2p + k + output_padding, given explicitly.
template <typename T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, const T* weight, const T* bias, int cout,
                                   const ConvGeometry& g, int out_h, int out_w) {
    using namespace detail;
    if (g.out_h(out_h) != x.h || g.out_w(out_w) != x.w)
        fail(ErrorKind::ShapeMismatch, "transposed convolution output size inconsistent with input " + x.shape_string());
    Tensor<T> y(x.n, cout, out_h, out_w);
    const int K = cout * g.taps();
    const std::ptrdiff_t HWi = static_cast<std::ptrdiff_t>(x.h) * x.w;
    ConstMatMap<T> wm(weight, x.c, K, Eigen::OuterStride<>(K));
    const int chunk = rows_per_chunk(K, x.w, x.h);
    std::vector<T> col(static_cast<std::size_t>(K) * chunk * x.w);

    for (int b = 0; b < x.n; ++b) {
        for (int r0 = 0; r0 < x.h; r0 += chunk) {
            const int rows = std::min(chunk, x.h - r0);
            const std::ptrdiff_t P = static_cast<std::ptrdiff_t>(rows) * x.w;
            ConstMatMap<T> xm(x.item(b) + static_cast<std::ptrdiff_t>(r0) * x.w, x.c, P, Eigen::OuterStride<>(HWi));
            MatMap<T> cm(col.data(), K, P, Eigen::OuterStride<>(P));
            cm.noalias() = wm.transpose() * xm;
            col2im(col.data(), cout, out_h, out_w, g, x.w, r0, rows, y.item(b));
        }
        if (bias)
            for (int o = 0; o < cout; ++o) {
                T* p = y.plane(b, o);
                for (std::size_t i = 0; i < y.plane_size(); ++i)
                    p[i] += bias[o];
            }
    }
    return y;
}

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const T* weight, int cout, const ConvGeometry& g,
                               const Tensor<T>& dy, Tensor<T>* dx, T* dweight, T* dbias) {
    using namespace detail;
    const int K = cout * g.taps();
    const std::ptrdiff_t HWi = static_cast<std::ptrdiff_t>(x.h) * x.w;
    ConstMatMap<T> wm(weight, x.c, K, Eigen::OuterStride<>(K));
    if (dx)
        *dx = Tensor<T>(x.n, x.c, x.h, x.w);
    const int chunk = rows_per_chunk(K, x.w, x.h);
    std::vector<T> col(static_cast<std::size_t>(K) * chunk * x.w);

    for (int b = 0; b < x.n; ++b) {
        if (dbias)
            for (int o = 0; o < cout; ++o) {
                const T* p = dy.plane(b, o);
                T s(0);
                for (std::size_t i = 0; i < dy.plane_size(); ++i)
                    s += p[i];
                dbias[o] += s;
            }
        for (int r0 = 0; r0 < x.h; r0 += chunk) {
            const int rows = std::min(chunk, x.h - r0);
            const std::ptrdiff_t P = static_cast<std::ptrdiff_t>(rows) * x.w;
            im2col(dy.item(b), cout, dy.h, dy.w, g, x.w, r0, rows, col.data());
            ConstMatMap<T> cm(col.data(), K, P, Eigen::OuterStride<>(P));
            if (dweight) {
                ConstMatMap<T> xm(x.item(b) + static_cast<std::ptrdiff_t>(r0) * x.w, x.c, P, Eigen::OuterStride<>(HWi));
                MatMap<T> dwm(dweight, x.c, K, Eigen::OuterStride<>(K));
                dwm.noalias() += xm * cm.transpose();
            }
            if (dx) {
                MatMap<T> dxm(dx->item(b) + static_cast<std::ptrdiff_t>(r0) * x.w, x.c, P, Eigen::OuterStride<>(HWi));
                dxm.noalias() = wm * cm;
            }
        }
    }
}

// Activations. Backward passes take the forward *output*.

template <typename T>
void relu_inplace(Tensor<T>& t) {
    for (T& v : t.data)
        v = v > T(0) ? v : T(0);
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& out, Tensor<T> dy) {
    for (std::size_t i = 0; i < dy.size(); ++i)
        if (!(out.data[i] > T(0)))
            dy.data[i] = T(0);
    return dy;
}

template <typename T>
void leaky_relu_inplace(Tensor<T>& t, T slope) {
    for (T& v : t.data)
        v = v > T(0) ? v : v * slope;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& out, Tensor<T> dy, T slope) {
    for (std::size_t i = 0; i < dy.size(); ++i)
        if (!(out.data[i] > T(0)))
            dy.data[i] *= slope;
    return dy;
}

template <typename T>
void tanh_inplace(Tensor<T>& t) {
    for (T& v : t.data)
        v = std::tanh(v);
}

template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& out, Tensor<T> dy) {
    for (std::size_t i = 0; i < dy.size(); ++i)
        dy.data[i] *= T(1) - out.data[i] * out.data[i];
    return dy;
}

/// Per-channel batch normalisation state kept for the backward pass.
template <typename T>
struct BatchNormCache {
    bool batch_stats = true;
    std::vector<T> invstd;
    Tensor<T> xhat;
};

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;

/// Normalises with batch statistics (training) or running statistics
/// (evaluation). In training mode running statistics are updated when
/// `update_running` is set, using the unbiased variance.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const T* gamma, const T* beta, T* running_mean, T* running_var,
                            bool training, bool update_running, BatchNormCache<T>& cache) {
    Tensor<T> y(x.n, x.c, x.h, x.w);
    cache.batch_stats = training;
    cache.invstd.assign(x.c, T(0));
    cache.xhat = Tensor<T>(x.n, x.c, x.h, x.w);
    const std::size_t M = static_cast<std::size_t>(x.n) * x.plane_size();
    for (int ch = 0; ch < x.c; ++ch) {
        double mean, var;
        if (training) {
            double s = 0.0;
            for (int b = 0; b < x.n; ++b) {
                const T* p = x.plane(b, ch);
                for (std::size_t i = 0; i < x.plane_size(); ++i)
                    s += p[i];
            }
            mean = s / static_cast<double>(M);
            double ss = 0.0;
            for (int b = 0; b < x.n; ++b) {
                const T* p = x.plane(b, ch);
                for (std::size_t i = 0; i < x.plane_size(); ++i) {
                    const double d = p[i] - mean;
                    ss += d * d;
                }
            }
            var = ss / static_cast<double>(M);
            if (update_running) {
                const double unbiased = M > 1 ? ss / static_cast<double>(M - 1) : var;
                running_mean[ch] = static_cast<T>((1.0 - kBatchNormMomentum) * running_mean[ch] + kBatchNormMomentum * mean);
                running_var[ch] = static_cast<T>((1.0 - kBatchNormMomentum) * running_var[ch] + kBatchNormMomentum * unbiased);
            }
        } else {
            mean = running_mean[ch];
            var = running_var[ch];
        }
        const double invstd = 1.0 / std::sqrt(var + kBatchNormEps);
        cache.invstd[ch] = static_cast<T>(invstd);
        for (int b = 0; b < x.n; ++b) {
            const T* p = x.plane(b, ch);
            T* xh = cache.xhat.plane(b, ch);
            T* q = y.plane(b, ch);
            for (std::size_t i = 0; i < x.plane_size(); ++i) {
                xh[i] = static_cast<T>((p[i] - mean) * invstd);
                q[i] = gamma[ch] * xh[i] + beta[ch];
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> batchnorm_backward(const BatchNormCache<T>& cache, const T* gamma, const Tensor<T>& dy, T* dgamma,
                             T* dbeta) {
    const Tensor<T>& xh = cache.xhat;
    Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
    const double M = static_cast<double>(dy.n) * static_cast<double>(dy.plane_size());
    for (int ch = 0; ch < dy.c; ++ch) {
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (int b = 0; b < dy.n; ++b) {
            const T* g = dy.plane(b, ch);
            const T* h = xh.plane(b, ch);
            for (std::size_t i = 0; i < dy.plane_size(); ++i) {
                sum_dy += g[i];
                sum_dy_xh += static_cast<double>(g[i]) * h[i];
            }
        }
        if (dgamma)
            dgamma[ch] += static_cast<T>(sum_dy_xh);
        if (dbeta)
            dbeta[ch] += static_cast<T>(sum_dy);
        const double scale = static_cast<double>(gamma[ch]) * cache.invstd[ch];
        for (int b = 0; b < dy.n; ++b) {
            const T* g = dy.plane(b, ch);
            const T* h = xh.plane(b, ch);
            T* d = dx.plane(b, ch);
            for (std::size_t i = 0; i < dy.plane_size(); ++i) {
                if (cache.batch_stats)
                    d[i] = static_cast<T>(scale * (g[i] - sum_dy / M - h[i] * sum_dy_xh / M));
                else
                    d[i] = static_cast<T>(scale * g[i]);
            }
        }
    }
    return dx;
}

} // namespace dehaze::nn

#endif // DEHAZE_LAYERS_HPP
