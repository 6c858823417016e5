// Slow reference implementations used only by the tests. They share no code
// with the library beyond the ImageTensor container.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dehaze/image.hpp"

namespace oracle {

using dehaze::ImageTensor;
using cd = std::complex<double>;

// ---------------------------------------------------------------- PSNR ----

inline double psnr(const ImageTensor& x, const ImageTensor& y) {
    double se = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < x.height(); ++r)
        for (int c = 0; c < x.width(); ++c)
            for (int k = 0; k < x.channels(); ++k) {
                const double d = static_cast<double>(x.at(r, c, k)) - y.at(r, c, k);
                se += d * d;
                ++n;
            }
    const double mse = se / static_cast<double>(n);
    if (mse < 1e-10)
        return 100.0;
    return -10.0 * std::log10(mse);
}

// ---------------------------------------------------------------- SSIM ----

/// Direct per-window evaluation with an explicit 2-D Gaussian.
inline double ssim(const ImageTensor& x, const ImageTensor& y) {
    const int win = 11;
    const double sigma = 1.5;
    std::vector<double> w(win * win);
    double wsum = 0.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double di = i - 5, dj = j - 5;
            w[i * win + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
            wsum += w[i * win + j];
        }
    for (double& v : w)
        v /= wsum;
    const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    double total = 0.0;
    std::size_t count = 0;
    for (int k = 0; k < x.channels(); ++k)
        for (int r = 0; r + win <= x.height(); ++r)
            for (int c = 0; c + win <= x.width(); ++c) {
                double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        const double a = x.at(r + i, c + j, k), b = y.at(r + i, c + j, k);
                        const double g = w[i * win + j];
                        mx += g * a;
                        my += g * b;
                        xx += g * a * a;
                        yy += g * b * b;
                        xy += g * a * b;
                    }
                const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
                total += ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
                ++count;
            }
    return total / static_cast<double>(count);
}

// ---------------------------------------------------------------- FSIM ----

/// O(n^2) 1-D DFT; sign = -1 forward, +1 inverse (unnormalised).
inline std::vector<cd> dft1(const std::vector<cd>& in, int sign) {
    const std::size_t n = in.size();
    std::vector<cd> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        cd s = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double a = sign * 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
            s += in[t] * cd(std::cos(a), std::sin(a));
        }
        out[k] = s;
    }
    return out;
}

/// Row-major rows x cols 2-D DFT; the inverse is divided by rows*cols.
inline std::vector<cd> dft2(std::vector<cd> a, int rows, int cols, bool inverse) {
    const int sign = inverse ? 1 : -1;
    for (int r = 0; r < rows; ++r) {
        std::vector<cd> row(a.begin() + r * cols, a.begin() + (r + 1) * cols);
        row = dft1(row, sign);
        std::copy(row.begin(), row.end(), a.begin() + r * cols);
    }
    for (int c = 0; c < cols; ++c) {
        std::vector<cd> col(rows);
        for (int r = 0; r < rows; ++r)
            col[r] = a[r * cols + c];
        col = dft1(col, sign);
        for (int r = 0; r < rows; ++r)
            a[r * cols + c] = col[r];
    }
    if (inverse)
        for (auto& v : a)
            v /= static_cast<double>(rows) * cols;
    return a;
}

/// MATLAB-style frequency ranges followed by ifftshift, as in phasecong2.
inline std::vector<double> centred_range(int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i)
        v[i] = (n % 2) ? (i - (n - 1) / 2.0) / (n - 1) : (i - n / 2.0) / n;
    return v;
}

inline std::vector<double> ifftshift(const std::vector<double>& a, int rows, int cols) {
    std::vector<double> out(a.size());
    const int sr = rows / 2, sc = cols / 2; // ifftshift moves element floor(n/2) to 0
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out[r * cols + c] = a[((r + sr) % rows) * cols + (c + sc) % cols];
    return out;
}

inline double matlab_median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// phasecong2 as distributed with FSIM (Kovesi, nscale 4, norient 4).
inline std::vector<double> phasecong(const std::vector<double>& im, int rows, int cols) {
    const int nscale = 4, norient = 4;
    const double minWaveLength = 6, mult = 2, sigmaOnf = 0.55, dThetaOnSigma = 1.2, k = 2.0, epsilon = 1e-4;
    const double thetaSigma = std::numbers::pi / norient / dThetaOnSigma;
    const std::size_t N = static_cast<std::size_t>(rows) * cols;

    std::vector<cd> imfft(N);
    for (std::size_t i = 0; i < N; ++i)
        imfft[i] = im[i];
    imfft = dft2(imfft, rows, cols, false);

    const auto xr = centred_range(cols), yr = centred_range(rows);
    std::vector<double> radius(N), theta(N), lpr(N);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            radius[r * cols + c] = std::sqrt(xr[c] * xr[c] + yr[r] * yr[r]);
            theta[r * cols + c] = std::atan2(-yr[r], xr[c]);
        }
    for (std::size_t i = 0; i < N; ++i)
        lpr[i] = 1.0 / (1.0 + std::pow(radius[i] / 0.45, 2 * 15));
    radius = ifftshift(radius, rows, cols);
    theta = ifftshift(theta, rows, cols);
    const auto lp = ifftshift(lpr, rows, cols);
    radius[0] = 1.0;

    std::vector<std::vector<double>> logGabor(nscale, std::vector<double>(N));
    for (int s = 0; s < nscale; ++s) {
        const double fo = 1.0 / (minWaveLength * std::pow(mult, s));
        const double den = 2.0 * std::log(sigmaOnf) * std::log(sigmaOnf);
        for (std::size_t i = 0; i < N; ++i) {
            const double l = std::log(radius[i] / fo);
            logGabor[s][i] = std::exp(-(l * l) / den) * lp[i];
        }
        logGabor[s][0] = 0.0;
    }

    std::vector<double> energyAll(N, 0.0), anAll(N, 0.0);
    for (int o = 0; o < norient; ++o) {
        const double angl = o * std::numbers::pi / norient;
        std::vector<double> spread(N);
        for (std::size_t i = 0; i < N; ++i) {
            const double ds = std::sin(theta[i]) * std::cos(angl) - std::cos(theta[i]) * std::sin(angl);
            const double dc = std::cos(theta[i]) * std::cos(angl) + std::sin(theta[i]) * std::sin(angl);
            const double dt = std::abs(std::atan2(ds, dc));
            spread[i] = std::exp(-(dt * dt) / (2 * thetaSigma * thetaSigma));
        }
        std::vector<double> sumE(N, 0.0), sumO(N, 0.0), sumAn(N, 0.0), energy(N, 0.0);
        std::vector<std::vector<cd>> eo(nscale);
        std::vector<std::vector<double>> ifftFilt(nscale);
        double EM_n = 0.0;
        for (int s = 0; s < nscale; ++s) {
            std::vector<cd> filt(N), prod(N);
            for (std::size_t i = 0; i < N; ++i) {
                const double f = logGabor[s][i] * spread[i];
                filt[i] = f;
                prod[i] = imfft[i] * f;
                if (s == 0)
                    EM_n += f * f;
            }
            const auto fi = dft2(filt, rows, cols, true);
            ifftFilt[s].resize(N);
            for (std::size_t i = 0; i < N; ++i)
                ifftFilt[s][i] = fi[i].real() * std::sqrt(static_cast<double>(N));
            eo[s] = dft2(prod, rows, cols, true);
            for (std::size_t i = 0; i < N; ++i) {
                sumAn[i] += std::abs(eo[s][i]);
                sumE[i] += eo[s][i].real();
                sumO[i] += eo[s][i].imag();
            }
        }
        for (std::size_t i = 0; i < N; ++i) {
            const double xe = std::sqrt(sumE[i] * sumE[i] + sumO[i] * sumO[i]) + epsilon;
            const double me = sumE[i] / xe, mo = sumO[i] / xe;
            for (int s = 0; s < nscale; ++s) {
                const double E = eo[s][i].real(), O = eo[s][i].imag();
                energy[i] += E * me + O * mo - std::abs(E * mo - O * me);
            }
        }
        std::vector<double> e2(N);
        for (std::size_t i = 0; i < N; ++i)
            e2[i] = std::norm(eo[0][i]);
        const double meanE2n = -matlab_median(e2) / std::log(0.5);
        const double noisePower = meanE2n / EM_n;
        double sumAn2 = 0.0, sumAiAj = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            for (int s = 0; s < nscale; ++s)
                sumAn2 += ifftFilt[s][i] * ifftFilt[s][i];
            for (int si = 0; si < nscale - 1; ++si)
                for (int sj = si + 1; sj < nscale; ++sj)
                    sumAiAj += ifftFilt[si][i] * ifftFilt[sj][i];
        }
        const double estNoiseEnergy2 = 2 * noisePower * sumAn2 + 4 * noisePower * sumAiAj;
        const double tau = std::sqrt(estNoiseEnergy2 / 2);
        const double estNoiseEnergy = tau * std::sqrt(std::numbers::pi / 2);
        const double estNoiseSigma = std::sqrt((2 - std::numbers::pi / 2) * tau * tau);
        const double T = (estNoiseEnergy + k * estNoiseSigma) / 1.7;
        for (std::size_t i = 0; i < N; ++i) {
            energyAll[i] += std::max(energy[i] - T, 0.0);
            anAll[i] += sumAn[i];
        }
    }
    std::vector<double> pc(N);
    for (std::size_t i = 0; i < N; ++i)
        pc[i] = energyAll[i] / anAll[i];
    return pc;
}

/// conv2(a, k, 'same') with zero padding for a 3x3 kernel.
inline std::vector<double> conv2_same3(const std::vector<double>& a, int rows, int cols, const double k[3][3]) {
    std::vector<double> out(a.size(), 0.0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double s = 0.0;
            for (int i = -1; i <= 1; ++i)
                for (int j = -1; j <= 1; ++j) {
                    const int rr = r - i, cc = c - j; // true convolution
                    if (rr >= 0 && rr < rows && cc >= 0 && cc < cols)
                        s += k[i + 1][j + 1] * a[rr * cols + cc];
                }
            out[r * cols + c] = s;
        }
    return out;
}

/// FSIM on the 0..255 luma of images whose short side is below 384 (no downsampling).
inline double fsim(const ImageTensor& x, const ImageTensor& y) {
    const int rows = x.height(), cols = x.width();
    auto luma = [&](const ImageTensor& t) {
        std::vector<double> v(static_cast<std::size_t>(rows) * cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                v[r * cols + c] = t.channels() == 3 ? 255.0 * (0.299 * t.at(r, c, 0) + 0.587 * t.at(r, c, 1) +
                                                               0.114 * t.at(r, c, 2))
                                                    : 255.0 * t.at(r, c, 0);
        return v;
    };
    const auto y1 = luma(x), y2 = luma(y);
    const auto pc1 = phasecong(y1, rows, cols), pc2 = phasecong(y2, rows, cols);
    const double dx[3][3] = {{3 / 16.0, 0, -3 / 16.0}, {10 / 16.0, 0, -10 / 16.0}, {3 / 16.0, 0, -3 / 16.0}};
    const double dy[3][3] = {{3 / 16.0, 10 / 16.0, 3 / 16.0}, {0, 0, 0}, {-3 / 16.0, -10 / 16.0, -3 / 16.0}};
    const auto gx1 = conv2_same3(y1, rows, cols, dx), gy1 = conv2_same3(y1, rows, cols, dy);
    const auto gx2 = conv2_same3(y2, rows, cols, dx), gy2 = conv2_same3(y2, rows, cols, dy);
    const double T1 = 0.85, T2 = 160;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < y1.size(); ++i) {
        const double g1 = std::hypot(gx1[i], gy1[i]), g2 = std::hypot(gx2[i], gy2[i]);
        const double spc = (2 * pc1[i] * pc2[i] + T1) / (pc1[i] * pc1[i] + pc2[i] * pc2[i] + T1);
        const double sg = (2 * g1 * g2 + T2) / (g1 * g1 + g2 * g2 + T2);
        const double pcm = std::max(pc1[i], pc2[i]);
        num += spc * sg * pcm;
        den += pcm;
    }
    return num / den;
}

// ---------------------------------------------------------------- Adam ----

struct AdamScalar {
    double m = 0.0, v = 0.0;
};

/// One textbook Adam step on a flat parameter vector; t is 1-based.
inline void adam_step(std::vector<double>& p, const std::vector<double>& g, std::vector<AdamScalar>& s, long t,
                      double lr, double b1, double b2, double eps) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        s[i].m = b1 * s[i].m + (1 - b1) * g[i];
        s[i].v = b2 * s[i].v + (1 - b2) * g[i] * g[i];
        const double mh = s[i].m / (1 - std::pow(b1, t));
        const double vh = s[i].v / (1 - std::pow(b2, t));
        p[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
}

// -------------------------------------------------- shape enumerators ----

inline long long conv_params(long long cin, long long cout, long long kh, long long kw) {
    return cin * cout * kh * kw + cout;
}

/// Learnable parameters of the generator, tallied layer by layer from the
/// written topology.
inline long long generator_param_count(int c, int blocks) {
    long long n = 0;
    n += conv_params(3, c, 7, 7);         // enc1
    n += conv_params(c, 2 * c, 3, 3);     // enc2
    n += conv_params(2 * c, 4 * c, 3, 3); // enc3
    for (int b = 0; b < blocks; ++b) {
        n += 4 * conv_params(4 * c, c, 1, 1); // four 1x1 reductions
        n += conv_params(c, c, 1, 3);
        n += conv_params(c, c, 3, 1);
        n += conv_params(c, c, 3, 3);
    }
    n += conv_params(4 * c * (blocks + 1), 4 * c, 1, 1); // fusion
    n += conv_params(4 * c, 2 * c, 3, 3);                // dec3 transposed
    n += conv_params(4 * c, 2 * c, 1, 1);                // dec3 merge
    n += conv_params(2 * c, c, 3, 3);                    // dec2 transposed
    n += conv_params(2 * c, c, 1, 1);                    // dec2 merge
    n += conv_params(c, 3, 7, 7);                        // dec1
    return n;
}

/// Trainable discriminator parameters (convs + batch-norm scale/shift).
inline long long discriminator_param_count(int c) {
    const int widths[6] = {c, 2 * c, 4 * c, 8 * c, 8 * c, 1};
    long long n = 0;
    int cin = 6;
    for (int i = 0; i < 6; ++i) {
        n += conv_params(cin, widths[i], 4, 4);
        if (i < 5)
            n += 2LL * widths[i];
        cin = widths[i];
    }
    return n;
}

/// floor((n + 2p - k)/s) + 1 applied over the six discriminator layers.
inline int discriminator_out_size(int n) {
    const int strides[6] = {2, 2, 2, 2, 1, 1};
    for (int s : strides)
        n = (n + 2 * 1 - 4) / s + 1;
    return n;
}

// ------------------------------------------------ finite differences ----

/// Central difference of f at x[i].
inline double central_difference(const std::function<double()>& f, double& xi, double eps) {
    const double keep = xi;
    xi = keep + eps;
    const double fp = f();
    xi = keep - eps;
    const double fm = f();
    xi = keep;
    return (fp - fm) / (2 * eps);
}

/// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// ------------------------------------------------------- generators ----

inline ImageTensor random_image(int h, int w, int c, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> v(static_cast<std::size_t>(h) * w * c);
    for (auto& x : v)
        x = u(g);
    return {h, w, c, dehaze::RangeTag::Unit, std::move(v)};
}

/// A smooth image plus mild noise, so phase congruency has structure to find.
inline ImageTensor random_textured_image(int h, int w, std::uint64_t seed, double noise = 0.05) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double fx = 1 + 5 * u(g), fy = 1 + 5 * u(g), ph = 6.28 * u(g);
    std::vector<float> v(static_cast<std::size_t>(h) * w * 3);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int k = 0; k < 3; ++k) {
                const double base = 0.5 + 0.3 * std::sin(fx * c / w * 6.28 + ph + k) * std::cos(fy * r / h * 6.28);
                const double edge = (c > w / 2 + k) ? 0.15 : 0.0;
                v[(static_cast<std::size_t>(r) * w + c) * 3 + k] =
                    static_cast<float>(std::clamp(base + edge + noise * (u(g) - 0.5), 0.0, 1.0));
            }
    return {h, w, 3, dehaze::RangeTag::Unit, std::move(v)};
}

} // namespace oracle
