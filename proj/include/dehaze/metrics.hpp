#ifndef DEHAZE_METRICS_HPP
#define DEHAZE_METRICS_HPP

#include <fftw3.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "dehaze/error.hpp"
#include "dehaze/image.hpp"
#include "dehaze/png_io.hpp"

namespace dehaze {

/// PSNR reported for (near-)identical images instead of +inf.
constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) on unit-range images; kPsnrCap when MSE < 1e-10.
inline double psnr(const ImageTensor& x, const ImageTensor& y) {
    require_same_shape(x, y, "psnr");
    auto a = x.data(), b = y.data();
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.size());
    if (mse < 1e-10)
        return kPsnrCap;
    return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline std::vector<double> gaussian_window_1d(int size, double sigma) {
    std::vector<double> g(size);
    double sum = 0.0;
    const double c = (size - 1) / 2.0;
    for (int i = 0; i < size; ++i) {
        g[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
        sum += g[i];
    }
    for (double& v : g)
        v /= sum;
    return g;
}

// 'valid' separable filtering of an H x W plane.
inline std::vector<double> filter_valid(const std::vector<double>& img, int H, int W, const std::vector<double>& k) {
    const int K = static_cast<int>(k.size());
    const int Wo = W - K + 1, Ho = H - K + 1;
    std::vector<double> tmp(static_cast<std::size_t>(H) * Wo);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < Wo; ++x) {
            double s = 0.0;
            for (int j = 0; j < K; ++j)
                s += k[j] * img[static_cast<std::size_t>(y) * W + x + j];
            tmp[static_cast<std::size_t>(y) * Wo + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(Ho) * Wo);
    for (int y = 0; y < Ho; ++y)
        for (int x = 0; x < Wo; ++x) {
            double s = 0.0;
            for (int j = 0; j < K; ++j)
                s += k[j] * tmp[static_cast<std::size_t>(y + j) * Wo + x];
            out[static_cast<std::size_t>(y) * Wo + x] = s;
        }
    return out;
}

inline std::vector<double> channel_plane(const ImageTensor& t, int c, double scale = 1.0) {
    std::vector<double> p(static_cast<std::size_t>(t.height()) * t.width());
    auto d = t.data();
    for (std::size_t i = 0; i < p.size(); ++i)
        p[i] = scale * d[i * t.channels() + c];
    return p;
}

} // namespace detail

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Mean SSIM over the valid sliding-window map, computed per channel and
/// averaged. Gaussian window 11x11, sigma 1.5, C1 = (0.01)^2, C2 = (0.03)^2.
inline double ssim(const ImageTensor& x, const ImageTensor& y, const SsimOptions& opt = {}) {
    require_same_shape(x, y, "ssim");
    if (x.height() < opt.window || x.width() < opt.window)
        fail(ErrorKind::ImageTooSmall, "ssim needs at least " + std::to_string(opt.window) + "x" +
                                           std::to_string(opt.window) + ", got " + x.shape_string());
    const double C1 = opt.k1 * opt.k1, C2 = opt.k2 * opt.k2;
    const auto g = detail::gaussian_window_1d(opt.window, opt.sigma);
    const int H = x.height(), W = x.width();
    double total = 0.0;
    for (int c = 0; c < x.channels(); ++c) {
        const auto a = detail::channel_plane(x, c), b = detail::channel_plane(y, c);
        std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            aa[i] = a[i] * a[i];
            bb[i] = b[i] * b[i];
            ab[i] = a[i] * b[i];
        }
        const auto mu_a = detail::filter_valid(a, H, W, g);
        const auto mu_b = detail::filter_valid(b, H, W, g);
        const auto e_aa = detail::filter_valid(aa, H, W, g);
        const auto e_bb = detail::filter_valid(bb, H, W, g);
        const auto e_ab = detail::filter_valid(ab, H, W, g);
        double s = 0.0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double va = e_aa[i] - mu_a[i] * mu_a[i];
            const double vb = e_bb[i] - mu_b[i] * mu_b[i];
            const double cov = e_ab[i] - mu_a[i] * mu_b[i];
            s += ((2.0 * mu_a[i] * mu_b[i] + C1) * (2.0 * cov + C2)) /
                 ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + C1) * (va + vb + C2));
        }
        total += s / static_cast<double>(mu_a.size());
    }
    return total / x.channels();
}

/// Log-Gabor phase-congruency parameters (FSIM defaults).
struct PhaseCongruencyOptions {
    int scales = 4;
    int orientations = 4;
    double min_wavelength = 6.0;
    double mult = 2.0;
    double sigma_on_f = 0.55;
    double d_theta_on_sigma = 1.2;
    double k = 2.0;
    double epsilon = 1e-4;
};

namespace detail {

// Frequency coordinate of FFT bin i (origin at bin 0), normalised as in the
// usual meshgrid construction: /n for even n, /(n - 1) for odd n.
inline double fft_frequency(int i, int n) {
    const int half = (n + 1) / 2;
    const double idx = i < half ? i : i - n;
    return idx / static_cast<double>(n % 2 == 0 ? n : n - 1);
}

class Fft2d {
public:
    Fft2d(int rows, int cols)
        : rows_(rows), cols_(cols), buf_(static_cast<std::size_t>(rows) * cols) {
        auto* p = reinterpret_cast<fftw_complex*>(buf_.data());
        fwd_ = fftw_plan_dft_2d(rows, cols, p, p, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_2d(rows, cols, p, p, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    ~Fft2d() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
    }
    Fft2d(const Fft2d&) = delete;
    Fft2d& operator=(const Fft2d&) = delete;

    std::vector<std::complex<double>> forward(const std::vector<std::complex<double>>& in) {
        buf_ = in;
        fftw_execute(fwd_);
        return buf_;
    }
    /// Normalised inverse (divides by rows * cols).
    std::vector<std::complex<double>> inverse(const std::vector<std::complex<double>>& in) {
        buf_ = in;
        fftw_execute(bwd_);
        const double s = 1.0 / static_cast<double>(buf_.size());
        for (auto& v : buf_)
            v *= s;
        return buf_;
    }

private:
    int rows_, cols_;
    std::vector<std::complex<double>> buf_;
    fftw_plan fwd_ = nullptr;
    fftw_plan bwd_ = nullptr;
};

inline double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    std::sort(v.begin(), v.end());
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace detail

/// Phase congruency map of a rows x cols plane (row-major), log-Gabor bank
/// with noise compensation, summed over orientations.
inline std::vector<double> phase_congruency(const std::vector<double>& im, int rows, int cols,
                                            const PhaseCongruencyOptions& o = {}) {
    const std::size_t N = static_cast<std::size_t>(rows) * cols;
    detail::Fft2d fft(rows, cols);
    std::vector<std::complex<double>> spatial(im.begin(), im.end());
    const auto image_fft = fft.forward(spatial);

    std::vector<double> radius(N), sintheta(N), costheta(N), lowpass(N);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double fx = detail::fft_frequency(c, cols), fy = detail::fft_frequency(r, rows);
            const std::size_t i = static_cast<std::size_t>(r) * cols + c;
            const double rad = std::sqrt(fx * fx + fy * fy);
            lowpass[i] = 1.0 / (1.0 + std::pow(rad / 0.45, 2 * 15));
            radius[i] = rad;
            const double th = std::atan2(-fy, fx);
            sintheta[i] = std::sin(th);
            costheta[i] = std::cos(th);
        }
    radius[0] = 1.0;

    std::vector<std::vector<double>> log_gabor(o.scales, std::vector<double>(N));
    const double denom = 2.0 * std::log(o.sigma_on_f) * std::log(o.sigma_on_f);
    for (int s = 0; s < o.scales; ++s) {
        const double fo = 1.0 / (o.min_wavelength * std::pow(o.mult, s));
        for (std::size_t i = 0; i < N; ++i) {
            const double l = std::log(radius[i] / fo);
            log_gabor[s][i] = std::exp(-(l * l) / denom) * lowpass[i];
        }
        log_gabor[s][0] = 0.0;
    }

    const double theta_sigma = std::numbers::pi / o.orientations / o.d_theta_on_sigma;
    std::vector<double> energy_all(N, 0.0), an_all(N, 0.0);
    std::vector<std::vector<std::complex<double>>> eo(o.scales);
    std::vector<std::vector<double>> ifft_filter(o.scales);
    std::vector<double> filter(N);

    for (int ori = 0; ori < o.orientations; ++ori) {
        const double angl = ori * std::numbers::pi / o.orientations;
        std::vector<double> spread(N);
        for (std::size_t i = 0; i < N; ++i) {
            const double ds = sintheta[i] * std::cos(angl) - costheta[i] * std::sin(angl);
            const double dc = costheta[i] * std::cos(angl) + sintheta[i] * std::sin(angl);
            const double dtheta = std::abs(std::atan2(ds, dc));
            spread[i] = std::exp(-(dtheta * dtheta) / (2.0 * theta_sigma * theta_sigma));
        }
        std::vector<double> sum_e(N, 0.0), sum_o(N, 0.0), sum_an(N, 0.0);
        double em_n = 0.0;
        for (int s = 0; s < o.scales; ++s) {
            std::vector<std::complex<double>> f(N), prod(N);
            for (std::size_t i = 0; i < N; ++i) {
                filter[i] = log_gabor[s][i] * spread[i];
                f[i] = filter[i];
                prod[i] = image_fft[i] * filter[i];
            }
            const auto spatial_filter = fft.inverse(f);
            ifft_filter[s].resize(N);
            for (std::size_t i = 0; i < N; ++i)
                ifft_filter[s][i] = spatial_filter[i].real() * std::sqrt(static_cast<double>(N));
            eo[s] = fft.inverse(prod);
            for (std::size_t i = 0; i < N; ++i) {
                sum_an[i] += std::abs(eo[s][i]);
                sum_e[i] += eo[s][i].real();
                sum_o[i] += eo[s][i].imag();
            }
            if (s == 0)
                for (std::size_t i = 0; i < N; ++i)
                    em_n += filter[i] * filter[i];
        }

        std::vector<double> energy(N, 0.0);
        for (std::size_t i = 0; i < N; ++i) {
            const double xe = std::sqrt(sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]) + o.epsilon;
            const double me = sum_e[i] / xe, mo = sum_o[i] / xe;
            for (int s = 0; s < o.scales; ++s) {
                const double e = eo[s][i].real(), od = eo[s][i].imag();
                energy[i] += e * me + od * mo - std::abs(e * mo - od * me);
            }
        }

        std::vector<double> e2(N);
        for (std::size_t i = 0; i < N; ++i)
            e2[i] = std::norm(eo[0][i]);
        const double mean_e2n = -detail::median_of(std::move(e2)) / std::log(0.5);
        const double noise_power = mean_e2n / em_n;

        double sum_an2 = 0.0, sum_aiaj = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            for (int s = 0; s < o.scales; ++s)
                sum_an2 += ifft_filter[s][i] * ifft_filter[s][i];
            for (int si = 0; si + 1 < o.scales; ++si)
                for (int sj = si + 1; sj < o.scales; ++sj)
                    sum_aiaj += ifft_filter[si][i] * ifft_filter[sj][i];
        }
        const double est_noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_aiaj;
        const double tau = std::sqrt(est_noise_energy2 / 2.0);
        const double est_noise_energy = tau * std::sqrt(std::numbers::pi / 2.0);
        const double est_noise_sigma = std::sqrt((2.0 - std::numbers::pi / 2.0) * tau * tau);
        const double threshold = (est_noise_energy + o.k * est_noise_sigma) / 1.7;

        for (std::size_t i = 0; i < N; ++i) {
            energy_all[i] += std::max(energy[i] - threshold, 0.0);
            an_all[i] += sum_an[i];
        }
    }
    std::vector<double> pc(N);
    // A flat image has no filter response at all; call its congruency 0.
    for (std::size_t i = 0; i < N; ++i)
        pc[i] = an_all[i] > 0.0 ? energy_all[i] / an_all[i] : 0.0;
    return pc;
}

namespace detail {

// Luma on the 0..255 scale, box-averaged and subsampled by
// F = max(1, round(min(H, W) / 256)).
inline std::vector<double> fsim_luma(const ImageTensor& t, int& rows, int& cols) {
    const int H = t.height(), W = t.width();
    std::vector<double> y(static_cast<std::size_t>(H) * W);
    auto d = t.data();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = t.channels() == 3 ? 255.0 * (0.299 * d[3 * i] + 0.587 * d[3 * i + 1] + 0.114 * d[3 * i + 2])
                                 : 255.0 * d[i];
    const int F = std::max(1, static_cast<int>(std::lround(std::min(H, W) / 256.0)));
    if (F == 1) {
        rows = H;
        cols = W;
        return y;
    }
    // conv2(Y, ones(F)/F^2, 'same') sampled at every F-th pixel.
    const int off = F / 2;
    rows = (H + F - 1) / F;
    cols = (W + F - 1) / F;
    std::vector<double> out(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double s = 0.0;
            for (int u = 0; u < F; ++u)
                for (int v = 0; v < F; ++v) {
                    const int yy = r * F + off - u, xx = c * F + off - v;
                    if (yy >= 0 && yy < H && xx >= 0 && xx < W)
                        s += y[static_cast<std::size_t>(yy) * W + xx];
                }
            out[static_cast<std::size_t>(r) * cols + c] = s / (F * F);
        }
    return out;
}

// Scharr gradient magnitude, conv2(..., 'same') with zero padding.
inline std::vector<double> scharr_magnitude(const std::vector<double>& im, int rows, int cols) {
    static constexpr double kx[3][3] = {{3, 0, -3}, {10, 0, -10}, {3, 0, -3}};
    static constexpr double ky[3][3] = {{3, 10, 3}, {0, 0, 0}, {-3, -10, -3}};
    std::vector<double> g(im.size());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double gx = 0.0, gy = 0.0;
            for (int u = -1; u <= 1; ++u)
                for (int v = -1; v <= 1; ++v) {
                    const int rr = r - u, cc = c - v;
                    if (rr < 0 || rr >= rows || cc < 0 || cc >= cols)
                        continue;
                    const double p = im[static_cast<std::size_t>(rr) * cols + cc];
                    gx += p * kx[u + 1][v + 1] / 16.0;
                    gy += p * ky[u + 1][v + 1] / 16.0;
                }
            g[static_cast<std::size_t>(r) * cols + c] = std::sqrt(gx * gx + gy * gy);
        }
    return g;
}

} // namespace detail

constexpr int kFsimMinSize = 32;

/// Feature similarity on luminance: phase congruency x gradient similarity,
/// pooled by max phase congruency (T1 = 0.85, T2 = 160).
inline double fsim(const ImageTensor& x, const ImageTensor& y) {
    require_same_shape(x, y, "fsim");
    if (x.height() < kFsimMinSize || x.width() < kFsimMinSize)
        fail(ErrorKind::ImageTooSmall, "fsim needs at least 32x32, got " + x.shape_string());
    int rows = 0, cols = 0;
    const auto y1 = detail::fsim_luma(x, rows, cols);
    const auto y2 = detail::fsim_luma(y, rows, cols);
    const auto pc1 = phase_congruency(y1, rows, cols);
    const auto pc2 = phase_congruency(y2, rows, cols);
    const auto g1 = detail::scharr_magnitude(y1, rows, cols);
    const auto g2 = detail::scharr_magnitude(y2, rows, cols);
    constexpr double T1 = 0.85, T2 = 160.0;
    double num = 0.0, den = 0.0, flat = 0.0;
    for (std::size_t i = 0; i < pc1.size(); ++i) {
        const double s_pc = (2.0 * pc1[i] * pc2[i] + T1) / (pc1[i] * pc1[i] + pc2[i] * pc2[i] + T1);
        const double s_g = (2.0 * g1[i] * g2[i] + T2) / (g1[i] * g1[i] + g2[i] * g2[i] + T2);
        const double pcm = std::max(pc1[i], pc2[i]);
        num += s_pc * s_g * pcm;
        den += pcm;
        flat += s_pc * s_g;
    }
    // No phase congruency anywhere in either image: fall back to uniform pooling.
    if (!(den > 0.0))
        return flat / static_cast<double>(pc1.size());
    return num / den;
}

/// Per-image and aggregate quality figures for one evaluated set.
struct MetricReport {
    struct Entry {
        std::string id;
        double psnr = 0.0;
        double ssim = 0.0;
        double fsim = 0.0;
    };
    std::string name = "set";
    std::string resolution;
    std::vector<Entry> per_image;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_fsim = 0.0;
    /// Room for further metrics (e.g. a perceptual score); empty by default.
    std::map<std::string, double> extras;

    void finalize() {
        std::sort(per_image.begin(), per_image.end(), [](const Entry& a, const Entry& b) { return a.id < b.id; });
        double p = 0.0, s = 0.0, f = 0.0;
        for (const auto& e : per_image) {
            p += e.psnr;
            s += e.ssim;
            f += e.fsim;
        }
        const double n = per_image.empty() ? 1.0 : static_cast<double>(per_image.size());
        mean_psnr = p / n;
        mean_ssim = s / n;
        mean_fsim = f / n;
    }
};

inline void to_json(nlohmann::json& j, const MetricReport& r) {
    j["name"] = r.name;
    j["resolution"] = r.resolution;
    j["psnr_cap_db"] = kPsnrCap;
    j["aggregate"] = {{"psnr", r.mean_psnr}, {"ssim", r.mean_ssim}, {"fsim", r.mean_fsim}};
    j["extras"] = r.extras;
    j["per_image"] = nlohmann::json::array();
    for (const auto& e : r.per_image)
        j["per_image"].push_back({{"id", e.id}, {"psnr", e.psnr}, {"ssim", e.ssim}, {"fsim", e.fsim}});
}

/// Aligned text table: one row per metric, one column per report.
inline std::string metrics_table(const std::vector<MetricReport>& reports) {
    std::ostringstream os;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-8s", "Metric");
    os << buf;
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, " %14s", r.name.substr(0, 14).c_str());
        os << buf;
    }
    os << '\n';
    auto row = [&](const char* label, auto getter, const char* fmt) {
        std::snprintf(buf, sizeof buf, "%-8s", label);
        os << buf;
        for (const auto& r : reports) {
            std::snprintf(buf, sizeof buf, fmt, getter(r));
            os << buf;
        }
        os << '\n';
    };
    row("PSNR", [](const MetricReport& r) { return r.mean_psnr; }, " %14.3f");
    row("SSIM", [](const MetricReport& r) { return r.mean_ssim; }, " %14.4f");
    row("FSIM", [](const MetricReport& r) { return r.mean_fsim; }, " %14.4f");
    return os.str();
}

struct EvalPair {
    std::string id;
    std::filesystem::path output;
    std::filesystem::path ground_truth;
};

/// Loads every pair, computes PSNR / SSIM / FSIM and their means. Entries
/// are ordered by id; failures are rethrown with the image id attached.
inline MetricReport evaluate_set(std::vector<EvalPair> pairs, const std::string& name = "set") {
    std::sort(pairs.begin(), pairs.end(), [](const EvalPair& a, const EvalPair& b) { return a.id < b.id; });
    MetricReport report;
    report.name = name;
    for (const auto& p : pairs) {
        try {
            const ImageTensor out = load_image(p.output);
            const ImageTensor gt = load_image(p.ground_truth);
            require_same_shape(out, gt, "evaluation pair");
            const std::string res = std::to_string(gt.height()) + "x" + std::to_string(gt.width());
            if (report.resolution.empty())
                report.resolution = res;
            else if (report.resolution != res)
                report.resolution = "mixed";
            report.per_image.push_back({p.id, psnr(out, gt), ssim(out, gt), fsim(out, gt)});
        } catch (const Error& e) {
            throw Error(e.kind(), "image '" + p.id + "': " + e.what());
        }
    }
    report.finalize();
    return report;
}

} // namespace dehaze

#endif // DEHAZE_METRICS_HPP
