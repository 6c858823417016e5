#ifndef DEHAZE_HAZE_HPP
#define DEHAZE_HAZE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dehaze/error.hpp"
#include "dehaze/image.hpp"
#include "dehaze/rng.hpp"

namespace dehaze {

/// H x W single-channel float field (depth, transmission, heatmaps).
struct ScalarField {
    int height = 0;
    int width = 0;
    std::vector<float> values;

    ScalarField() = default;
    ScalarField(int h, int w, float fill = 0.0f)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }

    double mean() const {
        double s = 0.0;
        for (float v : values)
            s += v;
        return values.empty() ? 0.0 : s / static_cast<double>(values.size());
    }
};

enum class Severity { Thin, Moderate, Thick };

inline std::string_view to_string(Severity s) {
    switch (s) {
    case Severity::Thin: return "thin";
    case Severity::Moderate: return "moderate";
    case Severity::Thick: return "thick";
    }
    return "?";
}

inline Severity parse_severity(std::string_view s) {
    if (s == "thin")
        return Severity::Thin;
    if (s == "moderate")
        return Severity::Moderate;
    if (s == "thick")
        return Severity::Thick;
    fail(ErrorKind::InvalidArgument, "unknown severity '" + std::string(s) + "' (thin|moderate|thick)");
}

/// Mean-transmission band each severity tier is sampled from.
inline std::pair<double, double> transmission_band(Severity s) {
    switch (s) {
    case Severity::Thin: return {0.70, 0.90};
    case Severity::Moderate: return {0.45, 0.70};
    case Severity::Thick: return {0.20, 0.45};
    }
    return {0.0, 1.0};
}

/// Parameters of I = J t + A (1 - t), t = exp(-beta d).
struct HazeParams {
    std::array<float, 3> airlight{1.0f, 1.0f, 1.0f};
    bool per_channel_airlight = false;
    double beta = 1.0;
    ScalarField depth;
    Severity severity = Severity::Moderate;
    std::uint64_t seed = 0;

    static HazeParams uniform_airlight(float a, double beta, ScalarField depth) {
        HazeParams p;
        p.airlight = {a, a, a};
        p.beta = beta;
        p.depth = std::move(depth);
        return p;
    }
};

/// t = exp(-beta * depth), elementwise.
inline ScalarField transmission(double beta, const ScalarField& depth) {
    if (!(beta > 0.0))
        fail(ErrorKind::NonPositiveBeta, "beta must be positive, got " + std::to_string(beta));
    ScalarField t(depth.height, depth.width);
    for (std::size_t i = 0; i < depth.values.size(); ++i) {
        const float d = depth.values[i];
        if (!(d >= 0.0f))
            fail(ErrorKind::NegativeDepth, "depth must be nonnegative at index " + std::to_string(i));
        t.values[i] = static_cast<float>(std::exp(-beta * static_cast<double>(d)));
    }
    return t;
}

namespace detail {

inline void validate_airlight(const HazeParams& p) {
    for (float a : p.airlight)
        if (!(a >= 0.0f && a <= 1.0f))
            fail(ErrorKind::RangeViolation, "airlight must lie in [0,1]");
}

inline float airlight_for(const HazeParams& p, int c) { return p.per_channel_airlight ? p.airlight[c] : p.airlight[0]; }

} // namespace detail

/// Hazy observation I = J t + A (1 - t).
inline ImageTensor compose_haze(const ImageTensor& clear, const HazeParams& params) {
    if (clear.range() != RangeTag::Unit)
        fail(ErrorKind::RangeViolation, "compose_haze expects a unit-range scene");
    if (params.depth.height != clear.height() || params.depth.width != clear.width())
        fail(ErrorKind::ShapeMismatch, "depth field does not match image " + clear.shape_string());
    detail::validate_airlight(params);
    const ScalarField t = transmission(params.beta, params.depth);
    const int C = clear.channels();
    auto J = clear.data();
    std::vector<float> out(clear.size());
    for (std::size_t i = 0; i < t.values.size(); ++i) {
        const double ti = t.values[i];
        for (int c = 0; c < C; ++c) {
            const double a = detail::airlight_for(params, c);
            out[i * C + c] = static_cast<float>(J[i * C + c] * ti + a * (1.0 - ti));
        }
    }
    return make_clamped(clear.height(), clear.width(), C, RangeTag::Unit, std::move(out));
}

/// Analytic inversion J = (I - A (1 - t')) / t' with t' = max(t, t_min), clamped to [0,1].
inline ImageTensor invert_haze(const ImageTensor& hazy, const HazeParams& params, double t_min = 0.05) {
    if (!(t_min > 0.0 && t_min < 1.0))
        fail(ErrorKind::InvalidArgument, "t_min must lie in (0,1)");
    if (hazy.range() != RangeTag::Unit)
        fail(ErrorKind::RangeViolation, "invert_haze expects a unit-range observation");
    if (params.depth.height != hazy.height() || params.depth.width != hazy.width())
        fail(ErrorKind::ShapeMismatch, "depth field does not match image " + hazy.shape_string());
    detail::validate_airlight(params);
    const ScalarField t = transmission(params.beta, params.depth);
    const int C = hazy.channels();
    auto I = hazy.data();
    std::vector<float> out(hazy.size());
    for (std::size_t i = 0; i < t.values.size(); ++i) {
        const double ti = std::max(static_cast<double>(t.values[i]), t_min);
        for (int c = 0; c < C; ++c) {
            const double a = detail::airlight_for(params, c);
            out[i * C + c] = static_cast<float>((I[i * C + c] - a * (1.0 - ti)) / ti);
        }
    }
    return make_clamped(hazy.height(), hazy.width(), C, RangeTag::Unit, std::move(out));
}

/// Separable Gaussian blur with reflected borders.
inline ScalarField gaussian_blur(const ScalarField& f, double sigma) {
    if (!(sigma > 0.0))
        return f;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k)
        v /= sum;
    auto reflect = [](int i, int n) {
        if (n == 1)
            return 0;
        const int period = 2 * (n - 1);
        i %= period;
        if (i < 0)
            i += period;
        return i < n ? i : period - i;
    };
    const int H = f.height, W = f.width;
    std::vector<double> tmp(f.values.size());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int j = -radius; j <= radius; ++j)
                acc += k[j + radius] * f.at(y, reflect(x + j, W));
            tmp[static_cast<std::size_t>(y) * W + x] = acc;
        }
    ScalarField out(H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int j = -radius; j <= radius; ++j)
                acc += k[j + radius] * tmp[static_cast<std::size_t>(reflect(y + j, H)) * W + x];
            out.at(y, x) = static_cast<float>(acc);
        }
    return out;
}

inline double mean_transmission(const HazeParams& p) { return transmission(p.beta, p.depth).mean(); }

/// Random haze for synthetic pairs. The depth field is min-max normalised
/// blurred white noise, A ~ U[0.7, 1], and beta is solved so the mean
/// transmission hits a target drawn inside the severity's band.
inline HazeParams sample_haze_params(Severity severity, int h, int w, std::uint64_t seed) {
    if (h < 1 || w < 1)
        fail(ErrorKind::InvalidArgument, "haze field dimensions must be positive");
    Rng rng(seed);
    HazeParams p;
    p.severity = severity;
    p.seed = seed;
    const auto a = static_cast<float>(rng.uniform(0.7, 1.0));
    p.airlight = {a, a, a};

    ScalarField noise(h, w);
    for (float& v : noise.values)
        v = static_cast<float>(rng.normal());
    ScalarField depth = gaussian_blur(noise, std::min(h, w) / 8.0);
    const auto [mn, mx] = std::minmax_element(depth.values.begin(), depth.values.end());
    const float lo = *mn, span = *mx - *mn;
    for (float& v : depth.values)
        v = span > 0.0f ? (v - lo) / span : 1.0f;
    p.depth = std::move(depth);

    const auto [band_lo, band_hi] = transmission_band(severity);
    constexpr double margin = 1e-3;
    const double target = rng.uniform(band_lo + margin, band_hi - margin);

    auto mean_t = [&](double beta) {
        double s = 0.0;
        for (float d : p.depth.values)
            s += static_cast<float>(std::exp(-beta * static_cast<double>(d)));
        return s / static_cast<double>(p.depth.values.size());
    };
    double b_lo = 0.0, b_hi = 1.0;
    while (mean_t(b_hi) > target)
        b_hi *= 2.0;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (b_lo + b_hi);
        (mean_t(mid) > target ? b_lo : b_hi) = mid;
    }
    p.beta = 0.5 * (b_lo + b_hi);
    return p;
}

} // namespace dehaze

#endif // DEHAZE_HAZE_HPP
