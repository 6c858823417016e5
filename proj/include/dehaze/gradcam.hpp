#ifndef DEHAZE_GRADCAM_HPP
#define DEHAZE_GRADCAM_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "dehaze/error.hpp"
#include "dehaze/generator.hpp"
#include "dehaze/haze.hpp"
#include "dehaze/image.hpp"
#include "dehaze/tensor.hpp"

namespace dehaze {

/// Scalar whose gradient drives the explanation.
enum class CamTarget {
    ResidualMagnitude, ///< mean |G(I) - I|
    MeanOutput,        ///< mean G(I)
};

inline std::string_view to_string(CamTarget t) {
    return t == CamTarget::ResidualMagnitude ? "residual_magnitude" : "mean_output";
}

inline CamTarget parse_cam_target(std::string_view s) {
    if (s == "residual" || s == "residual_magnitude")
        return CamTarget::ResidualMagnitude;
    if (s == "mean" || s == "mean_output")
        return CamTarget::MeanOutput;
    fail(ErrorKind::InvalidArgument, "unknown Grad-CAM target '" + std::string(s) + "' (residual|mean)");
}

/// Last decoder activation before the output convolution.
inline constexpr const char* kDefaultCamLayer = "dec2";

struct ColormapKnot {
    double v;
    std::array<double, 3> rgb;
};

/// Blue-to-red ramp; red is nondecreasing in v. Documented in docs/colormap.md.
inline constexpr std::array<ColormapKnot, 6> kColormapKnots{{
    {0.00, {0.00, 0.00, 0.50}},
    {0.20, {0.00, 0.30, 1.00}},
    {0.45, {0.10, 0.90, 0.70}},
    {0.70, {0.45, 0.80, 0.10}},
    {0.85, {0.50, 0.35, 0.00}},
    {1.00, {0.50, 0.00, 0.00}},
}};

inline std::array<float, 3> colormap_rgb(double v) {
    if (!(v >= 0.0 && v <= 1.0))
        fail(ErrorKind::RangeViolation, "colormap input must lie in [0,1], got " + std::to_string(v));
    std::size_t k = 1;
    while (k + 1 < kColormapKnots.size() && v > kColormapKnots[k].v)
        ++k;
    const auto& a = kColormapKnots[k - 1];
    const auto& b = kColormapKnots[k];
    const double f = (v - a.v) / (b.v - a.v);
    std::array<float, 3> out{};
    for (int c = 0; c < 3; ++c)
        out[c] = static_cast<float>(a.rgb[c] + f * (b.rgb[c] - a.rgb[c]));
    return out;
}

/// Piecewise-linear colour map of a [0,1] field into an RGB unit-range image.
inline ImageTensor colormap(const ScalarField& v) {
    std::vector<float> out(v.values.size() * 3);
    for (std::size_t i = 0; i < v.values.size(); ++i) {
        const auto rgb = colormap_rgb(v.values[i]);
        std::copy(rgb.begin(), rgb.end(), out.begin() + static_cast<std::ptrdiff_t>(3 * i));
    }
    return make_clamped(v.height, v.width, 3, RangeTag::Unit, std::move(out));
}

/// Min-max normalisation to [0,1]; a constant map becomes all zeros.
inline ScalarField normalize_cam(const ScalarField& raw) {
    ScalarField out(raw.height, raw.width);
    if (raw.values.empty())
        return out;
    const auto [mn, mx] = std::minmax_element(raw.values.begin(), raw.values.end());
    const double lo = *mn, span = static_cast<double>(*mx) - lo;
    if (!(span > 0.0))
        return out;
    for (std::size_t i = 0; i < raw.values.size(); ++i)
        out.values[i] = static_cast<float>(std::clamp((raw.values[i] - lo) / span, 0.0, 1.0));
    return out;
}

struct CamWeights {
    std::vector<double> alpha;
    ScalarField raw;
};

/// alpha_k = spatial mean of dS/dA^k, raw = ReLU(sum_k alpha_k A^k), for batch item 0.
template <typename T>
CamWeights cam_from_activations(const Tensor<T>& activations, const Tensor<T>& gradients) {
    require_same_shape(activations, gradients, "grad-cam activations/gradients");
    CamWeights w;
    w.alpha.assign(activations.c, 0.0);
    const std::size_t P = activations.plane_size();
    for (int k = 0; k < activations.c; ++k) {
        const T* g = gradients.plane(0, k);
        double s = 0.0;
        for (std::size_t i = 0; i < P; ++i)
            s += g[i];
        w.alpha[k] = s / static_cast<double>(P);
    }
    std::vector<double> acc(P, 0.0);
    for (int k = 0; k < activations.c; ++k) {
        const T* a = activations.plane(0, k);
        for (std::size_t i = 0; i < P; ++i)
            acc[i] += w.alpha[k] * a[i];
    }
    w.raw = ScalarField(activations.h, activations.w);
    for (std::size_t i = 0; i < P; ++i)
        w.raw.values[i] = static_cast<float>(std::max(acc[i], 0.0));
    return w;
}

struct CamResult {
    ScalarField heatmap;    ///< input resolution, [0,1]
    ImageTensor overlay;    ///< 0.5 input + 0.5 colormap(heatmap)
    ImageTensor dehazed;    ///< generator output, unit range
    std::string target_layer;
    CamTarget target_kind = CamTarget::ResidualMagnitude;
    std::vector<double> alpha;
    double target_value = 0.0;
};

/// Grad-CAM over a generator activation. `image` may be unit- or signed-range.
inline CamResult grad_cam(const ParamStore<float>& params, const GeneratorSpec& spec, const ImageTensor& image,
                          const std::string& layer = kDefaultCamLayer,
                          CamTarget target = CamTarget::ResidualMagnitude) {
    const auto names = generator_activation_names(spec);
    if (std::find(names.begin(), names.end(), layer) == names.end()) {
        if (params.contains(layer + ".weight") || params.contains(layer))
            fail(ErrorKind::NonSpatialLayer, "'" + layer + "' names parameters, not a spatial activation");
        fail(ErrorKind::UnknownLayer, "no generator layer named '" + layer + "'");
    }
    const ImageTensor unit = image.range() == RangeTag::Unit ? image : to_unit(image);
    const ImageTensor signed_in = image.range() == RangeTag::Signed ? image : to_signed(image);
    const Tensor<float> x = to_batch<float>(signed_in);

    GeneratorTrace<float> trace;
    const Tensor<float> y = generator_forward(params, spec, x, &trace);
    Tensor<float> d_out(y.n, y.c, y.h, y.w);
    const double inv_n = 1.0 / static_cast<double>(y.size());
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (target == CamTarget::ResidualMagnitude) {
            const double r = static_cast<double>(y.data[i]) - x.data[i];
            s += std::abs(r);
            d_out.data[i] = static_cast<float>(r > 0.0 ? inv_n : r < 0.0 ? -inv_n : 0.0);
        } else {
            s += y.data[i];
            d_out.data[i] = static_cast<float>(inv_n);
        }
    }

    Tensor<float> grad;
    generator_backward(params, spec, trace, d_out, static_cast<ParamStore<float>*>(nullptr), layer, &grad);
    const auto fmap = generator_activation(trace, layer);
    CamWeights w = cam_from_activations(*fmap->data, grad);

    CamResult r;
    r.target_layer = layer;
    r.target_kind = target;
    r.alpha = std::move(w.alpha);
    r.target_value = s * inv_n;
    ScalarField norm = normalize_cam(w.raw);
    if (norm.height != unit.height() || norm.width != unit.width()) {
        const ImageTensor small(norm.height, norm.width, 1, RangeTag::Unit, norm.values);
        ImageTensor big = resize(small, unit.height(), unit.width(), ResizeMethod::Bilinear);
        norm = ScalarField(unit.height(), unit.width());
        auto d = big.data();
        std::copy(d.begin(), d.end(), norm.values.begin());
    }
    r.heatmap = std::move(norm);

    const ImageTensor colors = colormap(r.heatmap);
    std::vector<float> ov(colors.size());
    auto cd = colors.data();
    auto in = unit.data();
    for (std::size_t i = 0; i < r.heatmap.values.size(); ++i)
        for (int c = 0; c < 3; ++c) {
            const float base = unit.channels() == 3 ? in[3 * i + c] : in[i];
            ov[3 * i + c] = 0.5f * base + 0.5f * cd[3 * i + c];
        }
    r.overlay = make_clamped(unit.height(), unit.width(), 3, RangeTag::Unit, std::move(ov));
    r.dehazed = to_unit(from_batch(y, 0, RangeTag::Signed));
    return r;
}

} // namespace dehaze

#endif // DEHAZE_GRADCAM_HPP
