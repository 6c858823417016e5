#ifndef DEHAZE_GENERATOR_HPP
#define DEHAZE_GENERATOR_HPP

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dehaze/archive.hpp"
#include "dehaze/error.hpp"
#include "dehaze/layers.hpp"
#include "dehaze/param_store.hpp"
#include "dehaze/rng.hpp"
#include "dehaze/tensor.hpp"

namespace dehaze {

/// Width and depth of the encoder / inception / decoder generator.
struct GeneratorSpec {
    int base_channels = 64;
    int num_inception_blocks = 3;
    int in_channels = 3;
    int out_channels = 3;

    void validate() const {
        if (base_channels < 8 || base_channels % 4 != 0)
            fail(ErrorKind::InvalidSpec,
                 "generator base_channels must be >= 8 and divisible by 4, got " + std::to_string(base_channels));
        if (num_inception_blocks < 1)
            fail(ErrorKind::InvalidSpec, "generator needs at least one inception block");
        if (in_channels != 3 || out_channels != 3)
            fail(ErrorKind::InvalidSpec, "generator maps RGB to RGB");
    }

    friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

inline void to_json(nlohmann::json& j, const GeneratorSpec& s) {
    j = {{"base_channels", s.base_channels},
         {"num_inception_blocks", s.num_inception_blocks},
         {"in_channels", s.in_channels},
         {"out_channels", s.out_channels}};
}

inline void from_json(const nlohmann::json& j, GeneratorSpec& s) {
    s.base_channels = j.at("base_channels").get<int>();
    s.num_inception_blocks = j.at("num_inception_blocks").get<int>();
    s.in_channels = j.value("in_channels", 3);
    s.out_channels = j.value("out_channels", 3);
}

/// One learnable layer of a network topology.
struct LayerDesc {
    enum class Kind { Conv, ConvTranspose };
    std::string name;
    Kind kind = Kind::Conv;
    int in_channels = 0;
    int out_channels = 0;
    nn::ConvGeometry geometry;

    std::vector<int> weight_shape() const {
        if (kind == Kind::Conv)
            return {out_channels, in_channels, geometry.kh, geometry.kw};
        return {in_channels, out_channels, geometry.kh, geometry.kw};
    }
};

namespace detail {

inline LayerDesc conv_layer(std::string name, int cin, int cout, nn::ConvGeometry g) {
    return {std::move(name), LayerDesc::Kind::Conv, cin, cout, g};
}

inline std::string block_prefix(int i) { return "incep." + std::to_string(i); }

} // namespace detail

/// Layer table of the generator, c = base_channels:
///   enc1 7x7/1 -> c, enc2 3x3/2 -> 2c, enc3 3x3/2 -> 4c (ReLU each)
///   incep.i: four 1x1 -> c reductions, then 1x3 / 3x1 / 3x3 -> c on branches 2-4
///   fusion 1x1 over [enc3, incep.0 .. incep.n-1] -> 4c
///   dec3.up 3x3/2 transposed -> 2c, dec3.merge 1x1 over [dec3.up, enc2] -> 2c
///   dec2.up 3x3/2 transposed -> c,  dec2.merge 1x1 over [dec2.up, enc1] -> c
///   dec1 7x7/1 -> 3, tanh
inline std::vector<LayerDesc> generator_layers(const GeneratorSpec& spec) {
    spec.validate();
    using nn::ConvGeometry;
    const int c = spec.base_channels;
    std::vector<LayerDesc> L;
    L.push_back(detail::conv_layer("enc1", spec.in_channels, c, ConvGeometry::square(7, 1, 3)));
    L.push_back(detail::conv_layer("enc2", c, 2 * c, ConvGeometry::square(3, 2, 1)));
    L.push_back(detail::conv_layer("enc3", 2 * c, 4 * c, ConvGeometry::square(3, 2, 1)));
    for (int i = 0; i < spec.num_inception_blocks; ++i) {
        const std::string p = detail::block_prefix(i);
        L.push_back(detail::conv_layer(p + ".b1", 4 * c, c, ConvGeometry::square(1, 1, 0)));
        L.push_back(detail::conv_layer(p + ".b2_reduce", 4 * c, c, ConvGeometry::square(1, 1, 0)));
        L.push_back(detail::conv_layer(p + ".b2", c, c, ConvGeometry{1, 3, 1, 1, 0, 1}));
        L.push_back(detail::conv_layer(p + ".b3_reduce", 4 * c, c, ConvGeometry::square(1, 1, 0)));
        L.push_back(detail::conv_layer(p + ".b3", c, c, ConvGeometry{3, 1, 1, 1, 1, 0}));
        L.push_back(detail::conv_layer(p + ".b4_reduce", 4 * c, c, ConvGeometry::square(1, 1, 0)));
        L.push_back(detail::conv_layer(p + ".b4", c, c, ConvGeometry::square(3, 1, 1)));
    }
    L.push_back(detail::conv_layer("fusion", 4 * c * (spec.num_inception_blocks + 1), 4 * c,
                                   ConvGeometry::square(1, 1, 0)));
    L.push_back({"dec3.up", LayerDesc::Kind::ConvTranspose, 4 * c, 2 * c, ConvGeometry::square(3, 2, 1)});
    L.push_back(detail::conv_layer("dec3.merge", 4 * c, 2 * c, ConvGeometry::square(1, 1, 0)));
    L.push_back({"dec2.up", LayerDesc::Kind::ConvTranspose, 2 * c, c, ConvGeometry::square(3, 2, 1)});
    L.push_back(detail::conv_layer("dec2.merge", 2 * c, c, ConvGeometry::square(1, 1, 0)));
    L.push_back(detail::conv_layer("dec1", c, spec.out_channels, ConvGeometry::square(7, 1, 3)));
    return L;
}

/// Declares `<name>.weight` / `<name>.bias` for every layer and draws the
/// weights from N(0, 0.02^2) in name order; biases start at zero.
inline ParamStore<float> init_params(const std::vector<LayerDesc>& layers, std::uint64_t seed) {
    ParamStore<float> store;
    for (const auto& l : layers) {
        store.declare(l.name + ".weight", l.weight_shape());
        store.declare(l.name + ".bias", {l.out_channels});
    }
    Rng rng(seed);
    for (auto& [name, p] : store.entries())
        if (name.ends_with(".weight"))
            for (float& v : p.values)
                v = static_cast<float>(rng.normal(0.0, 0.02));
    return store;
}

inline ParamStore<float> build_generator(const GeneratorSpec& spec, std::uint64_t init_seed) {
    return init_params(generator_layers(spec), init_seed);
}

/// Named activation inside the generator; level 0 is full resolution.
template <typename T>
struct FeatureMap {
    std::string name;
    int level = 0;
    const Tensor<T>* data = nullptr;
};

template <typename T>
struct InceptionTrace {
    Tensor<T> input, r2, r3, r4, out;
};

template <typename T>
struct GeneratorTrace {
    Tensor<T> input, e1, e2, e3;
    std::vector<InceptionTrace<T>> blocks;
    Tensor<T> fused_in, fusion, up3, cat3, d3, up2, cat2, d2, output;
};

struct GeneratorOptions {
    /// When false, the fusion projection only sees the last inception block
    /// (other slots are fed zeros). Ablation hook.
    bool fusion = true;
};

namespace detail {

template <typename T>
Tensor<T> conv(const ParamStore<T>& p, const std::string& name, const Tensor<T>& x, int cout,
               const nn::ConvGeometry& g) {
    return nn::conv2d_forward(x, p.data(name + ".weight"), p.data(name + ".bias"), cout, g);
}

template <typename T>
void conv_back(const ParamStore<T>& p, ParamStore<T>* grads, const std::string& name, const Tensor<T>& x, int cout,
               const nn::ConvGeometry& g, const Tensor<T>& dy, Tensor<T>* dx) {
    nn::conv2d_backward(x, p.data(name + ".weight"), cout, g, dy, dx,
                        grads ? grads->data(name + ".weight") : nullptr, grads ? grads->data(name + ".bias") : nullptr);
}

template <typename T>
T output_bound() {
    return std::nextafter(T(1), T(0));
}

} // namespace detail

/// Inception-residual block at 4c channels:
/// out = ReLU([b1(x), b2(x), b3(x), b4(x)] + x).
template <typename T>
Tensor<T> inception_forward(const ParamStore<T>& p, const std::string& prefix, int c, const Tensor<T>& x,
                            InceptionTrace<T>* trace = nullptr) {
    using nn::ConvGeometry;
    if (x.c != 4 * c)
        fail(ErrorKind::ShapeMismatch, "inception block expects " + std::to_string(4 * c) + " channels, got " +
                                           std::to_string(x.c));
    const auto pw = ConvGeometry::square(1, 1, 0);
    Tensor<T> b1 = detail::conv(p, prefix + ".b1", x, c, pw);
    Tensor<T> r2 = detail::conv(p, prefix + ".b2_reduce", x, c, pw);
    Tensor<T> b2 = detail::conv(p, prefix + ".b2", r2, c, ConvGeometry{1, 3, 1, 1, 0, 1});
    Tensor<T> r3 = detail::conv(p, prefix + ".b3_reduce", x, c, pw);
    Tensor<T> b3 = detail::conv(p, prefix + ".b3", r3, c, ConvGeometry{3, 1, 1, 1, 1, 0});
    Tensor<T> r4 = detail::conv(p, prefix + ".b4_reduce", x, c, pw);
    Tensor<T> b4 = detail::conv(p, prefix + ".b4", r4, c, ConvGeometry::square(3, 1, 1));

    Tensor<T> out = x;
    add_into_channels(out, b1, 0);
    add_into_channels(out, b2, c);
    add_into_channels(out, b3, 2 * c);
    add_into_channels(out, b4, 3 * c);
    nn::relu_inplace(out);
    if (trace) {
        trace->input = x;
        trace->r2 = std::move(r2);
        trace->r3 = std::move(r3);
        trace->r4 = std::move(r4);
        trace->out = out;
    }
    return out;
}

/// Backward of inception_forward given dL/d(out); returns dL/d(input).
template <typename T>
Tensor<T> inception_backward(const ParamStore<T>& p, const std::string& prefix, int c, const InceptionTrace<T>& tr,
                             const Tensor<T>& d_out, ParamStore<T>* grads) {
    using nn::ConvGeometry;
    const auto pw = ConvGeometry::square(1, 1, 0);
    Tensor<T> d_sum = nn::relu_backward(tr.out, d_out);
    Tensor<T> d_in = d_sum;
    Tensor<T> dx, dr;

    detail::conv_back(p, grads, prefix + ".b1", tr.input, c, pw, slice_channels(d_sum, 0, c), &dx);
    add_inplace(d_in, dx);

    detail::conv_back(p, grads, prefix + ".b2", tr.r2, c, ConvGeometry{1, 3, 1, 1, 0, 1}, slice_channels(d_sum, c, c), &dr);
    detail::conv_back(p, grads, prefix + ".b2_reduce", tr.input, c, pw, dr, &dx);
    add_inplace(d_in, dx);

    detail::conv_back(p, grads, prefix + ".b3", tr.r3, c, ConvGeometry{3, 1, 1, 1, 1, 0}, slice_channels(d_sum, 2 * c, c), &dr);
    detail::conv_back(p, grads, prefix + ".b3_reduce", tr.input, c, pw, dr, &dx);
    add_inplace(d_in, dx);

    detail::conv_back(p, grads, prefix + ".b4", tr.r4, c, ConvGeometry::square(3, 1, 1), slice_channels(d_sum, 3 * c, c), &dr);
    detail::conv_back(p, grads, prefix + ".b4_reduce", tr.input, c, pw, dr, &dx);
    add_inplace(d_in, dx);
    return d_in;
}

/// Signed-range N x 3 x H x W in, signed-range N x 3 x H x W out, strictly
/// inside (-1, 1). H and W must be divisible by 4.
template <typename T>
Tensor<T> generator_forward(const ParamStore<T>& p, const GeneratorSpec& spec, const Tensor<T>& x,
                            GeneratorTrace<T>* trace = nullptr, const GeneratorOptions& opt = {}) {
    using nn::ConvGeometry;
    spec.validate();
    if (x.c != spec.in_channels)
        fail(ErrorKind::ShapeMismatch, "generator input must have 3 channels, got " + x.shape_string());
    if (x.h % 4 != 0 || x.w % 4 != 0 || x.h < 4 || x.w < 4)
        fail(ErrorKind::ShapeMismatch, "generator input height and width must be divisible by 4, got " +
                                           std::to_string(x.h) + "x" + std::to_string(x.w));
    const int c = spec.base_channels;
    const int n_blocks = spec.num_inception_blocks;
    GeneratorTrace<T> local;
    GeneratorTrace<T>& tr = trace ? *trace : local;

    tr.input = x;
    tr.e1 = detail::conv(p, "enc1", x, c, ConvGeometry::square(7, 1, 3));
    nn::relu_inplace(tr.e1);
    tr.e2 = detail::conv(p, "enc2", tr.e1, 2 * c, ConvGeometry::square(3, 2, 1));
    nn::relu_inplace(tr.e2);
    tr.e3 = detail::conv(p, "enc3", tr.e2, 4 * c, ConvGeometry::square(3, 2, 1));
    nn::relu_inplace(tr.e3);

    tr.blocks.assign(n_blocks, {});
    Tensor<T> u = tr.e3;
    for (int i = 0; i < n_blocks; ++i)
        u = inception_forward(p, detail::block_prefix(i), c, u, &tr.blocks[i]);

    // Multi-level fusion over the bottleneck input and every block output.
    const int slot = 4 * c;
    tr.fused_in = Tensor<T>(x.n, slot * (n_blocks + 1), tr.e3.h, tr.e3.w);
    if (opt.fusion)
        add_into_channels(tr.fused_in, tr.e3, 0);
    for (int i = 0; i < n_blocks; ++i)
        if (opt.fusion || i == n_blocks - 1)
            add_into_channels(tr.fused_in, tr.blocks[i].out, slot * (i + 1));
    tr.fusion = detail::conv(p, "fusion", tr.fused_in, 4 * c, ConvGeometry::square(1, 1, 0));
    nn::relu_inplace(tr.fusion);

    const auto up = ConvGeometry::square(3, 2, 1);
    tr.up3 = nn::conv_transpose2d_forward(tr.fusion, p.data("dec3.up.weight"), p.data("dec3.up.bias"), 2 * c, up,
                                          tr.e2.h, tr.e2.w);
    nn::relu_inplace(tr.up3);
    tr.cat3 = concat_channels(tr.up3, tr.e2);
    tr.d3 = detail::conv(p, "dec3.merge", tr.cat3, 2 * c, ConvGeometry::square(1, 1, 0));
    nn::relu_inplace(tr.d3);

    tr.up2 = nn::conv_transpose2d_forward(tr.d3, p.data("dec2.up.weight"), p.data("dec2.up.bias"), c, up, tr.e1.h,
                                          tr.e1.w);
    nn::relu_inplace(tr.up2);
    tr.cat2 = concat_channels(tr.up2, tr.e1);
    tr.d2 = detail::conv(p, "dec2.merge", tr.cat2, c, ConvGeometry::square(1, 1, 0));
    nn::relu_inplace(tr.d2);

    tr.output = detail::conv(p, "dec1", tr.d2, spec.out_channels, ConvGeometry::square(7, 1, 3));
    nn::tanh_inplace(tr.output);
    const T bound = detail::output_bound<T>();
    for (T& v : tr.output.data)
        v = std::clamp(v, -bound, bound);
    return tr.output;
}

/// Names accepted by generator_activation / Grad-CAM, input to output.
inline std::vector<std::string> generator_activation_names(const GeneratorSpec& spec) {
    std::vector<std::string> names{"enc1", "enc2", "enc3"};
    for (int i = 0; i < spec.num_inception_blocks; ++i)
        names.push_back(detail::block_prefix(i));
    for (const char* n : {"fusion", "dec3.up", "dec3", "dec2.up", "dec2", "output"})
        names.emplace_back(n);
    return names;
}

template <typename T>
std::optional<FeatureMap<T>> generator_activation(const GeneratorTrace<T>& tr, const std::string& name) {
    if (name == "enc1")
        return FeatureMap<T>{name, 0, &tr.e1};
    if (name == "enc2")
        return FeatureMap<T>{name, 1, &tr.e2};
    if (name == "enc3")
        return FeatureMap<T>{name, 2, &tr.e3};
    if (name.starts_with("incep.")) {
        try {
            std::size_t pos = 0;
            const int i = std::stoi(name.substr(6), &pos);
            if (pos == name.size() - 6 && i >= 0 && i < static_cast<int>(tr.blocks.size()))
                return FeatureMap<T>{name, 2, &tr.blocks[i].out};
        } catch (const std::exception&) {
        }
        return std::nullopt;
    }
    if (name == "fusion")
        return FeatureMap<T>{name, 2, &tr.fusion};
    if (name == "dec3.up")
        return FeatureMap<T>{name, 1, &tr.up3};
    if (name == "dec3")
        return FeatureMap<T>{name, 1, &tr.d3};
    if (name == "dec2.up")
        return FeatureMap<T>{name, 0, &tr.up2};
    if (name == "dec2")
        return FeatureMap<T>{name, 0, &tr.d2};
    if (name == "output")
        return FeatureMap<T>{name, 0, &tr.output};
    return std::nullopt;
}

/// Backward pass from dL/d(output). Parameter gradients accumulate into
/// `grads` (may be null). If `capture` names an activation, dL/d(activation)
/// is written to `captured`.
template <typename T>
void generator_backward(const ParamStore<T>& p, const GeneratorSpec& spec, const GeneratorTrace<T>& tr,
                        const Tensor<T>& d_output, ParamStore<T>* grads, const std::string& capture = {},
                        Tensor<T>* captured = nullptr, Tensor<T>* d_input = nullptr,
                        const GeneratorOptions& opt = {}) {
    using nn::ConvGeometry;
    const int c = spec.base_channels;
    const int n_blocks = spec.num_inception_blocks;
    const auto pw = ConvGeometry::square(1, 1, 0);
    const auto up = ConvGeometry::square(3, 2, 1);
    auto keep = [&](const char* name, const Tensor<T>& g) {
        if (captured && capture == name)
            *captured = g;
    };
    keep("output", d_output);

    Tensor<T> g = nn::tanh_backward(tr.output, d_output);
    Tensor<T> d_d2;
    detail::conv_back(p, grads, "dec1", tr.d2, spec.out_channels, ConvGeometry::square(7, 1, 3), g, &d_d2);
    keep("dec2", d_d2);

    Tensor<T> d_cat2;
    detail::conv_back(p, grads, "dec2.merge", tr.cat2, c, pw, nn::relu_backward(tr.d2, d_d2), &d_cat2);
    Tensor<T> d_up2 = slice_channels(d_cat2, 0, c);
    Tensor<T> d_e1 = slice_channels(d_cat2, c, c);
    keep("dec2.up", d_up2);

    Tensor<T> d_d3;
    nn::conv_transpose2d_backward(tr.d3, p.data("dec2.up.weight"), c, up, nn::relu_backward(tr.up2, d_up2), &d_d3,
                                  grads ? grads->data("dec2.up.weight") : nullptr,
                                  grads ? grads->data("dec2.up.bias") : nullptr);
    keep("dec3", d_d3);

    Tensor<T> d_cat3;
    detail::conv_back(p, grads, "dec3.merge", tr.cat3, 2 * c, pw, nn::relu_backward(tr.d3, d_d3), &d_cat3);
    Tensor<T> d_up3 = slice_channels(d_cat3, 0, 2 * c);
    Tensor<T> d_e2 = slice_channels(d_cat3, 2 * c, 2 * c);
    keep("dec3.up", d_up3);

    Tensor<T> d_fusion;
    nn::conv_transpose2d_backward(tr.fusion, p.data("dec3.up.weight"), 2 * c, up, nn::relu_backward(tr.up3, d_up3),
                                  &d_fusion, grads ? grads->data("dec3.up.weight") : nullptr,
                                  grads ? grads->data("dec3.up.bias") : nullptr);
    keep("fusion", d_fusion);

    Tensor<T> d_fused;
    detail::conv_back(p, grads, "fusion", tr.fused_in, 4 * c, pw, nn::relu_backward(tr.fusion, d_fusion), &d_fused);
    const int slot = 4 * c;

    // Block i's output feeds block i+1 and fusion slot i+1.
    Tensor<T> d_next;
    for (int i = n_blocks - 1; i >= 0; --i) {
        Tensor<T> d_out = (opt.fusion || i == n_blocks - 1) ? slice_channels(d_fused, slot * (i + 1), slot)
                                                            : Tensor<T>(tr.blocks[i].out.n, slot, tr.blocks[i].out.h,
                                                                        tr.blocks[i].out.w);
        if (i < n_blocks - 1)
            add_inplace(d_out, d_next);
        keep(detail::block_prefix(i).c_str(), d_out);
        d_next = inception_backward(p, detail::block_prefix(i), c, tr.blocks[i], d_out, grads);
    }
    Tensor<T> d_e3 = std::move(d_next);
    if (opt.fusion)
        add_inplace(d_e3, slice_channels(d_fused, 0, slot));
    keep("enc3", d_e3);

    Tensor<T> dx;
    const auto s2 = ConvGeometry::square(3, 2, 1);
    detail::conv_back(p, grads, "enc3", tr.e2, 4 * c, s2, nn::relu_backward(tr.e3, d_e3), &dx);
    add_inplace(d_e2, dx);
    keep("enc2", d_e2);

    detail::conv_back(p, grads, "enc2", tr.e1, 2 * c, s2, nn::relu_backward(tr.e2, d_e2), &dx);
    add_inplace(d_e1, dx);
    keep("enc1", d_e1);

    detail::conv_back(p, grads, "enc1", tr.input, c, ConvGeometry::square(7, 1, 3), nn::relu_backward(tr.e1, d_e1),
                      d_input);
}

/// Generator checkpoint: archive with meta {"kind": "generator", "spec", "init_seed"}.
inline void save_generator(const std::filesystem::path& path, const ParamStore<float>& params,
                           const GeneratorSpec& spec, std::uint64_t init_seed) {
    Archive a;
    a.meta = {{"kind", "generator"}, {"spec", spec}, {"init_seed", init_seed}};
    a.tensors = params;
    write_archive(path, a);
}

struct LoadedGenerator {
    GeneratorSpec spec;
    std::uint64_t init_seed = 0;
    ParamStore<float> params;
};

inline LoadedGenerator load_generator(const std::filesystem::path& path) {
    Archive a = read_archive(path);
    if (a.meta.value("kind", "") != "generator")
        fail(ErrorKind::UnsupportedFormat, path.string() + " is not a generator checkpoint");
    LoadedGenerator g;
    g.spec = a.meta.at("spec").get<GeneratorSpec>();
    g.init_seed = a.meta.value("init_seed", std::uint64_t{0});
    build_generator(g.spec, 0).require_same_layout(a.tensors, "generator checkpoint");
    g.params = std::move(a.tensors);
    return g;
}

} // namespace dehaze

#endif // DEHAZE_GENERATOR_HPP
