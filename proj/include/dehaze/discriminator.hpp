#ifndef DEHAZE_DISCRIMINATOR_HPP
#define DEHAZE_DISCRIMINATOR_HPP

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dehaze/archive.hpp"
#include "dehaze/error.hpp"
#include "dehaze/generator.hpp"
#include "dehaze/layers.hpp"
#include "dehaze/param_store.hpp"
#include "dehaze/tensor.hpp"

namespace dehaze {

struct DiscriminatorSpec {
    int base_channels = 64;
    int in_channels = 6;

    void validate() const {
        if (base_channels < 8)
            fail(ErrorKind::InvalidSpec,
                 "discriminator base_channels must be >= 8, got " + std::to_string(base_channels));
        if (in_channels != 6)
            fail(ErrorKind::InvalidSpec, "discriminator consumes a concatenated RGB pair (6 channels)");
    }

    friend bool operator==(const DiscriminatorSpec&, const DiscriminatorSpec&) = default;
};

inline void to_json(nlohmann::json& j, const DiscriminatorSpec& s) {
    j = {{"base_channels", s.base_channels}, {"in_channels", s.in_channels}};
}

inline void from_json(const nlohmann::json& j, DiscriminatorSpec& s) {
    s.base_channels = j.at("base_channels").get<int>();
    s.in_channels = j.value("in_channels", 6);
}

constexpr int kDiscriminatorBlocks = 6;
constexpr double kLeakySlope = 0.2;

/// Six 4x4 convolutions with padding 1: strides 2,2,2,2,1,1 and widths
/// c, 2c, 4c, 8c, 8c, 1. Blocks 1-5 are conv -> batch norm -> leaky ReLU(0.2);
/// block 6 emits the logit map.
inline std::vector<LayerDesc> discriminator_layers(const DiscriminatorSpec& spec) {
    spec.validate();
    const int c = spec.base_channels;
    const std::array<int, kDiscriminatorBlocks> widths{c, 2 * c, 4 * c, 8 * c, 8 * c, 1};
    const std::array<int, kDiscriminatorBlocks> strides{2, 2, 2, 2, 1, 1};
    std::vector<LayerDesc> L;
    int cin = spec.in_channels;
    for (int i = 0; i < kDiscriminatorBlocks; ++i) {
        L.push_back({"b" + std::to_string(i + 1) + ".conv", LayerDesc::Kind::Conv, cin, widths[i],
                     nn::ConvGeometry::square(4, strides[i], 1)});
        cin = widths[i];
    }
    return L;
}

inline ParamStore<float> build_discriminator(const DiscriminatorSpec& spec, std::uint64_t init_seed) {
    const auto layers = discriminator_layers(spec);
    ParamStore<float> store = init_params(layers, init_seed);
    for (int i = 0; i + 1 < kDiscriminatorBlocks; ++i) {
        const std::string bn = "b" + std::to_string(i + 1) + ".bn";
        const int ch = layers[i].out_channels;
        store.declare(bn + ".gamma", {ch}, true, 1.0f);
        store.declare(bn + ".beta", {ch}, true, 0.0f);
        store.declare(bn + ".running_mean", {ch}, false, 0.0f);
        store.declare(bn + ".running_var", {ch}, false, 1.0f);
    }
    return store;
}

/// Spatial size of the logit map for an n x n input.
inline int discriminator_output_size(const DiscriminatorSpec& spec, int n) {
    for (const auto& l : discriminator_layers(spec)) {
        n = l.geometry.out_h(n);
        if (n < 1)
            return 0;
    }
    return n;
}

enum class NormMode {
    Train,         ///< batch statistics, running statistics updated
    TrainNoUpdate, ///< batch statistics, running statistics untouched
    Eval,          ///< running statistics
};

template <typename T>
struct DiscriminatorTrace {
    std::array<Tensor<T>, kDiscriminatorBlocks> inputs;
    std::array<nn::BatchNormCache<T>, kDiscriminatorBlocks - 1> norms;
    std::array<Tensor<T>, kDiscriminatorBlocks - 1> acts;
    Tensor<T> logits;
};

/// Scores an (input, candidate) pair: channel-concatenate to 6 channels and
/// run the six blocks. Returns an N x 1 x h' x w' logit map (sigmoid lives in the loss).
template <typename T>
Tensor<T> discriminator_forward(ParamStore<T>& p, const DiscriminatorSpec& spec, const Tensor<T>& hazy,
                                const Tensor<T>& candidate, NormMode mode, DiscriminatorTrace<T>* trace = nullptr) {
    spec.validate();
    require_same_shape(hazy, candidate, "discriminator pair");
    if (hazy.c != 3)
        fail(ErrorKind::ShapeMismatch, "discriminator expects RGB inputs, got " + hazy.shape_string());
    if (discriminator_output_size(spec, hazy.h) < 1 || discriminator_output_size(spec, hazy.w) < 1)
        fail(ErrorKind::ShapeMismatch, "discriminator input " + hazy.shape_string() + " too small");
    const auto layers = discriminator_layers(spec);
    DiscriminatorTrace<T> local;
    DiscriminatorTrace<T>& tr = trace ? *trace : local;

    Tensor<T> x = concat_channels(hazy, candidate);
    for (int i = 0; i < kDiscriminatorBlocks; ++i) {
        const auto& l = layers[i];
        tr.inputs[i] = std::move(x);
        Tensor<T> y = nn::conv2d_forward(tr.inputs[i], p.data(l.name + ".weight"), p.data(l.name + ".bias"),
                                         l.out_channels, l.geometry);
        if (i + 1 == kDiscriminatorBlocks) {
            tr.logits = std::move(y);
            break;
        }
        const std::string bn = "b" + std::to_string(i + 1) + ".bn";
        y = nn::batchnorm_forward(y, p.data(bn + ".gamma"), p.data(bn + ".beta"), p.data(bn + ".running_mean"),
                                  p.data(bn + ".running_var"), mode != NormMode::Eval, mode == NormMode::Train,
                                  tr.norms[i]);
        nn::leaky_relu_inplace(y, static_cast<T>(kLeakySlope));
        tr.acts[i] = y;
        x = std::move(y);
    }
    return tr.logits;
}

/// Backward from dL/d(logits). Returns dL/d(6-channel input); parameter
/// gradients accumulate into `grads` when given.
template <typename T>
Tensor<T> discriminator_backward(const ParamStore<T>& p, const DiscriminatorSpec& spec, const DiscriminatorTrace<T>& tr,
                                 const Tensor<T>& d_logits, ParamStore<T>* grads) {
    const auto layers = discriminator_layers(spec);
    Tensor<T> g = d_logits;
    for (int i = kDiscriminatorBlocks - 1; i >= 0; --i) {
        const auto& l = layers[i];
        if (i + 1 < kDiscriminatorBlocks) {
            const std::string bn = "b" + std::to_string(i + 1) + ".bn";
            g = nn::leaky_relu_backward(tr.acts[i], std::move(g), static_cast<T>(kLeakySlope));
            g = nn::batchnorm_backward(tr.norms[i], p.data(bn + ".gamma"), g,
                                       grads ? grads->data(bn + ".gamma") : nullptr,
                                       grads ? grads->data(bn + ".beta") : nullptr);
        }
        Tensor<T> dx;
        nn::conv2d_backward(tr.inputs[i], p.data(l.name + ".weight"), l.out_channels, l.geometry, g, &dx,
                            grads ? grads->data(l.name + ".weight") : nullptr,
                            grads ? grads->data(l.name + ".bias") : nullptr);
        g = std::move(dx);
    }
    return g;
}

inline void save_discriminator(const std::filesystem::path& path, const ParamStore<float>& params,
                               const DiscriminatorSpec& spec, std::uint64_t init_seed) {
    Archive a;
    a.meta = {{"kind", "discriminator"}, {"spec", spec}, {"init_seed", init_seed}};
    a.tensors = params;
    write_archive(path, a);
}

} // namespace dehaze

#endif // DEHAZE_DISCRIMINATOR_HPP
