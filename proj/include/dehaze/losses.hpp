#ifndef DEHAZE_LOSSES_HPP
#define DEHAZE_LOSSES_HPP

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dehaze/error.hpp"

namespace dehaze {

/// Weight of the L1 term in the generator objective.
constexpr double kDefaultLambdaL1 = 100.0;

/// Per-step scalar losses.
struct LossReport {
    double l_gan = 0.0;
    double l_l1 = 0.0;
    double l_gen = 0.0;
    double l_real = 0.0;
    double l_fake = 0.0;
    double l_d = 0.0;
    long long step = 0;

    friend bool operator==(const LossReport&, const LossReport&) = default;
};

inline void to_json(nlohmann::json& j, const LossReport& r) {
    j = {{"step", r.step}, {"l_gan", r.l_gan},   {"l_l1", r.l_l1}, {"l_gen", r.l_gen},
         {"l_real", r.l_real}, {"l_fake", r.l_fake}, {"l_d", r.l_d}};
}

inline void from_json(const nlohmann::json& j, LossReport& r) {
    r.step = j.at("step").get<long long>();
    r.l_gan = j.at("l_gan").get<double>();
    r.l_l1 = j.at("l_l1").get<double>();
    r.l_gen = j.at("l_gen").get<double>();
    r.l_real = j.at("l_real").get<double>();
    r.l_fake = j.at("l_fake").get<double>();
    r.l_d = j.at("l_d").get<double>();
}

namespace detail {

template <typename A, typename B>
void require_same_length(const A& a, const B& b, const char* what) {
    if (a.size() != b.size())
        fail(ErrorKind::ShapeMismatch,
             std::string(what) + ": " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " elements");
}

} // namespace detail

/// Numerically stable logistic function.
inline double sigmoid(double x) {
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Mean binary cross-entropy on logits,
/// -(1/N) sum [y log s(x) + (1-y) log(1-s(x))], evaluated as
/// max(x,0) - x y + log(1 + exp(-|x|)).
template <typename T>
double bce_with_logits(std::span<const T> logits, std::span<const T> targets) {
    detail::require_same_length(logits, targets, "bce_with_logits");
    if (logits.empty())
        fail(ErrorKind::ShapeMismatch, "bce_with_logits on empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double x = logits[i], y = targets[i];
        s += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
    return s / static_cast<double>(logits.size());
}

/// d bce / d logits = (s(x) - y) / N.
template <typename T>
std::vector<T> bce_with_logits_grad(std::span<const T> logits, std::span<const T> targets) {
    detail::require_same_length(logits, targets, "bce_with_logits");
    std::vector<T> g(logits.size());
    const double inv_n = 1.0 / static_cast<double>(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        g[i] = static_cast<T>((sigmoid(logits[i]) - targets[i]) * inv_n);
    return g;
}

/// BCE against a constant label (0 or 1) without materialising the targets.
template <typename T>
double bce_with_constant(std::span<const T> logits, double label) {
    if (logits.empty())
        fail(ErrorKind::ShapeMismatch, "bce on empty input");
    double s = 0.0;
    for (const T v : logits) {
        const double x = v;
        s += std::max(x, 0.0) - x * label + std::log1p(std::exp(-std::abs(x)));
    }
    return s / static_cast<double>(logits.size());
}

template <typename T>
std::vector<T> bce_with_constant_grad(std::span<const T> logits, double label, double scale = 1.0) {
    std::vector<T> g(logits.size());
    const double k = scale / static_cast<double>(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        g[i] = static_cast<T>((sigmoid(logits[i]) - label) * k);
    return g;
}

/// Adversarial generator loss: BCE of the fake logits against ones.
template <typename T>
double gan_loss_for_generator(std::span<const T> fake_logits) {
    return bce_with_constant(fake_logits, 1.0);
}

/// Mean absolute error.
template <typename T>
double l1_loss(std::span<const T> target, std::span<const T> generated) {
    detail::require_same_length(target, generated, "l1_loss");
    if (target.empty())
        fail(ErrorKind::ShapeMismatch, "l1_loss on empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i)
        s += std::abs(static_cast<double>(target[i]) - static_cast<double>(generated[i]));
    return s / static_cast<double>(target.size());
}

/// d l1 / d generated = sign(generated - target) / N (zero at ties).
template <typename T>
std::vector<T> l1_loss_grad(std::span<const T> target, std::span<const T> generated, double scale = 1.0) {
    detail::require_same_length(target, generated, "l1_loss");
    std::vector<T> g(target.size());
    const double k = scale / static_cast<double>(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = static_cast<double>(generated[i]) - static_cast<double>(target[i]);
        g[i] = static_cast<T>(d > 0.0 ? k : d < 0.0 ? -k : 0.0);
    }
    return g;
}

/// l_gen = l_gan + lambda * l_l1. Fills the generator fields of a report.
template <typename T>
LossReport generator_loss(std::span<const T> fake_logits, std::span<const T> target, std::span<const T> generated,
                          double lambda = kDefaultLambdaL1) {
    LossReport r;
    r.l_gan = gan_loss_for_generator(fake_logits);
    r.l_l1 = l1_loss(target, generated);
    r.l_gen = r.l_gan + lambda * r.l_l1;
    return r;
}

/// l_real = BCE(real, 1), l_fake = BCE(fake, 0), l_d = l_real + l_fake.
template <typename T>
LossReport discriminator_loss(std::span<const T> real_logits, std::span<const T> fake_logits) {
    LossReport r;
    r.l_real = bce_with_constant(real_logits, 1.0);
    r.l_fake = bce_with_constant(fake_logits, 0.0);
    r.l_d = r.l_real + r.l_fake;
    return r;
}

} // namespace dehaze

#endif // DEHAZE_LOSSES_HPP
