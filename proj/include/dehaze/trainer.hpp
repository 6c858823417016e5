#ifndef DEHAZE_TRAINER_HPP
#define DEHAZE_TRAINER_HPP

#include <json.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dehaze/adam.hpp"
#include "dehaze/archive.hpp"
#include "dehaze/dataset.hpp"
#include "dehaze/discriminator.hpp"
#include "dehaze/error.hpp"
#include "dehaze/generator.hpp"
#include "dehaze/image.hpp"
#include "dehaze/kv_config.hpp"
#include "dehaze/losses.hpp"
#include "dehaze/png_io.hpp"
#include "dehaze/rng.hpp"
#include "dehaze/tensor.hpp"

namespace dehaze {

enum class Preprocess {
    Resize,     ///< bicubic resize to image_size x image_size
    RandomCrop, ///< seeded image_size x image_size crop
};

/// Optimisation protocol and run settings. Defaults: Adam(2e-4, 0.5, 0.999),
/// 100 epochs, batch 1, lambda 100, bicubic resize to 256.
struct TrainConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    int epochs = 100;
    int batch_size = 1;
    double lambda_l1 = kDefaultLambdaL1;
    std::uint64_t seed = 0;
    Preprocess preprocess = Preprocess::Resize;
    int image_size = 256;
    int checkpoint_every = 10;
    GeneratorSpec generator;
    DiscriminatorSpec discriminator;

    // Data and output locations (used by the CLI driver).
    std::string dataset = "paired"; ///< paired | haze1k | rice
    std::string data_root;
    double train_fraction = 0.9;
    std::string out_dir = "run";

    void validate() const {
        if (!(lr > 0.0))
            fail(ErrorKind::InvalidConfig, "lr must be positive");
        if (!(beta1 >= 0.0 && beta1 < beta2 && beta2 < 1.0))
            fail(ErrorKind::InvalidConfig, "need 0 <= beta1 < beta2 < 1");
        if (!(eps > 0.0))
            fail(ErrorKind::InvalidConfig, "eps must be positive");
        if (epochs < 1)
            fail(ErrorKind::InvalidConfig, "epochs must be >= 1");
        if (batch_size < 1)
            fail(ErrorKind::InvalidConfig, "batch_size must be >= 1");
        if (!(lambda_l1 >= 0.0))
            fail(ErrorKind::InvalidConfig, "lambda_l1 must be nonnegative");
        if (image_size < 4 || image_size % 4 != 0)
            fail(ErrorKind::InvalidConfig, "image_size must be a positive multiple of 4");
        if (checkpoint_every < 0)
            fail(ErrorKind::InvalidConfig, "checkpoint_every must be >= 0");
        if (dataset != "paired" && dataset != "haze1k" && dataset != "rice")
            fail(ErrorKind::InvalidConfig, "dataset must be paired, haze1k or rice");
        generator.validate();
        discriminator.validate();
    }

    AdamConfig adam() const { return {lr, beta1, beta2, eps}; }

    /// Applies one `key = value` setting; unknown keys are rejected.
    void set(const std::string& key, const std::string& value) {
        auto as_double = [&] {
            try {
                std::size_t pos = 0;
                const double v = std::stod(value, &pos);
                if (pos != value.size())
                    throw std::invalid_argument(value);
                return v;
            } catch (const std::exception&) {
                fail(ErrorKind::InvalidConfig, "key '" + key + "' expects a number, got '" + value + "'");
            }
        };
        auto as_int = [&] {
            const double v = as_double();
            if (v != std::floor(v) || std::abs(v) > 1e15)
                fail(ErrorKind::InvalidConfig, "key '" + key + "' expects an integer, got '" + value + "'");
            return static_cast<long long>(v);
        };
        if (key == "lr")
            lr = as_double();
        else if (key == "beta1")
            beta1 = as_double();
        else if (key == "beta2")
            beta2 = as_double();
        else if (key == "eps")
            eps = as_double();
        else if (key == "epochs")
            epochs = static_cast<int>(as_int());
        else if (key == "batch_size")
            batch_size = static_cast<int>(as_int());
        else if (key == "lambda_l1")
            lambda_l1 = as_double();
        else if (key == "seed") {
            try {
                seed = std::stoull(value);
            } catch (const std::exception&) {
                fail(ErrorKind::InvalidConfig, "seed must be a nonnegative integer");
            }
        } else if (key == "resize") {
            if (value == "bicubic" || value == "bicubic-256")
                preprocess = Preprocess::Resize;
            else if (value == "random-crop" || value == "random-crop-256")
                preprocess = Preprocess::RandomCrop;
            else
                fail(ErrorKind::InvalidConfig, "resize must be bicubic or random-crop");
        } else if (key == "image_size")
            image_size = static_cast<int>(as_int());
        else if (key == "checkpoint_every")
            checkpoint_every = static_cast<int>(as_int());
        else if (key == "base_channels")
            generator.base_channels = static_cast<int>(as_int());
        else if (key == "inception_blocks")
            generator.num_inception_blocks = static_cast<int>(as_int());
        else if (key == "disc_base_channels")
            discriminator.base_channels = static_cast<int>(as_int());
        else if (key == "dataset")
            dataset = value;
        else if (key == "data_root")
            data_root = value;
        else if (key == "train_fraction")
            train_fraction = as_double();
        else if (key == "out_dir")
            out_dir = value;
        else
            fail(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
    }

    void apply(const KeyValues& kv) {
        for (const auto& [k, v] : kv)
            set(k, v);
    }

    static TrainConfig from_key_values(const KeyValues& kv) {
        TrainConfig c;
        c.apply(kv);
        c.validate();
        return c;
    }

    /// Fully resolved settings, in a stable order.
    KeyValues to_key_values() const {
        auto num = [](double v) {
            char buf[32];
            const auto r = std::to_chars(buf, buf + sizeof buf, v);
            return std::string(buf, r.ptr);
        };
        return {{"lr", num(lr)},
                {"beta1", num(beta1)},
                {"beta2", num(beta2)},
                {"eps", num(eps)},
                {"epochs", std::to_string(epochs)},
                {"batch_size", std::to_string(batch_size)},
                {"lambda_l1", num(lambda_l1)},
                {"seed", std::to_string(seed)},
                {"resize", preprocess == Preprocess::Resize ? "bicubic" : "random-crop"},
                {"image_size", std::to_string(image_size)},
                {"checkpoint_every", std::to_string(checkpoint_every)},
                {"base_channels", std::to_string(generator.base_channels)},
                {"inception_blocks", std::to_string(generator.num_inception_blocks)},
                {"disc_base_channels", std::to_string(discriminator.base_channels)},
                {"dataset", dataset},
                {"data_root", data_root},
                {"train_fraction", num(train_fraction)},
                {"out_dir", out_dir}};
    }

    std::string to_text() const {
        std::string s;
        for (const auto& [k, v] : to_key_values())
            s += k + " = " + v + "\n";
        return s;
    }

    /// FNV-1a over the resolved text.
    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const unsigned char ch : to_text()) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
        return h;
    }
};

/// Everything needed to continue training bit-for-bit. Batch order and crop
/// offsets are derived from (seed, step), so the counters are the RNG state.
struct TrainState {
    long long step = 0;
    long long epoch = 0;
    std::uint64_t seed = 0;
    ParamStore<float> generator;
    ParamStore<float> discriminator;
    AdamState<float> generator_opt;
    AdamState<float> discriminator_opt;
};

inline std::uint64_t generator_init_seed(std::uint64_t seed) { return Rng::derive(seed, 0x6E6, 1); }
inline std::uint64_t discriminator_init_seed(std::uint64_t seed) { return Rng::derive(seed, 0xD15, 2); }

inline TrainState initial_state(const TrainConfig& cfg) {
    cfg.validate();
    TrainState s;
    s.seed = cfg.seed;
    s.generator = build_generator(cfg.generator, generator_init_seed(cfg.seed));
    s.discriminator = build_discriminator(cfg.discriminator, discriminator_init_seed(cfg.seed));
    s.generator_opt = AdamState<float>::for_params(s.generator);
    s.discriminator_opt = AdamState<float>::for_params(s.discriminator);
    return s;
}

namespace detail {

inline void require_finite(const LossReport& r, long long step) {
    for (const double v : {r.l_gan, r.l_l1, r.l_gen, r.l_real, r.l_fake, r.l_d})
        if (!std::isfinite(v)) {
            const nlohmann::json j = r;
            fail(ErrorKind::NonFiniteLoss, "non-finite loss at step " + std::to_string(step) + ": " + j.dump());
        }
}

template <typename T>
std::span<const T> span_of(const Tensor<T>& t) {
    return {t.data.data(), t.data.size()};
}

} // namespace detail

/// One adversarial update on a signed-range batch:
///   1. fake = G(hazy)
///   2. discriminator step on (hazy, clear) -> ones and (hazy, fake) -> zeros
///   3. generator step on BCE(D(hazy, fake), ones) + lambda * L1(clear, fake)
/// Aborts with NonFiniteLoss before applying an update that saw a NaN/Inf loss.
inline LossReport train_step(TrainState& state, const TrainConfig& cfg, const Tensor<float>& hazy,
                             const Tensor<float>& clear) {
    require_same_shape(hazy, clear, "training batch");
    const long long step_id = state.step + 1;

    GeneratorTrace<float> gtrace;
    const Tensor<float> fake = generator_forward(state.generator, cfg.generator, hazy, &gtrace);

    // Discriminator update; the generated batch is a constant here.
    ParamStore<float> d_grads = state.discriminator.zeros_like();
    DiscriminatorTrace<float> rtrace, ftrace;
    const Tensor<float> real_logits =
        discriminator_forward(state.discriminator, cfg.discriminator, hazy, clear, NormMode::Train, &rtrace);
    const Tensor<float> fake_logits =
        discriminator_forward(state.discriminator, cfg.discriminator, hazy, fake, NormMode::Train, &ftrace);
    LossReport report = discriminator_loss(detail::span_of(real_logits), detail::span_of(fake_logits));
    report.step = step_id;
    if (!std::isfinite(report.l_d))
        detail::require_finite(report, step_id);

    Tensor<float> g_logits(real_logits.n, real_logits.c, real_logits.h, real_logits.w);
    g_logits.data = bce_with_constant_grad(detail::span_of(real_logits), 1.0);
    discriminator_backward(state.discriminator, cfg.discriminator, rtrace, g_logits, &d_grads);
    g_logits.data = bce_with_constant_grad(detail::span_of(fake_logits), 0.0);
    discriminator_backward(state.discriminator, cfg.discriminator, ftrace, g_logits, &d_grads);
    adam_update(state.discriminator, d_grads, state.discriminator_opt, cfg.adam());

    // Generator update against the refreshed discriminator.
    DiscriminatorTrace<float> gdtrace;
    const Tensor<float> fooled =
        discriminator_forward(state.discriminator, cfg.discriminator, hazy, fake, NormMode::Train, &gdtrace);
    const LossReport g = generator_loss(detail::span_of(fooled), detail::span_of(clear), detail::span_of(fake),
                                        cfg.lambda_l1);
    report.l_gan = g.l_gan;
    report.l_l1 = g.l_l1;
    report.l_gen = g.l_gen;
    detail::require_finite(report, step_id);

    g_logits.data = bce_with_constant_grad(detail::span_of(fooled), 1.0);
    const Tensor<float> d_pair = discriminator_backward(state.discriminator, cfg.discriminator, gdtrace, g_logits,
                                                        static_cast<ParamStore<float>*>(nullptr));
    Tensor<float> d_fake = slice_channels(d_pair, 3, 3);
    const auto l1g = l1_loss_grad(detail::span_of(clear), detail::span_of(fake), cfg.lambda_l1);
    for (std::size_t i = 0; i < d_fake.size(); ++i)
        d_fake.data[i] += l1g[i];

    ParamStore<float> g_grads = state.generator.zeros_like();
    generator_backward(state.generator, cfg.generator, gtrace, d_fake, &g_grads);
    adam_update(state.generator, g_grads, state.generator_opt, cfg.adam());

    state.step = step_id;
    return report;
}

/// One training example, already preprocessed unless random cropping is on.
struct TrainingPair {
    std::string id;
    ImageTensor hazy;
    ImageTensor clear;
};

/// Loads a dataset, applying the configured resize (random crops are taken per step).
inline std::vector<TrainingPair> load_training_pairs(const PairedDataset& ds, const TrainConfig& cfg) {
    if (ds.empty())
        fail(ErrorKind::EmptyDataset, "dataset '" + ds.name + "' is empty");
    std::vector<TrainingPair> out;
    out.reserve(ds.size());
    for (const auto& p : ds.pairs) {
        ImageTensor h = load_image(p.hazy), c = load_image(p.clear);
        if (h.channels() != 3 || c.channels() != 3)
            fail(ErrorKind::ChannelMismatch, "training pair '" + p.id + "' is not RGB");
        if (cfg.preprocess == Preprocess::Resize) {
            if (h.height() != cfg.image_size || h.width() != cfg.image_size)
                h = resize(h, cfg.image_size, cfg.image_size, ResizeMethod::Bicubic);
            if (c.height() != cfg.image_size || c.width() != cfg.image_size)
                c = resize(c, cfg.image_size, cfg.image_size, ResizeMethod::Bicubic);
        } else if (h.height() < cfg.image_size || h.width() < cfg.image_size) {
            fail(ErrorKind::ShapeMismatch, "pair '" + p.id + "' is smaller than the crop size");
        }
        out.push_back({p.id, std::move(h), std::move(c)});
    }
    return out;
}

/// Steady-state training driver over in-memory pairs.
class Trainer {
public:
    Trainer(TrainConfig cfg, std::vector<TrainingPair> data) : cfg_(std::move(cfg)), data_(std::move(data)) {
        cfg_.validate();
        if (data_.empty())
            fail(ErrorKind::EmptyDataset, "training set is empty");
        state_ = initial_state(cfg_);
    }

    const TrainConfig& config() const noexcept { return cfg_; }
    const TrainState& state() const noexcept { return state_; }
    TrainState& state() noexcept { return state_; }

    long long steps_per_epoch() const {
        return (static_cast<long long>(data_.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
    }
    long long total_steps() const { return steps_per_epoch() * cfg_.epochs; }
    bool finished() const { return state_.step >= total_steps(); }

    /// Item indices of global step `step`: epoch-wise seeded permutation.
    std::vector<std::size_t> batch_indices(long long step) const {
        const long long spe = steps_per_epoch();
        const long long epoch = step / spe, k = step % spe;
        Rng rng(Rng::derive(cfg_.seed, 0xE90C, static_cast<std::uint64_t>(epoch)));
        const auto perm = rng.permutation(data_.size());
        const std::size_t lo = static_cast<std::size_t>(k) * cfg_.batch_size;
        const std::size_t hi = std::min(lo + static_cast<std::size_t>(cfg_.batch_size), data_.size());
        return {perm.begin() + static_cast<std::ptrdiff_t>(lo), perm.begin() + static_cast<std::ptrdiff_t>(hi)};
    }

    LossReport step() {
        if (finished())
            fail(ErrorKind::InvalidArgument, "training already complete");
        const auto idx = batch_indices(state_.step);
        std::vector<ImageTensor> hz, cl;
        Rng crop_rng(Rng::derive(cfg_.seed, 0xC409, static_cast<std::uint64_t>(state_.step)));
        for (const std::size_t i : idx) {
            const auto& p = data_[i];
            if (cfg_.preprocess == Preprocess::RandomCrop) {
                const int s = cfg_.image_size;
                const int y0 = static_cast<int>(crop_rng.below(static_cast<std::uint64_t>(p.hazy.height() - s + 1)));
                const int x0 = static_cast<int>(crop_rng.below(static_cast<std::uint64_t>(p.hazy.width() - s + 1)));
                hz.push_back(to_signed(crop(p.hazy, y0, x0, s, s)));
                cl.push_back(to_signed(crop(p.clear, y0, x0, s, s)));
            } else {
                hz.push_back(to_signed(p.hazy));
                cl.push_back(to_signed(p.clear));
            }
        }
        std::vector<const ImageTensor*> hp, cp;
        for (std::size_t i = 0; i < hz.size(); ++i) {
            hp.push_back(&hz[i]);
            cp.push_back(&cl[i]);
        }
        LossReport r = train_step(state_, cfg_, to_batch<float>(hp), to_batch<float>(cp));
        state_.epoch = state_.step / steps_per_epoch();
        return r;
    }

    /// Runs up to `max_steps` steps (all remaining when negative).
    std::vector<LossReport> run(long long max_steps = -1, const std::function<void(const LossReport&)>& on_step = {}) {
        std::vector<LossReport> out;
        while (!finished() && (max_steps < 0 || static_cast<long long>(out.size()) < max_steps)) {
            out.push_back(step());
            if (on_step)
                on_step(out.back());
        }
        return out;
    }

    /// Continues from a saved state (must come from the same configuration).
    void restore(TrainState s) {
        state_.generator.require_same_layout(s.generator, "resumed generator");
        state_.discriminator.require_same_layout(s.discriminator, "resumed discriminator");
        if (s.seed != cfg_.seed)
            fail(ErrorKind::InvalidConfig, "checkpoint seed differs from configuration seed");
        state_ = std::move(s);
    }

    /// Dehazes one unit-range image with the current generator.
    ImageTensor dehaze(const ImageTensor& hazy) const {
        const Tensor<float> y = generator_forward(state_.generator, cfg_.generator, to_batch<float>(to_signed(hazy)));
        return to_unit(from_batch(y, 0, RangeTag::Signed));
    }

private:
    TrainConfig cfg_;
    std::vector<TrainingPair> data_;
    TrainState state_;
};

/// Training-state archive: generator, discriminator and both Adam moment sets
/// under the prefixes gen/, disc/, gen_m/, gen_v/, disc_m/, disc_v/.
inline void save_train_state(const std::filesystem::path& path, const TrainState& s, const TrainConfig& cfg) {
    Archive a;
    a.meta = {{"kind", "train_state"},
              {"step", s.step},
              {"epoch", s.epoch},
              {"seed", s.seed},
              {"generator_spec", cfg.generator},
              {"discriminator_spec", cfg.discriminator},
              {"generator_adam_t", s.generator_opt.t},
              {"discriminator_adam_t", s.discriminator_opt.t},
              {"config_hash", cfg.hash()}};
    auto put = [&](const std::string& prefix, const ParamStore<float>& store) {
        for (const auto& [name, p] : store.entries()) {
            auto& q = a.tensors.declare(prefix + name, p.shape, p.trainable);
            q.values = p.values;
        }
    };
    put("gen/", s.generator);
    put("disc/", s.discriminator);
    put("gen_m/", s.generator_opt.m);
    put("gen_v/", s.generator_opt.v);
    put("disc_m/", s.discriminator_opt.m);
    put("disc_v/", s.discriminator_opt.v);
    write_archive(path, a);
}

inline TrainState load_train_state(const std::filesystem::path& path) {
    Archive a = read_archive(path);
    if (a.meta.value("kind", "") != "train_state")
        fail(ErrorKind::UnsupportedFormat, path.string() + " is not a training-state checkpoint");
    TrainState s;
    s.step = a.meta.at("step").get<long long>();
    s.epoch = a.meta.at("epoch").get<long long>();
    s.seed = a.meta.at("seed").get<std::uint64_t>();
    s.generator_opt.t = a.meta.at("generator_adam_t").get<std::int64_t>();
    s.discriminator_opt.t = a.meta.at("discriminator_adam_t").get<std::int64_t>();
    const std::pair<const char*, ParamStore<float>*> slots[] = {
        {"gen/", &s.generator},      {"disc/", &s.discriminator},      {"gen_m/", &s.generator_opt.m},
        {"gen_v/", &s.generator_opt.v}, {"disc_m/", &s.discriminator_opt.m}, {"disc_v/", &s.discriminator_opt.v}};
    for (const auto& [name, p] : a.tensors.entries()) {
        bool placed = false;
        for (const auto& [prefix, store] : slots)
            if (name.starts_with(prefix)) {
                auto& q = store->declare(name.substr(std::string_view(prefix).size()), p.shape, p.trainable);
                q.values = p.values;
                placed = true;
                break;
            }
        if (!placed)
            fail(ErrorKind::CorruptImage, path.string() + ": unexpected tensor '" + name + "'");
    }
    return s;
}

/// Result of a complete training run.
struct TrainSummary {
    TrainState state;
    std::vector<LossReport> losses;
    double wall_seconds = 0.0;
};

/// Full run with on-disk artefacts under `out_dir`:
///   loss_log.jsonl                one LossReport per step
///   checkpoints/state_eNNNN.ckpt  training state every `checkpoint_every` epochs and at the end
///   generator.ckpt                final generator
///   summary.json                  config hash, last losses, wall time
inline TrainSummary train(const TrainConfig& cfg, const PairedDataset& dataset, const std::filesystem::path& out_dir,
                          const std::optional<std::filesystem::path>& resume = std::nullopt,
                          const std::function<void(const LossReport&)>& on_step = {}) {
    namespace fs = std::filesystem;
    const auto t0 = std::chrono::steady_clock::now();
    Trainer trainer(cfg, load_training_pairs(dataset, cfg));
    std::error_code ec;
    fs::create_directories(out_dir / "checkpoints", ec);
    if (ec)
        fail(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

    const fs::path log_path = out_dir / "loss_log.jsonl";
    std::vector<std::string> kept;
    if (resume) {
        trainer.restore(load_train_state(*resume));
        std::ifstream old(log_path);
        for (std::string line; std::getline(old, line);)
            if (!line.empty() && nlohmann::json::parse(line).at("step").get<long long>() <= trainer.state().step)
                kept.push_back(line);
    }
    std::ofstream log(log_path, std::ios::trunc);
    if (!log)
        fail(ErrorKind::IoError, "cannot open " + log_path.string());
    for (const auto& line : kept)
        log << line << '\n';

    TrainSummary summary;
    const long long spe = trainer.steps_per_epoch();
    while (!trainer.finished()) {
        LossReport r = trainer.step();
        log << nlohmann::json(r).dump() << '\n';
        summary.losses.push_back(r);
        if (on_step)
            on_step(r);
        const long long step = trainer.state().step;
        if (step % spe == 0) {
            const long long epoch = step / spe;
            if ((cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) || trainer.finished()) {
                char name[64];
                std::snprintf(name, sizeof name, "state_e%04lld.ckpt", epoch);
                save_train_state(out_dir / "checkpoints" / name, trainer.state(), cfg);
            }
        }
    }
    log.flush();
    save_generator(out_dir / "generator.ckpt", trainer.state().generator, cfg.generator, generator_init_seed(cfg.seed));

    summary.state = trainer.state();
    summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(cfg.hash()));
    nlohmann::json js = {{"config_hash", hash},
                         {"steps", trainer.state().step},
                         {"epochs", trainer.state().epoch},
                         {"wall_time_s", summary.wall_seconds},
                         {"config", cfg.to_key_values()}};
    js["last_losses"] = summary.losses.empty() ? nlohmann::json(nullptr) : nlohmann::json(summary.losses.back());
    std::ofstream(out_dir / "summary.json") << js.dump(2) << '\n';
    return summary;
}

} // namespace dehaze

#endif // DEHAZE_TRAINER_HPP
