// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "dehaze/dataset.hpp"
#include "dehaze/gradcam.hpp"
#include "dehaze/haze.hpp"
#include "dehaze/losses.hpp"
#include "dehaze/metrics.hpp"
#include "dehaze/trainer.hpp"
#include "oracles/oracles.hpp"

using namespace dehaze;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

int g_failures = 0;
std::set<int> g_only;

void criterion(int n, const char* title, double budget_s, const std::function<Outcome()>& body) {
    if (!g_only.empty() && !g_only.contains(n))
        return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget_s > 0)
        o.require(secs < budget_s, fmt("runtime %.1f s over %.0f s budget", secs, budget_s));
    g_failures += !o.pass;
    std::printf("criterion %2d %s  %s  [%.1f s]%s%s\n", n, o.pass ? "PASS" : "FAIL", title, secs,
                o.detail.empty() ? "" : "  ", o.detail.c_str());
    std::fflush(stdout);
}

void info(const std::string& s) {
    std::printf("             info: %s\n", s.c_str());
    std::fflush(stdout);
}

const fs::path& work() {
    static const fs::path d = [] {
        auto p = fs::current_path() / "acceptance_work";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return d;
}

template <typename T>
Tensor<T> random_signed(int n, int c, int h, int w, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    Tensor<T> t(n, c, h, w);
    for (auto& v : t.data)
        v = static_cast<T>(std::uniform_real_distribution<double>(-1, 1)(g));
    return t;
}

std::vector<std::size_t> probes(std::size_t n, std::mt19937_64& g, std::size_t k) {
    if (n <= k) {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    std::vector<std::size_t> v(k);
    for (auto& i : v)
        i = g() % n;
    return v;
}

template <typename T>
std::span<const T> sp(const std::vector<T>& v) {
    return {v.data(), v.size()};
}

// ---- 1 ----------------------------------------------------------------------

Outcome equation_fidelity() {
    Outcome o;
    const auto ln2 = static_cast<float>(std::log(2.0));
    const auto t = transmission(1.0, ScalarField(2, 2, ln2));
    o.require(std::abs(t.values[0] - 0.5f) < 1e-6f, "t = exp(-beta d) at d = ln 2");
    const auto I = compose_haze(ImageTensor(1, 1, 3, RangeTag::Unit, 0.5f),
                                HazeParams::uniform_airlight(1.0f, 1.0, ScalarField(1, 1, ln2)));
    for (float v : I.data())
        o.require(std::abs(v - 0.75f) < 1e-6f, fmt("haze substitution gave %.7f", v));

    const std::vector<double> zero{0.0}, one{1.0};
    o.require(std::abs(bce_with_logits(sp(zero), sp(one)) - std::log(2.0)) < 1e-6, "BCE at logit 0");

    std::mt19937_64 g(1);
    std::vector<double> a(64), b(64);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = std::uniform_real_distribution<double>(-1, 1)(g);
        b[i] = std::uniform_real_distribution<double>(-1, 1)(g);
    }
    o.require(l1_loss(sp(a), sp(a)) == 0.0, "L1(a, a) = 0");
    o.require(l1_loss(sp(a), sp(b)) == l1_loss(sp(b), sp(a)), "L1 symmetric");
    o.require(l1_loss(sp(std::vector<double>(8, 1.0)), sp(std::vector<double>(8, 0.0))) == 1.0, "L1(1, 0) = 1");

    TrainConfig cfg;
    cfg.generator = {8, 1};
    cfg.discriminator = {8};
    cfg.image_size = 48;
    cfg.epochs = 3;
    cfg.seed = 5;
    SynthOptions so;
    so.count = 4;
    so.size = 48;
    so.seed = 5;
    const auto ds = write_synthetic_dataset(so, work() / "c1_data");
    Trainer tr(cfg, load_training_pairs(ds, cfg));
    double worst = 0;
    for (const auto& r : tr.run()) {
        worst = std::max(worst, std::abs(r.l_gen - (r.l_gan + 100.0 * r.l_l1)));
        worst = std::max(worst, std::abs(r.l_d - (r.l_real + r.l_fake)));
    }
    o.require(worst <= 1e-6, fmt("loss decomposition off by %.3g", worst));
    o.detail += (o.detail.empty() ? "" : "; ") + fmt("12 logged steps, worst decomposition gap %.2g", worst);
    return o;
}

// ---- 2 ----------------------------------------------------------------------

Outcome gradient_suite() {
    Outcome o;
    std::mt19937_64 g(3);

    {
        std::vector<double> x(32), y(32);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = std::uniform_real_distribution<double>(-4, 4)(g);
            y[i] = static_cast<double>(g() & 1u);
        }
        const auto gr = bce_with_logits_grad(sp(x), sp(y));
        double worst = 0;
        for (std::size_t i = 0; i < x.size(); ++i)
            worst = std::max(worst, oracle::relative_error(gr[i], oracle::central_difference(
                                                                      [&] { return bce_with_logits(sp(x), sp(y)); },
                                                                      x[i], 1e-5)));
        o.require(worst < 1e-3, fmt("BCE gradient rel err %.3g", worst));
    }
    {
        std::vector<double> y(32), yh(32);
        for (std::size_t i = 0; i < y.size(); ++i) {
            y[i] = std::uniform_real_distribution<double>(-1, 1)(g);
            const double gap = std::uniform_real_distribution<double>(0.01, 0.5)(g);
            yh[i] = y[i] + ((g() & 1u) ? gap : -gap);
        }
        const auto gr = l1_loss_grad(sp(y), sp(yh));
        double worst = 0;
        for (std::size_t i = 0; i < y.size(); ++i)
            worst = std::max(worst, oracle::relative_error(
                                        gr[i], oracle::central_difference([&] { return l1_loss(sp(y), sp(yh)); },
                                                                          yh[i], 1e-5)));
        o.require(worst < 1e-3, fmt("L1 gradient rel err %.3g", worst));
    }

    double gen_worst = 0;
    {
        // He-scaled weights so activations sit well away from ReLU kinks.
        const GeneratorSpec spec{8, 1};
        auto p = build_generator(spec, 17).cast<double>();
        std::mt19937_64 w(5);
        for (auto& [name, a] : p.entries()) {
            const bool transposed = name.find(".up.") != std::string::npos;
            const double sd = name.ends_with(".bias")
                                  ? 0.1
                                  : std::sqrt(2.0 * a.shape[transposed ? 1 : 0] / static_cast<double>(a.values.size()));
            for (auto& v : a.values)
                v = std::normal_distribution<double>(0, sd)(w);
        }
        auto x = random_signed<double>(1, 3, 8, 8, 18);
        auto objective = [&] {
            const auto y = generator_forward(p, spec, x);
            double s = 0;
            for (double v : y.data)
                s += v;
            return s / static_cast<double>(y.size());
        };
        GeneratorTrace<double> tr;
        const auto y = generator_forward(p, spec, x, &tr);
        Tensor<double> dy(y.n, y.c, y.h, y.w, 1.0 / static_cast<double>(y.size()));
        auto grads = p.zeros_like();
        Tensor<double> dx;
        generator_backward(p, spec, tr, dy, &grads, {}, static_cast<Tensor<double>*>(nullptr), &dx);
        for (auto& [name, a] : p.entries())
            for (std::size_t i : probes(a.values.size(), g, 48))
                gen_worst = std::max(gen_worst, oracle::relative_error(grads.at(name).values[i],
                                                                       oracle::central_difference(objective,
                                                                                                  a.values[i], 1e-6),
                                                                       1e-6));
        for (std::size_t i : probes(x.size(), g, 48))
            gen_worst = std::max(gen_worst, oracle::relative_error(
                                                dx.data[i], oracle::central_difference(objective, x.data[i], 1e-6),
                                                1e-6));
        o.require(gen_worst < 1e-3, fmt("generator gradient rel err %.3g", gen_worst));
    }

    double disc_worst = 0;
    {
        const DiscriminatorSpec spec{8};
        auto p = build_discriminator(spec, 31).cast<double>();
        const auto h = random_signed<double>(2, 3, 48, 48, 32);
        auto c = random_signed<double>(2, 3, 48, 48, 33);
        const int out = discriminator_output_size(spec, 48);
        Tensor<double> w(2, 1, out, out);
        for (auto& v : w.data)
            v = std::normal_distribution<double>(0, 1)(g);
        auto objective = [&] {
            const auto y = discriminator_forward(p, spec, h, c, NormMode::TrainNoUpdate);
            double s = 0;
            for (std::size_t i = 0; i < y.size(); ++i)
                s += w.data[i] * y.data[i];
            return s;
        };
        DiscriminatorTrace<double> tr;
        discriminator_forward(p, spec, h, c, NormMode::TrainNoUpdate, &tr);
        auto grads = p.zeros_like();
        const auto dx = discriminator_backward(p, spec, tr, w, &grads);
        for (auto& [name, a] : p.entries()) {
            if (!a.trainable)
                continue;
            for (std::size_t i : probes(a.values.size(), g, 16))
                disc_worst = std::max(disc_worst, oracle::relative_error(grads.at(name).values[i],
                                                                         oracle::central_difference(
                                                                             objective, a.values[i], 1e-5),
                                                                         1e-6));
        }
        const std::size_t plane = static_cast<std::size_t>(3) * 48 * 48;
        for (std::size_t i : probes(c.size(), g, 16)) {
            const std::size_t n = i / plane, rest = i % plane;
            const double ana = dx.data[n * 2 * plane + plane + rest];
            disc_worst = std::max(disc_worst, oracle::relative_error(
                                                  ana, oracle::central_difference(objective, c.data[i], 1e-5), 1e-6));
        }
        o.require(disc_worst < 1e-3, fmt("discriminator gradient rel err %.3g", disc_worst));
    }
    if (o.pass)
        o.detail = fmt("worst rel err: generator %.2g, discriminator %.2g", gen_worst, disc_worst);
    return o;
}

// ---- 3 ----------------------------------------------------------------------

Outcome haze_round_trip() {
    Outcome o;
    std::mt19937_64 g(5);
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto J = oracle::random_image(16, 16, 3, 1000 + trial);
        ScalarField d(16, 16);
        for (auto& v : d.values)
            v = std::uniform_real_distribution<float>(0.0f, 2.0f)(g);
        const auto p = HazeParams::uniform_airlight(std::uniform_real_distribution<float>(0.0f, 1.0f)(g),
                                                    std::uniform_real_distribution<double>(0.1, 3.0)(g), d);
        const auto back = invert_haze(compose_haze(J, p), p);
        const auto t = transmission(p.beta, p.depth);
        for (int i = 0; i < 256; ++i)
            if (t.values[i] >= 0.05f)
                for (int c = 0; c < 3; ++c)
                    worst = std::max(worst, static_cast<double>(std::abs(back.data()[i * 3 + c] - J.data()[i * 3 + c])));
    }
    o.require(worst < 1e-5, fmt("max round-trip error %.3g", worst));
    if (o.pass)
        o.detail = fmt("max error %.2g over 50 trials", worst);
    return o;
}

// ---- 4 ----------------------------------------------------------------------

Outcome metric_oracles() {
    Outcome o;
    double dp = 0, ds = 0, df = 0;
    for (int s = 0; s < 20; ++s) {
        const auto a = oracle::random_image(32, 32, 3, 100 + s), b = oracle::random_image(32, 32, 3, 200 + s);
        dp = std::max(dp, std::abs(psnr(a, b) - oracle::psnr(a, b)));
        ds = std::max(ds, std::abs(ssim(a, b) - oracle::ssim(a, b)));
        df = std::max(df, std::abs(fsim(a, b) - oracle::fsim(a, b)));
    }
    o.require(dp < 1e-6, fmt("PSNR diff %.3g dB", dp));
    o.require(ds < 1e-5, fmt("SSIM diff %.3g", ds));
    o.require(df < 5e-3, fmt("FSIM diff %.3g", df));
    const auto a = oracle::random_textured_image(32, 32, 9);
    o.require(psnr(a, a) == 100.0, "identical PSNR");
    o.require(ssim(a, a) == 1.0, "identical SSIM");
    o.require(fsim(a, a) == 1.0, "identical FSIM");
    if (o.pass)
        o.detail = fmt("max diffs: PSNR %.2g dB, SSIM %.2g, FSIM %.2g", dp, ds, df);
    return o;
}

// ---- 5 ----------------------------------------------------------------------

Outcome shapes_and_ranges() {
    Outcome o;
    const GeneratorSpec gs;
    const DiscriminatorSpec ds;
    const auto gp = build_generator(gs, 1);
    const auto x = random_signed<float>(1, 3, 256, 256, 2);
    const auto y = generator_forward(gp, gs, x);
    o.require(y.n == 1 && y.c == 3 && y.h == 256 && y.w == 256, "generator output shape");
    for (float v : y.data)
        if (!(v > -1.0f && v < 1.0f)) {
            o.require(false, "generator output outside (-1, 1)");
            break;
        }

    auto dp = build_discriminator(ds, 2);
    const auto logits = discriminator_forward(dp, ds, x, y, NormMode::Eval);
    const int expect = oracle::discriminator_out_size(256);
    o.require(expect == 14 && logits.c == 1 && logits.h == expect && logits.w == expect,
              fmt("logit map %dx%dx%d", logits.h, logits.w, logits.c));

    auto gz = gp;
    for (auto& [name, a] : gz.entries())
        std::fill(a.values.begin(), a.values.end(), 0.0f);
    for (float v : generator_forward(gz, gs, x).data)
        if (v != 0.0f) {
            o.require(false, "zero generator output not 0");
            break;
        }
    auto dz = dp;
    for (auto& [name, a] : dz.entries())
        if (a.trainable)
            std::fill(a.values.begin(), a.values.end(), 0.0f);
    for (float v : discriminator_forward(dz, ds, x, y, NormMode::Eval).data)
        if (sigmoid(v) != 0.5) {
            o.require(false, "zero discriminator probability not 0.5");
            break;
        }
    if (o.pass)
        o.detail = fmt("G(64, 3 blocks) 256x256x3 -> 256x256x3, D(64) -> %dx%dx1", expect, expect);
    return o;
}

// ---- 6 and 8 ----------------------------------------------------------------

struct TrainedModel {
    TrainConfig cfg;
    std::optional<TrainState> state;
};

TrainConfig desk_config() {
    TrainConfig c;
    c.generator = {16, 1};
    c.discriminator = {16};
    c.seed = 7;
    c.epochs = 5;
    c.batch_size = 1;
    return c;
}

Outcome desk_training(TrainedModel& model) {
    Outcome o;
    SynthOptions so;
    so.count = 64;
    so.seed = 7;
    so.size = 256;
    so.severities = {Severity::Moderate};
    const auto all = write_synthetic_dataset(so, work() / "c6_data");
    const PairedDataset train_set{"train", Split::Train, {all.pairs.begin(), all.pairs.begin() + 48}};
    const PairedDataset test_set{"test", Split::Test, {all.pairs.begin() + 48, all.pairs.end()}};

    model.cfg = desk_config();
    const auto pairs = load_training_pairs(train_set, model.cfg);
    std::vector<LossReport> trace;
    Trainer t(model.cfg, pairs);
    try {
        trace = t.run();
    } catch (const Error& e) {
        o.require(e.kind() != ErrorKind::NonFiniteLoss, std::string("NonFiniteLoss: ") + e.what());
        throw;
    }
    model.state = t.state();

    double hazy = 0, dehazed = 0;
    for (const auto& p : test_set.pairs) {
        const auto h = load_image(p.hazy), c = load_image(p.clear);
        hazy += psnr(h, c);
        dehazed += psnr(quantize_like_file(t.dehaze(h)), c);
    }
    hazy /= 16;
    dehazed /= 16;
    o.require(dehazed - hazy >= 2.0, fmt("gain %.3f dB below 2 dB", dehazed - hazy));

    Trainer again(model.cfg, pairs);
    const auto trace2 = again.run();
    o.require(trace2 == trace, "rerun loss trace differs");
    o.detail += (o.detail.empty() ? "" : "; ") +
                fmt("%zu steps finite, hazy %.3f dB -> dehazed %.3f dB (gain %.3f), rerun identical", trace.size(),
                    hazy, dehazed, dehazed - hazy);
    return o;
}

Outcome gradcam_behaviour(const TrainedModel& model) {
    Outcome o;
    if (!model.state) {
        o.require(false, "criterion 6 produced no model");
        return o;
    }
    const auto& params = model.state->generator;
    const auto& spec = model.cfg.generator;

    int hazy_wins = 0;
    std::string per_image;
    for (int s = 0; s < 5; ++s) {
        const auto clear = procedural_texture(256, 256, Rng::derive(99, s, 1));
        ScalarField depth(256, 256, 0.0f);
        for (int y = 0; y < 256; ++y)
            for (int x = 0; x < 128; ++x)
                depth.values[y * 256 + x] = static_cast<float>(std::log(2.0));
        const auto hazy = compose_haze(clear, HazeParams::uniform_airlight(0.9f, 1.0, depth));

        auto halves = [&](CamTarget target) {
            const auto r = grad_cam(params, spec, hazy, kDefaultCamLayer, target);
            double left = 0, right = 0;
            for (int y = 0; y < 256; ++y)
                for (int x = 0; x < 256; ++x)
                    (x < 128 ? left : right) += r.heatmap.values[y * 256 + x];
            return std::pair{left / (256 * 128), right / (256 * 128)};
        };
        const auto [l, r] = halves(CamTarget::ResidualMagnitude);
        hazy_wins += l > r;
        per_image += fmt("%s%.3f/%.3f", s ? " " : "", l, r);

        const auto [ml, mr] = halves(CamTarget::MeanOutput);
        const auto out = to_unit(from_batch(generator_forward(params, spec, to_batch<float>(to_signed(hazy))), 0,
                                            RangeTag::Signed));
        double rl = 0, rr = 0;
        for (int y = 0; y < 256; ++y)
            for (int x = 0; x < 256; ++x)
                for (int c = 0; c < 3; ++c)
                    (x < 128 ? rl : rr) += std::abs(out.at(y, x, c) - hazy.at(y, x, c));
        info(fmt("image %d: residual-target heat hazy %.4f clear %.4f | mean-target heat hazy %.4f clear %.4f | "
                 "|G(I)-I| hazy %.4f clear %.4f",
                 s, l, r, ml, mr, rl / (3.0 * 256 * 128), rr / (3.0 * 256 * 128)));
    }
    o.require(hazy_wins == 5, fmt("hazy half hotter on %d of 5 images (hazy/clear: %s)", hazy_wins, per_image.c_str()));

    std::mt19937_64 g(8);
    for (int i = 0; i < 10; ++i) {
        const int h = 4 * (8 + static_cast<int>(g() % 17)), w = 4 * (8 + static_cast<int>(g() % 17));
        const auto img = oracle::random_image(h, w, 3, 300 + i);
        const auto r = grad_cam(params, spec, img);
        bool ok = r.heatmap.height == h && r.heatmap.width == w && r.overlay.height() == h && r.overlay.width() == w;
        for (float v : r.heatmap.values)
            ok = ok && v >= 0.0f && v <= 1.0f;
        for (float v : r.overlay.data())
            ok = ok && v >= 0.0f && v <= 1.0f;
        o.require(ok, fmt("bounds/shape violated on random input %d (%dx%d)", i, h, w));
    }
    if (o.pass)
        o.detail = "hazy half hotter on 5 of 5 images; bounds and shapes hold on 10 random inputs";
    else
        o.detail += "; bounds and shapes on 10 random inputs checked";
    return o;
}

// ---- 7 ----------------------------------------------------------------------

constexpr int kOverfitSize = 256;
constexpr double kOverfitThreshold = 0.05;

Outcome overfit() {
    Outcome o;
    SynthOptions so;
    so.count = 4;
    so.seed = 11;
    so.size = kOverfitSize;
    so.severities = {Severity::Moderate};
    const auto ds = write_synthetic_dataset(so, work() / "c7_data");
    TrainConfig cfg = desk_config();
    cfg.seed = 11;
    cfg.image_size = kOverfitSize;
    cfg.epochs = 500;
    Trainer t(cfg, load_training_pairs(ds, cfg));
    const auto trace = t.run(2000);
    double tail = 0;
    for (std::size_t i = trace.size() - 4; i < trace.size(); ++i)
        tail += trace[i].l_l1;
    tail /= 4;
    o.require(trace.size() == 2000, "fewer than 2000 steps");
    o.require(tail < kOverfitThreshold, fmt("final-epoch l_l1 %.4f not below %.2f", tail, kOverfitThreshold));
    if (o.pass)
        o.detail = fmt("final-epoch l_l1 %.4f after 2000 steps", tail);
    return o;
}

// ---- 9 ----------------------------------------------------------------------

Outcome resume_equivalence() {
    Outcome o;
    TrainConfig cfg;
    cfg.generator = {8, 1};
    cfg.discriminator = {8};
    cfg.image_size = 48;
    cfg.epochs = 10;
    cfg.seed = 9;
    SynthOptions so;
    so.count = 4;
    so.size = 48;
    so.seed = 9;
    const auto pairs = load_training_pairs(write_synthetic_dataset(so, work() / "c9_data"), cfg);

    Trainer full(cfg, pairs);
    const auto all = full.run(20);
    Trainer first(cfg, pairs);
    const auto head = first.run(10);
    const auto ckpt = work() / "c9_mid.ckpt";
    save_train_state(ckpt, first.state(), cfg);
    Trainer second(cfg, pairs);
    second.restore(load_train_state(ckpt));
    const auto tail = second.run(10);

    o.require(all.size() == 20 && head.size() == 10 && tail.size() == 10, "step counts");
    o.require(std::equal(head.begin(), head.end(), all.begin()) &&
                  std::equal(tail.begin(), tail.end(), all.begin() + 10),
              "loss trace differs");
    o.require(second.state().generator == full.state().generator, "generator differs");
    o.require(second.state().discriminator == full.state().discriminator, "discriminator differs");
    o.require(second.state().generator_opt == full.state().generator_opt &&
                  second.state().discriminator_opt == full.state().discriminator_opt,
              "optimizer state differs");
    if (o.pass)
        o.detail = "10 + save/load + 10 steps equals 20 steps bit-for-bit";
    return o;
}

// ---- 10 ---------------------------------------------------------------------

void write_pairs(const fs::path& dir, const std::string& hazy, const std::string& clear, int n) {
    fs::create_directories(dir / hazy);
    fs::create_directories(dir / clear);
    for (int i = 0; i < n; ++i) {
        const std::string name = fmt("img_%04d.png", i);
        save_image(oracle::random_image(4, 4, 3, 2 * i), dir / hazy / name);
        save_image(oracle::random_image(4, 4, 3, 2 * i + 1), dir / clear / name);
    }
}

Outcome dataset_plumbing() {
    Outcome o;
    const auto rice = work() / "c10_rice";
    write_pairs(rice, "cloud", "label", 20);
    const auto [train, test] = load_rice(rice, 0.9, 11);
    o.require(train.size() == 18 && test.size() == 2, fmt("RICE split %zu/%zu", train.size(), test.size()));
    std::set<std::string> ids;
    for (const auto* d : {&train, &test})
        for (const auto& p : d->pairs)
            ids.insert(p.id);
    o.require(ids.size() == 20, "RICE split is not a partition");
    const auto again = load_rice(rice, 0.9, 11);
    o.require(again.first.pairs == train.pairs && again.second.pairs == test.pairs, "RICE split not deterministic");

    const auto haze1k = work() / "c10_haze1k";
    write_pairs(haze1k / "train", "input", "target", 3);
    for (const char* s : {"test_thin", "test_moderate", "test_thick"})
        write_pairs(haze1k / s, "input", "target", 2);
    const auto sets = load_haze1k(haze1k);
    o.require(sets.size() == 4 && sets.at(Split::Train).size() == 3, "Haze1k layout not loaded");
    save_image(oracle::random_image(4, 4, 3, 99), haze1k / "test_thin" / "input" / "stray_0001.png");
    try {
        load_haze1k(haze1k);
        o.require(false, "unpaired image accepted");
    } catch (const Error& e) {
        o.require(e.kind() == ErrorKind::UnpairedImage, "wrong error kind " + std::string(to_string(e.kind())));
        o.require(std::string(e.what()).find("stray_0001.png") != std::string::npos, "filename missing from error");
    }
    if (o.pass)
        o.detail = "RICE 20 -> 18/2 deterministic partition; Haze1k UnpairedImage names stray_0001.png";
    return o;
}

} // namespace

int main(int argc, char** argv) {
    // Optional arguments restrict the run to the listed criterion numbers.
    for (int i = 1; i < argc; ++i)
        g_only.insert(std::atoi(argv[i]));
    std::printf("acceptance run, work directory %s\n", work().string().c_str());
    criterion(1, "equation fidelity", 10, equation_fidelity);
    criterion(2, "gradient suite", 60, gradient_suite);
    criterion(3, "haze round trip", 10, haze_round_trip);
    criterion(4, "metric oracles", 120, metric_oracles);
    criterion(5, "shapes and ranges", 30, shapes_and_ranges);
    TrainedModel model;
    criterion(6, "desk-scale training", 0, [&] { return desk_training(model); });
    criterion(7, "overfit 4 pairs", 0, overfit);
    criterion(8, "grad-cam on half-hazy image", 0, [&] { return gradcam_behaviour(model); });
    criterion(9, "resume equivalence", 0, resume_equivalence);
    criterion(10, "dataset plumbing", 0, dataset_plumbing);
    std::printf("%d criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
