// dehaze: synthesize | train | infer | eval | explain
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dehaze/dataset.hpp"
#include "dehaze/error.hpp"
#include "dehaze/generator.hpp"
#include "dehaze/gradcam.hpp"
#include "dehaze/metrics.hpp"
#include "dehaze/png_io.hpp"
#include "dehaze/trainer.hpp"

namespace fs = std::filesystem;
using namespace dehaze;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

bool g_quiet = false;

void print_config(const std::string& cmd, const std::vector<std::pair<std::string, std::string>>& kv) {
    if (g_quiet)
        return;
    std::cout << "[" << cmd << "] resolved config\n";
    for (const auto& [k, v] : kv)
        std::cout << "  " << k << " = " << v << "\n";
    std::cout.flush();
}

void write_text(const fs::path& p, const std::string& s) {
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
    std::ofstream os(p);
    os << s;
    if (!os)
        fail(ErrorKind::IoError, "cannot write " + p.string());
}

void make_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec)
        fail(ErrorKind::IoError, "cannot create " + p.string() + ": " + ec.message());
}

// ---- synthesize -----------------------------------------------------------

struct SynthArgs {
    std::string out;
    std::size_t n = 8;
    std::vector<std::string> severity{"moderate"};
    std::uint64_t seed = 0;
    int size = 256;
};

int run_synthesize(const SynthArgs& a) {
    SynthOptions opt;
    opt.count = a.n;
    opt.seed = a.seed;
    opt.size = a.size;
    opt.severities.clear();
    for (const auto& s : a.severity)
        opt.severities.push_back(parse_severity(s));
    if (opt.size < 4)
        throw UsageError("--size must be >= 4");
    std::string sev;
    for (const auto& s : a.severity)
        sev += (sev.empty() ? "" : ",") + s;
    print_config("synthesize", {{"out", a.out}, {"n", std::to_string(a.n)}, {"severity", sev},
                                {"seed", std::to_string(a.seed)}, {"size", std::to_string(a.size)}});
    const auto ds = write_synthetic_dataset(opt, a.out);
    if (!g_quiet)
        std::cout << "wrote " << ds.size() << " pairs to " << a.out << "\n";
    return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::vector<std::string> set;
    std::string resume;
};

PairedDataset training_set(const TrainConfig& cfg) {
    if (cfg.data_root.empty())
        fail(ErrorKind::InvalidConfig, "data_root is not set");
    if (cfg.dataset == "haze1k")
        return load_haze1k(cfg.data_root).at(Split::Train);
    if (cfg.dataset == "rice")
        return load_rice(cfg.data_root, cfg.train_fraction, cfg.seed).first;
    DatasetLayout layout = detail::layout_with_manifest(DatasetLayout{}, cfg.data_root);
    return load_paired_dir(cfg.data_root, layout.hazy_subdir, layout.clear_subdir, Split::Train, "paired");
}

int run_train(const TrainArgs& a) {
    TrainConfig cfg;
    if (!a.config.empty())
        cfg.apply(read_key_values(a.config));
    for (const auto& s : a.set) {
        const auto [k, v] = parse_assignment(s);
        cfg.set(k, v);
    }
    cfg.validate();
    auto kv = cfg.to_key_values();
    std::vector<std::pair<std::string, std::string>> shown(kv.begin(), kv.end());
    if (!a.resume.empty())
        shown.emplace_back("resume", a.resume);
    print_config("train", shown);

    const PairedDataset ds = training_set(cfg);
    std::optional<fs::path> resume;
    if (!a.resume.empty())
        resume = a.resume;
    const long long every = g_quiet ? 0 : 10;
    const auto summary = train(cfg, ds, cfg.out_dir, resume, [&](const LossReport& r) {
        if (every && r.step % every == 0) {
            std::printf("step %6lld  l_gen %.5f  l_l1 %.5f  l_gan %.5f  l_d %.5f\n", static_cast<long long>(r.step),
                        r.l_gen, r.l_l1, r.l_gan, r.l_d);
            std::fflush(stdout);
        }
    });
    if (!g_quiet)
        std::cout << "finished " << summary.state.step << " steps in " << summary.wall_seconds << " s; outputs in "
                  << cfg.out_dir << "\n";
    return 0;
}

// ---- infer ----------------------------------------------------------------

struct InferArgs {
    std::string gen, in, out;
};

std::vector<fs::path> input_images(const fs::path& in) {
    std::error_code ec;
    if (fs::is_regular_file(in, ec))
        return {in};
    if (!fs::is_directory(in, ec))
        fail(ErrorKind::FileNotFound, in.string());
    std::vector<fs::path> files;
    for (const auto& f : detail::list_images(in))
        files.push_back(in / f);
    if (files.empty())
        fail(ErrorKind::EmptyDataset, "no images in " + in.string());
    return files;
}

ImageTensor dehaze_image(const LoadedGenerator& g, const ImageTensor& img) {
    if (img.channels() != 3)
        fail(ErrorKind::ChannelMismatch, "generator expects RGB input");
    const Tensor<float> y = generator_forward(g.params, g.spec, to_batch<float>(to_signed(img)));
    return to_unit(from_batch(y, 0, RangeTag::Signed));
}

int run_infer(const InferArgs& a) {
    print_config("infer", {{"gen", a.gen}, {"in", a.in}, {"out", a.out}});
    const LoadedGenerator g = load_generator(a.gen);
    const auto files = input_images(a.in);
    make_dir(a.out);
    for (const auto& f : files) {
        try {
            save_image(dehaze_image(g, load_image(f)), fs::path(a.out) / (f.stem().string() + ".png"));
        } catch (const Error& e) {
            throw Error(e.kind(), f.filename().string() + ": " + e.what());
        }
    }
    if (!g_quiet)
        std::cout << "dehazed " << files.size() << " image(s) into " << a.out << "\n";
    return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
    std::string pred, gt, report, name = "set";
};

int run_eval(const EvalArgs& a) {
    print_config("eval", {{"pred", a.pred}, {"gt", a.gt}, {"report", a.report}, {"name", a.name}});
    const MetricReport r = evaluate_set(match_directory_pairs(a.pred, a.gt), a.name);
    const nlohmann::json j = r;
    write_text(a.report, j.dump(2) + "\n");
    std::cout << "resolution " << r.resolution << ", " << r.per_image.size() << " image(s), PSNR cap "
              << kPsnrCap << " dB\n"
              << metrics_table({r});
    return 0;
}

// ---- explain --------------------------------------------------------------

struct ExplainArgs {
    std::string gen, in, out;
    std::string layer = kDefaultCamLayer;
    std::string target = "residual";
};

int run_explain(const ExplainArgs& a) {
    const CamTarget target = parse_cam_target(a.target);
    print_config("explain", {{"gen", a.gen}, {"in", a.in}, {"layer", a.layer},
                             {"target", std::string(to_string(target))}, {"out", a.out}});
    const LoadedGenerator g = load_generator(a.gen);
    const ImageTensor img = load_image(a.in);
    if (img.channels() != 3)
        fail(ErrorKind::ChannelMismatch, "generator expects RGB input");
    const CamResult r = grad_cam(g.params, g.spec, img, a.layer, target);

    make_dir(a.out);
    const std::string stem = fs::path(a.in).stem().string();
    const fs::path out(a.out);
    save_image(r.dehazed, out / (stem + "_dehazed.png"));
    save_image(ImageTensor(r.heatmap.height, r.heatmap.width, 1, RangeTag::Unit, r.heatmap.values),
               out / (stem + "_heatmap.png"));
    save_image(r.overlay, out / (stem + "_overlay.png"));

    double amin = 0, amax = 0, amean = 0, apos = 0;
    if (!r.alpha.empty()) {
        amin = *std::min_element(r.alpha.begin(), r.alpha.end());
        amax = *std::max_element(r.alpha.begin(), r.alpha.end());
        for (double v : r.alpha) {
            amean += v;
            apos += v > 0.0;
        }
        amean /= static_cast<double>(r.alpha.size());
    }
    nlohmann::json j = {{"input", fs::path(a.in).filename().string()},
                        {"target_layer", r.target_layer},
                        {"target_kind", std::string(to_string(r.target_kind))},
                        {"target_value", r.target_value},
                        {"heatmap_mean", r.heatmap.mean()},
                        {"alpha", {{"count", r.alpha.size()},
                                   {"min", amin},
                                   {"max", amax},
                                   {"mean", amean},
                                   {"positive", apos}}}};
    write_text(out / (stem + "_cam.json"), j.dump(2) + "\n");
    if (!g_quiet)
        std::cout << "wrote " << stem << "_{dehazed,heatmap,overlay}.png and " << stem << "_cam.json to " << a.out
                  << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Single-image dehazing toolkit"};
    app.require_subcommand(1);
    app.add_flag("-q,--quiet", g_quiet, "Suppress progress and resolved-config output");

    SynthArgs sa;
    auto* synth = app.add_subcommand("synthesize", "Write a synthetic hazy/clear dataset");
    synth->add_option("--out", sa.out, "Output directory")->required();
    synth->add_option("--n", sa.n, "Number of pairs")->check(CLI::PositiveNumber);
    synth->add_option("--severity", sa.severity, "thin, moderate or thick (repeatable; cycled over pairs)")
        ->delimiter(',');
    synth->add_option("--seed", sa.seed, "Random seed");
    synth->add_option("--size", sa.size, "Image side length in pixels");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Train generator and discriminator");
    tr->add_option("--config", ta.config, "Key-value config file")->check(CLI::ExistingFile);
    tr->add_option("--set", ta.set, "Override a config key (key=value, repeatable)");
    tr->add_option("--resume", ta.resume, "Training-state checkpoint to continue from")->check(CLI::ExistingFile);

    InferArgs ia;
    auto* inf = app.add_subcommand("infer", "Dehaze images with a trained generator");
    inf->add_option("--gen", ia.gen, "Generator checkpoint")->required()->check(CLI::ExistingFile);
    inf->add_option("--in", ia.in, "Input image or directory")->required();
    inf->add_option("--out", ia.out, "Output directory")->required();

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "PSNR / SSIM / FSIM of predictions against ground truth");
    ev->add_option("--pred", ea.pred, "Prediction directory")->required();
    ev->add_option("--gt", ea.gt, "Ground-truth directory (matching filenames)")->required();
    ev->add_option("--report", ea.report, "JSON report path")->required();
    ev->add_option("--name", ea.name, "Column label in the table");

    ExplainArgs xa;
    auto* ex = app.add_subcommand("explain", "Grad-CAM heatmap for one image");
    ex->add_option("--gen", xa.gen, "Generator checkpoint")->required()->check(CLI::ExistingFile);
    ex->add_option("--in", xa.in, "Input image")->required();
    ex->add_option("--layer", xa.layer, "Generator activation name");
    ex->add_option("--target", xa.target, "residual or mean")->check(CLI::IsMember({"residual", "mean"}));
    ex->add_option("--out", xa.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        const CLI::App* shown = &app;
        for (const CLI::App* s : {synth, tr, inf, ev, ex})
            if (s->parsed())
                shown = s;
        std::cerr << shown->help();
        return 1;
    }

    try {
        if (*synth)
            return run_synthesize(sa);
        if (*tr)
            return run_train(ta);
        if (*inf)
            return run_infer(ia);
        if (*ev)
            return run_eval(ea);
        if (*ex)
            return run_explain(xa);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n" << app.help();
        return 1;
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
        switch (e.kind()) {
        case ErrorKind::InvalidConfig:
        case ErrorKind::InvalidArgument:
        case ErrorKind::UnknownLayer:
        case ErrorKind::NonSpatialLayer:
            return 1;
        default:
            return 2;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
