#ifndef DEHAZE_DATASET_HPP
#define DEHAZE_DATASET_HPP

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dehaze/error.hpp"
#include "dehaze/haze.hpp"
#include "dehaze/image.hpp"
#include "dehaze/kv_config.hpp"
#include "dehaze/metrics.hpp"
#include "dehaze/png_io.hpp"
#include "dehaze/rng.hpp"

namespace dehaze {

namespace fs = std::filesystem;

enum class Split { Train, Test, TestThin, TestModerate, TestThick };

inline std::string_view to_string(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::TestThin: return "test-thin";
    case Split::TestModerate: return "test-moderate";
    case Split::TestThick: return "test-thick";
    }
    return "?";
}

struct ImagePair {
    std::string id;
    fs::path hazy;
    fs::path clear;

    friend bool operator==(const ImagePair&, const ImagePair&) = default;
};

/// Ordered (hazy, clear) pairs; ids unique and sorted lexicographically.
struct PairedDataset {
    std::string name;
    Split split = Split::Train;
    std::vector<ImagePair> pairs;

    std::size_t size() const noexcept { return pairs.size(); }
    bool empty() const noexcept { return pairs.empty(); }
};

/// On-disk naming of a paired dataset. Defaults can be overridden by a
/// `manifest.txt` (key = value) in the dataset root:
///   hazy_subdir, clear_subdir, split.train, split.test, split.test-thin,
///   split.test-moderate, split.test-thick
struct DatasetLayout {
    std::string hazy_subdir = "input";
    std::string clear_subdir = "target";
    std::map<Split, std::string> split_dirs;

    static DatasetLayout haze1k() {
        DatasetLayout l;
        l.split_dirs = {{Split::Train, "train"},
                        {Split::TestThin, "test_thin"},
                        {Split::TestModerate, "test_moderate"},
                        {Split::TestThick, "test_thick"}};
        return l;
    }

    static DatasetLayout rice() {
        DatasetLayout l;
        l.hazy_subdir = "cloud";
        l.clear_subdir = "label";
        return l;
    }

    void apply(const KeyValues& kv) {
        for (const auto& [k, v] : kv) {
            if (k == "hazy_subdir")
                hazy_subdir = v;
            else if (k == "clear_subdir")
                clear_subdir = v;
            else if (k == "split.train")
                split_dirs[Split::Train] = v;
            else if (k == "split.test")
                split_dirs[Split::Test] = v;
            else if (k == "split.test-thin")
                split_dirs[Split::TestThin] = v;
            else if (k == "split.test-moderate")
                split_dirs[Split::TestModerate] = v;
            else if (k == "split.test-thick")
                split_dirs[Split::TestThick] = v;
            else
                fail(ErrorKind::InvalidConfig, "unknown manifest key '" + k + "'");
        }
    }
};

inline constexpr const char* kManifestName = "manifest.txt";

namespace detail {

inline bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".tif" || ext == ".tiff" || ext == ".bmp";
}

inline std::set<std::string> list_images(const fs::path& dir) {
    std::set<std::string> names;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && !name.starts_with(".") && is_image_file(entry.path()))
            names.insert(name);
    }
    if (ec)
        fail(ErrorKind::IoError, "cannot list " + dir.string() + ": " + ec.message());
    return names;
}

inline DatasetLayout layout_with_manifest(DatasetLayout layout, const fs::path& root) {
    const fs::path manifest = root / kManifestName;
    std::error_code ec;
    if (fs::is_regular_file(manifest, ec))
        layout.apply(read_key_values(manifest));
    return layout;
}

} // namespace detail

/// Pairs `<dir>/<hazy_subdir>/<file>` with `<dir>/<clear_subdir>/<file>` by
/// filename and validates that both images exist with matching dimensions.
inline PairedDataset load_paired_dir(const fs::path& dir, const std::string& hazy_subdir,
                                     const std::string& clear_subdir, Split split, const std::string& name) {
    const fs::path hazy_dir = dir / hazy_subdir, clear_dir = dir / clear_subdir;
    std::error_code ec;
    if (!fs::is_directory(hazy_dir, ec) || !fs::is_directory(clear_dir, ec))
        fail(ErrorKind::MissingSplit, "expected " + hazy_dir.string() + " and " + clear_dir.string());
    const auto hazy = detail::list_images(hazy_dir);
    const auto clear = detail::list_images(clear_dir);
    for (const auto& h : hazy)
        if (!clear.count(h))
            fail(ErrorKind::UnpairedImage, "hazy image '" + h + "' in " + hazy_dir.string() + " has no clear counterpart");
    for (const auto& c : clear)
        if (!hazy.count(c))
            fail(ErrorKind::UnpairedImage, "clear image '" + c + "' in " + clear_dir.string() + " has no hazy counterpart");

    PairedDataset ds;
    ds.name = name;
    ds.split = split;
    std::set<std::string> ids;
    for (const auto& file : hazy) {
        ImagePair p{fs::path(file).stem().string(), hazy_dir / file, clear_dir / file};
        if (!ids.insert(p.id).second)
            fail(ErrorKind::InvalidArgument, "duplicate image id '" + p.id + "' in " + hazy_dir.string());
        const ImageInfo a = read_image_info(p.hazy);
        const ImageInfo b = read_image_info(p.clear);
        if (a.height != b.height || a.width != b.width)
            fail(ErrorKind::ShapeMismatch, "pair '" + p.id + "' has mismatched dimensions");
        ds.pairs.push_back(std::move(p));
    }
    std::sort(ds.pairs.begin(), ds.pairs.end(), [](const ImagePair& a, const ImagePair& b) { return a.id < b.id; });
    return ds;
}

inline constexpr std::size_t kHaze1kTrainSize = 900;
inline constexpr std::size_t kHaze1kTestSize = 45;

/// Haze1k layout: train / test_thin / test_moderate / test_thick, each with
/// input/ and target/. In strict mode the split sizes must be 900/45/45/45.
inline std::map<Split, PairedDataset> load_haze1k(const fs::path& root, bool strict = false) {
    std::error_code ec;
    if (!fs::is_directory(root, ec))
        fail(ErrorKind::MissingSplit, "dataset root " + root.string() + " does not exist");
    const DatasetLayout layout = detail::layout_with_manifest(DatasetLayout::haze1k(), root);
    std::map<Split, PairedDataset> out;
    for (const Split s : {Split::Train, Split::TestThin, Split::TestModerate, Split::TestThick}) {
        const auto it = layout.split_dirs.find(s);
        if (it == layout.split_dirs.end())
            fail(ErrorKind::MissingSplit, "layout has no directory for split " + std::string(to_string(s)));
        const fs::path dir = root / it->second;
        if (!fs::is_directory(dir, ec))
            fail(ErrorKind::MissingSplit, "missing split directory " + dir.string());
        PairedDataset ds = load_paired_dir(dir, layout.hazy_subdir, layout.clear_subdir, s,
                                           "haze1k-" + std::string(to_string(s)));
        if (strict) {
            const std::size_t want = s == Split::Train ? kHaze1kTrainSize : kHaze1kTestSize;
            if (ds.size() != want)
                fail(ErrorKind::SizeMismatch, "split " + std::string(to_string(s)) + " has " +
                                                  std::to_string(ds.size()) + " pairs, expected " +
                                                  std::to_string(want));
        }
        out.emplace(s, std::move(ds));
    }
    return out;
}

/// Deterministic train/test split: ids sorted, shuffled with a permutation
/// seeded by `seed`, the first floor(fraction * n) go to train.
inline std::pair<PairedDataset, PairedDataset> split_dataset(const PairedDataset& all, double train_fraction,
                                                             std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
        fail(ErrorKind::InvalidArgument, "train fraction must lie in (0,1]");
    if (all.empty())
        fail(ErrorKind::EmptyDataset, "cannot split empty dataset '" + all.name + "'");
    std::vector<ImagePair> sorted = all.pairs;
    std::sort(sorted.begin(), sorted.end(), [](const ImagePair& a, const ImagePair& b) { return a.id < b.id; });
    Rng rng(seed);
    const auto perm = rng.permutation(sorted.size());
    const auto n_train =
        static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(sorted.size()) + 1e-9));
    PairedDataset train{all.name + "-train", Split::Train, {}};
    PairedDataset test{all.name + "-test", Split::Test, {}};
    for (std::size_t i = 0; i < perm.size(); ++i)
        (i < n_train ? train : test).pairs.push_back(sorted[perm[i]]);
    auto by_id = [](const ImagePair& a, const ImagePair& b) { return a.id < b.id; };
    std::sort(train.pairs.begin(), train.pairs.end(), by_id);
    std::sort(test.pairs.begin(), test.pairs.end(), by_id);
    return {std::move(train), std::move(test)};
}

/// RICE layout: cloud/ (hazy) and label/ (clear) with matching filenames.
inline std::pair<PairedDataset, PairedDataset> load_rice(const fs::path& root, double train_fraction = 0.9,
                                                         std::uint64_t seed = 0) {
    const DatasetLayout layout = detail::layout_with_manifest(DatasetLayout::rice(), root);
    PairedDataset all = load_paired_dir(root, layout.hazy_subdir, layout.clear_subdir, Split::Train, "rice");
    if (all.empty())
        fail(ErrorKind::EmptyDataset, "no image pairs under " + root.string());
    return split_dataset(all, train_fraction, seed);
}

/// Pairs files of two directories by filename (for evaluation).
inline std::vector<EvalPair> match_directory_pairs(const fs::path& pred_dir, const fs::path& gt_dir) {
    std::error_code ec;
    if (!fs::is_directory(pred_dir, ec))
        fail(ErrorKind::FileNotFound, "prediction directory " + pred_dir.string());
    if (!fs::is_directory(gt_dir, ec))
        fail(ErrorKind::FileNotFound, "ground-truth directory " + gt_dir.string());
    const auto pred = detail::list_images(pred_dir);
    const auto gt = detail::list_images(gt_dir);
    std::vector<EvalPair> out;
    for (const auto& f : pred) {
        if (!gt.count(f))
            fail(ErrorKind::UnpairedImage, "prediction '" + f + "' has no ground truth in " + gt_dir.string());
        out.push_back({fs::path(f).stem().string(), pred_dir / f, gt_dir / f});
    }
    for (const auto& f : gt)
        if (!pred.count(f))
            fail(ErrorKind::UnpairedImage, "ground truth '" + f + "' has no prediction in " + pred_dir.string());
    if (out.empty())
        fail(ErrorKind::EmptyDataset, "no images in " + pred_dir.string());
    return out;
}

/// Seeded clear-scene texture: a two-colour gradient with soft blobs and a
/// faint stripe pattern.
inline ImageTensor procedural_texture(int height, int width, std::uint64_t seed) {
    Rng rng(seed);
    auto color = [&](double lo, double hi) {
        return std::array<double, 3>{rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
    };
    const auto c0 = color(0.05, 0.6), c1 = color(0.2, 0.9);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double dx = std::cos(angle), dy = std::sin(angle);

    struct Blob {
        double cx, cy, r;
        std::array<double, 3> col;
        double alpha;
    };
    std::vector<Blob> blobs(3 + rng.below(4));
    const double scale = std::min(height, width);
    for (auto& b : blobs)
        b = {rng.uniform(0.0, width), rng.uniform(0.0, height), rng.uniform(0.05, 0.25) * scale, color(0.0, 1.0),
             rng.uniform(0.4, 0.9)};

    const double freq = rng.uniform(4.0, 16.0) * 2.0 * std::numbers::pi / scale;
    const double s_angle = rng.uniform(0.0, std::numbers::pi);
    const double sx = std::cos(s_angle), sy = std::sin(s_angle);
    const double s_amp = rng.uniform(0.05, 0.15);
    const auto s_col = color(0.3, 1.0);

    std::vector<float> data(static_cast<std::size_t>(height) * width * 3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double u = ((x - width / 2.0) * dx + (y - height / 2.0) * dy) / scale + 0.5;
            const double t = std::clamp(u, 0.0, 1.0);
            std::array<double, 3> px{};
            for (int c = 0; c < 3; ++c)
                px[c] = c0[c] + t * (c1[c] - c0[c]);
            for (const auto& b : blobs) {
                const double d2 = ((x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy)) / (b.r * b.r);
                const double a = b.alpha * std::exp(-0.5 * d2);
                for (int c = 0; c < 3; ++c)
                    px[c] = (1.0 - a) * px[c] + a * b.col[c];
            }
            const double stripe = s_amp * std::sin(freq * (x * sx + y * sy));
            for (int c = 0; c < 3; ++c)
                data[(static_cast<std::size_t>(y) * width + x) * 3 + c] =
                    static_cast<float>(std::clamp(px[c] + stripe * s_col[c], 0.0, 1.0));
        }
    return {height, width, 3, RangeTag::Unit, std::move(data)};
}

struct SynthOptions {
    std::size_t count = 8;
    std::vector<Severity> severities{Severity::Moderate};
    std::uint64_t seed = 0;
    int size = 256;
    /// Optional clear scenes (resized to size x size); procedural textures otherwise.
    std::vector<ImageTensor> clear_sources;
};

inline constexpr const char* kSidecarDir = "params";

inline std::string synthetic_id(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "synth_%05zu", i);
    return buf;
}

/// Writes `count` pairs as <out>/input/<id>.png (hazy), <out>/target/<id>.png
/// (clear) and <out>/params/<id>.json. The clear image is quantised before the
/// haze is composed so the stored pair obeys the scattering model up to the
/// hazy image's own 8-bit rounding.
inline PairedDataset write_synthetic_dataset(const SynthOptions& opt, const fs::path& out) {
    if (opt.count < 1)
        fail(ErrorKind::InvalidArgument, "synthetic dataset needs at least one pair");
    if (opt.severities.empty())
        fail(ErrorKind::InvalidArgument, "no severities given");
    std::error_code ec;
    for (const char* sub : {"input", "target", kSidecarDir}) {
        fs::create_directories(out / sub, ec);
        if (ec)
            fail(ErrorKind::IoError, "cannot create " + (out / sub).string() + ": " + ec.message());
    }
    PairedDataset ds{"synthetic", Split::Train, {}};
    for (std::size_t i = 0; i < opt.count; ++i) {
        const std::string id = synthetic_id(i);
        const Severity sev = opt.severities[i % opt.severities.size()];
        ImageTensor clear = opt.clear_sources.empty()
                                ? procedural_texture(opt.size, opt.size, Rng::derive(opt.seed, i, 1))
                                : resize(opt.clear_sources[i % opt.clear_sources.size()], opt.size, opt.size,
                                         ResizeMethod::Bicubic);
        clear = quantize_like_file(clear);
        const std::uint64_t haze_seed = Rng::derive(opt.seed, i, 2);
        const HazeParams params = sample_haze_params(sev, opt.size, opt.size, haze_seed);
        const ImageTensor hazy = compose_haze(clear, params);

        ImagePair p{id, out / "input" / (id + ".png"), out / "target" / (id + ".png")};
        save_image(hazy, p.hazy);
        save_image(clear, p.clear);
        nlohmann::json side = {{"id", id},
                               {"A", params.airlight[0]},
                               {"beta", params.beta},
                               {"seed", haze_seed},
                               {"severity", std::string(to_string(sev))},
                               {"mean_transmission", mean_transmission(params)},
                               {"height", opt.size},
                               {"width", opt.size}};
        std::ofstream os(out / kSidecarDir / (id + ".json"));
        os << side.dump(2) << '\n';
        if (!os)
            fail(ErrorKind::IoError, "cannot write sidecar for " + id);
        ds.pairs.push_back(std::move(p));
    }
    return ds;
}

/// Rebuilds the haze parameters recorded in a synthetic sidecar.
inline HazeParams haze_params_from_sidecar(const fs::path& sidecar) {
    std::ifstream is(sidecar);
    if (!is)
        fail(ErrorKind::FileNotFound, sidecar.string());
    const auto j = nlohmann::json::parse(is);
    return sample_haze_params(parse_severity(j.at("severity").get<std::string>()), j.at("height").get<int>(),
                              j.at("width").get<int>(), j.at("seed").get<std::uint64_t>());
}

} // namespace dehaze

#endif // DEHAZE_DATASET_HPP
