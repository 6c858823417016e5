#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dehaze/dataset.hpp"
#include "oracles/oracles.hpp"

using namespace dehaze;
namespace fs = std::filesystem;

namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::InvalidArgument;
}

template <typename F>
std::string message_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

fs::path fresh(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "dehaze_dataset" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

void write_pairs(const fs::path& dir, const std::string& hazy, const std::string& clear, int n, int size = 4) {
    fs::create_directories(dir / hazy);
    fs::create_directories(dir / clear);
    for (int i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%04d.png", i);
        save_image(oracle::random_image(size, size, 3, 2 * i), dir / hazy / name);
        save_image(oracle::random_image(size, size, 3, 2 * i + 1), dir / clear / name);
    }
}

void write_haze1k(const fs::path& root, int train, int test) {
    write_pairs(root / "train", "input", "target", train);
    for (const char* s : {"test_thin", "test_moderate", "test_thick"})
        write_pairs(root / s, "input", "target", test);
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace

TEST(Haze1k, FullSizeStrict) {
    const auto root = fresh("haze1k_full");
    write_haze1k(root, 900, 45);
    const auto sets = load_haze1k(root, true);
    ASSERT_EQ(sets.size(), 4u);
    EXPECT_EQ(sets.at(Split::Train).size(), 900u);
    EXPECT_EQ(sets.at(Split::TestThin).size(), 45u);
    EXPECT_EQ(sets.at(Split::TestModerate).size(), 45u);
    EXPECT_EQ(sets.at(Split::TestThick).size(), 45u);
    const auto& tr = sets.at(Split::Train).pairs;
    EXPECT_TRUE(std::is_sorted(tr.begin(), tr.end(), [](auto& a, auto& b) { return a.id < b.id; }));
}

TEST(Haze1k, StrictRejectsWrongSizes) {
    const auto root = fresh("haze1k_small");
    write_haze1k(root, 3, 2);
    EXPECT_EQ(load_haze1k(root).at(Split::Train).size(), 3u);
    EXPECT_EQ(kind_of([&] { load_haze1k(root, true); }), ErrorKind::SizeMismatch);
}

TEST(Haze1k, UnpairedImageIsNamed) {
    const auto root = fresh("haze1k_unpaired");
    write_haze1k(root, 2, 1);
    save_image(oracle::random_image(4, 4, 3, 9), root / "test_thick" / "input" / "lonely.png");
    EXPECT_EQ(kind_of([&] { load_haze1k(root); }), ErrorKind::UnpairedImage);
    EXPECT_NE(message_of([&] { load_haze1k(root); }).find("lonely.png"), std::string::npos);
}

TEST(Haze1k, MissingSplits) {
    EXPECT_EQ(kind_of([] { load_haze1k(fresh("haze1k_empty")); }), ErrorKind::MissingSplit);
    EXPECT_EQ(kind_of([] { load_haze1k("/nonexistent/haze1k"); }), ErrorKind::MissingSplit);
    const auto root = fresh("haze1k_partial");
    write_pairs(root / "train", "input", "target", 1);
    EXPECT_EQ(kind_of([&] { load_haze1k(root); }), ErrorKind::MissingSplit);
}

TEST(Haze1k, ManifestRemapsLayout) {
    const auto root = fresh("haze1k_manifest");
    write_pairs(root / "Train", "hazy", "gt", 2);
    for (const char* s : {"thin", "moderate", "thick"})
        write_pairs(root / s, "hazy", "gt", 1);
    std::ofstream(root / kManifestName) << "# custom layout\nhazy_subdir = hazy\nclear_subdir = gt\n"
                                           "split.train = Train\nsplit.test-thin = thin\n"
                                           "split.test-moderate = moderate\nsplit.test-thick = thick\n";
    const auto sets = load_haze1k(root);
    EXPECT_EQ(sets.at(Split::Train).size(), 2u);
    EXPECT_EQ(sets.at(Split::TestThick).size(), 1u);

    std::ofstream(root / kManifestName) << "hazy_folder = x\n";
    EXPECT_EQ(kind_of([&] { load_haze1k(root); }), ErrorKind::InvalidConfig);
}

TEST(PairedDir, DimensionMismatchRejectedAtLoad) {
    const auto root = fresh("paired_dims");
    write_pairs(root, "input", "target", 2);
    save_image(oracle::random_image(5, 4, 3, 1), root / "target" / "img_0001.png");
    EXPECT_EQ(kind_of([&] { load_paired_dir(root, "input", "target", Split::Train, "x"); }),
              ErrorKind::ShapeMismatch);
}

TEST(Rice, FiveHundredSplitsNinetyTen) {
    const auto root = fresh("rice500");
    write_pairs(root, "cloud", "label", 500, 2);
    const auto [train, test] = load_rice(root, 0.9, 3);
    EXPECT_EQ(train.size(), 450u);
    EXPECT_EQ(test.size(), 50u);
}

TEST(Rice, FloorArithmeticAndPartition) {
    const auto root = fresh("rice20");
    write_pairs(root, "cloud", "label", 20);
    const auto [train, test] = load_rice(root, 0.9, 11);
    EXPECT_EQ(train.size(), 18u);
    EXPECT_EQ(test.size(), 2u);
    std::set<std::string> all;
    for (const auto* d : {&train, &test})
        for (const auto& p : d->pairs)
            EXPECT_TRUE(all.insert(p.id).second) << p.id;
    EXPECT_EQ(all.size(), 20u);

    const auto root10 = fresh("rice10");
    write_pairs(root10, "cloud", "label", 10);
    const auto [a, b] = load_rice(root10);
    EXPECT_EQ(a.size(), 9u);
    EXPECT_EQ(b.size(), 1u);
}

TEST(Rice, SeededDeterminism) {
    const auto root = fresh("rice_det");
    write_pairs(root, "cloud", "label", 30);
    const auto x = load_rice(root, 0.9, 5), y = load_rice(root, 0.9, 5);
    EXPECT_EQ(x.second.pairs, y.second.pairs);
    bool differs = false;
    for (std::uint64_t s = 6; s < 12 && !differs; ++s)
        differs = load_rice(root, 0.9, s).second.pairs != x.second.pairs;
    EXPECT_TRUE(differs);
}

TEST(Rice, EmptyDataset) {
    const auto root = fresh("rice_empty");
    fs::create_directories(root / "cloud");
    fs::create_directories(root / "label");
    EXPECT_EQ(kind_of([&] { load_rice(root); }), ErrorKind::EmptyDataset);
}

TEST(MatchDirectories, PairsByFilename) {
    const auto root = fresh("match");
    write_pairs(root, "pred", "gt", 3);
    const auto pairs = match_directory_pairs(root / "pred", root / "gt");
    ASSERT_EQ(pairs.size(), 3u);
    EXPECT_EQ(pairs[0].id, "img_0000");
    fs::remove(root / "gt" / "img_0002.png");
    EXPECT_EQ(kind_of([&] { match_directory_pairs(root / "pred", root / "gt"); }), ErrorKind::UnpairedImage);
}

TEST(Synthetic, RerunIsBitIdentical) {
    SynthOptions opt;
    opt.count = 8;
    opt.seed = 21;
    opt.size = 32;
    opt.severities = {Severity::Thin, Severity::Thick};
    const auto a = fresh("synth_a"), b = fresh("synth_b");
    const auto da = write_synthetic_dataset(opt, a);
    write_synthetic_dataset(opt, b);
    ASSERT_EQ(da.size(), 8u);
    for (const auto& p : da.pairs)
        for (const char* sub : {"input", "target"}) {
            const auto rel = fs::path(sub) / (p.id + ".png");
            EXPECT_EQ(slurp(a / rel), slurp(b / rel)) << rel;
        }
    EXPECT_EQ(load_paired_dir(a, "input", "target", Split::Train, "s").size(), 8u);
}

TEST(Synthetic, HazyMatchesRecomposition) {
    SynthOptions opt;
    opt.count = 4;
    opt.seed = 5;
    opt.size = 48;
    opt.severities = {Severity::Thin, Severity::Moderate, Severity::Thick};
    const auto dir = fresh("synth_recompose");
    const auto ds = write_synthetic_dataset(opt, dir);
    for (const auto& p : ds.pairs) {
        const auto params = haze_params_from_sidecar(dir / kSidecarDir / (p.id + ".json"));
        const auto expect = compose_haze(load_image(p.clear), params);
        const auto got = load_image(p.hazy);
        for (std::size_t i = 0; i < got.size(); ++i)
            ASSERT_LE(std::abs(got.data()[i] - expect.data()[i]), 1.0f / 510.0f + 1e-6f) << p.id;
    }
}

TEST(Synthetic, ThickSidecarsInBand) {
    SynthOptions opt;
    opt.count = 6;
    opt.seed = 8;
    opt.size = 16;
    opt.severities = {Severity::Thick};
    const auto dir = fresh("synth_thick");
    for (const auto& p : write_synthetic_dataset(opt, dir).pairs) {
        std::ifstream is(dir / kSidecarDir / (p.id + ".json"));
        const auto j = nlohmann::json::parse(is);
        for (const char* k : {"A", "beta", "seed", "severity", "mean_transmission"})
            EXPECT_TRUE(j.contains(k)) << k;
        EXPECT_EQ(j["severity"], "thick");
        EXPECT_GE(j["mean_transmission"].get<double>(), 0.2);
        EXPECT_LE(j["mean_transmission"].get<double>(), 0.45);
    }
}

TEST(Synthetic, RejectsZeroCount) {
    SynthOptions opt;
    opt.count = 0;
    EXPECT_EQ(kind_of([&] { write_synthetic_dataset(opt, fresh("synth_zero")); }), ErrorKind::InvalidArgument);
}

TEST(Synthetic, ProceduralTextureDeterministicAndVaried) {
    EXPECT_EQ(procedural_texture(32, 32, 4), procedural_texture(32, 32, 4));
    EXPECT_FALSE(procedural_texture(32, 32, 4) == procedural_texture(32, 32, 5));
}
