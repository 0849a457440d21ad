#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <doctest.h>

#include "hstrnet/data.hpp"
#include "hstrnet/error.hpp"
#include "hstrnet/image.hpp"
#include "testutil.hpp"

using namespace hstrnet;
using testutil::max_abs_diff;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("hstrnet_" + tag + "_" +
                                            std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

ImageF const_image(int h, int w, float v) {
    ImageF img = ImageF::zeros(h, w);
    for (auto& x : img.values) x = v;
    return img;
}

ImageF ramp_image(int h, int w) {
    ImageF img = ImageF::zeros(h, w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.at(c, y, x) = 0.1f + 0.8f * static_cast<float>(x) / (w - 1);
    return img;
}

void write_clip(const fs::path& dir, const std::vector<ImageF>& frames) {
    fs::create_directories(dir);
    for (size_t i = 0; i < frames.size(); ++i)
        save_image_png(frames[i], (dir / ("im" + std::to_string(i + 1) + ".png")).string());
}

std::vector<ImageF> constant_septuplet(int h, int w) {
    std::vector<ImageF> frames;
    for (int k = 0; k < 7; ++k) frames.push_back(const_image(h, w, (k + 1) / 10.f));
    return frames;
}

bool images_equal(const ImageF& a, const ImageF& b) {
    return a.height == b.height && a.width == b.width && a.values == b.values;
}

double half_mean(const ImageF& img, bool right) {
    double acc = 0.0;
    int n = 0;
    const int x0 = right ? img.width / 2 : 0;
    const int x1 = right ? img.width : img.width / 2;
    for (int y = 0; y < img.height; ++y)
        for (int x = x0; x < x1; ++x) {
            acc += img.at(0, y, x);
            ++n;
        }
    return acc / n;
}

}  // namespace

TEST_CASE("septuplet indexing is lexicographic and skips short clips") {
    TempDir tmp("index");
    const fs::path seqs = tmp.path / "sequences";
    write_clip(seqs / "00002" / "0001", constant_septuplet(16, 16));
    write_clip(seqs / "00001" / "0003", constant_septuplet(16, 16));
    std::vector<ImageF> sep = constant_septuplet(16, 16);
    std::vector<ImageF> short_clip(sep.begin(), sep.begin() + 6);
    write_clip(seqs / "00001" / "0004", short_clip);

    DatasetIndex index = index_dataset(tmp.str(), Layout::Septuplet);
    REQUIRE(index.entries.size() == 2);
    CHECK(index.entries[0].id == "00001/0003");
    CHECK(index.entries[1].id == "00002/0001");
    CHECK(index.entries[0].frames.size() == 7);

    SUBCASE("list file restricts the index") {
        const fs::path list = tmp.path / "sep_testlist.txt";
        std::ofstream(list) << "00002/0001\n";
        DatasetIndex filtered = index_dataset(tmp.str(), Layout::Septuplet, list.string());
        REQUIRE(filtered.entries.size() == 1);
        CHECK(filtered.entries[0].id == "00002/0001");
    }

    SUBCASE("index round-trips through json") {
        const fs::path out = tmp.path / "index.json";
        save_index(index, out.string());
        DatasetIndex back = load_index(out.string());
        REQUIRE(back.entries.size() == index.entries.size());
        CHECK(back.layout == index.layout);
        CHECK(back.entries[1].frames == index.entries[1].frames);
    }
}

TEST_CASE("empty roots and unknown layouts are rejected") {
    TempDir tmp("empty");
    CHECK_THROWS_AS(index_dataset(tmp.str(), Layout::Septuplet), DataError);
    CHECK_THROWS_AS(layout_from_string("quintuplet"), ConfigError);
    CHECK(layout_from_string("septuplet") == Layout::Septuplet);
    CHECK(layout_to_string(Layout::Sequence) == "sequence");
}

TEST_CASE("frame-sequence indexing requires five frames") {
    TempDir tmp("seq");
    auto frame_name = [](int i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "frame_%06d.png", i);
        return std::string(buf);
    };
    fs::create_directories(tmp.path / "flight1");
    fs::create_directories(tmp.path / "flight2");
    for (int i = 1; i <= 6; ++i)
        save_image_png(const_image(16, 16, 0.4f), (tmp.path / "flight1" / frame_name(i)).string());
    for (int i = 1; i <= 4; ++i)
        save_image_png(const_image(16, 16, 0.4f), (tmp.path / "flight2" / frame_name(i)).string());
    DatasetIndex index = index_dataset(tmp.str(), Layout::Sequence);
    REQUIRE(index.entries.size() == 1);
    CHECK(index.entries[0].id == "flight1");
    CHECK(index.entries[0].frames.size() == 6);
}

TEST_CASE("training samples replay bitwise from the same seed") {
    auto frames = std::vector<ImageF>();
    for (int k = 0; k < 7; ++k) {
        ImageF img = ramp_image(96, 96);
        for (auto& v : img.values) v = std::min(1.f, v + 0.02f * k);
        frames.push_back(img);
    }
    Rng r1(41), r2(41);
    Sample a = make_training_sample(frames, "clip", r1, 32);
    Sample b = make_training_sample(frames, "clip", r2, 32);
    CHECK(images_equal(a.lr, b.lr));
    CHECK(images_equal(a.ref, b.ref));
    CHECK(images_equal(a.gt, b.gt));
    CHECK(a.meta.frame == b.meta.frame);
    CHECK(a.meta.ref_offset == b.meta.ref_offset);
    CHECK(a.gt.height == 32);
    CHECK(a.gt.width == 32);
    CHECK(a.lr.height == 32);
    CHECK(a.has_gt);

    Rng r3(42);
    Sample c = make_training_sample(frames, "clip", r3, 32);
    CHECK_FALSE(images_equal(a.gt, c.gt));
}

TEST_CASE("gt and ref share every augmentation draw") {
    std::vector<ImageF> frames(7, ramp_image(64, 64));
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        Sample s = make_training_sample(frames, "same", rng, 32);
        CHECK(images_equal(s.gt, s.ref));
    }
}

TEST_CASE("reference offset and flip frequencies match their probabilities") {
    std::vector<ImageF> frames;
    for (int k = 0; k < 7; ++k) frames.push_back(ramp_image(96, 96));
    Rng rng(2024);
    const int draws = 10000;
    int minus = 0, flipped = 0;
    std::array<int, 7> center_counts{};
    for (int i = 0; i < draws; ++i) {
        Sample s = make_training_sample(frames, "freq", rng, 32);
        REQUIRE((s.meta.ref_offset == -1 || s.meta.ref_offset == 1));
        REQUIRE(s.meta.frame >= 2);
        REQUIRE(s.meta.frame <= 6);
        ++center_counts[static_cast<size_t>(s.meta.frame)];
        if (s.meta.ref_offset == -1) ++minus;
        if (half_mean(s.gt, false) > half_mean(s.gt, true)) ++flipped;
    }
    const double minus_freq = static_cast<double>(minus) / draws;
    const double flip_freq = static_cast<double>(flipped) / draws;
    CHECK(minus_freq >= 0.47);
    CHECK(minus_freq <= 0.53);
    CHECK(flip_freq >= 0.17);
    CHECK(flip_freq <= 0.23);
    for (int t = 2; t <= 6; ++t) {
        const double f = static_cast<double>(center_counts[static_cast<size_t>(t)]) / draws;
        CHECK(f >= 0.17);
        CHECK(f <= 0.23);
    }
}

TEST_CASE("training sample rejects bad inputs") {
    std::vector<ImageF> frames(7, ramp_image(64, 64));
    Rng rng(1);
    SUBCASE("crop larger than the rotation-safe region") {
        CHECK_THROWS_WITH_AS(make_training_sample(frames, "x", rng, 64),
                             doctest::Contains("too small"), DataError);
    }
    SUBCASE("wrong frame count") {
        frames.resize(5);
        CHECK_THROWS_AS(make_training_sample(frames, "x", rng, 32), DataError);
    }
    SUBCASE("crop not divisible by the factor") {
        CHECK_THROWS_AS(make_training_sample(frames, "x", rng, 30), DataError);
    }
}

TEST_CASE("septuplet evaluation pins the fourth frame and fifth as reference") {
    std::vector<ImageF> frames = constant_septuplet(32, 32);
    Sample s = make_eval_sample(frames, "sep", Layout::Septuplet, 3);
    CHECK(images_equal(s.gt, frames[3]));
    CHECK(images_equal(s.ref, frames[4]));
    CHECK(images_equal(s.lr, degrade(frames[3], 4)));
    CHECK(s.meta.frame == 4);
    CHECK(s.meta.ref_offset == 1);
    CHECK_THROWS_AS(make_eval_sample(frames, "sep", Layout::Septuplet, 2), DataError);
}

TEST_CASE("triplet evaluation pins the second frame and third as reference") {
    std::vector<ImageF> sep = constant_septuplet(32, 32);
    std::vector<ImageF> frames(sep.begin(), sep.begin() + 3);
    Sample s = make_eval_sample(frames, "tri", Layout::Triplet, 1);
    CHECK(images_equal(s.gt, frames[1]));
    CHECK(images_equal(s.ref, frames[2]));
    CHECK(images_equal(s.lr, degrade(frames[1], 4)));
    CHECK(s.meta.frame == 2);
}

TEST_CASE("frame sequences evaluate every frame with a successor") {
    std::vector<ImageF> frames;
    for (int k = 0; k < 6; ++k) frames.push_back(const_image(80, 100, (k + 1) / 10.f));

    SUBCASE("native resolution") {
        EvalOptions opts;
        opts.resize_sequences = false;
        Sample s = make_eval_sample(frames, "fly", Layout::Sequence, 2, opts);
        CHECK(images_equal(s.gt, frames[2]));
        CHECK(images_equal(s.ref, frames[3]));
        CHECK(s.meta.frame == 3);
        CHECK_THROWS_WITH_AS(make_eval_sample(frames, "fly", Layout::Sequence, 5, opts),
                             doctest::Contains("successor"), DataError);
    }

    SUBCASE("resized protocol produces 672x380 frames") {
        EvalOptions opts;
        Sample s = make_eval_sample(frames, "fly", Layout::Sequence, 0, opts);
        CHECK(s.gt.height == 380);
        CHECK(s.gt.width == 672);
        CHECK(s.ref.height == 380);
        CHECK(s.ref.width == 672);
        CHECK(s.lr.height == 380);
        CHECK(s.lr.width == 672);
    }

    SUBCASE("enumeration covers frames 0..n-2") {
        DatasetIndex index;
        index.layout = Layout::Sequence;
        index.entries.push_back({"fly", std::vector<std::string>(6, "unused")});
        auto items = enumerate_eval_items(index);
        REQUIRE(items.size() == 5);
        CHECK(items.front().frame == 0);
        CHECK(items.back().frame == 4);
    }
}

TEST_CASE("per-sample seeds are stable and well separated") {
    CHECK(sample_seed(1, "00001/0001", 3) == sample_seed(1, "00001/0001", 3));
    CHECK(sample_seed(1, "00001/0001", 3) != sample_seed(1, "00001/0001", 4));
    CHECK(sample_seed(1, "00001/0001", 3) != sample_seed(1, "00001/0002", 3));
    CHECK(sample_seed(1, "00001/0001", 3) != sample_seed(2, "00001/0001", 3));
}
