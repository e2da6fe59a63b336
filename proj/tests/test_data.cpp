#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "sfnet/data.hpp"

using namespace sfnet;

namespace {

ArchConfig tiny_config() {
    ArchConfig c;
    c.T = 4;
    c.tau = 16;
    c.omega = 8;
    c.phi = Rational{1, 8};
    return c;
}

// frame t holds the constant value t / 100
RawVideo ramp_video(int frames, int side) {
    RawVideo v;
    for (int t = 0; t < frames; ++t) {
        VideoFrame f;
        f.h = side;
        f.w = side;
        f.c = 3;
        f.px.assign(static_cast<size_t>(side) * side * 3, t / 100.0);
        v.frames.push_back(std::move(f));
    }
    v.labels = {0};
    return v;
}

bool frames_equal(const VideoFrame& a, const VideoFrame& b) {
    return a.h == b.h && a.w == b.w && a.c == b.c &&
           std::memcmp(a.px.data(), b.px.data(), sizeof(double) * a.px.size()) == 0;
}

AugmentParams identity_augment(int side) { return AugmentParams{side, side, side, false}; }

}  // namespace

TEST_CASE("sample_train_clip: single valid window forces start 0") {
    RawVideo v = ramp_video(64, 32);
    ArchConfig c = tiny_config();
    Rng rng(5);
    ClipPair clip = sample_train_clip(v, c, rng, identity_augment(32));
    REQUIRE(clip.slow.size() == 4);
    REQUIRE(clip.fast.size() == 32);
    // slow indices {0, 16, 32, 48}
    for (int i = 0; i < 4; ++i)
        CHECK(clip.slow[static_cast<size_t>(i)].px[0] == doctest::Approx(16.0 * i / 100.0));
    // fast stride tau/omega = 2
    for (int j = 0; j < 32; ++j)
        CHECK(clip.fast[static_cast<size_t>(j)].px[0] == doctest::Approx(2.0 * j / 100.0));
}

TEST_CASE("sample_train_clip rejects short videos") {
    RawVideo v = ramp_video(63, 32);
    Rng rng(5);
    CHECK_THROWS_AS(sample_train_clip(v, tiny_config(), rng, identity_augment(32)), DataError);
}

TEST_CASE("slow/fast alignment: slow frame i is fast frame i*omega, bit-exact") {
    Rng noise(9);
    RawVideo v = ramp_video(64, 32);
    for (auto& f : v.frames)
        for (auto& px : f.px) px = noise.next_double();
    Rng rng(7);
    ClipPair clip = sample_train_clip(v, tiny_config(), rng, identity_augment(32));
    for (int i = 0; i < 4; ++i)
        CHECK(frames_equal(clip.slow[static_cast<size_t>(i)],
                           clip.fast[static_cast<size_t>(i) * 8]));
}

TEST_CASE("flip is shared geometry: flipped sample mirrors the unflipped one") {
    Rng noise(11);
    RawVideo v = ramp_video(64, 16);
    for (auto& f : v.frames)
        for (auto& px : f.px) px = noise.next_double();
    ArchConfig c = tiny_config();
    // no scale/crop jitter and a single valid window: geometry varies only in flip
    AugmentParams flip_aug{16, 16, 16, true};
    Rng rng(13);
    ClipPair flipped, plain;
    bool have_f = false, have_p = false;
    for (int tries = 0; tries < 64 && !(have_f && have_p); ++tries) {
        ClipPair clip = sample_train_clip(v, c, rng, flip_aug);
        if (clip.geometry.flip && !have_f) {
            flipped = clip;
            have_f = true;
        }
        if (!clip.geometry.flip && !have_p) {
            plain = clip;
            have_p = true;
        }
    }
    REQUIRE(have_f);
    REQUIRE(have_p);
    const VideoFrame& a = flipped.fast[0];
    const VideoFrame& b = plain.fast[0];
    for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x)
            for (int ch = 0; ch < 3; ++ch) CHECK(a.at(y, x, ch) == b.at(y, a.w - 1 - x, ch));
    // and the flipped slow frame equals the flipped fast frame 0 (shared geometry)
    CHECK(frames_equal(flipped.slow[0], flipped.fast[0]));
}

TEST_CASE("train clip starts cover the valid range uniformly (chi-square 0.01)") {
    RawVideo v = ramp_video(128, 16);
    ArchConfig c = tiny_config();
    Rng rng(17);
    // start in [0, 64]: recover it from the first slow frame's value
    std::vector<int> counts(65, 0);
    const int samples = 1000;
    for (int s = 0; s < samples; ++s) {
        ClipPair clip = sample_train_clip(v, c, rng, identity_augment(16));
        const int start = static_cast<int>(std::lround(clip.slow[0].px[0] * 100.0));
        REQUIRE(start >= 0);
        REQUIRE(start <= 64);
        ++counts[static_cast<size_t>(start)];
    }
    const double expected = samples / 65.0;
    double chi2 = 0.0;
    for (int b = 0; b <= 64; ++b) chi2 += std::pow(counts[static_cast<size_t>(b)] - expected, 2) / expected;
    CHECK(chi2 < 93.217);  // chi-square critical value, 64 dof, alpha = 0.01
}

TEST_CASE("sample_test_views: square video gives identical full-frame crops") {
    Rng noise(19);
    RawVideo v = ramp_video(64, 16);
    for (auto& f : v.frames)
        for (auto& px : f.px) px = noise.next_double();
    ArchConfig c = tiny_config();
    EvalViewParams view{10, 3, 16};
    auto views = sample_test_views(v, c, view);
    REQUIRE(views.size() == 30);
    // 64-frame video, window 64: all 10 clips identical too
    for (size_t i = 1; i < views.size(); ++i)
        CHECK(frames_equal(views[i].fast[0], views[0].fast[0]));
    // pure function: repeated calls identical
    auto again = sample_test_views(v, c, view);
    for (size_t i = 0; i < views.size(); ++i)
        CHECK(frames_equal(views[i].fast[5], again[i].fast[5]));
}

TEST_CASE("sample_test_views: landscape crops at x offsets {0, spare/2, spare}") {
    RawVideo v;
    for (int t = 0; t < 64; ++t) {
        VideoFrame f;
        f.h = 256;
        f.w = 320;
        f.c = 3;
        f.px.assign(static_cast<size_t>(256) * 320 * 3, 0.5);
        v.frames.push_back(std::move(f));
    }
    v.labels = {0};
    auto views = sample_test_views(v, tiny_config(), EvalViewParams{1, 3, 256});
    REQUIRE(views.size() == 3);
    CHECK(views[0].geometry.ox == 0);
    CHECK(views[1].geometry.ox == 32);
    CHECK(views[2].geometry.ox == 64);
    for (const auto& view : views) CHECK(view.geometry.oy == 0);
    for (const auto& view : views) CHECK(view.geometry.flip == false);
}

TEST_CASE("sample_test_views: portrait videos crop top/center/bottom") {
    RawVideo v;
    for (int t = 0; t < 64; ++t) {
        VideoFrame f;
        f.h = 320;
        f.w = 256;
        f.c = 3;
        f.px.assign(static_cast<size_t>(320) * 256 * 3, 0.5);
        v.frames.push_back(std::move(f));
    }
    v.labels = {0};
    auto views = sample_test_views(v, tiny_config(), EvalViewParams{1, 3, 256});
    REQUIRE(views.size() == 3);
    CHECK(views[0].geometry.oy == 0);
    CHECK(views[1].geometry.oy == 32);
    CHECK(views[2].geometry.oy == 64);
    for (const auto& view : views) CHECK(view.geometry.ox == 0);
}

TEST_CASE("to_gray: weights sum to one on pure gray input") {
    VideoFrame f;
    f.h = 2;
    f.w = 2;
    f.c = 3;
    f.px.assign(12, 0.42);
    VideoFrame g = to_gray(f);
    REQUIRE(g.c == 1);
    for (double px : g.px) CHECK(px == doctest::Approx(0.42).epsilon(1e-12));
}

TEST_CASE("time_diff: constant video maps to identically zero, single channel") {
    RawVideo v = ramp_video(6, 4);
    for (auto& f : v.frames) std::fill(f.px.begin(), f.px.end(), 0.3);
    auto d = time_diff(v.frames);
    REQUIRE(d.size() == 6);
    for (const auto& f : d) {
        CHECK(f.c == 1);
        for (double px : f.px) CHECK(px == 0.0);
    }
    // first diff defined as zero even for non-constant video
    auto d2 = time_diff(ramp_video(6, 4).frames);
    for (double px : d2[0].px) CHECK(px == 0.0);
    CHECK(d2[1].px[0] == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("half_res exactly halves even extents") {
    VideoFrame f;
    f.h = 224;
    f.w = 224;
    f.c = 3;
    f.px.assign(static_cast<size_t>(224) * 224 * 3, 0.25);
    VideoFrame h = half_res(f);
    CHECK(h.h == 112);
    CHECK(h.w == 112);
    for (double px : h.px) CHECK(px == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("synthetic corpus: deterministic, appearance shared across classes") {
    CorpusGeometry geom;
    auto a = generate_synthetic_corpus(33, 4, 3, geom);
    auto b = generate_synthetic_corpus(33, 4, 3, geom);
    REQUIRE(a.size() == 12);
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t t = 0; t < a[i].frames.size(); ++t)
            CHECK(frames_equal(a[i].frames[t], b[i].frames[t]));

    // classes 0 (v=+1) and 1 (v=+5) differ only in speed along the same axis:
    // class-0 frame 5k is pixel-identical to class-1 frame k of the same clip id
    const RawVideo& slow = a[0 * 3 + 1];
    const RawVideo& fast = a[1 * 3 + 1];
    CHECK(frames_equal(slow.frames[0], fast.frames[0]));
    CHECK(frames_equal(slow.frames[5], fast.frames[1]));
    CHECK(frames_equal(slow.frames[10], fast.frames[2]));
    CHECK(frames_equal(slow.frames[15], fast.frames[3]));
    CHECK(!frames_equal(slow.frames[1], fast.frames[1]));  // but the motion differs

    CHECK_THROWS_AS(generate_synthetic_corpus(33, 1, 3, geom), InputError);
}

TEST_CASE("appearance carries no class signal: nearest centroid scores at chance") {
    CorpusGeometry geom;
    const int classes = 4, per_class = 30;
    auto corpus = generate_synthetic_corpus(77, classes, per_class, geom);
    auto shuffled = shuffle_frames(corpus, 78);

    // mean-frame features per video
    auto features = [&](const RawVideo& v) {
        std::vector<double> f(v.frames[0].px.size(), 0.0);
        for (const auto& frame : v.frames)
            for (size_t i = 0; i < f.size(); ++i) f[i] += frame.px[i];
        for (auto& x : f) x /= static_cast<double>(v.frames.size());
        return f;
    };

    // first 15 per class train the centroids, the rest evaluate
    std::vector<std::vector<double>> centroids(classes);
    std::vector<int> counts(classes, 0);
    std::vector<size_t> eval_ids;
    for (size_t i = 0; i < shuffled.size(); ++i) {
        const int k = shuffled[i].labels[0];
        const int j = static_cast<int>(i) % per_class;
        if (j < 15) {
            auto f = features(shuffled[i]);
            if (centroids[static_cast<size_t>(k)].empty())
                centroids[static_cast<size_t>(k)].assign(f.size(), 0.0);
            for (size_t d = 0; d < f.size(); ++d) centroids[static_cast<size_t>(k)][d] += f[d];
            ++counts[static_cast<size_t>(k)];
        } else {
            eval_ids.push_back(i);
        }
    }
    for (int k = 0; k < classes; ++k)
        for (auto& x : centroids[static_cast<size_t>(k)]) x /= counts[static_cast<size_t>(k)];

    int hits = 0;
    for (size_t i : eval_ids) {
        auto f = features(shuffled[i]);
        int best = 0;
        double best_d = 1e300;
        for (int k = 0; k < classes; ++k) {
            double d = 0.0;
            for (size_t j = 0; j < f.size(); ++j)
                d += std::pow(f[j] - centroids[static_cast<size_t>(k)][j], 2);
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        hits += best == shuffled[i].labels[0];
    }
    const double acc = 100.0 * hits / static_cast<double>(eval_ids.size());
    CHECK(std::fabs(acc - 100.0 / classes) <= 10.0);
}

TEST_CASE("sfv1 round trip preserves geometry, labels, boxes and f32 payload") {
    Rng rng(41);
    RawVideo v;
    for (int t = 0; t < 3; ++t) {
        VideoFrame f;
        f.h = 5;
        f.w = 6;
        f.c = 3;
        f.px.resize(90);
        for (auto& px : f.px) px = rng.next_double();
        v.frames.push_back(std::move(f));
    }
    v.labels = {2, 7};
    v.boxes.push_back(BoxAnnotation{1, 0.1, 0.2, 0.6, 0.9, {3, 5}});

    const auto dir = std::filesystem::temp_directory_path() / "sfnet_sfv_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "clip.sfv").string();
    write_sfv1(path, v);
    RawVideo r = read_sfv1(path);
    REQUIRE(r.frames.size() == 3);
    CHECK(r.labels == v.labels);
    REQUIRE(r.boxes.size() == 1);
    CHECK(r.boxes[0].frame == 1);
    CHECK(r.boxes[0].labels == std::vector<int>{3, 5});
    for (size_t t = 0; t < 3; ++t)
        for (size_t i = 0; i < 90; ++i)
            CHECK(r.frames[t].px[i] ==
                  static_cast<double>(static_cast<float>(v.frames[t].px[i])));

    // writing the loaded video again produces identical bytes
    const std::string path2 = (dir / "clip2.sfv").string();
    write_sfv1(path2, r);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
    CHECK(s1.substr(0, 4) == "SFV1");
    std::filesystem::remove_all(dir);
}

TEST_CASE("corpus directory round trip keeps order and labels") {
    CorpusGeometry geom;
    geom.frames = 8;
    geom.side = 16;
    geom.patch = 6;
    auto corpus = generate_synthetic_corpus(55, 2, 2, geom);
    const auto dir = std::filesystem::temp_directory_path() / "sfnet_corpus_test";
    write_corpus(dir.string(), corpus);
    auto loaded = load_corpus(dir.string());
    REQUIRE(loaded.size() == corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) CHECK(loaded[i].labels == corpus[i].labels);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_corpus(dir.string()), std::exception);
}

TEST_CASE("clip_to_input applies the weak-input variant to the fast pathway only") {
    Rng noise(43);
    RawVideo v = ramp_video(64, 32);
    for (auto& f : v.frames)
        for (auto& px : f.px) px = noise.next_double();
    ArchConfig c = tiny_config();
    c.input_variant = InputVariant::Gray;
    Rng rng(44);
    ClipPair clip = sample_train_clip(v, c, rng, identity_augment(32));
    PathwayInput in = clip_to_input(clip, c);
    CHECK(in.slow.shape().c == 3);
    CHECK(in.fast.shape().c == 1);
    CHECK(in.fast.shape().t == 32);

    c.input_variant = InputVariant::HalfRes;
    PathwayInput half = clip_to_input(clip, c);
    CHECK(half.fast.shape().h == 16);
    CHECK(half.slow.shape().h == 32);
}
