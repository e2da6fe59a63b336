#include "sfnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace sfnet {

namespace {

// bilinear with half-pixel centers
VideoFrame resize_bilinear(const VideoFrame& src, int nh, int nw) {
    VideoFrame dst;
    dst.h = nh;
    dst.w = nw;
    dst.c = src.c;
    dst.px.resize(static_cast<size_t>(nh) * nw * src.c);
    const double sy = static_cast<double>(src.h) / nh;
    const double sx = static_cast<double>(src.w) / nw;
    for (int y = 0; y < nh; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(src.h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < nw; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(src.w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.w - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < src.c; ++ch) {
                const double v0 = src.at(y0, x0, ch) * (1 - wx) + src.at(y0, x1, ch) * wx;
                const double v1 = src.at(y1, x0, ch) * (1 - wx) + src.at(y1, x1, ch) * wx;
                dst.at(y, x, ch) = v0 * (1 - wy) + v1 * wy;
            }
        }
    }
    return dst;
}

VideoFrame scale_shorter_side(const VideoFrame& f, int side) {
    if (f.h <= f.w) {
        const int nw = std::max(side, static_cast<int>(std::lround(
                                          static_cast<double>(f.w) * side / f.h)));
        return resize_bilinear(f, side, nw);
    }
    const int nh = std::max(side, static_cast<int>(std::lround(
                                      static_cast<double>(f.h) * side / f.w)));
    return resize_bilinear(f, nh, side);
}

VideoFrame crop_frame(const VideoFrame& f, int ox, int oy, int size) {
    VideoFrame out;
    out.h = size;
    out.w = size;
    out.c = f.c;
    out.px.resize(static_cast<size_t>(size) * size * f.c);
    for (int y = 0; y < size; ++y)
        std::memcpy(&out.px[static_cast<size_t>(y) * size * f.c],
                    &f.px[(static_cast<size_t>(y + oy) * f.w + ox) * f.c],
                    sizeof(double) * size * f.c);
    return out;
}

VideoFrame flip_frame(const VideoFrame& f) {
    VideoFrame out = f;
    for (int y = 0; y < f.h; ++y)
        for (int x = 0; x < f.w; ++x)
            for (int ch = 0; ch < f.c; ++ch) out.at(y, x, ch) = f.at(y, f.w - 1 - x, ch);
    return out;
}

VideoFrame apply_geometry(const VideoFrame& f, const CropGeometry& g, int crop) {
    VideoFrame scaled = scale_shorter_side(f, g.scale_side);
    if (scaled.h < crop || scaled.w < crop)
        throw DataError("crop " + std::to_string(crop) + " larger than scaled frame " +
                        std::to_string(scaled.h) + "x" + std::to_string(scaled.w));
    VideoFrame out = crop_frame(scaled, g.ox, g.oy, crop);
    if (g.flip) out = flip_frame(out);
    return out;
}

void check_length(const RawVideo& video, const ArchConfig& config) {
    const int need = config.T * config.tau;
    if (static_cast<int>(video.frames.size()) < need)
        throw DataError("video too short: " + std::to_string(video.frames.size()) +
                        " frames, need T*tau = " + std::to_string(need));
}

}  // namespace

ClipPair sample_train_clip(const RawVideo& video, const ArchConfig& config, Rng& rng,
                           const AugmentParams& aug) {
    check_length(video, config);
    const int window = config.T * config.tau;
    const int start = static_cast<int>(rng.next_below(
        static_cast<uint64_t>(video.frames.size()) - window + 1));

    ClipPair clip;
    clip.geometry.scale_side = rng.next_int(aug.scale_min, aug.scale_max);
    // offsets drawn against the first frame's scaled geometry; all frames share H,W
    VideoFrame probe = scale_shorter_side(video.frames[0], clip.geometry.scale_side);
    if (probe.h < aug.crop || probe.w < aug.crop)
        throw DataError("scaled frame smaller than crop");
    clip.geometry.ox = static_cast<int>(rng.next_below(probe.w - aug.crop + 1));
    clip.geometry.oy = static_cast<int>(rng.next_below(probe.h - aug.crop + 1));
    clip.geometry.flip = aug.flip && rng.next_double() < 0.5;

    if (config.has_fast()) {
        const int fstride = config.tau / config.omega;
        for (int j = 0; j < config.omega * config.T; ++j)
            clip.fast.push_back(
                apply_geometry(video.frames[static_cast<size_t>(start + j * fstride)],
                               clip.geometry, aug.crop));
        if (config.has_slow())  // slow frames coincide with every omega-th fast frame
            for (int i = 0; i < config.T; ++i)
                clip.slow.push_back(clip.fast[static_cast<size_t>(i) * config.omega]);
    } else {
        for (int i = 0; i < config.T; ++i)
            clip.slow.push_back(apply_geometry(
                video.frames[static_cast<size_t>(start + i * config.tau)], clip.geometry,
                aug.crop));
    }
    return clip;
}

std::vector<ClipPair> sample_test_views(const RawVideo& video, const ArchConfig& config,
                                        const EvalViewParams& view) {
    check_length(video, config);
    const int window = config.T * config.tau;
    const int max_start = static_cast<int>(video.frames.size()) - window;

    std::vector<int> starts;
    for (int i = 0; i < view.clips; ++i) {
        const double f = view.clips == 1 ? 0.5 : static_cast<double>(i) / (view.clips - 1);
        starts.push_back(static_cast<int>(std::lround(f * max_start)));
    }

    VideoFrame probe = scale_shorter_side(video.frames[0], view.side);
    const bool landscape = probe.w >= probe.h;
    const int spare = (landscape ? probe.w : probe.h) - view.side;
    std::vector<std::pair<int, int>> offsets;  // (ox, oy)
    for (int k = 0; k < view.crops; ++k) {
        const double f = view.crops == 1 ? 0.5 : static_cast<double>(k) / (view.crops - 1);
        const int off = static_cast<int>(std::lround(f * spare));
        offsets.emplace_back(landscape ? off : 0, landscape ? 0 : off);
    }

    std::vector<ClipPair> views;
    for (int start : starts)
        for (auto [ox, oy] : offsets) {
            ClipPair clip;
            clip.geometry = CropGeometry{view.side, ox, oy, false};
            if (config.has_fast()) {
                const int fstride = config.tau / config.omega;
                for (int j = 0; j < config.omega * config.T; ++j)
                    clip.fast.push_back(
                        apply_geometry(video.frames[static_cast<size_t>(start + j * fstride)],
                                       clip.geometry, view.side));
                if (config.has_slow())
                    for (int i = 0; i < config.T; ++i)
                        clip.slow.push_back(clip.fast[static_cast<size_t>(i) * config.omega]);
            } else {
                for (int i = 0; i < config.T; ++i)
                    clip.slow.push_back(apply_geometry(
                        video.frames[static_cast<size_t>(start + i * config.tau)], clip.geometry,
                        view.side));
            }
            views.push_back(std::move(clip));
        }
    return views;
}

ClipPair sample_center_clip(const RawVideo& video, const ArchConfig& config, int crop) {
    EvalViewParams v;
    v.clips = 1;
    v.crops = 1;
    v.side = crop;
    return sample_test_views(video, config, v)[0];
}

// --- weak-input variants -----------------------------------------------------

VideoFrame to_gray(const VideoFrame& f) {
    if (f.c != 3) throw InputError("to_gray expects 3-channel frames");
    VideoFrame out;
    out.h = f.h;
    out.w = f.w;
    out.c = 1;
    out.px.resize(static_cast<size_t>(f.h) * f.w);
    for (int y = 0; y < f.h; ++y)
        for (int x = 0; x < f.w; ++x)
            out.at(y, x, 0) =
                0.299 * f.at(y, x, 0) + 0.587 * f.at(y, x, 1) + 0.114 * f.at(y, x, 2);
    return out;
}

std::vector<VideoFrame> time_diff(const std::vector<VideoFrame>& frames) {
    std::vector<VideoFrame> luma;
    luma.reserve(frames.size());
    for (const auto& f : frames) luma.push_back(to_gray(f));
    std::vector<VideoFrame> out;
    out.reserve(frames.size());
    for (size_t t = 0; t < luma.size(); ++t) {
        VideoFrame d = luma[t];
        if (t == 0) {
            std::fill(d.px.begin(), d.px.end(), 0.0);  // first diff is zero
        } else {
            for (size_t i = 0; i < d.px.size(); ++i) d.px[i] -= luma[t - 1].px[i];
        }
        out.push_back(std::move(d));
    }
    return out;
}

VideoFrame half_res(const VideoFrame& f) { return resize_bilinear(f, f.h / 2, f.w / 2); }

std::vector<VideoFrame> apply_variant(const std::vector<VideoFrame>& frames, InputVariant v) {
    switch (v) {
        case InputVariant::Rgb:
            return frames;
        case InputVariant::Gray: {
            std::vector<VideoFrame> out;
            out.reserve(frames.size());
            for (const auto& f : frames) out.push_back(to_gray(f));
            return out;
        }
        case InputVariant::TimeDiff:
            return time_diff(frames);
        case InputVariant::HalfRes: {
            std::vector<VideoFrame> out;
            out.reserve(frames.size());
            for (const auto& f : frames) out.push_back(half_res(f));
            return out;
        }
    }
    return frames;
}

// --- tensors --------------------------------------------------------------------

Tensor frames_to_tensor(const std::vector<VideoFrame>& frames) {
    if (frames.empty()) throw InputError("frames_to_tensor: empty clip");
    const int T = static_cast<int>(frames.size());
    const VideoFrame& f0 = frames[0];
    Tensor out(Shape{1, f0.c, T, f0.h, f0.w});
    for (int t = 0; t < T; ++t) {
        const VideoFrame& f = frames[static_cast<size_t>(t)];
        for (int y = 0; y < f.h; ++y)
            for (int x = 0; x < f.w; ++x)
                for (int ch = 0; ch < f.c; ++ch) out.at(0, ch, t, y, x) = f.at(y, x, ch);
    }
    return out;
}

PathwayInput clip_to_input(const ClipPair& clip, const ArchConfig& config) {
    PathwayInput in;
    if (config.has_slow() && !clip.slow.empty()) in.slow = frames_to_tensor(clip.slow);
    if (config.has_fast() && !clip.fast.empty())
        in.fast = frames_to_tensor(apply_variant(clip.fast, config.input_variant));
    return in;
}

PathwayInput batch_inputs(const std::vector<PathwayInput>& clips) {
    if (clips.empty()) throw InputError("batch_inputs: empty batch");
    PathwayInput out;
    auto stack = [&](auto pick) {
        Tensor first = pick(clips[0]);
        if (first.empty()) return Tensor();
        Shape s = first.shape();
        s.n = static_cast<int64_t>(clips.size());
        Tensor batch(s);
        const int64_t stride = first.count();
        for (size_t i = 0; i < clips.size(); ++i) {
            const Tensor& t = pick(clips[i]);
            if (!t.same_shape(first)) throw DimensionError("batch_inputs: mixed clip shapes");
            std::memcpy(batch.data() + static_cast<int64_t>(i) * stride, t.data(),
                        sizeof(double) * stride);
        }
        return batch;
    };
    out.slow = stack([](const PathwayInput& p) { return p.slow; });
    out.fast = stack([](const PathwayInput& p) { return p.fast; });
    return out;
}

// --- synthetic corpus --------------------------------------------------------------

namespace {

// 3-channel noise texture, lightly smoothed, values in [lo, hi]
std::vector<double> make_texture(Rng& rng, int side, double lo, double hi) {
    std::vector<double> tex(static_cast<size_t>(side) * side * 3);
    for (auto& v : tex) v = lo + (hi - lo) * rng.next_double();
    // one 3x3 box-blur pass per channel (wraparound)
    std::vector<double> out(tex.size());
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                double s = 0.0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int yy = (y + dy + side) % side;
                        const int xx = (x + dx + side) % side;
                        s += tex[(static_cast<size_t>(yy) * side + xx) * 3 + ch];
                    }
                out[(static_cast<size_t>(y) * side + x) * 3 + ch] = s / 9.0;
            }
    return out;
}

}  // namespace

std::vector<RawVideo> generate_synthetic_corpus(uint64_t seed, int num_classes,
                                                int clips_per_class, const CorpusGeometry& geom) {
    if (num_classes < 2) throw InputError("synthetic corpus needs at least 2 classes");
    if (geom.patch >= geom.side) throw InputError("patch must be smaller than the canvas");
    std::vector<RawVideo> corpus;
    for (int k = 0; k < num_classes; ++k) {
        const auto [vx, vy] = geom.velocities[static_cast<size_t>(k) %
                                              geom.velocities.size()];
        for (int j = 0; j < clips_per_class; ++j) {
            // textures and start depend on (seed, clip index) only: identical
            // across classes, so appearance carries no class signal
            Rng rng(seed, stream_id("corpus") ^ static_cast<uint64_t>(j));
            const auto background = make_texture(rng, geom.side, 0.0, 0.5);
            std::vector<double> patch(static_cast<size_t>(geom.patch) * geom.patch * 3);
            for (auto& v : patch) v = 0.5 + 0.5 * rng.next_double();
            const int sx = static_cast<int>(rng.next_below(geom.side));
            const int sy = static_cast<int>(rng.next_below(geom.side));

            RawVideo video;
            video.labels = {k};
            for (int t = 0; t < geom.frames; ++t) {
                VideoFrame f;
                f.h = geom.side;
                f.w = geom.side;
                f.c = 3;
                f.px = background;
                const int px = ((sx + vx * t) % geom.side + geom.side) % geom.side;
                const int py = ((sy + vy * t) % geom.side + geom.side) % geom.side;
                for (int y = 0; y < geom.patch; ++y)
                    for (int x = 0; x < geom.patch; ++x) {
                        const int yy = (py + y) % geom.side;
                        const int xx = (px + x) % geom.side;
                        for (int ch = 0; ch < 3; ++ch)
                            f.at(yy, xx, ch) =
                                patch[(static_cast<size_t>(y) * geom.patch + x) * 3 + ch];
                    }
                video.frames.push_back(std::move(f));
            }
            corpus.push_back(std::move(video));
        }
    }
    return corpus;
}

std::vector<RawVideo> shuffle_frames(const std::vector<RawVideo>& corpus, uint64_t seed) {
    std::vector<RawVideo> out = corpus;
    for (size_t v = 0; v < out.size(); ++v) {
        Rng rng(seed, stream_id("shuffle") ^ v);
        auto& frames = out[v].frames;
        for (size_t i = frames.size(); i > 1; --i)
            std::swap(frames[i - 1], frames[rng.next_below(i)]);
    }
    return out;
}

// --- SFV1 ---------------------------------------------------------------------------

namespace {

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("sfv1: truncated file");
    return v;
}

}  // namespace

void write_sfv1(const std::string& path, const RawVideo& video) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("sfv1: cannot open " + path + " for writing");
    os.write("SFV1", 4);
    put<uint32_t>(os, 1);
    const uint32_t frames = static_cast<uint32_t>(video.frames.size());
    put<uint32_t>(os, frames);
    const int h = frames ? video.frames[0].h : 0;
    const int w = frames ? video.frames[0].w : 0;
    const int c = frames ? video.frames[0].c : 0;
    put<uint32_t>(os, static_cast<uint32_t>(h));
    put<uint32_t>(os, static_cast<uint32_t>(w));
    put<uint32_t>(os, static_cast<uint32_t>(c));
    put<uint32_t>(os, static_cast<uint32_t>(video.labels.size()));
    for (int label : video.labels) put<uint32_t>(os, static_cast<uint32_t>(label));
    for (const auto& f : video.frames)
        for (double v : f.px) put<float>(os, static_cast<float>(v));
    if (!video.boxes.empty()) {
        put<uint32_t>(os, static_cast<uint32_t>(video.boxes.size()));
        for (const auto& b : video.boxes) {
            put<uint32_t>(os, static_cast<uint32_t>(b.frame));
            put<float>(os, static_cast<float>(b.x0));
            put<float>(os, static_cast<float>(b.y0));
            put<float>(os, static_cast<float>(b.x1));
            put<float>(os, static_cast<float>(b.y1));
            put<uint32_t>(os, static_cast<uint32_t>(b.labels.size()));
            for (int label : b.labels) put<uint32_t>(os, static_cast<uint32_t>(label));
        }
    }
    if (!os) throw IoError("sfv1: write failed for " + path);
}

RawVideo read_sfv1(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("sfv1: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SFV1", 4) != 0) throw IoError("sfv1: bad magic in " + path);
    const uint32_t version = get<uint32_t>(is);
    if (version != 1) throw IoError("sfv1: unsupported version");
    const uint32_t frames = get<uint32_t>(is);
    const uint32_t h = get<uint32_t>(is);
    const uint32_t w = get<uint32_t>(is);
    const uint32_t c = get<uint32_t>(is);
    const uint32_t nlabels = get<uint32_t>(is);
    RawVideo video;
    for (uint32_t i = 0; i < nlabels; ++i)
        video.labels.push_back(static_cast<int>(get<uint32_t>(is)));
    for (uint32_t t = 0; t < frames; ++t) {
        VideoFrame f;
        f.h = static_cast<int>(h);
        f.w = static_cast<int>(w);
        f.c = static_cast<int>(c);
        f.px.resize(static_cast<size_t>(h) * w * c);
        for (auto& v : f.px) v = static_cast<double>(get<float>(is));
        video.frames.push_back(std::move(f));
    }
    // optional detection block
    uint32_t nboxes = 0;
    if (is.read(reinterpret_cast<char*>(&nboxes), sizeof nboxes)) {
        for (uint32_t i = 0; i < nboxes; ++i) {
            BoxAnnotation b;
            b.frame = static_cast<int>(get<uint32_t>(is));
            b.x0 = get<float>(is);
            b.y0 = get<float>(is);
            b.x1 = get<float>(is);
            b.y1 = get<float>(is);
            const uint32_t nl = get<uint32_t>(is);
            for (uint32_t k = 0; k < nl; ++k)
                b.labels.push_back(static_cast<int>(get<uint32_t>(is)));
            video.boxes.push_back(std::move(b));
        }
    }
    return video;
}

void write_corpus(const std::string& dir, const std::vector<RawVideo>& corpus) {
    std::filesystem::create_directories(dir);
    char name[32];
    for (size_t i = 0; i < corpus.size(); ++i) {
        std::snprintf(name, sizeof name, "clip_%05zu.sfv", i);
        write_sfv1((std::filesystem::path(dir) / name).string(), corpus[i]);
    }
}

std::vector<RawVideo> load_corpus(const std::string& dir) {
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.path().extension() == ".sfv") paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    std::vector<RawVideo> corpus;
    for (const auto& p : paths) corpus.push_back(read_sfv1(p.string()));
    if (corpus.empty()) throw DataError("no .sfv clips under " + dir);
    return corpus;
}

}  // namespace sfnet
