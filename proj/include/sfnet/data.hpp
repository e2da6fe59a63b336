#pragma once

#include <string>
#include <vector>

#include "sfnet/arch.hpp"
#include "sfnet/net.hpp"
#include "sfnet/tensor.hpp"

namespace sfnet {

/// One frame, values in [0,1], layout (h, w, c) with c fastest.
struct VideoFrame {
    int h = 0, w = 0, c = 0;
    std::vector<double> px;

    double at(int y, int x, int ch) const { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    double& at(int y, int x, int ch) { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
};

struct BoxAnnotation {
    int frame = 0;
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // normalized
    std::vector<int> labels;
};

struct RawVideo {
    std::vector<VideoFrame> frames;
    double fps = 30.0;                 // informational
    std::vector<int> labels;           // class index or multi-label set
    std::vector<BoxAnnotation> boxes;  // optional, detection only
};

struct CropGeometry {
    int scale_side = 0;  // shorter side after rescale
    int ox = 0, oy = 0;  // crop offset in the rescaled frame
    bool flip = false;
};

struct ClipPair {
    std::vector<VideoFrame> slow;  // T frames
    std::vector<VideoFrame> fast;  // wT frames
    CropGeometry geometry;
};

struct AugmentParams {
    int crop = 224;
    int scale_min = 256;
    int scale_max = 320;
    bool flip = true;
};

struct EvalViewParams {
    int clips = 10;
    int crops = 3;
    int side = 256;  // shorter side and square crop size
};

// --- sampling ---------------------------------------------------------------

/// Uniform-random T*tau window, shared random scale/crop/flip geometry on both
/// pathways. Throws DataError if the video is shorter than T*tau.
ClipPair sample_train_clip(const RawVideo& video, const ArchConfig& config, Rng& rng,
                           const AugmentParams& aug = {});

/// clips x crops deterministic views: equidistant clip starts, shorter side
/// scaled to `side`, left/center/right crops (top/center/bottom when portrait).
std::vector<ClipPair> sample_test_views(const RawVideo& video, const ArchConfig& config,
                                        const EvalViewParams& view = {});

/// Center clip, center crop at native scale — the desk-scale validation view.
ClipPair sample_center_clip(const RawVideo& video, const ArchConfig& config, int crop);

// --- weak-input variants (fast pathway input only) ---------------------------

VideoFrame to_gray(const VideoFrame& f);  // luma 0.299/0.587/0.114, 1 channel
/// Temporal difference of luma, first diff zero. Single channel.
std::vector<VideoFrame> time_diff(const std::vector<VideoFrame>& frames);
VideoFrame half_res(const VideoFrame& f);  // bilinear downscale by 2 per side

std::vector<VideoFrame> apply_variant(const std::vector<VideoFrame>& frames, InputVariant v);

// --- tensors -----------------------------------------------------------------

Tensor frames_to_tensor(const std::vector<VideoFrame>& frames);  // (1, C, T, H, W)
PathwayInput clip_to_input(const ClipPair& clip, const ArchConfig& config);
PathwayInput batch_inputs(const std::vector<PathwayInput>& clips);

// --- synthetic motion corpus --------------------------------------------------

struct CorpusGeometry {
    int frames = 16;
    int side = 16;
    int patch = 6;
    /// class k moves with velocities[k % size]. Defaults are tuned to the
    /// 16-wide wraparound canvas: speeds are coprime to the side, so every
    /// class sweeps all positions (temporal means carry no class signal), and
    /// displacements alias pairwise at a temporal stride of 4 (4*1 = 4*5 mod
    /// 16) while remaining distinct at stride 2.
    std::vector<std::pair<int, int>> velocities = {{1, 0}, {5, 0}, {-1, 0}, {-5, 0},
                                                   {0, 1}, {0, 5}, {0, -1}, {0, -5}};
};

/// Class identity is carried only by patch motion (direction x speed); textures
/// and start positions depend on (seed, clip index) alone, so any single frame
/// is equally likely under every class.
std::vector<RawVideo> generate_synthetic_corpus(uint64_t seed, int num_classes,
                                                int clips_per_class,
                                                const CorpusGeometry& geom = {});

/// Shuffles each video's frames (destroys motion, preserves appearance).
std::vector<RawVideo> shuffle_frames(const std::vector<RawVideo>& corpus, uint64_t seed);

// --- SFV1 raw clip file format -------------------------------------------------

void write_sfv1(const std::string& path, const RawVideo& video);
RawVideo read_sfv1(const std::string& path);

/// Writes clip_0000.sfv ... under dir; loads them back in name order.
void write_corpus(const std::string& dir, const std::vector<RawVideo>& corpus);
std::vector<RawVideo> load_corpus(const std::string& dir);

}  // namespace sfnet
