#include "sfnet/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <map>
#include <sstream>

namespace sfnet {

double iou(const Box& a, const Box& b) {
    const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
    const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
    const double inter = ix * iy;
    const double area_a = (a.x1 - a.x0) * (a.y1 - a.y0);
    const double area_b = (b.x1 - b.x0) * (b.y1 - b.y0);
    const double uni = area_a + area_b - inter;
    return uni <= 0.0 ? 0.0 : inter / uni;
}

std::vector<Proposal> filter_proposals(const std::vector<Proposal>& proposals, double threshold) {
    std::vector<Proposal> out;
    for (const auto& p : proposals)
        if (p.confidence > threshold) out.push_back(p);  // strictly greater
    return out;
}

std::vector<TrainingRoi> select_training_rois(const std::vector<Proposal>& proposals,
                                              const std::vector<GroundTruth>& ground_truth) {
    std::vector<TrainingRoi> out;
    for (const auto& gt : ground_truth) out.push_back(TrainingRoi{gt.box, gt.labels, true});
    for (const auto& p : proposals) {
        double best = 0.0;
        const GroundTruth* best_gt = nullptr;
        for (const auto& gt : ground_truth) {
            const double v = iou(p.box, gt.box);
            if (v > best) {
                best = v;
                best_gt = &gt;
            }
        }
        if (best_gt && best > 0.75)  // strict
            out.push_back(TrainingRoi{p.box, best_gt->labels, false});
    }
    return out;
}

namespace {

// bilinear sample of one (t) plane at continuous map coordinates; cell i has
// its center at i + 0.5
double bilinear_at(const Tensor& map, int64_t c, int64_t t, double x, double y) {
    const Shape& s = map.shape();
    double u = std::clamp(x - 0.5, 0.0, static_cast<double>(s.w - 1));
    double v = std::clamp(y - 0.5, 0.0, static_cast<double>(s.h - 1));
    const int64_t x0 = static_cast<int64_t>(u);
    const int64_t y0 = static_cast<int64_t>(v);
    const int64_t x1 = std::min(x0 + 1, s.w - 1);
    const int64_t y1 = std::min(y0 + 1, s.h - 1);
    const double wx = u - x0;
    const double wy = v - y0;
    const double top = map.at(0, c, t, y0, x0) * (1 - wx) + map.at(0, c, t, y0, x1) * wx;
    const double bot = map.at(0, c, t, y1, x0) * (1 - wx) + map.at(0, c, t, y1, x1) * wx;
    return top * (1 - wy) + bot * wy;
}

}  // namespace

std::vector<double> roi_features(const Tensor& feature_map, const Box& box, int grid) {
    const Shape& s = feature_map.shape();
    if (s.n != 1) throw InputError("roi_features expects a single (C,T,H,W) feature map");
    if (grid < 1) throw InputError("roi_features: grid must be >= 1");
    Box b{std::clamp(box.x0, 0.0, 1.0), std::clamp(box.y0, 0.0, 1.0),
          std::clamp(box.x1, 0.0, 1.0), std::clamp(box.y1, 0.0, 1.0)};
    if (b.x1 - b.x0 <= 0.0 || b.y1 - b.y0 <= 0.0)
        throw InputError("roi_features: degenerate box after clamping");

    const double X0 = b.x0 * s.w, X1 = b.x1 * s.w;
    const double Y0 = b.y0 * s.h, Y1 = b.y1 * s.h;
    const double bw = (X1 - X0) / grid;
    const double bh = (Y1 - Y0) / grid;

    std::vector<double> out(static_cast<size_t>(s.c), 0.0);
    std::vector<double> bins(static_cast<size_t>(grid) * grid);
    for (int64_t c = 0; c < s.c; ++c) {
        std::fill(bins.begin(), bins.end(), 0.0);
        for (int64_t t = 0; t < s.t; ++t)  // 2D box replicated along time
            for (int by = 0; by < grid; ++by)
                for (int bx = 0; bx < grid; ++bx) {
                    double acc = 0.0;
                    for (int sy = 0; sy < 2; ++sy)  // 2x2 samples per bin
                        for (int sx = 0; sx < 2; ++sx) {
                            const double x = X0 + (bx + (sx + 0.5) / 2.0) * bw;
                            const double y = Y0 + (by + (sy + 0.5) / 2.0) * bh;
                            acc += bilinear_at(feature_map, c, t, x, y);
                        }
                    bins[static_cast<size_t>(by) * grid + bx] += acc / 4.0;
                }
        double best = -std::numeric_limits<double>::infinity();
        for (double v : bins) best = std::max(best, v / s.t);  // temporal mean, spatial max
        out[static_cast<size_t>(c)] = best;
    }
    return out;
}

ApResult frame_map(const std::vector<DetectionFrame>& frames, int num_classes,
                   double iou_threshold) {
    ApResult result;
    result.per_class_ap.assign(static_cast<size_t>(num_classes), -1.0);
    double sum = 0.0;
    int counted = 0;

    struct Item {
        double score;
        size_t frame;
        size_t det;
    };

    for (int c = 0; c < num_classes; ++c) {
        int64_t positives = 0;
        for (const auto& f : frames)
            for (const auto& gt : f.ground_truth)
                positives += std::count(gt.labels.begin(), gt.labels.end(), c) > 0;
        if (positives == 0) {
            result.excluded_classes.push_back(c);
            continue;
        }
        std::vector<Item> items;
        for (size_t fi = 0; fi < frames.size(); ++fi)
            for (size_t di = 0; di < frames[fi].detections.size(); ++di)
                if (frames[fi].detections[di].label == c)
                    items.push_back(Item{frames[fi].detections[di].score, fi, di});
        std::stable_sort(items.begin(), items.end(),
                         [](const Item& a, const Item& b) { return a.score > b.score; });

        std::vector<std::vector<char>> used(frames.size());
        for (size_t fi = 0; fi < frames.size(); ++fi)
            used[fi].assign(frames[fi].ground_truth.size(), 0);

        std::vector<char> hits;
        hits.reserve(items.size());
        for (const Item& item : items) {
            const auto& frame = frames[item.frame];
            const Box& det = frame.detections[item.det].box;
            double best = -1.0;
            int best_gt = -1;
            for (size_t gi = 0; gi < frame.ground_truth.size(); ++gi) {
                const auto& gt = frame.ground_truth[gi];
                if (used[item.frame][gi]) continue;
                if (std::count(gt.labels.begin(), gt.labels.end(), c) == 0) continue;
                const double v = iou(det, gt.box);
                if (v > best) {
                    best = v;
                    best_gt = static_cast<int>(gi);
                }
            }
            if (best >= iou_threshold && best_gt >= 0) {
                used[item.frame][static_cast<size_t>(best_gt)] = 1;
                hits.push_back(1);
            } else {
                hits.push_back(0);
            }
        }
        // all-point interpolated AP over the ranked list
        double tp = 0;
        std::vector<double> prec_at_hit;
        for (size_t r = 0; r < hits.size(); ++r)
            if (hits[r]) {
                tp += 1;
                prec_at_hit.push_back(tp / static_cast<double>(r + 1));
            }
        for (size_t i = prec_at_hit.size(); i > 1; --i)
            prec_at_hit[i - 2] = std::max(prec_at_hit[i - 2], prec_at_hit[i - 1]);
        double ap = 0.0;
        for (double p : prec_at_hit) ap += p;
        ap /= static_cast<double>(positives);

        result.per_class_ap[static_cast<size_t>(c)] = ap;
        sum += ap;
        ++counted;
    }
    result.map = counted > 0 ? sum / counted : 0.0;
    return result;
}

// --- interchange files ------------------------------------------------------------

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

std::vector<int> parse_labels(const std::string& s) {
    std::vector<int> labels;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) labels.push_back(std::stoi(part));
    return labels;
}

}  // namespace

std::vector<DetectionFrame> read_detection_frames(const std::string& det_path,
                                                  const std::string& gt_path) {
    std::vector<DetectionFrame> frames;
    std::map<std::string, size_t> index;
    auto frame_of = [&](const std::string& id) -> DetectionFrame& {
        auto [it, fresh] = index.try_emplace(id, frames.size());
        if (fresh) {
            frames.push_back(DetectionFrame{});
            frames.back().frame_id = id;
        }
        return frames[it->second];
    };

    auto read_lines = [](const std::string& path, auto&& handle) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            try {
                handle(split_ws(line));
            } catch (const std::exception& e) {
                throw DataError(path + " line " + std::to_string(lineno) + ": " + e.what());
            }
        }
    };

    read_lines(gt_path, [&](const std::vector<std::string>& f) {
        if (f.size() != 6) throw DataError("expected: frame_id x0 y0 x1 y1 labels");
        GroundTruth gt;
        gt.box = Box{std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
        gt.labels = parse_labels(f[5]);
        frame_of(f[0]).ground_truth.push_back(std::move(gt));
    });
    read_lines(det_path, [&](const std::vector<std::string>& f) {
        if (f.size() != 7) throw DataError("expected: frame_id x0 y0 x1 y1 label score");
        Detection d;
        d.box = Box{std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
        d.label = std::stoi(f[5]);
        d.score = std::stod(f[6]);
        frame_of(f[0]).detections.push_back(std::move(d));
    });
    return frames;
}

void write_detections(const std::string& path, const std::vector<DetectionFrame>& frames) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    char buf[256];
    for (const auto& f : frames)
        for (const auto& d : f.detections) {
            std::snprintf(buf, sizeof buf, "%s %.8g %.8g %.8g %.8g %d %.10g", f.frame_id.c_str(),
                          d.box.x0, d.box.y0, d.box.x1, d.box.y1, d.label, d.score);
            os << buf << "\n";
        }
}

void write_ground_truth(const std::string& path, const std::vector<DetectionFrame>& frames) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    char buf[256];
    for (const auto& f : frames)
        for (const auto& gt : f.ground_truth) {
            std::string labels;
            for (size_t i = 0; i < gt.labels.size(); ++i)
                labels += (i ? "," : "") + std::to_string(gt.labels[i]);
            std::snprintf(buf, sizeof buf, "%s %.8g %.8g %.8g %.8g %s", f.frame_id.c_str(),
                          gt.box.x0, gt.box.y0, gt.box.x1, gt.box.y1, labels.c_str());
            os << buf << "\n";
        }
}

}  // namespace sfnet
