#pragma once

#include <string>
#include <vector>

#include "sfnet/eval.hpp"
#include "sfnet/tensor.hpp"

namespace sfnet {

struct Box {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // normalized, x0<x1, y0<y1
};

struct Proposal {
    Box box;
    double confidence = 0.0;
};

struct Detection {
    Box box;
    int label = 0;
    double score = 0.0;
};

struct GroundTruth {
    Box box;
    std::vector<int> labels;
};

/// One evaluation frame: proposals with predicted per-class scores, and
/// ground-truth boxes with label sets.
struct DetectionFrame {
    std::string frame_id;
    std::vector<Detection> detections;
    std::vector<GroundTruth> ground_truth;
};

double iou(const Box& a, const Box& b);

/// Strictly-greater-than filter, order preserved.
std::vector<Proposal> filter_proposals(const std::vector<Proposal>& proposals,
                                       double threshold = 0.9);

struct TrainingRoi {
    Box box;
    std::vector<int> labels;
    bool is_ground_truth = false;
};

/// All ground-truth boxes plus proposals with max IoU > 0.75 against any
/// ground truth; each proposal carries the labels of its best match.
std::vector<TrainingRoi> select_training_rois(const std::vector<Proposal>& proposals,
                                              const std::vector<GroundTruth>& ground_truth);

/// 2D box replicated across all T frames; per frame a grid x grid RoIAlign
/// (2x2 bilinear samples per bin, averaged), temporal mean over T, spatial max
/// over the grid. feature_map is (C, T, H, W) — a (1,C,T,H,W) tensor works too.
std::vector<double> roi_features(const Tensor& feature_map, const Box& box, int grid = 7);

/// Detections ranked by score (ties by input order), greedily matched per
/// frame to unmatched ground truths of the class at IoU >= iou_threshold;
/// all-point interpolated AP; mean over classes with >= 1 ground truth.
ApResult frame_map(const std::vector<DetectionFrame>& frames, int num_classes,
                   double iou_threshold = 0.5);

// Interchange files: line-delimited text.
//   detections: frame_id x0 y0 x1 y1 label score
//   ground truth: frame_id x0 y0 x1 y1 label[,label...]
std::vector<DetectionFrame> read_detection_frames(const std::string& det_path,
                                                  const std::string& gt_path);
void write_detections(const std::string& path, const std::vector<DetectionFrame>& frames);
void write_ground_truth(const std::string& path, const std::vector<DetectionFrame>& frames);

}  // namespace sfnet
