#pragma once

#include <string>
#include <vector>

#include "sfnet/common.hpp"

namespace sfnet {

/// Per-view class-score rows for one video; rows ordered clip-major
/// (clip 0 crop 0, clip 0 crop 1, ...).
struct ViewScores {
    int clips = 0;
    int crops = 0;
    std::vector<std::vector<double>> rows;
};

enum class AggregationKind { SoftmaxMean, SigmoidTemporalMax };

/// softmax-mean: arithmetic mean over all views. sigmoid-temporal-max:
/// element-wise max over clips of the crop-averaged scores.
std::vector<double> aggregate_views(const ViewScores& scores, AggregationKind kind);

/// Fraction (in %) of videos whose label ranks in the top k; ties broken by
/// lower class index.
double topk_accuracy(const std::vector<std::vector<double>>& video_scores,
                     const std::vector<int>& labels, int k);

struct ApResult {
    double map = 0.0;
    std::vector<double> per_class_ap;   // -1 for excluded classes
    std::vector<int> excluded_classes;  // no positives
};

/// Per-class AP with all-point precision/recall interpolation over videos
/// ranked by score (ties by input order); mean over classes with >= 1 positive.
ApResult multilabel_map(const std::vector<std::vector<double>>& video_scores,
                        const std::vector<std::vector<int>>& label_sets, int num_classes);

std::string metric_report_text(const std::vector<std::pair<std::string, double>>& metrics,
                               const ApResult* ap = nullptr);
std::string per_class_ap_tsv(const ApResult& ap);

}  // namespace sfnet
