#include "sfnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace sfnet {

namespace {

// summing in sorted order makes the mean bit-exactly invariant to the order in
// which views arrive
double sorted_mean(std::vector<double>& values) {
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

}  // namespace

std::vector<double> aggregate_views(const ViewScores& scores, AggregationKind kind) {
    if (scores.rows.empty()) throw InputError("aggregate_views: no view scores");
    if (static_cast<int>(scores.rows.size()) != scores.clips * scores.crops)
        throw InputError("aggregate_views: view count != clips x crops");
    const size_t k = scores.rows[0].size();
    for (const auto& row : scores.rows)
        if (row.size() != k) throw InputError("aggregate_views: ragged score rows");
    std::vector<double> out(k, 0.0);
    if (kind == AggregationKind::SoftmaxMean) {
        std::vector<double> column(scores.rows.size());
        for (size_t i = 0; i < k; ++i) {
            for (size_t r = 0; r < scores.rows.size(); ++r) column[r] = scores.rows[r][i];
            out[i] = sorted_mean(column);
        }
        return out;
    }
    // sigmoid-temporal-max: average crops within each clip, then max over clips
    std::fill(out.begin(), out.end(), -std::numeric_limits<double>::infinity());
    std::vector<double> crop_vals(static_cast<size_t>(scores.crops));
    for (int clip = 0; clip < scores.clips; ++clip) {
        for (size_t i = 0; i < k; ++i) {
            for (int crop = 0; crop < scores.crops; ++crop)
                crop_vals[static_cast<size_t>(crop)] =
                    scores.rows[static_cast<size_t>(clip * scores.crops + crop)][i];
            out[i] = std::max(out[i], sorted_mean(crop_vals));
        }
    }
    return out;
}

double topk_accuracy(const std::vector<std::vector<double>>& video_scores,
                     const std::vector<int>& labels, int k) {
    if (k < 1) throw InputError("topk_accuracy: k must be >= 1");
    if (video_scores.size() != labels.size())
        throw InputError("topk_accuracy: scores/labels length mismatch");
    if (video_scores.empty()) return 0.0;
    int hits = 0;
    for (size_t v = 0; v < video_scores.size(); ++v) {
        const auto& s = video_scores[v];
        const int label = labels[v];
        const double sl = s[static_cast<size_t>(label)];
        int ahead = 0;  // classes ranked above the label (ties to lower index)
        for (size_t j = 0; j < s.size(); ++j)
            if (s[j] > sl || (s[j] == sl && static_cast<int>(j) < label)) ++ahead;
        if (ahead < k) ++hits;
    }
    return 100.0 * hits / static_cast<double>(video_scores.size());
}

namespace {

// All-point interpolated AP from a ranked list of hit flags.
double average_precision(const std::vector<char>& hit_ranked, int64_t positives) {
    std::vector<double> prec_at_hit;
    int64_t tp = 0;
    for (size_t r = 0; r < hit_ranked.size(); ++r) {
        if (hit_ranked[r]) {
            ++tp;
            prec_at_hit.push_back(static_cast<double>(tp) / static_cast<double>(r + 1));
        }
    }
    // precision envelope, right to left
    for (size_t i = prec_at_hit.size(); i > 1; --i)
        prec_at_hit[i - 2] = std::max(prec_at_hit[i - 2], prec_at_hit[i - 1]);
    double sum = 0.0;
    for (double p : prec_at_hit) sum += p;
    return sum / static_cast<double>(positives);
}

}  // namespace

ApResult multilabel_map(const std::vector<std::vector<double>>& video_scores,
                        const std::vector<std::vector<int>>& label_sets, int num_classes) {
    if (video_scores.size() != label_sets.size())
        throw InputError("multilabel_map: scores/labels length mismatch");
    ApResult result;
    result.per_class_ap.assign(static_cast<size_t>(num_classes), -1.0);
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < num_classes; ++c) {
        int64_t positives = 0;
        std::vector<std::pair<double, char>> ranked;  // (score, is positive)
        for (size_t v = 0; v < video_scores.size(); ++v) {
            const bool pos = std::find(label_sets[v].begin(), label_sets[v].end(), c) !=
                             label_sets[v].end();
            positives += pos;
            ranked.emplace_back(video_scores[v][static_cast<size_t>(c)], pos ? 1 : 0);
        }
        if (positives == 0) {
            result.excluded_classes.push_back(c);
            continue;
        }
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        std::vector<char> hits;
        hits.reserve(ranked.size());
        for (const auto& [score, pos] : ranked) hits.push_back(pos);
        const double ap = average_precision(hits, positives);
        result.per_class_ap[static_cast<size_t>(c)] = ap;
        sum += ap;
        ++counted;
    }
    result.map = counted > 0 ? sum / counted : 0.0;
    return result;
}

std::string metric_report_text(const std::vector<std::pair<std::string, double>>& metrics,
                               const ApResult* ap) {
    std::ostringstream os;
    char buf[128];
    for (const auto& [name, value] : metrics) {
        std::snprintf(buf, sizeof buf, "metric=%s value=%.10g", name.c_str(), value);
        os << buf << "\n";
    }
    if (ap) {
        std::snprintf(buf, sizeof buf, "metric=map value=%.10g", ap->map);
        os << buf << "\n";
        for (size_t c = 0; c < ap->per_class_ap.size(); ++c) {
            if (ap->per_class_ap[c] < 0) continue;
            std::snprintf(buf, sizeof buf, "metric=ap class=%zu value=%.10g", c,
                          ap->per_class_ap[c]);
            os << buf << "\n";
        }
        for (int c : ap->excluded_classes) os << "metric=ap class=" << c << " value=excluded\n";
    }
    return os.str();
}

std::string per_class_ap_tsv(const ApResult& ap) {
    std::ostringstream os;
    os << "# class\tap\n";
    char buf[64];
    for (size_t c = 0; c < ap.per_class_ap.size(); ++c) {
        if (ap.per_class_ap[c] < 0) {
            os << c << "\texcluded\n";
        } else {
            std::snprintf(buf, sizeof buf, "%.10g", ap.per_class_ap[c]);
            os << c << "\t" << buf << "\n";
        }
    }
    return os.str();
}

}  // namespace sfnet
