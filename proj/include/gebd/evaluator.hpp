#pragma once

#include <ostream>
#include <vector>

#include "gebd/datamodel.hpp"

namespace gebd {

// |pred - gt| / duration. Duration-relative tolerance: a prediction is a
// true positive iff this ratio is at or below the threshold.
double rel_dis(double pred_time, double gt_time, double duration);

struct MatchedPair {
    int pred_index = -1;
    int gt_index = -1;
    double rel_dis = 0.0;
};

struct MatchResult {
    double threshold = 0.0;
    std::vector<MatchedPair> matched;
    std::vector<int> unmatched_preds;
    std::vector<int> unmatched_gts;

    long long tp() const { return static_cast<long long>(matched.size()); }
    long long fp() const { return static_cast<long long>(unmatched_preds.size()); }
    long long fn() const { return static_cast<long long>(unmatched_gts.size()); }
};

// Maximum-cardinality one-to-one matching over pairs with rel_dis <=
// threshold. Seeded greedily by ascending rel_dis (ties broken by lower
// prediction index), then grown to maximum cardinality with augmenting
// paths; greedy alone can strand matchable pairs.
MatchResult match_video(const std::vector<double>& preds, const std::vector<double>& gts,
                        double duration, double threshold);

struct Score {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R), each with 0/0 -> 0.
Score score(long long tp, long long fp, long long fn);

// Micro-averaged evaluation: per threshold, counts are pooled over videos
// and then scored; per-video rows are kept for inspection. Prediction times
// outside [0, duration] are clamped, with a note to `warnings` when given.
// Every id in `preds` must exist in `annotations`; videos without
// predictions contribute their ground truths as false negatives.
EvalReport evaluate(const PredictionMap& preds, const std::vector<AnnotatedVideo>& annotations,
                    const std::vector<double>& thresholds, std::ostream* warnings = nullptr);

} // namespace gebd
