#include "gebd/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <tuple>

namespace gebd {

double rel_dis(double pred_time, double gt_time, double duration) {
    if (duration <= 0.0) throw Error("rel_dis: duration must be > 0");
    return std::abs(pred_time - gt_time) / duration;
}

MatchResult match_video(const std::vector<double>& preds, const std::vector<double>& gts,
                        double duration, double threshold) {
    const int np = static_cast<int>(preds.size());
    const int ng = static_cast<int>(gts.size());

    struct Edge {
        double d;
        int p, g;
    };
    std::vector<Edge> edges;
    std::vector<std::vector<int>> adj(np); // eligible gt indices per pred, ascending
    for (int p = 0; p < np; ++p) {
        for (int g = 0; g < ng; ++g) {
            const double d = rel_dis(preds[p], gts[g], duration);
            if (d <= threshold) {
                edges.push_back({d, p, g});
                adj[p].push_back(g);
            }
        }
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        return std::tie(a.d, a.p, a.g) < std::tie(b.d, b.p, b.g);
    });

    std::vector<int> gt_of_pred(np, -1), pred_of_gt(ng, -1);
    for (const Edge& e : edges) {
        if (gt_of_pred[e.p] == -1 && pred_of_gt[e.g] == -1) {
            gt_of_pred[e.p] = e.g;
            pred_of_gt[e.g] = e.p;
        }
    }

    // Augment until maximal: the greedy seed above is not always maximum.
    std::vector<char> visited(ng, 0);
    std::function<bool(int)> augment = [&](int p) -> bool {
        for (int g : adj[p]) {
            if (visited[g]) continue;
            visited[g] = 1;
            if (pred_of_gt[g] == -1 || augment(pred_of_gt[g])) {
                gt_of_pred[p] = g;
                pred_of_gt[g] = p;
                return true;
            }
        }
        return false;
    };
    for (int p = 0; p < np; ++p) {
        if (gt_of_pred[p] != -1) continue;
        std::fill(visited.begin(), visited.end(), 0);
        augment(p);
    }

    MatchResult result;
    result.threshold = threshold;
    for (int p = 0; p < np; ++p) {
        if (gt_of_pred[p] >= 0)
            result.matched.push_back({p, gt_of_pred[p], rel_dis(preds[p], gts[gt_of_pred[p]], duration)});
        else
            result.unmatched_preds.push_back(p);
    }
    for (int g = 0; g < ng; ++g)
        if (pred_of_gt[g] == -1) result.unmatched_gts.push_back(g);
    return result;
}

Score score(long long tp, long long fp, long long fn) {
    Score s;
    const long long denom_p = tp + fp;
    const long long denom_r = tp + fn;
    s.precision = denom_p > 0 ? static_cast<double>(tp) / static_cast<double>(denom_p) : 0.0;
    s.recall = denom_r > 0 ? static_cast<double>(tp) / static_cast<double>(denom_r) : 0.0;
    const double pr = s.precision + s.recall;
    s.f1 = pr > 0.0 ? 2.0 * s.precision * s.recall / pr : 0.0;
    return s;
}

EvalReport evaluate(const PredictionMap& preds, const std::vector<AnnotatedVideo>& annotations,
                    const std::vector<double>& thresholds, std::ostream* warnings) {
    for (const auto& [id, _] : preds) {
        const bool known = std::any_of(annotations.begin(), annotations.end(),
                                       [&](const AnnotatedVideo& v) { return v.id == id; });
        if (!known) throw Error("predictions reference unknown video id '" + id + "'");
    }

    // Clamp once, outside the threshold loop.
    std::vector<std::pair<const AnnotatedVideo*, std::vector<double>>> pairs;
    for (const auto& video : annotations) {
        std::vector<double> times;
        if (auto it = preds.find(video.id); it != preds.end()) {
            for (const auto& p : it->second) {
                double t = p.time;
                if (t < 0.0 || t > video.duration) {
                    if (warnings)
                        *warnings << "warning: prediction at " << t << "s for '" << video.id
                                  << "' outside [0, " << video.duration << "], clamped\n";
                    t = std::clamp(t, 0.0, video.duration);
                }
                times.push_back(t);
            }
        }
        std::sort(times.begin(), times.end());
        pairs.emplace_back(&video, std::move(times));
    }

    EvalReport report;
    for (const double threshold : thresholds) {
        EvalThresholdRow row;
        row.threshold = threshold;
        for (const auto& [video, times] : pairs) {
            const MatchResult m = match_video(times, video->boundaries, video->duration, threshold);
            for (const auto& pair : m.matched) {
                if (pair.rel_dis > threshold)
                    throw Error("internal: matched pair exceeds threshold");
            }
            row.tp += m.tp();
            row.fp += m.fp();
            row.fn += m.fn();

            EvalVideoRow vr;
            vr.id = video->id;
            vr.threshold = threshold;
            vr.tp = m.tp();
            vr.fp = m.fp();
            vr.fn = m.fn();
            const Score vs = score(vr.tp, vr.fp, vr.fn);
            vr.precision = vs.precision;
            vr.recall = vs.recall;
            vr.f1 = vs.f1;
            report.per_video.push_back(std::move(vr));
        }
        const Score s = score(row.tp, row.fp, row.fn);
        row.precision = s.precision;
        row.recall = s.recall;
        row.f1 = s.f1;
        report.thresholds.push_back(row);
    }
    return report;
}

} // namespace gebd
