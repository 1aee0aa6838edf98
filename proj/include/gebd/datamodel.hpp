#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace gebd {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// All knobs of the two-stage pipeline. Defaults follow the reference
// operating point; see README for the file format.
struct PipelineConfig {
    int m = 3;              // spatial levels
    int n = 3;              // temporal receptive-field variants per level
    int L = 9;              // must equal m * n
    int w = 16;             // clip half-width in sampled steps, clip length T = 2w+1
    int s = 2;              // intra-clip frame stride
    int eval_stride = 3;    // frame sampling stride for boundary evaluation
    int omega = 5;          // learnable query count of intra-modal attention
    int num_queries = 10;   // decoder boundary queries
    double theta = 0.87;    // decoder confidence threshold
    int window_len = 100;   // sliding window length in sampled frames
    int window_stride = 0;  // 0 = non-overlapping (defaults to window_len)
    int feature_dim = 64;   // shared embedding width D
    int heads = 4;          // attention heads
    int decoder_layers = 2;
    std::vector<double> rel_dis_thresholds =
        {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
    double lr_local = 1e-5;
    int batch_local = 16;
    double lr_decoder = 1e-4;
    int batch_decoder = 32;
    double weight_decay = 1e-4;
    int epochs_local = 20;
    int epochs_decoder = 50;
    // Seconds within which a sampled frame counts as a boundary positive.
    // 0 = auto, meaning one eval-stride interval (eval_stride / fps).
    double local_positive_radius = 0.0;
    double lambda_loc = 5.0;
    double lambda_cls = 1.0;
    std::uint64_t seed = 1;

    int clip_len() const { return 2 * w + 1; }
    int effective_window_stride() const { return window_stride > 0 ? window_stride : window_len; }
};

// Returns every violated invariant, not only the first. Empty means valid.
std::vector<std::string> validate_config(const PipelineConfig& cfg);

// Flat key/value JSON document; keys present override defaults in `base`.
PipelineConfig load_config(const std::string& path, const PipelineConfig& base = {});
void save_config(const PipelineConfig& cfg, const std::string& path);

struct AnnotatedVideo {
    std::string id;
    double duration = 0.0;   // seconds
    double fps = 0.0;        // frames per second
    std::vector<double> boundaries; // strictly increasing, in (0, duration)

    int frame_count() const;
};

struct BoundaryPrediction {
    double time = 0.0;       // seconds
    double confidence = 0.0; // in [0, 1]
};

using PredictionMap = std::map<std::string, std::vector<BoundaryPrediction>>;

struct EvalThresholdRow {
    double threshold = 0.0;
    long long tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct EvalVideoRow {
    std::string id;
    double threshold = 0.0;
    long long tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct EvalReport {
    std::vector<EvalThresholdRow> thresholds;
    std::vector<EvalVideoRow> per_video;
};

std::vector<AnnotatedVideo> load_annotations(const std::string& path);
void save_annotations(const std::vector<AnnotatedVideo>& videos, const std::string& path);

void write_predictions(const PredictionMap& preds, const std::string& path);
PredictionMap load_predictions(const std::string& path);

void write_report(const EvalReport& report, const std::string& path);
EvalReport load_report(const std::string& path);

} // namespace gebd
