#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gebd/datamodel.hpp"
#include "gebd/ddmnet.hpp"
#include "gebd/decoder.hpp"
#include "gebd/mat.hpp"
#include "gebd/synthgen.hpp"

namespace gebd {

// Mid-run failures (divergence, corrupted artifacts) as opposed to
// validation errors; the CLI maps Error -> exit 1, RunError -> exit 2.
class RunError : public Error {
public:
    using Error::Error;
};

// --- schedules --------------------------------------------------------------

// Every stride-th frame, offset to the cell center: floor(stride/2).
std::vector<int> sample_frames(int frame_count, int stride);

// 2w+1 indices centered on `center` with intra-clip stride s, edge-clamped.
std::vector<int> extract_clip(int center, int w, int s, int frame_count);

struct Window {
    int start = 0;
    int effective_len = 0; // real rows; the rest is padded from the last row
};

// Sliding windows over a length-seq_len sequence. stride 0 means window_len
// (non-overlapping partition). The tail window is short; callers pad it.
std::vector<Window> make_windows(int seq_len, int window_len, int stride = 0);

// --- workdir layout -----------------------------------------------------------

struct PipelinePaths {
    std::string workdir;

    std::string dataset_dir(const std::string& split) const { return workdir + "/" + split; }
    std::string config_file() const { return workdir + "/config.json"; }
    std::string manifest_file() const { return workdir + "/manifest.json"; }
    std::string local_checkpoint() const { return workdir + "/checkpoints/local.bin"; }
    std::string decoder_checkpoint() const { return workdir + "/checkpoints/decoder.bin"; }
    std::string handoff_dir(const std::string& split) const {
        return workdir + "/handoff/" + split;
    }
    std::string handoff_file(const std::string& split, const std::string& id) const {
        return handoff_dir(split) + "/" + id + ".bin";
    }
    std::string predictions_file() const { return workdir + "/predictions.json"; }
    std::string report_file() const { return workdir + "/report.json"; }
};

// Completion record per stage, in completion order.
struct StageRecord {
    std::string name;
    std::string artifact;  // workdir-relative checkpoint/output path
    std::string hash;      // hex content hash of the artifact's parameters
    double seconds = 0.0;
    std::uint64_t seed = 0;
};

struct RunManifest {
    std::vector<StageRecord> stages;

    const StageRecord* find(const std::string& name) const;
    void record(StageRecord rec); // replaces an existing stage of the same name

    static RunManifest load(const std::string& path);
    void save(const std::string& path) const;
};

// --- stage 1: local training ----------------------------------------------------

struct LocalExample {
    int video = 0;
    int center = 0; // frame index
    int label = 0;
};

// Whole-split spatially pooled features plus per-sampled-frame examples.
struct LocalDataset {
    std::vector<AnnotatedVideo> annotations;
    std::vector<std::vector<Mat>> pooled; // [video][level], T_video x C_l
    std::vector<LocalExample> examples;
    std::vector<int> level_channels;
};

double positive_radius(const PipelineConfig& cfg, double fps);

LocalDataset load_local_dataset(const PipelineConfig& cfg, const std::string& data_dir);

// The m pooled level matrices of one clip (rows gathered, edges clamped).
std::vector<Mat> clip_pooled(const LocalDataset& ds, const LocalExample& ex,
                             const PipelineConfig& cfg);

void train_local(const PipelineConfig& cfg, const std::string& data_dir,
                 const PipelinePaths& paths, std::ostream* log = nullptr);

// --- stage handoff ---------------------------------------------------------------

struct VideoHandoff {
    Mat reps;                       // N x D fused clip representations
    std::vector<double> confidence; // N, in [0,1]
    std::vector<double> times;      // N, seconds, strictly increasing
};

void write_handoff(const VideoHandoff& h, const std::string& path);
VideoHandoff read_handoff(const std::string& path);

VideoHandoff featurize_video(const PipelineConfig& cfg, const LocalModel& model,
                             const std::vector<Mat>& pooled_levels, double fps);

void featurize(const PipelineConfig& cfg, const std::string& data_dir,
               const PipelinePaths& paths, const std::string& split,
               std::ostream* log = nullptr);

// --- stage 2: decoder training ------------------------------------------------------

struct DecoderExample {
    std::string video_id;
    Mat window;              // window_len x D, boundary-attentive, tail-padded
    std::vector<double> gts; // normalized locations in [0, 1)
    double origin = 0.0;     // seconds of the window's left edge
    double span = 0.0;       // seconds covered (window_len sampled cells)
};

// Splits one video's handoff into training windows. Windows holding more
// ground truths than queries are dropped with a warning.
std::vector<DecoderExample> windows_from_handoff(const PipelineConfig& cfg,
                                                 const VideoHandoff& handoff,
                                                 const AnnotatedVideo& annotation,
                                                 std::ostream* warnings = nullptr);

void train_decoder(const PipelineConfig& cfg, const std::string& data_dir,
                   const PipelinePaths& paths, std::ostream* log = nullptr);

// --- inference -------------------------------------------------------------------

// Keeps the higher-confidence one of any two predictions closer than
// min_gap seconds (ties by earlier time), result sorted by time.
std::vector<BoundaryPrediction> dedupe_predictions(std::vector<BoundaryPrediction> preds,
                                                   double min_gap);

std::vector<BoundaryPrediction> decode_video(const PipelineConfig& cfg, const DecoderNet& net,
                                             const VideoHandoff& handoff, double duration);

PredictionMap infer(const PipelineConfig& cfg, const std::string& data_dir,
                    const PipelinePaths& paths, const std::string& split,
                    std::ostream* log = nullptr);

// --- orchestration ------------------------------------------------------------------

// Dataset generation defaults wired to the pipeline config scale.
DatasetSpec dataset_spec_for(const PipelineConfig& cfg, int count, std::uint64_t seed,
                             const std::string& id_prefix);

// gen -> train-local -> featurize -> train-decoder -> infer -> eval.
EvalReport run_all(const PipelineConfig& cfg, int train_count, int test_count,
                   const PipelinePaths& paths, std::ostream* log = nullptr);

} // namespace gebd
