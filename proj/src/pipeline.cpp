#include "gebd/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <ostream>
#include <set>
#include <utility>

#include <json.hpp>

#include "gebd/evaluator.hpp"
#include "gebd/featbank.hpp"
#include "gebd/random.hpp"
#include "gebd/tensorfile.hpp"

namespace gebd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Exceptions must not unwind out of a parallel loop; workers park the first
// one here and the caller rethrows it after the join.
class FirstError {
public:
    void capture() {
#pragma omp critical(gebd_first_error)
        if (!err_) err_ = std::current_exception();
    }
    void rethrow() const {
        if (err_) std::rethrow_exception(err_);
    }

private:
    std::exception_ptr err_;
};

void require_valid(const PipelineConfig& cfg) {
    const auto violations = validate_config(cfg);
    if (violations.empty()) return;
    std::string msg = "invalid config:";
    for (const auto& v : violations) msg += " " + v + ";";
    throw Error(msg);
}

// Write-temp-then-rename so a crash never leaves a half-written artifact.
template <typename WriteFn>
void atomic_write(const std::string& path, WriteFn&& write_fn) {
    fs::create_directories(fs::path(path).parent_path());
    const std::string tmp = path + ".tmp";
    write_fn(tmp);
    fs::rename(tmp, path);
}

std::vector<AnnotatedVideo> load_split_annotations(const std::string& data_dir) {
    const std::string path = data_dir + "/annotations.json";
    if (!fs::exists(path)) throw Error("no dataset at " + data_dir + " (run gen first)");
    auto annotations = load_annotations(path);
    std::set<std::string> seen;
    for (const AnnotatedVideo& v : annotations)
        if (!seen.insert(v.id).second) throw Error("duplicate video id '" + v.id + "' in " + path);
    return annotations;
}

std::vector<int> probe_level_channels(const std::string& data_dir,
                                      const std::vector<AnnotatedVideo>& annotations,
                                      int expected_levels) {
    if (annotations.empty()) throw Error("empty dataset at " + data_dir);
    const auto frames =
        read_video_features(data_dir + "/features/" + annotations.front().id + ".bin");
    if (frames.empty()) throw RunError("feature file with zero frames in " + data_dir);
    if (static_cast<int>(frames[0].size()) != expected_levels)
        throw Error("dataset has " + std::to_string(frames[0].size()) +
                    " feature levels, config expects " + std::to_string(expected_levels));
    std::vector<int> channels;
    for (const Grid3& g : frames[0]) channels.push_back(g.c);
    return channels;
}

// Per-window feature slice shared by training and inference.
struct WindowSlice {
    Mat features; // window_len x D, tail rows repeat the last real row
    double origin = 0.0;
    double span = 0.0;
    int start = 0;
    int effective_len = 0;
};

std::vector<WindowSlice> slice_windows(const PipelineConfig& cfg, const VideoHandoff& handoff,
                                       double fps) {
    const int n = handoff.reps.rows();
    std::vector<WindowSlice> out;
    if (n == 0) return out;
    if (static_cast<int>(handoff.confidence.size()) != n ||
        static_cast<int>(handoff.times.size()) != n)
        throw RunError("handoff arrays disagree in length");

    const Mat attentive = boundary_attentive(handoff.reps, handoff.confidence);
    // Sampled cell k covers video time [k*delta, (k+1)*delta); windows tile
    // that integer cell grid, so every boundary belongs to exactly one
    // window at the default stride (no seam gaps from per-window rounding).
    const double delta = cfg.eval_stride / fps;

    for (const Window& w : make_windows(n, cfg.window_len, cfg.effective_window_stride())) {
        WindowSlice slice;
        slice.start = w.start;
        slice.effective_len = w.effective_len;
        slice.origin = w.start * delta;
        slice.span = cfg.window_len * delta;
        slice.features = Mat(cfg.window_len, attentive.cols());
        for (int r = 0; r < cfg.window_len; ++r) {
            const int src = w.start + std::min(r, w.effective_len - 1);
            for (int c = 0; c < attentive.cols(); ++c)
                slice.features(r, c) = attentive(src, c);
        }
        out.push_back(std::move(slice));
    }
    return out;
}

LocalModel restore_local_model(const PipelineConfig& cfg, const std::vector<int>& channels,
                               ParamStore& params, const std::string& checkpoint) {
    Rng rng(derive_seed(cfg.seed, "local-init", 0));
    LocalModel model(local_config_from(cfg, channels), params, rng);
    params.load(checkpoint);
    return model;
}

std::vector<Mat> clip_from_levels(const std::vector<Mat>& levels, int center,
                                  const PipelineConfig& cfg) {
    const int frame_count = levels[0].rows();
    const auto idx = extract_clip(center, cfg.w, cfg.s, frame_count);

    std::vector<Mat> out;
    for (const Mat& level : levels) {
        Mat clip(static_cast<int>(idx.size()), level.cols());
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (int c = 0; c < level.cols(); ++c)
                clip(static_cast<int>(r), c) = level(idx[r], c);
        out.push_back(std::move(clip));
    }
    return out;
}

} // namespace

// --- schedules ------------------------------------------------------------------

std::vector<int> sample_frames(int frame_count, int stride) {
    if (frame_count <= 0) throw Error("sample_frames: frame_count must be > 0");
    if (stride < 1) throw Error("sample_frames: stride must be >= 1");
    std::vector<int> out;
    for (int i = stride / 2; i < frame_count; i += stride) out.push_back(i);
    return out;
}

std::vector<int> extract_clip(int center, int w, int s, int frame_count) {
    if (center < 0 || center >= frame_count) throw Error("extract_clip: center out of range");
    if (w < 0 || s < 1) throw Error("extract_clip: bad clip shape");
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(2 * w + 1));
    for (int k = -w; k <= w; ++k)
        out.push_back(std::clamp(center + k * s, 0, frame_count - 1));
    return out;
}

std::vector<Window> make_windows(int seq_len, int window_len, int stride) {
    if (seq_len < 1) throw Error("make_windows: sequence must be non-empty");
    if (window_len < 1) throw Error("make_windows: window_len must be >= 1");
    if (stride <= 0) stride = window_len;
    std::vector<Window> out;
    for (int start = 0; start < seq_len; start += stride)
        out.push_back({start, std::min(window_len, seq_len - start)});
    return out;
}

// --- manifest --------------------------------------------------------------------

const StageRecord* RunManifest::find(const std::string& name) const {
    for (const auto& s : stages)
        if (s.name == name) return &s;
    return nullptr;
}

void RunManifest::record(StageRecord rec) {
    for (auto& s : stages)
        if (s.name == rec.name) {
            s = std::move(rec);
            return;
        }
    stages.push_back(std::move(rec));
}

RunManifest RunManifest::load(const std::string& path) {
    RunManifest m;
    if (!fs::exists(path)) return m;
    std::ifstream in(path);
    json doc = json::parse(in);
    for (const auto& s : doc.at("stages")) {
        StageRecord rec;
        rec.name = s.at("name").get<std::string>();
        rec.artifact = s.at("artifact").get<std::string>();
        rec.hash = s.at("hash").get<std::string>();
        rec.seconds = s.at("seconds").get<double>();
        rec.seed = s.at("seed").get<std::uint64_t>();
        m.stages.push_back(std::move(rec));
    }
    return m;
}

void RunManifest::save(const std::string& path) const {
    json doc;
    doc["stages"] = json::array();
    for (const auto& s : stages) {
        json rec;
        rec["name"] = s.name;
        rec["artifact"] = s.artifact;
        rec["hash"] = s.hash;
        rec["seconds"] = s.seconds;
        rec["seed"] = s.seed;
        doc["stages"].push_back(rec);
    }
    atomic_write(path, [&](const std::string& tmp) {
        std::ofstream out(tmp);
        out << doc.dump(2) << "\n";
    });
}

// --- stage 1 ----------------------------------------------------------------------

double positive_radius(const PipelineConfig& cfg, double fps) {
    if (cfg.local_positive_radius > 0.0) return cfg.local_positive_radius;
    return cfg.eval_stride / fps;
}

LocalDataset load_local_dataset(const PipelineConfig& cfg, const std::string& data_dir) {
    LocalDataset ds;
    ds.annotations = load_split_annotations(data_dir);

    for (std::size_t v = 0; v < ds.annotations.size(); ++v) {
        const AnnotatedVideo& ann = ds.annotations[v];
        const auto frames = read_video_features(data_dir + "/features/" + ann.id + ".bin");
        if (frames.empty()) throw RunError("feature file with zero frames: " + ann.id);
        if (static_cast<int>(frames[0].size()) != cfg.m)
            throw Error("video " + ann.id + " has " + std::to_string(frames[0].size()) +
                        " levels, config expects " + std::to_string(cfg.m));

        std::vector<Mat> pooled;
        for (int l = 0; l < cfg.m; ++l) pooled.push_back(pool_level(frames, l));
        if (ds.level_channels.empty()) {
            for (const Mat& p : pooled) ds.level_channels.push_back(p.cols());
        } else {
            for (int l = 0; l < cfg.m; ++l)
                if (pooled[static_cast<std::size_t>(l)].cols() != ds.level_channels[static_cast<std::size_t>(l)])
                    throw Error("video " + ann.id + " disagrees on level channel counts");
        }

        const int frame_count = static_cast<int>(frames.size());
        const double radius = positive_radius(cfg, ann.fps);
        for (int center : sample_frames(frame_count, cfg.eval_stride)) {
            LocalExample ex;
            ex.video = static_cast<int>(v);
            ex.center = center;
            ex.label = label_frame((center + 0.5) / ann.fps, ann, radius);
            ds.examples.push_back(ex);
        }
        ds.pooled.push_back(std::move(pooled));
    }
    return ds;
}

std::vector<Mat> clip_pooled(const LocalDataset& ds, const LocalExample& ex,
                             const PipelineConfig& cfg) {
    return clip_from_levels(ds.pooled[static_cast<std::size_t>(ex.video)], ex.center, cfg);
}

void train_local(const PipelineConfig& cfg, const std::string& data_dir,
                 const PipelinePaths& paths, std::ostream* log) {
    require_valid(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const LocalDataset ds = load_local_dataset(cfg, data_dir);
    if (ds.examples.empty()) throw Error("no training examples in " + data_dir);

    ParamStore params;
    Rng init_rng(derive_seed(cfg.seed, "local-init", 0));
    LocalModel model(local_config_from(cfg, ds.level_channels), params, init_rng);
    AdamOptimizer opt(params, cfg.lr_local, cfg.weight_decay);

    std::vector<int> order(ds.examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    long long step = 0;
    for (int epoch = 0; epoch < cfg.epochs_local; ++epoch) {
        Rng er(derive_seed(cfg.seed, "local-epoch", static_cast<std::uint64_t>(epoch)));
        er.shuffle(order);

        double epoch_loss = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_local)) {
            const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_local));
            const int bsz = static_cast<int>(b1 - b0);
            int positives = 0;
            for (std::size_t i = b0; i < b1; ++i)
                positives += ds.examples[static_cast<std::size_t>(order[i])].label;
            const int negatives = bsz - positives;
            const double pos_weight =
                (positives > 0 && negatives > 0) ? static_cast<double>(negatives) / positives : 1.0;

            // One forward/backward graph per clip; sinks are merged in batch
            // order afterwards, so the step is identical for any thread count.
            std::vector<ad::GradSink> sinks(static_cast<std::size_t>(bsz));
            std::vector<double> losses(static_cast<std::size_t>(bsz), 0.0);
            FirstError fail;
#pragma omp parallel for schedule(dynamic)
            for (int k = 0; k < bsz; ++k) {
                try {
                    const LocalExample& ex =
                        ds.examples[static_cast<std::size_t>(order[b0 + static_cast<std::size_t>(k)])];
                    const auto out = model.forward(clip_pooled(ds, ex, cfg));
                    const ad::Var term = ad::scale(
                        local_loss(out.confidence, ex.label, ex.label ? pos_weight : 1.0),
                        1.0 / bsz);
                    losses[static_cast<std::size_t>(k)] = ad::scalar(term);
                    ad::backward(term, sinks[static_cast<std::size_t>(k)]);
                } catch (...) {
                    fail.capture();
                }
            }
            fail.rethrow();

            double batch_loss = 0.0;
            ad::GradSink sink;
            for (int k = 0; k < bsz; ++k) {
                batch_loss += losses[static_cast<std::size_t>(k)];
                sink.merge(sinks[static_cast<std::size_t>(k)]);
            }
            if (!std::isfinite(batch_loss))
                throw RunError("stage-1 loss diverged (epoch " + std::to_string(epoch) +
                               ", batch at " + std::to_string(b0) + ")");
            epoch_loss += batch_loss * bsz;
            opt.step(sink);
            if (log)
                *log << "[train-local] step " << step++ << " loss " << batch_loss << "\n";
        }
        if (log)
            *log << "[train-local] epoch " << epoch << " mean loss "
                 << epoch_loss / static_cast<double>(order.size()) << "\n";
    }

    atomic_write(paths.local_checkpoint(),
                 [&](const std::string& tmp) { params.save(tmp); });

    RunManifest manifest = RunManifest::load(paths.manifest_file());
    manifest.record({"train-local", "checkpoints/local.bin", hash_hex(params.content_hash()),
                     seconds_since(t0), cfg.seed});
    manifest.save(paths.manifest_file());
}

// --- handoff ------------------------------------------------------------------------

void write_handoff(const VideoHandoff& h, const std::string& path) {
    const int n = h.reps.rows();
    if (static_cast<int>(h.confidence.size()) != n || static_cast<int>(h.times.size()) != n)
        throw Error("handoff arrays disagree in length");
    TensorFile tf;
    std::vector<double> reps(h.reps.data(), h.reps.data() + h.reps.size());
    tf.add_f64("reps", {n, h.reps.cols()}, std::move(reps));
    tf.add_f64("confidence", {n, 1}, h.confidence);
    tf.add_f64("times", {n, 1}, h.times);
    atomic_write(path, [&](const std::string& tmp) { tf.write(tmp); });
}

VideoHandoff read_handoff(const std::string& path) {
    const TensorFile tf = TensorFile::read(path);
    const TensorEntry& reps = tf.get("reps");
    const TensorEntry& conf = tf.get("confidence");
    const TensorEntry& times = tf.get("times");
    if (reps.dtype != "f64" || reps.shape.size() != 2)
        throw Error("handoff 'reps' must be an f64 matrix in " + path);

    VideoHandoff h;
    h.reps = Mat(reps.shape[0], reps.shape[1]);
    std::copy(reps.f64.begin(), reps.f64.end(), h.reps.data());
    h.confidence = conf.f64;
    h.times = times.f64;
    if (static_cast<int>(h.confidence.size()) != h.reps.rows() ||
        static_cast<int>(h.times.size()) != h.reps.rows())
        throw Error("handoff arrays disagree in length in " + path);
    return h;
}

VideoHandoff featurize_video(const PipelineConfig& cfg, const LocalModel& model,
                             const std::vector<Mat>& pooled_levels, double fps) {
    if (pooled_levels.empty()) throw Error("featurize_video: no levels");
    const int frame_count = pooled_levels[0].rows();
    const auto centers = sample_frames(frame_count, cfg.eval_stride);
    if (centers.empty()) throw RunError("video too short to sample any frame");

    VideoHandoff h;
    h.reps = Mat(static_cast<int>(centers.size()), cfg.feature_dim);
    for (std::size_t k = 0; k < centers.size(); ++k) {
        const auto out = model.forward(clip_from_levels(pooled_levels, centers[k], cfg));
        // Standardize each stored row: the raw embedding's scale grows with
        // stage-1 training, and unnormalized rows saturate the decoder's
        // cross-attention.
        double mu = 0.0;
        for (int c = 0; c < cfg.feature_dim; ++c) mu += out.fused->value(0, c);
        mu /= cfg.feature_dim;
        double var = 0.0;
        for (int c = 0; c < cfg.feature_dim; ++c) {
            const double d = out.fused->value(0, c) - mu;
            var += d * d;
        }
        const double inv_sigma = 1.0 / std::sqrt(var / cfg.feature_dim + 1e-6);
        for (int c = 0; c < cfg.feature_dim; ++c)
            h.reps(static_cast<int>(k), c) = (out.fused->value(0, c) - mu) * inv_sigma;
        h.confidence.push_back(out.confidence->value(0, 0));
        h.times.push_back((centers[k] + 0.5) / fps);
    }
    return h;
}

void featurize(const PipelineConfig& cfg, const std::string& data_dir,
               const PipelinePaths& paths, const std::string& split, std::ostream* log) {
    require_valid(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    if (!fs::exists(paths.local_checkpoint()))
        throw Error("no local checkpoint at " + paths.local_checkpoint() +
                    " (run train-local first)");

    const auto annotations = load_split_annotations(data_dir);
    const auto channels = probe_level_channels(data_dir, annotations, cfg.m);
    ParamStore params;
    const LocalModel model = restore_local_model(cfg, channels, params, paths.local_checkpoint());

    // Videos are independent; results land in indexed slots so output is
    // identical for any worker count.
    std::vector<VideoHandoff> handoffs(annotations.size());
    FirstError fail;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t v = 0; v < annotations.size(); ++v) {
        try {
            const AnnotatedVideo& ann = annotations[v];
            const auto frames = read_video_features(data_dir + "/features/" + ann.id + ".bin");
            std::vector<Mat> pooled;
            for (int l = 0; l < cfg.m; ++l) pooled.push_back(pool_level(frames, l));
            handoffs[v] = featurize_video(cfg, model, pooled, ann.fps);
        } catch (...) {
            fail.capture();
        }
    }
    fail.rethrow();

    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (std::size_t v = 0; v < annotations.size(); ++v) {
        const VideoHandoff& h = handoffs[v];
        write_handoff(h, paths.handoff_file(split, annotations[v].id));
        hash = fnv1a(h.reps.data(), h.reps.size() * sizeof(double), hash);
        if (log) *log << "[featurize] " << annotations[v].id << " frames " << h.reps.rows() << "\n";
    }

    RunManifest manifest = RunManifest::load(paths.manifest_file());
    manifest.record({split == "train" ? "featurize" : "featurize-" + split,
                     "handoff/" + split, hash_hex(hash), seconds_since(t0), cfg.seed});
    manifest.save(paths.manifest_file());
}

// --- stage 2 ---------------------------------------------------------------------------

std::vector<DecoderExample> windows_from_handoff(const PipelineConfig& cfg,
                                                 const VideoHandoff& handoff,
                                                 const AnnotatedVideo& annotation,
                                                 std::ostream* warnings) {
    std::vector<DecoderExample> out;
    const double delta = cfg.eval_stride / annotation.fps;
    auto slices = slice_windows(cfg, handoff, annotation.fps);
    for (WindowSlice& slice : slices) {
        DecoderExample ex;
        ex.video_id = annotation.id;
        ex.origin = slice.origin;
        ex.span = slice.span;
        // membership is tested in cell coordinates against the integer
        // window bounds, so seams assign each boundary exactly once
        for (double b : annotation.boundaries) {
            const double cell = b / delta;
            if (cell >= slice.start && cell < slice.start + cfg.window_len)
                ex.gts.push_back(std::clamp((b - ex.origin) / ex.span, 0.0, 1.0));
        }
        if (static_cast<int>(ex.gts.size()) > cfg.num_queries) {
            if (warnings)
                *warnings << "[train-decoder] skipping a window of " << annotation.id << ": "
                          << ex.gts.size() << " boundaries exceed " << cfg.num_queries
                          << " queries\n";
            continue;
        }
        ex.window = std::move(slice.features);
        out.push_back(std::move(ex));
    }
    return out;
}

void train_decoder(const PipelineConfig& cfg, const std::string& data_dir,
                   const PipelinePaths& paths, std::ostream* log) {
    require_valid(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const auto annotations = load_split_annotations(data_dir);

    std::vector<DecoderExample> examples;
    for (const AnnotatedVideo& ann : annotations) {
        const std::string handoff_path = paths.handoff_file("train", ann.id);
        if (!fs::exists(handoff_path))
            throw Error("no handoff for " + ann.id + " (run featurize first)");
        const auto windows = windows_from_handoff(cfg, read_handoff(handoff_path), ann, log);
        examples.insert(examples.end(), windows.begin(), windows.end());
    }
    if (examples.empty()) throw Error("no decoder training windows in " + data_dir);

    ParamStore params;
    Rng init_rng(derive_seed(cfg.seed, "decoder-init", 0));
    DecoderNet net(decoder_config_from(cfg), params, init_rng);
    AdamOptimizer opt(params, cfg.lr_decoder, cfg.weight_decay);

    std::vector<int> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    long long step = 0;
    for (int epoch = 0; epoch < cfg.epochs_decoder; ++epoch) {
        Rng er(derive_seed(cfg.seed, "decoder-epoch", static_cast<std::uint64_t>(epoch)));
        er.shuffle(order);

        double epoch_loss = 0.0;
        for (std::size_t b0 = 0; b0 < order.size();
             b0 += static_cast<std::size_t>(cfg.batch_decoder)) {
            const std::size_t b1 =
                std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_decoder));
            const int bsz = static_cast<int>(b1 - b0);

            std::vector<ad::GradSink> sinks(static_cast<std::size_t>(bsz));
            std::vector<double> losses(static_cast<std::size_t>(bsz), 0.0);
            FirstError fail;
#pragma omp parallel for schedule(dynamic)
            for (int k = 0; k < bsz; ++k) {
                try {
                    const DecoderExample& ex =
                        examples[static_cast<std::size_t>(order[b0 + static_cast<std::size_t>(k)])];
                    const DecoderNet::Forward f = net.decode(ex.window);
                    const ad::Var term = ad::scale(
                        set_prediction_loss(f.locations, f.p_bc, ex.gts, cfg.lambda_loc,
                                            cfg.lambda_cls)
                            .loss,
                        1.0 / bsz);
                    losses[static_cast<std::size_t>(k)] = ad::scalar(term);
                    ad::backward(term, sinks[static_cast<std::size_t>(k)]);
                } catch (...) {
                    fail.capture();
                }
            }
            fail.rethrow();

            double batch_loss = 0.0;
            ad::GradSink sink;
            for (int k = 0; k < bsz; ++k) {
                batch_loss += losses[static_cast<std::size_t>(k)];
                sink.merge(sinks[static_cast<std::size_t>(k)]);
            }
            if (!std::isfinite(batch_loss))
                throw RunError("stage-2 loss diverged (epoch " + std::to_string(epoch) +
                               ", batch at " + std::to_string(b0) + ")");
            epoch_loss += batch_loss * bsz;
            opt.step(sink);
            if (log)
                *log << "[train-decoder] step " << step++ << " loss " << batch_loss << "\n";
        }
        if (log)
            *log << "[train-decoder] epoch " << epoch << " mean loss "
                 << epoch_loss / static_cast<double>(order.size()) << "\n";
    }

    atomic_write(paths.decoder_checkpoint(),
                 [&](const std::string& tmp) { params.save(tmp); });

    RunManifest manifest = RunManifest::load(paths.manifest_file());
    manifest.record({"train-decoder", "checkpoints/decoder.bin",
                     hash_hex(params.content_hash()), seconds_since(t0), cfg.seed});
    manifest.save(paths.manifest_file());
}

// --- inference ---------------------------------------------------------------------------

std::vector<BoundaryPrediction> dedupe_predictions(std::vector<BoundaryPrediction> preds,
                                                   double min_gap) {
    std::sort(preds.begin(), preds.end(), [](const BoundaryPrediction& a,
                                             const BoundaryPrediction& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.time < b.time;
    });
    std::vector<BoundaryPrediction> kept;
    for (const BoundaryPrediction& p : preds) {
        bool blocked = false;
        for (const BoundaryPrediction& k : kept)
            if (std::abs(p.time - k.time) < min_gap) blocked = true;
        if (!blocked) kept.push_back(p);
    }
    std::sort(kept.begin(), kept.end(),
              [](const BoundaryPrediction& a, const BoundaryPrediction& b) {
                  return a.time < b.time;
              });
    return kept;
}

std::vector<BoundaryPrediction> decode_video(const PipelineConfig& cfg, const DecoderNet& net,
                                             const VideoHandoff& handoff, double duration) {
    if (handoff.times.empty()) throw RunError("handoff with no sampled frames");
    // The first sampled time is (stride/2 + 0.5) / fps, so the sampling rate
    // is recoverable from the handoff and window geometry matches training.
    const double fps = (cfg.eval_stride / 2 + 0.5) / handoff.times.front();
    if (!(fps > 0.0)) throw RunError("handoff times are not positive");

    std::vector<BoundaryPrediction> all;
    for (const WindowSlice& slice : slice_windows(cfg, handoff, fps)) {
        const WindowPrediction pred = net.predict(slice.features);
        for (BoundaryPrediction p : emit_predictions(pred, slice.origin, slice.span, cfg.theta)) {
            p.time = std::clamp(p.time, 0.0, duration);
            all.push_back(p);
        }
    }
    return dedupe_predictions(std::move(all), cfg.eval_stride / fps);
}

PredictionMap infer(const PipelineConfig& cfg, const std::string& data_dir,
                    const PipelinePaths& paths, const std::string& split, std::ostream* log) {
    require_valid(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    if (!fs::exists(paths.local_checkpoint()))
        throw Error("no local checkpoint (run train-local first)");
    if (!fs::exists(paths.decoder_checkpoint()))
        throw Error("no decoder checkpoint (run train-decoder first)");

    const auto annotations = load_split_annotations(data_dir);
    if (log) *log << "[infer] split " << split << ": " << annotations.size() << " videos\n";
    const auto channels = probe_level_channels(data_dir, annotations, cfg.m);
    ParamStore local_params;
    const LocalModel model =
        restore_local_model(cfg, channels, local_params, paths.local_checkpoint());

    ParamStore decoder_params;
    Rng decoder_rng(derive_seed(cfg.seed, "decoder-init", 0));
    DecoderNet net(decoder_config_from(cfg), decoder_params, decoder_rng);
    decoder_params.load(paths.decoder_checkpoint());

    std::vector<std::vector<BoundaryPrediction>> per_video(annotations.size());
    FirstError fail;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t v = 0; v < annotations.size(); ++v) {
        try {
            const AnnotatedVideo& ann = annotations[v];
            const auto frames = read_video_features(data_dir + "/features/" + ann.id + ".bin");
            std::vector<Mat> pooled;
            for (int l = 0; l < cfg.m; ++l) pooled.push_back(pool_level(frames, l));
            const VideoHandoff h = featurize_video(cfg, model, pooled, ann.fps);
            per_video[v] = decode_video(cfg, net, h, ann.duration);
        } catch (...) {
            fail.capture();
        }
    }
    fail.rethrow();

    PredictionMap preds;
    for (std::size_t v = 0; v < annotations.size(); ++v) {
        preds[annotations[v].id] = std::move(per_video[v]);
        if (log)
            *log << "[infer] " << annotations[v].id << " predictions "
                 << preds[annotations[v].id].size() << "\n";
    }

    atomic_write(paths.predictions_file(),
                 [&](const std::string& tmp) { write_predictions(preds, tmp); });

    std::ifstream written(paths.predictions_file(), std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(written)),
                            std::istreambuf_iterator<char>());

    RunManifest manifest = RunManifest::load(paths.manifest_file());
    manifest.record({"decode", "predictions.json", hash_hex(fnv1a(bytes.data(), bytes.size())),
                     seconds_since(t0), cfg.seed});
    manifest.save(paths.manifest_file());
    return preds;
}

// --- orchestration --------------------------------------------------------------------------

DatasetSpec dataset_spec_for(const PipelineConfig& cfg, int count, std::uint64_t seed,
                             const std::string& id_prefix) {
    static const std::vector<PyramidShape> kShapes = {
        {16, 16, 8}, {8, 8, 16}, {4, 4, 32}, {2, 2, 64}};
    if (cfg.m < 1 || cfg.m > static_cast<int>(kShapes.size()))
        throw Error("no default pyramid for m = " + std::to_string(cfg.m));
    DatasetSpec ds;
    ds.count = count;
    // The stock clip/window strides are sized for ~30 fps video (clip span
    // ~2 s, sampled cells 0.1 s apart); generate at that rate so the default
    // knobs keep their intended temporal meaning.
    ds.fps = 30.0;
    ds.pyramid.assign(kShapes.begin(), kShapes.begin() + cfg.m);
    ds.id_prefix = id_prefix;
    ds.seed = seed;
    return ds;
}

EvalReport run_all(const PipelineConfig& cfg, int train_count, int test_count,
                   const PipelinePaths& paths, std::ostream* log) {
    require_valid(cfg);
    if (train_count < 1 || test_count < 1) throw Error("run-all: need at least one video per split");

    atomic_write(paths.config_file(), [&](const std::string& tmp) { save_config(cfg, tmp); });

    if (log) *log << "[gen] train " << train_count << " + test " << test_count << " videos\n";
    generate_dataset(dataset_spec_for(cfg, train_count, derive_seed(cfg.seed, "dataset", 0), "train"),
                     paths.dataset_dir("train"));
    generate_dataset(dataset_spec_for(cfg, test_count, derive_seed(cfg.seed, "dataset", 1), "test"),
                     paths.dataset_dir("test"));

    train_local(cfg, paths.dataset_dir("train"), paths, log);
    featurize(cfg, paths.dataset_dir("train"), paths, "train", log);
    train_decoder(cfg, paths.dataset_dir("train"), paths, log);
    infer(cfg, paths.dataset_dir("test"), paths, "test", log);

    const PredictionMap preds = load_predictions(paths.predictions_file());
    const auto annotations = load_annotations(paths.dataset_dir("test") + "/annotations.json");
    const EvalReport report = evaluate(preds, annotations, cfg.rel_dis_thresholds, log);
    atomic_write(paths.report_file(), [&](const std::string& tmp) { write_report(report, tmp); });
    return report;
}

} // namespace gebd
