#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gebd/evaluator.hpp"
#include "gebd/pipeline.hpp"
#include "gebd/random.hpp"

using namespace gebd;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
    const std::string dir = "pipeline_tmp/" + name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small-everything config so whole-stage tests stay fast.
PipelineConfig tiny_config() {
    PipelineConfig cfg;
    cfg.m = 2;
    cfg.n = 2;
    cfg.L = 4;
    cfg.w = 4;
    cfg.s = 1;
    cfg.feature_dim = 8;
    cfg.heads = 2;
    cfg.omega = 2;
    cfg.decoder_layers = 1;
    cfg.num_queries = 3;
    cfg.window_len = 8;
    cfg.epochs_local = 1;
    cfg.epochs_decoder = 1;
    cfg.batch_local = 4;
    cfg.batch_decoder = 4;
    cfg.seed = 11;
    return cfg;
}

DatasetSpec tiny_dataset(int count, std::uint64_t seed, const std::string& prefix) {
    DatasetSpec ds;
    ds.count = count;
    ds.duration_min = 4.0;
    ds.duration_max = 6.0;
    ds.fps = 5.0;
    ds.segments_min = 2;
    ds.segments_max = 3;
    ds.pyramid = {{4, 4, 2}, {2, 2, 3}};
    ds.id_prefix = prefix;
    ds.seed = seed;
    return ds;
}

VideoHandoff ramp_handoff(int n, int dim, double fps, int stride) {
    VideoHandoff h;
    h.reps = Mat(n, dim);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < dim; ++c) h.reps(r, c) = r + 1 + 0.1 * c;
        h.confidence.push_back(1.0);
        h.times.push_back((stride / 2 + static_cast<double>(r) * stride + 0.5) / fps);
    }
    return h;
}

} // namespace

TEST_CASE("sample_frames picks cell centers") {
    CHECK(sample_frames(9, 3) == std::vector<int>{1, 4, 7});
    CHECK(sample_frames(2, 3) == std::vector<int>{1});

    const auto all = sample_frames(5, 1);
    CHECK(all == std::vector<int>{0, 1, 2, 3, 4});

    CHECK_THROWS_AS(sample_frames(0, 3), Error);
    CHECK_THROWS_AS(sample_frames(5, 0), Error);
}

TEST_CASE("extract_clip is an edge-clamped arithmetic progression") {
    const auto idx = extract_clip(40, 16, 2, 100);
    REQUIRE(idx.size() == 33);
    CHECK(idx.front() == 8);
    CHECK(idx.back() == 72);
    for (std::size_t k = 1; k < idx.size(); ++k) CHECK(idx[k] - idx[k - 1] == 2);

    const auto left = extract_clip(0, 16, 2, 100);
    for (int k = 0; k <= 16; ++k) CHECK(left[static_cast<std::size_t>(k)] == 0);
    CHECK(left[17] == 2);

    CHECK(extract_clip(7, 0, 2, 10) == std::vector<int>{7});
    CHECK_THROWS_AS(extract_clip(10, 2, 1, 10), Error);
    CHECK_THROWS_AS(extract_clip(-1, 2, 1, 10), Error);
}

TEST_CASE("make_windows partitions the sequence") {
    const auto w = make_windows(250, 100);
    REQUIRE(w.size() == 3);
    CHECK(w[0].start == 0);
    CHECK(w[0].effective_len == 100);
    CHECK(w[1].start == 100);
    CHECK(w[1].effective_len == 100);
    CHECK(w[2].start == 200);
    CHECK(w[2].effective_len == 50);

    const auto shorter = make_windows(37, 100);
    REQUIRE(shorter.size() == 1);
    CHECK(shorter[0].start == 0);
    CHECK(shorter[0].effective_len == 37);

    const auto exact = make_windows(100, 100);
    REQUIRE(exact.size() == 1);
    CHECK(exact[0].effective_len == 100);

    CHECK_THROWS_AS(make_windows(0, 100), Error);
    CHECK_THROWS_AS(make_windows(10, 0), Error);
}

TEST_CASE("make_windows covers every index exactly once at the default stride") {
    Rng rng(99);
    for (int round = 0; round < 50; ++round) {
        const int seq_len = 1 + static_cast<int>(rng.uniform_int(400));
        const int window_len = 1 + static_cast<int>(rng.uniform_int(50));
        std::vector<int> covered(static_cast<std::size_t>(seq_len), 0);
        for (const Window& w : make_windows(seq_len, window_len)) {
            REQUIRE(w.effective_len >= 1);
            REQUIRE(w.start + w.effective_len <= seq_len);
            for (int i = w.start; i < w.start + w.effective_len; ++i)
                covered[static_cast<std::size_t>(i)]++;
        }
        for (int c : covered) CHECK(c == 1);
    }
}

TEST_CASE("make_windows honors an explicit overlap stride") {
    const auto w = make_windows(10, 4, 2);
    REQUIRE(w.size() == 5);
    CHECK(w[1].start == 2);
    CHECK(w[4].start == 8);
    CHECK(w[4].effective_len == 2);
}

TEST_CASE("positive radius defaults to one sampled-frame interval") {
    PipelineConfig cfg;
    cfg.eval_stride = 3;
    CHECK(positive_radius(cfg, 10.0) == doctest::Approx(0.3));
    cfg.local_positive_radius = 0.7;
    CHECK(positive_radius(cfg, 10.0) == 0.7);
}

TEST_CASE("manifest records stages in completion order and replaces re-runs") {
    const std::string dir = fresh_dir("manifest");
    const std::string path = dir + "/manifest.json";

    RunManifest m = RunManifest::load(path);
    CHECK(m.stages.empty());

    m.record({"train-local", "checkpoints/local.bin", "aa", 1.5, 7});
    m.record({"featurize", "handoff/train", "bb", 2.5, 7});
    m.record({"train-local", "checkpoints/local.bin", "cc", 9.0, 8});
    REQUIRE(m.stages.size() == 2);
    CHECK(m.stages[0].name == "train-local");
    CHECK(m.stages[0].hash == "cc");
    CHECK(m.stages[0].seed == 8);
    CHECK(m.stages[1].name == "featurize");

    m.save(path);
    const RunManifest back = RunManifest::load(path);
    REQUIRE(back.stages.size() == 2);
    CHECK(back.stages[0].hash == "cc");
    CHECK(back.stages[0].seconds == 9.0);
    CHECK(back.find("featurize") != nullptr);
    CHECK(back.find("decode") == nullptr);
}

TEST_CASE("handoff files round-trip bit-exactly") {
    const std::string dir = fresh_dir("handoff");
    Rng rng(3);

    VideoHandoff h;
    h.reps = Mat(5, 4);
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 4; ++c) h.reps(r, c) = rng.normal();
        h.confidence.push_back(rng.uniform01());
        h.times.push_back(0.15 + 0.3 * r);
    }
    write_handoff(h, dir + "/v.bin");
    const VideoHandoff back = read_handoff(dir + "/v.bin");
    REQUIRE(back.reps.rows() == 5);
    REQUIRE(back.reps.cols() == 4);
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 4; ++c) CHECK(back.reps(r, c) == h.reps(r, c));
        CHECK(back.confidence[static_cast<std::size_t>(r)] == h.confidence[static_cast<std::size_t>(r)]);
        CHECK(back.times[static_cast<std::size_t>(r)] == h.times[static_cast<std::size_t>(r)]);
    }

    h.confidence.pop_back();
    CHECK_THROWS_AS(write_handoff(h, dir + "/bad.bin"), Error);
}

TEST_CASE("dedupe keeps the higher-confidence one of near-duplicates") {
    // two raw predictions 0.01 s apart with a 0.1 s sampled interval
    std::vector<BoundaryPrediction> raw = {{4.21, 0.9}, {4.20, 0.95}};
    const auto kept = dedupe_predictions(raw, 0.1);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].time == 4.20);
    CHECK(kept[0].confidence == 0.95);

    // far-apart predictions survive and come back time-sorted
    std::vector<BoundaryPrediction> spread = {{9.0, 0.5}, {1.0, 0.4}, {5.0, 0.99}};
    const auto all = dedupe_predictions(spread, 0.1);
    REQUIRE(all.size() == 3);
    CHECK(all[0].time == 1.0);
    CHECK(all[2].time == 9.0);

    // suppression radiates from the strongest prediction
    std::vector<BoundaryPrediction> chain = {{0.00, 0.5}, {0.09, 0.9}, {0.18, 0.4}};
    const auto winner = dedupe_predictions(chain, 0.1);
    REQUIRE(winner.size() == 1);
    CHECK(winner[0].time == 0.09);
}

TEST_CASE("windows_from_handoff maps boundaries to normalized window positions") {
    PipelineConfig cfg = tiny_config();
    cfg.window_len = 4;
    const double fps = 10.0;
    const VideoHandoff h = ramp_handoff(7, 3, fps, cfg.eval_stride);
    // times: 0.15 + 0.3k; window 0 spans [0.0, 1.2), window 1 spans [1.2, 2.4)

    AnnotatedVideo ann;
    ann.id = "v";
    ann.duration = 2.2;
    ann.fps = fps;
    ann.boundaries = {0.5, 1.3};

    const auto windows = windows_from_handoff(cfg, h, ann);
    REQUIRE(windows.size() == 2);

    CHECK(windows[0].origin == doctest::Approx(0.0));
    CHECK(windows[0].span == doctest::Approx(1.2));
    REQUIRE(windows[0].gts.size() == 1);
    CHECK(windows[0].gts[0] == doctest::Approx((0.5 - 0.0) / 1.2));

    CHECK(windows[1].origin == doctest::Approx(1.2));
    REQUIRE(windows[1].gts.size() == 1);
    CHECK(windows[1].gts[0] == doctest::Approx((1.3 - 1.2) / 1.2));

    // the short second window is padded by repeating the last real row
    const Mat& w1 = windows[1].window;
    REQUIRE(w1.rows() == 4);
    for (int c = 0; c < w1.cols(); ++c) CHECK(w1(3, c) == w1(2, c));

    // a boundary exactly on the seam lands in exactly one window
    ann.boundaries = {0.5, 1.2, 1.3};
    const auto seam = windows_from_handoff(cfg, h, ann);
    CHECK(seam[0].gts.size() + seam[1].gts.size() == 3);
}

TEST_CASE("windows_from_handoff drops over-full windows with a warning") {
    PipelineConfig cfg = tiny_config();
    cfg.window_len = 8;
    cfg.num_queries = 1;
    const VideoHandoff h = ramp_handoff(6, 3, 10.0, cfg.eval_stride);

    AnnotatedVideo ann;
    ann.id = "crowded";
    ann.duration = 2.0;
    ann.fps = 10.0;
    ann.boundaries = {0.4, 0.9};

    std::ostringstream warn;
    const auto windows = windows_from_handoff(cfg, h, ann, &warn);
    CHECK(windows.empty());
    CHECK(warn.str().find("crowded") != std::string::npos);
    CHECK(warn.str().find("skipping") != std::string::npos);

    cfg.num_queries = 3;
    CHECK(windows_from_handoff(cfg, h, ann).size() == 1);
}

TEST_CASE("whole pipeline runs stage by stage on a tiny dataset") {
    const std::string dir = fresh_dir("stages");
    const PipelineConfig cfg = tiny_config();
    const PipelinePaths paths{dir};

    generate_dataset(tiny_dataset(2, 21, "train"), paths.dataset_dir("train"));
    generate_dataset(tiny_dataset(2, 22, "test"), paths.dataset_dir("test"));

    // stage order is enforced before artifacts exist
    CHECK_THROWS_AS(featurize(cfg, paths.dataset_dir("train"), paths, "train"), Error);
    CHECK_THROWS_AS(train_decoder(cfg, paths.dataset_dir("train"), paths), Error);
    CHECK_THROWS_AS(infer(cfg, paths.dataset_dir("test"), paths, "test"), Error);

    train_local(cfg, paths.dataset_dir("train"), paths);
    CHECK(fs::exists(paths.local_checkpoint()));
    CHECK_THROWS_AS(train_decoder(cfg, paths.dataset_dir("train"), paths), Error);

    featurize(cfg, paths.dataset_dir("train"), paths, "train");
    const auto anns = load_annotations(paths.dataset_dir("train") + "/annotations.json");
    for (const auto& ann : anns) {
        const VideoHandoff h = read_handoff(paths.handoff_file("train", ann.id));
        const int frames = static_cast<int>(ann.duration * ann.fps + 0.5);
        CHECK(h.reps.rows() == static_cast<int>(sample_frames(frames, cfg.eval_stride).size()));
        CHECK(h.reps.cols() == cfg.feature_dim);
        for (double c : h.confidence) {
            CHECK(c >= 0.0);
            CHECK(c <= 1.0);
        }
        for (std::size_t k = 1; k < h.times.size(); ++k) CHECK(h.times[k] > h.times[k - 1]);
    }

    CHECK_THROWS_AS(infer(cfg, paths.dataset_dir("test"), paths, "test"), Error);
    train_decoder(cfg, paths.dataset_dir("train"), paths);
    CHECK(fs::exists(paths.decoder_checkpoint()));

    const PredictionMap preds = infer(cfg, paths.dataset_dir("test"), paths, "test");
    CHECK(fs::exists(paths.predictions_file()));
    const auto test_anns = load_annotations(paths.dataset_dir("test") + "/annotations.json");
    for (const auto& ann : test_anns) {
        REQUIRE(preds.count(ann.id) == 1);
        for (const BoundaryPrediction& p : preds.at(ann.id)) {
            CHECK(p.time >= 0.0);
            CHECK(p.time <= ann.duration);
        }
    }

    const RunManifest manifest = RunManifest::load(paths.manifest_file());
    REQUIRE(manifest.stages.size() == 4);
    CHECK(manifest.stages[0].name == "train-local");
    CHECK(manifest.stages[1].name == "featurize");
    CHECK(manifest.stages[2].name == "train-decoder");
    CHECK(manifest.stages[3].name == "decode");
    for (const StageRecord& s : manifest.stages) CHECK(s.seed == cfg.seed);
}

TEST_CASE("featurize output is a pure function of checkpoint and data") {
    const std::string dir = fresh_dir("featurize_repeat");
    const PipelineConfig cfg = tiny_config();
    const PipelinePaths paths{dir};

    generate_dataset(tiny_dataset(1, 31, "train"), paths.dataset_dir("train"));
    train_local(cfg, paths.dataset_dir("train"), paths);

    featurize(cfg, paths.dataset_dir("train"), paths, "train");
    const std::string first = slurp(paths.handoff_file("train", "train_0000"));
    featurize(cfg, paths.dataset_dir("train"), paths, "train");
    CHECK(slurp(paths.handoff_file("train", "train_0000")) == first);
}

TEST_CASE("training is deterministic given the seed") {
    const std::string data = fresh_dir("det_data");
    const PipelineConfig cfg = tiny_config();
    generate_dataset(tiny_dataset(2, 41, "train"), data + "/train");

    std::string hashes[2];
    for (int run = 0; run < 2; ++run) {
        const PipelinePaths paths{fresh_dir("det_run" + std::to_string(run))};
        train_local(cfg, data + "/train", paths);
        const RunManifest m = RunManifest::load(paths.manifest_file());
        REQUIRE(m.find("train-local") != nullptr);
        hashes[run] = m.find("train-local")->hash;
    }
    CHECK(hashes[0] == hashes[1]);

    PipelineConfig other = cfg;
    other.seed = cfg.seed + 1;
    const PipelinePaths paths{fresh_dir("det_run_other")};
    train_local(other, data + "/train", paths);
    CHECK(RunManifest::load(paths.manifest_file()).find("train-local")->hash != hashes[0]);
}

TEST_CASE("divergent training aborts with a runtime error") {
    const std::string dir = fresh_dir("diverge");
    PipelineConfig cfg = tiny_config();
    cfg.lr_local = 1e12;
    cfg.epochs_local = 3;
    const PipelinePaths paths{dir};
    generate_dataset(tiny_dataset(1, 51, "train"), paths.dataset_dir("train"));
    CHECK_THROWS_AS(train_local(cfg, paths.dataset_dir("train"), paths), Error);
}

TEST_CASE("duplicate video ids are rejected") {
    const std::string dir = fresh_dir("dup_ids");
    const PipelineConfig cfg = tiny_config();

    std::vector<AnnotatedVideo> anns(2);
    anns[0].id = "same";
    anns[0].duration = 4.0;
    anns[0].fps = 5.0;
    anns[1] = anns[0];
    fs::create_directories(dir + "/train");
    save_annotations(anns, dir + "/train/annotations.json");
    CHECK_THROWS_WITH_AS(static_cast<void>(load_local_dataset(cfg, dir + "/train")),
                         doctest::Contains("duplicate"), Error);
}

TEST_CASE("local dataset labels sampled frames by boundary distance") {
    const std::string dir = fresh_dir("labels");
    PipelineConfig cfg = tiny_config();
    generate_dataset(tiny_dataset(2, 61, "train"), dir + "/train");
    const LocalDataset ds = load_local_dataset(cfg, dir + "/train");

    REQUIRE(ds.pooled.size() == 2);
    REQUIRE(ds.level_channels == std::vector<int>{2, 3});
    REQUIRE_FALSE(ds.examples.empty());

    int positives = 0;
    for (const LocalExample& ex : ds.examples) {
        const AnnotatedVideo& ann = ds.annotations[static_cast<std::size_t>(ex.video)];
        const double t = (ex.center + 0.5) / ann.fps;
        const double radius = positive_radius(cfg, ann.fps);
        bool near = false;
        for (double b : ann.boundaries) near = near || std::abs(t - b) <= radius;
        CHECK(ex.label == (near ? 1 : 0));
        positives += ex.label;
    }
    CHECK(positives > 0);
    CHECK(positives < static_cast<int>(ds.examples.size()));

    // every boundary of this dataset is covered by at least one positive frame
    for (std::size_t v = 0; v < ds.annotations.size(); ++v) {
        for (double b : ds.annotations[v].boundaries) {
            bool covered = false;
            for (const LocalExample& ex : ds.examples) {
                if (static_cast<std::size_t>(ex.video) != v || ex.label == 0) continue;
                const double t = (ex.center + 0.5) / ds.annotations[v].fps;
                covered = covered ||
                          std::abs(t - b) <= positive_radius(cfg, ds.annotations[v].fps);
            }
            CHECK(covered);
        }
    }
}

TEST_CASE("one small optimizer step decreases a fixed batch's loss") {
    const std::string dir = fresh_dir("descent");
    PipelineConfig cfg = tiny_config();
    generate_dataset(tiny_dataset(2, 71, "train"), dir + "/train");
    const LocalDataset ds = load_local_dataset(cfg, dir + "/train");

    ParamStore params;
    Rng rng(derive_seed(cfg.seed, "local-init", 0));
    const LocalModel model(local_config_from(cfg, ds.level_channels), params, rng);

    // fixed batch: first eight examples
    const auto batch_loss = [&] {
        double total = 0.0;
        for (std::size_t i = 0; i < 8; ++i) {
            const LocalExample& ex = ds.examples[i];
            const auto out = model.forward(clip_pooled(ds, ex, cfg));
            total += ad::scalar(local_loss(out.confidence, ex.label));
        }
        return total / 8.0;
    };

    const double before = batch_loss();
    AdamOptimizer opt(params, 1e-6, 0.0);
    ad::GradSink sink;
    for (std::size_t i = 0; i < 8; ++i) {
        const LocalExample& ex = ds.examples[i];
        const auto out = model.forward(clip_pooled(ds, ex, cfg));
        ad::backward(ad::scale(local_loss(out.confidence, ex.label), 1.0 / 8.0), sink);
    }
    opt.step(sink);
    const double after = batch_loss();
    CHECK(after < before);
}

TEST_CASE("one small optimizer step decreases the decoder loss") {
    PipelineConfig cfg = tiny_config();
    cfg.window_len = 8;

    ParamStore params;
    Rng rng(derive_seed(cfg.seed, "decoder-init", 0));
    const DecoderNet net(decoder_config_from(cfg), params, rng);

    Rng data_rng(5);
    Mat window(cfg.window_len, cfg.feature_dim);
    for (int r = 0; r < window.rows(); ++r)
        for (int c = 0; c < window.cols(); ++c) window(r, c) = data_rng.normal();
    const std::vector<double> gts = {0.25, 0.75};

    const auto loss_now = [&] {
        const auto f = net.decode(window);
        return ad::scalar(
            set_prediction_loss(f.locations, f.p_bc, gts, cfg.lambda_loc, cfg.lambda_cls).loss);
    };

    const double before = loss_now();
    AdamOptimizer opt(params, 1e-6, 0.0);
    ad::GradSink sink;
    const auto f = net.decode(window);
    ad::backward(set_prediction_loss(f.locations, f.p_bc, gts, cfg.lambda_loc, cfg.lambda_cls).loss,
                 sink);
    opt.step(sink);
    CHECK(loss_now() < before);
}

TEST_CASE("dataset spec scales the pyramid with the level count") {
    PipelineConfig cfg;
    cfg.m = 2;
    const DatasetSpec two = dataset_spec_for(cfg, 7, 99, "train");
    CHECK(two.count == 7);
    CHECK(two.seed == 99);
    CHECK(two.id_prefix == "train");
    REQUIRE(two.pyramid.size() == 2);
    CHECK(two.pyramid[0].c == 8);
    CHECK(two.pyramid[1].c == 16);

    cfg.m = 5;
    CHECK_THROWS_AS(dataset_spec_for(cfg, 1, 1, "x"), Error);
}

TEST_CASE("run_all produces a scored report and all artifacts") {
    const std::string dir = fresh_dir("runall");
    PipelineConfig cfg = tiny_config();
    cfg.m = 3;
    cfg.n = 3;
    cfg.L = 9;
    cfg.epochs_local = 0;
    cfg.epochs_decoder = 0;
    const PipelinePaths paths{dir};

    const EvalReport report = run_all(cfg, 2, 2, paths);
    CHECK(fs::exists(paths.config_file()));
    CHECK(fs::exists(paths.predictions_file()));
    CHECK(fs::exists(paths.report_file()));
    CHECK(report.thresholds.size() == cfg.rel_dis_thresholds.size());

    const RunManifest manifest = RunManifest::load(paths.manifest_file());
    REQUIRE(manifest.stages.size() == 4);
    CHECK(manifest.stages[0].name == "train-local");
    CHECK(manifest.stages[3].name == "decode");

    const EvalReport loaded = load_report(paths.report_file());
    REQUIRE(loaded.thresholds.size() == report.thresholds.size());
    for (std::size_t i = 0; i < loaded.thresholds.size(); ++i)
        CHECK(loaded.thresholds[i].f1 == doctest::Approx(report.thresholds[i].f1));
}
