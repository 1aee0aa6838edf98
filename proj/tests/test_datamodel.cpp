#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "gebd/datamodel.hpp"
#include "gebd/random.hpp"
#include "testutil.hpp"

using namespace gebd;
using gebd::testutil::TempDir;

namespace {

void write_text(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    out << body;
}

} // namespace

TEST_CASE("load_annotations parses a single record") {
    TempDir dir;
    const auto path = dir.file("ann.json");
    write_text(path, R"([{"id":"v1","duration":10.0,"fps":30,"boundaries":[5.0]}])");
    const auto videos = load_annotations(path);
    REQUIRE(videos.size() == 1);
    CHECK(videos[0].id == "v1");
    CHECK(videos[0].duration == doctest::Approx(10.0));
    CHECK(videos[0].fps == doctest::Approx(30.0));
    REQUIRE(videos[0].boundaries.size() == 1);
    CHECK(videos[0].boundaries[0] == doctest::Approx(5.0));
}

TEST_CASE("load_annotations rejects unsorted boundaries") {
    TempDir dir;
    const auto path = dir.file("ann.json");
    write_text(path, R"([{"id":"v1","duration":10.0,"fps":30,"boundaries":[5.0,2.0]}])");
    CHECK_THROWS_WITH_AS(load_annotations(path),
                         doctest::Contains("unsorted boundaries"), Error);
}

TEST_CASE("load_annotations accepts an empty boundary list") {
    TempDir dir;
    const auto path = dir.file("ann.json");
    write_text(path, R"([{"id":"v1","duration":4.0,"fps":24,"boundaries":[]}])");
    const auto videos = load_annotations(path);
    REQUIRE(videos.size() == 1);
    CHECK(videos[0].boundaries.empty());
}

TEST_CASE("load_annotations rejects out-of-range boundaries and bad records") {
    TempDir dir;
    const auto path = dir.file("ann.json");

    write_text(path, R"([{"id":"v2","duration":10.0,"fps":30,"boundaries":[10.0]}])");
    CHECK_THROWS_WITH_AS(load_annotations(path), doctest::Contains("v2"), Error);

    write_text(path, R"([{"id":"v3","duration":-1.0,"fps":30,"boundaries":[]}])");
    CHECK_THROWS_AS(load_annotations(path), Error);

    write_text(path, R"([{"duration":10.0,"fps":30,"boundaries":[]}])");
    CHECK_THROWS_AS(load_annotations(path), Error);

    CHECK_THROWS_AS(load_annotations(dir.file("missing.json")), Error);
}

TEST_CASE("annotation round-trip preserves order and values") {
    TempDir dir;
    Rng rng(5);
    std::vector<AnnotatedVideo> videos;
    for (int i = 0; i < 30; ++i) {
        AnnotatedVideo v;
        v.id = "vid" + std::to_string(i);
        v.duration = rng.uniform(5.0, 60.0);
        v.fps = rng.uniform(10.0, 30.0);
        double t = 0.0;
        while (true) {
            t += rng.uniform(0.5, 5.0);
            if (t >= v.duration - 0.25) break;
            v.boundaries.push_back(t);
        }
        videos.push_back(std::move(v));
    }
    const auto path = dir.file("ann.json");
    save_annotations(videos, path);
    const auto loaded = load_annotations(path);
    REQUIRE(loaded.size() == videos.size());
    for (std::size_t i = 0; i < videos.size(); ++i) {
        CHECK(loaded[i].id == videos[i].id);
        CHECK(loaded[i].duration == doctest::Approx(videos[i].duration).epsilon(1e-9));
        REQUIRE(loaded[i].boundaries.size() == videos[i].boundaries.size());
        for (std::size_t b = 0; b < videos[i].boundaries.size(); ++b)
            CHECK(loaded[i].boundaries[b] ==
                  doctest::Approx(videos[i].boundaries[b]).epsilon(1e-9));
    }
}

TEST_CASE("prediction round-trip is the identity") {
    TempDir dir;
    PredictionMap preds;
    preds["v1"] = {{5.0, 0.9}};
    const auto path = dir.file("preds.json");
    write_predictions(preds, path);
    const auto loaded = load_predictions(path);
    REQUIRE(loaded.size() == 1);
    REQUIRE(loaded.at("v1").size() == 1);
    CHECK(loaded.at("v1")[0].time == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(loaded.at("v1")[0].confidence == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("empty prediction map round-trips as empty") {
    TempDir dir;
    const auto path = dir.file("preds.json");
    write_predictions({}, path);
    CHECK(load_predictions(path).empty());
}

TEST_CASE("out-of-range confidence fails on load") {
    TempDir dir;
    const auto path = dir.file("preds.json");
    write_text(path, R"({"v1":[{"time":1.0,"confidence":1.2}]})");
    CHECK_THROWS_WITH_AS(load_predictions(path), doctest::Contains("confidence"), Error);
}

TEST_CASE("randomized prediction round-trips") {
    TempDir dir;
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        PredictionMap preds;
        const int vids = static_cast<int>(rng.uniform_int(5));
        for (int v = 0; v < vids; ++v) {
            std::vector<BoundaryPrediction> list;
            const int n = static_cast<int>(rng.uniform_int(8));
            for (int i = 0; i < n; ++i)
                list.push_back({rng.uniform(0.0, 100.0), rng.uniform01()});
            preds["clip" + std::to_string(v)] = std::move(list);
        }
        const auto path = dir.file("preds" + std::to_string(trial) + ".json");
        write_predictions(preds, path);
        const auto loaded = load_predictions(path);
        REQUIRE(loaded.size() == preds.size());
        for (const auto& [id, list] : preds) {
            const auto& got = loaded.at(id);
            REQUIRE(got.size() == list.size());
            for (std::size_t i = 0; i < list.size(); ++i) {
                CHECK(std::abs(got[i].time - list[i].time) < 1e-9);
                CHECK(std::abs(got[i].confidence - list[i].confidence) < 1e-9);
            }
        }
    }
}

TEST_CASE("report round-trip preserves every row") {
    TempDir dir;
    Rng rng(7);
    EvalReport rep;
    for (double t : {0.05, 0.1, 0.25}) {
        EvalThresholdRow row;
        row.threshold = t;
        row.tp = static_cast<long long>(rng.uniform_int(100));
        row.fp = static_cast<long long>(rng.uniform_int(100));
        row.fn = static_cast<long long>(rng.uniform_int(100));
        row.precision = rng.uniform01();
        row.recall = rng.uniform01();
        row.f1 = rng.uniform01();
        rep.thresholds.push_back(row);
        EvalVideoRow vr;
        vr.id = "v" + std::to_string(static_cast<int>(t * 100));
        vr.threshold = t;
        vr.tp = 1;
        vr.fp = 2;
        vr.fn = 3;
        vr.precision = 0.5;
        vr.recall = 0.25;
        vr.f1 = 1.0 / 3.0;
        rep.per_video.push_back(vr);
    }
    const auto path = dir.file("report.json");
    write_report(rep, path);
    const auto loaded = load_report(path);
    REQUIRE(loaded.thresholds.size() == rep.thresholds.size());
    REQUIRE(loaded.per_video.size() == rep.per_video.size());
    for (std::size_t i = 0; i < rep.thresholds.size(); ++i) {
        CHECK(loaded.thresholds[i].threshold ==
              doctest::Approx(rep.thresholds[i].threshold).epsilon(1e-12));
        CHECK(loaded.thresholds[i].tp == rep.thresholds[i].tp);
        CHECK(loaded.thresholds[i].fp == rep.thresholds[i].fp);
        CHECK(loaded.thresholds[i].fn == rep.thresholds[i].fn);
        CHECK(loaded.thresholds[i].f1 ==
              doctest::Approx(rep.thresholds[i].f1).epsilon(1e-12));
    }
    for (std::size_t i = 0; i < rep.per_video.size(); ++i) {
        CHECK(loaded.per_video[i].id == rep.per_video[i].id);
        CHECK(loaded.per_video[i].threshold ==
              doctest::Approx(rep.per_video[i].threshold).epsilon(1e-12));
    }
}

TEST_CASE("default config is valid") {
    const PipelineConfig cfg;
    CHECK(cfg.m == 3);
    CHECK(cfg.n == 3);
    CHECK(cfg.L == 9);
    CHECK(cfg.w == 16);
    CHECK(cfg.s == 2);
    CHECK(cfg.eval_stride == 3);
    CHECK(cfg.omega == 5);
    CHECK(cfg.num_queries == 10);
    CHECK(cfg.theta == doctest::Approx(0.87));
    CHECK(cfg.window_len == 100);
    CHECK(cfg.lr_local == doctest::Approx(1e-5));
    CHECK(cfg.batch_local == 16);
    CHECK(cfg.lr_decoder == doctest::Approx(1e-4));
    CHECK(cfg.batch_decoder == 32);
    CHECK(cfg.clip_len() == 33);
    CHECK(validate_config(cfg).empty());
}

TEST_CASE("validate_config reports single violations") {
    PipelineConfig cfg;
    cfg.theta = 1.5;
    const auto errors = validate_config(cfg);
    REQUIRE(errors.size() == 1);
    CHECK(errors[0].find("theta") != std::string::npos);
}

TEST_CASE("validate_config flags L mismatch") {
    PipelineConfig cfg;
    cfg.m = 2;
    cfg.n = 3;
    cfg.L = 5;
    const auto errors = validate_config(cfg);
    REQUIRE(errors.size() == 1);
    CHECK(errors[0] == "L != m*n");
}

TEST_CASE("validate_config returns every violation at once") {
    PipelineConfig cfg;
    cfg.theta = -0.2;
    cfg.window_len = 0;
    cfg.num_queries = 0;
    CHECK(validate_config(cfg).size() == 3);
}

TEST_CASE("validate_config rejects single-field mutations of the defaults") {
    auto expect_invalid = [](PipelineConfig cfg) { CHECK(!validate_config(cfg).empty()); };
    PipelineConfig cfg;

    cfg = {}; cfg.m = 0; expect_invalid(cfg);
    cfg = {}; cfg.n = 0; expect_invalid(cfg);
    cfg = {}; cfg.L = 8; expect_invalid(cfg);
    cfg = {}; cfg.theta = 1.01; expect_invalid(cfg);
    cfg = {}; cfg.window_len = 0; expect_invalid(cfg);
    cfg = {}; cfg.rel_dis_thresholds = {0.1, 0.1}; expect_invalid(cfg);
    cfg = {}; cfg.rel_dis_thresholds = {0.0, 0.5}; expect_invalid(cfg);
    cfg = {}; cfg.rel_dis_thresholds = {0.5, 1.1}; expect_invalid(cfg);
    cfg = {}; cfg.heads = 3; expect_invalid(cfg); // feature_dim 64 not divisible
}

TEST_CASE("load_config overrides defaults and recomputes L") {
    TempDir dir;
    const auto path = dir.file("config.json");
    write_text(path, R"({"m":2,"n":2,"theta":0.5,"window_len":40})");
    const auto cfg = load_config(path);
    CHECK(cfg.m == 2);
    CHECK(cfg.n == 2);
    CHECK(cfg.L == 4);
    CHECK(cfg.theta == doctest::Approx(0.5));
    CHECK(cfg.window_len == 40);
    CHECK(cfg.w == 16); // untouched default
    CHECK(validate_config(cfg).empty());
}

TEST_CASE("load_config rejects unknown keys") {
    TempDir dir;
    const auto path = dir.file("config.json");
    write_text(path, R"({"not_a_knob":1})");
    CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("not_a_knob"), Error);
}

TEST_CASE("config save/load round-trip") {
    TempDir dir;
    PipelineConfig cfg;
    cfg.m = 2;
    cfg.n = 4;
    cfg.L = 8;
    cfg.theta = 0.33;
    cfg.seed = 987654321;
    cfg.rel_dis_thresholds = {0.05, 0.2, 0.9};
    const auto path = dir.file("config.json");
    save_config(cfg, path);
    const auto loaded = load_config(path);
    CHECK(loaded.m == cfg.m);
    CHECK(loaded.n == cfg.n);
    CHECK(loaded.L == cfg.L);
    CHECK(loaded.theta == doctest::Approx(cfg.theta).epsilon(1e-12));
    CHECK(loaded.seed == cfg.seed);
    REQUIRE(loaded.rel_dis_thresholds.size() == 3);
    CHECK(loaded.rel_dis_thresholds[2] == doctest::Approx(0.9));
}
