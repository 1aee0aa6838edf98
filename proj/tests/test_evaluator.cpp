#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>
#include <vector>

#include "gebd/datamodel.hpp"
#include "gebd/evaluator.hpp"
#include "gebd/random.hpp"
#include "testutil.hpp"

using namespace gebd;
using gebd::testutil::brute_force_max_matching;

TEST_CASE("rel_dis arithmetic") {
    CHECK(rel_dis(5.0, 5.2, 10.0) == doctest::Approx(0.02));
    CHECK(rel_dis(3.3, 3.3, 7.0) == doctest::Approx(0.0));
    CHECK(rel_dis(0.0, 10.0, 10.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(rel_dis(1.0, 2.0, 0.0), Error);
}

TEST_CASE("match_video on the two-each instance") {
    const auto m = match_video({0.10, 0.50}, {0.12, 0.90}, 1.0, 0.05);
    CHECK(m.tp() == 1);
    CHECK(m.fp() == 1);
    CHECK(m.fn() == 1);
    REQUIRE(m.matched.size() == 1);
    CHECK(m.matched[0].pred_index == 0);
    CHECK(m.matched[0].gt_index == 0);
    CHECK(m.matched[0].rel_dis == doctest::Approx(0.02));
}

TEST_CASE("perfect predictions match everything at any threshold") {
    const std::vector<double> gts = {1.0, 2.5, 7.75};
    for (double threshold : {0.01, 0.05, 0.5}) {
        const auto m = match_video(gts, gts, 10.0, threshold);
        CHECK(m.tp() == 3);
        CHECK(m.fp() == 0);
        CHECK(m.fn() == 0);
    }
}

TEST_CASE("one gt matches only one of two nearby preds") {
    const auto m = match_video({0.49, 0.51}, {0.50}, 1.0, 0.05);
    CHECK(m.tp() == 1);
    CHECK(m.fp() == 1);
    CHECK(m.fn() == 0);
}

TEST_CASE("greedy-only matching would under-count this instance") {
    // Closest pair first strands both outer points; the maximum matching
    // pairs them all the same.
    const auto m = match_video({5.0, 10.0}, {9.0, 19.0}, 100.0, 0.09);
    CHECK(m.tp() == 2);
}

TEST_CASE("match_video equals the exhaustive matching oracle") {
    Rng rng(71);
    for (int trial = 0; trial < 200; ++trial) {
        const double duration = rng.uniform(5.0, 50.0);
        const int np = static_cast<int>(rng.uniform_int(9));
        const int ng = static_cast<int>(rng.uniform_int(9));
        std::vector<double> preds(np), gts(ng);
        for (auto& p : preds) p = rng.uniform(0.0, duration);
        for (auto& g : gts) g = rng.uniform(0.0, duration);
        std::sort(preds.begin(), preds.end());
        std::sort(gts.begin(), gts.end());
        const double threshold = rng.uniform(0.01, 0.3);

        const auto m = match_video(preds, gts, duration, threshold);
        CHECK(m.tp() == brute_force_max_matching(preds, gts, duration, threshold));
        CHECK(m.tp() + m.fp() == np);
        CHECK(m.tp() + m.fn() == ng);
        for (const auto& pair : m.matched) CHECK(pair.rel_dis <= threshold);
    }
}

TEST_CASE("swapping preds and gts swaps fp/fn and keeps cardinality") {
    Rng rng(72);
    for (int trial = 0; trial < 50; ++trial) {
        const double duration = 20.0;
        std::vector<double> a(3 + rng.uniform_int(4)), b(3 + rng.uniform_int(4));
        for (auto& x : a) x = rng.uniform(0.0, duration);
        for (auto& x : b) x = rng.uniform(0.0, duration);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        const auto ab = match_video(a, b, duration, 0.07);
        const auto ba = match_video(b, a, duration, 0.07);
        CHECK(ab.tp() == ba.tp());
        CHECK(ab.fp() == ba.fn());
        CHECK(ab.fn() == ba.fp());
    }
}

TEST_CASE("score arithmetic matches the reference operating points") {
    const Score s1 = score(624, 376, 0); // P = 0.624 exactly
    CHECK(s1.precision == doctest::Approx(0.624));

    // Direct formula checks at the reported operating points.
    auto f1_of = [](double p, double r) { return 2 * p * r / (p + r); };
    CHECK(f1_of(0.624, 0.626) == doctest::Approx(0.625).epsilon(0.0008));
    CHECK(f1_of(0.837, 0.837) == doctest::Approx(0.837));

    const Score zero = score(0, 0, 0);
    CHECK(zero.precision == 0.0);
    CHECK(zero.recall == 0.0);
    CHECK(zero.f1 == 0.0);

    const Score some = score(2, 1, 1);
    CHECK(some.precision == doctest::Approx(2.0 / 3.0));
    CHECK(some.recall == doctest::Approx(2.0 / 3.0));
    CHECK(some.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("evaluate: perfect predictions give F1 1 at every threshold") {
    std::vector<AnnotatedVideo> anns;
    AnnotatedVideo v;
    v.id = "v1";
    v.duration = 10.0;
    v.fps = 30.0;
    v.boundaries = {2.0, 5.0, 8.0};
    anns.push_back(v);

    PredictionMap preds;
    preds["v1"] = {{2.0, 1.0}, {5.0, 1.0}, {8.0, 1.0}};

    const auto report = evaluate(preds, anns, {0.05, 0.1, 0.25});
    REQUIRE(report.thresholds.size() == 3);
    for (const auto& row : report.thresholds) {
        CHECK(row.tp == 3);
        CHECK(row.fp == 0);
        CHECK(row.fn == 0);
        CHECK(row.f1 == doctest::Approx(1.0));
    }
}

TEST_CASE("evaluate: empty predictions score zero") {
    std::vector<AnnotatedVideo> anns;
    for (int i = 0; i < 3; ++i) {
        AnnotatedVideo v;
        v.id = "v" + std::to_string(i);
        v.duration = 10.0;
        v.fps = 30.0;
        v.boundaries = {4.0};
        anns.push_back(v);
    }
    const auto report = evaluate({}, anns, {0.05});
    REQUIRE(report.thresholds.size() == 1);
    CHECK(report.thresholds[0].tp == 0);
    CHECK(report.thresholds[0].fn == 3);
    CHECK(report.thresholds[0].precision == 0.0);
    CHECK(report.thresholds[0].recall == 0.0);
    CHECK(report.thresholds[0].f1 == 0.0);
}

TEST_CASE("evaluate micro-averages counts across videos") {
    std::vector<AnnotatedVideo> anns;
    AnnotatedVideo a;
    a.id = "a";
    a.duration = 10.0;
    a.fps = 30.0;
    a.boundaries = {2.0, 8.0};
    AnnotatedVideo b;
    b.id = "b";
    b.duration = 10.0;
    b.fps = 30.0;
    b.boundaries = {5.0};
    anns.push_back(a);
    anns.push_back(b);

    PredictionMap preds;
    preds["a"] = {{2.0, 0.9}};              // tp=1, fn=1
    preds["b"] = {{5.0, 0.9}, {9.0, 0.8}};  // tp=1, fp=1

    const auto report = evaluate(preds, anns, {0.05});
    REQUIRE(report.thresholds.size() == 1);
    const auto& row = report.thresholds[0];
    CHECK(row.tp == 2);
    CHECK(row.fp == 1);
    CHECK(row.fn == 1);
    CHECK(row.precision == doctest::Approx(2.0 / 3.0));
    CHECK(row.recall == doctest::Approx(2.0 / 3.0));
    CHECK(row.f1 == doctest::Approx(2.0 / 3.0));
    CHECK(report.per_video.size() == 2);
}

TEST_CASE("evaluate rejects unknown ids and clamps stray times") {
    std::vector<AnnotatedVideo> anns;
    AnnotatedVideo v;
    v.id = "v1";
    v.duration = 10.0;
    v.fps = 30.0;
    v.boundaries = {9.9};
    anns.push_back(v);

    PredictionMap bad;
    bad["other"] = {{1.0, 0.5}};
    CHECK_THROWS_WITH_AS(evaluate(bad, anns, {0.05}), doctest::Contains("other"), Error);

    PredictionMap stray;
    stray["v1"] = {{11.5, 0.9}}; // clamps to 10.0, within 0.05*10 of 9.9
    std::ostringstream warn;
    const auto report = evaluate(stray, anns, {0.05}, &warn);
    CHECK(report.thresholds[0].tp == 1);
    CHECK(warn.str().find("clamped") != std::string::npos);
}

TEST_CASE("F1 is non-decreasing in the threshold") {
    Rng rng(73);
    const std::vector<double> thresholds = {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<AnnotatedVideo> anns;
        PredictionMap preds;
        const int vids = 1 + static_cast<int>(rng.uniform_int(4));
        for (int i = 0; i < vids; ++i) {
            AnnotatedVideo v;
            v.id = "v" + std::to_string(i);
            v.duration = rng.uniform(5.0, 30.0);
            v.fps = 30.0;
            double t = 0.0;
            while ((t += rng.uniform(0.8, 4.0)) < v.duration - 0.3) v.boundaries.push_back(t);
            std::vector<BoundaryPrediction> p;
            const int n = static_cast<int>(rng.uniform_int(8));
            for (int k = 0; k < n; ++k) p.push_back({rng.uniform(0.0, v.duration), rng.uniform01()});
            preds[v.id] = std::move(p);
            anns.push_back(std::move(v));
        }
        const auto report = evaluate(preds, anns, thresholds);
        for (std::size_t i = 1; i < report.thresholds.size(); ++i)
            CHECK(report.thresholds[i].f1 >= report.thresholds[i - 1].f1);
    }
}
