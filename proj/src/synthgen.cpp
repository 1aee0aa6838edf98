#include "gebd/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "gebd/random.hpp"
#include "gebd/tensorfile.hpp"

namespace gebd {

namespace {

constexpr double kMinSegmentSeconds = 1.0;
constexpr double kRippleSigma = 0.25;

std::vector<double> sample_unit_direction(int dim, Rng& rng) {
    std::vector<double> v(dim);
    double norm2 = 0.0;
    for (auto& x : v) {
        x = rng.normal();
        norm2 += x * x;
    }
    const double norm = std::sqrt(norm2);
    if (norm > 1e-12)
        for (auto& x : v) x /= norm;
    else
        v[0] = 1.0;
    return v;
}

// New latent at a jump: move at least min_jump away, in a random direction.
std::vector<double> jump_latent(const std::vector<double>& from, double min_jump, Rng& rng) {
    const auto dir = sample_unit_direction(static_cast<int>(from.size()), rng);
    const double dist = min_jump * (1.0 + 0.5 * rng.uniform01());
    std::vector<double> out(from.size());
    for (std::size_t i = 0; i < from.size(); ++i) out[i] = from[i] + dist * dir[i];
    return out;
}

void validate_spec(const SyntheticVideoSpec& spec) {
    if (spec.segment_count < 1) throw Error("synthetic spec: segment_count must be >= 1");
    if (spec.duration_min <= 0.0 || spec.duration_max < spec.duration_min)
        throw Error("synthetic spec: empty duration range");
    if (spec.fps <= 0.0) throw Error("synthetic spec: fps must be > 0");
    if (spec.noise_sigma < 0.0) throw Error("synthetic spec: noise_sigma must be >= 0");
    if (spec.min_jump <= 0.0) throw Error("synthetic spec: min_jump must be > 0");
    if (spec.pyramid.empty()) throw Error("synthetic spec: pyramid must have at least one level");
    for (std::size_t l = 0; l < spec.pyramid.size(); ++l) {
        const auto& p = spec.pyramid[l];
        if (p.h < 1 || p.w < 1 || p.c < 1) throw Error("synthetic spec: bad pyramid shape");
        if (l > 0) {
            const auto& prev = spec.pyramid[l - 1];
            if (!(p.h < prev.h && p.w < prev.w && p.c > prev.c))
                throw Error("synthetic spec: pyramid must shrink spatially and grow in channels");
        }
    }
    if (!spec.change_kinds.empty() &&
        static_cast<int>(spec.change_kinds.size()) != spec.segment_count - 1)
        throw Error("synthetic spec: change_kinds must have segment_count - 1 entries");
    if (spec.duration_min < spec.segment_count * kMinSegmentSeconds)
        throw Error("synthetic spec: duration too short for segment_count at 1 s per segment");
}

} // namespace

const char* to_string(ChangeKind kind) {
    switch (kind) {
        case ChangeKind::low_level: return "low_level";
        case ChangeKind::high_level: return "high_level";
        case ChangeKind::speed: return "speed";
    }
    return "?";
}

std::vector<PyramidShape> default_pyramid() {
    return {{16, 16, 8}, {8, 8, 16}, {4, 4, 32}};
}

SyntheticVideo generate(const SyntheticVideoSpec& spec) {
    validate_spec(spec);
    Rng rng(spec.seed);
    const int levels = static_cast<int>(spec.pyramid.size());
    const int top = levels - 1;

    const double duration = rng.uniform(spec.duration_min, spec.duration_max);

    // Segment lengths: the minimum each, plus a weighted share of the slack.
    const int k = spec.segment_count;
    std::vector<double> lengths(k, kMinSegmentSeconds);
    {
        std::vector<double> weights(k);
        double total = 0.0;
        for (auto& w : weights) {
            w = 0.05 + rng.uniform01();
            total += w;
        }
        const double slack = duration - k * kMinSegmentSeconds;
        for (int i = 0; i < k; ++i) lengths[i] += slack * weights[i] / total;
    }
    std::vector<double> junctions; // boundary times, one per segment change
    double acc = 0.0;
    for (int i = 0; i + 1 < k; ++i) {
        acc += lengths[i];
        junctions.push_back(acc);
    }

    std::vector<ChangeKind> kinds = spec.change_kinds;
    if (kinds.empty()) {
        for (int i = 0; i + 1 < k; ++i)
            kinds.push_back(static_cast<ChangeKind>(rng.uniform_int(3)));
    }

    // First segment: latents, drift speed, drift directions.
    std::vector<SegmentPlan> plan(k);
    std::vector<std::vector<std::vector<double>>> directions(k); // [segment][level][channel]
    plan[0].start = 0.0;
    plan[0].drift_rate = rng.uniform(spec.drift_min, spec.drift_max);
    for (int l = 0; l < levels; ++l) {
        std::vector<double> z(spec.pyramid[l].c);
        for (auto& x : z) x = rng.normal();
        plan[0].latent.push_back(std::move(z));
        directions[0].push_back(sample_unit_direction(spec.pyramid[l].c, rng));
    }

    for (int seg = 1; seg < k; ++seg) {
        const double start = junctions[seg - 1];
        const double prev_start = plan[seg - 1].start;
        const double dt = start - prev_start;
        plan[seg].start = start;

        // Where the previous segment's latent ended up: continuity baseline.
        plan[seg].latent.resize(levels);
        for (int l = 0; l < levels; ++l) {
            const auto& z0 = plan[seg - 1].latent[l];
            const auto& dir = directions[seg - 1][l];
            std::vector<double> z(z0.size());
            for (std::size_t c = 0; c < z0.size(); ++c)
                z[c] = z0[c] + plan[seg - 1].drift_rate * dt * dir[c];
            plan[seg].latent[l] = std::move(z);
        }
        plan[seg].drift_rate = plan[seg - 1].drift_rate;
        directions[seg] = directions[seg - 1];

        switch (kinds[seg - 1]) {
            case ChangeKind::low_level:
                plan[seg].latent[0] = jump_latent(plan[seg].latent[0], spec.min_jump, rng);
                break;
            case ChangeKind::high_level:
                plan[seg].latent[top] = jump_latent(plan[seg].latent[top], spec.min_jump, rng);
                break;
            case ChangeKind::speed:
                plan[seg].drift_rate = rng.uniform(spec.drift_min, spec.drift_max);
                for (int l = 0; l < levels; ++l)
                    directions[seg][l] = sample_unit_direction(spec.pyramid[l].c, rng);
                break;
        }
    }

    // Static spatial texture per level, shared by all frames of the video.
    std::vector<Grid3> ripple(levels);
    for (int l = 0; l < levels; ++l) {
        const auto& shape = spec.pyramid[l];
        ripple[l] = Grid3(shape.h, shape.w, shape.c);
        for (auto& x : ripple[l].data) x = static_cast<float>(kRippleSigma * rng.normal());
    }

    SyntheticVideo video;
    video.annotation.id = spec.id;
    video.annotation.duration = duration;
    video.annotation.fps = spec.fps;
    video.annotation.boundaries = junctions;
    video.plan = plan;
    video.change_kinds = kinds;

    const int frame_count = static_cast<int>(std::lround(duration * spec.fps));
    video.frames.resize(frame_count);
    for (int t = 0; t < frame_count; ++t) {
        const double time = (t + 0.5) / spec.fps; // frame-cell center
        int seg = 0;
        while (seg + 1 < k && time >= plan[seg + 1].start) ++seg;
        const double dt = time - plan[seg].start;

        video.frames[t].resize(levels);
        for (int l = 0; l < levels; ++l) {
            const auto& shape = spec.pyramid[l];
            Grid3 g(shape.h, shape.w, shape.c);
            std::vector<double> z(shape.c);
            for (int c = 0; c < shape.c; ++c)
                z[c] = plan[seg].latent[l][c] + plan[seg].drift_rate * dt * directions[seg][l][c];
            for (int y = 0; y < shape.h; ++y)
                for (int x = 0; x < shape.w; ++x)
                    for (int c = 0; c < shape.c; ++c) {
                        double value = z[c] + ripple[l].at(y, x, c);
                        if (spec.noise_sigma > 0.0) value += spec.noise_sigma * rng.normal();
                        g.at(y, x, c) = static_cast<float>(value);
                    }
            video.frames[t][l] = std::move(g);
        }
    }
    return video;
}

std::vector<AnnotatedVideo> generate_dataset(const DatasetSpec& ds, const std::string& out_dir) {
    if (ds.count < 1) throw Error("generate_dataset: count must be >= 1");
    if (ds.segments_min < 1 || ds.segments_max < ds.segments_min)
        throw Error("generate_dataset: bad segment count range");
    const double wsum = ds.weight_low + ds.weight_high + ds.weight_speed;
    if (ds.weight_low < 0 || ds.weight_high < 0 || ds.weight_speed < 0 || wsum <= 0)
        throw Error("generate_dataset: bad change-kind weights");

    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "features");

    std::vector<AnnotatedVideo> annotations;
    annotations.reserve(ds.count);
    for (int i = 0; i < ds.count; ++i) {
        Rng vr(derive_seed(ds.seed, "video", static_cast<std::uint64_t>(i)));

        SyntheticVideoSpec spec;
        char suffix[16];
        std::snprintf(suffix, sizeof suffix, "_%04d", i);
        spec.id = ds.id_prefix + suffix;
        spec.segment_count =
            ds.segments_min + static_cast<int>(vr.uniform_int(
                                  static_cast<std::uint64_t>(ds.segments_max - ds.segments_min + 1)));
        // Keep the 1 s minimum segment length feasible.
        spec.duration_min = std::max(ds.duration_min, spec.segment_count * 1.5);
        spec.duration_max = std::max(ds.duration_max, spec.duration_min);
        spec.fps = ds.fps;
        spec.drift_min = ds.drift_min;
        spec.drift_max = ds.drift_max;
        spec.noise_sigma = ds.noise_sigma;
        spec.min_jump = ds.min_jump;
        spec.pyramid = ds.pyramid;
        const double weights[3] = {ds.weight_low, ds.weight_high, ds.weight_speed};
        for (int b = 0; b + 1 < spec.segment_count; ++b)
            spec.change_kinds.push_back(static_cast<ChangeKind>(vr.pick_weighted(weights, 3)));
        spec.seed = derive_seed(ds.seed, "frames", static_cast<std::uint64_t>(i));

        const SyntheticVideo video = generate(spec);
        write_video_features(video, (fs::path(out_dir) / "features" / (spec.id + ".bin")).string());
        annotations.push_back(video.annotation);
    }
    save_annotations(annotations, (fs::path(out_dir) / "annotations.json").string());
    return annotations;
}

void write_video_features(const SyntheticVideo& video, const std::string& path) {
    TensorFile tf;
    const int frame_count = static_cast<int>(video.frames.size());
    if (frame_count == 0) throw Error("write_video_features: no frames");
    const int levels = static_cast<int>(video.frames[0].size());
    for (int l = 0; l < levels; ++l) {
        const Grid3& first = video.frames[0][l];
        std::vector<float> data;
        data.reserve(static_cast<std::size_t>(frame_count) * first.data.size());
        for (int t = 0; t < frame_count; ++t) {
            const Grid3& g = video.frames[t][l];
            if (g.h != first.h || g.w != first.w || g.c != first.c)
                throw Error("write_video_features: inconsistent level shapes");
            data.insert(data.end(), g.data.begin(), g.data.end());
        }
        tf.add_f32("level" + std::to_string(l), {frame_count, first.h, first.w, first.c},
                   std::move(data));
    }
    tf.write(path);
}

std::vector<std::vector<Grid3>> read_video_features(const std::string& path) {
    const TensorFile tf = TensorFile::read(path);
    if (tf.entries().empty()) throw Error("empty feature file: " + path);

    std::vector<std::vector<Grid3>> frames;
    for (std::size_t l = 0; l < tf.entries().size(); ++l) {
        const TensorEntry& e = tf.get("level" + std::to_string(l));
        if (e.dtype != "f32" || e.shape.size() != 4)
            throw Error("feature tensor '" + e.name + "' must be f32 with shape T,H,W,C");
        const int t_count = e.shape[0], h = e.shape[1], w = e.shape[2], c = e.shape[3];
        if (frames.empty())
            frames.resize(t_count);
        else if (static_cast<int>(frames.size()) != t_count)
            throw Error("feature levels disagree on frame count in " + path);
        const std::size_t per_frame = static_cast<std::size_t>(h) * w * c;
        for (int t = 0; t < t_count; ++t) {
            Grid3 g(h, w, c);
            std::copy_n(e.f32.begin() + static_cast<std::ptrdiff_t>(t * per_frame), per_frame,
                        g.data.begin());
            frames[t].push_back(std::move(g));
        }
    }
    return frames;
}

} // namespace gebd
