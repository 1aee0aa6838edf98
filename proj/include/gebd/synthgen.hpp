#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gebd/datamodel.hpp"

namespace gebd {

enum class ChangeKind { low_level, high_level, speed };

const char* to_string(ChangeKind kind);

struct PyramidShape {
    int h = 0, w = 0, c = 0;
};

// One backbone-like feature map, H x W x C, row-major (y, x, channel).
struct Grid3 {
    int h = 0, w = 0, c = 0;
    std::vector<float> data;

    Grid3() = default;
    Grid3(int h_, int w_, int c_)
        : h(h_), w(w_), c(c_),
          data(static_cast<std::size_t>(h_) * w_ * c_, 0.0f) {}

    float& at(int y, int x, int ch) {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    float at(int y, int x, int ch) const {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
};

// (16,16,8), (8,8,16), (4,4,32): resolution falls, channels grow, like a
// backbone pyramid, but small enough for CPU training.
std::vector<PyramidShape> default_pyramid();

struct SyntheticVideoSpec {
    std::string id = "synth";
    int segment_count = 1;
    double duration_min = 8.0;
    double duration_max = 8.0;
    double fps = 10.0;
    double drift_min = 0.0; // per-segment drift speed range, units/second
    double drift_max = 0.0;
    double noise_sigma = 0.0;
    double min_jump = 2.0; // minimum latent jump magnitude at a boundary
    std::vector<PyramidShape> pyramid = default_pyramid();
    // One tag per boundary (segment_count - 1 entries). Empty = sampled
    // uniformly. Kinds: low_level shifts the level-0 latent, high_level
    // resamples the top-level latent, speed changes only the drift velocity.
    std::vector<ChangeKind> change_kinds;
    std::uint64_t seed = 1;
};

struct SegmentPlan {
    double start = 0.0;      // seconds
    double drift_rate = 0.0; // units/second
    std::vector<std::vector<double>> latent; // per level, length C_l, at segment start
};

struct SyntheticVideo {
    AnnotatedVideo annotation;
    std::vector<std::vector<Grid3>> frames; // [frame][level]
    std::vector<SegmentPlan> plan;          // realized segments
    std::vector<ChangeKind> change_kinds;   // realized per-boundary kinds
};

// Deterministic in (spec, spec.seed). Boundaries land exactly at the segment
// junction times; within a segment the noiseless latent moves linearly at
// the segment's drift rate.
SyntheticVideo generate(const SyntheticVideoSpec& spec);

struct DatasetSpec {
    int count = 1;
    double duration_min = 8.0;
    double duration_max = 16.0;
    double fps = 10.0;
    int segments_min = 1;
    int segments_max = 5;
    double drift_min = 0.0;
    double drift_max = 0.5;
    double noise_sigma = 0.05;
    double min_jump = 2.0;
    double weight_low = 0.4;   // change-kind mix
    double weight_high = 0.5;
    double weight_speed = 0.1;
    std::vector<PyramidShape> pyramid = default_pyramid();
    std::string id_prefix = "synth";
    std::uint64_t seed = 1;
};

// Writes <out_dir>/annotations.json plus <out_dir>/features/<id>.bin per
// video and returns the annotations in file order. Ids are distinct; output
// bytes are a pure function of the dataset spec.
std::vector<AnnotatedVideo> generate_dataset(const DatasetSpec& ds, const std::string& out_dir);

void write_video_features(const SyntheticVideo& video, const std::string& path);
std::vector<std::vector<Grid3>> read_video_features(const std::string& path);

} // namespace gebd
