#pragma once

#include <vector>

#include "gebd/autodiff.hpp"
#include "gebd/mat.hpp"
#include "gebd/params.hpp"
#include "gebd/synthgen.hpp"

namespace gebd {

// Mean over the spatial grid, one value per channel.
std::vector<double> spatial_pool(const Grid3& g);

// Pools every frame of one level into a rows-by-channels matrix.
Mat pool_level(const std::vector<std::vector<Grid3>>& frames, int level);

// One temporal variant of one spatial level: a depthwise 1-D convolution
// (taps shared across channels, edge-replicate padding) followed by a linear
// projection to the shared width D. Output length equals input length.
struct TemporalVariant {
    ad::Var taps;    // 1 x kernel
    ad::Linear proj; // C_l -> D
    int kernel = 1;
};

ad::Var apply_temporal_variant(const TemporalVariant& v, const ad::Var& seq);

struct FeatureBankConfig {
    std::vector<int> level_channels; // C_l per spatial level, m entries
    std::vector<int> kernel_sizes;   // n entries, e.g. {1, 3, 5}
    int feature_dim = 64;
};

// Odd kernel sizes 1, 3, 5, ... for n variants.
std::vector<int> default_kernel_sizes(int n);

// The m x n grid of learnable sequence transforms producing the bank of
// L = m*n sequences, all T x D.
class FeatureBank {
public:
    FeatureBank(const FeatureBankConfig& cfg, ParamStore& params, Rng& rng);

    int m() const { return static_cast<int>(cfg_.level_channels.size()); }
    int n() const { return static_cast<int>(cfg_.kernel_sizes.size()); }
    int levels() const { return m() * n(); }

    // pooled_levels: m matrices, each T x C_l. Returns L sequences of
    // T x D, index l*n + v.
    std::vector<ad::Var> build(const std::vector<Mat>& pooled_levels) const;

    const TemporalVariant& variant(int level, int k) const {
        return variants_[static_cast<std::size_t>(level) * cfg_.kernel_sizes.size() + k];
    }

private:
    FeatureBankConfig cfg_;
    std::vector<TemporalVariant> variants_; // level-major
};

} // namespace gebd
