#include "gebd/featbank.hpp"

#include <algorithm>
#include <string>

#include "gebd/datamodel.hpp"

namespace gebd {

std::vector<double> spatial_pool(const Grid3& g) {
    if (g.h < 1 || g.w < 1 || g.c < 1) throw Error("spatial_pool: empty tensor");
    std::vector<double> out(g.c, 0.0);
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x)
            for (int c = 0; c < g.c; ++c) out[c] += g.at(y, x, c);
    const double inv = 1.0 / (static_cast<double>(g.h) * g.w);
    for (auto& v : out) v *= inv;
    return out;
}

Mat pool_level(const std::vector<std::vector<Grid3>>& frames, int level) {
    if (frames.empty()) throw Error("pool_level: no frames");
    const int t_count = static_cast<int>(frames.size());
    const int channels = frames[0][level].c;
    Mat out(t_count, channels);
    for (int t = 0; t < t_count; ++t) {
        const auto pooled = spatial_pool(frames[t][level]);
        for (int c = 0; c < channels; ++c) out(t, c) = pooled[c];
    }
    return out;
}

ad::Var apply_temporal_variant(const TemporalVariant& v, const ad::Var& seq) {
    const int t_count = seq->value.rows();
    const int k = v.kernel;
    if (t_count < k) throw Error("temporal variant: sequence shorter than kernel");

    // y[t] = sum_j taps[j] * x[clamp(t + j - k/2)]; replicate padding keeps
    // constant inputs constant when the taps sum to 1.
    ad::Var acc;
    for (int j = 0; j < k; ++j) {
        std::vector<int> idx(t_count);
        for (int t = 0; t < t_count; ++t)
            idx[t] = std::clamp(t + j - k / 2, 0, t_count - 1);
        ad::Var shifted = ad::gather_rows(seq, std::move(idx));
        ad::Var term = ad::scale_by(shifted, ad::slice_cols(v.taps, j, j + 1));
        acc = acc ? ad::add(acc, term) : term;
    }
    return v.proj(acc);
}

std::vector<int> default_kernel_sizes(int n) {
    std::vector<int> sizes(n);
    for (int i = 0; i < n; ++i) sizes[i] = 2 * i + 1;
    return sizes;
}

FeatureBank::FeatureBank(const FeatureBankConfig& cfg, ParamStore& params, Rng& rng) : cfg_(cfg) {
    if (cfg_.level_channels.empty() || cfg_.kernel_sizes.empty())
        throw Error("feature bank: need at least one level and one kernel size");
    for (int l = 0; l < m(); ++l) {
        const int channels = cfg_.level_channels[l];
        for (int v = 0; v < n(); ++v) {
            const int k = cfg_.kernel_sizes[v];
            const std::string base =
                "bank.l" + std::to_string(l) + ".v" + std::to_string(v) + ".";

            // Averaging taps plus a little noise: starts out as a smoother,
            // stays trainable.
            Mat taps(1, k);
            for (int j = 0; j < k; ++j)
                taps(0, j) = 1.0 / k + rng.uniform(-0.1, 0.1) / k;

            TemporalVariant variant;
            variant.kernel = k;
            variant.taps = params.add(base + "taps", taps);
            variant.proj.w = params.add(base + "proj.w", glorot_init(channels, cfg_.feature_dim, rng));
            variant.proj.b = params.add(base + "proj.b", Mat(1, cfg_.feature_dim));
            variants_.push_back(std::move(variant));
        }
    }
}

std::vector<ad::Var> FeatureBank::build(const std::vector<Mat>& pooled_levels) const {
    if (static_cast<int>(pooled_levels.size()) != m())
        throw Error("feature bank: expected " + std::to_string(m()) + " pooled levels");
    const int t_count = pooled_levels[0].rows();
    for (const Mat& p : pooled_levels)
        if (p.rows() != t_count) throw Error("feature bank: levels disagree on length");

    std::vector<ad::Var> bank;
    bank.reserve(static_cast<std::size_t>(levels()));
    for (int l = 0; l < m(); ++l) {
        const ad::Var seq = ad::constant(pooled_levels[l]);
        for (int v = 0; v < n(); ++v)
            bank.push_back(apply_temporal_variant(variant(l, v), seq));
    }
    return bank;
}

} // namespace gebd
