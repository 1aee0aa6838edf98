#pragma once

#include <string>
#include <vector>

#include "gebd/autodiff.hpp"
#include "gebd/datamodel.hpp"
#include "gebd/featbank.hpp"
#include "gebd/mat.hpp"
#include "gebd/params.hpp"

namespace gebd {

// Signed pairwise differences of a T x C sequence: values[c,i,j] = f[i,c] - f[j,c].
// Zero diagonal and antisymmetry hold exactly.
struct DenseDifferenceMap {
    int channels = 0;
    int t = 0;
    std::vector<double> values; // [c][i][j]

    double at(int c, int i, int j) const {
        return values[(static_cast<std::size_t>(c) * t + i) * t + j];
    }
    double& at(int c, int i, int j) {
        return values[(static_cast<std::size_t>(c) * t + i) * t + j];
    }
};

DenseDifferenceMap compute_ddm(const Mat& seq);

// Fixed sinusoidal positional encoding, T x D.
Mat sinusoidal_encoding(int t, int d);

// --- attention cascade ----------------------------------------------------

struct MapAttentionParams {
    ad::Linear wq; // D -> D query projection, fed by the token stream
    ad::Var p;     // D x D bias-free projection of difference vectors
    int heads = 1;
};

// Row i attends over the T difference vectors {seq[i] - seq[j]}_j, projected
// by `p`; queries come from tokens row i. Returns T x D. The difference
// tensor is never materialized: with k_ij = p_i - p_j the softmax is
// row-shift invariant, so logits reduce to -q_i.p_j and the weighted sum to
// p_i - alpha.p. One T x T attention matrix per head is appended to
// `attn_rows` when non-null.
ad::Var map_attention(const MapAttentionParams& params, const ad::Var& tokens,
                      const ad::Var& seq, std::vector<Mat>* attn_rows = nullptr);

// Same contract, materializing each row's difference block; O(T^2) graph
// kept as the reference the factored path is checked against.
ad::Var map_attention_reference(const MapAttentionParams& params, const ad::Var& tokens,
                                const ad::Var& seq);

struct IntraModalParams {
    ad::Var queries; // omega x D, learnable
    ad::MhaParams attn;
};

// omega x D summary of a token sequence: learnable queries against the
// tokens, no residual (so identical tokens collapse to their value
// projection).
ad::Var intra_modal_attention(const IntraModalParams& params, const ad::Var& tokens,
                              std::vector<Mat>* attn_rows = nullptr);

struct CrossModalParams {
    ad::MhaParams a_from_m; // appearance queries attend to motion tokens
    ad::MhaParams m_from_a;
    ad::Linear fuse; // 2D -> D
};

// Co-attention between the two omega x D streams, residual per stream, mean
// over queries, concat, project. Returns 1 x D.
ad::Var cross_modal_attention(const CrossModalParams& params, const ad::Var& appearance,
                              const ad::Var& motion, std::vector<Mat>* attn_rows = nullptr);

struct ConfidenceHeadParams {
    ad::Linear h1; // D -> hidden
    ad::Linear h2; // hidden -> 1
};

ad::Var confidence_head(const ConfidenceHeadParams& params, const ad::Var& fused);

// --- training pieces ------------------------------------------------------

// 1 iff a ground-truth boundary lies within `radius` seconds of frame_time.
int label_frame(double frame_time, const AnnotatedVideo& gt, double radius);

// Binary cross-entropy with the probability clamped to [eps, 1-eps].
double local_loss(double pred, int label);
ad::Var local_loss(const ad::Var& pred, int label, double weight = 1.0);

// --- confidence track -> boundary predictions ------------------------------

struct BoundaryConfidenceTrack {
    std::string id;
    std::vector<double> times;      // seconds, strictly increasing
    std::vector<double> confidence; // in [0, 1], same length
};

// Local maxima of the track with confidence >= tau. Plateaus emit their
// earliest index; endpoints qualify when >= their single neighbor.
std::vector<BoundaryPrediction> extract_boundaries(const BoundaryConfidenceTrack& track,
                                                   double tau);

// --- the assembled local model ---------------------------------------------

struct LocalModelConfig {
    std::vector<int> level_channels; // per spatial level, m entries
    int n = 3;                       // temporal variants per level
    int feature_dim = 64;
    int heads = 4;
    int omega = 5;
    int head_hidden = 0;        // confidence-head width, 0 = feature_dim
    bool use_positional = true; // zeroed in reversal-invariance tests
    bool reference_map_attention = false;
};

LocalModelConfig local_config_from(const PipelineConfig& cfg,
                                   const std::vector<int>& level_channels);

// Pooled clip levels -> fused clip representation + boundary confidence.
class LocalModel {
public:
    struct Forward {
        ad::Var fused;      // 1 x D
        ad::Var confidence; // 1 x 1, in (0, 1)
    };

    LocalModel(const LocalModelConfig& cfg, ParamStore& params, Rng& rng);

    // pooled_levels: m matrices, each T x C_l, the spatially pooled clip.
    Forward forward(const std::vector<Mat>& pooled_levels,
                    std::vector<Mat>* attn_rows = nullptr) const;

    const LocalModelConfig& config() const { return cfg_; }
    const FeatureBank& bank() const { return bank_; }
    const ad::Var& level_weights() const { return level_weights_; }
    MapAttentionParams& map_params() { return map_; }

private:
    LocalModelConfig cfg_;
    FeatureBank bank_;
    ad::Var level_weights_; // 1 x L
    MapAttentionParams map_;
    IntraModalParams intra_appearance_, intra_motion_;
    CrossModalParams cross_;
    ConfidenceHeadParams head_;
};

} // namespace gebd
