#pragma once

#include <utility>
#include <vector>

#include "gebd/autodiff.hpp"
#include "gebd/datamodel.hpp"
#include "gebd/mat.hpp"
#include "gebd/params.hpp"

namespace gebd {

// Scales feature row i by confidence[i], making boundary-adjacent rows loud
// and the rest quiet before global decoding.
Mat boundary_attentive(const Mat& features, const std::vector<double>& confidences);

struct DecoderConfig {
    int num_queries = 10;
    int feature_dim = 64;
    int heads = 4;
    int layers = 2;
    int ffn_hidden = 256;
    double lambda_loc = 5.0;
    double lambda_cls = 1.0;
    bool use_positional = true; // zeroed in permutation-invariance tests
};

DecoderConfig decoder_config_from(const PipelineConfig& cfg);

// Per-query decoded window content: normalized locations and boundary
// probabilities, both in (0, 1).
struct WindowPrediction {
    std::vector<double> locations;
    std::vector<double> p_bc;
};

// Transformer decoder over learnable boundary queries: per layer, query
// self-attention, cross-attention over the window time steps (sinusoidal
// encodings on the keys), and a position-wise feed-forward block, each with
// residual + row normalization. Two heads squash each query embedding to a
// location and a boundary probability.
class DecoderNet {
public:
    struct Forward {
        ad::Var locations; // num_queries x 1
        ad::Var p_bc;      // num_queries x 1
    };

    DecoderNet(const DecoderConfig& cfg, ParamStore& params, Rng& rng);

    Forward decode(const Mat& window_features, std::vector<Mat>* attn_rows = nullptr) const;
    WindowPrediction predict(const Mat& window_features) const;

    const DecoderConfig& config() const { return cfg_; }

private:
    struct Layer {
        ad::MhaParams self_attn;
        ad::MhaParams cross_attn;
        ad::Linear ffn1, ffn2;
    };

    DecoderConfig cfg_;
    ad::Var queries_; // num_queries x D
    std::vector<Layer> layers_;
    ad::Linear loc1_, loc2_; // D -> D -> 1
    ad::Linear cls_;         // D -> 1
};

// One-to-one query/ground-truth assignment plus the differentiable loss.
struct SetLoss {
    ad::Var loss;                                // 1 x 1
    std::vector<std::pair<int, int>> assignment; // (query, gt), sorted by query
};

// Matching cost lambda_loc*|loc_q - gt_g| + lambda_cls*(1 - p_q); matched
// pairs pay location distance and -log p, unmatched queries pay -log(1 - p);
// the sum is averaged over num_queries. Requires #gt <= num_queries.
SetLoss set_prediction_loss(const ad::Var& locations, const ad::Var& p_bc,
                            const std::vector<double>& gt_locations, double lambda_loc,
                            double lambda_cls);

// The loss under a caller-chosen assignment (gradient checks hold the
// matching fixed across perturbations).
ad::Var matched_loss(const ad::Var& locations, const ad::Var& p_bc,
                     const std::vector<double>& gt_locations,
                     const std::vector<std::pair<int, int>>& assignment, double lambda_loc,
                     double lambda_cls);

// Queries with p_bc > theta become timestamped predictions within the
// window, sorted by time.
std::vector<BoundaryPrediction> emit_predictions(const WindowPrediction& pred,
                                                 double window_origin, double window_span,
                                                 double theta);

} // namespace gebd
