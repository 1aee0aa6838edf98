#include "gebd/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gebd/ddmnet.hpp"
#include "gebd/hungarian.hpp"

namespace gebd {

namespace {
constexpr double kProbEps = 1e-7;
}

Mat boundary_attentive(const Mat& features, const std::vector<double>& confidences) {
    if (static_cast<std::size_t>(features.rows()) != confidences.size())
        throw Error("boundary_attentive: feature rows and confidences disagree in length");
    Mat out(features.rows(), features.cols());
    for (int i = 0; i < features.rows(); ++i) {
        const double c = confidences[i];
        if (c < 0.0 || c > 1.0) throw Error("boundary_attentive: confidence outside [0, 1]");
        for (int j = 0; j < features.cols(); ++j) out(i, j) = c * features(i, j);
    }
    return out;
}

DecoderConfig decoder_config_from(const PipelineConfig& cfg) {
    DecoderConfig out;
    out.num_queries = cfg.num_queries;
    out.feature_dim = cfg.feature_dim;
    out.heads = cfg.heads;
    out.layers = cfg.decoder_layers;
    out.lambda_loc = cfg.lambda_loc;
    out.lambda_cls = cfg.lambda_cls;
    return out;
}

DecoderNet::DecoderNet(const DecoderConfig& cfg, ParamStore& params, Rng& rng) : cfg_(cfg) {
    const int d = cfg_.feature_dim;
    if (cfg_.num_queries < 1) throw Error("decoder: num_queries must be >= 1");
    if (d % cfg_.heads != 0) throw Error("decoder: feature_dim must be divisible by heads");

    queries_ = params.add("decoder.queries", glorot_init(cfg_.num_queries, d, rng));
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string base = "decoder.layer" + std::to_string(l);
        Layer layer;
        layer.self_attn = make_mha(params, base + ".self", d, cfg_.heads, rng);
        layer.cross_attn = make_mha(params, base + ".cross", d, cfg_.heads, rng);
        layer.ffn1 = make_linear(params, base + ".ffn1", d, cfg_.ffn_hidden, rng);
        layer.ffn2 = make_linear(params, base + ".ffn2", cfg_.ffn_hidden, d, rng);
        layers_.push_back(std::move(layer));
    }
    loc1_ = make_linear(params, "decoder.loc1", d, d, rng);
    loc2_ = make_linear(params, "decoder.loc2", d, 1, rng);
    cls_ = make_linear(params, "decoder.cls", d, 1, rng);
}

DecoderNet::Forward DecoderNet::decode(const Mat& window_features,
                                       std::vector<Mat>* attn_rows) const {
    if (window_features.cols() != cfg_.feature_dim)
        throw Error("decoder: expected feature width " + std::to_string(cfg_.feature_dim));
    if (window_features.rows() < 1) throw Error("decoder: empty window");

    const ad::Var values = ad::constant(window_features);
    ad::Var keys = values;
    if (cfg_.use_positional) {
        keys = ad::add(values, ad::constant(sinusoidal_encoding(window_features.rows(),
                                                                cfg_.feature_dim)));
    }

    ad::Var q = queries_;
    for (const Layer& layer : layers_) {
        q = ad::layer_norm_rows(ad::add(q, ad::mha(layer.self_attn, q, q, q, attn_rows)));
        q = ad::layer_norm_rows(ad::add(q, ad::mha(layer.cross_attn, q, keys, values, attn_rows)));
        q = ad::layer_norm_rows(ad::add(q, layer.ffn2(ad::relu(layer.ffn1(q)))));
    }

    Forward out;
    out.locations = ad::sigmoid(loc2_(ad::relu(loc1_(q))));
    out.p_bc = ad::sigmoid(cls_(q));
    return out;
}

WindowPrediction DecoderNet::predict(const Mat& window_features) const {
    const Forward f = decode(window_features);
    WindowPrediction out;
    for (int i = 0; i < cfg_.num_queries; ++i) {
        out.locations.push_back(f.locations->value(i, 0));
        out.p_bc.push_back(f.p_bc->value(i, 0));
    }
    return out;
}

SetLoss set_prediction_loss(const ad::Var& locations, const ad::Var& p_bc,
                            const std::vector<double>& gt_locations, double lambda_loc,
                            double lambda_cls) {
    const int nq = locations->value.rows();
    const int ng = static_cast<int>(gt_locations.size());
    if (ng > nq)
        throw Error("set_prediction_loss: more ground truths than queries; split the window");

    SetLoss out;
    if (ng > 0) {
        Mat cost(nq, ng);
        for (int q = 0; q < nq; ++q)
            for (int g = 0; g < ng; ++g)
                cost(q, g) = lambda_loc * std::abs(locations->value(q, 0) - gt_locations[g]) +
                             lambda_cls * (1.0 - p_bc->value(q, 0));
        out.assignment = hungarian(cost);
    }
    out.loss = matched_loss(locations, p_bc, gt_locations, out.assignment, lambda_loc, lambda_cls);
    return out;
}

ad::Var matched_loss(const ad::Var& locations, const ad::Var& p_bc,
                     const std::vector<double>& gt_locations,
                     const std::vector<std::pair<int, int>>& assignment, double lambda_loc,
                     double lambda_cls) {
    const int nq = locations->value.rows();
    for (double g : gt_locations)
        if (g < 0.0 || g > 1.0)
            throw Error("set_prediction_loss: ground-truth location outside [0, 1]");

    std::vector<char> matched(static_cast<std::size_t>(nq), 0);
    std::vector<int> m_idx;
    Mat m_gt(static_cast<int>(assignment.size()), 1);
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        const auto [q, g] = assignment[i];
        matched[static_cast<std::size_t>(q)] = 1;
        m_idx.push_back(q);
        m_gt(static_cast<int>(i), 0) = gt_locations[static_cast<std::size_t>(g)];
    }
    std::vector<int> u_idx;
    for (int q = 0; q < nq; ++q)
        if (!matched[static_cast<std::size_t>(q)]) u_idx.push_back(q);

    ad::Var total = ad::constant(Mat(1, 1));
    if (!m_idx.empty()) {
        const ad::Var loc_m = ad::gather_rows(locations, m_idx);
        const ad::Var p_m = ad::clamp(ad::gather_rows(p_bc, m_idx), kProbEps, 1.0 - kProbEps);
        const ad::Var loc_term =
            ad::scale(ad::sum_all(ad::abs_val(ad::sub(loc_m, ad::constant(m_gt)))), lambda_loc);
        const ad::Var cls_term = ad::scale(ad::sum_all(ad::log_val(p_m)), -lambda_cls);
        total = ad::add(total, ad::add(loc_term, cls_term));
    }
    if (!u_idx.empty()) {
        Mat ones(static_cast<int>(u_idx.size()), 1);
        for (std::size_t i = 0; i < u_idx.size(); ++i) ones(static_cast<int>(i), 0) = 1.0;
        const ad::Var p_u = ad::gather_rows(p_bc, u_idx);
        const ad::Var inv = ad::clamp(ad::sub(ad::constant(ones), p_u), kProbEps, 1.0 - kProbEps);
        total = ad::add(total, ad::scale(ad::sum_all(ad::log_val(inv)), -lambda_cls));
    }
    return ad::scale(total, 1.0 / nq);
}

std::vector<BoundaryPrediction> emit_predictions(const WindowPrediction& pred,
                                                 double window_origin, double window_span,
                                                 double theta) {
    if (theta < 0.0 || theta > 1.0) throw Error("emit_predictions: theta must be in [0, 1]");
    std::vector<BoundaryPrediction> out;
    for (std::size_t q = 0; q < pred.p_bc.size(); ++q)
        if (pred.p_bc[q] > theta)
            out.push_back({window_origin + pred.locations[q] * window_span, pred.p_bc[q]});
    std::sort(out.begin(), out.end(),
              [](const BoundaryPrediction& a, const BoundaryPrediction& b) {
                  return a.time < b.time;
              });
    return out;
}

} // namespace gebd
