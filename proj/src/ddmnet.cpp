#include "gebd/ddmnet.hpp"

#include <cassert>
#include <cmath>

namespace gebd {

DenseDifferenceMap compute_ddm(const Mat& seq) {
    const int t = seq.rows();
    const int c = seq.cols();
    if (t < 1 || c < 1) throw Error("compute_ddm: empty sequence");
    for (std::size_t i = 0; i < seq.size(); ++i)
        if (!std::isfinite(seq.data()[i])) throw Error("compute_ddm: non-finite input");

    DenseDifferenceMap m;
    m.channels = c;
    m.t = t;
    m.values.resize(static_cast<std::size_t>(c) * t * t);
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < t; ++i)
            for (int j = 0; j < t; ++j) m.at(ch, i, j) = seq(i, ch) - seq(j, ch);
    return m;
}

Mat sinusoidal_encoding(int t, int d) {
    Mat pe(t, d);
    for (int pos = 0; pos < t; ++pos)
        for (int i = 0; i < d; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(i / 2 * 2) / d);
            pe(pos, i) = (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
        }
    return pe;
}

ad::Var map_attention(const MapAttentionParams& params, const ad::Var& tokens,
                      const ad::Var& seq, std::vector<Mat>* attn_rows) {
    const int d = params.p->value.cols();
    if (seq->value.cols() != params.p->value.rows() || tokens->value.rows() != seq->value.rows())
        throw Error("map_attention: shape mismatch");
    assert(d % params.heads == 0);
    const int dh = d / params.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    const ad::Var q = params.wq(tokens);
    const ad::Var p = ad::matmul(seq, params.p);

    // Logits over keys k_ij = p_i - p_j reduce, per softmax row, to -q_i.p_j;
    // the weighted sum over values p_i - p_j is then p_i - alpha.p.
    ad::Var out;
    for (int h = 0; h < params.heads; ++h) {
        const ad::Var qh = ad::slice_cols(q, h * dh, (h + 1) * dh);
        const ad::Var ph = ad::slice_cols(p, h * dh, (h + 1) * dh);
        const ad::Var logits = ad::scale(ad::matmul(qh, ad::transpose(ph)), -inv_sqrt);
        const ad::Var attn = ad::row_softmax(logits);
        if (attn_rows) attn_rows->push_back(attn->value);
        const ad::Var oh = ad::sub(ph, ad::matmul(attn, ph));
        out = h == 0 ? oh : ad::concat_cols(out, oh);
    }
    return out;
}

ad::Var map_attention_reference(const MapAttentionParams& params, const ad::Var& tokens,
                                const ad::Var& seq) {
    const int t = seq->value.rows();
    const int d = params.p->value.cols();
    if (seq->value.cols() != params.p->value.rows() || tokens->value.rows() != t)
        throw Error("map_attention: shape mismatch");
    assert(d % params.heads == 0);
    const int dh = d / params.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    const ad::Var q = params.wq(tokens);

    ad::Var out;
    for (int i = 0; i < t; ++i) {
        const ad::Var diffs =
            ad::sub(ad::gather_rows(seq, std::vector<int>(static_cast<std::size_t>(t), i)), seq);
        const ad::Var keys = ad::matmul(diffs, params.p); // t x d, row j = proj(f_i - f_j)
        const ad::Var qi = ad::slice_rows(q, i, i + 1);

        ad::Var row;
        for (int h = 0; h < params.heads; ++h) {
            const ad::Var qh = ad::slice_cols(qi, h * dh, (h + 1) * dh);
            const ad::Var kh = ad::slice_cols(keys, h * dh, (h + 1) * dh);
            const ad::Var logits = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
            const ad::Var attn = ad::row_softmax(logits);
            const ad::Var oh = ad::matmul(attn, kh);
            row = h == 0 ? oh : ad::concat_cols(row, oh);
        }
        out = i == 0 ? row : ad::concat_rows(out, row);
    }
    return out;
}

ad::Var intra_modal_attention(const IntraModalParams& params, const ad::Var& tokens,
                              std::vector<Mat>* attn_rows) {
    return ad::mha(params.attn, params.queries, tokens, tokens, attn_rows);
}

ad::Var cross_modal_attention(const CrossModalParams& params, const ad::Var& appearance,
                              const ad::Var& motion, std::vector<Mat>* attn_rows) {
    if (!appearance->value.same_shape(motion->value))
        throw Error("cross_modal_attention: stream shapes differ");
    const ad::Var ca =
        ad::add(appearance, ad::mha(params.a_from_m, appearance, motion, motion, attn_rows));
    const ad::Var cm =
        ad::add(motion, ad::mha(params.m_from_a, motion, appearance, appearance, attn_rows));
    return params.fuse(ad::concat_cols(ad::mean_rows(ca), ad::mean_rows(cm)));
}

ad::Var confidence_head(const ConfidenceHeadParams& params, const ad::Var& fused) {
    return ad::sigmoid(params.h2(ad::relu(params.h1(fused))));
}

int label_frame(double frame_time, const AnnotatedVideo& gt, double radius) {
    if (radius <= 0.0) throw Error("label_frame: radius must be > 0");
    for (double b : gt.boundaries)
        if (std::abs(frame_time - b) <= radius) return 1;
    return 0;
}

namespace {
constexpr double kProbEps = 1e-7;
}

double local_loss(double pred, int label) {
    const double p = std::min(std::max(pred, kProbEps), 1.0 - kProbEps);
    return label ? -std::log(p) : -std::log(1.0 - p);
}

ad::Var local_loss(const ad::Var& pred, int label, double weight) {
    const ad::Var p = ad::clamp(pred, kProbEps, 1.0 - kProbEps);
    Mat one(1, 1);
    one(0, 0) = 1.0;
    const ad::Var term = label ? ad::log_val(p) : ad::log_val(ad::sub(ad::constant(one), p));
    return ad::scale(term, -weight);
}

std::vector<BoundaryPrediction> extract_boundaries(const BoundaryConfidenceTrack& track,
                                                   double tau) {
    const int n = static_cast<int>(track.confidence.size());
    if (n == 0) throw Error("extract_boundaries: empty track");
    if (track.times.size() != track.confidence.size())
        throw Error("extract_boundaries: times and confidences disagree in length");
    if (tau < 0.0 || tau > 1.0) throw Error("extract_boundaries: tau must be in [0, 1]");
    for (int i = 0; i < n; ++i) {
        if (track.confidence[i] < 0.0 || track.confidence[i] > 1.0)
            throw Error("extract_boundaries: confidence outside [0, 1]");
        if (i > 0 && track.times[i] <= track.times[i - 1])
            throw Error("extract_boundaries: timestamps must be strictly increasing");
    }

    // Collapse plateaus to their earliest index; a run is a maximum when both
    // outside neighbors (where present) are strictly lower.
    std::vector<BoundaryPrediction> out;
    int a = 0;
    while (a < n) {
        int b = a;
        while (b + 1 < n && track.confidence[b + 1] == track.confidence[a]) ++b;
        const double v = track.confidence[a];
        const bool left_ok = a == 0 || track.confidence[a - 1] < v;
        const bool right_ok = b == n - 1 || track.confidence[b + 1] < v;
        if (left_ok && right_ok && v >= tau) out.push_back({track.times[a], v});
        a = b + 1;
    }
    return out;
}

LocalModelConfig local_config_from(const PipelineConfig& cfg,
                                   const std::vector<int>& level_channels) {
    if (static_cast<int>(level_channels.size()) != cfg.m)
        throw Error("local model: expected " + std::to_string(cfg.m) + " level channel counts");
    LocalModelConfig out;
    out.level_channels = level_channels;
    out.n = cfg.n;
    out.feature_dim = cfg.feature_dim;
    out.heads = cfg.heads;
    out.omega = cfg.omega;
    return out;
}

LocalModel::LocalModel(const LocalModelConfig& cfg, ParamStore& params, Rng& rng)
    : cfg_(cfg),
      bank_([&] {
          FeatureBankConfig bank_cfg;
          bank_cfg.level_channels = cfg.level_channels;
          bank_cfg.kernel_sizes = default_kernel_sizes(cfg.n);
          bank_cfg.feature_dim = cfg.feature_dim;
          return bank_cfg;
      }(), params, rng) {
    const int d = cfg_.feature_dim;
    if (d % cfg_.heads != 0) throw Error("local model: feature_dim must be divisible by heads");
    if (cfg_.omega < 1) throw Error("local model: omega must be >= 1");
    const int hidden = cfg_.head_hidden > 0 ? cfg_.head_hidden : d;

    level_weights_ = params.add("local.level_weights", Mat(1, bank_.levels()));
    map_.wq = make_linear(params, "local.map.q", d, d, rng);
    map_.p = params.add("local.map.p", glorot_init(d, d, rng));
    map_.heads = cfg_.heads;
    intra_appearance_.queries = params.add("local.intra_a.queries", glorot_init(cfg_.omega, d, rng));
    intra_appearance_.attn = make_mha(params, "local.intra_a.attn", d, cfg_.heads, rng);
    intra_motion_.queries = params.add("local.intra_m.queries", glorot_init(cfg_.omega, d, rng));
    intra_motion_.attn = make_mha(params, "local.intra_m.attn", d, cfg_.heads, rng);
    cross_.a_from_m = make_mha(params, "local.cross.a_from_m", d, cfg_.heads, rng);
    cross_.m_from_a = make_mha(params, "local.cross.m_from_a", d, cfg_.heads, rng);
    cross_.fuse = make_linear(params, "local.cross.fuse", 2 * d, d, rng);
    head_.h1 = make_linear(params, "local.head.h1", d, hidden, rng);
    head_.h2 = make_linear(params, "local.head.h2", hidden, 1, rng);
}

LocalModel::Forward LocalModel::forward(const std::vector<Mat>& pooled_levels,
                                        std::vector<Mat>* attn_rows) const {
    const auto seqs = bank_.build(pooled_levels);

    const ad::Var weights = ad::row_softmax(level_weights_);
    ad::Var fused_seq;
    for (int l = 0; l < bank_.levels(); ++l) {
        const ad::Var term = ad::scale_by(seqs[l], ad::slice_cols(weights, l, l + 1));
        fused_seq = l == 0 ? term : ad::add(fused_seq, term);
    }

    const int t = fused_seq->value.rows();
    ad::Var tokens = fused_seq;
    ad::Var pe;
    if (cfg_.use_positional) {
        pe = ad::constant(sinusoidal_encoding(t, cfg_.feature_dim));
        tokens = ad::add(fused_seq, pe);
    }

    const ad::Var motion = cfg_.reference_map_attention
                               ? map_attention_reference(map_, tokens, fused_seq)
                               : map_attention(map_, tokens, fused_seq, attn_rows);
    const ad::Var motion_tokens = cfg_.use_positional ? ad::add(motion, pe) : motion;

    const ad::Var za = intra_modal_attention(intra_appearance_, tokens, attn_rows);
    const ad::Var zm = intra_modal_attention(intra_motion_, motion_tokens, attn_rows);

    Forward out;
    out.fused = cross_modal_attention(cross_, za, zm, attn_rows);
    out.confidence = confidence_head(head_, out.fused);
    return out;
}

} // namespace gebd
