#include "gebd/params.hpp"

#include <cmath>

#include "gebd/datamodel.hpp"
#include "gebd/tensorfile.hpp"

namespace gebd {

ad::Var ParamStore::add(const std::string& name, Mat init) {
    for (const auto& [existing, _] : items_)
        if (existing == name) throw Error("duplicate parameter name: " + name);
    ad::Var v = ad::param(std::move(init));
    items_.emplace_back(name, v);
    return v;
}

const ad::Var* ParamStore::find(const std::string& name) const {
    for (const auto& [n, v] : items_)
        if (n == name) return &v;
    return nullptr;
}

void ParamStore::save(const std::string& path) const {
    TensorFile tf;
    for (const auto& [name, v] : items_) {
        const Mat& m = v->value;
        std::vector<double> data(m.data(), m.data() + m.size());
        tf.add_f64(name, {m.rows(), m.cols()}, std::move(data));
    }
    tf.write(path);
}

void ParamStore::load(const std::string& path) {
    const TensorFile tf = TensorFile::read(path);
    for (auto& [name, v] : items_) {
        const TensorEntry& e = tf.get(name);
        if (e.dtype != "f64" || e.shape.size() != 2 || e.shape[0] != v->value.rows() ||
            e.shape[1] != v->value.cols())
            throw Error("checkpoint tensor '" + name + "' has unexpected dtype or shape");
        for (std::size_t i = 0; i < e.f64.size(); ++i) v->value.data()[i] = e.f64[i];
    }
}

std::uint64_t ParamStore::content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, v] : items_) {
        h = fnv1a(name.data(), name.size(), h);
        h = fnv1a(v->value.data(), v->value.size() * sizeof(double), h);
    }
    return h;
}

Mat glorot_init(int rows, int cols, Rng& rng) {
    const double sigma = std::sqrt(2.0 / (rows + cols));
    return normal_init(rows, cols, sigma, rng);
}

Mat normal_init(int rows, int cols, double sigma, Rng& rng) {
    Mat m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, sigma);
    return m;
}

AdamOptimizer::AdamOptimizer(ParamStore& params, double lr, double weight_decay, double beta1,
                             double beta2, double eps)
    : params_(params), lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
    for (const auto& [name, v] : params_.items()) {
        m_.emplace_back(v->value.rows(), v->value.cols());
        v_.emplace_back(v->value.rows(), v->value.cols());
    }
}

void AdamOptimizer::step(const ad::GradSink& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const auto& items = params_.items();
    for (std::size_t p = 0; p < items.size(); ++p) {
        const Mat* g = grads.find(items[p].second.get());
        if (!g) continue; // parameter unused by this batch's graph
        Mat& theta = items[p].second->value;
        Mat& m = m_[p];
        Mat& v = v_[p];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = g->data()[i];
            m.data()[i] = beta1_ * m.data()[i] + (1.0 - beta1_) * gi;
            v.data()[i] = beta2_ * v.data()[i] + (1.0 - beta2_) * gi * gi;
            const double mhat = m.data()[i] / bc1;
            const double vhat = v.data()[i] / bc2;
            double upd = lr_ * mhat / (std::sqrt(vhat) + eps_);
            if (weight_decay_ > 0.0) upd += lr_ * weight_decay_ * theta.data()[i];
            theta.data()[i] -= upd;
        }
    }
}

ad::Linear make_linear(ParamStore& params, const std::string& base, int in, int out, Rng& rng) {
    ad::Linear layer;
    layer.w = params.add(base + ".w", glorot_init(in, out, rng));
    layer.b = params.add(base + ".b", Mat(1, out));
    return layer;
}

ad::MhaParams make_mha(ParamStore& params, const std::string& base, int d, int heads, Rng& rng) {
    ad::MhaParams p;
    p.q = make_linear(params, base + ".q", d, d, rng);
    p.k = make_linear(params, base + ".k", d, d, rng);
    p.v = make_linear(params, base + ".v", d, d, rng);
    p.o = make_linear(params, base + ".o", d, d, rng);
    p.heads = heads;
    return p;
}

} // namespace gebd
