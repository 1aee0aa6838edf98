#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gebd/autodiff.hpp"
#include "gebd/mat.hpp"
#include "gebd/random.hpp"

namespace gebd {

// Ordered, named registry of learnable parameters. The insertion order fixes
// both the optimizer state layout and the checkpoint layout, so training is
// reproducible and checkpoints restore exactly.
class ParamStore {
public:
    ad::Var add(const std::string& name, Mat init);
    const std::vector<std::pair<std::string, ad::Var>>& items() const { return items_; }
    const ad::Var* find(const std::string& name) const;

    // f64 tensor container with a payload hash.
    void save(const std::string& path) const;
    void load(const std::string& path);
    std::uint64_t content_hash() const;

private:
    std::vector<std::pair<std::string, ad::Var>> items_;
};

// Variance-scaled random init: N(0, sqrt(2 / (fan_in + fan_out))).
Mat glorot_init(int rows, int cols, Rng& rng);
Mat normal_init(int rows, int cols, double sigma, Rng& rng);

// Registers an in -> out affine layer at <base>.w / <base>.b
// (variance-scaled weights, zero bias).
ad::Linear make_linear(ParamStore& params, const std::string& base, int in, int out, Rng& rng);

// Registers the four projections of a width-d attention block at
// <base>.{q,k,v,o}.{w,b}.
ad::MhaParams make_mha(ParamStore& params, const std::string& base, int d, int heads, Rng& rng);

// Adam with optional decoupled weight decay (AdamW when weight_decay > 0).
class AdamOptimizer {
public:
    AdamOptimizer(ParamStore& params, double lr, double weight_decay = 0.0,
                  double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(const ad::GradSink& grads);
    void set_lr(double lr) { lr_ = lr; }

private:
    ParamStore& params_;
    double lr_, weight_decay_, beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<Mat> m_, v_;
};

} // namespace gebd
