#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "gebd/mat.hpp"

namespace gebd::ad {

class Node;
using Var = std::shared_ptr<Node>;

// Parameter gradients are accumulated here instead of on the nodes, so
// several forward graphs (e.g. the clips of a batch, each on its own thread)
// can run against shared parameters without racing. Sinks are merged in a
// fixed order afterwards, which keeps training bit-deterministic regardless
// of the thread count.
class GradSink {
public:
    void add(const Node* param, const Mat& g);
    const Mat* find(const Node* param) const;
    void merge(const GradSink& other);
    void clear() { grads_.clear(); }

private:
    std::unordered_map<const Node*, Mat> grads_;
};

class Node {
public:
    Mat value;
    Mat grad; // used for intermediates only; parameter grads go to the sink
    bool is_param = false;
    bool needs_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&, GradSink&)> backward_fn;
};

Var constant(Mat value);
Var param(Mat value);

// dL/droot is seeded with 1; root must be 1x1.
void backward(const Var& root, GradSink& sink);

double scalar(const Var& v);

// --- primitive ops -------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var scale_by(const Var& a, const Var& s); // s is 1x1
Var add_rowvec(const Var& a, const Var& v); // v is 1xC, broadcast over rows
Var mul_rowvec(const Var& a, const Var& v);
Var mul_colvec(const Var& a, const Var& v); // v is Nx1, scales each row
Var row_softmax(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var abs_val(const Var& a);
Var log_val(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var layer_norm_rows(const Var& a, double eps = 1e-6);
Var transpose(const Var& a);
Var concat_cols(const Var& a, const Var& b);
Var concat_rows(const Var& a, const Var& b);
Var slice_cols(const Var& a, int c0, int c1);
Var slice_rows(const Var& a, int r0, int r1);
Var sum_all(const Var& a);  // 1x1
Var mean_rows(const Var& a); // 1xC mean over rows
Var gather_rows(const Var& a, std::vector<int> idx); // rows may repeat

// --- compositions --------------------------------------------------------

struct Linear {
    Var w; // in x out
    Var b; // 1 x out
    Var operator()(const Var& x) const { return add_rowvec(matmul(x, w), b); }
};

struct MhaParams {
    Linear q, k, v, o;
    int heads = 1;
};

// Standard multi-head attention. When `attn_rows` is non-null, every
// per-head softmax matrix is appended to it (used by the normalization
// checks).
Var mha(const MhaParams& p, const Var& queries, const Var& keys, const Var& values,
        std::vector<Mat>* attn_rows = nullptr);

} // namespace gebd::ad
