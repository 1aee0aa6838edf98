#include "gebd/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "gebd/kernels.hpp"

namespace gebd::ad {

void GradSink::add(const Node* param, const Mat& g) {
    auto it = grads_.find(param);
    if (it == grads_.end())
        grads_.emplace(param, g);
    else
        it->second += g;
}

const Mat* GradSink::find(const Node* param) const {
    auto it = grads_.find(param);
    return it == grads_.end() ? nullptr : &it->second;
}

void GradSink::merge(const GradSink& other) {
    for (const auto& [node, g] : other.grads_) add(node, g);
}

namespace {

Var make_node(Mat value, std::vector<Var> parents,
              std::function<void(Node&, GradSink&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->needs_grad) n->needs_grad = true;
    if (n->needs_grad) n->backward_fn = std::move(backward_fn);
    return n;
}

void accum(const Var& p, const Mat& delta, GradSink& sink) {
    if (!p->needs_grad) return;
    if (p->is_param) {
        sink.add(p.get(), delta);
        return;
    }
    if (p->grad.empty())
        p->grad = delta;
    else
        p->grad += delta;
}

void accum_move(const Var& p, Mat&& delta, GradSink& sink) {
    if (!p->needs_grad) return;
    if (p->is_param) {
        sink.add(p.get(), delta);
        return;
    }
    if (p->grad.empty())
        p->grad = std::move(delta);
    else
        p->grad += delta;
}

} // namespace

Var constant(Mat value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return n;
}

Var param(Mat value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->is_param = true;
    n->needs_grad = true;
    return n;
}

void backward(const Var& root, GradSink& sink) {
    assert(root->value.rows() == 1 && root->value.cols() == 1);
    if (!root->needs_grad) return;

    // Topological order over the needs-grad subgraph, iterative DFS.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next].get();
            ++next;
            if (p->needs_grad && !p->is_param && seen.insert(p).second)
                stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->grad = Mat::full(1, 1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n, sink);
    }
}

double scalar(const Var& v) {
    assert(v->value.rows() == 1 && v->value.cols() == 1);
    return v->value(0, 0);
}

Var matmul(const Var& a, const Var& b) {
    Mat out = kernels::matmul(a->value, b->value);
    return make_node(std::move(out), {a, b}, [](Node& n, GradSink& sink) {
        const Var& a = n.parents[0];
        const Var& b = n.parents[1];
        if (a->needs_grad) accum_move(a, kernels::matmul_bt(n.grad, b->value), sink);
        if (b->needs_grad) accum_move(b, kernels::matmul_at(a->value, n.grad), sink);
    });
}

Var add(const Var& a, const Var& b) {
    assert(a->value.same_shape(b->value));
    Mat out = a->value;
    out += b->value;
    return make_node(std::move(out), {a, b}, [](Node& n, GradSink& sink) {
        accum(n.parents[0], n.grad, sink);
        accum(n.parents[1], n.grad, sink);
    });
}

Var sub(const Var& a, const Var& b) {
    assert(a->value.same_shape(b->value));
    Mat out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b->value.data()[i];
    return make_node(std::move(out), {a, b}, [](Node& n, GradSink& sink) {
        accum(n.parents[0], n.grad, sink);
        Mat neg = n.grad;
        for (std::size_t i = 0; i < neg.size(); ++i) neg.data()[i] = -neg.data()[i];
        accum_move(n.parents[1], std::move(neg), sink);
    });
}

Var hadamard(const Var& a, const Var& b) {
    assert(a->value.same_shape(b->value));
    Mat out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b->value.data()[i];
    return make_node(std::move(out), {a, b}, [](Node& n, GradSink& sink) {
        const Var& a = n.parents[0];
        const Var& b = n.parents[1];
        if (a->needs_grad) {
            Mat da = n.grad;
            for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] *= b->value.data()[i];
            accum_move(a, std::move(da), sink);
        }
        if (b->needs_grad) {
            Mat db = n.grad;
            for (std::size_t i = 0; i < db.size(); ++i) db.data()[i] *= a->value.data()[i];
            accum_move(b, std::move(db), sink);
        }
    });
}

Var scale(const Var& a, double s) {
    Mat out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= s;
    return make_node(std::move(out), {a}, [s](Node& n, GradSink& sink) {
        Mat da = n.grad;
        for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] *= s;
        accum_move(n.parents[0], std::move(da), sink);
    });
}

Var scale_by(const Var& a, const Var& s) {
    assert(s->value.rows() == 1 && s->value.cols() == 1);
    const double sv = s->value(0, 0);
    Mat out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= sv;
    return make_node(std::move(out), {a, s}, [sv](Node& n, GradSink& sink) {
        const Var& a = n.parents[0];
        const Var& s = n.parents[1];
        if (a->needs_grad) {
            Mat da = n.grad;
            for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] *= sv;
            accum_move(a, std::move(da), sink);
        }
        if (s->needs_grad) {
            double ds = 0.0;
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                ds += n.grad.data()[i] * a->value.data()[i];
            accum(s, Mat::full(1, 1, ds), sink);
        }
    });
}

Var add_rowvec(const Var& a, const Var& v) {
    assert(v->value.rows() == 1 && v->value.cols() == a->value.cols());
    Mat out = a->value;
    const int c = out.cols();
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < c; ++j) out(i, j) += v->value(0, j);
    return make_node(std::move(out), {a, v}, [](Node& n, GradSink& sink) {
        accum(n.parents[0], n.grad, sink);
        const Var& v = n.parents[1];
        if (v->needs_grad) {
            Mat dv(1, n.grad.cols());
            for (int i = 0; i < n.grad.rows(); ++i)
                for (int j = 0; j < n.grad.cols(); ++j) dv(0, j) += n.grad(i, j);
            accum_move(v, std::move(dv), sink);
        }
    });
}

Var mul_rowvec(const Var& a, const Var& v) {
    assert(v->value.rows() == 1 && v->value.cols() == a->value.cols());
    Mat out = a->value;
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out(i, j) *= v->value(0, j);
    return make_node(std::move(out), {a, v}, [](Node& n, GradSink& sink) {
        const Var& a = n.parents[0];
        const Var& v = n.parents[1];
        if (a->needs_grad) {
            Mat da = n.grad;
            for (int i = 0; i < da.rows(); ++i)
                for (int j = 0; j < da.cols(); ++j) da(i, j) *= v->value(0, j);
            accum_move(a, std::move(da), sink);
        }
        if (v->needs_grad) {
            Mat dv(1, n.grad.cols());
            for (int i = 0; i < n.grad.rows(); ++i)
                for (int j = 0; j < n.grad.cols(); ++j) dv(0, j) += n.grad(i, j) * a->value(i, j);
            accum_move(v, std::move(dv), sink);
        }
    });
}

Var mul_colvec(const Var& a, const Var& v) {
    assert(v->value.cols() == 1 && v->value.rows() == a->value.rows());
    Mat out = a->value;
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out(i, j) *= v->value(i, 0);
    return make_node(std::move(out), {a, v}, [](Node& n, GradSink& sink) {
        const Var& a = n.parents[0];
        const Var& v = n.parents[1];
        if (a->needs_grad) {
            Mat da = n.grad;
            for (int i = 0; i < da.rows(); ++i)
                for (int j = 0; j < da.cols(); ++j) da(i, j) *= v->value(i, 0);
            accum_move(a, std::move(da), sink);
        }
        if (v->needs_grad) {
            Mat dv(n.grad.rows(), 1);
            for (int i = 0; i < n.grad.rows(); ++i)
                for (int j = 0; j < n.grad.cols(); ++j) dv(i, 0) += n.grad(i, j) * a->value(i, j);
            accum_move(v, std::move(dv), sink);
        }
    });
}

Var row_softmax(const Var& a) {
    Mat out = kernels::softmax_rows(a->value);
    return make_node(std::move(out), {a}, [](Node& n, GradSink& sink) {
        const Mat& p = n.value;
        Mat da(p.rows(), p.cols());
        for (int i = 0; i < p.rows(); ++i) {
            double dot = 0.0;
            for (int j = 0; j < p.cols(); ++j) dot += n.grad(i, j) * p(i, j);
            for (int j = 0; j < p.cols(); ++j) da(i, j) = p(i, j) * (n.grad(i, j) - dot);
        }
        accum_move(n.parents[0], std::move(da), sink);
    });
}

Var sigmoid(const Var& a) {
    Mat out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = 1.0 / (1.0 + std::exp(-out.data()[i]));
    return make_node(std::move(out), {a}, [](Node& n, GradSink& sink) {
        Mat da = n.grad;
        for (std::size_t i = 0; i < da.size(); ++i) {
            const double y = n.value.data()[i];
            da.data()[i] *= y * (1.0 - y);
        }
        accum_move(n.parents[0], std::move(da), sink);
    });
}

Var relu(const Var& a) {
    Mat out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out.data()[i] < 0.0) out.data()[i] = 0.0;
    return make_node(std::move(out), {a}, [](Node& n, GradSink& sink) {
        Mat da = n.grad;
        for (std::size_t i = 0; i < da.size(); ++i)
            if (n.parents[0]->value.data()[i] <= 0.0) da.data()[i] = 0.0;
        accum_move(n.parents[0], std::move(da), sink);
    });
}

Var abs_val(const Var& a) {
    Mat out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::fabs(out.data()[i]);
    return make_node(std::move(out), {a}, [](Node& n, GradSink& sink) {
        Mat da = n.grad;
        for (std::size_t i = 0; i < da.size(); ++i) {
            const double x = n.parents[0]->value.data()[i];
            da.data()[i] *= (x > 0.0) ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        }
        accum_move(n.parents[0], std::move(da), sink);
    });
}

Var log_val(const Var& a) {
    Mat out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::log(out.data()[i]);
    return make_node(std::move(out), {a}, [](Node& n, GradSink& sink) {
        Mat da = n.grad;
        for (std::size_t i = 0; i < da.size(); ++i)
            da.data()[i] /= n.parents[0]->value.data()[i];
        accum_move(n.parents[0], std::move(da), sink);
    });
}

Var clamp(const Var& a, double lo, double hi) {
    Mat out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.data()[i] < lo) out.data()[i] = lo;
        if (out.data()[i] > hi) out.data()[i] = hi;
    }
    return make_node(std::move(out), {a}, [lo, hi](Node& n, GradSink& sink) {
        Mat da = n.grad;
        for (std::size_t i = 0; i < da.size(); ++i) {
            const double x = n.parents[0]->value.data()[i];
            if (x < lo || x > hi) da.data()[i] = 0.0;
        }
        accum_move(n.parents[0], std::move(da), sink);
    });
}

Var layer_norm_rows(const Var& a, double eps) {
    const Mat& x = a->value;
    Mat out(x.rows(), x.cols());
    const int c = x.cols();
    for (int i = 0; i < x.rows(); ++i) {
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += x(i, j);
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            const double d = x(i, j) - mu;
            var += d * d;
        }
        var /= c;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < c; ++j) out(i, j) = (x(i, j) - mu) * inv;
    }
    return make_node(std::move(out), {a}, [eps](Node& n, GradSink& sink) {
        const Mat& x = n.parents[0]->value;
        const Mat& y = n.value;
        const int c = x.cols();
        Mat da(x.rows(), c);
        for (int i = 0; i < x.rows(); ++i) {
            double mu = 0.0;
            for (int j = 0; j < c; ++j) mu += x(i, j);
            mu /= c;
            double var = 0.0;
            for (int j = 0; j < c; ++j) {
                const double d = x(i, j) - mu;
                var += d * d;
            }
            var /= c;
            const double inv = 1.0 / std::sqrt(var + eps);
            double gmean = 0.0, gymean = 0.0;
            for (int j = 0; j < c; ++j) {
                gmean += n.grad(i, j);
                gymean += n.grad(i, j) * y(i, j);
            }
            gmean /= c;
            gymean /= c;
            for (int j = 0; j < c; ++j)
                da(i, j) = inv * (n.grad(i, j) - gmean - y(i, j) * gymean);
        }
        accum_move(n.parents[0], std::move(da), sink);
    });
}

Var transpose(const Var& a) {
    const Mat& x = a->value;
    Mat out(x.cols(), x.rows());
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) out(j, i) = x(i, j);
    return make_node(std::move(out), {a}, [](Node& n, GradSink& sink) {
        Mat da(n.grad.cols(), n.grad.rows());
        for (int i = 0; i < n.grad.rows(); ++i)
            for (int j = 0; j < n.grad.cols(); ++j) da(j, i) = n.grad(i, j);
        accum_move(n.parents[0], std::move(da), sink);
    });
}

Var concat_cols(const Var& a, const Var& b) {
    assert(a->value.rows() == b->value.rows());
    const int ca = a->value.cols(), cb = b->value.cols();
    Mat out(a->value.rows(), ca + cb);
    for (int i = 0; i < out.rows(); ++i) {
        for (int j = 0; j < ca; ++j) out(i, j) = a->value(i, j);
        for (int j = 0; j < cb; ++j) out(i, ca + j) = b->value(i, j);
    }
    return make_node(std::move(out), {a, b}, [ca, cb](Node& n, GradSink& sink) {
        const Var& a = n.parents[0];
        const Var& b = n.parents[1];
        if (a->needs_grad) {
            Mat da(n.grad.rows(), ca);
            for (int i = 0; i < da.rows(); ++i)
                for (int j = 0; j < ca; ++j) da(i, j) = n.grad(i, j);
            accum_move(a, std::move(da), sink);
        }
        if (b->needs_grad) {
            Mat db(n.grad.rows(), cb);
            for (int i = 0; i < db.rows(); ++i)
                for (int j = 0; j < cb; ++j) db(i, j) = n.grad(i, ca + j);
            accum_move(b, std::move(db), sink);
        }
    });
}

Var concat_rows(const Var& a, const Var& b) {
    assert(a->value.cols() == b->value.cols());
    const int ra = a->value.rows(), rb = b->value.rows();
    Mat out(ra + rb, a->value.cols());
    for (int i = 0; i < ra; ++i)
        for (int j = 0; j < out.cols(); ++j) out(i, j) = a->value(i, j);
    for (int i = 0; i < rb; ++i)
        for (int j = 0; j < out.cols(); ++j) out(ra + i, j) = b->value(i, j);
    return make_node(std::move(out), {a, b}, [ra, rb](Node& n, GradSink& sink) {
        const Var& a = n.parents[0];
        const Var& b = n.parents[1];
        if (a->needs_grad) {
            Mat da(ra, n.grad.cols());
            for (int i = 0; i < ra; ++i)
                for (int j = 0; j < n.grad.cols(); ++j) da(i, j) = n.grad(i, j);
            accum_move(a, std::move(da), sink);
        }
        if (b->needs_grad) {
            Mat db(rb, n.grad.cols());
            for (int i = 0; i < rb; ++i)
                for (int j = 0; j < n.grad.cols(); ++j) db(i, j) = n.grad(ra + i, j);
            accum_move(b, std::move(db), sink);
        }
    });
}

Var slice_cols(const Var& a, int c0, int c1) {
    assert(0 <= c0 && c0 < c1 && c1 <= a->value.cols());
    Mat out(a->value.rows(), c1 - c0);
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out(i, j) = a->value(i, c0 + j);
    return make_node(std::move(out), {a}, [c0](Node& n, GradSink& sink) {
        const Var& a = n.parents[0];
        Mat da(a->value.rows(), a->value.cols());
        for (int i = 0; i < n.grad.rows(); ++i)
            for (int j = 0; j < n.grad.cols(); ++j) da(i, c0 + j) = n.grad(i, j);
        accum_move(a, std::move(da), sink);
    });
}

Var slice_rows(const Var& a, int r0, int r1) {
    assert(0 <= r0 && r0 < r1 && r1 <= a->value.rows());
    Mat out(r1 - r0, a->value.cols());
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out(i, j) = a->value(r0 + i, j);
    return make_node(std::move(out), {a}, [r0](Node& n, GradSink& sink) {
        const Var& a = n.parents[0];
        Mat da(a->value.rows(), a->value.cols());
        for (int i = 0; i < n.grad.rows(); ++i)
            for (int j = 0; j < n.grad.cols(); ++j) da(r0 + i, j) = n.grad(i, j);
        accum_move(a, std::move(da), sink);
    });
}

Var sum_all(const Var& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.size(); ++i) s += a->value.data()[i];
    return make_node(Mat::full(1, 1, s), {a}, [](Node& n, GradSink& sink) {
        const double g = n.grad(0, 0);
        accum_move(n.parents[0], Mat::full(n.parents[0]->value.rows(), n.parents[0]->value.cols(), g),
                   sink);
    });
}

Var mean_rows(const Var& a) {
    const int r = a->value.rows(), c = a->value.cols();
    Mat out(1, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out(0, j) += a->value(i, j);
    for (int j = 0; j < c; ++j) out(0, j) /= r;
    return make_node(std::move(out), {a}, [r](Node& n, GradSink& sink) {
        Mat da(r, n.grad.cols());
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < n.grad.cols(); ++j) da(i, j) = n.grad(0, j) / r;
        accum_move(n.parents[0], std::move(da), sink);
    });
}

Var gather_rows(const Var& a, std::vector<int> idx) {
    Mat out(static_cast<int>(idx.size()), a->value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        assert(idx[i] >= 0 && idx[i] < a->value.rows());
        for (int j = 0; j < a->value.cols(); ++j)
            out(static_cast<int>(i), j) = a->value(idx[i], j);
    }
    return make_node(std::move(out), {a}, [idx = std::move(idx)](Node& n, GradSink& sink) {
        const Var& a = n.parents[0];
        Mat da(a->value.rows(), a->value.cols());
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (int j = 0; j < n.grad.cols(); ++j)
                da(idx[i], j) += n.grad(static_cast<int>(i), j);
        accum_move(a, std::move(da), sink);
    });
}

Var mha(const MhaParams& p, const Var& queries, const Var& keys, const Var& values,
        std::vector<Mat>* attn_rows) {
    const int d = p.q.w->value.cols();
    assert(d % p.heads == 0);
    const int dh = d / p.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    Var q = p.q(queries);
    Var k = p.k(keys);
    Var v = p.v(values);

    Var out;
    for (int h = 0; h < p.heads; ++h) {
        Var qh = slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = slice_cols(v, h * dh, (h + 1) * dh);
        Var logits = scale(matmul(qh, transpose(kh)), inv_sqrt);
        Var attn = row_softmax(logits);
        if (attn_rows) attn_rows->push_back(attn->value);
        Var oh = matmul(attn, vh);
        out = h == 0 ? oh : concat_cols(out, oh);
    }
    return p.o(out);
}

} // namespace gebd::ad
