#include "nextdit/numkernel/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "nextdit/numkernel/error.hpp"

namespace nextdit::nk::ad {
namespace {

void require_rank2(const Var& x, const char* what) {
    if (x.value().rank() != 2) {
        throw DimensionError(std::string(what) + ": expected rank 2, got " + shape_string(x.shape()));
    }
}

void accumulate(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// dst[m,k] += g[m,n] * b[k,n]^T
void acc_matmul_nt(Tensor& dst, const Tensor& g, const Tensor& b) {
    const std::size_t m = g.dim(0), n = g.dim(1), k = b.dim(0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = &g(i, 0);
        double* drow = &dst(i, 0);
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = &b(p, 0);
            double s = 0;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            drow[p] += s;
        }
    }
}

// dst[k,n] += a[m,k]^T * g[m,n]
void acc_matmul_tn(Tensor& dst, const Tensor& a, const Tensor& g) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = g.dim(1);
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = &g(i, 0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a(i, p);
            if (av == 0.0) continue;
            double* drow = &dst(p, 0);
            for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
        }
    }
}

Node& in(Node& n, std::size_t i) { return *n.inputs[i]; }

}  // namespace

Tensor& Node::grad_buffer() {
    if (!has_grad) {
        grad = Tensor(value.shape());
        has_grad = true;
    }
    return grad;
}

Var Var::constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var Var::parameter(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
}

Tensor Var::grad() const {
    if (node_->has_grad) return node_->grad;
    return Tensor(node_->value.shape());
}

void Var::zero_grad() {
    node_->grad = Tensor();
    node_->has_grad = false;
}

Var make_result(Tensor value, std::initializer_list<Var> inputs, std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool any = false;
    for (const auto& v : inputs) any = any || v.requires_grad();
    if (any) {
        n->requires_grad = true;
        for (const auto& v : inputs) n->inputs.push_back(v.node());
        n->backward = std::move(backward);
    }
    return Var(std::move(n));
}

void backward(const Var& root) {
    if (root.value().size() != 1) {
        throw DimensionError("backward: root must be a scalar, got " + shape_string(root.shape()));
    }
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && node->has_grad) node->backward(*node);
    }
}

Var matmul(const Var& a, const Var& b) {
    return make_result(nk::matmul(a.value(), b.value()), {a, b}, [](Node& n) {
        Node& a = in(n, 0);
        Node& b = in(n, 1);
        if (a.requires_grad) acc_matmul_nt(a.grad_buffer(), n.grad, b.value);
        if (b.requires_grad) acc_matmul_tn(b.grad_buffer(), a.value, n.grad);
    });
}

Var add(const Var& a, const Var& b) {
    return make_result(nk::add(a.value(), b.value()), {a, b}, [](Node& n) {
        for (std::size_t i = 0; i < 2; ++i) {
            if (in(n, i).requires_grad) accumulate(in(n, i).grad_buffer(), n.grad);
        }
    });
}

Var sub(const Var& a, const Var& b) {
    return make_result(nk::sub(a.value(), b.value()), {a, b}, [](Node& n) {
        if (in(n, 0).requires_grad) accumulate(in(n, 0).grad_buffer(), n.grad);
        if (in(n, 1).requires_grad) {
            Tensor& g = in(n, 1).grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.shape(), b.shape(), "mul");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& n) {
        Node& a = in(n, 0);
        Node& b = in(n, 1);
        if (a.requires_grad) {
            Tensor& g = a.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * b.value[i];
        }
        if (b.requires_grad) {
            Tensor& g = b.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * a.value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    return make_result(nk::scaled(a.value(), s), {a}, [s](Node& n) {
        Tensor& g = in(n, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
    });
}

Var add_scalar(const Var& a, double c) {
    Tensor out = a.value();
    for (auto& v : out.data()) v += c;
    return make_result(std::move(out), {a}, [](Node& n) { accumulate(in(n, 0).grad_buffer(), n.grad); });
}

Var add_row(const Var& x, const Var& b) {
    require_rank2(x, "add_row");
    const std::size_t cols = x.value().cols();
    if (b.value().size() != cols) {
        throw DimensionError("add_row: bias length " + std::to_string(b.value().size()) + " vs " + std::to_string(cols));
    }
    Tensor out = x.value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t j = 0; j < cols; ++j) row[j] += b.value()[j];
    }
    return make_result(std::move(out), {x, b}, [](Node& n) {
        if (in(n, 0).requires_grad) accumulate(in(n, 0).grad_buffer(), n.grad);
        if (in(n, 1).requires_grad) {
            Tensor& g = in(n, 1).grad_buffer();
            for (std::size_t r = 0; r < n.grad.rows(); ++r) {
                auto row = n.grad.row(r);
                for (std::size_t j = 0; j < g.size(); ++j) g[j] += row[j];
            }
        }
    });
}

Var scale_by(const Var& x, const Var& s) {
    if (s.value().size() != 1) throw DimensionError("scale_by: factor must hold one element");
    return make_result(nk::scaled(x.value(), s.value()[0]), {x, s}, [](Node& n) {
        Node& x = in(n, 0);
        Node& s = in(n, 1);
        if (x.requires_grad) {
            Tensor& g = x.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += s.value[0] * n.grad[i];
        }
        if (s.requires_grad) {
            double acc = 0;
            for (std::size_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * x.value[i];
            s.grad_buffer()[0] += acc;
        }
    });
}

Var silu(const Var& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x.value()[i];
        out[i] = v / (1.0 + std::exp(-v));
    }
    return make_result(std::move(out), {x}, [](Node& n) {
        Node& x = in(n, 0);
        Tensor& g = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = x.value[i];
            const double sig = 1.0 / (1.0 + std::exp(-v));
            g[i] += n.grad[i] * sig * (1.0 + v * (1.0 - sig));
        }
    });
}

Var tanh(const Var& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.value()[i]);
    return make_result(std::move(out), {x}, [](Node& n) {
        Tensor& g = in(n, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
    });
}

Var repeat_rows(const Var& x, std::size_t reps) {
    require_rank2(x, "repeat_rows");
    const std::size_t rows = x.value().dim(0), cols = x.value().dim(1);
    Tensor out(Shape{rows * reps, cols});
    for (std::size_t r = 0; r < rows; ++r) {
        auto src = x.value().row(r);
        for (std::size_t k = 0; k < reps; ++k) std::copy(src.begin(), src.end(), out.row(r * reps + k).begin());
    }
    return make_result(std::move(out), {x}, [reps](Node& n) {
        Tensor& g = in(n, 0).grad_buffer();
        for (std::size_t r = 0; r < g.rows(); ++r) {
            auto dst = g.row(r);
            for (std::size_t k = 0; k < reps; ++k) {
                auto src = n.grad.row(r * reps + k);
                for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
            }
        }
    });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
    require_rank2(x, "slice_cols");
    const std::size_t cols = x.value().dim(1);
    if (begin > end || end > cols) {
        throw DimensionError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " +
                             std::to_string(cols) + " columns");
    }
    const std::size_t rows = x.value().dim(0), w = end - begin;
    Tensor out(Shape{rows, w});
    for (std::size_t r = 0; r < rows; ++r) {
        auto src = x.value().row(r).subspan(begin, w);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return make_result(std::move(out), {x}, [begin, w](Node& n) {
        Tensor& g = in(n, 0).grad_buffer();
        for (std::size_t r = 0; r < n.grad.rows(); ++r) {
            auto dst = g.row(r).subspan(begin, w);
            auto src = n.grad.row(r);
            for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
        }
    });
}

Var gather_rows(const Var& table, std::span<const std::size_t> index) {
    require_rank2(table, "gather_rows");
    const std::size_t vocab = table.value().dim(0), cols = table.value().dim(1);
    Tensor out(Shape{index.size(), cols});
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= vocab) throw DimensionError("gather_rows: index " + std::to_string(index[r]) + " out of range");
        auto src = table.value().row(index[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    std::vector<std::size_t> idx(index.begin(), index.end());
    return make_result(std::move(out), {table}, [idx = std::move(idx)](Node& n) {
        Tensor& g = in(n, 0).grad_buffer();
        for (std::size_t r = 0; r < idx.size(); ++r) {
            auto dst = g.row(idx[r]);
            auto src = n.grad.row(r);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
    });
}

Var rms_norm(const Var& x, const Var& gain, double eps) {
    const std::size_t group = gain.value().size();
    const std::size_t cols = x.value().cols();
    if (group == 0 || cols % group != 0) {
        throw DimensionError("rms_norm: gain length " + std::to_string(group) + " does not tile " +
                             std::to_string(cols) + " columns");
    }
    const std::size_t groups = x.value().size() / group;
    Tensor inv(Shape{groups});
    Tensor out(x.shape());
    const double* px = x.value().data().data();
    double* po = out.data().data();
    for (std::size_t gi = 0; gi < groups; ++gi) {
        const double* s = px + gi * group;
        double ss = 0;
        for (std::size_t j = 0; j < group; ++j) ss += s[j] * s[j];
        const double r = 1.0 / std::sqrt(ss / static_cast<double>(group) + eps);
        inv[gi] = r;
        for (std::size_t j = 0; j < group; ++j) po[gi * group + j] = s[j] * r * gain.value()[j];
    }
    return make_result(std::move(out), {x, gain}, [group, inv = std::move(inv)](Node& n) {
        Node& x = in(n, 0);
        Node& gain = in(n, 1);
        const std::size_t groups = inv.size();
        const double d = static_cast<double>(group);
        for (std::size_t gi = 0; gi < groups; ++gi) {
            const double* xs = x.value.data().data() + gi * group;
            const double* gy = n.grad.data().data() + gi * group;
            const double r = inv[gi];
            if (gain.requires_grad) {
                Tensor& gg = gain.grad_buffer();
                for (std::size_t j = 0; j < group; ++j) gg[j] += gy[j] * xs[j] * r;
            }
            if (x.requires_grad) {
                double dot = 0;
                for (std::size_t j = 0; j < group; ++j) dot += gain.value[j] * gy[j] * xs[j];
                double* gx = x.grad_buffer().data().data() + gi * group;
                const double c = r * r * r * dot / d;
                for (std::size_t j = 0; j < group; ++j) gx[j] += r * gain.value[j] * gy[j] - c * xs[j];
            }
        }
    });
}

Var softmax(const Var& x) {
    const std::size_t axis = x.value().rank() == 0 ? 0 : x.value().rank() - 1;
    return make_result(nk::softmax(x.value(), axis), {x}, [](Node& n) {
        Tensor& g = in(n, 0).grad_buffer();
        for (std::size_t r = 0; r < n.value.rows(); ++r) {
            auto y = n.value.row(r);
            auto gy = n.grad.row(r);
            double dot = 0;
            for (std::size_t j = 0; j < y.size(); ++j) dot += y[j] * gy[j];
            auto gx = g.row(r);
            for (std::size_t j = 0; j < y.size(); ++j) gx[j] += y[j] * (gy[j] - dot);
        }
    });
}

namespace {

void rotate_rows(const Tensor& src, Tensor& dst, const Tensor& angles, double sign, bool accumulate_into) {
    const std::size_t rows = src.rows(), cols = src.cols(), pairs = angles.cols();
    const std::size_t chunk = 2 * pairs;
    for (std::size_t r = 0; r < rows; ++r) {
        auto a = angles.row(r);
        auto s = src.row(r);
        auto d = dst.row(r);
        for (std::size_t base = 0; base < cols; base += chunk) {
            for (std::size_t j = 0; j < pairs; ++j) {
                const double c = std::cos(a[j]);
                const double sn = sign * std::sin(a[j]);
                const double x0 = s[base + 2 * j];
                const double x1 = s[base + 2 * j + 1];
                const double y0 = x0 * c - x1 * sn;
                const double y1 = x0 * sn + x1 * c;
                if (accumulate_into) {
                    d[base + 2 * j] += y0;
                    d[base + 2 * j + 1] += y1;
                } else {
                    d[base + 2 * j] = y0;
                    d[base + 2 * j + 1] = y1;
                }
            }
        }
    }
}

}  // namespace

Var rotate_pairs(const Var& x, const Tensor& angles) {
    require_rank2(x, "rotate_pairs");
    const std::size_t cols = x.value().cols();
    if (angles.rank() != 2 || angles.dim(0) != x.value().rows() || angles.cols() == 0 ||
        cols % (2 * angles.cols()) != 0) {
        throw DimensionError("rotate_pairs: angle table " + shape_string(angles.shape()) + " incompatible with " +
                             shape_string(x.shape()));
    }
    Tensor out(x.shape());
    rotate_rows(x.value(), out, angles, 1.0, false);
    return make_result(std::move(out), {x}, [angles](Node& n) {
        rotate_rows(n.grad, in(n, 0).grad_buffer(), angles, -1.0, true);
    });
}

Var attention(const Var& q, const Var& k, const Var& v, const AttentionShape& s, std::span<const std::uint8_t> key_valid) {
    if (s.kv_heads == 0 || s.q_heads % s.kv_heads != 0) {
        throw DimensionError("attention: q_heads must be a multiple of kv_heads");
    }
    const std::size_t dh = s.head_dim;
    if (q.value().rank() != 2 || q.value().dim(0) != s.batch * s.q_len || q.value().dim(1) != s.q_heads * dh ||
        k.value().rank() != 2 || k.value().dim(0) != s.batch * s.kv_len || k.value().dim(1) != s.kv_heads * dh ||
        v.shape() != k.shape()) {
        throw DimensionError("attention: operand shapes " + shape_string(q.shape()) + ", " + shape_string(k.shape()) +
                             ", " + shape_string(v.shape()) + " inconsistent with attention shape");
    }
    if (!key_valid.empty() && key_valid.size() != s.batch * s.kv_len) {
        throw DimensionError("attention: key mask length mismatch");
    }
    const std::size_t group = s.q_heads / s.kv_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    // probs laid out [batch][head][q][kv]
    Tensor probs(Shape{s.batch, s.q_heads, s.q_len, s.kv_len});
    Tensor out(Shape{s.batch * s.q_len, s.q_heads * dh});
    const Tensor& Q = q.value();
    const Tensor& K = k.value();
    const Tensor& V = v.value();
    const double neg_inf = -std::numeric_limits<double>::infinity();
    std::vector<double> logits(s.kv_len);
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t h = 0; h < s.q_heads; ++h) {
            const std::size_t kh = h / group;
            for (std::size_t i = 0; i < s.q_len; ++i) {
                const double* qi = &Q(b * s.q_len + i, h * dh);
                double mx = neg_inf;
                for (std::size_t j = 0; j < s.kv_len; ++j) {
                    if (!key_valid.empty() && !key_valid[b * s.kv_len + j]) {
                        logits[j] = neg_inf;
                        continue;
                    }
                    const double* kj = &K(b * s.kv_len + j, kh * dh);
                    double dot = 0;
                    for (std::size_t c = 0; c < dh; ++c) dot += qi[c] * kj[c];
                    logits[j] = dot * scale;
                    mx = std::max(mx, logits[j]);
                }
                double* p = &probs[((b * s.q_heads + h) * s.q_len + i) * s.kv_len];
                double sum = 0;
                for (std::size_t j = 0; j < s.kv_len; ++j) {
                    p[j] = logits[j] == neg_inf ? 0.0 : std::exp(logits[j] - mx);
                    sum += p[j];
                }
                double* oi = &out(b * s.q_len + i, h * dh);
                for (std::size_t j = 0; j < s.kv_len; ++j) {
                    p[j] /= sum;
                    if (p[j] == 0.0) continue;
                    const double* vj = &V(b * s.kv_len + j, kh * dh);
                    for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
                }
            }
        }
    }
    return make_result(std::move(out), {q, k, v}, [s, group, scale, probs = std::move(probs)](Node& n) {
        Node& qn = in(n, 0);
        Node& kn = in(n, 1);
        Node& vn = in(n, 2);
        const std::size_t dh = s.head_dim;
        std::vector<double> gp(s.kv_len);
        for (std::size_t b = 0; b < s.batch; ++b) {
            for (std::size_t h = 0; h < s.q_heads; ++h) {
                const std::size_t kh = h / group;
                for (std::size_t i = 0; i < s.q_len; ++i) {
                    const double* go = &n.grad(b * s.q_len + i, h * dh);
                    const double* p = &probs[((b * s.q_heads + h) * s.q_len + i) * s.kv_len];
                    double dot = 0;
                    for (std::size_t j = 0; j < s.kv_len; ++j) {
                        gp[j] = 0;
                        if (p[j] == 0.0) continue;
                        const double* vj = &vn.value(b * s.kv_len + j, kh * dh);
                        double acc = 0;
                        for (std::size_t c = 0; c < dh; ++c) acc += go[c] * vj[c];
                        gp[j] = acc;
                        dot += p[j] * acc;
                        if (vn.requires_grad) {
                            double* gv = &vn.grad_buffer()(b * s.kv_len + j, kh * dh);
                            for (std::size_t c = 0; c < dh; ++c) gv[c] += p[j] * go[c];
                        }
                    }
                    const double* qi = &qn.value(b * s.q_len + i, h * dh);
                    for (std::size_t j = 0; j < s.kv_len; ++j) {
                        if (p[j] == 0.0) continue;
                        const double gs = p[j] * (gp[j] - dot) * scale;
                        const double* kj = &kn.value(b * s.kv_len + j, kh * dh);
                        if (qn.requires_grad) {
                            double* gq = &qn.grad_buffer()(b * s.q_len + i, h * dh);
                            for (std::size_t c = 0; c < dh; ++c) gq[c] += gs * kj[c];
                        }
                        if (kn.requires_grad) {
                            double* gk = &kn.grad_buffer()(b * s.kv_len + j, kh * dh);
                            for (std::size_t c = 0; c < dh; ++c) gk[c] += gs * qi[c];
                        }
                    }
                }
            }
        }
    });
}

Var pool_rows(const Var& x, std::size_t batch, Grid2 grid, Grid2 window) {
    require_rank2(x, "pool_rows");
    if (x.value().dim(0) != batch * grid.count()) {
        throw GridError("pool_rows: " + std::to_string(x.value().dim(0)) + " rows is not " + std::to_string(batch) +
                        " grids of " + std::to_string(grid.h) + "x" + std::to_string(grid.w));
    }
    if (window.h == 0 || window.w == 0) throw GridError("pool_rows: empty window");
    const std::size_t c = x.value().cols();
    const Grid2 og = pooled_grid(grid, window);
    // member lists, shared by forward and backward
    std::vector<std::vector<std::size_t>> members(og.count());
    for (std::size_t hh = 0; hh < grid.h; ++hh) {
        for (std::size_t ww = 0; ww < grid.w; ++ww) {
            members[(hh / window.h) * og.w + ww / window.w].push_back(hh * grid.w + ww);
        }
    }
    Tensor out(Shape{batch * og.count(), c});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < og.count(); ++o) {
            auto dst = out.row(b * og.count() + o);
            for (auto m : members[o]) {
                auto src = x.value().row(b * grid.count() + m);
                for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
            }
            const double cnt = static_cast<double>(members[o].size());
            for (auto& val : dst) val /= cnt;
        }
    }
    const std::size_t n_in = grid.count();
    return make_result(std::move(out), {x}, [batch, n_in, members = std::move(members)](Node& n) {
        Tensor& g = in(n, 0).grad_buffer();
        const std::size_t n_out = members.size();
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < n_out; ++o) {
                auto src = n.grad.row(b * n_out + o);
                const double cnt = static_cast<double>(members[o].size());
                for (auto m : members[o]) {
                    auto dst = g.row(b * n_in + m);
                    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j] / cnt;
                }
            }
        }
    });
}

Var masked_mean_rows(const Var& x, std::size_t batch, std::span<const std::uint8_t> valid) {
    require_rank2(x, "masked_mean_rows");
    const std::size_t rows = x.value().dim(0), c = x.value().dim(1);
    if (batch == 0 || rows % batch != 0) throw DimensionError("masked_mean_rows: rows not divisible by batch");
    if (!valid.empty() && valid.size() != rows) throw DimensionError("masked_mean_rows: mask length mismatch");
    const std::size_t n = rows / batch;
    std::vector<double> counts(batch, 0.0);
    Tensor out(Shape{batch, c});
    for (std::size_t b = 0; b < batch; ++b) {
        auto dst = out.row(b);
        for (std::size_t i = 0; i < n; ++i) {
            if (!valid.empty() && !valid[b * n + i]) continue;
            counts[b] += 1.0;
            auto src = x.value().row(b * n + i);
            for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
        }
        if (counts[b] == 0.0) throw DomainError("masked_mean_rows: sample " + std::to_string(b) + " has no valid rows");
        for (auto& val : dst) val /= counts[b];
    }
    std::vector<std::uint8_t> mask(valid.begin(), valid.end());
    return make_result(std::move(out), {x}, [n, counts = std::move(counts), mask = std::move(mask)](Node& nd) {
        Tensor& g = in(nd, 0).grad_buffer();
        for (std::size_t b = 0; b < counts.size(); ++b) {
            auto src = nd.grad.row(b);
            for (std::size_t i = 0; i < n; ++i) {
                if (!mask.empty() && !mask[b * n + i]) continue;
                auto dst = g.row(b * n + i);
                for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j] / counts[b];
            }
        }
    });
}

Var sum(const Var& x) {
    double s = 0;
    for (double v : x.value().data()) s += v;
    return make_result(Tensor::scalar(s), {x}, [](Node& n) {
        Tensor& g = in(n, 0).grad_buffer();
        for (auto& v : g.data()) v += n.grad[0];
    });
}

Var squared_error(const Var& pred, const Var& target, double denom) {
    require_same_shape(pred.shape(), target.shape(), "squared_error");
    double s = 0;
    for (std::size_t i = 0; i < pred.value().size(); ++i) {
        const double d = pred.value()[i] - target.value()[i];
        s += d * d;
    }
    return make_result(Tensor::scalar(s / denom), {pred, target}, [denom](Node& n) {
        Node& p = in(n, 0);
        Node& t = in(n, 1);
        const double k = 2.0 * n.grad[0] / denom;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double d = k * (p.value[i] - t.value[i]);
            if (p.requires_grad) p.grad_buffer()[i] += d;
            if (t.requires_grad) t.grad_buffer()[i] -= d;
        }
    });
}

}  // namespace nextdit::nk::ad
