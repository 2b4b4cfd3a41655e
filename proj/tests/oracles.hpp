#pragma once

// Independent reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "nextdit/dit/model.hpp"
#include "nextdit/numkernel/kernels.hpp"
#include "nextdit/rope/rope.hpp"

namespace oracle {

using nextdit::nk::Shape;
using nextdit::nk::Tensor;

inline Tensor columns(const Tensor& x, std::size_t begin, std::size_t width) {
    Tensor out(Shape{x.rows(), width});
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < width; ++c) out(r, c) = x(r, begin + c);
    }
    return out;
}

inline Tensor transpose(const Tensor& x) {
    Tensor out(Shape{x.cols(), x.rows()});
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) out(c, r) = x(r, c);
    }
    return out;
}

// Textbook multi-head attention: each head gets its own key/value head. Per head:
// softmax(rope(norm(q)) rope(norm(k))^T / sqrt(dh)) v, heads concatenated and projected.
inline Tensor mha_reference(const Tensor& x, const nextdit::dit::AttentionParams& p,
                            const nextdit::rope::RopeFreqs& freqs, const nextdit::rope::Coords& coords,
                            const std::vector<std::uint8_t>& valid = {}) {
    using namespace nextdit;
    const std::size_t n = x.rows(), dh = p.head_dim, H = p.q_heads;
    const Tensor q = nk::matmul(x, p.wq.value());
    const Tensor k = nk::matmul(x, p.wk.value());
    const Tensor v = nk::matmul(x, p.wv.value());
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor concat(Shape{n, H * dh});
    for (std::size_t h = 0; h < H; ++h) {
        const std::size_t kh = h * p.kv_heads / H;
        const Tensor qh = rope::apply_rope(nk::rms_norm(columns(q, h * dh, dh), p.q_norm.value(), p.eps), coords, freqs);
        const Tensor kh_ = rope::apply_rope(nk::rms_norm(columns(k, kh * dh, dh), p.k_norm.value(), p.eps), coords, freqs);
        Tensor logits = nk::matmul(qh, transpose(kh_));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                logits(i, j) = valid.empty() || valid[j] ? logits(i, j) * scale : -INFINITY;
            }
        }
        const Tensor o = nk::matmul(nk::softmax(logits, 1), columns(v, kh * dh, dh));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < dh; ++c) concat(i, h * dh + c) = o(i, c);
        }
    }
    return nk::matmul(concat, p.wo.value());
}

// Expands grouped key/value projections to one KV head per query head.
inline nextdit::dit::AttentionParams expand_to_mha(const nextdit::dit::AttentionParams& p) {
    using namespace nextdit;
    const std::size_t d = p.wq.shape()[0], dh = p.head_dim, group = p.q_heads / p.kv_heads;
    auto expand = [&](const Tensor& w) {
        Tensor out(Shape{d, p.q_heads * dh});
        for (std::size_t r = 0; r < d; ++r) {
            for (std::size_t h = 0; h < p.q_heads; ++h) {
                for (std::size_t c = 0; c < dh; ++c) out(r, h * dh + c) = w(r, (h / group) * dh + c);
            }
        }
        return out;
    };
    dit::AttentionParams m = p;
    m.wk = nk::ad::Var::constant(expand(p.wk.value()));
    m.wv = nk::ad::Var::constant(expand(p.wv.value()));
    m.kv_heads = p.q_heads;
    return m;
}

// Brute-force energy distance accumulated in long double.
inline double energy_distance_reference(const Tensor& a, const Tensor& b) {
    auto mean_dist = [](const Tensor& x, const Tensor& y) {
        long double s = 0;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t j = 0; j < y.rows(); ++j) {
                long double ss = 0;
                for (std::size_t c = 0; c < x.cols(); ++c) {
                    const long double d = static_cast<long double>(x(i, c)) - y(j, c);
                    ss += d * d;
                }
                s += std::sqrt(ss);
            }
        }
        return s / (static_cast<long double>(x.rows()) * y.rows());
    };
    return static_cast<double>(2 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b));
}

}  // namespace oracle
