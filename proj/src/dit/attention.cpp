#include <string>

#include "nextdit/contextdrop/context_drop.hpp"
#include "nextdit/dit/model.hpp"
#include "nextdit/numkernel/error.hpp"

namespace nextdit::dit {

namespace ad = nk::ad;

AttentionContext make_attention_context(std::size_t batch, std::size_t tokens, const rope::Coords& coords,
                                        const rope::RopeFreqs& freqs, std::span<const std::uint8_t> key_valid,
                                        std::optional<KvPool> kv_pool) {
    const std::size_t rows = batch * tokens;
    if (coords.size() != tokens && coords.size() != rows) {
        throw DimensionError("attention context: " + std::to_string(coords.size()) + " coordinates for " +
                             std::to_string(batch) + "x" + std::to_string(tokens) + " tokens");
    }
    if (!key_valid.empty() && key_valid.size() != rows) {
        throw DimensionError("attention context: mask has " + std::to_string(key_valid.size()) + " entries, expected " +
                             std::to_string(rows));
    }
    AttentionContext ctx;
    ctx.batch = batch;
    ctx.tokens = tokens;
    ctx.key_valid.assign(key_valid.begin(), key_valid.end());
    ctx.kv_pool = kv_pool;

    auto expand = [&](const rope::Coords& per_sample, std::size_t n) {
        if (per_sample.size() == n * batch) return rope::angle_table(per_sample, freqs);
        rope::Coords all;
        all.reserve(n * batch);
        for (std::size_t b = 0; b < batch; ++b) all.insert(all.end(), per_sample.begin(), per_sample.end());
        return rope::angle_table(all, freqs);
    };
    ctx.q_angles = expand(coords, tokens);

    if (kv_pool && kv_pool->window.count() > 1) {
        if (!ctx.key_valid.empty()) throw ConfigError("attention context: key pooling cannot be combined with a pad mask");
        if (kv_pool->grid.count() != tokens) {
            throw GridError("attention context: grid " + std::to_string(kv_pool->grid.h) + "x" +
                            std::to_string(kv_pool->grid.w) + " does not cover " + std::to_string(tokens) + " tokens");
        }
        if (coords.size() != tokens) throw ConfigError("attention context: key pooling needs coordinates shared by the batch");
        const rope::Coords pooled = contextdrop::pool_coords(coords, kv_pool->grid, kv_pool->window);
        ctx.kv_angles = expand(pooled, pooled.size());
    } else {
        ctx.kv_pool.reset();
        ctx.kv_angles = ctx.q_angles;
    }
    return ctx;
}

Var attention_forward(const Var& x, const AttentionParams& p, const AttentionContext& ctx) {
    Var q = ad::rms_norm(ad::matmul(x, p.wq), p.q_norm, p.eps);
    Var k = ad::rms_norm(ad::matmul(x, p.wk), p.k_norm, p.eps);
    Var v = ad::matmul(x, p.wv);
    std::size_t kv_len = ctx.tokens;
    // Pool after QK-Norm and before rotation; pooled keys rotate with their centroid coordinates.
    if (ctx.kv_pool) {
        k = ad::pool_rows(k, ctx.batch, ctx.kv_pool->grid, ctx.kv_pool->window);
        v = ad::pool_rows(v, ctx.batch, ctx.kv_pool->grid, ctx.kv_pool->window);
        kv_len = k.shape()[0] / ctx.batch;
    }
    q = ad::rotate_pairs(q, ctx.q_angles);
    k = ad::rotate_pairs(k, ctx.kv_angles);
    const ad::AttentionShape shape{ctx.batch, ctx.tokens, kv_len, p.q_heads, p.kv_heads, p.head_dim};
    return ad::matmul(ad::attention(q, k, v, shape, ctx.key_valid), p.wo);
}

nk::Tensor gqa_attention(const nk::Tensor& x, const AttentionParams& p, const rope::RopeFreqs& freqs,
                         const rope::Coords& coords, std::span<const std::uint8_t> mask, std::optional<KvPool> kv_pool) {
    if (x.rank() != 2) throw DimensionError("gqa_attention: expected [n,d], got " + nk::shape_string(x.shape()));
    if (freqs.d_head != p.head_dim) throw ConfigError("gqa_attention: RoPE table and head_dim disagree");
    const AttentionContext ctx = make_attention_context(1, x.dim(0), coords, freqs, mask, kv_pool);
    return attention_forward(Var::constant(x), p, ctx).value();
}

}  // namespace nextdit::dit
