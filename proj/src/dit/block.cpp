#include "nextdit/dit/model.hpp"
#include "nextdit/numkernel/error.hpp"

namespace nextdit::dit {

namespace ad = nk::ad;

Modulation modulation_for(const BlockParams& p, const Var& cond, std::size_t tokens) {
    const std::size_t d = p.attn_norm1.shape()[0];
    const Var mod = linear(ad::silu(cond), p.modulation);
    auto chunk = [&](std::size_t i) { return ad::repeat_rows(ad::slice_cols(mod, i * d, (i + 1) * d), tokens); };
    return {chunk(0), chunk(1), chunk(2), chunk(3), chunk(4), chunk(5)};
}

namespace {

Var mlp(const Var& x, const BlockParams& p) { return linear(ad::silu(linear(x, p.mlp_in)), p.mlp_out); }

Var modulate(const Var& normed, const Var& shift, const Var& scale) {
    return ad::add(ad::mul(normed, ad::add_scalar(scale, 1.0)), shift);
}

}  // namespace

Var block_forward(const Var& x, const BlockParams& p, const ModelConfig& config, const AttentionContext& ctx,
                  const Modulation* mod) {
    const double eps = config.norm_eps;
    const bool sandwich = config.norm == NormStyle::sandwich;
    Var h = x;
    if (mod) {
        const Var a = attention_forward(modulate(ad::rms_norm(h, p.attn_norm1, eps), mod->shift_attn, mod->scale_attn),
                                        p.attn, ctx);
        h = sandwich ? ad::add(h, ad::mul(ad::tanh(mod->gate_attn), ad::rms_norm(a, p.attn_norm2, eps)))
                     : ad::add(h, ad::mul(mod->gate_attn, a));
        const Var f = mlp(modulate(ad::rms_norm(h, p.mlp_norm1, eps), mod->shift_mlp, mod->scale_mlp), p);
        h = sandwich ? ad::add(h, ad::mul(ad::tanh(mod->gate_mlp), ad::rms_norm(f, p.mlp_norm2, eps)))
                     : ad::add(h, ad::mul(mod->gate_mlp, f));
        return h;
    }
    if (!p.attn_gate.defined()) throw ConfigError("block_forward: block has neither modulation nor scalar gates");
    const Var a = attention_forward(ad::rms_norm(h, p.attn_norm1, eps), p.attn, ctx);
    h = sandwich ? ad::add(h, ad::scale_by(ad::rms_norm(a, p.attn_norm2, eps), ad::tanh(p.attn_gate)))
                 : ad::add(h, ad::scale_by(a, p.attn_gate));
    const Var f = mlp(ad::rms_norm(h, p.mlp_norm1, eps), p);
    h = sandwich ? ad::add(h, ad::scale_by(ad::rms_norm(f, p.mlp_norm2, eps), ad::tanh(p.mlp_gate)))
                 : ad::add(h, ad::scale_by(f, p.mlp_gate));
    return h;
}

nk::Tensor sandwich_block(const nk::Tensor& x, const nk::Tensor& cond, const BlockParams& p, const ModelConfig& config,
                          const rope::RopeFreqs& freqs, const rope::Coords& coords) {
    if (x.rank() != 2 || x.dim(1) != config.dim) {
        throw DimensionError("sandwich_block: expected [n," + std::to_string(config.dim) + "], got " +
                             nk::shape_string(x.shape()));
    }
    if (cond.size() != config.dim) throw DimensionError("sandwich_block: cond must hold dim values");
    const AttentionContext ctx = make_attention_context(1, x.dim(0), coords, freqs);
    const Var c = Var::constant(cond.reshaped({1, config.dim}));
    const Modulation mod = modulation_for(p, c, x.dim(0));
    return block_forward(Var::constant(x), p, config, ctx, &mod).value();
}

}  // namespace nextdit::dit
