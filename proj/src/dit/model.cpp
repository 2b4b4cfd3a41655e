#include "nextdit/dit/model.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "nextdit/numkernel/error.hpp"
#include "nextdit/numkernel/random.hpp"

namespace nextdit::dit {

namespace ad = nk::ad;

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
    if (patch == 0 || channels == 0 || dim == 0 || layers == 0) fail("patch, channels, dim and layers must be positive");
    if (q_heads == 0 || kv_heads == 0 || dim % q_heads != 0) fail("dim must be divisible by q_heads");
    if (q_heads % kv_heads != 0) fail("q_heads must be a multiple of kv_heads");
    if (head_dim() % 2 != 0) fail("head_dim must be even");
    if (rope_axes == 0 || rope_axes > 3 || head_dim() % (2 * rope_axes) != 0) {
        fail("head_dim must be divisible by 2*rope_axes");
    }
    if (time_freq_dim == 0 || time_freq_dim % 2 != 0) fail("time_freq_dim must be even and positive");
    if (mlp_ratio == 0) fail("mlp_ratio must be positive");
    if (mode == Mode::recognition && num_classes == 0) fail("recognition needs num_classes > 0");
    if (!(norm_eps > 0) || !(init_std > 0) || !(rope_base > 1)) fail("norm_eps, init_std must be > 0 and rope_base > 1");
}

Var linear(const Var& x, const Linear& l) {
    Var y = ad::matmul(x, l.w);
    return l.b.defined() ? ad::add_row(y, l.b) : y;
}

namespace {

Var trunc_param(nk::Rng& rng, nk::Shape shape, double std) {
    return Var::parameter(rng.truncated_normal_tensor(std::move(shape), std));
}
Var zeros(nk::Shape shape) { return Var::parameter(nk::Tensor(std::move(shape), 0.0)); }
Var ones(std::size_t n) { return Var::parameter(nk::Tensor(nk::Shape{n}, 1.0)); }

Linear make_linear(nk::Rng& rng, std::size_t in, std::size_t out, double std, bool bias) {
    return {trunc_param(rng, {in, out}, std), bias ? zeros({out}) : Var{}};
}
Linear zero_linear(std::size_t in, std::size_t out) { return {zeros({in, out}), zeros({out})}; }

}  // namespace

BlockParams init_block(const ModelConfig& c, nk::Rng& rng) {
    const std::size_t d = c.dim, dh = c.head_dim(), kv = c.kv_heads * dh;
    BlockParams b;
    b.attn.wq = trunc_param(rng, {d, d}, c.init_std);
    b.attn.wk = trunc_param(rng, {d, kv}, c.init_std);
    b.attn.wv = trunc_param(rng, {d, kv}, c.init_std);
    b.attn.wo = trunc_param(rng, {d, d}, c.init_std);
    b.attn.q_norm = ones(dh);
    b.attn.k_norm = ones(dh);
    b.attn.q_heads = c.q_heads;
    b.attn.kv_heads = c.kv_heads;
    b.attn.head_dim = dh;
    b.attn.eps = c.norm_eps;
    b.attn_norm1 = ones(d);
    b.attn_norm2 = ones(d);
    b.mlp_norm1 = ones(d);
    b.mlp_norm2 = ones(d);
    b.mlp_in = make_linear(rng, d, c.mlp_ratio * d, c.init_std, true);
    b.mlp_out = make_linear(rng, c.mlp_ratio * d, d, c.init_std, true);
    if (c.mode == Mode::generative) {
        b.modulation = zero_linear(d, 6 * d);
    } else {
        b.attn_gate = zeros({1});
        b.mlp_gate = zeros({1});
    }
    return b;
}

ModelParams init_model(const ModelConfig& c, std::uint64_t seed) {
    c.validate();
    nk::Rng rng(seed);
    ModelParams m;
    m.config = c;
    m.freqs = rope::freq_matrix(c.rope_base, c.head_dim(), c.rope_axes);
    const std::size_t d = c.dim;
    m.patch_embed = make_linear(rng, c.patch_features(), d, c.init_std, true);
    if (c.mode == Mode::generative) {
        m.time_in = make_linear(rng, c.time_freq_dim, d, c.init_std, true);
        m.time_out = make_linear(rng, d, d, c.init_std, true);
        if (c.num_classes > 0) m.label_table = trunc_param(rng, {c.num_classes + 1, d}, c.init_std);
    }
    m.blocks.reserve(c.layers);
    for (std::size_t l = 0; l < c.layers; ++l) m.blocks.push_back(init_block(c, rng));
    if (c.mode == Mode::generative) {
        m.final_norm = ones(d);
        m.final_modulation = zero_linear(d, d);
        m.final_proj = zero_linear(d, c.patch_features());
    } else {
        const std::size_t hidden = c.head_hidden ? c.head_hidden : d;
        m.head_in = make_linear(rng, d, hidden, c.init_std, true);
        m.head_out = make_linear(rng, hidden, c.num_classes, c.init_std, true);
    }
    return m;
}

std::vector<std::pair<std::string, Var>> ModelParams::named_parameters() const {
    std::vector<std::pair<std::string, Var>> out;
    auto put = [&](const std::string& name, const Var& v) {
        if (v.defined()) out.emplace_back(name, v);
    };
    auto put_linear = [&](const std::string& name, const Linear& l) {
        put(name + ".w", l.w);
        put(name + ".b", l.b);
    };
    put_linear("patch_embed", patch_embed);
    put_linear("time_in", time_in);
    put_linear("time_out", time_out);
    put("label_table", label_table);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const BlockParams& b = blocks[i];
        const std::string p = "blocks." + std::to_string(i) + ".";
        put(p + "attn.wq", b.attn.wq);
        put(p + "attn.wk", b.attn.wk);
        put(p + "attn.wv", b.attn.wv);
        put(p + "attn.wo", b.attn.wo);
        put(p + "attn.q_norm", b.attn.q_norm);
        put(p + "attn.k_norm", b.attn.k_norm);
        put(p + "attn_norm1", b.attn_norm1);
        put(p + "attn_norm2", b.attn_norm2);
        put(p + "mlp_norm1", b.mlp_norm1);
        put(p + "mlp_norm2", b.mlp_norm2);
        put_linear(p + "mlp_in", b.mlp_in);
        put_linear(p + "mlp_out", b.mlp_out);
        put_linear(p + "modulation", b.modulation);
        put(p + "attn_gate", b.attn_gate);
        put(p + "mlp_gate", b.mlp_gate);
    }
    put("final_norm", final_norm);
    put_linear("final_modulation", final_modulation);
    put_linear("final_proj", final_proj);
    put_linear("head_in", head_in);
    put_linear("head_out", head_out);
    return out;
}

std::vector<Var> ModelParams::parameters() const {
    std::vector<Var> out;
    for (auto& [name, v] : named_parameters()) out.push_back(v);
    return out;
}

Var condition(const ModelParams& m, std::span<const double> t, std::span<const std::size_t> labels) {
    const ModelConfig& c = m.config;
    const std::size_t half = c.time_freq_dim / 2;
    nk::Tensor feat(nk::Shape{t.size(), c.time_freq_dim});
    for (std::size_t b = 0; b < t.size(); ++b) {
        for (std::size_t i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
            const double arg = t[b] * c.time_scale * freq;
            feat(b, i) = std::cos(arg);
            feat(b, half + i) = std::sin(arg);
        }
    }
    Var cond = linear(ad::silu(linear(Var::constant(std::move(feat)), m.time_in)), m.time_out);
    if (m.label_table.defined()) {
        if (!labels.empty() && labels.size() != t.size()) {
            throw DimensionError("condition: " + std::to_string(labels.size()) + " labels for " +
                                 std::to_string(t.size()) + " timesteps");
        }
        std::vector<std::size_t> idx(t.size(), c.num_classes);
        for (std::size_t b = 0; b < labels.size(); ++b) {
            if (labels[b] > c.num_classes) throw DomainError("condition: label out of range");
            idx[b] = labels[b];
        }
        cond = ad::add(cond, ad::gather_rows(m.label_table, idx));
    } else if (!labels.empty()) {
        throw ConfigError("condition: model has no label embedding");
    }
    return cond;
}

Var velocity_graph(const ModelParams& m, const Var& tokens, std::size_t batch, const rope::Coords& coords,
                   std::span<const double> t, std::span<const std::size_t> labels, std::optional<nk::Grid2> grid,
                   const ForwardOptions& options) {
    const ModelConfig& c = m.config;
    if (c.mode != Mode::generative) throw ConfigError("velocity_graph: model is in recognition mode");
    if (tokens.value().rank() != 2 || tokens.shape()[1] != c.patch_features() || batch == 0 ||
        tokens.shape()[0] % batch != 0) {
        throw DimensionError("velocity_graph: tokens must be [batch*n, " + std::to_string(c.patch_features()) +
                             "], got " + nk::shape_string(tokens.shape()));
    }
    if (t.size() != batch) throw DimensionError("velocity_graph: need one timestep per sample");
    const std::size_t n = tokens.shape()[0] / batch;

    std::optional<KvPool> pool;
    if (options.kv_window && options.kv_window->count() > 1) {
        if (!grid) throw ConfigError("velocity_graph: context drop needs the token grid");
        pool = KvPool{*grid, *options.kv_window};
    }
    const rope::RopeFreqs& freqs = options.freqs ? *options.freqs : m.freqs;
    const AttentionContext ctx = make_attention_context(batch, n, coords, freqs, {}, pool);

    const Var cond = condition(m, t, labels);
    Var h = linear(tokens, m.patch_embed);
    if (options.observer) options.observer(0, h.value());
    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
        const Modulation mod = modulation_for(m.blocks[l], cond, n);
        h = block_forward(h, m.blocks[l], c, ctx, &mod);
        if (options.observer) options.observer(l + 1, h.value());
    }
    const Var scale = ad::repeat_rows(linear(ad::silu(cond), m.final_modulation), n);
    h = ad::mul(ad::rms_norm(h, m.final_norm, c.norm_eps), ad::add_scalar(scale, 1.0));
    return linear(h, m.final_proj);
}

TokenBatch images_to_tokens(const ModelConfig& c, const nk::Tensor& images) {
    if (images.rank() != 4 || images.dim(3) != c.channels) {
        throw DimensionError("images_to_tokens: expected [B,H,W," + std::to_string(c.channels) + "], got " +
                             nk::shape_string(images.shape()));
    }
    const std::size_t B = images.dim(0), H = images.dim(1), W = images.dim(2);
    const std::size_t per_image = H * W * c.channels;
    TokenBatch out;
    out.batch = B;
    std::vector<double> flat;
    flat.reserve(images.size());
    const auto src = images.data();
    for (std::size_t b = 0; b < B; ++b) {
        const auto part = src.subspan(b * per_image, per_image);
        Patches p = patchify(nk::Tensor(nk::Shape{H, W, c.channels}, std::vector<double>(part.begin(), part.end())),
                             c.patch);
        flat.insert(flat.end(), p.tokens.values().begin(), p.tokens.values().end());
        out.grid = p.grid;
        if (b == 0) out.coords = std::move(p.coords);
    }
    out.tokens = nk::Tensor(nk::Shape{B * out.grid.count(), c.patch_features()}, std::move(flat));
    return out;
}

nk::Tensor tokens_to_images(const ModelConfig& c, const nk::Tensor& tokens, std::size_t batch, nk::Grid2 grid) {
    const std::size_t n = grid.count(), f = c.patch_features();
    if (tokens.rank() != 2 || tokens.dim(0) != batch * n || tokens.dim(1) != f) {
        throw DimensionError("tokens_to_images: unexpected token shape " + nk::shape_string(tokens.shape()));
    }
    std::vector<double> images;
    images.reserve(tokens.size());
    const auto src = tokens.data();
    for (std::size_t b = 0; b < batch; ++b) {
        const auto part = src.subspan(b * n * f, n * f);
        const nk::Tensor img = unpatchify(nk::Tensor(nk::Shape{n, f}, std::vector<double>(part.begin(), part.end())),
                                          grid, c.patch, c.channels);
        images.insert(images.end(), img.values().begin(), img.values().end());
    }
    return nk::Tensor(nk::Shape{batch, grid.h * c.patch, grid.w * c.patch, c.channels}, std::move(images));
}

nk::Tensor forward_velocity_batch(const ModelParams& m, const nk::Tensor& x_t, std::span<const double> t,
                                  std::span<const std::size_t> labels, const ForwardOptions& options) {
    const TokenBatch tb = images_to_tokens(m.config, x_t);
    const nk::Tensor out =
        velocity_graph(m, Var::constant(tb.tokens), tb.batch, tb.coords, t, labels, tb.grid, options).value();
    return tokens_to_images(m.config, out, tb.batch, tb.grid);
}

nk::Tensor forward_velocity(const ModelParams& m, const nk::Tensor& x_t, double t, std::optional<std::size_t> label,
                            const ForwardOptions& options) {
    if (x_t.rank() != 3) throw DimensionError("forward_velocity: expected [H,W,C], got " + nk::shape_string(x_t.shape()));
    nk::Shape batched{1, x_t.dim(0), x_t.dim(1), x_t.dim(2)};
    const double ts[1] = {t};
    std::size_t lab[1] = {label.value_or(0)};
    nk::Tensor out = forward_velocity_batch(m, x_t.reshaped(batched), ts,
                                            label ? std::span<const std::size_t>(lab) : std::span<const std::size_t>{},
                                            options);
    return out.reshaped(x_t.shape());
}

nk::Tensor forward_tokens(const ModelParams& m, const nk::Tensor& tokens, const rope::Coords& coords, double t,
                          std::optional<std::size_t> label) {
    const double ts[1] = {t};
    std::size_t lab[1] = {label.value_or(0)};
    return velocity_graph(m, Var::constant(tokens), 1, coords, ts,
                          label ? std::span<const std::size_t>(lab) : std::span<const std::size_t>{}, std::nullopt)
        .value();
}

Var recognition_graph(const ModelParams& m, const Var& tokens, std::size_t batch, const rope::Coords& coords,
                      const partition::TokenMask* mask) {
    const ModelConfig& c = m.config;
    if (c.mode != Mode::recognition) throw ConfigError("recognition_graph: model is in generative mode");
    if (tokens.value().rank() != 2 || tokens.shape()[1] != c.patch_features() || batch == 0 ||
        tokens.shape()[0] % batch != 0) {
        throw DimensionError("recognition_graph: tokens must be [batch*n, " + std::to_string(c.patch_features()) +
                             "], got " + nk::shape_string(tokens.shape()));
    }
    const std::size_t n = tokens.shape()[0] / batch;
    std::vector<std::uint8_t> valid;
    if (mask) {
        if (mask->batch() != batch || mask->padded_length != n) {
            throw DimensionError("recognition_graph: mask does not match the token batch");
        }
        valid = mask->flat();
    }
    const AttentionContext ctx = make_attention_context(batch, n, coords, m.freqs, valid);
    Var h = linear(tokens, m.patch_embed);
    for (const BlockParams& b : m.blocks) h = block_forward(h, b, c, ctx, nullptr);
    const Var pooled = ad::masked_mean_rows(h, batch, valid);
    return linear(ad::silu(linear(pooled, m.head_in)), m.head_out);
}

nk::Tensor recognition_forward(const ModelParams& m, const nk::Tensor& tokens, const rope::Coords& coords,
                               const partition::TokenMask* mask) {
    if (tokens.rank() != 3) {
        throw DimensionError("recognition_forward: expected [B,n,d], got " + nk::shape_string(tokens.shape()));
    }
    const std::size_t B = tokens.dim(0), n = tokens.dim(1);
    return recognition_graph(m, Var::constant(tokens.reshaped({B * n, tokens.dim(2)})), B, coords, mask).value();
}

}  // namespace nextdit::dit
