#include <algorithm>
#include <cmath>
#include <string>

#include "nextdit/dit/model.hpp"
#include "nextdit/numkernel/error.hpp"
#include "nextdit/numkernel/random.hpp"

namespace nextdit::dit {

std::vector<ProbeRow> activation_probe(const ModelParams& m, std::size_t n_samples, std::span<const double> timesteps,
                                       const nk::Shape& image, std::uint64_t seed) {
    if (n_samples == 0) throw ConfigError("activation_probe: n_samples must be positive");
    if (image.size() != 3) throw DimensionError("activation_probe: image shape must be [H,W,C]");
    nk::Rng rng(seed);
    std::vector<ProbeRow> rows;
    for (const double t : timesteps) {
        const nk::Tensor x = rng.normal_tensor({n_samples, image[0], image[1], image[2]});
        const std::vector<double> ts(n_samples, t);
        ForwardOptions opts;
        opts.observer = [&](std::size_t layer, const nk::Tensor& hidden) {
            const nk::Tensor rms = nk::row_rms(hidden);
            double sum = 0, mx = 0;
            for (const double r : rms.values()) {
                sum += r;
                mx = std::max(mx, r);
            }
            rows.push_back({layer, t, sum / static_cast<double>(rms.size()), mx});
        };
        (void)forward_velocity_batch(m, x, ts, {}, opts);
    }
    return rows;
}

namespace {

// splitmix64 feeding Marsaglia's polar method. The probe draws ~1.3e9 weights at full width and
// the mt19937_64 path costs about four times as much per draw.
class FastNormal {
public:
    explicit FastNormal(std::uint64_t seed) : state_(seed) {}

    nk::Tensor tensor(nk::Shape shape, double std) {
        nk::Tensor out(std::move(shape));
        auto d = out.data();
        for (std::size_t i = 0; i < d.size(); i += 2) {
            double x, y, s;
            do {
                x = uniform_signed();
                y = uniform_signed();
                s = x * x + y * y;
            } while (s >= 1.0 || s == 0.0);
            const double f = std * std::sqrt(-2.0 * std::log(s) / s);
            d[i] = x * f;
            if (i + 1 < d.size()) d[i + 1] = y * f;
        }
        return out;
    }

private:
    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform_signed() { return static_cast<double>(next() >> 11) * 0x1.0p-52 - 1.0; }

    std::uint64_t state_;
};

double max_row_rms(const nk::Tensor& h) {
    const nk::Tensor rms = nk::row_rms(h);
    return *std::max_element(rms.values().begin(), rms.values().end());
}

}  // namespace

StackProbeResult random_stack_probe(const StackProbeConfig& sc) {
    ModelConfig c;
    c.dim = sc.dim;
    c.q_heads = sc.q_heads;
    c.kv_heads = sc.kv_heads;
    c.layers = sc.layers;
    c.mlp_ratio = sc.mlp_ratio;
    c.rope_axes = sc.rope_axes;
    c.init_std = sc.weight_std;
    c.validate();

    const rope::RopeFreqs freqs = rope::freq_matrix(c.rope_base, c.head_dim(), c.rope_axes);
    const std::size_t n = sc.grid.count();
    const AttentionContext ctx = make_attention_context(1, n, grid_coords(sc.grid), freqs);

    nk::Rng input_rng(sc.seed);
    const Var x0 = Var::constant(input_rng.normal_tensor({n, c.dim}));
    const Var zero = Var::constant(nk::Tensor(nk::Shape{n, c.dim}, 0.0));
    const Var gate = Var::constant(nk::Tensor(nk::Shape{n, c.dim}, sc.gate));
    const Modulation mod{zero, zero, gate, zero, zero, gate};

    ModelConfig sandwich = c, pre_only = c;
    sandwich.norm = NormStyle::sandwich;
    pre_only.norm = NormStyle::pre_only;

    StackProbeResult out;
    Var hs = x0, hp = x0;
    out.sandwich_rms_max.push_back(max_row_rms(x0.value()));
    out.pre_only_rms_max.push_back(max_row_rms(x0.value()));
    for (std::size_t l = 0; l < sc.layers; ++l) {
        // Plain normal weights: same std as the model init, without the truncation resampling cost.
        FastNormal rng(sc.seed + 1 + l);
        const std::size_t d = c.dim, kv = c.kv_heads * c.head_dim(), hidden = c.mlp_ratio * d;
        BlockParams b;
        b.attn.wq = Var::constant(rng.tensor({d, d}, sc.weight_std));
        b.attn.wk = Var::constant(rng.tensor({d, kv}, sc.weight_std));
        b.attn.wv = Var::constant(rng.tensor({d, kv}, sc.weight_std));
        b.attn.wo = Var::constant(rng.tensor({d, d}, sc.weight_std));
        b.attn.q_norm = Var::constant(nk::Tensor(nk::Shape{c.head_dim()}, 1.0));
        b.attn.k_norm = b.attn.q_norm;
        b.attn.q_heads = c.q_heads;
        b.attn.kv_heads = c.kv_heads;
        b.attn.head_dim = c.head_dim();
        b.attn.eps = c.norm_eps;
        b.attn_norm1 = Var::constant(nk::Tensor(nk::Shape{d}, 1.0));
        b.attn_norm2 = b.mlp_norm1 = b.mlp_norm2 = b.attn_norm1;
        b.mlp_in = {Var::constant(rng.tensor({d, hidden}, sc.weight_std)), {}};
        b.mlp_out = {Var::constant(rng.tensor({hidden, d}, sc.weight_std)), {}};

        hs = block_forward(hs, b, sandwich, ctx, &mod);
        hp = block_forward(hp, b, pre_only, ctx, &mod);
        out.sandwich_rms_max.push_back(max_row_rms(hs.value()));
        out.pre_only_rms_max.push_back(max_row_rms(hp.value()));
    }
    return out;
}

double increasing_fraction(std::span<const double> per_layer) {
    if (per_layer.size() < 2) return 0.0;
    std::size_t up = 0;
    for (std::size_t i = 1; i < per_layer.size(); ++i) up += per_layer[i] > per_layer[i - 1];
    return static_cast<double>(up) / static_cast<double>(per_layer.size() - 1);
}

}  // namespace nextdit::dit
