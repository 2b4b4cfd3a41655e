#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nextdit/numkernel/autograd.hpp"
#include "nextdit/numkernel/kernels.hpp"
#include "nextdit/numkernel/random.hpp"
#include "nextdit/partitioner/partition.hpp"
#include "nextdit/rope/rope.hpp"

namespace nextdit::dit {

using nk::ad::Var;

enum class Mode { generative, recognition };
enum class NormStyle { sandwich, pre_only };

struct ModelConfig {
    std::size_t patch = 1;
    std::size_t channels = 1;
    std::size_t dim = 32;
    std::size_t layers = 2;
    std::size_t q_heads = 4;
    std::size_t kv_heads = 2;
    std::size_t mlp_ratio = 4;
    std::size_t rope_axes = 2;
    double rope_base = 10000.0;
    std::size_t time_freq_dim = 64;
    double time_scale = 1000.0;
    // generative: label classes (an extra null class is appended); recognition: head outputs
    std::size_t num_classes = 0;
    Mode mode = Mode::generative;
    NormStyle norm = NormStyle::sandwich;
    double norm_eps = 1e-6;
    double init_std = 0.02;
    std::size_t head_hidden = 0;

    [[nodiscard]] std::size_t head_dim() const noexcept { return dim / q_heads; }
    [[nodiscard]] std::size_t patch_features() const noexcept { return patch * patch * channels; }
    void validate() const;
};

struct Linear {
    Var w;  // [in, out]
    Var b;  // [out], may be undefined
};
Var linear(const Var& x, const Linear& l);

struct AttentionParams {
    Var wq, wk, wv, wo;
    Var q_norm, k_norm;  // per-head gains [head_dim]
    std::size_t q_heads = 1;
    std::size_t kv_heads = 1;
    std::size_t head_dim = 0;
    double eps = 1e-6;
};

struct BlockParams {
    AttentionParams attn;
    Var attn_norm1, attn_norm2, mlp_norm1, mlp_norm2;
    Linear mlp_in, mlp_out;
    // generative: conditioning -> (shift, scale, gate) for attention then MLP, zero initialized
    Linear modulation;
    // recognition: scalar gates, zero initialized
    Var attn_gate, mlp_gate;
};

struct ModelParams {
    ModelConfig config;
    rope::RopeFreqs freqs;
    Linear patch_embed;
    Linear time_in, time_out;
    Var label_table;
    std::vector<BlockParams> blocks;
    Var final_norm;
    Linear final_modulation;
    Linear final_proj;
    Linear head_in, head_out;

    // Stable names in a fixed order; used for checkpoints, optimizers and gradient checks.
    [[nodiscard]] std::vector<std::pair<std::string, Var>> named_parameters() const;
    [[nodiscard]] std::vector<Var> parameters() const;
};

// Truncated-normal projections, unit norm gains, zero AdaLN modulation and zero final layer.
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

BlockParams init_block(const ModelConfig& config, nk::Rng& rng);

// ---------------------------------------------------------------------------------------------
// Attention

struct KvPool {
    nk::Grid2 grid;
    nk::Grid2 window;
};

// Everything attention needs besides weights, for a batch of equally long sequences.
struct AttentionContext {
    std::size_t batch = 1;
    std::size_t tokens = 0;
    nk::Tensor q_angles;                 // [batch*tokens, head_dim/2]
    nk::Tensor kv_angles;                // rotation of (possibly pooled) keys
    std::vector<std::uint8_t> key_valid;  // empty = all valid
    std::optional<KvPool> kv_pool;
};

// coords holds one entry per row of the batch (batch*tokens), or `tokens` entries shared by
// every sample.
AttentionContext make_attention_context(std::size_t batch, std::size_t tokens, const rope::Coords& coords,
                                        const rope::RopeFreqs& freqs, std::span<const std::uint8_t> key_valid = {},
                                        std::optional<KvPool> kv_pool = std::nullopt);

Var attention_forward(const Var& x, const AttentionParams& p, const AttentionContext& ctx);

// Single-sequence GQA with QK-Norm and RoPE. mask marks pad tokens (excluded as keys);
// kv_pool average-pools keys and values on the token grid.
nk::Tensor gqa_attention(const nk::Tensor& x, const AttentionParams& p, const rope::RopeFreqs& freqs,
                         const rope::Coords& coords, std::span<const std::uint8_t> mask = {},
                         std::optional<KvPool> kv_pool = std::nullopt);

// ---------------------------------------------------------------------------------------------
// Blocks

// Per-branch modulation rows, each [rows, dim], already expanded to token rows.
struct Modulation {
    Var shift_attn, scale_attn, gate_attn;
    Var shift_mlp, scale_mlp, gate_mlp;
};

// cond [batch, dim] -> modulation expanded over `tokens` rows per sample.
Modulation modulation_for(const BlockParams& p, const Var& cond, std::size_t tokens);

Var block_forward(const Var& x, const BlockParams& p, const ModelConfig& config, const AttentionContext& ctx,
                  const Modulation* mod);

// Generative block on one sequence: x [n, dim], cond [dim].
nk::Tensor sandwich_block(const nk::Tensor& x, const nk::Tensor& cond, const BlockParams& p, const ModelConfig& config,
                          const rope::RopeFreqs& freqs, const rope::Coords& coords);

// ---------------------------------------------------------------------------------------------
// Tokens

struct Patches {
    nk::Tensor tokens;  // [(H/P)(W/P), P*P*C]
    rope::Coords coords;
    nk::Grid2 grid;
};

Patches patchify(const nk::Tensor& image, std::size_t patch);
nk::Tensor unpatchify(const nk::Tensor& tokens, nk::Grid2 grid, std::size_t patch, std::size_t channels);
rope::Coords grid_coords(nk::Grid2 grid);

// Images [B, H, W, C] <-> batched tokens [B*n, P*P*C] in sample-major order.
struct TokenBatch {
    nk::Tensor tokens;
    std::size_t batch = 0;
    nk::Grid2 grid;
    rope::Coords coords;  // n entries shared by every sample
};
TokenBatch images_to_tokens(const ModelConfig& config, const nk::Tensor& images);
nk::Tensor tokens_to_images(const ModelConfig& config, const nk::Tensor& tokens, std::size_t batch, nk::Grid2 grid);

// ---------------------------------------------------------------------------------------------
// Full network

struct ForwardOptions {
    const rope::RopeFreqs* freqs = nullptr;   // overrides the model table (scaled RoPE)
    std::optional<nk::Grid2> kv_window;       // context drop window for every layer
    // Called with (layer, hidden) for the embedded input (layer 0) and after every block.
    std::function<void(std::size_t, const nk::Tensor&)> observer;
};

// Sinusoidal features of t followed by the two-layer time MLP (plus label embedding).
Var condition(const ModelParams& m, std::span<const double> t, std::span<const std::size_t> labels);

// Graph over batched tokens [batch*tokens, P*P*C] -> velocity tokens of the same shape.
Var velocity_graph(const ModelParams& m, const Var& tokens, std::size_t batch, const rope::Coords& coords,
                   std::span<const double> t, std::span<const std::size_t> labels, std::optional<nk::Grid2> grid,
                   const ForwardOptions& options = {});

// x_t [H, W, C] -> velocity [H, W, C].
nk::Tensor forward_velocity(const ModelParams& m, const nk::Tensor& x_t, double t,
                            std::optional<std::size_t> label = std::nullopt, const ForwardOptions& options = {});

// x_t [B, H, W, C]; t has B entries; labels is empty or has B entries.
nk::Tensor forward_velocity_batch(const ModelParams& m, const nk::Tensor& x_t, std::span<const double> t,
                                  std::span<const std::size_t> labels = {}, const ForwardOptions& options = {});

// Token-level forward with explicit coordinates: tokens [n, P*P*C] -> [n, P*P*C].
nk::Tensor forward_tokens(const ModelParams& m, const nk::Tensor& tokens, const rope::Coords& coords, double t,
                          std::optional<std::size_t> label = std::nullopt);

// Recognition mode. tokens [B, n, P*P*C]; coords has n entries (shared) or B*n entries.
// Pad tokens are excluded from attention keys and from the pooled class token.
Var recognition_graph(const ModelParams& m, const Var& tokens, std::size_t batch, const rope::Coords& coords,
                      const partition::TokenMask* mask);
nk::Tensor recognition_forward(const ModelParams& m, const nk::Tensor& tokens, const rope::Coords& coords,
                               const partition::TokenMask* mask = nullptr);

// ---------------------------------------------------------------------------------------------
// Activation probe

struct ProbeRow {
    std::size_t layer = 0;
    double t = 0;
    double rms_mean = 0;
    double rms_max = 0;
};
inline constexpr const char* kProbeCsvHeader = "layer,t,rms_mean,rms_max";

// Feeds n_samples standard-normal inputs of size `image` ([H,W,C]) at each timestep and records
// per-token hidden RMS after the embedding (layer 0) and after every block.
std::vector<ProbeRow> activation_probe(const ModelParams& m, std::size_t n_samples, std::span<const double> timesteps,
                                       const nk::Shape& image, std::uint64_t seed);

// Random-weight stack compared under both normalization styles with identical weights, input
// and gate values. Weights are drawn one layer at a time so wide stacks fit in memory.
struct StackProbeConfig {
    std::size_t dim = 2304;
    std::size_t q_heads = 32;
    std::size_t kv_heads = 8;
    std::size_t layers = 24;
    std::size_t mlp_ratio = 4;
    std::size_t rope_axes = 3;
    nk::Grid2 grid{2, 2};
    double weight_std = 0.02;
    double gate = 1.0;  // gate pre-activation on both branches
    std::uint64_t seed = 0;
};

struct StackProbeResult {
    std::vector<double> sandwich_rms_max;  // index 0 = input
    std::vector<double> pre_only_rms_max;
};

StackProbeResult random_stack_probe(const StackProbeConfig& config);

// Fraction of consecutive layers whose value strictly increases.
double increasing_fraction(std::span<const double> per_layer);

// ---------------------------------------------------------------------------------------------
// Checkpoints: NKA1 archive whose manifest lists "__config__" followed by named_parameters().

void save_model(const std::string& path, const ModelParams& m);
ModelParams load_model(const std::string& path);

}  // namespace nextdit::dit
