#pragma once

// Tape-free reverse-mode differentiation over dense f64 tensors.
//
// Every op returns a Var whose node remembers its inputs and a backward closure. Nodes are
// only linked into the graph when at least one input requires a gradient, so inference over
// constant inputs builds no graph at all.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "nextdit/numkernel/kernels.hpp"
#include "nextdit/numkernel/tensor.hpp"

namespace nextdit::nk::ad {

struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    Tensor& grad_buffer();
};

class Var {
public:
    Var() = default;

    static Var constant(Tensor value);
    static Var parameter(Tensor value);

    [[nodiscard]] const Tensor& value() const { return node_->value; }
    // Direct access for optimizers; only meaningful on leaves.
    [[nodiscard]] Tensor& mutable_value() { return node_->value; }
    [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
    [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }
    [[nodiscard]] bool has_grad() const { return node_ && node_->has_grad; }
    // Accumulated gradient; zeros when backward never reached this node.
    [[nodiscard]] Tensor grad() const;
    void zero_grad();

    [[nodiscard]] bool defined() const noexcept { return node_ != nullptr; }
    [[nodiscard]] const std::shared_ptr<Node>& node() const noexcept { return node_; }

private:
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    friend Var make_result(Tensor, std::initializer_list<Var>, std::function<void(Node&)>);

    std::shared_ptr<Node> node_;
};

Var make_result(Tensor value, std::initializer_list<Var> inputs, std::function<void(Node&)> backward);

// Seeds d(root)/d(root) = 1 and propagates to every reachable node. root must hold one element.
void backward(const Var& root);

// Linear algebra and elementwise ops.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double c);
// x[m,n] + b[n] for every row.
Var add_row(const Var& x, const Var& b);
// x * s where s holds a single element.
Var scale_by(const Var& x, const Var& s);
Var silu(const Var& x);
Var tanh(const Var& x);

// Row-layout ops.
// x[B,k] -> [B*n,k] with every row repeated n times.
Var repeat_rows(const Var& x, std::size_t n);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
// table[V,d] rows selected by index.
Var gather_rows(const Var& table, std::span<const std::size_t> index);

// RMS normalization over consecutive column groups of width gain.size() (a single group when
// gain spans all columns, one group per head for QK-Norm).
Var rms_norm(const Var& x, const Var& gain, double eps);

// Softmax over the last axis.
Var softmax(const Var& x);

// Rotates adjacent column pairs (2j, 2j+1) inside each head chunk of width 2*angles.cols().
// angles[r, j] is the rotation applied to pair j of row r in every head.
Var rotate_pairs(const Var& x, const Tensor& angles);

struct AttentionShape {
    std::size_t batch = 1;
    std::size_t q_len = 0;   // query tokens per sample
    std::size_t kv_len = 0;  // key/value tokens per sample
    std::size_t q_heads = 1;
    std::size_t kv_heads = 1;
    std::size_t head_dim = 0;
};

// Scaled dot-product attention with grouped KV heads. q is [B*q_len, q_heads*head_dim];
// k and v are [B*kv_len, kv_heads*head_dim]. Query head h reads KV head h / (q_heads/kv_heads).
// key_valid (optional, B*kv_len entries) excludes keys with a -inf logit.
Var attention(const Var& q, const Var& k, const Var& v, const AttentionShape& shape,
              std::span<const std::uint8_t> key_valid = {});

// Average-pools each sample's grid of rows. x is [B*h*w, c]; output [B*h'*w', c].
Var pool_rows(const Var& x, std::size_t batch, Grid2 grid, Grid2 window);

// Mean over each sample's rows, restricted to valid rows when `valid` is non-empty.
Var masked_mean_rows(const Var& x, std::size_t batch, std::span<const std::uint8_t> valid = {});

Var sum(const Var& x);
// sum((pred - target)^2) / denom
Var squared_error(const Var& pred, const Var& target, double denom);

}  // namespace nextdit::nk::ad
