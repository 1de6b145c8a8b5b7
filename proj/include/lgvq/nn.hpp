#pragma once

// Small trainable building blocks over lgvq::ag.

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lgvq/autograd.hpp"

namespace lgvq::nn {

using ag::Tensor;

/// Ordered (name, parameter) list; handles share storage with the module.
using NamedParams = std::vector<std::pair<std::string, Tensor>>;

Tensor uniform_parameter(ag::Shape shape, double bound, std::mt19937_64& rng);
Tensor constant_parameter(ag::Shape shape, double value);

struct Linear {
    Tensor weight;  // (in, out)
    Tensor bias;    // (out)

    Linear() = default;
    Linear(int in, int out, std::mt19937_64& rng);
    Tensor operator()(const Tensor& x) const { return ag::linear(x, weight, bias); }
    void collect(const std::string& prefix, NamedParams& out) const;
};

struct Conv2d {
    Tensor weight;  // (k, k, in, out)
    Tensor bias;
    int stride = 1;
    int pad = 1;

    Conv2d() = default;
    Conv2d(int in, int out, int kernel, int stride, int pad, std::mt19937_64& rng);
    Tensor operator()(const Tensor& x) const { return ag::conv2d(x, weight, bias, stride, pad); }
    void collect(const std::string& prefix, NamedParams& out) const;
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;

    LayerNorm() = default;
    explicit LayerNorm(int dim);
    Tensor operator()(const Tensor& x) const { return ag::layer_norm(x, gamma, beta); }
    void collect(const std::string& prefix, NamedParams& out) const;
};

/// Multi-head attention with query/key/value/output projections.
struct MultiHeadAttention {
    Linear q, k, v, o;
    int heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(int dim, int heads, std::mt19937_64& rng);
    Tensor operator()(const Tensor& queries, const Tensor& context) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

struct Mlp {
    Linear up, down;

    Mlp() = default;
    Mlp(int dim, int hidden, std::mt19937_64& rng);
    Tensor operator()(const Tensor& x) const { return down(ag::silu(up(x))); }
    void collect(const std::string& prefix, NamedParams& out) const;
};

/// Pre-norm transformer block: x + SA(LN x), then x + MLP(LN x).
struct SelfAttentionBlock {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    Mlp mlp;

    SelfAttentionBlock() = default;
    SelfAttentionBlock(int dim, int heads, int mlp_ratio, std::mt19937_64& rng);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

/// Pre-norm cross-attention block: queries attend to a separate context.
struct CrossAttentionBlock {
    LayerNorm ln_q, ln_ctx, ln_mlp;
    MultiHeadAttention attn;
    Mlp mlp;

    CrossAttentionBlock() = default;
    CrossAttentionBlock(int dim, int heads, int mlp_ratio, std::mt19937_64& rng);
    Tensor operator()(const Tensor& x, const Tensor& context) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

}  // namespace lgvq::nn
