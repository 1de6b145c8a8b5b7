#include "lgvq/nn.hpp"

#include <cmath>

namespace lgvq::nn {

Tensor uniform_parameter(ag::Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(std::size_t(ag::numel(shape)));
    for (auto& x : v) x = dist(rng);
    return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor constant_parameter(ag::Shape shape, double value) {
    std::vector<double> v(std::size_t(ag::numel(shape)), value);
    return Tensor::parameter(std::move(shape), std::move(v));
}

Linear::Linear(int in, int out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(double(in));
    weight = uniform_parameter({in, out}, bound, rng);
    bias = uniform_parameter({out}, bound, rng);
}

void Linear::collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
}

Conv2d::Conv2d(int in, int out, int kernel, int stride_, int pad_, std::mt19937_64& rng)
    : stride(stride_), pad(pad_) {
    // He-uniform, zero bias: there is no normalisation between convolutions,
    // so anything smaller lets a deep stack decay to its biases.
    const double bound = std::sqrt(6.0 / double(in * kernel * kernel));
    weight = uniform_parameter({kernel, kernel, in, out}, bound, rng);
    bias = constant_parameter({out}, 0.0);
}

void Conv2d::collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(int dim) : gamma(constant_parameter({dim}, 1.0)), beta(constant_parameter({dim}, 0.0)) {}

void LayerNorm::collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

MultiHeadAttention::MultiHeadAttention(int dim, int heads_, std::mt19937_64& rng)
    : q(dim, dim, rng), k(dim, dim, rng), v(dim, dim, rng), o(dim, dim, rng), heads(heads_) {}

Tensor MultiHeadAttention::operator()(const Tensor& queries, const Tensor& context) const {
    return o(ag::attention(q(queries), k(context), v(context), heads));
}

void MultiHeadAttention::collect(const std::string& prefix, NamedParams& out) const {
    q.collect(prefix + ".q", out);
    k.collect(prefix + ".k", out);
    v.collect(prefix + ".v", out);
    o.collect(prefix + ".o", out);
}

Mlp::Mlp(int dim, int hidden, std::mt19937_64& rng) : up(dim, hidden, rng), down(hidden, dim, rng) {}

void Mlp::collect(const std::string& prefix, NamedParams& out) const {
    up.collect(prefix + ".up", out);
    down.collect(prefix + ".down", out);
}

SelfAttentionBlock::SelfAttentionBlock(int dim, int heads, int mlp_ratio, std::mt19937_64& rng)
    : ln1(dim), ln2(dim), attn(dim, heads, rng), mlp(dim, dim * mlp_ratio, rng) {}

Tensor SelfAttentionBlock::operator()(const Tensor& x) const {
    const Tensor h = ln1(x);
    const Tensor y = ag::add(x, attn(h, h));
    return ag::add(y, mlp(ln2(y)));
}

void SelfAttentionBlock::collect(const std::string& prefix, NamedParams& out) const {
    ln1.collect(prefix + ".ln1", out);
    attn.collect(prefix + ".attn", out);
    ln2.collect(prefix + ".ln2", out);
    mlp.collect(prefix + ".mlp", out);
}

CrossAttentionBlock::CrossAttentionBlock(int dim, int heads, int mlp_ratio, std::mt19937_64& rng)
    : ln_q(dim), ln_ctx(dim), ln_mlp(dim), attn(dim, heads, rng), mlp(dim, dim * mlp_ratio, rng) {}

Tensor CrossAttentionBlock::operator()(const Tensor& x, const Tensor& context) const {
    const Tensor y = ag::add(x, attn(ln_q(x), ln_ctx(context)));
    return ag::add(y, mlp(ln_mlp(y)));
}

void CrossAttentionBlock::collect(const std::string& prefix, NamedParams& out) const {
    ln_q.collect(prefix + ".ln_q", out);
    ln_ctx.collect(prefix + ".ln_ctx", out);
    attn.collect(prefix + ".attn", out);
    ln_mlp.collect(prefix + ".ln_mlp", out);
    mlp.collect(prefix + ".mlp", out);
}

}  // namespace lgvq::nn
