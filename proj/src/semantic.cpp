#include "lgvq/semantic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lgvq/error.hpp"
#include "lgvq/rng.hpp"

namespace lgvq::semantic {

double cosine_sim(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("cosine_sim: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (!(na > 0.0) || !(nb > 0.0)) throw ContractError("cosine_sim: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

CodeTransformer::CodeTransformer(const AlignmentConfig& config, std::mt19937_64& rng) {
    const int d = config.code_dim;
    // Small enough that the code rows, not the positions, dominate the input.
    const double bound = 0.02 * std::sqrt(3.0);
    cls_ = nn::uniform_parameter({1, d}, bound, rng);
    positions_ = nn::uniform_parameter({1 + config.max_grid_positions, d}, bound, rng);
    for (int l = 0; l < config.transformer_layers; ++l) {
        blocks_.emplace_back(d, config.transformer_heads, config.mlp_ratio, rng);
    }
    ln_out_ = nn::LayerNorm(d);
    proj_ = nn::Linear(d, config.text_dim, rng);
}

CodeTokens CodeTransformer::operator()(const Tensor& code_rows) const {
    const std::int64_t len = code_rows.dim(0) + 1;
    if (len > positions_.dim(0)) {
        throw ShapeError("code grid of " + std::to_string(len - 1) + " positions exceeds the configured maximum " +
                         std::to_string(positions_.dim(0) - 1));
    }
    Tensor x = ag::add(ag::concat_rows(cls_, code_rows), ag::slice_rows(positions_, 0, len));
    for (const auto& block : blocks_) x = block(x);
    return CodeTokens{proj_(ln_out_(x))};
}

void CodeTransformer::collect(const std::string& prefix, nn::NamedParams& out) const {
    out.emplace_back(prefix + ".cls", cls_);
    out.emplace_back(prefix + ".positions", positions_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(prefix + ".block" + std::to_string(i), out);
    ln_out_.collect(prefix + ".ln_out", out);
    proj_.collect(prefix + ".proj", out);
}

Tensor gsa_loss(const Tensor& cls, const Tensor& eot, GsaVariant variant, double temperature) {
    if (cls.shape().size() != 2 || cls.shape() != eot.shape() || cls.dim(0) < 1) {
        throw ShapeError("gsa_loss: cls " + ag::shape_str(cls.shape()) + " vs eot " + ag::shape_str(eot.shape()));
    }
    std::vector<std::int64_t> diag(std::size_t(cls.dim(0)));
    std::iota(diag.begin(), diag.end(), 0);
    Tensor loss;
    if (variant == GsaVariant::Verbatim) {
        loss = ag::cross_entropy(ag::cosine_matrix(cls, eot), diag, ag::Reduction::Sum);
    } else {
        if (!(temperature > 0.0)) throw ContractError("gsa temperature must be positive");
        const Tensor i2t = ag::cross_entropy(ag::scale(ag::cosine_matrix(cls, eot), 1.0 / temperature), diag,
                                             ag::Reduction::Sum);
        const Tensor t2i = ag::cross_entropy(ag::scale(ag::cosine_matrix(eot, cls), 1.0 / temperature), diag,
                                             ag::Reduction::Sum);
        loss = ag::scale(ag::add(i2t, t2i), 0.5);
    }
    if (!std::isfinite(loss.item())) throw DivergenceError("global semantic alignment loss is not finite");
    return loss;
}

double sample_mask_ratio(std::mt19937_64& rng, const MaskDistribution& dist) {
    return sample_truncated_normal(rng, dist.mean, dist.stddev, dist.lo, dist.hi);
}

std::int64_t mask_count(double ratio, std::int64_t seq_len, std::int64_t word_count) {
    const std::int64_t wanted = std::llround(ratio * double(seq_len - 2));
    return std::clamp<std::int64_t>(wanted, 0, word_count);
}

MaskedTextPredictor::MaskedTextPredictor(const AlignmentConfig& config, std::mt19937_64& rng) {
    const int d = config.text_dim;
    mask_embeddings_ = nn::uniform_parameter({config.seq_len, d}, 1.0 / std::sqrt(double(d)), rng);
    adapter_ = nn::SelfAttentionBlock(d, config.adapter_heads, config.mlp_ratio, rng);
    for (int l = 0; l < config.decoder_layers; ++l) {
        decoder_.emplace_back(d, config.decoder_heads, config.mlp_ratio, rng);
    }
    ln_out_ = nn::LayerNorm(d);
    head_ = nn::Linear(d, int(config.vocab_size), rng);
}

MaskedSequence MaskedTextPredictor::apply_mask(const text::TokenSequence& tokens,
                                               const text::TextEmbeddings& embeddings, double ratio,
                                               std::mt19937_64& rng) const {
    auto candidates = tokens.word_positions();
    const auto count = mask_count(ratio, tokens.length(), std::int64_t(candidates.size()));
    // Partial Fisher-Yates: the first `count` slots become a uniform sample.
    for (std::int64_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::int64_t> pick(i, std::int64_t(candidates.size()) - 1);
        std::swap(candidates[std::size_t(i)], candidates[std::size_t(pick(rng))]);
    }
    candidates.resize(std::size_t(count));
    return apply_mask_at(tokens, embeddings, std::move(candidates), ratio);
}

MaskedSequence MaskedTextPredictor::apply_mask_at(const text::TokenSequence& tokens,
                                                  const text::TextEmbeddings& embeddings,
                                                  std::vector<std::int64_t> positions, double ratio) const {
    if (tokens.length() > mask_embeddings_.dim(0)) {
        throw ShapeError("token sequence longer than the configured mask table");
    }
    std::sort(positions.begin(), positions.end());
    MaskedSequence out;
    out.ratio = ratio;
    for (auto p : positions) {
        if (p < 1 || p >= tokens.eot_position) throw ContractError("mask position " + std::to_string(p) + " is not a word");
        out.targets.push_back(tokens.ids[std::size_t(p)]);
    }
    if (std::adjacent_find(positions.begin(), positions.end()) != positions.end()) {
        throw ContractError("duplicate mask position");
    }
    Tensor seq = embeddings.sequence;
    if (!positions.empty()) seq = ag::scatter_rows(seq, positions, ag::gather_rows(mask_embeddings_, positions));
    out.embeddings = adapter_(seq);
    out.positions = std::move(positions);
    return out;
}

Tensor MaskedTextPredictor::predict(const CodeTokens& codes, const MaskedSequence& masked) const {
    if (masked.positions.empty()) return Tensor::zeros({0, head_.weight.dim(1)});
    Tensor x = masked.embeddings;
    for (const auto& block : decoder_) x = block(x, codes.sequence);
    return head_(ag::gather_rows(ln_out_(x), masked.positions));
}

void MaskedTextPredictor::collect(const std::string& prefix, nn::NamedParams& out) const {
    out.emplace_back(prefix + ".mask_embeddings", mask_embeddings_);
    adapter_.collect(prefix + ".adapter", out);
    for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i].collect(prefix + ".decoder" + std::to_string(i), out);
    ln_out_.collect(prefix + ".ln_out", out);
    head_.collect(prefix + ".head", out);
}

Tensor mtp_loss(const Tensor& logits, std::span<const std::int64_t> targets) {
    if (targets.empty()) return Tensor::constant({}, {0.0});
    Tensor loss = ag::cross_entropy(logits, targets, ag::Reduction::Mean);
    if (!std::isfinite(loss.item())) throw DivergenceError("masked text prediction loss is not finite");
    return loss;
}

}  // namespace lgvq::semantic
