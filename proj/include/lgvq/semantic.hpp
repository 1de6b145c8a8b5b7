#pragma once

// Semantic alignment: a transformer over code tokens with a learnable global
// token, InfoNCE alignment of that token with the caption's EOT embedding,
// and masked-word prediction from code tokens.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lgvq/autograd.hpp"
#include "lgvq/nn.hpp"
#include "lgvq/text.hpp"

namespace lgvq::semantic {

using ag::Tensor;

/// a.b / (|a||b|). Throws ContractError on a zero-norm input.
double cosine_sim(std::span<const double> a, std::span<const double> b);

struct AlignmentConfig {
    int code_dim = 16;         // d_z, also the code transformer width
    int text_dim = 64;         // d_t
    int max_grid_positions = 64;
    int seq_len = 16;          // n
    std::int64_t vocab_size = 0;
    int transformer_layers = 2;
    int transformer_heads = 4;
    int adapter_heads = 4;
    int decoder_layers = 1;
    int decoder_heads = 4;
    int mlp_ratio = 2;
};

/// Contextualized code sequence; row 0 is the global (CLS) token.
struct CodeTokens {
    Tensor sequence;  // (1 + grid, d_t)

    std::int64_t length() const { return sequence.dim(0); }
    Tensor cls() const { return ag::slice_rows(sequence, 0, 1); }
};

class CodeTransformer {
public:
    CodeTransformer() = default;
    CodeTransformer(const AlignmentConfig& config, std::mt19937_64& rng);

    /// code_rows: (grid, d_z) quantized embeddings of one image.
    CodeTokens operator()(const Tensor& code_rows) const;
    void collect(const std::string& prefix, nn::NamedParams& out) const;

private:
    Tensor cls_;        // (1, d_z)
    Tensor positions_;  // (1 + max grid, d_z)
    std::vector<nn::SelfAttentionBlock> blocks_;
    nn::LayerNorm ln_out_;
    nn::Linear proj_;   // d_z -> d_t
};

enum class GsaVariant { Verbatim, Symmetric };

/// -sum_i log softmax_j(s(cls_i, eot_j))[i]. The symmetric variant averages
/// both directions and divides similarities by `temperature`.
Tensor gsa_loss(const Tensor& cls, const Tensor& eot, GsaVariant variant = GsaVariant::Verbatim,
                double temperature = 1.0);

struct MaskDistribution {
    double mean = 0.55;
    double stddev = 0.25;
    double lo = 0.5;
    double hi = 1.0;
};

double sample_mask_ratio(std::mt19937_64& rng, const MaskDistribution& dist = {});

/// round(r * (n - 2)), capped at the number of word positions.
std::int64_t mask_count(double ratio, std::int64_t seq_len, std::int64_t word_count);

struct MaskedSequence {
    Tensor embeddings;                    // (n, d_t) after the adapter
    std::vector<std::int64_t> positions;  // ascending, word positions only
    std::vector<std::int64_t> targets;    // token ids at `positions`
    double ratio = 0.0;
};

/// Learnable per-position mask embeddings, the self-attention adapter, the
/// cross-attention decoder and the vocabulary head.
class MaskedTextPredictor {
public:
    MaskedTextPredictor() = default;
    MaskedTextPredictor(const AlignmentConfig& config, std::mt19937_64& rng);

    /// Masks round(r*(n-2)) word positions chosen uniformly without replacement.
    MaskedSequence apply_mask(const text::TokenSequence& tokens, const text::TextEmbeddings& embeddings,
                              double ratio, std::mt19937_64& rng) const;
    /// Masks exactly the given word positions.
    MaskedSequence apply_mask_at(const text::TokenSequence& tokens, const text::TextEmbeddings& embeddings,
                                 std::vector<std::int64_t> positions, double ratio = 0.0) const;
    /// Vocabulary logits at the masked positions, (|positions|, V).
    Tensor predict(const CodeTokens& codes, const MaskedSequence& masked) const;
    void collect(const std::string& prefix, nn::NamedParams& out) const;

private:
    Tensor mask_embeddings_;  // (n, d_t)
    nn::SelfAttentionBlock adapter_;
    std::vector<nn::CrossAttentionBlock> decoder_;
    nn::LayerNorm ln_out_;
    nn::Linear head_;
};

/// Mean cross-entropy over masked positions; 0 when nothing is masked.
Tensor mtp_loss(const Tensor& logits, std::span<const std::int64_t> targets);

}  // namespace lgvq::semantic
