#pragma once

// Tokenization and frozen text encoding.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lgvq/autograd.hpp"

namespace lgvq::text {

inline constexpr std::int64_t kPad = 0;
inline constexpr std::int64_t kSot = 1;
inline constexpr std::int64_t kEot = 2;
inline constexpr std::int64_t kUnk = 3;
inline constexpr std::int64_t kMask = 4;
inline constexpr std::int64_t kReservedCount = 5;

/// Lower-cases and splits on anything that is not a letter or digit.
std::vector<std::string> split_words(std::string_view text);

class Vocabulary {
public:
    Vocabulary();

    /// Reserved tokens followed by every distinct word of `texts`, sorted.
    static Vocabulary build(std::span<const std::string> texts);
    static Vocabulary load(const std::filesystem::path& path);
    static Vocabulary from_tokens(std::vector<std::string> tokens);
    void save(const std::filesystem::path& path) const;

    std::int64_t id(std::string_view word) const;
    const std::string& token(std::int64_t id) const;
    std::int64_t size() const { return std::int64_t(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    static bool is_special(std::int64_t id) { return id >= 0 && id < kReservedCount; }

private:
    explicit Vocabulary(std::vector<std::string> tokens);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int64_t> index_;
};

/// SOT, up to n-2 word ids, EOT, then PAD up to length n.
struct TokenSequence {
    std::vector<std::int64_t> ids;
    std::int64_t eot_position = 1;
    std::int64_t vocab_size = 0;

    std::int64_t length() const { return std::int64_t(ids.size()); }
    std::int64_t word_count() const { return eot_position - 1; }
    /// Positions 1 .. eot_position-1.
    std::vector<std::int64_t> word_positions() const;
};

TokenSequence tokenize(std::string_view text, std::int64_t n, const Vocabulary& vocab);
/// Words between SOT and EOT, space separated.
std::string detokenize(const TokenSequence& tokens, const Vocabulary& vocab);

struct TextEmbeddings {
    ag::Tensor sequence;         // (n, d_t) constant
    std::vector<double> global;  // row of `sequence` at the EOT position
};

/// Frozen text encoder. Implementations must be read-only after
/// construction; nothing they return carries gradient.
class TextEncoder {
public:
    virtual ~TextEncoder() = default;

    virtual std::int64_t dim() const = 0;
    virtual const Vocabulary& vocab() const = 0;
    virtual TextEmbeddings encode(const TokenSequence& tokens) const = 0;
    /// Input token-embedding table row (not a contextual output).
    virtual std::span<const double> word_embedding(std::int64_t id) const = 0;
    /// Hash of all frozen weights, for checking nothing modified them.
    virtual std::uint64_t fingerprint() const = 0;
};

/// Seeded random embedding table. The sequence output is the table row per
/// position; the EOT row is replaced by the mean of the word rows.
class ToyTextEncoder final : public TextEncoder {
public:
    ToyTextEncoder(Vocabulary vocab, std::int64_t dim, std::uint64_t seed);

    std::int64_t dim() const override { return dim_; }
    const Vocabulary& vocab() const override { return vocab_; }
    TextEmbeddings encode(const TokenSequence& tokens) const override;
    std::span<const double> word_embedding(std::int64_t id) const override;
    std::uint64_t fingerprint() const override;

private:
    Vocabulary vocab_;
    std::int64_t dim_;
    std::vector<double> table_;
};

}  // namespace lgvq::text
