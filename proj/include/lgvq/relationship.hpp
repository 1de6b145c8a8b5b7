#pragma once

// Relationship alignment: match caption words to code positions through the
// contextual code tokens, then pull the cosine similarity of the matched
// quantized codes towards the similarity of the words.

#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lgvq/autograd.hpp"
#include "lgvq/semantic.hpp"
#include "lgvq/text.hpp"

namespace lgvq::relationship {

using ag::Tensor;

class StopWords {
public:
    StopWords() = default;
    explicit StopWords(std::set<std::string> words) : words_(std::move(words)) {}

    /// The list shipped in resources/stopwords.txt, compiled in.
    static StopWords builtin();
    static StopWords load(const std::filesystem::path& path);

    bool contains(const std::string& word) const { return words_.count(word) != 0; }
    const std::set<std::string>& words() const { return words_; }

private:
    std::set<std::string> words_;
};

/// Distinct non-special, non-stop-word ids of a caption in order of first
/// appearance.
std::vector<std::int64_t> content_words(const text::TokenSequence& tokens, const text::Vocabulary& vocab,
                                        const StopWords& stopwords);

struct WordPair {
    std::int64_t first = 0;
    std::int64_t second = 0;
    bool operator==(const WordPair&) const = default;
};
using WordPairSet = std::vector<WordPair>;

/// Every unordered pair of distinct content words; when there are more than
/// `cap`, a uniform subsample of `cap` pairs (kept in enumeration order).
WordPairSet select_word_pairs(const text::TokenSequence& tokens, const text::Vocabulary& vocab,
                              const StopWords& stopwords, std::size_t cap, std::mt19937_64& rng);

struct WordCodeMatch {
    std::int64_t word_id = 0;
    std::int64_t grid_position = 0;     // index into the code grid (Z_vt row - 1)
    std::vector<double> code_embedding;  // quantized row at that position (d_z)
};

/// Argmax of cos(word, Z_vt[1:]); lowest position wins ties. The CLS row
/// never participates.
WordCodeMatch match_word_to_code(std::int64_t word_id, std::span<const double> word_vec,
                                 const semantic::CodeTokens& code_tokens, const Tensor& code_rows);

struct RasTerms {
    Tensor loss;                      // sum of squared similarity gaps
    std::vector<WordCodeMatch> first;   // per pair
    std::vector<WordCodeMatch> second;  // per pair
    std::vector<double> word_similarity;
    std::vector<double> code_similarity;
};

/// code_rows: (grid, d_z) quantized embeddings of the image, normally gathered
/// from the codebook so the loss gradient lands on the matched entries.
RasTerms ras_terms(const WordPairSet& pairs, const text::TextEncoder& encoder,
                   const semantic::CodeTokens& code_tokens, const Tensor& code_rows);

inline Tensor ras_loss(const WordPairSet& pairs, const text::TextEncoder& encoder,
                       const semantic::CodeTokens& code_tokens, const Tensor& code_rows) {
    return ras_terms(pairs, encoder, code_tokens, code_rows).loss;
}

}  // namespace lgvq::relationship
