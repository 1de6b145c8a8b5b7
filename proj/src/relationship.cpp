#include "lgvq/relationship.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "lgvq/error.hpp"

namespace lgvq::relationship {

StopWords StopWords::builtin() {
    // Keep in sync with resources/stopwords.txt (checked by test_relationship).
    static const std::set<std::string> words = {
        "a",
        "an",
        "the",
        "this",
        "that",
        "these",
        "those",
        "is",
        "are",
        "was",
        "were",
        "be",
        "been",
        "being",
        "am",
        "has",
        "have",
        "had",
        "having",
        "do",
        "does",
        "did",
        "of",
        "on",
        "in",
        "at",
        "to",
        "into",
        "onto",
        "by",
        "for",
        "from",
        "with",
        "as",
        "and",
        "or",
        "but",
        "it",
        "its",
        "it's",
        "he",
        "she",
        "they",
        "him",
        "her",
        "them",
        "his",
        "their",
        "there",
        "here",
        "which",
        "who",
        "whom",
        "what",
        "very",
        "some",
        "any",
        "also",
        "so",
        "than",
        "too",
        "just",
    };
    return StopWords(words);
}

StopWords StopWords::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open stop-word list " + path.string());
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        words.insert(line);
    }
    return StopWords(std::move(words));
}

std::vector<std::int64_t> content_words(const text::TokenSequence& tokens, const text::Vocabulary& vocab,
                                        const StopWords& stopwords) {
    std::vector<std::int64_t> out;
    for (std::int64_t p = 1; p < tokens.eot_position; ++p) {
        const auto id = tokens.ids[std::size_t(p)];
        if (text::Vocabulary::is_special(id) || stopwords.contains(vocab.token(id))) continue;
        if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
    }
    return out;
}

WordPairSet select_word_pairs(const text::TokenSequence& tokens, const text::Vocabulary& vocab,
                              const StopWords& stopwords, std::size_t cap, std::mt19937_64& rng) {
    const auto words = content_words(tokens, vocab, stopwords);
    WordPairSet all;
    for (std::size_t i = 0; i < words.size(); ++i)
        for (std::size_t j = i + 1; j < words.size(); ++j) all.push_back({words[i], words[j]});
    if (all.size() <= cap) return all;

    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < cap; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    order.resize(cap);
    std::sort(order.begin(), order.end());
    WordPairSet out;
    out.reserve(cap);
    for (auto i : order) out.push_back(all[i]);
    return out;
}

WordCodeMatch match_word_to_code(std::int64_t word_id, std::span<const double> word_vec,
                                 const semantic::CodeTokens& code_tokens, const Tensor& code_rows) {
    const std::int64_t grid = code_tokens.length() - 1;
    const std::int64_t dt = code_tokens.sequence.dim(1);
    const std::int64_t dz = code_rows.dim(1);
    if (code_rows.dim(0) != grid) throw ShapeError("match_word_to_code: code rows do not match code tokens");
    if (std::int64_t(word_vec.size()) != dt) throw ShapeError("match_word_to_code: word dimension mismatch");
    WordCodeMatch m;
    m.word_id = word_id;
    double best = -INFINITY;
    const auto seq = code_tokens.sequence.data();
    for (std::int64_t p = 0; p < grid; ++p) {
        const double s = semantic::cosine_sim(word_vec, seq.subspan(std::size_t((p + 1) * dt), std::size_t(dt)));
        if (s > best) {
            best = s;
            m.grid_position = p;
        }
    }
    const auto row = code_rows.data().subspan(std::size_t(m.grid_position * dz), std::size_t(dz));
    m.code_embedding.assign(row.begin(), row.end());
    return m;
}

RasTerms ras_terms(const WordPairSet& pairs, const text::TextEncoder& encoder,
                   const semantic::CodeTokens& code_tokens, const Tensor& code_rows) {
    RasTerms out;
    if (pairs.empty()) {
        out.loss = Tensor::constant({}, {0.0});
        return out;
    }
    std::map<std::int64_t, WordCodeMatch> cache;
    auto match = [&](std::int64_t id) -> const WordCodeMatch& {
        auto it = cache.find(id);
        if (it == cache.end()) {
            it = cache.emplace(id, match_word_to_code(id, encoder.word_embedding(id), code_tokens, code_rows)).first;
        }
        return it->second;
    };
    std::vector<std::int64_t> rows_a, rows_b;
    for (const auto& pair : pairs) {
        out.first.push_back(match(pair.first));
        out.second.push_back(match(pair.second));
        rows_a.push_back(out.first.back().grid_position);
        rows_b.push_back(out.second.back().grid_position);
        out.word_similarity.push_back(
            semantic::cosine_sim(encoder.word_embedding(pair.first), encoder.word_embedding(pair.second)));
    }
    const Tensor code_sim = ag::cosine_rows(ag::gather_rows(code_rows, rows_a), ag::gather_rows(code_rows, rows_b));
    out.code_similarity.assign(code_sim.data().begin(), code_sim.data().end());
    const Tensor word_sim = Tensor::constant({std::int64_t(pairs.size())}, out.word_similarity);
    out.loss = ag::sum(ag::square(ag::sub(word_sim, code_sim)));
    if (!std::isfinite(out.loss.item())) throw DivergenceError("relationship alignment loss is not finite");
    return out;
}

}  // namespace lgvq::relationship
