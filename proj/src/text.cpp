#include "lgvq/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "lgvq/error.hpp"
#include "lgvq/rng.hpp"

namespace lgvq::text {

namespace {
const std::vector<std::string> kReservedTokens = {"<pad>", "<sot>", "<eot>", "<unk>", "<mask>"};
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(char(std::tolower(c)));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

Vocabulary::Vocabulary() : Vocabulary(kReservedTokens) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < std::size_t(kReservedCount) ||
        !std::equal(kReservedTokens.begin(), kReservedTokens.end(), tokens_.begin())) {
        throw DataError("vocabulary must start with <pad> <sot> <eot> <unk> <mask>");
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i].empty()) throw DataError("empty vocabulary token at id " + std::to_string(i));
        if (!index_.emplace(tokens_[i], std::int64_t(i)).second) {
            throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
        }
    }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) { return Vocabulary(std::move(tokens)); }

Vocabulary Vocabulary::build(std::span<const std::string> texts) {
    std::set<std::string> words;
    for (const auto& t : texts)
        for (auto& w : split_words(t)) words.insert(std::move(w));
    std::vector<std::string> tokens = kReservedTokens;
    for (const auto& w : words)
        if (std::find(kReservedTokens.begin(), kReservedTokens.end(), w) == kReservedTokens.end()) tokens.push_back(w);
    return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] == '#') continue;
        tokens.push_back(line);
    }
    return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write vocabulary " + path.string());
    out << "# lgvq vocabulary v1\n"
        << "# One token per line; the N-th non-comment line holds the token with id N-1.\n"
        << "# Reserved ids: <pad>=0 <sot>=1 <eot>=2 <unk>=3 <mask>=4\n";
    for (const auto& t : tokens_) out << t << '\n';
}

std::int64_t Vocabulary::id(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::int64_t id) const {
    if (id < 0 || id >= size()) throw ContractError("token id " + std::to_string(id) + " out of range");
    return tokens_[std::size_t(id)];
}

std::vector<std::int64_t> TokenSequence::word_positions() const {
    std::vector<std::int64_t> pos;
    for (std::int64_t p = 1; p < eot_position; ++p) pos.push_back(p);
    return pos;
}

TokenSequence tokenize(std::string_view text, std::int64_t n, const Vocabulary& vocab) {
    if (n < 3) throw ContractError("sequence length must be at least 3");
    TokenSequence seq;
    seq.vocab_size = vocab.size();
    seq.ids.assign(std::size_t(n), kPad);
    seq.ids[0] = kSot;
    const auto words = split_words(text);
    const std::int64_t kept = std::min<std::int64_t>(std::int64_t(words.size()), n - 2);
    for (std::int64_t i = 0; i < kept; ++i) seq.ids[std::size_t(i + 1)] = vocab.id(words[std::size_t(i)]);
    seq.eot_position = kept + 1;
    seq.ids[std::size_t(seq.eot_position)] = kEot;
    return seq;
}

std::string detokenize(const TokenSequence& tokens, const Vocabulary& vocab) {
    std::string out;
    for (std::int64_t p = 1; p < tokens.eot_position; ++p) {
        if (!out.empty()) out.push_back(' ');
        out += vocab.token(tokens.ids[std::size_t(p)]);
    }
    return out;
}

ToyTextEncoder::ToyTextEncoder(Vocabulary vocab, std::int64_t dim, std::uint64_t seed)
    : vocab_(std::move(vocab)), dim_(dim) {
    if (dim < 1) throw ContractError("text dimension must be positive");
    auto rng = make_rng(seed, Stream::Text);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(dim)));
    table_.resize(std::size_t(vocab_.size() * dim));
    for (std::int64_t r = 0; r < vocab_.size(); ++r) {
        double norm = 0.0;
        do {
            norm = 0.0;
            for (std::int64_t c = 0; c < dim; ++c) {
                double& v = table_[std::size_t(r * dim + c)];
                v = normal(rng);
                norm += v * v;
            }
        } while (norm == 0.0);
    }
}

TextEmbeddings ToyTextEncoder::encode(const TokenSequence& tokens) const {
    const std::int64_t n = tokens.length();
    std::vector<double> seq(std::size_t(n * dim_));
    for (std::int64_t p = 0; p < n; ++p) {
        const auto row = word_embedding(tokens.ids[std::size_t(p)]);
        std::copy(row.begin(), row.end(), seq.begin() + p * dim_);
    }
    std::vector<double> global(std::size_t(dim_), 0.0);
    if (tokens.word_count() > 0) {
        for (std::int64_t p = 1; p < tokens.eot_position; ++p)
            for (std::int64_t c = 0; c < dim_; ++c) global[std::size_t(c)] += seq[std::size_t(p * dim_ + c)];
        for (auto& v : global) v /= double(tokens.word_count());
    } else {
        const auto row = word_embedding(kEot);
        global.assign(row.begin(), row.end());
    }
    std::copy(global.begin(), global.end(), seq.begin() + tokens.eot_position * dim_);
    return TextEmbeddings{ag::Tensor::constant({n, dim_}, std::move(seq)), std::move(global)};
}

std::span<const double> ToyTextEncoder::word_embedding(std::int64_t id) const {
    if (id < 0 || id >= vocab_.size()) throw ContractError("token id " + std::to_string(id) + " out of range");
    return std::span<const double>(table_).subspan(std::size_t(id * dim_), std::size_t(dim_));
}

std::uint64_t ToyTextEncoder::fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a over the raw bytes
    const auto* bytes = reinterpret_cast<const unsigned char*>(table_.data());
    for (std::size_t i = 0; i < table_.size() * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace lgvq::text
