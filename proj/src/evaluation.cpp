#include "lgvq/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "lgvq/error.hpp"
#include "lgvq/rng.hpp"

namespace lgvq::eval {
namespace {

// Rank of `index` within `row` when sorted descending, lower index first on ties.
std::int64_t rank_of(std::span<const double> row, std::int64_t index) {
    const double v = row[std::size_t(index)];
    std::int64_t rank = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (row[j] > v || (row[j] == v && std::int64_t(j) < index)) ++rank;
    }
    return rank;
}

// Blue for -1, white for 0, red for +1.
void diverging_colour(double v, double* rgb) {
    v = std::clamp(v, -1.0, 1.0);
    if (v >= 0) {
        rgb[0] = 1.0;
        rgb[1] = 1.0 - v;
        rgb[2] = 1.0 - v;
    } else {
        rgb[0] = 1.0 + v;
        rgb[1] = 1.0 + v;
        rgb[2] = 1.0;
    }
}

void paint_matrix(Image& img, std::span<const double> m, int n, int x0, int cell) {
    double rgb[3];
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            diverging_colour(m[std::size_t(i) * n + j], rgb);
            for (int y = 0; y < cell; ++y) {
                for (int x = 0; x < cell; ++x) {
                    for (int c = 0; c < 3; ++c) img.at(i * cell + y, x0 + j * cell + x, c) = rgb[c];
                }
            }
        }
    }
}

text::TokenSequence caption_tokens(const LgvqModel& model, const Dataset& data, std::size_t r) {
    const auto& caps = data.record(r).captions;
    if (caps.empty()) throw DataError("record " + std::to_string(r) + " has no captions");
    return text::tokenize(caps.front(), model.config().text_len, model.vocab());
}

}  // namespace

double psnr_from_mse(double mse) {
    if (mse < 1e-10) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double psnr(const Image& reference, const Image& reconstruction) {
    if (reference.height != reconstruction.height || reference.width != reconstruction.width ||
        reference.channels != reconstruction.channels) {
        throw ShapeError("psnr: image shapes differ");
    }
    if (reference.pixels.empty()) throw ShapeError("psnr: empty image");
    double acc = 0.0;
    for (std::size_t i = 0; i < reference.pixels.size(); ++i) {
        const double d = reference.pixels[i] - reconstruction.pixels[i];
        acc += d * d;
    }
    return psnr_from_mse(acc / double(reference.pixels.size()));
}

UsageStats usage_from_counts(std::vector<std::int64_t> counts) {
    const std::int64_t total = std::accumulate(counts.begin(), counts.end(), std::int64_t(0));
    if (total <= 0) throw DataError("codebook usage over an empty set");
    UsageStats s;
    std::int64_t used = 0;
    double entropy = 0.0;
    for (auto c : counts) {
        if (c == 0) continue;
        ++used;
        const double p = double(c) / double(total);
        entropy -= p * std::log(p);
    }
    s.usage_pct = 100.0 * double(used) / double(counts.size());
    s.perplexity = std::exp(entropy);
    s.counts = std::move(counts);
    return s;
}

double recall_at_k(std::span<const double> logits, std::int64_t vocab, std::span<const std::int64_t> targets,
                   int top) {
    if (targets.empty()) return 0.0;
    if (std::int64_t(logits.size()) != std::int64_t(targets.size()) * vocab) {
        throw ShapeError("recall_at_k: logits do not match targets x vocab");
    }
    std::int64_t hits = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (rank_of(logits.subspan(i * std::size_t(vocab), std::size_t(vocab)), targets[i]) < top) ++hits;
    }
    return double(hits) / double(targets.size());
}

double retrieval_accuracy(std::span<const double> similarity, std::int64_t n, int top) {
    if (n == 0) return 0.0;
    if (std::int64_t(similarity.size()) != n * n) throw ShapeError("retrieval_accuracy: matrix is not n x n");
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (rank_of(similarity.subspan(std::size_t(i * n), std::size_t(n)), i) < top) ++hits;
    }
    return double(hits) / double(n);
}

std::vector<RecordEncoding> encode_records(const LgvqModel& model, const Dataset& data, int chunk) {
    if (data.empty()) throw DataError("evaluation needs a non-empty dataset");
    ag::NoGradGuard no_grad;
    std::vector<RecordEncoding> out;
    for (std::size_t start = 0; start < data.size(); start += std::size_t(chunk)) {
        const std::size_t end = std::min(data.size(), start + std::size_t(chunk));
        std::vector<Image> images;
        for (std::size_t r = start; r < end; ++r) images.push_back(data.image(r));
        const auto features = vq::encode_image(model.encoder, images_to_batch(images));
        const auto codes = vq::quantize(features, model.codebook);
        const auto recon = vq::decode_for_eval(model.decoder, codes.embeddings);
        const std::int64_t G = codes.positions_per_image();
        const auto rows = ag::reshape(codes.embeddings, {std::int64_t(end - start) * G, model.codebook.dim()});
        for (std::size_t b = 0; b < end - start; ++b) {
            RecordEncoding e;
            const auto idx = codes.image_indices(int(b));
            e.indices.assign(idx.begin(), idx.end());
            e.code_rows = ag::slice_rows(rows, std::int64_t(b) * G, std::int64_t(b + 1) * G);
            e.tokens = model.transformer(e.code_rows);
            e.reconstruction = recon[b];
            out.push_back(std::move(e));
        }
    }
    return out;
}

UsageStats codebook_usage(const LgvqModel& model, std::span<const RecordEncoding> encodings) {
    std::vector<std::int64_t> counts(std::size_t(model.codebook.size()), 0);
    for (const auto& e : encodings) {
        for (auto i : e.indices) ++counts[std::size_t(i)];
    }
    return usage_from_counts(std::move(counts));
}

RecallResult masked_word_recall(const LgvqModel& model, const Dataset& data,
                                std::span<const RecordEncoding> encodings, int k_masked, int top,
                                std::uint64_t seed) {
    if (k_masked < 1) throw ContractError("masked_word_recall: k_masked must be >= 1");
    ag::NoGradGuard no_grad;
    RecallResult res;
    std::int64_t hits = 0;
    const std::int64_t V = model.vocab().size();
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto tokens = caption_tokens(model, data, r);
        auto positions = tokens.word_positions();
        if (std::int64_t(positions.size()) < k_masked) {
            ++res.skipped_captions;
            continue;
        }
        auto rng = make_rng(seed, Stream::Eval, r);
        for (int i = 0; i < k_masked; ++i) {
            std::uniform_int_distribution<std::size_t> pick(std::size_t(i), positions.size() - 1);
            std::swap(positions[std::size_t(i)], positions[pick(rng)]);
        }
        positions.resize(std::size_t(k_masked));
        std::sort(positions.begin(), positions.end());
        const auto masked =
            model.predictor.apply_mask_at(tokens, model.text_encoder->encode(tokens), positions);
        const auto logits = model.predictor.predict(encodings[r].tokens, masked);
        for (std::size_t i = 0; i < masked.targets.size(); ++i) {
            if (rank_of(logits.data().subspan(i * std::size_t(V), std::size_t(V)), masked.targets[i]) < top) ++hits;
        }
        res.scored_positions += std::int64_t(masked.targets.size());
        ++res.evaluated_captions;
    }
    res.recall = res.scored_positions ? double(hits) / double(res.scored_positions) : 0.0;
    return res;
}

double image_to_text_retrieval(const LgvqModel& model, const Dataset& data,
                               std::span<const RecordEncoding> encodings, int top) {
    const std::int64_t n = std::int64_t(data.size());
    std::vector<std::vector<double>> eot;
    for (std::size_t r = 0; r < data.size(); ++r) {
        eot.push_back(model.text_encoder->encode(caption_tokens(model, data, r)).global);
    }
    std::vector<double> sim(std::size_t(n * n));
    for (std::int64_t i = 0; i < n; ++i) {
        const auto cls = encodings[std::size_t(i)].tokens.cls();
        for (std::int64_t j = 0; j < n; ++j) {
            sim[std::size_t(i * n + j)] = semantic::cosine_sim(cls.data(), eot[std::size_t(j)]);
        }
    }
    return retrieval_accuracy(sim, n, top);
}

std::optional<double> code_word_similarity_mse(const LgvqModel& model, const Dataset& data,
                                               std::span<const RecordEncoding> encodings, std::uint64_t seed) {
    ag::NoGradGuard no_grad;
    double acc = 0.0;
    std::int64_t count = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto tokens = caption_tokens(model, data, r);
        auto rng = make_rng(seed, Stream::Eval, r);
        const auto pairs = relationship::select_word_pairs(tokens, model.vocab(), model.stopwords,
                                                           std::size_t(model.config().pair_cap), rng);
        if (pairs.empty()) continue;
        const auto terms =
            relationship::ras_terms(pairs, *model.text_encoder, encodings[r].tokens, encodings[r].code_rows);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const double d = terms.word_similarity[i] - terms.code_similarity[i];
            acc += d * d;
        }
        count += std::int64_t(pairs.size());
    }
    if (count == 0) return std::nullopt;
    return acc / double(count);
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["records"] = records;
    j["psnr_db"] = psnr_db;
    j["codebook_usage_pct"] = codebook_usage_pct;
    j["codebook_perplexity"] = codebook_perplexity;
    j["recall_at_1"] = recall_at_1;
    j["recall_skipped_captions"] = recall_skipped_captions;
    j["retrieval_top1"] = retrieval_top1;
    j["sim_mse"] = sim_mse ? nlohmann::ordered_json(*sim_mse) : nlohmann::ordered_json(nullptr);
    return j.dump();
}

std::string EvalReport::to_jsonl() const {
    std::string out;
    auto line = [&](const char* name, const nlohmann::json& v) {
        out += nlohmann::ordered_json{{"metric", name}, {"value", v}}.dump() + "\n";
    };
    line("psnr_db", psnr_db);
    line("codebook_usage_pct", codebook_usage_pct);
    line("codebook_perplexity", codebook_perplexity);
    line("recall_at_1", recall_at_1);
    line("retrieval_top1", retrieval_top1);
    line("sim_mse", sim_mse ? nlohmann::json(*sim_mse) : nlohmann::json(nullptr));
    return out;
}

EvalReport evaluate(const LgvqModel& model, const Dataset& data, std::int64_t step) {
    const auto enc = encode_records(model, data, model.config().batch_size);
    EvalReport rep;
    rep.step = step;
    rep.records = std::int64_t(data.size());
    double psnr_sum = 0.0;
    for (std::size_t r = 0; r < data.size(); ++r) psnr_sum += psnr(data.image(r), enc[r].reconstruction);
    rep.psnr_db = psnr_sum / double(data.size());
    const auto usage = codebook_usage(model, enc);
    rep.codebook_usage_pct = usage.usage_pct;
    rep.codebook_perplexity = usage.perplexity;
    const auto seed = std::uint64_t(model.config().eval_seed);
    const auto recall = masked_word_recall(model, data, enc, model.config().eval_masked_words, 1, seed);
    rep.recall_at_1 = recall.recall;
    rep.recall_skipped_captions = recall.skipped_captions;
    rep.retrieval_top1 = image_to_text_retrieval(model, data, enc, 1);
    rep.sim_mse = code_word_similarity_mse(model, data, enc, seed);
    return rep;
}

std::pair<int, int> codebook_tiling(int entries) {
    if (entries < 1) throw ContractError("codebook_tiling: no entries");
    int rows = int(std::sqrt(double(entries)));
    while (rows * rows > entries) --rows;
    while (entries % rows != 0) --rows;
    return {rows, entries / rows};
}

void dump_codebook_images(const LgvqModel& model, const std::filesystem::path& dir) {
    ag::NoGradGuard no_grad;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    const int K = model.codebook.size();
    const int d = model.codebook.dim();
    const auto entries = ag::reshape(model.codebook.entries, {K, 1, 1, d});
    const auto patches = vq::decode_for_eval(model.decoder, entries);
    const auto [rows, cols] = codebook_tiling(K);
    const int f = patches.front().height;
    Image grid(rows * f, cols * f);
    for (int k = 0; k < K; ++k) {
        const auto& p = patches[std::size_t(k)];
        write_png(dir / ("codebook_" + std::to_string(k) + ".png"), p);
        const int gy = (k / cols) * f;
        const int gx = (k % cols) * f;
        for (int y = 0; y < f; ++y) {
            for (int x = 0; x < f; ++x) {
                for (int c = 0; c < 3; ++c) grid.at(gy + y, gx + x, c) = p.at(y, x, c);
            }
        }
    }
    write_png(dir / "codebook_grid.png", grid);
}

std::vector<SimilarityDiagnostic> similarity_diagnostics(const LgvqModel& model, const Dataset& data,
                                                         std::span<const RecordEncoding> encodings) {
    ag::NoGradGuard no_grad;
    std::vector<SimilarityDiagnostic> out;
    const auto& enc = *model.text_encoder;
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto tokens = caption_tokens(model, data, r);
        const auto words = relationship::content_words(tokens, model.vocab(), model.stopwords);
        SimilarityDiagnostic diag;
        diag.record = r;
        std::vector<std::vector<double>> codes;
        for (auto w : words) {
            diag.words.push_back(model.vocab().token(w));
            const auto match = relationship::match_word_to_code(w, enc.word_embedding(w), encodings[r].tokens,
                                                                encodings[r].code_rows);
            codes.push_back(match.code_embedding);
        }
        const std::size_t n = words.size();
        diag.word_similarity.resize(n * n);
        diag.code_similarity.resize(n * n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                diag.word_similarity[i * n + j] =
                    semantic::cosine_sim(enc.word_embedding(words[i]), enc.word_embedding(words[j]));
                diag.code_similarity[i * n + j] = semantic::cosine_sim(codes[i], codes[j]);
            }
        }
        out.push_back(std::move(diag));
    }
    return out;
}

std::string similarity_json(std::span<const SimilarityDiagnostic> diagnostics) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& d : diagnostics) {
        arr.push_back({{"record", d.record},
                       {"words", d.words},
                       {"word_similarity", d.word_similarity},
                       {"code_similarity", d.code_similarity}});
    }
    return arr.dump(1);
}

std::vector<SimilarityDiagnostic> parse_similarity_json(const std::string& text) {
    std::vector<SimilarityDiagnostic> out;
    for (const auto& j : nlohmann::json::parse(text)) {
        SimilarityDiagnostic d;
        d.record = j.at("record").get<std::size_t>();
        d.words = j.at("words").get<std::vector<std::string>>();
        d.word_similarity = j.at("word_similarity").get<std::vector<double>>();
        d.code_similarity = j.at("code_similarity").get<std::vector<double>>();
        out.push_back(std::move(d));
    }
    return out;
}

void write_diagnostics(const LgvqModel& model, const Dataset& data, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    const auto enc = encode_records(model, data, model.config().batch_size);
    const auto diags = similarity_diagnostics(model, data, enc);
    {
        std::ofstream f(dir / "similarity.json");
        if (!f) throw DataError("cannot write " + (dir / "similarity.json").string());
        f << similarity_json(diags) << "\n";
    }
    constexpr int kCell = 12;
    for (const auto& d : diags) {
        const int n = int(d.words.size());
        if (n == 0) continue;
        // word matrix on the left, matched code matrix on the right
        Image img(n * kCell, 2 * n * kCell + kCell);
        for (auto& p : img.pixels) p = 0.5;
        paint_matrix(img, d.word_similarity, n, 0, kCell);
        paint_matrix(img, d.code_similarity, n, n * kCell + kCell, kCell);
        write_png(dir / ("similarity_" + std::to_string(d.record) + ".png"), img);
    }

    const auto usage = codebook_usage(model, enc);
    {
        std::ofstream f(dir / "usage_histogram.csv");
        if (!f) throw DataError("cannot write " + (dir / "usage_histogram.csv").string());
        f << "code,count\n";
        for (std::size_t k = 0; k < usage.counts.size(); ++k) f << k << "," << usage.counts[k] << "\n";
    }
    constexpr int kBar = 4;
    constexpr int kHeight = 128;
    const auto peak = std::max<std::int64_t>(1, *std::max_element(usage.counts.begin(), usage.counts.end()));
    Image hist(kHeight, int(usage.counts.size()) * kBar);
    for (auto& p : hist.pixels) p = 1.0;
    for (std::size_t k = 0; k < usage.counts.size(); ++k) {
        const int h = int(std::lround(double(usage.counts[k]) / double(peak) * kHeight));
        for (int y = kHeight - h; y < kHeight; ++y) {
            for (int x = 0; x < kBar - 1; ++x) {
                hist.at(y, int(k) * kBar + x, 0) = 0.2;
                hist.at(y, int(k) * kBar + x, 1) = 0.3;
                hist.at(y, int(k) * kBar + x, 2) = 0.7;
            }
        }
    }
    write_png(dir / "usage_histogram.png", hist);
}

}  // namespace lgvq::eval
