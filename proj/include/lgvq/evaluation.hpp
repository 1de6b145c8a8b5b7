#pragma once

// Diagnostics over a trained model: reconstruction PSNR, codebook usage,
// masked-word recall, image-to-text retrieval, code/word similarity error
// and codebook image dumps.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgvq/dataset.hpp"
#include "lgvq/model.hpp"

namespace lgvq::eval {

/// 10*log10(1/mse), capped at 100 dB below mse 1e-10.
double psnr_from_mse(double mse);
/// Throws ShapeError when the images differ in shape.
double psnr(const Image& reference, const Image& reconstruction);

struct UsageStats {
    double usage_pct = 0.0;
    double perplexity = 0.0;
    std::vector<std::int64_t> counts;  // per code
};

/// Throws DataError when the counts sum to zero.
UsageStats usage_from_counts(std::vector<std::int64_t> counts);

/// Fraction of rows whose target is among the `top` largest logits. Equal
/// logits rank by lower index first.
double recall_at_k(std::span<const double> logits, std::int64_t vocab, std::span<const std::int64_t> targets,
                   int top);

/// Row-wise top-k hit rate of `similarity` (n x n) against the diagonal.
/// Equal similarities rank by lower index first.
double retrieval_accuracy(std::span<const double> similarity, std::int64_t n, int top);

/// One record pushed through the frozen model.
struct RecordEncoding {
    std::vector<std::int64_t> indices;
    ag::Tensor code_rows;  // (grid, d_z)
    semantic::CodeTokens tokens;
    Image reconstruction;  // clamped
};

std::vector<RecordEncoding> encode_records(const LgvqModel& model, const Dataset& data, int chunk = 8);

UsageStats codebook_usage(const LgvqModel& model, std::span<const RecordEncoding> encodings);

struct RecallResult {
    double recall = 0.0;
    std::int64_t scored_positions = 0;
    std::int64_t evaluated_captions = 0;
    std::int64_t skipped_captions = 0;
};

/// Caption 0 of every record with exactly `k_masked` word positions masked,
/// drawn from a generator keyed on (seed, record). Candidates are the full
/// vocabulary; each masked position is scored separately.
RecallResult masked_word_recall(const LgvqModel& model, const Dataset& data,
                                std::span<const RecordEncoding> encodings, int k_masked, int top,
                                std::uint64_t seed);

/// Ranks caption 0 of every record against each image by cos(CLS, EOT).
double image_to_text_retrieval(const LgvqModel& model, const Dataset& data,
                               std::span<const RecordEncoding> encodings, int top);

/// Mean squared gap between word and matched-code similarity over every
/// selected pair of every caption 0. Empty when there are no pairs.
std::optional<double> code_word_similarity_mse(const LgvqModel& model, const Dataset& data,
                                               std::span<const RecordEncoding> encodings, std::uint64_t seed);

struct EvalReport {
    double psnr_db = 0.0;
    double codebook_usage_pct = 0.0;
    double codebook_perplexity = 0.0;
    double recall_at_1 = 0.0;
    double retrieval_top1 = 0.0;
    std::optional<double> sim_mse;
    std::int64_t records = 0;
    std::int64_t recall_skipped_captions = 0;
    std::int64_t step = 0;

    std::string to_json() const;
    /// One {"metric": name, "value": v} record per line.
    std::string to_jsonl() const;
};

EvalReport evaluate(const LgvqModel& model, const Dataset& data, std::int64_t step = 0);

/// Writes codebook_<k>.png for every entry plus codebook_grid.png.
void dump_codebook_images(const LgvqModel& model, const std::filesystem::path& dir);
/// Rows and columns of the patch grid for K entries.
std::pair<int, int> codebook_tiling(int entries);

struct SimilarityDiagnostic {
    std::size_t record = 0;
    std::vector<std::string> words;
    std::vector<double> word_similarity;  // words x words
    std::vector<double> code_similarity;  // words x words, matched code rows
};

/// Content words of caption 0 of each record and their pairwise similarities.
std::vector<SimilarityDiagnostic> similarity_diagnostics(const LgvqModel& model, const Dataset& data,
                                                         std::span<const RecordEncoding> encodings);

/// similarity.json, similarity_<record>.png, usage_histogram.csv/.png
void write_diagnostics(const LgvqModel& model, const Dataset& data, const std::filesystem::path& dir);

std::string similarity_json(std::span<const SimilarityDiagnostic> diagnostics);
std::vector<SimilarityDiagnostic> parse_similarity_json(const std::string& text);

}  // namespace lgvq::eval
