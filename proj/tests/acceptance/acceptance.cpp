// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../common/gradcheck.hpp"
#include "lgvq/checkpoint.hpp"
#include "lgvq/config.hpp"
#include "lgvq/evaluation.hpp"
#include "lgvq/relationship.hpp"
#include "lgvq/rng.hpp"
#include "lgvq/semantic.hpp"
#include "lgvq/toy_corpus.hpp"
#include "lgvq/trainer.hpp"
#include "lgvq/vq.hpp"

using namespace lgvq;
using ag::Tensor;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
    std::printf("CRITERION %d %s: %s (%s)\n", id, o.pass ? "PASS" : "FAIL", title.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

std::vector<double> normal_values(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

// ---------------------------------------------------------------- quantizer

Outcome quantizer_oracle() {
    const auto t0 = Clock::now();
    const int K = 16, d = 8, n = 1000;
    std::size_t mismatches = 0, ties = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto book = normal_values(K * d, 1000 + seed);
        // entries 3 and 11 coincide, so features placed on them tie
        std::copy(book.begin() + 3 * d, book.begin() + 4 * d, book.begin() + 11 * d);
        auto feats = normal_values(std::size_t(n) * d, 2000 + seed);
        for (int i = 0; i < 50; ++i) {
            const int src = (i % 2) ? 3 : 11;
            std::copy(book.begin() + src * d, book.begin() + (src + 1) * d, feats.begin() + i * d);
        }
        // midpoints between entries 0 and 1 are equidistant from both
        for (int i = 50; i < 100; ++i)
            for (int c = 0; c < d; ++c) feats[std::size_t(i * d + c)] = 0.5 * (book[std::size_t(c)] + book[std::size_t(d + c)]);

        vq::Codebook cb{Tensor::parameter({K, d}, book)};
        const auto grid = vq::quantize(Tensor::constant({1, 1, n, d}, feats), cb);
        const auto oracle = testing::brute_force_nearest(feats, book, d);
        for (int i = 0; i < n; ++i) mismatches += grid.indices[std::size_t(i)] != oracle[std::size_t(i)];
        for (int i = 0; i < 50; ++i) ties += grid.indices[std::size_t(i)] == 3;
    }
    const double secs = seconds_since(t0);
    const bool ok = mismatches == 0 && ties == 250 && secs < 5.0;
    return {ok, std::to_string(mismatches) + " mismatches in 5000, duplicate-entry ties to lowest " + std::to_string(ties) +
                    "/250, " + fmt("%.2f s", secs)};
}

// ----------------------------------------------------------------- gradients

text::Vocabulary small_vocab() {
    return text::Vocabulary::build(std::vector<std::string>{"red green blue square circle left right top"});
}

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::string where;
    bool routing = true;
    auto note = [&](const char* name, const testing::GradCheckResult& r) {
        if (r.worst_rel > worst) {
            worst = r.worst_rel;
            where = std::string(name) + " " + r.worst_where;
        }
    };

    // vq: each term against its own differentiable input, B=3, d_z=4
    {
        const auto x = Tensor::constant({3, 2, 2, 4}, normal_values(48, 1, 0.3));
        auto rec = Tensor::parameter({3, 2, 2, 4}, normal_values(48, 2, 0.3));
        auto f = Tensor::parameter({3, 1, 1, 4}, normal_values(12, 3));
        auto e = Tensor::parameter({3, 1, 1, 4}, normal_values(12, 4));
        vq::CodeGrid codes;
        codes.batch = 3;
        codes.height = codes.width = 1;
        codes.indices = {0, 1, 2};
        codes.embeddings = e;
        note("vq.reconstruction", testing::grad_check([&] { return vq::vq_loss(x, rec, f, codes, 0.25).reconstruction; }, {rec}));
        note("vq.codebook", testing::grad_check([&] { return vq::vq_loss(x, rec, f, codes, 0.25).codebook; }, {e}));
        note("vq.commitment", testing::grad_check([&] { return vq::vq_loss(x, rec, f, codes, 0.25).commitment; }, {f}));

        // stop-gradient routing: exact zeros across the split
        for (auto* t : {&rec, &f, &e}) t->zero_grad();
        vq::vq_loss(x, rec, f, codes, 0.25).codebook.backward();
        for (double g : f.grad()) routing = routing && g == 0.0;
        f.zero_grad();
        e.zero_grad();
        vq::vq_loss(x, rec, f, codes, 0.25).commitment.backward();
        for (double g : e.grad()) routing = routing && g == 0.0;
        e.zero_grad();
        f.zero_grad();
        vq::vq_loss(x, rec, f, codes, 0.25).reconstruction.backward();
        for (double g : e.grad()) routing = routing && g == 0.0;
        for (double g : f.grad()) routing = routing && g == 0.0;
    }

    // straight-through: the whole pipeline's codebook gradient comes only from the codebook term
    {
        std::mt19937_64 rng(5);
        vq::AutoencoderConfig cfg;
        cfg.downsample = 2;
        cfg.code_dim = 4;
        cfg.base_channels = 4;
        cfg.max_channels = 6;
        vq::Encoder enc(cfg, rng);
        vq::Decoder dec(cfg, rng);
        auto cb = vq::Codebook::uniform(6, 4, rng, 0.5);
        const auto x = Tensor::constant({3, 4, 4, 3}, normal_values(144, 6, 0.3));
        const auto f = vq::encode_image(enc, x);
        const auto codes = vq::quantize(f, cb);
        vq::vq_loss(x, vq::decode_codes(dec, vq::straight_through(f, codes)), f, codes, 0.25).reconstruction.backward();
        for (double g : cb.entries.grad()) routing = routing && g == 0.0;
    }

    // gsa + mtp through the code transformer and predictor, B=3, d_z=d_t=4, n=8
    {
        std::mt19937_64 init(5);
        const auto vocab = small_vocab();
        semantic::AlignmentConfig cfg;
        cfg.code_dim = 4;
        cfg.text_dim = 4;
        cfg.max_grid_positions = 4;
        cfg.seq_len = 8;
        cfg.vocab_size = vocab.size();
        cfg.transformer_heads = 2;
        cfg.adapter_heads = 2;
        cfg.decoder_heads = 2;
        semantic::CodeTransformer ct(cfg, init);
        semantic::MaskedTextPredictor pred(cfg, init);
        text::ToyTextEncoder enc(vocab, 4, 1);
        auto book = Tensor::parameter({5, 4}, normal_values(20, 8));
        const std::vector<std::vector<std::int64_t>> grids{{0, 1, 2, 3}, {4, 4, 1, 0}, {2, 3, 3, 1}};
        const std::vector<std::string> captions{"red square left", "blue circle right top", "green square top"};
        nn::NamedParams params;
        ct.collect("transformer", params);
        pred.collect("predictor", params);
        std::vector<Tensor> check{book};
        for (auto& [name, p] : params) check.push_back(p);

        auto build = [&](bool want_gsa) {
            Tensor cls, mtp;
            std::vector<double> eot;
            for (std::size_t b = 0; b < 3; ++b) {
                const auto tokens = text::tokenize(captions[b], 8, vocab);
                const auto emb = enc.encode(tokens);
                const auto codes = ct(ag::gather_rows(book, grids[b]));
                cls = b ? ag::concat_rows(cls, codes.cls()) : codes.cls();
                eot.insert(eot.end(), emb.global.begin(), emb.global.end());
                const auto masked = pred.apply_mask_at(tokens, emb, {1, 2});
                const auto l = semantic::mtp_loss(pred.predict(codes, masked), masked.targets);
                mtp = b ? ag::add(mtp, l) : l;
            }
            return want_gsa ? semantic::gsa_loss(cls, Tensor::constant({3, 4}, eot)) : mtp;
        };
        note("gsa", testing::grad_check([&] { return build(true); }, check, 1e-4, 12));
        note("mtp", testing::grad_check([&] { return build(false); }, check, 1e-4, 12));
    }

    // ras against the codebook rows it matches
    {
        std::vector<std::string> tokens{"<pad>", "<sot>", "<eot>", "<unk>", "<mask>", "wings", "chest", "yellow"};
        const auto vocab = text::Vocabulary::from_tokens(tokens);
        text::ToyTextEncoder enc(vocab, 4, 3);
        auto book = Tensor::parameter({6, 4}, normal_values(24, 7));
        const std::vector<std::int64_t> grid{0, 1, 2, 3, 4, 5};
        semantic::CodeTokens code_tokens{Tensor::constant({7, 4}, normal_values(28, 8))};
        const auto tok = text::tokenize("wings chest yellow", 8, vocab);
        auto rng = make_rng(0, Stream::Pairs, 0);
        const auto pairs = relationship::select_word_pairs(tok, vocab, relationship::StopWords::builtin(), 32, rng);
        note("ras", testing::grad_check(
                        [&] { return relationship::ras_loss(pairs, enc, code_tokens, ag::gather_rows(book, grid)); }, {book}));
    }

    const double secs = seconds_since(t0);
    const bool ok = worst < 1e-3 && routing && secs < 30.0;
    return {ok, "worst relative error " + fmt("%.2e", worst) + " at " + where + ", stop-gradient zeros " +
                    (routing ? "exact" : "VIOLATED") + ", " + fmt("%.2f s", secs)};
}

// ---------------------------------------------------------------- closed forms

Outcome closed_forms() {
    const auto t0 = Clock::now();
    std::vector<std::string> bad;
    const double g1 = semantic::gsa_loss(Tensor::constant({1, 3}, {1, 2, 3}), Tensor::constant({1, 3}, {3, -1, 0})).item();
    if (g1 != 0.0) bad.push_back("gsa B=1 " + fmt("%.3g", g1));
    const double g2 = semantic::gsa_loss(Tensor::constant({2, 2}, {1, 0, 0, 1}), Tensor::constant({2, 2}, {1, 0, 0, 1})).item();
    if (std::abs(g2 - 2.0 * std::log(1.0 + std::exp(-1.0))) > 1e-6) bad.push_back("gsa B=2 " + fmt("%.9f", g2));
    const std::vector<std::int64_t> targets{0, 17, 99};
    const double m = semantic::mtp_loss(Tensor::constant({3, 100}, std::vector<double>(300, 0.25)), targets).item();
    if (std::abs(m - std::log(100.0)) > 1e-6) bad.push_back("mtp uniform " + fmt("%.9f", m));

    std::vector<std::string> tokens{"<pad>", "<sot>", "<eot>", "<unk>", "<mask>", "wings", "chest"};
    const auto vocab = text::Vocabulary::from_tokens(tokens);
    text::ToyTextEncoder enc(vocab, 3, 2);
    // code tokens equal to the word vectors, code rows equal to them too: zero gap
    const auto w = enc.word_embedding(vocab.id("wings"));
    const auto c = enc.word_embedding(vocab.id("chest"));
    std::vector<double> rows(w.begin(), w.end());
    rows.insert(rows.end(), c.begin(), c.end());
    std::vector<double> seq{0, 0, 1};
    seq.insert(seq.end(), rows.begin(), rows.end());
    const double r = relationship::ras_loss({{vocab.id("wings"), vocab.id("chest")}}, enc,
                                            semantic::CodeTokens{Tensor::constant({3, 3}, seq)},
                                            Tensor::constant({2, 3}, rows))
                         .item();
    if (std::abs(r) > 1e-12) bad.push_back("ras zero gap " + fmt("%.3g", r));

    const double secs = seconds_since(t0);
    std::string detail = bad.empty() ? "all four exact" : "";
    for (const auto& b : bad) detail += b + "; ";
    return {bad.empty() && secs < 1.0, detail + ", " + fmt("%.3f s", secs)};
}

// --------------------------------------------------------------- smoke runs

std::uint64_t parameter_hash(const LgvqModel& model) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, t] : model.parameters()) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(t.data().data());
        for (std::size_t i = 0; i < t.data().size() * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

/// Splits the caption-0 pairs of the similarity error by whether both words
/// matched the same code index. Such pairs have code similarity exactly 1 and
/// no gradient under the relationship loss.
struct PairBreakdown {
    double identical_share = 0.0;
    double distinct_mse = 0.0;
};

PairBreakdown pair_breakdown(const LgvqModel& model, const Dataset& data) {
    const auto enc = eval::encode_records(model, data);
    double identical = 0, total = 0, distinct_acc = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto tokens = text::tokenize(data.record(r).captions.front(), model.config().text_len, model.vocab());
        auto rng = make_rng(model.config().eval_seed, Stream::Eval, r);
        const auto pairs = relationship::select_word_pairs(tokens, model.vocab(), model.stopwords,
                                                           std::size_t(model.config().pair_cap), rng);
        const auto terms = relationship::ras_terms(pairs, *model.text_encoder, enc[r].tokens, enc[r].code_rows);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto& idx = enc[r].indices;
            if (idx[std::size_t(terms.first[i].grid_position)] == idx[std::size_t(terms.second[i].grid_position)]) {
                ++identical;
            } else {
                const double gap = terms.word_similarity[i] - terms.code_similarity[i];
                distinct_acc += gap * gap;
            }
            ++total;
        }
    }
    if (total == 0) return {};
    return {identical / total, total > identical ? distinct_acc / (total - identical) : 0.0};
}

struct SmokeRun {
    std::vector<std::string> metrics;
    std::vector<double> totals;
    std::vector<std::uint64_t> hashes;  // after every step
    eval::EvalReport before;
    eval::EvalReport after;
    PairBreakdown pairs;
    std::int64_t vocab_size = 0;
    double seconds = 0.0;
};

/// Trains from scratch. When `mid` is set, saves a checkpoint there after
/// `mid_step` steps.
SmokeRun smoke(const TrainConfig& config, const std::shared_ptr<const Dataset>& data, bool evaluate,
               const fs::path* mid = nullptr, std::int64_t mid_step = 0) {
    const auto t0 = Clock::now();
    Trainer trainer(config, data, resolve_vocabulary(config, *data));
    SmokeRun run;
    run.vocab_size = trainer.model().vocab().size();
    if (evaluate) run.before = eval::evaluate(trainer.model(), *data, 0);
    while (trainer.steps_done() < config.steps) {
        const auto m = trainer.step();
        run.metrics.push_back(m.to_json_line());
        run.totals.push_back(m.losses.total);
        run.hashes.push_back(parameter_hash(trainer.model()));
        if (mid && trainer.steps_done() == mid_step) checkpoint::save(*mid, trainer);
    }
    if (evaluate) {
        run.after = eval::evaluate(trainer.model(), *data, trainer.steps_done());
        run.pairs = pair_breakdown(trainer.model(), *data);
    }
    run.seconds = seconds_since(t0);
    return run;
}

TrainConfig smoke_config(const fs::path& manifest, std::uint64_t seed, const Overrides& extra = {}) {
    Overrides ov{{"manifest", manifest.string()}, {"seed", std::to_string(seed)}};
    ov.insert(ov.end(), extra.begin(), extra.end());
    return load_config(fs::path(LGVQ_SOURCE_DIR) / "configs" / "toy.cfg", ov);
}

std::string list(const std::vector<double>& v, const char* f) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "/" : "") + fmt(f, v[i]);
    return s;
}

double mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
}

}  // namespace

int main() {
    const auto start = Clock::now();
    report(1, "quantizer matches exhaustive nearest-neighbour search", quantizer_oracle());
    report(2, "analytic gradients match central differences", gradient_suite());
    report(3, "closed-form loss values", closed_forms());

    const auto work = fs::temp_directory_path() / "lgvq_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);
    const auto manifest = write_toy_corpus(work / "corpus", {});
    const int seeds = 3;

    std::vector<SmokeRun> full, zero, no_ras;
    const auto mid = work / "step100.ckpt";
    std::shared_ptr<const Dataset> data;
    for (int s = 0; s < seeds; ++s) {
        const auto config = smoke_config(manifest, std::uint64_t(s));
        if (!data) data = std::make_shared<const Dataset>(Dataset::load(manifest, config.image_size));
        full.push_back(smoke(config, data, true, s == 0 ? &mid : nullptr, config.steps / 2));
        std::printf("  seed %d full (0.1,0.1,0.1): %.1f s\n", s, full.back().seconds);
        zero.push_back(smoke(smoke_config(manifest, std::uint64_t(s), {{"alpha", "0"}, {"beta", "0"}, {"gamma", "0"}}), data, true));
        std::printf("  seed %d (0,0,0): %.1f s\n", s, zero.back().seconds);
        no_ras.push_back(smoke(smoke_config(manifest, std::uint64_t(s), {{"gamma", "0"}}), data, true));
        std::printf("  seed %d gamma=0: %.1f s\n", s, no_ras.back().seconds);
        std::fflush(stdout);
    }

    {
        std::vector<double> ratio, gain, secs;
        bool ok = true;
        for (const auto& r : full) {
            ratio.push_back(r.totals.back() / r.totals.front());
            gain.push_back(r.after.psnr_db - r.before.psnr_db);
            secs.push_back(r.seconds);
            ok = ok && ratio.back() < 0.5 && gain.back() >= 3.0 && r.seconds < 600.0;
        }
        report(4, "smoke training lowers total loss below half and raises PSNR by 3 dB in every seed",
               {ok, "final/step-1 total " + list(ratio, "%.3f") + ", PSNR gain " + list(gain, "%.2f") + " dB, " +
                        list(secs, "%.0f") + " s"});
    }
    {
        std::vector<double> with, without;
        for (int s = 0; s < seeds; ++s) {
            with.push_back(full[std::size_t(s)].after.codebook_usage_pct);
            without.push_back(zero[std::size_t(s)].after.codebook_usage_pct);
        }
        report(5, "codebook usage with alignment losses is at least the usage without them (seed mean)",
               {mean(with) >= mean(without), "usage % " + list(with, "%.2f") + " (mean " + fmt("%.2f", mean(with)) +
                                                 ") vs " + list(without, "%.2f") + " (mean " + fmt("%.2f", mean(without)) + ")"});
    }
    {
        std::vector<double> with, without, share_with, share_without, distinct_with, distinct_without;
        bool ok = true;
        for (int s = 0; s < seeds; ++s) {
            const auto& a = full[std::size_t(s)];
            const auto& b = no_ras[std::size_t(s)];
            with.push_back(a.after.sim_mse ? *a.after.sim_mse : NAN);
            without.push_back(b.after.sim_mse ? *b.after.sim_mse : NAN);
            share_with.push_back(a.pairs.identical_share);
            share_without.push_back(b.pairs.identical_share);
            distinct_with.push_back(a.pairs.distinct_mse);
            distinct_without.push_back(b.pairs.distinct_mse);
            ok = ok && a.after.sim_mse && b.after.sim_mse && *a.after.sim_mse <= *b.after.sim_mse;
        }
        report(6, "code-word similarity error with gamma>0 is at most the gamma=0 error in every seed",
               {ok, "sim_mse " + list(with, "%.4f") + " vs " + list(without, "%.4f") +
                        "; share of pairs on one code index " + list(share_with, "%.2f") + " vs " +
                        list(share_without, "%.2f") + "; error over pairs on distinct codes " +
                        list(distinct_with, "%.4f") + " vs " + list(distinct_without, "%.4f")});
    }
    {
        std::vector<double> recall;
        for (const auto& r : full) recall.push_back(r.after.recall_at_1);
        const double chance = 1.0 / double(full.front().vocab_size);
        report(7, "masked-word Recall@1 is at least 5x chance (seed mean)",
               {mean(recall) >= 5.0 * chance, "recall " + list(recall, "%.3f") + " (mean " + fmt("%.3f", mean(recall)) +
                                                  ") vs 5/V = " + fmt("%.3f", 5.0 * chance)});
    }
    {
        std::vector<double> top1;
        for (const auto& r : full) top1.push_back(r.after.retrieval_top1);
        const double need = 3.0 / double(data->size());
        report(8, "image-to-text top-1 retrieval is at least 3x chance (seed mean)",
               {mean(top1) >= need, "top-1 " + list(top1, "%.4f") + " (mean " + fmt("%.4f", mean(top1)) + ") vs " +
                                        fmt("%.4f", need)});
    }
    {
        const auto config = smoke_config(manifest, 0);
        const auto again = smoke(config, data, false);
        const bool same_run = again.metrics == full[0].metrics && again.hashes == full[0].hashes;

        auto resumed = checkpoint::restore(mid, data);
        std::vector<std::string> tail;
        while (resumed->steps_done() < config.steps) tail.push_back(resumed->step().to_json_line());
        const std::vector<std::string> expected(full[0].metrics.begin() + config.steps / 2, full[0].metrics.end());
        const bool same_resume = tail == expected && parameter_hash(resumed->model()) == full[0].hashes.back();
        report(9, "identical runs give identical logs and resume matches the uninterrupted run",
               {same_run && same_resume, std::string("rerun ") + (same_run ? "bit-identical" : "DIFFERS") + ", resume from step " +
                                             std::to_string(config.steps / 2) + " " + (same_resume ? "bit-identical" : "DIFFERS")});
    }
    {
        const auto disabled = smoke(
            smoke_config(manifest, 0, {{"use_gsa", "false"}, {"use_mtp", "false"}, {"use_ras", "false"}}), data, false);
        const bool zero_vs_off = disabled.hashes == zero[0].hashes;
        const auto computed = smoke(smoke_config(manifest, 0, {{"alpha", "0"}, {"beta", "0"}, {"gamma", "0"},
                                                                {"compute_zero_weight_losses", "true"}, {"steps", "50"}}),
                                    data, false);
        const bool computed_vs_off =
            std::equal(computed.hashes.begin(), computed.hashes.end(), disabled.hashes.begin());
        report(10, "weight-0 and disabled losses give bit-identical parameter trajectories",
               {zero_vs_off && computed_vs_off,
                std::string("200 steps weight-0 vs disabled ") + (zero_vs_off ? "identical" : "DIFFER") +
                    ", 50 steps with zero-weight losses computed " + (computed_vs_off ? "identical" : "DIFFER")});
    }

    std::printf("%d of 10 criteria failed, %.0f s total\n", failures, seconds_since(start));
    return failures == 0 ? 0 : 1;
}
