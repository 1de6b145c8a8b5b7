#include "lgvq/trainer.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "lgvq/error.hpp"
#include "lgvq/rng.hpp"

namespace lgvq {

LossBundle total_loss(const LossParts& parts, const LossWeights& weights) {
    const double values[] = {parts.vq, parts.gsa, parts.mtp, parts.ras};
    const char* names[] = {"vq", "gsa", "mtp", "ras"};
    for (int i = 0; i < 4; ++i) {
        if (!std::isfinite(values[i])) {
            throw DivergenceError(std::string("loss part ") + names[i] + " is not finite (" +
                                  std::to_string(values[i]) + ")");
        }
    }
    LossBundle b{parts.vq, parts.gsa, parts.mtp, parts.ras, 0.0};
    b.total = parts.vq + weights.alpha * parts.gsa + weights.beta * parts.mtp + weights.gamma * parts.ras;
    return b;
}

std::string StepMetrics::to_json_line() const {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["vq"] = losses.vq;
    j["gsa"] = losses.gsa;
    j["mtp"] = losses.mtp;
    j["ras"] = losses.ras;
    j["total"] = losses.total;
    j["codebook_usage_batch"] = codebook_usage_batch;
    return j.dump();
}

StepMetrics StepMetrics::from_json_line(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    StepMetrics m;
    m.step = j.at("step").get<std::int64_t>();
    m.losses.vq = j.at("vq").get<double>();
    m.losses.gsa = j.at("gsa").get<double>();
    m.losses.mtp = j.at("mtp").get<double>();
    m.losses.ras = j.at("ras").get<double>();
    m.losses.total = j.at("total").get<double>();
    m.codebook_usage_batch = j.at("codebook_usage_batch").get<std::int64_t>();
    return m;
}

Adam::Adam(nn::NamedParams params, Options options) : params_(std::move(params)), options_(options) {
    for (const auto& [name, p] : params_) {
        m_.emplace_back(std::size_t(p.numel()), 0.0);
        v_.emplace_back(std::size_t(p.numel()), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(options_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(options_.beta2, double(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i].second;
        const auto grad = p.grad();
        auto value = p.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < value.size(); ++k) {
            const double g = grad.empty() ? 0.0 : grad[k];
            m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * g;
            v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * g * g;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            value[k] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
        }
    }
    zero_grad();
}

void Adam::zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
}

void Adam::set_state(std::int64_t t, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v) {
    if (m.size() != params_.size() || v.size() != params_.size()) throw CheckpointError("optimizer state size mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (m[i].size() != std::size_t(params_[i].second.numel()) || v[i].size() != m[i].size()) {
            throw CheckpointError("optimizer state shape mismatch for " + params_[i].first);
        }
    }
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

Adam::Options adam_options(const TrainConfig& config) {
    return {config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps};
}

ForwardPass forward_losses(const LgvqModel& model, const Dataset& data, const Batch& batch,
                           const TrainConfig& config, std::int64_t step) {
    ForwardPass out;
    std::vector<Image> images;
    for (auto r : batch.records) images.push_back(data.image(r));
    const ag::Tensor x = images_to_batch(images);

    const ag::Tensor features = vq::encode_image(model.encoder, x);
    out.codes = vq::quantize(features, model.codebook);
    out.reconstruction = vq::decode_codes(model.decoder, vq::straight_through(features, out.codes));
    out.vq = vq::vq_loss(x, out.reconstruction, features, out.codes, config.omega);
    out.parts.vq = out.vq.total.item();
    ag::Tensor total = out.vq.total;

    if (config.alignment_active()) {
        const std::int64_t B = std::int64_t(batch.records.size());
        const std::int64_t G = out.codes.positions_per_image();
        const ag::Tensor code_rows_all = ag::reshape(out.codes.embeddings, {B * G, config.code_dim});
        const auto& text_enc = *model.text_encoder;

        std::vector<text::TokenSequence> tokens;
        std::vector<text::TextEmbeddings> embeddings;
        std::vector<ag::Tensor> code_rows;
        std::vector<semantic::CodeTokens> code_tokens;
        for (std::int64_t b = 0; b < B; ++b) {
            tokens.push_back(text::tokenize(batch.captions[std::size_t(b)], config.text_len, text_enc.vocab()));
            embeddings.push_back(text_enc.encode(tokens.back()));
            code_rows.push_back(ag::slice_rows(code_rows_all, b * G, (b + 1) * G));
            code_tokens.push_back(model.transformer(code_rows.back()));
        }

        if (config.gsa_active()) {
            ag::Tensor cls = code_tokens[0].cls();
            std::vector<double> eot(embeddings[0].global);
            for (std::int64_t b = 1; b < B; ++b) {
                cls = ag::concat_rows(cls, code_tokens[std::size_t(b)].cls());
                eot.insert(eot.end(), embeddings[std::size_t(b)].global.begin(), embeddings[std::size_t(b)].global.end());
            }
            const auto variant = config.gsa_variant == "symmetric" ? semantic::GsaVariant::Symmetric
                                                                   : semantic::GsaVariant::Verbatim;
            out.gsa = semantic::gsa_loss(cls, ag::Tensor::constant({B, config.text_dim}, std::move(eot)), variant,
                                         config.gsa_temperature);
            out.parts.gsa = out.gsa.item();
            total = ag::add(total, ag::scale(out.gsa, config.alpha));
        }

        if (config.mtp_active()) {
            auto rng = make_rng(config.seed, Stream::Mask, std::uint64_t(step));
            const auto dist = mask_distribution(config);
            ag::Tensor acc;
            int contributing = 0;
            for (std::int64_t b = 0; b < B; ++b) {
                const double r = semantic::sample_mask_ratio(rng, dist);
                const auto masked = model.predictor.apply_mask(tokens[std::size_t(b)], embeddings[std::size_t(b)], r, rng);
                if (masked.positions.empty()) continue;
                const auto loss = semantic::mtp_loss(model.predictor.predict(code_tokens[std::size_t(b)], masked),
                                                     masked.targets);
                acc = acc.defined() ? ag::add(acc, loss) : loss;
                ++contributing;
            }
            out.mtp = contributing ? ag::scale(acc, 1.0 / contributing) : ag::Tensor::constant({}, {0.0});
            out.parts.mtp = out.mtp.item();
            total = ag::add(total, ag::scale(out.mtp, config.beta));
        }

        if (config.ras_active()) {
            auto rng = make_rng(config.seed, Stream::Pairs, std::uint64_t(step));
            ag::Tensor acc = ag::Tensor::constant({}, {0.0});
            for (std::int64_t b = 0; b < B; ++b) {
                const auto pairs = relationship::select_word_pairs(tokens[std::size_t(b)], text_enc.vocab(),
                                                                   model.stopwords, std::size_t(config.pair_cap), rng);
                if (pairs.empty()) continue;
                acc = ag::add(acc, relationship::ras_loss(pairs, text_enc, code_tokens[std::size_t(b)],
                                                          code_rows[std::size_t(b)]));
            }
            out.ras = ag::scale(acc, 1.0 / double(B));
            out.parts.ras = out.ras.item();
            total = ag::add(total, ag::scale(out.ras, config.gamma));
        }
    }
    out.total = total;
    if (!std::isfinite(out.total.item())) throw DivergenceError("total loss is not finite");
    return out;
}

StepMetrics train_step(LgvqModel& model, Adam& optimizer, const Dataset& data, const Batch& batch,
                       const TrainConfig& config, std::int64_t step) {
    ForwardPass pass = forward_losses(model, data, batch, config, step);
    StepMetrics metrics;
    metrics.step = step + 1;
    metrics.losses = total_loss(pass.parts, LossWeights::from(config));
    metrics.losses.total = pass.total.item();
    metrics.codebook_usage_batch =
        std::int64_t(std::set<std::int64_t>(pass.codes.indices.begin(), pass.codes.indices.end()).size());

    optimizer.zero_grad();
    pass.total.backward();
    optimizer.step();
    return metrics;
}

text::Vocabulary resolve_vocabulary(const TrainConfig& config, const Dataset& data) {
    if (!config.vocab.empty()) return text::Vocabulary::load(config.vocab);
    const auto captions = data.all_captions();
    return text::Vocabulary::build(captions);
}

Trainer::Trainer(const TrainConfig& config, std::shared_ptr<const Dataset> data, text::Vocabulary vocab)
    : config_(config),
      data_(std::move(data)),
      model_(std::make_unique<LgvqModel>(config, std::move(vocab))),
      optimizer_(model_->parameters(), adam_options(config)) {
    if (!data_ || data_->empty()) throw DataError("training needs a non-empty dataset");
}

StepMetrics Trainer::step() {
    const auto batch = data_->batch_for_step(steps_done_, config_.batch_size, config_.seed);
    auto metrics = train_step(*model_, optimizer_, *data_, batch, config_, steps_done_);
    ++steps_done_;
    return metrics;
}

}  // namespace lgvq
