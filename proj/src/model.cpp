#include "lgvq/model.hpp"

#include "lgvq/error.hpp"
#include "lgvq/rng.hpp"

namespace lgvq {

vq::AutoencoderConfig autoencoder_config(const TrainConfig& config) {
    vq::AutoencoderConfig ae;
    ae.downsample = config.downsample;
    ae.code_dim = config.code_dim;
    ae.base_channels = config.base_channels;
    ae.max_channels = config.max_channels;
    return ae;
}

semantic::AlignmentConfig alignment_config(const TrainConfig& config, std::int64_t vocab_size) {
    semantic::AlignmentConfig a;
    a.code_dim = config.code_dim;
    a.text_dim = config.text_dim;
    a.max_grid_positions = config.grid_size() * config.grid_size();
    a.seq_len = config.text_len;
    a.vocab_size = vocab_size;
    a.transformer_layers = config.transformer_layers;
    a.transformer_heads = config.transformer_heads;
    a.adapter_heads = config.adapter_heads;
    a.decoder_layers = config.decoder_layers;
    a.decoder_heads = config.decoder_heads;
    a.mlp_ratio = config.mlp_ratio;
    return a;
}

semantic::MaskDistribution mask_distribution(const TrainConfig& config) {
    return {config.mask_mean, config.mask_std, config.mask_min, config.mask_max};
}

LgvqModel::LgvqModel(const TrainConfig& config, text::Vocabulary vocab) : config_(config) {
    if (auto errors = validate(config); !errors.empty()) throw ConfigError("invalid configuration: " + errors.front());
    auto rng = make_rng(config.seed, Stream::Init);
    const auto ae = autoencoder_config(config);
    encoder = vq::Encoder(ae, rng);
    decoder = vq::Decoder(ae, rng);
    codebook = vq::Codebook::uniform(config.codebook_size, config.code_dim, rng, config.codebook_init_bound);
    const auto align = alignment_config(config, vocab.size());
    transformer = semantic::CodeTransformer(align, rng);
    predictor = semantic::MaskedTextPredictor(align, rng);
    text_encoder = std::make_shared<text::ToyTextEncoder>(std::move(vocab), config.text_dim, config.seed);
    stopwords = config.stopwords.empty() ? relationship::StopWords::builtin()
                                         : relationship::StopWords::load(config.stopwords);
}

nn::NamedParams LgvqModel::parameters() const {
    nn::NamedParams out;
    encoder.collect("encoder", out);
    decoder.collect("decoder", out);
    out.emplace_back("codebook", codebook.entries);
    transformer.collect("alignment.transformer", out);
    predictor.collect("alignment.predictor", out);
    return out;
}

}  // namespace lgvq
